"""Masked-cell prediction contexts via relation-aware bounded breadth-first traversal.

A context starts at a seed feature cell, includes whole rows (all feature
cells plus the timestamp), always follows child-to-parent key links, and
subsamples parent-to-child links to a bounded fan-out, stopping at a token
budget. Rows timestamped after the seed row are never included.
"""

from __future__ import annotations

import math
import weakref
from collections import deque
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import ConfigError, SeededRng, split_seed
from .scm_gen import (
    CATEGORICAL,
    NUMERIC,
    GeneratedTable,
    RelationalDatabase,
    format_timestamp,
)

__all__ = [
    "CellToken",
    "ContextExample",
    "bfs_context",
    "build_corpus",
    "example_to_json",
    "DEFAULT_CONTEXT_LEN",
    "DEFAULT_WIDTH",
]

DEFAULT_CONTEXT_LEN = 1024
DEFAULT_WIDTH = 128

TIMESTAMP = "timestamp"


class CellToken(NamedTuple):
    table: str
    column: str
    row: int
    value: float | int | None  # None encodes NULL or a masked-out value
    dtype: str
    masked: bool


@dataclass(eq=False)
class ContextExample:
    db_id: str
    seed_table: str
    seed_column: str
    seed_row: int
    tokens: list[CellToken]
    target_value: float | int
    target_type: str
    rows: list[tuple[str, int]]
    fk_edges: list[tuple[tuple[str, int], tuple[str, int]]]

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


class _DbIndex:
    """Link lookups for one database: per-row parents and sorted child indices."""

    def __init__(self, db: RelationalDatabase):
        self.db = db
        self.table_names = db.table_order()
        self.tables: list[GeneratedTable] = [db.tables[n] for n in self.table_names]
        self.pos = {n: i for i, n in enumerate(self.table_names)}
        # child_edges[parent_pos] = [(child_pos, fk_col), ...] ordered by child table
        self.child_edges: list[list[tuple[int, str]]] = [[] for _ in self.tables]
        self.child_sorted: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}
        for ci, child in enumerate(self.tables):
            for fk_col in child.fk_names:
                pi = self.pos[child.fk_targets[fk_col]]
                self.child_edges[pi].append((ci, fk_col))
                order = np.argsort(child.fk_columns[fk_col], kind="stable")
                self.child_sorted[(ci, fk_col)] = (
                    child.fk_columns[fk_col][order],
                    order,
                )
        for edges in self.child_edges:
            edges.sort()

    def row_timestamp(self, t: int, row: int) -> float:
        ts = self.tables[t].timestamps
        return float(ts[row - 1]) if ts is not None else -math.inf

    def parents_of(self, t: int, row: int) -> list[tuple[int, int, str]]:
        """(parent_pos, parent_row, fk_col) per foreign-key column, in column order."""
        table = self.tables[t]
        return [
            (self.pos[table.fk_targets[col]], int(table.fk_columns[col][row - 1]), col)
            for col in table.fk_names
        ]

    def children_of(self, t: int, row: int) -> list[tuple[int, int]]:
        """All rows referencing (t, row), ascending by (child table, row index)."""
        out: list[tuple[int, int]] = []
        for ci, fk_col in self.child_edges[t]:
            sorted_fk, order = self.child_sorted[(ci, fk_col)]
            lo = np.searchsorted(sorted_fk, row, side="left")
            hi = np.searchsorted(sorted_fk, row, side="right")
            out.extend((ci, int(r) + 1) for r in np.sort(order[lo:hi]))
        return out

    def cells_per_row(self, t: int) -> int:
        table = self.tables[t]
        return len(table.feature_names) + (1 if table.timestamps is not None else 0)

    def row_tokens(self, t: int, row: int, masked_cell) -> list[CellToken]:
        table = self.tables[t]
        out = []
        for col in table.feature_names:
            masked = masked_cell == (t, col, row)
            if masked or table.null_mask[col][row - 1]:
                value = None
            elif table.feature_types[col] == NUMERIC:
                value = float(table.features[col][row - 1])
            else:
                value = int(table.features[col][row - 1])
            out.append(
                CellToken(table.name, col, row, value, table.feature_types[col], masked)
            )
        if table.timestamps is not None:
            out.append(
                CellToken(
                    table.name, TIMESTAMP, row, int(table.timestamps[row - 1]), TIMESTAMP, False
                )
            )
        return out


_index_cache: "weakref.WeakKeyDictionary[RelationalDatabase, _DbIndex]" = (
    weakref.WeakKeyDictionary()
)


def _index_for(db: RelationalDatabase) -> _DbIndex:
    idx = _index_cache.get(db)
    if idx is None:
        idx = _DbIndex(db)
        _index_cache[db] = idx
    return idx


def bfs_context(
    db: RelationalDatabase,
    seed_cell: tuple[str, str, int],
    budget: int = DEFAULT_CONTEXT_LEN,
    width: int = DEFAULT_WIDTH,
    rng: SeededRng | None = None,
    db_id: str = "db",
) -> ContextExample:
    """Build one masked-cell context around ``seed_cell`` = (table, column, row).

    Child-to-parent links are always followed; parent-to-child links are
    subsampled so no parent row ends up with more than ``width`` referencing
    rows in the context. Rows timestamped after the seed row are excluded.
    """
    if rng is None:
        rng = SeededRng(0)
    idx = _index_for(db)
    seed_table, seed_column, seed_row = seed_cell
    if seed_table not in idx.pos:
        raise ValueError(f"unknown table {seed_table!r}")
    t0 = idx.pos[seed_table]
    table = idx.tables[t0]
    if seed_column not in table.feature_names:
        raise ValueError(
            f"seed cell must be a feature cell, got column {seed_column!r} of {seed_table}"
        )
    if not 1 <= seed_row <= table.num_rows:
        raise ValueError(f"row {seed_row} outside [1, {table.num_rows}] for {seed_table}")
    if table.null_mask[seed_column][seed_row - 1]:
        raise ValueError("seed cell is NULL; nothing to predict")
    if budget < idx.cells_per_row(t0):
        raise ValueError(f"budget {budget} smaller than the seed row ({idx.cells_per_row(t0)} cells)")

    if table.feature_types[seed_column] == NUMERIC:
        target_value: float | int = float(table.features[seed_column][seed_row - 1])
    else:
        target_value = int(table.features[seed_column][seed_row - 1])
    target_type = table.feature_types[seed_column]
    seed_ts = idx.row_timestamp(t0, seed_row)
    masked_cell = (t0, seed_column, seed_row)

    tokens: list[CellToken] = []
    rows: list[tuple[str, int]] = []
    visited: set[tuple[int, int]] = set()
    child_count: dict[tuple[int, int], int] = {}
    queue: deque[tuple[int, int]] = deque()
    stopped = False

    def admissible(t: int, r: int) -> bool:
        return idx.row_timestamp(t, r) <= seed_ts

    def add_row(t: int, r: int) -> bool:
        nonlocal stopped
        if len(tokens) + idx.cells_per_row(t) > budget:
            stopped = True
            return False
        visited.add((t, r))
        tokens.extend(idx.row_tokens(t, r, masked_cell))
        rows.append((idx.table_names[t], r))
        for pt, pr, _ in idx.parents_of(t, r):
            child_count[(pt, pr)] = child_count.get((pt, pr), 0) + 1
        queue.append((t, r))
        return True

    add_row(t0, seed_row)
    while queue and not stopped:
        t, r = queue.popleft()
        # child-to-parent links: always follow
        for pt, pr, _ in idx.parents_of(t, r):
            if (pt, pr) in visited or not admissible(pt, pr):
                continue
            if not add_row(pt, pr):
                break
        if stopped:
            break
        # parent-to-child links: uniform subsample bounded by the fan-out width
        remaining = width - child_count.get((t, r), 0)
        if remaining <= 0:
            continue
        candidates = [
            (ct, cr)
            for ct, cr in idx.children_of(t, r)
            if (ct, cr) not in visited and admissible(ct, cr)
        ]
        if not candidates:
            continue
        added = 0
        for i in rng.permutation(len(candidates)):
            if added >= remaining:
                break
            ct, cr = candidates[int(i)]
            # adding this child must not overflow the cap of any parent it references
            if any(
                child_count.get((pt, pr), 0) >= width
                for pt, pr, _ in idx.parents_of(ct, cr)
            ):
                continue
            if not add_row(ct, cr):
                break
            added += 1

    included = set(rows)
    fk_edges = []
    for tn, r in rows:
        t = idx.pos[tn]
        for pt, pr, _ in idx.parents_of(t, r):
            if (idx.table_names[pt], pr) in included:
                fk_edges.append(((tn, r), (idx.table_names[pt], pr)))

    return ContextExample(
        db_id=db_id,
        seed_table=seed_table,
        seed_column=seed_column,
        seed_row=seed_row,
        tokens=tokens,
        target_value=target_value,
        target_type=target_type,
        rows=rows,
        fk_edges=fk_edges,
    )


def _feature_cell_catalog(db: RelationalDatabase) -> list[tuple[str, str, int]]:
    """(table, column, num_rows) per feature column, in schema order."""
    out = []
    for name in db.table_order():
        table = db.tables[name]
        for col in table.feature_names:
            out.append((name, col, table.num_rows))
    return out


def _draw_seed_cell(
    db: RelationalDatabase, catalog, rng: SeededRng, max_tries: int = 1000
) -> tuple[str, str, int]:
    """Uniform non-NULL feature cell of one database."""
    sizes = np.array([n for _, _, n in catalog], dtype=np.int64)
    cum = np.cumsum(sizes)
    for _ in range(max_tries):
        flat = int(rng.integers(0, int(cum[-1]) - 1))
        ci = int(np.searchsorted(cum, flat, side="right"))
        tname, col, _ = catalog[ci]
        row = flat - (int(cum[ci - 1]) if ci else 0) + 1
        if not db.tables[tname].null_mask[col][row - 1]:
            return tname, col, row
    raise ConfigError("could not find a non-NULL feature cell to mask")


def build_corpus(
    dbs: Sequence[tuple[str, RelationalDatabase]],
    target_tokens: int,
    budget: int = DEFAULT_CONTEXT_LEN,
    width: int = DEFAULT_WIDTH,
    seed: int = 0,
) -> Iterator[ContextExample]:
    """Stream context examples until the cumulative token count reaches the target.

    Each example draws (database, seed cell) uniformly with replacement and
    runs on its own split seed, so examples are order-independent and the
    stream is reproducible from (dbs, seed).
    """
    if len(dbs) == 0:
        raise ConfigError("corpus construction needs at least one database")
    catalogs = [_feature_cell_catalog(db) for _, db in dbs]
    for cat in catalogs:
        if not cat:
            raise ConfigError("database has no feature cells")
    total = 0
    k = 0
    while total < target_tokens:
        rng = SeededRng(split_seed(seed, k))
        di = int(rng.integers(0, len(dbs) - 1))
        db_id, db = dbs[di]
        cell = _draw_seed_cell(db, catalogs[di], rng)
        example = bfs_context(db, cell, budget, width, rng, db_id=db_id)
        total += example.n_tokens
        k += 1
        yield example


def _json_value(value, dtype: str):
    if value is None:
        return None
    if dtype == NUMERIC:
        return repr(float(value))
    if dtype == CATEGORICAL:
        return int(value)
    if dtype == TIMESTAMP:
        return format_timestamp(int(value))
    raise ValueError(f"unknown cell dtype {dtype!r}")


def example_to_json(example: ContextExample) -> dict:
    """One corpus line: tokens, masked target, link structure, exact token count."""
    return {
        "db_id": example.db_id,
        "seed": {
            "table": example.seed_table,
            "column": example.seed_column,
            "row": example.seed_row,
        },
        "tokens": [
            {
                "t": tok.table,
                "c": tok.column,
                "r": tok.row,
                "v": _json_value(tok.value, tok.dtype),
                "type": tok.dtype,
                "masked": tok.masked,
            }
            for tok in example.tokens
        ],
        "target": {
            "v": _json_value(example.target_value, example.target_type),
            "type": example.target_type,
        },
        "n_tokens": example.n_tokens,
        "links": [
            [[c[0], c[1]], [p[0], p[1]]] for c, p in example.fk_edges
        ],
    }
