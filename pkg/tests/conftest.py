import numpy as np
import pytest

from plurelgen.core import default_config
from plurelgen.schema_gen import SchemaGraph, TableMeta
from plurelgen.scm_gen import GeneratedTable, RelationalDatabase


@pytest.fixture(scope="session")
def config():
    return default_config()


def tables_equal(a: GeneratedTable, b: GeneratedTable) -> bool:
    if (a.name, a.kind, a.num_rows, a.fk_names, a.feature_names) != (
        b.name,
        b.kind,
        b.num_rows,
        b.fk_names,
        b.feature_names,
    ):
        return False
    for c in a.fk_names:
        if not np.array_equal(a.fk_columns[c], b.fk_columns[c]):
            return False
    for c in a.feature_names:
        if a.feature_types[c] != b.feature_types[c]:
            return False
        if not np.array_equal(a.features[c], b.features[c]):
            return False
        if not np.array_equal(a.null_mask[c], b.null_mask[c]):
            return False
    if (a.timestamps is None) != (b.timestamps is None):
        return False
    if a.timestamps is not None and not np.array_equal(a.timestamps, b.timestamps):
        return False
    return True


def databases_equal(a: RelationalDatabase, b: RelationalDatabase) -> bool:
    if a.schema.names != b.schema.names or a.schema.edges != b.schema.edges:
        return False
    return all(tables_equal(a.tables[n], b.tables[n]) for n in a.table_order())


def make_table(
    name,
    num_rows,
    feature_values: dict,
    feature_types: dict,
    fk: dict | None = None,
    fk_targets: dict | None = None,
    timestamps=None,
    kind="entity",
) -> GeneratedTable:
    """Hand-built table for corpus/analysis tests."""
    fk = fk or {}
    return GeneratedTable(
        name=name,
        kind=kind,
        num_rows=num_rows,
        fk_names=tuple(fk.keys()),
        fk_targets=fk_targets or {},
        fk_columns={k: np.asarray(v, dtype=np.int64) for k, v in fk.items()},
        feature_names=tuple(feature_values.keys()),
        feature_types=dict(feature_types),
        feature_cards={k: None for k in feature_values},
        features={
            k: np.asarray(v, dtype=np.int64 if feature_types[k] == "categorical" else np.float64)
            for k, v in feature_values.items()
        },
        timestamps=None if timestamps is None else np.asarray(timestamps, dtype=np.int64),
    )


def make_database(tables: list[GeneratedTable], edges: list[tuple[int, int]]) -> RelationalDatabase:
    names = tuple(t.name for t in tables)
    metas = []
    for i, t in enumerate(tables):
        metas.append(
            TableMeta(
                kind=t.kind,
                num_rows=t.num_rows,
                num_feature_columns=len(t.feature_names),
                fk_parents=tuple(sorted(p for p, c in edges if c == i)),
                has_timestamp=t.timestamps is not None,
            )
        )
    schema = SchemaGraph(names=names, edges=tuple(sorted(edges)), meta=tuple(metas))
    return RelationalDatabase(
        schema=schema, tables={t.name: t for t in tables}, seed=0, null_fraction=0.0
    )
