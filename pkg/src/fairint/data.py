"""Schema-driven CSV ingestion, encoding, splitting, batching, and synthesis.

Datasets are stored column-major: categoricals as int64 category ids,
numericals and labels as float64. A dataset is raw after loading;
:func:`split` tags rows and standardizes numericals with train-split
statistics, and :func:`apply_standardization` reuses saved statistics for
data that arrives after training. Arrays are frozen read-only so loaded
datasets can be shared safely.

Every categorical column reserves one extra "unknown" slot past its
declared cardinality: a column declared with cardinality 2 encodes its two
seen categories as 0 and 1 and maps anything else to 2.
"""

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, UsageError

KIND_CATEGORICAL = "categorical"
KIND_NUMERICAL = "numerical"
ROLE_SENSITIVE = "sensitive"
ROLE_NON_SENSITIVE = "non_sensitive"
ROLE_LABEL = "label"

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}

__all__ = [
    "FeatureColumn",
    "Dataset",
    "Batch",
    "load_schema",
    "save_schema",
    "load_csv",
    "save_csv",
    "split",
    "apply_standardization",
    "batches",
    "full_batch",
    "synth_generate",
    "SYNTH_SCHEMA",
]


@dataclass(frozen=True)
class FeatureColumn:
    """One column: its name, value kind, and role in the learning problem.

    ``cardinality`` counts the known categories only; the encoded id space
    is one larger because of the unknown slot (see :attr:`table_size`).
    """

    name: str
    kind: str
    role: str
    cardinality: int | None = None

    @property
    def table_size(self) -> int:
        if self.kind != KIND_CATEGORICAL:
            raise UsageError(f"column {self.name!r} is not categorical")
        return self.cardinality + 1

    @property
    def unknown_id(self) -> int:
        if self.kind != KIND_CATEGORICAL:
            raise UsageError(f"column {self.name!r} is not categorical")
        return self.cardinality


def _validate_schema(columns: list[FeatureColumn]) -> list[FeatureColumn]:
    if not columns:
        raise DataError("schema has no columns")
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise DataError("schema has duplicate column names")
    for c in columns:
        if c.kind not in (KIND_CATEGORICAL, KIND_NUMERICAL):
            raise DataError(f"column {c.name!r}: unknown kind {c.kind!r}")
        if c.role not in (ROLE_SENSITIVE, ROLE_NON_SENSITIVE, ROLE_LABEL):
            raise DataError(f"column {c.name!r}: unknown role {c.role!r}")
        if c.kind == KIND_CATEGORICAL:
            if not isinstance(c.cardinality, int) or c.cardinality < 1:
                raise DataError(f"column {c.name!r}: categorical cardinality must be a positive int")
        elif c.cardinality is not None:
            raise DataError(f"column {c.name!r}: numerical columns take no cardinality")
    labels = [c for c in columns if c.role == ROLE_LABEL]
    if len(labels) != 1:
        raise DataError(f"schema needs exactly one label column, found {len(labels)}")
    sensitive = [c for c in columns if c.role == ROLE_SENSITIVE]
    if len(sensitive) != 1:
        raise DataError(f"schema needs exactly one sensitive column, found {len(sensitive)}")
    # only binary sensitive groups are supported for now
    s = sensitive[0]
    if s.kind != KIND_CATEGORICAL or s.cardinality != 2:
        raise DataError(f"sensitive column {s.name!r} must be categorical with cardinality 2")
    return columns


@dataclass
class Dataset:
    """An encoded table plus everything needed to interpret it.

    ``columns`` maps column name to a full-length array (int64 category
    ids or float64 values). ``split_tags`` is None until :func:`split`
    runs, then holds 0/1/2 for train/val/test per row.
    ``standardize_stats`` maps numerical column name to (mean, std) once
    standardization has been applied. Treat instances as immutable.
    """

    schema: list[FeatureColumn]
    columns: dict[str, np.ndarray]
    vocabularies: dict[str, list[str]]
    n: int
    split_tags: np.ndarray | None = None
    standardize_stats: dict[str, tuple[float, float]] | None = None

    @property
    def input_columns(self) -> list[FeatureColumn]:
        return [c for c in self.schema if c.role == ROLE_NON_SENSITIVE]

    @property
    def sensitive_column(self) -> FeatureColumn:
        return next(c for c in self.schema if c.role == ROLE_SENSITIVE)

    @property
    def label_column(self) -> FeatureColumn:
        return next(c for c in self.schema if c.role == ROLE_LABEL)

    def decode(self, column: str, category_id: int) -> str:
        vocab = self.vocabularies[column]
        if not 0 <= category_id < len(vocab):
            raise UsageError(f"column {column!r}: id {category_id} has no recorded source value")
        return vocab[category_id]


@dataclass
class Batch:
    """Rows the model sees at once.

    ``features`` holds only non-sensitive input columns; the sensitive
    column travels separately in ``true_sensitive`` for losses and metrics
    and is structurally excluded from the model's input path.
    """

    features: dict[str, np.ndarray]
    labels: np.ndarray
    true_sensitive: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return self.labels.shape[0]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# -- schema files -------------------------------------------------------------


def load_schema(path) -> list[FeatureColumn]:
    """Read a JSON schema file: a list of {name, kind, cardinality, role}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: schema is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise DataError(f"{path}: schema must be a JSON array of column objects")
    columns = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise DataError(f"{path}: schema entry {i} is not an object")
        missing = {"name", "kind", "cardinality", "role"} - set(entry)
        if missing:
            raise DataError(f"{path}: schema entry {i} is missing {sorted(missing)}")
        columns.append(
            FeatureColumn(
                name=entry["name"],
                kind=entry["kind"],
                role=entry["role"],
                cardinality=entry["cardinality"],
            )
        )
    return _validate_schema(columns)


def save_schema(schema: list[FeatureColumn], path) -> None:
    doc = [
        {"name": c.name, "kind": c.kind, "cardinality": c.cardinality, "role": c.role}
        for c in schema
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- CSV ingestion ------------------------------------------------------------


def _parse_label(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: label {text!r} is not 0 or 1") from None
    if value not in (0.0, 1.0):
        raise DataError(f"{where}: label {text!r} is not 0 or 1")
    return value


def _parse_numeric(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r}")
    return value


def load_csv(path, schema: list[FeatureColumn], vocabularies: dict[str, list[str]] | None = None) -> Dataset:
    """Load and encode a CSV whose header matches the schema column order.

    Without ``vocabularies``, category ids are assigned by first
    appearance until a column's declared cardinality is full; any further
    distinct value maps to the unknown slot. With ``vocabularies`` (e.g.
    from a trained model) the mapping is frozen and unseen values go
    straight to the unknown slot. Sensitive values must always be among
    the known categories.
    """
    schema = _validate_schema(list(schema))
    building = vocabularies is None
    vocabs: dict[str, list[str]] = (
        {c.name: [] for c in schema if c.kind == KIND_CATEGORICAL}
        if building
        else {k: list(v) for k, v in vocabularies.items()}
    )
    raw_columns: dict[str, list] = {c.name: [] for c in schema}
    expected_header = [c.name for c in schema]

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if header != expected_header:
            raise DataError(f"{path}: header {header} does not match schema columns {expected_header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(schema):
                raise DataError(f"{path}: line {row_no}: expected {len(schema)} fields, got {len(row)}")
            for col, text in zip(schema, row):
                where = f"{path}: line {row_no}, column {col.name!r}"
                if col.role == ROLE_LABEL:
                    raw_columns[col.name].append(_parse_label(text, where))
                elif col.kind == KIND_NUMERICAL:
                    raw_columns[col.name].append(_parse_numeric(text, where))
                else:
                    vocab = vocabs[col.name]
                    if text in vocab:
                        cid = vocab.index(text)
                    elif building and len(vocab) < col.cardinality:
                        vocab.append(text)
                        cid = len(vocab) - 1
                    else:
                        cid = col.unknown_id
                    if col.role == ROLE_SENSITIVE and cid == col.unknown_id:
                        raise DataError(f"{where}: sensitive value {text!r} is not one of the two known groups")
                    raw_columns[col.name].append(cid)

    n = len(raw_columns[schema[0].name])
    if n == 0:
        raise DataError(f"{path}: no data rows")
    columns = {}
    for col in schema:
        if col.kind == KIND_CATEGORICAL and col.role != ROLE_LABEL:
            columns[col.name] = _freeze(np.array(raw_columns[col.name], dtype=np.int64))
        else:
            columns[col.name] = _freeze(np.array(raw_columns[col.name], dtype=np.float64))
    return Dataset(schema=schema, columns=columns, vocabularies=vocabs, n=n)


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset back to CSV, decoding category ids to their values.

    Numericals are written with full precision (repr), so a load/save
    cycle of raw data is value-exact and repeated saves are byte-identical.
    """
    names = [c.name for c in dataset.schema]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(dataset.n):
            row = []
            for col in dataset.schema:
                value = dataset.columns[col.name][i]
                if col.role == ROLE_LABEL:
                    row.append(str(int(value)))
                elif col.kind == KIND_CATEGORICAL:
                    row.append(dataset.decode(col.name, int(value)))
                else:
                    row.append(repr(float(value)))
            writer.writerow(row)


# -- splitting and standardization --------------------------------------------


def _largest_remainder(n: int, ratios: tuple[float, float, float]) -> list[int]:
    # floors first, then hand out the shortfall by largest fractional part
    exact = [n * r for r in ratios]
    counts = [int(math.floor(e)) for e in exact]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split(dataset: Dataset, ratios: tuple[float, float, float], seed: int) -> Dataset:
    """Tag rows train/val/test and standardize numericals from train stats.

    The shuffle is a seeded permutation; per-split counts differ from the
    exact fractions by less than one row. Standard deviation uses the
    population (1/n) form, and a constant column gets std 1 so its values
    map to exact zeros.
    """
    if dataset.split_tags is not None:
        raise UsageError("dataset is already split")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    counts = _largest_remainder(dataset.n, tuple(ratios))
    if min(counts) == 0:
        raise ConfigError(f"split of {dataset.n} rows by {ratios} leaves an empty split")

    perm = np.random.default_rng(seed).permutation(dataset.n)
    tags = np.empty(dataset.n, dtype=np.int8)
    tags[perm[: counts[0]]] = SPLIT_CODES["train"]
    tags[perm[counts[0] : counts[0] + counts[1]]] = SPLIT_CODES["val"]
    tags[perm[counts[0] + counts[1] :]] = SPLIT_CODES["test"]

    train_rows = tags == SPLIT_CODES["train"]
    stats: dict[str, tuple[float, float]] = {}
    columns = dict(dataset.columns)
    for col in dataset.schema:
        if col.kind != KIND_NUMERICAL or col.role == ROLE_LABEL:
            continue
        values = dataset.columns[col.name]
        mu = float(values[train_rows].mean())
        sigma = float(values[train_rows].std())  # population form, ddof=0
        if sigma == 0.0:
            sigma = 1.0
        stats[col.name] = (mu, sigma)
        columns[col.name] = _freeze((values - mu) / sigma)

    return replace(
        dataset,
        columns=columns,
        split_tags=_freeze(tags),
        standardize_stats=stats,
    )


def apply_standardization(dataset: Dataset, stats: dict[str, tuple[float, float]]) -> Dataset:
    """Standardize a raw dataset with statistics saved from a training run."""
    if dataset.standardize_stats is not None:
        raise UsageError("dataset is already standardized")
    columns = dict(dataset.columns)
    for col in dataset.schema:
        if col.kind != KIND_NUMERICAL or col.role == ROLE_LABEL:
            continue
        if col.name not in stats:
            raise DataError(f"no standardization statistics for column {col.name!r}")
        mu, sigma = stats[col.name]
        columns[col.name] = _freeze((dataset.columns[col.name] - mu) / sigma)
    return replace(dataset, columns=columns, standardize_stats={k: tuple(v) for k, v in stats.items()})


# -- batching -----------------------------------------------------------------


def _split_indices(dataset: Dataset, which: str) -> np.ndarray:
    if which == "all":
        return np.arange(dataset.n)
    if which not in SPLIT_CODES:
        raise UsageError(f"unknown split {which!r}")
    if dataset.split_tags is None:
        raise UsageError("dataset has no split tags; call split() first")
    return np.flatnonzero(dataset.split_tags == SPLIT_CODES[which])


def _make_batch(dataset: Dataset, rows: np.ndarray) -> Batch:
    features = {c.name: dataset.columns[c.name][rows] for c in dataset.input_columns}
    return Batch(
        features=features,
        labels=dataset.columns[dataset.label_column.name][rows],
        true_sensitive=dataset.columns[dataset.sensitive_column.name][rows],
        indices=rows,
    )


def batches(dataset: Dataset, which: str, batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Shuffled batches of a split; the (seed, epoch) pair fixes the order.

    The last partial batch is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be at least 1, got {batch_size}")
    rows = _split_indices(dataset, which)
    order = rows[np.random.default_rng([seed, epoch]).permutation(rows.size)]
    return [_make_batch(dataset, order[i : i + batch_size]) for i in range(0, order.size, batch_size)]


def full_batch(dataset: Dataset, which: str) -> Batch:
    """The whole split as one batch, in original row order."""
    return _make_batch(dataset, _split_indices(dataset, which))


# -- synthetic biased data ----------------------------------------------------

SYNTH_SCHEMA = [
    FeatureColumn("proxy1", KIND_NUMERICAL, ROLE_NON_SENSITIVE),
    FeatureColumn("proxy2", KIND_NUMERICAL, ROLE_NON_SENSITIVE),
    FeatureColumn("noise1", KIND_NUMERICAL, ROLE_NON_SENSITIVE),
    FeatureColumn("noise2", KIND_NUMERICAL, ROLE_NON_SENSITIVE),
    FeatureColumn("noise3", KIND_NUMERICAL, ROLE_NON_SENSITIVE),
    FeatureColumn("s", KIND_CATEGORICAL, ROLE_SENSITIVE, cardinality=2),
    FeatureColumn("y", KIND_NUMERICAL, ROLE_LABEL),
]


def synth_generate(n: int, bias_strength: float, proxy_corr: float, seed: int) -> Dataset:
    """Generate a biased synthetic dataset from a fixed generative process.

    With group indicator s ~ Bernoulli(0.5) and independent standard
    normals e1..e5 drawn from one seeded stream:

        proxy1 = rho*(2s-1)       + (1-rho)*e1
        proxy2 = rho*(2s-1)*0.5   + (1-rho)*e2
        noise1..3 = e3..e5
        logit  = 1.0*proxy1 - 0.8*noise1 + 0.5*noise2 + beta*(2s-1)
        y ~ Bernoulli(sigmoid(logit))

    where beta is ``bias_strength`` and rho is ``proxy_corr``. The draw
    order (s, then the 5 normals, then the label uniforms) is part of the
    contract: the same (n, beta, rho, seed) always yields a bit-identical
    dataset. Acceptance thresholds cite these constants, so changing any
    of them is a breaking change.
    """
    if n < 100:
        raise ConfigError(f"synthetic generator needs n >= 100, got {n}")
    if bias_strength < 0:
        raise ConfigError(f"bias_strength must be >= 0, got {bias_strength}")
    if not 0.0 <= proxy_corr <= 1.0:
        raise ConfigError(f"proxy_corr must be in [0, 1], got {proxy_corr}")

    rng = np.random.default_rng(seed)
    s = (rng.random(n) < 0.5).astype(np.int64)
    eps = rng.standard_normal((n, 5))
    sign = 2.0 * s - 1.0
    rho, beta = float(proxy_corr), float(bias_strength)
    proxy1 = rho * sign + (1.0 - rho) * eps[:, 0]
    proxy2 = rho * sign * 0.5 + (1.0 - rho) * eps[:, 1]
    noise1, noise2, noise3 = eps[:, 2], eps[:, 3], eps[:, 4]
    logit = 1.0 * proxy1 - 0.8 * noise1 + 0.5 * noise2 + beta * sign
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)

    columns = {
        "proxy1": _freeze(proxy1),
        "proxy2": _freeze(proxy2),
        "noise1": _freeze(noise1.copy()),
        "noise2": _freeze(noise2.copy()),
        "noise3": _freeze(noise3.copy()),
        "s": _freeze(s),
        "y": _freeze(y),
    }
    return Dataset(
        schema=list(SYNTH_SCHEMA),
        columns=columns,
        vocabularies={"s": ["0", "1"]},
        n=n,
    )
