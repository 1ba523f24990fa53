"""Datasets: the synthetic 2-D benchmark, UCI Adult, and counterfactual variations."""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DataError(Exception):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    column_names: list = field(default_factory=list)
    # gender / race / sensitive: column index; marital: list of one-hot columns
    protected_cols: dict = field(default_factory=dict)
    n_train: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features and labels disagree in length")
        if not np.isfinite(self.features).all():
            raise DataError("non-finite feature values")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], list(self.column_names), dict(self.protected_cols))


# ---------------------------------------------------------------- synthetic

SYNTHETIC_SHIFT = 0.4


def synthetic_labels(features: np.ndarray) -> np.ndarray:
    """Label 1 iff ``y + 0.4 * sign(x) > 0``: the biased rule depends on x."""
    return (features[:, 1] + SYNTHETIC_SHIFT * np.sign(features[:, 0]) > 0).astype(np.int64)


def gen_synthetic(n: int, seed: int) -> Dataset:
    """Uniform points on [-1, 1]^2.  Points on a horizontal line are similar
    (the fair metric ignores the x coordinate), yet the label rule shifts
    the boundary by +-0.4 depending on the sign of x."""
    if n < 20:
        raise ValueError("need n >= 20")
    rng = np.random.default_rng(seed)
    feats = rng.uniform(-1.0, 1.0, size=(n, 2))
    return Dataset(feats, synthetic_labels(feats), ["x", "y"], {"sensitive": 0})


# -------------------------------------------------------------------- Adult

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
ADULT_CONTINUOUS = ["age", "education-num", "capital-gain", "capital-loss", "hours-per-week"]
ADULT_CATEGORICAL = ["workclass", "marital-status", "occupation", "relationship", "native-country"]
# fnlwgt is a census sampling weight and education duplicates education-num
ADULT_DROPPED = ["fnlwgt", "education"]


@dataclass
class AdultRows:
    records: list  # list of dicts, one per kept row
    raw_lines: int
    missing: int
    malformed: int


def read_adult_rows(path) -> AdultRows:
    """Parse an adult.data / adult.test file, dropping rows with '?' fields."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    records, raw, missing, malformed = [], 0, 0, 0
    for row in csv.reader(text.splitlines()):
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].startswith("|"):
            continue
        raw += 1
        fields = [f.strip() for f in row]
        if len(fields) != len(ADULT_COLUMNS):
            malformed += 1
            continue
        if "?" in fields:
            missing += 1
            continue
        rec = dict(zip(ADULT_COLUMNS, fields))
        income = rec["income"].rstrip(".")
        if income not in ("<=50K", ">50K"):
            malformed += 1
            continue
        try:
            for c in ADULT_CONTINUOUS:
                rec[c] = float(rec[c])
        except ValueError:
            malformed += 1
            continue
        rec["income"] = income
        records.append(rec)
    log.info("%s: %d rows read, %d with missing values dropped, %d malformed skipped",
             path.name, raw, missing, malformed)
    return AdultRows(records, raw, missing, malformed)


def encode_adult(train: list, test: list) -> tuple[Dataset, Dataset]:
    """One-hot categoricals (categories seen in ``train``), standardized
    continuous columns (train statistics), binary sex (Male=1) and race
    (White=1), label ``income > 50K``."""
    if not train:
        raise DataError("no training rows")
    cats = {c: sorted({r[c] for r in train}) for c in ADULT_CATEGORICAL}
    cont = np.array([[r[c] for c in ADULT_CONTINUOUS] for r in train])
    mean = cont.mean(axis=0)
    std = cont.std(axis=0)
    std[std == 0] = 1.0

    names = list(ADULT_CONTINUOUS) + ["sex_male", "race_white"]
    for c in ADULT_CATEGORICAL:
        names += [f"{c}={v}" for v in cats[c]]
    protected = {
        "gender": names.index("sex_male"),
        "race": names.index("race_white"),
        "marital": [i for i, n in enumerate(names) if n.startswith("marital-status=")],
    }

    def encode(rows):
        x = np.zeros((len(rows), len(names)))
        if rows:
            x[:, : len(ADULT_CONTINUOUS)] = (np.array([[r[c] for c in ADULT_CONTINUOUS] for r in rows]) - mean) / std
        offset = {}
        pos = len(ADULT_CONTINUOUS) + 2
        for c in ADULT_CATEGORICAL:
            offset[c] = (pos, {v: j for j, v in enumerate(cats[c])})
            pos += len(cats[c])
        for i, r in enumerate(rows):
            x[i, protected["gender"]] = float(r["sex"] == "Male")
            x[i, protected["race"]] = float(r["race"] == "White")
            for c in ADULT_CATEGORICAL:
                start, index = offset[c]
                j = index.get(r[c])
                if j is not None:
                    x[i, start + j] = 1.0
        y = np.array([int(r["income"] == ">50K") for r in rows], dtype=np.int64)
        return Dataset(x, y, list(names), dict(protected))

    return encode(train), encode(test)


def load_adult(train_path, test_path) -> Dataset:
    """Adult train rows followed by test rows; ``n_train`` marks the boundary.
    Standardization uses statistics of the train file only."""
    tr = read_adult_rows(train_path)
    te = read_adult_rows(test_path)
    a, b = encode_adult(tr.records, te.records)
    ds = Dataset(np.vstack([a.features, b.features]), np.concatenate([a.labels, b.labels]),
                 a.column_names, a.protected_cols, n_train=len(a))
    return ds


def split_adult(train_path, test_path, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Pool both files, draw a random train/test split, then encode with the
    split's own training statistics."""
    rows = read_adult_rows(train_path).records + read_adult_rows(test_path).records
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(rows))
    cut = int(round(fraction * len(rows)))
    return encode_adult([rows[i] for i in perm[:cut]], [rows[i] for i in perm[cut:]])


def dump_csv(dataset: Dataset, path) -> None:
    """Canonical preprocessed dump: feature columns in order, then ``label``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.column_names) + ["label"])
        for row, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


# --------------------------------------------------------------- variations

VARIATION_KINDS = ("spouse", "gender_race", "synthetic_reflect")


@dataclass
class VariationSet:
    base: np.ndarray
    variants: np.ndarray  # (v, d); includes the base configuration

    def __post_init__(self):
        self.variants = np.atleast_2d(np.asarray(self.variants, dtype=np.float64))
        if len(self.variants) < 1:
            raise ValueError("need at least one variant")


def _require(schema, key):
    if key not in schema:
        raise ValueError(f"schema lacks the {key!r} column(s)")
    return schema[key]


def make_variations(x, kind: str, schema: dict):
    """Counterfactual variants of ``x`` differing only in protected columns.

    A single row gives a :class:`VariationSet`; a batch ``(n, d)`` gives an
    array of shape ``(n, v, d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if kind == "spouse":
        cols = list(_require(schema, "marital"))
        out = np.repeat(xb[:, None, :], len(cols), axis=1)
        out[:, :, cols] = np.eye(len(cols))[None, :, :]
    elif kind == "gender_race":
        g, r = _require(schema, "gender"), _require(schema, "race")
        combos = list(itertools.product((0.0, 1.0), repeat=2))
        out = np.repeat(xb[:, None, :], len(combos), axis=1)
        for j, (gv, rv) in enumerate(combos):
            out[:, j, g] = gv
            out[:, j, r] = rv
    elif kind == "synthetic_reflect":
        s = _require(schema, "sensitive")
        out = np.repeat(xb[:, None, :], 2, axis=1)
        out[:, 1, s] = -out[:, 1, s]
    else:
        raise ValueError(f"unknown variation kind {kind!r}")
    return VariationSet(x, out[0]) if single else out


def reflect_counterfactual(col: int):
    """Counterfactual generator negating one coordinate."""
    def fn(x, rng=None):
        out = np.array(x, dtype=np.float64)
        out[..., col] = -out[..., col]
        return out
    return fn


def flip_counterfactual(col: int):
    """Counterfactual generator flipping a binary 0/1 attribute."""
    def fn(x, rng=None):
        out = np.array(x, dtype=np.float64)
        out[..., col] = 1.0 - out[..., col]
        return out
    return fn
