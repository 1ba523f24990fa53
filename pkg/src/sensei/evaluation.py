"""Accuracy, individual-fairness and group-fairness metrics."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import VariationSet
from .nn import forward, softmax

SCHEMA_VERSION = 1


@dataclass
class MetricsReport:
    balanced_accuracy: float | None = None
    prediction_consistency: float | None = None
    ctf_score: float | None = None
    gap_rms: float | None = None
    gap_abs: float | None = None
    gap_max: float | None = None
    parity_acc_std: float | None = None
    parity_ba_std: float | None = None
    # task-specific extras, e.g. gr_con or gap_r_rms on Adult
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"schema_version": SCHEMA_VERSION, **asdict(self)}
        return json.dumps(payload, indent=2, sort_keys=True)


def balanced_accuracy(preds, labels, n_classes: int) -> float:
    """Mean over classes of the per-class true positive rate."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    tprs = []
    for k in range(n_classes):
        mask = labels == k
        if not mask.any():
            raise ValueError(f"class {k} absent from labels")
        tprs.append(np.mean(preds[mask] == k))
    return float(np.mean(tprs))


def _stack(variation_sets) -> np.ndarray | list:
    if isinstance(variation_sets, np.ndarray):
        return variation_sets
    arrays = [v.variants if isinstance(v, VariationSet) else np.atleast_2d(v) for v in variation_sets]
    if len({a.shape for a in arrays}) == 1:
        return np.stack(arrays)
    return arrays


def _probs_per_set(model, variation_sets):
    sets = _stack(variation_sets)
    if isinstance(sets, np.ndarray):
        n, v, d = sets.shape
        p = softmax(forward(model, sets.reshape(n * v, d)))
        return list(p.reshape(n, v, -1))
    return [softmax(forward(model, s)) for s in sets]


def prediction_consistency(model, variation_sets) -> float:
    """Fraction of sets on which the argmax class agrees across all variants."""
    probs = _probs_per_set(model, variation_sets)
    if not probs:
        raise ValueError("no variation sets")
    agree = [np.all(np.argmax(p, axis=1) == np.argmax(p[0])) for p in probs]
    return float(np.mean(agree))


def ctf_score(model, variation_sets, n_classes: int | None = None) -> float:
    """Binary: mean population std of P(class 1) across variants.
    Multiclass: mean pairwise squared distance between probability vectors."""
    probs = _probs_per_set(model, variation_sets)
    k = n_classes or probs[0].shape[1]
    if k < 2:
        raise ValueError("need K >= 2")
    vals = []
    for p in probs:
        if k == 2:
            vals.append(np.std(p[:, 1]))
        else:
            v = len(p)
            if v < 2:
                vals.append(0.0)
                continue
            d = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=-1)
            vals.append(d[np.triu_indices(v, 1)].mean())
    return float(np.mean(vals))


def tpr_gaps(preds, labels, group, n_classes: int) -> tuple[float, float, float]:
    """``(rms, mean abs, max)`` over classes of ``|TPR_0,k - TPR_1,k|``.

    A class lacking one of the groups is excluded with a warning.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    group = np.asarray(group).astype(bool)
    gaps = []
    for k in range(n_classes):
        m0 = (labels == k) & ~group
        m1 = (labels == k) & group
        if not m0.any() or not m1.any():
            warnings.warn(f"class {k} lacks one protected group; its TPR gap is undefined and excluded")
            continue
        gaps.append(abs(np.mean(preds[m0] == k) - np.mean(preds[m1] == k)))
    if not gaps:
        return float("nan"), float("nan"), float("nan")
    gaps = np.array(gaps)
    return float(np.sqrt(np.mean(gaps**2))), float(np.mean(gaps)), float(np.max(gaps))


def accuracy_parity_std(preds, labels, group_masks) -> tuple[float, float]:
    """Population std across groups of accuracy and of balanced accuracy.

    Balanced accuracy within a group averages over the classes present in it.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    accs, bas = [], []
    for mask in group_masks:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("empty protected group")
        p, y = preds[mask], labels[mask]
        accs.append(np.mean(p == y))
        bas.append(np.mean([np.mean(p[y == k] == k) for k in np.unique(y)]))
    return float(np.std(accs)), float(np.std(bas))
