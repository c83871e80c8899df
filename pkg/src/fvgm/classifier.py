"""Linear classifiers and their Boolean/integer preprocessing.

A real-valued linear classifier predicts 1 iff the weighted feature sum
reaches the bias.  Verification needs Boolean features and integer
weights, so continuous features are binned into indicator variables
weighted by within-bin means, and all coefficients are scaled by an
integer multiplier and rounded.  A fidelity grid search picks the bin
count and multiplier that best preserve the original predictions.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import InputError

ROLES = ("sensitive", "nonsensitive")
KINDS = ("continuous", "boolean", "categorical")

BIN_GRID = tuple(range(2, 11))
MULTIPLIER_GRID = tuple(range(1, 101))


@dataclass(frozen=True)
class Feature:
    name: str
    role: str = "nonsensitive"
    kind: str = "continuous"

    def __post_init__(self):
        if self.role not in ROLES:
            raise InputError(f"feature {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise InputError(f"feature {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class LinearClassifier:
    features: tuple[Feature, ...]
    weights: tuple[float, ...]
    bias: float

    def __init__(self, features, weights, bias):
        features = tuple(features)
        weights = tuple(float(w) for w in weights)
        if len(features) != len(weights):
            raise InputError(f"{len(features)} features but {len(weights)} weights")
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise InputError("duplicate feature names")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", float(bias))

    def score(self, data: pd.DataFrame) -> np.ndarray:
        total = np.zeros(len(data), dtype=np.float64)
        for f, w in zip(self.features, self.weights):
            if f.name not in data.columns:
                raise InputError(f"row is missing feature {f.name!r}")
            total += w * data[f.name].to_numpy(dtype=np.float64)
        return total

    def predict(self, data: pd.DataFrame | Mapping) -> np.ndarray | int:
        """1 iff the weighted sum reaches the bias (non-strict)."""
        if isinstance(data, Mapping):
            frame = pd.DataFrame([data])
            return int(self.score(frame)[0] >= self.bias)
        return (self.score(data) >= self.bias).astype(np.int8)

    def sensitive_features(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.role == "sensitive")


@dataclass(frozen=True)
class BinSpec:
    source: str
    edges: tuple[float, ...]  # interior edges, strictly increasing
    means: tuple[float, ...]  # one per bin, each inside its bin

    def __post_init__(self):
        if len(self.means) != len(self.edges) + 1:
            raise InputError(f"bins of {self.source!r}: need one mean per bin")
        if any(a >= b for a, b in zip(self.edges, self.edges[1:])):
            raise InputError(f"bins of {self.source!r}: edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.means)

    def assign(self, values: np.ndarray) -> np.ndarray:
        """Bin index per value; a value equal to an edge goes to the lower bin."""
        return np.searchsorted(np.asarray(self.edges), values, side="left")


@dataclass(frozen=True)
class BoolFeature:
    name: str
    source: str
    role: str
    group: str | None = None  # exactly-one family id, None for standalone booleans
    value: float = 1.0        # source value this indicator stands for


def equal_frequency_bins(values: np.ndarray, k: int, source: str) -> BinSpec:
    """Quantile edges taken from actual data values so no bin is empty.

    Ties collapse edges (reducing the bin count, with a warning); a
    constant column degenerates to a single bin.
    """
    if k < 2:
        raise InputError("bin count must be >= 2")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InputError(f"no data for feature {source!r}")
    qs = [j / k for j in range(1, k)]
    raw = np.quantile(values, qs, method="lower")
    vmax = values.max()
    edges = sorted({float(e) for e in raw if e < vmax})
    if len(edges) + 1 < k:
        warnings.warn(
            f"feature {source!r}: only {len(edges) + 1} distinct bins "
            f"out of {k} requested", stacklevel=2)
    idx = np.searchsorted(np.asarray(edges), values, side="left")
    means = [float(values[idx == b].mean()) for b in range(len(edges) + 1)]
    return BinSpec(source, tuple(edges), tuple(means))


class _BooleanForm:
    """Shared encode/predict behavior of the Boolean-feature classifiers."""

    features: tuple[BoolFeature, ...]
    weights: tuple
    threshold: float
    bins: dict[str, BinSpec]

    def encode(self, data: pd.DataFrame) -> pd.DataFrame:
        """Re-encode raw rows into the Boolean feature columns."""
        cols: dict[str, np.ndarray] = {}
        sources = {f.source for f in self.features}
        missing = sorted(s for s in sources if s not in data.columns)
        if missing:
            raise InputError(f"dataset is missing columns: {missing}")
        for source in sources:
            feats = [f for f in self.features if f.source == source]
            raw = data[source].to_numpy(dtype=np.float64)
            if source in self.bins:
                idx = self.bins[source].assign(raw)
                for i, f in enumerate(sorted(feats, key=lambda f: f.value)):
                    cols[f.name] = (idx == i).astype(np.int8)
            elif len(feats) == 1 and feats[0].group is None:
                if not np.isin(raw, (0.0, 1.0)).all():
                    raise InputError(f"column {source!r} is not Boolean 0/1")
                cols[feats[0].name] = raw.astype(np.int8)
            else:
                hit = np.zeros(len(data), dtype=np.int8)
                for f in feats:
                    match = (raw == f.value).astype(np.int8)
                    cols[f.name] = match
                    hit |= match
                if not hit.all():
                    bad = sorted(set(raw[hit == 0].tolist()))
                    raise InputError(f"column {source!r} has unseen categories: {bad}")
        return pd.DataFrame({f.name: cols[f.name] for f in self.features},
                            index=data.index)

    def score_boolean(self, bool_data: pd.DataFrame) -> np.ndarray:
        total = np.zeros(len(bool_data), dtype=np.float64)
        for f, w in zip(self.features, self.weights):
            if f.name not in bool_data.columns:
                raise InputError(f"encoded data is missing column {f.name!r}")
            total += float(w) * bool_data[f.name].to_numpy(dtype=np.float64)
        return total

    def predict_boolean(self, bool_data: pd.DataFrame) -> np.ndarray:
        return (self.score_boolean(bool_data) >= self.threshold).astype(np.int8)

    def predict_raw(self, data: pd.DataFrame) -> np.ndarray:
        return self.predict_boolean(self.encode(data))

    def sensitive_features(self) -> tuple[BoolFeature, ...]:
        return tuple(f for f in self.features if f.role == "sensitive")

    def groups_by_source(self) -> dict[str, list[str]]:
        """Exactly-one indicator families, keyed by source feature."""
        out: dict[str, list[str]] = {}
        for f in self.features:
            if f.group is not None:
                out.setdefault(f.group, []).append(f.name)
        return out


@dataclass(frozen=True)
class BooleanClassifier(_BooleanForm):
    """Boolean features with still-real coefficients (pre-scaling)."""

    features: tuple[BoolFeature, ...]
    weights: tuple[float, ...]
    threshold: float
    bins: dict[str, BinSpec]


@dataclass(frozen=True)
class QuantizedClassifier(_BooleanForm):
    features: tuple[BoolFeature, ...]
    weights: tuple[int, ...]
    threshold: int
    multiplier: int
    bins: dict[str, BinSpec]

    def __post_init__(self):
        if self.multiplier < 1:
            raise InputError("multiplier must be >= 1")
        if any(not isinstance(w, (int, np.integer)) for w in self.weights):
            raise InputError("quantized weights must be integers")


def discretize(clf: LinearClassifier, data: pd.DataFrame,
               k: int) -> tuple[BooleanClassifier, pd.DataFrame]:
    """Turn every feature into Boolean indicators against the given data.

    Continuous features get k equal-frequency bins with coefficient
    weight x bin-mean per indicator; Boolean features pass through;
    categorical features get one indicator per distinct (numeric) value
    with coefficient weight x value.
    """
    if data.empty:
        raise InputError("discretization needs a nonempty dataset")
    feats: list[BoolFeature] = []
    weights: list[float] = []
    bins: dict[str, BinSpec] = {}
    for f, w in zip(clf.features, clf.weights):
        if f.name not in data.columns:
            raise InputError(f"dataset is missing column {f.name!r}")
        col = data[f.name].to_numpy(dtype=np.float64)
        if f.kind == "continuous":
            spec = equal_frequency_bins(col, k, f.name)
            bins[f.name] = spec
            for i, mu in enumerate(spec.means):
                feats.append(BoolFeature(f"{f.name}=bin{i}", f.name, f.role,
                                         group=f.name, value=float(i)))
                weights.append(w * mu)
        elif f.kind == "boolean":
            if not np.isin(col, (0.0, 1.0)).all():
                raise InputError(f"column {f.name!r} is not Boolean 0/1")
            feats.append(BoolFeature(f.name, f.name, f.role, group=None))
            weights.append(w)
        else:  # categorical, numeric-coded
            cats = sorted(set(col.tolist()))
            if any(math.isnan(c) for c in cats):
                raise InputError(f"column {f.name!r} has NaN categories")
            for c in cats:
                label = f"{f.name}={c:g}"
                feats.append(BoolFeature(label, f.name, f.role, group=f.name, value=c))
                weights.append(w * c)
    bclf = BooleanClassifier(tuple(feats), tuple(weights), clf.bias, bins)
    return bclf, bclf.encode(data)


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def quantize(bclf: BooleanClassifier, multiplier: int) -> QuantizedClassifier:
    """Scale every coefficient and the threshold by the multiplier and
    round half away from zero."""
    if multiplier < 1:
        raise InputError("multiplier must be >= 1")
    return QuantizedClassifier(
        features=bclf.features,
        weights=tuple(round_half_away(w * multiplier) for w in bclf.weights),
        threshold=round_half_away(bclf.threshold * multiplier),
        multiplier=int(multiplier),
        bins=bclf.bins,
    )


@dataclass(frozen=True)
class TuneResult:
    k: int
    multiplier: int
    fidelity: float


def tune(clf: LinearClassifier, data: pd.DataFrame, *,
         k_grid: Iterable[int] = BIN_GRID,
         l_grid: Iterable[int] = MULTIPLIER_GRID,
         validation: pd.DataFrame | None = None,
         seed: int = 0) -> TuneResult:
    """Grid search maximizing agreement between original and quantized
    predictions on held-out rows; ties take the smaller k, then smaller l.

    Without an explicit validation frame an 80/20 split at the given seed
    is used.
    """
    if validation is None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(data))
        n_val = max(1, int(round(0.2 * len(data))))
        train = data.iloc[order[:-n_val]] if len(data) > n_val else data
        validation = data.iloc[order[-n_val:]]
    else:
        train = data
    if train.empty:
        train = validation

    reference = clf.predict(validation)
    has_continuous = any(f.kind == "continuous" for f in clf.features)
    k_values = list(k_grid) if has_continuous else [min(k_grid)]
    l_values = list(l_grid)

    best: TuneResult | None = None
    for k in k_values:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bclf, _ = discretize(clf, train, k)
        encoded = bclf.encode(validation).to_numpy(dtype=np.float64)
        w = np.array(bclf.weights, dtype=np.float64)
        # round half away from zero: floor(|x| + .5) * sign
        scaled_w = np.floor(np.abs(np.outer(l_values, w)) + 0.5) * np.sign(np.outer(l_values, w))
        scaled_tau = np.floor(np.abs(np.array(l_values) * bclf.threshold) + 0.5) \
            * np.sign(np.array(l_values) * bclf.threshold)
        scores = encoded @ scaled_w.T  # rows x multipliers
        preds = (scores >= scaled_tau[np.newaxis, :]).astype(np.int8)
        agreement = (preds == reference[:, np.newaxis]).mean(axis=0)
        for j, l in enumerate(l_values):
            fid = float(agreement[j])
            if best is None or fid > best.fidelity:
                best = TuneResult(k, int(l), fid)
    return best


def to_dict(clf: LinearClassifier) -> dict:
    return {
        "features": [{"name": f.name, "role": f.role, "kind": f.kind}
                     for f in clf.features],
        "weights": list(clf.weights),
        "bias": clf.bias,
    }


def from_dict(d: Mapping) -> LinearClassifier:
    try:
        feats = tuple(Feature(f["name"], f.get("role", "nonsensitive"),
                              f.get("kind", "continuous")) for f in d["features"])
        return LinearClassifier(feats, d["weights"], d["bias"])
    except (KeyError, TypeError) as e:
        raise InputError(f"bad classifier file: {e}") from None


def quantized_to_dict(qclf: QuantizedClassifier, fidelity: float | None = None) -> dict:
    out = {
        "boolean_features": [
            {"name": f.name, "source": f.source, "role": f.role,
             "group": f.group, "value": f.value} for f in qclf.features],
        "weights": [int(w) for w in qclf.weights],
        "threshold": int(qclf.threshold),
        "multiplier": int(qclf.multiplier),
        "bins": {s: {"edges": list(b.edges), "means": list(b.means)}
                 for s, b in sorted(qclf.bins.items())},
    }
    if fidelity is not None:
        out["fidelity"] = fidelity
    return out


def quantized_from_dict(d: Mapping) -> QuantizedClassifier:
    feats = tuple(BoolFeature(f["name"], f["source"], f["role"],
                              f.get("group"), f.get("value", 1.0))
                  for f in d["boolean_features"])
    bins = {s: BinSpec(s, tuple(b["edges"]), tuple(b["means"]))
            for s, b in d["bins"].items()}
    return QuantizedClassifier(feats, tuple(int(w) for w in d["weights"]),
                               int(d["threshold"]), int(d["multiplier"]), bins)


def save(clf: LinearClassifier, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(clf), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> LinearClassifier:
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh))
