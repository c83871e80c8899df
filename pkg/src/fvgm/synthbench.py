"""Synthetic Gaussian benchmarks and the exact oracles used in testing.

Benchmarks have one Boolean sensitive feature and Gaussian nonsensitive
features whose means differ between the two sensitive groups, so the
closed-form group PPVs (and hence disparate impact) are known.  The joint
enumeration oracle sums the product-form probability of every Boolean
assignment and is the reference the solvers are differenced against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .bayesnet import BayesNet
from .classifier import QuantizedClassifier
from .errors import InputError, ResourceLimitError

ENUM_MAX_FEATURES = 20


@dataclass(frozen=True)
class SynthSpec:
    n_features: int           # total feature count, including the sensitive bit
    mu: tuple[float, ...]     # per-feature means for the A=1 group
    mu_prime: tuple[float, ...]  # per-feature means for the A=0 group
    sigma: float = 0.1
    samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        k = self.n_features - 1
        if len(self.mu) != k or len(self.mu_prime) != k:
            raise InputError(f"need {k} means, got {len(self.mu)}/{len(self.mu_prime)}")
        if any(not (0.0 <= m <= 1.0) for m in self.mu + self.mu_prime):
            raise InputError("group means must lie in [0, 1]")
        if self.sigma <= 0:
            raise InputError("sigma must be positive")

    @staticmethod
    def random(n_features: int, samples: int, seed: int) -> "SynthSpec":
        rng = np.random.default_rng(seed)
        k = n_features - 1
        return SynthSpec(n_features,
                         tuple(rng.uniform(0, 1, k).tolist()),
                         tuple(rng.uniform(0, 1, k).tolist()),
                         0.1, samples, seed)

    @property
    def label_threshold(self) -> float:
        return 0.5 * (sum(self.mu) + sum(self.mu_prime))


def generate(spec: SynthSpec) -> pd.DataFrame:
    """A ~ Bernoulli(0.5); X_i | A=1 ~ N(mu_i, sigma^2) and
    X_i | A=0 ~ N(mu_prime_i, sigma^2); Y = [sum X_i >= label threshold]."""
    rng = np.random.default_rng(spec.seed)
    m = spec.samples
    a = (rng.random(m) < 0.5).astype(np.int8)
    cols = {"A": a}
    total = np.zeros(m)
    for i, (mu1, mu0) in enumerate(zip(spec.mu, spec.mu_prime)):
        means = np.where(a == 1, mu1, mu0)
        x = rng.normal(means, spec.sigma)
        cols[f"X{i + 1}"] = x
        total += x
    cols["Y"] = (total >= spec.label_threshold).astype(np.int8)
    return pd.DataFrame(cols)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def analytic_group_ppvs(weights, w_sensitive: float, bias: float,
                        spec: SynthSpec) -> tuple[float, float]:
    """Closed-form PPVs for the A=1 and A=0 groups: the score is Gaussian
    with group mean sum(w*mu) and shared variance sum(w^2) sigma^2."""
    weights = list(weights)
    if len(weights) != spec.n_features - 1:
        raise InputError(f"need {spec.n_features - 1} weights, got {len(weights)}")
    var = sum(w * w for w in weights) * spec.sigma ** 2
    mean1 = sum(w * m for w, m in zip(weights, spec.mu))
    mean0 = sum(w * m for w, m in zip(weights, spec.mu_prime))
    if var == 0.0:
        return (1.0 if mean1 >= bias - w_sensitive else 0.0,
                1.0 if mean0 >= bias else 0.0)
    sd = math.sqrt(var)
    ppv1 = 1.0 - _norm_cdf((bias - w_sensitive - mean1) / sd)
    ppv0 = 1.0 - _norm_cdf((bias - mean0) / sd)
    return ppv1, ppv0


def analytic_di(weights, w_sensitive: float, bias: float, spec: SynthSpec) -> float:
    """Exact disparate impact: min over max of the closed-form group PPVs."""
    ppv1, ppv0 = analytic_group_ppvs(weights, w_sensitive, bias, spec)
    hi, lo = max(ppv1, ppv0), min(ppv1, ppv0)
    if hi == 0.0:
        return 1.0
    return lo / hi


def joint_enumeration_oracle(qclf: QuantizedClassifier, net: BayesNet,
                             marginals, fixed=None) -> float:
    """PPV by exhaustive summation of the product-form joint over every
    Boolean assignment; conditioned (renormalized) on ``fixed`` bits."""
    names = [f.name for f in qclf.features]
    n = len(names)
    if n > ENUM_MAX_FEATURES:
        raise ResourceLimitError(
            f"joint enumeration capped at {ENUM_MAX_FEATURES} features, got {n}")
    fixed = dict(fixed or {})
    idx = {name: j for j, name in enumerate(names)}

    rows = 1 << n
    assigns = np.zeros((rows, n), dtype=np.int8)
    for j in range(n):
        period = 1 << (n - 1 - j)
        assigns[:, j] = (np.arange(rows) // period) % 2

    prob = np.ones(rows, dtype=np.float64)
    for j, name in enumerate(names):
        col = assigns[:, j]
        if name in net.dag.nodes:
            cpt = net.cpts[name]
            if cpt.parents:
                code = np.zeros(rows, dtype=np.int64)
                for b, parent in enumerate(cpt.parents):
                    code |= assigns[:, idx[parent]].astype(np.int64) << b
                lookup = np.empty(1 << len(cpt.parents), dtype=np.float64)
                for key, p in cpt.table.items():
                    k = sum(bit << b for b, bit in enumerate(key))
                    lookup[k] = p
                p1 = lookup[code]
            else:
                p1 = np.full(rows, cpt.table[()])
        else:
            if name in marginals:
                p1 = np.full(rows, float(marginals[name]))
            elif name in fixed:
                p1 = np.full(rows, 0.5)  # cancels under conditioning
            else:
                raise InputError(f"no marginal probability for {name!r}")
        prob *= np.where(col == 1, p1, 1.0 - p1)

    mask = np.ones(rows, dtype=bool)
    for name, value in fixed.items():
        mask &= assigns[:, idx[name]] == int(value)
    weights = np.array(qclf.weights, dtype=np.float64)
    sat = assigns.astype(np.float64) @ weights >= float(qclf.threshold)

    denom = float(prob[mask].sum())
    if denom == 0.0:
        raise InputError(f"conditioning event {fixed} has probability zero")
    return float(prob[mask & sat].sum()) / denom
