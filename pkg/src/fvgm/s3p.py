"""Quantified stochastic subset-sum: types, exact solver, oracle.

An instance is an ordered list of Boolean variables, each carrying an
integer weight and one of three quantifiers, plus an integer threshold.
The solved value is the probability that the weighted sum of true
variables reaches the threshold, maximized over exists-variables and
minimized over forall-variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ._dp import Q_EXISTS, Q_FORALL, Q_RANDOM, SpanSolver
from .errors import InputError, ResourceLimitError

BRUTE_FORCE_MAX_VARS = 25


@dataclass(frozen=True)
class Quantifier:
    """Exists / Forall choice quantifier or a Random chance quantifier with p."""

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in ("exists", "forall", "random"):
            raise InputError(f"unknown quantifier kind: {self.kind!r}")
        if self.kind == "random":
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise InputError(f"random quantifier needs p in [0,1], got {self.p!r}")
        elif self.p is not None:
            raise InputError(f"{self.kind} quantifier carries no probability")

    @property
    def is_choice(self) -> bool:
        return self.kind != "random"


EXISTS = Quantifier("exists")
FORALL = Quantifier("forall")


def random_q(p: float) -> Quantifier:
    return Quantifier("random", float(p))


@dataclass(frozen=True)
class QuantifiedVariable:
    name: str
    weight: int
    quantifier: Quantifier

    def __post_init__(self):
        if isinstance(self.weight, bool) or not isinstance(self.weight, (int, np.integer)):
            raise InputError(f"weight of {self.name!r} must be an integer, got {self.weight!r}")
        object.__setattr__(self, "weight", int(self.weight))


@dataclass(frozen=True)
class S3PInstance:
    variables: tuple[QuantifiedVariable, ...]
    threshold: int

    def __init__(self, variables: Iterable[QuantifiedVariable], threshold: int):
        variables = tuple(variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise InputError(f"duplicate variable names: {dup}")
        if isinstance(threshold, bool) or not isinstance(threshold, (int, np.integer)):
            raise InputError(f"threshold must be an integer, got {threshold!r}")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "threshold", int(threshold))

    def __len__(self) -> int:
        return len(self.variables)


class WeightBounds(NamedTuple):
    w_neg: int
    w_pos: int
    w_exists: int
    w_forall: int


@dataclass(frozen=True)
class SolveStats:
    memo_entries: int
    dp_calls: int


@dataclass(frozen=True)
class S3PSolution:
    value: float
    choice_assignment: dict[str, int]
    stats: SolveStats
    trace: dict[tuple[int, int], float] | None = field(default=None, repr=False)


def weight_bounds(instance: S3PInstance) -> WeightBounds:
    """Sums of negative/positive weights plus the fixed choice contributions."""
    w_neg = sum(min(v.weight, 0) for v in instance.variables)
    w_pos = sum(max(v.weight, 0) for v in instance.variables)
    w_exists = sum(max(v.weight, 0) for v in instance.variables
                   if v.quantifier.kind == "exists")
    w_forall = sum(min(v.weight, 0) for v in instance.variables
                   if v.quantifier.kind == "forall")
    return WeightBounds(w_neg, w_pos, w_exists, w_forall)


def lemma_window(instance: S3PInstance) -> int:
    """Residual-threshold window of the pseudo-polynomial memo bound."""
    wb = weight_bounds(instance)
    return instance.threshold + abs(wb.w_neg) - wb.w_exists - wb.w_forall


def memo_bound(instance: S3PInstance) -> int:
    """Asserted cap on memo entries: (#random vars) x residual window."""
    n_random = sum(1 for v in instance.variables if not v.quantifier.is_choice)
    return n_random * lemma_window(instance)


_QCODE = {"exists": Q_EXISTS, "forall": Q_FORALL, "random": Q_RANDOM}


def _span_arrays(variables: tuple[QuantifiedVariable, ...]):
    qt = np.array([_QCODE[v.quantifier.kind] for v in variables], dtype=np.int8)
    w = np.array([v.weight for v in variables], dtype=np.int64)
    pr = np.array([v.quantifier.p if v.quantifier.kind == "random" else 0.0
                   for v in variables], dtype=np.float64)
    return qt, w, pr


def choice_sign_assignment(variables: Iterable[QuantifiedVariable]) -> dict[str, int]:
    """Deterministic choice resolution: exists takes 1 iff weight > 0,
    forall takes 1 iff weight < 0; zero weights map to 0 either way."""
    out = {}
    for v in variables:
        if v.quantifier.kind == "exists":
            out[v.name] = 1 if v.weight > 0 else 0
        elif v.quantifier.kind == "forall":
            out[v.name] = 1 if v.weight < 0 else 0
    return out


def solve(instance: S3PInstance, *, memo_budget: int | None = None,
          record_trace: bool = False) -> S3PSolution:
    """Exact value of the instance by memoized dynamic programming.

    Memoization is keyed on (variable index, residual threshold) for
    random variables only; choice variables are folded by the weight-sign
    rule.  Raises :class:`ResourceLimitError` when the memo table would
    exceed the budget (``FVGM_MEMO_BUDGET`` or the built-in default).
    """
    qt, w, pr = _span_arrays(instance.variables)
    solver = SpanSolver(qt, w, pr, index_base=0, memo_budget=memo_budget)
    value = solver.solve(instance.threshold)
    return S3PSolution(
        value=value,
        choice_assignment=choice_sign_assignment(instance.variables),
        stats=SolveStats(solver.memo_entries, solver.dp_calls),
        trace=solver.trace() if record_trace else None,
    )


def sort_descending(instance: S3PInstance) -> bool:
    """Weight-sort direction rule; the boundary case sorts descending."""
    wb = weight_bounds(instance)
    return instance.threshold <= 0.5 * (wb.w_pos - wb.w_neg)


def reorder(instance: S3PInstance) -> S3PInstance:
    """Heuristic order: exists, forall, then random variables, each
    cluster weight-sorted (descending when the threshold sits in the
    lower half of the attainable window, ascending otherwise).  The
    solved value is order-invariant; this only speeds termination."""
    descending = sort_descending(instance)

    def cluster(kind: str) -> list[QuantifiedVariable]:
        vs = [v for v in instance.variables if v.quantifier.kind == kind]
        return sorted(vs, key=lambda v: -v.weight if descending else v.weight)

    ordered = cluster("exists") + cluster("forall") + cluster("random")
    return S3PInstance(ordered, instance.threshold)


def brute_force(instance: S3PInstance) -> S3PSolution:
    """Exhaustive oracle: enumerates every assignment of random variables
    and every assignment of choice variables, reducing by max over exists,
    min over forall and expectation over random.  Shares nothing with the
    dynamic program; ties between choice branches resolve toward 0."""
    n = len(instance.variables)
    if n > BRUTE_FORCE_MAX_VARS:
        raise ResourceLimitError(
            f"brute force capped at {BRUTE_FORCE_MAX_VARS} variables, got {n}")
    choice_vars = [v for v in instance.variables if v.quantifier.is_choice]
    random_vars = [v for v in instance.variables if not v.quantifier.is_choice]

    r = len(random_vars)
    if r:
        assigns = np.array(list(itertools.product((0, 1), repeat=r)), dtype=np.float64)
        rw = np.array([v.weight for v in random_vars], dtype=np.float64)
        rp = np.array([v.quantifier.p for v in random_vars], dtype=np.float64)
        sums = assigns @ rw
        probs = np.prod(np.where(assigns == 1.0, rp, 1.0 - rp), axis=1)
    else:
        sums = np.zeros(1)
        probs = np.ones(1)
    tau = instance.threshold

    def descend(i: int, shift: int) -> tuple[float, dict[str, int]]:
        if i == len(choice_vars):
            return float(probs[sums + shift >= tau].sum()), {}
        v = choice_vars[i]
        v0, a0 = descend(i + 1, shift)
        v1, a1 = descend(i + 1, shift + v.weight)
        if v.quantifier.kind == "exists":
            take1 = v1 > v0
        else:
            take1 = v1 < v0
        val, sub = (v1, a1) if take1 else (v0, a0)
        return val, {v.name: int(take1), **sub}

    value, assignment = descend(0, 0)
    return S3PSolution(value=value, choice_assignment=assignment,
                       stats=SolveStats(0, 0), trace=None)
