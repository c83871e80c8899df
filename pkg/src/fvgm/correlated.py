"""Solving instances whose variables are partly governed by a Bayesian network.

Network variables are enumerated explicitly (their conditional probability
depends on the assignment of their parents, so their sub-results cannot be
memoized), while the independent remainder after the last network variable
falls back to the memoized dynamic program, shared across all enumeration
branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import s3p
from ._dp import Q_RANDOM, SpanSolver
from .bayesnet import BayesNet, topo_sort
from .errors import InputError, OrderingError
from .s3p import (QuantifiedVariable, S3PInstance, S3PSolution, SolveStats,
                  choice_sign_assignment, sort_descending)


@dataclass(frozen=True)
class CorrelatedInstance:
    instance: S3PInstance
    net: BayesNet

    def __post_init__(self):
        names = {v.name for v in self.instance.variables}
        stray = sorted(self.net.dag.nodes - names)
        if stray:
            raise InputError(f"network nodes are not instance variables: {stray}")
        by_name = {v.name: v for v in self.instance.variables}
        for node in self.net.dag.nodes:
            if by_name[node].quantifier.is_choice and self.net.dag.parents(node):
                raise InputError(
                    f"choice variable {node!r} must not have parents in the network")


def order_for_bn(ci: CorrelatedInstance) -> CorrelatedInstance:
    """Heuristic order: choice-in-net, choice-outside, chance-in-net,
    chance-outside.  Net blocks follow the topological order of the network
    so parents always precede children; the other blocks use the
    independent-case weight sorting."""
    inst, net = ci.instance, ci.net
    in_net = net.dag.nodes
    topo_pos = {name: i for i, name in enumerate(topo_sort(net))}
    descending = sort_descending(inst)

    def weight_key(v: QuantifiedVariable):
        return -v.weight if descending else v.weight

    choice_net = sorted((v for v in inst.variables
                         if v.quantifier.is_choice and v.name in in_net),
                        key=lambda v: topo_pos[v.name])
    choice_out = [v for v in inst.variables
                  if v.quantifier.is_choice and v.name not in in_net]
    choice_out = (sorted((v for v in choice_out if v.quantifier.kind == "exists"),
                         key=weight_key)
                  + sorted((v for v in choice_out if v.quantifier.kind == "forall"),
                           key=weight_key))
    chance_net = sorted((v for v in inst.variables
                         if not v.quantifier.is_choice and v.name in in_net),
                        key=lambda v: topo_pos[v.name])
    chance_out = sorted((v for v in inst.variables
                         if not v.quantifier.is_choice and v.name not in in_net),
                        key=weight_key)
    ordered = choice_net + choice_out + chance_net + chance_out
    return CorrelatedInstance(S3PInstance(ordered, inst.threshold), net)


def _prefix_bounds(variables, in_net):
    """Per-position sums bounding what the remaining variables can still
    contribute.  Network choice variables are branched rather than folded,
    so they count as free (min..max); choice variables outside the network
    contribute their deterministic weight-sign value."""
    n = len(variables)
    lo = np.zeros(n + 1, dtype=np.int64)
    hi = np.zeros(n + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        v = variables[i]
        w = v.weight
        if v.quantifier.is_choice and v.name not in in_net:
            fixed = max(w, 0) if v.quantifier.kind == "exists" else min(w, 0)
            lo[i] = lo[i + 1] + fixed
            hi[i] = hi[i + 1] + fixed
        else:
            lo[i] = lo[i + 1] + min(w, 0)
            hi[i] = hi[i + 1] + max(w, 0)
    return lo, hi


def solve_correlated(ci: CorrelatedInstance, *, memo_budget: int | None = None,
                     record_trace: bool = False) -> S3PSolution:
    """Exact value of the instance under the network-refined distribution.

    Every variable up to the last network variable is enumerated; network
    chance variables branch with Pr[b=1 | parents] looked up from the
    current partial assignment, network choice variables branch and take
    max/min.  Positions past the last network variable are solved by the
    memoized dynamic program, whose table is shared across branches.
    Requires parents to precede their children (raise OrderingError
    otherwise); use :func:`order_for_bn` first.
    """
    inst, net = ci.instance, ci.net
    if net.is_empty():
        return s3p.solve(inst, memo_budget=memo_budget, record_trace=record_trace)

    variables = inst.variables
    pos = {v.name: i for i, v in enumerate(variables)}
    for parent, child in net.dag.edges:
        if pos[parent] > pos[child]:
            raise OrderingError(
                f"network variable {child!r} appears before its parent {parent!r}")
    in_net = net.dag.nodes
    prefix_end = 1 + max(pos[name] for name in in_net)

    first_chance = next((i for i, v in enumerate(variables)
                         if not v.quantifier.is_choice), prefix_end)
    for i in range(first_chance, prefix_end):
        v = variables[i]
        if v.quantifier.is_choice and v.name in in_net:
            raise OrderingError(
                f"network choice variable {v.name!r} appears after a chance "
                "variable; apply order_for_bn first")

    tail = variables[prefix_end:]
    qt, w, pr = s3p._span_arrays(tail)
    tail_solver = SpanSolver(qt, w, pr, index_base=prefix_end, memo_budget=memo_budget)

    lo, hi = _prefix_bounds(variables, in_net)
    calls = [0]
    assign: dict[str, int] = {}
    cpts = net.cpts

    def eval_from(i: int, tau: int):
        """Value and network-choice assignments of the subproblem at (i, tau)."""
        while True:
            calls[0] += 1
            if tau <= lo[i]:
                return 1.0, {}
            if tau > hi[i]:
                return 0.0, {}
            if i == prefix_end:
                return tail_solver.solve(tau), {}
            v = variables[i]
            if v.quantifier.is_choice:
                if v.name not in in_net:
                    if v.quantifier.kind == "exists":
                        tau -= max(v.weight, 0)
                    else:
                        tau -= min(v.weight, 0)
                    i += 1
                    continue
                assign[v.name] = 1
                v1, a1 = eval_from(i + 1, tau - v.weight)
                assign[v.name] = 0
                v0, a0 = eval_from(i + 1, tau)
                del assign[v.name]
                if v.quantifier.kind == "exists":
                    sign = 1 if v.weight > 0 else 0
                    take1 = v1 > v0 or (v1 == v0 and sign == 1)
                else:
                    sign = 1 if v.weight < 0 else 0
                    take1 = v1 < v0 or (v1 == v0 and sign == 1)
                val, sub = (v1, a1) if take1 else (v0, a0)
                return val, {v.name: int(take1), **sub}
            if v.name in in_net:
                cpt = cpts[v.name]
                p1 = cpt.table[tuple(assign[q] for q in cpt.parents)]
            else:
                p1 = v.quantifier.p
            tracked = v.name in in_net
            total = 0.0
            merged: dict[str, int] = {}
            if p1 > 0.0:
                if tracked:
                    assign[v.name] = 1
                v1, a1 = eval_from(i + 1, tau - v.weight)
                total += p1 * v1
                merged.update(a1)
            if p1 < 1.0:
                if tracked:
                    assign[v.name] = 0
                v0, a0 = eval_from(i + 1, tau)
                total += (1.0 - p1) * v0
                merged = {**a0, **merged}
            if tracked:
                del assign[v.name]
            return total, merged

    value, net_choices = eval_from(0, inst.threshold)

    assignment = choice_sign_assignment(inst.variables)
    assignment.update(net_choices)
    return S3PSolution(
        value=value,
        choice_assignment=assignment,
        stats=SolveStats(tail_solver.memo_entries, calls[0] + tail_solver.dp_calls),
        trace=tail_solver.trace() if record_trace else None,
    )
