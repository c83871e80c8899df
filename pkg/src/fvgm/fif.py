"""Fairness influence of feature subsets via distribution ablation.

The influence of a feature subset on a group's probability of positive
prediction is the drop caused by replacing the subset's distribution with
an independent uniform one: network nodes are removed (children keep a
marginalized table) and marginals become uniform over each feature's
indicator family.  The ablation is analytic, so results are deterministic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Mapping

from .bayesnet import BayesNet, Cpt, Dag, node_marginal
from .classifier import QuantizedClassifier
from .errors import InputError
from .metrics import group_ppv


@dataclass(frozen=True)
class FifResult:
    subset: tuple[str, ...]
    group: dict[str, int] | None  # None means unconditional ("all")
    base_ppv: float
    ablated_ppv: float

    @property
    def influence(self) -> float:
        return self.base_ppv - self.ablated_ppv


def _remove_node(net: BayesNet, node: str, marginal: float) -> BayesNet:
    """Drop one node; each child's table is averaged over the removed
    parent's two rows, weighted by that parent's pre-ablation marginal."""
    keep = sorted(net.dag.nodes - {node})
    edges = {(p, c) for p, c in net.dag.edges if p != node and c != node}
    dag = Dag(keep, edges, net.dag.choice_vars & set(keep))
    cpts = {}
    for name in keep:
        old = net.cpts[name]
        if node not in old.parents:
            cpts[name] = old
            continue
        j = old.parents.index(node)
        new_parents = tuple(p for p in old.parents if p != node)
        table = {}
        for key in old.table:
            if key[j] == 1:
                continue
            hi = key[:j] + (1,) + key[j + 1:]
            reduced = key[:j] + key[j + 1:]
            table[reduced] = marginal * old.table[hi] + (1.0 - marginal) * old.table[key]
        cpts[name] = Cpt(name, new_parents, table)
    return BayesNet(dag, cpts)


def ablate_distribution(net: BayesNet, marginals: Mapping[str, float],
                        subset: Iterable[str],
                        groups: Mapping[str, list[str]] | None = None,
                        sensitive: Iterable[str] = (),
                        ) -> tuple[BayesNet, dict[str, float]]:
    """Make every feature of the subset independent and uniform.

    ``subset`` names source features; ``groups`` maps a source to its
    exactly-one indicator family (absent sources are standalone Booleans).
    Indicator bits get probability 1/k, standalone Booleans 0.5.
    """
    subset = list(dict.fromkeys(subset))
    sensitive = set(sensitive)
    bad = sorted(s for s in subset if s in sensitive)
    if bad:
        raise InputError(f"cannot ablate sensitive features: {bad}")
    groups = groups or {}
    bits: list[tuple[str, float]] = []
    for source in subset:
        family = groups.get(source, [source])
        uniform = 1.0 / len(family) if len(family) > 1 else 0.5
        bits.extend((bit, uniform) for bit in family)
    # pre-ablation marginals of all network bits, on the original network
    pre = {bit: node_marginal(net, bit) for bit, _ in bits if bit in net.dag.nodes}
    new_net = net
    for bit, _ in bits:
        if bit in new_net.dag.nodes:
            new_net = _remove_node(new_net, bit, pre[bit])
    new_marginals = dict(marginals)
    for bit, uniform in bits:
        new_marginals[bit] = uniform
    return new_net, new_marginals


def fif(qclf: QuantizedClassifier, net: BayesNet,
        marginals: Mapping[str, float], group: Mapping[str, int] | None,
        subset: Iterable[str]) -> FifResult:
    """Influence of a source-feature subset on one group's PPV (or on the
    unconditional PPV when group is None)."""
    subset = tuple(dict.fromkeys(subset))
    sources = {f.source: f.role for f in qclf.features}
    unknown = sorted(s for s in subset if s not in sources)
    if unknown:
        raise InputError(f"unknown features: {unknown}")
    sensitive = {s for s, role in sources.items() if role == "sensitive"}
    base = group_ppv(qclf, net, marginals, group)
    if not subset:
        return FifResult(subset, dict(group) if group else None, base, base)
    net2, marg2 = ablate_distribution(net, marginals, subset,
                                      groups=qclf.groups_by_source(),
                                      sensitive=sensitive)
    ablated = group_ppv(qclf, net2, marg2, group)
    return FifResult(subset, dict(group) if group else None, base, ablated)


def fif_all(qclf: QuantizedClassifier, net: BayesNet,
            marginals: Mapping[str, float],
            group: Mapping[str, int] | None) -> tuple[float, list[FifResult]]:
    """Single-feature influences for every nonsensitive source feature, in
    classifier feature order, plus the shared base PPV."""
    seen = []
    for f in qclf.features:
        if f.role != "sensitive" and f.source not in seen:
            seen.append(f.source)
    results = [fif(qclf, net, marginals, group, (source,)) for source in seen]
    base = results[0].base_ppv if results else group_ppv(qclf, net, marginals, group)
    return base, results


def results_to_csv(results: Iterable[FifResult]) -> str:
    buf = io.StringIO()
    buf.write("subset,group,base_ppv,ablated_ppv,influence\n")
    for r in results:
        grp = "all" if r.group is None else \
            ";".join(f"{k}={v}" for k, v in sorted(r.group.items()))
        buf.write(f"{'|'.join(r.subset)},{grp},{r.base_ppv!r},{r.ablated_ppv!r},"
                  f"{r.influence!r}\n")
    return buf.getvalue()
