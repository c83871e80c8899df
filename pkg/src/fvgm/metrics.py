"""Group and causal fairness metrics.

Everything reduces to the maximum and minimum probability of positive
prediction over compound sensitive groups, computed exactly by the
subset-sum solvers.  Disparate impact is the min/max ratio, statistical
parity the difference; equalized odds repeats the computation on each
ground-truth label slice and path-specific causal fairness repeats it
with the mediator distribution refit from the most favored group.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import pandas as pd

from .bayesnet import (EMPTY_NET, BayesNet, Dag, condition, fit_cpt, fit_mle)
from .classifier import QuantizedClassifier
from .correlated import CorrelatedInstance, order_for_bn, solve_correlated
from .errors import InputError
from .s3p import (EXISTS, FORALL, QuantifiedVariable, Quantifier, S3PInstance,
                  SolveStats, random_q)


@dataclass(frozen=True)
class GroupResult:
    """One compound sensitive group (an assignment of every sensitive
    Boolean feature) and its probability of positive prediction."""
    group: dict[str, int]
    ppv: float


@dataclass(frozen=True)
class Provenance:
    fidelity: float | None = None
    bn_nodes: int = 0
    bn_edges: int = 0
    dataset_hash: str | None = None


@dataclass(frozen=True)
class FairnessReport:
    max_group: GroupResult
    min_group: GroupResult
    di: float
    sp: float
    eo: float | None = None
    pcf: float | None = None
    epsilon_verdicts: dict[str, bool] = field(default_factory=dict)
    provenance: Provenance = field(default_factory=Provenance)
    stats: SolveStats = field(default_factory=lambda: SolveStats(0, 0))

    def metric(self, name: str) -> float | None:
        return {"di": self.di, "sp": self.sp, "eo": self.eo, "pcf": self.pcf}[name]


def estimate_marginals(bool_data: pd.DataFrame,
                       columns: Iterable[str]) -> dict[str, float]:
    """Empirical Pr[column = 1] per Boolean column."""
    out = {}
    for c in columns:
        if c not in bool_data.columns:
            raise InputError(f"dataset is missing column {c!r}")
        out[c] = float(bool_data[c].mean())
    return out


def _chance_quantifier(name: str, net: BayesNet,
                       marginals: Mapping[str, float]) -> Quantifier:
    if name in net.dag.nodes:
        # conditionals come from the network; the slot value is unused
        return random_q(marginals.get(name, 0.5))
    if name not in marginals:
        raise InputError(f"no marginal probability for chance variable {name!r}")
    return random_q(marginals[name])


def _solve_ppv(qclf: QuantizedClassifier, net: BayesNet,
               marginals: Mapping[str, float],
               sensitive_kind: Quantifier | None,
               pinned: Mapping[str, int] | None,
               stats_acc: list | None = None) -> tuple[float, dict[str, int]]:
    """Build the subset-sum instance and solve it.

    Sensitive features become choice variables of ``sensitive_kind``, or
    are hard-wired via ``pinned`` (threshold shift plus network
    conditioning), or act as plain chance variables when both are None.
    """
    pinned = dict(pinned or {})
    tau = int(qclf.threshold)
    variables = []
    for f, w in zip(qclf.features, qclf.weights):
        if f.name in pinned:
            tau -= int(w) * int(pinned[f.name])
            continue
        if f.role == "sensitive" and sensitive_kind is not None:
            variables.append(QuantifiedVariable(f.name, int(w), sensitive_kind))
        else:
            variables.append(QuantifiedVariable(
                f.name, int(w), _chance_quantifier(f.name, net, marginals)))
    reduced = condition(net, pinned) if pinned else net
    ci = order_for_bn(CorrelatedInstance(S3PInstance(variables, tau), reduced))
    sol = solve_correlated(ci)
    if stats_acc is not None:
        stats_acc.append(sol.stats)
    return sol.value, sol.choice_assignment


def group_ppv(qclf: QuantizedClassifier, net: BayesNet,
              marginals: Mapping[str, float],
              group: Mapping[str, int] | None = None,
              stats_acc: list | None = None) -> float:
    """Probability of positive prediction, conditioned on a compound group
    when one is given (sensitive bits hard-wired), unconditional otherwise
    (sensitive features treated as chance variables)."""
    value, _ = _solve_ppv(qclf, net, marginals, None, group, stats_acc)
    return value


def _sensitive_attributes(qclf: QuantizedClassifier):
    """Sensitive features grouped into attributes: standalone Booleans and
    exactly-one indicator families."""
    attrs: list[tuple[str, list]] = []
    seen_groups: set[str] = set()
    for f in qclf.sensitive_features():
        if f.group is None:
            attrs.append((f.name, [f]))
        elif f.group not in seen_groups:
            seen_groups.add(f.group)
            members = [g for g in qclf.sensitive_features() if g.group == f.group]
            attrs.append((f.group, members))
    return attrs


def enumerate_groups(qclf: QuantizedClassifier) -> list[dict[str, int]]:
    """All valid compound sensitive groups: binary attributes take 0/1,
    one-hot attributes take exactly one indicator per attribute."""
    attrs = _sensitive_attributes(qclf)
    if not attrs:
        raise InputError("classifier has no sensitive features")
    options = []
    for _, members in attrs:
        if len(members) == 1 and members[0].group is None:
            options.append([{members[0].name: 0}, {members[0].name: 1}])
        else:
            opts = []
            for chosen in members:
                opts.append({m.name: int(m.name == chosen.name) for m in members})
            options.append(opts)
    out = []
    for combo in itertools.product(*options):
        merged: dict[str, int] = {}
        for part in combo:
            merged.update(part)
        out.append(merged)
    return out


def _group_key(group: Mapping[str, int]) -> tuple:
    return tuple(group[name] for name in sorted(group))


def max_min_ppv(qclf: QuantizedClassifier, net: BayesNet,
                marginals: Mapping[str, float], *, mode: str = "auto",
                stats_acc: list | None = None) -> tuple[GroupResult, GroupResult]:
    """Most and least favored compound groups with their PPVs.

    ``quantifier`` mode solves twice with exists/forall on the sensitive
    features (valid when every sensitive attribute is a single Boolean);
    ``enumerate`` mode solves once per valid compound group with the
    sensitive bits hard-wired.  ``auto`` picks quantifier when possible.
    """
    attrs = _sensitive_attributes(qclf)
    if not attrs:
        raise InputError("classifier has no sensitive features")
    all_binary = all(len(m) == 1 and m[0].group is None for _, m in attrs)
    if mode == "auto":
        mode = "quantifier" if all_binary else "enumerate"
    if mode == "quantifier":
        if not all_binary:
            raise InputError(
                "quantifier mode needs all-binary sensitive attributes; "
                "one-hot attributes require enumerate mode")
        sens_names = [f.name for f in qclf.sensitive_features()]
        vmax, amax = _solve_ppv(qclf, net, marginals, EXISTS, None, stats_acc)
        vmin, amin = _solve_ppv(qclf, net, marginals, FORALL, None, stats_acc)
        return (GroupResult({n: amax[n] for n in sens_names}, vmax),
                GroupResult({n: amin[n] for n in sens_names}, vmin))
    if mode != "enumerate":
        raise InputError(f"unknown mode {mode!r}")
    results = []
    for group in enumerate_groups(qclf):
        ppv = group_ppv(qclf, net, marginals, group, stats_acc)
        results.append(GroupResult(group, ppv))
    best = max(results, key=lambda r: (r.ppv, [-x for x in _group_key(r.group)]))
    worst = min(results, key=lambda r: (r.ppv, _group_key(r.group)))
    return best, worst


def disparate_impact(max_group: GroupResult, min_group: GroupResult) -> float:
    """min/max PPV ratio; the all-zero degenerate case counts as fair (1)."""
    if max_group.ppv == 0.0:
        return 1.0
    return min_group.ppv / max_group.ppv


def statistical_parity(max_group: GroupResult, min_group: GroupResult) -> float:
    return max_group.ppv - min_group.ppv


def equalized_odds(qclf: QuantizedClassifier, bool_data: pd.DataFrame,
                   label: str, *, dag: Dag | None = None,
                   smoothing: float = 0.0, mode: str = "auto",
                   stats_acc: list | None = None) -> float | None:
    """Largest PPV gap across the two ground-truth label slices.

    Marginals, and network parameters on the fixed structure, are refit
    per slice.  Returns None (with a warning) when a slice is empty.
    """
    if label not in bool_data.columns:
        raise InputError(f"dataset is missing label column {label!r}")
    chance = [f.name for f in qclf.features if f.role != "sensitive"]
    sens = [f.name for f in qclf.features if f.role == "sensitive"]
    gaps = []
    for y in (0, 1):
        part = bool_data[bool_data[label] == y]
        if part.empty:
            # single-label data collapses EO to the other slice's gap
            warnings.warn(f"label slice y={y} is empty; skipping it for "
                          "equalized odds", stacklevel=2)
            continue
        marginals = estimate_marginals(part, chance + sens)
        net = fit_mle(dag, part, smoothing) if dag is not None else EMPTY_NET
        mx, mn = max_min_ppv(qclf, net, marginals, mode=mode, stats_acc=stats_acc)
        gaps.append(mx.ppv - mn.ppv)
    if not gaps:
        warnings.warn("no labeled rows; equalized odds unavailable", stacklevel=2)
        return None
    return max(gaps)


def _refit_mediators(net: BayesNet, marginals: Mapping[str, float],
                     mediator_bits: list[str], slice_data: pd.DataFrame,
                     sensitive_names: set[str], smoothing: float):
    """Mediator bits follow their law in the favored-group slice: edges
    from sensitive features into them are severed, remaining rows refit
    on the slice, out-of-network bits get slice marginals."""
    new_marginals = dict(marginals)
    severed = {(p, c) for p, c in net.dag.edges
               if c in mediator_bits and p in sensitive_names}
    if net.is_empty() or (not severed and not (set(mediator_bits) & net.dag.nodes)):
        new_net = net
    else:
        dag = Dag(net.dag.nodes, net.dag.edges - severed, net.dag.choice_vars)
        cpts = dict(net.cpts)
        for bit in mediator_bits:
            if bit in net.dag.nodes:
                cpts[bit], _ = fit_cpt(slice_data, bit, dag.parents(bit), smoothing)
        new_net = BayesNet(dag, cpts)
    for bit in mediator_bits:
        if bit not in new_net.dag.nodes:
            new_marginals[bit] = float(slice_data[bit].mean())
    return new_net, new_marginals


def path_specific_causal_fairness(qclf: QuantizedClassifier,
                                  bool_data: pd.DataFrame,
                                  mediators: Iterable[str], *,
                                  dag: Dag | None = None,
                                  smoothing: float = 0.0, mode: str = "auto",
                                  stats_acc: list | None = None) -> float:
    """PPV gap when mediator features follow their distribution conditioned
    on the most favored group."""
    mediators = set(mediators)
    sources = {f.source: f.role for f in qclf.features}
    unknown = sorted(m for m in mediators if m not in sources)
    if unknown:
        raise InputError(f"unknown mediator features: {unknown}")
    sensitive_src = sorted(m for m in mediators if sources[m] == "sensitive")
    if sensitive_src:
        raise InputError(f"mediators must be nonsensitive, got: {sensitive_src}")

    chance = [f.name for f in qclf.features if f.role != "sensitive"]
    sens = [f.name for f in qclf.features if f.role == "sensitive"]
    marginals = estimate_marginals(bool_data, chance + sens)
    net = fit_mle(dag, bool_data, smoothing) if dag is not None else EMPTY_NET
    mx, mn = max_min_ppv(qclf, net, marginals, mode=mode, stats_acc=stats_acc)
    if not mediators:
        return mx.ppv - mn.ppv

    mask = pd.Series(True, index=bool_data.index)
    for name, value in mx.group.items():
        mask &= bool_data[name] == value
    slice_data = bool_data[mask]
    if slice_data.empty:
        raise InputError(
            f"no rows match the most favored group {mx.group}; "
            "use smoothing or different mediators")
    mediator_bits = [f.name for f in qclf.features if f.source in mediators]
    new_net, new_marginals = _refit_mediators(
        net, marginals, mediator_bits, slice_data, set(sens), smoothing)
    mx2, mn2 = max_min_ppv(qclf, new_net, new_marginals, mode=mode,
                           stats_acc=stats_acc)
    return mx2.ppv - mn2.ppv


def verify_epsilon(report: FairnessReport, metric: str, epsilon: float) -> bool:
    """Disparate impact passes when di >= 1 - epsilon; the difference
    metrics pass when value <= epsilon."""
    if not (0.0 <= epsilon <= 1.0):
        raise InputError("epsilon must be in [0, 1]")
    if metric not in ("di", "sp", "eo", "pcf"):
        raise InputError(f"unknown metric {metric!r}")
    value = report.metric(metric)
    if value is None:
        raise InputError(f"metric {metric!r} is absent from the report")
    if metric == "di":
        return value >= 1.0 - epsilon
    return value <= epsilon


def combine_stats(stats_acc: list) -> SolveStats:
    return SolveStats(sum(s.memo_entries for s in stats_acc),
                      sum(s.dp_calls for s in stats_acc))
