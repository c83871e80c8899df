"""Bayesian networks over Boolean features.

Networks are DAGs with one conditional probability table per node.  Choice
(sensitive) variables may parent chance variables but never receive an
incoming edge, so conditioning on them is a pure table reduction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import InputError, ResourceLimitError, StructureError

MARGINAL_ENUM_MAX_VARS = 22


@dataclass(frozen=True)
class Dag:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    choice_vars: frozenset[str] = frozenset()

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]],
                 choice_vars: Iterable[str] = ()):
        nodes = frozenset(nodes)
        edges = frozenset((str(p), str(c)) for p, c in edges)
        choice_vars = frozenset(choice_vars)
        for p, c in edges:
            if p not in nodes or c not in nodes:
                raise StructureError(f"edge ({p}, {c}) has an endpoint outside nodes")
            if c in choice_vars:
                raise StructureError(f"edge ({p}, {c}) enters choice variable {c!r}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "choice_vars", choice_vars)
        _topo_sort(self)  # raises on cycles

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, c in self.edges if c == node))

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(c for p, c in self.edges if p == node))


@dataclass(frozen=True)
class Cpt:
    child: str
    parents: tuple[str, ...]
    table: dict[tuple[int, ...], float]

    def __post_init__(self):
        expected = 2 ** len(self.parents)
        if len(self.table) != expected:
            raise InputError(
                f"cpt of {self.child!r} has {len(self.table)} rows, needs {expected}")
        for key, p in self.table.items():
            if len(key) != len(self.parents):
                raise InputError(f"cpt row {key} of {self.child!r} has wrong arity")
            if not (0.0 <= p <= 1.0):
                raise InputError(f"cpt row {key} of {self.child!r} is not a probability: {p}")


@dataclass(frozen=True)
class FitReport:
    """Rows that had no observations and fell back to 0.5."""
    unseen_rows: tuple[tuple[str, tuple[int, ...]], ...] = ()


@dataclass(frozen=True)
class BayesNet:
    dag: Dag
    cpts: dict[str, Cpt]
    fit_report: FitReport | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if set(self.cpts) != set(self.dag.nodes):
            raise InputError("cpts must cover exactly the dag nodes")
        for name, cpt in self.cpts.items():
            if cpt.child != name:
                raise InputError(f"cpt keyed {name!r} describes {cpt.child!r}")
            if cpt.parents != self.dag.parents(name):
                raise InputError(
                    f"cpt parents of {name!r} disagree with dag: "
                    f"{cpt.parents} vs {self.dag.parents(name)}")

    @property
    def nodes(self) -> frozenset[str]:
        return self.dag.nodes

    def is_empty(self) -> bool:
        return not self.dag.nodes


def _topo_sort(dag: Dag) -> list[str]:
    indeg = {n: 0 for n in dag.nodes}
    for _, c in dag.edges:
        indeg[c] += 1
    ready = sorted(n for n, d in indeg.items() if d == 0)
    order: list[str] = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        changed = False
        for c in dag.children(n):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    if len(order) < len(dag.nodes):
        stuck = sorted(n for n in dag.nodes if n not in order)
        edge = next((p, c) for p, c in sorted(dag.edges) if p in stuck and c in stuck)
        raise StructureError(f"cycle detected through edge {edge}")
    return order


def topo_sort(net: BayesNet | Dag) -> list[str]:
    """Parents before children, ties broken by name order."""
    dag = net if isinstance(net, Dag) else net.dag
    return _topo_sort(dag)


EMPTY_NET = BayesNet(Dag((), ()), {})


def _validate_columns(data: pd.DataFrame, needed: Iterable[str]) -> None:
    missing = sorted(set(needed) - set(data.columns))
    if missing:
        raise InputError(f"dataset is missing columns: {missing}")


def _bool_column(data: pd.DataFrame, name: str) -> np.ndarray:
    col = data[name].to_numpy()
    arr = col.astype(np.int8, copy=False)
    if not np.isin(arr, (0, 1)).all():
        raise InputError(f"column {name!r} is not Boolean 0/1")
    return arr


def fit_cpt(data: pd.DataFrame, child: str, parents: tuple[str, ...],
            smoothing: float = 0.0) -> tuple[Cpt, list[tuple[int, ...]]]:
    """One node's maximum-likelihood table plus its unobserved rows."""
    _validate_columns(data, (child, *parents))
    child_col = _bool_column(data, child)
    code = np.zeros(len(data), dtype=np.int64)
    for j, p in enumerate(parents):
        code |= _bool_column(data, p).astype(np.int64) << j
    n_rows = 2 ** len(parents)
    total = np.bincount(code, minlength=n_rows).astype(np.float64)
    ones = np.bincount(code, weights=child_col, minlength=n_rows)
    table = {}
    unseen = []
    for u in range(n_rows):
        key = tuple((u >> j) & 1 for j in range(len(parents)))
        denom = total[u] + 2 * smoothing
        if denom == 0:
            table[key] = 0.5
            unseen.append(key)
        else:
            table[key] = (ones[u] + smoothing) / denom
    return Cpt(child, parents, table), unseen


def fit_mle(dag: Dag, data: pd.DataFrame, smoothing: float = 0.0) -> BayesNet:
    """Maximum-likelihood tables with optional pseudo-count smoothing.

    Each row is (count(child=1, parents=u) + s) / (count(parents=u) + 2s).
    With zero smoothing an unobserved parent configuration falls back to
    0.5 and is listed in the returned network's fit report.
    """
    if smoothing < 0:
        raise InputError("smoothing must be >= 0")
    _validate_columns(data, dag.nodes)
    cpts = {}
    unseen = []
    for node in sorted(dag.nodes):
        cpt, missing = fit_cpt(data, node, dag.parents(node), smoothing)
        cpts[node] = cpt
        unseen.extend((node, key) for key in missing)
    return BayesNet(dag, cpts, fit_report=FitReport(tuple(unseen)))


def _k2_node_score(child: np.ndarray, parent_cols: list[np.ndarray]) -> float:
    """Log marginal likelihood of one node under a uniform Dirichlet prior."""
    code = np.zeros(child.shape[0], dtype=np.int64)
    for j, pc in enumerate(parent_cols):
        code |= pc.astype(np.int64) << j
    n_rows = 2 ** len(parent_cols)
    total = np.bincount(code, minlength=n_rows)
    ones = np.bincount(code, weights=child, minlength=n_rows)
    zeros = total - ones
    # unobserved rows contribute exactly 0
    return float(
        np.sum(_lgamma(ones + 1.0) + _lgamma(zeros + 1.0) - _lgamma(total + 2.0)))


_lgamma = np.vectorize(math.lgamma, otypes=[np.float64])


def learn_structure_k2(data: pd.DataFrame, choice_vars: Iterable[str],
                       max_parents: int, *, restarts: int = 0,
                       seed: int = 0, max_iters: int = 500) -> Dag:
    """Greedy hill-climbing over add/remove/reverse moves maximizing the
    Cooper-Herskovits score, rejecting moves that create a cycle, exceed
    ``max_parents`` or direct an edge into a choice variable.  Candidate
    moves are scanned in name order so a single run is deterministic."""
    if max_parents < 1:
        raise InputError("max_parents must be >= 1")
    choice_vars = frozenset(choice_vars)
    names = sorted(data.columns)
    unknown = sorted(choice_vars - set(names))
    if unknown:
        raise InputError(f"choice variables missing from dataset: {unknown}")
    cols = {n: _bool_column(data, n) for n in names}

    def climb(initial_edges: set[tuple[str, str]]) -> tuple[float, set[tuple[str, str]]]:
        edges = set(initial_edges)
        parents = {n: sorted(p for p, c in edges if c == n) for n in names}
        score = {n: _k2_node_score(cols[n], [cols[p] for p in parents[n]]) for n in names}

        def reachable(src: str, dst: str, skip: tuple[str, str] | None = None) -> bool:
            seen = {src}
            frontier = [src]
            while frontier:
                x = frontier.pop()
                if x == dst:
                    return True
                for p, c in edges:
                    if p == x and (p, c) != skip and c not in seen:
                        seen.add(c)
                        frontier.append(c)
            return False

        def rescored(node: str, new_parents: list[str]) -> float:
            return _k2_node_score(cols[node], [cols[p] for p in new_parents])

        for _ in range(max_iters):
            best = None  # (delta, move, payload)
            for u, v in itertools.permutations(names, 2):
                if (u, v) in edges:
                    trial = sorted(p for p in parents[v] if p != u)
                    delta = rescored(v, trial) - score[v]
                    if best is None or delta > best[0] + 1e-12:
                        best = (delta, ("remove", u, v), {v: trial})
                    if u not in choice_vars and len(parents[u]) < max_parents \
                            and not reachable(u, v, skip=(u, v)):
                        tu = sorted(parents[u] + [v])
                        tv = sorted(p for p in parents[v] if p != u)
                        delta = (rescored(u, tu) - score[u]) + (rescored(v, tv) - score[v])
                        if delta > best[0] + 1e-12:
                            best = (delta, ("reverse", u, v), {u: tu, v: tv})
                else:
                    if v in choice_vars or len(parents[v]) >= max_parents:
                        continue
                    if reachable(v, u):
                        continue
                    trial = sorted(parents[v] + [u])
                    delta = rescored(v, trial) - score[v]
                    if best is None or delta > best[0] + 1e-12:
                        best = (delta, ("add", u, v), {v: trial})
            if best is None or best[0] <= 1e-9:
                break
            _, (kind, u, v), payload = best
            if kind == "add":
                edges.add((u, v))
            elif kind == "remove":
                edges.discard((u, v))
            else:
                edges.discard((u, v))
                edges.add((v, u))
            for node, ps in payload.items():
                parents[node] = ps
                score[node] = rescored(node, ps)
        return sum(score.values()), edges

    best_score, best_edges = climb(set())
    if restarts:
        rng = np.random.default_rng(seed)
        candidates = [(u, v) for u, v in itertools.permutations(names, 2)
                      if v not in choice_vars]
        for _ in range(restarts):
            order = {n: i for i, n in enumerate(rng.permutation(names))}
            init = set()
            n_parents: dict[str, int] = {}
            for u, v in candidates:
                if order[u] < order[v] and rng.random() < 0.2 \
                        and n_parents.get(v, 0) < max_parents:
                    init.add((u, v))
                    n_parents[v] = n_parents.get(v, 0) + 1
            s, e = climb(init)
            if s > best_score + 1e-9:
                best_score, best_edges = s, e
    return Dag(names, best_edges, choice_vars)


def conditional(net: BayesNet, child: str, parent_assignment) -> float:
    """Table lookup Pr[child=1 | parents=u]; u may be a dict or a tuple."""
    if child not in net.cpts:
        raise InputError(f"unknown network node: {child!r}")
    cpt = net.cpts[child]
    if isinstance(parent_assignment, Mapping):
        try:
            key = tuple(int(parent_assignment[p]) for p in cpt.parents)
        except KeyError as e:
            raise InputError(f"missing parent assignment for {e.args[0]!r}") from None
    else:
        key = tuple(int(b) for b in parent_assignment)
    if key not in cpt.table:
        raise InputError(f"bad parent assignment {key} for {child!r}")
    return cpt.table[key]


def joint_prob(net: BayesNet, assignment: Mapping[str, int],
               marginals: Mapping[str, float] | None = None) -> float:
    """Product-form probability of a full assignment: network factors for
    net nodes times independent marginals for every other queried variable."""
    prob = 1.0
    for node in net.dag.nodes:
        if node not in assignment:
            raise InputError(f"assignment is missing network node {node!r}")
        p = conditional(net, node, assignment)
        prob *= p if assignment[node] == 1 else 1.0 - p
    for name, p in (marginals or {}).items():
        if name in net.dag.nodes:
            continue
        if name not in assignment:
            raise InputError(f"assignment is missing variable {name!r}")
        prob *= p if assignment[name] == 1 else 1.0 - p
    return prob


def ancestors(net: BayesNet, node: str) -> set[str]:
    out: set[str] = set()
    frontier = [node]
    while frontier:
        x = frontier.pop()
        for p in net.dag.parents(x):
            if p not in out:
                out.add(p)
                frontier.append(p)
    return out


def node_marginal(net: BayesNet, node: str) -> float:
    """Exact Pr[node=1] by enumerating the ancestral closure."""
    closure = sorted(ancestors(net, node) | {node})
    if len(closure) > MARGINAL_ENUM_MAX_VARS:
        raise ResourceLimitError(
            f"marginal of {node!r} needs enumeration over {len(closure)} ancestors "
            f"(cap {MARGINAL_ENUM_MAX_VARS})")
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(closure)):
        assign = dict(zip(closure, bits))
        if assign[node] != 1:
            continue
        prob = 1.0
        for x in closure:
            p = conditional(net, x, assign)
            prob *= p if assign[x] == 1 else 1.0 - p
        total += prob
    return total


def condition(net: BayesNet, pinned: Mapping[str, int]) -> BayesNet:
    """Reduce the network by fixing parentless nodes to given values.

    Pinned nodes are removed; each child's table keeps only the rows
    matching the pinned parent values.  Only valid for nodes without
    parents (the choice variables), where no renormalization is needed.
    """
    pinned = {k: int(v) for k, v in pinned.items() if k in net.dag.nodes}
    if not pinned:
        return net
    for name in pinned:
        if net.dag.parents(name):
            raise InputError(f"cannot condition on {name!r}: it has parents")
    keep = [n for n in sorted(net.dag.nodes) if n not in pinned]
    edges = [(p, c) for p, c in net.dag.edges if p not in pinned and c not in pinned]
    dag = Dag(keep, edges, net.dag.choice_vars & set(keep))
    cpts = {}
    for node in keep:
        old = net.cpts[node]
        new_parents = tuple(p for p in old.parents if p not in pinned)
        table = {}
        for key, p in old.table.items():
            full = dict(zip(old.parents, key))
            if all(full[q] == pinned[q] for q in old.parents if q in pinned):
                table[tuple(full[q] for q in new_parents)] = p
        cpts[node] = Cpt(node, new_parents, table)
    return BayesNet(dag, cpts)


def to_dict(net: BayesNet) -> dict:
    cpts = {}
    for node in sorted(net.dag.nodes):
        cpt = net.cpts[node]
        table = {"".join(str(b) for b in key): cpt.table[key]
                 for key in sorted(cpt.table)}
        cpts[node] = {"parents": list(cpt.parents), "table": table}
    return {
        "nodes": sorted(net.dag.nodes),
        "edges": sorted([list(e) for e in net.dag.edges]),
        "cpts": cpts,
    }


def from_dict(d: Mapping, choice_vars: Iterable[str] = ()) -> BayesNet:
    try:
        nodes = list(d["nodes"])
        edges = [tuple(e) for e in d["edges"]]
        raw = d["cpts"]
    except KeyError as e:
        raise InputError(f"network file is missing key {e.args[0]!r}") from None
    dag = Dag(nodes, edges, frozenset(choice_vars) & set(nodes))
    cpts = {}
    for node in nodes:
        if node not in raw:
            raise InputError(f"network file has no cpt for node {node!r}")
        spec = raw[node]
        listed = tuple(spec["parents"])
        canonical = dag.parents(node)
        if sorted(listed) != sorted(canonical):
            raise InputError(
                f"cpt parents of {node!r} disagree with edges: {listed} vs {canonical}")
        perm = [listed.index(p) for p in canonical]
        table = {}
        for bits, p in spec["table"].items():
            if len(bits) != len(listed) or any(ch not in "01" for ch in bits):
                raise InputError(f"bad cpt row key {bits!r} for node {node!r}")
            key = tuple(int(bits[j]) for j in perm)
            table[key] = float(p)
        cpts[node] = Cpt(node, canonical, table)
    return BayesNet(dag, cpts)


def save(net: BayesNet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path, choice_vars: Iterable[str] = ()) -> BayesNet:
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh), choice_vars)
