"""Shared test utilities: random instance generators and independent oracles."""

from __future__ import annotations

import random

from fvgm.bayesnet import BayesNet, Cpt, Dag
from fvgm.s3p import EXISTS, FORALL, QuantifiedVariable, S3PInstance, random_q


def random_instance(rng: random.Random, max_vars: int = 15,
                    weight_range: tuple[int, int] = (-20, 20),
                    tau_range: tuple[int, int] = (-40, 40),
                    choice_share: float = 0.4) -> S3PInstance:
    n = rng.randint(1, max_vars)
    variables = []
    for i in range(n):
        w = rng.randint(*weight_range)
        roll = rng.random()
        if roll < choice_share / 2:
            q = EXISTS
        elif roll < choice_share:
            q = FORALL
        else:
            q = random_q(round(rng.random(), 6))
        variables.append(QuantifiedVariable(f"v{i}", w, q))
    return S3PInstance(variables, rng.randint(*tau_range))


def random_correlated(rng: random.Random, max_vars: int = 12,
                      max_net: int = 6, weight_range=(-12, 12),
                      tau_range=(-25, 25)):
    """Random instance plus a random network over a subset of its variables.

    Choice variables may enter the network only as roots."""
    inst = random_instance(rng, max_vars, weight_range, tau_range)
    names = [v.name for v in inst.variables]
    by_name = {v.name: v for v in inst.variables}
    k = rng.randint(0, min(max_net, len(names)))
    nodes = rng.sample(names, k)
    order = sorted(nodes, key=lambda n: (not by_name[n].quantifier.is_choice, n))
    edges = []
    for j, child in enumerate(order):
        if by_name[child].quantifier.is_choice:
            continue
        for parent in order[:j]:
            if rng.random() < 0.4:
                edges.append((parent, child))
    choice_nodes = {n for n in nodes if by_name[n].quantifier.is_choice}
    dag = Dag(nodes, edges, choice_nodes)
    cpts = {}
    for node in nodes:
        parents = dag.parents(node)
        table = {}
        for u in range(2 ** len(parents)):
            key = tuple((u >> b) & 1 for b in range(len(parents)))
            table[key] = round(rng.random(), 6)
        cpts[node] = Cpt(node, parents, table)
    return inst, BayesNet(dag, cpts)


def enumerate_correlated(inst: S3PInstance, net: BayesNet) -> float:
    """Full-assignment enumeration oracle honoring the network factors.

    Recursion mirrors the quantifier semantics directly: max over exists,
    min over forall, expectation over random with Pr[b=1 | parents] from
    the network for its nodes.  No memoization, no pruning.
    """
    variables = inst.variables
    in_net = net.dag.nodes

    def rec(i: int, total: int, assign: dict[str, int]) -> float:
        if i == len(variables):
            return 1.0 if total >= inst.threshold else 0.0
        v = variables[i]

        def branch(b: int) -> float:
            assign[v.name] = b
            try:
                return rec(i + 1, total + b * v.weight, assign)
            finally:
                del assign[v.name]

        if v.quantifier.kind == "exists":
            return max(branch(1), branch(0))
        if v.quantifier.kind == "forall":
            return min(branch(1), branch(0))
        if v.name in in_net:
            cpt = net.cpts[v.name]
            p = cpt.table[tuple(assign[q] for q in cpt.parents)]
        else:
            p = v.quantifier.p
        return p * branch(1) + (1.0 - p) * branch(0)

    return rec(0, 0, {})
