import itertools
import random

import numpy as np
import pandas as pd
import pytest

from conftest import example3_net

from fvgm.bayesnet import EMPTY_NET, BayesNet, Cpt, Dag
from fvgm.classifier import BoolFeature, QuantizedClassifier
from fvgm.errors import InputError
from fvgm.metrics import (FairnessReport, GroupResult, disparate_impact,
                          enumerate_groups, equalized_odds, estimate_marginals,
                          group_ppv, max_min_ppv, path_specific_causal_fairness,
                          statistical_parity, verify_epsilon)
from fvgm.synthbench import joint_enumeration_oracle

TOL = 1e-9


def example2_qclf():
    return QuantizedClassifier(
        features=(BoolFeature("P", "P", "sensitive"),
                  BoolFeature("Q", "Q", "nonsensitive"),
                  BoolFeature("R", "R", "nonsensitive"),
                  BoolFeature("S", "S", "nonsensitive")),
        weights=(1, 1, 1, -1), threshold=2, multiplier=1, bins={})


EX2_MARGINALS = {"Q": 0.4, "R": 0.5, "S": 0.3, "P": 0.5}


class TestMaxMinPpv:
    def test_example_independent(self):
        mx, mn = max_min_ppv(example2_qclf(), EMPTY_NET, EX2_MARGINALS)
        assert mx.ppv == pytest.approx(0.55, abs=TOL)
        assert mx.group == {"P": 1}
        assert mn.ppv == pytest.approx(0.14, abs=TOL)
        assert mn.group == {"P": 0}

    def test_example_correlated(self):
        mx, mn = max_min_ppv(example2_qclf(), example3_net(), EX2_MARGINALS)
        assert mx.ppv == pytest.approx(0.65, abs=TOL)
        assert mx.group == {"P": 1}
        assert mn.ppv == pytest.approx(0.105, abs=TOL)
        assert mn.group == {"P": 0}

    def test_modes_agree(self):
        for net in (EMPTY_NET, example3_net()):
            q = max_min_ppv(example2_qclf(), net, EX2_MARGINALS, mode="quantifier")
            e = max_min_ppv(example2_qclf(), net, EX2_MARGINALS, mode="enumerate")
            assert q[0].ppv == pytest.approx(e[0].ppv, abs=TOL)
            assert q[1].ppv == pytest.approx(e[1].ppv, abs=TOL)
            assert q[0].group == e[0].group

    def test_classifier_ignoring_sensitive_is_symmetric(self):
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive")),
            weights=(0, 2), threshold=1, multiplier=1, bins={})
        mx, mn = max_min_ppv(qclf, EMPTY_NET, {"x": 0.7, "A": 0.5})
        assert mx.ppv == pytest.approx(mn.ppv, abs=TOL)

    def test_no_sensitive_features_rejected(self):
        qclf = QuantizedClassifier(
            features=(BoolFeature("x", "x", "nonsensitive"),),
            weights=(1,), threshold=1, multiplier=1, bins={})
        with pytest.raises(InputError, match="sensitive"):
            max_min_ppv(qclf, EMPTY_NET, {"x": 0.5})

    def test_missing_marginal_rejected(self):
        with pytest.raises(InputError, match="marginal"):
            max_min_ppv(example2_qclf(), EMPTY_NET, {"Q": 0.4})


class TestMultiCategoryGroups:
    def qclf(self):
        return QuantizedClassifier(
            features=(BoolFeature("race=0", "race", "sensitive", group="race", value=0),
                      BoolFeature("race=1", "race", "sensitive", group="race", value=1),
                      BoolFeature("race=2", "race", "sensitive", group="race", value=2),
                      BoolFeature("sex", "sex", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive")),
            weights=(0, 2, 4, 1, 3), threshold=4, multiplier=1, bins={})

    def test_group_enumeration_size(self):
        groups = enumerate_groups(self.qclf())
        assert len(groups) == 6
        for g in groups:
            assert sum(g[f"race={i}"] for i in range(3)) == 1

    def test_argmax_matches_per_group_oracle(self):
        qclf = self.qclf()
        marginals = {"x": 0.25}
        mx, mn = max_min_ppv(qclf, EMPTY_NET, marginals)
        oracle = {}
        for g in enumerate_groups(qclf):
            oracle[tuple(sorted(g.items()))] = joint_enumeration_oracle(
                qclf, EMPTY_NET, {**marginals, "sex": 0.5,
                                  "race=0": 1 / 3, "race=1": 1 / 3, "race=2": 1 / 3},
                fixed=g)
        assert mx.ppv == pytest.approx(max(oracle.values()), abs=TOL)
        assert mn.ppv == pytest.approx(min(oracle.values()), abs=TOL)
        assert oracle[tuple(sorted(mx.group.items()))] == pytest.approx(mx.ppv, abs=TOL)

    def test_quantifier_mode_rejected_for_one_hot(self):
        with pytest.raises(InputError, match="one-hot"):
            max_min_ppv(self.qclf(), EMPTY_NET, {"x": 0.25}, mode="quantifier")

    def test_tie_breaks_to_lexicographically_smallest(self):
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("B", "B", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive")),
            weights=(0, 0, 1), threshold=1, multiplier=1, bins={})
        mx, mn = max_min_ppv(qclf, EMPTY_NET, {"x": 0.5}, mode="enumerate")
        assert mx.group == {"A": 0, "B": 0}
        assert mn.group == {"A": 0, "B": 0}


class TestRatioAndDifference:
    def test_example_values(self):
        mx = GroupResult({"P": 1}, 0.55)
        mn = GroupResult({"P": 0}, 0.14)
        assert disparate_impact(mx, mn) == pytest.approx(0.14 / 0.55)
        assert statistical_parity(mx, mn) == pytest.approx(0.41)

    def test_equal_groups(self):
        g = GroupResult({"P": 1}, 0.3)
        assert disparate_impact(g, g) == 1.0
        assert statistical_parity(g, g) == 0.0

    def test_degenerate_zero_max(self):
        z = GroupResult({"P": 0}, 0.0)
        assert disparate_impact(z, z) == 1.0

    def test_sp_nonnegative_random(self):
        rng = random.Random(13)
        for _ in range(25):
            marg = {"Q": rng.random(), "R": rng.random(), "S": rng.random(),
                    "P": 0.5}
            mx, mn = max_min_ppv(example2_qclf(), EMPTY_NET, marg)
            assert statistical_parity(mx, mn) >= 0.0
            assert 0.0 <= disparate_impact(mx, mn) <= 1.0 + TOL


class TestEqualizedOdds:
    def qclf(self):
        return QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(1, 2, -1), threshold=2, multiplier=1, bins={})

    def test_sensitive_independent_classifier_is_zero(self):
        rng = np.random.default_rng(17)
        n = 600
        data = pd.DataFrame({"A": rng.integers(0, 2, n),
                             "x": rng.integers(0, 2, n),
                             "z": rng.integers(0, 2, n),
                             "y": rng.integers(0, 2, n)})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(0, 2, -1), threshold=1, multiplier=1, bins={})
        assert equalized_odds(qclf, data, "y") == pytest.approx(0.0, abs=TOL)

    def test_single_label_collapses_to_slice_sp(self):
        rng = np.random.default_rng(18)
        n = 300
        data = pd.DataFrame({"A": rng.integers(0, 2, n),
                             "x": rng.integers(0, 2, n),
                             "z": rng.integers(0, 2, n),
                             "y": np.ones(n, dtype=int)})
        qclf = self.qclf()
        with pytest.warns(UserWarning, match="empty"):
            eo = equalized_odds(qclf, data, "y")
        marginals = estimate_marginals(data, ["A", "x", "z"])
        mx, mn = max_min_ppv(qclf, EMPTY_NET, marginals)
        assert eo == pytest.approx(mx.ppv - mn.ppv, abs=TOL)

    def test_matches_hand_enumeration_per_slice(self):
        data = pd.DataFrame({
            "A": [0, 0, 1, 1, 0, 1, 1, 0],
            "x": [1, 0, 1, 1, 0, 0, 1, 1],
            "z": [0, 1, 1, 0, 0, 0, 1, 1],
            "y": [0, 0, 0, 0, 1, 1, 1, 1],
        })
        qclf = self.qclf()
        gaps = []
        for y in (0, 1):
            part = data[data["y"] == y]
            marginals = {"x": part["x"].mean(), "z": part["z"].mean(), "A": 0.5}
            ppvs = [joint_enumeration_oracle(qclf, EMPTY_NET, marginals, {"A": a})
                    for a in (0, 1)]
            gaps.append(max(ppvs) - min(ppvs))
        assert equalized_odds(qclf, data, "y") == pytest.approx(max(gaps), abs=TOL)

    def test_missing_label_column(self):
        with pytest.raises(InputError, match="label"):
            equalized_odds(self.qclf(), pd.DataFrame({"A": [1]}), "y")


class TestPathSpecificCausalFairness:
    def test_empty_mediators_equal_sp(self):
        rng = np.random.default_rng(19)
        n = 500
        data = pd.DataFrame({"A": rng.integers(0, 2, n),
                             "x": rng.integers(0, 2, n),
                             "z": rng.integers(0, 2, n)})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("x", "x", "nonsensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(1, 2, -1), threshold=2, multiplier=1, bins={})
        marginals = estimate_marginals(data, ["A", "x", "z"])
        mx, mn = max_min_ppv(qclf, EMPTY_NET, marginals)
        pcf = path_specific_causal_fairness(qclf, data, [])
        assert pcf == mx.ppv - mn.ppv

    def test_mediator_determined_by_sensitive_gives_zero(self):
        # z copies A; classifier reads only z; conditioning both groups on
        # the favored group's mediator law removes the disparity entirely
        a = np.array([0, 1] * 100)
        data = pd.DataFrame({"A": a, "z": a.copy()})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(0, 1), threshold=1, multiplier=1, bins={})
        dag = Dag({"A", "z"}, {("A", "z")}, choice_vars={"A"})
        sp = path_specific_causal_fairness(qclf, data, [], dag=dag)
        assert sp == pytest.approx(1.0, abs=TOL)
        pcf = path_specific_causal_fairness(qclf, data, ["z"], dag=dag)
        assert pcf == pytest.approx(0.0, abs=TOL)

    def test_crafted_instance_matches_oracle(self):
        rng = np.random.default_rng(20)
        n = 2000
        a = rng.integers(0, 2, n)
        z = (a ^ (rng.random(n) < 0.25)).astype(int)  # mediator leans on A
        x = rng.integers(0, 2, n)
        data = pd.DataFrame({"A": a, "z": z, "x": x})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("z", "z", "nonsensitive"),
                      BoolFeature("x", "x", "nonsensitive")),
            weights=(1, 2, 1), threshold=3, multiplier=1, bins={})
        dag = Dag({"A", "z", "x"}, {("A", "z")}, choice_vars={"A"})
        pcf = path_specific_causal_fairness(qclf, data, ["z"], dag=dag)

        # oracle: z becomes independent with its law on the favored slice
        marginals = estimate_marginals(data, ["A", "x"])
        slice_z = float(data[data["A"] == 1]["z"].mean())
        ppvs = [joint_enumeration_oracle(
                    qclf, EMPTY_NET, {**marginals, "z": slice_z}, {"A": v})
                for v in (0, 1)]
        assert pcf == pytest.approx(max(ppvs) - min(ppvs), abs=TOL)

    def test_unmatched_group_raises(self):
        data = pd.DataFrame({"A": [0, 0], "z": [1, 0]})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(2, 1), threshold=2, multiplier=1, bins={})
        with pytest.raises(InputError, match="smoothing"):
            path_specific_causal_fairness(qclf, data, ["z"])

    def test_sensitive_mediator_rejected(self):
        data = pd.DataFrame({"A": [0, 1], "z": [1, 0]})
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("z", "z", "nonsensitive")),
            weights=(1, 1), threshold=1, multiplier=1, bins={})
        with pytest.raises(InputError, match="nonsensitive"):
            path_specific_causal_fairness(qclf, data, ["A"])


class TestVerifyEpsilon:
    def report(self, **kw):
        base = dict(max_group=GroupResult({"P": 1}, 0.55),
                    min_group=GroupResult({"P": 0}, 0.14),
                    di=0.25, sp=0.41, eo=None, pcf=None)
        base.update(kw)
        return FairnessReport(**base)

    def test_di_rule(self):
        assert verify_epsilon(self.report(di=0.25), "di", 0.8) is True
        assert verify_epsilon(self.report(di=0.25), "di", 0.5) is False

    def test_sp_rule(self):
        assert verify_epsilon(self.report(sp=0.41), "sp", 0.4) is False
        assert verify_epsilon(self.report(sp=0.41), "sp", 0.5) is True

    def test_epsilon_one_accepts_everything(self):
        rep = self.report(di=0.0, sp=1.0, eo=1.0, pcf=1.0)
        for metric in ("di", "sp", "eo", "pcf"):
            assert verify_epsilon(rep, metric, 1.0) is True

    def test_grid(self):
        rep = self.report(di=0.5, sp=0.25, eo=0.25, pcf=0.0)
        for eps in (0.0, 0.25, 0.5, 1.0):
            assert verify_epsilon(rep, "di", eps) is (rep.di >= 1 - eps)
            assert verify_epsilon(rep, "sp", eps) is (rep.sp <= eps)

    def test_absent_metric_raises(self):
        with pytest.raises(InputError, match="absent"):
            verify_epsilon(self.report(eo=None), "eo", 0.5)

    def test_bad_epsilon(self):
        with pytest.raises(InputError):
            verify_epsilon(self.report(), "di", 1.5)


class TestFeatureOrderInvariance:
    def test_permuting_features_leaves_metrics_unchanged(self):
        rng = random.Random(23)
        base = example2_qclf()
        ref = max_min_ppv(base, example3_net(), EX2_MARGINALS)
        order = list(range(4))
        for _ in range(6):
            rng.shuffle(order)
            qclf = QuantizedClassifier(
                features=tuple(base.features[i] for i in order),
                weights=tuple(base.weights[i] for i in order),
                threshold=2, multiplier=1, bins={})
            mx, mn = max_min_ppv(qclf, example3_net(), EX2_MARGINALS)
            assert mx.ppv == pytest.approx(ref[0].ppv, abs=TOL)
            assert mn.ppv == pytest.approx(ref[1].ppv, abs=TOL)


class TestOracleAgreement:
    def test_random_instances_match_joint_enumeration(self):
        rng = random.Random(24)
        for _ in range(30):
            n_chance = rng.randint(1, 8)
            feats = [BoolFeature("A", "A", "sensitive")]
            weights = [rng.randint(-10, 10)]
            marginals = {"A": 0.5}
            for i in range(n_chance):
                feats.append(BoolFeature(f"x{i}", f"x{i}", "nonsensitive"))
                weights.append(rng.randint(-10, 10))
                marginals[f"x{i}"] = round(rng.random(), 5)
            qclf = QuantizedClassifier(tuple(feats), tuple(weights),
                                       rng.randint(-15, 15), 1, {})
            mx, mn = max_min_ppv(qclf, EMPTY_NET, marginals)
            ppvs = [joint_enumeration_oracle(qclf, EMPTY_NET, marginals, {"A": a})
                    for a in (0, 1)]
            assert mx.ppv == pytest.approx(max(ppvs), abs=TOL)
            assert mn.ppv == pytest.approx(min(ppvs), abs=TOL)
