import numpy as np
import pytest

from fvgm.bayesnet import EMPTY_NET, BayesNet, Cpt, Dag, node_marginal
from fvgm.classifier import BoolFeature, QuantizedClassifier
from fvgm.errors import InputError
from fvgm.fif import ablate_distribution, fif, fif_all, results_to_csv
from fvgm.metrics import group_ppv
from fvgm.synthbench import joint_enumeration_oracle

TOL = 1e-9


def simple_qclf():
    return QuantizedClassifier(
        features=(BoolFeature("A", "A", "sensitive"),
                  BoolFeature("u", "u", "nonsensitive"),
                  BoolFeature("v", "v", "nonsensitive")),
        weights=(1, 2, -1), threshold=2, multiplier=1, bins={})


def chained_net():
    """A -> u -> v with asymmetric tables."""
    return BayesNet(
        Dag({"A", "u", "v"}, {("A", "u"), ("u", "v")}, choice_vars={"A"}),
        {"A": Cpt("A", (), {(): 0.5}),
         "u": Cpt("u", ("A",), {(0,): 0.2, (1,): 0.8}),
         "v": Cpt("v", ("u",), {(0,): 0.7, (1,): 0.1})})


class TestAblation:
    def test_empty_subset_is_identity(self):
        net = chained_net()
        marg = {"A": 0.5}
        net2, marg2 = ablate_distribution(net, marg, [])
        assert net2 is net
        assert marg2 == marg

    def test_standalone_boolean_becomes_half(self):
        net2, marg2 = ablate_distribution(EMPTY_NET, {"u": 0.9}, ["u"])
        assert marg2["u"] == 0.5

    def test_indicator_family_becomes_uniform(self):
        groups = {"x": ["x=bin0", "x=bin1", "x=bin2", "x=bin3"]}
        _, marg2 = ablate_distribution(EMPTY_NET, {}, ["x"], groups=groups)
        assert all(marg2[f"x=bin{i}"] == 0.25 for i in range(4))

    def test_sensitive_feature_rejected(self):
        with pytest.raises(InputError, match="sensitive"):
            ablate_distribution(EMPTY_NET, {}, ["A"], sensitive={"A"})

    def test_node_removal_marginalizes_children(self):
        net = chained_net()
        pre_u = node_marginal(net, "u")
        net2, marg2 = ablate_distribution(net, {}, ["u"],
                                          sensitive={"A"})
        assert "u" not in net2.dag.nodes
        assert marg2["u"] == 0.5
        # v keeps its marginal law: averaged over u's pre-ablation marginal
        expected = pre_u * 0.1 + (1 - pre_u) * 0.7
        assert net2.cpts["v"].table[()] == pytest.approx(expected, abs=TOL)


class TestInfluence:
    def test_empty_subset_influence_zero(self):
        r = fif(simple_qclf(), EMPTY_NET, {"u": 0.3, "v": 0.6}, {"A": 1}, [])
        assert r.influence == 0.0

    def test_zero_weight_independent_feature_has_no_influence(self):
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("u", "u", "nonsensitive"),
                      BoolFeature("v", "v", "nonsensitive")),
            weights=(1, 2, 0), threshold=2, multiplier=1, bins={})
        r = fif(qclf, EMPTY_NET, {"u": 0.3, "v": 0.9}, {"A": 1}, ["v"])
        assert r.influence == pytest.approx(0.0, abs=TOL)

    def test_crafted_instance_matches_oracle_on_both_terms(self):
        qclf = simple_qclf()
        net = chained_net()
        marg = {}
        group = {"A": 1}
        r = fif(qclf, net, marg, group, ["u"])
        base_want = joint_enumeration_oracle(qclf, net, marg, fixed=group)
        pre_u = node_marginal(net, "u")
        ablated_net = BayesNet(
            Dag({"A", "v"}, set(), choice_vars={"A"}),
            {"A": Cpt("A", (), {(): 0.5}),
             "v": Cpt("v", (), {(): pre_u * 0.1 + (1 - pre_u) * 0.7})})
        abl_want = joint_enumeration_oracle(qclf, ablated_net,
                                            {"u": 0.5}, fixed=group)
        assert r.base_ppv == pytest.approx(base_want, abs=TOL)
        assert r.ablated_ppv == pytest.approx(abl_want, abs=TOL)

    def test_unconditional_group(self):
        qclf = simple_qclf()
        marg = {"A": 0.5, "u": 0.3, "v": 0.6}
        r = fif(qclf, EMPTY_NET, marg, None, ["u"])
        want = joint_enumeration_oracle(qclf, EMPTY_NET, marg)
        assert r.base_ppv == pytest.approx(want, abs=TOL)

    def test_repeated_runs_bit_identical(self):
        qclf = simple_qclf()
        net = chained_net()
        first = fif(qclf, net, {}, {"A": 1}, ["u", "v"])
        second = fif(qclf, net, {}, {"A": 1}, ["u", "v"])
        assert first == second

    def test_influence_bounded(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            marg = {"u": float(rng.random()), "v": float(rng.random())}
            r = fif(simple_qclf(), EMPTY_NET, marg, {"A": rng.integers(0, 2)},
                    ["u"])
            assert -1.0 <= r.influence <= 1.0
            assert 0.0 <= r.base_ppv <= 1.0
            assert 0.0 <= r.ablated_ppv <= 1.0

    def test_unknown_feature_rejected(self):
        with pytest.raises(InputError, match="unknown"):
            fif(simple_qclf(), EMPTY_NET, {"u": 0.5, "v": 0.5}, {"A": 1}, ["w"])


class TestSweep:
    def test_zero_weight_classifier_all_zero(self):
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("u", "u", "nonsensitive"),
                      BoolFeature("v", "v", "nonsensitive")),
            weights=(0, 0, 0), threshold=0, multiplier=1, bins={})
        base, results = fif_all(qclf, EMPTY_NET, {"u": 0.4, "v": 0.2}, {"A": 0})
        assert base == 1.0  # 0 >= 0
        assert all(r.influence == pytest.approx(0.0, abs=TOL) for r in results)

    def test_featureless_classifier_base_is_threshold_sign(self):
        pos = QuantizedClassifier((), (), 1, 1, {})
        neg = QuantizedClassifier((), (), 0, 1, {})
        assert group_ppv(pos, EMPTY_NET, {}, None) == 0.0
        assert group_ppv(neg, EMPTY_NET, {}, None) == 1.0
        base, results = fif_all(pos, EMPTY_NET, {}, None)
        assert base == 0.0 and results == []

    def test_influences_not_additive(self):
        # joint ablation differs from the sum of single ablations
        qclf = QuantizedClassifier(
            features=(BoolFeature("A", "A", "sensitive"),
                      BoolFeature("u", "u", "nonsensitive"),
                      BoolFeature("v", "v", "nonsensitive")),
            weights=(0, 1, 1), threshold=2, multiplier=1, bins={})
        marg = {"u": 0.9, "v": 0.9}
        single = [fif(qclf, EMPTY_NET, marg, {"A": 1}, [s]).influence
                  for s in ("u", "v")]
        joint = fif(qclf, EMPTY_NET, marg, {"A": 1}, ["u", "v"]).influence
        assert abs(joint - sum(single)) > 1e-6

    def test_sweep_order_follows_classifier(self):
        base, results = fif_all(simple_qclf(), EMPTY_NET,
                                {"u": 0.3, "v": 0.6}, {"A": 1})
        assert [r.subset for r in results] == [("u",), ("v",)]
        assert all(r.base_ppv == base for r in results)

    def test_csv_export_shape(self):
        _, results = fif_all(simple_qclf(), EMPTY_NET,
                             {"u": 0.3, "v": 0.6}, {"A": 1})
        csv = results_to_csv(results)
        lines = csv.strip().split("\n")
        assert lines[0] == "subset,group,base_ppv,ablated_ppv,influence"
        assert len(lines) == 3
