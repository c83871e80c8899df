import pytest

from fvgm import EXISTS, FORALL, QuantifiedVariable, S3PInstance, random_q, solve
from fvgm.bayesnet import BayesNet, Cpt, Dag


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    # compile the jitted kernel once so timing tests see steady state
    solve(S3PInstance([QuantifiedVariable("w", 1, random_q(0.5))], 1))


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    monkeypatch.setenv("FVGM_BACKEND", request.param)
    return request.param


def example2_variables(first_kind=EXISTS):
    return [
        QuantifiedVariable("P", 1, first_kind),
        QuantifiedVariable("Q", 1, random_q(0.4)),
        QuantifiedVariable("R", 1, random_q(0.5)),
        QuantifiedVariable("S", -1, random_q(0.3)),
    ]


@pytest.fixture
def example2_max():
    return S3PInstance(example2_variables(EXISTS), 2)


@pytest.fixture
def example2_min():
    return S3PInstance(example2_variables(FORALL), 2)


def example3_net():
    return BayesNet(
        Dag({"P", "Q"}, {("P", "Q")}, choice_vars={"P"}),
        {"P": Cpt("P", (), {(): 0.5}),
         "Q": Cpt("Q", ("P",), {(0,): 0.3, (1,): 0.6})},
    )
