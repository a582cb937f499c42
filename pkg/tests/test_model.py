import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from truncem.model import (
    AssumptionViolation,
    InitialSegment,
    ModelParams,
    constant_initial,
    diffusion,
    drift,
    unchecked,
    validate_params,
    verify_holder,
)

P = ModelParams(**oracles.EXAMPLE)


def test_example_parameters_accepted():
    assert validate_params(P) is P
    assert P.equilibrium == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize(
    "override, condition",
    [
        ({"gamma": 1.0}, "gamma"),
        ({"gamma": 1.5, "r": 0.5, "theta": 0.8}, "growth"),
        ({"alpha": 0.0}, "positivity"),
        ({"sigma": -0.1}, "positivity"),
        ({"tau": float("nan")}, "positivity"),
    ],
)
def test_each_condition_is_named(override, condition):
    with pytest.raises(AssumptionViolation) as info:
        ModelParams(**{**oracles.EXAMPLE, **override})
    assert info.value.condition == condition


def test_growth_boundary_is_rejected():
    # 1 + gamma == 2 (r + theta) exactly
    with pytest.raises(AssumptionViolation):
        ModelParams(**{**oracles.EXAMPLE, "gamma": 2.0, "r": 0.75, "theta": 0.75})


real = st.floats(-2, 5, allow_nan=False)


@settings(max_examples=500, deadline=None)
@given(real, real, real, real, real, real, real)
def test_gate_matches_predicate(alpha, mu, sigma, gamma, r, theta, tau):
    kw = dict(alpha=alpha, mu=mu, sigma=sigma, gamma=gamma, r=r, theta=theta, tau=tau)
    try:
        ModelParams(**kw)
        accepted = True
    except AssumptionViolation:
        accepted = False
    assert accepted == oracles.assumption_holds(**kw)


def test_unchecked_skips_validation():
    p = unchecked(alpha=4, mu=2, sigma=0, gamma=1, r=1, theta=1, tau=1)
    assert p.gamma == 1.0
    with pytest.raises(AssumptionViolation):
        validate_params(p)


def test_coefficients():
    assert drift(P, 3.0) == pytest.approx(4 * (2 - 9))
    assert diffusion(P, 0.2, 0.2) == pytest.approx(0.06510404892001016, rel=1e-15)
    assert diffusion(P, 0.2, 0.2) == pytest.approx(0.5 * 0.2 ** (3 / 5 + 2 / 3), rel=1e-14)
    assert np.allclose(drift(P, np.array([0.0, math.sqrt(2)])), [8.0, 0.0])
    with pytest.raises(ValueError):
        drift(P, -1.0)
    with pytest.raises(ValueError):
        diffusion(P, 1.0, -1.0)


def test_initial_segment_shape():
    seg = constant_initial(0.2, 2.0, 200)
    assert seg.M == 200 and seg.delta == pytest.approx(0.01) and seg.xi0 == 0.2
    assert verify_holder(seg)
    with pytest.raises(ValueError):
        constant_initial(0.0, 2.0, 10)


def test_segment_positivity():
    seg = InitialSegment((0.0, 0.5, 1.0), 1.0, 1.0, 1.0)
    with pytest.raises(AssumptionViolation):
        seg.require_positive()
    with pytest.raises(AssumptionViolation):
        InitialSegment((-0.1, 0.5), 1.0, 1.0, 1.0)


def test_holder_sqrt_profile():
    # xi(t) = sqrt(t + tau) on [-tau, 0] is 1/2-Hoelder with D = 1
    tau, M = 1.0, 64
    t = np.linspace(-tau, 0.0, M + 1)
    vals = tuple(np.sqrt(t + tau))
    assert verify_holder(InitialSegment(vals, 1.0, 0.5, tau))
    assert not verify_holder(InitialSegment(vals, 1.0, 1.0, tau))


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.01, 3.0), min_size=2, max_size=12),
    st.floats(0.0, 5.0),
    st.floats(0.05, 1.0),
)
def test_holder_matches_pairwise_oracle(values, D, ell):
    seg = InitialSegment(tuple(values), D, ell, 1.0)
    assert verify_holder(seg) == oracles.holder_pairs(values, seg.delta, D, ell)
