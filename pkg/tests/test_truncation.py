import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from truncem.model import ModelParams
from truncem.truncation import (
    PolicyViolation,
    clamp_bound,
    default_envelope,
    envelope_inverse,
    make_policy,
    worked_example_envelope,
    truncated_diffusion,
    truncated_drift,
)

P = ModelParams(**oracles.EXAMPLE)


@pytest.fixture(scope="module")
def example():
    return make_policy(P, envelope="paper_example", psi_exponent=2 / 3, delta_star=1.0, strict_42=False)


def test_clamp_levels_frozen(example):
    # kappa = sqrt(delta^(-2/3) / 6.5)
    assert clamp_bound(example, 1e-2) == pytest.approx(1.8205809258973795, rel=1e-14)
    assert clamp_bound(example, 1e-4) == pytest.approx(8.45038809633369, rel=1e-14)
    assert clamp_bound(example, 1e-2) == pytest.approx(np.sqrt(1e-2 ** (-2 / 3) / 6.5), rel=1e-14)


@pytest.mark.parametrize("delta", [5e-2, 1e-2, 1e-3, 1e-5])
def test_clamp_matches_bisection(example, delta):
    z = worked_example_envelope()
    ref = oracles.inverse_by_bisection(z, example.psi(delta), lo=1.0)
    assert clamp_bound(example, delta) == pytest.approx(ref, rel=1e-13)


def test_truncated_values(example):
    assert truncated_drift(example, P, 1e-2, 3.0) == pytest.approx(-5.258059630965439, rel=1e-14)
    assert truncated_diffusion(example, P, 1e-2, 3.0, 0.5) == pytest.approx(0.4512418110279912, rel=1e-14)
    assert truncated_drift(example, P, 1e-2, -5.0) == P.alpha * P.mu
    assert truncated_diffusion(example, P, 1e-2, 1.0, -1e-9) == 0.0
    assert truncated_diffusion(example, P, 1e-2, -1e-9, 1.0) == 0.0


def test_default_policy_numbers():
    policy = make_policy(P)
    z = default_envelope(P)
    assert z(1.0) == pytest.approx(12.5)
    assert z(2.0) == pytest.approx(8 + 16 + 0.5 * 2 ** (19 / 15))
    assert policy.delta_star == pytest.approx(12.5**-4)
    assert policy.warnings == ()
    assert envelope_inverse(z, 12.5) == pytest.approx(1.0, rel=1e-14)


def test_default_policy_has_no_clamp_at_common_steps():
    # z(0) = alpha*mu = 8 exceeds delta^-1/4 for every delta > 2^-12
    policy = make_policy(P, strict_42=False)
    with pytest.raises(PolicyViolation) as info:
        clamp_bound(policy, 1e-3)
    assert info.value.condition == "psi"
    strict = make_policy(P)
    with pytest.raises(PolicyViolation) as info:
        clamp_bound(strict, 1e-3)
    assert info.value.condition == "delta_star"
    assert clamp_bound(strict, 2.0**-15) > 1.0


def test_example_policy_warnings(example):
    text = " | ".join(example.warnings)
    assert "psi(delta_star) >= z(1)" in text
    assert "dominate" in text
    assert len(example.warnings) == 3
    assert "WARNING" in example.provenance
    with pytest.raises(PolicyViolation) as info:
        make_policy(P, envelope="paper_example", psi_exponent=2 / 3, delta_star=1.0)
    assert info.value.condition == "psi_conditions"


def test_policy_field_checks():
    with pytest.raises(PolicyViolation):
        make_policy(P, psi_exponent=0.0, strict_42=False)
    with pytest.raises(PolicyViolation):
        make_policy(P, psi_scale=0.5, strict_42=False)
    with pytest.raises(PolicyViolation):
        make_policy(P, delta_star=2.0, strict_42=False)


def test_inverse_below_valid_range():
    with pytest.raises(ValueError):
        envelope_inverse(worked_example_envelope(), 6.0)
    assert envelope_inverse(worked_example_envelope(), 6.5) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(8.0, 1e8))
def test_inverse_round_trip(v):
    z = default_envelope(P)
    u = envelope_inverse(z, v)
    assert z(u) == pytest.approx(v, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 0.05), st.floats(1e-6, 0.05))
def test_clamp_decreasing_in_delta(d1, d2):
    policy = make_policy(P, envelope="paper_example", psi_exponent=2 / 3, delta_star=1.0, strict_42=False)
    lo, hi = sorted((d1, d2))
    assert clamp_bound(policy, lo) >= clamp_bound(policy, hi)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_truncated_bound_property(x, y, delta):
    policy = make_policy(P, envelope="paper_example", psi_exponent=2 / 3, delta_star=1.0, strict_42=False)
    big = max(abs(truncated_drift(policy, P, delta, x)), truncated_diffusion(policy, P, delta, x, y))
    assert big <= max(policy.psi(delta), P.alpha * P.mu)
