import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgnniv import hydraulics as hyd
from pgnniv.errors import DomainError

GOLDEN = Path(__file__).parent / "data" / "hydraulics_golden.txt"


def drops_by_hand(q, s1=1.0, s2=2.0, k1=140.0, k2=140.0, d1=10.0, d2=10.0,
                  rho=1.0, g=9.81, xi=1.0):
    """Independent transcription of the head-loss laws, one station at a time."""
    gamma = rho * g
    phi1 = math.sqrt(4 * s1 / math.pi)
    phi2 = math.sqrt(4 * s2 / math.pi)
    dp1 = 10.67 * gamma * (q / k1) ** 1.852 * phi1 ** -4.8704 * d1
    dp2 = 10.67 * gamma * (q / k2) ** 1.852 * phi2 ** -4.8704 * d2
    v1, v2 = q / s1, q / s2
    # Bernoulli: p1 - p2 = rho/2 (v2^2 - v1^2) + Borda-Carnot loss
    dpe = 0.5 * rho * (v2**2 - v1**2) + rho * xi / 2 * (1 - s1 / s2) ** 2 * v1**2
    return dp1, dpe, dp2


def test_hazen_williams_constants():
    assert (hyd.HW_LAMBDA, hyd.HW_ALPHA, hyd.HW_BETA) == (10.67, 1.852, -4.8704)


def test_table1_defaults():
    p = hyd.TABLE1
    assert (p.sigma1, p.sigma2, p.rho, p.xi, p.g, p.kappa1, p.kappa2, p.delta1, p.delta2) == \
        (1.0, 2.0, 1.0, 1.0, 9.81, 140.0, 140.0, 10.0, 10.0)
    assert p.areas == (1.0, 1.0, 2.0)


@pytest.mark.parametrize("q", [0.5, 1.0, 2.0, 4.3, 10.0])
def test_segment_drops_match_hand_computation(q):
    got = hyd.segment_pressure_drops(q)
    for a, b in zip(got, drops_by_hand(q)):
        assert a == pytest.approx(b, rel=1e-13)


def test_reduced_law_equals_sum_of_segments():
    q = np.random.default_rng(12).uniform(0.1, 10.0, size=100)
    total = hyd.total_pressure_drop(q)
    parts = hyd.segment_pressure_drops(q).total
    assert np.max(np.abs(total - parts) / np.abs(parts)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(1.0, 4.0), st.floats(60.0, 160.0), st.floats(60.0, 160.0),
       st.floats(0.0, 2.0), st.floats(0.1, 20.0))
def test_reduced_law_identity_any_geometry(s1, ratio, k1, k2, xi, q):
    params = hyd.PipeParams(sigma1=s1, sigma2=s1 * ratio, kappa1=k1, kappa2=k2, xi=xi)
    total = hyd.total_pressure_drop(q, params)
    parts = hyd.segment_pressure_drops(q, params).total
    scale = sum(abs(x) for x in hyd.segment_pressure_drops(q, params))
    assert abs(total - parts) <= 1e-12 * scale


def test_reduced_law_coefficients():
    l1, l2, l3 = hyd.lambda_coefficients()
    # 1/2 rho [(1/S2^2 - 1/S1^2) + xi (1/S1 - 1/S2)^2] with S = (1, 2)
    assert l1 == pytest.approx(0.5 * ((1 / 4 - 1) + (1 - 1 / 2) ** 2), rel=1e-15)
    assert l1 == -0.25
    assert l3 == 1.852
    # l2 * q^l3 must be the two friction drops together
    dp1, _, dp2 = drops_by_hand(1.0)
    assert l2 == pytest.approx(dp1 + dp2, rel=1e-13)
    assert l2 == pytest.approx(0.0730143256766299, rel=1e-12)


def test_velocities_conserve_mass():
    q = np.array([1.0, 2.5])
    v = hyd.velocities(q)
    np.testing.assert_allclose(v * np.array(hyd.TABLE1.areas), np.column_stack([q, q, q]))


def test_roughness_round_trip():
    q = np.linspace(1.0, 5.0, 25)
    params = hyd.UNIFORM_PIPE
    d = hyd.segment_pressure_drops(q, params)
    p2 = np.full_like(q, 3.0)
    p1 = p2 + d.dp2
    p0 = p1 + d.dp1
    k1, k2 = hyd.roughness_from_observation(q, p0, p1, p2, params)
    np.testing.assert_allclose(k1, 140.0, rtol=1e-9)
    np.testing.assert_allclose(k2, 100.0, rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 20.0), st.floats(50.0, 200.0), st.floats(50.0, 200.0))
def test_roughness_round_trip_property(q, k1, k2):
    params = hyd.UNIFORM_PIPE.with_(kappa1=k1, kappa2=k2)
    d = hyd.segment_pressure_drops(q, params)
    got = hyd.roughness_from_observation(q, d.dp1 + d.dp2, d.dp2, 0.0, params)
    assert got[0] == pytest.approx(k1, rel=1e-9)
    assert got[1] == pytest.approx(k2, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 9.0), st.floats(0.01, 1.0))
def test_total_drop_increases_with_flow_in_uniform_pipe(q, dq):
    params = hyd.UNIFORM_PIPE
    assert hyd.total_pressure_drop(q + dq, params) > hyd.total_pressure_drop(q, params)


def test_component_laws():
    assert hyd.hydraulic_diameter(math.pi / 4) == pytest.approx(1.0, rel=1e-15)
    assert hyd.darcy_weisbach_slope(2.0, 0.02, 1.0, 9.81) == pytest.approx(0.02 * 4 / (2 * 9.81))
    assert hyd.laminar_friction_factor(2.0, 0.5, 1e-6) == pytest.approx(64e-6)
    assert hyd.borda_carnot_head_loss(2.0, 1.0, 2.0, 1.0, 9.81) == pytest.approx(0.25 * 4 / (2 * 9.81))
    assert hyd.borda_carnot_head_loss(2.0, 1.0, 1.0, 1.0, 9.81) == 0.0


def test_golden_file_matches():
    records = hyd.read_golden(GOLDEN)
    assert len(records) == len(hyd.golden_records())
    for (fn, inputs, expected), (fn2, inputs2, value) in zip(records, hyd.golden_records()):
        assert (fn, inputs) == (fn2, inputs2)
        assert value == pytest.approx(expected, rel=1e-13), fn


def test_golden_file_against_hand_values():
    golden = {(fn, inp): v for fn, inp, v in hyd.read_golden(GOLDEN)}
    dp1, dpe, dp2 = drops_by_hand(2.0)
    assert golden[("segment_pressure_drops.dp1", "table1 q=2")] == pytest.approx(dp1, rel=1e-13)
    assert golden[("segment_pressure_drops.dpe", "table1 q=2")] == pytest.approx(dpe, rel=1e-13)
    assert golden[("segment_pressure_drops.dp2", "table1 q=2")] == pytest.approx(dp2, rel=1e-13)
    assert golden[("total_pressure_drop", "table1 q=2")] == pytest.approx(dp1 + dpe + dp2, rel=1e-13)


@pytest.mark.parametrize("call", [
    lambda: hyd.segment_pressure_drops(0.0),
    lambda: hyd.segment_pressure_drops(np.array([1.0, -1.0])),
    lambda: hyd.total_pressure_drop(-2.0),
    lambda: hyd.hazen_williams_slope(1.0, 0.0, 1.0),
    lambda: hyd.hydraulic_diameter(0.0),
    lambda: hyd.borda_carnot_head_loss(1.0, 2.0, 1.0, 1.0, 9.81),
    lambda: hyd.roughness_from_observation(1.0, 1.0, 2.0, 0.0),
    lambda: hyd.PipeParams(sigma1=-1.0),
    lambda: hyd.PipeParams(xi=-0.1),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_small_worked_values():
    assert hyd.hazen_williams_slope(140.0, 140.0, 1.0) == pytest.approx(10.67, rel=1e-15)
    assert hyd.darcy_weisbach_slope(0.0, 0.02, 1.0, 9.81) == 0.0
    assert hyd.borda_carnot_head_loss(3.0, 1.0, 2.0, 0.0, 9.81) == 0.0
    assert hyd.hydraulic_diameter(2.0) == pytest.approx(math.sqrt(8 / math.pi), rel=1e-15)
    l1, l2, _ = hyd.lambda_coefficients()
    assert hyd.total_pressure_drop(1.0) == pytest.approx(l1 + l2, rel=1e-15)
    assert hyd.segment_pressure_drops(2.0, hyd.UNIFORM_PIPE).dpe == 0.0
    assert abs(hyd.total_pressure_drop(1e-9)) < 1e-15
