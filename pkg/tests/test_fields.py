import math

import numpy as np
import pytest

from gravjet.flux_algebra import DownstreamState, JetParameters, asymptotic_states
from gravjet.fields import asymptotic_check, flow_fields, h3_formula, interface, velocity
from gravjet.geometry import TruncatedDomain, build_grid
from gravjet.minimizer import StreamField

JET = JetParameters(3, 1, 1, 2, 3)


@pytest.fixture(scope="module")
def box():
    return build_grid(TruncatedDomain.rectangle(2.0, 1.0), 1 / 40)


def sf(grid, psi, jet=JET, s=None):
    s = DownstreamState.from_heights(0.5, 0.6, jet) if s is None else s
    return StreamField(grid, psi, jet, s)


def test_affine_in_y(box):
    ff = velocity(sf(box, 0.4 + 1.7 * box.Y))
    assert np.allclose(ff.u, 1.7, atol=1e-12) and np.allclose(ff.v, 0.0, atol=1e-12)


def test_affine_in_x(box):
    ff = velocity(sf(box, 1.5 + 0.3 * box.X))
    assert np.allclose(ff.u, 0.0, atol=1e-12) and np.allclose(ff.v, -0.3, atol=1e-12)


def test_uniform_stream_without_gravity_is_at_ambient_pressure(box):
    a = 2.5
    jet = JetParameters(3, 0.0, 1, 2, 3, p_atm=0.7)
    s = DownstreamState(a * a / 2, 1.0, 0.4, 0.4)
    ff = flow_fields(StreamField(box, 0.1 + a * box.Y, jet, s))
    wet = ff.wet
    assert wet.sum() > 100
    assert np.allclose(ff.p[wet], 0.7, atol=1e-12)
    assert np.all(np.isnan(ff.p[~wet]))


def test_straight_interface(box):
    q1 = 1.2
    f = sf(box, q1 + 0.5 * box.X)
    itf = interface(f, Q1=q1)
    assert np.allclose(itf.k[:, 1], 0.0, atol=1e-12)
    assert abs(itf.slope0) < 1e-12
    assert itf.S[0] == pytest.approx(0.0, abs=1e-12)


def test_h3_formula():
    assert h3_formula(1.5, 3.0, 2.0, 3.0) == 2.5
    assert h3_formula(0.0, 3.0, 2.0, 3.0) == 2.0


def test_exact_downstream_field_has_zero_deviation(box):
    s = DownstreamState.from_heights(0.5, 0.6, JET)
    a1 = math.sqrt(2 * s.lam - 2 * s.h1)
    a2 = math.sqrt(2 * s.lam - 2 * s.h2)
    psi = np.where(box.X < 0, s.Q1 - a1 * box.Y, s.Q1 + a2 * box.Y).clip(0, JET.Q)
    f = sf(box, psi, s=s)
    left, right, _ = asymptotic_states(s, JET)
    rep = asymptotic_check(flow_fields(f), f, states=(left, right))
    for r in rep.values():
        assert r.n > 0
        assert r.du < 1e-12 and r.dv < 1e-12 and r.dp < 1e-12
