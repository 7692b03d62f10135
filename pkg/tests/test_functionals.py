from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bump
from pmed import drift
from pmed.errors import ValidationError
from pmed.functionals import (
    ScalingQuery,
    classify_scaling,
    diagnostics_record,
    dissipation,
    drift_energy,
    entropy,
    lambda_q,
    lq_norm,
    mass,
    mixed_norm,
    moment_weights,
    oscillation_decay,
    p_moment,
    rescale,
    speed_energy,
    support_radius,
)
from pmed.grid import DensityField, ScalarField, box_grid, make_grid
from pmed.pme import barenblatt, barenblatt_constant, barenblatt_radius


def unit_box(dim, n):
    return make_grid(dim, [n] * dim, [0] * dim, [1 / n] * dim)


def test_mass_linear(box2d):
    f = bump(box2d)
    f = f.replace(values=f.values / mass(f))
    assert mass(f) == pytest.approx(1.0)
    assert mass(f.replace(values=2 * f.values)) == pytest.approx(2.0)


def test_lq_norm_examples():
    g = unit_box(2, 8)
    assert lq_norm(DensityField(g, np.ones((8, 8))), 2) == pytest.approx(1.0)
    assert lq_norm(DensityField(g, 3 * np.ones((8, 8))), math.inf) == 3
    g1 = make_grid(1, [16], [0], [2 / 16])
    assert lq_norm(DensityField(g1, np.ones(16)), 2) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValidationError):
        lq_norm(DensityField(g1, np.ones(16)), 0.5)


def test_entropy_examples():
    g = unit_box(2, 8)
    assert entropy(DensityField(g, np.ones((8, 8)))).signed == 0.0
    # density e on a box of volume 1/e
    side = math.exp(-0.5)
    g2 = make_grid(2, [4, 4], [0, 0], [side / 4, side / 4])
    assert entropy(DensityField(g2, np.full((4, 4), math.e))).signed == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_entropy_signed_below_absolute(seed):
    g = box_grid(2, 8, 1.0)
    v = np.random.default_rng(seed).random((8, 8)) * 3
    e = entropy(DensityField(g, v))
    assert e.signed <= e.absolute + 1e-15


def test_p_moment_point_mass():
    g = box_grid(2, 41, 1.0)
    v = np.zeros((41, 41))
    v[20, 20] = 1 / g.cell_volume
    assert p_moment(DensityField(g, v), 2.0) == pytest.approx(1.0, abs=g.h)


def test_p_moment_grows_with_translation(box2d):
    vals = [p_moment(bump(box2d, (c, 0), 0.3), 1.5) / mass(bump(box2d, (c, 0), 0.3)) for c in (0.0, 0.4, 0.8, 1.2)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000), st.floats(1.0, 2.0))
def test_p_moment_at_least_mass(seed, p):
    g = box_grid(2, 8, 2.0)
    f = DensityField(g, np.random.default_rng(seed).random((8, 8)))
    assert p_moment(f, p) >= mass(f)


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
def test_moment_weights_bounds(p):
    g = box_grid(2, 41, 3.0)
    w, grads, lap = moment_weights(g, p)
    centre = (20, 20)
    assert np.hypot(grads[0].values[centre], grads[1].values[centre]) == 0.0
    assert lap.values[centre] == pytest.approx(p * 2)  # full 2D Laplacian at 0 is p d
    gnorm = np.hypot(grads[0].values, grads[1].values)
    assert np.all(gnorm < p * w.values ** ((p - 1) / p))
    assert np.all(lap.values <= p * g.dim + 1e-12)


def test_moment_weights_1d_laplacian_below_p():
    g = box_grid(1, 41, 3.0)
    for p in (1.3, 2.0):
        _, _, lap = moment_weights(g, p)
        assert np.all(lap.values <= p + 1e-12)
        assert lap.values[20] == pytest.approx(p)


def test_moment_weights_reject_p():
    with pytest.raises(ValidationError):
        moment_weights(box_grid(1, 8, 1.0), 2.5)


def test_dissipation_constant_zero():
    g = unit_box(2, 8)
    assert dissipation(DensityField(g, np.full((8, 8), 0.7)), 2.0, 1.0) == 0.0


def test_dissipation_vacuum_degeneracy_grows():
    # rho = x on [0,1] with m = 1 limit: the exponent (q+m-1)/2 = 1/2
    vals = []
    for n in (64, 256):
        g = unit_box(1, n)
        x = g.axis(0)
        a = 0.5
        vals.append(float(np.sum(np.gradient(x**a, g.spacing[0], edge_order=1) ** 2) * g.cell_volume))
    assert vals[1] > vals[0]


def test_dissipation_barenblatt_against_fine_quadrature():
    g = box_grid(2, 128, 2.0)
    coarse = dissipation(barenblatt(2, 2.0, 1.0, grid=g), 2.0, 1.0)
    fine = dissipation(barenblatt(2, 2.0, 1.0, grid=g.refined(10)), 2.0, 1.0)
    assert coarse == pytest.approx(fine, rel=0.02)


def test_speed_and_drift_energy():
    g = unit_box(2, 8)
    f = DensityField(g, np.full((8, 8), 2.0))
    assert speed_energy(f, 2.0, 2.0) == 0.0
    assert drift_energy(f, drift.zero(2), 2.0, 0.0) == 0.0
    c = drift.constant([3.0, 4.0])
    assert drift_energy(f, c, 1.5, 0.0) == pytest.approx(5**1.5 * 2.0)


def test_mixed_norm_examples():
    g = unit_box(2, 8)
    c = drift.constant([0.6, 0.8])
    times = np.linspace(0, 1, 11)
    for q1, q2 in [(1, 1), (2, 3), (math.inf, 2), (4, math.inf)]:
        assert mixed_norm(c, g, times, q1, q2) == pytest.approx(1.0)
    assert mixed_norm(drift.zero(2), g, times, 2, 2) == 0.0
    times = np.linspace(0, 1, 2001)
    tfield = lambda x, t: np.full(len(x), t)
    assert mixed_norm(tfield, g, times, math.inf, 2) == pytest.approx(3**-0.5, rel=1e-6)


def test_mixed_norm_fubini():
    g = box_grid(2, 32, 1.0)
    V = drift.custom(lambda x, t: np.stack([np.sin(x[:, 0]) * (1 + t), x[:, 1] * t], 1), 2)
    times = np.linspace(0, 1, 401)
    q = 3.0
    direct = 0.0
    vals = []
    for t in times:
        mag = np.linalg.norm(V(g.points, t), axis=1)
        vals.append(np.sum(mag**q) * g.cell_volume)
    vals = np.array(vals)
    direct = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)) ** (1 / q)
    assert mixed_norm(V, g, times, q, q) == pytest.approx(direct, rel=1e-12)


def test_classify_paper_example():
    r = classify_scaling(ScalingQuery(2, 1, 3, 3, 5 / 3))
    assert r.q_md == 3 and r.lhs == pytest.approx(4) and r.verdict == "scaling_invariant"
    assert classify_scaling(ScalingQuery(2, 1, 3, 3, 2)).verdict == "sub_scaling"
    assert classify_scaling(ScalingQuery(2, 1, 3, 3, 1.5)).verdict == "super_scaling"
    g = classify_scaling(ScalingQuery(2, 1, 3, 3, 1.25, "gradV"))
    assert g.rhs == 5 and g.verdict == "scaling_invariant"


def test_classify_rejects_bad_queries():
    for args in [(1.0, 1, 3, 3, 2), (2, 0.5, 3, 3, 2), (2, 1, 1, 3, 2), (2, 1, 3, 0.5, 2)]:
        with pytest.raises(ValidationError):
            ScalingQuery(*args)


@pytest.mark.parametrize("m,d", [(2.0, 3), (1.5, 2), (3.0, 4)])
def test_lambda_q_equals_two_at_q_m(m, d):
    assert lambda_q(m, m, d) == 2.0


def test_m_to_one_limit():
    # q_md -> 0: the line becomes d/q1 + 2/q2 = 1
    r = classify_scaling(ScalingQuery(1 + 1e-12, 1, 3, 6, 4))
    assert r.rhs == pytest.approx(1.0) and r.verdict == "scaling_invariant"


@given(st.floats(1.01, 4), st.floats(1, 6), st.integers(2, 5), st.floats(0, 1), st.floats(0, 1))
def test_lhs_affine_in_reciprocals(m, q, d, a, b):
    q_md = d * (m - 1) / q
    q1 = math.inf if a == 0 else 1 / a
    q2 = math.inf if b == 0 else 1 / b
    r = classify_scaling(ScalingQuery(m, q, d, max(q1, 1), max(q2, 1)))
    assert r.lhs == pytest.approx(d * min(a, 1) + (2 + q_md) * min(b, 1), abs=1e-12)


@given(st.floats(1.01, 4), st.integers(2, 5), st.floats(1, 8), st.floats(1, 8))
def test_lambda_q_monotone_and_clamped(m, d, q, dq):
    lo, hi = lambda_q(m, q, d), lambda_q(m, q + dq, d)
    assert 1 < lo <= 2 and lo <= hi + 1e-15
    if q >= m:
        assert lo == 2.0


def test_rescale_identity():
    g = box_grid(2, 16, 1.0)
    f = barenblatt(2, 2.0, 0.3, grid=g)
    r = rescale(f, 1.0, 2.0, 2.0)
    assert np.array_equal(r.obj.values, f.values) and r.obj.grid == f.grid and r.obj.time == f.time


@given(st.floats(0.2, 5.0))
def test_rescale_inverse_is_exact(kappa):
    g = box_grid(2, 16, 1.0)
    f = barenblatt(2, 2.0, 0.3, grid=g).replace(time=0.7)
    k = 2.0 ** round(math.log2(kappa))  # powers of two keep grid arithmetic exact
    back = rescale(rescale(f, k, 2.0, 2.0).obj, 1 / k, 2.0, 2.0).obj
    assert np.array_equal(back.values, f.values)
    assert back.grid == f.grid


@pytest.mark.parametrize("kappa", [0.5, 2.0])
def test_rescale_preserves_lq_of_barenblatt(kappa):
    m, q, d = 2.0, 2.0, 2
    g = box_grid(2, 128, 3.0)
    t = 1.0
    r = rescale(barenblatt(d, m, t, grid=g), kappa, m, q)
    target = barenblatt(d, m, t, grid=g)  # rho(., kappa^beta s) with s = t / kappa^beta
    assert lq_norm(r.obj, q) == pytest.approx(lq_norm(target, q), rel=1e-12)
    assert r.obj.time == pytest.approx(t / kappa**r.beta)


def test_rescale_drift_mixed_norm_invariant():
    # spatially constant drift decaying in time; with q1 = inf the line fixes q2
    m, q, d = 2.0, 2.0, 2
    q_md = d * (m - 1) / q
    q1 = math.inf
    q2 = (2 + q_md) / (1 + q_md)
    assert classify_scaling(ScalingQuery(m, q, d, q1, q2)).verdict == "scaling_invariant"
    V = drift.custom(lambda x, t: np.stack([np.exp(-t) * np.ones(len(x)), np.zeros(len(x))], 1), 2)
    g = box_grid(2, 8, 20.0)
    times = np.linspace(0, 40, 40001)
    base = mixed_norm(V, g, times, q1, q2)
    for kappa in (0.5, 2.0):
        r = rescale(V, kappa, m, q)
        tk = times / kappa**r.beta
        assert mixed_norm(r.obj, g, tk, q1, q2) == pytest.approx(base, rel=1e-3)


def test_oscillation_decay_examples():
    g = box_grid(1, 4000, 1.0)
    x = ScalarField(g, g.axis(0))
    rep = oscillation_decay([x.replace(time=t) for t in (0, 0.01, 0.1)], [0.0], [0.05, 0.1, 0.2, 0.4])
    assert rep.defined and rep.exponent == pytest.approx(1.0, abs=0.01)
    const = ScalarField(g, np.ones(4000))
    assert not oscillation_decay([const], [0.0], [0.05, 0.1, 0.2, 0.4]).defined


def test_oscillation_decay_barenblatt_free_boundary():
    g = box_grid(1, 2000, 3.0)
    B = barenblatt(1, 2.0, 1.0, grid=g)
    R = barenblatt_radius(1, 2.0, 1.0, barenblatt_constant(1, 2.0))
    rep = oscillation_decay([B], [R], [0.02, 0.04, 0.08, 0.16])
    assert 0 < rep.exponent <= 1.0 + 0.05


def test_support_radius_examples():
    g = box_grid(2, 128, 2.0)
    ind = DensityField(g, (g.radius() <= 1.0).astype(float))
    assert support_radius(ind) == pytest.approx(1.0, abs=g.diagonal)
    assert support_radius(DensityField(g, np.zeros((128, 128)))) == 0.0
    B = barenblatt(2, 2.0, 1.0, grid=g)
    R = barenblatt_radius(2, 2.0, 1.0, barenblatt_constant(2, 2.0))
    assert abs(support_radius(B) - R) <= 2 * g.diagonal


def test_diagnostics_record_invariants(box2d):
    f = bump(box2d, (0.2, 0.1), 1.0)
    rec = diagnostics_record(f, 2.0, 2.0, 1.5, V=drift.rotation(), tracked_q=(2.0, 3.0))
    assert rec.mass >= 0 and rec.p_moment >= rec.mass
    assert set(rec.lq_integrals) == {2.0, 3.0}
    assert rec.drift_energy > 0


def test_pointwise_entropy_bound():
    # rho |log rho| <= rho log rho + 2 rho <x>^p + c, c = max_{s in (0,1]} 2 s |log s| = 2/e
    g = box_grid(2, 32, 3.0)
    rng = np.random.default_rng(1)
    rho = rng.random((32, 32)) * 2
    c = 2 / math.e
    w = (1 + g.mesh[0] ** 2 + g.mesh[1] ** 2) ** (1.5 / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(rho > 0, np.log(rho), 0.0)
    assert np.all(rho * np.abs(lg) <= rho * lg + 2 * rho * w + c + 1e-12)
