from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmed.errors import CFLViolation, ValidationError
from pmed.functionals import mass
from pmed.grid import DensityField, ScalarField, box_grid, discrete_gradient, laplacian_array
from pmed.keller_segel import KsState, bootstrap_exponents, free_energy, heat_step, ks_solve
from pmed.pme import barenblatt


def gaussian(grid, width=0.4):
    return np.exp(-grid.radius() ** 2 / (2 * width**2))


def test_heat_step_constant_in_box_unchanged():
    # with zero Dirichlet walls the harmonic-in-box datum is 0
    g = box_grid(2, 16, 1.0)
    c = ScalarField(g, np.zeros((16, 16)))
    assert np.array_equal(heat_step(c, None, 0.1).values, c.values)


def test_heat_step_max_decreases():
    g = box_grid(2, 32, 2.0)
    c = ScalarField(g, gaussian(g))
    maxima = [c.values.max()]
    for _ in range(5):
        c = heat_step(c, None, 0.05)
        maxima.append(c.values.max())
    assert all(b < a for a, b in zip(maxima, maxima[1:]))


def test_heat_step_stationary_point():
    g = box_grid(2, 32, 2.0)
    c = ScalarField(g, gaussian(g, 0.3))
    rho = -laplacian_array(c.values, g.spacing)  # Lap_h c = -rho
    out = heat_step(c, rho, 0.3)
    assert np.allclose(out.values, c.values, atol=1e-9 * np.abs(c.values).max())


def test_explicit_heat_step_cfl():
    g = box_grid(1, 32, 1.0)
    c = ScalarField(g, gaussian(g))
    with pytest.raises(CFLViolation):
        heat_step(c, None, 1.0, implicit=False)
    out = heat_step(c, None, 1e-4, implicit=False)
    assert out.values.max() < c.values.max()


def test_zero_density_pure_heat_flow():
    g = box_grid(2, 32, 2.0)
    c0 = ScalarField(g, gaussian(g))
    traj = ks_solve(DensityField(g, np.zeros((32, 32))), c0, 2.0, 0.2, 4)
    assert all(np.all(s.rho.values == 0) for s in traj.states)
    c = c0
    for i in range(4):
        c = heat_step(c, None, 0.05)
    assert np.allclose(traj.final.c.values, c.values, atol=1e-12)
    assert all(r.entropy == 0 for r in traj.ledger)


def test_free_energy_trivial_states():
    g = box_grid(2, 16, 1.0)
    zero = DensityField(g, np.zeros((16, 16)))
    row = free_energy(KsState(zero, ScalarField(g, np.zeros((16, 16))), 0.0), 2.0)
    assert row.entropy == row.field_energy == row.dissipation == 0.0
    c = ScalarField(g, gaussian(g))
    row = free_energy(KsState(zero, c, 0.0), 2.0)
    assert row.density_dissipation == 0 and row.dissipation == row.chemical_dissipation > 0


def test_ks_run_radial_symmetry_mass_and_energy():
    g = box_grid(2, 48, 3.0)
    rho0 = barenblatt(2, 2.0, 0.1, grid=g)
    traj = ks_solve(rho0, None, 2.0, 0.4, 8)
    fin = traj.final.rho.values
    asym = max(np.abs(fin - fin.T).max(), np.abs(fin - fin[::-1]).max(), np.abs(fin - fin[:, ::-1]).max())
    assert asym <= g.h * fin.max()
    masses = [mass(s.rho) for s in traj.states]
    assert max(masses) - min(masses) <= 1e-3 * masses[0]
    assert np.all(traj.free_energy_increments() <= 0)
    assert all(r.dissipation >= 0 for r in traj.ledger)


def test_drift_is_minus_gradient_of_c():
    g = box_grid(2, 32, 3.0)
    traj = ks_solve(barenblatt(2, 2.0, 0.1, grid=g), None, 2.0, 0.1, 2)
    for V, state in zip(traj.drifts, traj.states[1:]):
        grads = discrete_gradient(state.c)
        comps = V.on_grid(g, state.time)
        for k in range(2):
            assert np.array_equal(comps[k], -grads[k].values)


def test_bootstrap_paper_example_exact():
    seq = bootstrap_exponents(1.3, 3)
    assert list(seq) == [2.25]
    assert seq.moment_cap == pytest.approx((1.3 * 3 - 3 + 2) / 2)


def test_bootstrap_rejections():
    with pytest.raises(ValidationError, match="2d/\\(d\\+2\\)"):
        bootstrap_exponents(1.2, 3)
    with pytest.raises(ValidationError, match="d > 2"):
        bootstrap_exponents(1.5, 2)
    with pytest.raises(ValidationError, match="d - 2m"):
        bootstrap_exponents(2.0, 4)


def test_bootstrap_multi_term_oracle():
    # oracle: the recursion in exact rationals for m = 171/100, d = 10
    m, d = Fraction(171, 100), 10
    q = d * (m - 1) / (d - 2 * m)
    expect = [q]
    while d - 3 * m + 3 - q > 0:
        den = d - 2 * m + 2 - 2 * q
        if den <= 0:
            expect.append(math.inf)
            break
        q = d * (m - 1) * q / den
        expect.append(q)
    got = bootstrap_exponents(1.71, 10)
    assert list(got) == [float(x) for x in expect]
    assert len(got) == 7


def admissible_pairs():
    d = st.integers(3, 12)
    return d.flatmap(
        lambda dd: st.tuples(
            st.floats(max((2 * dd - 3) / dd, 2 * dd / (dd + 2)) + 1e-3, dd / 2 + 1.0).filter(lambda m: abs(dd - 2 * m) > 1e-6),
            st.just(dd),
        )
    )


@given(admissible_pairs())
def test_bootstrap_increasing_and_terminates(pair):
    m, d = pair
    seq = bootstrap_exponents(m, d)
    assert len(seq) >= 1
    assert all(b > a for a, b in zip(seq, seq[1:]))
    last = seq[-1]
    assert last == math.inf or d - 3 * m + 3 - last <= 0
