"""Repulsive Keller-Segel system ``rho_t - Lap rho^m = div(rho grad c)``, ``c_t - Lap c = rho``.

In the drift convention ``d_t rho = div(grad rho^m - V rho)`` the coupling is
``V = -grad c``. Each subinterval first advances ``c`` by one heat step
(zero Dirichlet walls), then runs one splitting cycle for ``rho`` with the
frozen drift ``-grad_h c``. The free energy
``F = int rho log rho + 1/2 int |grad c|^2`` obeys
``dF/dt + (4/m) int |grad rho^{m/2}|^2 + int |Lap c|^2 = 0``.
"""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from . import defaults
from .drift import gradient_of_solution
from .errors import CFLViolation, ConvergenceError, ValidationError
from .functionals import dissipation, entropy, mass
from .grid import DensityField, Grid, ScalarField, discrete_gradient, laplacian_array
from .splitting import SplittingConfig, split_cycle

log = logging.getLogger(__name__)

__all__ = [
    "KsState",
    "FreeEnergyRow",
    "KsTrajectory",
    "heat_step",
    "ks_solve",
    "free_energy",
    "free_energy_ledger",
    "BootstrapSequence",
    "bootstrap_exponents",
]

SIGN_NOTE = "drift V = -grad c (repulsive coupling)"


@dataclass(frozen=True)
class KsState:
    rho: DensityField
    c: ScalarField
    time: float

    def __post_init__(self):
        if self.rho.grid != self.c.grid:
            raise ValidationError("rho and c must share a grid")


@dataclass
class FreeEnergyRow:
    time: float
    entropy: float
    field_energy: float
    free_energy: float
    dissipation: float
    density_dissipation: float
    chemical_dissipation: float
    residual: float = math.nan
    mass: float = math.nan
    boundary_trace: float = 0.0

    COLUMNS = (
        "time",
        "entropy",
        "field_energy",
        "free_energy",
        "dissipation",
        "density_dissipation",
        "chemical_dissipation",
        "residual",
        "mass",
        "boundary_trace",
    )


def _dirichlet_laplacian(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of :func:`laplacian_array` (zero ghost cells)."""
    mats = []
    for n, h in zip(grid.cells, grid.spacing):
        mats.append(sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return sp.csr_matrix(mats[0])
    I0, I1 = sp.identity(grid.cells[0]), sp.identity(grid.cells[1])
    return sp.csr_matrix(sp.kron(mats[0], I1) + sp.kron(I0, mats[1]))


def heat_step(c: ScalarField, rho, dt: float, implicit: bool = True, tol: float = defaults.HEAT_TOL,
              max_iter: int = defaults.HEAT_MAX_ITER) -> ScalarField:
    """One step of ``c_t = Lap c + rho``.

    Implicit: solve ``(I - dt Lap_h) c_new = c + dt rho`` by conjugate
    gradients to relative residual ``tol``. Explicit: forward Euler, which
    requires ``dt <= 1 / (2 sum 1/h_k^2)``.
    """
    if dt <= 0:
        raise ValidationError(f"heat step needs dt > 0, got {dt}")
    grid = c.grid
    src = np.zeros(grid.shape) if rho is None else np.asarray(getattr(rho, "values", rho))
    if not implicit:
        limit = 1.0 / (2.0 * sum(1.0 / h**2 for h in grid.spacing))
        if dt > limit * (1 + 1e-12):
            raise CFLViolation(dt, limit)
        return ScalarField(grid, c.values + dt * (laplacian_array(c.values, grid.spacing) + src), c.time + dt)
    A = sp.identity(grid.size, format="csr") - dt * _dirichlet_laplacian(grid)
    b = (c.values + dt * src).ravel()
    if not np.any(b):
        return ScalarField(grid, np.zeros(grid.shape), c.time + dt)
    x, info = cg(A, b, x0=c.values.ravel(), rtol=tol, atol=0.0, maxiter=int(max_iter))
    if info != 0:
        raise ConvergenceError(f"heat solve did not converge in {max_iter} iterations")
    return ScalarField(grid, x.reshape(grid.shape), c.time + dt)


def free_energy(state: KsState, m: float) -> FreeEnergyRow:
    """Entropy, field energy and both dissipation terms of one state."""
    rho, c = state.rho, state.c
    grid = rho.grid
    vol = grid.cell_volume
    ent = entropy(rho).signed
    grads = discrete_gradient(c)
    field_energy = 0.5 * float(sum(np.sum(g.values**2) for g in grads) * vol)
    d_rho = (4.0 / m) * dissipation(rho, m, 1.0)
    d_c = float(np.sum(laplacian_array(c.values, grid.spacing) ** 2) * vol)
    edge = np.concatenate([np.take(c.values, [0, -1], axis=k).ravel() for k in range(grid.dim)])
    return FreeEnergyRow(
        state.time,
        ent,
        field_energy,
        ent + field_energy,
        d_rho + d_c,
        d_rho,
        d_c,
        mass=mass(rho),
        boundary_trace=float(np.max(np.abs(edge))),
    )


def free_energy_ledger(states, m: float) -> list[FreeEnergyRow]:
    """Rows for every state; ``residual`` of row ``i >= 1`` is
    ``(F_i - F_{i-1}) / dt + (D_i + D_{i-1}) / 2``."""
    rows = [free_energy(s, m) for s in states]
    for prev, row in zip(rows, rows[1:]):
        dt = row.time - prev.time
        if dt > 0:
            row.residual = (row.free_energy - prev.free_energy) / dt + 0.5 * (row.dissipation + prev.dissipation)
    return rows


@dataclass
class KsTrajectory:
    states: list
    ledger: list
    m: float
    config: SplittingConfig
    drifts: list = field(default_factory=list)
    note: str = SIGN_NOTE

    @property
    def final(self) -> KsState:
        return self.states[-1]

    def residual_l2(self) -> float:
        """``sqrt(sum_i dt_i r_i^2)`` over rows with a residual."""
        total = 0.0
        for prev, row in zip(self.ledger, self.ledger[1:]):
            total += (row.time - prev.time) * row.residual**2
        return math.sqrt(total)

    def free_energy_increments(self) -> np.ndarray:
        F = np.array([r.free_energy for r in self.ledger])
        return np.diff(F)


def ks_solve(rho0: DensityField, c0: ScalarField | None, m: float, T: float, n: int, config: SplittingConfig | None = None,
             implicit: bool = True) -> KsTrajectory:
    """Coupled run on ``[t0, t0 + T]`` with ``n`` subintervals.

    ``config`` supplies the splitting options (transport mode, CFL safety,
    substeps); its ``m``, ``T`` and ``n`` are overridden by the arguments.
    The density is not renormalized: its mass is the source strength of c.
    """
    if m <= 1:
        raise ValidationError(f"requires m > 1, got m={m}")
    if n < 1:
        raise ValidationError(f"requires n >= 1, got n={n}")
    grid = rho0.grid
    t0 = rho0.time
    if c0 is None:
        c0 = ScalarField(grid, np.zeros(grid.shape), t0)
    base = config.echo() if config is not None else {}
    base.update(m=float(m), T=float(T), n=int(n), check_lq=False, output_times=())
    cfg = SplittingConfig(**base)
    step = T / n
    rho, c = rho0, c0.replace(time=t0)
    states = [KsState(rho, c, t0)]
    drifts = []
    for i in range(n):
        a = t0 + i * step
        b = t0 + T if i == n - 1 else t0 + (i + 1) * step
        c = heat_step(c, rho, b - a, implicit=implicit).replace(time=a)
        V = gradient_of_solution(c, sign=-1.0)
        drifts.append(V)
        if mass(rho) > 0:
            fields, _, _, _ = split_cycle(rho, V, a, b, cfg)
            rho = fields[b]
        else:
            rho = rho.replace(time=b)
        c = c.replace(time=b)
        states.append(KsState(rho, c, b))
    ledger = free_energy_ledger(states, m)
    return KsTrajectory(states, ledger, float(m), cfg, drifts)


# --- bootstrap exponents -------------------------------------------------------


class BootstrapSequence(list):
    """List of exponents ``q^(k)`` with the moment cap attached."""

    def __init__(self, values, moment_cap: float):
        super().__init__(values)
        self.moment_cap = moment_cap


def bootstrap_exponents(m: float, d: int, max_terms: int = 10_000) -> BootstrapSequence:
    """``q^(1) = d(m-1)/(d-2m)``, ``q^(k+1) = d(m-1) q^(k) / (d-2m+2-2q^(k))``,
    stopping once ``d - 3m + 3 - q^(k) <= 0``.

    A nonpositive denominator means the integrability gain is unbounded at
    that stage; the sequence then ends with ``inf``. The recursion runs in
    exact rational arithmetic on the shortest decimal form of ``m``, so that
    e.g. ``m = 1.3`` is treated as 13/10.
    """
    if int(d) != d:
        raise ValidationError(f"d must be an integer, got {d}")
    d = int(d)
    if not d > 2:
        raise ValidationError(f"requires d > 2, got d={d}")
    lo1 = (2 * d - 3) / d
    lo2 = 2 * d / (d + 2)
    if not m > lo1:
        raise ValidationError(f"requires m > (2d-3)/d = {lo1:.6g}, got m={m}")
    if not m > lo2:
        raise ValidationError(f"requires m > 2d/(d+2) = {lo2:.6g}, got m={m}")
    if d - 2 * m == 0:
        raise ValidationError("requires d - 2m != 0")
    cap = (m * d - d + 2) / (d - 1)
    if d - 2 * m < 0:
        return BootstrapSequence([math.inf], cap)
    mq = Fraction(repr(float(m)))
    seq = [d * (mq - 1) / (d - 2 * mq)]
    done = False
    while d - 3 * mq + 3 - seq[-1] > 0:
        if len(seq) >= max_terms:
            raise ConvergenceError(f"bootstrap recursion did not stop within {max_terms} terms")
        q = seq[-1]
        den = d - 2 * mq + 2 - 2 * q
        if den <= 0:
            done = True
            break
        seq.append(d * (mq - 1) * q / den)
    out = [float(q) for q in seq] + ([math.inf] if done else [])
    return BootstrapSequence(out, cap)
