"""Homogeneous porous medium equation ``d_t rho = Lap rho^m``.

Explicit conservative finite differences on ``rho^m`` with an adaptive CFL
step. Under ``dt <= h^2 / (2 d m max rho^{m-1})`` the update is a symmetric,
doubly stochastic averaging of neighbours, so mass is conserved, the maximum
cannot grow and every convex functional (``int rho^q``, ``int rho log rho``)
is nonincreasing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn, gamma

from . import defaults
from .errors import CFLViolation, MonotonicityError, SupportOverflowError, ValidationError
from .functionals import DiagnosticsRecord, diagnostics_record, dissipation, entropy, lq_integral
from .grid import DensityField, Grid, integrate, laplacian_array

log = logging.getLogger(__name__)

__all__ = [
    "PmeStepReport",
    "PmeTrajectory",
    "admissible_dt",
    "pme_step",
    "pme_solve",
    "barenblatt",
    "barenblatt_constant",
    "barenblatt_exponents",
    "barenblatt_radius",
    "barenblatt_values",
    "lq_dissipation_coefficient",
]


def lq_dissipation_coefficient(m: float, q: float) -> float:
    """``4 m q (q-1) / (m+q-1)^2`` from the ``L^q`` energy identity."""
    return 4.0 * m * q * (q - 1) / (m + q - 1) ** 2


def admissible_dt(rho, m: float, cfl_safety: float = defaults.CFL_SAFETY) -> float:
    vmax = float(rho.values.max())
    if vmax <= 0:
        return math.inf
    inv_h2 = sum(1.0 / h**2 for h in rho.grid.spacing)
    return cfl_safety / (2.0 * inv_h2 * m * vmax ** (m - 1))


def touches_boundary(values: np.ndarray, margin: int, rel_threshold: float = 0.0) -> bool:
    """True when a value above ``rel_threshold * max`` lies within ``margin`` cells of the wall."""
    if margin <= 0:
        return False
    cut = rel_threshold * float(values.max()) if values.size else 0.0
    for k in range(values.ndim):
        lo = np.take(values, range(margin), axis=k)
        hi = np.take(values, range(values.shape[k] - margin, values.shape[k]), axis=k)
        if np.any(lo > cut) or np.any(hi > cut):
            return True
    return False


@dataclass
class PmeStepReport:
    dt_used: float
    mass_before: float
    mass_after: float
    lq_identity_defect: dict
    entropy_identity_defect: float
    max_value: float
    clamped_mass: float = 0.0
    boundary_contact: bool = False


def pme_step(rho: DensityField, m: float, dt: float, cfl_safety: float = defaults.CFL_SAFETY, track_q=(2.0,), margin: int = defaults.SUPPORT_MARGIN_CELLS):
    """One forward-Euler step ``rho + dt * Lap_h(rho^m)``.

    Raises :class:`CFLViolation` when ``dt`` exceeds the admissible step.
    The report carries per-step defects of the ``L^q`` and entropy identities
    (left-point dissipation), useful for checking the discrete balance.
    """
    if m <= 1:
        raise ValidationError(f"requires m > 1, got m={m}")
    limit = admissible_dt(rho, m, cfl_safety)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(dt, limit)
    grid = rho.grid
    v = rho.values
    new = v + dt * laplacian_array(v**m, grid.spacing)
    vol = grid.cell_volume
    mass_before = float(v.sum() * vol)
    mass_after = float(new.sum() * vol)
    neg = new < 0
    clamped = 0.0
    if neg.any():
        clamped = float(-new[neg].sum() * vol)
        new[neg] = 0.0
        log.debug("clamped %.3g of negative round-off mass", clamped)
    out = DensityField(grid, new, rho.time + dt)
    lq_def = {}
    for q in track_q:
        lq_def[q] = (
            lq_integral(out, q) - lq_integral(rho, q) + dt * lq_dissipation_coefficient(m, q) * dissipation(rho, m, q)
        )
    ent_def = entropy(out).signed - entropy(rho).signed + dt * (4.0 / m) * dissipation(rho, m, 1.0)
    report = PmeStepReport(
        dt,
        mass_before,
        mass_after,
        lq_def,
        ent_def,
        float(new.max()),
        clamped,
        touches_boundary(new, margin, defaults.SUPPORT_THRESHOLD),
    )
    return out, report


# --- Barenblatt closed form ----------------------------------------------


def barenblatt_exponents(d: int, m: float):
    """``(alpha, beta, k)`` with ``beta = 1/(d(m-1)+2)``, ``alpha = d beta``."""
    beta = 1.0 / (d * (m - 1) + 2)
    return d * beta, beta, (m - 1) * beta / (2 * m)


def barenblatt_constant(d: int, m: float, total_mass: float = 1.0) -> float:
    """Closed-form ``C`` giving ``int B = total_mass`` on all of R^d."""
    _, _, k = barenblatt_exponents(d, m)
    s = 1.0 / (m - 1)
    surface = 2 * math.pi ** (d / 2) / gamma(d / 2)
    # int (C - k r^2)_+^s dx = surface * (C/k)^{d/2} C^s * B(d/2, s+1) / 2
    unit = surface * k ** (-d / 2) * 0.5 * beta_fn(d / 2, s + 1)
    return (total_mass / unit) ** (1.0 / (d / 2 + s))


def barenblatt_radius(d: int, m: float, t: float, C: float) -> float:
    _, beta, k = barenblatt_exponents(d, m)
    return math.sqrt(C / k) * t**beta


def barenblatt_values(x: np.ndarray, d: int, m: float, t: float, C: float, center=None) -> np.ndarray:
    """``t^{-alpha} (C - k |x - x0|^2 t^{-2 beta})_+^{1/(m-1)}`` at points ``x``."""
    if t <= 0:
        raise ValidationError(f"Barenblatt profile needs t > 0, got {t}")
    alpha, beta, k = barenblatt_exponents(d, m)
    x = np.atleast_2d(x)
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    r2 = np.sum((x - c) ** 2, axis=-1)
    core = np.maximum(C - k * r2 * t ** (-2 * beta), 0.0)
    return t ** (-alpha) * core ** (1.0 / (m - 1))


def barenblatt(d: int, m: float, t: float, total_mass: float = 1.0, center=None, grid: Grid | None = None, normalize: str = "grid") -> DensityField:
    """Barenblatt profile sampled at cell centers.

    ``normalize="grid"`` bisects on ``C`` until the grid quadrature equals
    ``total_mass`` (relative tolerance 1e-10); ``"exact"`` uses the closed
    form constant, so the grid mass is only ``total_mass + O(h^2)``.
    """
    if grid is None:
        raise ValidationError("barenblatt needs a grid")
    if grid.dim != d:
        raise ValidationError(f"grid dimension {grid.dim} does not match d={d}")
    if m <= 1:
        raise ValidationError(f"requires m > 1, got m={m}")
    if t <= 0:
        raise ValidationError(f"Barenblatt profile needs t > 0, got {t}")
    pts = grid.points

    def field_for(C):
        return barenblatt_values(pts, d, m, t, C, center).reshape(grid.shape)

    C = barenblatt_constant(d, m, total_mass)
    if normalize == "grid" and total_mass > 0:
        vol = grid.cell_volume

        def grid_mass(C):
            return float(field_for(C).sum() * vol)

        lo, hi = 0.5 * C, 2.0 * C
        while grid_mass(lo) > total_mass:
            lo *= 0.5
        while grid_mass(hi) < total_mass:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if grid_mass(mid) < total_mass:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-3 * defaults.BARENBLATT_RTOL * mid:
                break
        C = 0.5 * (lo + hi)
    elif normalize not in ("grid", "exact"):
        raise ValidationError(f"normalize must be 'grid' or 'exact', got {normalize!r}")
    return DensityField(grid, field_for(C), t)


# --- time stepping -----------------------------------------------------------


@dataclass
class PmeTrajectory:
    m: float
    times: list
    fields: list
    ledger: list
    dissipation_sums: dict = field(default_factory=dict)
    entropy_dissipation_sum: float = 0.0
    clamped_mass: float = 0.0
    steps: int = 0
    initial_lq: dict = field(default_factory=dict)

    @property
    def final(self) -> DensityField:
        return self.fields[-1]

    def lq_identity_residual(self, q: float) -> float:
        """Relative defect of ``int rho^q(T) + c_q sum dt D_q = int rho_0^q``."""
        lhs = lq_integral(self.final, q) + lq_dissipation_coefficient(self.m, q) * self.dissipation_sums[q]
        return (lhs - self.initial_lq[q]) / self.initial_lq[q]


def pme_solve(
    rho0: DensityField,
    m: float,
    T: float,
    cfl_safety: float = defaults.CFL_SAFETY,
    output_times=(),
    track_q=None,
    p: float = 2.0,
    q: float = 2.0,
    record: bool = True,
    check_monotone: bool = True,
    margin: int = defaults.SUPPORT_MARGIN_CELLS,
) -> PmeTrajectory:
    """Advance ``rho0`` (at its own time stamp) to the absolute time ``T``.

    Fields are stored at ``rho0.time``, every requested output time in
    between, and ``T``. Tracked ``int rho^q`` (default ``q in {2, m, m+1}``)
    and ``int rho log rho`` are checked to be nonincreasing after each step.
    Raises :class:`SupportOverflowError` when the support comes within
    ``margin`` cells of the wall.
    """
    if m <= 1:
        raise ValidationError(f"requires m > 1, got m={m}")
    t0 = rho0.time
    if T < t0:
        raise ValidationError(f"final time {T} precedes the initial time {t0}")
    if track_q is None:
        track_q = sorted({2.0, float(m), float(m) + 1.0})
    track_q = [float(x) for x in track_q]
    if touches_boundary(rho0.values, margin, defaults.SUPPORT_THRESHOLD):
        raise SupportOverflowError(t0, "initial support too close to the wall")
    stops = sorted({float(s) for s in output_times if t0 < s < T} | {float(T)})
    traj = PmeTrajectory(m, [t0], [rho0], [], {qq: 0.0 for qq in track_q})
    traj.initial_lq = {qq: lq_integral(rho0, qq) for qq in track_q}
    if record:
        traj.ledger.append(diagnostics_record(rho0, m, q, p, tracked_q=track_q))
    rho = rho0
    prev_lq = dict(traj.initial_lq)
    prev_ent = entropy(rho0).signed
    rtol = defaults.MONOTONE_RTOL
    for stop in stops:
        while rho.time < stop:
            dt = min(admissible_dt(rho, m, cfl_safety), stop - rho.time)
            if not math.isfinite(dt):
                # vacuum everywhere: nothing moves
                rho = rho.replace(time=stop)
                break
            for qq in track_q:
                traj.dissipation_sums[qq] += dt * dissipation(rho, m, qq)
            traj.entropy_dissipation_sum += dt * (4.0 / m) * dissipation(rho, m, 1.0)
            new, rep = pme_step(rho, m, dt, cfl_safety, track_q=(), margin=margin)
            if stop - new.time < 1e-12 * max(1.0, abs(stop)):
                new = new.replace(time=stop)
            rho = new
            traj.steps += 1
            traj.clamped_mass += rep.clamped_mass
            if rep.boundary_contact:
                raise SupportOverflowError(rho.time)
            if check_monotone:
                for qq in track_q:
                    cur = lq_integral(rho, qq)
                    if cur > prev_lq[qq] * (1 + rtol) + 1e-300:
                        raise MonotonicityError(f"int rho^{qq:g} increased at t={rho.time:.6g}")
                    prev_lq[qq] = cur
                ent = entropy(rho).signed
                if ent > prev_ent + rtol * max(1.0, abs(prev_ent)):
                    raise MonotonicityError(f"entropy increased at t={rho.time:.6g}")
                prev_ent = ent
        traj.times.append(rho.time)
        traj.fields.append(rho)
        if record:
            traj.ledger.append(diagnostics_record(rho, m, q, p, tracked_q=track_q))
    return traj
