"""Splitting scheme for the porous medium equation with drift.

On each subinterval ``[t_i, t_{i+1}]`` of length ``T/n`` the homogeneous PME
is solved first, and its output is then transported along the flow of ``V``
over the same subinterval. A field requested at an interior time ``t`` is the
PME field at ``t`` pushed from ``t_i`` to ``t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import defaults
from .drift import VectorFieldSpec
from .errors import MonotonicityError, SupportOverflowError, ValidationError
from .flow import FlowConfig, TransportReport, divergence_integral, push_forward, transport_fv
from .functionals import diagnostics_record, lq_integral, lq_norm, mass, support_radius
from .grid import DensityField
from .pme import barenblatt_exponents, pme_solve

log = logging.getLogger(__name__)

__all__ = [
    "SplittingConfig",
    "SplitTrajectory",
    "split_solve",
    "split_cycle",
    "ConvergenceTable",
    "convergence_study",
    "SupportEnvelope",
    "support_envelope",
    "drift_sup_integral",
]

TRANSPORT_MODES = ("semi_lagrangian", "upwind")


@dataclass(frozen=True)
class SplittingConfig:
    m: float = 2.0
    T: float = 1.0
    n: int = 8
    q_list: tuple = (2.0,)
    p: float = 2.0
    transport_mode: str = "semi_lagrangian"
    cfl_safety: float = defaults.CFL_SAFETY
    output_times: tuple = ()
    strang: bool = False
    flow_substeps: int = defaults.FLOW_SUBSTEPS
    lq_slack: float = defaults.LQ_SLACK_PER_LENGTH
    check_lq: bool = True

    def __post_init__(self):
        if not self.m > 1:
            raise ValidationError(f"requires m > 1, got m={self.m}")
        if not self.T > 0:
            raise ValidationError(f"requires T > 0, got T={self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"requires n >= 1, got n={self.n}")
        if not (1 < self.p <= 2):
            raise ValidationError(f"requires 1 < p <= 2, got p={self.p}")
        if any(q < 1 for q in self.q_list):
            raise ValidationError(f"requires every tracked q >= 1, got {self.q_list}")
        if self.transport_mode not in TRANSPORT_MODES:
            raise ValidationError(f"transport_mode must be one of {TRANSPORT_MODES}")
        if not (0 < self.cfl_safety <= 1):
            raise ValidationError(f"requires 0 < cfl_safety <= 1, got {self.cfl_safety}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "q_list", tuple(float(q) for q in self.q_list))
        object.__setattr__(self, "output_times", tuple(sorted(float(t) for t in self.output_times)))

    @property
    def primary_q(self) -> float:
        return self.q_list[0] if self.q_list else 2.0

    def echo(self) -> dict:
        return asdict(self)


@dataclass
class SplitTrajectory:
    config: SplittingConfig
    times: list
    fields: list
    pme_fields: list
    ledger: list
    original_mass: float
    transport_reports: list = field(default_factory=list)
    lq_defects: dict = field(default_factory=dict)
    drift_kind: str = "zero"
    # cumulative int_0^t int |grad rho^{(m+q-1)/2}|^2 of the PME substeps, per subinterval end
    dissipation_integrals: dict = field(default_factory=dict)

    @property
    def final(self) -> DensityField:
        return self.fields[-1]

    @property
    def initial(self) -> DensityField:
        return self.fields[0]

    def at(self, t: float) -> DensityField:
        for s, f in zip(self.times, self.fields):
            if math.isclose(s, t, rel_tol=1e-12, abs_tol=1e-12):
                return f
        raise KeyError(f"no stored field at t={t}")

    def denormalized(self, rho: DensityField) -> DensityField:
        return rho.replace(values=rho.values * self.original_mass)

    def end_fields(self):
        """Transported fields at the subinterval ends ``t_1, ..., t_n``."""
        ends = [self.times[0] + (i + 1) * self.config.T / self.config.n for i in range(self.config.n)]
        return [self.at(t) for t in ends]

    def energy_excess(self, q: float, coefficient: float) -> float:
        """``max_i (int rho^q(t_i) + coefficient * int_0^{t_i} D_q) / int rho_0^q - 1``."""
        base = lq_integral(self.initial, q)
        vals = [lq_integral(f, q) + coefficient * D for f, D in zip(self.end_fields(), self.dissipation_integrals[q])]
        return max(vals) / base - 1.0


def drift_sup_integral(V: VectorFieldSpec, grid, s: float, t: float, samples: int = 9) -> float:
    """``int_s^t ||V(., tau)||_inf dtau`` by Simpson's rule."""
    if V.is_zero or s == t:
        return 0.0
    if samples % 2 == 0:
        samples += 1
    taus = np.linspace(s, t, samples)
    vals = np.array([V.sup_norm(grid, tau) for tau in taus])
    w = np.ones(samples)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float(abs(t - s) / (3 * (samples - 1)) * np.dot(w, vals))


def _transport(rho, V, s, t, config: SplittingConfig, track_q):
    if config.transport_mode == "upwind":
        out, rep = transport_fv(rho, V, s, t, cfl_safety=config.cfl_safety)
        if rep.support_exit:
            raise SupportOverflowError(t, "upwind transport reached the wall")
        return out, rep
    return push_forward(rho, V, s, t, FlowConfig(config.flow_substeps), track_q=track_q, strict=True)


def split_cycle(rho: DensityField, V: VectorFieldSpec, a: float, b: float, config: SplittingConfig, interior=()):
    """One subinterval ``[a, b]``: PME then transport (or the Strang variant).

    Returns ``(fields, pme_end, reports, dissipation)`` where ``fields`` maps
    each time in ``interior`` and ``b`` to the split solution there and
    ``dissipation`` holds the PME dissipation integrals over ``[a, b]``.
    """
    track_q = config.q_list
    pme_q = sorted({2.0, float(config.m), float(config.m) + 1.0} | set(track_q))
    reports = []
    if config.strang:
        mid = 0.5 * (a + b)
        half, rep = _transport(rho, V, a, mid, config, track_q)
        reports.append(rep)
        traj = pme_solve(half.replace(time=a), config.m, b, config.cfl_safety, track_q=pme_q, record=False)
        pme_end = traj.final
        out, rep = _transport(pme_end.replace(time=mid), V, mid, b, config, track_q)
        reports.append(rep)
        return {b: out}, pme_end, reports, traj.dissipation_sums
    stops = [t for t in interior if a < t < b]
    traj = pme_solve(rho, config.m, b, config.cfl_safety, output_times=stops, track_q=pme_q, record=False)
    fields = {}
    for t, f in zip(traj.times[1:], traj.fields[1:]):
        out, rep = _transport(f, V, a, t, config, track_q)
        reports.append(rep)
        fields[t] = out
    return fields, traj.final, reports, traj.dissipation_sums


def split_solve(rho0: DensityField, V: VectorFieldSpec, config: SplittingConfig) -> SplitTrajectory:
    """Run the splitting scheme on ``[t0, t0 + T]`` with ``t0 = rho0.time``.

    The initial datum is normalized to unit mass (the original mass is kept
    on the trajectory). After every subinterval the tracked ``L^q`` norms are
    checked against ``||rho0||_q exp((q-1)/q int ||div V||_inf) (1 + C h)``.
    """
    if V.dim != rho0.grid.dim:
        raise ValidationError(f"drift dimension {V.dim} does not match grid dimension {rho0.grid.dim}")
    m0 = mass(rho0)
    if m0 <= 0:
        raise ValidationError("initial density has zero mass")
    rho = rho0.replace(values=rho0.values / m0)
    grid = rho.grid
    t0 = rho.time
    T_end = t0 + config.T
    edges = [t0 + i * config.T / config.n for i in range(config.n + 1)]
    edges[-1] = T_end
    extra = [t for t in config.output_times if t0 < t < T_end]

    def record(f):
        return diagnostics_record(f, config.m, config.primary_q, config.p, V=None if V.is_zero else V, tracked_q=config.q_list)

    traj = SplitTrajectory(config, [t0], [rho], [rho], [record(rho)], m0, drift_kind=V.kind)
    base = {q: lq_norm(rho, q) for q in config.q_list}
    traj.lq_defects = {q: [] for q in config.q_list}
    traj.dissipation_integrals = {q: [] for q in config.q_list}
    diss_acc = {q: 0.0 for q in config.q_list}
    slack = 1.0 + config.lq_slack * grid.h
    div_acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        interior = [t for t in extra if a < t < b]
        fields, pme_end, reports, diss = split_cycle(rho, V, a, b, config, interior)
        traj.transport_reports.extend(reports)
        for q in config.q_list:
            diss_acc[q] += diss[q]
            traj.dissipation_integrals[q].append(diss_acc[q])
        div_acc += divergence_integral(V, grid, a, b)
        for t in sorted(fields):
            f = fields[t]
            traj.times.append(t)
            traj.fields.append(f)
            traj.ledger.append(record(f))
        traj.pme_fields.append(pme_end)
        rho = fields[b]
        for q in config.q_list:
            factor = math.exp((q - 1) / q * div_acc) if math.isfinite(q) else math.exp(div_acc)
            defect = lq_norm(rho, q) / (base[q] * factor) - 1.0
            traj.lq_defects[q].append(defect)
            if config.check_lq and defect > slack - 1.0:
                raise MonotonicityError(f"L^{q:g} bound violated at t={b:.6g} (excess {defect:.3g})")
    return traj


# --- refinement studies ------------------------------------------------------


@dataclass
class ConvergenceTable:
    n_list: list
    l1_errors: list
    w2_errors: list
    pairwise_orders: list
    fitted_order: float
    monotone: bool
    reference_n: int

    def rows(self):
        return list(zip(self.n_list, self.l1_errors, self.w2_errors))


def _fit_order(ns, errs):
    ns = np.asarray(ns, dtype=float)
    errs = np.asarray(errs, dtype=float)
    good = errs > 0
    if good.sum() < 2:
        return math.nan
    slope = np.polyfit(np.log(ns[good]), np.log(errs[good]), 1)[0]
    return float(-slope)


def convergence_study(rho0: DensityField, V: VectorFieldSpec, config: SplittingConfig, n_list, with_w2: bool = True) -> ConvergenceTable:
    """Errors at ``t0 + T`` of runs with each ``n`` against the finest ``n``."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValidationError("n_list must be strictly increasing with at least two entries")
    finals = {}
    for n in n_list:
        cfg = SplittingConfig(**{**config.echo(), "n": n})
        finals[n] = split_solve(rho0, V, cfg).final
    ref = finals[n_list[-1]]
    runs = n_list[:-1]
    vol = ref.grid.cell_volume
    l1 = [float(np.abs(finals[n].values - ref.values).sum() * vol) for n in runs]
    w2 = []
    if with_w2:
        from .wasserstein import wasserstein_auto

        w2 = [wasserstein_auto(finals[n], ref, 2.0) for n in runs]
    orders = [
        math.log(e0 / e1) / math.log(n1 / n0) if e0 > 0 and e1 > 0 else math.nan
        for (n0, e0), (n1, e1) in zip(zip(runs, l1), zip(runs[1:], l1[1:]))
    ]
    monotone = all(b < a for a, b in zip(l1, l1[1:]))
    return ConvergenceTable(runs, l1, w2, orders, _fit_order(runs, l1), monotone, n_list[-1])


# --- support envelope ----------------------------------------------------------


@dataclass
class SupportEnvelope:
    times: np.ndarray
    radii: np.ndarray
    bound: np.ndarray
    discrete_bound: np.ndarray
    R0: float
    beta: float
    cell: float

    @property
    def excess(self) -> np.ndarray:
        """Measured radius minus bound, in cells (<= 2 is the pass condition)."""
        return (self.radii - self.bound) / self.cell


def support_envelope(trajectory: SplitTrajectory, V: VectorFieldSpec) -> SupportEnvelope:
    """Measured support radii about the origin against ``e^{beta t}(R0 + int ||V||_inf)``.

    ``discrete_bound`` is the subinterval recursion
    ``R_i = R_{i-1}(1 + beta T/n) + int_{t_{i-1}}^{t_i} ||V||_inf`` evaluated at
    the stored times (interpolating within subintervals).
    """
    cfg = trajectory.config
    grid = trajectory.initial.grid
    d = grid.dim
    _, beta, _ = barenblatt_exponents(d, cfg.m)
    origin = np.zeros(d)
    t0 = trajectory.times[0]
    radii = np.array([support_radius(f, center=origin) for f in trajectory.fields])
    R0 = float(radii[0])
    times = np.asarray(trajectory.times, dtype=float)
    bound = np.array([math.exp(beta * (t - t0)) * (R0 + drift_sup_integral(V, grid, t0, t)) for t in times])
    step = cfg.T / cfg.n
    disc = []
    for t in times:
        tau = t - t0
        i = min(int(math.floor(tau / step + 1e-12)), cfg.n)
        R = R0
        for j in range(i):
            R = R * (1 + beta * step) + drift_sup_integral(V, grid, t0 + j * step, t0 + (j + 1) * step)
        rest = tau - i * step
        if rest > 1e-14:
            R = R * (1 + beta * rest) + drift_sup_integral(V, grid, t0 + i * step, t)
        disc.append(R)
    return SupportEnvelope(times, radii, bound, np.array(disc), R0, beta, grid.diagonal)
