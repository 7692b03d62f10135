"""Discrete Wasserstein distances, curve moduli and the W2 contraction check.

Exact distances: quantile coupling in 1D, network simplex (POT) otherwise.
The entropic route is a log-domain Sinkhorn with epsilon scaling and the
debiased divergence ``S = OT(a,b) - (OT(a,a) + OT(b,b)) / 2``.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from . import defaults
from .errors import ConvergenceError, ValidationError
from .grid import DensityField

# keep POT from importing every deep learning backend it can find
for _name in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")
import ot  # noqa: E402

log = logging.getLogger(__name__)

__all__ = [
    "DiscreteMeasure",
    "wasserstein_1d",
    "wasserstein_discrete",
    "wasserstein_auto",
    "coarsen",
    "entropic_wasserstein",
    "EntropicReport",
    "CurveModulusReport",
    "curve_modulus",
    "ContractionReport",
    "contraction_check",
]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    grid: object = None
    dropped_mass: float = 0.0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.ndim(self.points) == 1 and len(self.weights) > 1:
            pts = pts.T
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) == 0:
            raise ValidationError("empty measure")
        if len(pts) != len(w):
            raise ValidationError(f"{len(pts)} points but {len(w)} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValidationError("measure has zero total weight")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w / total)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_field(cls, rho: DensityField, drop_fraction: float = defaults.OT_DROP_FRACTION) -> "DiscreteMeasure":
        """Cell masses at cell centers; cells below ``drop_fraction * max`` are dropped."""
        v = rho.values.ravel()
        vmax = float(v.max())
        if vmax <= 0:
            raise ValidationError("empty measure: density vanishes identically")
        keep = v >= drop_fraction * vmax
        keep &= v > 0
        dropped = float(v[~keep].sum() / v.sum())
        if dropped > 0:
            log.debug("dropped %.3g of the mass below the OT threshold", dropped)
        return cls(rho.grid.points[keep], v[keep], rho.grid, dropped)

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), np.ones(1))


def _as_measure(obj) -> DiscreteMeasure:
    if isinstance(obj, DiscreteMeasure):
        return obj
    if isinstance(obj, DensityField):
        return DiscreteMeasure.from_field(obj)
    raise ValidationError(f"cannot interpret {type(obj).__name__} as a measure")


def wasserstein_1d(mu, nu, p: float = 2.0) -> float:
    """Exact ``W_p`` on the line from the monotone (quantile) coupling."""
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.dim != 1 or nu.dim != 1:
        raise ValidationError("wasserstein_1d needs one-dimensional measures")
    if p < 1:
        raise ValidationError(f"requires p >= 1, got {p}")
    ix, iy = np.argsort(mu.points[:, 0], kind="stable"), np.argsort(nu.points[:, 0], kind="stable")
    x, y = mu.points[ix, 0], nu.points[iy, 0]
    cx, cy = np.cumsum(mu.weights[ix]), np.cumsum(nu.weights[iy])
    cx[-1] = cy[-1] = 1.0
    u = np.union1d(cx, cy)
    du = np.diff(np.concatenate([[0.0], u]))
    # quantile on (u_{k-1}, u_k]: first index whose cumulative weight reaches u_k
    qx = x[np.minimum(np.searchsorted(cx, u, side="left"), len(x) - 1)]
    qy = y[np.minimum(np.searchsorted(cy, u, side="left"), len(y) - 1)]
    if math.isinf(p):
        return float(np.max(np.abs(qx - qy)[du > 0]))
    return float(np.dot(du, np.abs(qx - qy) ** p) ** (1.0 / p))


def _cost(mu, nu, p):
    D = cdist(mu.points, nu.points)
    return D**p


def _exact(mu, nu, p):
    if len(mu) * len(nu) > defaults.OT_EXACT_MAX_PRODUCT:
        raise ValidationError(
            f"exact OT limited to support product <= {defaults.OT_EXACT_MAX_PRODUCT:.0f}, got {len(mu) * len(nu)}"
        )
    M = _cost(mu, nu, p)
    cost = ot.emd2(mu.weights, nu.weights, M, numItermax=10_000_000)
    return float(max(cost, 0.0) ** (1.0 / p))


@dataclass
class EntropicReport:
    value: float
    raw: float
    epsilon: float
    debias: float
    iterations: int
    marginal_error: float


def _sinkhorn(a, b, C, eps_list, tol, max_iter, symmetric=False):
    """Log-domain Sinkhorn with epsilon scaling; returns the dual value.

    Cross terms alternate the two half-steps; symmetric self terms use the
    averaged update ``f <- (f + T f) / 2``, which converges in a few dozen
    iterations even when the support has near-duplicate atoms.
    """
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    total = 0
    err = math.inf

    def marginal_error(eps):
        logP = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
        # after the g half-step the column marginal is exact; check the rows
        return float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())

    for k, eps in enumerate(eps_list):
        last = k == len(eps_list) - 1
        for it in range(int(max_iter)):
            Tf = -eps * logsumexp((g[None, :] - C) / eps + lb[None, :], axis=1)
            if symmetric:
                f = g = 0.5 * (f + Tf)
            else:
                f = Tf
                g = -eps * logsumexp((f[:, None] - C) / eps + la[:, None], axis=0)
            total += 1
            if it % 10 == 0 or it == max_iter - 1:
                err = marginal_error(eps)
                if err <= tol:
                    break
        else:
            if last:
                raise ConvergenceError(f"Sinkhorn did not converge at eps={eps:.3g} (marginal error {err:.3g})")
    return float(np.dot(a, f) + np.dot(b, g)), total, err


def entropic_wasserstein(mu, nu, p: float = 2.0, eps_start=None, eps_end=None, stages: int = defaults.SINKHORN_STAGES,
                         tol: float = defaults.SINKHORN_TOL, max_iter: int = defaults.SINKHORN_MAX_ITER) -> EntropicReport:
    """Debiased entropic estimate of ``W_p``.

    ``eps`` runs geometrically from ``eps_start`` to ``eps_end``, both given
    as fractions of ``diameter**p`` of the joint support.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    eps_start = defaults.SINKHORN_EPS_START if eps_start is None else eps_start
    eps_end = defaults.SINKHORN_EPS_END if eps_end is None else eps_end
    pts = np.vstack([mu.points, nu.points])
    diam = float(np.linalg.norm(pts.max(0) - pts.min(0)))
    if diam == 0:
        return EntropicReport(0.0, 0.0, 0.0, 0.0, 0, 0.0)
    scale = diam**p
    eps_list = np.geomspace(eps_start * scale, eps_end * scale, max(stages, 1))
    a, b = mu.weights, nu.weights
    s_aa, it2, _ = _sinkhorn(a, a, _cost(mu, mu, p), eps_list, tol, max_iter, symmetric=True)
    if mu is nu or (np.array_equal(mu.points, nu.points) and np.array_equal(a, b)):
        return EntropicReport(0.0, s_aa, float(eps_list[-1]), s_aa, 2 * it2, 0.0)
    s_bb, it3, _ = _sinkhorn(b, b, _cost(nu, nu, p), eps_list, tol, max_iter, symmetric=True)
    raw, it1, err = _sinkhorn(a, b, _cost(mu, nu, p), eps_list, tol, max_iter)
    debias = 0.5 * (s_aa + s_bb)
    div = max(raw - debias, 0.0)
    return EntropicReport(div ** (1.0 / p), raw, float(eps_list[-1]), debias, it1 + it2 + it3, err)


def wasserstein_discrete(mu, nu, p: float = 2.0, method: str = "exact") -> float:
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.dim != nu.dim:
        raise ValidationError("measures live in different dimensions")
    if mu.dim not in (1, 2):
        raise ValidationError(f"only d in {{1, 2}} supported, got {mu.dim}")
    if p < 1:
        raise ValidationError(f"requires p >= 1, got {p}")
    if method == "exact":
        return _exact(mu, nu, p)
    if method == "entropic":
        return entropic_wasserstein(mu, nu, p).value
    raise ValidationError(f"method must be 'exact' or 'entropic', got {method!r}")


def coarsen(rho: DensityField, factor: int = 2) -> DiscreteMeasure:
    """Aggregate ``factor``-wide blocks of cells into one atom at the block's
    barycenter. Moves no mass farther than the block diagonal."""
    grid = rho.grid
    pad = [(0, (-n) % factor) for n in grid.shape]
    v = np.pad(rho.values, pad)
    coords = [np.pad(a, pad, mode="edge") for a in grid.mesh]
    shape = []
    for n in v.shape:
        shape += [n // factor, factor]
    axes = tuple(range(1, 2 * grid.dim, 2))
    w = v.reshape(shape).sum(axis=axes)
    bary = [(c * v).reshape(shape).sum(axis=axes) for c in coords]
    keep = w > defaults.OT_DROP_FRACTION * w.max()
    pts = np.stack([b[keep] / w[keep] for b in bary], axis=-1)
    return DiscreteMeasure(pts, w[keep], grid)


def wasserstein_auto(mu, nu, p: float = 2.0) -> float:
    """Quantile formula in 1D, network simplex otherwise.

    Grid fields whose supports are too large for the exact solver are
    block-aggregated (2x2, 4x4, ...) until they fit, which costs about one
    block diagonal of accuracy. Plain measures that are too large go to the
    entropic solver.
    """
    fields_ = (mu, nu) if isinstance(mu, DensityField) and isinstance(nu, DensityField) else None
    mu, nu = _as_measure(mu), _as_measure(nu)
    if mu.dim == 1:
        return wasserstein_1d(mu, nu, p)
    factor = 1
    while len(mu) * len(nu) > defaults.OT_EXACT_MAX_PRODUCT:
        if fields_ is None:
            return entropic_wasserstein(mu, nu, p).value
        factor *= 2
        mu, nu = coarsen(fields_[0], factor), coarsen(fields_[1], factor)
    if factor > 1:
        log.info("aggregated %dx%d cell blocks for exact OT", factor, factor)
    return _exact(mu, nu, p)


# --- curves ------------------------------------------------------------------


def _fields_and_times(trajectory):
    if hasattr(trajectory, "fields") and hasattr(trajectory, "times"):
        return list(trajectory.fields), [float(t) for t in trajectory.times]
    fields = list(trajectory)
    return fields, [f.time for f in fields]


@dataclass
class CurveModulusReport:
    pairs: list
    gaps: np.ndarray
    distances: np.ndarray
    residuals: np.ndarray
    gamma: float
    constant: float
    fit_residual: float
    defined: bool = True
    drift_mode: str = "none"


def _select_pairs(n, pair_count):
    allp = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if pair_count is None or pair_count >= len(allp):
        return allp
    idx = np.unique(np.linspace(0, len(allp) - 1, pair_count).round().astype(int))
    return [allp[k] for k in idx]


def curve_modulus(trajectory, p: float = 2.0, pair_count: int | None = None, V=None, drift_mode: str = "linear",
                  floor: float = 1e-14) -> CurveModulusReport:
    """Fit ``W_p(rho(s), rho(t)) ~ C (t - s)^gamma`` over snapshot pairs.

    With a drift ``V`` the term ``D = int_s^t ||V||_inf`` is removed first:
    ``drift_mode="linear"`` uses ``W - D``; ``"quadrature"`` uses
    ``sqrt(W^2 - D^2)``, which is exact for a uniform translation
    superposed on a centered evolution.
    """
    from .splitting import drift_sup_integral

    fields, times = _fields_and_times(trajectory)
    if len(fields) < 6:
        raise ValidationError(f"curve_modulus needs at least 6 snapshots, got {len(fields)}")
    if drift_mode not in ("linear", "quadrature"):
        raise ValidationError(f"drift_mode must be 'linear' or 'quadrature', got {drift_mode!r}")
    pairs = _select_pairs(len(fields), pair_count)
    gaps = np.array([times[j] - times[i] for i, j in pairs])
    dist = np.array([wasserstein_auto(fields[i], fields[j], p) for i, j in pairs])
    if V is not None and not V.is_zero:
        grid = fields[0].grid
        D = np.array([drift_sup_integral(V, grid, times[i], times[j]) for i, j in pairs])
        if drift_mode == "linear":
            resid = np.maximum(dist - D, 0.0)
        else:
            resid = np.sqrt(np.maximum(dist**2 - D**2, 0.0))
        mode = drift_mode
    else:
        resid = dist.copy()
        mode = "none"
    good = (resid > floor) & (gaps > 0)
    if good.sum() < 2 or np.ptp(np.log(gaps[good])) == 0:
        return CurveModulusReport(pairs, gaps, dist, resid, math.nan, math.nan, math.nan, False, mode)
    A = np.vstack([np.log(gaps[good]), np.ones(good.sum())]).T
    coef, *_ = np.linalg.lstsq(A, np.log(resid[good]), rcond=None)
    fit = float(np.sqrt(np.mean((A @ coef - np.log(resid[good])) ** 2)))
    return CurveModulusReport(pairs, gaps, dist, resid, float(coef[0]), float(math.exp(coef[1])), fit, True, mode)


# --- contraction -------------------------------------------------------------


@dataclass
class ContractionReport:
    times: np.ndarray
    w2_squared: np.ndarray
    initial: float
    lipschitz_integral: np.ndarray
    bound: np.ndarray
    gronwall_bound: np.ndarray
    slack: float
    holds: bool
    details: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        """``W2^2(t) / (e^{int ||grad V||} W2^2(0))``."""
        base = np.exp(self.lipschitz_integral) * self.initial
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(base > 0, self.w2_squared / base, 0.0)


def _lipschitz_integral(V, grid, s, t, samples=9):
    if V.is_zero or s == t:
        return 0.0
    taus = np.linspace(s, t, samples)
    vals = np.array([V.gradient_norm(grid, tau) for tau in taus])
    return float(np.trapezoid(vals, taus)) if hasattr(np, "trapezoid") else float(np.trapz(vals, taus))


def contraction_check(rho1_0: DensityField, rho2_0: DensityField, V, config, slack: float = defaults.CONTRACTION_SLACK) -> ContractionReport:
    """Evolve both data with the splitting scheme and compare
    ``W2^2(rho1(t), rho2(t))`` against ``exp(int_0^t ||grad V||_inf) W2^2(0) (1 + slack)``.

    ``gronwall_bound`` carries the exponent doubled, which is what the
    estimate ``d/dt W2^2 <= 2 ||grad V||_inf W2^2`` gives for the pure
    transport part; ``holds`` refers to the tighter ``bound``.
    """
    from .splitting import split_solve

    if rho1_0.grid != rho2_0.grid:
        raise ValidationError("both initial data must live on the same grid")
    t1 = split_solve(rho1_0, V, config)
    t2 = split_solve(rho2_0, V, config)
    grid = rho1_0.grid
    t0 = t1.times[0]
    times, w2sq, lips = [], [], []
    for s, f1, f2 in zip(t1.times, t1.fields, t2.fields):
        times.append(s)
        w2sq.append(wasserstein_auto(f1, f2, 2.0) ** 2)
        lips.append(_lipschitz_integral(V, grid, t0, s))
    times, w2sq, lips = map(np.asarray, (times, w2sq, lips))
    w0 = float(w2sq[0])
    bound = np.exp(lips) * w0 * (1 + slack)
    gron = np.exp(2 * lips) * w0 * (1 + slack)
    tol = 1e-12 * max(w0, 1e-300)
    holds = bool(np.all(w2sq <= bound + tol))
    return ContractionReport(times, w2sq, w0, lips, bound, gron, slack, holds)
