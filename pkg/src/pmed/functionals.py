"""Functionals of densities and drifts, and the scaling-class classifier.

Everything here is a pure function of immutable inputs. Quadratures are the
midpoint rule on the grid; time integrals use the trapezoid rule on the
supplied partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import defaults
from .drift import VectorFieldSpec, custom
from .errors import ValidationError
from .grid import DensityField, Grid, ScalarField, discrete_gradient, integrate

__all__ = [
    "mass",
    "lq_norm",
    "lq_integral",
    "entropy",
    "p_moment",
    "moment_weights",
    "dissipation",
    "speed_energy",
    "drift_energy",
    "mixed_norm",
    "ScalingQuery",
    "ScalingReport",
    "classify_scaling",
    "lambda_q",
    "scaling_exponents",
    "rescale",
    "oscillation_decay",
    "support_radius",
    "DiagnosticsRecord",
    "diagnostics_record",
]


def mass(rho) -> float:
    return integrate(rho)


def lq_integral(rho, q: float) -> float:
    """``int rho^q dx``."""
    return float(np.sum(rho.values**q) * rho.grid.cell_volume)


def lq_norm(rho, q: float) -> float:
    if q == math.inf:
        return float(np.max(np.abs(rho.values)))
    if q < 1:
        raise ValidationError(f"L^q norm needs q >= 1, got {q}")
    return lq_integral(rho, q) ** (1.0 / q)


class EntropyPair(NamedTuple):
    signed: float
    absolute: float


def _xlogx(v):
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


def entropy(rho) -> EntropyPair:
    """``(int rho log rho, int rho |log rho|)`` with ``0 log 0 = 0``."""
    s = _xlogx(rho.values)
    vol = rho.grid.cell_volume
    return EntropyPair(float(s.sum() * vol), float(np.abs(s).sum() * vol))


def japanese_bracket(grid: Grid, p: float) -> np.ndarray:
    r2 = sum(a**2 for a in grid.mesh)
    return (1.0 + r2) ** (p / 2)


def p_moment(rho, p: float) -> float:
    """``int rho (1 + |x|^2)^{p/2} dx``."""
    if p < 1:
        raise ValidationError(f"moment order must be >= 1, got {p}")
    return float(np.sum(rho.values * japanese_bracket(rho.grid, p)) * rho.grid.cell_volume)


def moment_weights(grid: Grid, p: float):
    """The weight ``<x>^p``, its gradient and its Laplacian, in closed form.

    Returns ``(weight, [d/dx_k weight], laplacian)`` as ScalarFields.
    The Laplacian is the full ``d``-dimensional one,
    ``p (1+|x|^2)^{(p-4)/2} (d + (d+p-2)|x|^2)``, which is bounded by ``p d``.
    """
    if not (1 < p <= 2):
        raise ValidationError(f"moment weights need 1 < p <= 2, got {p}")
    r2 = sum(a**2 for a in grid.mesh)
    base = 1.0 + r2
    weight = base ** (p / 2)
    grads = [p * a * base ** ((p - 2) / 2) for a in grid.mesh]
    d = grid.dim
    lap = p * base ** ((p - 4) / 2) * (d + (d + p - 2) * r2)
    return ScalarField(grid, weight), [ScalarField(grid, g) for g in grads], ScalarField(grid, lap)


def _grad_sq(values, grid):
    grads = discrete_gradient(ScalarField(grid, values))
    return sum(g.values**2 for g in grads)


def dissipation(rho, m: float, q: float) -> float:
    """``int |grad rho^{(q+m-1)/2}|^2 dx`` by centered differences."""
    if m <= 1 or q < 1:
        raise ValidationError("dissipation needs m > 1 and q >= 1")
    a = (q + m - 1) / 2
    return float(np.sum(_grad_sq(rho.values**a, rho.grid)) * rho.grid.cell_volume)


def speed_energy(rho, m: float, p: float, vacuum: float = defaults.VACUUM_THRESHOLD) -> float:
    """``int |grad rho^m / rho|^p rho dx`` over non-vacuum cells."""
    v = rho.values
    vmax = float(v.max())
    if vmax <= 0:
        return 0.0
    grads = discrete_gradient(ScalarField(rho.grid, v**m))
    gnorm = np.sqrt(sum(g.values**2 for g in grads))
    live = v > vacuum * vmax
    integrand = np.zeros_like(v)
    integrand[live] = gnorm[live] ** p * v[live] ** (1 - p)
    return float(integrand.sum() * rho.grid.cell_volume)


def drift_energy(rho, V: VectorFieldSpec, p: float, t: float) -> float:
    """``int |V(x, t)|^p rho dx``."""
    speed = np.linalg.norm(V(rho.grid.points, t), axis=1).reshape(rho.grid.shape)
    return float(np.sum(speed**p * rho.values) * rho.grid.cell_volume)


def _trapezoid(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(x) == 1:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def mixed_norm(V, grid: Grid, times, q1: float, q2: float) -> float:
    """``|| ||V(., t)||_{L^q1_x} ||_{L^q2_t}`` over the box and ``times``.

    ``V`` is a VectorFieldSpec (vector norms are Euclidean) or a callable
    returning scalars. ``math.inf`` exponents take maxima.
    """
    times = np.asarray(times, dtype=float)
    inner = []
    for t in times:
        vals = V(grid.points, t)
        vals = np.asarray(vals, dtype=float)
        mag = np.linalg.norm(vals, axis=1) if vals.ndim == 2 else np.abs(vals)
        if q1 == math.inf:
            inner.append(float(mag.max()))
        else:
            inner.append(float(np.sum(mag**q1) * grid.cell_volume) ** (1 / q1))
    inner = np.array(inner)
    if q2 == math.inf:
        return float(inner.max())
    return _trapezoid(inner**q2, times) ** (1 / q2)


# --- scaling classes ----------------------------------------------------


def lambda_q(m: float, q: float, d: int) -> float:
    """Largest admissible moment/speed exponent, ``min{2, 1 + (d(q-1)+q)/(d(m-1)+q)}``."""
    return min(2.0, 1.0 + (d * (q - 1) + q) / (d * (m - 1) + q))


def scaling_exponents(m: float, q: float, d: int):
    """``(q_md, alpha, beta)`` of the ``L^q``-preserving rescaling."""
    q_md = d * (m - 1) / q
    return q_md, q_md + 1, q_md + 2


def _inv(x):
    return 0.0 if x == math.inf else 1.0 / x


@dataclass(frozen=True)
class ScalingQuery:
    m: float
    q: float
    d: int
    q1: float
    q2: float
    target: str = "V"

    def __post_init__(self):
        if not self.m > 1:
            raise ValidationError(f"requires m > 1, got m={self.m}")
        if not self.q >= 1:
            raise ValidationError(f"requires q >= 1, got q={self.q}")
        if self.d < 2:
            raise ValidationError(f"classifier arithmetic requires d >= 2, got d={self.d}")
        for name in ("q1", "q2"):
            v = getattr(self, name)
            if not (v >= 1):
                raise ValidationError(f"requires {name} in [1, inf], got {v}")
        if self.target not in ("V", "gradV"):
            raise ValidationError(f"target must be 'V' or 'gradV', got {self.target!r}")


@dataclass(frozen=True)
class ScalingReport:
    q_md: float
    lhs: float
    rhs: float
    verdict: str
    lambda_q: float


def classify_scaling(query: ScalingQuery, tol: float = defaults.CLASSIFIER_TOL) -> ScalingReport:
    """Place ``(q1, q2)`` relative to the scaling line ``d/q1 + (2+q_md)/q2 = rhs``.

    ``rhs`` is ``1 + q_md`` for V and ``2 + q_md`` for grad V.
    """
    q_md = query.d * (query.m - 1) / query.q
    lhs = query.d * _inv(query.q1) + (2 + q_md) * _inv(query.q2)
    rhs = (1 + q_md) if query.target == "V" else (2 + q_md)
    if abs(lhs - rhs) <= tol:
        verdict = "scaling_invariant"
    elif lhs < rhs:
        verdict = "sub_scaling"
    else:
        verdict = "super_scaling"
    return ScalingReport(q_md, lhs, rhs, verdict, lambda_q(query.m, query.q, query.d))


@dataclass(frozen=True)
class Rescaled:
    obj: object
    alpha: float
    beta: float
    density_power: float


def rescale(obj, kappa: float, m: float, q: float, d: int | None = None) -> Rescaled:
    """``rho_k(x,t) = k^{d/q} rho(kx, k^beta t)``, ``V_k(x,t) = k^alpha V(kx, k^beta t)``.

    A DensityField snapshot at time ``tau`` becomes a snapshot at
    ``tau / k^beta`` on the grid scaled by ``1/k``. A VectorFieldSpec becomes
    a closed-form spec. ``d`` defaults to the object's dimension.
    """
    if not kappa > 0:
        raise ValidationError(f"kappa must be positive, got {kappa}")
    if d is None:
        d = obj.grid.dim if isinstance(obj, ScalarField) else obj.dim
    _, alpha, beta = scaling_exponents(m, q, d)
    dens = d / q
    if isinstance(obj, ScalarField):
        out = type(obj)(obj.grid.scaled(1.0 / kappa), obj.values * kappa**dens, obj.time / kappa**beta)
    elif isinstance(obj, VectorFieldSpec):
        V = obj
        ka, kb = kappa**alpha, kappa**beta
        div = None
        if V.analytic_divergence is not None:
            div = lambda x, t: kappa ** (alpha + 1) * V.analytic_divergence(kappa * x, kb * t)
        gn = None
        if V.analytic_gradient_norm is not None:
            gn = lambda t: kappa ** (alpha + 1) * V.analytic_gradient_norm(kb * t)
        out = custom(lambda x, t: ka * V.evaluate(kappa * x, kb * t), V.dim, div, gn, kappa=kappa, base=V.kind)
    else:
        raise ValidationError(f"cannot rescale {type(obj).__name__}")
    return Rescaled(out, alpha, beta, dens)


# --- Hoelder-type oscillation decay -------------------------------------


@dataclass(frozen=True)
class OscillationReport:
    radii: np.ndarray
    oscillations: np.ndarray
    exponent: float
    constant: float
    residual: float
    defined: bool


def oscillation_decay(trajectory: Sequence[ScalarField], center, radii, osc_floor: float = 1e-14) -> OscillationReport:
    """Fit ``osc ~ C r^alpha`` over nested cylinders ``K_r x [t0, t0 + r^2]``.

    ``K_r`` is the cube of half-width ``r`` about ``center``; ``t0`` is the
    first snapshot time. Constant data returns ``defined=False``.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if len(radii) < 4:
        raise ValidationError("oscillation fit needs at least 4 radii")
    c = np.asarray(center, dtype=float)
    t0 = trajectory[0].time
    grid = trajectory[0].grid
    dist = np.max(np.stack([np.abs(a - c[k]) for k, a in enumerate(grid.mesh)]), axis=0)
    osc = []
    for r in radii:
        mask = dist <= r
        vals = [f.values[mask] for f in trajectory if f.time - t0 <= r * r + 1e-14 and mask.any()]
        if not vals:
            osc.append(0.0)
            continue
        allv = np.concatenate(vals)
        osc.append(float(allv.max() - allv.min()))
    osc = np.array(osc)
    scale = max(float(np.max(np.abs(np.concatenate([f.values.ravel() for f in trajectory])))), 1.0)
    good = osc > osc_floor * scale
    if good.sum() < 2:
        return OscillationReport(radii, osc, math.nan, math.nan, math.nan, False)
    A = np.vstack([np.log(radii[good]), np.ones(good.sum())]).T
    coef, *_ = np.linalg.lstsq(A, np.log(osc[good]), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(osc[good])) ** 2)))
    return OscillationReport(radii, osc, float(coef[0]), float(math.exp(coef[1])), resid, True)


def support_radius(rho, threshold_fraction: float = defaults.SUPPORT_THRESHOLD, center=None) -> float:
    """Largest distance from ``center`` to a cell holding at least
    ``threshold_fraction * max rho``, plus one cell diagonal.

    ``center`` defaults to the center of mass.
    """
    if not (0 < threshold_fraction <= 1e-3):
        raise ValidationError(f"threshold_fraction must lie in (0, 1e-3], got {threshold_fraction}")
    v = rho.values
    vmax = float(v.max()) if v.size else 0.0
    if vmax <= 0:
        return 0.0
    grid = rho.grid
    if center is None:
        total = v.sum()
        center = [float(np.sum(a * v) / total) for a in grid.mesh]
    mask = v >= threshold_fraction * vmax
    return float(grid.radius(center)[mask].max() + grid.diagonal)


# --- diagnostics rows -----------------------------------------------------


@dataclass
class DiagnosticsRecord:
    time: float
    mass: float
    lq_norm: float
    entropy: float
    abs_entropy: float
    p_moment: float
    dissipation: float
    speed_energy: float
    drift_energy: float
    support_radius: float
    free_energy: float = math.nan
    q: float = 2.0
    p: float = 2.0
    lq_integrals: dict = field(default_factory=dict)

    COLUMNS = (
        "time",
        "mass",
        "lq_norm",
        "entropy",
        "abs_entropy",
        "p_moment",
        "dissipation",
        "speed_energy",
        "drift_energy",
        "support_radius",
        "free_energy",
    )


def diagnostics_record(rho, m: float, q: float = 2.0, p: float = 2.0, V=None, tracked_q=(), free_energy=math.nan, support_center=None) -> DiagnosticsRecord:
    ent = entropy(rho)
    return DiagnosticsRecord(
        time=rho.time,
        mass=mass(rho),
        lq_norm=lq_norm(rho, q),
        entropy=ent.signed,
        abs_entropy=ent.absolute,
        p_moment=p_moment(rho, p),
        dissipation=dissipation(rho, m, q),
        speed_energy=speed_energy(rho, m, p),
        drift_energy=0.0 if V is None else drift_energy(rho, V, p, rho.time),
        support_radius=support_radius(rho, center=support_center),
        free_energy=free_energy,
        q=q,
        p=p,
        lq_integrals={float(qq): lq_integral(rho, qq) for qq in tracked_q},
    )
