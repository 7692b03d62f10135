"""Drift fields V(x, t).

A :class:`VectorFieldSpec` bundles a vectorized evaluator ``V(x, t)`` taking
``(N, d)`` points, with optional closed forms for the divergence and for the
Lipschitz constant ``||grad V(., t)||_inf``. Presets cover the fields used in
tests and runs; ``sampled`` wraps grid data (e.g. the chemotactic drift).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .grid import Grid, ScalarField, discrete_gradient, sample

KINDS = (
    "zero",
    "constant",
    "rotation",
    "linear",
    "shear",
    "gradient_of",
    "gradient_of_solution",
    "sampled",
    "custom",
)


@dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    kind: str
    dim: int
    evaluate: Callable[[np.ndarray, float], np.ndarray]
    analytic_divergence: Callable[[np.ndarray, float], np.ndarray] | None = None
    analytic_gradient_norm: Callable[[float], float] | None = None
    params: dict = field(default_factory=dict)
    # grid used for discrete fallbacks (sampled presets)
    grid: Grid | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown drift kind {self.kind!r}")

    def __call__(self, x, t: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.evaluate(x, float(t))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def divergence(self, x, t: float, h: float = 1e-5) -> np.ndarray:
        """Analytic divergence when known, else centered differences of V."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.analytic_divergence is not None:
            return np.broadcast_to(self.analytic_divergence(x, float(t)), (len(x),)).astype(float)
        total = np.zeros(len(x))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            total += (self.evaluate(x + e, t)[:, k] - self.evaluate(x - e, t)[:, k]) / (2 * h)
        return total

    def on_grid(self, grid: Grid, t: float) -> list[np.ndarray]:
        vals = self(grid.points, t)
        return [vals[:, k].reshape(grid.shape) for k in range(self.dim)]

    def sup_norm(self, grid: Grid, t: float) -> float:
        """max |V(., t)| over cell centers and box corners."""
        corners = np.array(np.meshgrid(*[(lo, hi) for lo, hi in zip(grid.lower, grid.upper)], indexing="ij"))
        corners = corners.reshape(grid.dim, -1).T
        pts = np.vstack([grid.points, corners])
        return float(np.max(np.linalg.norm(self(pts, t), axis=1)))

    def gradient_norm(self, grid: Grid, t: float) -> float:
        """``||grad V(., t)||_inf`` (spectral norm), analytic when available."""
        if self.analytic_gradient_norm is not None:
            return float(self.analytic_gradient_norm(float(t)))
        comps = self.on_grid(grid, t)
        jac = np.stack([np.stack([g.values for g in discrete_gradient(ScalarField(grid, c))], -1) for c in comps], -2)
        return float(np.max(np.linalg.norm(jac.reshape(-1, self.dim, self.dim), ord=2, axis=(1, 2))))

    def divergence_sup(self, grid: Grid, t: float, negative_part: bool = False) -> float:
        div = self.divergence(grid.points, t)
        if negative_part:
            div = np.minimum(div, 0.0)
        return float(np.max(np.abs(div)))


def _const(value):
    return lambda x, t: np.full(len(x), value, dtype=float)


def zero(dim: int) -> VectorFieldSpec:
    return VectorFieldSpec(
        "zero",
        dim,
        lambda x, t: np.zeros_like(x),
        _const(0.0),
        lambda t: 0.0,
    )


def constant(c) -> VectorFieldSpec:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return VectorFieldSpec(
        "constant",
        len(c),
        lambda x, t: np.broadcast_to(c, x.shape).copy(),
        _const(0.0),
        lambda t: 0.0,
        params={"c": c.tolist()},
    )


def rotation(omega: float = 1.0) -> VectorFieldSpec:
    """Rigid rotation ``omega * (-y, x)`` in 2D."""
    omega = float(omega)
    return VectorFieldSpec(
        "rotation",
        2,
        lambda x, t: omega * np.stack([-x[:, 1], x[:, 0]], axis=1),
        _const(0.0),
        lambda t: abs(omega),
        params={"omega": omega},
    )


def linear(A) -> VectorFieldSpec:
    """``V(x) = A x``; a scalar ``A`` means ``A * identity`` in 1D."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValidationError("linear drift needs a square matrix")
    tr = float(np.trace(A))
    norm = float(np.linalg.norm(A, 2))
    return VectorFieldSpec(
        "linear",
        A.shape[0],
        lambda x, t: x @ A.T,
        _const(tr),
        lambda t: norm,
        params={"A": A.tolist()},
    )


def identity(dim: int, scale: float = 1.0) -> VectorFieldSpec:
    """``V(x) = scale * x``, constant divergence ``scale * dim``."""
    return linear(scale * np.eye(dim))


def shear(rate: float = 1.0) -> VectorFieldSpec:
    """Plane shear ``(rate * y, 0)``; divergence free."""
    rate = float(rate)
    return VectorFieldSpec(
        "shear",
        2,
        lambda x, t: np.stack([rate * x[:, 1], np.zeros(len(x))], axis=1),
        _const(0.0),
        lambda t: abs(rate),
        params={"rate": rate},
    )


def gradient_of(potential_gradient, potential_laplacian=None, dim: int = 2, gradient_norm=None, **params):
    """``V = grad phi`` given the gradient (and optionally the Laplacian) of phi."""
    return VectorFieldSpec(
        "gradient_of",
        dim,
        lambda x, t: np.asarray(potential_gradient(x, t), dtype=float),
        potential_laplacian,
        gradient_norm,
        params=params,
    )


def custom(fn, dim: int, divergence=None, gradient_norm=None, **params) -> VectorFieldSpec:
    return VectorFieldSpec("custom", dim, fn, divergence, gradient_norm, params=params)


def sampled(grid: Grid, frames, kind: str = "sampled") -> VectorFieldSpec:
    """Piecewise-linear-in-time, multilinear-in-space field from grid frames.

    ``frames`` is a sequence of ``(time, components)`` with one array of
    ``grid.shape`` per axis. The divergence is the centered-difference
    divergence of each frame, interpolated the same way.
    """
    frames = sorted(((float(t), [np.asarray(c, dtype=float) for c in comps]) for t, comps in frames), key=lambda f: f[0])
    if not frames:
        raise ValidationError("sampled drift needs at least one frame")
    times = np.array([f[0] for f in frames])
    comp_fields = [[ScalarField(grid, c) for c in comps] for _, comps in frames]
    div_fields = []
    for comps in frames:
        div = np.zeros(grid.shape)
        for k, c in enumerate(comps[1]):
            div += np.gradient(c, grid.spacing[k], axis=k, edge_order=1)
        div_fields.append(ScalarField(grid, div))

    def weights(t):
        if len(times) == 1 or t <= times[0]:
            return [(0, 1.0)]
        if t >= times[-1]:
            return [(len(times) - 1, 1.0)]
        j = int(np.searchsorted(times, t)) - 1
        s = (t - times[j]) / (times[j + 1] - times[j])
        return [(j, 1 - s), (j + 1, s)]

    def evaluate(x, t):
        out = np.zeros((len(x), grid.dim))
        for j, w in weights(t):
            for k in range(grid.dim):
                out[:, k] += w * sample(comp_fields[j][k], x)
        return out

    def divergence(x, t):
        out = np.zeros(len(x))
        for j, w in weights(t):
            out += w * sample(div_fields[j], x)
        return out

    return VectorFieldSpec(kind, grid.dim, evaluate, divergence, None, params={"frames": len(frames)}, grid=grid)


def gradient_of_solution(c: ScalarField, sign: float = -1.0) -> VectorFieldSpec:
    """Drift ``sign * grad_h c`` from a scalar field, one frame.

    The default sign gives the repulsive chemotactic drift ``V = -grad c``.
    """
    grads = discrete_gradient(c)
    spec = sampled(c.grid, [(c.time, [sign * g.values for g in grads])], kind="gradient_of_solution")
    spec.params["sign"] = sign
    return spec


PRESETS = {
    "zero": zero,
    "constant": constant,
    "rotation": rotation,
    "linear": linear,
    "shear": shear,
}
