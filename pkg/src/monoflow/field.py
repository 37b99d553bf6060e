"""SDE coefficient fields ``dX = b(X) dt + sum_k sigma_k(X) dW^k``.

All coefficient callables act on arrays of shape ``(..., d)`` and return
arrays of the same shape, so a single call evaluates a whole batch of
states.  The kernels below follow the same convention and broadcast over
leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, InvariantError

VectorFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientField:
    """Drift ``b`` and diffusion vectors ``sigma_1..sigma_m`` on R^d."""

    dim: int
    drift: VectorFn
    diffusion: tuple[VectorFn, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("dimension must be at least 1")
        object.__setattr__(self, "diffusion", tuple(self.diffusion))

    @property
    def noise_dim(self) -> int:
        return len(self.diffusion)

    def check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x

    def b(self, x) -> np.ndarray:
        x = self.check_points(x)
        return np.broadcast_to(self.drift(x), x.shape)

    def sigma(self, x) -> np.ndarray:
        """Diffusion vectors stacked on the last axis: shape ``(..., d, m)``."""
        x = self.check_points(x)
        if not self.diffusion:
            return np.zeros(x.shape + (0,))
        return np.stack([np.broadcast_to(s(x), x.shape) for s in self.diffusion], axis=-1)


@dataclass(frozen=True)
class StructureMatrix:
    entries: np.ndarray
    at_pair: tuple[np.ndarray, np.ndarray]


def _pair(field: CoefficientField, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = field.check_points(x)
    y = field.check_points(y)
    try:
        np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        raise InputError(f"incompatible point shapes {x.shape} and {y.shape}") from None
    return x, y


def cov_kernel(field: CoefficientField, x, y) -> np.ndarray:
    """``a(x, y)[i, j] = sum_k sigma_k^i(x) sigma_k^j(y)``."""
    x, y = _pair(field, x, y)
    sx, sy = field.sigma(x), field.sigma(y)
    return np.einsum("...ik,...jk->...ij", sx, sy)


def structure_matrices(field: CoefficientField, x, y) -> np.ndarray:
    """Batched ``A(x, y)`` computed as ``sum_k (s_k(x) - s_k(y)) (s_k(x) - s_k(y))^T``.

    The outer-product form is exactly symmetric and PSD in floating point.
    """
    x, y = _pair(field, x, y)
    diff = field.sigma(x) - field.sigma(y)
    return np.einsum("...ik,...jk->...ij", diff, diff)


def structure_matrix(field: CoefficientField, x, y) -> StructureMatrix:
    x, y = _pair(field, x, y)
    if x.ndim != 1 or y.ndim != 1:
        raise InputError("structure_matrix takes single points; use structure_matrices for batches")
    return StructureMatrix(structure_matrices(field, x, y), (x.copy(), y.copy()))


def jacobi_eigenvalues(a, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of symmetric matrices ``(..., n, n)`` by cyclic Jacobi rotations.

    Rotations are applied to the whole batch at once; a matrix whose pivot is
    already zero gets the identity rotation.  Eigenvalues are returned
    unsorted (the diagonal after convergence).
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InputError(f"expected square matrices, got shape {a.shape}")
    batch_shape, n = a.shape[:-2], a.shape[-1]
    a = a.reshape((-1, n, n))
    scale = np.maximum(np.abs(a).max(axis=(1, 2)) if a.size else 0.0, np.finfo(float).tiny)
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a[:, off_mask] ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                big = np.abs(theta) > 1e150
                with np.errstate(over="ignore"):
                    t = np.where(
                        big,
                        0.5 / np.where(big, theta, 1.0),
                        np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
                    )
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc, ss = c[:, None], s[:, None]
                col_p, col_q = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = cc * col_p - ss * col_q
                a[:, :, q] = ss * col_p + cc * col_q
                row_p, row_q = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = cc * row_p - ss * row_q
                a[:, q, :] = ss * row_p + cc * row_q
    return np.diagonal(a, axis1=1, axis2=2).reshape(batch_shape + (n,))


def largest_eigenvalue(a) -> np.ndarray:
    """Largest eigenvalue of symmetric ``(..., d, d)`` matrices.

    Closed form for d <= 2, Jacobi iteration otherwise.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    if d == 1:
        return a[..., 0, 0].copy()
    if d == 2:
        p, q, r = a[..., 0, 0], a[..., 0, 1], a[..., 1, 1]
        return 0.5 * (p + r) + np.hypot(0.5 * (p - r), q)
    return jacobi_eigenvalues(a).max(axis=-1)


def trace_and_opnorm(a) -> tuple:
    """``(tr A, largest eigenvalue of A)`` for a symmetric PSD structure matrix.

    Accepts a :class:`StructureMatrix` or a batch ``(..., d, d)``.
    """
    entries = a.entries if isinstance(a, StructureMatrix) else np.asarray(a, dtype=float)
    if entries.ndim < 2 or entries.shape[-1] != entries.shape[-2]:
        raise InputError(f"expected square matrices, got shape {entries.shape}")
    asym = np.abs(entries - np.swapaxes(entries, -1, -2))
    mag = np.abs(entries).max(axis=(-1, -2), keepdims=True) if entries.size else 0.0
    if np.any(asym > 1e-12 * np.maximum(mag, np.finfo(float).tiny)):
        raise InvariantError("structure matrix is not symmetric")
    tr = np.trace(entries, axis1=-2, axis2=-1)
    lam = np.maximum(largest_eigenvalue(entries), 0.0)
    if np.ndim(tr) == 0:
        return float(tr), float(lam)
    return tr, lam


class CutoffShape(str, enum.Enum):
    QUINTIC = "quintic"
    SMOOTH_EXPONENTIAL = "smooth_exponential"


@dataclass(frozen=True)
class CutoffProfile:
    """Non-increasing cutoff with value 1 on ``[0, inner]`` and 0 on ``[outer, inf)``."""

    shape: CutoffShape = CutoffShape.QUINTIC
    inner: float = 1.0
    outer: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "shape", CutoffShape(self.shape))
        if not 0 < self.inner < self.outer:
            raise InputError("cutoff needs 0 < inner < outer")

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        t = np.clip((s - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        if self.shape is CutoffShape.QUINTIC:
            return 1.0 - t * t * t * (t * (6.0 * t - 15.0) + 10.0)
        # exp(-1/z) bump ratio; exactly 1 at t=0 and 0 at t=1
        with np.errstate(divide="ignore", over="ignore"):
            g_in = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
            g_out = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        return g_in / (g_in + g_out)


def truncate(field: CoefficientField, N: float, profile: CutoffProfile | None = None) -> CoefficientField:
    """Localized field with drift ``psi(|x|/N)^2 b(x)`` and diffusion ``psi(|x|/N) sigma_k(x)``."""
    if not N > 0:
        raise InputError("truncation radius N must be positive")
    profile = profile or CutoffProfile()

    def weight(x):
        return profile(np.linalg.norm(x, axis=-1) / N)[..., None]

    def drift(x, _b=field.drift):
        w = weight(x)
        return np.where(w > 0, w * w * _b(x), 0.0)

    def wrap(sig):
        def fn(x):
            w = weight(x)
            return np.where(w > 0, w * sig(x), 0.0)

        return fn

    return CoefficientField(
        dim=field.dim,
        drift=drift,
        diffusion=tuple(wrap(s) for s in field.diffusion),
        label=f"{field.label}|truncated(N={N:g},{profile.shape.value})",
    )


def from_callables(dim: int, drift: VectorFn, diffusion: Sequence[VectorFn] = (), label: str = "") -> CoefficientField:
    return CoefficientField(dim=dim, drift=drift, diffusion=tuple(diffusion), label=label)


def from_spec(spec: dict) -> CoefficientField:
    """Build a field from the config expression format.

    ``{"dim": 2, "drift": ["-x1", "-x2"], "diffusion": [["1", "0"], ["0", "1"]]}``
    where each diffusion entry is one vector ``sigma_k`` with ``dim`` components.
    """
    from .expr import vector_function

    try:
        dim = int(spec["dim"])
        drift_src = spec["drift"]
    except (KeyError, TypeError, ValueError):
        raise InputError("inline field needs integer 'dim' and a 'drift' list") from None
    diffusion_src = spec.get("diffusion", [])
    if isinstance(drift_src, str) or not isinstance(diffusion_src, list):
        raise InputError("'drift' must be a list of strings and 'diffusion' a list of lists")
    drift = vector_function(list(drift_src), dim)
    diffusion = tuple(vector_function(list(col), dim) for col in diffusion_src)
    return CoefficientField(dim=dim, drift=drift, diffusion=diffusion, label=spec.get("label", "inline"))
