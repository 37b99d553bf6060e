"""Sampled checks of the monotonicity, coercivity and growth conditions.

A sampled check cannot prove a statement quantified over all of R^d.  Every
report therefore carries the number of evaluated points and the worst
witness, so a violation can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import InputError
from .field import CoefficientField, structure_matrices, trace_and_opnorm

SATISFIED = "satisfied_at_level"
VIOLATED = "violated"
RATIO_TOL = 1e-9


@dataclass
class SampleDomain:
    """Axis-aligned box (optionally intersected with a centered ball) to sample from."""

    box_low: Sequence[float]
    box_high: Sequence[float]
    n_pairs: int = 4096
    sampler: str = "low_discrepancy"
    min_separation: float | None = None
    ball_radius: float | None = None
    seed: int = 0

    def __post_init__(self):
        self.box_low = np.atleast_1d(np.asarray(self.box_low, dtype=float))
        self.box_high = np.atleast_1d(np.asarray(self.box_high, dtype=float))
        if self.box_low.shape != self.box_high.shape or self.box_low.ndim != 1:
            raise InputError("box_low and box_high must be vectors of equal length")
        if not np.all(self.box_low < self.box_high):
            raise InputError("box_low must be below box_high in every coordinate")
        if self.n_pairs < 1:
            raise InputError("n_pairs must be at least 1")
        if self.sampler not in ("low_discrepancy", "pseudo_random"):
            raise InputError(f"unknown sampler {self.sampler!r}")
        if self.min_separation is None:
            self.min_separation = 1e-6 * self.diagonal
        if not self.min_separation > 0:
            raise InputError("min_separation must be positive")
        if self.ball_radius is not None and not self.ball_radius > 0:
            raise InputError("ball_radius must be positive")

    @classmethod
    def cube(cls, radius: float, dim: int, **kw) -> "SampleDomain":
        return cls([-radius] * dim, [radius] * dim, **kw)

    @classmethod
    def ball(cls, radius: float, dim: int, **kw) -> "SampleDomain":
        return cls([-radius] * dim, [radius] * dim, ball_radius=radius, **kw)

    @property
    def dim(self) -> int:
        return self.box_low.size

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.box_high - self.box_low))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.all((x >= self.box_low) & (x <= self.box_high), axis=-1)
        if self.ball_radius is not None:
            ok &= np.linalg.norm(x, axis=-1) <= self.ball_radius
        return ok

    def _unit_stream(self, width: int):
        if self.sampler == "low_discrepancy":
            engine = qmc.Halton(d=width, scramble=True, seed=self.seed)
            return engine.random
        rng = np.random.default_rng(self.seed)
        return lambda n: rng.random((n, width))

    def _draw(self, width: int, accept: Callable[[np.ndarray], np.ndarray], n: int) -> np.ndarray:
        draw = self._unit_stream(width)
        span = np.tile(self.box_high - self.box_low, width // self.dim)
        low = np.tile(self.box_low, width // self.dim)
        out, have = [], 0
        for _ in range(64):
            cand = low + draw(n) * span
            cand = cand[accept(cand)]
            out.append(cand)
            have += len(cand)
            if have >= n:
                break
        if have == 0:
            raise InputError("every sampled candidate was rejected (min_separation or ball too restrictive)")
        return np.concatenate(out)[:n]

    def sample_points(self, n: int | None = None) -> np.ndarray:
        n = n or self.n_pairs
        return self._draw(self.dim, self.contains, n)

    def sample_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.dim
        if self.min_separation >= self.diagonal:
            raise InputError("min_separation exceeds the box diagonal; every pair would be rejected")

        def accept(c):
            x, y = c[:, :d], c[:, d:]
            return (np.linalg.norm(x - y, axis=1) >= self.min_separation) & self.contains(x) & self.contains(y)

        pairs = self._draw(2 * d, accept, self.n_pairs)
        return pairs[:, :d], pairs[:, d:]


@dataclass
class AssumptionReport:
    assumption: str
    mu: float
    level: float
    fitted_constant: float
    worst_pair: tuple[list[float], list[float]]
    worst_ratio: float
    n_checked: int
    verdict: str
    note: str = ""
    extra: dict = dc_field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return self.verdict == SATISFIED

    def to_dict(self) -> dict:
        out = {
            "assumption": self.assumption,
            "mu": self.mu,
            "level": self.level,
            "fitted_constant": self.fitted_constant,
            "worst_pair": [list(map(float, self.worst_pair[0])), list(map(float, self.worst_pair[1]))],
            "worst_ratio": self.worst_ratio,
            "n_checked": self.n_checked,
            "verdict": self.verdict,
        }
        if self.note:
            out["note"] = self.note
        out.update(self.extra)
        return out


def one_sided_expr(field: CoefficientField, x, y, mu: float) -> np.ndarray | float:
    """``2<b(x)-b(y), x-y> + tr A(x,y) + mu ||A(x,y)||`` (vectorized over pairs)."""
    if mu < 0:
        raise InputError("mu must be non-negative")
    x, y = field.check_points(x), field.check_points(y)
    diff = x - y
    drift_term = 2.0 * np.sum((field.b(x) - field.b(y)) * diff, axis=-1)
    tr, op = trace_and_opnorm(structure_matrices(field, x, y))
    val = drift_term + tr + mu * op
    return float(val) if np.ndim(val) == 0 else val


def _report(name, mu, level, ratios, xs, ys, fitted, bound, note="", extra=None) -> AssumptionReport:
    i = int(np.argmax(ratios))
    worst = float(ratios[i])
    verdict = SATISFIED if worst <= bound + RATIO_TOL else VIOLATED
    return AssumptionReport(
        assumption=name,
        mu=float(mu),
        level=float(level),
        fitted_constant=float(fitted),
        worst_pair=(xs[i].tolist(), ys[i].tolist()),
        worst_ratio=worst,
        n_checked=int(len(ratios)),
        verdict=verdict,
        note=note,
        extra=extra or {},
    )


def check_A_mu_K(field: CoefficientField, domain: SampleDomain, mu: float, K: float) -> AssumptionReport:
    """Sampled check of the one-sided condition with constant ``K``; fits the smallest K."""
    _domain_dim(field, domain)
    x, y = domain.sample_pairs()
    ratios = one_sided_expr(field, x, y, mu) / np.sum((x - y) ** 2, axis=-1)
    return _report("A_mu_K", mu, K, ratios, x, y, fitted=ratios.max(), bound=K)


def _domain_dim(field, domain):
    if domain.dim != field.dim:
        raise InputError(f"domain has dimension {domain.dim}, field has {field.dim}")


def _probe_monotone(fn, u_max: float, what: str) -> None:
    u = np.linspace(0.0, max(u_max, 1.0), 513)
    vals = np.asarray(fn(u), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InputError(f"{what} must be finite and positive on [0, {u_max:g}]")
    if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        raise InputError(f"{what} must be non-decreasing on [0, {u_max:g}]")


def _corner_norm(domain: SampleDomain) -> float:
    far = np.maximum(np.abs(domain.box_low), np.abs(domain.box_high))
    r = float(np.linalg.norm(far))
    return min(r, domain.ball_radius) if domain.ball_radius is not None else r


def check_G_rho(field: CoefficientField, domain: SampleDomain, rho: Callable) -> AssumptionReport:
    """``2<b(x),x> + tr a(x,x) <= rho(|x|^2)`` on sampled points.

    ``fitted_constant`` is the worst slack ``min(rho - lhs)``; ``worst_ratio`` is ``max lhs/rho``.
    """
    _domain_dim(field, domain)
    _probe_monotone(rho, _corner_norm(domain) ** 2, "rho")
    x = domain.sample_points()
    lhs = 2.0 * np.sum(field.b(x) * x, axis=-1) + np.sum(field.sigma(x) ** 2, axis=(-1, -2))
    rho_val = np.asarray(rho(np.sum(x * x, axis=-1)), dtype=float)
    slack = rho_val - lhs
    return _report("G_rho", 0.0, 1.0, lhs / rho_val, x, x, fitted=slack.min(), bound=1.0)


def check_H_f_mu(field: CoefficientField, domain: SampleDomain, f: Callable, mu: float) -> AssumptionReport:
    """One-sided condition with the radius-dependent level ``f(|x| v |y|)``.

    Ratios are ``lhs / (f(|x| v |y|) |x-y|^2)``; ``fitted_constant`` is the
    factor by which ``f`` would have to be scaled to pass.
    """
    _domain_dim(field, domain)
    _probe_monotone(f, _corner_norm(domain), "f")
    x, y = domain.sample_pairs()
    r = np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(y, axis=-1))
    level = np.asarray(f(r), dtype=float)
    ratios = one_sided_expr(field, x, y, mu) / (level * np.sum((x - y) ** 2, axis=-1))
    return _report("H_f_mu", mu, 1.0, ratios, x, y, fitted=ratios.max(), bound=1.0)


class Subadditivity(NamedTuple):
    opnorm_holds: bool
    trace_holds: bool


def partition_sums(field: CoefficientField, x, y, partition) -> tuple[float, float, float, float]:
    """``(lhs_op, rhs_op, lhs_tr, rhs_tr)``: normalized A-norms of the segment vs. its pieces."""
    x, y = field.check_points(x), field.check_points(y)
    g = np.asarray(partition, dtype=float)
    if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
        raise InputError("partition must be strictly increasing from 0 to 1")
    length = float(np.linalg.norm(x - y))
    if length == 0.0:
        raise InputError("segment endpoints must differ")
    nodes = x + g[:, None] * (y - x)
    tr0, op0 = trace_and_opnorm(structure_matrices(field, x, y))
    tr, op = trace_and_opnorm(structure_matrices(field, nodes[:-1], nodes[1:]))
    seg = np.linalg.norm(nodes[1:] - nodes[:-1], axis=-1)
    return op0 / length, float(np.sum(op / seg)), tr0 / length, float(np.sum(tr / seg))


def _holds(lhs: float, rhs: float) -> bool:
    return rhs - lhs >= -RATIO_TOL * max(1.0, abs(rhs))


def subadditivity_check(field: CoefficientField, x, y, partition) -> Subadditivity:
    """Segment inequalities for ``||A||/|x-y|`` and ``tr A/|x-y|`` over a partition.

    Each flag also requires that inserting all midpoints does not decrease
    the right-hand sum.
    """
    lo, ro, lt, rt = partition_sums(field, x, y, partition)
    g = np.asarray(partition, dtype=float)
    finer = np.sort(np.concatenate([g, 0.5 * (g[:-1] + g[1:])]))
    _, ro2, _, rt2 = partition_sums(field, x, y, finer)
    return Subadditivity(_holds(lo, ro) and _holds(ro, ro2), _holds(lt, rt) and _holds(rt, rt2))


def _radial_points(dim: int, radii: Sequence[float], n_directions: int, seed: int) -> np.ndarray:
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        z = qmc.Halton(d=dim, scramble=True, seed=seed).random(n_directions)
        from scipy.special import ndtri

        dirs = ndtri(np.clip(z, 1e-12, 1 - 1e-12))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        axes = np.vstack([np.eye(dim), -np.eye(dim)])
        dirs = np.vstack([axes, dirs])
    r = np.asarray(radii, dtype=float)
    pts = (r[:, None, None] * dirs[None]).reshape(-1, dim)
    return np.vstack([np.zeros((1, dim)), pts])


def lemma_G_check(
    field: CoefficientField,
    radii: Sequence[float],
    n_pairs: int = 4096,
    n_directions: int = 64,
    seed: int = 0,
) -> AssumptionReport:
    """Fit ``C`` in ``2<b(x),x> + tr a(x,x) <= K|x|^2 + C(1 + |x|)``.

    ``K`` is the fitted one-sided constant (mu = 0, clipped at 0) on a cube of
    twice the largest radius; if doubling that cube again moves ``K`` by more
    than 10% the hypothesis is reported as failed.  The verdict asks that
    ``C`` changes by less than 10% when the largest radius is doubled.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii < 0):
        raise InputError("radii must be a non-empty list of non-negative numbers")
    r_max = float(max(radii.max(), 1e-12))
    k_near = check_A_mu_K(field, SampleDomain.cube(2 * r_max, field.dim, n_pairs=n_pairs, seed=seed), 0.0, np.inf)
    k_far = check_A_mu_K(field, SampleDomain.cube(4 * r_max, field.dim, n_pairs=n_pairs, seed=seed), 0.0, np.inf)
    K1, K2 = k_near.fitted_constant, k_far.fitted_constant
    if K2 - K1 > 0.1 * max(abs(K1), 1.0):
        return AssumptionReport(
            "lemma_G", 0.0, K2, np.inf, k_far.worst_pair, k_far.worst_ratio, k_far.n_checked, VIOLATED,
            note=f"hypothesis fails: one-sided constant grows from {K1:.6g} to {K2:.6g} when the cube doubles",
        )
    K = max(K2, 0.0)

    def fit(rs):
        pts = _radial_points(field.dim, rs, n_directions, seed)
        lhs = 2.0 * np.sum(field.b(pts) * pts, axis=-1) + np.sum(field.sigma(pts) ** 2, axis=(-1, -2))
        nrm = np.linalg.norm(pts, axis=-1)
        return pts, (lhs - K * nrm**2) / (1.0 + nrm)

    pts, ratios = fit(radii)
    C1 = max(float(ratios.max()), 0.0)
    _, ratios2 = fit(np.append(radii, 2 * r_max))
    C2 = max(float(ratios2.max()), 0.0)
    stable = abs(C2 - C1) <= 0.1 * C1 or max(C1, C2) <= 1e-12
    i = int(np.argmax(ratios))
    return AssumptionReport(
        assumption="lemma_G",
        mu=0.0,
        level=K,
        fitted_constant=C1,
        worst_pair=(pts[i].tolist(), pts[i].tolist()),
        worst_ratio=float(ratios[i]),
        n_checked=int(len(ratios)),
        verdict=SATISFIED if stable else VIOLATED,
        note="" if stable else f"remainder constant moves from {C1:.6g} to {C2:.6g} when the radius doubles",
        extra={"fitted_constant_doubled": C2},
    )


def _segment_partition(boxes: Sequence[SampleDomain], x, y, max_level: int = 20):
    for level in range(max_level + 1):
        n = 2**level
        nodes = x + np.linspace(0.0, 1.0, n + 1)[:, None] * (y - x)
        owners = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            owner = next((j for j, box in enumerate(boxes) if box.contains(a) and box.contains(b)), None)
            if owner is None:
                break
            owners.append(owner)
        else:
            return nodes, owners
    raise InputError("segment cannot be covered by the supplied boxes")


def local_to_global_check(
    field: CoefficientField,
    mu: float,
    boxes: Sequence[SampleDomain],
    long_pairs: Sequence[tuple],
) -> bool:
    """Local fitted constants bound the ratio on long segments.

    For each long pair the segment is split dyadically until every piece lies
    in one box.  Returns True iff for every pair the global ratio is at most
    the largest local constant among the boxes used (+1e-6) and the left
    side is dominated by the equidistant partition sum.
    """
    if not boxes:
        raise InputError("at least one box is required")
    local = [check_A_mu_K(field, box, mu, np.inf).fitted_constant for box in boxes]
    ok = True
    for x, y in long_pairs:
        x, y = field.check_points(x), field.check_points(y)
        nodes, owners = _segment_partition(boxes, x, y)
        n = len(nodes) - 1
        lhs = one_sided_expr(field, x, y, mu)
        dist2 = float(np.sum((x - y) ** 2))
        tr, op = trace_and_opnorm(structure_matrices(field, nodes[:-1], nodes[1:]))
        telescoped = 2.0 * float(np.sum((field.b(y) - field.b(x)) * (y - x)))
        part_sum = telescoped + n * float(np.sum(tr + mu * op))
        k_max = max(local[j] for j in set(owners))
        ok &= lhs / dist2 <= k_max + 1e-6
        ok &= lhs <= part_sum + RATIO_TOL * max(1.0, abs(part_sum))
    return bool(ok)
