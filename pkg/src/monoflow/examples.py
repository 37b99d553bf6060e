"""Registry of named coefficient fields, each with the conditions it is expected to meet."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Any, Callable

import numpy as np

from .assumptions import (
    AssumptionReport,
    SampleDomain,
    check_A_mu_K,
    check_G_rho,
    check_H_f_mu,
    lemma_G_check,
)
from .errors import InputError
from .field import CoefficientField


@dataclass(frozen=True)
class Claim:
    """One expected property of an example.

    ``kind`` is a checker name (``A_mu_K``, ``G_rho``, ``H_f_mu``,
    ``lemma_G``, ``additive_growth``) or a dynamical claim (``blowup_time``,
    ``coalescence_time``).  ``expect`` is the verdict the check should give.
    """

    kind: str
    params: dict = dc_field(default_factory=dict)
    expect: str = "satisfied"
    text: str = ""

    def describe(self) -> str:
        return self.text or f"{self.kind} {self.params}"


@dataclass(frozen=True)
class ExampleEntry:
    name: str
    field: CoefficientField
    expected: tuple[Claim, ...]
    notes: str
    reference_domain: SampleDomain

    def claims(self, kind: str) -> list[Claim]:
        return [c for c in self.expected if c.kind == kind]


def _const(values):
    v = np.asarray(values, dtype=float)
    return lambda x: np.broadcast_to(v, np.shape(x)).copy()


def _unit(i, d, scale=1.0):
    v = np.zeros(d)
    v[i] = scale
    return _const(v)


def _rotation(x):
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def _tangential_cubic(x):
    # rho(|x|) (-x2, x1) / |x| with rho(r) = r^3, i.e. |x|^2 (-x2, x1)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return r2 * _rotation(x)


def _sqrt_drift(x):
    return -np.sign(x) * np.sqrt(np.abs(x))


def _osc_drift(x):
    return -np.tanh(x) + 0.5 * np.sin(x)


def _osc_sigma(x):
    return 1.0 + 0.5 * np.cos(x)


def _const_fn(value: float) -> Callable:
    return lambda u: np.full(np.shape(u), float(value))


def _build() -> tuple[ExampleEntry, ...]:
    box1 = SampleDomain.cube(3.0, 1)
    box2 = SampleDomain.cube(3.0, 2)
    dw_sigma = 1.0
    return (
        ExampleEntry(
            "linear_ou",
            CoefficientField(1, lambda x: -x, (_const([1.0]),), "linear_ou"),
            (
                Claim("A_mu_K", {"mu": 5.0, "K": 0.0}, text="A_{mu,K} with mu=5, K=0 (ratio = -2)"),
                Claim("G_rho", {"rho": _const_fn(1.0), "rho_src": "1"}, text="G_rho with rho = 1"),
                Claim("H_f_mu", {"mu": 5.0, "f": _const_fn(1.0), "f_src": "1"}, text="H_{f,mu} with f = 1, mu = 5"),
                Claim("lemma_G", {"radii": [0.5, 1.0, 2.0, 4.0], "C": 1.0}, text="remainder C = 1 with K = 0"),
            ),
            "b(x) = -x, additive unit noise (Ornstein-Uhlenbeck)",
            box1,
        ),
        ExampleEntry(
            "gbm",
            CoefficientField(1, lambda x: 0.0 * x, (lambda x: x,), "gbm"),
            (
                Claim("A_mu_K", {"mu": 2.0, "K": 3.0}, text="A_{mu,K} with K = 1 + mu"),
                Claim("H_f_mu", {"mu": 2.0, "f": _const_fn(3.0), "f_src": "3"}, text="H_{f,mu} with f constant 1 + mu, mu = 2"),
                Claim("G_rho", {"rho": lambda u: u + 1.0, "rho_src": "u + 1"}, text="G_rho with rho(u) = u + 1"),
            ),
            "b = 0, sigma(x) = x (geometric Brownian motion); A(x,y) = (x-y)^2",
            box1,
        ),
        ExampleEntry(
            "double_well",
            CoefficientField(1, lambda x: x - x**3, (_const([dw_sigma]),), "double_well"),
            (
                Claim(
                    "G_rho",
                    {"rho": lambda u: 2.0 * u + 1.0 + dw_sigma**2, "rho_src": "2*u + 1 + sigma^2"},
                    text="G_rho with rho(u) = 2u + 1 + sigma^2",
                ),
                Claim("A_mu_K", {"mu": 3.0, "K": 2.0}, text="A_{mu,K} with K = 2 (additive noise)"),
            ),
            "b(x) = x - x^3, additive noise sigma = 1; coercive with a cubic restoring force",
            box1,
        ),
        ExampleEntry(
            "cubic_blowup",
            CoefficientField(1, lambda x: x**3, (), "cubic_blowup"),
            (
                Claim("blowup_time", {"x": 1.0, "tau": 0.5, "n_steps": 10_000, "tol": 0.05}, text="blow-up at tau = 1/(2 x^2)"),
                Claim("A_mu_K", {"mu": 0.0, "K": 24.0, "radius": 2.0}, text="local constant K_R = 24 on [-2, 2]"),
                Claim("A_mu_K", {"mu": 0.0, "K": 10.0, "radius": 2.0}, expect="violated", text="no K <= 10 on [-2, 2]"),
            ),
            "b(x) = x^3, no noise; solutions explode, so no coercivity claim is made",
            SampleDomain.cube(2.0, 1),
        ),
        ExampleEntry(
            "sqrt_coalescing",
            CoefficientField(1, _sqrt_drift, (), "sqrt_coalescing"),
            (
                Claim("A_mu_K", {"mu": 0.0, "K": 0.0}, text="monotone drift, A_{0,0}"),
                Claim("G_rho", {"rho": _const_fn(1.0), "rho_src": "1"}, text="G_rho with rho = 1"),
                Claim(
                    "coalescence_time",
                    {"x": 1.0, "y": 0.0, "hit": 2.0, "t1": 3.0, "n_steps": 20_000, "tol": 0.01},
                    text="solutions from 1 and 0 merge at t = 2",
                ),
            ),
            "b(x) = -sign(x) sqrt|x|, no noise; non-Lipschitz but monotone, coalescing",
            box1,
        ),
        ExampleEntry(
            "rotation",
            CoefficientField(2, _rotation, (_unit(0, 2), _unit(1, 2)), "rotation"),
            (
                Claim("A_mu_K", {"mu": 1.0, "K": 0.0}, text="skew drift, A_{mu,0}"),
                Claim("G_rho", {"rho": _const_fn(2.0), "rho_src": "2"}, text="G_rho with rho = 2"),
                Claim("additive_growth", {"c": 0.5, "radius": 10.0}, text="additive conditions (i)/(ii) with c = 1/2"),
            ),
            "b(x) = (-x2, x1), additive identity noise",
            box2,
        ),
        ExampleEntry(
            "tangential_cubic",
            CoefficientField(2, _tangential_cubic, (_unit(0, 2), _unit(1, 2)), "tangential_cubic"),
            (
                Claim("G_rho", {"rho": _const_fn(2.0), "rho_src": "2"}, text="no radial drift: G_rho with rho = 2"),
                Claim(
                    "additive_growth",
                    {"c": 1.0, "radius": 5.0},
                    expect="violated",
                    text="tangential part |x|^3 exceeds c(1+|x|^2) for c = 1",
                ),
            ),
            "b(x) = rho(|x|)(-x2, x1)/|x| with rho(r) = r^3, additive noise. Exploratory only: "
            "no completeness claim is attached to this field.",
            box2,
        ),
        ExampleEntry(
            "bounded_osc",
            CoefficientField(1, _osc_drift, (_osc_sigma,), "bounded_osc"),
            (
                Claim(
                    "H_f_mu",
                    {"mu": 2.0, "f": lambda u: 4.0 * (u * u + 1.0), "f_src": "4*(u^2 + 1)"},
                    text="bounded coefficients: H_{f,mu} with f(u) = 4(u^2 + 1), mu = 2",
                ),
                Claim("A_mu_K", {"mu": 2.0, "K": 4.0}, text="A_{mu,K} with K = 4 (|b'| <= 1.5, |sigma'| <= 0.5)"),
                Claim(
                    "G_rho",
                    {"rho": lambda u: 1.5 * (u + 1.0) + 2.25, "rho_src": "1.5*(u + 1) + 2.25"},
                    text="G_rho with rho(u) = 1.5(u + 1) + 2.25",
                ),
            ),
            "b(x) = -tanh(x) + sin(x)/2, sigma(x) = 1 + cos(x)/2: bounded b and a, so f(u) = beta(u^2 + 1) works",
            box1,
        ),
    )


_REGISTRY = _build()


def registry() -> tuple[ExampleEntry, ...]:
    return _REGISTRY


def lookup(name: str) -> ExampleEntry:
    for entry in _REGISTRY:
        if entry.name == name:
            return entry
    raise InputError(f"unknown example {name!r}; known: {', '.join(e.name for e in _REGISTRY)}")


@dataclass
class ClaimResult:
    entry: str
    claim: Claim
    passed: bool
    verdict: str
    detail: dict[str, Any]


def _domain_for(entry: ExampleEntry, params: dict) -> SampleDomain:
    if "radius" in params:
        return SampleDomain.cube(params["radius"], entry.field.dim)
    return entry.reference_domain


def verify_claim(entry: ExampleEntry, claim: Claim) -> ClaimResult:
    """Run the checker behind ``claim`` on the entry's reference domain."""
    from .analysis import additive_conditions_check, coalescence_detect
    from .integrator import TimeGrid, evolve, sample_noise

    p = claim.params
    fld = entry.field
    report: AssumptionReport | None = None
    if claim.kind == "A_mu_K":
        report = check_A_mu_K(fld, _domain_for(entry, p), p["mu"], p["K"])
    elif claim.kind == "G_rho":
        report = check_G_rho(fld, _domain_for(entry, p), p["rho"])
    elif claim.kind == "H_f_mu":
        report = check_H_f_mu(fld, _domain_for(entry, p), p["f"], p["mu"])
    elif claim.kind == "lemma_G":
        report = lemma_G_check(fld, p["radii"])
        if report.satisfied and abs(report.fitted_constant - p["C"]) > 1e-9:
            report.verdict = "violated"
            report.note = f"fitted C = {report.fitted_constant} differs from expected {p['C']}"
    elif claim.kind == "additive_growth":
        report = additive_conditions_check(fld.drift, SampleDomain.ball(p["radius"], fld.dim), p["c"])
    elif claim.kind == "blowup_time":
        grid = TimeGrid(0.0, 2.0 * p["tau"], p["n_steps"])
        states = evolve(fld, [p["x"]], 0.0, grid, sample_noise(grid, fld.noise_dim, 0, 0))
        et = states[-1].exit_time
        ok = et is not None and abs(et - p["tau"]) <= p["tol"]
        return ClaimResult(entry.name, claim, ok == (claim.expect == "satisfied"),
                           "satisfied" if ok else "violated", {"exit_time": et})
    elif claim.kind == "coalescence_time":
        grid = TimeGrid(0.0, p["t1"], p["n_steps"])
        res = coalescence_detect(fld, [p["x"]], [p["y"]], grid, sample_noise(grid, fld.noise_dim, 0, 0), 1e-6)
        ok = res.first_hit is not None and abs(res.first_hit - p["hit"]) <= p["tol"] and res.stays_below
        return ClaimResult(entry.name, claim, ok == (claim.expect == "satisfied"),
                           "satisfied" if ok else "violated", res._asdict())
    else:
        raise InputError(f"unknown claim kind {claim.kind!r}")
    got = "satisfied" if report.satisfied else "violated"
    return ClaimResult(entry.name, claim, got == claim.expect, got, report.to_dict())


def describe(entry: ExampleEntry) -> dict:
    return {
        "name": entry.name,
        "d": entry.field.dim,
        "m": entry.field.noise_dim,
        "expected": [
            {"kind": c.kind, "expect": c.expect, "claim": c.describe()} for c in entry.expected
        ],
        "notes": entry.notes,
    }
