"""Second variation, index form and the integral inequalities along minimisers.

Every ledger integral is computed by Gauss-Legendre quadrature on the
union of the path grid and the breakpoints of the test function, with path
quantities interpolated by cubic splines.  This keeps the kinks of the
trapezoid profile from polluting the slack with O(ds) errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError, DomainError, UsageError
from .geodesic import (
    DiscretePath,
    GeodesicSolution,
    PhiSpec,
    VariationField,
    _as_field,
    _rk4,
    conserved_quantity,
    j_functional,
)
from .geometry import curvature_pack, inner, orthonormal_frame, parallel_transport, path_derivative

SLACK_TOL = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


# --- test functions ------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """zeta on [0, s_bar].

    kinds: ``trapezoid`` (s on [0,1], 1 on the plateau, s_bar - s at the
    end; needs s_bar >= 2), ``linear_ramp`` (s / s_bar, nonzero at s_bar),
    ``sine_bump`` (sin(pi s / s_bar)) and ``custom`` (values on a uniform
    grid, interpolated by a cubic spline).
    """

    __test__ = False  # not a pytest class

    kind: str
    s_bar: float
    samples: Optional[tuple] = None

    def __post_init__(self):
        if not self.s_bar > 0:
            raise UsageError("s_bar must be positive")
        if self.kind == "trapezoid" and self.s_bar < 2:
            raise UsageError("trapezoid profile needs s_bar >= 2")
        if self.kind == "custom":
            if self.samples is None or len(self.samples) < 4:
                raise UsageError("custom profile needs at least 4 samples")
        elif self.kind not in ("trapezoid", "linear_ramp", "sine_bump"):
            raise UsageError(f"unknown test function {self.kind!r}")

    @classmethod
    def trapezoid(cls, s_bar):
        return cls("trapezoid", float(s_bar))

    @classmethod
    def linear_ramp(cls, s_bar):
        return cls("linear_ramp", float(s_bar))

    @classmethod
    def sine_bump(cls, s_bar):
        return cls("sine_bump", float(s_bar))

    @classmethod
    def custom(cls, s_bar, values):
        return cls("custom", float(s_bar), tuple(float(v) for v in values))

    @property
    def breakpoints(self):
        if self.kind == "trapezoid":
            return (1.0, self.s_bar - 1.0)
        return ()

    @property
    def vanishes(self):
        z = self.value(np.array([0.0, self.s_bar]))
        return bool(abs(z[0]) <= 1e-12 and abs(z[1]) <= 1e-12)

    def _spline(self):
        vals = np.asarray(self.samples)
        return CubicSpline(np.linspace(0, self.s_bar, vals.size), vals)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "trapezoid":
            return np.minimum(np.minimum(s, 1.0), self.s_bar - s)
        if self.kind == "linear_ramp":
            return s / self.s_bar
        if self.kind == "sine_bump":
            return np.sin(np.pi * s / self.s_bar)
        return self._spline()(s)

    def derivative(self, s):
        """One-sided from the right at the kinks of the trapezoid."""
        s = np.asarray(s, dtype=float)
        if self.kind == "trapezoid":
            return np.where(s < 1.0, 1.0, np.where(s < self.s_bar - 1.0, 0.0, -1.0))
        if self.kind == "linear_ramp":
            return np.full_like(s, 1.0 / self.s_bar)
        if self.kind == "sine_bump":
            return np.pi / self.s_bar * np.cos(np.pi * s / self.s_bar)
        return self._spline()(s, 1)

    def int_dz2(self):
        """int zeta'^2 ds (exact for the closed-form kinds)."""
        if self.kind == "trapezoid":
            return 2.0
        if self.kind == "linear_ramp":
            return 1.0 / self.s_bar
        if self.kind == "sine_bump":
            return np.pi**2 / (2 * self.s_bar)
        return _gauss(self, self._knots(), lambda s: 1.0, "dz2")

    def int_abs_zdz(self):
        """int |zeta zeta'| ds."""
        if self.kind in ("trapezoid", "sine_bump"):
            return 1.0  # zeta rises to 1 and falls back: each half contributes 1/2
        if self.kind == "linear_ramp":
            return 0.5
        return _gauss(self, self._knots(), lambda s: 1.0, "abs_zdz")

    def _knots(self):
        return np.linspace(0.0, self.s_bar, len(self.samples))

    @property
    def label(self):
        return self.kind


def _weight(zeta, s, kind):
    z = zeta.value(s)
    dz = zeta.derivative(s)
    return {"z2": z * z, "dz2": dz * dz, "zdz": z * dz, "abs_zdz": np.abs(z * dz)}[kind]


def _gauss(zeta, grid, fn, kind, order=None):
    """int w_kind(zeta) * fn(s) ds, Gauss-Legendre per cell of grid U breakpoints."""
    nodes, wts = (_GL_NODES, _GL_WEIGHTS) if order is None else np.polynomial.legendre.leggauss(order)
    lo, hi = grid[0], grid[-1]
    bps = [b for b in zeta.breakpoints if lo < b < hi]
    knots = np.unique(np.concatenate([grid, bps]))
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    s = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    vals = _weight(zeta, s, kind) * fn(s)
    return float(np.sum(half[:, None] * wts[None, :] * vals))


def _path_integral(s_grid, values, zeta, kind, order=None):
    spline = CubicSpline(s_grid, values)
    return _gauss(zeta, s_grid, spline, kind, order)


# --- ledgers ------------------------------------------------------------------------


@dataclass
class InequalityLedger:
    name: str
    lhs: float
    rhs: float
    inputs: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def holds(self):
        return self.slack >= -SLACK_TOL

    def row(self):
        i = self.inputs
        return {
            "model": i.get("model", ""),
            "c": i.get("c", ""),
            "n": i.get("n", ""),
            "s_bar": i.get("s_bar", ""),
            "C": i.get("C", ""),
            "zeta": i.get("zeta", ""),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "holds": self.holds,
        }


LEDGER_COLUMNS = ("model", "c", "n", "s_bar", "C", "zeta", "lhs", "rhs", "slack", "holds")


def write_ledger_csv(path, ledgers):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for led in ledgers:
            row = led.row()
            w.writerow([_fmt(row[k]) for k in LEDGER_COLUMNS])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _require_vanishing(zeta: TestFunction):
    if not zeta.vanishes:
        raise UsageError(f"test function {zeta.kind} does not vanish at the endpoints")


def _require_converged(sol: GeodesicSolution):
    if not sol.converged:
        raise UsageError("solution is not converged")


def _phi_c(phi):
    return phi.c if isinstance(phi, PhiSpec) and phi.kind == "c_times_R" else None


def _inputs(model, phi, sol, zeta, **extra):
    C, _ = conserved_quantity(sol)
    out = {"model": model.name, "c": _phi_c(phi) if phi is not None else extra.pop("c", ""),
           "n": model.dim, "s_bar": sol.s_bar, "C": C, "zeta": zeta.label}
    out.update(extra)
    return out


def _refine_if_marginal(make):
    """Build the ledger; slack just below zero is re-evaluated with 8-point
    quadrature before it is classified."""
    led = make(None)
    if -SLACK_TOL <= led.slack < 0 or (led.slack < -SLACK_TOL and led.slack > -1e-6):
        led = make(8)
        led.diagnostics["refined"] = True
    return led


def _pack_along(model, phi, sol):
    field_ = _as_field(model, phi) if phi is not None else None
    return curvature_pack(model, sol.samples, field_)


# --- index form ----------------------------------------------------------------------


def covariant_derivative_along(model, sol: GeodesicSolution, U: VariationField):
    """nabla_S U = U' + Gamma(S, U) with fourth-order differences for U'."""
    dU = path_derivative(U.vectors, sol.path.ds)
    gam = model.christoffel(sol.samples)
    return dU + np.einsum("kaij,ki,kj->ka", gam, sol.velocities, U.vectors)


def index_form(model, phi, sol: GeodesicSolution, U: VariationField) -> float:
    """int |nabla_S U|^2 - <Rm(S,U)U, S> + Hess phi(U, U) ds (trapezoid)."""
    if not U.vanishing:
        raise UsageError("index_form needs a variation field vanishing at both ends")
    if U.vectors.shape != sol.samples.shape:
        raise UsageError("variation field does not match the path grid")
    field_ = _as_field(model, phi)
    pack = curvature_pack(model, sol.samples, field_)
    DU = covariant_derivative_along(model, sol, U)
    S, V = sol.velocities, U.vectors
    kin = inner(pack.metric, DU, DU)
    curv = np.einsum("kabcd,ka,kb,kc,kd->k", pack.riemann, S, V, V, S)
    hess = np.einsum("kij,ki,kj->k", pack.hess_phi, V, V)
    vals = kin - curv + hess
    ds = sol.path.ds
    return float(ds * (np.sum(vals) - 0.5 * (vals[0] + vals[-1])))


def exp_map(model, points, vectors, steps=8):
    """Riemannian exponential exp_p(v) for a batch, by RK4 over [0, 1]."""
    zero = PhiSpec.zero()
    xe, _, _, exited = _rk4(model, zero.field(model), points, vectors, 1.0, steps, store=False, phi=zero)
    if np.any(exited) or not np.all(model.in_domain(xe)):
        raise DomainError("exponential map left the chart domain")
    return xe


def second_variation_fd(model, phi, sol: GeodesicSolution, U: VariationField, h=1e-3) -> float:
    """(J(u=h) - 2 J(0) + J(-h)) / (2 h^2) along the family
    gamma_u(s_k) = exp_{gamma(s_k)}(u U_k).

    The curves u -> gamma_u(s) are geodesics, so nabla_U U = 0 and the
    result matches the index form for any base path.
    """
    if not U.vanishing:
        raise UsageError("second_variation_fd needs a variation field vanishing at both ends")
    X = sol.samples
    J = {}
    for u in (-h, 0.0, h):
        Xu = X if u == 0.0 else exp_map(model, X, u * U.vectors)
        J[u] = j_functional(model, phi, DiscretePath(Xu, sol.s_bar))
    return (J[h] - 2 * J[0.0] + J[-h]) / (2 * h * h)


def parallel_frame(model, sol: GeodesicSolution):
    """Parallel orthonormal frame: Gram-Schmidt on the chart basis at gamma(0),
    transported along the path without re-orthonormalisation."""
    E0 = orthonormal_frame(model.metric(sol.samples[0]))
    return parallel_transport(model, sol.samples, sol.s_bar, E0, sol.velocities)


# --- the inequalities ---------------------------------------------------------------


def trace_index_inequality(model, phi, sol, zeta: TestFunction) -> InequalityLedger:
    """Sum of index forms over a parallel frame with U_i = zeta E_i:
    0 <= int n zeta'^2 + zeta^2 Lap phi - zeta^2 Rc(S, S)."""
    _require_vanishing(zeta)
    _require_converged(sol)
    field_ = _as_field(model, phi)
    pack = curvature_pack(model, sol.samples, field_)
    E = parallel_frame(model, sol)  # (K+1, n, n): E[k, i] is the i-th frame vector
    S = sol.velocities
    rc_ss = np.einsum("kabcd,ka,kib,kic,kd->k", pack.riemann, S, E, E, S)
    lap = np.einsum("kab,kia,kib->k", pack.hess_phi, E, E)
    s = sol.path.s
    n = model.dim

    def make(order):
        lhs = _path_integral(s, rc_ss, zeta, "z2", order) - _path_integral(s, lap, zeta, "z2", order)
        rhs = n * zeta.int_dz2()
        return InequalityLedger("trace_index", lhs, rhs, _inputs(model, phi, sol, zeta))

    led = _refine_if_marginal(make)
    frame_err = np.einsum("kia,kab,kjb->kij", E, pack.metric, E) - np.eye(n)
    led.diagnostics["frame_drift"] = float(np.max(np.abs(frame_err)))
    led.diagnostics["trace_vs_pack"] = float(max(
        np.max(np.abs(rc_ss - np.einsum("kab,ka,kb->k", pack.ricci, S, S))),
        np.max(np.abs(lap - pack.lap_phi)),
    ))
    return led


def inequality_exeter(model, phi, sol, zeta: TestFunction) -> InequalityLedger:
    """-int zeta^2 Lap_f phi + int zeta^2 Rc_f(S,S)
    <= int n zeta'^2 - 2 zeta zeta' <grad f, S>."""
    _require_vanishing(zeta)
    _require_converged(sol)
    field_ = _as_field(model, phi)
    pack = curvature_pack(model, sol.samples, field_)
    S = sol.velocities
    s = sol.path.s
    n = model.dim
    neg_flap = -pack.f_lap_phi
    rcf = np.einsum("kab,ka,kb->k", pack.ricci_f, S, S)
    fS = inner(pack.metric, pack.grad_f, S)

    def make(order):
        lhs = _path_integral(s, neg_flap, zeta, "z2", order) + _path_integral(s, rcf, zeta, "z2", order)
        rhs = n * zeta.int_dz2() - 2 * _path_integral(s, fS, zeta, "zdz", order)
        return InequalityLedger("exeter", lhs, rhs, _inputs(model, phi, sol, zeta))

    led = _refine_if_marginal(make)
    c = _phi_c(phi)
    if c is not None and model.soliton:
        led.diagnostics["flap_identity"] = float(np.max(np.abs(neg_flap - 2 * c * pack.ricci_norm2)))
        led.diagnostics["lhs_identity"] = abs(led.lhs - 2 * c * _path_integral(s, pack.ricci_norm2, zeta, "z2"))
    return led


def _bound_rhs(n, c, C, zeta):
    if C + 2 * c < 0:
        raise DataError(f"C + 2c = {C + 2 * c:.3e} < 0: solver failure")
    return (n / (2 * c)) * zeta.int_dz2() + (math.sqrt(C + 2 * c) / c) * zeta.int_abs_zdz()


def closed_bound(n, c):
    """(n + sqrt(1 + 2c)) / c."""
    return (n + math.sqrt(1 + 2 * c)) / c


def _curvature_bound_ledger(name, model, sol, zeta, c, integrand, pointwise=None):
    _require_vanishing(zeta)
    _require_converged(sol)
    if not c > 0:
        raise UsageError("c must be positive")
    C, _ = conserved_quantity(sol)
    rhs = _bound_rhs(model.dim, c, C, zeta)
    s = sol.path.s

    def make(order):
        lhs = _path_integral(s, integrand, zeta, "z2", order)
        return InequalityLedger(name, lhs, rhs, _inputs(model, None, sol, zeta, c=c))

    led = _refine_if_marginal(make)
    led.diagnostics["closed_bound"] = closed_bound(model.dim, c)
    if pointwise is not None:
        led.diagnostics.update(pointwise)
    return led


def inequality_369894(model, sol, zeta: TestFunction, c) -> InequalityLedger:
    """int zeta^2 |Rc|^2 <= (n/2c) int zeta'^2 + (sqrt(C+2c)/c) int |zeta zeta'|."""
    pack = curvature_pack(model, sol.samples)
    return _curvature_bound_ledger("rc_bound", model, sol, zeta, c, pack.ricci_norm2)


def gradR_variant(model, sol: GeodesicSolution, zeta: TestFunction, c) -> InequalityLedger:
    """(1/4) int zeta^2 |grad R|^2 under the same right-hand side, plus the
    pointwise check |grad R| = 2 |Rc(grad f)| along the path."""
    pack = curvature_pack(model, sol.samples)
    gR2 = inner(pack.metric, pack.grad_R, pack.grad_R)
    rc_gf = np.einsum("kab,kb->ka", pack.ricci, pack.grad_f)  # covector
    rc_gf2 = np.einsum("kab,ka,kb->k", pack.metric_inv, rc_gf, rc_gf)
    gR = np.sqrt(np.maximum(gR2, 0))
    point = {
        "gradR_identity": float(np.max(np.abs(gR - 2 * np.sqrt(np.maximum(rc_gf2, 0))))),
        "gradR_le_2rc": bool(np.all(gR <= 2 * np.sqrt(pack.ricci_norm2) + 1e-7)),
    }
    return _curvature_bound_ledger("gradR_bound", model, sol, zeta, c, 0.25 * gR2, point)


def variation_fields(sol: GeodesicSolution, count, seed=0, model=None):
    """Endpoint-vanishing fields: random combinations of sin(k pi s/sbar)
    times random constant chart directions."""
    rng = np.random.default_rng(seed)
    s = sol.path.s
    n = sol.samples.shape[1]
    out = []
    for _ in range(count):
        V = np.zeros_like(sol.samples)
        for _k in range(2):
            mode = int(rng.integers(1, 4))
            direction = rng.normal(size=n)
            V += np.sin(mode * np.pi * s / sol.s_bar)[:, None] * direction[None, :] * rng.uniform(0.2, 1.0)
        if model is not None:
            # scale to roughly unit metric length so exp-map steps stay short
            norms = np.sqrt(np.maximum(inner(model.metric(sol.samples), V, V), 1e-300))
            V /= max(norms.max(), 1e-12)
        out.append(VariationField(V))
    return out
