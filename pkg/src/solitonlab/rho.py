"""The value function rho(x, y, sbar) = inf J over paths on [0, sbar].

Derivatives of rho are taken by finite differences over re-solved boundary
value problems.  Re-solves are seeded with the centre minimiser's initial
velocity so that every stencil point stays on the same branch; a sample is
flagged smooth only when that worked (see :func:`_smoothness`).

Checked relations at a smooth sample, with S = gamma'(sbar):

* grad_y rho = 2 S (as a covector: 2 g S),
* d rho / d sbar + |grad rho|^2 / 4 = 2 phi(y),
* (1/2) Lap rho <= n/sbar + int (s/sbar)^2 Lap_f phi + <S, grad f>
  + (2/sbar^2) int (f(gamma) - f(y)),
* for Phi = sbar^(-n/2) exp(-rho/4):
  (d/dsbar - Lap_f + phi/2) Phi <= (Phi/2) (int (s/sbar)^2 Lap_f phi + (2/sbar^2) int (f(gamma) - f(y))).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import NonConvergenceError, UsageError
from .geodesic import (
    GeodesicSolution,
    _as_field,
    minimize_j,
    path_sup_distance,
    shoot_bvp,
    solve_minimizer,
)
from .geometry import curvature_pack, inner
from .variation import InequalityLedger

N_STEPS = 2000  # IVP steps per solve, independent of sbar so stencil paths align
SHOOT_TOL = 1e-12


@dataclass
class RhoSample:
    x: np.ndarray
    y: np.ndarray
    s_bar: float
    rho: float
    minimizer: GeodesicSolution
    smooth_flag: bool = False
    stencil_h: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)
    _ctx: tuple = field(default=(), repr=False)

    @property
    def n(self):
        return self.y.size


@dataclass
class KernelSample:
    phi_kernel: float
    lhs: float
    rhs: float
    tolerance: float = 0.0

    @property
    def residual(self):
        return self.lhs - self.rhs

    @property
    def holds(self):
        return self.residual <= self.tolerance


# --- solving -----------------------------------------------------------------------


def _step(s_bar):
    return s_bar / N_STEPS


def rho(model, phi, x, y, s_bar, multistart=4, seed=0, stencil_h=None, diagnose=True) -> RhoSample:
    """rho by multistart direct minimisation polished by shooting; optionally
    run the smoothness diagnostic (which fills the derivative stencil)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not s_bar > 0:
        raise UsageError("s_bar must be positive")
    sol = solve_minimizer(model, phi, x, y, s_bar, K=256, multistart=multistart, seed=seed,
                          step=_step(s_bar), tol=SHOOT_TOL)
    if not sol.converged:
        raise NonConvergenceError(f"rho: minimiser did not converge at y={y}, s_bar={s_bar}")
    h = default_h(y) if stencil_h is None else stencil_h
    sample = RhoSample(x, y, float(s_bar), float(sol.J_value), sol, stencil_h=h)
    sample._ctx = (model, phi)
    sample._cache[(tuple(np.zeros(y.size)), 0.0)] = (sample.rho, sol)
    if diagnose:
        _smoothness(sample)
    return sample


def default_h(y):
    return 1e-2 * (1.0 + float(np.linalg.norm(y)))


def _resolve(sample: RhoSample, dy, dsbar):
    """rho at (y + dy, sbar + dsbar), seeded with the centre initial velocity."""
    key = (tuple(np.round(dy, 15)), round(float(dsbar), 15))
    if key in sample._cache:
        return sample._cache[key]
    model, phi = sample._ctx
    y = sample.y + np.asarray(dy, dtype=float)
    sb = sample.s_bar + dsbar
    centre = sample.minimizer
    guess = centre.v0 * (sample.s_bar / sb)
    sol = shoot_bvp(model, phi, sample.x, y, sb, guess=guess, tol=SHOOT_TOL, step=_step(sb))
    if not sol.converged:
        # fall back to a direct solve started from the centre path warped to the new endpoint
        t = np.linspace(0.0, 1.0, centre.samples.shape[0])[:, None]
        warped = centre.samples + t * (y - sample.y)
        direct = minimize_j(model, phi, sample.x, y, sb, K=256, initial=[warped])
        sol = shoot_bvp(model, phi, sample.x, y, sb, guess=direct.v0, tol=SHOOT_TOL, step=_step(sb))
    out = (float(sol.J_value), sol)
    sample._cache[key] = out
    return out


def _value(sample, dy, dsbar=0.0):
    return _resolve(sample, dy, dsbar)[0]


# --- finite differences ---------------------------------------------------------------


def fd_gradient(sample: RhoSample, h):
    n = sample.n
    e = np.eye(n) * h
    return np.array([(_value(sample, e[a]) - _value(sample, -e[a])) / (2 * h) for a in range(n)])


def fd_hessian(sample: RhoSample, h):
    n = sample.n
    e = np.eye(n) * h
    r0 = sample.rho
    H = np.zeros((n, n))
    for a in range(n):
        H[a, a] = (_value(sample, e[a]) - 2 * r0 + _value(sample, -e[a])) / h**2
    for a, b in itertools.combinations(range(n), 2):
        pp = _value(sample, e[a] + e[b])
        pm = _value(sample, e[a] - e[b])
        mp = _value(sample, -e[a] + e[b])
        mm = _value(sample, -e[a] - e[b])
        H[a, b] = H[b, a] = (pp - pm - mp + mm) / (4 * h**2)
    return H


def fd_sbar_derivative(sample: RhoSample, h_s=None):
    """Fourth-order four-point central difference in sbar."""
    h_s = 1e-3 * sample.s_bar if h_s is None else h_s
    v = [_value(sample, np.zeros(sample.n), k * h_s) for k in (-2, -1, 1, 2)]
    return (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h_s)


def metric_laplacian(model, y, grad, hess):
    """g^{ij} (d_ij u - Gamma^k_ij d_k u) from chart derivatives."""
    g = model.metric(y)
    gam = model.christoffel(y)
    ginv = np.linalg.inv(g)
    return float(np.einsum("ij,ij->", ginv, hess - np.einsum("kij,k->ij", gam, grad)))


def _branch_ok(sample, sol, delta):
    return path_sup_distance(sample.minimizer, sol) <= 10 * max(delta, 1e-12)


def _smoothness(sample: RhoSample):
    """Smooth iff every stencil re-solve converges on the centre branch
    (path deviation <= 10 |delta|) and the gradient is stable under
    h -> h/2 within 5%."""
    h = sample.stencil_h
    diag = sample.diagnostics
    try:
        g1 = fd_gradient(sample, h)
        g2 = fd_gradient(sample, h / 2)
        fd_hessian(sample, h)
        fd_hessian(sample, h / 2)
        fd_sbar_derivative(sample)
    except (NonConvergenceError, UsageError) as exc:
        diag["smooth_reason"] = f"re-solve failed: {exc}"
        sample.smooth_flag = False
        return sample
    ok = True
    for (dy, dsb), (_, sol) in sample._cache.items():
        delta = max(float(np.linalg.norm(dy)), abs(dsb))
        if not sol.converged:
            ok = False
            diag["smooth_reason"] = "stencil solve not converged"
        elif delta > 0 and not _branch_ok(sample, sol, delta):
            ok = False
            diag["smooth_reason"] = "branch hop at stencil point"
    scale = max(float(np.linalg.norm(g2)), 1e-12)
    diag["grad_stability"] = float(np.linalg.norm(g1 - g2) / scale)
    if diag["grad_stability"] > 0.05:
        ok = False
        diag.setdefault("smooth_reason", "gradient unstable under halving")
    diag["stencil_points"] = len(sample._cache) - 1
    sample.smooth_flag = ok
    return sample


def _require_smooth(sample):
    if not sample.smooth_flag:
        raise UsageError("sample is not smooth-flagged")


# --- checks --------------------------------------------------------------------------


def grad_identity_check(model, phi, sample: RhoSample, h=None) -> float:
    """|d rho - 2 g S(sbar)|_{g^-1} / |2 S|: relative residual of the covector."""
    _require_smooth(sample)
    h = sample.stencil_h if h is None else h
    grad = fd_gradient(sample, h)
    sol = sample.minimizer
    g = model.metric(sample.y)
    target = 2 * g @ sol.velocities[-1]
    diff = grad - target
    ginv = np.linalg.inv(g)
    num = math.sqrt(max(diff @ ginv @ diff, 0.0))
    den = math.sqrt(max(target @ ginv @ target, 0.0))
    return num / den if den > 1e-12 else num


def hj_residual(model, phi, sample: RhoSample, h=None) -> float:
    """|d rho/d sbar + |grad rho|^2/4 - 2 phi(y)| with the gradient at step h."""
    _require_smooth(sample)
    h = sample.stencil_h if h is None else h
    field_ = _as_field(model, phi)
    grad = fd_gradient(sample, h)
    ginv = np.linalg.inv(model.metric(sample.y))
    d_s = fd_sbar_derivative(sample)
    return abs(d_s + 0.25 * grad @ ginv @ grad - 2 * float(field_(sample.y)))


def hj_order(model, phi, sample: RhoSample, floor=1e-8):
    """(res_h, res_h/2, observed order); order is inf when both sit at the
    round-off floor."""
    r1 = hj_residual(model, phi, sample, sample.stencil_h)
    r2 = hj_residual(model, phi, sample, sample.stencil_h / 2)
    if r1 <= floor and r2 <= floor:
        return r1, r2, math.inf
    if r2 <= 0:
        return r1, r2, math.inf
    return r1, r2, math.log2(r1 / r2)


def _path_terms(model, phi, sample: RhoSample):
    """I = int (s/sbar)^2 Lap_f phi ds, F = (2/sbar^2) int (f(gamma) - f(y)) ds
    and <S, grad f>(sbar), by Simpson on the shooting samples (with the
    trapezoid difference as a quadrature error estimate)."""
    sol = sample.minimizer
    field_ = _as_field(model, phi)
    pack = curvature_pack(model, sol.samples, field_)
    s = sol.path.s
    sb = sample.s_bar
    w = (s / sb) ** 2 * pack.f_lap_phi
    f = model.fields["f"](sol.samples)
    fy = float(model.fields["f"](sample.y))
    I_s = simpson(w, x=s)
    F_s = 2 / sb**2 * simpson(f - fy, x=s)
    I_t = np.trapezoid(w, s)
    F_t = 2 / sb**2 * np.trapezoid(f - fy, s)
    Sf = float(inner(pack.metric[-1], sol.velocities[-1], pack.grad_f[-1]))
    return I_s, F_s, Sf, abs(I_s - I_t) + abs(F_s - F_t)


def _half_laplacian(model, sample, h):
    grad = fd_gradient(sample, h)
    hess = fd_hessian(sample, h)
    return 0.5 * metric_laplacian(model, sample.y, grad, hess)


def laplacian_comparison(model, phi, sample: RhoSample, h=None) -> InequalityLedger:
    """Ledger for (1/2) Lap rho against the path integral bound.  The declared
    tolerance is |lhs(h) - lhs(h/2)| plus the quadrature estimate."""
    _require_smooth(sample)
    h = sample.stencil_h if h is None else h
    n = sample.n
    lhs = _half_laplacian(model, sample, h)
    lhs2 = _half_laplacian(model, sample, h / 2)
    I, F, Sf, qerr = _path_terms(model, phi, sample)
    rhs = n / sample.s_bar + I + Sf + F
    led = InequalityLedger("laplacian", lhs, rhs, _rho_inputs(model, phi, sample))
    led.diagnostics["tolerance"] = abs(lhs - lhs2) + qerr + 1e-8
    led.diagnostics["lhs_half_step"] = lhs2
    return led


def ledger_holds(led: InequalityLedger):
    return led.slack >= -led.diagnostics.get("tolerance", 1e-8)


def _rho_inputs(model, phi, sample):
    C = sample.minimizer.C_estimate
    return {"model": model.name, "c": getattr(phi, "c", ""), "n": sample.n, "s_bar": sample.s_bar,
            "C": C, "zeta": "ramp"}


def _kernel_lhs(model, phi, sample, h):
    field_ = _as_field(model, phi)
    n, sb, r = sample.n, sample.s_bar, sample.rho
    grad = fd_gradient(sample, h)
    hess = fd_hessian(sample, h)
    lap = metric_laplacian(model, sample.y, grad, hess)
    ginv = np.linalg.inv(model.metric(sample.y))
    d_s = fd_sbar_derivative(sample)
    df = model.fields["f"].grad(sample.y)
    Phi = sb ** (-n / 2) * math.exp(-r / 4)
    # chain rule for Phi = sbar^(-n/2) exp(-rho/4), no use of the HJ equation
    dPhi_ds = Phi * (-n / (2 * sb) - d_s / 4)
    lap_Phi = Phi * (-lap / 4 + grad @ ginv @ grad / 16)
    f_dot = Phi * (-(df @ ginv @ grad) / 4)
    lhs = dPhi_ds - (lap_Phi - f_dot) + 0.5 * float(field_(sample.y)) * Phi
    return Phi, lhs


def phi_kernel_check(model, phi, sample: RhoSample, h=None) -> KernelSample:
    _require_smooth(sample)
    h = sample.stencil_h if h is None else h
    Phi, lhs = _kernel_lhs(model, phi, sample, h)
    _, lhs2 = _kernel_lhs(model, phi, sample, h / 2)
    I, F, _, qerr = _path_terms(model, phi, sample)
    rhs = 0.5 * Phi * (I + F)
    return KernelSample(Phi, lhs, rhs, tolerance=abs(lhs - lhs2) + 0.5 * Phi * qerr + 1e-8)


# --- batches -------------------------------------------------------------------------


@dataclass
class RhoRow:
    y: list
    s_bar: float
    rho: float
    smooth: bool
    h: float = float("nan")
    grad_res: float = float("nan")
    hj_res: float = float("nan")
    hj_res_half: float = float("nan")
    hj_order: float = float("nan")
    lap_lhs: float = float("nan")
    lap_rhs: float = float("nan")
    lap_tol: float = float("nan")
    kernel_res: float = float("nan")
    kernel_tol: float = float("nan")

    @property
    def lap_ok(self):
        return self.lap_rhs - self.lap_lhs >= -self.lap_tol

    @property
    def kernel_ok(self):
        return self.kernel_res <= self.kernel_tol


def analyze(model, phi, x, y, s_bar, h=None, multistart=4, seed=0) -> RhoRow:
    try:
        sample = rho(model, phi, x, y, s_bar, multistart=multistart, seed=seed, stencil_h=h)
    except NonConvergenceError:
        return RhoRow(list(map(float, y)), float(s_bar), float("nan"), False)
    row = RhoRow(sample.y.tolist(), sample.s_bar, sample.rho, sample.smooth_flag, sample.stencil_h)
    if not sample.smooth_flag:
        return row
    row.grad_res = grad_identity_check(model, phi, sample)
    row.hj_res, row.hj_res_half, row.hj_order = hj_order(model, phi, sample)
    led = laplacian_comparison(model, phi, sample)
    row.lap_lhs, row.lap_rhs, row.lap_tol = led.lhs, led.rhs, led.diagnostics["tolerance"]
    ks = phi_kernel_check(model, phi, sample)
    row.kernel_res, row.kernel_tol = ks.residual, ks.tolerance
    return row


def cigar_grid(side=7, lo=0.5, hi=3.0, s_bars=(1.0, 2.0, 4.0)):
    ax = np.linspace(lo, hi, side)
    return [(np.array([a, b]), sb) for sb in s_bars for a in ax for b in ax]


def rho_columns(n):
    return [f"y{i + 1}" for i in range(n)] + ["s_bar", "rho", "smooth", "grad_res", "hj_res",
                                              "lap_lhs", "lap_rhs", "kernel_res"]


def write_rho_csv(path, rows, n):
    from .variation import _fmt

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rho_columns(n))
        for r in rows:
            vals = list(r.y) + [r.s_bar, r.rho, r.smooth, r.grad_res, r.hj_res, r.lap_lhs, r.lap_rhs, r.kernel_res]
            w.writerow([_fmt(v) for v in vals])


HJ_COLUMNS = ("s_bar", "h", "hj_res", "h_half", "hj_res_half", "order")


def write_hj_csv(path, rows, n):
    """Halved-stencil HJ residual pairs, one line per smooth sample."""
    from .variation import _fmt

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"y{i + 1}" for i in range(n)] + list(HJ_COLUMNS))
        for r in rows:
            if not r.smooth:
                continue
            vals = list(r.y) + [r.s_bar, r.h, r.hj_res, r.h / 2, r.hj_res_half, r.hj_order]
            w.writerow([_fmt(v) for v in vals])


def rho_summary(rows):
    smooth = [r for r in rows if r.smooth]
    finite_orders = [r.hj_order for r in smooth if math.isfinite(r.hj_order)]
    return {
        "samples": len(rows),
        "smooth": len(smooth),
        "non_smooth_fraction": 1 - len(smooth) / len(rows) if rows else float("nan"),
        "max_grad_res": max((r.grad_res for r in smooth), default=float("nan")),
        "min_hj_order": min(finite_orders, default=float("inf")),
        "lap_violations": sum(not r.lap_ok for r in smooth),
        "kernel_violations": sum(not r.kernel_ok for r in smooth),
    }

