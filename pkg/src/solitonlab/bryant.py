"""Rotationally symmetric steady soliton (Bryant type) by ODE shooting.

Warped product g = dr^2 + w(r)^2 g_{S^{n-1}} with radial potential f(r).
Rc + Hess f = 0 reduces to

    w'' = (n-2)(1 - w'^2)/w + f' w',      f'' = (n-1) w''/w,

with smooth-origin data w(0)=0, w'(0)=1, f'(0)=0, f''(0)=b < 0.  The
quantity R + f'^2 is a first integral; the profile is rescaled so that it
equals 1.

Near the origin the profile is the Taylor series below (odd in r, exact to
round-off for r <= SERIES_RADIUS); beyond it a DOP853 solution sampled on a
uniform grid is interpolated with cubic Hermite splines whose slopes come
from the ODE right-hand side.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from .errors import ConstructionError, IntegrationError, SpecError
from .geometry import ScalarField

SERIES_RADIUS = 0.02
GRID_SPACING = 5e-3


class ShootingError(ConstructionError):
    pass


def taylor_coefficients(n, b):
    """Series w = r + a3 r^3 + ... + a9 r^9, f' = b r + b3 r^3 + ... + b7 r^7."""
    a3 = b / (6 * (n - 1))
    a5 = b**2 * (13 * n - 10) / (120 * (n - 1) ** 2 * (n + 2))
    a7 = b**3 * (493 * n**2 - 678 * n + 200) / (5040 * (n - 1) ** 3 * (n + 2) * (n + 4))
    a9 = (
        b**4
        * (37369 * n**4 + 21830 * n**3 - 135724 * n**2 + 74440 * n + 2400)
        / (362880 * (n - 1) ** 4 * (n + 2) ** 2 * (n + 4) * (n + 6))
    )
    b3 = 2 * b**2 / (3 * (n + 2))
    b5 = b**3 * (11 * n - 10) / (15 * (n - 1) * (n + 2) * (n + 4))
    b7 = (
        2 * b**4 * (146 * n**3 + 105 * n**2 - 506 * n + 240)
        / (315 * (n - 1) ** 2 * (n + 2) ** 2 * (n + 4) * (n + 6))
    )
    w = Polynomial([0, 1, 0, a3, 0, a5, 0, a7, 0, a9])
    fp = Polynomial([0, b, 0, b3, 0, b5, 0, b7])
    return w, fp


def _rhs(n):
    def rhs(r, y):
        w, w1, fp = y
        w2 = (n - 2) * (1 - w1 * w1) / w + fp * w1
        return np.array([w1, w2, (n - 1) * w2 / w])

    return rhs


def _derived(n, w, w1, fp):
    w2 = (n - 2) * (1 - w1 * w1) / w + fp * w1
    f2 = (n - 1) * w2 / w
    w3 = (n - 2) * (-2 * w1 * w2 / w - (1 - w1 * w1) * w1 / w**2) + f2 * w1 + fp * w2
    f3 = (n - 1) * (w3 / w - w2 * w1 / w**2)
    return w2, f2, f3


def scalar_curvature(n, w, w1, w2):
    return -2 * (n - 1) * w2 / w + (n - 1) * (n - 2) * (1 - w1 * w1) / w**2


@dataclass
class BryantProfile:
    n: int
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    fp: np.ndarray
    shoot_param: float
    hamiltonian_constant: float = 1.0
    scale: float = 1.0
    hamiltonian_drift: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    interpolation: str = "cubic_hermite"

    def __post_init__(self):
        self.r = np.asarray(self.r, float)
        self.w = np.asarray(self.w, float)
        self.wp = np.asarray(self.wp, float)
        self.fp = np.asarray(self.fp, float)
        d = np.diff(self.r)
        if self.r.size < 4 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise SpecError("profile grid must be uniform with at least 4 knots")
        self.dr = float(d[0])
        self.r0 = float(self.r[0])
        self.b = self.fp_slope_at_origin()
        self._series = taylor_coefficients(self.n, self.b)
        self._polys = self._series_polys()
        _, f2, _ = _derived(self.n, self.w, self.wp, self.fp)
        self._f2 = f2
        w2, _, _ = _derived(self.n, self.w, self.wp, self.fp)
        self._w2 = w2
        # cumulative f at knots, exact for the Hermite interpolant of f'
        f0 = self._series[1].integ()(self.r0)
        seg = self.dr * (self.fp[:-1] + self.fp[1:]) / 2 + self.dr**2 * (f2[:-1] - f2[1:]) / 12
        self._f = np.concatenate([[f0], f0 + np.cumsum(seg)])

    @property
    def r_max(self):
        return float(self.r[-1])

    def fp_slope_at_origin(self):
        """Recover f''(0) from the first knot by inverting the series."""
        r0, target = self.r0, self.fp[0]
        b = target / r0
        for _ in range(50):
            fp = taylor_coefficients(self.n, b)[1]
            b_new = (target - (fp(r0) - b * r0)) / r0
            if abs(b_new - b) <= 1e-16 * max(1.0, abs(b)):
                return float(b_new)
            b = b_new
        return float(b)

    # --- evaluation ---------------------------------------------------------

    def _hermite(self, r):
        k = np.clip(((r - self.r0) / self.dr).astype(int), 0, self.r.size - 2)
        t = (r - self.r[k]) / self.dr
        h = self.dr
        t2, t3 = t * t, t * t * t
        h00, h10, h01, h11 = 2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2
        w = h00 * self.w[k] + h10 * h * self.wp[k] + h01 * self.w[k + 1] + h11 * h * self.wp[k + 1]
        w1 = h00 * self.wp[k] + h10 * h * self._w2[k] + h01 * self.wp[k + 1] + h11 * h * self._w2[k + 1]
        fp = h00 * self.fp[k] + h10 * h * self._f2[k] + h01 * self.fp[k + 1] + h11 * h * self._f2[k + 1]
        i00 = t**4 / 2 - t3 + t
        i10 = t**4 / 4 - 2 * t3 / 3 + t2 / 2
        i01 = -(t**4) / 2 + t3
        i11 = t**4 / 4 - t3 / 3
        f = self._f[k] + h * (
            i00 * self.fp[k] + i10 * h * self._f2[k] + i01 * self.fp[k + 1] + i11 * h * self._f2[k + 1]
        )
        return w, w1, fp, f

    def radial(self, r):
        """Radial quantities at ``r`` (array).

        Keys: w, w1, w2, fp, f2, f3, f, h = (w/r)^2, k = (1-h)/r^2, h_r = h'/r,
        k_r = k'/r, and for
        each radial field F in (f, R): F, F_r = F'/r, F_q = (F'' - F'/r)/r^2.
        """
        r = np.abs(np.asarray(r, dtype=float))
        out = {}
        near = r <= self.r0
        far = ~near
        keys = ("w", "w1", "w2", "fp", "f2", "f3", "f", "h", "k", "h_r", "k_r",
                "f_r", "f_q", "R", "R_r", "R_q", "R1", "R2")
        for key in keys:
            out[key] = np.empty_like(r)
        if np.any(near):
            self._series_eval(r[near], out, near)
        if np.any(far):
            rf = r[far]
            w, w1, fp, f = self._hermite(rf)
            w2, f2, f3 = _derived(self.n, w, w1, fp)
            h = (w / rf) ** 2
            k = (1 - h) / rf**2
            h_r = 2 * (w / rf) * (w1 * rf - w) / rf**3
            R1 = -2 * fp * f2
            R2 = -2 * (f2 * f2 + fp * f3)
            vals = {
                "w": w, "w1": w1, "w2": w2, "fp": fp, "f2": f2, "f3": f3, "f": f,
                "h": h, "k": k, "h_r": h_r, "k_r": -(h_r + 2 * k) / rf**2,
                "f_r": fp / rf, "f_q": (f2 - fp / rf) / rf**2,
                "R": 1 - fp * fp, "R_r": R1 / rf, "R_q": (R2 - R1 / rf) / rf**2,
                "R1": R1, "R2": R2,
            }
            for key, v in vals.items():
                out[key][far] = v
        return out

    def _series_polys(self):
        w, fp = self._series
        u = Polynomial(w.coef[1:]) - 1  # w/r - 1
        h = (u + 1) ** 2
        k = Polynomial((1 - h).coef[2:])  # (1-h)/r^2, exact division
        f_r = Polynomial(fp.coef[1:])
        f2 = fp.deriv()
        f_q = Polynomial((f2 - f_r).coef[2:])
        R = 1 - fp * fp
        R1 = R.deriv()
        R_r = Polynomial(R1.coef[1:])
        R_q = Polynomial((R1.deriv() - R_r).coef[2:])
        return {
            "w": w, "w1": w.deriv(), "w2": w.deriv(2), "fp": fp,
            "f2": f2, "f3": fp.deriv(2), "f": fp.integ(),
            "h": h, "k": k, "f_r": f_r, "f_q": f_q,
            "h_r": Polynomial(h.deriv().coef[1:]), "k_r": Polynomial(k.deriv().coef[1:]),
            "R": R, "R_r": R_r, "R_q": R_q, "R1": R1, "R2": R1.deriv(),
        }

    def _series_eval(self, r, out, mask):
        for key, poly in self._polys.items():
            out[key][mask] = poly(r)

    def scalar_curvature_geometric(self, r):
        q = self.radial(r)
        return scalar_curvature(self.n, q["w"], q["w1"], q["w2"])

    # --- persistence ----------------------------------------------------------

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "w", "wp", "fp"])
            for row in zip(self.r, self.w, self.wp, self.fp):
                wr.writerow([f"{v:.17g}" for v in row])
        return path

    @classmethod
    def from_csv(cls, path, n):
        with Path(path).open() as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if [h.strip() for h in header] != ["r", "w", "wp", "fp"]:
                raise SpecError(f"unexpected profile header {header}")
            data = np.array([[float(v) for v in row] for row in rd])
        prof = cls(n, data[:, 0], data[:, 1], data[:, 2], data[:, 3], shoot_param=float("nan"))
        prof.shoot_param = prof.b
        return prof


def bryant_solve(n, shoot_param=-0.2, r_max=60.0, tol=1e-10, spacing=GRID_SPACING) -> BryantProfile:
    """Shoot the steady soliton ODE from the origin and normalise.

    ``r_max`` and ``spacing`` refer to the rescaled profile (R + |grad f|^2 = 1).
    Raises :class:`ShootingError` when the warped product degenerates or the
    normalisation constant is not positive.
    """
    if n < 3:
        raise SpecError("bryant_solve needs n >= 3")
    b = float(shoot_param)
    lam0 = -n * b  # value of R + f'^2 at the origin
    if not lam0 > 0:
        raise ShootingError(
            f"shoot_param={b} gives R(0) = {lam0:g} <= 0: no R > 0 steady soliton of this form",
            {"shoot_param": b, "R0": lam0},
        )
    sq0 = np.sqrt(lam0)
    r0u = SERIES_RADIUS / sq0
    du = spacing / sq0
    r_end = r_max / sq0 * (1 + 1e-6) + du
    w_ser, fp_ser = taylor_coefficients(n, b)
    y0 = [w_ser(r0u), w_ser.deriv()(r0u), fp_ser(r0u)]

    def w_zero(r, y):
        return y[0]

    def w1_zero(r, y):
        return y[1]

    w_zero.terminal = w1_zero.terminal = True
    grid = r0u + du * np.arange(int(np.ceil((r_end - r0u) / du)) + 1)
    sol = solve_ivp(
        _rhs(n), (r0u, grid[-1]), y0, method="DOP853", rtol=min(tol, 1e-13), atol=1e-15,
        t_eval=grid, events=(w_zero, w1_zero),
    )
    if sol.status == 1:
        which = "w -> 0" if sol.t_events[0].size else "w' -> 0"
        raise ShootingError(
            f"warped product degenerated ({which}) at r={sol.t[-1]:.4g} before r_max",
            {"shoot_param": b, "r_stop": float(sol.t[-1])},
        )
    if not sol.success:
        raise IntegrationError(sol.message)
    w, w1, fp = sol.y
    w2, _, _ = _derived(n, w, w1, fp)
    R = scalar_curvature(n, w, w1, w2)
    H = R + fp**2
    lam = float(np.median(H))
    drift = float(np.max(np.abs(H - lam0)))
    if not lam > 0:
        raise ShootingError("non-positive normalisation constant", {"H": lam})
    if drift > 10 * tol * max(1.0, lam0) + 1e-12:
        raise IntegrationError(f"first integral drift {drift:.3e} exceeds 10*tol")
    sq = np.sqrt(lam)
    diagnostics = {
        "w_prime_positive": bool(np.all(w1 > 0)),
        "fp_negative": bool(np.all(fp < 0)),
        "R_positive": bool(np.all(R > 0)),
        "R_decreasing": bool(np.all(np.diff(R) <= 1e-12)),
        "hamiltonian_unscaled": lam,
    }
    return BryantProfile(
        n=n, r=sq * grid, w=sq * w, wp=w1.copy(), fp=fp / sq, shoot_param=b,
        hamiltonian_constant=lam, scale=lam, hamiltonian_drift=drift, diagnostics=diagnostics,
    )


def _series_slots(poly, slots):
    coef = np.zeros(slots)
    c = poly.coef[:slots]
    coef[: c.size] = c
    return coef


def kernel_params(profile: BryantProfile, c, limit):
    """Packed parameter vector for the compiled Bryant right-hand side."""
    from .kernels import HEADER, SERIES_SLOTS

    w, fp = profile._series
    w1 = w.deriv()
    A = Polynomial((w * w1).coef[1:]) - 1
    A = Polynomial(A.coef[2:])
    P = Polynomial([0, 1]) * w1 - w
    Q = Polynomial(P.coef[3:])
    U = Polynomial(w.coef[1:])
    R = 1 - fp * fp
    Rr = Polynomial(R.deriv().coef[1:])
    head = np.array([c, profile.r.size, profile.r0, profile.dr, limit, profile.n], dtype=float)
    assert head.size == HEADER
    series = [_series_slots(p, SERIES_SLOTS) for p in (A, Q, U, Rr, R)]
    grids = [profile.w, profile.wp, profile._w2, profile.fp, profile._f2]
    return np.concatenate([head, *series, *grids])


def _radial_field(profile, name):
    n = profile.n

    def value(p):
        return profile.radial(np.linalg.norm(p, axis=-1))[name]

    def grad(p):
        q = profile.radial(np.linalg.norm(p, axis=-1))
        return q[name + "_r"][..., None] * p

    def hess(p):
        q = profile.radial(np.linalg.norm(p, axis=-1))
        return q[name + "_r"][..., None, None] * np.eye(n) + q[name + "_q"][..., None, None] * np.einsum(
            "...i,...j->...ij", p, p
        )

    return ScalarField(value, grad, hess, name)


def bryant_model(profile: BryantProfile, spec=None):
    """Global Cartesian chart on R^n: g = h(r) I + k(r) x x^T with
    h = (w/r)^2 and k = (1 - h)/r^2.  First derivatives are closed form;
    second derivatives (curvature) by central differences."""
    from .models import ManifoldModel

    n = profile.n
    eye = np.eye(n)
    limit = profile.r_max - 2 * profile.dr

    def metric(p):
        q = profile.radial(np.linalg.norm(p, axis=-1))
        return q["h"][..., None, None] * eye + q["k"][..., None, None] * np.einsum("...i,...j->...ij", p, p)

    def domain(p):
        return np.linalg.norm(p, axis=-1) < limit

    def d1(p):
        q = profile.radial(np.linalg.norm(p, axis=-1))
        h, k, hr, kr = (q[key][..., None, None, None] for key in ("h", "k", "h_r", "k_r"))
        xx = np.einsum("...i,...j->...ij", p, p)
        g = q["h"][..., None, None] * eye + q["k"][..., None, None] * xx
        xm = p[..., :, None, None]
        dg = hr * xm * eye + kr * xm * xx[..., None, :, :]
        dg = dg + k * (eye[:, :, None] * p[..., None, None, :] + eye[:, None, :] * p[..., None, :, None])
        return g, dg

    def kernel(phi):
        from .kernels import BRYANT

        if phi.kind == "zero":
            return BRYANT, kernel_params(profile, 0.0, limit)
        if phi.kind == "c_times_R":
            return BRYANT, kernel_params(profile, phi.c, limit)
        return None

    fields = {"f": _radial_field(profile, "f"), "R": _radial_field(profile, "R")}
    return ManifoldModel(
        f"bryant{n}", n, metric, fields, soliton=True, d1=d1, domain=domain, spec=spec,
        meta={"profile": profile}, kernel=kernel,
    )
