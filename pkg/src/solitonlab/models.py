"""Concrete manifolds: Euclidean test spaces, the cigar, cigar x R^k, Bryant.

The cigar is the textbook metric (dx^2 + dy^2)/(1 + x^2 + y^2) scaled by 4,
so that R + |grad f|^2 = 1:

    g = 4 (dx^2 + dy^2) / (1 + r^2),   f = -log(1 + r^2),   R = 1 / (1 + r^2),

and the distance from the tip is d(0, (r, 0)) = 2 asinh(r).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SpecError
from .geometry import MetricJet, ScalarField, christoffel, fd_metric_jet

KINDS = ("euclidean", "cigar", "cigar_product", "bryant")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    n: int = 2
    phi: tuple = ("const", 0.25)
    k: int = 1
    shoot_param: float = -0.2
    r_max: float = 60.0
    tol: float = 1e-10
    jets: str = "analytic"

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown model kind {self.kind!r}")
        if self.jets not in ("analytic", "fd"):
            raise SpecError(f"unknown jet provider {self.jets!r}")
        if self.kind == "euclidean":
            if not 2 <= self.n <= 6:
                raise SpecError(f"unsupported dimension {self.n}")
            if self.phi[0] == "const":
                if not self.phi[1] > 0:
                    raise SpecError("constant potential must be positive")
            elif self.phi[0] != "quadratic":
                raise SpecError(f"unknown potential {self.phi!r}")
        elif self.kind == "cigar_product":
            if not 1 <= self.k <= 4:
                raise SpecError(f"unsupported product dimension k={self.k}")
        elif self.kind == "bryant":
            if not 3 <= self.n <= 6:
                raise SpecError(f"bryant needs 3 <= n <= 6, got {self.n}")
        return self


class ManifoldModel:
    """One global chart with metric jets and named scalar fields.

    Every model carries the fields ``f`` (soliton potential, zero for
    non-solitons) and ``R`` (closed-form scalar curvature); extra named
    fields can serve as custom potentials.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        metric: Callable,
        fields: dict,
        soliton: bool,
        jet: Optional[Callable] = None,
        d1: Optional[Callable] = None,
        domain: Optional[Callable] = None,
        spec: Optional[ModelSpec] = None,
        meta: Optional[dict] = None,
        accel: Optional[Callable] = None,
        kernel: Optional[Callable] = None,
    ):
        self.name = name
        self.dim = dim
        self._metric = metric
        self._jet = jet
        self._d1 = d1
        self._domain = domain
        self.fields = dict(fields)
        self.soliton = soliton
        self.spec = spec
        self.meta = meta or {}
        self._accel = accel
        self._kernel = kernel

    def __repr__(self):
        return f"ManifoldModel({self.name!r}, n={self.dim})"

    @property
    def analytic(self):
        return self._jet is not None

    def in_domain(self, p):
        p = np.asarray(p, dtype=float)
        ok = np.all(np.isfinite(p), axis=-1)
        if self._domain is not None:
            ok = ok & self._domain(p)
        return ok

    def metric(self, p):
        return self._metric(np.asarray(p, dtype=float))

    def metric_d1(self, p):
        p = np.asarray(p, dtype=float)
        if self._d1 is not None:
            return self._d1(p)
        if self._jet is not None:
            jet = self._jet(p)
            return jet.g, jet.dg
        return fd_metric_jet(self._metric, p, second=False)

    def metric_jet(self, p) -> MetricJet:
        p = np.asarray(p, dtype=float)
        if self._jet is not None:
            return self._jet(p)
        return fd_metric_jet(self._metric, p)

    def christoffel(self, p):
        g, dg = self.metric_d1(p)
        return christoffel(g, dg)

    def acceleration(self, p, v, dphi):
        """-Gamma(v, v) + g^{-1} dphi: the right-hand side of the phi-geodesic
        equation, given the coordinate differential ``dphi`` of the potential."""
        if self._accel is not None:
            return self._accel(p, v, dphi)
        g, dg = self.metric_d1(p)
        ginv = np.linalg.inv(g)
        gam = christoffel(g, dg, ginv)
        return -np.einsum("...kij,...i,...j->...k", gam, v, v) + np.einsum("...ij,...j->...i", ginv, dphi)

    def kernel(self, phi_spec):
        """(jitted rhs, params) for a compiled integrator, or None."""
        if self._kernel is None or phi_spec is None:
            return None
        return self._kernel(phi_spec)

    def require_domain(self, p):
        if not np.all(self.in_domain(p)):
            raise DomainError(f"point outside chart domain of {self.name}")


# --- euclidean ---------------------------------------------------------------


def _euclidean(spec: ModelSpec):
    n = spec.n
    eye = np.eye(n)

    def metric(p):
        return np.broadcast_to(eye, p.shape[:-1] + (n, n)).copy()

    def jet(p):
        z3 = np.zeros(p.shape[:-1] + (n, n, n))
        return MetricJet(metric(p), z3, np.zeros(p.shape[:-1] + (n, n, n, n)))

    zero = ScalarField.constant(0.0, n, "zero")
    if spec.phi[0] == "const":
        phi = ScalarField.constant(spec.phi[1], n, f"const({spec.phi[1]})")
    else:
        phi = ScalarField(
            lambda p: 0.5 * (1 + np.sum(p * p, axis=-1)),
            lambda p: p.copy(),
            lambda p: np.broadcast_to(eye, p.shape + (n,)).copy(),
            "quadratic",
        )
    fields = {"f": zero, "R": zero, "phi": phi}
    analytic = spec.jets != "fd"
    return ManifoldModel(
        f"euclidean{n}", n, metric, fields, soliton=False,
        jet=jet if analytic else None, spec=spec,
        accel=(lambda p, v, dphi: dphi.copy()) if analytic else None,
        kernel=_euclidean_kernel(spec) if analytic else None,
    )


def _euclidean_kernel(spec):
    from .kernels import EUCLIDEAN

    quad = 1.0 if spec.phi[0] == "quadratic" else 0.0
    c0 = 0.0 if quad else float(spec.phi[1])

    def pick(phi):
        if phi.kind == "zero":
            return EUCLIDEAN, np.array([0.0, 0.0])
        if phi.kind == "custom" and phi.label == "phi":
            return EUCLIDEAN, np.array([quad, c0])
        return None

    return pick


# --- cigar and products ------------------------------------------------------


def _cigar_parts():
    """Closed forms for the normalised cigar in Cartesian coordinates."""

    def conf(q):
        return 4.0 / (1.0 + q)

    def metric(x):
        q = np.sum(x * x, axis=-1)
        return conf(q)[..., None, None] * np.eye(2)

    def jet(x):
        q = np.sum(x * x, axis=-1)
        a = conf(q)
        with np.errstate(over="ignore"):  # far trial points: coefficients underflow to 0
            a1 = -4.0 / (1.0 + q) ** 2
            a2 = 8.0 / (1.0 + q) ** 3
        eye = np.eye(2)
        g = a[..., None, None] * eye
        dg = (2 * a1[..., None] * x)[..., :, None, None] * eye
        d2 = 4 * a2[..., None, None] * np.einsum("...l,...m->...lm", x, x) + 2 * a1[..., None, None] * eye
        d2g = d2[..., :, :, None, None] * eye
        return MetricJet(g, dg, d2g)

    def outer(x):
        return np.einsum("...i,...j->...ij", x, x)

    f = ScalarField(
        lambda x: -np.log1p(np.sum(x * x, axis=-1)),
        lambda x: -2 * x / (1 + np.sum(x * x, axis=-1))[..., None],
        lambda x: (
            -2 * np.eye(2) / (1 + np.sum(x * x, axis=-1))[..., None, None]
            + 4 * outer(x) / ((1 + np.sum(x * x, axis=-1)) ** 2)[..., None, None]
        ),
        "f",
    )
    R = ScalarField(
        lambda x: 1.0 / (1 + np.sum(x * x, axis=-1)),
        lambda x: -2 * x / np.square(1 + np.sum(x * x, axis=-1))[..., None],
        lambda x: (
            -2 * np.eye(2) / ((1 + np.sum(x * x, axis=-1)) ** 2)[..., None, None]
            + 8 * outer(x) / ((1 + np.sum(x * x, axis=-1)) ** 3)[..., None, None]
        ),
        "R",
    )
    return metric, jet, f, R


def _cigar_accel(x, v, dphi):
    # g = e^{2u} I with du = -x/(1+q): Gamma(v,v) = 2(du.v) v - |v|^2 du
    q1 = 1.0 + np.sum(x * x, axis=-1, keepdims=True)
    du = -x / q1
    return -2 * np.sum(du * v, axis=-1, keepdims=True) * v + np.sum(v * v, axis=-1, keepdims=True) * du + q1 * dphi / 4.0


def _cigar_kernel(phi):
    from .kernels import CIGAR

    if phi.kind == "zero":
        return CIGAR, np.array([0.0])
    if phi.kind == "c_times_R":
        return CIGAR, np.array([phi.c])
    return None


def _cigar(spec: ModelSpec):
    metric, jet, f, R = _cigar_parts()
    analytic = spec.jets != "fd"
    return ManifoldModel(
        "cigar", 2, metric, {"f": f, "R": R}, soliton=True,
        jet=jet if analytic else None, spec=spec, accel=_cigar_accel if analytic else None,
        kernel=_cigar_kernel if analytic else None,
    )


def _pullback(field: ScalarField, n: int, label: str):
    def grad(p):
        out = np.zeros(p.shape)
        out[..., :2] = field.grad(p[..., :2])
        return out

    def hess(p):
        out = np.zeros(p.shape + (n,))
        out[..., :2, :2] = field.hess(p[..., :2])
        return out

    return ScalarField(lambda p: field(p[..., :2]), grad, hess, label)


def _cigar_product(spec: ModelSpec):
    metric2, jet2, f2, R2 = _cigar_parts()
    n = 2 + spec.k

    def metric(p):
        g = np.zeros(p.shape[:-1] + (n, n))
        g[..., :2, :2] = metric2(p[..., :2])
        for a in range(2, n):
            g[..., a, a] = 1.0
        return g

    def jet(p):
        j2 = jet2(p[..., :2])
        g = metric(p)
        dg = np.zeros(p.shape[:-1] + (n, n, n))
        dg[..., :2, :2, :2] = j2.dg
        d2g = np.zeros(p.shape[:-1] + (n, n, n, n))
        d2g[..., :2, :2, :2, :2] = j2.d2g
        return MetricJet(g, dg, d2g)

    def accel(p, v, dphi):
        out = dphi.copy()
        out[..., :2] = _cigar_accel(p[..., :2], v[..., :2], dphi[..., :2])
        return out

    fields = {"f": _pullback(f2, n, "f"), "R": _pullback(R2, n, "R")}
    analytic = spec.jets != "fd"
    return ManifoldModel(
        f"cigar_x_R{spec.k}", n, metric, fields, soliton=True,
        jet=jet if analytic else None, spec=spec, accel=accel if analytic else None,
        kernel=_cigar_kernel if analytic else None,
    )


def build_model(spec: ModelSpec) -> ManifoldModel:
    spec.validate()
    if spec.kind == "euclidean":
        return _euclidean(spec)
    if spec.kind == "cigar":
        return _cigar(spec)
    if spec.kind == "cigar_product":
        return _cigar_product(spec)
    from .bryant import ShootingError, bryant_model, bryant_solve

    b = spec.shoot_param
    tried = []
    for _ in range(BRYANT_RETRIES + 1):
        try:
            profile = bryant_solve(spec.n, b, spec.r_max, spec.tol)
            break
        except ShootingError as exc:
            tried.append(b)
            # a non-negative parameter cannot be repaired; otherwise bisect toward the default
            if not b < 0 or "r_stop" not in exc.diagnostics:
                raise
            b = 0.5 * (b + ModelSpec.shoot_param) if b != ModelSpec.shoot_param else 0.5 * b
    else:
        raise ShootingError(f"bryant shooting failed for {tried}", {"tried": tried})
    profile.diagnostics["shoot_param_used"] = b
    return bryant_model(profile, spec=spec)


BRYANT_RETRIES = 6


def cigar_radius_at_distance(d):
    """Chart radius of the point at distance ``d`` from the cigar tip."""
    return np.sinh(np.asarray(d, dtype=float) / 2.0)


def cigar_distance_from_tip(r):
    return 2.0 * np.arcsinh(np.asarray(r, dtype=float))


def cigar_ricci_norm(r):
    """|Rc| = R / sqrt(2) on the normalised cigar."""
    return (1.0 / np.sqrt(2.0)) / (1.0 + np.asarray(r, dtype=float) ** 2)


def standard_grid(n_dim, count=400, half_width=5.0):
    """A ``count``-point grid in the first two coordinates, spread over the
    remaining ones, inside |coords| <= half_width."""
    side = int(round(np.sqrt(count)))
    ax = np.linspace(-half_width, half_width, side)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.zeros((side * side, n_dim))
    pts[:, 0] = X.ravel()
    pts[:, 1] = Y.ravel()
    if n_dim > 2:
        rng = np.random.default_rng(0)
        pts[:, 2:] = rng.uniform(-half_width, half_width, size=(side * side, n_dim - 2))
    return pts
