"""Pointwise differential geometry in a single coordinate chart.

Everything here is vectorised over leading axes: a batch of points has shape
``(..., n)`` and tensors carry their index axes last.  Index conventions:

* ``dg[..., m, i, j]``      = d_m g_ij
* ``d2g[..., l, m, i, j]``  = d_l d_m g_ij
* ``gam[..., k, i, j]``     = Gamma^k_ij
* ``riem[..., i, j, k, l]`` = <R(d_i, d_j) d_k, d_l>  with
  R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y], so that <R(X,Y)Y,X> is the
  (unnormalised) sectional curvature and Rc(Y, Z) = tr(X -> R(X, Y) Z).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError, GeometryError, UsageError

FD_MIN_STEP = 1e-4
TOL_CLOSED_FORM = 1e-8
TOL_FINITE_DIFF = 1e-5


class MetricJet(NamedTuple):
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray


def fd_step(p):
    """Central-difference step used for finite-difference jets at ``p``."""
    p = np.asarray(p, dtype=float)
    return np.maximum(FD_MIN_STEP, 1e-6 * (1.0 + np.linalg.norm(p, axis=-1)))


def _stencil(n, second):
    offsets = [np.zeros(n)]
    eye = np.eye(n)
    for m in range(n):
        offsets += [eye[m], -eye[m]]
    if second:
        for l in range(n):
            for m in range(l + 1, n):
                offsets += [eye[l] + eye[m], eye[l] - eye[m], -eye[l] + eye[m], -eye[l] - eye[m]]
    return np.array(offsets)


def fd_metric_jet(metric: Callable, p, second=True, step=None):
    """Metric jet by central differences of ``metric`` (a batch function)."""
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    h = fd_step(p) if step is None else np.broadcast_to(np.asarray(step, float), p.shape[:-1])
    offs = _stencil(n, second)
    pts = p[..., None, :] + h[..., None, None] * offs
    vals = metric(pts)  # (..., S, n, n)
    g = vals[..., 0, :, :]
    plus = vals[..., 1 : 2 * n + 1 : 2, :, :]
    minus = vals[..., 2 : 2 * n + 2 : 2, :, :]
    hh = h[..., None, None, None]
    dg = (plus - minus) / (2 * hh)
    if not second:
        return g, dg
    d2g = np.zeros(p.shape[:-1] + (n, n, n, n))
    diag = (plus - 2 * g[..., None, :, :] + minus) / hh**2
    for m in range(n):
        d2g[..., m, m, :, :] = diag[..., m, :, :]
    idx = 2 * n + 1
    h2 = (h**2)[..., None, None]
    for l in range(n):
        for m in range(l + 1, n):
            pp, pm, mp, mm = (vals[..., idx + q, :, :] for q in range(4))
            mixed = (pp - pm - mp + mm) / (4 * h2)
            d2g[..., l, m, :, :] = mixed
            d2g[..., m, l, :, :] = mixed
            idx += 4
    return MetricJet(g, dg, d2g)


def fd_gradient(fn: Callable, p, step=None):
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    h = fd_step(p) if step is None else np.broadcast_to(np.asarray(step, float), p.shape[:-1])
    offs = _stencil(n, False)
    vals = fn(p[..., None, :] + h[..., None, None] * offs)
    return (vals[..., 1::2] - vals[..., 2::2]) / (2 * h[..., None])


def fd_hessian(fn: Callable, p, step=None):
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    h = fd_step(p) if step is None else np.broadcast_to(np.asarray(step, float), p.shape[:-1])
    offs = _stencil(n, True)
    vals = fn(p[..., None, :] + h[..., None, None] * offs)
    c = vals[..., 0]
    hess = np.zeros(p.shape[:-1] + (n, n))
    for m in range(n):
        hess[..., m, m] = (vals[..., 1 + 2 * m] - 2 * c + vals[..., 2 + 2 * m]) / h**2
    idx = 2 * n + 1
    for l in range(n):
        for m in range(l + 1, n):
            pp, pm, mp, mm = (vals[..., idx + q] for q in range(4))
            hess[..., l, m] = hess[..., m, l] = (pp - pm - mp + mm) / (4 * h**2)
            idx += 4
    return hess


@dataclass(frozen=True)
class ScalarField:
    """A function on the chart with coordinate gradient and Hessian.

    ``grad`` and ``hess`` are *partial* derivatives; covariant versions are
    formed in :func:`curvature_pack`.  Missing derivatives fall back to
    central differences.
    """

    value: Callable
    grad_fn: Optional[Callable] = None
    hess_fn: Optional[Callable] = None
    label: str = ""

    def __call__(self, p):
        return self.value(np.asarray(p, dtype=float))

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        if self.grad_fn is not None:
            return self.grad_fn(p)
        return fd_gradient(self.value, p)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        if self.hess_fn is not None:
            return self.hess_fn(p)
        return fd_hessian(self.value, p)

    def scaled(self, c, label=None):
        c = float(c)
        return ScalarField(
            lambda p: c * self.value(p),
            lambda p: c * self.grad(p),
            lambda p: c * self.hess(p),
            label or f"{c}*{self.label}",
        )

    @staticmethod
    def constant(c0, n, label="const"):
        c0 = float(c0)
        return ScalarField(
            lambda p: np.full(np.shape(p)[:-1], c0),
            lambda p: np.zeros(np.shape(p)),
            lambda p: np.zeros(np.shape(p) + (n,)),
            label,
        )


def inverse_metric(g):
    try:
        return np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("singular metric") from exc


def check_positive_definite(g):
    eig = np.linalg.eigvalsh(g)
    if not np.all(np.isfinite(eig)) or np.min(eig) <= 0:
        raise GeometryError(f"metric not positive definite (min eigenvalue {np.min(eig):.3e})")


def inner(g, u, v):
    return np.einsum("...ij,...i,...j->...", g, u, v)


def christoffel(g, dg, ginv=None):
    if ginv is None:
        ginv = inverse_metric(g)
    first = 0.5 * (
        np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    )  # Gamma_{l i j}
    return np.einsum("...kl,...lij->...kij", ginv, first)


def christoffel_jet(jet: MetricJet):
    g, dg, d2g = jet
    ginv = inverse_metric(g)
    first = 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    gam = np.einsum("...kl,...lij->...kij", ginv, first)
    dfirst = 0.5 * (
        np.einsum("...mijl->...mlij", d2g) + np.einsum("...mjil->...mlij", d2g) - d2g
    )
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
    dgam = np.einsum("...mkl,...lij->...mkij", dginv, first) + np.einsum(
        "...kl,...mlij->...mkij", ginv, dfirst
    )
    return ginv, gam, dgam


def riemann(jet: MetricJet):
    """Return (ginv, gam, riem_lowered, ricci) from a metric jet."""
    ginv, gam, dgam = christoffel_jet(jet)
    up = (
        np.einsum("...iljk->...ijkl", dgam)
        - np.einsum("...jlik->...ijkl", dgam)
        + np.einsum("...pjk,...lip->...ijkl", gam, gam)
        - np.einsum("...pik,...ljp->...ijkl", gam, gam)
    )
    riem = np.einsum("...ijkm,...ml->...ijkl", up, jet.g)
    ric = np.einsum("...ijki->...jk", up)
    return ginv, gam, riem, ric


def covariant_hessian(field: ScalarField, p, gam):
    return field.hess(p) - np.einsum("...kij,...k->...ij", gam, field.grad(p))


@dataclass
class CurvaturePack:
    metric: np.ndarray
    metric_inv: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    grad_f: np.ndarray
    hess_f: np.ndarray
    ricci_f: np.ndarray
    grad_R: np.ndarray
    hess_R: np.ndarray
    ricci_norm2: np.ndarray
    grad_phi: Optional[np.ndarray] = None
    hess_phi: Optional[np.ndarray] = None
    lap_phi: Optional[np.ndarray] = None
    f_lap_phi: Optional[np.ndarray] = None

    def norm2_vec(self, v):
        return inner(self.metric, v, v)

    def norm2_form(self, a):
        """|a|^2 for a symmetric 2-tensor with lower indices."""
        gi = self.metric_inv
        return np.einsum("...ia,...jb,...ij,...ab->...", gi, gi, a, a)


def curvature_pack(model, p, phi: Optional[ScalarField] = None) -> CurvaturePack:
    """All curvature quantities of ``model`` at ``p`` (batch allowed).

    ``phi`` is the potential of the variational problem; its fields are left
    as ``None`` when it is not given.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError("non-finite coordinates")
    if not np.all(model.in_domain(p)):
        raise DomainError(f"point outside chart domain of {model.name}")
    jet = model.metric_jet(p)
    check_positive_definite(jet.g)
    ginv, gam, riem, ric = riemann(jet)
    scalar = np.einsum("...ij,...ij->...", ginv, ric)
    f = model.fields["f"]
    R = model.fields["R"]
    grad_f = np.einsum("...ij,...j->...i", ginv, f.grad(p))
    hess_f = covariant_hessian(f, p, gam)
    grad_R = np.einsum("...ij,...j->...i", ginv, R.grad(p))
    hess_R = covariant_hessian(R, p, gam)
    pack = CurvaturePack(
        metric=jet.g,
        metric_inv=ginv,
        christoffel=gam,
        riemann=riem,
        ricci=ric,
        scalar=scalar,
        grad_f=grad_f,
        hess_f=hess_f,
        ricci_f=ric + hess_f,
        grad_R=grad_R,
        hess_R=hess_R,
        ricci_norm2=np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, ric, ric),
    )
    if phi is not None:
        pack.grad_phi = np.einsum("...ij,...j->...i", ginv, phi.grad(p))
        pack.hess_phi = covariant_hessian(phi, p, gam)
        pack.lap_phi = np.einsum("...ij,...ij->...", ginv, pack.hess_phi)
        pack.f_lap_phi = pack.lap_phi - inner(jet.g, grad_f, pack.grad_phi)
    return pack


def riemann_symmetry_residual(pack: CurvaturePack):
    """Max violation of the algebraic symmetries of the Riemann tensor."""
    rm = pack.riemann
    a = np.abs(rm + np.swapaxes(rm, -4, -3))
    b = np.abs(rm + np.swapaxes(rm, -2, -1))
    c = np.abs(rm - np.einsum("...ijkl->...klij", rm))
    return float(max(a.max(), b.max(), c.max()))


# --- paths -----------------------------------------------------------------


def path_derivative(y, ds):
    """d/ds of uniformly sampled data along axis 0, fourth order."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if m < 5:
        return np.gradient(y, ds, axis=0, edge_order=2 if m >= 3 else 1)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * ds)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * ds)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * ds)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * ds)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * ds)
    return d


def _hermite(p0, p1, v0, v1, h, t):
    t2, t3 = t * t, t * t * t
    pos = (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * h * v0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * v1
    vel = ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * h * v0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * h * v1) / h
    return pos, vel


def parallel_transport(model, samples, s_bar, v0, velocities=None):
    """Parallel transport of the vectors ``v0`` along a sampled path.

    Classical RK4 on dV/ds = -Gamma(S, V) with step equal to the sample
    spacing; the path between samples is the cubic Hermite interpolant of
    positions and velocities.  No re-orthonormalisation is applied.

    Returns an array of shape ``(K+1, m, n)``.
    """
    samples = np.asarray(samples, dtype=float)
    K = samples.shape[0] - 1
    ds = s_bar / K
    if velocities is None:
        velocities = path_derivative(samples, ds)
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    mid_p, mid_v = _hermite(samples[:-1], samples[1:], velocities[:-1], velocities[1:], ds, 0.5)
    gam_s = model.christoffel(samples)
    gam_m = model.christoffel(mid_p)
    # A[k]^i_j = Gamma^i_{kj} S^k: dV/ds = -A V
    A_s = np.einsum("...ikj,...k->...ij", gam_s, velocities)
    A_m = np.einsum("...ikj,...k->...ij", gam_m, mid_v)
    out = np.empty((K + 1,) + v0.shape)
    V = v0.copy()
    out[0] = V
    for k in range(K):
        a0, am, a1 = A_s[k], A_m[k], A_s[k + 1]
        k1 = -V @ a0.T
        k2 = -(V + 0.5 * ds * k1) @ am.T
        k3 = -(V + 0.5 * ds * k2) @ am.T
        k4 = -(V + ds * k3) @ a1.T
        V = V + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(V)):
            from .errors import IntegrationError

            raise IntegrationError("parallel transport blew up")
        out[k + 1] = V
    return out


def orthonormal_frame(g):
    """Gram-Schmidt of the chart basis with respect to ``g`` (single point)."""
    n = g.shape[-1]
    basis = []
    for e in np.eye(n):
        v = e.copy()
        for b in basis:
            v = v - inner(g, v, b) * b
        basis.append(v / np.sqrt(inner(g, v, v)))
    return np.array(basis)


def gram_drift(model, samples, frames):
    """Max |<e_a, e_b> - <e_a, e_b>(0)| along the path."""
    g = model.metric(samples)
    gram = np.einsum("kij,kai,kbj->kab", g, frames, frames)
    return float(np.max(np.abs(gram - gram[0])))


# --- soliton identities ------------------------------------------------------


@dataclass
class IdentityReport:
    ricci_f: np.ndarray
    hamiltonian: np.ndarray
    laplacian: np.ndarray
    grad_R: np.ndarray
    scalar_consistency: np.ndarray
    R_nonpositive: np.ndarray
    grad_f_exceeds_one: np.ndarray

    @property
    def maxima(self):
        return {
            "ricci_f": float(np.max(self.ricci_f)),
            "hamiltonian": float(np.max(self.hamiltonian)),
            "laplacian": float(np.max(self.laplacian)),
            "grad_R": float(np.max(self.grad_R)),
            "scalar_consistency": float(np.max(self.scalar_consistency)),
        }

    @property
    def flags(self):
        return {
            "R_nonpositive": bool(np.any(self.R_nonpositive)),
            "grad_f_exceeds_one": bool(np.any(self.grad_f_exceeds_one)),
        }

    def max_residual(self):
        return max(self.maxima[k] for k in ("ricci_f", "hamiltonian", "laplacian", "grad_R"))


def check_soliton_identities(model, grid, require_soliton=True) -> IdentityReport:
    """Residuals of Rc_f = 0, R + |grad f|^2 = 1, -Lap_f R = 2|Rc|^2 and
    |grad R| = 2|Rc(grad f)| on ``grid``.

    The scalar curvature in the Hamiltonian residual is the trace of the
    jet-derived Ricci tensor, not the model's closed-form R.
    """
    if require_soliton and not model.soliton:
        raise UsageError(f"model {model.name} is not a steady soliton")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[0] == 0:
        raise UsageError("grid must be a nonempty (N, n) array")
    pk = curvature_pack(model, grid)
    g = pk.metric
    grad_f2 = inner(g, pk.grad_f, pk.grad_f)
    lap_R = np.einsum("...ij,...ij->...", pk.metric_inv, pk.hess_R)
    f_lap_R = lap_R - inner(g, pk.grad_f, pk.grad_R)
    ric_gf = np.einsum("...ij,...jk,...k->...i", pk.metric_inv, pk.ricci, pk.grad_f)
    R_model = model.fields["R"](grid)
    return IdentityReport(
        ricci_f=np.sqrt(pk.norm2_form(pk.ricci_f)),
        hamiltonian=np.abs(pk.scalar + grad_f2 - 1.0),
        laplacian=np.abs(-f_lap_R - 2 * pk.ricci_norm2),
        grad_R=np.abs(np.sqrt(inner(g, pk.grad_R, pk.grad_R)) - 2 * np.sqrt(inner(g, ric_gf, ric_gf))),
        scalar_consistency=np.abs(pk.scalar - R_model),
        R_nonpositive=pk.scalar <= 0,
        grad_f_exceeds_one=grad_f2 > 1.0 + 1e-9,
    )
