"""U(n)-invariant Kahler metrics on the ball from radial potentials.

A potential ``u(s)`` with ``s = |z|^2`` gives ``g_{i jbar} = u' delta_ij + u'' zbar_i z_j``
with tangential eigenvalue ``a = u'`` (multiplicity ``n - 1``) and radial
eigenvalue ``b = u' + s u''``. All determinant quantities are taken relative
to the Euclidean volume form; the constant factor cancels in every ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import hermitian as hl

FAMILIES = ("model_ball", "flat", "perturbed_model")


class NotKahlerError(ValueError):
    """The radial potential fails ``a > 0`` or ``b > 0`` somewhere."""

    def __init__(self, message: str, s: float | None = None):
        super().__init__(message)
        self.s = s


class EigenPair(NamedTuple):
    a: np.ndarray | float
    b: np.ndarray | float


class HypothesisConstants(NamedTuple):
    kappa: float
    B: float
    hsc_max: np.ndarray
    rm_norm: np.ndarray

    @property
    def valid(self) -> bool:
        return self.kappa > 0


def _bump_poly(power: int) -> list[np.polynomial.Polynomial]:
    p = np.polynomial.Polynomial([1.0, 0.0, -1.0]) ** power
    return [p.deriv(k) if k else p for k in range(5)]


@dataclass(frozen=True)
class RadialPotential:
    """Analytic radial potential with closed-form derivatives up to fourth order.

    ``perturbed_model`` is ``-c log(1 - s) + eps * w**4 * B((s - s_c) / w)`` with
    ``B(x) = (1 - x^2)**bump_power`` on ``[-1, 1]``. The ``w**4`` factor keeps the
    fourth derivative, and hence the curvature change, of order ``eps``.
    """

    n: int
    family: str = "model_ball"
    c: float = 1.0
    eps: float = 0.0
    s_c: float = 0.3
    w: float = 0.1
    bump_power: int = 8
    s_max: float = 0.9

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.family != "flat" and self.c <= 0:
            raise ValueError("model coefficient c must be positive")
        if not 0 < self.s_max < 1:
            raise ValueError("s_max must lie in (0, 1)")

    def derivs(self, s) -> tuple[np.ndarray, ...]:
        """``(u, u', u'', u''', u'''')`` at ``s``."""
        s = np.asarray(s, dtype=float)
        if self.family == "flat":
            zero = np.zeros_like(s)
            return s.copy(), np.ones_like(s), zero, zero.copy(), zero.copy()
        q = 1.0 - s
        c = self.c
        out = [-c * np.log(q), c / q, c / q**2, 2 * c / q**3, 6 * c / q**4]
        if self.family == "perturbed_model" and self.eps != 0.0:
            x = (s - self.s_c) / self.w
            inside = np.abs(x) < 1.0
            amp = self.eps * self.w**4
            for k, poly in enumerate(_bump_poly(self.bump_power)):
                out[k] = out[k] + np.where(inside, amp * poly(x) / self.w**k, 0.0)
        return tuple(out)


def model_ball(n: int, c: float, s_max: float = 0.9) -> RadialPotential:
    return RadialPotential(n=n, family="model_ball", c=c, s_max=s_max)


def flat(n: int, s_max: float = 0.9) -> RadialPotential:
    return RadialPotential(n=n, family="flat", s_max=s_max)


def _check_positive(s, a, b):
    bad = ~((np.asarray(a) > 0) & (np.asarray(b) > 0))
    if np.any(bad):
        s_arr = np.broadcast_to(np.asarray(s, dtype=float), np.shape(bad))
        first = float(s_arr[bad][0]) if np.ndim(bad) else float(s)
        raise NotKahlerError(f"not a Kahler metric at s={first!r}", first)


def eigen_pair(u, s) -> EigenPair:
    _, u1, u2, _, _ = u.derivs(s)
    a = u1
    b = u1 + np.asarray(s) * u2
    _check_positive(s, a, b)
    if np.ndim(a) == 0:
        return EigenPair(float(a), float(b))
    return EigenPair(a, b)


def log_det_profile(u, s):
    """``(F, F', (s F')')`` with ``F = (n-1) log a + log b``."""
    s = np.asarray(s, dtype=float)
    _, u1, u2, u3, u4 = u.derivs(s)
    a = u1
    b = u1 + s * u2
    _check_positive(s, a, b)
    n = u.n
    da, dda = u2, u3
    db, ddb = 2 * u2 + s * u3, 3 * u3 + s * u4
    F = (n - 1) * np.log(a) + np.log(b)
    dF = (n - 1) * da / a + db / b
    ddF = (n - 1) * (dda / a - (da / a) ** 2) + ddb / b - (db / b) ** 2
    return F, dF, dF + s * ddF


def ricci_eigen_pair(u, s) -> EigenPair:
    """Eigen-parts of the Ricci form ``-i d dbar log det g``: ``(-F', -(s F')')``."""
    _, dF, sdF = log_det_profile(u, s)
    if np.ndim(dF) == 0:
        return EigenPair(-float(dF), -float(sdF))
    return EigenPair(-dF, -sdF)


def metric_jets(z, u1, u2, u3, u4):
    """Metric and its coordinate derivatives at ``z`` for ``g = u' delta + u'' zbar z``.

    Returns ``(g, dg, dbg, ddg)`` with ``dg[i,k,l] = d_i g_{k lbar}``,
    ``dbg[j,p,l] = d_jbar g_{p lbar}`` and ``ddg[i,j,k,l] = d_i d_jbar g_{k lbar}``.
    """
    z = np.asarray(z, dtype=complex)
    zb = z.conj()
    d = np.eye(z.size)
    g = u1 * d + u2 * np.outer(zb, z)
    dg = u2 * (np.einsum("i,kl->ikl", zb, d) + np.einsum("k,il->ikl", zb, d)) + u3 * np.einsum(
        "i,k,l->ikl", zb, zb, z
    )
    dbg = u2 * (np.einsum("j,pl->jpl", z, d) + np.einsum("l,pj->jpl", z, d)) + u3 * np.einsum(
        "j,p,l->jpl", z, zb, z
    )
    ddg = (
        u2 * (np.einsum("ij,kl->ijkl", d, d) + np.einsum("jk,il->ijkl", d, d))
        + u3
        * (
            np.einsum("j,i,kl->ijkl", z, zb, d)
            + np.einsum("j,k,il->ijkl", z, zb, d)
            + np.einsum("ij,k,l->ijkl", d, zb, z)
            + np.einsum("i,jk,l->ijkl", zb, d, z)
        )
        + u4 * np.einsum("j,i,k,l->ijkl", z, zb, zb, z)
    )
    return g, dg, dbg, ddg


def curvature_from_jets(g, dg, dbg, ddg) -> np.ndarray:
    ginv_qp = np.linalg.inv(g)  # [q, p] = g^{p qbar}
    return -ddg + np.einsum("qp,ikq,jpl->ijkl", ginv_qp, dg, dbg)


def radial_point(n: int, s: float) -> np.ndarray:
    z = np.zeros(n, dtype=complex)
    z[0] = np.sqrt(s)
    return z


def curvature_tensor_at(u, s: float) -> np.ndarray:
    """Curvature tensor at ``p = (sqrt(s), 0, ..., 0)`` with symmetries imposed."""
    s = float(s)
    _, u1, u2, u3, u4 = (float(v) for v in u.derivs(s))
    _check_positive(s, u1, u1 + s * u2)
    jets = metric_jets(radial_point(u.n, s), u1, u2, u3, u4)
    return hl.symmetrize_curvature(curvature_from_jets(*jets))


def metric_at(u, s: float) -> np.ndarray:
    _, u1, u2, _, _ = (float(v) for v in u.derivs(float(s)))
    z = radial_point(u.n, s)
    return u1 * np.eye(u.n) + u2 * np.outer(z.conj(), z)


def hypothesis_constants(u, grid, *, budget: int = 64, seed: int = 0) -> HypothesisConstants:
    """Estimate ``kappa = -sup H`` and ``B = sup |Rm|`` of ``u`` over the sample points."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    hsc = np.empty(grid.size)
    rm = np.empty(grid.size)
    for i, s in enumerate(grid):
        R = curvature_tensor_at(u, s)
        g = metric_at(u, s)
        hsc[i] = hl.hsc_sup_estimate(R, g, budget, seed=seed)
        rm[i] = hl.curvature_norm(R, g)
    kappa = -float(hsc.max()) + 0.0
    return HypothesisConstants(kappa, float(rm.max()), hsc, rm)


def default_sample_grid(s_max: float, count: int = 181) -> np.ndarray:
    return np.linspace(0.0, s_max, count, endpoint=False)


def certify_positivity(u, s_max: float, nodes: int) -> None:
    """Scan ``a, b > 0`` on ``nodes + 1`` equispaced points of ``[0, s_max]``."""
    s = np.linspace(0.0, s_max, nodes + 1)
    eigen_pair(u, s)


def make_family(config) -> RadialPotential:
    """Build the initial potential from a run config and certify it on a 10x refined grid."""
    fam = config.family
    if fam == "perturbed_model":
        lo, hi = config.s_c - config.w, config.s_c + config.w
        if config.w <= 0 or lo < 0 or hi > config.s_buf:
            raise ValueError(
                f"bump support [{lo}, {hi}] must lie inside [0, s_buf={config.s_buf}]"
            )
    u = RadialPotential(
        n=config.n,
        family=fam,
        c=config.c,
        eps=config.eps if fam == "perturbed_model" else 0.0,
        s_c=config.s_c,
        w=config.w,
        bump_power=config.bump_power,
        s_max=config.s_max,
    )
    certify_positivity(u, config.s_max, 10 * config.N)
    return u


def metric_field(u, z) -> np.ndarray:
    """``g_{i jbar}(z) = u'(|z|^2) delta_ij + u''(|z|^2) zbar_i z_j`` at an arbitrary point."""
    z = np.asarray(z, dtype=complex)
    s = float(np.vdot(z, z).real)
    _, u1, u2, _, _ = (float(v) for v in u.derivs(s))
    return u1 * np.eye(z.size) + u2 * np.outer(z.conj(), z)


def _fd_jets(u, z, h):
    """Wirtinger derivatives of the metric field by central differences of step ``h``."""
    n = z.size
    basis = [np.eye(n)[m] * (1.0 if r == 0 else 1j) for r in (0, 1) for m in range(n)]  # x_0.., y_0..
    G = lambda w: metric_field(u, w)  # noqa: E731
    g0 = G(z)
    d = [(G(z + h * e) - G(z - h * e)) / (2 * h) for e in basis]
    dd = {}
    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            if b < a:
                dd[a, b] = dd[b, a]
            elif a == b:
                dd[a, b] = (G(z + h * ea) - 2 * g0 + G(z - h * ea)) / h**2
            else:
                dd[a, b] = (
                    G(z + h * ea + h * eb) - G(z + h * ea - h * eb) - G(z - h * ea + h * eb) + G(z - h * ea - h * eb)
                ) / (4 * h**2)
    dg = np.array([0.5 * (d[i] - 1j * d[n + i]) for i in range(n)])  # d_i g_{k lbar}
    dbg = np.array([0.5 * (d[j] + 1j * d[n + j]) for j in range(n)])  # d_jbar g_{p lbar}
    ddg = np.empty((n, n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            ddg[i, j] = 0.25 * (dd[i, j] + 1j * dd[i, n + j] - 1j * dd[n + i, j] + dd[n + i, n + j])
    return g0, dg, dbg, ddg


def fd_curvature_at(u, s: float, h: float = 1e-3) -> np.ndarray:
    """Curvature at ``(sqrt(s), 0, ..., 0)`` from finite differences of the metric field.

    Central differences at steps ``h`` and ``h/2`` are combined by Richardson
    extrapolation. Independent of the closed-form jets; used as an oracle.
    """
    z = radial_point(u.n, s)
    coarse = _fd_jets(u, z, h)
    fine = _fd_jets(u, z, h / 2)
    g = fine[0]
    dg, dbg, ddg = ((4 * f - c) / 3 for c, f in zip(coarse[1:], fine[1:]))
    return curvature_from_jets(g, dg, dbg, ddg)
