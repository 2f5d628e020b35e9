"""Pointwise Hermitian linear algebra and curvature inequalities.

Index conventions used throughout the package:

* A metric (or any Hermitian form) is an ``(n, n)`` complex array ``G`` with
  ``G[i, j] = g_{i jbar}``.
* The inverse metric ``g^{i jbar}`` satisfies ``g^{i jbar} g_{k jbar} = delta_ik``,
  which as an array is ``inv(G).T`` (see :func:`inverse_metric`).
* A curvature tensor is an ``(n, n, n, n)`` array ``R[i, j, k, l] = R_{i jbar k lbar}``.
* A first jet is an ``(n, n, n)`` array ``A[k, i, j] = nabla_k g_{i jbar}``.

Curvature sign convention::

    R_{i jbar k lbar} = -d_i d_jbar g_{k lbar} + g^{p qbar} (d_i g_{k qbar}) (d_jbar g_{p lbar})

so that the complex hyperbolic ball has negative holomorphic sectional curvature.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.stats import norm, qmc

DEFAULT_RTOL = 1e-10


class NotPositiveDefinite(ValueError):
    pass


class TensorSymmetryError(ValueError):
    pass


class RoydenResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def as_hermitian(h, *, name: str = "form") -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        raise ValueError(f"{name} must be a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.abs(h).max()))
    if not np.allclose(h, h.conj().T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError(f"{name} is not conjugate-symmetric")
    return h


def cholesky(g) -> np.ndarray:
    """Lower factor ``L`` with ``G = L L^H``; raises if ``g`` is not positive definite."""
    g = as_hermitian(g, name="metric")
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("metric is not positive definite") from exc


def inverse_metric(g) -> np.ndarray:
    cholesky(g)
    return np.linalg.inv(np.asarray(g, dtype=complex)).T


def orthonormal_frame(g) -> np.ndarray:
    """Columns ``P[:, a]`` form a g-unitary frame: ``P.T @ G @ P.conj() == I``."""
    L = cholesky(g)
    return np.linalg.inv(L).T


def to_frame(R, P) -> np.ndarray:
    return np.einsum("ijkl,ia,jb,kc,ld->abcd", R, P, P.conj(), P, P.conj(), optimize=True)


def trace_of(h, g) -> float:
    """Trace ``g^{i jbar} h_{i jbar}`` of the form ``h`` with respect to the metric ``g``."""
    h = as_hermitian(h, name="h")
    g = np.asarray(g, dtype=complex)
    if h.shape != g.shape:
        raise ValueError(f"dimension mismatch: h is {h.shape}, g is {g.shape}")
    ginv = inverse_metric(g)
    return float(np.einsum("ij,ij->", ginv, h).real)


def eigen_sandwich_bound(det_bound: float, inverse_bound: float, n: int) -> float:
    """Upper bound on every eigenvalue given ``prod(lam) <= det_bound`` and ``1/lam_i <= inverse_bound``.

    Writing ``lam_j = prod(lam) / prod_{i != j} lam_i`` gives
    ``lam_j <= det_bound * inverse_bound**(n - 1)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if det_bound <= 0 or inverse_bound <= 0:
        raise ValueError("bounds must be positive")
    # every eigenvalue is >= 1/inverse_bound, so the product is >= inverse_bound**-n
    if det_bound * inverse_bound**n < 1.0 - 1e-12:
        raise ValueError(
            f"inconsistent premises: det_bound={det_bound} < inverse_bound**-n={inverse_bound ** -n}"
        )
    return float(det_bound * inverse_bound ** (n - 1))


def constant_hsc_curvature(g, c: float) -> np.ndarray:
    """Tensor ``-(c/2)(g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar})``, whose holomorphic sectional curvature is ``-c``."""
    g = as_hermitian(g, name="metric")
    cholesky(g)
    return -0.5 * c * (np.einsum("ij,kl->ijkl", g, g) + np.einsum("il,kj->ijkl", g, g))


def symmetry_defect(R) -> float:
    """Largest violation of the Kahler symmetries and the reality condition."""
    R = np.asarray(R, dtype=complex)
    defects = (
        R - R.transpose(2, 1, 0, 3),  # i <-> k
        R - R.transpose(0, 3, 2, 1),  # j <-> l
        R - R.transpose(1, 0, 3, 2).conj(),  # reality
    )
    return float(max(np.abs(d).max() for d in defects))


def check_curvature(R, *, rtol: float = 1e-10) -> np.ndarray:
    R = np.asarray(R, dtype=complex)
    if R.ndim != 4 or len(set(R.shape)) != 1:
        raise TensorSymmetryError(f"curvature tensor must have shape (n, n, n, n), got {R.shape}")
    scale = max(1.0, float(np.abs(R).max()))
    defect = symmetry_defect(R)
    if defect > rtol * scale:
        raise TensorSymmetryError(f"curvature tensor violates Kahler symmetries (defect {defect:.3e})")
    return R


def symmetrize_curvature(R) -> np.ndarray:
    """Average over the symmetry group, imposing the Kahler symmetries exactly."""
    R = np.asarray(R, dtype=complex)
    R = 0.5 * (R + R.transpose(2, 1, 0, 3))
    R = 0.5 * (R + R.transpose(0, 3, 2, 1))
    return 0.5 * (R + R.transpose(1, 0, 3, 2).conj())


def _quartic(R, eta) -> np.ndarray:
    # unoptimised einsum: the summation order per direction does not depend on the batch size
    return np.einsum("ijkl,...i,...j,...k,...l->...", R, eta, eta.conj(), eta, eta.conj()).real


def hsc_eval(R, g, eta) -> float:
    """Holomorphic sectional curvature ``R(eta, etabar, eta, etabar) / |eta|_g^4``."""
    eta = np.asarray(eta, dtype=complex)
    if not np.any(eta):
        raise ValueError("holomorphic sectional curvature is undefined for the zero vector")
    g = np.asarray(g, dtype=complex)
    norm2 = float(np.einsum("ij,i,j->", g, eta, eta.conj()).real)
    return float(_quartic(np.asarray(R, dtype=complex), eta)) / norm2**2


def _sphere_points(dim: int, budget: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d=2 * dim, scramble=True, seed=seed)
    # Sobol warns on non powers of two; the prefix of the sequence is what we want
    m = int(np.ceil(np.log2(max(budget, 1))))
    u = sampler.random_base2(m)[:budget]
    x = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    xi = x[:, :dim] + 1j * x[:, dim:]
    return xi / np.linalg.norm(xi, axis=1, keepdims=True)


def hsc_sup_estimate(R, g, budget: int = 64, *, seed: int = 0, iterations: int = 60) -> float:
    """Lower estimate of ``sup H`` over unit directions.

    Quasi-random directions are refined independently by projected gradient
    ascent on the unit sphere of an orthonormal frame. Each direction's result
    depends only on its own starting point, so the estimate never decreases
    as ``budget`` grows.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    R = np.asarray(R, dtype=complex)
    P = orthonormal_frame(g)
    Rf = to_frame(R, P)
    n = Rf.shape[0]
    if n == 1:
        return float(Rf[0, 0, 0, 0].real)
    xi = _sphere_points(n, budget, seed)
    val = _quartic(Rf, xi)
    step = np.full(budget, 0.5 / max(float(np.abs(Rf).max()), 1e-300))
    for _ in range(iterations):
        grad = 2.0 * np.einsum("abcd,...a,...c,...d->...b", Rf, xi, xi, xi.conj())
        trial = xi + step[:, None] * grad
        size = np.linalg.norm(trial, axis=1, keepdims=True)
        ok = size[:, 0] > 0
        trial = np.where(ok[:, None], trial / np.where(size > 0, size, 1.0), xi)
        tval = _quartic(Rf, trial)
        better = ok & (tval > val)
        xi = np.where(better[:, None], trial, xi)
        val = np.where(better, tval, val)
        step = np.where(better, step * 1.5, step * 0.5)
    return float(val.max())


def royden_check(R_hat, g, g_hat, kappa: float, *, rtol: float = DEFAULT_RTOL) -> RoydenResult:
    """Compare ``g^{k lbar} g^{i jbar} Rhat_{k lbar i jbar}`` with ``-(n+1)/(2n) kappa S^2``.

    ``S = tr_g g_hat``. The caller certifies that ``R_hat`` has holomorphic
    sectional curvature at most ``-kappa`` with respect to ``g_hat``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    ginv = inverse_metric(g)
    n = ginv.shape[0]
    S = trace_of(g_hat, g)
    lhs = float(np.einsum("kl,ij,klij->", ginv, ginv, np.asarray(R_hat, dtype=complex)).real)
    rhs = -(n + 1) / (2 * n) * kappa * S**2
    return RoydenResult(lhs, rhs, lhs <= rhs + rtol * (1.0 + abs(rhs)))


def check_first_jet(A, n: int, *, rtol: float = 1e-10) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.shape != (n, n, n):
        raise ValueError(f"first jet must have shape {(n, n, n)}, got {A.shape}")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.transpose(1, 0, 2)).max() > rtol * scale:
        raise ValueError("first jet is not symmetric in its holomorphic indices")
    return A


def yau_identity_terms(g, g_hat, A, *, check: bool = True) -> tuple[float, float]:
    """The two sides of the gradient estimate behind the Schwarz lemma.

    Returns ``(|dS|_g^2 / S^2, g^{k lbar} g_{m nbar} ghat_{i jbar} D_k g^{i nbar} D_lbar g^{m jbar} / S)``
    with ``S = tr_g g_hat`` and ``D_k g^{i nbar} = -g^{i bbar} g^{a nbar} A[k, a, b]``.
    The first never exceeds the second.

    ``check=False`` skips the symmetry test on ``A``; the inequality itself
    does not use it.
    """
    G = as_hermitian(g, name="g")
    Gh = as_hermitian(g_hat, name="g_hat")
    ginv = inverse_metric(G)
    cholesky(Gh)
    n = G.shape[0]
    A = check_first_jet(A, n) if check else np.asarray(A, dtype=complex)
    S = float(np.einsum("ij,ij->", ginv, Gh).real)
    # D[k] = -ginv @ A[k].T @ ginv
    D = -(ginv @ A.transpose(0, 2, 1) @ ginv)
    dS = np.einsum("ij,kij->k", Gh, D)
    grad2 = float(np.einsum("kl,k,l->", ginv, dS, dS.conj()).real)
    # contract ghat with D[k] on one side and g with conj(D[l]) on the other
    M = np.einsum("kim,lim->kl", D @ G.T, Gh @ D.conj())
    second = float(np.einsum("kl,kl->", ginv, M).real)
    return grad2 / S**2, second / S


def curvature_norm(R, g) -> float:
    """Fully contracted norm ``|R|_g``: the Frobenius norm of ``R`` in a g-unitary frame."""
    Rf = to_frame(np.asarray(R, dtype=complex), orthonormal_frame(g))
    return float(np.sqrt(np.sum(np.abs(Rf) ** 2)))
