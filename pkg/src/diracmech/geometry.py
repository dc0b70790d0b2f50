"""Configuration-space geometry on a global chart of R^n.

Lagrangians, constraint distributions, the Legendre transform, generalized
energy, the constraint submanifold K of the Pontryagin bundle, kernel and
annihilator bases, and residual tests for membership in the induced Dirac
structures.  Every array argument may carry leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import RankError, ShapeError

RANK_TOL = 1e-10
K_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LagrangianField:
    """Scalar ``L(q, v)``; ``func`` receives tuples of components."""

    dim: int
    func: Callable
    name: str = "L"

    def __call__(self, q, v):
        q, v = _vec(q, self.dim), _vec(v, self.dim)
        return ad.check_finite(
            ad.stack(self.func(ad.components(q), ad.components(v)), _batch(q, v)), self.name
        )


@dataclass(frozen=True, eq=False)
class ConstraintDistribution:
    """Joint kernel of ``rank`` one-forms; ``forms(q)`` returns the k x n rows."""

    dim: int
    rank: int
    forms: Callable = field(default=None)
    name: str = "omega"

    def rows(self, qc) -> list:
        if self.rank == 0:
            return []
        return self.forms(qc)

    def matrix(self, q) -> np.ndarray:
        q = _vec(q, self.dim)
        if self.rank == 0:
            return np.zeros(q.shape[:-1] + (0, self.dim))
        out = ad.stack(self.rows(ad.components(q)), q.shape[:-1])
        return ad.check_finite(out, self.name)


def unconstrained(dim: int) -> ConstraintDistribution:
    return ConstraintDistribution(dim, 0)


@dataclass(frozen=True)
class PontryaginState:
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("q", "v", "p"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.q.shape == self.v.shape == self.p.shape):
            raise ShapeError(f"inconsistent shapes {self.q.shape}, {self.v.shape}, {self.p.shape}")


@dataclass(frozen=True, eq=False)
class HolonomicLeaf:
    """Embedding ``iota(s)`` of an integral submanifold of the distribution."""

    dim: int
    ambient_dim: int
    embed: Callable

    def __call__(self, s):
        s = _vec(s, self.dim)
        return ad.stack(self.embed(ad.components(s)), s.shape[:-1])

    def tangent(self, s) -> np.ndarray:
        """Columns are the images of the coordinate directions of ``s``."""
        return ad.jacobian(self.embed, _vec(s, self.dim))

    def tangency_residual(self, dist: ConstraintDistribution, s) -> np.ndarray:
        s = _vec(s, self.dim)
        return np.abs(dist.matrix(self(s)) @ self.tangent(s)).max(axis=(-1, -2))


def _vec(x, n=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or (n is not None and x.shape[-1] != n):
        raise ShapeError(f"expected trailing dimension {n}, got shape {x.shape}")
    return x


def _batch(*xs):
    return np.broadcast_shapes(*(np.shape(x)[:-1] for x in xs))


def _split(L, q, v):
    q, v = _vec(q, L.dim), _vec(v, L.dim)
    b = _batch(q, v)
    return np.broadcast_to(q, b + (L.dim,)), np.broadcast_to(v, b + (L.dim,)), b


def lagrangian_gradients(L: LagrangianField, q, v):
    """``(dL/dq, dL/dv)`` from a single dual evaluation over (q, v)."""
    q, v, b = _split(L, q, v)
    n = L.dim
    comps = ad.components(q) + ad.components(v)
    _, g = ad.derivative(lambda z: L.func(z[:n], z[n:]), comps)
    g = ad.check_finite(ad.stack(g, b), f"gradient of {L.name}")
    return g[..., :n], g[..., n:]


def legendre(L: LagrangianField, q, v) -> np.ndarray:
    """``p = dL/dv(q, v)``."""
    return lagrangian_gradients(L, q, v)[1]


def velocity_hessian(L: LagrangianField, q, v) -> np.ndarray:
    """``d^2 L / dv^2`` at ``(q, v)``."""
    q, v, b = _split(L, q, v)
    qc = ad.components(q)
    _, _, h = ad.value_grad_hess(lambda vc: L.func(qc, vc), ad.components(v))
    return ad.check_finite(ad.stack(h, b), f"velocity Hessian of {L.name}")


def dirac_differential(L: LagrangianField, q, v):
    """Local form ``(q, dL/dv, -dL/dq, v)`` of the Dirac differential of ``L``."""
    q, v, _ = _split(L, q, v)
    Lq, Lv = lagrangian_gradients(L, q, v)
    return q, Lv, -Lq, v


def generalized_energy(L: LagrangianField, s: PontryaginState):
    """``E(q, v, p) = p . v - L(q, v)``."""
    return np.sum(s.p * s.v, axis=-1) - L(s.q, s.v)


def k_residual(L: LagrangianField, dist: ConstraintDistribution, s: PontryaginState):
    """``(omega(q) v, p - dL/dv)``; both vanish exactly on K."""
    return np.einsum("...ai,...i->...a", dist.matrix(s.q), s.v), s.p - legendre(L, s.q, s.v)


def in_k(L, dist, s, tol=K_TOL) -> bool:
    a, b = k_residual(L, dist, s)
    return bool(max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0)) < tol)


def _bases(dist: ConstraintDistribution, q):
    W = dist.matrix(q)
    n, k = dist.dim, dist.rank
    if k == 0:
        eye = np.broadcast_to(np.eye(n), W.shape[:-2] + (n, n))
        return eye.copy(), np.zeros(W.shape[:-2] + (n, 0))
    sv = np.linalg.svd(W, compute_uv=False)
    if np.any(sv[..., -1] < RANK_TOL):
        raise RankError(f"constraint matrix has rank < {k} (smallest singular value {sv[..., -1].min():.3e})")
    Qm, _ = np.linalg.qr(np.swapaxes(W, -1, -2), mode="complete")
    return Qm[..., :, k:], Qm[..., :, :k]


def horizontal_basis(dist: ConstraintDistribution, q) -> np.ndarray:
    """Orthonormal n x (n-k) basis of ker omega(q) from a Householder QR of omega^T."""
    return _bases(dist, q)[0]


def annihilator_basis(dist: ConstraintDistribution, q) -> np.ndarray:
    """Orthonormal n x k basis of span{omega^a(q)}."""
    return _bases(dist, q)[1]


def project_horizontal(dist, q, x) -> np.ndarray:
    H = horizontal_basis(dist, q)
    return np.einsum("...ij,...kj,...k->...i", H, H, np.asarray(x, dtype=float))


# ----------------------------------------------------------- Dirac structures


def induced_dirac_membership(dist, q, p, tangent, covector):
    """Residuals of ``((qdot, pdot), (alpha_q, alpha_p))`` against the induced structure.

    Returns ``(omega qdot, alpha_p - qdot, horizontal part of alpha_q + pdot)``.
    ``p`` does not enter the local conditions but is accepted for symmetry.
    """
    qdot, pdot = (np.asarray(t, dtype=float) for t in tangent)
    aq, ap = (np.asarray(a, dtype=float) for a in covector)
    Wm = dist.matrix(q)
    return (
        np.einsum("...ai,...i->...a", Wm, qdot),
        ap - qdot,
        project_horizontal(dist, q, aq + pdot),
    )


def pontryagin_dirac_membership(dist, s: PontryaginState, tangent, covector):
    """Residuals ``(omega qdot, alpha_p - qdot, alpha_v, horizontal part of alpha_q + pdot)``."""
    qdot, vdot, pdot = (np.asarray(t, dtype=float) for t in tangent)
    aq, av, ap = (np.asarray(a, dtype=float) for a in covector)
    return (
        np.einsum("...ai,...i->...a", dist.matrix(s.q), qdot),
        ap - qdot,
        av,
        project_horizontal(dist, s.q, aq + pdot),
    )


def induced_dirac_element(dist, q, horizontal_coeffs, pdot, force_coeffs):
    """Build ``((qdot, pdot), (alpha_q, alpha_p))`` from the local representation.

    ``qdot = H c``, ``alpha_p = qdot`` and ``alpha_q = -pdot + A eta`` with ``H`` and
    ``A`` the horizontal and annihilator bases.
    """
    H, A = _bases(dist, q)
    qdot = np.einsum("...ij,...j->...i", H, horizontal_coeffs)
    eta = np.einsum("...ij,...j->...i", A, force_coeffs)
    pdot = np.asarray(pdot, dtype=float)
    return (qdot, pdot), (-pdot + eta, qdot)


def pontryagin_dirac_element(dist, s, horizontal_coeffs, vdot, pdot, force_coeffs):
    (qdot, pdot), (aq, ap) = induced_dirac_element(dist, s.q, horizontal_coeffs, pdot, force_coeffs)
    vdot = np.asarray(vdot, dtype=float)
    return (qdot, vdot, pdot), (aq, np.zeros_like(vdot), ap)


def dirac_pairing(e1, e2):
    """Symmetric pairing ``<alpha', X> + <alpha, X'>`` of two (tangent, covector) pairs."""
    (X1, a1), (X2, a2) = e1, e2
    return sum(np.sum(a2[i] * X1[i] + a1[i] * X2[i], axis=-1) for i in range(len(X1)))


# ------------------------------------------------------------ small solvers


def solve_small(A: Sequence[Sequence], b: Sequence) -> list:
    """Gaussian elimination without pivoting on nested lists of scalars or duals.

    Intended for small symmetric positive-definite systems (reduced metrics),
    where pivoting is unnecessary; it stays differentiable and traceable.
    """
    n = len(b)
    A = [list(row) for row in A]
    b = list(b)
    for c in range(n):
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            for j in range(c + 1, n):
                A[r][j] = A[r][j] - f * A[c][j]
            b[r] = b[r] - f * b[c]
    x = [None] * n
    for r in reversed(range(n)):
        acc = b[r]
        for j in range(r + 1, n):
            acc = acc - A[r][j] * x[j]
        x[r] = acc / A[r][r]
    return x


def dot(u: Sequence, w: Sequence):
    acc = 0.0
    for a, b in zip(u, w):
        acc = acc + a * b
    return acc


def matvec(A: Sequence[Sequence], x: Sequence) -> list:
    return [dot(row, x) for row in A]


def inverse_legendre_components(L: LagrangianField, qc, pc, iters: int = 3, v_start=None) -> list:
    """Solve ``dL/dv(q, v) = p`` for ``v`` by a fixed number of Newton steps.

    Requires a non-degenerate velocity Hessian.  Exact after one step for
    Lagrangians quadratic in velocity; the fixed iteration count keeps the
    result differentiable with dual numbers and traceable under jit.
    """
    n = len(qc)
    v = [0.0 * pc[i] for i in range(n)] if v_start is None else list(v_start)
    for _ in range(iters):
        _, g, h = ad.value_grad_hess(lambda vv: L.func(qc, vv), v)
        step = solve_small(h, [g[i] - pc[i] for i in range(n)])
        v = [v[i] - step[i] for i in range(n)]
    return v


def hamiltonian_components(L: LagrangianField, qc, pc, iters: int = 3):
    """``H(q, p) = <p, v> - L(q, v)`` with ``v`` the inverse Legendre image of ``p``."""
    v = inverse_legendre_components(L, qc, pc, iters)
    return dot(pc, v) - L.func(qc, v)
