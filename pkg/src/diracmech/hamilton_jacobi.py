"""Verification and flows of Dirac-Hamilton-Jacobi sections.

A section ``Upsilon(q) = X(q) (+) gamma(q)`` pairs a vector field with a
one-form.  It is a solution when it takes values in K, ``d gamma`` vanishes on
the distribution, and ``d(E o Upsilon)`` annihilates the distribution (for a
bracket-generating distribution: ``E o Upsilon`` is constant).  Integral curves
of ``X`` lifted through ``Upsilon`` then solve the Lagrange-Dirac equations,
which :func:`crosscheck_hj_vs_direct` confirms numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from . import autodiff as ad
from .geometry import (
    ConstraintDistribution,
    HolonomicLeaf,
    LagrangianField,
    PontryaginState,
    dot,
    hamiltonian_components,
    horizontal_basis,
    k_residual,
    velocity_hessian,
)
from .integrator import Trajectory, diagnostics, integrate, ode_flow

LINEAR_VELOCITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HJSection:
    """Candidate solution; ``X`` and ``gamma`` map component tuples to lists."""

    dim: int
    X: Callable
    gamma: Callable
    energy: float = None
    name: str = "Upsilon"

    def vector_field(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return ad.check_finite(ad.stack(self.X(ad.components(q)), q.shape[:-1]), "X")

    def covector(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return ad.check_finite(ad.stack(self.gamma(ad.components(q)), q.shape[:-1]), "gamma")

    def lift(self, q) -> PontryaginState:
        return PontryaginState(q, self.vector_field(q), self.covector(q))


def _samples(samples, n):
    s = np.asarray(samples, dtype=float)
    return s.reshape(-1, n)


def _gamma_of(g):
    return g.gamma if isinstance(g, HJSection) else g


def energy_field(section: HJSection, L: LagrangianField) -> Callable:
    """Scalar field ``q -> E(Upsilon(q)) = <gamma, X> - L(q, X)`` on components."""

    def f(qc):
        x = section.X(qc)
        return dot(section.gamma(qc), x) - L.func(qc, x)

    return f


def check_in_K(section, L, dist, samples) -> float:
    """Largest K-residual ``(omega X, gamma - dL/dv(q, X))`` over the samples."""
    q = _samples(samples, section.dim)
    a, b = k_residual(L, dist, section.lift(q))
    return float(max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0)))


def check_closedness_on_delta(gamma, dist, samples, basis=None) -> float:
    """Largest ``|d gamma(u, w)|`` over pairs of horizontal basis vectors."""
    q = _samples(samples, dist.dim)
    J = ad.jacobian_covector(_gamma_of(gamma), q)
    curl = J - np.swapaxes(J, -1, -2)
    H = horizontal_basis(dist, q) if basis is None else basis
    vals = np.einsum("...ia,...ij,...jb->...ab", H, curl, H)
    return float(np.abs(vals).max(initial=0.0))


def dhj_residual(section, L, dist, q, basis=None) -> np.ndarray:
    """Pairings of ``d(E o Upsilon)(q)`` with the horizontal basis vectors."""
    q = np.asarray(q, dtype=float)
    dE = ad.grad_scalar(energy_field(section, L), q)
    H = horizontal_basis(dist, q) if basis is None else basis
    return np.einsum("...i,...ia->...a", dE, H)


def energy_values(section, L, samples) -> np.ndarray:
    q = _samples(samples, section.dim)
    return ad.check_finite(ad.stack(energy_field(section, L)(ad.components(q)), q.shape[:-1]), "energy")


def dhj_energy_constancy(section, L, samples):
    """``(mean, max |E o Upsilon - mean|)`` over the samples."""
    e = energy_values(section, L, samples)
    mean = float(np.mean(e))
    return mean, float(np.abs(e - mean).max())


# ----------------------------------------------------------------- flows


def integrate_hj_flow(section, q0, T, h, L=None, dist=None, backend="jax") -> Trajectory:
    """RK4 on ``qdot = X(q)``, lifted pointwise to ``(q, X(q), gamma(q))``."""
    steps = int(round(T / h)) if T > 0 else 0
    qs = ode_flow(section.X, q0, h, steps, backend)
    t = h * np.arange(steps + 1)
    vs = section.vector_field(qs)
    ps = section.covector(qs)
    if L is not None:
        energy = np.sum(ps * vs, axis=-1) - L(qs, vs)
    else:
        energy = np.full(len(t), np.nan)
    if dist is not None and L is not None:
        _, lam, _, resid, sig, leak = diagnostics(L, dist, None, qs, vs)
        resid = np.abs(np.einsum("...ai,...i->...a", dist.matrix(qs), vs)).max(axis=-1, initial=0.0)
    else:
        lam, resid, sig, leak = np.zeros((len(t), 0)), np.zeros(len(t)), None, 0.0
    return Trajectory(t, qs, vs, ps, lam, energy, resid, sig, leak)


def trajectory_deviation(a: Trajectory, b: Trajectory) -> float:
    """Sup-norm distance between the ``(q, v, p)`` samples of two trajectories."""
    return float(
        max(np.abs(a.q - b.q).max(), np.abs(a.v - b.v).max(), np.abs(a.p - b.p).max())
    )


def crosscheck_hj_vs_direct(section, L, dist, q0, T, h, return_trajectories=False, **options):
    """Integrate the HJ flow and the Lagrange-Dirac DAE from ``Upsilon(q0)``; sup-norm gap."""
    q0 = np.asarray(q0, dtype=float)
    hj = integrate_hj_flow(section, q0, T, h, L, dist)
    if T == 0:
        direct = hj
    else:
        direct = integrate(L, dist, q0, section.vector_field(q0), T, h, **options)
    dev = trajectory_deviation(hj, direct)
    if return_trajectories:
        return dev, hj, direct
    return dev


# ----------------------------------------------------------- specializations


def holonomic_check(section, L, leaf: HolonomicLeaf, samples):
    """Energy spread of ``E o Upsilon o iota`` and closedness of ``iota^* gamma`` on the leaf."""
    s = _samples(samples, leaf.dim)
    q = leaf(s)
    e = energy_values(section, L, q)
    dev = float(np.abs(e - e.mean()).max())

    def pulled(sc):
        _, T = ad.derivative(leaf.embed, sc)
        g = section.gamma(leaf.embed(sc))
        return [dot(g, [T[i][a] for i in range(leaf.ambient_dim)]) for a in range(leaf.dim)]

    J = ad.jacobian_covector(pulled, s)
    closed = float(np.abs(J - np.swapaxes(J, -1, -2)).max(initial=0.0))
    return dev, closed


def nonholonomic_hj_check(gamma, H, dist, samples, basis=None) -> np.ndarray:
    """Horizontal pairings of ``d(H o gamma)``; ``H(qc, pc)`` works on components."""
    q = _samples(samples, dist.dim)
    g = _gamma_of(gamma)
    dHg = ad.grad_scalar(lambda qc: H(qc, g(qc)), q)
    B = horizontal_basis(dist, q) if basis is None else basis
    return np.einsum("...i,...ia->...a", dHg, B)


def hamiltonian(L: LagrangianField, iters: int = 3) -> Callable:
    """``H(q, p)`` of a non-degenerate Lagrangian through its inverse Legendre map."""
    return lambda qc, pc: hamiltonian_components(L, qc, pc, iters)


def section_from_covector(L: LagrangianField, gamma: Callable, iters: int = 3) -> HJSection:
    """``Upsilon = (FL)^{-1}(gamma) (+) gamma`` for a non-degenerate Lagrangian."""
    from .geometry import inverse_legendre_components

    def X(qc):
        return inverse_legendre_components(L, qc, gamma(qc), iters)

    return HJSection(L.dim, X, gamma)


def linear_velocity_diagnostic(L: LagrangianField, samples) -> bool:
    """True when the velocity Hessian vanishes at every ``(q, v)`` sample.

    Such Lagrangians are linear in velocity; their HJ equation only fixes a level
    set of the energy function and carries no information on the dynamics.
    """
    qs, vs = samples
    Hv = velocity_hessian(L, qs, vs)
    return bool(np.abs(Hv).max() < LINEAR_VELOCITY_TOL)


# ------------------------------------------------- bracket-generating test


def _frame(dist: ConstraintDistribution, q0) -> list:
    """Smooth local frame of the distribution with pivots fixed at ``q0``."""
    import scipy.linalg

    n, k = dist.dim, dist.rank
    if k == 0:
        return [lambda qc, j=j: [1.0 if i == j else 0.0 for i in range(n)] for j in range(n)]
    W = dist.matrix(np.asarray(q0, dtype=float))
    _, _, piv = scipy.linalg.qr(W, pivoting=True)
    pivots = sorted(int(i) for i in piv[:k])
    free = [i for i in range(n) if i not in pivots]

    def make(j):
        def X(qc):
            rows = dist.rows(qc)
            A = [[rows[a][p] for p in pivots] for a in range(k)]
            rhs = [-rows[a][j] for a in range(k)]
            sol = _solve_cramer(A, rhs)
            out = [0.0 * qc[0]] * n
            out[j] = 1.0 + 0.0 * qc[0]
            for a, p in enumerate(pivots):
                out[p] = sol[a]
            return out

        return X

    return [make(j) for j in free]


def _det(A):
    n = len(A)
    if n == 1:
        return A[0][0]
    acc = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1 :] for row in A[1:]]
        term = A[0][j] * _det(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def _solve_cramer(A, b):
    d = _det(A)
    out = []
    for j in range(len(b)):
        Aj = [row[:j] + [b[i]] + row[j + 1 :] for i, row in enumerate(A)]
        out.append(_det(Aj) / d)
    return out


def lie_bracket(X: Callable, Y: Callable) -> Callable:
    """``[X, Y] = DY.X - DX.Y`` as a new component field (nestable)."""

    def B(qc):
        x = X(qc)
        y = Y(qc)
        _, dY = ad.directional(Y, qc, x)
        _, dX = ad.directional(X, qc, y)
        return [a - b for a, b in zip(dY, dX)]

    return B


def bracket_rank(dist: ConstraintDistribution, q, depth: int = None) -> list:
    """Rank of the span of the frame and its iterated brackets, per depth."""
    q = np.asarray(q, dtype=float)
    n = dist.dim
    depth = n if depth is None else depth
    base = _frame(dist, q)
    level = list(base)
    fields_all = list(base)
    ranks = []

    def rank_of(fs):
        M = np.stack([ad.stack(f(ad.components(q)), ()) for f in fs])
        s = np.linalg.svd(M, compute_uv=False)
        return int(np.sum(s > 1e-9 * max(1.0, s[0])))

    ranks.append(rank_of(fields_all))
    for _ in range(1, depth):
        if ranks[-1] == n:
            break
        new = [lie_bracket(a, b) for a in base for b in level]
        fields_all += new
        level = new
        ranks.append(rank_of(fields_all))
    return ranks


def is_completely_nonholonomic(dist: ConstraintDistribution, samples, depth: int = None) -> bool:
    """Iterated brackets up to ``depth`` (default ``n``) span the tangent space at every sample."""
    return all(bracket_rank(dist, q, depth)[-1] == dist.dim for q in _samples(samples, dist.dim))


# ------------------------------------------------------------------ report


@dataclass
class HJReport:
    in_K_residual: float = float("nan")
    dgamma_residual: float = float("nan")
    dhj_residual: float = float("nan")
    energy_mean: float = float("nan")
    energy_dev: float = float("nan")
    crosscheck_dev: float = float("nan")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name):.17g}\n" for f in fields(self))

    def failures(self, tol: float, constancy_required: bool = True) -> list:
        names = ["in_K_residual", "dgamma_residual", "dhj_residual", "crosscheck_dev"]
        if constancy_required:
            names.append("energy_dev")
        return [n for n in names if not (getattr(self, n) < tol) and not np.isnan(getattr(self, n))]


def verify(section, L, dist, samples, crosscheck=None) -> HJReport:
    """Run the residual suite; ``crosscheck=(q0, T, h)`` adds the flow comparison."""
    q = _samples(samples, section.dim)
    mean, dev = dhj_energy_constancy(section, L, q)
    rep = HJReport(
        in_K_residual=check_in_K(section, L, dist, q),
        dgamma_residual=check_closedness_on_delta(section, dist, q),
        dhj_residual=float(np.abs(dhj_residual(section, L, dist, q)).max(initial=0.0)),
        energy_mean=mean,
        energy_dev=dev,
    )
    if crosscheck is not None:
        rep.crosscheck_dev = crosscheck_hj_vs_direct(section, L, dist, *crosscheck)
    return rep

