"""Reduction of weakly degenerate Chaplygin systems with abelian translation symmetry.

Coordinates split as ``q = (s, r)``: ``s`` are translation (group) directions
and ``r`` the base.  Solving the constraint forms for ``ds`` gives the
normalized connection ``omega^a = ds^a + A^a_b(r) dr^b``, whose kernel is the
distribution.  From it follow the horizontal lifts of velocities and momenta,
the reduced Lagrangian and Hamiltonian, the curvature and the two-form
``Xi = <J(hl^P), B(hl^D ., hl^D .)>``, and the almost-Hamiltonian reduced
flow ``i_X (Omega - Xi) = dH``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import BlowUp, NotChaplygin, SingularAlmostSymplectic, SingularReducedLegendre
from .geometry import (
    ConstraintDistribution,
    LagrangianField,
    dot,
    inverse_legendre_components,
    solve_small,
)
from .hamilton_jacobi import HJSection, _solve_cramer
from .integrator import BLOWUP_NORM, Trajectory, diagnostics

INVARIANCE_TOL = 1e-10
LEGENDRE_ITERS = 3


@dataclass(frozen=True, eq=False)
class ChaplyginBundle:
    L: LagrangianField
    dist: ConstraintDistribution
    group: tuple
    base: tuple

    @property
    def n(self):
        return self.L.dim

    @property
    def k(self):
        return len(self.group)

    @property
    def m(self):
        return len(self.base)

    # ------------------------------------------------------- coordinates

    def split(self, qc):
        return [qc[i] for i in self.group], [qc[i] for i in self.base]

    def join(self, sc, rc):
        out = [None] * self.n
        for a, i in enumerate(self.group):
            out[i] = sc[a]
        for b, i in enumerate(self.base):
            out[i] = rc[b]
        return out

    def base_point(self, rc):
        """Full configuration with zero group coordinates (invariance makes the choice irrelevant)."""
        return self.join([0.0 * rc[0]] * self.k if self.m else [0.0] * self.k, rc)

    # ---------------------------------------------------------- connection

    def connection(self, qc):
        """``A[a][b]`` with ``omega^a = ds^a + A^a_b dr^b`` after normalization."""
        if self.k == 0:
            return []
        rows = self.dist.rows(qc)
        G = [[rows[a][i] for i in self.group] for a in range(self.k)]
        out = [[None] * self.m for _ in range(self.k)]
        for b, i in enumerate(self.base):
            col = _solve_cramer(G, [rows[a][i] for a in range(self.k)])
            for a in range(self.k):
                out[a][b] = col[a]
        return out

    def connection_forms(self, qc):
        """Rows of the normalized constraint forms (group block equal to the identity)."""
        A = self.connection(qc)
        rows = []
        for a in range(self.k):
            row = [0.0 * qc[0]] * self.n
            for c, i in enumerate(self.group):
                row[i] = (1.0 if c == a else 0.0) + 0.0 * qc[0]
            for b, i in enumerate(self.base):
                row[i] = A[a][b]
            rows.append(row)
        return rows

    def lift_velocity(self, qc, vbar):
        """Horizontal lift of a base velocity: ``sdot = -A(r) vbar``."""
        A = self.connection(qc)
        sdot = [-dot(A[a], vbar) for a in range(self.k)]
        return self.join(sdot, list(vbar))

    # ---------------------------------------------------------- reduced L

    @functools.cached_property
    def reduced_lagrangian(self) -> LagrangianField:
        def Lbar(rc, vbc):
            q = self.base_point(rc)
            return self.L.func(q, self.lift_velocity(q, vbc))

        return LagrangianField(self.m, Lbar, name="Lbar")

    def reduced_legendre(self, rc, vbar):
        _, g = ad.derivative(lambda vv: self.reduced_lagrangian.func(rc, vv), vbar)
        return g

    def reduced_velocity(self, rc, pbar):
        """``(F Lbar)^{-1}(pbar)``."""
        return inverse_legendre_components(self.reduced_lagrangian, rc, pbar, LEGENDRE_ITERS)

    def reduced_hamiltonian_components(self, rc, pbar):
        vb = self.reduced_velocity(rc, pbar)
        return dot(pbar, vb) - self.reduced_lagrangian.func(rc, vb)

    def lift_momentum(self, qc, pbar):
        """``hl^P_q = FL_q o hl^D_q o (F Lbar)^{-1}``."""
        _, rc = self.split(qc)
        v = self.lift_velocity(qc, self.reduced_velocity(rc, pbar))
        _, g = ad.derivative(lambda vv: self.L.func(qc, vv), v)
        return g

    def lift_K(self, qc, pbar):
        """``hl^K_q(pbar) = (hl^D (F Lbar)^{-1}(pbar), hl^P(pbar))``."""
        _, rc = self.split(qc)
        v = self.lift_velocity(qc, self.reduced_velocity(rc, pbar))
        _, g = ad.derivative(lambda vv: self.L.func(qc, vv), v)
        return v, g

    # --------------------------------------------------- curvature and Xi

    def curvature_components(self, qc, Y, Z):
        """``B^a(Y, Z) = d omega_hat^a(Y, Z)`` for the normalized forms."""
        _, J = ad.derivative(self.connection_forms, qc)
        out = []
        for a in range(self.k):
            acc = 0.0
            for i in range(self.n):
                for j in range(self.n):
                    c = J[a][j][i] - J[a][i][j]
                    acc = acc + c * Y[i] * Z[j]
            out.append(acc)
        return out

    def momentum_map_components(self, pc):
        return [pc[i] for i in self.group]

    def xi_components(self, rc, pbar, Ybar, Zbar):
        q = self.base_point(rc)
        Jm = self.momentum_map_components(self.lift_momentum(q, pbar))
        B = self.curvature_components(q, self.lift_velocity(q, Ybar), self.lift_velocity(q, Zbar))
        return dot(Jm, B)

    def xi_matrix_components(self, rc, pbar):
        """``Xi[a][b] = Xi(e_a, e_b)`` on the base coordinate directions."""
        q = self.base_point(rc)
        Jm = self.momentum_map_components(self.lift_momentum(q, pbar))
        _, Jf = ad.derivative(self.connection_forms, q)
        m = self.m
        E = [[1.0 if i == j else 0.0 for j in range(m)] for i in range(m)]
        lifts = [self.lift_velocity(q, E[b]) for b in range(m)]
        out = [[0.0] * m for _ in range(m)]
        for a in range(m):
            for b in range(a + 1, m):
                acc = 0.0
                for g in range(self.k):
                    Bg = 0.0
                    for i in range(self.n):
                        for j in range(self.n):
                            Bg = Bg + (Jf[g][j][i] - Jf[g][i][j]) * lifts[a][i] * lifts[b][j]
                    acc = acc + Jm[g] * Bg
                out[a][b] = acc
                out[b][a] = -acc
        return out

    def reduced_vector_field(self, y):
        """``(rdot, pbar_dot)`` solving ``i_X (Omega - Xi) = dH`` at ``y = (r, pbar)``."""
        m = self.m
        rc, pc = list(y[:m]), list(y[m:])
        _, dH = ad.derivative(lambda z: self.reduced_hamiltonian_components(z[:m], z[m:]), tuple(y))
        Xi = self.xi_matrix_components(rc, pc)
        W = almost_symplectic_components(Xi)
        # i_X W = dH  <=>  W^T X = dH
        WT = [[W[j][i] for j in range(2 * m)] for i in range(2 * m)]
        return _solve_pivoted(WT, dH)


def almost_symplectic_components(Xi):
    """Matrix of ``Omega - Xi`` in ``(r, pbar)`` coordinates; ``Omega = dr ^ dpbar``."""
    m = len(Xi)
    W = [[0.0] * (2 * m) for _ in range(2 * m)]
    for a in range(m):
        W[a][m + a] = 1.0
        W[m + a][a] = -1.0
        for b in range(m):
            W[a][b] = -Xi[a][b]
    return W


def _solve_pivoted(A, b):
    """Solve ``A x = b`` for the block pattern ``[[-Xi^T, -I], [I, 0]]`` without pivoting issues.

    Rows are reordered so the identity blocks sit on the diagonal.
    """
    n2 = len(b)
    m = n2 // 2
    order = list(range(m, n2)) + list(range(m))
    A2 = [A[i] for i in order]
    b2 = [b[i] for i in order]
    return solve_small(A2, b2)


# ------------------------------------------------------------ construction


def build_bundle(L, dist, group, samples=None, seed=42) -> ChaplyginBundle:
    """Normalize the constraints for the given group coordinates and validate invariance."""
    n = L.dim
    group = tuple(int(i) for i in group)
    if dist.rank != len(group):
        raise NotChaplygin(f"{dist.rank} constraints but {len(group)} group directions")
    base = tuple(i for i in range(n) if i not in group)
    bundle = ChaplyginBundle(L, dist, group, base)
    if samples is None:
        rng = np.random.default_rng(seed)
        q = rng.uniform(0.2, 1.2, (16, n))
        v = rng.uniform(-1.0, 1.0, (16, n))
    else:
        q, v = (np.asarray(x, dtype=float) for x in samples)
    if bundle.k == 0:
        return bundle
    W = dist.matrix(q)
    G = W[..., :, list(group)]
    det = np.abs(np.linalg.det(G))
    if np.any(det < INVARIANCE_TOL):
        raise NotChaplygin("the group block of the constraint forms is singular")
    shift = np.zeros(n)
    shift[list(group)] = np.random.default_rng(seed + 1).uniform(-3.0, 3.0, len(group))
    dL = np.abs(L(q + shift, v) - L(q, v)) / (1.0 + np.abs(L(q, v)))
    A0 = _connection_numeric(bundle, q)
    A1 = _connection_numeric(bundle, q + shift)
    dA = np.abs(A1 - A0) / (1.0 + np.abs(A0))
    if dL.max() > INVARIANCE_TOL or dA.max() > INVARIANCE_TOL:
        raise NotChaplygin(
            f"Lagrangian or connection not invariant under group translations (residual {max(dL.max(), dA.max()):.3e})"
        )
    return bundle


def _connection_numeric(bundle, q):
    q = np.asarray(q, dtype=float)
    return ad.stack(bundle.connection(ad.components(q)), q.shape[:-1])


def _num(fn, *arrays, batch=None):
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    if batch is None:
        batch = np.broadcast_shapes(*(a.shape[:-1] for a in arrays))
    out = fn(*[ad.components(np.broadcast_to(a, batch + a.shape[-1:])) for a in arrays])
    return ad.check_finite(ad.stack(out, batch))


# ----------------------------------------------------------- numeric API


def connection(bundle, q) -> np.ndarray:
    return _num(bundle.connection, q)


def horizontal_lift_delta(bundle, q, vbar) -> np.ndarray:
    return _num(bundle.lift_velocity, q, vbar)


def reduced_lagrangian(bundle) -> LagrangianField:
    return bundle.reduced_lagrangian


def curvature(bundle, q, Y, Z) -> np.ndarray:
    return _num(bundle.curvature_components, q, Y, Z)


def _check_reduced_legendre(bundle, r, pbar):
    from .geometry import velocity_hessian

    r = np.asarray(r, dtype=float)
    vb = _num(bundle.reduced_velocity, r, pbar)
    Hm = velocity_hessian(bundle.reduced_lagrangian, r, vb)
    s = np.linalg.svd(Hm, compute_uv=False)
    if np.any(s[..., -1] < 1e-12 * np.maximum(1.0, s[..., 0])):
        raise SingularReducedLegendre("reduced Legendre transform is singular")
    return vb


def horizontal_lift_P(bundle, q, pbar) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    _check_reduced_legendre(bundle, q[..., list(bundle.base)], pbar)
    return _num(bundle.lift_momentum, q, pbar)


def horizontal_lift_K(bundle, q, pbar):
    q = np.asarray(q, dtype=float)
    _check_reduced_legendre(bundle, q[..., list(bundle.base)], pbar)
    v = _num(lambda qc, pc: bundle.lift_K(qc, pc)[0], q, pbar)
    p = _num(lambda qc, pc: bundle.lift_K(qc, pc)[1], q, pbar)
    return v, p


def momentum_map(bundle, q, p) -> np.ndarray:
    return np.asarray(p, dtype=float)[..., list(bundle.group)]


def xi_form(bundle, r, pbar, Ybar, Zbar) -> np.ndarray:
    return _num(bundle.xi_components, r, pbar, Ybar, Zbar)


def xi_matrix(bundle, r, pbar) -> np.ndarray:
    return _num(bundle.xi_matrix_components, r, pbar)


def reduced_hamiltonian(bundle, r, pbar) -> np.ndarray:
    return _num(bundle.reduced_hamiltonian_components, r, pbar)


def almost_symplectic_matrix(bundle, r, pbar) -> np.ndarray:
    Xi = xi_matrix(bundle, r, pbar)
    m = bundle.m
    W = np.zeros(Xi.shape[:-2] + (2 * m, 2 * m))
    W[..., :m, m:] = np.eye(m)
    W[..., m:, :m] = -np.eye(m)
    W[..., :m, :m] = -Xi
    return W


def reduced_vector_field(bundle, r, pbar) -> np.ndarray:
    y = np.concatenate(np.broadcast_arrays(np.asarray(r, float), np.asarray(pbar, float)), axis=-1)
    return _num(bundle.reduced_vector_field, y)


# ------------------------------------------------------- reduced dynamics


@dataclass
class ReducedTrajectory:
    t: np.ndarray
    r: np.ndarray
    pbar: np.ndarray
    vbar: np.ndarray
    s_shift: np.ndarray
    energy: np.ndarray
    sigma_min: np.ndarray


def _augmented_field(bundle):
    m, k = bundle.m, bundle.k

    def F(y):
        y = list(y)
        X = bundle.reduced_vector_field(y[: 2 * m])
        q = bundle.base_point(y[:m])
        A = bundle.connection(q)
        sdot = [-dot(A[a], X[:m]) for a in range(k)]
        return list(X) + sdot

    return F


@functools.lru_cache(maxsize=16)
def _field_for(bundle):
    return _augmented_field(bundle)


def integrate_reduced(bundle, r0, pbar0, T, h, backend="jax") -> ReducedTrajectory:
    """RK4 on the reduced almost-Hamiltonian system, carrying the group drift ``sdot = -A rdot``."""
    from .integrator import ode_flow

    m, k = bundle.m, bundle.k
    r0 = np.asarray(r0, dtype=float)
    pbar0 = np.asarray(pbar0, dtype=float)
    steps = int(round(T / h)) if T > 0 else 0
    _check_reduced_legendre(bundle, r0, pbar0)
    W0 = almost_symplectic_matrix(bundle, r0, pbar0)
    if np.linalg.svd(W0, compute_uv=False)[-1] < 1e-12:
        raise SingularAlmostSymplectic("almost symplectic matrix is singular at the initial point")
    y0 = np.concatenate([r0, pbar0, np.zeros(k)])
    ys = ode_flow(_field_for(bundle), y0, h, steps, backend)
    r, pb, ds = ys[:, :m], ys[:, m : 2 * m], ys[:, 2 * m :]
    vbar = _num(bundle.reduced_velocity, r, pb)
    energy = reduced_hamiltonian(bundle, r, pb)
    sig = np.linalg.svd(almost_symplectic_matrix(bundle, r, pb), compute_uv=False)[..., -1]
    if np.any(sig < 1e-12):
        raise SingularAlmostSymplectic(f"almost symplectic matrix singular at step {int(np.argmax(sig < 1e-12))}")
    return ReducedTrajectory(h * np.arange(steps + 1), r, pb, vbar, ds, energy, sig)


def reconstruct(bundle, red: ReducedTrajectory, s0) -> Trajectory:
    """Full trajectory ``q = (s0 + integral of -A rdot, r)`` with lifted velocities and momenta."""
    s0 = np.asarray(s0, dtype=float)
    N = len(red.t)
    q = np.empty((N, bundle.n))
    q[:, list(bundle.group)] = s0 + red.s_shift
    q[:, list(bundle.base)] = red.r
    v = horizontal_lift_delta(bundle, q, red.vbar)
    _, lam, energy, resid, sig, leak = diagnostics(bundle.L, bundle.dist, None, q, v)
    from .geometry import legendre

    p = legendre(bundle.L, q, v)
    norms = np.sqrt(np.sum(q**2, axis=-1) + np.sum(v**2, axis=-1))
    if np.any(norms > BLOWUP_NORM):
        i = int(np.argmax(norms > BLOWUP_NORM))
        raise BlowUp(i, float(norms[i]))
    return Trajectory(red.t, q, v, p, lam, energy, resid, sig, leak)


def reduced_initial_state(bundle, q0, v0):
    """``(r0, pbar0)`` matching a full state whose velocity lies in the distribution."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    r0 = q0[..., list(bundle.base)]
    vb = v0[..., list(bundle.base)]
    return r0, _num(bundle.reduced_legendre, r0, vb)


# ------------------------------------------------------- reduced HJ theory


def reduced_dhj_check(bundle, gamma_bar, samples, E=None):
    """``(max |H o gamma_bar - E|, max |(d gamma_bar + gamma_bar^* Xi)(e_a, e_b)|)``."""
    r = np.asarray(samples, dtype=float).reshape(-1, bundle.m)
    Hg = _num(lambda rc: bundle.reduced_hamiltonian_components(rc, gamma_bar(rc)), r)
    ref = float(np.mean(Hg)) if E is None else E
    edev = float(np.abs(Hg - ref).max())
    J = ad.jacobian_covector(gamma_bar, r)
    dg = J - np.swapaxes(J, -1, -2)
    Xi = _num(lambda rc: bundle.xi_matrix_components(rc, gamma_bar(rc)), r)
    form = float(np.abs(dg + Xi).max(initial=0.0))
    return edev, form


def lift_reduced_solution(bundle, gamma_bar, energy=None) -> HJSection:
    """``X = hl^D (F Lbar)^{-1} gamma_bar(r)``, ``gamma = hl^P gamma_bar(r)``."""

    def X(qc):
        _, rc = bundle.split(qc)
        return bundle.lift_velocity(qc, bundle.reduced_velocity(rc, gamma_bar(rc)))

    def gamma(qc):
        _, rc = bundle.split(qc)
        return bundle.lift_momentum(qc, gamma_bar(rc))

    return HJSection(bundle.n, X, gamma, energy, name="lifted")


# ------------------------------------------------- cotangent consistency


def _phi(bundle):
    k, m = bundle.k, bundle.m

    def phi(z):
        sc, rc, pc = list(z[:k]), list(z[k : k + m]), list(z[k + m :])
        q = bundle.join(sc, rc)
        return list(q) + list(bundle.lift_momentum(q, pc))

    return phi


def appendix_consistency(bundle, points, du, dw, vertical=None, tol=1e-12):
    """Compare the canonical form on horizontal tangents to P with the reduced form.

    ``points`` holds rows ``(s, r, pbar)``; ``du`` and ``dw`` hold ``(dr, dpbar)``.
    Tangent vectors are pushed forward by ``(s, r, pbar) -> (q, hl^P_q(pbar))``
    with ``ds = -A dr`` (plus an optional ``vertical`` group component for ``du``).
    Tangents whose configuration part leaves the distribution are filtered.
    """
    k, m, n = bundle.k, bundle.m, bundle.n
    z = np.atleast_2d(np.asarray(points, dtype=float))
    du = np.atleast_2d(np.asarray(du, dtype=float))
    dw = np.atleast_2d(np.asarray(dw, dtype=float))
    q = np.empty(z.shape[:-1] + (n,))
    q[..., list(bundle.group)] = z[..., :k]
    q[..., list(bundle.base)] = z[..., k : k + m]
    A = connection(bundle, q)

    def push(d, extra=None):
        ds = -np.einsum("...ab,...b->...a", A, d[..., :m])
        if extra is not None:
            ds = ds + extra
        dz = np.concatenate([ds, d], axis=-1)
        _, out = ad.directional(_phi(bundle), ad.components(z), ad.components(dz))
        return ad.stack(out, z.shape[:-1])

    U = push(du, None if vertical is None else np.asarray(vertical, dtype=float))
    Wt = push(dw)
    lhs = np.sum(U[..., :n] * Wt[..., n:], axis=-1) - np.sum(U[..., n:] * Wt[..., :n], axis=-1)
    Xi = xi_matrix(bundle, z[..., k : k + m], z[..., k + m :])
    ru, pu = du[..., :m], du[..., m:]
    rw, pw = dw[..., :m], dw[..., m:]
    rhs = (
        np.sum(ru * pw, axis=-1)
        - np.sum(pu * rw, axis=-1)
        - np.einsum("...a,...ab,...b->...", ru, Xi, rw)
    )
    Wm = bundle.dist.matrix(q)
    horizontal = np.abs(np.einsum("...ai,...i->...a", Wm, U[..., :n])).max(axis=-1, initial=0.0) < 1e-10 * (
        1.0 + np.abs(U[..., :n]).max(axis=-1)
    )
    dev = np.abs(lhs - rhs)
    checked = dev[horizontal]
    return {
        "max_deviation": float(checked.max(initial=0.0)),
        "checked": int(horizontal.sum()),
        "filtered": int((~horizontal).sum()),
    }


def lagrange_pairing_residual(bundle, q, alpha, vbar) -> np.ndarray:
    """``<hl^P(alpha), hl^D(vbar)> - <alpha, vbar>``."""
    P = horizontal_lift_P(bundle, q, alpha)
    V = horizontal_lift_delta(bundle, q, vbar)
    return np.sum(P * V, axis=-1) - np.sum(np.asarray(alpha) * np.asarray(vbar), axis=-1)


def lifted_energy_residual(bundle, q, pbar) -> np.ndarray:
    """``E(hl^K(pbar)) - Hbar(pbar)``."""
    q = np.asarray(q, dtype=float)
    v, p = horizontal_lift_K(bundle, q, pbar)
    E = np.sum(p * v, axis=-1) - bundle.L(q, v)
    return E - reduced_hamiltonian(bundle, q[..., list(bundle.base)], pbar)
