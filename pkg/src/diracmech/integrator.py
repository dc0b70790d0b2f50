"""Time integration of the Lagrange-Dirac equations as a semi-explicit DAE.

Each right-hand-side evaluation solves the saddle-point system

    [[M, -R^T], [R, 0]] [vdot; mu] = [b; -c]

with ``M = d2L/dv2``, ``b = dL/dq - (d2L/dv dq) v``, ``R`` the constraint rows
and ``c`` their drift ``(d/dt R) v``.  Steps are classical RK4 on ``(q, v)``
followed by an orthogonal projection of ``v`` onto ``ker R(q)``; momenta are
recomputed as ``dL/dv`` so every stored state lies on K.

When ``M`` is singular on the distribution but the offending directions ``Z``
are constant and carry no velocity coupling (``M Z = 0``, ``Z^T N = N Z = 0``),
the Lagrange-Dirac equations force the position-level relation
``Z^T dL/dq = 0``.  Such secondary constraints are differentiated twice and
appended to ``R``; this is what makes degenerate circuits such as LC networks
solvable.  Any other singular KKT matrix raises :class:`SingularKKT`.

Long runs are compiled with ``jax.jit`` (the dual-number code is traced
straight through); diagnostics are recomputed with plain numpy afterwards.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import BlowUp, ConfigError, InconsistentState, SingularKKT
from .geometry import ConstraintDistribution, LagrangianField, dot, matvec

KKT_TOL = 1e-12
BLOWUP_NORM = 1e12
CONSTRAINT_TOL = 1e-10


# ------------------------------------------------------------------ assembly


def _blocks(L, dist, Z, qc, vc):
    n = L.dim

    def inner(vv):
        val, g = ad.derivative(lambda z: L.func(z[:n], z[n:]), tuple(qc) + tuple(vv))
        return [val, g]

    (_, g), (_, dg) = ad.derivative(inner, tuple(vc))
    Lq, Lv = g[:n], g[n:]
    M = [[dg[n + j][i] for j in range(n)] for i in range(n)]
    N = [[dg[j][i] for j in range(n)] for i in range(n)]

    rows = dist.rows(qc)
    if dist.rank:
        _, drift = ad.directional(lambda qq: matvec(dist.rows(qq), vc), qc, vc)
    else:
        drift = []
    sec_val = []
    if Z is not None:
        for z in Z:

            def g_sec(qq, z=z):
                _, gq = ad.derivative(lambda q2: L.func(q2, vc), qq)
                return dot(z, gq)

            def g_rate(qq, g_sec=g_sec):
                _, gg = ad.derivative(g_sec, qq)
                return dot(gg, vc)

            val, grow = ad.derivative(g_sec, qc)
            _, gdrift = ad.directional(g_rate, qc, vc)
            rows = list(rows) + [grow]
            drift = list(drift) + [gdrift]
            sec_val.append(val)
    return dict(M=M, N=N, Lq=Lq, Lv=Lv, R=rows, c=drift, g=sec_val)


@dataclass
class DAEAssembly:
    """Numeric blocks of the saddle-point system at one (or a batch of) state(s)."""

    M: np.ndarray
    N: np.ndarray
    b: np.ndarray
    omega: np.ndarray
    c: np.ndarray
    rank: int
    secondary: np.ndarray = field(default=None)

    @property
    def kkt(self):
        return _kkt(self.M, self.omega, np)

    def sigma_min(self):
        return np.linalg.svd(self.kkt, compute_uv=False)[..., -1]

    def solve(self, v):
        """``(vdot, lambda, pdot)`` with ``lambda`` the primary multipliers."""
        vdot, mu = _kkt_solve(self.M, self.omega, self.b, self.c, np)
        pdot = self.M @ vdot[..., None]
        pdot = pdot[..., 0] + np.einsum("...ij,...j->...i", self.N, v)
        return vdot, mu[..., : self.rank], pdot


def _kkt(M, R, xp):
    m = R.shape[-2]
    top = xp.concatenate([M, -xp.swapaxes(R, -1, -2)], axis=-1)
    bot = xp.concatenate([R, xp.zeros(R.shape[:-1] + (m,))], axis=-1)
    return xp.concatenate([top, bot], axis=-2)


def _kkt_solve(M, R, b, c, xp):
    n = M.shape[-1]
    rhs = xp.concatenate([b, -c], axis=-1)
    sol = xp.linalg.solve(_kkt(M, R, xp), rhs[..., None])[..., 0]
    return sol[..., :n], sol[..., n:]


def _numeric(L, dist, Z, q, v, xp):
    n = L.dim
    batch = q.shape[:-1]
    blk = _blocks(L, dist, Z, ad.components(q), ad.components(v))

    def arr(tree, shape):
        if not tree:
            return xp.zeros(batch + shape)
        return xp.asarray(ad.stack(tree, batch))

    M = arr(blk["M"], (n, n))
    N = arr(blk["N"], (n, n))
    Lq = arr(blk["Lq"], (n,))
    Lv = arr(blk["Lv"], (n,))
    R = arr(blk["R"], (0, n))
    c = arr(blk["c"], (0,))
    g = arr(blk["g"], (0,))
    b = Lq - xp.einsum("...ij,...j->...i", N, v)
    return M, N, b, Lv, R, c, g


def assemble(L: LagrangianField, dist: ConstraintDistribution, q, v, secondary=None) -> DAEAssembly:
    """Assemble the DAE blocks at ``(q, v)``; raise if the KKT matrix is singular."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    M, N, b, _, R, c, _ = _numeric(L, dist, secondary, q, v, np)
    asm = DAEAssembly(M, N, b, R, c, dist.rank, None if secondary is None else np.asarray(secondary))
    sig = np.min(asm.sigma_min())
    if not np.isfinite(sig) or sig < KKT_TOL:
        raise SingularKKT(float(sig))
    return asm


def secondary_directions(L, dist, q, v, tol=1e-12):
    """Constant null directions of ``M`` on the distribution, or ``None``.

    Raises :class:`SingularKKT` when the reduced mass matrix is singular in a way
    that does not produce position-level secondary constraints.
    """
    from .geometry import horizontal_basis

    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    M, N, b, _, R, c, _ = _numeric(L, dist, None, q, v, np)
    sig = float(np.linalg.svd(_kkt(M, R, np), compute_uv=False)[-1])
    if sig >= KKT_TOL:
        return None
    H = horizontal_basis(dist, q)
    w, U = np.linalg.eigh(H.T @ M @ H)
    scale = max(1.0, float(np.abs(M).max()))
    null = U[:, np.abs(w) < 1e-10 * scale]
    Z = (H @ null).T
    if Z.shape[0] == 0:
        raise SingularKKT(sig, step=0)
    mixed = max(np.abs(M @ Z.T).max(), np.abs(Z @ N).max(), np.abs(N @ Z.T).max())
    if mixed > tol * scale:
        raise SingularKKT(
            sig,
            step=0,
            detail="velocity Hessian is singular on the distribution and the null directions couple to velocities",
        )
    return Z


# ------------------------------------------------------------------- stepping


def _rhs(L, dist, Z, q, v, xp):
    M, N, b, _, R, c, _ = _numeric(L, dist, Z, q, v, xp)
    vdot, _ = _kkt_solve(M, R, b, c, xp)
    return vdot


def _project(L, dist, Z, q, v, xp):
    if dist.rank == 0 and Z is None:
        return v
    _, _, _, _, R, _, _ = _numeric(L, dist, Z, q, v, xp)
    G = R @ xp.swapaxes(R, -1, -2)
    y = xp.linalg.solve(G, (R @ v[..., None]))
    return v - (xp.swapaxes(R, -1, -2) @ y)[..., 0]


def rk4_step(L, dist, Z, q, v, h, project=True, xp=np):
    k1q, k1v = v, _rhs(L, dist, Z, q, v, xp)
    k2q = v + 0.5 * h * k1v
    k2v = _rhs(L, dist, Z, q + 0.5 * h * k1q, k2q, xp)
    k3q = v + 0.5 * h * k2v
    k3v = _rhs(L, dist, Z, q + 0.5 * h * k2q, k3q, xp)
    k4q = v + h * k3v
    k4v = _rhs(L, dist, Z, q + h * k3q, k4q, xp)
    q1 = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
    v1 = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if project:
        v1 = _project(L, dist, Z, q1, v1, xp)
    return q1, v1


def jax_module():
    import jax

    jax.config.update("jax_enable_x64", True)
    return jax


class _ZKey:
    """Hashable wrapper so compiled steppers can be cached per null-direction set."""

    def __init__(self, Z):
        self.Z = None if Z is None else tuple(tuple(float(x) for x in row) for row in Z)

    def __hash__(self):
        return hash(self.Z)

    def __eq__(self, other):
        return self.Z == other.Z


@functools.lru_cache(maxsize=64)
def _compiled_scan(L, dist, zkey, steps, project):
    jax = jax_module()
    Z = zkey.Z

    def body(carry, _):
        q, v, h = carry
        q1, v1 = rk4_step(L, dist, Z, q, v, h, project, xp=jax.numpy)
        return (q1, v1, h), (q1, v1)

    def run(q0, v0, h):
        _, (qs, vs) = jax.lax.scan(body, (q0, v0, h), None, length=steps)
        return qs, vs

    return jax.jit(run)


def flow_scan(L, dist, Z, q0, v0, h, steps, project=True, backend="jax"):
    """States ``q[0..steps]``, ``v[0..steps]`` of the projected RK4 recursion."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if steps == 0:
        return q0[None], v0[None]
    if backend == "jax":
        jax = jax_module()
        run = _compiled_scan(L, dist, _ZKey(Z), int(steps), bool(project))
        qs, vs = run(jax.numpy.asarray(q0), jax.numpy.asarray(v0), float(h))
        qs, vs = np.asarray(qs), np.asarray(vs)
    else:
        qs = np.empty((steps,) + q0.shape)
        vs = np.empty((steps,) + v0.shape)
        q, v = q0, v0
        for i in range(steps):
            q, v = rk4_step(L, dist, Z, q, v, h, project, xp=np)
            qs[i], vs[i] = q, v
    return np.concatenate([q0[None], qs]), np.concatenate([v0[None], vs])


# ---------------------------------------------------------------- trajectory


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    energy: np.ndarray
    constraint_residual: np.ndarray
    sigma_min: np.ndarray = field(default=None)
    force_leak: float = 0.0  # max |H^T omega^T lambda| / (|omega| |lambda|)

    @property
    def n(self):
        return self.q.shape[-1]

    @property
    def k(self):
        return self.lam.shape[-1]

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class IntegratorOptions:
    project: bool = True
    backend: str = "jax"
    blowup: float = BLOWUP_NORM
    kkt_tol: float = KKT_TOL


def diagnostics(L, dist, Z, qs, vs):
    """Batch recomputation of momenta, multipliers, energy and residuals."""
    from .geometry import horizontal_basis

    M, N, b, Lv, R, c, _ = _numeric(L, dist, Z, qs, vs, np)
    K = _kkt(M, R, np)
    sig = np.linalg.svd(K, compute_uv=False)[..., -1]
    with np.errstate(all="ignore"):
        try:
            _, mu = _kkt_solve(M, R, b, c, np)
        except np.linalg.LinAlgError:
            mu = np.full(vs.shape[:-1] + (R.shape[-2],), np.nan)
    lam = mu[..., : dist.rank]
    energy = np.sum(Lv * vs, axis=-1) - L(qs, vs)
    Wm = dist.matrix(qs)
    resid = np.abs(np.einsum("...ai,...i->...a", Wm, vs)).max(axis=-1, initial=0.0)
    leak = 0.0
    if dist.rank and np.all(np.isfinite(lam)):
        H = horizontal_basis(dist, qs)
        force = np.einsum("...ai,...a->...i", Wm, lam)
        # relative to |omega| |lambda|: the forms grow without bound near chart singularities
        scale = np.abs(Wm).max(axis=(-1, -2)) * np.abs(lam).max(axis=-1, initial=0.0)
        raw = np.abs(np.einsum("...ij,...i->...j", H, force)).max(axis=-1)
        leak = float(np.max(raw / np.maximum(scale, np.finfo(float).tiny), initial=0.0))
    return Lv, lam, energy, resid, sig, leak


def _check_initial(L, dist, q0, v0):
    Wm = dist.matrix(q0)
    r = np.abs(Wm @ v0).max(initial=0.0)
    if r > CONSTRAINT_TOL:
        raise InconsistentState(f"initial velocity violates the constraints by {r:.3e}")


def integrate(
    L: LagrangianField,
    dist: ConstraintDistribution,
    q0,
    v0,
    T: float,
    h: float,
    options: IntegratorOptions = IntegratorOptions(),
) -> Trajectory:
    """Fixed-step RK4 integration of the Lagrange-Dirac equations from ``(q0, v0)``."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not (h > 0 and T >= 0):
        raise ConfigError("need h > 0 and T >= 0")
    steps = int(round(T / h))
    if abs(steps * h - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T={T} is not a multiple of h={h}")
    _check_initial(L, dist, q0, v0)
    Z = secondary_directions(L, dist, q0, v0)
    if Z is not None:
        _, _, _, _, R, _, g = _numeric(L, dist, Z, q0, v0, np)
        if np.abs(g).max() > CONSTRAINT_TOL or np.abs(R @ v0).max() > CONSTRAINT_TOL:
            raise InconsistentState(
                "initial state violates the secondary constraint forced by the degenerate directions"
            )
    M0, _, _, _, R0, _, _ = _numeric(L, dist, Z, q0, v0, np)
    sig0 = float(np.linalg.svd(_kkt(M0, R0, np), compute_uv=False)[-1])
    if sig0 < options.kkt_tol:
        raise SingularKKT(sig0, step=0)

    qs, vs = flow_scan(L, dist, Z, q0, v0, h, steps, options.project, options.backend)
    t = h * np.arange(steps + 1)

    with np.errstate(all="ignore"):
        norms = np.sqrt(np.sum(qs**2, axis=-1) + np.sum(vs**2, axis=-1))
    bad = ~np.isfinite(norms) | (norms > options.blowup)
    last = int(np.argmax(bad)) if bad.any() else steps + 1
    good = slice(0, last)
    p, lam, energy, resid, sig, leak = diagnostics(L, dist, Z, qs[good], vs[good])
    low = np.flatnonzero(~(sig >= options.kkt_tol))
    if low.size:
        i = int(low[0])
        raise SingularKKT(float(sig[i]), step=i)
    if bad.any():
        raise BlowUp(last, float(norms[last]))
    return Trajectory(t, qs, vs, p, lam, energy, resid, sig, leak)


def energy_drift(traj: Trajectory, L: LagrangianField = None) -> float:
    """``max |E(t) - E(0)|``, recomputing ``E = p.v - L`` when ``L`` is given."""
    if L is None:
        e = traj.energy
    else:
        e = np.sum(traj.p * traj.v, axis=-1) - L(traj.q, traj.v)
    return float(np.max(np.abs(e - e[0])))


# ------------------------------------------------------- first-order flows


def _field_rk4(field, y, h, xp):
    def f(z):
        return xp.asarray(ad.stack(field(ad.components(z)), z.shape[:-1]))

    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@functools.lru_cache(maxsize=64)
def _compiled_field_scan(field, steps):
    jax = jax_module()

    def body(carry, _):
        y, h = carry
        y1 = _field_rk4(field, y, h, jax.numpy)
        return (y1, h), y1

    def run(y0, h):
        return jax.lax.scan(body, (y0, h), None, length=steps)[1]

    return jax.jit(run)


def ode_flow(field, y0, h, steps, backend="jax", blowup=BLOWUP_NORM) -> np.ndarray:
    """RK4 samples ``y[0..steps]`` of ``ydot = field(y)``; ``field`` maps components to a list."""
    y0 = np.asarray(y0, dtype=float)
    if steps == 0:
        return y0[None]
    if backend == "jax":
        jax = jax_module()
        ys = np.asarray(_compiled_field_scan(field, int(steps))(jax.numpy.asarray(y0), float(h)))
    else:
        ys = np.empty((steps,) + y0.shape)
        y = y0
        with np.errstate(all="ignore"):
            for i in range(steps):
                y = _field_rk4(field, y, h, np)
                ys[i] = y
    ys = np.concatenate([y0[None], ys])
    with np.errstate(all="ignore"):
        norms = np.sqrt(np.sum(ys**2, axis=-1))
    bad = ~np.isfinite(norms) | (norms > blowup)
    if bad.any():
        i = int(np.argmax(bad))
        raise BlowUp(i, float(norms[i]))
    return ys


def zero_crossings(t, x) -> np.ndarray:
    """Times where ``x`` changes sign, by linear interpolation between samples."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    exact = np.flatnonzero(x == 0.0)
    i = np.flatnonzero(x[:-1] * x[1:] < 0.0)
    tz = t[i] - x[i] * (t[i + 1] - t[i]) / (x[i + 1] - x[i])
    return np.sort(np.concatenate([t[exact], tz]))


def zero_crossing_frequency(t, x) -> float:
    """Angular frequency from a least-squares line through successive zero-crossing times.

    Consecutive crossings are half a period apart, so the slope of crossing
    time against crossing index is ``pi / nu``.
    """
    tz = zero_crossings(t, x)
    if len(tz) < 3:
        raise ValueError(f"need at least 3 zero crossings, found {len(tz)}")
    slope = np.polyfit(np.arange(len(tz)), tz, 1)[0]
    return float(np.pi / slope)
