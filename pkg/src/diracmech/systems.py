"""Built-in mechanical and electrical systems and their closed-form reference data.

Each constructor returns a :class:`System` bundling the Lagrangian, the
constraint distribution and, where applicable, the group directions of a
Chaplygin symmetry or a holonomic leaf.  Constructors are cached on their
(frozen, hashable) parameter objects so that compiled integrators are reused.
Angles are unwrapped chart coordinates.
"""

from __future__ import annotations

import configparser
import functools
import inspect
import math
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .geometry import ConstraintDistribution, HolonomicLeaf, LagrangianField
from .hamilton_jacobi import HJSection


def _positive(obj, names):
    for name in names:
        val = getattr(obj, name)
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ConfigError(f"{type(obj).__name__}.{name} must be a positive number, got {val!r}")


@dataclass(frozen=True)
class RollerRacerParams:
    m1: float = 1.0
    I1: float = 1.0
    d1: float = 1.0
    d2: float = 1.0

    def __post_init__(self):
        _positive(self, ("m1", "I1", "d1", "d2"))


@dataclass(frozen=True)
class BicycleParams:
    m: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    g: float = 1.0
    J: object = 1.0
    variant: str = "verbatim"

    def __post_init__(self):
        _positive(self, ("m", "a", "b"))
        if not math.isfinite(self.c) or not math.isfinite(self.g):
            raise ConfigError("BicycleParams.c and .g must be finite")
        if self.variant not in ("verbatim", "corrected"):
            raise ConfigError(f"unknown bicycle variant {self.variant!r} (verbatim | corrected)")
        if not callable(self.J):
            _positive(self, ("J",))

    def inertia(self, phi, psi):
        if callable(self.J):
            return self.J(phi, psi)
        return self.J + 0.0 * phi


@dataclass(frozen=True)
class LCCircuitParams:
    ell: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    a0: float = 0.0
    a1: float = 0.0

    def __post_init__(self):
        _positive(self, ("ell", "c1", "c2", "c3"))


@dataclass(frozen=True)
class PointVortexParams:
    """Lagrangian ``(x ydot - y xdot)/2 - k (x^2 + y^2)/2``, linear in velocity."""

    k: float = 1.0

    def __post_init__(self):
        _positive(self, ("k",))


@dataclass(frozen=True)
class FlatToyParams:
    """``L = m (xdot^2 + ydot^2)/2 - k y^2/2`` with ``dx = a dy``: a flat connection."""

    m: float = 1.0
    k: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        _positive(self, ("m", "k"))


@dataclass(frozen=True)
class NHToyParams:
    """Free particle on the plane constrained by ``dx2 - x1 dx1 = 0``.

    The form is exact (``d(x2 - x1^2/2)``), so the distribution is integrable.
    """

    m: float = 1.0

    def __post_init__(self):
        _positive(self, ("m",))


def _cached(builder):
    """Cache a constructor on its parameter object, treating the default like an explicit value."""
    default = inspect.signature(builder).parameters["p"].default
    cached = functools.lru_cache(maxsize=None)(builder)

    @functools.wraps(builder)
    def build(p=default):
        return cached(p)

    build.cache_clear = cached.cache_clear
    return build


@dataclass(frozen=True, eq=False)
class System:
    name: str
    params: object
    L: LagrangianField
    dist: ConstraintDistribution
    coords: tuple
    group: tuple = None
    leaf: HolonomicLeaf = None

    @property
    def n(self):
        return self.L.dim


def _z(x):
    return 0.0 * x


# --------------------------------------------------------------- roller racer


@_cached
def roller_racer(p: RollerRacerParams = RollerRacerParams()) -> System:
    def L(q, v):
        return 0.5 * p.m1 * (v[0] * v[0] + v[1] * v[1]) + 0.5 * p.I1 * v[2] * v[2] + _z(v[3])

    def forms(q):
        th, ph = q[2], q[3]
        cs = ad.csc(ph)
        a = (p.d1 * ad.cos(ph) + p.d2) * cs
        b = p.d2 * cs
        one = 1.0 + _z(th)
        zero = _z(th)
        return [
            [one, zero, -ad.cos(th) * a, -ad.cos(th) * b],
            [zero, one, -ad.sin(th) * a, -ad.sin(th) * b],
        ]

    return System(
        "roller-racer",
        p,
        LagrangianField(4, L, "roller racer L"),
        ConstraintDistribution(4, 2, forms, "roller racer constraints"),
        ("x", "y", "theta", "phi"),
        group=(0, 1),
    )


def roller_racer_vr(p: RollerRacerParams, E: float, v_theta: float) -> float:
    """Forward speed ``sqrt((2E - I1 v_theta^2)/m1)`` of the HJ solution."""
    disc = 2.0 * E - p.I1 * v_theta**2
    if disc < 0:
        raise ConfigError(f"energy E={E} too small for v_theta={v_theta}")
    return math.sqrt(disc / p.m1)


def roller_racer_phi_rate(p, E, v_theta, phi, branch=1):
    """``phidot = -v_theta (1 + d1/d2 cos phi) + branch (v_r/d2) sin phi``."""
    vr = roller_racer_vr(p, E, v_theta)
    return -v_theta * (1.0 + p.d1 / p.d2 * np.cos(phi)) + branch * vr / p.d2 * np.sin(phi)


def roller_racer_lift_xy(p, th, ph, v_th, v_ph):
    """Constraint-determined ``(xdot, ydot)`` for given ``(theta, phi, thetadot, phidot)``."""
    S = ad.csc(ph) * ((p.d1 * ad.cos(ph) + p.d2) * v_th + p.d2 * v_ph)
    return ad.cos(th) * S, ad.sin(th) * S


def roller_racer_hj_section(
    p: RollerRacerParams = RollerRacerParams(),
    E: float = 1.0,
    v_theta: float = 0.5,
    branch: int = 1,
    theta_profile=None,
    phi_scale: float = 1.0,
) -> HJSection:
    """Translation-invariant solution with ``X_theta = v_theta`` and the chosen root for ``X_phi``.

    ``theta_profile(phi)`` multiplies ``X_theta`` and ``phi_scale`` multiplies
    ``X_phi``; both default to the exact solution and exist to build consistent
    (still in K) but incorrect sections for falsification tests.
    """
    roller_racer_vr(p, E, v_theta)

    def X(q):
        th, ph = q[2], q[3]
        xt = v_theta + _z(ph) if theta_profile is None else v_theta * theta_profile(ph)
        root = ad.sqrt((2.0 * E - p.I1 * xt * xt) / p.m1)
        xp = phi_scale * (-(p.d1 * ad.cos(ph) + p.d2) * xt + branch * ad.sin(ph) * root) / p.d2
        vx, vy = roller_racer_lift_xy(p, th, ph, xt, xp)
        return [vx, vy, xt, xp]

    def gamma(q):
        vx, vy, xt, _ = X(q)
        return [p.m1 * vx, p.m1 * vy, p.I1 * xt, _z(q[3])]

    return HJSection(4, X, gamma, E, "roller racer HJ solution")


def roller_racer_energy_on_K(p, phi, v_theta, v_phi):
    S = (p.d1 * np.cos(phi) + p.d2) * v_theta + p.d2 * v_phi
    return 0.5 * p.m1 * S**2 / np.sin(phi) ** 2 + 0.5 * p.I1 * v_theta**2


def roller_racer_reduced_lagrangian(p, phi, v_theta, v_phi):
    return (
        0.5 * p.m1 * (p.d1 * v_theta * np.cos(phi) + p.d2 * (v_theta + v_phi)) ** 2 / np.sin(phi) ** 2
        + 0.5 * p.I1 * v_theta**2
    )


def roller_racer_reduced_hamiltonian(p, phi, p_theta, p_phi):
    return (p_theta - (1.0 + p.d1 / p.d2 * np.cos(phi)) * p_phi) ** 2 / (2.0 * p.I1) + np.sin(
        phi
    ) ** 2 / (2.0 * p.m1 * p.d2**2) * p_phi**2


def roller_racer_xi(p, phi, p_phi):
    """Coefficient of ``dtheta ^ dphi`` in ``Xi``."""
    return -p_phi * (p.d1 / p.d2 + np.cos(phi)) / np.sin(phi)


def roller_racer_curvature(p, theta, phi):
    """Coefficients of ``dtheta ^ dphi`` in the two curvature components."""
    c2 = 1.0 / np.sin(phi) ** 2
    return (
        -c2 * (p.d1 * np.cos(theta) + p.d2 * np.cos(theta + phi)),
        -c2 * (p.d1 * np.sin(theta) + p.d2 * np.sin(theta + phi)),
    )


def roller_racer_C(p, E, v_theta):
    return p.d2 * math.sqrt(p.m1 * (2.0 * E - p.I1 * v_theta**2))


def roller_racer_gamma_bar(p=RollerRacerParams(), E=1.0, v_theta=0.5, C=None, branch=1):
    """Reduced HJ solution ``gamma_phi = C csc phi`` with the matching ``gamma_theta``."""
    C = roller_racer_C(p, E, v_theta) if C is None else C
    disc = p.I1 * (2.0 * E - C**2 / (p.m1 * p.d2**2))
    if disc < 0:
        raise ConfigError("reduced HJ constant C too large for the energy level")
    root = math.sqrt(disc)

    def gamma_bar(r):
        ph = r[1]
        gp = C * ad.csc(ph)
        gt = (1.0 + p.d1 / p.d2 * ad.cos(ph)) * gp + branch * root + _z(r[0])
        return [gt, gp]

    return gamma_bar


# -------------------------------------------------------------------- bicycle


@_cached
def bicycle(p: BicycleParams = BicycleParams()) -> System:
    def L(q, v):
        th, ph, ps = q[2], q[3], q[4]
        xd, yd, thd, phd, psd = v
        c, s = ad.cos(th), ad.sin(th)
        u1 = c * xd + s * yd + p.a * ad.sin(ps) * thd
        u2 = s * xd - c * yd + p.a * ad.cos(ps) * psd - p.c * thd
        tilt = ad.sin(ps) if p.variant == "verbatim" else ad.sin(ps) ** 2
        kin = 0.5 * p.m * (u1 * u1 + u2 * u2 + p.a**2 * tilt * psd * psd)
        return kin + 0.5 * p.inertia(ph, ps) * phd * phd - p.m * p.g * p.a * ad.cos(ps)

    def forms(q):
        th, ph = q[2], q[3]
        c, s = ad.cos(th), ad.sin(th)
        zero = _z(th)
        return [
            [ph * c, ph * s, -1.0 + zero, zero, zero],
            [s, -c, zero, zero, zero],
        ]

    return System(
        "bicycle",
        p,
        LagrangianField(5, L, "bicycle L"),
        ConstraintDistribution(5, 2, forms, "bicycle constraints"),
        ("x", "y", "theta", "phi", "psi"),
        group=(0, 1),
    )


def bicycle_reduced_lagrangian_display(p: BicycleParams, r, vbar, variant=None):
    """Closed form of the reduced bicycle Lagrangian in two readings.

    ``variant="verbatim"`` uses the roll term ``(thetadot + a sin psi thetadot)^2
    / phi^2``; ``"corrected"`` uses ``(thetadot/phi + a sin psi thetadot)^2``,
    which is what composing the Lagrangian with the horizontal lift yields.
    The tilt term follows ``p.variant``.
    """
    variant = p.variant if variant is None else variant
    ph, ps = r[..., 1], r[..., 2]
    thd, phd, psd = vbar[..., 0], vbar[..., 1], vbar[..., 2]
    if variant == "verbatim":
        roll = (thd + p.a * np.sin(ps) * thd) ** 2 / ph**2
    else:
        roll = (thd / ph + p.a * np.sin(ps) * thd) ** 2
    tilt = np.sin(ps) if p.variant == "verbatim" else np.sin(ps) ** 2
    J = p.inertia(ph, ps)
    return (
        0.5 * p.m * ((p.c * thd - p.a * np.cos(ps) * psd) ** 2 + roll + p.a**2 * tilt * psd**2)
        + 0.5 * J * phd**2
        - p.m * p.g * p.a * np.cos(ps)
    )


# ----------------------------------------------------------------- LC circuit


@_cached
def lc_circuit(p: LCCircuitParams = LCCircuitParams()) -> System:
    def L(q, f):
        return (
            0.5 * p.ell * f[0] * f[0]
            - 0.5 * q[1] * q[1] / p.c1
            - 0.5 * q[2] * q[2] / p.c2
            - 0.5 * q[3] * q[3] / p.c3
            + _z(f[1] + f[2] + f[3])
        )

    def forms(q):
        z = _z(q[0])
        return [[-1.0 + z, z, 1.0 + z, z], [z, 1.0 + z, -1.0 + z, 1.0 + z]]

    def embed(s):
        ql, qc1 = s
        qc2 = ql - p.a0
        return [ql, qc1, qc2, qc2 - qc1 - p.a1]

    return System(
        "lc-circuit",
        p,
        LagrangianField(4, L, "LC circuit L"),
        ConstraintDistribution(4, 2, forms, "Kirchhoff current law"),
        ("q_ell", "q_c1", "q_c2", "q_c3"),
        leaf=HolonomicLeaf(2, 4, embed),
    )


def lc_stiffness(p: LCCircuitParams) -> float:
    """Effective inverse capacitance ``(c1 + c2 + c3)/(c2 (c1 + c3))``."""
    return (p.c1 + p.c2 + p.c3) / (p.c2 * (p.c1 + p.c3))


def lc_frequency(p: LCCircuitParams = LCCircuitParams()) -> float:
    """Angular frequency ``nu = sqrt((c1 + c2 + c3)/(c2 (c1 + c3) ell))``."""
    return math.sqrt(lc_stiffness(p) / p.ell)


def lc_ratio(p: LCCircuitParams = LCCircuitParams()) -> float:
    """``q_c1 / q_ell = c1/(c1 + c3)`` on the solution leaf."""
    return p.c1 / (p.c1 + p.c3)


def lc_charge(p, E, t, alpha=0.0):
    """``q_ell(t) = sqrt(2E/(ell nu^2)) sin(nu t + alpha)``."""
    nu = lc_frequency(p)
    return math.sqrt(2.0 * E / (p.ell * nu**2)) * np.sin(nu * t + alpha)


def lc_amplitude(p, E):
    return math.sqrt(2.0 * E / lc_stiffness(p))


def lc_state(p, q_ell, f_ell):
    """Configuration and currents on the solution leaf (with zero integration constants)."""
    k = lc_ratio(p)
    q = np.array([q_ell, k * q_ell, q_ell - p.a0, q_ell - p.a0 - k * q_ell - p.a1])
    f = np.array([f_ell, k * f_ell, f_ell, (1.0 - k) * f_ell])
    return q, f


def lc_hj_section(p=LCCircuitParams(), E=1.0, branch=1, shift=0.0) -> HJSection:
    """``X_ell = branch sqrt((2E - K q_ell^2)/ell)`` (+ ``shift``), ``gamma = ell X_ell dq_ell``.

    The remaining current components follow Kirchhoff's law with the split
    ``X_c1 = c1/(c1 + c3) X_ell`` that keeps the flow on the solution leaf.
    """
    K = lc_stiffness(p)
    k = lc_ratio(p)

    def X(q):
        xl = branch * ad.sqrt((2.0 * E - K * q[0] * q[0]) / p.ell) + shift
        return [xl, k * xl, xl, (1.0 - k) * xl]

    def gamma(q):
        xl = X(q)[0]
        z = _z(q[0])
        return [p.ell * xl, z, z, z]

    return HJSection(4, X, gamma, E, "LC HJ solution")


# ------------------------------------------------------------------ toy systems


@_cached
def point_vortex(p: PointVortexParams = PointVortexParams()) -> System:
    def L(q, v):
        x, y = q
        return 0.5 * (x * v[1] - y * v[0]) - 0.5 * p.k * (x * x + y * y)

    return System("point-vortex", p, LagrangianField(2, L, "point vortex L"), ConstraintDistribution(2, 0), ("x", "y"))


@_cached
def flat_toy(p: FlatToyParams = FlatToyParams()) -> System:
    def L(q, v):
        return 0.5 * p.m * (v[0] * v[0] + v[1] * v[1]) - 0.5 * p.k * q[1] * q[1]

    def forms(q):
        z = _z(q[0])
        return [[1.0 + z, -p.a + z]]

    return System(
        "flat-toy",
        p,
        LagrangianField(2, L, "flat toy L"),
        ConstraintDistribution(2, 1, forms, "flat toy constraint"),
        ("x", "y"),
        group=(0,),
    )


@_cached
def nh_toy(p: NHToyParams = NHToyParams()) -> System:
    def L(q, v):
        return 0.5 * p.m * (v[0] * v[0] + v[1] * v[1])

    def forms(q):
        return [[-q[0], 1.0 + _z(q[0])]]

    return System(
        "nh-toy", p, LagrangianField(2, L, "free particle L"), ConstraintDistribution(2, 1, forms, "parabolic constraint"), ("x1", "x2")
    )


def nh_toy_gamma(p=NHToyParams(), E=1.0):
    """``gamma = m f(x1) (1, x1)`` with ``H o gamma = E``."""

    def gamma(q):
        f = ad.sqrt(2.0 * E / (p.m * (1.0 + q[0] * q[0])))
        return [p.m * f, p.m * f * q[0]]

    return gamma


def reference_solution(system: System, name: str, **kw):
    """Closed-form reference data by name.

    roller-racer: ``hj_section``, ``phi_rate``, ``gamma_bar``, ``v_r``;
    lc-circuit: ``charge``, ``frequency``, ``ratio``, ``hj_section``;
    nh-toy: ``gamma``.
    """
    p = system.params
    table = {
        "roller-racer": {
            "hj_section": lambda: roller_racer_hj_section(p, **kw),
            "phi_rate": lambda: lambda phi: roller_racer_phi_rate(p, phi=phi, **kw),
            "gamma_bar": lambda: roller_racer_gamma_bar(p, **kw),
            "v_r": lambda: roller_racer_vr(p, **kw),
        },
        "lc-circuit": {
            "charge": lambda: functools.partial(lc_charge, p, **kw),
            "frequency": lambda: lc_frequency(p),
            "ratio": lambda: lc_ratio(p),
            "hj_section": lambda: lc_hj_section(p, **kw),
        },
        "nh-toy": {"gamma": lambda: nh_toy_gamma(p, **kw)},
    }
    entries = table.get(system.name, {})
    if name not in entries:
        raise ConfigError(f"no reference solution {name!r} for {system.name} (available: {', '.join(entries) or 'none'})")
    return entries[name]()


# ------------------------------------------------------------ registry / config

PARAMS = {
    "roller-racer": RollerRacerParams,
    "bicycle": BicycleParams,
    "lc-circuit": LCCircuitParams,
    "point-vortex": PointVortexParams,
    "flat-toy": FlatToyParams,
    "nh-toy": NHToyParams,
}

BUILDERS = {
    "roller-racer": roller_racer,
    "bicycle": bicycle,
    "lc-circuit": lc_circuit,
    "point-vortex": point_vortex,
    "flat-toy": flat_toy,
    "nh-toy": nh_toy,
}

INITIAL_KEYS = {
    "roller-racer": ("x", "y", "theta", "phi", "v_theta", "v_phi", "E", "branch"),
    "bicycle": ("x", "y", "theta", "phi", "psi", "v_theta", "v_phi", "v_psi"),
    "lc-circuit": ("q_ell", "f_ell", "E", "branch"),
    "point-vortex": ("x", "y"),
    "flat-toy": ("x", "y", "v_y"),
    "nh-toy": ("x1", "x2", "v1"),
}

DEFAULT_INITIAL = {
    "roller-racer": dict(x=0.0, y=0.0, theta=0.0, phi=math.pi / 2, v_theta=0.5, E=1.0, branch=1.0),
    "bicycle": dict(x=0.0, y=0.0, theta=0.0, phi=1.0, psi=0.001, v_theta=0.1, v_phi=0.0, v_psi=0.0),
    "lc-circuit": dict(q_ell=0.0, E=1.0, branch=1.0),
    "point-vortex": dict(x=1.0, y=0.0),
    "flat-toy": dict(x=0.0, y=1.0, v_y=0.0),
    "nh-toy": dict(x1=0.0, x2=0.0, v1=1.0),
}


def _coerce(cls, key, raw):
    types = {f.name: f.type for f in fields(cls)}
    if types[key] in ("str", str):
        return str(raw)
    try:
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key}={raw!r} is not a number") from exc


def make_params(name: str, overrides: dict = None):
    if name not in PARAMS:
        raise ConfigError(f"unknown system {name!r}; choose from {', '.join(sorted(PARAMS))}")
    cls = PARAMS[name]
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown parameter {key!r} for {name} (known: {', '.join(sorted(known))})")
        kwargs[key] = _coerce(cls, key, raw)
    return cls(**kwargs)


def make_system(name: str, params=None) -> System:
    """Build a named system from a parameter object or a ``{key: value}`` dict."""
    if params is None or isinstance(params, dict):
        params = make_params(name, params)
    return BUILDERS[name](params)


def initial_values(name: str, overrides: dict = None) -> dict:
    if name not in INITIAL_KEYS:
        raise ConfigError(f"unknown system {name!r}")
    vals = dict(DEFAULT_INITIAL[name])
    for key, raw in (overrides or {}).items():
        if key not in INITIAL_KEYS[name]:
            raise ConfigError(f"unknown initial key {key!r} for {name} (known: {', '.join(INITIAL_KEYS[name])})")
        try:
            vals[key] = float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial value {key}={raw!r} is not a number") from exc
    return vals


def initial_state(system: System, values: dict = None):
    """``(q0, v0)`` on the distribution built from the system's initial keys."""
    name, p = system.name, system.params
    iv = initial_values(name, None)
    iv.update(values or {})
    if name == "roller-racer":
        th, ph, vt = iv["theta"], iv["phi"], iv["v_theta"]
        if "v_phi" in iv:
            vp = iv["v_phi"]
        else:
            vp = float(roller_racer_phi_rate(p, iv["E"], vt, ph, int(iv["branch"])))
        vx, vy = roller_racer_lift_xy(p, th, ph, vt, vp)
        return np.array([iv["x"], iv["y"], th, ph]), np.array([vx, vy, vt, vp])
    if name == "bicycle":
        th, ph, vt = iv["theta"], iv["phi"], iv["v_theta"]
        return (
            np.array([iv["x"], iv["y"], th, ph, iv["psi"]]),
            np.array([vt / ph * math.cos(th), vt / ph * math.sin(th), vt, iv["v_phi"], iv["v_psi"]]),
        )
    if name == "lc-circuit":
        ql = iv["q_ell"]
        if "f_ell" in iv:
            fl = iv["f_ell"]
        else:
            disc = (2.0 * iv["E"] - lc_stiffness(p) * ql**2) / p.ell
            if disc < 0:
                raise ConfigError(f"q_ell={ql} lies outside the energy level E={iv['E']}")
            fl = iv["branch"] * math.sqrt(disc)
        return lc_state(p, ql, fl)
    if name == "point-vortex":
        return np.array([iv["x"], iv["y"]]), np.zeros(2)
    if name == "flat-toy":
        return np.array([iv["x"], iv["y"]]), np.array([p.a * iv["v_y"], iv["v_y"]])
    if name == "nh-toy":
        return np.array([iv["x1"], iv["x2"]]), np.array([iv["v1"], iv["x1"] * iv["v1"]])
    raise ConfigError(f"no initial-state rule for {name!r}")


def default_config_text(name: str) -> str:
    return resources.files("diracmech.data").joinpath(f"{name}.ini").read_text()


def read_config(path_or_text: str, is_text: bool = False) -> dict:
    """Parse an INI file with ``[system]``, ``[params]`` and ``[initial]`` sections.

    Returns ``{"system": name, "params": {...}, "initial": {...}, "run": {...}}``;
    unknown sections or keys raise :class:`ConfigError`.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        if is_text:
            cp.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    allowed = {"system", "params", "initial"}
    extra = set(cp.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown configuration section(s): {', '.join(sorted(extra))}")
    if not cp.has_section("system") or "name" not in cp["system"]:
        raise ConfigError("configuration needs [system] name = ...")
    run_keys = {"name", "T", "h", "seed"}
    sys_extra = set(cp["system"]) - run_keys
    if sys_extra:
        raise ConfigError(f"unknown [system] key(s): {', '.join(sorted(sys_extra))}")
    name = cp["system"]["name"].strip()
    params = dict(cp["params"]) if cp.has_section("params") else {}
    initial = dict(cp["initial"]) if cp.has_section("initial") else {}
    make_params(name, params)
    initial_values(name, initial)
    run = {k: cp["system"][k] for k in ("T", "h", "seed") if k in cp["system"]}
    return {"system": name, "params": params, "initial": initial, "run": run}
