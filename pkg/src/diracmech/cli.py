"""Command-line front end: ``simulate``, ``hj-check``, ``reduce`` and ``plot``.

Settings are merged in the order built-in defaults < ``--config`` file < flags.
Exit codes: 0 success, 1 a check exceeded its tolerance, 2 invalid
configuration or input, 3 singular linear algebra, 4 numerical blow-up.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import chaplygin as ch
from . import hamilton_jacobi as hj
from . import integrator as integ
from . import io as tio
from . import systems as S
from . import svgplot
from .errors import (
    BlowUp,
    ConfigError,
    DiracMechError,
    DomainError,
    InconsistentState,
    NotChaplygin,
    RankError,
    ShapeError,
    SingularAlmostSymplectic,
    SingularKKT,
    SingularReducedLegendre,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SINGULAR, EXIT_BLOWUP = 0, 1, 2, 3, 4
DEFAULT_SEED = 42
DEFAULT_SAMPLES = 1000
HJ_TOL = 1e-9
REDUCE_TOL = 1e-6
HJ_SYSTEMS = ("roller-racer", "lc-circuit", "nh-toy")


@dataclass
class RunConfig:
    system: str
    params: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    T: float = 10.0
    h: float = 1e-3
    seed: int = DEFAULT_SEED
    out: str = None
    branch: int = 1
    perturb: float = 0.0
    tol: float = None
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        if not (self.T > 0 and self.h > 0 and self.h < self.T):
            raise ConfigError(f"need T > 0, h > 0 and h < T (got T={self.T}, h={self.h})")
        if not (math.isfinite(self.T) and math.isfinite(self.h)):
            raise ConfigError("T and h must be finite")
        if self.branch not in (1, -1):
            raise ConfigError(f"branch must be +1 or -1, got {self.branch}")
        if self.samples < 1:
            raise ConfigError("samples must be positive")


def _pairs(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _number(raw, name, kind=float):
    try:
        return kind(float(raw)) if kind is int else kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}={raw!r} is not a number") from exc


def build_config(args) -> RunConfig:
    file_cfg = S.read_config(args.config) if args.config else None
    name = args.system or (file_cfg and file_cfg["system"])
    if not name:
        raise ConfigError("no system given (use --system or --config)")
    base = S.read_config(S.default_config_text(name), is_text=True) if name in S.PARAMS else None
    if base is None:
        raise ConfigError(f"unknown system {name!r}; choose from {', '.join(sorted(S.PARAMS))}")
    params, initial, run = dict(base["params"]), dict(base["initial"]), dict(base["run"])
    if file_cfg is not None:
        if file_cfg["system"] != name:
            raise ConfigError(f"--system {name} conflicts with configuration for {file_cfg['system']}")
        params.update(file_cfg["params"])
        initial.update(file_cfg["initial"])
        run.update(file_cfg["run"])
    params.update(_pairs(args.param))
    initial.update(_pairs(args.init))
    S.make_params(name, params)
    if args.branch is not None:
        initial["branch"] = args.branch
    T = args.T if args.T is not None else _number(run.get("T", 10.0), "T")
    h = args.h if args.h is not None else _number(run.get("h", 1e-3), "h")
    seed = args.seed if args.seed is not None else _number(run.get("seed", DEFAULT_SEED), "seed", int)
    branch = int(_number(initial.get("branch", 1), "branch"))
    if "branch" in initial and "branch" not in S.INITIAL_KEYS[name]:
        initial.pop("branch")
    S.initial_values(name, initial)
    return RunConfig(
        system=name,
        params=params,
        initial=initial,
        T=T,
        h=h,
        seed=seed,
        out=args.out,
        branch=branch,
        perturb=args.perturb or 0.0,
        tol=args.tol,
        samples=args.samples,
    )


def _system(cfg: RunConfig):
    return S.make_system(cfg.system, S.make_params(cfg.system, cfg.params))


def _initial(cfg: RunConfig, system):
    return S.initial_state(system, S.initial_values(cfg.system, cfg.initial))


def _out(cfg, default):
    return cfg.out if cfg.out else default


# ------------------------------------------------------------------ simulate


def cmd_simulate(cfg: RunConfig) -> int:
    system = _system(cfg)
    q0, v0 = _initial(cfg, system)
    traj = integ.integrate(system.L, system.dist, q0, v0, cfg.T, cfg.h)
    path = _out(cfg, f"{cfg.system}-trajectory.csv")
    tio.write_trajectory(path, traj)
    print(f"wrote {path} ({len(traj)} rows)")
    print(f"energy_drift = {integ.energy_drift(traj):.3e}")
    print(f"max_constraint_residual = {float(np.max(traj.constraint_residual)):.3e}")
    if cfg.system == "lc-circuit":
        try:
            nu = integ.zero_crossing_frequency(traj.t, traj.q[:, 0])
            print(f"zero_crossing_frequency = {nu:.12g} (closed form {S.lc_frequency(system.params):.12g})")
        except ValueError as exc:
            print(f"zero_crossing_frequency unavailable: {exc}")
    return EXIT_OK


# ------------------------------------------------------------------ hj-check


def hj_samples(name, p, n, seed, E=1.0):
    rng = np.random.default_rng(seed)
    if name == "roller-racer":
        return np.column_stack(
            [
                rng.uniform(-5.0, 5.0, (n, 2)),
                rng.uniform(-math.pi, math.pi, n),
                rng.uniform(0.3, math.pi - 0.3, n),
            ]
        )
    if name == "lc-circuit":
        ql = rng.uniform(-0.9, 0.9, n) * S.lc_amplitude(p, E)
        return np.array([S.lc_state(p, x, 0.0)[0] for x in ql])
    return rng.uniform(-2.0, 2.0, (n, 2))


def hj_section_for(cfg: RunConfig, system, E):
    p, eps = system.params, cfg.perturb
    if cfg.system == "roller-racer":
        vt = S.initial_values(cfg.system, cfg.initial)["v_theta"]
        return S.roller_racer_hj_section(p, E, vt, cfg.branch, phi_scale=1.0 + eps)
    if cfg.system == "lc-circuit":
        return S.lc_hj_section(p, E, cfg.branch, shift=eps)
    if cfg.system == "nh-toy":
        g = S.nh_toy_gamma(p, E)

        def tilted(q):
            return [c * (1.0 + eps * q[0]) for c in g(q)]

        return hj.section_from_covector(system.L, tilted)
    raise ConfigError(f"no built-in HJ solution for {cfg.system} (available: {', '.join(HJ_SYSTEMS)})")


def cmd_hjcheck(cfg: RunConfig) -> int:
    system = _system(cfg)
    iv = S.initial_values(cfg.system, cfg.initial)
    E = float(iv.get("E", 1.0))
    section = hj_section_for(cfg, system, E)
    tol = HJ_TOL if cfg.tol is None else cfg.tol
    samples = hj_samples(cfg.system, system.params, cfg.samples, cfg.seed, E)
    crosscheck = None
    if cfg.system == "roller-racer":
        q0 = np.array([iv["x"], iv["y"], iv["theta"], iv["phi"]])
        crosscheck = (q0, cfg.T, cfg.h)
    report = hj.verify(section, system.L, system.dist, samples, crosscheck)
    text = report.to_text()
    constancy = cfg.system != "lc-circuit"
    failures = report.failures(tol, constancy_required=constancy)
    if system.leaf is not None:
        s = samples[:, :2]
        flow_res, dgamma_res = hj.holonomic_check(section, system.L, system.leaf, s)
        text += f"holonomic_energy_residual = {flow_res:.17g}\nholonomic_dgamma_residual = {dgamma_res:.17g}\n"
        failures += [n for n, r in (("holonomic_energy_residual", flow_res), ("holonomic_dgamma_residual", dgamma_res)) if not r < tol]
    print(text, end="")
    if cfg.out:
        tio.atomic_write_text(cfg.out, text)
    if failures:
        print(f"FAIL (tol {tol:g}): {', '.join(failures)}")
        return EXIT_CHECK
    print(f"PASS (tol {tol:g})")
    return EXIT_OK


# -------------------------------------------------------------------- reduce


def cmd_reduce(cfg: RunConfig) -> int:
    system = _system(cfg)
    if system.group is None:
        raise ConfigError(f"{cfg.system} has no Chaplygin symmetry to reduce")
    bundle = ch.build_bundle(system.L, system.dist, system.group)
    q0, v0 = _initial(cfg, system)
    r0, pbar0 = ch.reduced_initial_state(bundle, q0, v0)
    red = ch.integrate_reduced(bundle, r0, pbar0, cfg.T, cfg.h)
    full = ch.reconstruct(bundle, red, q0[list(bundle.group)])
    direct = integ.integrate(system.L, system.dist, q0, v0, cfg.T, cfg.h)
    gap = float(max(np.abs(full.q - direct.q).max(), np.abs(full.v - direct.v).max()))
    prefix = _out(cfg, cfg.system)
    tio.write_reduced(f"{prefix}-reduced.csv", red, bundle.base)
    tio.write_trajectory(f"{prefix}-reconstructed.csv", full)
    print(f"wrote {prefix}-reduced.csv and {prefix}-reconstructed.csv ({len(red.t)} rows)")
    print(f"reduction_vs_direct_gap = {gap:.3e}")
    print(f"max_constraint_residual = {float(np.max(full.constraint_residual)):.3e}")
    print(f"reduced_energy_drift = {float(np.abs(red.energy - red.energy[0]).max()):.3e}")
    tol = REDUCE_TOL if cfg.tol is None else cfg.tol
    if not gap < tol:
        print(f"FAIL: gap exceeds {tol:g}")
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------- plot


def cmd_plot(csv_path: str, columns: list, out: str, xcol: str = "t") -> int:
    header, data = tio.read_table(csv_path)
    missing = [c for c in [xcol] + columns if c not in header]
    if missing:
        raise ConfigError(f"column(s) not in {csv_path}: {', '.join(missing)} (have {', '.join(header)})")
    if len(data) < 2:
        raise ConfigError(f"{csv_path} needs at least two rows to plot")
    series = {c: data[:, header.index(c)] for c in columns}
    svg = svgplot.line_chart(data[:, header.index(xcol)], series, xcol)
    tio.atomic_write_text(out, svg)
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------- main


def _parser():
    ap = argparse.ArgumentParser(prog="diracmech", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--system", choices=sorted(S.PARAMS))
        p.add_argument("--config", help="INI file with [system], [params] and [initial] sections")
        p.add_argument("--param", action="append", metavar="K=V", help="parameter override (repeatable)")
        p.add_argument("--init", action="append", metavar="K=V", help="initial-state override (repeatable)")
        p.add_argument("--T", type=float, help="final time")
        p.add_argument("--h", type=float, help="step size")
        p.add_argument("--seed", type=int, help=f"sampling seed (default {DEFAULT_SEED})")
        p.add_argument("--out", help="output path (CSV, report, or prefix for reduce)")
        p.add_argument("--branch", type=int, choices=(1, -1), help="root branch of the HJ solution")
        p.add_argument("--perturb", type=float, help="relative perturbation of the HJ solution")
        p.add_argument("--tol", type=float, help="pass threshold")
        p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="random sample points")

    for name, text in (
        ("simulate", "integrate the Lagrange-Dirac equations and write a CSV"),
        ("hj-check", "verify a built-in Dirac-Hamilton-Jacobi solution"),
        ("reduce", "integrate the reduced system and compare with the direct solution"),
    ):
        common(sub.add_parser(name, help=text))
    pp = sub.add_parser("plot", help="draw CSV columns as an SVG line chart")
    pp.add_argument("csv")
    pp.add_argument("--columns", required=True, help="comma-separated column names")
    pp.add_argument("--x", default="t", help="abscissa column (default t)")
    pp.add_argument("--out", required=True)
    return ap


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "plot":
            cols = [c.strip() for c in args.columns.split(",") if c.strip()]
            return cmd_plot(args.csv, cols, args.out, args.x)
        cfg = build_config(args)
        return {"simulate": cmd_simulate, "hj-check": cmd_hjcheck, "reduce": cmd_reduce}[args.command](cfg)
    except (ConfigError, InconsistentState, NotChaplygin, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularKKT, SingularReducedLegendre, SingularAlmostSymplectic, RankError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (BlowUp, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except DiracMechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
