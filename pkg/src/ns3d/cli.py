"""Command-line front end.

Subcommands: run, sweep, admissible-dt, cubic, gronwall, compare.  Runs are
described by an INI-style config file (sections: grid, scheme, initial,
forcing, constants, run, output); any key can be overridden on the command
line with repeatable ``--set section.key=value``.

Exit codes: 0 completed, 1 configuration or usage error, 2 bound violated,
3 inner iteration did not converge, 4 infeasible configuration.

Every number printed is the shortest decimal that round-trips to the exact
library value.
"""

from __future__ import annotations

import argparse
import configparser
import itertools
import math
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import analysis, harness, spectral, stepping
from .analysis import ConstantsSet, InfeasibleConfig
from .harness import RunConfig, _fmt
from .spectral import (
    FixedModes,
    FromFile,
    PlanarVortex,
    RandomDivFree,
    Shear,
    TimeModulated,
    Zero,
)
from .stepping import NonConvergence, SchemeConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BOUND_VIOLATED = 2
EXIT_NONCONVERGENCE = 3
EXIT_INFEASIBLE = 4

_TERMINATION_EXIT = {
    "completed": EXIT_OK,
    "horizon_reached": EXIT_OK,
    "bound_violated": EXIT_BOUND_VIOLATED,
    "nonconvergence": EXIT_NONCONVERGENCE,
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- config files ------------------------------------------------------------------


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_SCHEMA = {
    "grid": {"n": int},
    "scheme": {
        "scheme": str,
        "k": float,
        "nu": float,
        "fp_tol": float,
        "fp_max_iter": int,
        "deterministic": _parse_bool,
    },
    "initial": {
        "kind": str,
        "amplitude": float,
        "seed": int,
        "slope": float,
        "kmax": int,
        "path": str,
    },
    "forcing": {
        "kind": str,
        "amplitude": float,
        "seed": int,
        "slope": float,
        "kmax": int,
        "modes": str,
        "modulation": str,
        "omega": float,
    },
    "constants": {"c0": float, "c1": float, "c2": float, "c3": float, "c4": float, "c5": float},
    "run": {
        "n_steps": int,
        "t_end": float,
        "monitor": str,
        "snapshot_cadence": int,
        "seed": int,
        "allow_over_horizon": _parse_bool,
        "label": str,
    },
    "output": {"dir": str},
}


def parse_config_file(path: str, overrides: Sequence[str] = ()) -> dict[str, dict]:
    """Read and validate a config file into {section: {key: value}}.

    Unknown sections or keys are rejected by name; values are converted and
    checked for finiteness.  ``overrides`` entries look like
    ``section.key=value`` and are applied before validation.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    raw: dict[str, dict[str, str]] = {
        section: dict(parser.items(section)) for section in parser.sections()
    }
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})[key] = value

    out: dict[str, dict] = {}
    for section, items in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        out[section] = {}
        for key, value in items.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            conv = _SCHEMA[section][key]
            try:
                parsed = conv(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {value!r} ({exc})") from exc
            if isinstance(parsed, float) and not math.isfinite(parsed):
                raise ConfigError(f"{section}.{key} must be finite, got {value!r}")
            out[section][key] = parsed
    return out


def _parse_modes(raw: str):
    """'kx,ky,kz:cx,cy,cz[; ...]' with complex components like 0.1+0.2j."""
    modes = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            kpart, cpart = chunk.split(":")
            kvec = tuple(int(v) for v in kpart.split(","))
            cvec = tuple(complex(v) for v in cpart.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad mode entry {chunk!r} ({exc})") from exc
        if len(kvec) != 3 or len(cvec) != 3:
            raise ConfigError(f"mode entry {chunk!r} needs 3 integers and 3 complex values")
        modes.append((kvec, cvec))
    if not modes:
        raise ConfigError("forcing kind fixed_modes requires a nonempty 'modes' list")
    return tuple(modes)


def _build_initial(section: dict, default_seed: int):
    kind = section.get("kind", "zero")
    if kind == "zero":
        return Zero()
    if kind == "shear":
        return Shear(amplitude=section.get("amplitude", 1.0))
    if kind == "planar_vortex":
        return PlanarVortex(amplitude=section.get("amplitude", 1.0))
    if kind == "random_divfree":
        return RandomDivFree(
            seed=section.get("seed", default_seed),
            slope=section.get("slope", 0.0),
            amplitude=section.get("amplitude", 1.0),
            kmax=section.get("kmax"),
        )
    if kind == "from_file":
        if "path" not in section:
            raise ConfigError("initial.kind = from_file requires initial.path")
        return FromFile(section["path"])
    raise ConfigError(f"unknown initial.kind {kind!r}")


def _build_forcing(section: dict, default_seed: int):
    kind = section.get("kind", "zero")
    if kind == "zero":
        base = Zero()
    elif kind == "random_divfree":
        base = RandomDivFree(
            seed=section.get("seed", default_seed),
            slope=section.get("slope", 0.0),
            amplitude=section.get("amplitude", 1.0),
            kmax=section.get("kmax"),
        )
    elif kind == "fixed_modes":
        base = FixedModes(_parse_modes(section.get("modes", "")))
    else:
        raise ConfigError(f"unknown forcing.kind {kind!r}")

    modulation = section.get("modulation", "none")
    if modulation == "none":
        return base
    omega = section.get("omega", 1.0)
    if modulation == "cos":
        return TimeModulated(base, lambda t: math.cos(omega * t), label=f"cos({omega}*t)")
    if modulation == "sin":
        return TimeModulated(base, lambda t: math.sin(omega * t), label=f"sin({omega}*t)")
    raise ConfigError(f"unknown forcing.modulation {modulation!r}")


def build_run_config(doc: dict[str, dict]) -> RunConfig:
    if "grid" not in doc or "n" not in doc["grid"]:
        raise ConfigError("missing required key grid.n")
    scheme_sec = doc.get("scheme", {})
    for required in ("k", "nu"):
        if required not in scheme_sec:
            raise ConfigError(f"missing required key scheme.{required}")
    run_sec = doc.get("run", {})
    if ("n_steps" in run_sec) == ("t_end" in run_sec):
        raise ConfigError("exactly one of run.n_steps and run.t_end must be given")

    try:
        scheme = SchemeConfig(
            k=scheme_sec["k"],
            nu=scheme_sec["nu"],
            scheme=scheme_sec.get("scheme", stepping.SEMI_IMPLICIT),
            fp_tol=scheme_sec.get("fp_tol", 1e-12),
            fp_max_iter=scheme_sec.get("fp_max_iter", 100),
            deterministic=scheme_sec.get("deterministic", True),
        )
        consts = ConstantsSet(**doc.get("constants", {}))
        seed = run_sec.get("seed", 0)
        config = RunConfig(
            n=doc["grid"]["n"],
            scheme=scheme,
            initial=_build_initial(doc.get("initial", {}), seed),
            forcing=_build_forcing(doc.get("forcing", {}), seed),
            constants=consts,
            n_steps=run_sec.get("n_steps"),
            t_end=run_sec.get("t_end"),
            monitor=run_sec.get("monitor", "none"),
            snapshot_cadence=run_sec.get("snapshot_cadence", 0),
            out_dir=doc.get("output", {}).get("dir"),
            seed=seed,
            allow_over_horizon=run_sec.get("allow_over_horizon", False),
            label=run_sec.get("label", "run"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def _load_config(args) -> RunConfig:
    doc = parse_config_file(args.config, args.set or [])
    config = build_run_config(doc)
    if getattr(args, "out", None):
        config = replace(config, out_dir=args.out)
    if getattr(args, "deterministic", False):
        config = replace(config, scheme=replace(config.scheme, deterministic=True))
    return config


# -- subcommands --------------------------------------------------------------------


def _cmd_run(args) -> int:
    config = _load_config(args)
    try:
        report = harness.run(config)
    except InfeasibleConfig as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        report = getattr(exc, "report", None)
        where = f" at step {len(report.rows) + 1}" if report is not None else ""
        print(f"nonconvergence{where}: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    last = report.rows[-1] if report.rows else None
    print(
        f"{report.termination}: steps={len(report.rows)}"
        f" t={_fmt(last.t) if last else '0.0'}"
        f" l2_sq={_fmt(last.norms.l2_sq) if last else _fmt(report.bounds.u0_l2_sq)}"
        f" h1_sq={_fmt(last.norms.h1_sq) if last else _fmt(report.bounds.u0_h1_sq)}"
        + (f" out={config.out_dir}" if config.out_dir else "")
    )
    return _TERMINATION_EXIT[report.termination]


def _parse_vary(items: Sequence[str]) -> list[tuple[str, list[str]]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--vary {item!r} is not of the form section.key=v1,v2,...")
        dotted, values = item.split("=", 1)
        vals = [v for v in values.split(",") if v != ""]
        if not vals:
            raise ConfigError(f"--vary {item!r} lists no values")
        out.append((dotted, vals))
    return out


def _cmd_sweep(args) -> int:
    base_overrides = list(args.set or [])
    vary = _parse_vary(args.vary or [])
    combos = list(itertools.product(*[vals for _, vals in vary])) if vary else [()]
    configs = []
    for idx, combo in enumerate(combos):
        overrides = base_overrides + [
            f"{dotted}={val}" for (dotted, _), val in zip(vary, combo)
        ]
        doc = parse_config_file(args.config, overrides)
        config = build_run_config(doc)
        label = config.label if len(combos) == 1 else f"{config.label}_{idx:03d}"
        out_dir = args.out or config.out_dir
        config = replace(config, label=label, out_dir=out_dir)
        if args.deterministic:
            config = replace(config, scheme=replace(config.scheme, deterministic=True))
        configs.append(config)
    entries = harness.sweep(configs)
    print(harness.sweep_summary(entries))
    worst = EXIT_OK
    for e in entries:
        if e.error is not None and e.error.startswith("infeasible"):
            worst = max(worst, EXIT_INFEASIBLE)
        elif e.error is not None:
            worst = max(worst, EXIT_NONCONVERGENCE)
        elif e.report is not None:
            worst = max(worst, _TERMINATION_EXIT[e.report.termination])
    return worst


def _cmd_admissible_dt(args) -> int:
    config = _load_config(args)
    grid = spectral.Grid(config.n)
    u0 = spectral.make_field(grid, config.initial)
    forcing = spectral.ForcingEvaluator(config.forcing, grid)
    n_steps = config.resolved_steps()
    times = [(i + 1) * config.scheme.k for i in range(n_steps)]
    f_hm1, f_l2 = forcing.sup_norms_sq(times)
    u0n = spectral.norms(u0)
    bounds = analysis.compute_bounds(
        u0n.l2_sq, u0n.h1_sq, f_hm1, f_l2, config.scheme.nu, config.constants
    )
    variants = (
        ["semi_small", "semi_short", "full_small", "full_short"]
        if args.variant == "all"
        else [args.variant]
    )
    code = EXIT_OK
    for variant in variants:
        print(f"variant {variant}")
        try:
            table = analysis.dt_restrictions(bounds, config.constants, config.scheme.nu, variant)
        except InfeasibleConfig as exc:
            print(f"  infeasible: {exc}")
            code = EXIT_INFEASIBLE
            continue
        for con in table.constraints:
            print(f"  {con.tag:7s} k_max = {_fmt(con.k_max)}   [{con.formula}]")
        print(f"  k_max = {_fmt(table.k_max)}  (binding: {table.binding})")
    return code


def _cmd_cubic(args) -> int:
    consts = ConstantsSet(c0=args.c0, c4=args.c4)
    cub = analysis.cubic_analyze(args.x, 0.0, args.nu, args.k, consts)
    print(
        f"G(y) = {_fmt(cub.cubic_coeff)} y^3 - {_fmt(cub.linear_coeff)} y + {_fmt(cub.x)}"
    )
    print(f"y_plus = {_fmt(cub.y_plus)}  y_minus = {_fmt(cub.y_minus)}")
    print(f"root existence threshold on x: {_fmt(cub.x_threshold)}")
    if cub.degenerate:
        print("degenerate (x = 0): closed-form roots")
    if cub.has_positive_roots:
        print(f"y0 = {_fmt(cub.y0)}  y1 = {_fmt(cub.y1)}  y2 = {_fmt(cub.y2)}")
        print(f"a = {_fmt(cub.a)}  y_star = {_fmt(cub.y_star)}")
    else:
        print("no positive roots: x exceeds the existence threshold (dtf1 violated)")
    return EXIT_OK


def _cmd_gronwall(args) -> int:
    value = analysis.gronwall_envelope(args.b, args.x0, args.r, args.n)
    print(f"envelope = {_fmt(value)}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.t is not None:
        try:
            zsq = analysis.comparison_ode(args.z0, args.nu, args.c4, args.t)
        except analysis.BlowUpError as exc:
            print(f"blow-up: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"z_sq = {_fmt(zsq)}")
        return EXIT_OK
    if args.k is None or args.n is None:
        print("compare needs either --t or both --k and --n", file=sys.stderr)
        return EXIT_USAGE
    seq = analysis.comparison_seq(args.z0, args.nu, args.c4, args.k, args.n)
    # the Euler recursion grows at rate 2 c4/nu^3, so its continuous ceiling
    # is the closed form with the doubled coefficient
    print("n t zeta ode_ceiling ok")
    for j, zeta in enumerate(seq):
        t_j = j * args.k
        try:
            ceiling = math.sqrt(analysis.comparison_ode(args.z0, args.nu, 2.0 * args.c4, t_j))
            ok = int(zeta <= ceiling * (1.0 + 1e-12))
            print(f"{j} {_fmt(t_j)} {_fmt(zeta)} {_fmt(ceiling)} {ok}")
        except analysis.BlowUpError:
            print(f"{j} {_fmt(t_j)} {_fmt(zeta)} blown-up -")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to an INI run configuration")
    sub.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    sub.add_argument("--out", help="output directory (overrides output.dir)")
    sub.add_argument(
        "--deterministic",
        action="store_true",
        help="force the deterministic execution flag on",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ns3d", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="execute one monitored trajectory")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = subs.add_parser("sweep", help="run a family of configurations")
    _add_config_flags(p_sweep)
    p_sweep.add_argument(
        "--vary",
        action="append",
        metavar="SECTION.KEY=V1,V2,...",
        help="sweep one key over listed values (repeatable; Cartesian product)",
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_dt = subs.add_parser("admissible-dt", help="print per-constraint timestep limits")
    _add_config_flags(p_dt)
    p_dt.add_argument(
        "--variant",
        default="all",
        choices=["semi_small", "semi_short", "full_small", "full_short", "all"],
    )
    p_dt.set_defaults(func=_cmd_admissible_dt)

    p_cubic = subs.add_parser("cubic", help="roots and extrema of the step cubic")
    p_cubic.add_argument("--x", type=float, required=True)
    p_cubic.add_argument("--nu", type=float, required=True)
    p_cubic.add_argument("--k", type=float, required=True)
    p_cubic.add_argument("--c0", type=float, default=1.0)
    p_cubic.add_argument("--c4", type=float, default=1.0)
    p_cubic.set_defaults(func=_cmd_cubic)

    p_gr = subs.add_parser("gronwall", help="closed-form recursion envelope")
    p_gr.add_argument("--b", type=float, required=True)
    p_gr.add_argument("--x0", type=float, required=True)
    p_gr.add_argument("--r", type=float, required=True)
    p_gr.add_argument("--n", type=int, required=True)
    p_gr.set_defaults(func=_cmd_gronwall)

    p_cmp = subs.add_parser("compare", help="cubic-growth envelope vs Euler iterates")
    p_cmp.add_argument("--z0", type=float, required=True)
    p_cmp.add_argument("--nu", type=float, required=True)
    p_cmp.add_argument("--c4", type=float, default=1.0)
    p_cmp.add_argument("--t", type=float, default=None)
    p_cmp.add_argument("--k", type=float, default=None)
    p_cmp.add_argument("--n", type=int, default=None)
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (spectral.FieldFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
