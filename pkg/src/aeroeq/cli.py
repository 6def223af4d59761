"""Command-line front end.

Every subcommand reads a TOML config (``--config``), accepts dotted
``--set key=value`` overrides and writes its artifacts to ``--out`` when
given. Angles on the command line and in output files are in degrees.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from aeroeq import __version__
from aeroeq.aero import ModelError, check_bisymmetry, check_passivity, check_symmetry
from aeroeq.config import Config, ConfigError
from aeroeq.control import SingularityError
from aeroeq.equilibrium import (
    BadReferenceError,
    ReferenceState,
    bifurcation_sweep,
    check_theorem2_condition,
    integrate_bad_reference,
    solve_equilibria,
    track_branch,
)
from aeroeq.equivalency import SingularEquilibriumError, check_global_condition, check_special_condition
from aeroeq.sim import IntegrationError, metrics, reference_state, run_closed_loop

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DATA_DIR = Path(__file__).resolve().parent / "data"


def resolve_config_path(name):
    """An existing path, or the stem of a bundled config file."""
    path = Path(name)
    if path.is_file():
        return path
    bundled = DATA_DIR / f"{name}.toml"
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {name}")


def bundled_configs():
    return sorted(p.stem for p in DATA_DIR.glob("*.toml"))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_text(obj):
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


class _Output:
    def __init__(self, out_dir, stdout):
        self.dir = Path(out_dir) if out_dir else None
        self.stdout = stdout
        if self.dir is not None:
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"--out: cannot create {self.dir}: {exc}") from None

    def file(self, name, text):
        if self.dir is not None:
            (self.dir / name).write_text(text)

    def print(self, text):
        self.stdout.write(text)


def _load(args):
    return Config.load(resolve_config_path(args.config), args.set)


def cmd_check_model(args, out):
    cfg = _load(args)
    model, delta = cfg.model, cfg.delta
    sym, bisym, passive = check_symmetry(model), check_bisymmetry(model), check_passivity(model)
    glob, special = check_global_condition(model, delta), check_special_condition(model)
    stall = check_theorem2_condition(model)
    if not stall.holds_precondition:
        stall_status = "precondition_failed"
    elif stall.holds:
        stall_status = "holds"
    else:
        stall_status = "no_certificate"
    report = {
        "model": model.name,
        "delta_deg": math.degrees(delta),
        "symmetric": sym.is_even_drag and sym.is_odd_lift,
        "bisymmetric": bisym.is_pi_periodic,
        "passive": passive.is_passive,
        "global_condition": glob.holds,
        "special_condition": special.holds,
        "theorem2": stall_status,
        "details": {
            "symmetry": sym.to_dict(),
            "bisymmetry": bisym.to_dict(),
            "passivity": passive.to_dict(),
            "global_condition": glob.to_dict(),
            "special_condition": special.to_dict(),
            "stall_condition": {
                "cd_at_zero": stall.cd_zero,
                "cd_at_pi": stall.cd_pi,
                "alpha_s_deg": None if stall.alpha_s is None else math.degrees(stall.alpha_s),
            },
        },
    }
    text = _json_text(report)
    out.file("check_model.json", text)
    out.print(text)


EQ_HEADER = ("theta_e_deg", "alpha_e_deg", "thrust_e", "thrust_over_mg", "thrust_nonneg", "residual")


def _reference_from_args(args, cfg):
    if args.vx is None and args.vy is None and args.t is not None:
        return reference_state(cfg.profile, cfg.wind, args.t)
    w, wd = cfg.wind(args.t or 0.0)
    return ReferenceState(
        t=args.t or 0.0, xdot_r=[args.vx or 0.0, args.vy or 0.0], xddot_r=[args.ax, args.ay], xdot_w=w, xddot_w=wd
    )


def cmd_equilibria(args, out):
    cfg = _load(args)
    body, model = cfg.body, cfg.model
    ref = _reference_from_args(args, cfg)
    eq = solve_equilibria(model, body, ref)
    rows = [
        (
            math.degrees(s.theta_e),
            None if s.alpha_e is None else math.degrees(s.alpha_e),
            s.thrust_e,
            s.thrust_e / body.weight,
            s.thrust_nonneg,
            s.residual,
        )
        for s in eq
    ]
    csv_text = _csv_text(EQ_HEADER, rows)
    out.file("equilibria.csv", csv_text)
    summary = {"count": len(eq), "degenerate_all_orientations": eq.degenerate_all_orientations}
    if args.format == "json":
        out.print(_json_text({**summary, "solutions": [dict(zip(EQ_HEADER, r)) for r in rows]}))
    else:
        out.print(f"# count={len(eq)} degenerate={_fmt(eq.degenerate_all_orientations)}\n" + csv_text)


def cmd_bifurcation(args, out):
    cfg = _load(args)
    if not args.alpha_step > 0 or not args.alpha_max > args.alpha_min:
        raise ConfigError("--alpha-step must be positive and --alpha-max above --alpha-min")
    n = int(math.floor((args.alpha_max - args.alpha_min) / args.alpha_step + 1e-9)) + 1
    grid_deg = args.alpha_min + args.alpha_step * np.arange(n)
    curve = bifurcation_sweep(cfg.model, np.radians(grid_deg))
    rows = [(math.degrees(a), v) for a, v in zip(curve.alpha_e, curve.a_nu)]
    folds = [{"alpha_e_deg": math.degrees(f.alpha_e), "a_nu": f.a_nu, "kind": f.kind} for f in curve.folds]
    csv_text = _csv_text(("alpha_e_deg", "a_nu"), rows)
    out.file("bifurcation.csv", csv_text)
    out.file("folds.json", _json_text({"folds": folds}))
    if args.format == "json":
        samples = [{"alpha_e_deg": a, "a_nu": v} for a, v in rows]
        out.print(_json_text({"folds": folds, "samples": samples}))
    else:
        lines = [f"# fold alpha_e_deg={_fmt(f['alpha_e_deg'])} a_nu={_fmt(f['a_nu'])} kind={f['kind']}\n" for f in folds]
        out.print("".join(lines) + csv_text)


TRANSITION_HEADER = ("t", "theta_e_deg", "alpha_e_deg", "thrust_over_mg", "jump_flag")


def cmd_transition(args, out):
    cfg = _load(args)
    body, model, profile, wind = cfg.body, cfg.model, cfg.profile, cfg.wind
    if not args.t_step > 0 or not args.t_end >= args.t_start:
        raise ConfigError("--t-step must be positive and --t-end not below --t-start")
    n = int(math.floor((args.t_end - args.t_start) / args.t_step + 1e-9)) + 1
    grid = args.t_start + args.t_step * np.arange(n)
    track = track_branch(model, body, lambda t: reference_state(profile, wind, t), grid, math.radians(args.jump_deg))
    rows = []
    for s in track.samples:
        sol = s.solution
        if sol is None:
            rows.append((s.t, None, None, None, False))
        else:
            alpha = None if sol.alpha_e is None else math.degrees(sol.alpha_e)
            rows.append((s.t, math.degrees(sol.theta_e), alpha, sol.thrust_e / body.weight, s.jump))
    events = [
        {
            "kind": e.kind,
            "t": e.t,
            "theta_before_deg": None if e.theta_before is None else math.degrees(e.theta_before),
            "theta_after_deg": None if e.theta_after is None else math.degrees(e.theta_after),
            "alpha_before_deg": None if e.alpha_before is None else math.degrees(e.alpha_before),
            "alpha_after_deg": None if e.alpha_after is None else math.degrees(e.alpha_after),
        }
        for e in track.events
    ]
    csv_text = _csv_text(TRANSITION_HEADER, rows)
    out.file("transition.csv", csv_text)
    out.file("events.json", _json_text({"events": events}))
    if args.format == "csv":
        out.print(csv_text)
    else:
        out.print(_json_text({"jumps": len(track.jumps), "gaps": len(track.gaps), "events": events}))


def cmd_simulate(args, out):
    cfg = _load(args)
    sim_cfg = cfg.sim_config(dt=args.dt)
    log = run_closed_loop(sim_cfg)
    m = metrics(log)
    buf = io.StringIO()
    log.to_csv(buf)
    out.file("simulation.csv", buf.getvalue())
    out.file("metrics.json", _json_text(m.to_dict()))
    if args.format == "csv" and out.dir is None:
        out.print(buf.getvalue())
    else:
        out.print(_json_text(m.to_dict()))


def cmd_bad_velocity(args, out):
    cfg = _load(args)
    body, model, wind = cfg.body, cfg.model, cfg.wind
    traj = integrate_bad_reference(model, body, (args.v0x, args.v0y), wind=wind, horizon=args.horizon, dt=args.dt)
    rows = np.column_stack([traj.t, traj.xdot_b, traj.xddot_b, traj.Fp_norm])
    csv_text = _csv_text(("t", "v1", "v2", "a1", "a2", "Fp_norm"), rows.tolist())
    summary = {
        "max_Fp_norm": float(np.max(traj.Fp_norm)),
        "final_velocity": traj.xdot_b[-1],
        "samples": len(traj.t),
    }
    out.file("bad_velocity.csv", csv_text)
    out.file("bad_velocity.json", _json_text(summary))
    if args.format == "csv":
        out.print(csv_text)
    else:
        out.print(_json_text(summary))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        required=True,
        help="TOML config path, or the name of a bundled config (" + ", ".join(bundled_configs()) + ")",
    )
    common.add_argument("--out", help="directory for CSV/JSON artifacts")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config value by dotted path, e.g. body.m=12 (repeatable)",
    )

    def fmt(p, default):
        p.add_argument("--format", choices=("csv", "json"), default=default, help=f"stdout format (default {default})")

    parser = argparse.ArgumentParser(prog="aeroeq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-model", parents=[common], help="symmetry, passivity and equivalency checks")
    fmt(p, "json")
    p.set_defaults(func=cmd_check_model)

    p = sub.add_parser("equilibria", parents=[common], help="equilibrium orientations at one reference state")
    fmt(p, "csv")
    p.add_argument("--vx", type=float, help="reference velocity, gravity axis [m/s]")
    p.add_argument("--vy", type=float, help="reference velocity, horizontal axis [m/s]")
    p.add_argument("--ax", type=float, default=0.0, help="reference acceleration, gravity axis [m/s^2]")
    p.add_argument("--ay", type=float, default=0.0, help="reference acceleration, horizontal axis [m/s^2]")
    p.add_argument("--t", type=float, help="time; without --vx/--vy the config profile is evaluated here")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("bifurcation", parents=[common], help="a_nu versus alpha_e for steady horizontal flight")
    fmt(p, "csv")
    p.add_argument("--alpha-min", type=float, default=0.5, help="degrees")
    p.add_argument("--alpha-max", type=float, default=90.0, help="degrees")
    p.add_argument("--alpha-step", type=float, default=0.05, help="degrees")
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("transition", parents=[common], help="track an equilibrium branch along the profile")
    fmt(p, "json")
    p.add_argument("--t-start", type=float, default=0.0, help="first profile time [s]")
    p.add_argument("--t-end", type=float, default=10.0, help="last profile time [s]")
    p.add_argument("--t-step", type=float, default=0.01, help="continuation time step [s]")
    p.add_argument("--jump-deg", type=float, default=5.0, help="continuation step counted as a jump")
    p.set_defaults(func=cmd_transition)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    fmt(p, "json")
    p.add_argument("--dt", type=float, help="override the integration step [s]")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bad-velocity", parents=[common], help="reference at which every orientation is an equilibrium")
    fmt(p, "json")
    p.add_argument("--v0x", type=float, default=0.0, help="initial velocity, gravity axis [m/s]")
    p.add_argument("--v0y", type=float, default=0.0, help="initial velocity, horizontal axis [m/s]")
    p.add_argument("--horizon", type=float, default=10.0, help="integration horizon [s]")
    p.add_argument("--dt", type=float, default=1e-3, help="integration step [s]")
    p.set_defaults(func=cmd_bad_velocity)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        out = _Output(args.out, stdout)
        args.func(args, out)
    except (ConfigError, ModelError, BadReferenceError, OSError) as exc:
        stderr.write(f"aeroeq {args.command}: error: {exc}\n")
        return EXIT_CONFIG
    except (IntegrationError, SingularEquilibriumError, SingularityError, FloatingPointError) as exc:
        stderr.write(f"aeroeq {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    return EXIT_OK


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
