"""Command-line entry point.

Exit codes: 0 success, 1 identity checks failed, 2 configuration or input
error, 3 blow-up (reports are still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import diagnostics, harness
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .dynamics import BlowUpError, simulate
from .fields import norm_report, random_divfree_field, taylor_green
from .spectral import SpectralGrid

__all__ = ["main", "build_parser", "initial_field"]

log = logging.getLogger("secondgrade")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


def initial_field(cfg):
    """Velocity described by ``cfg.initial`` on the configured grid."""
    spec = cfg.initial
    grid = SpectralGrid(cfg.dim, cfg.n)
    if spec["type"] == "taylor_green":
        return taylor_green(grid, spec["amplitude"])
    if spec["type"] == "random":
        return random_divfree_field(grid, spec["seed"], spec["slope"], spec["k_max"], spec["amplitude"])
    try:
        ck = load_checkpoint(spec["path"])
    except OSError as err:
        raise ConfigError(f"initial.path: {err.strerror}: {spec['path']}") from err
    except CheckpointError as err:
        raise ConfigError(f"initial.path: {err}") from err
    if (ck.grid.dim, ck.grid.n) != (cfg.dim, cfg.n):
        raise ConfigError(f"initial.path: checkpoint grid dim={ck.grid.dim} n={ck.grid.n} "
                          f"does not match grid dim={cfg.dim} n={cfg.n}")
    return ck.velocity


def _wants(cfg, fmt):
    return fmt in cfg.formats


def _cmd_simulate(cfg, out):
    u0 = initial_field(cfg)
    code = EXIT_OK
    try:
        traj = simulate(u0, cfg.solver, cfg.monitors)
    except BlowUpError as err:
        traj = err.trajectory
        code = EXIT_BLOWUP
    if _wants(cfg, "csv"):
        diagnostics.write_records_csv(os.path.join(out, "trajectory.csv"), traj.records)
    if _wants(cfg, "jsonl"):
        diagnostics.write_records_jsonl(os.path.join(out, "diagnostics.jsonl"), traj.records)
    last = traj.final
    save_checkpoint(os.path.join(out, "final.g2ck"), last.u, cfg.solver.alpha, cfg.solver.nu, last.time)
    if _wants(cfg, "json"):
        harness.write_json(os.path.join(out, "report.json"),
                           {"config": cfg.as_dict(), "summary": harness.trajectory_summary(traj)})
    return code


def _cmd_sweep(cfg, out):
    u0 = initial_field(cfg)
    rep = harness.run_alpha_sweep(u0, cfg.sweep_alphas, cfg.solver, cfg.monitors, workers=cfg.workers)
    if _wants(cfg, "json"):
        harness.write_json(os.path.join(out, "sweep.json"), {"config": cfg.as_dict(), "report": rep.as_dict()})
    if _wants(cfg, "csv"):
        orders = rep.empirical_orders + [None]
        rows = [(a, e, o) for a, e, o in zip(rep.alphas, rep.errors, orders)]
        diagnostics.write_table_csv(os.path.join(out, "sweep.csv"), ("alpha", "error", "order_to_next"), rows)
    # wall times vary run to run; kept out of the deterministic report
    harness.write_json(os.path.join(out, "timings.json"), rep.wall_times)
    blown = [s["blowup"] for s in rep.summaries + [rep.reference_summary] if s["blowup"]]
    return EXIT_BLOWUP if blown else EXIT_OK


def _cmd_probe(cfg, out):
    u0 = initial_field(cfg)
    s = cfg.solver
    rep = harness.threshold_probe(u0, cfg.probe_amplitudes, s.alpha, s.nu, s, cfg.monitors)
    if _wants(cfg, "json"):
        harness.write_json(os.path.join(out, "probe.json"), {"config": cfg.as_dict(), "report": rep.as_dict()})
    if _wants(cfg, "csv"):
        rows = zip(rep.amplitudes, rep.outcomes, rep.predicted_T, rep.horizons, rep.horizon_ok)
        diagnostics.write_table_csv(os.path.join(out, "probe.csv"),
                                    ("amplitude", "outcome", "predicted_T", "horizon", "horizon_ok"),
                                    [(a, o, T, h, ok) for a, o, T, h, ok in rows])
    return EXIT_OK


def _cmd_validate(cfg, out):
    if cfg.dim != 2:
        raise ConfigError("grid.dim: validate runs the 2D Taylor-Green vortex; set grid.dim to 2")
    s = cfg.solver
    amp = cfg.initial.get("amplitude", 1.0) if cfg.initial["type"] == "taylor_green" else 1.0
    runs = []
    for i in range(cfg.validate_levels):
        dt = s.dt / 2 ** i
        r = harness.validate_taylor_green(s.alpha, s.nu, cfg.n, dt, s.t_end, s.integrator, amp,
                                          sample_every=s.sample_every * 2 ** i)
        runs.append(r)
    errors = [r["max_rel_error"] for r in runs]
    dts = [r["dt"] for r in runs]
    payload = {
        "config": cfg.as_dict(),
        "levels": [{"dt": r["dt"], "max_rel_error": r["max_rel_error"], "summary": r["summary"]} for r in runs],
        "orders": harness.empirical_orders(errors, dts),
    }
    if _wants(cfg, "json"):
        harness.write_json(os.path.join(out, "validate.json"), payload)
    if _wants(cfg, "csv"):
        diagnostics.write_table_csv(os.path.join(out, "validate.csv"), ("time", "rel_error"),
                                    zip(runs[0]["times"], runs[0]["errors"]))
    if _wants(cfg, "jsonl"):
        diagnostics.write_records_jsonl(os.path.join(out, "diagnostics.jsonl"), runs[0]["trajectory"].records)
    return EXIT_OK


def _cmd_verify(cfg, out):
    u0 = initial_field(cfg)
    rep = harness.verify_identities(u0, cfg.solver, cfg.monitors)
    harness.write_json(os.path.join(out, "identities.json"), {"config": cfg.as_dict(), "report": rep})
    for name, ok in rep["checks"].items():
        log.info("%-28s %s", name, "ok" if ok else "FAILED")
    if rep["run"]["blowup"]:
        return EXIT_BLOWUP
    return EXIT_OK if rep["passed"] else EXIT_CHECKS


def _cmd_inspect(path):
    ck = load_checkpoint(path)
    norms = norm_report(ck.velocity)
    info = {
        "path": path, "version": ck.version, "dim": ck.grid.dim, "n": ck.grid.n,
        "alpha": ck.alpha, "nu": ck.nu, "time": ck.time,
        "divergence_defect": ck.velocity.divergence_defect(),
        "hermitian_defect": ck.velocity.hermitian_defect(),
        "norms": norms.as_dict(),
    }
    print(json.dumps(diagnostics.jsonable(info), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "probe": _cmd_probe,
    "validate": _cmd_validate,
    "verify-identities": _cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="secondgrade",
                                     description="Pseudo-spectral second-grade fluid runs on the periodic torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one run; write trajectory CSV, diagnostics JSON-lines and a final checkpoint"),
        ("sweep", "alpha sweep against the alpha = 0 run"),
        ("probe", "amplitude probe of the guaranteed existence time"),
        ("validate", "2D Taylor-Green analytic check with dt halving"),
        ("verify-identities", "operator exactness, cancellations and energy balances"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--verbose", action="store_true")
    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint header and norms")
    p.add_argument("file")
    p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect-checkpoint":
            return _cmd_inspect(args.file)
        cfg = load_config(args.config)
        out = args.out or cfg.out_dir
        if args.out:
            resolved = cfg.as_dict()
            resolved["output"]["dir"] = out
            cfg = replace(cfg, out_dir=out, resolved=resolved)
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
