"""Batch command line: ``flowtop {simulate,moment,lemma1,theorem,controls}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from .errors import ConfigInvalid, NoValidTime
from .experiment import (build_experiment, load_config, run_controls, run_lemma1_certificate, run_moment,
                         run_theorem_experiment, simulate_records, write_trials_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_VALID_TIME = 3


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _experiment(args):
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if updates:
        try:
            cfg = cfg.model_validate({**cfg.model_dump(), **updates})
        except ValidationError as exc:
            err = exc.errors()[0]
            raise ConfigInvalid(f"command line: {'.'.join(map(str, err['loc']))}: {err['msg']}") from exc
    return build_experiment(cfg)


def _out_dir(args, exp=None) -> Path:
    out = Path(args.out) if args.out else Path(exp.config.output_dir if exp else "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    exp = _experiment(args)
    rows = simulate_records(exp, exp.config.trials, exp.config.seed, args.workers)
    out = _out_dir(args, exp)
    if args.format == "json":
        (out / "trajectories.json").write_text(_dump(rows))
        return EXIT_OK
    D = exp.manifold.ambient_dim
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_index", "time", "point"] + [f"x{k}" for k in range(D)])
        for r in rows:
            w.writerow([r["trial_index"], repr(r["time"]), r["point"]] + [repr(c) for c in r["coords"]])
    return EXIT_OK


def cmd_moment(args):
    exp = _experiment(args)
    rep = run_moment(exp, workers=args.workers)
    out = _out_dir(args, exp)
    (out / "report.json").write_text(rep.to_json() + "\n")
    rep.write_csv(out / "integrand.csv")
    return EXIT_OK


def cmd_lemma1(args):
    exp = _experiment(args)
    rows = [r.to_dict() for r in run_lemma1_certificate(exp, workers=args.workers)]
    out = _out_dir(args, exp)
    if args.format == "json":
        (out / "lemma1.json").write_text(_dump(rows))
    else:
        with open(out / "lemma1.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "delta", "estimate", "ci_high"])
            for r in rows:
                est = r["estimate"]
                w.writerow([repr(r["epsilon"]), "" if r["delta"] is None else repr(r["delta"]),
                            "" if est is None else repr(est["estimate"]),
                            "" if est is None else repr(est["ci_high"])])
    return EXIT_OK


def cmd_theorem(args):
    exp = _experiment(args)
    rep = run_theorem_experiment(exp, force_time=args.force_time, workers=args.workers)
    out = _out_dir(args, exp)
    (out / "report.json").write_text(rep.to_json() + "\n")
    if args.format == "json":
        (out / "trials.json").write_text(_dump(rep.records))
    else:
        write_trials_csv(out / "trials.csv", rep.records)
    print(f"t_j={rep.t_j} P(Z)={rep.p_Z.estimate:.4f} mu_hat={rep.mu_hat:.4f} bound_holds={rep.bound_holds}")
    return EXIT_OK


def cmd_controls(args):
    trials, seed = args.trials or 300, args.seed or 0
    if args.config:
        cfg = load_config(args.config)
        trials, seed = args.trials or cfg.trials, cfg.seed if args.seed is None else args.seed
    res = run_controls(trials, seed, args.workers)
    out = _out_dir(args)
    (out / "controls.json").write_text(_dump(res))
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "raw flow trajectories of the tracked point and sphere-map vertices"),
    "moment": (cmd_moment, "moment-stability integrand and truncated integral"),
    "lemma1": (cmd_lemma1, "exit-time certificate table over the epsilon grid"),
    "theorem": (cmd_theorem, "full pipeline: measure, time selection, event Z"),
    "controls": (cmd_controls, "torus and sphere negative-control suite"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowtop", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=name != "controls", help="experiment config (JSON)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--trials", type=int, default=None)
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--workers", type=int, default=None, help="thread count (default: FLOWTOP_THREADS)")
        if name == "theorem":
            s.add_argument("--force-time", type=float, default=None, help="skip time selection (debugging)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command][0](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoValidTime as exc:
        print(f"no valid time: {exc}", file=sys.stderr)
        return EXIT_NO_VALID_TIME


if __name__ == "__main__":
    sys.exit(main())
