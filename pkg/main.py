#!/usr/bin/env python3
"""Strategyproof intervention assignment simulator (CLI).

Pipeline:

config.json
  ↓
generate   (latent-factor world, RCT training panel)
  ↓
train.csv
  ↓
learn      (per-arm PCR, shifted-boundary policy)
  ↓
policy.json
  ↓
assign / best-response / check-sot
  ↓
evaluate / sweep   (strategic test units, ground-truth metrics)

Commands:
  python main.py generate --config ./config.json --out ./out
  python main.py learn --config ./config.json --input ./out/train.csv --out ./out
  python main.py assign --policy-file ./out/policy.json --input ./out/train.csv
  python main.py best-response --policy-file ./out/policy.json --input ./out/train.csv --delta 0.2
  python main.py check-sot --policy-file ./out/policy.json --input ./out/train.csv --delta 0.2 --mode continuum
  python main.py evaluate --config ./config.json --seed 3
  python main.py sweep --config ./config.json --ratios 0,0.2,0.5,1,2,5 --jobs 4
  python main.py demo impossible --alpha 0.01 --zeta 0.01 --delta 1

Environment:
- STRATEGIO_SEED is the seed when neither --seed nor the config sets one.

Exit codes: 0 success, 1 invalid input, 2 solver/runtime failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.codec import (
    betaset_to_dict,
    learned_betas_to_dict,
    metrics_to_dict,
    policy_from_dict,
    policy_to_dict,
    separation_report_to_dict,
)
from src.config_loader import experiment_config_to_dict, load_experiment_config, load_si_failure_config
from src.config_schema import POLICY_NAMES, ExperimentConfig, SIFailureConfig
from src.env import load_env, resolve_seed
from src.errors import SolverError
from src.logging_utils import configure_logging, write_json, write_run_manifest, write_text


logger = logging.getLogger("strategio")


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"File not found: {p}")
    return json.loads(p.read_text(encoding="utf-8-sig"))


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    seed = resolve_seed(getattr(args, "seed", None), cfg.seed)
    cfg = replace(cfg, seed=seed)
    if getattr(args, "delta_hat", None) is not None:
        if args.delta_hat < 0:
            raise ValueError(f"--delta-hat must be >= 0, got {args.delta_hat}")
        cfg = replace(cfg, delta_hat=args.delta_hat)
    if getattr(args, "policy", None) is not None:
        if args.policy == "shifted-two" and cfg.spec.k != 2:
            raise ValueError("--policy shifted-two needs spec.k = 2")
        cfg = replace(cfg, policy=args.policy)
    return cfg


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    write_text(path, buf.getvalue())


def _finish(cmd: str, out_dir: Path, config: object, seed: Optional[int], outputs: List[str]) -> None:
    write_run_manifest(out_dir, cmd, config, seed, outputs)
    print(f"Done ({cmd})")
    print(f"- Out: {out_dir}")
    print(f"- Wrote: {', '.join(outputs)}")


def _load_policy(path: str):
    return policy_from_dict(_read_json(path))


def _ids(data) -> Sequence:
    return data.unit_ids if data.unit_ids is not None else tuple(range(data.m))


def _cmd_generate(args: argparse.Namespace) -> None:
    from src.harness import simulate
    from src.panel_io import export_csv
    from src.rewards import betas_from_spec

    cfg = _experiment_config(args)
    world = simulate(cfg)
    out_dir = Path(args.out)
    export_csv(world.data, out_dir / "train.csv")
    truth = {
        "T0": world.spec.T0,
        "T": world.spec.T,
        "seed": world.seed,
        "betas": betaset_to_dict(betas_from_spec(world.spec, world.omega)),
    }
    write_json(out_dir / "truth.json", truth)
    _finish("generate", out_dir, experiment_config_to_dict(cfg), cfg.seed, ["train.csv", "truth.json"])


def _cmd_learn(args: argparse.Namespace) -> None:
    from src.harness import build_policy
    from src.panel_io import ingest_csv
    from src.rewards import RewardWeights

    cfg = _experiment_config(args)
    data = ingest_csv(args.input, cfg.spec.T0, cfg.spec.k)
    omega = RewardWeights(np.asarray(cfg.effective_omega))
    policy, _, learned = build_policy(cfg, data, omega)
    out_dir = Path(args.out)
    write_json(out_dir / "policy.json", policy_to_dict(policy))
    outputs = ["policy.json"]
    if learned is not None:
        write_json(out_dir / "learned_betas.json", learned_betas_to_dict(learned))
        outputs.append("learned_betas.json")
    _finish("learn", out_dir, experiment_config_to_dict(cfg), cfg.seed, outputs)


def _cmd_assign(args: argparse.Namespace) -> None:
    from src.panel_io import ingest_csv

    policy = _load_policy(args.policy_file)
    data = ingest_csv(args.input, policy.T0)
    frame = pd.DataFrame(
        {"unit_id": list(_ids(data)), "intervention": [policy.assign(y) for y in data.y_pre]},
        columns=["unit_id", "intervention"],
    )
    out_dir = Path(args.out)
    _write_csv(out_dir / "assignments.csv", frame)
    _finish("assign", out_dir, {"policy_file": args.policy_file, "input": args.input}, None, ["assignments.csv"])


def _cmd_best_response(args: argparse.Namespace) -> None:
    from src.panel_io import ingest_csv
    from src.policies import best_response

    if args.delta <= 0:
        raise ValueError(f"--delta must be > 0, got {args.delta}")
    policy = _load_policy(args.policy_file)
    data = ingest_csv(args.input, policy.T0)
    rows = []
    for uid, y in zip(_ids(data), data.y_pre):
        outcome = best_response(policy, y, args.delta)
        rows.append(
            {
                "unit_id": uid,
                "truthful": policy.assign(y),
                "achieved": outcome.achieved_intervention,
                "effort": outcome.effort,
                "moved": outcome.moved,
                "approximate": outcome.approximate,
            }
        )
    out_dir = Path(args.out)
    _write_csv(out_dir / "best_response.csv", pd.DataFrame(rows))
    _finish(
        "best-response",
        out_dir,
        {"policy_file": args.policy_file, "input": args.input, "delta": args.delta},
        None,
        ["best_response.csv"],
    )


def _cmd_check_sot(args: argparse.Namespace) -> None:
    from src.geometry import separation_of_types
    from src.panel_io import ingest_csv
    from src.rewards import unit_type

    if args.delta <= 0:
        raise ValueError(f"--delta must be > 0, got {args.delta}")
    policy = _load_policy(args.policy_file)
    betas = getattr(policy, "betas", None)
    if betas is None:
        raise ValueError(f"Policy variant {policy.name} carries no betas to type units with")
    data = ingest_csv(args.input, policy.T0)
    units = [(y, unit_type(y, betas).intervention) for y in data.y_pre]
    report = separation_of_types(units, args.delta, mode=args.mode, betas=betas, seed=resolve_seed(args.seed, None))
    out_dir = Path(args.out)
    write_json(out_dir / "sot.json", separation_report_to_dict(report))
    _finish(
        "check-sot",
        out_dir,
        {"policy_file": args.policy_file, "input": args.input, "delta": args.delta, "mode": args.mode},
        None,
        ["sot.json"],
    )
    print(f"- Verdict: {'SATISFIED' if report.satisfied else 'VIOLATED'}")


def _cmd_evaluate(args: argparse.Namespace) -> None:
    from src.harness import run_experiment

    cfg = _experiment_config(args)
    metrics = run_experiment(cfg)
    out_dir = Path(args.out)
    write_json(out_dir / "metrics.json", metrics_to_dict(metrics))
    _write_csv(out_dir / "units.csv", pd.DataFrame([r.__dict__ for r in metrics.records]))
    _finish("evaluate", out_dir, experiment_config_to_dict(cfg), cfg.seed, ["metrics.json", "units.csv"])


def _parse_ratios(text: str) -> List[float]:
    try:
        ratios = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"--ratios must be comma-separated numbers, got {text!r}") from None
    if not ratios:
        raise ValueError("--ratios is empty")
    return ratios


def _cmd_sweep(args: argparse.Namespace) -> None:
    from src.harness import delta_sweep

    cfg = _experiment_config(args)
    if args.jobs is not None and args.jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {args.jobs}")
    table = delta_sweep(cfg, _parse_ratios(args.ratios), jobs=args.jobs)
    out_dir = Path(args.out)
    _write_csv(out_dir / "sweep.csv", table)
    config = experiment_config_to_dict(cfg) | {"ratios": args.ratios}
    _finish("sweep", out_dir, config, cfg.seed, ["sweep.csv"])


def _cmd_demo(args: argparse.Namespace) -> None:
    from src import demos

    if args.demo == "impossible":
        report = demos.demo_impossible(args.alpha, args.zeta, args.delta)
        config = {"alpha": args.alpha, "zeta": args.zeta, "delta": args.delta}
        seed = None
    elif args.demo == "si-failure":
        cfg = load_si_failure_config(args.config) if args.config else SIFailureConfig()
        cfg = replace(cfg, seed=resolve_seed(args.seed, cfg.seed))
        report = demos.demo_si_failure(cfg)
        config = cfg.__dict__
        seed = cfg.seed
    else:
        n_values = [int(x) for x in args.n_values.split(",") if x.strip()]
        report = demos.demo_gap_necessity(args.theta1, args.theta2, args.c, args.alpha_small, args.delta, n_values)
        config = {k: getattr(args, k) for k in ("theta1", "theta2", "c", "alpha_small", "delta", "n_values")}
        seed = None

    out_dir = Path(args.out)
    name = f"demo_{args.demo.replace('-', '_')}.json"
    write_json(out_dir / name, report)
    _finish(f"demo {args.demo}", out_dir, config, seed, [name])
    if "verdict" in report:
        print(f"- Verdict: {report['verdict']}")


def build_parser() -> argparse.ArgumentParser:
    p = _ArgumentParser(prog="strategio", description="Strategyproof intervention assignment simulator")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logs")
    sub = p.add_subparsers(dest="cmd", required=True)

    def _common(sp: argparse.ArgumentParser, config_required: bool = False) -> None:
        sp.add_argument("--config", required=config_required, help="Path to experiment config JSON")
        sp.add_argument("--seed", type=int, default=None, help="Seed override (else config seed, then STRATEGIO_SEED)")
        sp.add_argument("--out", default="./out", help="Output folder")

    def _overrides(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--delta-hat", type=float, default=None, help="Policy's belief of the effort budget")
        sp.add_argument("--policy", choices=POLICY_NAMES, default=None, help="Policy variant to learn")

    g = sub.add_parser("generate", help="Simulate a world and write the observed RCT training panel")
    _common(g)
    g.set_defaults(func=_cmd_generate)

    le = sub.add_parser("learn", help="Learn a policy from a panel CSV")
    _common(le)
    _overrides(le)
    le.add_argument("--input", required=True, help="Long-format panel CSV")
    le.set_defaults(func=_cmd_learn)

    a = sub.add_parser("assign", help="Assign interventions to the units of a panel CSV")
    a.add_argument("--policy-file", required=True, help="policy.json written by learn")
    a.add_argument("--input", required=True, help="Long-format panel CSV")
    a.add_argument("--out", default="./out", help="Output folder")
    a.set_defaults(func=_cmd_assign)

    br = sub.add_parser("best-response", help="Strategic best responses of the units of a panel CSV")
    br.add_argument("--policy-file", required=True, help="policy.json written by learn")
    br.add_argument("--input", required=True, help="Long-format panel CSV")
    br.add_argument("--delta", type=float, required=True, help="Units' effort budget")
    br.add_argument("--out", default="./out", help="Output folder")
    br.set_defaults(func=_cmd_best_response)

    c = sub.add_parser("check-sot", help="Check separation of types on a panel CSV")
    c.add_argument("--policy-file", required=True, help="policy.json whose betas define unit types")
    c.add_argument("--input", required=True, help="Long-format panel CSV")
    c.add_argument("--delta", type=float, required=True, help="Units' effort budget")
    c.add_argument("--mode", choices=("finite", "continuum"), default="finite")
    c.add_argument("--seed", type=int, default=None, help="Seed of the witness search")
    c.add_argument("--out", default="./out", help="Output folder")
    c.set_defaults(func=_cmd_check_sot)

    e = sub.add_parser("evaluate", help="Run one experiment and write metrics")
    _common(e)
    _overrides(e)
    e.set_defaults(func=_cmd_evaluate)

    sw = sub.add_parser("sweep", help="delta_hat / delta_true misspecification sweep")
    _common(sw)
    _overrides(sw)
    sw.add_argument("--ratios", default="0,0.2,0.5,1,2,5", help="Comma-separated delta_hat / delta_true ratios")
    sw.add_argument("--jobs", type=int, default=None, help="Worker processes (default: all cores)")
    sw.set_defaults(func=_cmd_sweep)

    d = sub.add_parser("demo", help="Constructed demonstrations")
    dsub = d.add_subparsers(dest="demo", required=True)

    di = dsub.add_parser("impossible", help="Three interventions without separation of types")
    di.add_argument("--alpha", type=float, default=0.01)
    di.add_argument("--zeta", type=float, default=0.01)
    di.add_argument("--delta", type=float, default=1.0)
    di.add_argument("--out", default="./out", help="Output folder")
    di.set_defaults(func=_cmd_demo)

    ds = dsub.add_parser("si-failure", help="Synthetic interventions gamed by strategic units")
    ds.add_argument("--config", default=None, help="Optional SI-failure config JSON")
    ds.add_argument("--seed", type=int, default=None)
    ds.add_argument("--out", default="./out", help="Output folder")
    ds.set_defaults(func=_cmd_demo)

    dg = dsub.add_parser("gap-necessity", help="Discontinuous best response without a reward gap")
    dg.add_argument("--theta1", type=float, default=0.0)
    dg.add_argument("--theta2", type=float, default=1.5)
    dg.add_argument("--c", type=float, default=1.0)
    dg.add_argument("--alpha-small", type=float, default=0.01)
    dg.add_argument("--delta", type=float, default=1.0)
    dg.add_argument("--n-values", default="10,50,99,101,200")
    dg.add_argument("--out", default="./out", help="Output folder")
    dg.set_defaults(func=_cmd_demo)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_env()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    configure_logging(args.verbose)
    try:
        args.func(args)
    except SolverError as e:
        logger.debug("solver failure", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as e:
        logger.debug("runtime failure", exc_info=True)
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    try:
        raise SystemExit(main())
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        raise SystemExit(130)
