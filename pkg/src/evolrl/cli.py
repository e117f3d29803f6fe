"""Command line: ``score`` rollouts, ``simulate`` training runs, ``report`` on two series."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .charts import render_series_svg
from .consensus import majority_vote
from .embeddings import EmbeddingError, EmbeddingTable, lexical_embed, load_embedding_table
from .novelty import DEFAULT_ALPHA, score_novelty
from .optimizer import group_advantages
from .reward import Scheme, evol_reward, majority_only_reward
from .rollout import RolloutFormatError, parse_rollout_jsonl
from .simulator import EnvConfig, ScenarioError, is_collapsed, load_scenario, majority_trap, run_training

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EMBEDDING = 3

METRIC_COLUMNS = ("step", "entropy_nats", "pass1", "pass_n", "maj_n", "mean_length", "mean_pairwise_sim")
REPORT_METRICS = ("entropy_nats", "pass1", "pass_n", "maj_n")
SCHEME_SUFFIX = {Scheme.EVOL_RL: "evolrl", Scheme.MAJORITY_ONLY: "majority"}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


# --- score -----------------------------------------------------------------

def _resolve_embeddings(spec: str, groups, ids: list[str]) -> EmbeddingTable:
    rollouts = {r.id: r for g in groups for r in g}
    if spec == "inline":
        missing = [i for i in ids if rollouts[i].embedding is None]
        if missing:
            raise EmbeddingError(f"rollouts without an embedding: {', '.join(missing)}")
        return EmbeddingTable.from_mapping({i: rollouts[i].embedding for i in ids})
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        try:
            with open(path, encoding="utf-8") as fh:
                return load_embedding_table(fh, ids)
        except OSError as exc:
            raise EmbeddingError(f"cannot read embedding file {path!r}: {exc}") from exc
    if spec.startswith("lexical:"):
        try:
            _, dim, seed = spec.split(":")
            dim, seed = int(dim), int(seed)
        except ValueError:
            raise EmbeddingError(f"bad lexical embedder spec {spec!r}; expected lexical:<dim>:<seed>") from None
        return EmbeddingTable(dim, {i: lexical_embed(rollouts[i].reasoning, dim, seed) for i in ids})
    raise EmbeddingError(f"unknown embedder {spec!r}")


def score_groups(groups, scheme: Scheme, embedder: str = "inline", alpha: float = DEFAULT_ALPHA) -> list[dict]:
    """Label, reward and advantage records for every rollout, in group order."""
    out = []
    for group in groups:
        verdict = majority_vote(group)
        u_tilde = {}
        if scheme is Scheme.EVOL_RL:
            valid = verdict.valid_ids
            table = _resolve_embeddings(embedder, [group], valid) if valid else EmbeddingTable(0, {})
            novelty = score_novelty(table, verdict, alpha)
            rewards = evol_reward(verdict, novelty)
            u_tilde = novelty.normalized
        else:
            rewards = majority_only_reward(verdict)
        adv = group_advantages(rewards.values(group.ids))
        for rollout, a in zip(group, adv):
            rec = {"id": rollout.id, "prompt_id": group.prompt_id, "label": verdict.labels.get(rollout.id, 0)}
            if scheme is Scheme.EVOL_RL and rollout.id in u_tilde:
                rec["u_tilde"] = u_tilde[rollout.id]
            rec["reward"] = rewards.rewards[rollout.id]
            rec["advantage"] = float(a)
            out.append(rec)
    return out


def cmd_score(args) -> int:
    scheme = Scheme.parse(args.scheme)
    try:
        with open(args.rollouts, encoding="utf-8") as fh:
            groups = parse_rollout_jsonl(fh)
    except OSError as exc:
        raise CliError(f"cannot read {args.rollouts}: {exc}", EXIT_INPUT) from exc
    except RolloutFormatError as exc:
        raise CliError(f"{args.rollouts}: {exc}", EXIT_INPUT) from exc
    try:
        records = score_groups(groups, scheme, args.embedder, args.alpha)
    except EmbeddingError as exc:
        raise CliError(f"embedding resolution failed: {exc}", EXIT_EMBEDDING) from exc
    text = "".join(_dumps(r) + "\n" for r in records)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# --- simulate --------------------------------------------------------------

def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _apply_overrides(env: EnvConfig, args) -> EnvConfig:
    data = env.to_dict()
    for key in ("seed", "steps", "alpha"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    for key in ("eps_low", "eps_high", "lambda_ent", "kl_coeff", "learning_rate"):
        value = getattr(args, key, None)
        if value is not None:
            data["optim"][key] = value
    return EnvConfig.from_dict(data)


def write_metrics_csv(path: Path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in records:
            w.writerow([r.step] + [repr(float(getattr(r, c))) for c in METRIC_COLUMNS[1:]])


def modes_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".modes.csv")


def write_modes_csv(path: Path, records, K: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"p{k}" for k in range(K)])
        for r in records:
            w.writerow([r.step] + [repr(float(x)) for x in r.mode_histogram])


def _series_path(out: Path, scheme: Scheme, both: bool) -> Path:
    if not both:
        return out
    return out.with_name(f"{out.stem}.{SCHEME_SUFFIX[scheme]}{out.suffix or '.csv'}")


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc).isoformat()
    try:
        base = majority_trap() if args.scenario in (None, "majority-trap") else load_scenario(args.scenario)
        base = _apply_overrides(base, args)
    except OSError as exc:
        raise CliError(f"cannot read scenario {args.scenario}: {exc}", EXIT_INPUT) from exc
    except (ScenarioError, ValueError, TypeError) as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_INPUT) from exc

    if args.scheme == "both":
        schemes = [Scheme.EVOL_RL, Scheme.MAJORITY_ONLY]
    elif args.scheme is not None:
        schemes = [Scheme.parse(args.scheme)]
    else:
        schemes = [base.scheme]
    both = len(schemes) > 1
    out = Path(args.out)
    runs, outputs, configs = {}, [], {}
    for scheme in schemes:
        data = base.to_dict()
        data["scheme"] = scheme.value
        env = EnvConfig.from_dict(data)
        records = run_training(env)
        path = _series_path(out, scheme, both)
        write_metrics_csv(path, records)
        write_modes_csv(modes_path(path), records, env.K)
        outputs.append(str(path))
        configs[scheme.value] = env.to_dict()
        runs[SCHEME_SUFFIX[scheme]] = [{"step": r.step, "pass1": r.pass1, "mean_length": r.mean_length,
                                        "entropy_nats": r.entropy_nats} for r in records]
    if args.svg:
        Path(args.svg).write_text(render_series_svg(runs), encoding="utf-8")
        outputs.append(str(args.svg))
    manifest = {
        "command": "simulate",
        "config_hash": config_hash(configs),
        "seed": base.seed,
        "tool_version": __version__,
        "outputs": outputs,
        "config": configs,
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    out.with_name(out.stem + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


# --- report ----------------------------------------------------------------

def read_metrics_csv(path: Path) -> dict[str, list[float]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_INPUT) from exc
    if header is None or tuple(header) != METRIC_COLUMNS:
        raise CliError(f"{path}: columns {header} do not match {list(METRIC_COLUMNS)}", EXIT_INPUT)
    try:
        cols = {name: [float(row[i]) for row in rows] for i, name in enumerate(header)}
    except (ValueError, IndexError) as exc:
        raise CliError(f"{path}: malformed row ({exc})", EXIT_INPUT) from exc
    return cols


def _final_histogram(path: Path) -> Optional[list[float]]:
    hist = modes_path(path)
    if not hist.exists():
        return None
    with open(hist, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        return None
    return [float(x) for x in rows[-1][1:]]


def _area(steps: Sequence[float], ys: Sequence[float]) -> float:
    if len(ys) < 2:
        return float(ys[0]) if ys else 0.0
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(ys, steps))


def build_report(path_a: Path, path_b: Path, threshold: float = 0.95) -> dict:
    a, b = read_metrics_csv(path_a), read_metrics_csv(path_b)
    report = {"a": str(path_a), "b": str(path_b), "metrics": {}}
    for name in REPORT_METRICS:
        fa = a[name][-1] if a[name] else math.nan
        fb = b[name][-1] if b[name] else math.nan
        auc_a, auc_b = _area(a["step"], a[name]), _area(b["step"], b[name])
        report["metrics"][name] = {
            "final_a": fa, "final_b": fb, "final_delta": fb - fa,
            "auc_a": auc_a, "auc_b": auc_b, "auc_delta": auc_b - auc_a,
        }
    for key, path in (("a", path_a), ("b", path_b)):
        hist = _final_histogram(path)
        report[f"collapsed_{key}"] = None if hist is None else is_collapsed(hist, threshold)
        report[f"top_mode_mass_{key}"] = None if hist is None else max(hist)
    return report


def cmd_report(args) -> int:
    report = build_report(Path(args.series_a), Path(args.series_b), args.collapse_threshold)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def _shared(p: argparse.ArgumentParser, defaults: bool) -> None:
    # simulate leaves these unset so scenario values win unless overridden
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--alpha", type=float, default=d(DEFAULT_ALPHA))
    p.add_argument("--eps-low", dest="eps_low", type=float, default=d(0.2))
    p.add_argument("--eps-high", dest="eps_high", type=float, default=d(0.28))
    p.add_argument("--lambda-ent", dest="lambda_ent", type=float, default=d(0.003))
    p.add_argument("--kl-coeff", dest="kl_coeff", type=float, default=d(0.001))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evolrl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="label and reward a rollout JSONL file")
    p.add_argument("rollouts")
    p.add_argument("-o", "--out", default="-")
    p.add_argument("--embedder", default="inline",
                   help="inline | file:<path> | lexical:<dim>:<seed> (default: inline)")
    p.add_argument("--scheme", choices=["evolrl", "majority-only"], default="evolrl")
    _shared(p, defaults=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="run the toy training loop")
    p.add_argument("scenario", nargs="?", default=None,
                   help="scenario JSON file (default: built-in majority-trap)")
    p.add_argument("-o", "--out", required=True, help="metrics CSV path")
    p.add_argument("--svg", default=None)
    p.add_argument("--scheme", choices=["evolrl", "majority-only", "both"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    _shared(p, defaults=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="compare two metrics CSVs")
    p.add_argument("series_a")
    p.add_argument("series_b")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--collapse-threshold", type=float, default=0.95)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"evolrl {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
