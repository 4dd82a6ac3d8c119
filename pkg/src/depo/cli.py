"""Command line entry point.

Subcommands: gen, dp, train, ablate, verify, plot. Every command that
takes a config accepts --config <json> plus any number of
--set block.key=value overrides. Exit codes: 0 success, 1 verification or
assertion failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import multiprocessing
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from ._core import backend
from .config import (ExperimentConfig, canonical_json, config_hash,
                     load_config)
from .env import StochasticGame, generate_game, load_game, save_game
from .errors import ConfigurationError, OptimizationError
from .oracle import joint_value_iteration
from .svg import Series, render_curves
from .trainers import curve_columns, train
from .verify import (run_bound_trials, run_exact_step_check,
                     run_fixed_point_trials, run_gradient_checks,
                     run_kl_additivity_trials)

Z95 = 1.959963984540054  # two-sided 95% normal quantile


def _fmt_cell(v) -> str:
    # repr keeps float round-trip exactness and is platform-stable
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt_cell(row[c]) for c in columns])


def read_csv_rows(path: str) -> tuple[list[str], list[dict]]:
    """Read a CSV into dicts; malformed rows are reported with line numbers."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty CSV") from None
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ConfigurationError(
                    f"{path}:{line_no}: expected {len(header)} fields, "
                    f"got {len(rec)}")
            rows.append(dict(zip(header, rec)))
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    return header, rows


def _float_field(row: dict, key: str, path: str, line_no: int) -> float:
    try:
        return float(row[key])
    except KeyError:
        raise ConfigurationError(
            f"{path}: missing required column '{key}'") from None
    except ValueError:
        raise ConfigurationError(
            f"{path}:{line_no}: field '{key}' is not a number: "
            f"{row[key]!r}") from None


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
            cwd=os.path.dirname(os.path.abspath(__file__)))
    except OSError:
        return "unknown"
    if out.returncode != 0:
        return "unknown"
    return out.stdout.strip()


def _load_experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.set or [])
    cfg.validate()
    return cfg


def _game_from_config(cfg: ExperimentConfig) -> StochasticGame:
    e = cfg.env
    return generate_game(
        seed=e.seed, n_states=e.n_states, n_agents=e.n_agents,
        action_counts=e.action_counts, gamma=e.gamma,
        transition_alpha=e.transition_alpha, reward_low=e.reward_low,
        reward_high=e.reward_high)


def _resolve_game(args, cfg: ExperimentConfig) -> StochasticGame:
    if getattr(args, "game", None):
        return load_game(args.game)
    return _game_from_config(cfg)


# ---------------------------------------------------------------- gen / dp

def cmd_gen(args) -> int:
    cfg = _load_experiment(args)
    game = _game_from_config(cfg)
    save_game(game, args.out)
    print(f"wrote {args.out}: S={game.n_states} N={game.n_agents} "
          f"A={list(game.action_counts)} gamma={game.gamma}")
    if args.with_dp:
        res = joint_value_iteration(game, tol=args.tol)
        print(f"j_star={res.j_star!r} iterations={res.iterations} "
              f"residual={res.residual!r}")
    return 0


def cmd_dp(args) -> int:
    game = load_game(args.game)
    res = joint_value_iteration(game, tol=args.tol)
    print(f"j_star={res.j_star!r} iterations={res.iterations} "
          f"residual={res.residual!r}")
    if args.v_out:
        with open(args.v_out, "w") as fh:
            json.dump({"j_star": res.j_star, "iterations": res.iterations,
                       "residual": res.residual,
                       "v_star": res.v_star.tolist()}, fh)
        print(f"wrote {args.v_out}")
    return 0


# ----------------------------------------------------------------- train

# fork workers inherit the parent's game through this module global; the
# arrays are read-only so copy-on-write keeps the big transition tensor shared
_WORKER_GAME: StochasticGame | None = None


def _run_seed(task: tuple) -> tuple[tuple, list[dict]]:
    tag, algo, trainer_cfg, seed = task
    assert _WORKER_GAME is not None
    result = train(_WORKER_GAME, algo, trainer_cfg, seed)
    return tag, result.rows


def _run_all_seeds(game: StochasticGame, tasks: list[tuple],
                   jobs: int) -> dict[tuple, list[dict]]:
    """Run (tag, algo, cfg, seed) tasks, serially or in forked workers.

    Output is keyed by tag; content does not depend on jobs.
    """
    global _WORKER_GAME
    _WORKER_GAME = game
    out: dict[tuple, list[dict]] = {}
    try:
        if jobs <= 1 or len(tasks) <= 1:
            for task in tasks:
                tag, rows = _run_seed(task)
                out[tag] = rows
        else:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs,
                                     mp_context=ctx) as pool:
                for tag, rows in pool.map(_run_seed, tasks):
                    out[tag] = rows
    finally:
        _WORKER_GAME = None
    return out


def _summarize(algo: str, per_seed: list[list[dict]]) -> list[dict]:
    """Across-seed mean and normal-approximation 95% CI per iteration."""
    n_iters = len(per_seed[0])
    for rows in per_seed:
        if len(rows) != n_iters:
            raise OptimizationError("seed runs disagree on iteration count")
    out = []
    for it in range(n_iters):
        grp = [rows[it] for rows in per_seed]
        ret = np.array([r["mean_return_undiscounted"] for r in grp])
        dis = np.array([r["discounted_J_estimate"] for r in grp])
        n = len(grp)
        half = 0.0
        if n > 1:
            half = Z95 * float(ret.std(ddof=1)) / float(np.sqrt(n))
        out.append({
            "algo": algo,
            "iteration": grp[0]["iteration"],
            "env_steps": grp[0]["env_steps"],
            "n_seeds": n,
            "mean_return_undiscounted": float(ret.mean()),
            "ci95_lo": float(ret.mean()) - half,
            "ci95_hi": float(ret.mean()) + half,
            "mean_discounted_J": float(dis.mean()),
        })
    return out


SUMMARY_COLUMNS = ["algo", "iteration", "env_steps", "n_seeds",
                   "mean_return_undiscounted", "ci95_lo", "ci95_hi",
                   "mean_discounted_J"]


def _write_run_meta(out_dir: str, cfg: ExperimentConfig,
                    wall_seconds: float, extra: dict | None = None) -> None:
    meta = {
        "config": json.loads(canonical_json(cfg)),
        "config_hash": config_hash(cfg),
        "git_describe": _git_describe(),
        "wall_clock_seconds": wall_seconds,
        "backend": backend(),
        "version": __version__,
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    game = _resolve_game(args, cfg)
    out_dir = args.out_dir or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.monotonic()
    algo = cfg.train.algo
    trainer_cfg = cfg.trainer_config()
    tasks = [((algo, seed), algo, trainer_cfg, seed)
             for seed in cfg.train.seeds]
    results = _run_all_seeds(game, tasks, args.jobs)
    cols = curve_columns(algo, game.n_agents)
    per_seed = []
    for seed in sorted(cfg.train.seeds):
        rows = sorted(results[(algo, seed)], key=lambda r: r["iteration"])
        per_seed.append(rows)
        path = os.path.join(out_dir, f"{algo}_seed{seed}.csv")
        write_csv(path, cols, rows)
        print(f"wrote {path} ({len(rows)} rows)")
    summary = _summarize(algo, per_seed)
    summary_path = os.path.join(out_dir, f"{algo}_summary.csv")
    write_csv(summary_path, SUMMARY_COLUMNS, summary)
    print(f"wrote {summary_path}")
    _write_run_meta(out_dir, cfg, time.monotonic() - t0)
    if cfg.output.emit_svg and summary:
        svg_path = os.path.join(out_dir, f"{algo}_curves.svg")
        _plot_files([summary_path], svg_path, j_star=None)
        print(f"wrote {svg_path}")
    return 0


# ----------------------------------------------------------------- ablate

ABLATE_DETAIL_COLUMNS = ["d_target", "seed", "iteration", "env_steps",
                         "mean_realized_kl", "mean_return_undiscounted",
                         "discounted_J_estimate"]
ABLATE_SUMMARY_COLUMNS = ["d_target", "n_seeds", "time_avg_realized_kl",
                          "final_return_mean", "final_discounted_J_mean"]


def _kl_over_agents(row: dict, n_agents: int) -> float:
    return float(np.mean([row[f"kl_{i}"] for i in range(n_agents)]))


def cmd_ablate(args) -> int:
    cfg = _load_experiment(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(
            f"--values must be comma-separated numbers, got {args.values!r}")
    if not values:
        raise ConfigurationError("--values must name at least one d_target")
    if any(v <= 0 for v in values):
        raise ConfigurationError("d_target values must be > 0")
    game = _resolve_game(args, cfg)
    out_dir = args.out_dir or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.monotonic()
    base = cfg.trainer_config()
    tasks = []
    for v in values:
        tc = dataclasses.replace(base, d_target=v)
        for seed in cfg.train.seeds:
            tasks.append(((v, seed), "dpo", tc, seed))
    results = _run_all_seeds(game, tasks, args.jobs)
    n_agents = game.n_agents
    detail = []
    summary = []
    for v in values:
        kl_all = []
        finals_ret = []
        finals_j = []
        for seed in sorted(cfg.train.seeds):
            rows = sorted(results[(v, seed)], key=lambda r: r["iteration"])
            for row in rows:
                kl = _kl_over_agents(row, n_agents)
                kl_all.append(kl)
                detail.append({
                    "d_target": v, "seed": seed,
                    "iteration": row["iteration"],
                    "env_steps": row["env_steps"],
                    "mean_realized_kl": kl,
                    "mean_return_undiscounted":
                        row["mean_return_undiscounted"],
                    "discounted_J_estimate": row["discounted_J_estimate"],
                })
            finals_ret.append(rows[-1]["mean_return_undiscounted"])
            finals_j.append(rows[-1]["discounted_J_estimate"])
        summary.append({
            "d_target": v, "n_seeds": len(cfg.train.seeds),
            "time_avg_realized_kl": float(np.mean(kl_all)),
            "final_return_mean": float(np.mean(finals_ret)),
            "final_discounted_J_mean": float(np.mean(finals_j)),
        })
    detail.sort(key=lambda r: (r["d_target"], r["seed"], r["iteration"]))
    summary.sort(key=lambda r: r["d_target"])
    detail_path = os.path.join(out_dir, "ablate_dtarget_detail.csv")
    summary_path = os.path.join(out_dir, "ablate_dtarget_summary.csv")
    write_csv(detail_path, ABLATE_DETAIL_COLUMNS, detail)
    write_csv(summary_path, ABLATE_SUMMARY_COLUMNS, summary)
    print(f"wrote {detail_path}")
    print(f"wrote {summary_path}")
    for row in summary:
        print(f"d_target={row['d_target']:g}: "
              f"time_avg_realized_kl={row['time_avg_realized_kl']!r} "
              f"final_return={row['final_return_mean']!r}")
    _write_run_meta(out_dir, cfg, time.monotonic() - t0,
                    extra={"ablation_values": values})
    return 0


# ----------------------------------------------------------------- verify

REPORT_COLUMNS = ["suite", "case", "passed", "detail"]


def _row_passed(suite_name: str, row: dict, suite_passed: bool) -> int:
    if "ok" in row:
        return int(row["ok"])
    if "bound_holds" in row:
        return int(bool(row["bound_holds"]) and bool(row["coupling_holds"]))
    return int(suite_passed)


def _row_detail(row: dict) -> str:
    parts = []
    for key, val in row.items():
        parts.append(f"{key}={_fmt_cell(val)}")
    return " ".join(parts)


def cmd_verify(args) -> int:
    trials = args.trials
    if trials < 0:
        raise ConfigurationError("--trials must be >= 0")
    if trials == 0:
        print("warning: --trials 0 runs nothing; empty report", file=sys.stderr)
        if args.out:
            write_csv(args.out, REPORT_COLUMNS, [])
        return 0
    c_scale = -1.0 if args.inject_c_sign_flip else 1.0
    suites = [
        run_bound_trials(seed=args.seed, trials=trials, c_scale=c_scale),
        run_fixed_point_trials(seed=args.seed + 1,
                               trials=max(1, trials // 4)),
        run_kl_additivity_trials(seed=args.seed + 2,
                                 trials=max(1, trials // 2)),
        run_gradient_checks(seed=args.seed + 3, trials=max(1, trials // 10)),
        run_exact_step_check(),
    ]
    report = []
    first_failure = None
    for suite in suites:
        for case, row in enumerate(suite.rows):
            passed = _row_passed(suite.name, row, suite.passed)
            rec = {"suite": suite.name, "case": case, "passed": passed,
                   "detail": _row_detail(row)}
            report.append(rec)
            if not passed and first_failure is None:
                first_failure = rec
        status = "PASS" if suite.passed else "FAIL"
        print(f"[{status}] {suite.summary}")
    if args.out:
        write_csv(args.out, REPORT_COLUMNS, report)
        print(f"wrote {args.out}")
    if any(not s.passed for s in suites):
        if first_failure is not None:
            print(f"FIRST FAILURE: suite={first_failure['suite']} "
                  f"case={first_failure['case']} {first_failure['detail']}",
                  file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------------ plot

def _series_from_csv(path: str) -> Series:
    header, rows = read_csv_rows(path)
    label = rows[0].get("algo") or os.path.splitext(os.path.basename(path))[0]
    x, mean, lo, hi = [], [], [], []
    has_band = "ci95_lo" in header and "ci95_hi" in header
    for line_no, row in enumerate(rows, start=2):
        x.append(_float_field(row, "env_steps", path, line_no))
        mean.append(_float_field(row, "mean_return_undiscounted",
                                 path, line_no))
        if has_band:
            lo.append(_float_field(row, "ci95_lo", path, line_no))
            hi.append(_float_field(row, "ci95_hi", path, line_no))
    return Series(label=label, x=x, mean=mean, lo=lo, hi=hi)


def _plot_files(paths: list[str], out: str, j_star: float | None,
                title: str = "mean return vs environment steps") -> None:
    series = [_series_from_csv(p) for p in paths]
    text = render_curves(series, title=title, x_label="environment steps",
                         y_label="mean return", j_star=j_star)
    with open(out, "w") as fh:
        fh.write(text)


def cmd_plot(args) -> int:
    _plot_files(args.csvs, args.out, j_star=args.jstar)
    print(f"wrote {args.out}")
    return 0


# ------------------------------------------------------------------ main

def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="JSON config file (defaults used when omitted)")
    p.add_argument("--set", action="append", metavar="BLOCK.KEY=VALUE",
                   help="override a config field, e.g. env.gamma=0.95")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depo",
        description="decentralized policy optimization on tabular games")
    parser.add_argument("--version", action="version",
                        version=f"depo {__version__} ({backend()} backend)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and save a random game")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output game JSON path")
    p.add_argument("--with-dp", action="store_true",
                   help="also run value iteration and print j_star")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dp", help="value-iterate a saved game")
    p.add_argument("--game", required=True, help="game JSON path")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--v-out", default=None,
                   help="write optimal values as JSON")
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("train", help="run one algorithm over the seed list")
    _add_config_args(p)
    p.add_argument("--game", default=None,
                   help="use a saved game instead of generating one")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel seed runs (forked processes)")
    p.add_argument("--out-dir", default=None,
                   help="override output.directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="sweep d_target for the dpo trainer")
    _add_config_args(p)
    p.add_argument("--game", default=None)
    p.add_argument("--values", default="0.001,0.01,0.1,1",
                   help="comma-separated d_target values")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="run all machine-checked invariants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", default=None, help="write verify_report.csv here")
    p.add_argument("--inject-c-sign-flip", action="store_true",
                   help="fault-injection hook: flip the quadratic penalty "
                        "sign outside the library; the run must fail")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="render summary CSVs as an SVG")
    p.add_argument("csvs", nargs="+", help="summary CSV paths")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--jstar", type=float, default=None,
                   help="draw a horizontal optimum rule")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
