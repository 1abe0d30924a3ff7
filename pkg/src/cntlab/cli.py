"""Command-line interface: train, eval, sweep, plot.

Every config key is exposed as a ``--key value`` flag; flags override the
optional ``--config`` file which overrides defaults. Exit status is 0 only
when all requested runs completed and wrote their artifacts.
"""

from __future__ import annotations

import argparse
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from .config import KEYMAP, build_config, config_echo, parse_kv_file, resolve_output_dir
from .errors import CntLabError
from .fileio import atomic_write_text
from .models import MODEL_MODES, load_checkpoint
from .plots import render_plots
from .rngs import substream
from .training import evaluate, prepare_data, run_experiment


def _dest(key: str) -> str:
    return "cfg_" + key.replace(".", "__")


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="flat 'key = value' config file")
    for key in KEYMAP:
        parser.add_argument(f"--{key}", dest=_dest(key), metavar="V",
                            help=f"override config key {key}")


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    for key in KEYMAP:
        value = getattr(args, _dest(key), None)
        if value is not None:
            out[key] = value
    return out


def _load_file_values(args: argparse.Namespace, fallback: Path | None = None):
    if args.config:
        return parse_kv_file(args.config)
    if fallback is not None and fallback.exists():
        return parse_kv_file(fallback)
    return None


# ----------------------------------------------------------------------


def cmd_train(args) -> int:
    config = build_config(_load_file_values(args), _collect_overrides(args))
    summary = run_experiment(config)
    print(f"run complete: {config.task} / {config.mode} / seed {config.seed}")
    for head, acc in summary["final_eval"].items():
        print(f"  eval {head} accuracy: {acc:.4f}")
    print(f"  metrics: {summary['metrics_csv']}")
    print(f"  checkpoint: {summary['checkpoint']}")
    return 0


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    model = load_checkpoint(ckpt)
    file_values = _load_file_values(args, fallback=ckpt.parent / "config.txt")
    if file_values is None and not _collect_overrides(args):
        raise CntLabError(
            "eval needs a config: pass --config or keep config.txt next to the checkpoint"
        )
    config = build_config(file_values, _collect_overrides(args))
    _, _, x_te, lab_te, _, _, _, _ = prepare_data(config)
    accs = evaluate(model, x_te, lab_te, substream(config.seed, "eval", "cli"))
    print(f"eval on {config.task} test split ({len(x_te)} examples, seed {config.seed}):")
    for head, acc in accs.items():
        print(f"  {head} accuracy: {acc:.4f}")
    return 0


def _sweep_worker(echo: dict) -> dict:
    return run_experiment(build_config(overrides=echo))


def _cell(values) -> str:
    values = np.asarray(values, dtype=np.float64) * 100.0
    std = values.std(ddof=1) if len(values) > 1 else 0.0
    return f"{values.mean():.2f} ({std:.2f})"


def _sweep_table(task: str, modes, seeds, summaries) -> str:
    head_keys = [k for k in summaries[modes[0], seeds[0]]["final_eval"] if k != "mean"]
    head_keys.append("mean")
    width = 14
    lines = [f"task={task}  seeds={','.join(str(s) for s in seeds)}  eval accuracy, percent"]
    lines.append("".ljust(12) + "".join(m.ljust(width + 2) for m in modes))
    for key in head_keys:
        cells = []
        for mode in modes:
            vals = [summaries[mode, s]["final_eval"][key] for s in seeds]
            cells.append(_cell(vals).ljust(width + 2))
        lines.append(key.ljust(12) + "".join(cells))
    chance = summaries[modes[0], seeds[0]]["chance_accuracy"]
    floor = 1.5 * chance
    worst = min(s["final_eval"]["mean"] for s in summaries.values())
    lines.append(f"chance accuracy: {chance * 100:.2f}; every run above 1.5x chance "
                 f"({floor * 100:.2f}): {'yes' if worst > floor else 'NO'}")
    if "cnt" in modes and "baseline" in modes:
        cnt = np.mean([summaries['cnt', s]["final_eval"]["mean"] for s in seeds])
        base = np.mean([summaries['baseline', s]["final_eval"]["mean"] for s in seeds])
        lines.append(f"cnt minus baseline (mean accuracy): {(cnt - base) * 100:+.2f}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    file_values = _load_file_values(args)
    overrides = _collect_overrides(args)
    base = build_config(file_values, overrides)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODEL_MODES:
            raise CntLabError(f"unknown sweep mode {m!r}, expected one of {MODEL_MODES}")
    seeds = list(range(base.seed, base.seed + args.seeds))

    explicit_out = "output_dir" in overrides or (file_values or {}).get("output_dir")
    root = resolve_output_dir(base.output_dir if explicit_out else f"runs/sweep_{base.task}")

    jobs = []
    for mode in modes:
        for seed in seeds:
            echo = config_echo(base)
            echo["mode"] = mode
            echo["seed"] = str(seed)
            echo["output_dir"] = str(root / f"{mode}_seed{seed}")
            jobs.append(echo)

    if args.parallel > 1:
        with multiprocessing.get_context("spawn").Pool(args.parallel) as pool:
            results = pool.map(_sweep_worker, jobs)
    else:
        results = [_sweep_worker(job) for job in jobs]

    summaries = {(s["mode"], s["seed"]): s for s in results}
    table = _sweep_table(base.task, modes, seeds, summaries)
    print(table, end="")

    root.mkdir(parents=True, exist_ok=True)
    atomic_write_text(root / "sweep_table.txt", table)
    rows = ["task,mode,seed,head,accuracy"]
    for (mode, seed), s in sorted(summaries.items()):
        for head, acc in s["final_eval"].items():
            rows.append(f"{base.task},{mode},{seed},{head},{acc:.10g}")
    atomic_write_text(root / "sweep_results.csv", "\n".join(rows) + "\n")
    print(f"sweep artifacts in {root}")
    return 0


def cmd_plot(args) -> int:
    for path in render_plots(args.metrics, args.out_dir):
        print(f"wrote {path}")
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cntlab",
        description="train and inspect classifiers conditioned on noisy targets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training experiment")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the task's test split")
    p.add_argument("--checkpoint", required=True, metavar="JSON",
                   help="checkpoint manifest path (model.ckpt.json)")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run {baseline, only-noise, cnt} x seeds and tabulate")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds (default 3)")
    p.add_argument("--modes", default="baseline,only-noise,cnt",
                   help="comma-separated modes to sweep")
    p.add_argument("--parallel", type=int, default=1,
                   help="run this many experiments in parallel processes")
    _add_config_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render SVG charts from a metrics CSV")
    p.add_argument("--metrics", required=True, metavar="CSV", help="metrics.csv path")
    p.add_argument("--out-dir", default=None, help="output directory (default: CSV's)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CntLabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
