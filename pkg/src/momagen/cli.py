"""Command-line entry point.

Subcommands: generate, validate, metrics, demo_info. Exit codes: 0 ok,
1 validation failure, 2 usage error, 3 internal error. Config precedence is
built-in defaults < --config file < explicit flags. All outputs land under
--out and carry the resolved config hash via the run manifest.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .datagen import GenConfig, METHODS, generate_batch, worker_count
from .demo import (ParseError, config_hash, dataset_header, load_dataset,
                   load_source, save_dataset)
from .metrics import diversity, validate, visibility_histogram
from .robot import RobotModel
from .world import TASKS

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

_ASSETS = Path(__file__).parent / "assets"
SCHEMES = ("d0", "d1", "d2")
ROBOTS = ("r1_like", "t_like")


class UsageError(Exception):
    pass


def _asset(kind: str, name: str) -> Path:
    path = _ASSETS / kind / name
    if not path.exists():
        raise UsageError(f"missing asset {path}")
    return path


def _load_fixture(task: str, robot: str):
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    if robot not in ROBOTS:
        raise UsageError(f"unknown robot {robot!r}; choose from {ROBOTS}")
    model = RobotModel.load(_asset("robots", f"{robot}.json"))
    src = load_source(_asset("demos", f"{task}.demo.json"))
    return model, src


def _resolved_config(args) -> GenConfig:
    cfg = GenConfig()
    if args.config:
        with open(args.config) as f:
            cfg = GenConfig.from_dict({**cfg.to_dict(), **json.load(f)})
    overrides = {}
    if args.method is not None:
        overrides["method"] = args.method
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _write_manifest(out_dir: Path, command: str, config: dict, seeds,
                    outputs, started: float):
    manifest = {"command": command, "config": config,
                "config_hash": config_hash(config),
                "seed_range": [min(seeds), max(seeds)] if seeds else None,
                "outputs": [str(p) for p in outputs],
                "engine_version": __version__,
                "duration_s": round(time.time() - started, 3)}
    path = out_dir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def cmd_generate(args) -> int:
    started = time.time()
    if args.attempts < 1:
        raise UsageError("--attempts must be >= 1")
    if args.method is not None and args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; choose from {METHODS}")
    model, src = _load_fixture(args.task, args.robot)
    cfg = _resolved_config(args)
    level = args.scheme.upper()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    demos, summary = generate_batch(model, src, level, cfg, args.attempts)
    header_cfg = {**cfg.to_dict(), "scheme": level, "attempts": args.attempts}
    header = dataset_header(robot=args.robot, task=args.task,
                            method=cfg.method, config=header_cfg)
    ds_path = out_dir / f"{args.task}_{level.lower()}_{cfg.method}.jsonl"
    save_dataset(header, demos, ds_path)
    summary_path = out_dir / "summary.json"
    with open(summary_path, "w") as f:
        json.dump({**summary, "config_hash": header["config_hash"]},
                  f, indent=2, sort_keys=True)
    seeds = list(range(cfg.seed, cfg.seed + args.attempts))
    _write_manifest(out_dir, "generate", header_cfg, seeds,
                    [ds_path, summary_path], started)
    print(f"{summary['successes']}/{summary['attempts']} demos "
          f"(rate {summary['success_rate']:.2f}) -> {ds_path}")
    for stage, n in summary["failures"].items():
        print(f"  {stage}: {n}")
    return EXIT_OK


def _load_generated(path):
    return load_dataset(path)


def cmd_validate(args) -> int:
    header, demos = _load_generated(args.inputs[0])
    model, src = _load_fixture(header["task"], header["robot"])
    n_bad = 0
    for demo in demos:
        rep = validate(model, src, demo)
        if not rep.valid:
            n_bad += 1
            for v in rep.violations:
                print(f"seed {demo.seed}: {v.constraint} "
                      f"frame={v.frame} {v.detail}")
    report = {"demos": len(demos), "invalid": n_bad}
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        reports = [validate(model, src, d).to_dict() for d in demos]
        with open(out_dir / "validation.json", "w") as f:
            json.dump({"summary": report, "reports": reports}, f,
                      indent=2, sort_keys=True)
    print(f"{len(demos) - n_bad}/{len(demos)} demos valid")
    return EXIT_OK if n_bad == 0 else EXIT_VALIDATION


def cmd_metrics(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    overlay = []
    stats = {}
    for path in args.inputs:
        header, demos = _load_generated(path)
        model, _ = _load_fixture(header["task"], header["robot"])
        name = header["method"]
        entry = {"dataset": str(path), "n_demos": len(demos)}
        if len(demos) >= 2:
            entry["diversity"] = diversity(model, demos)
        svg = out_dir / f"visibility_{name}.svg"
        js = out_dir / f"visibility_{name}.json"
        hist = visibility_histogram(demos, svg_path=svg, json_path=js)
        outputs += [svg, js]
        entry["visibility"] = {"mean_ratio": hist["mean_ratio"]}
        overlay.append((name, hist["counts"]))
        stats[name] = entry
    stats_path = out_dir / "metrics.json"
    with open(stats_path, "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
    outputs.append(stats_path)
    if len(overlay) > 1:
        cmp_path = out_dir / "visibility_comparison.svg"
        with open(cmp_path, "w") as f:
            f.write(_overlay_svg(overlay))
        outputs.append(cmp_path)
    _write_manifest(out_dir, "metrics", {"inputs": [str(p) for p in args.inputs]},
                    [], outputs, started)
    print(f"metrics for {len(args.inputs)} dataset(s) -> {stats_path}")
    return EXIT_OK


def _overlay_svg(series, width=520, height=300) -> str:
    pad, base = 40, height - 40
    colors = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"]
    top = max(max(c) for _, c in series) or 1
    nbins = len(series[0][1])
    group_w = (width - 2 * pad) / nbins
    bar_w = group_w / (len(series) + 0.5)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<line x1="{pad}" y1="{base}" x2="{width - pad}" y2="{base}" '
             f'stroke="black"/>']
    for s, (name, counts) in enumerate(series):
        color = colors[s % len(colors)]
        for i, c in enumerate(counts):
            h = (base - 40) * c / top
            x = pad + i * group_w + s * bar_w
            parts.append(f'<rect x="{x:.1f}" y="{base - h:.1f}" '
                         f'width="{bar_w - 1:.1f}" height="{h:.1f}" '
                         f'fill="{color}"/>')
        parts.append(f'<rect x="{pad + s * 110}" y="8" width="10" height="10" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{pad + s * 110 + 14}" y="17" '
                     f'font-size="10">{name}</text>')
    for i in range(nbins + 1):
        parts.append(f'<text x="{pad + i * group_w:.1f}" y="{base + 14}" '
                     f'font-size="9" text-anchor="middle">{i * 10}</text>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def cmd_demo_info(args) -> int:
    src = load_source(args.inputs[0])
    print(f"robot: {src.robot}  task: {src.task.task}")
    print(f"{'seg':>3}  {'kind':<12} {'arm':<5} {'target':<12} "
          f"{'frames':>6} {'t_pre':>5} {'retraction':<10}")
    for i, seg in enumerate(src.segments):
        print(f"{i:>3}  {seg.kind:<12} {seg.arm:<5} "
              f"{seg.target_object or '-':<12} {seg.t_end:>6} "
              f"{seg.t_pregrasp:>5} {seg.retraction:<10}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momagen",
                                description="demonstration synthesis engine")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="expand a source demo into a dataset")
    g.add_argument("--task", required=True)
    g.add_argument("--robot", default="r1_like")
    g.add_argument("--scheme", required=True, choices=SCHEMES)
    g.add_argument("--method", default=None)
    g.add_argument("--attempts", type=int, default=10)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="recheck a dataset against constraints")
    v.add_argument("--in", dest="inputs", nargs=1, required=True)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("metrics", help="diversity and visibility metrics")
    m.add_argument("--in", dest="inputs", nargs="+", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("demo_info", help="segment table of a source demo")
    d.add_argument("--in", dest="inputs", nargs=1, required=True)
    d.set_defaults(func=cmd_demo_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ParseError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # internal error: report, never traceback-spam CI
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
