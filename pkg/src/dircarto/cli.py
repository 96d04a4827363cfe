"""Command line entry point: ``dircarto run|sweep|repro|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dircarto.config import ExperimentConfig, dump_config, load_config
from dircarto.errors import ConfigError
from dircarto.experiment import (
    Point,
    _job,
    _write_atomic,
    points_from_config,
    points_from_overrides,
    sweep,
    write_manifest,
)
from dircarto.presets import PRESETS

log = logging.getLogger("dircarto")


def _overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    ov = {}
    if getattr(args, "mode", None):
        ov["tracker.mode"] = args.mode
    if getattr(args, "deterministic_rss", False):
        ov["noise.deterministic"] = True
    if getattr(args, "seed", None) is not None:
        ov["sweep.seeds"] = (args.seed,)
    elif getattr(args, "trials", None):
        ov["sweep.seeds"] = tuple(cfg.seeds[: args.trials])
    return cfg.with_values(ov) if ov else cfg


def _add_common(p, config_required=True):
    if config_required:
        p.add_argument("--config", required=True, type=Path, help="experiment file (INI)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="single root seed, replaces [sweep] seeds")
    p.add_argument("--mode", choices=("centralized", "distributed"))
    p.add_argument("--deterministic-rss", action="store_true", help="use the expected RSS (no sampling)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dircarto", description="Sparse emitter localization with steerable arrays.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="one closed-loop run (first seed)")
    _add_common(p)
    p = sub.add_parser("sweep", help="Monte Carlo over seeds and the configured sweep axis")
    _add_common(p)
    p = sub.add_parser("repro", help="run a built-in figure preset")
    p.add_argument("figure", nargs="?", help=", ".join(PRESETS))
    p.add_argument("--list", action="store_true", help="list presets and exit")
    p.add_argument("--trials", type=int, help="use only the first N preset seeds")
    _add_common(p, config_required=False)
    p = sub.add_parser("validate", help="check a config file and print what it describes")
    p.add_argument("--config", required=True, type=Path)
    return ap


def _describe(cfg: ExperimentConfig, points) -> str:
    s = lambda k: cfg.get("scenario", k)  # noqa: E731
    n = len(s("positions")) or s("sensors")
    k = len(s("source_indices")) or s("sources")
    return (f"P={s('rows') * s('cols')} N={n} k={k} M={cfg.get('array', 'elements')} T={s('slots')} "
            f"B={cfg.get('tracker', 'block')} mode={cfg.get('tracker', 'mode')} points={len(points)} "
            f"seeds={len(cfg.seeds)}")


def cmd_run(cfg: ExperimentConfig, out: Path, command: str) -> int:
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "config.ini", dump_config(cfg))
    seed = cfg.seeds[0]
    summary = _job((0, cfg, seed, str(out), True))
    grouped = [[summary]]
    write_manifest(out, command, cfg, [Point("base", cfg)], [seed], grouped)
    if summary.error:
        print(f"error: {summary.error}", file=sys.stderr)
        return 1
    print(f"seed {seed}: final error {summary.errors[-1]:.4g} after {summary.errors.size} slots -> {out}")
    return 0


def _report(points, grouped, out) -> int:
    failed = 0
    for pt, rs in zip(points, grouped):
        ok = [r.errors[-1] for r in rs if r.error is None]
        failed += len(rs) - len(ok)
        mean = sum(ok) / len(ok) if ok else float("nan")
        print(f"{pt.label}: final error mean {mean:.4g} over {len(ok)} trials")
    print(f"artifacts -> {out}")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            cfg = load_config(args.config)
            print(f"ok: {_describe(cfg, points_from_config(cfg))}")
            return 0
        if args.verb == "repro":
            if args.list or not args.figure:
                for name, p in PRESETS.items():
                    print(f"{name}: {p.title}")
                return 0
            if args.figure not in PRESETS:
                print(f"error: unknown preset {args.figure!r}; choose from {', '.join(PRESETS)}", file=sys.stderr)
                return 2
            preset = PRESETS[args.figure]
            cfg = _overrides(preset.config(), args)
            points = points_from_overrides(cfg, preset.points) if preset.points else points_from_config(cfg)
            grouped = sweep(cfg, points, cfg.seeds, args.out, args.jobs, command=f"repro {args.figure}")
            return _report(points, grouped, args.out)
        cfg = _overrides(load_config(args.config), args)
        if args.verb == "run":
            return cmd_run(cfg, args.out, "run")
        points = points_from_config(cfg)
        grouped = sweep(cfg, points, cfg.seeds, args.out, args.jobs, command="sweep")
        return _report(points, grouped, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
