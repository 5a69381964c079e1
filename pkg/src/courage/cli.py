"""Command line: ``courage ingest | train | predict | evaluate``.

Every command writes a ``manifest.json`` next to its outputs recording the
resolved configuration and the SHA-256 of every input, which is enough to
rerun it and get identical files. Options may also come from a plain
``key = value`` file given with ``--config``; command-line flags win.
Set ``COURAGE_LOG_LEVEL`` (e.g. ``DEBUG``) for more output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd

from . import forecast as fc
from .data import (FormatError, SplitError, WindowSet, build_windows, date_range_of, evaluation_anchors,
                   file_sha256, ingest, split, split_cutoff, to_day)
from .estimator import CourageRegressor
from .model import save_checkpoint
from .training import TrainingAborted

log = logging.getLogger("courage")

EXIT_USAGE = 2
EXIT_FAILED = 3

CACHE_FILE = "windows.npz"
CHECKPOINT_FILE = "checkpoint.npz"
MANIFEST_FILE = "manifest.json"


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILED):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CommandError(f"{path}:{lineno}: expected 'key = value'", EXIT_USAGE)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CommandError(f"{what} not found: {p}", EXIT_USAGE)
    return p


def _write_manifest(directory: Path, command: str, config: dict, inputs: dict[str, Path],
                    outputs: list[Path], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(config.items())},
        "inputs": {k: {"path": str(p), "sha256": file_sha256(p)} for k, p in sorted(inputs.items())},
        "outputs": {p.name: file_sha256(p) for p in outputs},
    }
    manifest.update(extra or {})
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _read_manifest(directory: Path) -> dict:
    path = directory / MANIFEST_FILE
    return json.loads(path.read_text()) if path.exists() else {}


def _load_cache(directory) -> WindowSet:
    directory = _require(directory, "window cache directory")
    return WindowSet.load(_require(directory / CACHE_FILE, "window cache"))


def _level(windows: WindowSet, level: str) -> WindowSet:
    return windows.subset(windows.level == level)


def _cutoff_for(windows: WindowSet, fraction: float, start_date: str | None) -> np.datetime64:
    lo, hi = date_range_of(windows)
    return split_cutoff(start_date or lo, hi, fraction)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_ingest(args) -> None:
    inputs = {"cases": _require(args.cases, "cases file"), "deaths": _require(args.deaths, "deaths file"),
              "mobility": _require(args.mobility, "mobility file")}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        county, state = ingest(inputs["cases"], inputs["deaths"], inputs["mobility"],
                               start=args.start_date, end=args.end_date)
    except (FormatError, pd.errors.ParserError, ValueError) as exc:
        raise CommandError(f"malformed input: {exc}") from exc
    windows = WindowSet.concat([build_windows(county, args.window, 1), build_windows(state, args.window, 1)])
    windows.names = {**dict(zip(county["location_id"], county["name"])),
                     **dict(zip(state["location_id"], state["name"]))}
    cache = out / CACHE_FILE
    windows.save(cache)
    lo, hi = (date_range_of(windows) if len(windows) else (None, None))
    _write_manifest(out, "ingest", vars_clean(args), inputs, [cache], {
        "n_windows": {lvl: int((windows.level == lvl).sum()) for lvl in ("county", "state")},
        "n_locations": {"county": int(county["location_id"].nunique()), "state": int(state["location_id"].nunique())},
        "date_range": [str(lo), str(hi)],
    })
    log.info("wrote %d windows to %s", len(windows), cache)


def cmd_train(args) -> None:
    cache_dir = Path(args.cache)
    windows = _load_cache(cache_dir)
    county, state = _level(windows, "county"), _level(windows, "state")
    ref = county if args.level == "county" else state
    if not len(ref):
        raise CommandError(f"cache has no {args.level}-level windows")
    start = args.start_date or date_range_of(ref)[0]
    try:
        sp = split(ref, args.split, start=start)
    except SplitError as exc:
        raise CommandError(str(exc), EXIT_USAGE) from exc
    train_sets = [sp.train]
    if args.level == "county" and args.state_windows and len(state):
        train_sets.append(split(state, args.split, start=start, end=date_range_of(ref)[1]).train)
    train_ws = WindowSet.concat(train_sets)
    if not len(train_ws):
        raise CommandError("no training windows before the cutoff")
    est = CourageRegressor(
        d_model=args.d_model, n_heads=args.heads, d_ff=args.d_ff, n_layers=args.layers, pooling=args.pooling,
        residual_layernorm=not args.no_residual_layernorm, epochs=args.epochs, lr=args.lr,
        lr_halving_period=args.lr_halving_period, delta=args.delta, batch_size=args.batch_size,
        clip_norm=None if args.no_clip else args.clip_norm, mixup=args.mixup, mixup_alpha=args.mixup_alpha,
        random_state=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"split": args.split, "cutoff": str(sp.cutoff), "level": args.level,
            "model": "state" if args.level == "state" else ("mixup" if args.mixup else "county")}
    try:
        est.fit(train_ws.features, train_ws.targets)
    except TrainingAborted as exc:
        partial = out / "checkpoint.partial.npz"
        save_checkpoint(partial, exc.params, meta={**meta, "aborted_at_epoch": exc.epoch})
        raise CommandError(f"training aborted: {exc}; last good parameters in {partial}") from exc
    ckpt = out / CHECKPOINT_FILE
    est.save(ckpt, meta=meta)
    loss_csv = out / "loss.csv"
    pd.DataFrame(est.loss_curve_, columns=["epoch", "lr", "train_loss"]).to_csv(
        loss_csv, index=False, lineterminator="\n", float_format="%.17g")
    if not all(math.isfinite(l) for _, _, l in est.loss_curve_):
        raise CommandError("loss curve contains non-finite values")
    _write_manifest(out, "train", vars_clean(args), {"cache": cache_dir / CACHE_FILE}, [ckpt, loss_csv], {
        "cutoff": str(sp.cutoff), "test_start": str(sp.test_start), "model": meta["model"],
        "n_train_windows": len(train_ws), "final_loss": est.final_loss_,
    })
    log.info("trained %s model on %d windows, final loss %.4g", meta["model"], len(train_ws), est.final_loss_)


def _load_member(directory) -> tuple[CourageRegressor, dict]:
    directory = _require(directory, "checkpoint directory")
    return CourageRegressor.load(_require(directory / CHECKPOINT_FILE, "checkpoint"))


def cmd_predict(args) -> None:
    cache_dir = Path(args.cache)
    windows = _load_cache(cache_dir)
    county, state = _level(windows, "county"), _level(windows, "state")
    members = {}
    inputs = {"cache": cache_dir / CACHE_FILE}
    for name in ("county", "mixup", "state"):
        d = getattr(args, f"{name}_model")
        if d:
            members[name] = _load_member(d)
            inputs[f"{name}_checkpoint"] = Path(d) / CHECKPOINT_FILE
    cutoffs = {meta["cutoff"] for _, meta in members.values()}
    if len(cutoffs) > 1:
        raise CommandError(f"checkpoints were trained with different cutoffs: {sorted(cutoffs)}")
    if cutoffs:
        cutoff = np.datetime64(cutoffs.pop(), "D")
        split_frac = next(iter(members.values()))[1]["split"]
    elif args.split is not None:
        cutoff = _cutoff_for(county, args.split, args.start_date)
        split_frac = args.split
    else:
        raise CommandError("give at least one checkpoint or --split", EXIT_USAGE)
    stride = args.stride
    ev_c = evaluation_anchors(county, cutoff, stride)
    ev_s = evaluation_anchors(state, cutoff, stride)
    c2s = fc.county_to_state(county)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(level: str, model: str, sets):
        path = out / f"forecast_{level}_{model}.csv"
        fc.write_forecasts(path, sets, windows.names)
        written.append(path)

    emit("county", "naive", fc.naive_from_windows(ev_c))
    emit("state", "naive", fc.naive_from_windows(ev_s))
    county_sets = {}
    for name in ("county", "mixup"):
        if name in members:
            county_sets[name] = fc.predict_counties(members[name][0], ev_c, model=name)
    if len(county_sets) == 2:
        county_sets["courage"] = fc.ensemble_sets(county_sets["county"], county_sets["mixup"])
    for name, sets in county_sets.items():
        emit("county", name, sets)
        emit("state", name, [fc.aggregate_to_state(f, c2s) for f in sets])
    if "state" in members:
        emit("state", "state", fc.predict_counties(members["state"][0], ev_s, model="state", level="state"))
    _write_manifest(out, "predict", vars_clean(args), inputs, written,
                    {"cutoff": str(cutoff), "split": split_frac, "stride": stride})


def _parse_periods(text: str | None):
    if not text:
        return fc.DEFAULT_PERIODS
    periods = []
    for part in text.split(","):
        a, b = part.split(":")
        periods.append((date.fromisoformat(a.strip()), date.fromisoformat(b.strip())))
    return periods


def cmd_evaluate(args) -> None:
    cache_dir = Path(args.cache)
    windows = _load_cache(cache_dir)
    county, state = _level(windows, "county"), _level(windows, "state")
    inputs = {"cache": cache_dir / CACHE_FILE}
    forecasts: dict[str, dict[str, list]] = {"county": {}, "state": {}}
    split_frac = args.split
    cutoff = None
    if args.forecasts:
        fdir = _require(args.forecasts, "forecast directory")
        manifest = _read_manifest(fdir)
        split_frac = split_frac if split_frac is not None else manifest.get("split")
        cutoff = manifest.get("cutoff")
        for path in sorted(fdir.glob("forecast_*_*.csv")):
            _, level, model = path.stem.split("_", 2)
            forecasts[level][model] = fc.read_forecasts(path, level)
            inputs[path.name] = path
    if cutoff is None:
        if split_frac is None:
            raise CommandError("give --forecasts from `predict` or --split for a Naive-only evaluation", EXIT_USAGE)
        cutoff = str(_cutoff_for(county, float(split_frac), args.start_date))
    cutoff = np.datetime64(cutoff, "D")
    for level, ws in (("county", county), ("state", state)):
        if "naive" not in forecasts[level]:
            forecasts[level]["naive"] = fc.naive_from_windows(evaluation_anchors(ws, cutoff, args.stride))
    periods = _parse_periods(args.periods)
    report = fc.EvalReport()
    summary = fc.EvalReport()
    for level, ws in (("county", county), ("state", state)):
        truth = fc.truth_table(ws, args.truth)
        models = {m: s for m, s in sorted(forecasts[level].items()) if s}
        fc.evaluate_periods(models, truth, periods, split=split_frac or "", level=level, report=report)
        if models:
            last = max(f.anchor for sets in models.values() for f in sets)
            whole = [(to_day(cutoff + np.timedelta64(1, "D")), fc.forecast_start(last))]
            fc.evaluate_periods(models, truth, whole, split=split_frac or "", level=level, report=summary)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path, summary_path = out / "report.csv", out / "summary.csv"
    fc.write_report(report_path, report)
    fc.write_report(summary_path, summary)
    written = [report_path, summary_path]
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    truth = fc.truth_table(state, args.truth)
    for st in sorted(set(state.location_id.tolist())):
        path = plots / f"{st}.csv"
        fc.plot_frame(st, truth, forecasts["state"]).to_csv(path, index=False, lineterminator="\n", na_rep="")
        written.append(path)
    _write_manifest(out, "evaluate", vars_clean(args), inputs, written,
                    {"cutoff": str(cutoff), "excluded": report.excluded})
    for row in summary.rows:
        log.info("%-8s %-6s week%d MAE %.4f", row["model"], row["level"], row["horizon"], row["mae"])


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="courage", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw CSVs into a window cache")
    p.add_argument("--cases", required=True, help="JHU time_series_covid19_confirmed_US.csv")
    p.add_argument("--deaths", required=True, help="JHU time_series_covid19_deaths_US.csv")
    p.add_argument("--mobility", required=True, help="Google Global_Mobility_Report.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--start-date")
    p.add_argument("--end-date")
    p.add_argument("--window", type=int, default=7, help="input days per window")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a County, Mixup or State model")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--start-date", help="first day of the range the split fraction applies to")
    p.add_argument("--level", choices=("county", "state"), default="county",
                   help="'state' trains the State baseline on state windows only")
    p.add_argument("--no-state-windows", dest="state_windows", action="store_false",
                   help="train the county model on county windows only")
    p.add_argument("--mixup", action="store_true")
    p.add_argument("--mixup-alpha", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-halving-period", type=int, default=100)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--no-clip", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--d-ff", type=int, default=64)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--pooling", choices=("last", "mean"), default="last")
    p.add_argument("--no-residual-layernorm", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write forecast CSVs for the test period")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--county-model", help="directory written by `train`")
    p.add_argument("--mixup-model", help="directory written by `train --mixup`")
    p.add_argument("--state-model", help="directory written by `train --level state`")
    p.add_argument("--split", type=float, help="needed only when no checkpoint is given")
    p.add_argument("--start-date")
    p.add_argument("--stride", type=int, default=7)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MAE report and plot data")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--forecasts", help="directory written by `predict`")
    p.add_argument("--split", type=float)
    p.add_argument("--start-date")
    p.add_argument("--stride", type=int, default=7)
    p.add_argument("--truth", choices=("raw", "smoothed"), default="raw")
    p.add_argument("--periods", help="comma list of START:END ISO dates (default: the five standard periods)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config_file(_require(known.config, "config file"))
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        defaults = {}
        for a in action._actions:  # noqa: SLF001
            if a.dest in values:
                defaults[a.dest] = _coerce(values[a.dest], a.default) if a.type is None else a.type(values[a.dest])
                a.required = False
        action.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=os.environ.get("COURAGE_LOG_LEVEL", "INFO").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        args.func(args)
    except CommandError as exc:
        print(f"courage: error: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
