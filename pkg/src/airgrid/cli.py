"""Command-line entry point: one subcommand per pipeline stage.

Exit status is 0 on success, 1 when a stage fails at run time and 2 for
usage or configuration problems.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aqi import DaqiTable, annual_summation, driving_subindex, index_tile, overall_index, read_daqi_table
from .config import RunConfig, help_table, validate_config
from .dataset import build_feature_matrix, write_feature_csv
from .errors import AirgridError, ConfigError
from .experiments import EXPERIMENTS, binned_split, run_experiment, score_rows, station_metas
from .features import CovariateSources
from .gbdt import fit, load_model, save_model, train
from .grid import GridSpec, PredictionTile, predict_interval_tiles, predict_tile, read_tile, write_tile
from .intervals import coverage, interval_size_sum, predict_intervals, train_triplet
from .metrics import iqr90, positive_r2_table, read_scores_csv, write_continent_table, write_scores_csv
from .splits import leave_group_out, stratified_split, within_network_kfold, write_index_manifest
from .stations import (apply_qc, format_utc, parse_measurement_file, parse_station_file, parse_utc_hour,
                       write_measurement_file)
from .tuning import sample_param_sets, select_best, write_tuning_report

log = logging.getLogger("airgrid")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit 2 without killing the caller."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageExit()


class _UsageExit(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (TOML)")
    common.add_argument("--threads", type=int, help="worker thread cap (overrides run.threads)")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--out", type=Path, help="output directory (overrides paths.out)")

    p = _Parser(prog="airgrid", description="Station-trained gradient boosting for gridded air quality.",
                epilog=help_table(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"airgrid {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    sub.add_parser("qc", parents=[common], help="quality-control station series")
    sub.add_parser("features", parents=[common], help="assemble the feature table")
    sub.add_parser("split", parents=[common], help="stratified split and fold plans")
    sub.add_parser("train", parents=[common], help="train one model and score it on the test split")
    sub.add_parser("tune", parents=[common], help="randomised hyper-parameter search")
    e = sub.add_parser("experiment", parents=[common], help="run a validation protocol")
    e.add_argument("kind", choices=EXPERIMENTS)
    sub.add_parser("intervals", parents=[common], help="quantile models, coverage and placement ranking")
    g = sub.add_parser("predict-grid", parents=[common], help="render concentration tiles")
    g.add_argument("--model", type=Path, help="model file (default: <out>/model_<pollutant>.json)")
    a = sub.add_parser("aqi", parents=[common], help="index tiles from concentration tiles")
    a.add_argument("--tiles", type=Path, help="directory of Point tiles (default: <out>)")
    sub.add_parser("report", parents=[common], help="continent tables and score spreads")
    f = sub.add_parser("fixture", help="write the synthetic fixture world")
    f.add_argument("dest", type=Path)
    f.add_argument("--seed", type=int, default=7)
    f.add_argument("--days", type=int, default=30)
    return p


# -- shared plumbing ----------------------------------------------------------

class Run:
    """Config plus the bookkeeping every subcommand needs."""

    def __init__(self, args, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        if args.seed is not None:
            cfg.sections["run"]["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg.sections["run"]["threads"] = args.threads
        if args.out is not None:
            cfg.sections["paths"]["out"] = args.out
        self.out = Path(cfg.path_of("out"))
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []

    @property
    def seed(self) -> int:
        return self.cfg.seed

    @property
    def threads(self) -> int:
        return self.cfg.get("run.threads")

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def daqi(self) -> DaqiTable:
        p = self.cfg.path_of("daqi")
        return read_daqi_table(p) if p is not None else DaqiTable.default()

    def load_series(self):
        self.cfg.require("paths.stations", "paths.measurements")
        stations = [s for s in parse_station_file(self.cfg.path_of("stations")) if s.pollutant == self.cfg.pollutant]
        series = parse_measurement_file(self.cfg.path_of("measurements"), stations)
        kept, report = apply_qc(series, self.cfg.qc_rules())
        return stations, kept, report

    def feature_matrix(self):
        self.cfg.require("paths.stations", "paths.measurements", "paths.covariates")
        _, kept, _ = self.load_series()
        if not kept:
            raise AirgridError("no series survived quality control")
        sources = CovariateSources.from_directory(self.cfg.path_of("covariates"))
        return build_feature_matrix(kept, sources), sources

    def model_path(self) -> Path:
        return self.out / f"model_{self.cfg.pollutant}.json"

    def grid_spec(self) -> GridSpec:
        g = self.cfg.sections["grid"]
        if g["lat_min"] is None:
            if g["resolution"] != 0.25:
                n = round(180 / g["resolution"]), round(360 / g["resolution"])
                return GridSpec(g["resolution"], -90 + g["resolution"] / 2, -180 + g["resolution"] / 2, *n)
            return GridSpec()
        return GridSpec.region(g["lat_min"], g["lat_max"], g["lon_min"], g["lon_max"], g["resolution"])

    def timestamps(self):
        self.cfg.require("grid.timestamps")
        ts = self.cfg.get("grid.timestamps")
        if not ts:
            raise ConfigError("missing required key grid.timestamps (empty list)")
        try:
            return [parse_utc_hour(t) for t in ts]
        except AirgridError as exc:
            raise ConfigError(f"grid.timestamps: {exc}") from None

    def write_manifest(self, command: str) -> Path:
        import numba

        doc = {
            "command": command,
            "argv": [str(a) for a in self.args.argv],
            "config": str(self.cfg.path) if self.cfg.path else None,
            "config_sha256": self.cfg.sha256,
            "seed": self.seed,
            "threads": self.threads,
            "pollutant": self.cfg.pollutant,
            "versions": {"airgrid": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "numba": numba.__version__},
            "outputs": {p.name: sha256_file(p) for p in sorted(set(self.outputs)) if p.exists()},
        }
        path = self.out / f"manifest_{command}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _tile_name(pollutant, t, kind) -> str:
    stamp = format_utc(t).replace("-", "").replace(":", "")[:11]
    return f"{pollutant}_{stamp}_{kind}.aptile"


# -- subcommands --------------------------------------------------------------

def cmd_qc(run: Run):
    _, kept, report = run.load_series()
    report.write_csv(run.path("qc_report.csv"))
    write_measurement_file(run.path("measurements_clean.csv"), kept)
    log.info("qc: kept %d series, rejected %d", report.kept, len(report.rejected))


def cmd_features(run: Run):
    fm, _ = run.feature_matrix()
    write_feature_csv(run.path("features.csv"), fm)
    log.info("features: %d rows", len(fm))


def cmd_split(run: Run):
    fm, _ = run.feature_matrix()
    tr, va, te = stratified_split(fm.station_id, fm.y, fm.pollutant, run.daqi(), run.seed)
    write_index_manifest(run.path("split_rows.csv"), {"train": tr, "val": va, "test": te})
    metas = station_metas(fm)
    within_network_kfold(metas, run.cfg.get("run.k_folds"), run.seed).write_csv(run.path("folds_within_network.csv"))
    for grouping in ("Country", "Continent"):
        for plan in leave_group_out(metas, grouping):
            plan.write_csv(run.path(f"folds_leave_{grouping.lower()}_{plan.held_out}.csv"))


def _split_fit(run: Run, fm, params):
    tr, va, te = stratified_split(fm.station_id, fm.y, fm.pollutant, run.daqi(), run.seed)
    model = fit(params, fm.X[tr], fm.y[tr], fm.X[va], fm.y[va], pollutant=run.cfg.pollutant)
    return model, (tr, va, te)


def _test_scores(fm, te, model, experiment):
    return score_rows(fm, te, model.predict(fm.X[te]), experiment) if te.size else []


def cmd_train(run: Run):
    fm, _ = run.feature_matrix()
    model, (_, _, te) = _split_fit(run, fm, run.cfg.train_params())
    save_model(run.path(run.model_path().name), model)
    write_scores_csv(run.path("scores_train.csv"), _test_scores(fm, te, model, "train"))
    log.info("train: %d trees (best iteration %d)", len(model.trees), model.best_iteration)


def cmd_tune(run: Run):
    fm, _ = run.feature_matrix()
    base = run.cfg.train_params()
    cands = sample_param_sets(run.cfg.search_space(), run.cfg.get("search.n_candidates"), run.seed, base)
    tr, va, te = stratified_split(fm.station_id, fm.y, fm.pollutant, run.daqi(), run.seed)
    if va.size == 0:
        raise AirgridError("tuning needs a non-empty validation split")
    results, models = [], []
    for p in cands:
        train_set, valid_set = binned_split(fm, tr, va, p)
        m = train(p, train_set, valid_set, pollutant=run.cfg.pollutant)
        raw = m.predict_raw(fm.X[va])
        results.append((p, float(np.mean((raw - valid_set.target) ** 2))))
        models.append(m)
    best = select_best(results)
    idx = next(i for i, (p, _) in enumerate(results) if p is best)
    write_tuning_report(run.path("tuning_report.csv"), results, idx)
    save_model(run.path(f"model_{run.cfg.pollutant}_tuned.json"), models[idx])
    write_scores_csv(run.path("scores_tune.csv"), _test_scores(fm, te, models[idx], "tune"))


def cmd_experiment(run: Run):
    kind = run.args.kind
    fm, _ = run.feature_matrix()
    res = run_experiment(kind, fm, run.cfg.train_params(), run.daqi(), run.seed, k=run.cfg.get("run.k_folds"))
    tag = kind.replace("-", "_")
    write_scores_csv(run.path(f"scores_{tag}.csv"), res.scores)
    write_continent_table(run.path(f"continent_table_{tag}.csv"), {run.cfg.pollutant: positive_r2_table(res.scores)})
    for i, plan in enumerate(res.plans):
        label = plan.held_out or f"plan{i}"
        plan.write_csv(run.path(f"folds_{tag}_{label}.csv"))
    r2s = [s.r2 for s in res.scores if not np.isnan(s.r2)]
    log.info("%s: %d stations, median r2 %.3f", kind, len(res.scores), float(np.median(r2s)) if r2s else float("nan"))


def cmd_intervals(run: Run):
    fm, sources = run.feature_matrix()
    tr, va, te = stratified_split(fm.station_id, fm.y, fm.pollutant, run.daqi(), run.seed)
    params = run.cfg.train_params()
    train_set, valid_set = binned_split(fm, tr, va, params)
    trip = train_triplet(params, train_set, valid_set, pollutant=run.cfg.pollutant)
    for q, m in zip(("q05", "q50", "q95"), trip.models()):
        save_model(run.path(f"model_{run.cfg.pollutant}_{q}.json"), m)
    rows = te if te.size else va
    bounds = predict_intervals(trip, fm.X[rows])
    with open(run.path("intervals_test.csv"), "w", encoding="utf-8") as fh:
        fh.write("station_id,timestamp_utc,obs,q05,q50,q95\n")
        for i, r in enumerate(rows):
            lo, mid, hi = bounds[i]
            fh.write(f"{fm.station_id[r]},{format_utc(fm.timestamp[r])},{fm.y[r]!r},{lo!r},{mid!r},{hi!r}\n")
    log.info("intervals: test coverage %.3f", coverage(fm.y[rows], bounds) if rows.size else float("nan"))
    if run.cfg.get("grid.timestamps"):
        spec = run.grid_spec()
        pairs = []
        for t in run.timestamps():
            lo, _, hi = predict_interval_tiles(trip, sources, t, spec, run.threads, run.cfg.get("grid.block_cells"))
            pairs.append((lo, hi))
        interval_size_sum(pairs).write_csv(run.path("placement_ranking.csv"), run.cfg.get("grid.top_k"))


def cmd_predict_grid(run: Run):
    run.cfg.require("paths.covariates")
    path = run.args.model or run.model_path()
    if not Path(path).exists():
        raise AirgridError(f"model file {path} not found; run `train` first or pass --model")
    model = load_model(path)
    sources = CovariateSources.from_directory(run.cfg.path_of("covariates"))
    spec = run.grid_spec()
    for t in run.timestamps():
        tile = predict_tile(model, sources, t, spec, run.threads, block_cells=run.cfg.get("grid.block_cells"))
        write_tile(run.path(_tile_name(model.pollutant, t, "Point")), tile)
        log.info("predict-grid %s: completeness %.3f", format_utc(t), tile.completeness)


def cmd_aqi(run: Run):
    src = run.args.tiles or run.out
    tiles = [read_tile(p) for p in sorted(Path(src).glob("*_Point.aptile"))]
    if not tiles:
        raise AirgridError(f"no Point tiles in {src}")
    table = run.daqi()
    by_pollutant: dict[str, list[PredictionTile]] = {}
    by_time: dict = {}
    for t in tiles:
        idx = index_tile(t, table)
        write_tile(run.path(_tile_name(t.pollutant, t.timestamp, "Index")), idx)
        by_pollutant.setdefault(t.pollutant, []).append(idx)
        by_time.setdefault(t.timestamp, []).append(idx)
    for t, idx_tiles in sorted(by_time.items()):
        if len(idx_tiles) > 1:
            ref = idx_tiles[0]
            vals = overall_index([np.where(x.values == x.missing, -np.inf, x.values) for x in idx_tiles])
            vals = np.where(np.isneginf(vals), ref.missing, vals)
            write_tile(run.path(_tile_name("ALL", t, "Index")),
                       PredictionTile("ALL", t, "Index", vals, ref.spec, ref.missing))
    sums = {}
    for p, idx_tiles in sorted(by_pollutant.items()):
        sums[p] = annual_summation(sorted(idx_tiles, key=lambda x: x.timestamp))
        write_tile(run.path(f"{p}_IndexSum.aptile"), sums[p])
    codes = driving_subindex(sums)
    np.save(run.path("driving_subindex.npy"), codes)


def cmd_report(run: Run):
    files = sorted(run.out.glob("scores_*.csv"))
    if not files:
        raise AirgridError(f"no score files in {run.out}")
    continent = {}
    if run.cfg.path_of("stations") is not None:
        continent = {s.station_id: s.continent for s in parse_station_file(run.cfg.path_of("stations"))}
    tables, spread = {}, []
    for f in files:
        scores = read_scores_csv(f)
        for s in scores:
            s.continent = continent.get(s.station_id, "")
        scores = [s for s in scores if s.continent]
        if not scores:
            continue
        exp = scores[0].experiment
        tables[f"{scores[0].pollutant}:{exp}"] = positive_r2_table(scores)
        for metric in ("bias", "pearson", "r2"):
            vals = [getattr(s, metric) for s in scores]
            if np.any(~np.isnan(vals)):
                spread.append((exp, metric, *iqr90(vals)))
    write_continent_table(run.path("continent_table.csv"), tables)
    with open(run.path("score_spread.csv"), "w", encoding="utf-8") as fh:
        fh.write("experiment,metric,p05,p95,width\n")
        for exp, metric, lo, hi, w in spread:
            fh.write(f"{exp},{metric},{lo!r},{hi!r},{w!r}\n")


COMMANDS = {
    "qc": cmd_qc, "features": cmd_features, "split": cmd_split, "train": cmd_train, "tune": cmd_tune,
    "experiment": cmd_experiment, "intervals": cmd_intervals, "predict-grid": cmd_predict_grid,
    "aqi": cmd_aqi, "report": cmd_report,
}


def execute(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit:
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    args.argv = argv
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    if args.command == "fixture":
        from .synthetic import write_world

        print(write_world(args.dest, seed=args.seed, days=args.days))
        return EXIT_OK

    if args.config is None:
        print(f"airgrid {args.command}: error: --config is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = Run(args, validate_config(args.config))
        COMMANDS[args.command](run)
        tag = args.command + (f"_{args.kind.replace('-', '_')}" if args.command == "experiment" else "")
        run.write_manifest(tag)
    except ConfigError as exc:
        print(f"airgrid {args.command}: configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    except (AirgridError, OSError, ValueError) as exc:
        print(f"airgrid {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
