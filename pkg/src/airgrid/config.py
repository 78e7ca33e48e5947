"""Run configuration: a sectioned TOML file, validated against a fixed schema.

Every key, its type and its default are listed in ``SCHEMA``; ``airgrid
--help`` prints the same table. Relative paths resolve against the
directory holding the config file.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import POLLUTANTS
from .errors import ConfigError, ValidationError
from .gbdt import MAX_BINS, TrainParams
from .stations import QcRuleSet
from .tuning import SearchSpace

_D = TrainParams()
_S = SearchSpace()

# section -> key -> (type, default, help); default None means optional / no default
SCHEMA: dict[str, dict[str, tuple]] = {
    "paths": {
        "stations": (str, None, "stations CSV"),
        "measurements": (str, None, "measurements CSV"),
        "covariates": (str, None, "directory of covgrid files"),
        "daqi": (str, None, "DAQI table CSV (built-in UK table when absent)"),
        "out": (str, "out", "output directory"),
    },
    "run": {
        "pollutant": (str, "NO2", "pollutant to model"),
        "seed": (int, 0, "master seed"),
        "threads": (int, 1, "worker thread cap"),
        "experiment": (str, "baseline", "default experiment kind"),
        "k_folds": (int, 10, "folds for within-network validation"),
    },
    "train": {
        "num_leaves": (int, _D.num_leaves, "max leaves per tree"),
        "min_data_in_leaf": (int, _D.min_data_in_leaf, "min rows per leaf"),
        "lambda_l2": (float, _D.lambda_l2, "L2 leaf penalty"),
        "learning_rate": (float, _D.learning_rate, "shrinkage"),
        "max_trees": (int, _D.max_trees, "boosting round cap"),
        "early_stopping_rounds": (int, _D.early_stopping_rounds, "patience on validation loss"),
        "goss_top_rate": (float, _D.goss_top_rate, "GOSS large-gradient share a"),
        "goss_other_rate": (float, _D.goss_other_rate, "GOSS sampled share b"),
        "min_gain_to_split": (float, _D.min_gain_to_split, "minimum split gain"),
        "max_bin": (int, MAX_BINS, "histogram bins (fixed)"),
    },
    "search": {
        "num_leaves": (list, list(_S.num_leaves), "[lo, hi] integer range"),
        "min_data_in_leaf": (list, list(_S.min_data_in_leaf), "[lo, hi] integer range"),
        "lambda_l2": (list, list(_S.lambda_l2), "[lo, hi] log-uniform range"),
        "n_candidates": (int, 5, "parameter sets to try"),
    },
    "qc": {
        "ppb_unit": (bool, True, "R1 reject ppb-labelled series"),
        "too_few_points": (bool, True, "R2 reject short series"),
        "conflicting_duplicates": (bool, True, "R3 reject conflicting duplicates"),
        "constant_values": (bool, True, "R4 reject constant series"),
        "hour_coverage": (bool, True, "R5 require all 24 hours"),
        "weekday_coverage": (bool, True, "R6 require all 7 weekdays"),
        "min_points": (int, 3, "threshold for R2"),
    },
    "grid": {
        "timestamps": (list, [], "RFC-3339 hours to render"),
        "resolution": (float, 0.25, "cell size in degrees"),
        "lat_min": (float, None, "region bounds; global grid when all four are absent"),
        "lat_max": (float, None, ""),
        "lon_min": (float, None, ""),
        "lon_max": (float, None, ""),
        "block_cells": (int, 1 << 15, "cells per work block"),
        "top_k": (int, 100, "placement ranking length"),
    },
}

INPUT_PATHS = ("stations", "measurements", "covariates", "daqi")


@dataclass
class RunConfig:
    path: Path | None
    sha256: str
    sections: dict[str, dict] = field(default_factory=dict)

    def get(self, dotted: str):
        sec, _, key = dotted.partition(".")
        return self.sections[sec][key]

    def path_of(self, key: str) -> Path | None:
        return self.sections["paths"][key]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    @property
    def pollutant(self) -> str:
        return self.sections["run"]["pollutant"]

    def train_params(self) -> TrainParams:
        t = {k: v for k, v in self.sections["train"].items() if k != "max_bin"}
        return TrainParams(seed=self.seed, **t)

    def search_space(self) -> SearchSpace:
        s = self.sections["search"]
        return SearchSpace(tuple(s["num_leaves"]), tuple(s["min_data_in_leaf"]), tuple(s["lambda_l2"]))

    def qc_rules(self) -> QcRuleSet:
        return QcRuleSet(**self.sections["qc"])

    def require(self, *keys: str) -> None:
        """Fail with a config error naming every absent ``section.key``."""
        missing = [k for k in keys if self.get(k) is None]
        if missing:
            raise ConfigError([f"missing required key {k}" for k in missing])


def help_table() -> str:
    lines = ["configuration keys (section.key = default):"]
    for sec, keys in SCHEMA.items():
        for key, (_, default, doc) in keys.items():
            shown = "unset" if default is None else repr(default)
            lines.append(f"  {sec}.{key} = {shown}  {doc}".rstrip())
    return "\n".join(lines)


_SECTION = re.compile(r"^\s*\[([^\[\]]+)\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _duplicate_keys(text: str) -> list[str]:
    """Line scan for repeated keys, so the error can name them."""
    seen, dupes, section = set(), [], ""
    for n, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            if ("[]", section) in seen:
                dupes.append(f"line {n}: duplicate section [{section}]")
            seen.add(("[]", section))
            continue
        m = _KEY.match(line)
        if m:
            key = (section, m.group(1))
            if key in seen:
                dupes.append(f"line {n}: duplicate key {section}.{m.group(1)}")
            seen.add(key)
    return dupes


def _check_type(name, value, typ, problems) -> bool:
    ok = isinstance(value, typ) and not (typ in (int, float) and isinstance(value, bool))
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        ok = True
    if not ok:
        problems.append(f"{name}: expected {typ.__name__}, got {type(value).__name__}")
    return ok


def parse_config(text: str, base_dir: Path | None = None, path: Path | None = None) -> RunConfig:
    problems = _duplicate_keys(text)
    if problems:
        raise ConfigError(problems)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax: {exc}"]) from None

    sections = {}
    for sec in doc:
        if sec not in SCHEMA:
            problems.append(f"unknown section [{sec}]")
        elif not isinstance(doc[sec], dict):
            problems.append(f"{sec}: expected a section, got a value")
    for sec, keys in SCHEMA.items():
        given = doc.get(sec, {}) if isinstance(doc.get(sec, {}), dict) else {}
        out = {}
        for key in given:
            if key not in keys:
                problems.append(f"unknown key {sec}.{key}")
        for key, (typ, default, _) in keys.items():
            if key in given:
                v = given[key]
                if _check_type(f"{sec}.{key}", v, typ, problems):
                    out[key] = float(v) if typ is float else v
            else:
                out[key] = list(default) if isinstance(default, list) else default
        sections[sec] = out

    # value checks beyond type
    if sections["train"].get("max_bin") != MAX_BINS:
        problems.append(f"train.max_bin must be {MAX_BINS} (held constant)")
    if sections["run"].get("pollutant") not in POLLUTANTS:
        problems.append(f"run.pollutant must be one of {', '.join(POLLUTANTS)}")
    for key in ("num_leaves", "min_data_in_leaf", "lambda_l2"):
        v = sections["search"].get(key)
        if v is not None and (len(v) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            problems.append(f"search.{key}: expected [lo, hi]")
    for ts in sections["grid"].get("timestamps") or []:
        if not isinstance(ts, str):
            problems.append("grid.timestamps: expected a list of strings")
            break
    bounds = [sections["grid"].get(k) for k in ("lat_min", "lat_max", "lon_min", "lon_max")]
    if any(b is None for b in bounds) and not all(b is None for b in bounds):
        problems.append("grid: give all four of lat_min, lat_max, lon_min, lon_max or none")

    base = base_dir or Path.cwd()
    for key in (*INPUT_PATHS, "out"):
        v = sections["paths"].get(key)
        if v is None:
            continue
        p = Path(v)
        p = p if p.is_absolute() else base / p
        sections["paths"][key] = p
        if key in INPUT_PATHS and not p.exists():
            problems.append(f"paths.{key}: {p} does not exist")

    if not problems:
        try:
            cfg = RunConfig(path, hashlib.sha256(text.encode("utf-8")).hexdigest(), sections)
            cfg.train_params()
            cfg.search_space()
        except ValidationError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(path) -> RunConfig:
    """Parse, default and validate a config file; problems are reported together."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text, path.parent.resolve(), path)
