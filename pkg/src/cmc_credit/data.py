"""Rating-history ingestion, panel export and run configuration."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .estimation import OptimizerConfig, RatingPanel, count_transitions
from .presets import SP_CLUBBING

REQUIRED_COLUMNS = ("firm_id", "sector", "year", "rating")

CLUBBING_PRESETS = {"sp6": SP_CLUBBING}


def identity_clubbing(m: int) -> dict:
    """Labels "1".."M+1" mapped to themselves (the export format)."""
    return {str(k): k for k in range(1, m + 2)}


@dataclass(frozen=True)
class RatingHistoryRecord:
    firm_id: str
    sector: int
    period: int
    rating: int


def _label(raw: str, clubbing: dict, strip_modifiers: bool):
    lab = raw.strip()
    if lab in clubbing:
        return clubbing[lab]
    if strip_modifiers:
        base = lab.rstrip("+-")
        if base in clubbing:
            return clubbing[base]
    return None


def read_records(path, clubbing: dict, sector_map: Optional[dict] = None, strip_modifiers: bool = True):
    """Parse the CSV into records; raises DataError with the offending line number."""
    records = []
    seen = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing column(s) {missing}; header must contain {','.join(REQUIRED_COLUMNS)}")
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            try:
                fid = row["firm_id"].strip()
                raw_sec = row["sector"].strip()
                year = int(row["year"])
                raw_rating = row["rating"]
            except (AttributeError, ValueError, TypeError):
                raise DataError(f"{path}:{line}: malformed row {row!r}") from None
            if not fid:
                raise DataError(f"{path}:{line}: empty firm_id")
            if sector_map is not None:
                if raw_sec not in sector_map:
                    raise DataError(f"{path}:{line}: sector {raw_sec!r} not in sector map")
                sec = int(sector_map[raw_sec])
            else:
                try:
                    sec = int(raw_sec)
                except ValueError:
                    raise DataError(f"{path}:{line}: sector {raw_sec!r} is not an integer") from None
            if sec < 1:
                raise DataError(f"{path}:{line}: sector must be >= 1")
            cls = _label(raw_rating, clubbing, strip_modifiers)
            if cls is None:
                raise DataError(f"{path}:{line}: unknown rating label {raw_rating!r}")
            key = (fid, year)
            if key in seen:
                raise DataError(f"{path}:{line}: duplicate record for firm {fid!r}, year {year} (first on line {seen[key]})")
            seen[key] = line
            records.append((line, RatingHistoryRecord(fid, sec, year, int(cls))))
    return records


def ingest(path, clubbing=None, sector_map: Optional[dict] = None, strip_modifiers: bool = True):
    """Build a RatingPanel from ``firm_id,sector,year,rating`` records.

    Firms are ordered lexicographically by id, columns cover every year from
    the first to the last one present; unrated firm-years are masked.
    Returns ``(panel, report)``.
    """
    clubbing = CLUBBING_PRESETS["sp6"] if clubbing is None else clubbing
    if isinstance(clubbing, str):
        if clubbing not in CLUBBING_PRESETS:
            raise ConfigError(f"unknown clubbing preset {clubbing!r}")
        clubbing = CLUBBING_PRESETS[clubbing]
    n_classes = max(clubbing.values())
    m = n_classes - 1
    recs = read_records(path, clubbing, sector_map, strip_modifiers)
    if not recs:
        raise DataError(f"{path}: no records")
    firm_ids = sorted({r.firm_id for _, r in recs})
    pos = {f: i for i, f in enumerate(firm_ids)}
    y0 = min(r.period for _, r in recs)
    y1 = max(r.period for _, r in recs)
    t_len = y1 - y0 + 1
    ratings = np.zeros((len(firm_ids), t_len), dtype=np.int64)
    missing = np.ones((len(firm_ids), t_len), dtype=bool)
    sectors = np.zeros(len(firm_ids), dtype=np.int64)
    first_line = {}
    for line, r in recs:
        i = pos[r.firm_id]
        if sectors[i] and sectors[i] != r.sector:
            raise DataError(f"{path}:{line}: firm {r.firm_id!r} changes sector ({sectors[i]} on line {first_line[r.firm_id]})")
        sectors[i] = r.sector
        first_line.setdefault(r.firm_id, line)
        ratings[i, r.period - y0] = r.rating
        missing[i, r.period - y0] = False
    try:
        panel = RatingPanel(ratings, sectors, m, missing, tuple(firm_ids), tuple(range(y0, y1 + 1)))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    counts = count_transitions(panel)
    report = {
        "firms": len(firm_ids),
        "periods": t_len,
        "first_year": y0,
        "observations": len(recs),
        "transitions": counts.total,
        "masked_cells": int(missing.sum()),
        "M": m,
        "S": int(sectors.max()),
    }
    return panel, report


def export_panel(panel: RatingPanel, path, labels: Optional[dict] = None) -> None:
    """Write observed cells as CSV; ``labels`` maps class -> rating label (default: the class number)."""
    years = panel.periods or tuple(range(panel.n_periods))
    ids = panel.firm_ids or tuple(str(i) for i in range(panel.n_firms))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REQUIRED_COLUMNS)
        for n in range(panel.n_firms):
            for t in range(panel.n_periods):
                if panel.missing[n, t]:
                    continue
                cls = int(panel.ratings[n, t])
                w.writerow([ids[n], int(panel.sectors[n]), years[t], labels[cls] if labels else cls])


# -- run configuration -------------------------------------------------------

DEFAULT_CONFIG = {
    "output_dir": "out",
    "data": {"ratings_csv": None, "clubbing": "sp6", "sectors": None, "strip_modifiers": True},
    "model": {"params": None, "transition_matrix": None},
    "estimation": {},
    "simulation": {"n_scenarios": 10000, "horizon": 10, "seed": 0, "portfolio": "itraxx"},
    "curve": {"rate": 0.05},
    "tranches": "itraxx",
    "portfolio": {"target_mean": 0.3133, "alpha": [0.9, 0.99], "lower": -0.5, "upper": 0.5, "assets": None, "mu_grid": None},
    "risk": {"levels": [0.9, 0.99], "bins": 50},
    "tolerances": {"marginal": 1e-8, "fair_spread": 1e-8},
    "lp_method": "auto",
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: str = "."
    fingerprint: str = field(default="")

    def __post_init__(self):
        # where results go does not change what they are
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        self.fingerprint = hashlib.sha256(blob.encode()).hexdigest()[:16]

    def section(self, name):
        return self.raw[name]

    def path(self, p) -> Optional[str]:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    @property
    def output_dir(self) -> str:
        return self.path(self.raw["output_dir"])

    def optimizer_config(self) -> OptimizerConfig:
        est = dict(self.raw["estimation"])
        if "mutation" in est:
            est["mutation"] = tuple(est["mutation"])
        try:
            return OptimizerConfig(**est)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"estimation: {exc}") from None


def load_config(path, seed: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    raw = _merge(copy.deepcopy(DEFAULT_CONFIG), user)
    if seed is not None:
        raw["simulation"]["seed"] = int(seed)
        raw["estimation"] = dict(raw["estimation"], seed=int(seed))
    if out is not None:
        raw["output_dir"] = os.path.abspath(out)
    return RunConfig(raw, os.path.dirname(os.path.abspath(path)))
