"""Monte Carlo scenarios of joint rating paths.

Scenario ``s`` is driven entirely by the random substream ``(seed, s)``: it
draws a (T, 1 + 3N) block of uniforms, one row per year, laid out exactly
as in :func:`cmc_credit.model.step_joint`.  Hence results do not depend on
the number of scenarios requested or on the chunking used internally.

Binary file layout (little endian)::

    b"CMCS1" | uint32 metadata length | metadata JSON (utf-8) | uint8 payload

The payload holds ``paths[scenario, t, firm]`` for t = 0..T in C order.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, MalformedFile, UnknownFirm
from .model import ModelParams, _sampling_tables, apply_uniforms, fingerprint, state_arrays
from .rng import substream

MAGIC = b"CMCS1"


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Equally weighted joint rating paths, ``paths[s, t, n]`` for t = 0..T."""

    paths: np.ndarray
    sectors: np.ndarray
    m: int
    seed: int
    params_fingerprint: str = ""
    firm_ids: Optional[tuple] = None
    provenance: Optional[dict] = None  # free-form run info stored in the file header

    def __post_init__(self):
        p = np.array(self.paths, dtype=np.uint8, copy=True)
        p.setflags(write=False)
        object.__setattr__(self, "paths", p)
        sec = np.array(self.sectors, dtype=np.int64, copy=True)
        sec.setflags(write=False)
        object.__setattr__(self, "sectors", sec)
        if self.firm_ids is None:
            object.__setattr__(self, "firm_ids", tuple(str(i) for i in range(p.shape[2])))

    @property
    def n_scenarios(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> int:
        return self.paths.shape[1] - 1

    @property
    def n_firms(self) -> int:
        return self.paths.shape[2]

    @property
    def initial(self) -> np.ndarray:
        return self.paths[0, 0].astype(np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_scenarios, 1.0 / self.n_scenarios)

    def metadata(self) -> dict:
        meta = {
            "format": "CMCS1",
            "n_scenarios": self.n_scenarios,
            "T": self.horizon,
            "M": self.m,
            "firms": [
                {"id": fid, "rating": int(r), "sector": int(s)}
                for fid, r, s in zip(self.firm_ids, self.initial, self.sectors)
            ],
            "seed": self.seed,
            "params_fingerprint": self.params_fingerprint,
        }
        if self.provenance:
            meta["provenance"] = self.provenance
        return meta


def simulate(
    params: ModelParams,
    initial,
    horizon: int,
    n_scenarios: int,
    seed: int,
    firm_ids=None,
    chunk: int = 2000,
    provenance: Optional[dict] = None,
) -> ScenarioSet:
    """Simulate ``n_scenarios`` joint rating paths over ``horizon`` years."""
    if horizon < 1 or n_scenarios < 1:
        raise ValueError("horizon and n_scenarios must be >= 1")
    ratings, sectors = state_arrays(initial)
    m = params.m
    if np.any((ratings < 1) | (ratings > m + 1)):
        raise DataError(f"initial ratings must lie in 1..{m + 1}")
    if np.any((sectors < 1) | (sectors > params.n_sectors)):
        raise DataError(f"sectors must lie in 1..{params.n_sectors}")
    n = len(ratings)
    tables = _sampling_tables(params)
    paths = np.empty((n_scenarios, horizon + 1, n), dtype=np.uint8)
    paths[:, 0] = ratings
    for lo in range(0, n_scenarios, chunk):
        hi = min(lo + chunk, n_scenarios)
        u = np.stack([substream(seed, s).random((horizon, 1 + 3 * n)) for s in range(lo, hi)])
        cur = np.broadcast_to(ratings, (hi - lo, n))
        for t in range(horizon):
            cur = apply_uniforms(params, cur, sectors, u[:, t], tables)
            paths[lo:hi, t + 1] = cur
    ids = tuple(firm_ids) if firm_ids is not None else None
    return ScenarioSet(paths, sectors, m, int(seed), fingerprint(params), ids, provenance)


def _member_index(scenarios: ScenarioSet, members) -> np.ndarray:
    if members is None:
        return np.arange(scenarios.n_firms)
    lookup = {fid: i for i, fid in enumerate(scenarios.firm_ids)}
    idx = []
    for mem in members:
        if isinstance(mem, (int, np.integer)) and not isinstance(mem, bool):
            if not 0 <= mem < scenarios.n_firms:
                raise UnknownFirm(f"firm index {mem} not in scenario set")
            idx.append(int(mem))
        elif str(mem) in lookup:
            idx.append(lookup[str(mem)])
        else:
            raise UnknownFirm(f"firm {mem!r} not in scenario set")
    return np.asarray(idx, dtype=np.int64)


def default_counts(scenarios: ScenarioSet, members=None) -> np.ndarray:
    """Cumulative number of defaulted members, shape (n_scenarios, T+1)."""
    idx = _member_index(scenarios, members)
    return (scenarios.paths[:, :, idx] == scenarios.m + 1).sum(axis=2)


def save(scenarios: ScenarioSet, path) -> None:
    meta = json.dumps(scenarios.metadata(), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(np.ascontiguousarray(scenarios.paths).tobytes())


def load(path) -> ScenarioSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise MalformedFile(f"{path}: bad magic {blob[:5]!r}", offset=0)
    if len(blob) < 9:
        raise MalformedFile(f"{path}: truncated header", offset=len(blob))
    (mlen,) = struct.unpack("<I", blob[5:9])
    if 9 + mlen > len(blob):
        raise MalformedFile(f"{path}: metadata length {mlen} exceeds file size", offset=5)
    try:
        meta = json.loads(blob[9:9 + mlen].decode())
        n, t, m = int(meta["n_scenarios"]), int(meta["T"]), int(meta["M"])
        firms = meta["firms"]
        ids = tuple(str(f["id"]) for f in firms)
        init = np.array([int(f["rating"]) for f in firms], dtype=np.int64)
        sectors = np.array([int(f["sector"]) for f in firms], dtype=np.int64)
        prov = meta.get("provenance")
        seed = int(meta["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedFile(f"{path}: bad metadata ({exc!r})", offset=9) from None
    start = 9 + mlen
    expect = n * (t + 1) * len(firms)
    if len(blob) - start != expect:
        raise MalformedFile(
            f"{path}: payload has {len(blob) - start} bytes, expected {expect}", offset=start
        )
    paths = np.frombuffer(blob, dtype=np.uint8, offset=start).reshape(n, t + 1, len(firms))
    _check_paths(paths, init, m, path, start)
    return ScenarioSet(paths, sectors, m, seed, str(meta.get("params_fingerprint", "")), ids, prov)


def _check_paths(paths, init, m, path, start):
    n, t1, nf = paths.shape
    bad = (paths < 1) | (paths > m + 1)
    if np.any(bad):
        s, t, f = map(int, np.argwhere(bad)[0])
        raise MalformedFile(f"{path}: class {paths[s, t, f]} out of range", offset=start + (s * t1 + t) * nf + f)
    mism = paths[:, 0] != init
    if np.any(mism):
        s, f = map(int, np.argwhere(mism)[0])
        raise MalformedFile(f"{path}: scenario {s} does not start at the initial state", offset=start + s * t1 * nf + f)
    dead = np.maximum.accumulate(paths == m + 1, axis=1)
    left = dead & (paths != m + 1)
    if np.any(left):
        s, t, f = map(int, np.argwhere(left)[0])
        raise MalformedFile(f"{path}: firm leaves default", offset=start + (s * t1 + t) * nf + f)


def to_csv(scenarios: ScenarioSet, path) -> None:
    """Long-format export: scenario, t, firm_id, rating."""
    n, t1, nf = scenarios.paths.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "t", "firm_id", "rating"])
        for s in range(n):
            for t in range(t1):
                row = scenarios.paths[s, t]
                w.writerows((s, t, fid, int(r)) for fid, r in zip(scenarios.firm_ids, row))


def to_panel(scenarios: ScenarioSet, scenario: int = 0):
    """One simulated scenario as a fully observed RatingPanel (firms x periods)."""
    from .estimation import RatingPanel

    ratings = scenarios.paths[scenario].T.astype(np.int64)
    return RatingPanel(ratings, scenarios.sectors, scenarios.m, None, scenarios.firm_ids)
