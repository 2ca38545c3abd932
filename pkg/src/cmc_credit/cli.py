"""Command line entry point: ``cmc estimate|simulate|price|optimize|frontier``.

Every subcommand reads one JSON run configuration and writes its artifacts
into the output directory.  Subcommands hand data to each other through
those files only (params.json -> scenarios.cmcs -> returns.csv).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys

import numpy as np

from . import data as data_io
from .errors import CMCError, ConfigError, DataError, NoBracket
from .estimation import count_transitions, estimate_parameters, estimate_transition_matrix
from .model import TransitionMatrix, load_params, save_params
from .portfolio import CvarProblem, attainable_mean_range, efficient_frontier, optimize_portfolio, write_solution
from .presets import itraxx_portfolio, itraxx_tranche_specs, sp6_model_params, sp6_transition_matrix
from .pricing import (
    CdxTranche,
    RateCurve,
    fair_spread,
    risk_stats,
    scenario_returns,
    write_histogram_csv,
)
from .simulation import load as load_scenarios
from .simulation import save as save_scenarios
from .simulation import simulate

COMMANDS = ("estimate", "simulate", "price", "optimize", "frontier")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _alpha_tag(alpha: float) -> str:
    return f"a{alpha:g}"


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _existing(cfg, p, what):
    path = cfg.path(p)
    if path is None or not os.path.exists(path):
        raise ConfigError(f"{what}: file {path!r} not found")
    return path


class Run:
    """Shared state of one subcommand invocation."""

    def __init__(self, cfg: data_io.RunConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        os.makedirs(self.out, exist_ok=True)

    def file(self, name):
        return os.path.join(self.out, name)

    def provenance(self, seed) -> dict:
        return {"config_fingerprint": self.cfg.fingerprint, "seed": seed}

    def comment(self, seed) -> str:
        return f"config_fingerprint={self.cfg.fingerprint} seed={seed}"

    # -- config sections ------------------------------------------------------

    def params(self):
        ref = self.cfg.raw["model"]["params"]
        tol = self.cfg.raw["tolerances"]["marginal"]
        if ref == "sp6":
            return sp6_model_params()
        if ref is None:
            path = self.file("params.json")
            if not os.path.exists(path):
                raise ConfigError("model.params unset and no params.json in the output directory; run `cmc estimate` first")
            return load_params(path, tol)
        return load_params(_existing(self.cfg, ref, "model.params"), tol)

    def portfolio(self):
        spec = self.cfg.raw["simulation"]["portfolio"]
        try:
            if spec == "itraxx" or (isinstance(spec, dict) and spec.get("preset") == "itraxx"):
                kw = {} if spec == "itraxx" else {k: v for k, v in spec.items() if k != "preset"}
                ratings, sectors = itraxx_portfolio(**kw)
                ids = tuple(f"F{i + 1:03d}" for i in range(len(ratings)))
            elif isinstance(spec, dict):
                ratings = np.asarray(spec["ratings"], dtype=np.int64)
                sectors = np.asarray(spec["sectors"], dtype=np.int64)
                ids = tuple(map(str, spec.get("ids") or (f"F{i + 1:03d}" for i in range(len(ratings)))))
                if not (len(ratings) == len(sectors) == len(ids)):
                    raise ValueError("ratings, sectors and ids must have equal length")
            else:
                raise ValueError(f"unsupported portfolio spec {spec!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"simulation.portfolio: {exc}") from None
        return ratings, sectors, ids

    def curve(self, horizon):
        c = self.cfg.raw["curve"]
        try:
            if "risk_free" in c:
                return RateCurve(c["risk_free"], c["discount"])
            if "rates" in c:
                return RateCurve.from_rates(c["rates"])
            return RateCurve.flat(float(c["rate"]), int(c.get("horizon", horizon)), c.get("discount_rate"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"curve: {exc}") from None

    def tranches(self):
        spec = self.cfg.raw["tranches"]
        try:
            if spec == "itraxx":
                dicts = itraxx_tranche_specs()
            elif isinstance(spec, dict) and spec.get("preset") == "itraxx":
                dicts = itraxx_tranche_specs(**{k: v for k, v in spec.items() if k != "preset"})
            else:
                dicts = list(spec)
            out = []
            for k, d in enumerate(dicts):
                t = CdxTranche.from_dict(d)
                out.append(t if t.name else CdxTranche.from_dict(dict(d, name=f"tranche{k}")))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"tranches: {exc}") from None
        names = [t.name for t in out]
        if len(set(names)) != len(names):
            raise ConfigError("tranches: names must be unique")
        return out

    def alphas(self):
        a = self.cfg.raw["portfolio"]["alpha"]
        return [float(x) for x in (a if isinstance(a, list) else [a])]

    # -- subcommands ----------------------------------------------------------

    def estimate(self):
        d = self.cfg.raw["data"]
        csv_path = _existing(self.cfg, d["ratings_csv"], "data.ratings_csv")
        panel, report = data_io.ingest(csv_path, d["clubbing"], d["sectors"], d["strip_modifiers"])
        tm = self.cfg.raw["model"]["transition_matrix"]
        try:
            if tm is None:
                p = estimate_transition_matrix(count_transitions(panel))
            elif tm == "sp6":
                p = sp6_transition_matrix()
            else:
                p = TransitionMatrix(tm)
        except ValueError as exc:
            raise ConfigError(f"model.transition_matrix: {exc}") from None
        if p.m != panel.m:
            raise ConfigError(f"transition matrix has M={p.m}, panel has M={panel.m}")
        opt = self.cfg.optimizer_config()
        res = estimate_parameters(panel, p, opt)
        prov = self.provenance(opt.seed)
        res.to_json(self.file("estimation.json"), extra=dict(prov, ingest=report))
        save_params(res.params, self.file("params.json"), extra=prov)
        return f"loglik={res.loglik!r} transitions={report['transitions']}"

    def simulate(self):
        sim = self.cfg.raw["simulation"]
        params = self.params()
        ratings, sectors, ids = self.portfolio()
        seed = int(sim["seed"])
        scen = simulate(
            params, (ratings, sectors), int(sim["horizon"]), int(sim["n_scenarios"]), seed,
            firm_ids=ids, provenance=self.provenance(seed),
        )
        save_scenarios(scen, self.file("scenarios.cmcs"))
        return f"scenarios={scen.n_scenarios} T={scen.horizon} firms={scen.n_firms}"

    def _load_scenarios(self):
        ref = self.cfg.raw["simulation"].get("scenarios")
        path = _existing(self.cfg, ref, "simulation.scenarios") if ref else self.file("scenarios.cmcs")
        if not os.path.exists(path):
            raise ConfigError("no scenarios.cmcs in the output directory; run `cmc simulate` first")
        return load_scenarios(path)

    def price(self):
        scen = self._load_scenarios()
        tranches = self.tranches()
        curve = self.curve(scen.horizon)
        levels = [float(a) for a in self.cfg.raw["risk"]["levels"]]
        bins = int(self.cfg.raw["risk"]["bins"])
        tol = float(self.cfg.raw["tolerances"]["fair_spread"])
        seed = scen.seed
        comment = self.comment(seed)
        rows, returns = [], []
        for tr in tranches:
            try:
                s_fair = fair_spread(tr, scen, curve, tol)
                detail = ""
            except NoBracket as exc:
                s_fair, detail = None, str(exc)
            dist = scenario_returns(tr, scen, curve)
            returns.append(dist.values)
            stats = {f"{a:g}": risk_stats(dist, a, bins) for a in levels}
            # the histogram does not depend on the level
            write_histogram_csv(next(iter(stats.values())), self.file(f"hist_{_safe(tr.name)}.csv"), comment)
            row = {
                "name": tr.name,
                "attach": tr.attach,
                "detach": tr.detach,
                "maturity": tr.maturity,
                "quoted_spread": tr.spread,
                "upfront": tr.upfront,
                "fair_spread": s_fair,
                "expected_return": float(np.mean(dist.values)),
                "risk": {a: st.to_dict() for a, st in stats.items()},
            }
            if detail:
                row["detail"] = detail
            rows.append(row)
        prov = dict(self.provenance(seed), scenarios_params_fingerprint=scen.params_fingerprint)
        _dump_json(dict(prov, tranches=rows), self.file("spreads.json"))
        with open(self.file("spreads.csv"), "w", newline="") as fh:
            fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["name", "fair_spread", "quoted_spread", "expected_return"])
            for r in rows:
                fs = "" if r["fair_spread"] is None else repr(r["fair_spread"])
                w.writerow([r["name"], fs, repr(r["quoted_spread"]), repr(r["expected_return"])])
        mat = np.column_stack(returns)
        with open(self.file("returns.csv"), "w", newline="") as fh:
            fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow([t.name for t in tranches])
            w.writerows([repr(float(x)) for x in row] for row in mat)
        return f"tranches={len(tranches)} scenarios={scen.n_scenarios}"

    def _problem(self, alpha):
        path = self.file("returns.csv")
        if not os.path.exists(path):
            raise ConfigError("no returns.csv in the output directory; run `cmc price` first")
        names, mat, seed = read_returns_csv(path)
        port = self.cfg.raw["portfolio"]
        assets = port["assets"]
        if assets:
            missing = [a for a in assets if a not in names]
            if missing:
                raise ConfigError(f"portfolio.assets not priced: {missing}")
            idx = [names.index(a) for a in assets]
            names, mat = [names[i] for i in idx], mat[:, idx]
        try:
            prob = CvarProblem(mat, float(port["target_mean"]), alpha, port["lower"], port["upper"], tuple(names))
        except ValueError as exc:
            raise ConfigError(f"portfolio: {exc}") from None
        return prob, seed

    def _single_asset(self, prob):
        out = {}
        for k, name in enumerate(prob.names):
            out[name] = risk_stats(prob.returns[:, k], prob.alpha).cvar
        return out

    def optimize(self):
        lines = []
        for alpha in self.alphas():
            prob, seed = self._problem(alpha)
            sol = optimize_portfolio(prob, self.cfg.raw["lp_method"])
            tag = _alpha_tag(alpha)
            extra = dict(self.provenance(seed), single_asset_cvar=self._single_asset(prob))
            write_solution(
                sol, self.file(f"optimize_{tag}.json"), self.file(f"weights_{tag}.csv"),
                self.file(f"hist_optimized_{tag}.csv"), extra, self.comment(seed),
            )
            lines.append(f"alpha={alpha:g} cvar={sol.cvar!r}")
        return " ".join(lines)

    def frontier(self):
        grid_spec = self.cfg.raw["portfolio"]["mu_grid"]
        lines = []
        for alpha in self.alphas():
            prob, seed = self._problem(alpha)
            if grid_spec is None or isinstance(grid_spec, dict):
                n = int((grid_spec or {}).get("n", 11))
                lo, hi = attainable_mean_range(prob)
                grid = np.linspace(lo, hi, n)
            else:
                grid = np.asarray(grid_spec, dtype=float)
            sols = efficient_frontier(prob, grid, self.cfg.raw["lp_method"])
            tag = _alpha_tag(alpha)
            _dump_json(dict(self.provenance(seed), alpha=alpha, points=[s.to_dict() for s in sols]),
                       self.file(f"frontier_{tag}.json"))
            with open(self.file(f"frontier_{tag}.csv"), "w", newline="") as fh:
                fh.write(f"# {self.comment(seed)}\n")
                w = csv.writer(fh)
                w.writerow(["target_mean", "status", "mean_return", "CVaR", "VaR", *prob.names])
                for s in sols:
                    if s.weights is None:
                        w.writerow([repr(s.target_mean), s.status, "", "", "", *[""] * prob.n_assets])
                    else:
                        w.writerow([repr(s.target_mean), s.status, repr(s.mean), repr(s.cvar), repr(s.var),
                                    *map(repr, map(float, s.weights))])
            ok = sum(s.weights is not None for s in sols)
            lines.append(f"alpha={alpha:g} points={ok}/{len(sols)}")
        return " ".join(lines)


def read_returns_csv(path):
    """Read returns.csv: (names, matrix, seed recorded in the comment line)."""
    seed = None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            m = re.search(r"seed=(\S+)", ln)
            if m:
                seed = int(m.group(1)) if m.group(1).lstrip("-").isdigit() else m.group(1)
        elif ln:
            body.append(ln)
    if not body:
        raise DataError(f"{path}: no header")
    rows = list(csv.reader(body))
    names = rows[0]
    try:
        mat = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if mat.ndim != 2 or mat.shape[0] == 0 or mat.shape[1] != len(names):
        raise DataError(f"{path}: expected a non-empty {len(names)}-column matrix")
    return names, mat, seed


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmc", description="Coupled Markov chain credit toolkit")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override simulation and optimizer seeds")
    ap.add_argument("--out", default=None, help="override the output directory")
    return ap


def run(command: str, config_path: str, seed=None, out=None) -> str:
    cfg = data_io.load_config(config_path, seed=seed, out=out)
    return getattr(Run(cfg), command)()


def _fail(exc_name: str, code: int, detail: str) -> int:
    detail = " ".join(str(detail).split())
    print(f"error={exc_name} exit={code} detail={detail}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = run(args.command, args.config, args.seed, args.out)
    except CMCError as exc:
        return _fail(type(exc).__name__, exc.exit_code, exc)
    except OSError as exc:
        return _fail(type(exc).__name__, ConfigError.exit_code, exc)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return _fail(type(exc).__name__, CMCError.exit_code, exc)
    print(f"{args.command}: {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
