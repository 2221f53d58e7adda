"""Command-line experiment harness.

Subcommands::

    kmmr generate   --config cfg.json     write dataset CSVs + metadata
    kmmr select     --config cfg.json     one selection run, table + JSON report
    kmmr experiment --config cfg.json     sweep x replications, CSV rows + aggregate
    kmmr plotdata   --config cfg.json     per-candidate raw/normalized ITC table

The config file is a flat JSON object (schema below); CLI flags override
file keys.  Exit codes: 0 ok, 2 config error, 3 numerical failure,
4 partial experiment failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .datagen import ScenarioSpec, generate, render_dataset_csv, render_metadata
from .errors import ConfigError, KmmrError, NumericalFailure
from .itc import itc
from .kernels import CANDIDATE_GRID, KernelSpec, candidate_grid
from .mmr import MmrProblem, fit_gradient, fit_linear
from .models import parse_model_config
from .numerics import chi2_quantile_1df, substream
from .selection import (
    SelectionSeeds,
    baseline_select,
    candidate_table_csv,
    evaluate_mse,
    lisc_select,
)

_METHODS = ("lisc", "median", "silverman")


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; unknown keys are rejected."""

    scenarios: List[str] = field(default_factory=lambda: ["LS"])
    true_functions: List[str] = field(default_factory=lambda: ["linear"])
    model: str = "poly:4"
    candidates: List[str] = field(default_factory=lambda: list(CANDIDATE_GRID))
    n_list: List[int] = field(default_factory=lambda: [500])
    replications: int = 10
    base_seed: int = 527
    alpha: float = 0.05
    output_dir: str = "out"
    lw_dim: Optional[int] = None
    workers: int = 1
    itc_mask: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def validate(self) -> None:
        if not self.scenarios or not self.true_functions or not self.n_list:
            raise ConfigError("scenarios, true_functions and n_list must be non-empty")
        parse_model_config(self.model)
        for lab in self.candidates:
            KernelSpec.from_label(lab)
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if any(n < 4 for n in self.n_list):
            raise ConfigError("every n must be >= 4")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def scenario_spec(self, scenario: str, f_star: str, n: int, seed: int) -> ScenarioSpec:
        d = self.lw_dim if scenario == "LW" else None
        return ScenarioSpec(scenario=scenario, true_function=f_star, n=n, seed=seed, d=d)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_float(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# generate


def cmd_generate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir)
    for scenario in cfg.scenarios:
        for f_star in cfg.true_functions:
            for n in cfg.n_list:
                spec = cfg.scenario_spec(scenario, f_star, n, cfg.base_seed)
                splits = generate(spec)
                stem = f"{scenario}_{f_star}_n{n}_seed{spec.seed}"
                for ds in splits:
                    _atomic_write(out / f"{stem}_{ds.split}.csv", render_dataset_csv(ds))
                _atomic_write(out / f"{stem}_meta.json", render_metadata(spec, splits[0]))
                print(f"wrote {stem}_{{train,valid,test}}.csv")
    return 0


# ---------------------------------------------------------------------------
# select


def cmd_select(cfg: ExperimentConfig) -> int:
    scenario, f_star, n = cfg.scenarios[0], cfg.true_functions[0], cfg.n_list[0]
    spec = cfg.scenario_spec(scenario, f_star, n, cfg.base_seed)
    train, valid, _test = generate(spec)
    template = parse_model_config(cfg.model)
    result = lisc_select(
        train,
        candidate_grid(cfg.candidates),
        template,
        alpha=cfg.alpha,
        seeds=SelectionSeeds(cfg.base_seed),
        valid=valid,
        itc_mask=cfg.itc_mask,
    )
    header = f"{'label':10s} {'ITC':>12s} {'ident':>6s} {'KEIC':>12s} {'ratio':>12s}"
    print(f"selection on {scenario}/{f_star} n={n} seed={cfg.base_seed} alpha={cfg.alpha}")
    print(header)
    for rec in result.candidates:
        ratio = f"{rec.ratio:12.4g}" if np.isfinite(rec.ratio) else "         inf"
        mark = " <- chosen" if rec.kernel == result.chosen else ""
        print(
            f"{rec.label:10s} {rec.itc_report.itc_value:12.4g} "
            f"{str(rec.itc_report.identifiable):>6s} "
            f"{rec.keic_report.keic_value:12.4g} {ratio}{mark}"
        )
    print(f"path: {result.path}" + (f" ({result.warning})" if result.warning else ""))
    out = Path(cfg.output_dir) / f"selection_{scenario}_{f_star}_n{n}.json"
    _atomic_write(out, json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    _atomic_write(out.with_suffix(".csv"), candidate_table_csv(result))
    print(f"report: {out}")
    return 0


# ---------------------------------------------------------------------------
# experiment


def _run_replication(args) -> dict:
    """One (scenario, f_star, n, rep) cell: all three methods on shared data."""
    cfg_data, scenario, f_star, n, rep = args
    cfg = ExperimentConfig.from_dict(cfg_data)
    rep_seed = cfg.base_seed + rep
    template = parse_model_config(cfg.model)
    seeds = SelectionSeeds(rep_seed)
    out = {"scenario": scenario, "f_star": f_star, "n": n, "rep": rep, "rows": []}
    try:
        spec = cfg.scenario_spec(scenario, f_star, n, rep_seed)
        train, valid, test = generate(spec)
        runs = {
            "lisc": lambda: lisc_select(
                train,
                candidate_grid(cfg.candidates),
                template,
                alpha=cfg.alpha,
                seeds=seeds,
                valid=valid,
                itc_mask=cfg.itc_mask,
            ),
            "median": lambda: baseline_select(train, "median", template, seeds, valid),
            "silverman": lambda: baseline_select(train, "silverman", template, seeds, valid),
        }
        for method in _METHODS:
            result = runs[method]()
            mse = evaluate_mse(result, test, f_star)
            out["rows"].append(
                {
                    "method": method,
                    "mse": mse,
                    "chosen_label": result.chosen.label,
                    "path": result.path,
                }
            )
    except KmmrError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def cmd_experiment(cfg: ExperimentConfig) -> int:
    cfg_data = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    tasks = [
        (cfg_data, scenario, f_star, n, rep)
        for scenario in cfg.scenarios
        for f_star in cfg.true_functions
        for n in cfg.n_list
        for rep in range(cfg.replications)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_replication, tasks))
    else:
        results = [_run_replication(t) for t in tasks]

    any_failed = False
    by_n: dict = {}
    for res in results:
        by_n.setdefault(res["n"], []).append(res)

    out_dir = Path(cfg.output_dir)
    for n in sorted(by_n):
        rows = []
        for res in sorted(by_n[n], key=lambda r: (r["scenario"], r["f_star"], r["rep"])):
            if "error" in res:
                any_failed = True
                for method in _METHODS:
                    rows.append(
                        (res["scenario"], res["f_star"], method, res["rep"], "", "", "error")
                    )
                print(
                    f"replication failed: {res['scenario']}/{res['f_star']} "
                    f"n={n} rep={res['rep']}: {res['error']}",
                    file=sys.stderr,
                )
                continue
            for row in res["rows"]:
                rows.append(
                    (
                        res["scenario"],
                        res["f_star"],
                        row["method"],
                        res["rep"],
                        _fmt_float(row["mse"]),
                        row["chosen_label"],
                        row["path"],
                    )
                )
        lines = ["scenario,f_star,method,rep,mse,chosen_label,path"]
        lines += [",".join(str(v) for v in row) for row in rows]
        _atomic_write(out_dir / f"results_n{n}.csv", "\n".join(lines) + "\n")

        agg_lines = ["scenario,f_star,method,mean_mse,std_mse,n_reps"]
        seen = []
        for res in by_n[n]:
            key = (res["scenario"], res["f_star"])
            if key not in seen:
                seen.append(key)
        for scenario, f_star in sorted(seen):
            for method in _METHODS:
                mses = [
                    float(row[4])
                    for row in rows
                    if row[0] == scenario and row[1] == f_star and row[2] == method and row[4] != ""
                ]
                if mses:
                    agg_lines.append(
                        f"{scenario},{f_star},{method},"
                        f"{_fmt_float(np.mean(mses))},{_fmt_float(np.std(mses))},{len(mses)}"
                    )
                else:
                    agg_lines.append(f"{scenario},{f_star},{method},,,0")
        _atomic_write(out_dir / f"aggregate_n{n}.csv", "\n".join(agg_lines) + "\n")
        print(f"wrote results_n{n}.csv and aggregate_n{n}.csv")

    return 4 if any_failed else 0


# ---------------------------------------------------------------------------
# plotdata


def cmd_plotdata(cfg: ExperimentConfig) -> int:
    scenario, f_star = cfg.scenarios[0], cfg.true_functions[0]
    template = parse_model_config(cfg.model)
    q = chi2_quantile_1df(1.0 - cfg.alpha)
    lines = ["n,label,itc,itc_normalized"]
    for n in cfg.n_list:
        spec = cfg.scenario_spec(scenario, f_star, n, cfg.base_seed)
        train, valid, _ = generate(spec)
        seeds = SelectionSeeds(cfg.base_seed)
        mask = cfg.itc_mask if cfg.itc_mask else ("output_layer" if template.is_mlp else "full")
        raw = []
        for kernel in candidate_grid(cfg.candidates):
            if template.is_mlp:
                model = template.build(substream(seeds.init, "mlp-init"))
                fit = fit_gradient(MmrProblem(dataset=train, kernel=kernel, model=model), valid)
            else:
                model = template.build()
                fit = fit_linear(MmrProblem(dataset=train, kernel=kernel, model=model))
            report = itc(
                train, kernel, model, fit.theta, alpha=cfg.alpha,
                split_seed=seeds.split, mask=mask,
            )
            raw.append((kernel.label, report.itc_value))
        top = max(v for _, v in raw)
        scale = top if top > 0 else 1.0
        for label, value in raw:
            lines.append(f"{n},{label},{_fmt_float(value)},{_fmt_float(value / scale)}")
        lines.append(f"{n},threshold,{_fmt_float(q)},{_fmt_float(q / scale)}")
    out = Path(cfg.output_dir) / "plotdata.csv"
    _atomic_write(out, "\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--scenario", type=str, help="comma list, overrides scenarios")
    parser.add_argument("--true-function", type=str, help="comma list, overrides true_functions")
    parser.add_argument("--model", type=str, help="poly:<m> or mlp:<w1>[,<w2>]")
    parser.add_argument("--candidates", type=str, help="comma list of kernel labels")
    parser.add_argument("--n", type=str, help="comma list of sample sizes")
    parser.add_argument("--replications", type=int)
    parser.add_argument("--seed", type=int, help="base seed")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--output-dir", type=str)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--lw-dim", type=int, help="instrument dimension for LW")
    parser.add_argument("--itc-mask", type=str, choices=["full", "output_layer"])


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.scenario:
        cfg.scenarios = args.scenario.split(",")
    if args.true_function:
        cfg.true_functions = args.true_function.split(",")
    if args.model:
        cfg.model = args.model
    if args.candidates:
        cfg.candidates = args.candidates.split(",")
    if args.n:
        try:
            cfg.n_list = [int(v) for v in args.n.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --n value {args.n!r}") from exc
    if args.replications is not None:
        cfg.replications = args.replications
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.workers is not None:
        cfg.workers = args.workers
    if args.lw_dim is not None:
        cfg.lw_dim = args.lw_dim
    if args.itc_mask is not None:
        cfg.itc_mask = args.itc_mask
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kmmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("generate", cmd_generate),
        ("select", cmd_select),
        ("experiment", cmd_experiment),
        ("plotdata", cmd_plotdata),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.fn(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
