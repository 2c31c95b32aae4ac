"""Command-line harness for Monte-Carlo localization experiments.

``bcdloc run`` executes seeded trials of one method on one scenario;
``bcdloc sweep`` repeats that over one axis (``r``, ``rho``, ``eta`` or
``anchors``) and writes one aggregate row per value.

Results CSV, schema ``bcdloc-results/1``: columns are listed in
``TRIAL_COLUMNS`` and ``SWEEP_COLUMNS``. Columns ending in ``_nondet`` hold
wall-clock seconds and are the only non-deterministic fields.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import model
from .bm_bcd import BmConfig, run_bm_bcd
from .esdp_bcd import BarrierConfig, EsdpConfig, run_esdp_bcd
from .recover_metrics import FAILURE_THRESHOLD, MetricReport, rmse_body

SCHEMA = "bcdloc-results/1"
METHODS = ("bm_bcd", "esdp_bcd")
AXES = ("r", "rho", "eta", "anchors")

TRIAL_COLUMNS = [
    "schema", "row", "method", "seed", "k", "k_esdp", "k_refine", "comm_rounds",
    "rmse", "rmse_a", "failed", "converged", "error", "st_s_nondet", "pt_s_nondet",
]
SWEEP_COLUMNS = [
    "schema", "axis", "value", "method", "trials", "fr", "mean_k", "mean_rmse",
    "mean_rmse_a", "mean_st_s_nondet", "mean_pt_s_nondet",
]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: model.ScenarioSpec
    method: str = "bm_bcd"
    trials: int = 1
    seed: int = 0
    out: Path = Path("results")
    bm: BmConfig = field(default_factory=BmConfig)
    esdp: EsdpConfig = field(default_factory=EsdpConfig)
    dump: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")


def shipped_configs():
    root = resources.files("bcdloc") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_config(name) -> Path:
    """A filesystem path, or the name of a config shipped with the package."""
    path = Path(name)
    if path.exists():
        return path
    stem = path.name[:-4] if path.name.endswith(".ini") else path.name
    shipped = resources.files("bcdloc") / "configs" / f"{stem}.ini"
    if shipped.is_file():
        return Path(str(shipped))
    raise ConfigError(f"config {name!r} not found (shipped configs: {', '.join(shipped_configs())})")


def _coerce(value: str, current):
    value = value.strip()
    if value.lower() == "none":
        return None
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return model._number(value)
    if current is None:
        try:
            return int(value)
        except ValueError:
            return model._number(value)
    return value


def _apply_section(obj, section, skip=()):
    names = {f.name for f in fields(obj)}
    updates = {}
    for key, raw in section.items():
        key = key.strip().lower()
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {type(obj).__name__}")
        updates[key] = _coerce(raw, getattr(obj, key))
    return replace(obj, **updates)


def load_run_config(path) -> RunConfig:
    """Read a scenario INI with optional ``[run]``, ``[bm_bcd]``, ``[esdp_bcd]``, ``[barrier]`` sections."""
    path = resolve_config(path)
    cp = configparser.ConfigParser()
    cp.read(path)
    if "scenario" not in cp:
        raise ConfigError(f"{path}: missing [scenario] section")
    try:
        spec = model.parse_scenario(dict(cp["scenario"]))
    except (model.ScenarioError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    run = dict(cp["run"]) if "run" in cp else {}
    bm = _apply_section(BmConfig(), cp["bm_bcd"]) if "bm_bcd" in cp else BmConfig()
    barrier = _apply_section(BarrierConfig(), cp["barrier"]) if "barrier" in cp else BarrierConfig()
    esdp = EsdpConfig(barrier=barrier, refine=bm)
    if "esdp_bcd" in cp:
        esdp = _apply_section(esdp, cp["esdp_bcd"], skip=("refine_r",))
        if "refine_r" in cp["esdp_bcd"]:
            esdp = replace(esdp, refine=replace(bm, r=int(cp["esdp_bcd"]["refine_r"])))
    return RunConfig(
        scenario=spec,
        method=run.get("method", "bm_bcd").strip(),
        trials=int(run.get("trials", 1)),
        seed=int(run.get("seed", 0)),
        out=Path(run.get("out", "results")),
        bm=bm,
        esdp=esdp,
    )


# -- one trial ------------------------------------------------------------------

def run_trial(cfg: RunConfig, t: int):
    """Run trial ``t`` (seed ``cfg.seed + t``); returns ``(row, p_init, p_final)``."""
    seed = cfg.seed + t
    row = dict.fromkeys(TRIAL_COLUMNS, "")
    row.update(schema=SCHEMA, row="trial", method=cfg.method, seed=seed)
    p_init = p_final = None
    try:
        spec = model.with_seed(cfg.scenario, seed)
        inst = model.generate_scenario(spec)
        p_init = model.sample_initialization(inst, spec.rho, seed=[seed, 1])
        if cfg.method == "bm_bcd":
            res = run_bm_bcd(inst, p_init, replace(cfg.bm, seed=seed))
            row.update(k=res.stats.iterations, k_esdp=0, k_refine=res.stats.iterations)
        else:
            esdp = cfg.esdp
            if esdp.refine is not None:
                esdp = replace(esdp, refine=replace(esdp.refine, seed=seed))
            res = run_esdp_bcd(inst, replace(esdp, seed=seed), p0=p_init)
            k_esdp, k_refine = (int(x) for x in res.info["k"].split("+"))
            row.update(k=res.info["k"], k_esdp=k_esdp, k_refine=k_refine)
            row["rmse_a"] = _fmt(res.info.get("rmse_a", math.nan))
        err = rmse_body(res.poses, inst.truth.poses, inst.graph)
        if row["rmse_a"] == "":
            # absolute error is only meaningful when anchors fix the gauge
            row["rmse_a"] = "nan"
        row.update(
            comm_rounds=res.stats.comm_rounds,
            rmse=_fmt(err),
            failed=int(not err <= FAILURE_THRESHOLD),
            converged=int(res.stats.converged),
            st_s_nondet=_fmt(res.stats.st),
            pt_s_nondet=_fmt(res.stats.pt),
        )
        p_final = res.p
    except Exception as exc:  # recorded per trial, never fatal for the batch
        row.update(rmse="nan", rmse_a="nan", failed=1, converged=0, error=f"{type(exc).__name__}: {exc}")
    return row, p_init, p_final


def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else f"{float(x):.10g}"


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return math.nan


def _mean(values):
    """Mean over finite entries; NaN when none (every trial failed)."""
    a = np.asarray([_num(v) for v in values], dtype=float)
    a = a[np.isfinite(a)]
    return float(np.mean(a)) if a.size else math.nan


def run_trials(cfg: RunConfig, jobs=1):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials)))
    return [run_trial(cfg, t) for t in range(cfg.trials)]


def aggregate_row(cfg, rows):
    k_total = [_num(r["k_esdp"]) + _num(r["k_refine"]) for r in rows]
    report = MetricReport.from_trials([_num(r["rmse"]) for r in rows], [_num(r["rmse_a"]) for r in rows])
    agg = dict.fromkeys(TRIAL_COLUMNS, "")
    agg.update(
        schema=SCHEMA, row="aggregate", method=cfg.method, seed=f"{cfg.seed}..{cfg.seed + cfg.trials - 1}",
        k=_fmt(_mean(k_total)),
        k_esdp=_fmt(_mean([r["k_esdp"] for r in rows])),
        k_refine=_fmt(_mean([r["k_refine"] for r in rows])),
        comm_rounds=_fmt(_mean([r["comm_rounds"] for r in rows])),
        rmse=_fmt(report.rmse), rmse_a=_fmt(report.rmse_a), failed=_fmt(report.fr),
        converged=_fmt(np.mean([_num(r["converged"]) == 1 for r in rows])),
        st_s_nondet=_fmt(_mean([r["st_s_nondet"] for r in rows])),
        pt_s_nondet=_fmt(_mean([r["pt_s_nondet"] for r in rows])),
    )
    return agg


def _write_csv(path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_run(cfg: RunConfig, jobs=1) -> int:
    results = run_trials(cfg, jobs)
    rows = [r for r, _, _ in results]
    out = Path(cfg.out)
    _write_csv(out / "results.csv", TRIAL_COLUMNS, rows + [aggregate_row(cfg, rows)])
    if cfg.dump:
        dump = out / "realizations"
        dump.mkdir(parents=True, exist_ok=True)
        for row, p_init, p_final in results:
            seed = row["seed"]
            if p_init is not None:
                model.write_realization(dump / f"seed{seed}_init.txt", p_init, f"initial realization, seed {seed}")
            if p_final is not None:
                model.write_realization(dump / f"seed{seed}_final.txt", p_final, f"{cfg.method} estimate, seed {seed}")
    agg = aggregate_row(cfg, rows)
    print(f"{cfg.method}: trials={cfg.trials} k={agg['k']} rmse={agg['rmse']} fr={agg['failed']} -> {out / 'results.csv'}")
    return 0


def with_axis(cfg: RunConfig, axis, value) -> RunConfig:
    if axis == "r":
        r = int(value)
        esdp = cfg.esdp if cfg.esdp.refine is None else replace(cfg.esdp, refine=replace(cfg.esdp.refine, r=r))
        return replace(cfg, bm=replace(cfg.bm, r=r), esdp=esdp)
    if axis == "rho":
        return replace(cfg, scenario=replace(cfg.scenario, rho=float(value)))
    if axis == "eta":
        return replace(cfg, scenario=replace(cfg.scenario, eta=float(value)))
    if axis == "anchors":
        return replace(cfg, scenario=replace(cfg.scenario, anchor_count=int(value)))
    raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")


def cmd_sweep(cfg: RunConfig, axis, values, jobs=1) -> int:
    rows = []
    for value in values:
        sub = with_axis(cfg, axis, value)
        trial_rows = [r for r, _, _ in run_trials(sub, jobs)]
        agg = aggregate_row(sub, trial_rows)
        rows.append(dict(
            schema=SCHEMA, axis=axis, value=value, method=cfg.method, trials=cfg.trials,
            fr=agg["failed"], mean_k=agg["k"], mean_rmse=agg["rmse"], mean_rmse_a=agg["rmse_a"],
            mean_st_s_nondet=agg["st_s_nondet"], mean_pt_s_nondet=agg["pt_s_nondet"],
        ))
        print(f"{axis}={value}: fr={agg['failed']} k={agg['k']} rmse={agg['rmse']}")
    path = Path(cfg.out) / f"sweep_{axis}.csv"
    _write_csv(path, SWEEP_COLUMNS, rows)
    print(f"-> {path}")
    return 0


def _values(raw):
    return [v.strip() for v in raw.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="bcdloc", description="Distributed relative localization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario INI path or shipped config name")
        p.add_argument("--method", choices=METHODS, help="override [run] method")
        p.add_argument("--trials", type=int, help="number of seeded trials")
        p.add_argument("--seed", type=int, help="seed base; trial t uses base + t")
        p.add_argument("--out", help="output directory")
        p.add_argument("--r", type=int, help="BM rank (refinement rank for esdp_bcd)")
        p.add_argument("--rho", type=float, help="initialization quality")
        p.add_argument("--eta", type=float, help="anchor-other measurement probability")
        p.add_argument("--anchors", type=int, help="number of anchor robots")
        p.add_argument("--jobs", type=int, default=1, help="trials run in parallel processes")

    run = sub.add_parser("run", help="run seeded trials of one method")
    common(run)
    run.add_argument("--no-dump", action="store_true", help="skip realization dumps")
    sweep = sub.add_parser("sweep", help="aggregate trials over one axis")
    common(sweep)
    sweep.add_argument("--axis", required=True, choices=AXES)
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sub.add_parser("configs", help="list shipped scenario configs")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.method:
        cfg = replace(cfg, method=args.method)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=Path(args.out))
    for axis, value in (("r", args.r), ("rho", args.rho), ("eta", args.eta), ("anchors", args.anchors)):
        if value is not None:
            cfg = with_axis(cfg, axis, value)
    if getattr(args, "no_dump", False):
        cfg = replace(cfg, dump=False)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "configs":
        print("\n".join(shipped_configs()))
        return 0
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            return cmd_run(cfg, args.jobs)
        return cmd_sweep(cfg, args.axis, _values(args.values), args.jobs)
    except (ConfigError, model.ScenarioError, ValueError) as exc:
        print(f"bcdloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
