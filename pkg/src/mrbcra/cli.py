"""Scenario runner: each scenario regenerates the data behind one experiment family.

Usage::

    python -m mrbcra analyze --L 32 --eta 10 --D 25 --out results/
    python -m mrbcra --scenario mud-curve --trials 100 --out results/
    python -m mrbcra --rerun results/mud-curve.meta

Every scenario writes ``<name>.csv``, ``<name>.meta`` (JSON; enough to re-run)
and ``<name>.summary`` (``key = value`` lines) into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, csmud, sim
from .config import InvalidConfig, SystemConfig, load_config
from .errors import DomainError, MissingColumn, NoSteadyState

SCENARIOS = ("mud-curve", "evolution", "d-sweep", "rate-sweep", "l-sweep", "eta-sweep", "analyze")

# headline setup: (L, M) = (32, 8), eta = 10, Kbar = 2L, 20 dB, T = 20L
DEFAULTS = dict(L=32, M=8, N=320, T=640, D=25, Kbar=64, lam=0.0, snr_db=20.0, slots=10_000, seed=0)
PHY_DEFAULT_SLOTS = 1_000


@dataclass
class Scenario:
    name: str
    overrides: dict = field(default_factory=dict)
    output_dir: Path = Path(".")
    params: dict = field(default_factory=dict)


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_summary(path: Path, summary: dict) -> None:
    lines = [f"{k} = {_fmt(v)}" for k, v in summary.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_config(overrides: dict, base: SystemConfig | None = None) -> SystemConfig:
    """Apply CLI overrides to ``base`` (or the built-in defaults).

    ``eta`` sets N = eta * L. Without a base config, changing L also rescales
    N (eta = 10), T (= 20 L) and Kbar (= 2 L) unless those are given.
    """
    data = dataclasses.asdict(base) if base is not None else dict(DEFAULTS)
    ov = {k: v for k, v in overrides.items() if v is not None}
    eta = ov.pop("eta", None)
    if base is None and "L" in ov:
        L = ov["L"]
        data.update(N=10 * L, T=20 * L, Kbar=2 * L)
    data.update(ov)
    if eta is not None and "N" not in ov:
        data["N"] = int(round(eta * data["L"]))
    return SystemConfig(**data)


def _parse_range(text: str, step: float = 0.1):
    """``"0.1..0.9"`` -> [0.1, 0.2, ..., 0.9]; ``"0.2,0.5"`` -> [0.2, 0.5]."""
    if ".." in text:
        lo, hi = (float(t) for t in text.split(".."))
        n = int(round((hi - lo) / step))
        return [round(lo + i * step, 10) for i in range(n + 1)]
    return [float(t) for t in text.split(",") if t]


def _run_mode(cfg, mode, workers):
    return sim.run(cfg, mode, workers=workers)


def scenario_analyze(cfg: SystemConfig, p: dict):
    header = ["D", "B_DN", "lambda_max", "lambda1_star", "lambda_max_upper", "N_star"]
    rows = []
    for D in range(1, min(cfg.L, cfg.N + 1)):
        lmax, star = analysis.lambda_max(cfg.N, D)
        rows.append(
            [
                D,
                analysis.stability_bound(D, cfg.N),
                lmax,
                star,
                analysis.lambda_max_upper(cfg.N, D),
                analysis.min_stable_N(D) if D > 1 else 1,
            ]
        )
    rep = analysis.capacity_report(cfg.N, cfg.D)
    summary = {
        "L": cfg.L,
        "N": cfg.N,
        "eta": cfg.eta,
        "D": cfg.D,
        "B_DN": rep.B_DN,
        "lambda_max": rep.lambda_max,
        "lambda1_star": rep.lambda1_star,
        "lambda_max_upper": rep.lambda_max_upper,
        "N_star": rep.N_star,
        "stable_at_N": rep.lambda_max_upper < rep.B_DN,
        "cra_aloha_advantage": analysis.cra_aloha_advantage(cfg.eta),
        "complexity": sim.complexity_model(cfg.L, cfg.M, cfg.eta, p.get("c", 2.0)),
    }
    if cfg.lam > 0:
        try:
            ss = analysis.solve_lambda1(cfg.lam, cfg.N, cfg.D)
            summary.update(lambda1=ss.lambda1, lambda2=ss.lambda2, delay=ss.delay, throughput=ss.throughput)
        except NoSteadyState:
            summary["lambda1"] = "none (lambda > lambda_max)"
    return header, rows, summary


def scenario_mud_curve(cfg: SystemConfig, p: dict):
    k_max = p.get("k_max") or int(1.25 * cfg.L)
    curve = csmud.empirical_unsuccessful_curve(
        cfg.L, cfg.N, cfg.T, cfg.snr_db, range(1, k_max + 1), p["trials"], cfg.seed, p["stop_factor"]
    )
    summary = {"L": cfg.L, "N": cfg.N, "T": cfg.T, "snr_db": cfg.snr_db, "trials": p["trials"]}
    try:
        summary["D_estimate"] = csmud.estimate_D(curve, cfg.N, p["slack"])
    except Exception as exc:  # noqa: BLE001 - reported, not fatal
        summary["D_estimate"] = f"unavailable ({exc})"
    return ["K", "mean_unsuccessful", "stderr", "trials"], [list(r) for r in curve], summary


def scenario_evolution(cfg: SystemConfig, p: dict):
    if cfg.lam == 0:
        cfg = cfg.replace(lam=analysis.lambda_max(cfg.N, cfg.D)[0])
    m = _run_mode(cfg, p["mode"], p["workers"])
    rows = [
        [r.slot, r.arrivals_offered, r.arrivals_admitted, r.transmitted, r.successful, r.rate_control_active, r.backlog]
        for r in m.trace
    ]
    summary = {"lambda": cfg.lam, "mode": p["mode"], **sim.metrics_summary(m)}
    return sim.TRACE_COLUMNS, rows, summary


def scenario_d_sweep(cfg: SystemConfig, p: dict):
    d_values = p.get("d_values") or list(range(max(1, cfg.L // 2), cfg.L))
    header = [
        "D",
        "lambda",
        "throughput_per_rb",
        "mean_K_per_rb",
        "normalized_delay",
        "blocked_fraction",
        "analysis_lambda1",
        "analysis_delay",
    ]
    rows = []
    for D in d_values:
        lam = analysis.lambda_max(cfg.N, D)[0]
        c = cfg.replace(D=D, Kbar=2 * D, lam=lam)
        m = _run_mode(c, p["mode"], p["workers"])
        ss = analysis.solve_lambda1(lam, cfg.N, D)
        rows.append([D, lam, m.throughput_per_rb, m.mean_K_per_rb, m.normalized_delay, m.blocked_fraction, ss.lambda1, ss.delay])
    summary = {"mode": p["mode"], "points": len(rows)}
    return header, rows, summary


def scenario_rate_sweep(cfg: SystemConfig, p: dict):
    fracs = p.get("lambda_frac") or _parse_range("0.1..0.9")
    header = [
        "lambda_frac",
        "lambda",
        "cra_throughput",
        "cra_delay",
        "aloha_throughput",
        "aloha_delay",
        "analysis_throughput",
        "analysis_delay",
    ]
    rows = []
    for f in fracs:
        lam = f * cfg.L
        c = cfg.replace(lam=lam)
        cra = _run_mode(c, p["mode"], p["workers"])
        alo = sim.run_aloha(c, control=p["aloha_control"])
        try:
            ss = analysis.solve_lambda1(lam, cfg.N, cfg.D)
            a_thr, a_del = ss.throughput, ss.delay
        except NoSteadyState:
            a_thr, a_del = float("nan"), float("nan")
        rows.append([f, lam, cra.throughput_per_rb, cra.normalized_delay, alo.throughput_per_rb, alo.normalized_delay, a_thr, a_del])
    summary = {"mode": p["mode"], "aloha_control": p["aloha_control"], "points": len(rows)}
    return header, rows, summary


def scenario_l_sweep(cfg: SystemConfig, p: dict):
    J = p.get("J", 512)
    load = p.get("load", 0.8)
    header = ["L", "M", "D", "lambda", "total_successful", "total_transmitted", "complexity"]
    rows = []
    for L in p.get("l_values") or [8, 16, 32, 64, 128]:
        M = J // L
        D = max(1, min(L - 1, int(round(p["d_frac"] * L))))
        N = int(round(cfg.eta * L))
        c = cfg.replace(L=L, M=M, N=N, T=20 * L, D=D, Kbar=2 * L, lam=load * L)
        m = _run_mode(c, p["mode"], p["workers"])
        rows.append([L, M, D, c.lam, m.throughput_per_rb * M, m.mean_K_per_rb * M, sim.complexity_model(L, M, cfg.eta, p["c"])])
    summary = {"J": J, "load": load, "d_frac": p["d_frac"], "mode": p["mode"]}
    return header, rows, summary


def scenario_eta_sweep(cfg: SystemConfig, p: dict):
    header = ["eta", "N", "lambda", "throughput_per_rb", "mean_K_per_rb", "analysis_lambda1"]
    rows = []
    for eta in p.get("eta_values") or [2, 3, 4, 5, 6, 7, 8, 9, 10]:
        N = int(round(eta * cfg.L))
        lam = cfg.lam if cfg.lam > 0 else analysis.lambda_max(N, cfg.D)[0]
        c = cfg.replace(N=N, lam=lam)
        m = _run_mode(c, p["mode"], p["workers"])
        try:
            l1 = analysis.solve_lambda1(lam, N, cfg.D).lambda1
        except NoSteadyState:
            l1 = float("nan")
        rows.append([eta, N, lam, m.throughput_per_rb, m.mean_K_per_rb, l1])
    summary = {"D": cfg.D, "mode": p["mode"], "points": len(rows)}
    return header, rows, summary


_RUNNERS = {
    "analyze": scenario_analyze,
    "mud-curve": scenario_mud_curve,
    "evolution": scenario_evolution,
    "d-sweep": scenario_d_sweep,
    "rate-sweep": scenario_rate_sweep,
    "l-sweep": scenario_l_sweep,
    "eta-sweep": scenario_eta_sweep,
}

DEFAULT_PARAMS = dict(
    mode="abstract",
    workers=0,
    trials=100,
    stop_factor=csmud.DEFAULT_STOP_FACTOR,
    slack=0.1,
    k_max=None,
    lambda_frac=None,
    aloha_control=True,
    d_frac=0.7,
    c=2.0,
    plot=None,
)


def run_scenario(scenario: Scenario, base: SystemConfig | None = None) -> dict:
    """Run one scenario and write its csv/meta/summary files. Returns the summary."""
    if scenario.name not in _RUNNERS:
        raise DomainError(f"unknown scenario {scenario.name!r}; choose from {', '.join(SCENARIOS)}")
    params = {**DEFAULT_PARAMS, **{k: v for k, v in scenario.params.items() if v is not None}}
    overrides = dict(scenario.overrides)
    if params["mode"] == "phy" and overrides.get("slots") is None and base is None:
        overrides["slots"] = PHY_DEFAULT_SLOTS
    cfg = resolve_config(overrides, base)

    out = Path(scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, rows, summary = _RUNNERS[scenario.name](cfg, params)

    csv_path = out / f"{scenario.name}.csv"
    _write_csv(csv_path, header, rows)
    meta = {
        "scenario": scenario.name,
        "version": version_string(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "params": params,
    }
    (out / f"{scenario.name}.meta").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_summary(out / f"{scenario.name}.summary", summary)
    if params.get("plot"):
        emit_plotdata(csv_path, params["plot"], out / f"{scenario.name}.dat")
    return summary


def rerun_from_meta(meta_path, output_dir=None) -> dict:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    cfg = SystemConfig.from_dict(meta["config"])
    out = Path(output_dir) if output_dir else Path(meta_path).parent
    return run_scenario(Scenario(meta["scenario"], {}, out, meta["params"]), base=cfg)


def emit_plotdata(csv_path, columns, out_path) -> Path:
    """Write the selected CSV columns as whitespace-separated text for gnuplot.

    ``columns`` is a list of names (or a comma-separated string); the first is
    the abscissa. Each column gets one ``#`` header line.
    """
    if isinstance(columns, str):
        columns = [c.strip() for c in columns.split(",") if c.strip()]
    with Path(csv_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in columns if c not in fields]
        if missing:
            raise MissingColumn(f"columns not in {csv_path}: {', '.join(missing)}")
        rows = [[row[c] for c in columns] for row in reader]
    lines = [f"# column {i + 1}: {c}" for i, c in enumerate(columns)]
    lines += [" ".join(r) for r in rows]
    out_path = Path(out_path)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrbcra", description="MRB-CRA experiment scenarios")
    ap.add_argument("name", nargs="?", choices=SCENARIOS, help="scenario (same as --scenario)")
    ap.add_argument("--scenario", choices=SCENARIOS)
    ap.add_argument("--config", type=Path, help="flat JSON config file")
    ap.add_argument("--rerun", type=Path, help="re-run from a .meta file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("."))
    for flag, typ in (("--L", int), ("--N", int), ("--eta", float), ("--M", int), ("--T", int), ("--D", int)):
        ap.add_argument(flag, type=typ)
    ap.add_argument("--kbar", dest="Kbar", type=int)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--snr", dest="snr_db", type=float)
    ap.add_argument("--slots", type=int)
    ap.add_argument("--mode", choices=("abstract", "phy"))
    ap.add_argument("--workers", type=int, help="threads for per-RB detection")
    ap.add_argument("--trials", type=int, help="Monte Carlo trials per K (mud-curve)")
    ap.add_argument("--k-max", dest="k_max", type=int)
    ap.add_argument("--slack", type=float)
    ap.add_argument("--stop-factor", dest="stop_factor", type=float)
    ap.add_argument("--lambda-frac", dest="lambda_frac", help="e.g. 0.1..0.9 or 0.2,0.5")
    ap.add_argument("--no-aloha-control", dest="aloha_control", action="store_false", default=None)
    ap.add_argument("--d-frac", dest="d_frac", type=float, help="D/L rule for l-sweep")
    ap.add_argument("--c", dest="c", type=float, help="S-OMP complexity constant")
    ap.add_argument("--plot", help="comma-separated columns to emit as <name>.dat")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.rerun:
            summary = rerun_from_meta(args.rerun, args.out if args.out != Path(".") else None)
        else:
            name = args.scenario or args.name
            if name is None:
                ap.error("a scenario name is required")
            base = load_config(args.config) if args.config else None
            overrides = {
                k: getattr(args, k) for k in ("L", "N", "eta", "M", "T", "D", "Kbar", "lam", "snr_db", "slots", "seed")
            }
            params = {
                k: getattr(args, k)
                for k in ("mode", "workers", "trials", "k_max", "slack", "stop_factor", "aloha_control", "d_frac", "c", "plot")
            }
            if args.lambda_frac:
                params["lambda_frac"] = _parse_range(args.lambda_frac)
            summary = run_scenario(Scenario(name, overrides, args.out, params), base=base)
    except (InvalidConfig, DomainError, NoSteadyState, MissingColumn, OSError) as exc:
        print(f"mrbcra: error: {exc}", file=sys.stderr)
        return 2
    for k, v in summary.items():
        print(f"{k} = {_fmt(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
