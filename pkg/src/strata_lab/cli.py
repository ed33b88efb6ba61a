"""Command line entry point: ``strata-lab {run|verify|rate-sweep|kl|varying}``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage
errors (bad flags, unknown function, invalid parameters).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import accounting, output
from .catalog import UnknownFunction, catalog_get, catalog_names
from .descent import ScheduleError, StepSchedule, Trajectory, config_hash, run
from .neighborhoods import NeighborhoodParams, ParamsError, auto_params, membership_table
from .selection import Selection
from .strata import Stratification
from .verify import is_good, is_valid


class UsageError(Exception):
    pass


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    out = []
    for t in str(text).split(","):
        if t.strip():
            out.append(int(float(t)))
    return out


def _parser():
    p = argparse.ArgumentParser(prog="strata-lab", description="Stratified subgradient experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, schedule=True):
        sp.add_argument("--config", help="JSON file with default values for the flags")
        sp.add_argument("--function", help="catalog function, e.g. appendix_fig1 or abs_power(0.5)")
        sp.add_argument("--x1", help="start point, comma separated, or 'random' (default: catalog reference)")
        sp.add_argument("--seed", type=int, default=None, help="seed for a random start point")
        sp.add_argument("--alpha", default=None, help="outer exponent or 'auto'")
        sp.add_argument("--beta", default=None, help="inner exponent or 'auto'")
        sp.add_argument("--gamma0", type=float, default=None, help="step-size ceiling (default 1)")
        sp.add_argument("--strict", action="store_true", default=None,
                        help="reject parameters that violate the step-size hypotheses")
        sp.add_argument("--out", help="output root (default: $STRATA_LAB_OUT or ./strata_lab_out)")
        if schedule:
            sp.add_argument("--K", type=int, default=None, help="number of steps")

    r = sub.add_parser("run", help="run, select, verify and account one trajectory")
    common(r)
    r.add_argument("--gamma", type=float, default=None, help="constant step (default: catalog reference)")
    r.add_argument("--projected", action="store_true", default=None, help="clip iterates back into the box")

    v = sub.add_parser("verify", help="check a saved selection against a saved trajectory")
    v.add_argument("--trajectory", required=True)
    v.add_argument("--selection", required=True)
    v.add_argument("--stratification", required=True)
    v.add_argument("--params", required=True)

    s = sub.add_parser("rate-sweep", help="rate experiment over several horizons")
    common(s, schedule=False)
    s.add_argument("--K", dest="Ks", default=None, help="comma-separated horizons")

    k = sub.add_parser("kl", help="monitor partial sums with steps c / k")
    common(k)
    k.add_argument("--c", type=float, default=None, help="step constant")
    k.add_argument("--tail", type=int, default=None)
    k.add_argument("--osc-tol", type=float, default=None)
    k.add_argument("--inc-tol", type=float, default=None)

    w = sub.add_parser("varying", help="accounting with parameters frozen on doubling intervals")
    common(w)
    w.add_argument("--schedule", default=None, help="constant:g, inverse_k:c or explicit:g1,g2,...")
    return p


DEFAULTS = {
    "gamma0": 1.0, "seed": 0, "alpha": "auto", "beta": "auto", "strict": False, "projected": False,
    "Ks": "2000,8000,32000", "c": 0.01, "tail": 10000, "osc_tol": 1e-3, "inc_tol": 1e-4,
    "schedule": "inverse_k:0.5",
}


def _resolve(args):
    """Merge flags over the config file over built-in defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    merged = dict(DEFAULTS)
    merged.update(cfg)
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config"):
            merged[k] = v
    return merged


def _function(cfg):
    name = cfg.get("function")
    if not name:
        raise UsageError(f"--function is required; available: {', '.join(catalog_names())}")
    try:
        return catalog_get(str(name))
    except UnknownFunction as e:
        raise UsageError(e.args[0]) from e
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad function parameters for {name!r}: {e}") from e


def _x1(cfg, fn):
    if cfg.get("x1") is None:
        return np.asarray(fn.reference["x1"], float)
    x1 = cfg["x1"]
    if x1 == "random":
        strat = fn.stratification
        return np.random.default_rng(int(cfg["seed"])).uniform(strat.lo, strat.hi)
    x1 = np.asarray(_floats(x1) if isinstance(x1, str) else x1, float)
    if x1.shape != (fn.d,):
        raise UsageError(f"--x1 needs {fn.d} coordinates")
    return x1


def _params(fn, gamma, cfg):
    try:
        return auto_params(fn, gamma, float(cfg["gamma0"]), cfg["alpha"], cfg["beta"], strict=bool(cfg["strict"]))
    except (ParamsError, ValueError) as e:
        raise UsageError(str(e)) from e


def _schedule(text, gamma0):
    kind, _, arg = str(text).partition(":")
    try:
        if kind == "constant":
            return StepSchedule.constant(float(arg), gamma0)
        if kind == "inverse_k":
            return StepSchedule.inverse_k(float(arg), gamma0)
        if kind == "explicit":
            return StepSchedule.explicit(_floats(arg), gamma0)
    except (ScheduleError, ValueError) as e:
        raise UsageError(str(e)) from e
    raise UsageError(f"unknown schedule {text!r}")


def _run(fn, x1, sched, K, projected=False):
    try:
        return run(fn, x1, sched, K, projected=projected)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _outdir(cfg, command, key):
    root = cfg.get("out") or os.environ.get("STRATA_LAB_OUT") or "strata_lab_out"
    d = Path(root) / f"{command}-{key}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(d, name, text):
    (d / name).write_text(text)


def cmd_run(cfg):
    fn = _function(cfg)
    x1 = _x1(cfg, fn)
    gamma = float(cfg.get("gamma") or fn.reference["gamma"])
    K = int(cfg.get("K") or fn.reference["K"])
    p = _params(fn, gamma, cfg)
    try:
        sched = StepSchedule.constant(gamma, p.gamma0)
    except ScheduleError as e:
        raise UsageError(str(e)) from e
    traj = _run(fn, x1, sched, K, bool(cfg["projected"]))
    res = accounting.analyze(fn, traj, p)
    sel = res["selection"]
    summ = res["ledger"]["summary"]
    d = _outdir(cfg, "run", config_hash({"run": traj.config_hash, "params": p.to_dict()}))
    _write(d, "trajectory.csv", traj.to_csv())
    _write(d, "selection.json", sel.to_json())
    _write(d, "ledger.csv", accounting.ledger_csv(res["ledger"]))
    _write(d, "stratification.json", output.dumps(fn.stratification.to_dict()))
    _write(d, "params.json", output.dumps(p.to_dict()))
    _write(d, "trajectory.svg", output.trajectory_svg(fn.stratification, traj, sel, fn.label))
    passed = (res["valid"] and res["good"] and not traj.escaped and summ["valid_descent"]["ok"]
              and summ["payments"]["ok"] and summ["lemma"]["violations"] == 0 and summ["switch_counts_ok"])
    report = {
        "command": "run",
        "config": traj.meta,
        "config_hash": traj.config_hash,
        "params": p.to_dict(),
        "hypotheses": p.hypotheses(),
        "escaped": traj.escaped,
        "clipped": traj.clipped,
        "valid": res["valid"],
        "valid_info": res["valid_info"],
        "good": res["good"],
        "good_info": res["good_info"],
        "blocks": sel.blocks(),
        "summary": summ,
        "pass": passed,
    }
    _write(d, "report.json", output.dumps(report))
    print(d)
    return 0 if passed else 1


def cmd_verify(args):
    try:
        traj = Trajectory.from_csv(Path(args.trajectory).read_text())
        strat = Stratification.from_dict(json.loads(Path(args.stratification).read_text()))
        params = NeighborhoodParams.from_json(Path(args.params).read_text())
        sel = Selection.from_dict(json.loads(Path(args.selection).read_text()), strat.dims)
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot load inputs: {e}") from e
    if sel.K != traj.K:
        raise UsageError(f"selection covers {sel.K} steps but the trajectory has {traj.K}")
    tab = membership_table(strat, traj.x[:traj.K], params)
    valid, vinfo = is_valid(tab, sel)
    good, ginfo = is_good(tab, sel)
    print(output.dumps({"valid": valid, "valid_info": vinfo, "good": good, "good_info": ginfo}), end="")
    return 0 if valid and good else 1


def cmd_rate_sweep(cfg):
    fn = _function(cfg)
    Ks = cfg["Ks"]
    Ks = _ints(Ks) if isinstance(Ks, str) else [int(k) for k in Ks]
    if not Ks:
        raise UsageError("the list of horizons is empty")
    x1 = _x1(cfg, fn)
    rep = accounting.rate_report(fn, Ks, x1=x1, gamma0=float(cfg["gamma0"]))
    key = config_hash({"function": fn.label, "Ks": Ks, "x1": x1.tolist(), "gamma0": cfg["gamma0"]})
    d = _outdir(cfg, "rate-sweep", key)
    lines = ["K,gamma,mean_grad_sq,certificate_rate,valid,good"]
    for r in rep["rows"]:
        if r["rejected"]:
            lines.append(f"{r['K']},{r['gamma']!r},,,,")
        else:
            lines.append(f"{r['K']},{r['gamma']!r},{r['mean_grad_sq']!r},{r['certificate_rate']!r},"
                         f"{int(r['valid'])},{int(r['good'])}")
    _write(d, "rates.csv", "\n".join(lines) + "\n")
    _write(d, "rates.svg", output.rates_svg(rep["rows"], rep["slope"]))
    passed = (rep["strictly_decreasing"] and rep["certificate_rate"] == 1.0
              and rep["slope"] is not None and rep["slope"] <= 0)
    _write(d, "report.json", output.dumps({"command": "rate-sweep", "function": fn.label, **rep, "pass": passed}))
    print(d)
    return 0 if passed else 1


def cmd_kl(cfg):
    fn = _function(cfg)
    x1 = _x1(cfg, fn)
    K = int(cfg.get("K") or 100000)
    p = _params(fn, float(cfg["c"]), cfg)
    sched = _schedule(f"inverse_k:{cfg['c']}", p.gamma0)
    traj = _run(fn, x1, sched, K)
    rep = accounting.kl_monitor(fn, traj, sched, p, tail=int(cfg["tail"]))
    passed = (not traj.escaped and rep["tail_oscillation"] <= cfg["osc_tol"]
              and rep["S1_tail_increment"] <= cfg["inc_tol"] and rep["S2_tail_increment"] <= cfg["inc_tol"])
    d = _outdir(cfg, "kl", config_hash({"run": traj.config_hash, "params": p.to_dict(), "tail": cfg["tail"]}))
    _write(d, "kl.json", output.dumps({"command": "kl", "config": traj.meta, **rep, "pass": passed}))
    print(d)
    return 0 if passed else 1


def cmd_varying(cfg):
    fn = _function(cfg)
    x1 = _x1(cfg, fn)
    K = int(cfg.get("K") or fn.reference["K"])
    sched = _schedule(cfg["schedule"], float(cfg["gamma0"]))
    p = _params(fn, sched(1), cfg)
    traj = _run(fn, x1, sched, K)
    rep = accounting.varying_ledger(fn, traj, sched, p)
    sel = rep.pop("selection")
    led = rep.pop("ledger")
    d = _outdir(cfg, "varying", config_hash({"run": traj.config_hash, "params": p.to_dict()}))
    _write(d, "trajectory.csv", traj.to_csv())
    _write(d, "selection.json", sel.to_json())
    _write(d, "ledger.csv", accounting.ledger_csv(led))
    passed = not traj.escaped and rep["payments_projection_ok"] and rep["summary"]["lemma"]["violations"] == 0
    _write(d, "report.json", output.dumps({"command": "varying", "config": traj.meta, **rep, "pass": passed}))
    print(d)
    return 0 if passed else 1


COMMANDS = {"run": cmd_run, "rate-sweep": cmd_rate_sweep, "kl": cmd_kl, "varying": cmd_varying}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        return COMMANDS[args.command](_resolve(args))
    except UsageError as e:
        print(f"strata-lab: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
