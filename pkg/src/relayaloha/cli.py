"""Command-line front end: parameter sweeps, cross-validation runs, and
machine-readable result tables for figure reproduction.

Every command emits a self-describing table: CSV with a leading
``# json-metadata: {...}`` comment line, or the equivalent JSON document
with ``meta``/``columns``/``rows``.  The metadata echoes the fully resolved
configuration (defaults applied, seed included), so feeding it back via
``--config`` reproduces the identical table.

Exit codes: 0 success, 1 a cross-validation gap exceeded its tolerance,
2 usage or configuration error.  ``RELAYALOHA_WORKERS`` overrides the
worker-pool size used for simulation sweeps.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import __version__
from .analytic import (SystemConfig, max_downlink_throughput, omega,
                       peak_uplink_throughput, plr_uplink, throughput_sa,
                       throughput_uplink)
from .finitefield import FieldSpec
from .markov import _round_half_up, rlc_finite_buffer_throughput
from .montecarlo import RlcDownlink, SfpDownlink, SimSpec, run_rlc, run_sfp, run_uplink
from .policies import (conjectured_optimum_channel_aware, numeric_optimize_sfp,
                       optimal_agnostic, optimal_interference_aware)

DEFAULT_SEED = 41226
DEFAULT_EPS = 0.3
COMMANDS = ("uplink", "plr", "bound", "sfp", "rlc-finite", "simulate",
            "verify-conjecture", "sweep")

_FLOAT_KEYS = {"eps", "g", "r", "tol", "fail_frac", "rel_tol"}
_INT_KEYS = {"k", "q", "mul", "buffer", "seed", "trials", "points", "fieldbits"}
_LIST_KEYS = {"k", "eps", "g"}


@dataclass
class ExperimentConfig:
    command: str
    params: dict
    output: str | None
    fmt: str


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple[float, ...]]
    meta: dict


class UsageError(Exception):
    pass


def _parse_range(text: str) -> list[float]:
    """A sweep value: scalar, comma list, or start:stop:step (stop inclusive)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:stop:step, got '{text}'")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or start > stop:
            raise UsageError(f"range needs step > 0 and start <= stop, got '{text}'")
        n = int(round((stop - start) / step))
        vals = [start + i * step for i in range(n + 1)]
        return [v for v in vals if v <= stop + 1e-12]
    if "," in text:
        return [float(p) for p in text.split(",") if p]
    return [float(text)]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relayaloha",
                                 description="multi-receiver slotted ALOHA analysis toolkit")
    ap.add_argument("--config", help="JSON file with defaults; flags override")
    sub = ap.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--eps", help="erasure probability (scalar or list)")
        p.add_argument("--g", help="channel load (scalar, list, or start:stop:step)")
        p.add_argument("--k", help="relay count (scalar or comma list)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="output")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"))

    for name in COMMANDS:
        p = sub.add_parser(name)
        common(p)
        if name in ("sfp",):
            p.add_argument("--mode", choices=("agnostic", "interference", "channel"))
            p.add_argument("--q", type=int)
            p.add_argument("--r", help="downlink sum-rate (scalar, list, or range)")
        if name in ("rlc-finite",):
            p.add_argument("--mul", type=int)
            p.add_argument("--q", dest="field_order", type=int,
                           help="field order (power of two); combinations over GF(q)")
            p.add_argument("--r", help="downlink sum-rate sweep")
        if name == "simulate":
            p.add_argument("--what", choices=("uplink", "rlc", "sfp"))
            p.add_argument("--mul", type=int)
            p.add_argument("--trials", type=int)
            p.add_argument("--r", help="downlink sum-rate sweep (rlc/sfp)")
            p.add_argument("--q", dest="field_order", type=int)
            p.add_argument("--buffer", type=int)
            p.add_argument("--fail-frac", dest="fail_frac", type=float)
            p.add_argument("--rel-tol", dest="rel_tol", type=float)
        if name == "verify-conjecture":
            p.add_argument("--q", type=int)
            p.add_argument("--points", type=int)
            p.add_argument("--tol", type=float)
    return ap


_KNOWN_KEYS = {"command", "output", "format", "eps", "g", "k", "seed", "mode", "q",
               "r", "mul", "trials", "buffer", "field_order", "points", "tol",
               "fail_frac", "rel_tol", "what"}


def parse_config(argv: list[str]) -> ExperimentConfig:
    """Resolve CLI flags over an optional JSON config file into a full config."""
    ap = _build_parser()
    ns = ap.parse_args(argv)
    file_vals: dict = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                file_vals = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {ns.config}: {exc}")
        if not isinstance(file_vals, dict):
            raise UsageError("config file must hold a JSON object")
        for key in file_vals:
            if key not in _KNOWN_KEYS:
                raise UsageError(f"unknown config key '{key}'")
    command = ns.command or file_vals.get("command")
    if command not in COMMANDS:
        raise UsageError("missing or unknown command; expected one of " + ", ".join(COMMANDS))

    params: dict = {}
    for key, val in file_vals.items():
        if key in ("command", "output", "format"):
            continue
        params[key] = val
    for key, val in vars(ns).items():
        if key in ("config", "command", "output", "fmt") or val is None:
            continue
        params[key] = val

    # normalise sweep axes to lists of floats/ints
    if "eps" in params:
        params["eps"] = [float(v) for v in _as_list(params["eps"])]
        for e in params["eps"]:
            if not 0.0 <= e <= 1.0:
                raise UsageError(f"--eps must lie in [0, 1], got {e}")
    if "g" in params:
        params["g"] = [float(v) for v in _as_list(params["g"])]
    if "k" in params:
        params["k"] = [int(v) for v in _as_list(params["k"])]
    if "r" in params and isinstance(params["r"], str):
        params["r"] = _parse_range(params["r"])
    elif "r" in params and not isinstance(params["r"], list):
        params["r"] = [float(params["r"])]

    output = ns.output if ns.output is not None else file_vals.get("output")
    fmt = ns.fmt if ns.fmt is not None else file_vals.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got '{fmt}'")
    return ExperimentConfig(command=command, params=params, output=output, fmt=fmt)


def _as_list(val) -> list:
    if isinstance(val, str):
        return _parse_range(val)
    if isinstance(val, (list, tuple)):
        return list(val)
    return [val]


def _resolve(params: dict) -> dict:
    """Fill the running-example defaults: eps=0.3, G=1/(1-eps), K=2, L=1."""
    out = dict(params)
    out.setdefault("eps", [DEFAULT_EPS])
    out.setdefault("g", [1.0 / (1.0 - out["eps"][0])] if out["eps"][0] < 1.0 else [0.0])
    out.setdefault("k", [2])
    out.setdefault("seed", DEFAULT_SEED)
    out.setdefault("field_order", 2)
    out.setdefault("mul", 25)
    out.setdefault("trials", 20)
    out.setdefault("buffer", 25)
    return out


def _workers() -> int:
    env = os.environ.get("RELAYALOHA_WORKERS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def run_experiment(config: ExperimentConfig) -> tuple[ResultTable, int]:
    """Dispatch a command; returns (table, exit_code)."""
    p = _resolve(config.params)
    handler = _HANDLERS[config.command]
    columns, rows, code = handler(p)
    meta = {
        "command": config.command,
        "params": {k: v for k, v in sorted(p.items())},
        "version": f"relayaloha-{__version__}",
        "seed": p["seed"],
        "format": config.fmt,
        "output": config.output,
    }
    table = ResultTable(columns=columns, rows=rows, meta=meta)
    _emit(table, config)
    return table, code


def _fmt12(x: float) -> str:
    return f"{float(x):.12g}"


def _emit(table: ResultTable, config: ExperimentConfig) -> None:
    if config.fmt == "csv":
        lines = ["# json-metadata: " + json.dumps(table.meta, sort_keys=True)]
        lines.append(",".join(table.columns))
        for row in table.rows:
            lines.append(",".join(_fmt12(v) for v in row))
        text = "\n".join(lines) + "\n"
    else:
        doc = {"meta": table.meta, "columns": table.columns,
               "rows": [[float(_fmt12(v)) for v in row] for row in table.rows]}
        text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def reparse_metadata(meta: dict) -> ExperimentConfig:
    """Rebuild the experiment configuration a table's metadata echoes."""
    return ExperimentConfig(command=meta["command"], params=dict(meta["params"]),
                            output=meta.get("output"), fmt=meta.get("format", "csv"))


# ----------------------------------------------------------------- handlers

def _cmd_uplink(p: dict):
    rows = []
    for eps in p["eps"]:
        for k in p["k"]:
            for g in p["g"]:
                cfg = SystemConfig(g, eps, k)
                rows.append((g, eps, k, throughput_sa(cfg), throughput_uplink(cfg),
                             plr_uplink(cfg)))
    return ["g", "eps", "k", "s_sa", "s_ul", "plr_ul"], rows, 0


def _cmd_plr(p: dict):
    rows = []
    for eps in p["eps"]:
        for k in p["k"]:
            for g in p["g"]:
                rows.append((g, eps, k, plr_uplink(SystemConfig(g, eps, k))))
    return ["g", "eps", "k", "plr_ul"], rows, 0


def _cmd_sweep(p: dict):
    return _cmd_uplink(p)


def _cmd_bound(p: dict):
    eps, k, g = p["eps"][0], p["k"][0], p["g"][0]
    cfg = SystemConfig(g, eps, k)
    s_ul = throughput_uplink(cfg)
    rows = []
    for j in range(1, k + 1):
        om = omega(cfg, j)
        rows.append((j, om, s_ul - om))
    return ["subset_size", "omega", "min_subset_rate"], rows, 0


def _cmd_sfp(p: dict):
    eps, g = p["eps"][0], p["g"][0]
    cfg = SystemConfig(g, eps, 2)
    mode = p.get("mode", "interference")
    s_sa = throughput_sa(cfg)
    rates = p.get("r") or [1.5 * s_sa]
    qq = p.get("q", 1 if mode != "channel" else 5)
    rows = []
    if mode == "agnostic":
        cols = ["r", "s_dl", "chi1", "chi2"]
        for r in rates:
            c1, c2, val = optimal_agnostic(cfg, r)
            rows.append((r, val, c1, c2))
    elif mode == "interference":
        cols = ["r", "s_dl", "chi1_1", "chi1_2", "chi2_1", "chi2_2"]
        for r in rates:
            pol, val = optimal_interference_aware(cfg, r)
            rows.append((r, val) + pol.enqueue_prob[0] + pol.enqueue_prob[1])
    else:
        cols = (["r", "s_dl"]
                + [f"chi1_{j}" for j in range(1, qq + 2)]
                + [f"chi2_{j}" for j in range(1, qq + 2)])
        for r in rates:
            pol, val = conjectured_optimum_channel_aware(cfg, r, qq)
            rows.append((r, val) + pol.enqueue_prob[0] + pol.enqueue_prob[1])
    return cols, rows, 0


def _field_from_order(order: int) -> FieldSpec:
    l = order.bit_length() - 1
    if order < 2 or (1 << l) != order:
        raise UsageError(f"field order must be a power of two >= 2, got {order}")
    return FieldSpec.default(l)


def _cmd_rlc_finite(p: dict):
    eps, g = p["eps"][0], p["g"][0]
    cfg = SystemConfig(g, eps, 2)
    fld = _field_from_order(p["field_order"])
    m_ul = p["mul"]
    s_sa = throughput_sa(cfg)
    rates = p.get("r") or [0.3 + 0.05 * i for i in range(10)]
    rows = []
    for r in rates:
        r1 = min(r, s_sa)
        r2 = r - r1
        val = rlc_finite_buffer_throughput(cfg, m_ul, r1, r2, fld)
        rows.append((r, _round_half_up(m_ul * r1), _round_half_up(m_ul * r2), val))
    return ["r", "c1", "c2", "s_dl_analytic"], rows, 0


def _sim_uplink_cell(args):
    g, eps, k, mul, trials, seed = args
    cfg = SystemConfig(g, eps, k)
    rep = run_uplink(SimSpec(cfg, mul, trials, seed))
    return (g, eps, k, throughput_uplink(cfg), rep.mean_collected_per_slot,
            rep.ci_halfwidth_95["collected"], plr_uplink(cfg), rep.plr_estimate,
            rep.ci_halfwidth_95["plr"])


def _cmd_simulate(p: dict):
    what = p.get("what", "uplink")
    fail_frac = p.get("fail_frac", 0.1)
    seed, mul, trials = p["seed"], p["mul"], p["trials"]
    if what == "uplink":
        cells = [(g, eps, k, mul, trials, seed)
                 for eps in p["eps"] for k in p["k"] for g in p["g"]]
        nw = _workers()
        if nw > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=nw) as pool:
                results = list(pool.map(_sim_uplink_cell, cells))
        else:
            results = [_sim_uplink_cell(c) for c in cells]
        rows, fails = [], 0
        for res in results:
            ok_tru = abs(res[4] - res[3]) <= res[5]
            ok_plr = abs(res[7] - res[6]) <= res[8]
            fails += (not ok_tru) + (not ok_plr)
            rows.append(res + (float(ok_tru and ok_plr),))
        cols = ["g", "eps", "k", "s_ul_analytic", "s_ul_sim", "s_ul_ci",
                "plr_analytic", "plr_sim", "plr_ci", "ok"]
        code = 1 if fails > fail_frac * 2 * len(rows) else 0
        return cols, rows, code
    eps, g = p["eps"][0], p["g"][0]
    cfg = SystemConfig(g, eps, 2)
    s_sa = throughput_sa(cfg)
    rates = p.get("r") or [1.5 * s_sa]
    rows, nfail = [], 0
    if what == "rlc":
        rel_tol = p.get("rel_tol", 0.05)
        fld = _field_from_order(p["field_order"])
        for r in rates:
            r1 = min(r, s_sa)
            r2 = r - r1
            ana = rlc_finite_buffer_throughput(cfg, mul, r1, r2, fld)
            rep = run_rlc(SimSpec(cfg, mul, trials, seed, RlcDownlink(fld, (r1, r2))))
            sim = rep.mean_delivered_per_slot
            ok = abs(sim - ana) <= rel_tol * max(ana, 1e-9) + rep.ci_halfwidth_95["delivered"]
            nfail += not ok
            rows.append((r, ana, sim, rep.ci_halfwidth_95["delivered"], float(ok)))
        cols = ["r", "s_dl_analytic", "s_dl_sim", "ci", "ok"]
    elif what == "sfp":
        cap = p["buffer"]
        for r in rates:
            pol, ana = optimal_interference_aware(cfg, r)
            lam1 = sum(d * c for d, c in zip(_coeffs(cfg), pol.enqueue_prob[0]))
            lam2 = sum(d * c for d, c in zip(_coeffs(cfg), pol.enqueue_prob[1]))
            rep = run_sfp(SimSpec(cfg, mul, trials, seed,
                                  SfpDownlink(pol, (lam1, lam2), cap)))
            sim = rep.mean_delivered_per_slot
            ok = sim >= ana - max(3.0 * rep.ci_halfwidth_95["delivered"], 0.08 * ana)
            nfail += not ok
            rows.append((r, ana, sim, rep.ci_halfwidth_95["delivered"],
                         rep.overflow_per_slot, float(ok)))
        cols = ["r", "s_dl_analytic", "s_dl_sim", "ci", "overflow", "ok"]
    else:
        raise UsageError(f"unknown simulate target '{what}'")
    code = 1 if nfail > fail_frac * len(rows) else 0
    return cols, rows, code


def _coeffs(cfg: SystemConfig):
    from .policies import sfp_coefficients
    return sfp_coefficients(cfg, 1).delta


def _cmd_verify_conjecture(p: dict):
    eps, g = p["eps"][0], p["g"][0]
    cfg = SystemConfig(g, eps, 2)
    qq = p.get("q", 10)
    npts = p.get("points", 9)
    tol = p.get("tol", 1e-6)
    s_sa = throughput_sa(cfg)
    rows = []
    worst = 0.0
    for i in range(npts):
        r = s_sa + (i + 0.5) / npts * s_sa
        _, conj = conjectured_optimum_channel_aware(cfg, r, qq)
        _, opt = numeric_optimize_sfp(cfg, qq, r)
        gap = opt - conj
        worst = max(worst, abs(gap))
        rows.append((r, conj, opt, gap))
    return ["r", "s_conjecture", "s_optimizer", "gap"], rows, (1 if worst > tol else 0)


_HANDLERS = {
    "uplink": _cmd_uplink,
    "plr": _cmd_plr,
    "bound": _cmd_bound,
    "sfp": _cmd_sfp,
    "rlc-finite": _cmd_rlc_finite,
    "simulate": _cmd_simulate,
    "verify-conjecture": _cmd_verify_conjecture,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
        _, code = run_experiment(config)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
