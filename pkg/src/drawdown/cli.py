"""Command-line interface.

Subcommands: solve (dual coefficients and boundaries as JSON), table
(value-function or policy CSV), simulate (Monte-Carlo ensemble), verify
(invariant suite), illposed (blow-up demonstration), rerun (reproduce a
previous run from its manifest). Every run writes a manifest next to its
outputs recording the resolved configuration; rerunning from the manifest
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dual import eval_J, ode_residual, region_boundaries, solve_coefficients
from .errors import (
    ConfigError,
    DrawdownError,
    IllPosed,
    InvalidParams,
    OrderingViolation,
    RootNotBracketed,
    WellPosed,
)
from .illposed import IllPosedConfig, demonstrate, euler_consistency, lambda_bound
from .kernels import layout as L
from .model import ModelParams, derive, params_from_dict
from .policy import decide
from .primal import floor_value, v_grid, value_function
from .sim import Ensemble, SimConfig, estimate_budget, estimate_Y_drift, simulate


def _fmt(x: float) -> str:
    """Format a float with 17 significant digits (round-trips exactly)."""
    return f"{float(x):.17g}"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _serialize(o, indent: int) -> str:
    """JSON text with floats at 17 significant digits (deterministic)."""
    pad = " " * indent
    if isinstance(o, bool):
        return "true" if o else "false"
    if o is None:
        return "null"
    if isinstance(o, (float, np.floating)):
        v = float(o)
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return _fmt(v)
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_serialize(v, indent + 2)}'
            for k, v in o.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(o, (list, tuple, np.ndarray)):
        seq = list(o)
        if not seq:
            return "[]"
        items = [f"{pad}  {_serialize(v, indent + 2)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(_serialize(payload, 0) + "\n")


def _load_config(path: str) -> ModelParams:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return params_from_dict(raw)


def _params_payload(params: ModelParams) -> dict:
    return {
        "r": params.r, "mu": params.mu, "sigma": params.sigma,
        "rho": params.rho, "R": params.R, "b": params.b,
    }


def _solve(params: ModelParams):
    derived = derive(params)
    sol = solve_coefficients(derived, params)
    return derived, sol, region_boundaries(sol)


# ---------------------------------------------------------------- solve

def _cmd_solve(cfg: dict, out_dir: Path) -> list[str]:
    params = params_from_dict(cfg["params"])
    derived, sol, rb = _solve(params)
    payload = {
        "branch": sol.branch,
        "derived": {
            "kappa": derived.kappa, "gamma_M": derived.gamma_M,
            "R_star": derived.R_star, "alpha": derived.alpha,
            "beta": derived.beta,
        },
        "coefficients": {
            "A": sol.A, "B": sol.B, "C": sol.C, "D": sol.D,
            "E": sol.E, "F": sol.F, "G": sol.G,
        },
        "z_a": sol.z_a,
        "knots": list(sol.knots),
        "boundaries": {
            "x_floor": rb.x_floor, "x_kink": rb.x_kink,
            "x_one": rb.x_one, "a": rb.a,
        },
    }
    _write_json(out_dir / "solve.json", payload)
    return ["solve.json"]


# ---------------------------------------------------------------- table

def _cmd_table(cfg: dict, out_dir: Path) -> list[str]:
    params = params_from_dict(cfg["params"])
    _, sol, rb = _solve(params)
    x_lo = cfg.get("x_min", rb.x_floor)
    x_hi = cfg.get("x_max", 1.25 * rb.a)
    n = int(cfg.get("n", 201))
    if not x_hi > x_lo or n < 2:
        raise ConfigError("need x_max > x_min and n >= 2")
    if cfg.get("policy", False):
        lines = ["x,theta_over_cbar,c_over_cbar,region"]
        for x in np.linspace(x_lo, x_hi, n):
            d = decide(sol, float(x), 1.0)
            lines.append(f"{_fmt(x)},{_fmt(d.theta)},{_fmt(d.c)},{d.region}")
        name = "policy_table.csv"
    else:
        lines = ["x,v,vp,region"]
        for pt in v_grid(sol, float(x_lo), float(x_hi), n):
            lines.append(f"{_fmt(pt.x)},{_fmt(pt.v)},{_fmt(pt.vp)},{pt.region}")
        name = "table.csv"
    (out_dir / name).write_text("\n".join(lines) + "\n")
    return [name]


# ------------------------------------------------------------- simulate

def _cmd_simulate(cfg: dict, out_dir: Path) -> list[str]:
    params = params_from_dict(cfg["params"])
    _, sol, rb = _solve(params)
    sim_cfg = SimConfig(
        t_end=float(cfg.get("t_end", 1.0)),
        dt=float(cfg.get("dt", 1e-3)),
        n_paths=int(cfg.get("paths", 100)),
        seed=int(cfg.get("seed", 0)),
        w0=float(cfg.get("w0", rb.a)),
        cbar0=float(cfg.get("cbar0", 1.0)),
    )
    ens = simulate(params, sol, sim_cfg, strategy=cfg.get("strategy", "optimal"))
    outputs = []
    n_save = int(cfg.get("save_paths", 0))
    for i in range(min(n_save, sim_cfg.n_paths)):
        rec = ens.path(i)
        lines = ["t,S,w,cbar,x,theta,c,region"]
        for j in range(len(rec.t)):
            lines.append(
                f"{_fmt(rec.t[j])},{_fmt(rec.S[j])},{_fmt(rec.w[j])},"
                f"{_fmt(rec.cbar[j])},{_fmt(rec.x[j])},{_fmt(rec.theta[j])},"
                f"{_fmt(rec.c[j])},{L.REGION_NAMES[rec.region[j]]}"
            )
        name = f"path_{i:04d}.csv"
        (out_dir / name).write_text("\n".join(lines) + "\n")
        outputs.append(name)

    drift = estimate_Y_drift(ens, ens.t[-1])
    budget = estimate_budget(ens)
    A, D = ens.arrays, ens.diagnostics
    summary = {
        "backend": kernels.BACKEND,
        "strategy": ens.strategy,
        "n_paths": sim_cfg.n_paths,
        "n_steps": ens.n_steps,
        "t_end": sim_cfg.t_end,
        "means": {
            "w_final": float(A["w"][:, -1].mean()),
            "cbar_final": float(A["cbar"][:, -1].mean()),
            "x_final": float(A["x"][:, -1].mean()),
            "Y_drift": drift.mean,
        },
        "stderrs": {
            "w_final": float(A["w"][:, -1].std(ddof=1) / math.sqrt(ens.n_paths)),
            "Y_drift": drift.stderr,
        },
        "budget": {
            "estimate": budget.estimate, "stderr": budget.stderr,
            "w0": budget.w0, "within_bound": budget.within_bound,
        },
        "diagnostics": {
            "ratchet_steps": int(D["ratchet_count"].sum()),
            "floor_projection_steps": int(D["proj_count"].sum()),
            "min_x": float(D["min_x"].min()),
            "max_x": float(D["max_x"].max()),
        },
    }
    _write_json(out_dir / "summary.json", summary)
    outputs.append("summary.json")
    return outputs


# --------------------------------------------------------------- verify

def run_verification(params: ModelParams) -> dict:
    """Fast invariant suite over the closed-form solution at one parameter set."""
    derived, sol, rb = _solve(params)
    checks = {}

    zg = np.concatenate([
        np.linspace(sol.z_a * 1.0000001, sol.knots[1] * 0.9999999, 250),
        np.linspace(sol.knots[1] * 1.0000001, sol.knots[2] * 0.9999999, 250),
        np.geomspace(sol.knots[2] * 1.0000001, 1e6, 250),
        np.linspace(sol.z_a * 0.01, sol.z_a * 0.9999999, 250),
    ])
    res = max(abs(ode_residual(sol, float(z))) for z in zg)
    checks["ode_residual_max"] = {"value": res, "ok": res <= 1e-9}

    knot_err = 0.0
    for zk in sol.knots[1:3]:
        lo = eval_J(sol, zk * (1 - 1e-9))
        hi = eval_J(sol, zk * (1 + 1e-9))
        for a, b in zip(lo[:3], hi[:3]):
            knot_err = max(knot_err, abs(a - b) / max(1.0, abs(a)))
    checks["knot_mismatch_max"] = {"value": knot_err, "ok": knot_err <= 1e-6}

    ordered = rb.x_floor < rb.x_kink < rb.x_one < rb.a
    checks["boundary_ordering"] = {
        "value": [rb.x_floor, rb.x_kink, rb.x_one, rb.a], "ok": bool(ordered),
    }

    rt = 0.0
    for x in np.linspace(rb.x_floor * 1.001, rb.a * 0.999, 60):
        v1 = value_function(sol, float(x), 1.0)
        d = decide(sol, float(x), 1.0)
        rt = max(rt, 0.0 if np.isfinite(v1) else 1.0)
    vfloor = value_function(sol, rb.x_floor, 1.0)
    err_floor = abs(vfloor - floor_value(sol)) / max(1.0, abs(vfloor))
    checks["value_at_floor"] = {"value": err_floor, "ok": err_floor <= 1e-12}

    th_near = decide(sol, rb.x_floor + 1e-6 * (rb.a - rb.x_floor), 1.0).theta
    th_mid = decide(sol, 0.5 * (rb.x_floor + rb.a), 1.0).theta
    ok_theta = abs(th_near) <= 1e-2 * abs(th_mid)
    checks["theta_vanishes_at_floor"] = {
        "value": [th_near, th_mid], "ok": bool(ok_theta),
    }

    xs = np.linspace(rb.x_floor, rb.a * 1.2, 200)
    cs = [decide(sol, float(x), 1.0).c for x in xs]
    mono = all(c2 >= c1 - 1e-10 for c1, c2 in zip(cs, cs[1:]))
    checks["consumption_nondecreasing"] = {"value": None, "ok": bool(mono)}

    checks["all_ok"] = all(
        c["ok"] for k, c in checks.items() if isinstance(c, dict)
    )
    return checks


def _cmd_verify(cfg: dict, out_dir: Path) -> list[str]:
    params = params_from_dict(cfg["params"])
    checks = run_verification(params)
    _write_json(out_dir / "verify.json", checks)
    if not checks["all_ok"]:
        failed = [k for k, v in checks.items() if isinstance(v, dict) and not v["ok"]]
        raise OrderingViolation(f"verification failed: {', '.join(failed)}")
    return ["verify.json"]


# ------------------------------------------------------------- illposed

def _cmd_illposed(cfg: dict, out_dir: Path) -> list[str]:
    raw = dict(cfg["params"])
    if cfg.get("R") is not None:
        raw["R"] = float(cfg["R"])
    params = params_from_dict(raw)
    ip_cfg = IllPosedConfig(
        lam=cfg.get("lam"),
        w0=float(cfg.get("w0", 1.0)),
        t_grid=tuple(float(t) for t in cfg.get("t_grid", (1, 2, 4, 6, 8, 10))),
        dt=float(cfg.get("dt", 0.01)),
        n_paths=int(cfg.get("paths", 20000)),
        seed=int(cfg.get("seed", 0)),
    )
    tab = demonstrate(params, ip_cfg)
    payload = {
        "lambda_bound": tab.lam_max,
        "lambda": tab.lam,
        "rate": tab.rate,
        "table": [
            {"T": float(t), "G": float(g), "stderr": float(se)}
            for t, g, se in zip(tab.t, tab.G, tab.G_stderr)
        ],
        "fitted_slope": tab.fitted_slope,
        "ci": tab.ci,
    }
    _write_json(out_dir / "illposed.json", payload)
    return ["illposed.json"]


# ---------------------------------------------------------- dispatch

_COMMANDS = {
    "solve": _cmd_solve,
    "table": _cmd_table,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "illposed": _cmd_illposed,
}


def _execute(subcommand: str, cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    outputs = _COMMANDS[subcommand](cfg, out_dir)
    manifest = {
        "subcommand": subcommand,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "outputs": outputs,
        "duration_seconds": round(time.monotonic() - t0, 6),
    }
    _write_json(out_dir / "manifest.json", manifest)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="drawdown",
        description="Optimal consumption-investment with a drawdown constraint",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON file with keys r,mu,sigma,rho,R,b")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("solve", help="dual coefficients, knots and boundaries")
    add_common(p)

    p = sub.add_parser("table", help="value-function or policy table (CSV)")
    add_common(p)
    p.add_argument("--policy", action="store_true", help="emit the policy table instead")
    p.add_argument("--x-min", type=float, default=None)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--n", type=int, default=201)

    p = sub.add_parser("simulate", help="Monte-Carlo ensemble under a strategy")
    add_common(p)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w0", type=float, default=None)
    p.add_argument("--cbar0", type=float, default=1.0)
    p.add_argument("--strategy", default="optimal", help="optimal or prop:PI:S")
    p.add_argument("--save-paths", type=int, default=0, help="write the first N path CSVs")

    p = sub.add_parser("verify", help="run the invariant suite")
    add_common(p)

    p = sub.add_parser("illposed", help="blow-up demonstration for R <= R*")
    add_common(p)
    p.add_argument("--R", type=float, default=None, help="override R from the config")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--t-grid", default="1,2,4,6,8,10", help="comma-separated horizons")
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)

    p = sub.add_parser("rerun", help="reproduce a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="output directory (default: manifest's)")
    return ap


def _args_to_cfg(args: argparse.Namespace) -> dict:
    params = _load_config(args.config)
    cfg: dict = {"params": _params_payload(params)}
    if args.cmd == "table":
        cfg["policy"] = bool(args.policy)
        if args.x_min is not None:
            cfg["x_min"] = args.x_min
        if args.x_max is not None:
            cfg["x_max"] = args.x_max
        cfg["n"] = args.n
    elif args.cmd == "simulate":
        cfg.update(
            t_end=args.t_end, dt=args.dt, paths=args.paths, seed=args.seed,
            cbar0=args.cbar0, strategy=args.strategy, save_paths=args.save_paths,
        )
        if args.w0 is not None:
            cfg["w0"] = args.w0
    elif args.cmd == "illposed":
        try:
            t_grid = [float(t) for t in args.t_grid.split(",") if t.strip()]
        except ValueError as e:
            raise ConfigError(f"bad --t-grid {args.t_grid!r}: {e}") from e
        cfg.update(
            R=args.R, lam=args.lam, t_grid=t_grid, paths=args.paths,
            seed=args.seed, w0=args.w0, dt=args.dt,
        )
    return cfg


def run(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "rerun":
            mp = Path(args.manifest)
            if not mp.is_file():
                raise ConfigError(f"manifest file not found: {args.manifest}")
            manifest = json.loads(mp.read_text())
            sub = manifest.get("subcommand")
            if sub not in _COMMANDS:
                raise ConfigError(f"manifest names unknown subcommand {sub!r}")
            out_dir = Path(args.out) if args.out else mp.parent
            _execute(sub, manifest["config"], out_dir)
        else:
            _execute(args.cmd, _args_to_cfg(args), Path(args.out))
        return 0
    except (ConfigError, InvalidParams, IllPosed, WellPosed) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (RootNotBracketed, OrderingViolation, DrawdownError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
