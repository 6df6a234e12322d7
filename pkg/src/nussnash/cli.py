"""Command-line scenario runner.

    nussnash run CONFIG [--out DIR] [--set KEY=VALUE ...] [--tolerance X] [--retries N]
    nussnash sweep CONFIG KEY VALUE [VALUE ...] [--out DIR] [--jobs N]
    nussnash list-builtins
    nussnash validate CONFIG [--set KEY=VALUE ...]

CONFIG is a YAML/JSON file or ``builtin:<name>``.

Exit codes: 0 converged within tolerance, 1 config error, 2 diverged,
3 finished but the final error is above tolerance.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .game_model import GameError, NashSolverError, solve_nash
from .network import GraphError
from .scenarios import (
    DEFAULT_TOLERANCE,
    builtin_config,
    builtins,
    get_path,
    integration_settings,
    load_config,
    redact,
    scenario_from_config,
    set_path,
)
from .sim_engine import REG_SLOTS, ConfigError, RunLog, integrate, metrics

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_NOT_CONVERGED = 0, 1, 2, 3

log = logging.getLogger("nussnash")


# --- config handling ---------------------------------------------------------

def _overrides(cfg: dict, pairs) -> dict:
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not KEY=VALUE", item)
        cfg = set_path(cfg, key.strip(), value)
    return cfg


def prepare(config: str, sets=()) -> tuple[dict, object, dict]:
    """Load, override and parse a config; every failure becomes ``ConfigError``."""
    cfg = _overrides(load_config(config), sets)
    try:
        sc = scenario_from_config(cfg)
    except (GraphError, GameError, ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg, sc, integration_settings(cfg)


# --- artifacts ---------------------------------------------------------------

def _coords(dims):
    return [f"{i + 1}_{c + 1}" for i, d in enumerate(dims) for c in range(d)]


def trajectory_table(run: RunLog) -> tuple[list[str], np.ndarray]:
    """Header and data matrix for ``trajectory.csv``; columns depend on the config only."""
    lay, sc = run.layout, run.scenario
    parts = run.parts()
    names = _coords(lay.action_dims)
    header, cols = ["t"], [run.t]

    def add(prefix, series, which=None):
        for col, tag in enumerate(names):
            if which is None or which[col]:
                header.append(f"{prefix}_{tag}")
                cols.append(series[:, col])

    if lay.has_plants:
        add("x", parts["x"])
    add("y", parts["y"])
    if lay.has_plants:
        fams = [p.family for p in sc.players for _ in range(p.plant.dim)]
        for s, slot in enumerate(REG_SLOTS):
            add(slot, parts["reg"][:, s, :], [slot in f.slots for f in fams])
        vel = [p.plant.kind.has_velocity for p in sc.players for _ in range(p.plant.dim)]
        add("v", parts["v"], vel)
    if parts["delta"] is not None:
        delta = parts["delta"]
        n = lay.n_players
        if delta.shape[-1] == n:
            targets = [f"{j + 1}" for j in range(n)]
        else:
            targets = names
        for i in range(n):
            for j, tag in enumerate(targets):
                header.append(f"delta_{i + 1}_{tag}")
                cols.append(delta[:, i, j])
    if lay.has_plants:
        add("u", run.u)
    return header, np.column_stack(cols)


def write_trajectory(run: RunLog, path: Path) -> None:
    header, data = trajectory_table(run)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def reference_ne(game) -> np.ndarray:
    """The game's stated equilibrium, or the solver's when it has none."""
    if game.analytic_ne is not None:
        return game.analytic_ne
    try:
        return solve_nash(game)
    except NashSolverError as exc:
        raise ConfigError(f"no reference equilibrium: {exc}", "game") from None


def assess(run: RunLog, tolerance: float) -> tuple[dict, int]:
    """Metrics plus the exit status they imply."""
    if run.diverged:
        return {"diverged": True, "converged": False, "divergence": run.divergence}, EXIT_DIVERGED
    m = metrics(run, reference_ne(run.scenario.game))
    err = m["final_error"] if "final_error" in m else m["final_y_error"]
    ok = bool(np.isfinite(err) and err < tolerance)
    m.update(diverged=False, converged=ok, tolerance=tolerance)
    return m, EXIT_OK if ok else EXIT_NOT_CONVERGED


def _halved(settings: dict) -> dict:
    out = dict(settings)
    out["h"] = settings["h"] / 2
    out["warmup"] = [(t, h / 2) for t, h in settings.get("warmup", [])]
    return out


def execute(cfg, sc, settings, tolerance, retries=0):
    """Run, halving every step size up to ``retries`` times after a divergence."""
    attempts = []
    for attempt in range(retries + 1):
        run = integrate(sc, **settings)
        attempts.append({"h": settings["h"], "diverged": run.diverged})
        if not run.diverged or attempt == retries:
            break
        log.warning("diverged at h=%g, retrying at h=%g", settings["h"], settings["h"] / 2)
        settings = _halved(settings)
    summary, code = assess(run, tolerance)
    summary["run"] = _jsonable(run.meta)
    summary["attempts"] = attempts
    summary["config"] = _jsonable(redact(cfg))
    return run, summary, code


def _tolerance(args, cfg):
    tol = args.tolerance if args.tolerance is not None else cfg.get("tolerance", DEFAULT_TOLERANCE)
    try:
        tol = float(tol)
    except (TypeError, ValueError):
        raise ConfigError("tolerance must be a number", "tolerance") from None
    if not tol > 0:
        raise ConfigError("tolerance must be positive", "tolerance")
    return tol


# --- verbs ---------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg, sc, settings = prepare(args.config, args.set)
    tol = _tolerance(args, cfg)
    run, summary, code = execute(cfg, sc, settings, tol, args.retries)
    out = Path(args.out or cfg.get("out") or f"runs/{sc.name}")
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(run, out / "trajectory.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    status = {EXIT_OK: "converged", EXIT_DIVERGED: "diverged", EXIT_NOT_CONVERGED: "not converged"}[code]
    err = summary.get("final_error", summary.get("final_y_error"))
    print(f"{sc.name}: {status}" + (f", final error {err:.3e}" if err is not None else "")
          + f" -> {out}")
    return code


def _sweep_one(cfg, key, value, tol, out):
    row = {"value": value}
    try:
        c = set_path(cfg, key, value)
        sc = scenario_from_config(c)
        settings = integration_settings(c)
        run, summary, code = execute(c, sc, settings, tol)
    except (ConfigError, GraphError, GameError, ValueError) as exc:
        row.update(status="config_error", error=str(exc))
        return row
    row.update(status={0: "converged", 2: "diverged", 3: "not_converged"}[code],
               diverged=summary["diverged"])
    if not run.diverged:
        row["final_error"] = summary.get("final_error", summary.get("final_y_error"))
        row["final_y_error"] = summary["final_y_error"]
        ks = [ch[k] for ch in summary.get("channels", {}).values() for k in ("max_abs_k", "max_abs_k2") if k in ch]
        row["max_abs_k"] = max(ks) if ks else ""
    sub = out / f"{key}={value}"
    sub.mkdir(parents=True, exist_ok=True)
    (sub / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return row


SWEEP_FIELDS = ["value", "status", "diverged", "final_error", "final_y_error", "max_abs_k", "error"]


def cmd_sweep(args) -> int:
    if not args.values:
        raise ConfigError("sweep needs at least one value", args.key)
    cfg, _, _ = prepare(args.config, args.set)
    try:
        current = get_path(cfg, args.key)
    except ConfigError:
        current = None
    if current is not None and not isinstance(current, (int, float)):
        raise ConfigError("sweep parameter must be numeric", args.key)
    values = []
    for v in args.values:
        try:
            values.append(float(v))
        except ValueError:
            raise ConfigError(f"sweep value {v!r} is not a number", args.key) from None
    tol = _tolerance(args, cfg)
    out = Path(args.out or f"runs/sweep_{cfg.get('name', 'custom')}")
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda v: _sweep_one(cfg, args.key, v, tol, out), values))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    for row in rows:
        print(f"{args.key}={row['value']:g}: {row['status']}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in builtins():
        cfg = builtin_config(name)
        st = integration_settings(cfg)
        print(f"{name:22s} T={st['T']:g} h={st['h']:g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, sc, st = prepare(args.config, args.set)
    _tolerance(args, cfg)
    kind = "estimator only" if sc.players is None else f"{len(sc.players)} players"
    print(f"{sc.name}: ok ({kind}, T={st['T']:g}, h={st['h']:g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nussnash", description="Nash equilibrium seeking scenario runner")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("config", help="config file or builtin:<name>")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, YAML value)")
        sp.add_argument("--tolerance", type=float, default=None)

    r = sub.add_parser("run", help="simulate one scenario")
    common(r)
    r.add_argument("--out", default=None)
    r.add_argument("--retries", type=int, default=0, help="halve h and retry after a divergence")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run one scenario over several values of a numeric key")
    common(s)
    s.add_argument("key")
    s.add_argument("values", nargs="*")
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=4)
    s.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list-builtins", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a config without running it")
    common(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
