"""Command-line entry point: ``eqpricing <command> [--config PATH] [--out DIR] ...``.

Every run writes its outputs plus ``<command>.manifest.json`` into ``--out``.
CSV files hold floats at 12 significant digits and carry no run metadata, so
repeated runs with the same inputs produce byte-identical files.  Failures
print a JSON error object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, figures, heston, info_based, mc_oracle, oujump
from .equilibrium import Call, Linear, MarketSpec
from .errors import ConfigError, PricingError
from .fourier_pricer import price_linear_special, price_market
from .quadrature import QuadratureConfig
from .vol_surface import default_strikes, smile, smile_rows

SCHEMA_VERSION = 1
COMMANDS = ("price-heston", "price-oujump", "smile", "info-bond", "info-exponential", "oracle", "figure")
FIGURES = ("1", "2", "3", "3a", "4", "5")

HESTON_KEYS = {"mu", "kappa", "lam", "sigma", "v0", "x0"}
OU_KEYS = {"lam", "mu", "kappa", "theta", "x0"}


# -- formatting ----------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return float(fmt(f)) if np.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="ascii")


# -- configs -------------------------------------------------------------------------


def load_config(path, allowed: set, required: set = frozenset()) -> dict:
    if path is None:
        cfg = {}
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        if cfg.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    unknown = set(cfg) - allowed - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    return cfg


def _params(d, keys: set, cls, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - keys
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_model(kind: str, params: dict):
    if kind == "heston":
        return heston.HestonModel(_params(params, HESTON_KEYS, heston.HestonParams, "model"))
    if kind == "oujump":
        return oujump.OUJumpModel(_params(params, OU_KEYS, oujump.OUJumpParams, "model"))
    raise ConfigError(f"model_type must be 'heston' or 'oujump', got {kind!r}")


def _times(spec) -> np.ndarray:
    if isinstance(spec, dict):
        _params(spec, {"start", "stop", "step"}, lambda **k: k, "times")
        start, stop, step = (float(spec.get(k, d)) for k, d in (("start", 0.0), ("stop", None), ("step", None)))
        return np.round(np.arange(start, stop + step * 1e-6, step), 12)
    return np.asarray(spec, dtype=float)


def _quad(args) -> QuadratureConfig:
    return QuadratureConfig() if args.tol is None else QuadratureConfig(abs_tol=args.tol, rel_tol=args.tol)


# -- commands ------------------------------------------------------------------------


PRICE_KEYS = {"model", "gamma", "horizon", "t", "state", "strikes", "call_supply"}


def _price(kind: str, args) -> dict:
    cfg = load_config(args.config, PRICE_KEYS, {"model", "gamma", "horizon"})
    model = build_model(kind, cfg["model"])
    g, T, t = float(cfg["gamma"]), float(cfg["horizon"]), float(cfg.get("t", 0.0))
    state = model.default_state() if cfg.get("state") is None else tuple(float(s) for s in cfg["state"])
    out = {"gamma": g, "horizon": T, "t": t, "state": list(state)}
    if kind == "heston":
        out["closed_form"] = heston.equilibrium_price(model.params, g, T, t, state[0], state[1])
    else:
        out["closed_form"] = oujump.equilibrium_price(model.params, g, T, t, state[0])
    out["transform"] = price_linear_special(model, g, T, t, state)
    strikes = cfg.get("strikes") or []
    if strikes:
        supply = cfg.get("call_supply", "traded")
        if supply not in ("traded", "zero"):
            raise ConfigError("call_supply must be 'traded' or 'zero'")
        payoffs = (Linear(), *[Call(float(k)) for k in strikes])
        gts = [g] + [g if supply == "traded" else 0.0] * len(strikes)
        prices = price_market(model, MarketSpec.from_adjusted(gts, payoffs, T), _quad(args), t, state)
        out["market"] = {"strikes": list(map(float, strikes)), "call_supply": supply,
                         "stock": float(prices[0]), "calls": list(map(float, prices[1:]))}
    name = f"price_{kind}.json"
    write_json(args.out / name, out)
    return {"outputs": [name], "result": out}


SMILE_KEYS = {"model_type", "model", "horizon", "gamma", "sweep", "strikes", "convention", "call_supply"}


def _smile(args) -> dict:
    cfg = load_config(args.config, SMILE_KEYS, {"model_type", "model", "horizon", "sweep"})
    sweep = _params(cfg["sweep"], {"parameter", "values"}, lambda **k: k, "sweep")
    param, values = sweep.get("parameter"), [float(v) for v in sweep.get("values", [])]
    if not values:
        raise ConfigError("sweep.values must be a non-empty list")
    T = float(cfg["horizon"])
    base = dict(cfg["model"])
    if param == "gamma":
        model = build_model(cfg["model_type"], base)
        build = lambda v: (model, v)  # noqa: E731
    else:
        if param not in base:
            raise ConfigError(f"sweep parameter {param!r} is neither 'gamma' nor a model parameter")
        if "gamma" not in cfg:
            raise ConfigError("a model-parameter sweep needs a fixed 'gamma'")
        build = lambda v: (build_model(cfg["model_type"], {**base, param: v}), float(cfg["gamma"]))  # noqa: E731
    strikes = cfg.get("strikes") or default_strikes(build(values[0])[0], T)
    smiles = smile(build, values, np.asarray(strikes, dtype=float), T, quad=_quad(args),
                   convention=cfg.get("convention", "lognormal"), call_supply=cfg.get("call_supply", "traded"))
    write_csv(args.out / "smile.csv", figures.SMILE_HEADER, smile_rows(smiles))
    failed = sum(not p.ok for pts in smiles.values() for p in pts)
    return {"outputs": ["smile.csv"], "failed_points": failed}


BOND_KEYS = {"p1", "x1", "sigma", "horizon", "gamma_tilde", "times", "outcome"}


def _simulate_one(spec, times, outcome, seed):
    true = None if outcome == "draw" else [outcome]
    return info_based.simulate_information_paths(spec, true, times, seed=seed, n_paths=1)


def _info_bond(args) -> dict:
    cfg = load_config(args.config, BOND_KEYS, {"p1", "sigma", "horizon", "gamma_tilde", "times"})
    x1 = float(cfg.get("x1", 1.0))
    outcome = cfg.get("outcome", "draw")
    outcome = {"no_default": x1, "default": 0.0}.get(outcome, outcome)
    if outcome != "draw" and not isinstance(outcome, float):
        raise ConfigError("outcome must be 'no_default', 'default' or 'draw'")
    p1 = float(cfg["p1"])
    spec = info_based.InfoModelSpec(
        float(cfg["horizon"]), (info_based.Factor(info_based.DiscretePrior((0.0, x1), (1 - p1, p1)), float(cfg["sigma"])),),
        gamma_tilde=(float(cfg["gamma_tilde"]),))
    times = _times(cfg["times"])
    paths = _simulate_one(spec, times, outcome, args.seed)
    xi = paths.xi[0, :, 0]
    price = info_based.binary_bond_path(p1, x1, spec.factors[0].info_rate, spec.horizon, spec.gamma_tilde[0], times, xi)
    mean, var = info_based.posterior_moments(spec, times, xi)
    write_csv(args.out / "info_bond.csv", ("t", "xi", "price", "posterior_mean", "posterior_var"),
              zip(times, xi, price, mean, var))
    return {"outputs": ["info_bond.csv"], "factor": float(paths.factors[0, 0])}


EXP_KEYS = {"kappa", "sigma", "horizon", "gamma_tilde", "times", "true_value"}


def _info_exponential(args) -> dict:
    cfg = load_config(args.config, EXP_KEYS, {"kappa", "sigma", "horizon", "gamma_tilde", "times"})
    spec = info_based.InfoModelSpec(
        float(cfg["horizon"]), (info_based.Factor(info_based.ExponentialPrior(float(cfg["kappa"])), float(cfg["sigma"])),),
        gamma_tilde=(float(cfg["gamma_tilde"]),))
    times = _times(cfg["times"])
    true = cfg.get("true_value")
    paths = _simulate_one(spec, times, "draw" if true is None else float(true), args.seed)
    xi = paths.xi[0, :, 0]
    price, var_q = info_based.posterior_moments(spec, times, xi, spec.gamma_tilde[0])
    mean, var = info_based.posterior_moments(spec, times, xi)
    write_csv(args.out / "info_exponential.csv", ("t", "xi", "price", "var_q", "posterior_mean", "posterior_var"),
              zip(times, xi, price, var_q, mean, var))
    return {"outputs": ["info_exponential.csv"], "factor": float(paths.factors[0, 0])}


ORACLE_KEYS = {"model_type", "model", "gamma", "horizon", "strikes", "call_supply", "n_steps"}


def _oracle(args) -> dict:
    cfg = load_config(args.config, ORACLE_KEYS, {"model_type", "model", "gamma", "horizon"})
    model = build_model(cfg["model_type"], cfg["model"])
    g, T = float(cfg["gamma"]), float(cfg["horizon"])
    strikes = [float(k) for k in cfg.get("strikes") or []]
    payoffs = (Linear(), *[Call(k) for k in strikes])
    gts = [g] + [g if cfg.get("call_supply", "traded") == "traded" else 0.0] * len(strikes)
    n = args.paths or 1_000_000
    if cfg["model_type"] == "heston":
        est = mc_oracle.heston_oracle(model.params, payoffs, gts, T, n, args.seed, cfg.get("n_steps"))
    else:
        est = mc_oracle.oujump_oracle(model.params, payoffs, gts, T, n, args.seed)
    reference = price_market(model, MarketSpec.from_adjusted(gts, payoffs, T), _quad(args))
    rows = [{"security": "stock" if k == 0 else f"call_{strikes[k - 1]:.12g}", **e.as_dict(),
             "reference": float(r), "z": (e.value - float(r)) / e.std_error} for k, (e, r) in enumerate(zip(est, reference))]
    write_json(args.out / "oracle.json", {"estimates": rows})
    return {"outputs": ["oracle.json"]}


FIGURE_KEYS = {"strikes", "convention", "call_supply"}


def _figure(args) -> dict:
    cfg = load_config(args.config, FIGURE_KEYS)
    kw = {}
    if args.name in figures.SMILE_RECIPES:
        kw = {k: cfg[k] for k in FIGURE_KEYS if k in cfg}
        if "strikes" in kw:
            kw["strikes"] = np.asarray(kw["strikes"], dtype=float)
    elif cfg:
        raise ConfigError("bond figures take no config")
    table = figures.figure_table(args.name, seed=args.seed, quad=_quad(args), **kw)
    name = f"fig{args.name}.csv"
    write_csv(args.out / name, table.header, table.rows)
    return {"outputs": [name]}


HANDLERS = {
    "price-heston": lambda a: _price("heston", a),
    "price-oujump": lambda a: _price("oujump", a),
    "smile": _smile,
    "info-bond": _info_bond,
    "info-exponential": _info_exponential,
    "oracle": _oracle,
    "figure": _figure,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (schema_version %d)" % SCHEMA_VERSION)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--paths", type=int, default=None, help="Monte Carlo paths (oracle)")
    common.add_argument("--tol", type=float, default=None, help="quadrature abs/rel tolerance")
    p = argparse.ArgumentParser(prog="eqpricing", description="Equilibrium security and option pricing.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, parents=[common])
        if cmd == "figure":
            sp.add_argument("name", choices=FIGURES)
    return p


def _raising_module(exc: BaseException) -> str:
    """Innermost package module on the traceback (where the error was raised)."""
    tb, name = exc.__traceback__, __name__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("eqpricing."):
            name = mod
        tb = tb.tb_next
    return name


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    recipe = args.command + (f"-{args.name}" if args.command == "figure" else "")
    try:
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol must be positive")
        if args.paths is not None and args.paths < 2:
            raise ConfigError("--paths must be at least 2")
        args.out.mkdir(parents=True, exist_ok=True)
        info = HANDLERS[args.command](args)
    except (ConfigError, PricingError, ValueError, OverflowError) as exc:
        err = {"error": type(exc).__name__, "module": _raising_module(exc), "message": str(exc), "recipe": recipe}
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 3
    manifest = {
        "recipe": recipe,
        "argv": [str(a) for a in argv],
        "config": None if args.config is None else str(args.config),
        "out": str(args.out),
        "seed": args.seed,
        "paths": args.paths,
        "tol": args.tol,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **info,
    }
    write_json(args.out / f"{recipe}.manifest.json", manifest)
    print(json.dumps(_jsonable({"recipe": recipe, "outputs": info["outputs"]})))
    return 0


def main() -> None:
    sys.exit(run())
