"""Command-line entry point: ``synth``, ``calibrate``, ``simulate`` and ``report``.

Options may also come from a JSON config file (``--config``); explicit
command-line flags win. The default output directory is taken from
``$INTERACTING_BS_OUTPUT_DIR`` (falling back to ``./out``).

Exit codes: 0 success, 1 numerical failure, 2 input/config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bubble import BubbleSpec, PowerLawRho, ZeroBubble, bubble_from_dict
from .calibration import CalibrationConfig, LMConfig, NewtonConfig, calibrate, compare_models
from .errors import (CalibrationInfeasibleError, ConvergenceError, InstabilityError, InteractingBSError,
                     NoRootError, ParseError)
from .market import (EstimationWindow, MarketSeries, estimate_params, load_history, load_series,
                     synthesize_market, write_series)
from .pde import default_grid
from .pricing import MarketParams, OptionContract
from .svg import line_plot

log = logging.getLogger("interacting_bs")

OUTPUT_ENV = "INTERACTING_BS_OUTPUT_DIR"
NUMERICAL_ERRORS = (CalibrationInfeasibleError, InstabilityError, ConvergenceError, NoRootError)

DEFAULTS = {
    "r": 0.00019,
    "mu": 0.0005,
    "sigma": 0.0046,
    "pre_window": 90,
    "n_space": 2000,
    "steps_per_day": 16,
    "newton_max_iter": 50,
    "lm_xtol": 1e-9,
    "lm_gtol": 1e-10,
    "lm_max_iter": 500,
    "min_sensitivity": 1e-3,
    "seed": 0,
    "n_days": 62,
    "s0": 1100.0,
    "start_date": "2000-01-03",
}


class ConfigError(InteractingBSError, ValueError):
    pass


# -- config ---------------------------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _merged(args) -> dict:
    """Built-in defaults < config file < explicit CLI flags."""
    cfg = dict(DEFAULTS)
    cfg.update(_load_config(args.config))
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config"):
            cfg[k] = v
    return cfg


def _output_dir(cfg) -> Path:
    out = cfg.get("out") or os.environ.get(OUTPUT_ENV) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_bubble(value) -> BubbleSpec:
    if isinstance(value, dict):
        return bubble_from_dict(value)
    text = str(value)
    if text.lstrip().startswith("{"):
        source = "inline bubble"
    else:
        source = text
        try:
            text = Path(text).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read bubble file {source}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid bubble JSON ({exc})") from exc
    return bubble_from_dict(doc)


def _params(cfg) -> MarketParams:
    if cfg.get("history"):
        window = EstimationWindow(pre_window=int(cfg["pre_window"]), rate=float(cfg["r"]))
        est = estimate_params(load_history(cfg["history"]), window)
        mu = float(cfg["mu_override"]) if cfg.get("mu_override") is not None else est.mu
        params = MarketParams(r=est.r, mu=mu, sigma=est.sigma)
    else:
        params = MarketParams(r=float(cfg["r"]), mu=float(cfg["mu"]), sigma=float(cfg["sigma"]))
    params.require_pricing()
    return params


def _newton_lm(cfg):
    newton = NewtonConfig(max_iter=int(cfg["newton_max_iter"]))
    lm = LMConfig(xtol=float(cfg["lm_xtol"]), gtol=float(cfg["lm_gtol"]), max_iter=int(cfg["lm_max_iter"]))
    return newton, lm


def _contract_for(series: MarketSeries, cfg) -> OptionContract:
    strike = float(cfg["strike"]) if cfg.get("strike") is not None else float(series.underlying[0])
    maturity = float(cfg["maturity"]) if cfg.get("maturity") is not None else float(series.days[-1])
    return OptionContract(strike=strike, maturity_T=maturity)


def _provenance(command, cfg, params, contract, grid, seed=None, extra=None) -> dict:
    newton, lm = _newton_lm(cfg)
    doc = {
        "command": command,
        "package_version": __version__,
        "seed": seed,
        "params": asdict(params),
        "contract": asdict(contract),
        "grid": asdict(grid) if grid is not None else None,
        "tolerances": {"newton": asdict(newton), "lm": asdict(lm),
                       "min_sensitivity": float(cfg["min_sensitivity"])},
        "config": {k: v for k, v in sorted(cfg.items()) if _jsonable(v)},
    }
    if extra:
        doc.update(extra)
    return doc


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_columns(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_cell(v) for v in row])


def _cell(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return "" if np.isnan(v) else repr(v)


# -- commands -------------------------------------------------------------------------------

def cmd_synth(cfg) -> int:
    out = _output_dir(cfg)
    params = MarketParams(r=float(cfg["r"]), mu=float(cfg["mu"]), sigma=float(cfg["sigma"]))
    if cfg.get("zero_bubble"):
        spec = ZeroBubble()
    elif cfg.get("bubble") is not None:
        spec = _read_bubble(cfg["bubble"])
    else:
        raise ConfigError("synth needs --bubble (file or inline JSON) or --zero-bubble")
    n_days = int(cfg["n_days"])
    s0 = float(cfg["s0"])
    strike = float(cfg["strike"]) if cfg.get("strike") is not None else s0
    maturity = float(cfg["maturity"]) if cfg.get("maturity") is not None else float(n_days)
    contract = OptionContract(strike=strike, maturity_T=maturity)
    grid = default_grid(contract, t_start=1.0, n_space=int(cfg["n_space"]),
                        steps_per_day=int(cfg["steps_per_day"]))
    seed = int(cfg["seed"])
    series = synthesize_market(params, contract, spec, n_days, seed, s0=s0, grid=grid,
                               start_date=str(cfg["start_date"]))
    target = out / (cfg.get("output_file") or "market.csv")
    write_series(series, target)
    _write_json(out / "synth.json", _provenance("synth", cfg, params, contract, grid, seed,
                                                {"bubble": spec.to_dict(), "market_csv": target.name}))
    print(f"wrote {target} ({len(series)} rows)")
    return 0


def _calibration_config(cfg, contract, t0):
    newton, lm = _newton_lm(cfg)
    grid = default_grid(contract, t_start=t0, n_space=int(cfg["n_space"]),
                        steps_per_day=int(cfg["steps_per_day"]))
    return CalibrationConfig(newton=newton, lm=lm, grid=grid,
                             min_sensitivity=float(cfg["min_sensitivity"])), grid


def cmd_calibrate(cfg) -> int:
    series = load_series(_require(cfg, "input"))
    out = _output_dir(cfg)
    params = _params(cfg)
    contract = _contract_for(series, cfg)
    ccfg, grid = _calibration_config(cfg, contract, float(series.days[0]))
    res = calibrate(series, contract, params, ccfg)

    days = res.days
    _write_columns(out / "mispricing.csv", ["day", "mispricing"], [days, res.mispricing])
    _write_columns(out / "rho.csv", ["day", "empirical", "fitted"], [days, res.rho_points, res.fit.rho(days)])
    _write_columns(out / "potential.csv", ["day", "value"], [res.potential.times, res.potential.values])
    _write_columns(out / "bubble.csv", ["day", "value"], [res.bubble.times, res.bubble.values])
    doc = _provenance("calibrate", cfg, params, contract, grid, cfg.get("seed"), {"input": str(cfg["input"])})
    doc["result"] = res.to_dict()
    _write_json(out / "result.json", doc)
    _plots_calibrate(out, days, res.mispricing, res.rho_points, res.fit.rho(days),
                     res.potential.times, res.potential.values, res.bubble.times, res.bubble.values)
    print(f"chi2_bs={res.chi2_bs:.6g} chi2_interacting={res.chi2_interacting:.6g} "
          f"a={res.fit.a:.6g} b={res.fit.b:.6g} c={res.fit.c:.6g}")
    return 0


def _plots_calibrate(out, days, mis, rho_emp, rho_fit, pt, pv, bt, bv):
    line_plot(out / "mispricing.svg", [("m(t)", days, mis)], "Mispricing", "day", "price")
    line_plot(out / "rho.svg", [("empirical rho*", days, rho_emp), ("fitted a + b t^c", days, rho_fit)],
              "Accumulated potential", "day", "rho")
    line_plot(out / "potential.svg", [("U(t)", pt, pv)], "Interaction potential", "day", "per day")
    line_plot(out / "bubble.svg", [("f*(t)", bt, bv)], "Arbitrage bubble", "day", "amplitude")


def _spec_from_result(path) -> BubbleSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read calibration result {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        fit = doc["result"]["fit"]
        return PowerLawRho(a=float(fit["a"]), b=float(fit["b"]), c=float(fit["c"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a calibration result (missing result.fit)") from exc


def cmd_simulate(cfg) -> int:
    series = load_series(_require(cfg, "input"))
    if cfg.get("result"):
        spec = _spec_from_result(cfg["result"])
    elif cfg.get("zero_bubble"):
        spec = ZeroBubble()
    elif cfg.get("bubble") is not None:
        spec = _read_bubble(cfg["bubble"])
    else:
        raise ConfigError("simulate needs --result, --bubble or --zero-bubble")
    out = _output_dir(cfg)
    params = _params(cfg)
    contract = _contract_for(series, cfg)
    t0 = float(series.days[0])
    grid = default_grid(contract, t_start=t0, n_space=int(cfg["n_space"]),
                        steps_per_day=int(cfg["steps_per_day"]))
    cmp = compare_models(series, contract, params, spec, grid)
    _write_columns(out / "prices.csv", ["day", "empirical", "bs", "interacting"],
                   [cmp.days, cmp.empirical, cmp.bs, cmp.interacting])
    doc = _provenance("simulate", cfg, params, contract, grid, cfg.get("seed"),
                      {"input": str(cfg["input"]), "bubble": spec.to_dict(),
                       "chi2_bs": cmp.chi2_bs, "chi2_interacting": cmp.chi2_interacting})
    _write_json(out / "result.json", doc)
    _plot_prices(out, cmp.days, cmp.empirical, cmp.bs, cmp.interacting)
    print(f"chi2_bs={cmp.chi2_bs:.6g} chi2_interacting={cmp.chi2_interacting:.6g}")
    return 0


def _plot_prices(out, days, emp, bs, inter):
    line_plot(out / "prices.svg", [("empirical P", days, emp), ("Black-Scholes", days, bs),
                                   ("interacting", days, inter)], "Option prices", "day", "price")


def _read_columns(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty", line=1)
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[i]) if r[i] != "" else np.nan for r in body]) for i, h in enumerate(header)}
    return cols


def cmd_report(cfg) -> int:
    """Re-render plots from an output directory and write a markdown summary."""
    src = Path(_require(cfg, "dir"))
    if not src.is_dir():
        raise ConfigError(f"{src} is not a directory")
    lines = [f"# Run report: {src}", ""]
    rj = src / "result.json"
    if rj.exists():
        doc = json.loads(rj.read_text(encoding="utf-8"))
        res = doc.get("result", doc)
        lines += ["| quantity | value |", "|---|---|", f"| command | {doc.get('command')} |"]
        for key in ("chi2_bs", "chi2_interacting"):
            if key in res:
                lines.append(f"| {key} | {res[key]:.6g} |")
        if "fit" in res:
            f = res["fit"]
            lines += [f"| a | {f['a']:.6g} |", f"| b | {f['b']:.6g} |", f"| c | {f['c']:.6g} |",
                      f"| fit converged | {f['converged']} |"]
        p = doc.get("params", {})
        lines += [f"| {k} | {v} |" for k, v in sorted(p.items())]
        lines.append("")
    rendered = []
    if (src / "mispricing.csv").exists():
        mis = _read_columns(src / "mispricing.csv")
        rho = _read_columns(src / "rho.csv")
        pot = _read_columns(src / "potential.csv")
        bub = _read_columns(src / "bubble.csv")
        _plots_calibrate(src, mis["day"], mis["mispricing"], rho["empirical"], rho["fitted"],
                         pot["day"], pot["value"], bub["day"], bub["value"])
        rendered += ["mispricing.svg", "rho.svg", "potential.svg", "bubble.svg"]
    if (src / "prices.csv").exists():
        pr = _read_columns(src / "prices.csv")
        _plot_prices(src, pr["day"], pr["empirical"], pr["bs"], pr["interacting"])
        rendered.append("prices.svg")
    if not rendered and not rj.exists():
        raise ConfigError(f"{src} holds no run artifacts")
    lines += ["## Figures", ""] + [f"![{name}]({name})" for name in rendered]
    (src / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {src / 'report.md'}")
    return 0


def _require(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return cfg[key]


# -- parser ---------------------------------------------------------------------------------

def _add_common(p, with_params=True):
    p.add_argument("--config", help="JSON config file; CLI flags override its keys")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./out)")
    p.add_argument("--seed", type=int)
    if with_params:
        p.add_argument("--r", type=float, help="risk-free rate per day")
        p.add_argument("--mu", type=float, help="drift per day")
        p.add_argument("--sigma", type=float, help="volatility per sqrt(day)")
        p.add_argument("--strike", type=float)
        p.add_argument("--maturity", type=float, help="maturity T in days")
        p.add_argument("--n-space", type=int, help="interior price nodes of the PDE grid")
        p.add_argument("--steps-per-day", type=int, help="PDE time steps per day")


def _add_estimation(p):
    p.add_argument("--history", help="CSV (date,underlying) of pre-contract prices; estimates sigma and mu")
    p.add_argument("--pre-window", type=int, help="estimation window in days (default 90)")
    p.add_argument("--mu-override", type=float, help="use this mu instead of the estimated one")
    p.add_argument("--newton-max-iter", type=int)
    p.add_argument("--lm-xtol", type=float)
    p.add_argument("--lm-gtol", type=float)
    p.add_argument("--lm-max-iter", type=int)
    p.add_argument("--min-sensitivity", type=float,
                   help="days whose inversion sensitivity (per unit strike) is lower are not fitted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interacting-bs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic market CSV with a planted bubble")
    _add_common(p)
    p.add_argument("--n-days", type=int)
    p.add_argument("--s0", type=float, help="opening underlying price (default strike = s0)")
    p.add_argument("--bubble", help="bubble JSON file or inline JSON document")
    p.add_argument("--zero-bubble", action="store_true", default=None)
    p.add_argument("--start-date")
    p.add_argument("--output-file", help="file name inside the output directory (default market.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="calibrate rho*, U and f* from a market CSV")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--input", help="market CSV (date,underlying,option)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="reprice with BS and the interacting model, compare chi^2")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--input", help="market CSV (date,underlying,option)")
    p.add_argument("--result", help="result.json from calibrate (uses its fitted a, b, c)")
    p.add_argument("--bubble", help="bubble JSON file or inline JSON document")
    p.add_argument("--zero-bubble", action="store_true", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-render plots and a markdown summary for an output directory")
    p.add_argument("--config")
    p.add_argument("--dir", help="output directory of a previous run")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    verbose = args.verbose
    del args.verbose, args.command
    try:
        cfg = _merged(args)
        return args.func(cfg)
    except NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InteractingBSError, ValueError, OSError) as exc:
        if verbose:
            log.exception("input/config error")
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
