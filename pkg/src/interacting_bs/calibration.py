"""Bubble calibration from option mispricing.

Pipeline: mispricing ``m = pi_emp - pi_BS`` on each day; pointwise inversion
of the semiclassical mispricing equation for the accumulated potential
``rho*``; Levenberg-Marquardt fit of ``rho(t) = a + b t^c``; potential
``U(t) = -c b t^(c-1)``; bubble ``f* = sigma U / (r - mu + U)``; and the chi^2
comparison of equilibrium vs interacting prices along the observed path.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bubble import BubbleSpec, PotentialSeries, PowerLawRho, bubble_from_potential
from .errors import (CalibrationInfeasibleError, ConvergenceError, ModelDomainError,
                     NoRootError, SingularityError)
from .market import MarketSeries
from .pde import GridSpec, default_grid, evaluate_on_path, solve_interacting
from .pricing import MarketParams, OptionContract, bs_closed_form, bs_delta

log = logging.getLogger(__name__)

DEFAULT_C_STARTS = (-0.5, -0.1, 0.5)


@dataclass(frozen=True)
class MispricingSeries:
    days: np.ndarray
    values: np.ndarray


def compute_mispricing(series: MarketSeries, contract: OptionContract,
                       params: MarketParams) -> MispricingSeries:
    """``m_k = pi_emp(t_k) - pi_BS(S_emp(t_k), t_k)``."""
    if len(series) == 0:
        raise ModelDomainError("empty market series")
    model = np.empty(len(series))
    for k, (t, s) in enumerate(zip(series.days, series.underlying)):
        try:
            model[k] = bs_closed_form(s, t, contract, params)
        except ModelDomainError as exc:
            raise ModelDomainError(f"sample {k} (day {t:g}): {exc}") from exc
    return MispricingSeries(days=series.days.copy(), values=series.option - model)


# -- pointwise inversion -------------------------------------------------------

@dataclass(frozen=True)
class NewtonConfig:
    max_iter: int = 50
    bracket: tuple = (-5.0, 5.0)
    residual_scale: float = 1e-10
    step_tol: float = 1e-13


def _mispricing_equation(S, t, price, contract, params):
    """``g(rho) = e^rho P - BS(e^rho S)`` and its derivative."""
    def g(rho):
        e = math.exp(rho)
        return e * price - float(bs_closed_form(e * S, t, contract, params))

    def dg(rho):
        e = math.exp(rho)
        return e * price - e * S * float(bs_delta(e * S, t, contract, params))

    return g, dg


def inversion_sensitivity(S: float, t: float, rho: float, m: float, contract: OptionContract,
                          params: MarketParams) -> float:
    """``|dg/drho|`` at ``rho`` in units of the strike.

    At a root this equals ``exp(-r tau) N(d2)`` evaluated at the rescaled
    spot, so small values mean a deep out-of-the-money day where the price
    barely constrains ``rho``.
    """
    price = float(bs_closed_form(S, t, contract, params)) + m
    _, dg = _mispricing_equation(S, t, price, contract, params)
    return abs(dg(rho)) / max(contract.strike, 1e-300)


def solve_rho_pointwise(S: float, t: float, m: float, contract: OptionContract,
                        params: MarketParams, cfg: NewtonConfig = NewtonConfig()) -> float:
    """Accumulated potential ``rho*`` reproducing the mispricing ``m`` at ``(S, t)``.

    Solves ``pi_BS(S,t) e^rho + m e^rho - pi_BS(e^rho S, t) = 0`` by Newton's
    method from ``rho = 0`` with the analytic delta-based derivative. If
    Newton leaves the bracket or stalls, a bracketed Newton/bisection hybrid
    takes over. The root is unique when it exists since
    ``pi_BS(x S)/x`` is strictly increasing in ``x``.
    """
    base = float(bs_closed_form(S, t, contract, params))
    price = base + m
    if not price > 0:
        raise NoRootError(f"implied empirical price {price:.6g} <= 0 has no root")
    tol = cfg.residual_scale * (base + 1.0)
    g, dg = _mispricing_equation(S, t, price, contract, params)
    lo, hi = cfg.bracket

    rho = 0.0
    gr = g(rho)
    if gr == 0.0:
        return rho
    for _ in range(cfg.max_iter):
        d = dg(rho)
        if d == 0.0 or not math.isfinite(d):
            break
        step = gr / d
        nxt = rho - step
        if not (lo <= nxt <= hi) or not math.isfinite(nxt):
            break
        rho = nxt
        gr = g(rho)
        if abs(gr) <= tol and abs(step) <= cfg.step_tol * (1.0 + abs(rho)):
            return rho
        if gr == 0.0:
            return rho
    else:
        if abs(gr) <= tol:
            return rho
        raise ConvergenceError(f"Newton iteration cap ({cfg.max_iter}) reached, |g|={abs(gr):.3e}")
    return _bracketed_solve(g, dg, lo, hi, tol, cfg)


def _bracketed_solve(g, dg, lo, hi, tol, cfg):
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0:
        raise NoRootError(f"no sign change of the mispricing equation on [{lo}, {hi}]")
    if glo > 0:
        lo, hi = hi, lo  # keep g(lo) < 0 < g(hi)
    rho = 0.5 * (lo + hi)
    step_old = abs(hi - lo)
    step = step_old
    gr, d = g(rho), dg(rho)
    for _ in range(cfg.max_iter):
        newton_out = ((rho - hi) * d - gr) * ((rho - lo) * d - gr) > 0
        if newton_out or abs(2.0 * gr) > abs(step_old * d):
            step_old = step
            step = 0.5 * (hi - lo)
            rho = lo + step
        else:
            step_old = step
            step = gr / d
            rho -= step
        gr, d = g(rho), dg(rho)
        if abs(gr) <= tol and abs(step) <= cfg.step_tol * (1.0 + abs(rho)):
            return rho
        if gr < 0:
            lo = rho
        else:
            hi = rho
    if abs(gr) <= tol:
        return rho
    raise ConvergenceError(f"bracketed solve hit the iteration cap ({cfg.max_iter})")


# -- rho(t) = a + b t^c fit ---------------------------------------------------------

@dataclass(frozen=True)
class LMConfig:
    xtol: float = 1e-9
    gtol: float = 1e-10
    max_iter: int = 500
    lambda0: float = 1e-3
    lambda_max: float = 1e16


@dataclass(frozen=True)
class RhoFit:
    a: float
    b: float
    c: float
    residual_rms: float
    iterations: int
    converged: bool
    c_identifiable: bool = True
    gradient_norm: float = 0.0

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        return (self.a + self.b * t ** self.c)[()]

    def potential(self, t):
        return self.as_bubble().potential(t)

    def as_bubble(self) -> PowerLawRho:
        return PowerLawRho(a=self.a, b=self.b, c=self.c)


def _power_residual(p, t, y):
    a, b, c = p
    tc = t ** c
    r = a + b * tc - y
    J = np.column_stack((np.ones_like(t), tc, b * tc * np.log(t)))
    return r, J


def _lm(t, y, p0, cfg: LMConfig):
    p = np.asarray(p0, dtype=float)
    r, J = _power_residual(p, t, y)
    cost = float(r @ r)
    lam = cfg.lambda0
    converged = False
    it = 0
    gnorm = float(np.linalg.norm(J.T @ r))
    while it < cfg.max_iter:
        it += 1
        A = J.T @ J
        grad = J.T @ r
        gnorm = float(np.linalg.norm(grad))
        if gnorm < cfg.gtol:
            converged = True
            break
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        accepted = False
        while lam <= cfg.lambda_max:
            try:
                delta = np.linalg.solve(A + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + delta
            if trial[2] == 0.0:
                lam *= 10.0
                continue
            r_t, J_t = _power_residual(trial, t, y)
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and cost_t <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        p, r, J, cost = trial, r_t, J_t, cost_t
        lam = max(lam / 10.0, 1e-15)
        if np.linalg.norm(delta) <= cfg.xtol * (np.linalg.norm(p) + cfg.xtol):
            converged = True
            gnorm = float(np.linalg.norm(J.T @ r))
            break
    return p, cost, it, converged, gnorm, J


def fit_rho_model(times, rhos, init: tuple | None = None, cfg: LMConfig = LMConfig(),
                  c_starts=DEFAULT_C_STARTS) -> RhoFit:
    """Least-squares fit of ``a + b t^c`` to pointwise ``rho*`` samples.

    Without ``init`` the start is ``a = mean(rho)``, ``b = rho(t_1) - a`` and
    each ``c`` in ``c_starts``; the lowest-residual run wins (converged runs
    preferred). ``c_identifiable`` is false when the Jacobian at the solution
    is numerically rank deficient (e.g. flat data, ``b = 0``).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(rhos, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise ModelDomainError("need at least 4 (t, rho) points")
    if np.any(t < 1.0):
        raise ModelDomainError("fit requires t >= 1 day")
    if init is not None:
        starts = [tuple(init)]
    else:
        a0 = float(np.mean(y))
        b0 = float(y[np.argmin(t)]) - a0
        starts = [(a0, b0, c0) for c0 in c_starts]

    best = None
    for p0 in starts:
        p, cost, it, conv, gnorm, J = _lm(t, y, p0, cfg)
        key = (not conv, cost)
        if best is None or key < best[0]:
            best = (key, p, cost, it, conv, gnorm, J)
    _, p, cost, it, conv, gnorm, J = best
    sv = np.linalg.svd(J, compute_uv=False)
    identifiable = bool(sv[-1] > 1e-8 * sv[0] and abs(p[1]) > 1e-12 * (1.0 + abs(p[0])))
    if not conv:
        log.warning("rho fit did not converge after %d iterations (|grad|=%.3e)", it, gnorm)
    return RhoFit(a=float(p[0]), b=float(p[1]), c=float(p[2]), residual_rms=math.sqrt(cost / t.size),
                  iterations=int(it), converged=bool(conv), c_identifiable=identifiable,
                  gradient_norm=gnorm)


def potential_from_fit(fit: RhoFit, times) -> PotentialSeries:
    """``U(t) = -d rho/dt = -c b t^(c-1)`` sampled at ``times`` (all >= 1)."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    return PotentialSeries(times=t, values=np.atleast_1d(fit.potential(t)))


@dataclass(frozen=True)
class BubbleSeries:
    times: np.ndarray
    values: np.ndarray
    omitted: tuple = ()


def extract_bubble(potential: PotentialSeries, params: MarketParams) -> BubbleSeries:
    """Pointwise ``f* = sigma U / (r - mu + U)``; pole samples are omitted and listed."""
    keep_t, keep_f, omitted = [], [], []
    for t, u in zip(potential.times, potential.values):
        try:
            f = float(bubble_from_potential(u, params))
        except SingularityError:
            omitted.append(float(t))
            continue
        keep_t.append(float(t))
        keep_f.append(f)
    if not keep_t:
        raise SingularityError("every potential sample sits on the pole U = mu - r")
    return BubbleSeries(times=np.array(keep_t), values=np.array(keep_f), omitted=tuple(omitted))


def chi_squared(model_prices, empirical_prices) -> float:
    """Sum of squared price differences."""
    m = np.asarray(model_prices, dtype=float)
    e = np.asarray(empirical_prices, dtype=float)
    if m.shape != e.shape:
        raise ModelDomainError(f"length mismatch: {m.shape} vs {e.shape}")
    d = m - e
    return float(d @ d)


# -- simulation and orchestration ----------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    days: np.ndarray
    empirical: np.ndarray
    bs: np.ndarray
    interacting: np.ndarray
    chi2_bs: float
    chi2_interacting: float


def compare_models(series: MarketSeries, contract: OptionContract, params: MarketParams,
                   potential: BubbleSpec | None, grid: GridSpec | None = None) -> Comparison:
    """Equilibrium and interacting prices along the observed path, with both chi^2."""
    t0 = float(series.days[0])
    if grid is None:
        grid = default_grid(contract, t_start=t0)
    bs = np.asarray(bs_closed_form(series.underlying, series.days, contract, params), dtype=float)
    surface = solve_interacting(contract, params, potential, grid, t_start=t0)
    inter = evaluate_on_path(surface, series.days, series.underlying)
    return Comparison(days=series.days.copy(), empirical=series.option.copy(), bs=bs, interacting=inter,
                      chi2_bs=chi_squared(bs, series.option),
                      chi2_interacting=chi_squared(inter, series.option))


@dataclass(frozen=True)
class CalibrationConfig:
    newton: NewtonConfig = NewtonConfig()
    lm: LMConfig = LMConfig()
    c_starts: tuple = DEFAULT_C_STARTS
    grid: GridSpec | None = None
    max_fail_fraction: float = 0.5
    min_sensitivity: float = 1e-3


@dataclass
class CalibrationResult:
    days: np.ndarray
    mispricing: np.ndarray
    rho_points: np.ndarray  # NaN where the inversion failed
    # per day: ok | ill_conditioned (solved, not fitted) | no_root | no_convergence
    status: list
    fit: RhoFit
    potential: PotentialSeries
    bubble: BubbleSeries
    comparison: Comparison
    chi2_bs: float
    chi2_interacting: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        ok = ~np.isnan(self.rho_points)
        used = np.array([s == "ok" for s in self.status])
        return {
            "fit": asdict(self.fit),
            "chi2_bs": self.chi2_bs,
            "chi2_interacting": self.chi2_interacting,
            "n_days": int(self.days.size),
            "n_rho_solved": int(ok.sum()),
            "n_rho_fitted": int(used.sum()),
            "rho_points": [[float(t), float(v)] for t, v in zip(self.days[ok], self.rho_points[ok])],
            "failed_days": [[float(t), s] for t, s in zip(self.days, self.status) if s != "ok"],
            "potential": [[float(t), float(u)] for t, u in zip(self.potential.times, self.potential.values)],
            "bubble": [[float(t), float(f)] for t, f in zip(self.bubble.times, self.bubble.values)],
            "bubble_pole_days": list(self.bubble.omitted),
            "notes": list(self.notes),
        }


def calibrate(series: MarketSeries, contract: OptionContract, params: MarketParams,
              cfg: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    """Run the full mispricing -> rho* -> fit -> U -> f* pipeline and reprice."""
    if len(series) < 5:
        raise ModelDomainError("calibration needs at least 5 days")
    mis = compute_mispricing(series, contract, params)
    rho = np.full(len(series), np.nan)
    status = []
    for k, (t, s, m) in enumerate(zip(series.days, series.underlying, mis.values)):
        try:
            rho[k] = solve_rho_pointwise(s, t, m, contract, params, cfg.newton)
            if t < contract.maturity_T and \
                    inversion_sensitivity(s, t, rho[k], m, contract, params) < cfg.min_sensitivity:
                status.append("ill_conditioned")
            else:
                status.append("ok")
        except NoRootError:
            status.append("no_root")
        except ConvergenceError:
            status.append("no_convergence")
    n_fail = sum(s in ("no_root", "no_convergence") for s in status)
    if n_fail > cfg.max_fail_fraction * len(series):
        raise CalibrationInfeasibleError(f"{n_fail} of {len(series)} days failed the rho inversion")
    ok = np.array([s == "ok" for s in status])
    if ok.sum() < 4:
        raise CalibrationInfeasibleError(f"only {int(ok.sum())} well-conditioned days left for the fit")
    fit = fit_rho_model(series.days[ok], rho[ok], cfg=cfg.lm, c_starts=cfg.c_starts)
    notes = []
    if not fit.converged:
        notes.append("rho fit did not converge")
    if not fit.c_identifiable:
        notes.append("exponent c is not identifiable from the data (flat rho)")
    potential = potential_from_fit(fit, series.days)
    try:
        bubble = extract_bubble(potential, params)
    except SingularityError:
        bubble = BubbleSeries(times=np.array([]), values=np.array([]), omitted=tuple(series.days))
        notes.append("bubble undefined: all potential samples at the pole")
    comparison = compare_models(series, contract, params, fit.as_bubble(), cfg.grid)
    return CalibrationResult(days=series.days.copy(), mispricing=mis.values, rho_points=rho, status=status,
                             fit=fit, potential=potential, bubble=bubble, comparison=comparison,
                             chi2_bs=comparison.chi2_bs, chi2_interacting=comparison.chi2_interacting,
                             notes=notes)
