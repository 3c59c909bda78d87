"""Equilibrium Black-Scholes prices and the semiclassical rescaled price.

Units: time in trading days, ``r`` and ``mu`` per day, ``sigma`` per
square-root day. All maturities are day counts.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import ModelDomainError

PAYOFF_KINDS = ("call",)


@dataclass(frozen=True)
class MarketParams:
    """Per-day model parameters.

    ``sigma`` may be zero (e.g. estimated from a flat history) but such a
    parameter set is rejected by every pricing routine.
    """

    r: float
    mu: float
    sigma: float

    def __post_init__(self):
        for name in ("r", "mu", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ModelDomainError(f"{name} must be finite")
        if self.sigma < 0:
            raise ModelDomainError("sigma must be non-negative")

    @property
    def valid_for_pricing(self) -> bool:
        return self.sigma > 0

    def require_pricing(self) -> None:
        if not self.valid_for_pricing:
            raise ModelDomainError(f"sigma={self.sigma} is not usable for pricing (need sigma > 0)")

    def with_rate(self, r: float) -> "MarketParams":
        return MarketParams(r=r, mu=self.mu, sigma=self.sigma)


@dataclass(frozen=True)
class OptionContract:
    strike: float
    maturity_T: float
    payoff: str = "call"

    def __post_init__(self):
        if not self.strike >= 0:
            raise ModelDomainError("strike must be >= 0")
        if not self.maturity_T > 0:
            raise ModelDomainError("maturity_T must be > 0")
        if self.payoff not in PAYOFF_KINDS:
            raise ModelDomainError(f"unsupported payoff kind {self.payoff!r}; known: {PAYOFF_KINDS}")

    def payoff_value(self, s):
        return np.maximum(np.asarray(s, dtype=float) - self.strike, 0.0)

    def kinks(self) -> tuple[float, ...]:
        """Prices where the payoff is not smooth."""
        return (self.strike,) if self.strike > 0 else ()


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre rule in log-price.

    ``width`` is the half-width of the integration window in kernel standard
    deviations around the kernel mean.
    """

    n_points: int = 96
    n_panels: int = 6
    width: float = 8.0

    def __post_init__(self):
        if self.n_points < 16:
            raise ModelDomainError("n_points must be >= 16")
        if self.n_panels < 1 or self.n_points < self.n_panels:
            raise ModelDomainError("need 1 <= n_panels <= n_points")
        if not self.width > 0:
            raise ModelDomainError("width must be > 0")

    @property
    def truncated_mass(self) -> float:
        return math.erfc(self.width / math.sqrt(2.0))


class QuadratureTruncationWarning(UserWarning):
    pass


def _check_inputs(S, t, contract: OptionContract, params: MarketParams):
    params.require_pricing()
    S = np.asarray(S, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(~(S > 0)):
        raise ModelDomainError("spot price must be > 0")
    if np.any(t < 0) or np.any(t > contract.maturity_T):
        raise ModelDomainError(f"t must lie in [0, {contract.maturity_T}]")
    return S, t


def _d1_d2(S, K, r, sigma, tau):
    sq = sigma * np.sqrt(tau)
    d1 = (np.log(S / K) + (r + 0.5 * sigma * sigma) * tau) / sq
    return d1, d1 - sq


def bs_closed_form(S, t, contract: OptionContract, params: MarketParams):
    """Black-Scholes value of the contract at spot ``S`` and day ``t``.

    Vectorized over ``S`` and ``t``; returns a float for scalar input. At
    ``t == T`` the payoff is returned exactly.
    """
    S, t = _check_inputs(S, t, contract, params)
    S, t = np.broadcast_arrays(S, t)
    K = contract.strike
    tau = contract.maturity_T - t
    out = np.empty(S.shape)
    live = tau > 0
    out[~live] = contract.payoff_value(S[~live])
    if np.any(live):
        s, tl = S[live], tau[live]
        if K == 0:
            out[live] = s
        else:
            d1, d2 = _d1_d2(s, K, params.r, params.sigma, tl)
            out[live] = s * ndtr(d1) - K * np.exp(-params.r * tl) * ndtr(d2)
    return out[()] if out.ndim == 0 else out


def bs_delta(S, t, contract: OptionContract, params: MarketParams):
    """Closed-form call delta; at maturity the payoff slope (0.5 exactly at the strike)."""
    S, t = _check_inputs(S, t, contract, params)
    S, t = np.broadcast_arrays(S, t)
    K = contract.strike
    tau = contract.maturity_T - t
    out = np.empty(S.shape)
    live = tau > 0
    s_dead = S[~live]
    out[~live] = np.where(s_dead > K, 1.0, np.where(s_dead < K, 0.0, 0.5))
    if np.any(live):
        if K == 0:
            out[live] = 1.0
        else:
            d1, _ = _d1_d2(S[live], K, params.r, params.sigma, tau[live])
            out[live] = ndtr(d1)
    return out[()] if out.ndim == 0 else out


def bs_propagator_price(S: float, t: float, contract: OptionContract, params: MarketParams,
                        quad: QuadratureConfig = QuadratureConfig(),
                        payoff: Callable | None = None) -> float:
    """Integrate the risk-neutral lognormal propagator against a payoff.

    Works in ``x' = ln S'`` so the kernel is a discounted Gaussian with mean
    ``ln S + (r - sigma^2/2)(T - t)`` and variance ``sigma^2 (T - t)``. The
    window is split at the contract kinks so each panel integrand is smooth.
    A custom ``payoff`` (vectorized callable of S') replaces the contract
    payoff; its kinks are then unknown and panels are uniform.
    """
    S_arr, t_arr = _check_inputs(S, t, contract, params)
    S, t = float(S_arr), float(t_arr)
    phi = contract.payoff_value if payoff is None else payoff
    tau = contract.maturity_T - t
    if tau == 0:
        return float(phi(np.array([S]))[0])
    if quad.truncated_mass > 1e-8:
        warnings.warn(
            f"quadrature window of {quad.width} std truncates {quad.truncated_mass:.2e} of the kernel mass",
            QuadratureTruncationWarning, stacklevel=2)
    sd = params.sigma * math.sqrt(tau)
    mean = math.log(S) + (params.r - 0.5 * params.sigma ** 2) * tau
    lo, hi = mean - quad.width * sd, mean + quad.width * sd

    edges = list(np.linspace(lo, hi, quad.n_panels + 1))
    if payoff is None:
        for k in contract.kinks():
            xk = math.log(k)
            if lo < xk < hi:
                edges.append(xk)
    edges = np.unique(edges)
    order = max(quad.n_points // (len(edges) - 1), 2)
    nodes, weights = np.polynomial.legendre.leggauss(order)

    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights[None, :]
    z = (x - mean) / sd
    density = np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
    integrand = density * np.asarray(phi(np.exp(x)), dtype=float)
    return float(math.exp(-params.r * tau) * np.sum(w * integrand))


def semiclassical_price(S, t, rho, contract: OptionContract, params: MarketParams):
    """Rescaled equilibrium price ``exp(-rho) * BS(exp(rho) * S, t)``.

    ``rho`` is the accumulated potential between ``t`` and maturity. For a
    potential depending on time only this coincides with the solution of the
    interacting equation.
    """
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise ModelDomainError("rho must be finite")
    g = np.exp(rho)
    S = np.asarray(S, dtype=float)
    return bs_closed_form(g * S, t, contract, params) / g
