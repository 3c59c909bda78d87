"""Crank-Nicolson solver for the interacting Black-Scholes equation

    pi_t + sigma^2/2 S^2 pi_SS + (r + U(t)) (S pi_S - pi) = 0,  pi(T, S) = payoff(S)

on a fixed price grid, plus bilinear evaluation along a price path.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .bubble import BubbleSpec
from .errors import ExtrapolationError, InstabilityError, ModelDomainError
from .pricing import MarketParams, OptionContract

Potential = Union[None, float, Callable, BubbleSpec]

NEGATIVE_FLOOR = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Price/time discretization.

    ``n_space`` counts interior price nodes (two boundary nodes are added).
    With ``spacing="sinh"`` nodes cluster around the strike with a
    concentration length of ``concentration`` price units (default: one
    terminal-kernel standard deviation, ``K sigma sqrt(T - t0)``), and the
    strike is placed exactly on a node. ``spacing="uniform"`` gives evenly
    spaced nodes.
    """

    s_min: float
    s_max: float
    n_space: int = 400
    n_time: int = 400
    spacing: str = "sinh"
    concentration: float | None = None
    rannacher_steps: int = 1

    def __post_init__(self):
        if not (0 < self.s_min < self.s_max):
            raise ModelDomainError("grid needs 0 < s_min < s_max")
        if self.n_space < 16 or self.n_time < 16:
            raise ModelDomainError("grid needs n_space >= 16 and n_time >= 16")
        if self.spacing not in ("sinh", "uniform"):
            raise ModelDomainError(f"unknown spacing {self.spacing!r}")
        if self.concentration is not None and not self.concentration > 0:
            raise ModelDomainError("concentration must be > 0")
        if self.rannacher_steps < 0:
            raise ModelDomainError("rannacher_steps must be >= 0")

    @classmethod
    def for_contract(cls, contract: OptionContract, n_space=400, n_time=400, **kw) -> "GridSpec":
        """Default bounds ``[K/100, 4K]`` (or ``[0.01, 4]`` for a zero strike)."""
        K = contract.strike if contract.strike > 0 else 1.0
        return cls(s_min=K / 100.0, s_max=4.0 * K, n_space=n_space, n_time=n_time, **kw)

    def check_contract(self, contract: OptionContract) -> None:
        if self.s_max < 4.0 * contract.strike:
            raise ModelDomainError(f"s_max={self.s_max} must be >= 4 * strike ({4 * contract.strike})")

    def space_nodes(self, strike: float, width: float) -> np.ndarray:
        n = self.n_space + 2
        if self.spacing == "uniform" or not (self.s_min < strike < self.s_max):
            return np.linspace(self.s_min, self.s_max, n)
        alpha0 = self.concentration if self.concentration is not None else width
        return _sinh_nodes(self.s_min, self.s_max, strike, n, alpha0)


def default_grid(contract: OptionContract, t_start: float = 0.0, n_space: int = 2000,
                 steps_per_day: int = 16) -> GridSpec:
    """Grid used by synthesis and repricing; whole days fall on time nodes."""
    span = contract.maturity_T - t_start
    n_time = max(16, int(math.ceil(span * steps_per_day)))
    return GridSpec.for_contract(contract, n_space=n_space, n_time=n_time)


def _sinh_nodes(s_min, s_max, center, n, alpha0):
    def position(alpha):
        c1 = math.asinh((s_min - center) / alpha)
        c2 = math.asinh((s_max - center) / alpha)
        return -c1 / (c2 - c1) * (n - 1)

    p0 = position(alpha0)
    alpha = alpha0
    for target in sorted({math.floor(p0), math.ceil(p0)}, key=lambda k: abs(k - p0)):
        if not 1 <= target <= n - 2:
            continue
        lo, hi = alpha0 / 8.0, alpha0 * 8.0
        if (position(lo) - target) * (position(hi) - target) < 0:
            alpha = brentq(lambda a: position(a) - target, lo, hi, xtol=1e-14 * alpha0)
            break
    c1 = math.asinh((s_min - center) / alpha)
    c2 = math.asinh((s_max - center) / alpha)
    xi = np.linspace(c1, c2, n)
    nodes = center + alpha * np.sinh(xi)
    nodes[0], nodes[-1] = s_min, s_max
    k = int(np.argmin(np.abs(nodes - center)))
    if abs(nodes[k] - center) < 1e-6 * alpha:
        nodes[k] = center
    return nodes


def _operator_bands(s, sigma):
    """Interior-node bands of the diffusion operator and of ``S d/dS - 1``."""
    si = s[1:-1]
    hm = si - s[:-2]
    hp = s[2:] - si
    d1_lo = -hp / (hm * (hm + hp))
    d1_di = (hp - hm) / (hm * hp)
    d1_up = hm / (hp * (hm + hp))
    d2_lo = 2.0 / (hm * (hm + hp))
    d2_di = -2.0 / (hm * hp)
    d2_up = 2.0 / (hp * (hm + hp))
    half_var = 0.5 * sigma * sigma * si * si
    diff = (half_var * d2_lo, half_var * d2_di, half_var * d2_up)
    adv = (si * d1_lo, si * d1_di - 1.0, si * d1_up)
    return diff, adv


def potential_evaluator(potential: Potential, params: MarketParams) -> Callable:
    """Normalize the accepted potential forms to a vectorized ``U(t)``."""
    if potential is None:
        return lambda t: np.zeros_like(np.asarray(t, dtype=float))
    if isinstance(potential, BubbleSpec):
        return lambda t: np.asarray(potential.potential(np.asarray(t, dtype=float), params), dtype=float)
    if callable(potential):
        return lambda t: np.broadcast_to(np.asarray(potential(np.asarray(t, dtype=float)), dtype=float),
                                         np.shape(t))
    u0 = float(potential)
    return lambda t: np.full(np.shape(t), u0)


@dataclass(frozen=True)
class PriceSurface:
    """Solution values ``values[j, i] = pi(t_nodes[j], s_nodes[i])``."""

    grid: GridSpec
    contract: OptionContract
    params: MarketParams
    t_nodes: np.ndarray
    s_nodes: np.ndarray
    values: np.ndarray

    def at_time(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.t_nodes - t)))
        if not math.isclose(self.t_nodes[j], t, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(t))):
            raise ModelDomainError(f"t={t} is not a time node")
        return self.values[j]

    def to_csv(self, path) -> None:
        """Matrix export: header ``t, S_0, ..., S_n``; one row per time node."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [repr(float(s)) for s in self.s_nodes])
            for t, row in zip(self.t_nodes, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def step_schedule(t_nodes: np.ndarray, rannacher_steps: int):
    """Backward substeps ``(t_new, dt, theta, record)`` from T down to t_nodes[0].

    The first ``rannacher_steps`` steps after maturity are each split into two
    implicit Euler half steps; the rest are Crank-Nicolson.
    """
    t_new, dts, thetas, record = [], [], [], []
    n = t_nodes.size - 1
    for k, j in enumerate(range(n - 1, -1, -1)):
        hi, lo = t_nodes[j + 1], t_nodes[j]
        if k < rannacher_steps:
            mid = 0.5 * (hi + lo)
            t_new += [mid, lo]
            dts += [hi - mid, mid - lo]
            thetas += [1.0, 1.0]
            record += [False, True]
        else:
            t_new.append(lo)
            dts.append(hi - lo)
            thetas.append(0.5)
            record.append(True)
    return np.array(t_new), np.array(dts), np.array(thetas), np.array(record, dtype=np.bool_)


def solve_interacting(contract: OptionContract, params: MarketParams, potential: Potential,
                      grid: GridSpec, t_start: float = 0.0) -> PriceSurface:
    """Solve the interacting equation backward from ``T`` to ``t_start``.

    ``potential`` may be ``None`` (zero), a constant, a vectorized callable
    ``U(t)`` or a :class:`BubbleSpec`. ``U`` is sampled at each substep
    midpoint. Boundaries: zero at ``s_min``; at ``s_max`` the linear
    asymptote ``s_max - K exp(-int_t^T (r + U))``.
    """
    params.require_pricing()
    grid.check_contract(contract)
    T = contract.maturity_T
    if not 0 <= t_start < T:
        raise ModelDomainError(f"t_start={t_start} must lie in [0, T)")
    U = potential_evaluator(potential, params)

    t_nodes = np.linspace(t_start, T, grid.n_time + 1)
    t_nodes[-1] = T
    width = contract.strike * params.sigma * math.sqrt(T - t_start)
    s = grid.space_nodes(contract.strike, width)

    t_new, dts, thetas, record = step_schedule(t_nodes, grid.rannacher_steps)
    mids = t_new + 0.5 * dts
    u_mid = U(mids)
    if not np.all(np.isfinite(u_mid)):
        raise ModelDomainError("potential is not finite on the solve interval")
    rates = params.r + u_mid
    discount = np.exp(-np.cumsum(rates * dts))
    bc_low = np.zeros(dts.size + 1)
    bc_high = np.empty(dts.size + 1)
    bc_high[:-1] = s[-1] - contract.strike * discount
    terminal = contract.payoff_value(s)
    bc_high[-1] = terminal[-1]

    (d_lo, d_di, d_up), (a_lo, a_di, a_up) = _operator_bands(s, params.sigma)
    values, bad = kernels.theta_backward(d_lo, d_di, d_up, a_lo, a_di, a_up, terminal,
                                         dts, thetas, rates, bc_low, bc_high, record)
    if bad >= 0:
        raise InstabilityError(f"non-finite values at backward substep {bad} (t={t_new[bad]:.6g})", step=int(bad))
    floor = -NEGATIVE_FLOOR * max(contract.strike, 1.0)
    if values.min() < floor:
        raise InstabilityError(f"solution dipped to {values.min():.3e}, below the floor {floor:.1e}")
    return PriceSurface(grid=grid, contract=contract, params=params,
                        t_nodes=t_nodes, s_nodes=s, values=values)


def evaluate_on_path(surface: PriceSurface, times, spots) -> np.ndarray:
    """Bilinear interpolation of the surface at ``(times[k], spots[k])``."""
    tq = np.ascontiguousarray(times, dtype=float)
    sq = np.ascontiguousarray(spots, dtype=float)
    if tq.shape != sq.shape or tq.ndim != 1:
        raise ModelDomainError("times and spots must be equal-length 1-D sequences")
    t_lo, t_hi = surface.t_nodes[0], surface.t_nodes[-1]
    s_lo, s_hi = surface.s_nodes[0], surface.s_nodes[-1]
    eps_t = 1e-9 * max(1.0, abs(t_hi))
    bad_t = ~((tq >= t_lo - eps_t) & (tq <= t_hi + eps_t))
    bad_s = ~((sq >= s_lo) & (sq <= s_hi))
    if bad_t.any() or bad_s.any():
        k = int(np.flatnonzero(bad_t | bad_s)[0])
        if bad_t[k]:
            raise ExtrapolationError(f"sample {k}: t={tq[k]} outside [{t_lo}, {t_hi}]", index=k)
        raise ExtrapolationError(f"sample {k}: S={sq[k]} outside [{s_lo}, {s_hi}]", index=k)
    tq = np.clip(tq, t_lo, t_hi)
    return kernels.bilinear_lookup(surface.t_nodes, surface.s_nodes, surface.values, tq, sq)
