"""Arbitrage bubbles f(t), the potential U(t) they induce, and the
accumulated potential rho(t, T) = int_t^T U.

Four bubble shapes are supported: zero, a step of amplitude ``f0`` on
``[T1, T2]``, a power-law accumulated potential ``rho(t, T) = a + b t^c``
and tabulated samples. All are serializable to a small JSON document with a
``variant`` tag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, ModelDomainError, SingularityError
from .pricing import MarketParams

POLE_RTOL = 1e-9


def potential_from_bubble(f, params: MarketParams):
    """``U = (r - mu) f / (sigma - f)``; vectorized."""
    f = np.asarray(f, dtype=float)
    gap = params.sigma - f
    if np.any(np.abs(gap) < POLE_RTOL * params.sigma):
        raise SingularityError("bubble amplitude at the volatility pole f = sigma")
    out = (params.r - params.mu) * f / gap
    return out[()] if out.ndim == 0 else out


def bubble_from_potential(U, params: MarketParams):
    """Inverse map ``f = sigma U / (r - mu + U)``; vectorized."""
    U = np.asarray(U, dtype=float)
    denom = params.r - params.mu + U
    scale = np.maximum(np.abs(params.r - params.mu), np.abs(U))
    if np.any(np.abs(denom) <= 1e-12 * scale):
        raise SingularityError("potential at the pole U = mu - r (infinite bubble)")
    out = params.sigma * U / denom
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class PotentialSeries:
    """Sampled potential ``U(t_k)`` in per-day units."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ModelDomainError("times and values must be equal-length 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise ModelDomainError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ModelDomainError("potential values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size


class BubbleSpec:
    """Common interface of the bubble variants."""

    variant = ""

    def potential(self, t, params: MarketParams):
        raise NotImplementedError

    def amplitude(self, t, params: MarketParams):
        raise NotImplementedError

    def accumulated(self, t: float, T: float, params: MarketParams) -> float:
        raise NotImplementedError

    def validate(self, T: float, params: MarketParams | None = None) -> None:
        """Check the spec against a maturity (and params, where the pole matters)."""

    def domain_start(self) -> float:
        """Earliest day at which the potential is defined."""
        return 0.0

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(doc: dict) -> "BubbleSpec":
        return bubble_from_dict(doc)


@dataclass(frozen=True)
class ZeroBubble(BubbleSpec):
    variant = "zero"

    def potential(self, t, params):
        return np.zeros_like(np.asarray(t, dtype=float))[()]

    def amplitude(self, t, params):
        return np.zeros_like(np.asarray(t, dtype=float))[()]

    def accumulated(self, t, T, params):
        return 0.0

    def to_dict(self):
        return {"variant": self.variant}


@dataclass(frozen=True)
class StepBubble(BubbleSpec):
    """``f(t) = f0`` on ``[T1, T2]`` and zero elsewhere."""

    T1: float
    T2: float
    f0: float
    variant = "step"

    def __post_init__(self):
        if not (0 <= self.T1 <= self.T2):
            raise ModelDomainError("step bubble needs 0 <= T1 <= T2")

    def validate(self, T, params=None):
        if self.T2 > T:
            raise ModelDomainError(f"step bubble ends at T2={self.T2} after maturity T={T}")
        if params is not None:
            potential_from_bubble(self.f0, params)

    def _inside(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.T1) & (t <= self.T2)

    def amplitude(self, t, params):
        return np.where(self._inside(t), self.f0, 0.0)[()]

    def potential(self, t, params):
        u0 = potential_from_bubble(self.f0, params)
        return np.where(self._inside(t), u0, 0.0)[()]

    def accumulated(self, t, T, params):
        overlap = max(0.0, min(T, self.T2) - max(t, self.T1))
        if overlap == 0.0:
            return 0.0
        return float(potential_from_bubble(self.f0, params)) * overlap

    def to_dict(self):
        return {"variant": self.variant, "T1": self.T1, "T2": self.T2, "f0": self.f0}


@dataclass(frozen=True)
class PowerLawRho(BubbleSpec):
    """Bubble whose accumulated potential is fitted as ``a + b t^c``.

    The potential is ``U(t) = -c b t^(c-1)``; ``a`` never enters U and rho is
    evaluated as ``-b (T^c - t^c)`` so that ``rho(T, T) = 0``. Defined for
    ``t >= 1`` day.
    """

    a: float
    b: float
    c: float
    variant = "power_law_rho"

    def __post_init__(self):
        if self.c == 0 or not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ModelDomainError("power-law rho needs finite a, b and c != 0")

    def domain_start(self):
        return 1.0

    @staticmethod
    def _check_domain(t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 1.0):
            raise ModelDomainError("power-law potential is defined for t >= 1 day")
        return t

    def rho_model(self, t):
        """The raw fitted curve ``a + b t^c`` (does not vanish at maturity in general)."""
        t = self._check_domain(t)
        return (self.a + self.b * t ** self.c)[()]

    def potential(self, t, params=None):
        t = self._check_domain(t)
        return (-self.c * self.b * t ** (self.c - 1.0))[()]

    def amplitude(self, t, params):
        return bubble_from_potential(self.potential(t), params)

    def accumulated(self, t, T, params=None):
        self._check_domain([t, T])
        return float(-self.b * (T ** self.c - t ** self.c))

    def validate(self, T, params=None):
        self._check_domain(T)

    def to_dict(self):
        return {"variant": self.variant, "a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class TabulatedBubble(BubbleSpec):
    """Bubble amplitudes sampled on a strictly increasing day grid.

    Between samples the *potential* is interpolated linearly, so rho is the
    trapezoidal integral of the sampled potentials.
    """

    times: tuple = field(default=())
    amplitudes: tuple = field(default=())
    variant = "tabulated"

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        f = tuple(float(x) for x in self.amplitudes)
        if len(t) != len(f) or len(t) < 2:
            raise ModelDomainError("tabulated bubble needs >= 2 (day, amplitude) samples")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ModelDomainError("tabulated sample days must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitudes", f)

    def domain_start(self):
        return self.times[0]

    def _cover(self, lo, hi):
        if lo < self.times[0] or hi > self.times[-1]:
            raise CoverageError(
                f"tabulated bubble covers [{self.times[0]}, {self.times[-1]}], requested [{lo}, {hi}]")

    def validate(self, T, params=None):
        self._cover(self.times[0], T)
        if params is not None:
            potential_from_bubble(np.array(self.amplitudes), params)

    def sample_potentials(self, params):
        return np.asarray(potential_from_bubble(np.array(self.amplitudes), params), dtype=float)

    def potential(self, t, params):
        t = np.asarray(t, dtype=float)
        if t.size:
            self._cover(float(t.min()), float(t.max()))
        return np.interp(t, self.times, self.sample_potentials(params))[()]

    def amplitude(self, t, params):
        t = np.asarray(t, dtype=float)
        if t.size:
            self._cover(float(t.min()), float(t.max()))
        return np.interp(t, self.times, self.amplitudes)[()]

    def accumulated(self, t, T, params):
        self._cover(t, T)
        grid = np.asarray(self.times)
        u = self.sample_potentials(params)
        inner = (grid > t) & (grid < T)
        x = np.concatenate(([t], grid[inner], [T]))
        y = np.concatenate(([np.interp(t, grid, u)], u[inner], [np.interp(T, grid, u)]))
        return float(np.trapezoid(y, x))

    def to_dict(self):
        return {"variant": self.variant,
                "samples": [[t, f] for t, f in zip(self.times, self.amplitudes)]}


_VARIANTS = {
    "zero": lambda d: ZeroBubble(),
    "step": lambda d: StepBubble(T1=float(d["T1"]), T2=float(d["T2"]), f0=float(d["f0"])),
    "power_law_rho": lambda d: PowerLawRho(a=float(d["a"]), b=float(d["b"]), c=float(d["c"])),
    "tabulated": lambda d: TabulatedBubble(times=tuple(s[0] for s in d["samples"]),
                                           amplitudes=tuple(s[1] for s in d["samples"])),
}


def bubble_from_dict(doc: dict) -> BubbleSpec:
    """Build a :class:`BubbleSpec` from its JSON form; raises ``ModelDomainError`` on bad input."""
    if not isinstance(doc, dict) or "variant" not in doc:
        raise ModelDomainError("bubble document must be an object with a 'variant' key")
    try:
        build = _VARIANTS[doc["variant"]]
    except KeyError:
        raise ModelDomainError(f"unknown bubble variant {doc['variant']!r}; known: {sorted(_VARIANTS)}") from None
    try:
        return build(doc)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, ModelDomainError):
            raise
        raise ModelDomainError(f"bad parameters for bubble variant {doc['variant']!r}: {exc}") from exc


def accumulated_potential(spec: BubbleSpec, t: float, T: float, params: MarketParams) -> float:
    """``rho(t, T) = int_t^T U(lambda) d lambda`` for the given bubble."""
    if t > T:
        raise ModelDomainError(f"need t <= T, got t={t}, T={T}")
    return spec.accumulated(float(t), float(T), params)
