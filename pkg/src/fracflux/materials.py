"""Plasticity coefficient models k(T^2) and admissibility checking.

Three model kinds: a constant coefficient, the Ramberg-Osgood engineering
material law (elastic plateau 1/G followed by a power-law decay beyond the
yield threshold T0^2), and a tabulated law with monotone piecewise-linear
interpolation.  The admissible class requires positive two-sided bounds, a
nonincreasing coefficient and an elastic plateau at the left end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Field, gradient_squared


class PlasticityModel:
    """Interface: vectorized ``k(t_sq)`` and its derivative ``k_prime(t_sq)``."""

    def k(self, t_sq):
        raise NotImplementedError

    def k_prime(self, t_sq):
        raise NotImplementedError

    def _check(self, t_sq) -> np.ndarray:
        arr = np.asarray(t_sq, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("squared stress intensity must be nonnegative")
        return arr


@dataclass(frozen=True)
class Constant(PlasticityModel):
    value: float = 1.0

    def __post_init__(self):
        if self.value <= 0.0:
            raise ValueError("coefficient must be positive")

    def k(self, t_sq):
        return np.full_like(self._check(t_sq), self.value)

    def k_prime(self, t_sq):
        return np.zeros_like(self._check(t_sq))


@dataclass(frozen=True)
class RambergOsgood(PlasticityModel):
    """k = 1/G for T^2 <= T0^2, then (1/G)(T^2/T0^2)^(0.5(kappa-1)).

    G = E/(2(1+nu)).  ``scale`` rescales the output (e.g. scale=G expresses k
    in units of the shear compliance so the PDE stays O(1)); the scale used
    for a run is recorded in its configuration.
    """

    e_young: float
    nu: float = 0.3
    t0_sq: float = 0.02
    hardening: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if self.e_young <= 0.0 or self.t0_sq <= 0.0 or self.scale <= 0.0:
            raise ValueError("E, T0^2 and scale must be positive")
        if not 0.0 < self.hardening < 1.0:
            raise ValueError("strain hardening exponent must be in (0, 1)")

    @property
    def shear_modulus(self) -> float:
        return self.e_young / (2.0 * (1.0 + self.nu))

    def k(self, t_sq):
        s = self._check(t_sq)
        base = self.scale / self.shear_modulus
        expo = 0.5 * (self.hardening - 1.0)
        ratio = np.maximum(s / self.t0_sq, 1.0)
        return base * ratio**expo

    def k_prime(self, t_sq):
        s = self._check(t_sq)
        base = self.scale / self.shear_modulus
        expo = 0.5 * (self.hardening - 1.0)
        out = np.zeros_like(s)
        plastic = s > self.t0_sq
        out[plastic] = base * expo / self.t0_sq * (s[plastic] / self.t0_sq) ** (expo - 1.0)
        return out


@dataclass(frozen=True)
class Tabulated(PlasticityModel):
    """Piecewise-linear coefficient through (T^2, k) samples; clamps outside."""

    t_sq_samples: np.ndarray
    k_samples: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_sq_samples, dtype=float)
        k = np.asarray(self.k_samples, dtype=float)
        if t.ndim != 1 or t.shape != k.shape or len(t) < 2:
            raise ValueError("need matching 1-D sample arrays with >= 2 points")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("T^2 samples must be strictly increasing")
        if np.any(k <= 0.0):
            raise ValueError("coefficient samples must be positive")
        object.__setattr__(self, "t_sq_samples", t)
        object.__setattr__(self, "k_samples", k)

    @classmethod
    def from_function(cls, fn, t_sq_max: float, n: int = 4001) -> "Tabulated":
        t = np.linspace(0.0, t_sq_max, n)
        return cls(t_sq_samples=t, k_samples=np.asarray(fn(t), dtype=float))

    def k(self, t_sq):
        return np.interp(self._check(t_sq), self.t_sq_samples, self.k_samples)

    def k_prime(self, t_sq):
        s = self._check(t_sq)
        slopes = np.diff(self.k_samples) / np.diff(self.t_sq_samples)
        seg = np.clip(np.searchsorted(self.t_sq_samples, s, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[seg]
        out = np.where((s <= self.t_sq_samples[0]) | (s >= self.t_sq_samples[-1]), 0.0, out)
        return out


def k_eval(model: PlasticityModel, t_sq):
    """Evaluate the coefficient at squared stress intensity values."""
    return model.k(t_sq)


def k_field(model: PlasticityModel, u: Field, time_level: int) -> np.ndarray:
    """Frozen coefficient field k(|grad u|^2) at one time level."""
    g = u.grid
    s = gradient_squared(u.values[:, :, time_level], g.hx, g.hy)
    return model.k(s)


def kappa_from_iterate(model: PlasticityModel, grid, values: np.ndarray) -> np.ndarray:
    """Coefficient arrays k(|grad u|^2) for every time level at once."""
    return model.k(gradient_squared(values, grid.hx, grid.hy))


@dataclass(frozen=True)
class ClassKReport:
    c0: float
    c1: float
    monotone_ok: bool
    plateau_ok: bool

    @property
    def ok(self) -> bool:
        return self.c0 > 0.0 and self.monotone_ok and self.plateau_ok


def validate_class_K(
    model: PlasticityModel,
    t_sq_range: tuple[float, float],
    samples: int = 401,
    slope_tol: float = 1e-10,
) -> ClassKReport:
    """Sample the coefficient and report the admissible-class diagnostics.

    Reports the empirical bounds, whether finite-difference k' stays below
    ``slope_tol``, and whether an elastic plateau exists at the left end of
    the range (at least two leading samples equal).
    """
    lo, hi = t_sq_range
    if not 0.0 <= lo < hi or samples < 3:
        raise ValueError("need 0 <= lo < hi and >= 3 samples")
    s = np.linspace(lo, hi, samples)
    k = np.asarray(model.k(s), dtype=float)
    dk = np.diff(k) / np.diff(s)
    plateau = bool(abs(k[1] - k[0]) <= 1e-9 * max(abs(k[0]), 1e-300))
    return ClassKReport(
        c0=float(k.min()),
        c1=float(k.max()),
        monotone_ok=bool(np.all(dk <= slope_tol * max(abs(k[0]), 1.0))),
        plateau_ok=plateau,
    )
