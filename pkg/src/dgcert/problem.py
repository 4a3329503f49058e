"""Model problem: u_t - (a u_x)_x = f on (0,1) x (0,T], u(0,t)=u(1,t)=0.

The diffusion coefficient is piecewise constant, so operator assembly and
manufactured sources are exact.  Analytic constants use the X-norm
convention ||v||_X = ||v'||_{L2(0,1)}: coercivity = min a, continuity =
max a, and both Poincare-Friedrichs constants equal 1/pi on (0,1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spatial import Coefficient


@dataclass(frozen=True)
class EllipticConstants:
    alpha_flat: float      # coercivity (= min a under the X-norm convention)
    alpha_sharp: float     # continuity (= max a)
    c_pf_pivot_x: float    # ||v||_H <= c ||v||_X
    c_pf_dual_pivot: float  # ||v||_X' <= c ||v||_H

    def __post_init__(self):
        if not (self.alpha_sharp >= self.alpha_flat > 0):
            raise ValueError("coercivity violated")
        if self.c_pf_pivot_x <= 0 or self.c_pf_dual_pivot <= 0:
            raise ValueError("Poincare-Friedrichs constants must be positive")


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact solution with the derivatives the checks and errors need."""

    u: Callable
    u_t: Callable
    u_x: Callable
    u_xx: Callable
    requires_unit_coefficient: bool = False


class WeakSource:
    """Source given by its action on test functions, load(space, t) -> vector.

    Used when f has a distributional part (e.g. space-time polynomial
    exactness data f = phi q' + A phi q with phi a hat function).
    """

    def __init__(self, load: Callable):
        self._load = load

    def load(self, space, t: float) -> np.ndarray:
        return np.asarray(self._load(space, t), dtype=float)


@dataclass
class Problem:
    coeff: Coefficient
    initial: Callable
    final_time: float
    source: Callable | WeakSource | None = None  # None: derive from manufactured
    manufactured: ManufacturedSolution | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.final_time <= 0:
            raise ValueError("final time must be positive")
        if self.coeff.vmin <= 0:
            raise ValueError("coercivity violated")
        if self.manufactured is not None and self.manufactured.requires_unit_coefficient:
            if not (self.coeff.is_constant and self.coeff.values[0] == 1.0):
                raise ValueError(f"manufactured solution {self.name!r} needs a == 1")
        if self.source is None:
            if self.manufactured is None:
                raise ValueError("need either a source or a manufactured solution")
            self.source = lambda x, t: manufactured_source(self, x, t)

    def source_callable(self) -> Callable:
        if isinstance(self.source, WeakSource):
            raise ValueError("non-evaluable f: source is only available weakly")
        return self.source


def manufactured_source(problem: Problem, x, t):
    """f = u_t - a u_xx, the smooth-branch formula per coefficient subinterval."""
    ex = problem.manufactured
    if ex is None:
        raise ValueError("no exact solution configured")
    return ex.u_t(x, t) - problem.coeff(x) * ex.u_xx(x, t)


def constants_for(problem: Problem) -> EllipticConstants:
    if problem.coeff.vmin <= 0:
        raise ValueError("coercivity violated")
    return EllipticConstants(
        alpha_flat=problem.coeff.vmin,
        alpha_sharp=problem.coeff.vmax,
        c_pf_pivot_x=1.0 / math.pi,
        c_pf_dual_pivot=1.0 / math.pi,
    )


# ---------------------------------------------------------------------------
# Manufactured catalog


def _sinpi_expdecay() -> ManufacturedSolution:
    pi = math.pi
    return ManufacturedSolution(
        u=lambda x, t: np.sin(pi * x) * np.exp(-t),
        u_t=lambda x, t: -np.sin(pi * x) * np.exp(-t),
        u_x=lambda x, t: pi * np.cos(pi * x) * np.exp(-t),
        u_xx=lambda x, t: -pi**2 * np.sin(pi * x) * np.exp(-t),
        requires_unit_coefficient=False,
    )


def _stationary_sin() -> ManufacturedSolution:
    pi = math.pi
    return ManufacturedSolution(
        u=lambda x, t: np.sin(pi * x) * np.ones_like(np.asarray(t, dtype=float)),
        u_t=lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape),
        u_x=lambda x, t: pi * np.cos(pi * x) * np.ones_like(np.asarray(t, dtype=float)),
        u_xx=lambda x, t: -pi**2 * np.sin(pi * x) * np.ones_like(np.asarray(t, dtype=float)),
        requires_unit_coefficient=False,
    )


ROUGH_IC_MODES = 25


def _rough_ic(n_modes: int = ROUGH_IC_MODES) -> ManufacturedSolution:
    # Fourier truncation of the unit step on (0, 1/2); heat flow with a == 1,
    # f == 0, so u(x,t) = sum c_k sin(k pi x) exp(-k^2 pi^2 t).
    pi = math.pi
    k = np.arange(1, n_modes + 1)
    ck = 2.0 * (1.0 - np.cos(k * pi / 2.0)) / (k * pi)
    kpi = k * pi

    def series(x, t, xfact, tfact, trig):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(x, t).shape
        xk = np.multiply.outer(x, kpi)
        tk = np.multiply.outer(t, kpi**2)
        terms = (ck * xfact) * trig(xk) * tfact(np.broadcast_to(tk, xk.shape) if shape else tk)
        return terms.sum(axis=-1)

    def expn(z):
        return np.exp(-z)

    return ManufacturedSolution(
        u=lambda x, t: series(x, t, 1.0, expn, np.sin),
        u_t=lambda x, t: series(x, t, -kpi**2, expn, np.sin),
        u_x=lambda x, t: series(x, t, kpi, expn, np.cos),
        u_xx=lambda x, t: series(x, t, -kpi**2, expn, np.sin),
        requires_unit_coefficient=True,
    )


def _zero() -> ManufacturedSolution:
    def z(x, t):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)

    return ManufacturedSolution(u=z, u_t=z, u_x=z, u_xx=z)


_CATALOG: dict[str, Callable[[], ManufacturedSolution]] = {
    "zero": _zero,
    "sinpi_expdecay": _sinpi_expdecay,
    "stationary_sin": _stationary_sin,
    "rough_ic": _rough_ic,
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def make_problem(name: str, final_time: float = 1.0,
                 coeff: Coefficient | None = None) -> Problem:
    """Problem from the manufactured-solution catalog."""
    if name not in _CATALOG:
        raise ValueError(f"unknown manufactured solution {name!r}; "
                         f"choose one of {catalog_names()}")
    ex = _CATALOG[name]()
    coeff = coeff if coeff is not None else Coefficient()
    return Problem(
        coeff=coeff,
        initial=lambda x: ex.u(x, 0.0),
        final_time=final_time,
        manufactured=ex,
        name=name,
    )
