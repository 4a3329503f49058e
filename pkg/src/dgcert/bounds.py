"""Assembly of the certified a posteriori bounds from the indicator breakdown.

All three bounds accumulate the same per-slab ingredients; the L2(I;X)
bound is a single square root of a weighted sum, the L-infinity(I;H) bound
adds its two max terms outside the square root, and the broken H1(I;X')
bound combines the residual accumulation with the L2(I;X) control of the
parabolic error part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import IndicatorBreakdown
from .problem import EllipticConstants


def choose_lambda(t_n: float) -> float:
    """lambda = min(1, 1/t_n): L1-in-time accumulation for long runs only."""
    if t_n <= 0:
        raise ValueError("horizon must be positive")
    return min(1.0, 1.0 / t_n)


@dataclass
class CertifiedBound:
    norm_tag: str              # "L2X" | "LinfH" | "H1Xdual"
    value: float
    terms: dict
    lam: float
    horizon: float

    def __post_init__(self):
        if any(v < 0 for v in self.terms.values()):
            raise ValueError("negative bound addend")


def _slab_slice(breakdown: IndicatorBreakdown, upto: int | None) -> slice:
    n = breakdown.n_slabs if upto is None else upto
    if not 1 <= n <= breakdown.n_slabs:
        raise ValueError("horizon index out of range")
    return slice(0, n)


def assemble_l2x_bound(breakdown: IndicatorBreakdown, constants: EllipticConstants,
                       lam: float | None = None, upto: int | None = None,
                       elliptic_l2t: np.ndarray | None = None,
                       init_sq: float | None = None) -> CertifiedBound:
    """Certified bound on ||u - U||_{L2(0,t_n;X)}."""
    sl = _slab_slice(breakdown, upto)
    t_n = float(breakdown.nodes[sl.stop])
    lam = choose_lambda(t_n) if lam is None else lam
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0,1]")
    ell = breakdown.elliptic_l2t if elliptic_l2t is None else np.asarray(elliptic_l2t)
    init = breakdown.init_sq if init_sq is None else float(init_sq)
    ab, pf = constants.alpha_flat, constants.c_pf_pivot_x

    terms = {
        "initial": 6.0 / ab * init,
        "elliptic": 3.0 * float(ell[sl].sum()),
        "mesh_l1": 12.0 / ab * lam**2 * float(breakdown.mesh_l1t[sl].sum()) ** 2,
        "time": 21.0 / ab**2 * float((breakdown.theta[sl] ** 2).sum()),
        "space": 18.0 / ab**2 * float(breakdown.space_l2t[sl].sum()),
        "osc": 18.0 / ab**2 * float(breakdown.osc_l2t[sl].sum()),
        "mesh_l2": 18.0 / ab**2 * pf**2 * (1.0 - lam) ** 2
                   * float(breakdown.mesh_l2t[sl].sum()),
    }
    return CertifiedBound("L2X", math.sqrt(sum(terms.values())), terms, lam, t_n)


def assemble_linfh_bound(breakdown: IndicatorBreakdown, constants: EllipticConstants,
                         lam: float | None = None, upto: int | None = None,
                         linf_jump_max: float | None = None,
                         linf_elliptic_max: float | None = None,
                         init_sq: float | None = None) -> CertifiedBound:
    """Certified bound on ||u - U||_{L-infinity(0,t_n;H)}.

    The accumulation block is squared; its square root plus the two max
    terms is the bound (the square-root placement follows the proof).
    """
    sl = _slab_slice(breakdown, upto)
    t_n = float(breakdown.nodes[sl.stop])
    lam = choose_lambda(t_n) if lam is None else lam
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0,1]")
    init = breakdown.init_sq if init_sq is None else float(init_sq)
    jump_max = float(breakdown.linf_jump[sl].max()) if linf_jump_max is None \
        else float(linf_jump_max)
    ell_max = float(breakdown.linf_elliptic[sl].max()) if linf_elliptic_max is None \
        else float(linf_elliptic_max)
    ab, pf = constants.alpha_flat, constants.c_pf_pivot_x

    block = {
        "initial": 2.0 * init,
        "mesh_l1": 4.0 * lam**2 * float(breakdown.mesh_l1t[sl].sum()) ** 2,
        "time": 4.0 / ab * float((breakdown.theta[sl] ** 2).sum()),
        "space": 4.0 / ab * float(breakdown.space_l2t[sl].sum()),
        "osc": 4.0 / ab * float(breakdown.osc_l2t[sl].sum()),
        "mesh_l2": 4.0 / ab * pf**2 * (1.0 - lam) ** 2
                   * float(breakdown.mesh_l2t[sl].sum()),
    }
    terms = dict(block)
    terms["linf_jump_max"] = jump_max
    terms["linf_elliptic_max"] = ell_max
    value = math.sqrt(sum(block.values())) + jump_max + ell_max
    return CertifiedBound("LinfH", value, terms, lam, t_n)


def rho_l2x_bound(breakdown: IndicatorBreakdown, constants: EllipticConstants,
                  lam: float | None = None, upto: int | None = None,
                  init_sq: float | None = None) -> float:
    """Bound on ||rho||_{L2(0,t_n;X)} alone (the pre-triangle-inequality block)."""
    sl = _slab_slice(breakdown, upto)
    t_n = float(breakdown.nodes[sl.stop])
    lam = choose_lambda(t_n) if lam is None else lam
    init = breakdown.init_sq if init_sq is None else float(init_sq)
    ab, pf = constants.alpha_flat, constants.c_pf_pivot_x
    val_sq = (2.0 / ab * init
              + 4.0 / ab * lam**2 * float(breakdown.mesh_l1t[sl].sum()) ** 2
              + 6.0 / ab**2 * float((breakdown.theta[sl] ** 2).sum()
                                    + breakdown.space_l2t[sl].sum()
                                    + breakdown.osc_l2t[sl].sum())
              + 6.0 / ab**2 * pf**2 * (1.0 - lam) ** 2
              * float(breakdown.mesh_l2t[sl].sum()))
    return math.sqrt(val_sq)


def assemble_h1xdual_bound(breakdown: IndicatorBreakdown, constants: EllipticConstants,
                           rho_bound: float | None = None,
                           lam: float | None = None,
                           upto: int | None = None) -> CertifiedBound:
    """Bound on the broken H1(I;X') error (derived bound, Remark-based).

    sqrt(2)*||R||-accumulation + sqrt(2)*alpha_sharp*rho-bound + the
    space-indicator accumulation for the reconstruction seminorm term.
    """
    sl = _slab_slice(breakdown, upto)
    t_n = float(breakdown.nodes[sl.stop])
    lam = choose_lambda(t_n) if lam is None else lam
    pf = constants.c_pf_pivot_x
    if rho_bound is None:
        rho_bound = rho_l2x_bound(breakdown, constants, lam=lam, upto=upto)
    residual_sq = 4.0 * float((breakdown.theta[sl] ** 2).sum()
                              + breakdown.space_l2t[sl].sum()
                              + breakdown.osc_l2t[sl].sum()
                              + pf**2 * breakdown.mesh_l2t[sl].sum())
    terms = {
        "residual": math.sqrt(2.0) * math.sqrt(residual_sq),
        "rho": math.sqrt(2.0) * constants.alpha_sharp * rho_bound,
        "recon_seminorm": math.sqrt(float(breakdown.space_l2t[sl].sum())),
    }
    return CertifiedBound("H1Xdual", sum(terms.values()), terms, lam, t_n)
