"""Time lifting, time reconstruction, and the reference elliptic reconstruction.

The lifting chi_n maps w to the Riesz representer of left-endpoint
evaluation in P_r(I_n; .): chi_n(w)(t_{n-1} + s tau) = w * kappa_r(s)/tau.
The time reconstruction of a slab polynomial w with incoming value
w(t_{n-1}^-) is the degree-(r+1) polynomial

    what(t) = w(t) - [w]_{n-1} * (1 - int_0^s kappa_r),

continuous across nodes; its deviation from w is exactly the jump times the
fixed gap profile, which is what the error identities quantify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spatial import (
    Coefficient,
    FeFunction,
    FeSpace,
    SpatialOperators,
    gauss01,
    prolong_values,
    superspace,
)
from .timedg import (
    DEGREE_CAP,
    SlabPoly,
    legendre_values,
)


def time_recon_constant(tau: float, r: int) -> float:
    """C(tau, r) with ||w - what||_{L2(I_n;W)} = C ||[w]||_W."""
    return math.sqrt(tau * (r + 1) / ((2 * r + 1) * (2 * r + 3)))


@dataclass(frozen=True)
class LiftingKernel:
    """Scalar kernel of the time lifting on the reference slab (0,1)."""

    degree: int
    kappa_coeffs: np.ndarray      # shifted-Legendre coefficients of kappa_r
    primitive_coeffs: np.ndarray  # of K_r(s) = int_0^s kappa_r
    gap_coeffs: np.ndarray        # of 1 - K_r(s)

    def kappa(self, s) -> np.ndarray:
        return np.polynomial.legendre.legval(2.0 * np.asarray(s, dtype=float) - 1.0,
                                             self.kappa_coeffs)

    def gap(self, s) -> np.ndarray:
        return np.polynomial.legendre.legval(2.0 * np.asarray(s, dtype=float) - 1.0,
                                             self.gap_coeffs)

    def abs_kappa_integral(self) -> float:
        """Exact int_0^1 |kappa_r|: split at the real roots of kappa in (0,1)."""
        roots = np.polynomial.legendre.legroots(self.kappa_coeffs)
        roots = np.real(roots[np.isreal(roots)])
        cuts = np.concatenate(([0.0], np.sort((roots + 1.0) / 2.0), [1.0]))
        cuts = cuts[(cuts >= 0.0) & (cuts <= 1.0)]
        s, w = gauss01(self.degree + 2)
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                continue
            vals = self.kappa(a + (b - a) * s)
            total += (b - a) * abs(float(np.dot(w, vals)))
        return total

    def gap_sq_integral(self) -> float:
        s, w = gauss01(self.degree + 3)
        vals = self.gap(s)
        return float(np.dot(w, vals * vals))


@lru_cache(maxsize=DEGREE_CAP + 3)
def lifting_kernel(degree: int) -> LiftingKernel:
    """Solve the (r+1)x(r+1) Riesz system int kappa Lt_j = Lt_j(0)."""
    if not 0 <= degree <= DEGREE_CAP:
        raise ValueError(f"lifting degree must be in 0..{DEGREE_CAP}")
    s, w = gauss01(degree + 1)
    V = legendre_values(s, degree)            # (r+1, npts)
    gram = (V * w) @ V.T                      # int Lt_i Lt_j, assembled not assumed
    rhs = legendre_values(0.0, degree)[:, 0]  # (-1)^i
    kappa = np.linalg.solve(gram, rhs)
    primitive = 0.5 * np.polynomial.legendre.legint(kappa, lbnd=-1.0)
    gap = -primitive
    gap[0] += 1.0
    return LiftingKernel(degree, kappa, primitive, gap)


def lift(w: FeFunction, t0: float, t1: float, degree: int) -> SlabPoly:
    """chi_n(w): Riesz representer of evaluation at t0^+ in P_degree((t0,t1]; W)."""
    kern = lifting_kernel(degree)
    tau = t1 - t0
    return SlabPoly(w.space, t0, t1, np.outer(kern.kappa_coeffs, w.values) / tau)


# ---------------------------------------------------------------------------
# Time reconstruction


@dataclass
class TimeReconstruction:
    """Globally continuous degree-(r+1) lift of a piecewise slab polynomial."""

    pieces: list  # SlabPoly per slab, degree r_n + 1

    def piece(self, n: int) -> SlabPoly:
        """Slab index n = 1..N."""
        return self.pieces[n - 1]

    def value(self, t: float) -> FeFunction:
        for p in self.pieces:
            if t <= p.t1:
                return p.value(t)
        return self.pieces[-1].value(t)


def reconstruct_slab(piece: SlabPoly, left_start: FeFunction) -> SlabPoly:
    """One slab of the time reconstruction, carried on superspace(piece, start)."""
    kern = lifting_kernel(piece.degree)
    carrier = superspace(piece.space, left_start.space)
    w = piece.in_space(carrier).padded(piece.degree + 1)
    jump = (prolong_values(piece.space, carrier, piece.left_value().values)
            - prolong_values(left_start.space, carrier, left_start.values))
    return SlabPoly(carrier, piece.t0, piece.t1,
                    w.coeffs - np.outer(kern.gap_coeffs, jump))


def time_reconstruct(pieces, left_start: FeFunction) -> TimeReconstruction:
    """Chain reconstruct_slab over all slabs; left_start supplies w(t_0^-)."""
    out = []
    prev = left_start
    for piece in pieces:
        out.append(reconstruct_slab(piece, prev))
        prev = piece.right_value()
    return TimeReconstruction(out)


def reconstruction_gap_norms(piece: SlabPoly, hat: SlabPoly, spatial: str = "H",
                             coeff: Coefficient | None = None,
                             n_linf_samples: int = 1000) -> dict:
    """Quadrature/sampling norms of w - what on one slab.

    Returns {'l2': ||w-what||_{L2(I;W)}, 'linf': sup-sample of ||(w-what)(t)||_W}
    with W the H (mass) or X (seminorm) norm.
    """
    coeff = coeff if coeff is not None else Coefficient()
    diff = piece - hat
    ops = SpatialOperators.get(diff.space, coeff)
    norm_sq = ops.l2_norm_sq if spatial == "H" else ops.x_norm_sq

    s, w = gauss01(diff.degree + 2)
    vals = diff.values_at_s(s)
    l2 = math.sqrt(diff.tau * sum(wq * norm_sq(v) for wq, v in zip(w, vals)))

    samples = np.concatenate(([0.0, 1.0], np.linspace(0.0, 1.0, n_linf_samples)))
    linf = max(math.sqrt(max(norm_sq(v), 0.0)) for v in diff.values_at_s(samples))
    return {"l2": l2, "linf": linf}


# ---------------------------------------------------------------------------
# Reference elliptic reconstruction


def elliptic_reconstruct_reference(piece: SlabPoly, ref_space: FeSpace,
                                   coeff: Coefficient) -> SlabPoly:
    """Reference realization of the elliptic reconstruction of one slab.

    Per temporal Legendre coefficient w of the slab solution solves
    a(omega, v) = (A_n w, v) for all v in ref_space.  Only used for
    verification and effectivity studies; the computable bounds never
    need omega itself.
    """
    if not (ref_space.contains(piece.space) and not ref_space.same_mesh(piece.space)):
        raise ValueError("reference space must refine slab space")
    ops_slab = SpatialOperators.get(piece.space, coeff)
    ops_ref = SpatialOperators.get(ref_space, coeff)
    rows = []
    for row in piece.coeffs:
        g = ops_slab.elliptic_apply(row)
        load = ops_ref.mass_matvec(prolong_values(piece.space, ref_space, g))
        rows.append(ops_ref.solve_stiffness(load))
    return SlabPoly(ref_space, piece.t0, piece.t1, np.stack(rows))


def elliptic_solve_reference(fn: FeFunction, source_ops: SpatialOperators,
                             ref_space: FeSpace, coeff: Coefficient) -> np.ndarray:
    """Solve a(omega, v) = (A_V fn, v) on ref_space for a single FE function."""
    g = source_ops.elliptic_apply(fn.values)
    ops_ref = SpatialOperators.get(ref_space, coeff)
    load = ops_ref.mass_matvec(prolong_values(fn.space, ref_space, g))
    return ops_ref.solve_stiffness(load)
