"""Brute-force oracles, true-error computation, and consistency checks.

Everything here is verification-side: fine-space Riesz solves for dual
norms, manufactured-solution error norms by over-resolved quadrature, the
pointwise form of the scheme assembled on a reference space, and the
effectivity report.  None of it feeds the computable bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import CertifiedBound, assemble_h1xdual_bound, assemble_l2x_bound, \
    assemble_linfh_bound, choose_lambda
from .estimators import IndicatorBreakdown, compute_breakdown
from .problem import Problem, constants_for
from .reconstruct import (
    elliptic_reconstruct_reference,
    elliptic_solve_reference,
    lifting_kernel,
    reconstruct_slab,
)
from .spatial import (
    Coefficient,
    FeFunction,
    FeSpace,
    SpatialOperators,
    gauss01,
    prolong_values,
    refine,
    superspace,
)
from .timedg import DgSolution, SlabPoly, _source_loads, legendre_values

ORACLE_DEPTH = 4          # fine-space refinement depth for all oracles
TRUE_ERR_T_EXTRA = 4      # temporal Gauss points: r + this
TRUE_ERR_X_PTS = 12       # spatial Gauss points per element
LINF_SAMPLES = 30         # interior time samples per slab for the sup


def _xdual_sq_of_load(ops: SpatialOperators, load: np.ndarray) -> float:
    """Squared discrete dual norm sup <load,phi>/||phi||_X on ops' space."""
    psi = ops.solve_seminorm(load)
    return max(float(np.dot(psi, load)), 0.0)


def dual_norm_oracle(v: FeFunction, depth: int = ORACLE_DEPTH,
                     coeff: Coefficient | None = None) -> float:
    """||v||_{X'} from below: X-Riesz solve on the depth-refined space."""
    coeff = coeff if coeff is not None else Coefficient()
    fine = refine(v.space, depth)
    ops = SpatialOperators.get(fine, coeff)
    load = ops.load_from_function(v)
    return math.sqrt(_xdual_sq_of_load(ops, load))


# ---------------------------------------------------------------------------
# True errors against the manufactured solution


def true_error(sol: DgSolution, problem: Problem, norm_tag: str,
               upto: int | None = None, t_extra: int = TRUE_ERR_T_EXTRA,
               x_pts: int = TRUE_ERR_X_PTS, n_linf: int = LINF_SAMPLES) -> float:
    """||u - U|| in L2(0,t_n;X) or L-infinity(0,t_n;H) by quadrature/sampling."""
    if problem.manufactured is None:
        raise ValueError("no exact solution configured")
    ex = problem.manufactured
    n_slabs = sol.partition.n_slabs if upto is None else upto
    if norm_tag == "L2X":
        total = 0.0
        for n in range(1, n_slabs + 1):
            piece = sol.slab_poly(n)
            sq, wq = gauss01(piece.degree + t_extra)
            sx, wx = gauss01(x_pts)
            xl, h = piece.space.vertices[:-1], piece.space.h
            x = xl[:, None] + h[:, None] * sx[None, :]
            for w_t, s in zip(wq, sq):
                t = piece.t0 + piece.tau * s
                fn = FeFunction(piece.space, piece.values_at_s([s])[0])
                diff = ex.u_x(x, t) - fn.slopes()[:, None]
                total += piece.tau * w_t * float((h[:, None] * wx * diff**2).sum())
        return math.sqrt(total)
    if norm_tag == "LinfH":
        best = _l2_dist_sq(sol.left_limit(0), ex.u, 0.0, x_pts)
        for n in range(1, n_slabs + 1):
            piece = sol.slab_poly(n)
            samples = np.concatenate(([0.0], np.linspace(0.0, 1.0, n_linf + 2)[1:-1],
                                      [1.0]))
            for s in samples:
                t = piece.t0 + piece.tau * s
                fn = FeFunction(piece.space, piece.values_at_s([s])[0])
                best = max(best, _l2_dist_sq(fn, ex.u, t, x_pts))
        return math.sqrt(best)
    raise ValueError(f"unknown norm tag {norm_tag!r}")


def _l2_dist_sq(fn: FeFunction, u, t: float, x_pts: int = TRUE_ERR_X_PTS) -> float:
    sx, wx = gauss01(x_pts)
    xl, h = fn.space.vertices[:-1], fn.space.h
    x = xl[:, None] + h[:, None] * sx[None, :]
    diff = u(x, t) - fn(x)
    return float((h[:, None] * wx * diff**2).sum())


# ---------------------------------------------------------------------------
# Reference-space reconstruction bundle (shared by the consistency checks)


@dataclass
class SlabReference:
    """Everything the per-slab checks need on one reference space."""

    ref: FeSpace
    omega: SlabPoly            # reference elliptic reconstruction, degree r
    omega_prev: FeFunction     # omega(t_{n-1}^-) via the previous slab operator
    hat: SlabPoly              # time reconstruction of omega, degree r+1
    ju_ref: np.ndarray         # [U]_{n-1} on ref
    jomega: np.ndarray         # [omega]_{n-1} on ref


def slab_reference(sol: DgSolution, n: int, depth: int = ORACLE_DEPTH) -> SlabReference:
    piece = sol.slab_poly(n)
    prev = sol.left_limit(n - 1)
    sup = superspace(piece.space, prev.space)
    ref = refine(sup, depth)
    omega = elliptic_reconstruct_reference(piece, ref, sol.coeff)
    omega_prev = FeFunction(ref, elliptic_solve_reference(
        prev, sol.ops_at(n - 1), ref, sol.coeff))
    hat = reconstruct_slab(omega, omega_prev)
    ju_ref = (prolong_values(piece.space, ref, piece.left_value().values)
              - prolong_values(prev.space, ref, prev.values))
    jomega = omega.left_value().values - omega_prev.values
    return SlabReference(ref, omega, omega_prev, hat, ju_ref, jomega)


def theta_oracle_sq(sol: DgSolution, n: int, depth: int = ORACLE_DEPTH,
                    refdata: SlabReference | None = None) -> float:
    """int_{I_n} ||A(what - omega)||_{X'}^2 via the reference omega and the
    fine-space Riesz oracle; the quantity every theta mode must dominate."""
    rd = refdata if refdata is not None else slab_reference(sol, n, depth)
    diff = rd.hat - rd.omega
    ops = SpatialOperators.get(rd.ref, sol.coeff)
    s, w = gauss01(diff.degree + 2)
    total = 0.0
    for wq, vals in zip(w, diff.values_at_s(s)):
        load = ops.stiffness_matvec(vals)
        total += wq * _xdual_sq_of_load(ops, load)
    return diff.tau * total


def space_indicator_oracle(sol: DgSolution, n: int, s_values,
                           depth: int = ORACLE_DEPTH,
                           refdata: SlabReference | None = None) -> np.ndarray:
    """||(omega' + chi([omega])) - (U' + chi([U]))||_{X'} at local times s."""
    rd = refdata if refdata is not None else slab_reference(sol, n, depth)
    piece = sol.slab_poly(n)
    kern = lifting_kernel(piece.degree)
    ops = SpatialOperators.get(rd.ref, sol.coeff)
    domega = rd.omega.dt().padded(piece.degree)
    du = piece.dt().padded(piece.degree).in_space(rd.ref)
    out = []
    for s in np.atleast_1d(s_values):
        kv = float(kern.kappa(s)) / piece.tau
        vals = (domega.values_at_s([s])[0] + kv * rd.jomega
                - du.values_at_s([s])[0] - kv * rd.ju_ref)
        out.append(math.sqrt(_xdual_sq_of_load(ops, ops.mass_matvec(vals))))
    return np.asarray(out)


def pointwise_form_check(sol: DgSolution, problem: Problem, n: int,
                         depth: int = ORACLE_DEPTH) -> float:
    """L2(I_n; X'-oracle) gap between the two sides of the pointwise form.

    Both sides are assembled as load vectors on the reference space with
    all elliptic-operator terms realized through the reference omega.
    """
    rd = slab_reference(sol, n, depth)
    piece = sol.slab_poly(n)
    basis = sol.basis_at(n)
    r = piece.degree
    ops_ref = SpatialOperators.get(rd.ref, sol.coeff)
    ops_n = sol.ops_at(n)
    kern = lifting_kernel(r)

    s_q, w_q = gauss01(r + 3)
    loads = _source_loads(ops_n, problem.source, basis.t0 + basis.tau * s_q)
    V = legendre_values(s_q, r)
    pif_rows = np.stack([(2 * i + 1) * ops_n.solve_mass((w_q * V[i]) @ loads)
                         for i in range(r + 1)])
    pif = SlabPoly(piece.space, basis.t0, basis.t1, pif_rows).in_space(rd.ref)

    dhat = rd.hat.dt()
    domega = rd.omega.dt().padded(r)
    du_ref = piece.dt().padded(r).in_space(rd.ref)

    def pn_to_ref(vals: np.ndarray) -> np.ndarray:
        proj = ops_n.l2_project(FeFunction(rd.ref, vals))
        return prolong_values(piece.space, rd.ref, proj)

    jdiff = rd.jomega - rd.ju_ref                     # [omega - U] on ref
    chi_pn_jdiff = pn_to_ref(jdiff)                   # P_n then lift below

    total = 0.0
    for wq, s in zip(w_q, s_q):
        kv = float(kern.kappa(s)) / basis.tau
        hat_v = rd.hat.values_at_s([s])[0]
        dhat_v = dhat.values_at_s([s])[0]
        omega_v = rd.omega.values_at_s([s])[0]
        lhs = ops_ref.mass_matvec(dhat_v) + ops_ref.stiffness_matvec(hat_v)
        rhs_fn = (pif.values_at_s([s])[0]
                  + pn_to_ref(domega.values_at_s([s])[0] - du_ref.values_at_s([s])[0])
                  + (dhat_v - pn_to_ref(dhat_v))
                  + kv * chi_pn_jdiff)
        rhs = ops_ref.mass_matvec(rhs_fn) + ops_ref.stiffness_matvec(hat_v - omega_v)
        total += wq * _xdual_sq_of_load(ops_ref, lhs - rhs)
    return math.sqrt(basis.tau * total)


def lemma_identity_gap(sol: DgSolution, n: int, depth: int = ORACLE_DEPTH) -> float:
    """L2(I_n;H) distance of the two sides of the time-derivative-space-
    projection identity, assembled on the reference space."""
    rd = slab_reference(sol, n, depth)
    piece = sol.slab_poly(n)
    basis = sol.basis_at(n)
    r = piece.degree
    ops_ref = SpatialOperators.get(rd.ref, sol.coeff)
    ops_n = sol.ops_at(n)
    kern = lifting_kernel(r)

    dhat = rd.hat.dt()
    domega = rd.omega.dt().padded(r)
    du_ref = piece.dt().padded(r).in_space(rd.ref)

    def pn_to_ref(vals):
        proj = ops_n.l2_project(FeFunction(rd.ref, vals))
        return prolong_values(piece.space, rd.ref, proj)

    jdiff = rd.jomega - rd.ju_ref
    # [U - P_n U]_{n-1}: the t^+ part vanishes, leaving -(I - P_n)U(t_{n-1}^-)
    minus = sol.left_limit(n - 1)
    minus_ref = prolong_values(minus.space, rd.ref, minus.values)
    jump_nonproj = pn_to_ref(minus_ref) - minus_ref

    s_q, w_q = gauss01(r + 3)
    total = 0.0
    for wq, s in zip(w_q, s_q):
        kv = float(kern.kappa(s)) / basis.tau
        dhat_v = dhat.values_at_s([s])[0]
        lhs = (pn_to_ref(domega.values_at_s([s])[0] - du_ref.values_at_s([s])[0])
               + (dhat_v - pn_to_ref(dhat_v)) + kv * pn_to_ref(jdiff))
        rhs = (domega.values_at_s([s])[0] - du_ref.values_at_s([s])[0]
               + kv * jdiff + kv * jump_nonproj)
        total += wq * ops_ref.l2_norm_sq(lhs - rhs)
    return math.sqrt(basis.tau * total)


# ---------------------------------------------------------------------------
# Effectivity report


@dataclass
class HorizonRow:
    n: int
    t_n: float
    lam: float
    l2x_bound: CertifiedBound
    linfh_bound: CertifiedBound
    h1xdual_bound: CertifiedBound | None = None
    true_l2x: float | None = None
    true_linfh: float | None = None

    @property
    def eff_l2x(self) -> float | None:
        if self.true_l2x is None:
            return None
        return self.l2x_bound.value / self.true_l2x if self.true_l2x > 0 else math.inf

    @property
    def eff_linfh(self) -> float | None:
        if self.true_linfh is None:
            return None
        return self.linfh_bound.value / self.true_linfh if self.true_linfh > 0 else math.inf


@dataclass
class ErrorReport:
    rows: list
    breakdown: IndicatorBreakdown

    @property
    def final(self) -> HorizonRow:
        return self.rows[-1]

    @property
    def true_l2x(self):
        return self.final.true_l2x

    @property
    def true_linfh(self):
        return self.final.true_linfh


def certify(problem: Problem, sol: DgSolution, theta_mode: str = "super",
            lam: float | None = None, with_h1: bool = True,
            horizons: str = "final") -> ErrorReport:
    """Solve-side pipeline: breakdown -> assembled bounds -> true errors.

    horizons 'final' reports the last node only; 'all' one row per node.
    lam None means the min(1, 1/t_n) policy per horizon.
    """
    constants = constants_for(problem)
    breakdown = compute_breakdown(sol, constants, theta_mode)
    ns = range(1, breakdown.n_slabs + 1) if horizons == "all" else [breakdown.n_slabs]
    rows = []
    for n in ns:
        row = HorizonRow(
            n=n,
            t_n=float(breakdown.nodes[n]),
            lam=choose_lambda(float(breakdown.nodes[n])) if lam is None else lam,
            l2x_bound=assemble_l2x_bound(breakdown, constants, lam=lam, upto=n),
            linfh_bound=assemble_linfh_bound(breakdown, constants, lam=lam, upto=n),
        )
        if with_h1:
            row.h1xdual_bound = assemble_h1xdual_bound(breakdown, constants,
                                                       lam=lam, upto=n)
        if problem.manufactured is not None:
            row.true_l2x = true_error(sol, problem, "L2X", upto=n)
            row.true_linfh = true_error(sol, problem, "LinfH", upto=n)
        rows.append(row)
    return ErrorReport(rows, breakdown)


def fitted_rate(hs, errs) -> float:
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
