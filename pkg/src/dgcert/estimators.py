"""Elliptic residual estimator and the parabolic error indicators.

The elliptic estimator is the guaranteed-constant 1D residual bound for
the error w - w_h of the elliptic problem A w = g, valid whenever w - w_h
is a(.,.)-orthogonal to the estimating space (which holds at every call
site).  With P1 functions and element-aligned piecewise-constant a, the
element residual is R|_K = g; flux jumps of a w_h' contribute only at
kinks of w_h interior to estimating elements (at mesh vertices they drop
against v - I_h v, which vanishes there in 1D).  With
J_K = sum of |[a w_h']| over interior kinks of K:

    X  :  (1/alpha_b) (sum_K [ (h_K/pi)   ||R||_K + (h_K/2)^(1/2)   J_K ]^2)^(1/2)
    H  :  (1/alpha_b) (sum_K [ (h_K/pi)^2 ||R||_K + (h_K^(3/2)/2) J_K ]^2)^(1/2)
    X' :  C_PF * (H value)

from ||phi||_K <= (h/pi)||phi'||_K, |phi(x)| <= (h/2)^(1/2)||phi'||_K for
phi in H^1_0(K) (X case), and the squared analogues against ||z''||_K in
the Aubin-Nitsche step (H case).  Estimates are fully constant-explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import EllipticConstants, Problem, constants_for
from .reconstruct import lifting_kernel, time_recon_constant
from .spatial import (
    Coefficient,
    FeFunction,
    FeSpace,
    SpatialOperators,
    elementwise_l2_sq,
    gauss01,
    prolong_values,
    restrict_functional,
    subspace,
    superspace,
)
from .timedg import DgSolution, SlabPoly, legendre_values


@dataclass(frozen=True)
class EllipticEstimatorKind:
    norm_tag: str          # "X" | "H" | "Xdual"
    variant: str = "residual"

    def __post_init__(self):
        if self.norm_tag not in ("X", "H", "Xdual"):
            raise ValueError(f"unknown norm tag {self.norm_tag!r}")
        if self.variant != "residual":
            raise ValueError(f"estimator variant {self.variant!r} not shipped")


def _estimate_from_parts(norm_tag: str, space: FeSpace, elem_sq: np.ndarray,
                         constants: EllipticConstants,
                         jump_sums: np.ndarray | None = None) -> float:
    h = space.h
    elem_norm = np.sqrt(np.maximum(elem_sq, 0.0))
    if norm_tag == "X":
        parts = (h / math.pi) * elem_norm
        if jump_sums is not None:
            parts = parts + np.sqrt(h / 2.0) * jump_sums
    else:
        parts = (h / math.pi) ** 2 * elem_norm
        if jump_sums is not None:
            parts = parts + (h ** 1.5 / 2.0) * jump_sums
    val = math.sqrt(float((parts**2).sum())) / constants.alpha_flat
    if norm_tag == "Xdual":
        val *= constants.c_pf_dual_pivot
    return val


def _estimate_from_elem_sq(norm_tag, space, elem_sq, constants):
    return _estimate_from_parts(norm_tag, space, elem_sq, constants)


def _kink_jump_sums(space: FeSpace, w_h: FeFunction, coeff: Coefficient) -> np.ndarray | None:
    """Per element of `space`, the sum of |[a w_h']| over w_h-kinks interior
    to the element; None when w_h lives on space's own mesh."""
    if w_h.space.same_mesh(space):
        return None
    if not w_h.space.contains(space):
        raise ValueError("w_h must live on a mesh refining the estimating mesh")
    slopes = w_h.slopes()
    verts = w_h.space.vertices
    interior = ~np.isin(w_h.space.cuts[1:-1], space.cuts)
    if not interior.any():
        return None
    kinks = verts[1:-1][interior]
    jumps = np.abs(coeff(kinks) * (slopes[1:][interior] - slopes[:-1][interior]))
    elem = np.clip(np.searchsorted(space.vertices, kinks, side="right") - 1,
                   0, space.n_elements - 1)
    out = np.zeros(space.n_elements)
    np.add.at(out, elem, jumps)
    return out


def _check_estimator_inputs(space: FeSpace, coeff: Coefficient):
    if not coeff.aligned_with(space):
        raise ValueError("estimator needs coefficient breakpoints on mesh vertices")


def elliptic_estimate(kind: EllipticEstimatorKind, space: FeSpace, w_h,
                      g, constants: EllipticConstants, coeff: Coefficient,
                      g_smooth=None) -> float:
    """A posteriori bound on ||w - w_h||_Z for A w = g with w - w_h
    a(.,.)-orthogonal to `space` (Galerkin/Ritz-type approximations).

    g is an FE function on a mesh refining space's (plus an optional smooth
    callable remainder); w_h may live on a refining mesh, in which case its
    interior flux jumps enter the bound.
    """
    _check_estimator_inputs(space, coeff)
    if isinstance(g, FeFunction) and not g.space.contains(space):
        common = superspace(g.space, space)
        if not common.contains(space) or not common.contains(g.space):
            raise ValueError("load not representable")
        g = FeFunction(common, prolong_values(g.space, common, g.values))
    elem_sq = elementwise_l2_sq(space, g, g_smooth)
    jump_sums = None
    if isinstance(w_h, FeFunction):
        jump_sums = _kink_jump_sums(space, w_h, coeff)
    return _estimate_from_parts(kind.norm_tag, space, elem_sq, constants, jump_sums)


def dual_norm_bound(space: FeSpace, v: FeFunction, constants: EllipticConstants,
                    coeff: Coefficient) -> float:
    """Computable upper bound on ||v||_{X'}: one stiffness solve plus the
    X-estimate of Psi = A_V^{-1} P_V v."""
    ops = SpatialOperators.get(space, coeff)
    load = ops.load_from_function(v)     # = M (P_V v)
    psi = ops.solve_stiffness(load)      # K Psi = M P_V v  <=>  A_V Psi = P_V v
    energy_sq = max(float(np.dot(psi, load)), 0.0)  # (A_V Psi, Psi)
    est = elliptic_estimate(EllipticEstimatorKind("X"), space,
                            FeFunction(space, psi), v, constants, coeff)
    return math.sqrt(constants.alpha_sharp**2 * est**2
                     + constants.alpha_sharp * energy_sq)


# ---------------------------------------------------------------------------
# Jumps of the discrete elliptic operator


def elliptic_jump(sol: DgSolution, n: int) -> tuple[FeFunction, FeFunction, FeSpace]:
    """([U]_{n-1}, [A U]_{n-1}, V_n^+) at node n-1, both on the superspace."""
    plus = sol.right_limit(n - 1)
    minus = sol.left_limit(n - 1)
    sup = superspace(plus.space, minus.space)
    ju = FeFunction(sup, prolong_values(plus.space, sup, plus.values)
                    - prolong_values(minus.space, sup, minus.values))
    ga = sol.ops_at(n).elliptic_apply(plus.values)
    gp = sol.ops_at(n - 1).elliptic_apply(minus.values)
    ja = FeFunction(sup, prolong_values(plus.space, sup, ga)
                    - prolong_values(minus.space, sup, gp))
    return ju, ja, sup


# ---------------------------------------------------------------------------
# theta: the time-reconstruction indicator


def theta_indicator(sol: DgSolution, constants: EllipticConstants, n: int,
                    mode: str = "super") -> float:
    """Bound theta_n with theta_n^2 >= int_{I_n} ||A(what - omega)||_{X'}^2.

    mode 'super': one stiffness solve on the superspace V_n^+ (with the
    time-invariant-mesh inner-product shortcut); mode 'pf': the cruder
    Poincare-Friedrichs route avoiding the superspace solve entirely.
    """
    if mode not in ("super", "pf"):
        raise ValueError(f"unknown theta mode {mode!r}")
    ju, ja, sup = elliptic_jump(sol, n)
    tau = float(sol.partition.taus[n - 1])
    r = int(sol.partition.degrees[n - 1])
    C = time_recon_constant(tau, r)
    ops_sup = SpatialOperators.get(sup, sol.coeff)

    if mode == "pf":
        return constants.c_pf_dual_pivot * C * math.sqrt(ops_sup.l2_norm_sq(ja.values))

    load = ops_sup.mass_matvec(ja.values)
    if sol.space_at(n - 1).same_mesh(sol.space_at(n)):
        psi = ju.values          # A_n [U] = [A U] on a fixed mesh
        pair = float(np.dot(psi, load))
    else:
        psi = ops_sup.solve_stiffness(load)
        pair = float(np.dot(psi, load))
    est = elliptic_estimate(EllipticEstimatorKind("X"), sup,
                            FeFunction(sup, psi), ja, constants, sol.coeff)
    theta_sq = (constants.alpha_sharp * C**2 * max(pair, 0.0)
                + constants.alpha_sharp**2 * C**2 * est**2)
    return math.sqrt(theta_sq)


# ---------------------------------------------------------------------------
# space indicator


def _space_indicator_polys(sol: DgSolution, n: int,
                           projection_space: FeSpace | None = None
                           ) -> tuple[SlabPoly, SlabPoly, FeSpace]:
    """(v, g, V_n^-) with v(t) = U' + chi([U]) and g(t) = A_n U' + chi([A U]),
    both slab polynomials on the superspace.

    The estimate bounds the drift of the reconstructed time derivative from
    v itself; v - (the exact A^{-1}g) is a(.,.)-orthogonal to V_n^-, and v's
    kinks interior to V_n^- elements enter the residual as flux jumps.
    """
    ju, ja, sup = elliptic_jump(sol, n)
    piece = sol.slab_poly(n)
    basis = sol.basis_at(n)
    kern = lifting_kernel(piece.degree)
    vm = projection_space if projection_space is not None \
        else subspace(sol.space_at(n - 1), sol.space_at(n))

    ops_n = sol.ops_at(n)
    du = piece.dt().padded(piece.degree)

    # g = A_n U' + chi([A U]) on the superspace
    a_rows = np.stack([ops_n.elliptic_apply(row) for row in du.coeffs])
    g_rows = np.stack([prolong_values(piece.space, sup, row) for row in a_rows])
    g_rows += np.outer(kern.kappa_coeffs, ja.values) / basis.tau
    g_poly = SlabPoly(sup, basis.t0, basis.t1, g_rows)

    # v = U' + chi([U]) on the superspace
    v_rows = np.stack([prolong_values(piece.space, sup, row) for row in du.coeffs])
    v_rows += np.outer(kern.kappa_coeffs, ju.values) / basis.tau
    v_poly = SlabPoly(sup, basis.t0, basis.t1, v_rows)
    return v_poly, g_poly, vm


def space_indicator_projection(sol: DgSolution, n: int,
                               projection_space: FeSpace | None = None) -> SlabPoly:
    """Ritz projection of U' + chi([U]) onto V_n^-: the Galerkin approximation
    whose discrete operator image is P^- g (consistency-check material)."""
    v_poly, _, vm = _space_indicator_polys(sol, n, projection_space)
    ops_sup = SpatialOperators.get(v_poly.space, sol.coeff)
    ops_vm = SpatialOperators.get(vm, sol.coeff)
    rows = np.stack([
        ops_vm.solve_stiffness(restrict_functional(vm, v_poly.space,
                                                   ops_sup.stiffness_matvec(row)))
        for row in v_poly.coeffs])
    return SlabPoly(vm, v_poly.t0, v_poly.t1, rows)


def space_indicator(sol: DgSolution, constants: EllipticConstants, n: int,
                    t: float, projection_space: FeSpace | None = None) -> float:
    """Pointwise-in-time space indicator (X'-estimate over V_n^-)."""
    v_poly, g_poly, vm = _space_indicator_polys(sol, n, projection_space)
    return elliptic_estimate(EllipticEstimatorKind("Xdual"), vm,
                             v_poly.value(t), g_poly.value(t),
                             constants, sol.coeff)


def space_indicator_sq_integral(sol: DgSolution, constants: EllipticConstants,
                                n: int, projection_space: FeSpace | None = None) -> float:
    # over-resolved rule: the kink-jump magnitudes are piecewise smooth in t
    v_poly, g_poly, vm = _space_indicator_polys(sol, n, projection_space)
    s, w = gauss01(2 * max(g_poly.degree, 1) + 7)
    gvals = g_poly.values_at_s(s)
    vvals = v_poly.values_at_s(s)
    total = 0.0
    for wq, gv, vv in zip(w, gvals, vvals):
        elem_sq = elementwise_l2_sq(vm, FeFunction(g_poly.space, gv))
        jumps = _kink_jump_sums(vm, FeFunction(v_poly.space, vv), sol.coeff)
        total += wq * _estimate_from_parts("Xdual", vm, elem_sq, constants, jumps) ** 2
    return g_poly.tau * total


# ---------------------------------------------------------------------------
# mesh-change indicator


@dataclass
class MeshChangeIndicator:
    nonconforming_part: FeFunction   # w = (I - P_n) U(t_{n-1}^-) on the superspace
    w_norm: float                    # ||w||_H
    sq_integral: float               # int_{I_n} eta^2, via the explicit identity
    l1_integral: float               # int_{I_n} eta, via exact |kappa| integration
    tau: float
    degree: int

    def eta(self, s) -> np.ndarray:
        """Pointwise profile eta(t_{n-1} + s tau) = ||chi_n(w)(s)||_H."""
        kern = lifting_kernel(self.degree)
        return self.w_norm * np.abs(kern.kappa(s)) / self.tau


def mesh_change_indicator(sol: DgSolution, n: int) -> MeshChangeIndicator:
    """eta_n from the lifted non-projectable jump part; vanishes without coarsening."""
    minus = sol.left_limit(n - 1)
    space_n = sol.space_at(n)
    proj = sol.ops_at(n).l2_project(minus)
    sup = superspace(minus.space, space_n)
    w = FeFunction(sup, prolong_values(minus.space, sup, minus.values)
                   - prolong_values(space_n, sup, proj))
    tau = float(sol.partition.taus[n - 1])
    r = int(sol.partition.degrees[n - 1])
    norm = math.sqrt(max(SpatialOperators.get(sup, sol.coeff).l2_norm_sq(w.values), 0.0))
    kern = lifting_kernel(r)
    return MeshChangeIndicator(
        nonconforming_part=w,
        w_norm=norm,
        sq_integral=(r + 1) ** 2 / tau * norm**2,
        l1_integral=norm * kern.abs_kappa_integral(),
        tau=tau,
        degree=r,
    )


# ---------------------------------------------------------------------------
# oscillation


def oscillation_indicator(problem: Problem, sol: DgSolution, n: int) -> float:
    """int_{I_n} osc^2 with osc = C_PF ||f - Pi_n f||_H (over-resolved quadrature)."""
    f = problem.source_callable()
    basis = sol.basis_at(n)
    ops = sol.ops_at(n)
    r = basis.degree
    s, w = gauss01(r + 6)
    times = basis.t0 + basis.tau * s
    loads = np.stack([ops.load_from_callable(lambda x, t=t: f(x, t), npts=8)
                      for t in times])
    V = legendre_values(s, r)                       # (r+1, nq)
    proj_rows = np.stack([
        (2 * i + 1) * ops.solve_mass((w * V[i]) @ loads) for i in range(r + 1)])
    vals = V.T @ proj_rows                          # Pi_n f at quadrature times
    c_pf = constants_for(problem).c_pf_dual_pivot
    total = 0.0
    for wq, t, pv in zip(w, times, vals):
        elem_sq = elementwise_l2_sq(ops.space, FeFunction(ops.space, -pv),
                                    smooth=lambda x, t=t: f(x, t), npts_smooth=8)
        total += wq * float(elem_sq.sum())
    return c_pf**2 * basis.tau * total


# ---------------------------------------------------------------------------
# elliptic terms of the theorems


def _elliptic_slabpoly(sol: DgSolution, n: int) -> SlabPoly:
    """A_n U as a slab polynomial on V_n (the load of the elliptic estimate)."""
    piece = sol.slab_poly(n)
    ops = sol.ops_at(n)
    return SlabPoly(piece.space, piece.t0, piece.t1,
                    np.stack([ops.elliptic_apply(row) for row in piece.coeffs]))


def elliptic_sq_integral(sol: DgSolution, constants: EllipticConstants, n: int) -> float:
    """int_{I_n} E_{X,V_n}[U, A_n U]^2 dt (exact: integrand is polynomial)."""
    g_poly = _elliptic_slabpoly(sol, n)
    s, w = gauss01(2 * max(g_poly.degree, 1) + 3)
    total = 0.0
    for wq, gv in zip(w, g_poly.values_at_s(s)):
        elem_sq = elementwise_l2_sq(g_poly.space, FeFunction(g_poly.space, gv))
        total += wq * _estimate_from_elem_sq("X", g_poly.space, elem_sq, constants) ** 2
    return g_poly.tau * total


def linf_elliptic_sup(sol: DgSolution, constants: EllipticConstants, n: int) -> float:
    """sup_{t in I_n} E_{H,V_n}[U(t), A_n U(t)], exact via the polynomial sup."""
    g_poly = _elliptic_slabpoly(sol, n)
    space = g_poly.space
    wH = (space.h / math.pi) ** 4

    def qval(s):
        elem_sq = elementwise_l2_sq(space, FeFunction(space, g_poly.values_at_s([s])[0]))
        return float(np.dot(wH, elem_sq))

    deg = 2 * g_poly.degree
    nodes = 0.5 * (1.0 - np.cos(np.pi * np.arange(deg + 1) / max(deg, 1)))
    poly = np.polynomial.Polynomial.fit(nodes, [qval(s) for s in nodes], deg)
    crit = [0.0, 1.0]
    if deg >= 1:
        roots = poly.deriv().roots()
        crit += [float(np.real(z)) for z in roots
                 if abs(np.imag(z)) < 1e-10 and 0.0 <= np.real(z) <= 1.0]
    best = max(qval(s) for s in crit)
    return math.sqrt(max(best, 0.0)) / constants.alpha_flat


def linf_jump_term(sol: DgSolution, constants: EllipticConstants, n: int) -> float:
    """E_{H,V_n^-}[[U], [A U]] + ||[U]||_H, the L-infinity jump max-candidate.

    The estimate covers ||[omega] - [U]||_H: the difference is a-orthogonal
    to V_n^-, and [U]'s kinks inside V_n^- elements enter as flux jumps.
    """
    ju, ja, sup = elliptic_jump(sol, n)
    vm = subspace(sol.space_at(n - 1), sol.space_at(n))
    ops_sup = SpatialOperators.get(sup, sol.coeff)
    est = elliptic_estimate(EllipticEstimatorKind("H"), vm, ju, ja,
                            constants, sol.coeff)
    return est + math.sqrt(max(ops_sup.l2_norm_sq(ju.values), 0.0))


# ---------------------------------------------------------------------------
# breakdown over all slabs


@dataclass
class IndicatorBreakdown:
    """Per-slab indicator values plus everything the theorem assembly needs."""

    nodes: np.ndarray
    taus: np.ndarray
    degrees: np.ndarray
    theta: np.ndarray          # theta_j
    space_l2t: np.ndarray      # int (space_j)^2
    mesh_l2t: np.ndarray       # int eta_j^2
    mesh_l1t: np.ndarray       # int eta_j
    osc_l2t: np.ndarray        # int osc_j^2
    elliptic_l2t: np.ndarray   # int E_{X,V_j}[U, A_j U]^2
    linf_jump: np.ndarray      # per-slab candidates for the jump max-term
    linf_elliptic: np.ndarray  # per-slab sup_t E_{H,V_j}[U, A_j U]
    init_sq: float             # ||u0 - P_0 u0||_H^2
    dims: np.ndarray           # dim V_j
    dims_super: np.ndarray     # dim V_j^+
    dims_sub: np.ndarray       # dim V_j^-
    theta_mode: str = "super"

    @property
    def n_slabs(self) -> int:
        return len(self.taus)


def initial_projection_error_sq(sol: DgSolution) -> float:
    u0 = sol.problem.initial
    elem_sq = elementwise_l2_sq(sol.space0, FeFunction(sol.space0, -sol.u0_proj),
                                smooth=u0, npts_smooth=12)
    return float(elem_sq.sum())


def compute_breakdown(sol: DgSolution, constants: EllipticConstants,
                      theta_mode: str = "super") -> IndicatorBreakdown:
    N = sol.partition.n_slabs
    theta = np.zeros(N)
    space_l2t = np.zeros(N)
    mesh_l2t = np.zeros(N)
    mesh_l1t = np.zeros(N)
    osc_l2t = np.zeros(N)
    elliptic_l2t = np.zeros(N)
    linf_jump = np.zeros(N)
    linf_ell = np.zeros(N)
    dims = np.zeros(N, dtype=int)
    dims_sup = np.zeros(N, dtype=int)
    dims_sub = np.zeros(N, dtype=int)
    for n in range(1, N + 1):
        theta[n - 1] = theta_indicator(sol, constants, n, theta_mode)
        space_l2t[n - 1] = space_indicator_sq_integral(sol, constants, n)
        mc = mesh_change_indicator(sol, n)
        mesh_l2t[n - 1] = mc.sq_integral
        mesh_l1t[n - 1] = mc.l1_integral
        osc_l2t[n - 1] = oscillation_indicator(sol.problem, sol, n)
        elliptic_l2t[n - 1] = elliptic_sq_integral(sol, constants, n)
        linf_jump[n - 1] = linf_jump_term(sol, constants, n)
        linf_ell[n - 1] = linf_elliptic_sup(sol, constants, n)
        dims[n - 1] = sol.space_at(n).dim
        dims_sup[n - 1] = superspace(sol.space_at(n - 1), sol.space_at(n)).dim
        dims_sub[n - 1] = subspace(sol.space_at(n - 1), sol.space_at(n)).dim
    return IndicatorBreakdown(
        nodes=sol.partition.nodes.copy(),
        taus=sol.partition.taus.copy(),
        degrees=sol.partition.degrees.copy(),
        theta=theta, space_l2t=space_l2t, mesh_l2t=mesh_l2t, mesh_l1t=mesh_l1t,
        osc_l2t=osc_l2t, elliptic_l2t=elliptic_l2t,
        linf_jump=linf_jump, linf_elliptic=linf_ell,
        init_sq=initial_projection_error_sq(sol),
        dims=dims, dims_super=dims_sup, dims_sub=dims_sub,
        theta_mode=theta_mode,
    )
