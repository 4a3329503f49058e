"""Experiment driver: parse a config, run solve -> estimate -> certify -> verify.

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 invariant tripwire.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import choose_lambda
from .config import (
    ConfigError,
    RunConfig,
    build_partition,
    build_problem,
    build_spaces,
    parse_config,
)
from .estimators import theta_indicator
from .problem import constants_for
from .reconstruct import lifting_kernel, reconstruct_slab
from .spatial import gauss01
from .timedg import DgSolution, solve_all
from .verify import certify, fitted_rate, theta_oracle_sq

EFFECTIVITY_CAP = 200.0


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, header: list, rows: list):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _indicator_rows(report) -> tuple[list, list]:
    bd = report.breakdown
    header = ["n", "t_n", "tau_n", "r_n", "theta_n", "int_space2", "int_eta2",
              "int_eta", "int_osc2", "int_ell2", "dim_V", "dim_Vplus", "dim_Vminus"]
    rows = []
    for j in range(bd.n_slabs):
        rows.append([j + 1, float(bd.nodes[j + 1]), float(bd.taus[j]),
                     int(bd.degrees[j]), float(bd.theta[j]), float(bd.space_l2t[j]),
                     float(bd.mesh_l2t[j]), float(bd.mesh_l1t[j]),
                     float(bd.osc_l2t[j]), float(bd.elliptic_l2t[j]),
                     int(bd.dims[j]), int(bd.dims_super[j]), int(bd.dims_sub[j])])
    return header, rows


def _bounds_rows(report) -> tuple[list, list]:
    l2x_terms = ["initial", "elliptic", "mesh_l1", "time", "space", "osc", "mesh_l2"]
    linf_terms = ["initial", "mesh_l1", "time", "space", "osc", "mesh_l2",
                  "linf_jump_max", "linf_elliptic_max"]
    header = (["n", "t_n", "lambda", "l2x_bound", "true_l2x", "eff_l2x",
               "linfh_bound", "true_linfh", "eff_linfh", "h1xdual_bound"]
              + [f"l2x_{t}" for t in l2x_terms] + [f"linf_{t}" for t in linf_terms])
    rows = []
    for row in report.rows:
        vals = [row.n, row.t_n, row.l2x_bound.lam, row.l2x_bound.value,
                row.true_l2x if row.true_l2x is not None else "",
                row.eff_l2x if row.eff_l2x is not None else "",
                row.linfh_bound.value,
                row.true_linfh if row.true_linfh is not None else "",
                row.eff_linfh if row.eff_linfh is not None else "",
                row.h1xdual_bound.value if row.h1xdual_bound is not None else ""]
        vals += [row.l2x_bound.terms[t] for t in l2x_terms]
        vals += [row.linfh_bound.terms[t] for t in linf_terms]
        rows.append(vals)
    return header, rows


def _run_once(cfg: RunConfig, lam, theta_mode: str):
    problem = build_problem(cfg)
    partition = build_partition(cfg)
    spaces = build_spaces(cfg, partition)
    sol = solve_all(problem, partition, spaces)
    mode = "super" if theta_mode == "both" else theta_mode
    report = certify(problem, sol, theta_mode=mode,
                     lam=None if lam == "auto" else float(lam), horizons="all")
    return problem, sol, report


def _theta_mode_rows(sol: DgSolution) -> tuple[list, list]:
    constants = constants_for(sol.problem)
    header = ["n", "theta_super", "theta_pf", "ratio_pf_over_super"]
    rows = []
    for n in range(1, sol.partition.n_slabs + 1):
        ts = theta_indicator(sol, constants, n, "super")
        tp = theta_indicator(sol, constants, n, "pf")
        rows.append([n, ts, tp, tp / ts if ts > 0 else math.inf])
    return header, rows


def _sweep_configs(cfg: RunConfig):
    """Yield (label, modified copy) per sweep point."""
    import copy
    if cfg.sweep_axis == "tau":
        for i in range(cfg.sweep_halvings + 1):
            c = copy.deepcopy(cfg)
            c.time_slabs = cfg.time_slabs * 2**i
            c.sweep_axis = None
            yield (f"tau/{2**i}", c)
    elif cfg.sweep_axis == "h":
        for i in range(cfg.sweep_halvings + 1):
            c = copy.deepcopy(cfg)
            c.space_exponent = cfg.space_exponent + i
            c.sweep_axis = None
            yield (f"h/{2**i}", c)
    else:
        for r in cfg.sweep_degrees:
            c = copy.deepcopy(cfg)
            c.time_degree = int(r)
            c.sweep_axis = None
            yield (f"r={r}", c)


def _run_sweep(cfg: RunConfig, out: Path, lam, theta_mode: str) -> list[str]:
    header = ["point", "tau_max", "h_min", "r_max", "theta_accum", "l2x_bound",
              "linfh_bound", "true_l2x", "true_linfh"]
    rows = []
    taus, errs, thetas = [], [], []
    for label, c in _sweep_configs(cfg):
        problem, sol, report = _run_once(c, lam, theta_mode)
        bd = report.breakdown
        final = report.final
        theta_acc = math.sqrt(float((bd.theta**2).sum()))
        rows.append([label, float(bd.taus.max()),
                     float(min(s.h.min() for s in sol.spaces)),
                     int(bd.degrees.max()), theta_acc, final.l2x_bound.value,
                     final.linfh_bound.value,
                     final.true_l2x if final.true_l2x is not None else "",
                     final.true_linfh if final.true_linfh is not None else ""])
        taus.append(float(bd.taus.max()))
        thetas.append(theta_acc)
        if final.true_l2x is not None:
            errs.append(final.true_l2x)
    _write_csv(out / "rates.csv", header, rows)
    notes = []
    if cfg.sweep_axis == "tau" and len(taus) > 1:
        notes.append(f"fitted temporal order (theta accumulation): "
                     f"{fitted_rate(taus, thetas):.3f}")
        if len(errs) == len(taus):
            notes.append(f"fitted temporal order (true L2X error): "
                         f"{fitted_rate(taus, errs):.3f}")
    return notes


# ---------------------------------------------------------------------------
# --check battery


def _check_battery(problem, sol: DgSolution, report) -> list[str]:
    """Named invariant checks; returns the list of failures."""
    failures = []
    constants = constants_for(problem)
    bd = report.breakdown
    rng = np.random.default_rng(0)

    for n in range(1, sol.partition.n_slabs + 1):
        res, scale = sol.galerkin_residual(n)
        if res > 1e-10 * scale:
            failures.append(f"galerkin_residual slab {n}: {res:.3e} > 1e-10*{scale:.3e}")

    for r in range(0, 7):
        kern = lifting_kernel(r)
        s, w = gauss01(r + 2)
        from .timedg import legendre_values
        resid = np.abs((legendre_values(s, r) * w) @ kern.kappa(s)
                       - legendre_values(0.0, r)[:, 0]).max()
        if resid > 1e-11:
            failures.append(f"lifting_riesz r={r}: residual {resid:.3e}")
        quad = float(np.dot(w, kern.kappa(s) ** 2))
        if abs(quad - (r + 1) ** 2) > 1e-10 * (r + 1) ** 2:
            failures.append(f"mesh_change_identity r={r}: {quad} != {(r+1)**2}")

    pieces = [sol.slab_poly(n) for n in range(1, sol.partition.n_slabs + 1)]
    prev = sol.left_limit(0)
    for n, piece in enumerate(pieces, start=1):
        hat = reconstruct_slab(piece, prev)
        cont = np.abs(hat.left_value()(np.linspace(0, 1, 17))
                      - prev(np.linspace(0, 1, 17))).max()
        if cont > 1e-10 * (1.0 + np.abs(prev.values).max()):
            failures.append(f"reconstruction_continuity slab {n}: {cont:.3e}")
        prev = piece.right_value()

    for row in report.rows:
        t_n = row.t_n
        if t_n >= 1.0:
            lam = choose_lambda(t_n)
            sl = slice(0, row.n)
            lhs = lam * float(bd.mesh_l1t[sl].sum()) ** 2
            rhs = float(bd.mesh_l2t[sl].sum())
            if lhs > rhs + 1e-12 * (1 + rhs):
                failures.append(f"lambda_tuning_inequality t={t_n}: {lhs:.3e} > {rhs:.3e}")

    final = report.final
    if final.true_l2x is not None and final.true_l2x > 1e-14:
        if final.l2x_bound.value < final.true_l2x * (1 - 1e-6):
            failures.append(f"l2x_reliability: bound {final.l2x_bound.value:.6e} "
                            f"< true {final.true_l2x:.6e}")
        if final.eff_l2x > EFFECTIVITY_CAP:
            failures.append(f"l2x_effectivity_cap: {final.eff_l2x:.1f} > {EFFECTIVITY_CAP}")
    if final.true_linfh is not None and final.true_linfh > 1e-14:
        if final.linfh_bound.value < final.true_linfh * (1 - 1e-6):
            failures.append(f"linfh_reliability: bound {final.linfh_bound.value:.6e} "
                            f"< true {final.true_linfh:.6e}")
        if final.eff_linfh > EFFECTIVITY_CAP:
            failures.append(f"linfh_effectivity_cap: {final.eff_linfh:.1f} > {EFFECTIVITY_CAP}")

    for n in (1, sol.partition.n_slabs):
        oracle = theta_oracle_sq(sol, n)
        for mode in ("super", "pf"):
            th = theta_indicator(sol, constants, n, mode) ** 2
            if oracle > th * (1 + 1e-9) + 1e-30:
                failures.append(f"theta_reliability slab {n} mode {mode}: "
                                f"oracle {oracle:.6e} > theta^2 {th:.6e}")
    return failures


# ---------------------------------------------------------------------------


def _summary_lines(cfg: RunConfig, report, theta_mode: str, notes: list[str]) -> list[str]:
    bd = report.breakdown
    final = report.final
    lines = [
        "dgcert run summary",
        "==================",
        f"problem: {cfg.problem_name} (T = {cfg.final_time}, "
        f"a in {cfg.coeff_values})",
        f"slabs: {bd.n_slabs}, degrees {list(map(int, bd.degrees))}, "
        f"max dim {int(bd.dims.max())}",
        f"theta mode: {theta_mode}",
        f"lambda at T: {final.lam:.17g}",
        "",
        f"L2(I;X)  bound: {final.l2x_bound.value:.10e}",
        f"LinfH    bound: {final.linfh_bound.value:.10e}",
    ]
    if final.h1xdual_bound is not None:
        lines.append(f"H1(I;X') bound: {final.h1xdual_bound.value:.10e} "
                     "(derived bound, Remark-based)")
    if final.true_l2x is not None:
        lines += [
            "",
            f"true L2(I;X) error: {final.true_l2x:.10e}   "
            f"effectivity: {final.eff_l2x:.3f}",
            f"true LinfH error:   {final.true_linfh:.10e}   "
            f"effectivity: {final.eff_linfh:.3f}",
        ]
    lines += [""] + notes
    return lines


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dgcert",
                                     description="dG-in-time parabolic solver with "
                                                 "certified a posteriori bounds")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a config: solve, estimate, certify, verify")
    runp.add_argument("config", help="TOML run configuration (see CONFIG.md)")
    runp.add_argument("--out", default=None, help="output directory")
    runp.add_argument("--theta-mode", choices=["super", "pf", "both"], default=None)
    runp.add_argument("--lambda", dest="lam", default=None,
                      help="'auto' (min(1,1/t_n)) or a fixed value in [0,1]")
    runp.add_argument("--check", action="store_true",
                      help="run the invariant battery; nonzero exit on any tripwire")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.theta_mode is not None:
            cfg.theta_mode = args.theta_mode
        if args.lam is not None:
            from .config import _parse_lambda
            cfg.lam = _parse_lambda(args.lam)
        if args.out is not None:
            cfg.out_dir = args.out
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        problem, sol, report = _run_once(cfg, cfg.lam, cfg.theta_mode)
        notes = []
        if cfg.sweep_axis is not None:
            notes = _run_sweep(cfg, out, cfg.lam, cfg.theta_mode)
    except (RuntimeError, np.linalg.LinAlgError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3

    header, rows = _indicator_rows(report)
    _write_csv(out / "indicators.csv", header, rows)
    header, rows = _bounds_rows(report)
    _write_csv(out / "bounds.csv", header, rows)
    if cfg.theta_mode == "both":
        header, rows = _theta_mode_rows(sol)
        _write_csv(out / "theta_modes.csv", header, rows)

    failures = _check_battery(problem, sol, report) if args.check else []
    status = ["check: FAIL"] + [f"  TRIPWIRE {f}" for f in failures] if failures \
        else (["check: ok"] if args.check else [])
    lines = _summary_lines(cfg, report, cfg.theta_mode, notes + status)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))

    if failures:
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
