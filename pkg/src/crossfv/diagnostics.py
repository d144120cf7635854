"""Discrete entropies, production terms and per-step structural checks.

All reductions run in a fixed lexicographic cell/edge order so repeated
runs produce bit-identical diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import UsageError
from .kernels import DiscreteKernel, potential_implicit, potential_midpoint
from .weights import eval_B_kappa

if TYPE_CHECKING:
    from .scheme import SchemeConfig, State


@dataclass
class ProductionTerms:
    p_b: float
    p_r: float
    cross: float
    fisher: float


@dataclass
class Verdict:
    passed: bool
    slack: float
    gated: bool  # asserted (True) vs merely reported (False)


@dataclass
class StepReport:
    """Per-step diagnostics; entropy fields are NaN when not computed."""

    step: int
    time: float
    masses: np.ndarray
    picard_iters: int
    picard_errors: list
    linear_residual: float
    clamped: int
    min_density: float
    h_boltzmann: float = np.nan
    h_rao: float = np.nan
    fisher: float = np.nan
    p_b: float = np.nan
    p_r: float = np.nan
    cross: float = np.nan
    verdicts: dict | None = None


def entropy_boltzmann(state: "State") -> float:
    """sum_i sum_K m(K) u (log u - 1); requires strictly positive cells."""
    u = state.u
    if np.any(u <= 0):
        raise UsageError("Boltzmann entropy requires strictly positive densities")
    return float(state.mesh.cell_measure * np.sum(u * (np.log(u) - 1.0)))


def entropy_rao(state: "State", kernel: DiscreteKernel) -> float:
    """(1/2) sum_ij sum_KJ m(K) m(J) W_KJ^{ij} u_i,K u_j,J via convolution."""
    pots = potential_implicit(kernel, state.u)
    return float(0.5 * state.mesh.cell_measure * np.sum(state.u * pots))


def fisher_information(u: np.ndarray, mesh) -> float:
    """sum_i sum_sigma tau_sigma |D_sigma sqrt(u)|^2."""
    root = np.sqrt(u)
    total = 0.0
    for axis in range(mesh.dim):
        diff = np.roll(root, -1, axis=axis + 1) - root
        total += mesh.tau(axis) * float(np.sum(diff * diff))
    return total


def productions(state: "State", p: np.ndarray, cfg: "SchemeConfig") -> ProductionTerms:
    """Entropy production terms of one step evaluated at (u, p).

    The Boltzmann production carries one factor of the scaled weight:
    P_B = 4 sum tau B_kappa(|Dp|) |D sqrt(u)|^2, which is the quantity the
    entropy and Fisher inequalities are stated in.
    """
    u = state.u
    if np.any(u <= 0):
        raise UsageError("production terms require strictly positive densities")
    mesh = state.mesh
    root = np.sqrt(u)
    p_b = p_r = cross = fisher = 0.0
    for axis in range(mesh.dim):
        tau = mesh.tau(axis)
        ax = axis + 1
        du = np.roll(u, -1, axis=ax) - u
        dp = np.roll(p, -1, axis=ax) - p
        droot = np.roll(root, -1, axis=ax) - root
        upwind = np.where(dp >= 0, np.roll(u, -1, axis=ax), u)
        bk = eval_B_kappa(cfg.weight, cfg.kappa, np.abs(dp))
        p_b += 4.0 * tau * float(np.sum(bk * droot * droot))
        p_r += tau * float(np.sum(upwind * dp * dp))
        cross += tau * float(np.sum(dp * du))
        fisher += tau * float(np.sum(droot * droot))
    return ProductionTerms(p_b=p_b, p_r=p_r, cross=cross, fisher=fisher)


def coupling_potential(
    kernel: DiscreteKernel, curr: np.ndarray, prev: np.ndarray, cfg: "SchemeConfig"
) -> np.ndarray:
    from .scheme import Coupling

    if cfg.coupling is Coupling.IMPLICIT:
        return potential_implicit(kernel, curr)
    return potential_midpoint(kernel, curr, prev)


def tolerance_scale(cfg: "SchemeConfig", h_b: float, h_r: float) -> float:
    """First-order propagation of solver truncation into entropy differences."""
    base = cfg.picard_tol / cfg.dt + cfg.linear.rel_tol
    return 100.0 * base * max(1.0, abs(h_b), abs(h_r))


def verify_step(
    prev: "State",
    curr: "State",
    kernel: DiscreteKernel,
    cfg: "SchemeConfig",
    psd_ok: bool | None = None,
) -> dict:
    """Slack of the per-step entropy and Fisher-information inequalities.

    Inequalities are evaluated as LHS <= RHS + tol_scale and the recorded
    slack is (RHS + tol_scale) - LHS, so nonnegative slack means pass.
    The Rao check is only gating for mid-point coupling or a positively
    verified kernel; the other two hold for every built-in weight.
    """
    from .scheme import Coupling

    if np.any(prev.u <= 0) or np.any(curr.u <= 0):
        raise UsageError("verification requires strictly positive states")
    p = coupling_potential(kernel, curr.u, prev.u, cfg)
    terms = productions(curr, p, cfg)
    h_b_prev = entropy_boltzmann(prev)
    h_b_curr = entropy_boltzmann(curr)
    h_r_prev = entropy_rao(prev, kernel)
    h_r_curr = entropy_rao(curr, kernel)
    tol = tolerance_scale(cfg, h_b_curr, h_r_curr)
    alpha = cfg.weight.alpha
    kappa = cfg.kappa

    slack_hb = (-terms.cross + tol) - ((h_b_curr - h_b_prev) / cfg.dt + terms.p_b)
    slack_hr = (-kappa * terms.cross + tol) - (
        (h_r_curr - h_r_prev) / cfg.dt + (1.0 - alpha) * terms.p_r
    )
    slack_fisher = (
        0.25 * terms.p_b + (alpha / kappa) * terms.p_r - alpha * terms.cross + tol
    ) - kappa * (1.0 - alpha) * terms.fisher

    gate_rao = cfg.coupling is Coupling.MIDPOINT or bool(psd_ok)
    return {
        "boltzmann": Verdict(passed=bool(slack_hb >= 0), slack=slack_hb, gated=True),
        "rao": Verdict(passed=bool(slack_hr >= 0), slack=slack_hr, gated=gate_rao),
        "fisher": Verdict(passed=bool(slack_fisher >= 0), slack=slack_fisher, gated=True),
    }


def build_report(
    prev: "State",
    curr: "State",
    kernel: DiscreteKernel,
    cfg: "SchemeConfig",
    picard_iters: int,
    picard_errors: list,
    linear_residual: float,
    clamped: int,
    psd_ok: bool | None,
    full: bool,
) -> StepReport:
    report = StepReport(
        step=curr.k,
        time=curr.k * cfg.dt,
        masses=curr.masses(),
        picard_iters=picard_iters,
        picard_errors=list(picard_errors),
        linear_residual=linear_residual,
        clamped=clamped,
        min_density=float(curr.u.min()),
    )
    if full:
        p = coupling_potential(kernel, curr.u, prev.u, cfg)
        terms = productions(curr, p, cfg)
        report.h_boltzmann = entropy_boltzmann(curr)
        report.h_rao = entropy_rao(curr, kernel)
        report.fisher = terms.fisher
        report.p_b = terms.p_b
        report.p_r = terms.p_r
        report.cross = terms.cross
        report.verdicts = verify_step(prev, curr, kernel, cfg, psd_ok)
    return report


def report_csv_header(n_species: int) -> str:
    cols = ["step", "time"]
    cols += [f"mass_{i + 1}" for i in range(n_species)]
    cols += ["H_B", "H_R", "fisher", "P_B", "P_R", "X", "picard_iters"]
    cols += ["slack_HB", "slack_HR", "slack_fisher", "verdicts"]
    return ",".join(cols)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def report_csv_row(report: StepReport) -> str:
    cells = [str(report.step), _fmt(report.time)]
    cells += [_fmt(m) for m in report.masses]
    cells += [
        _fmt(report.h_boltzmann),
        _fmt(report.h_rao),
        _fmt(report.fisher),
        _fmt(report.p_b),
        _fmt(report.p_r),
        _fmt(report.cross),
        str(report.picard_iters),
    ]
    if report.verdicts is None:
        cells += ["nan", "nan", "nan", ""]
    else:
        v = report.verdicts
        cells += [
            _fmt(v["boltzmann"].slack),
            _fmt(v["rao"].slack),
            _fmt(v["fisher"].slack),
            ";".join(
                f"{name}:{'pass' if verdict.passed else 'FAIL'}"
                for name, verdict in v.items()
            ),
        ]
    return ",".join(cells)
