"""Implicit Euler finite-volume scheme with the generalized upwind flux.

Each time step freezes the nonlocal potential, solves one decoupled linear
transport system per species (an M-matrix solve that preserves positivity
and mass exactly up to the linear tolerance) and iterates the potential to
a fixed point.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .errors import ConfigurationError, NumericalStateError, StepFailure, UsageError
from .kernels import DiscreteKernel, potential_implicit, potential_midpoint
from .mesh import EdgeId, Mesh, edge_cells
from .weights import WeightKind, eval_B_kappa

_TINY = float(np.finfo(float).tiny)


class Coupling(str, enum.Enum):
    IMPLICIT = "implicit"
    MIDPOINT = "midpoint"


@dataclass
class LinearSolverConfig:
    method: str = "bicgstab"  # 'bicgstab' | 'gauss_seidel'
    rel_tol: float = 1e-12
    max_iter: int = 10000

    def __post_init__(self):
        if self.method not in ("bicgstab", "gauss_seidel"):
            raise ConfigurationError(f"unknown linear solver {self.method}")
        if self.rel_tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("linear solver tolerances must be positive")


@dataclass
class SchemeConfig:
    kappa: float
    dt: float
    t_end: float
    weight: WeightKind = WeightKind.BERNOULLI
    coupling: Coupling = Coupling.IMPLICIT
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    linear: LinearSolverConfig = dc_field(default_factory=LinearSolverConfig)

    def __post_init__(self):
        self.weight = WeightKind(self.weight)
        self.coupling = Coupling(self.coupling)
        if self.kappa <= 0:
            raise ConfigurationError(f"diffusion coefficient must be positive, got {self.kappa}")
        if self.dt <= 0 or self.t_end < 0:
            raise ConfigurationError("time step and end time must be positive")
        if self.picard_tol <= 0 or self.picard_max_iter < 1:
            raise ConfigurationError("Picard tolerances must be positive")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if n > 10**7:
            raise ConfigurationError(f"step budget exceeded: {n} steps")
        return n


@dataclass
class State:
    """Per-species cell averages at one time level, with optional potentials."""

    k: int
    u: np.ndarray  # (n_species, *mesh.shape)
    mesh: Mesh
    p: np.ndarray | None = None

    @property
    def n_species(self) -> int:
        return self.u.shape[0]

    def masses(self) -> np.ndarray:
        return self.mesh.cell_measure * self.u.reshape(self.n_species, -1).sum(axis=1)


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: Mesh


@dataclass
class SolveInfo:
    residual: float
    iterations: int
    clamped: int


def axis_difference(values: np.ndarray, axis: int) -> np.ndarray:
    """Owner-side difference to the +axis neighbor, D_K = v_{K+e} - v_K."""
    return np.roll(values, -1, axis=axis) - values


def edge_flux(mesh: Mesh, u: np.ndarray, p: np.ndarray, edge: EdgeId, cfg: SchemeConfig) -> float:
    """Numerical flux through one edge, seen from the owner cell.

    F = -tau * (B_kappa(|Dp|) * Du + u_upwind * Dp) where the upwind value
    takes the neighbor cell when Dp >= 0 (the drift term vanishes at the
    tie, so the flux is continuous there). The flux seen from the neighbor
    is exactly the negation.
    """
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
        raise NumericalStateError("edge flux requires finite densities and potentials")
    cell_k, cell_l = edge_cells(mesh, edge)
    axis = edge.axis - 1
    du = u[cell_l] - u[cell_k]
    dp = p[cell_l] - p[cell_k]
    upwind = u[cell_l] if dp >= 0 else u[cell_k]
    tau = mesh.tau(axis)
    return float(-tau * (eval_B_kappa(cfg.weight, cfg.kappa, abs(dp)) * du + upwind * dp))


def axis_fluxes(mesh: Mesh, u: np.ndarray, p: np.ndarray, cfg: SchemeConfig) -> list:
    """Owner-side fluxes for all edges, one array per axis."""
    out = []
    for axis in range(mesh.dim):
        du = axis_difference(u, axis)
        dp = axis_difference(p, axis)
        upwind = np.where(dp >= 0, np.roll(u, -1, axis=axis), u)
        bk = eval_B_kappa(cfg.weight, cfg.kappa, np.abs(dp))
        out.append(-mesh.tau(axis) * (bk * du + upwind * dp))
    return out


def flux_divergence(mesh: Mesh, fluxes: list) -> np.ndarray:
    """sum over edges of K of F_{K,sigma} (the +axis flux minus its shift)."""
    div = np.zeros(mesh.shape)
    for axis, f in enumerate(fluxes):
        div += f - np.roll(f, 1, axis=axis)
    return div


def scheme_residual(
    mesh: Mesh, u_prev: np.ndarray, u_curr: np.ndarray, p: np.ndarray, cfg: SchemeConfig
) -> np.ndarray:
    """Per-cell residual of the implicit Euler balance for each species."""
    res = np.empty_like(u_curr)
    for i in range(u_curr.shape[0]):
        fluxes = axis_fluxes(mesh, u_curr[i], p[i], cfg)
        res[i] = mesh.cell_measure * (u_curr[i] - u_prev[i]) / cfg.dt + flux_divergence(
            mesh, fluxes
        )
    return res


@functools.lru_cache(maxsize=32)
def _stencil_structure(mesh: Mesh):
    """Fixed CSR structure of the (2d+1)-point periodic stencil.

    Returns (indices, indptr, order) where order gathers the per-slot data
    layout (diag, +axis, -axis per axis; shape (n_slots, N)) into CSR order.
    Falls back to None when wraparound makes stencil columns collide
    (some axis has fewer than 3 cells), in which case COO assembly with
    duplicate summation is used.
    """
    if any(m < 3 for m in mesh.shape):
        return None
    n = mesh.n_cells
    d = mesh.dim
    idx = np.arange(n).reshape(mesh.shape)
    cols = [idx.ravel()]
    for axis in range(d):
        cols.append(np.roll(idx, -1, axis=axis).ravel())
        cols.append(np.roll(idx, 1, axis=axis).ravel())
    cols = np.stack(cols, axis=0)  # (n_slots, N)
    order = np.argsort(cols, axis=0, kind="stable")  # per-row slot order by column
    indices = np.take_along_axis(cols, order, axis=0).T.ravel()
    indptr = np.arange(n + 1) * (2 * d + 1)
    return indices, indptr, order


def assemble(u_prev_i: np.ndarray, p_i: np.ndarray, cfg: SchemeConfig, mesh: Mesh) -> LinearSystem:
    """Per-species transport matrix A(p) and right-hand side S(u_prev).

    A has positive diagonal, nonpositive off-diagonal entries and exact
    column sums m(K)/dt, which is what makes the solve mass-conservative
    and inverse-positive.
    """
    u_prev_i = np.asarray(u_prev_i, dtype=float)
    p_i = np.asarray(p_i, dtype=float)
    if u_prev_i.shape != mesh.shape or p_i.shape != mesh.shape:
        raise UsageError("field shapes must match the mesh")
    if np.any(u_prev_i < 0) or not np.any(u_prev_i > 0):
        raise ConfigurationError(
            "previous density must be nonnegative with at least one positive cell"
        )
    if not np.all(np.isfinite(p_i)):
        raise NumericalStateError("potential must be finite")

    n = mesh.n_cells
    d = mesh.dim
    m_over_dt = mesh.cell_measure / cfg.dt

    diag = np.full(mesh.shape, m_over_dt)
    slots = [None] * (2 * d + 1)
    for axis in range(d):
        dp = axis_difference(p_i, axis)
        bk = eval_B_kappa(cfg.weight, cfg.kappa, np.abs(dp))
        tau = mesh.tau(axis)
        g_plus = tau * (bk + np.maximum(dp, 0.0))
        g_minus = tau * (bk + np.maximum(-dp, 0.0))
        diag += g_minus + np.roll(g_plus, 1, axis=axis)
        slots[1 + 2 * axis] = -g_plus
        slots[2 + 2 * axis] = -np.roll(g_minus, 1, axis=axis)
    slots[0] = diag

    data = np.stack([s.ravel() for s in slots], axis=0)  # (n_slots, N)
    structure = _stencil_structure(mesh)
    if structure is None:
        idx = np.arange(n).reshape(mesh.shape)
        cols = [idx.ravel()]
        for axis in range(d):
            cols.append(np.roll(idx, -1, axis=axis).ravel())
            cols.append(np.roll(idx, 1, axis=axis).ravel())
        rows = np.tile(np.arange(n), 2 * d + 1)
        matrix = sp.coo_matrix(
            (data.ravel(), (rows, np.concatenate(cols))), shape=(n, n)
        ).tocsr()
    else:
        indices, indptr, order = structure
        csr_data = np.take_along_axis(data, order, axis=0).T.ravel()
        matrix = sp.csr_matrix((csr_data, indices, indptr), shape=(n, n))
    rhs = m_over_dt * u_prev_i.ravel()
    return LinearSystem(matrix=matrix, rhs=rhs, mesh=mesh)


def solve_linear(
    system: LinearSystem, cfg: SchemeConfig, x0: np.ndarray | None = None
) -> tuple:
    """Solve A u = S to ||residual||_inf <= rel_tol * ||S||_inf, positively.

    The exact solution is strictly positive (inverse-positive M-matrix);
    entries driven negative or to zero by roundoff within 1e-15 * max(u)
    are clamped to the smallest positive normal float and counted. Larger
    undershoots trigger a positivity-preserving Jacobi polish.
    """
    target = cfg.linear.rel_tol * max(float(np.abs(system.rhs).max()), _TINY)
    solver = linsolve.bicgstab if cfg.linear.method == "bicgstab" else linsolve.gauss_seidel
    x, history = solver(system.matrix, system.rhs, x0, target, cfg.linear.max_iter)

    scale = max(float(x.max()), _TINY)
    window = 1e-15 * scale
    if np.any(x < -window):
        x, polish_hist = linsolve.jacobi_positive_polish(
            system.matrix, system.rhs, x, target
        )
        history = history + polish_hist
        scale = max(float(x.max()), _TINY)
        window = 1e-15 * scale
        if np.any(x < -window):
            raise NumericalStateError(
                "linear solve produced negative densities beyond roundoff"
            )
    nonpos = x <= 0.0
    clamped = int(np.count_nonzero(nonpos))
    if clamped:
        x = np.where(nonpos, _TINY, x)
    info = SolveInfo(residual=history[-1], iterations=len(history) - 1, clamped=clamped)
    return x.reshape(system.mesh.shape), info


def _coupling_potential(
    kernel: DiscreteKernel, u_iter: np.ndarray, u_prev: np.ndarray, coupling: Coupling
) -> np.ndarray:
    if coupling is Coupling.IMPLICIT:
        return potential_implicit(kernel, u_iter)
    return potential_midpoint(kernel, u_iter, u_prev)


def advance(
    state: State,
    kernel: DiscreteKernel,
    cfg: SchemeConfig,
    psd_ok: bool | None = None,
    compute_diagnostics: bool = True,
):
    """One implicit Euler step via Picard iteration on the potential.

    Each sweep rebuilds the potential from the latest iterate (implicit
    coupling) or from its average with the previous time level (mid-point),
    solves the n decoupled linear systems and carries the new iterate
    forward; the step is accepted once consecutive iterates agree in the
    max norm. Returns the new state and its step report.
    """
    from . import diagnostics  # local import to keep module deps acyclic

    mesh = state.mesh
    u_prev = state.u
    u_iter = u_prev.copy()
    n = state.n_species
    errors = []
    residual = 0.0
    iterations = 0
    clamped = 0
    converged = False
    for _ in range(cfg.picard_max_iter):
        p = _coupling_potential(kernel, u_iter, u_prev, cfg.coupling)
        u_new = np.empty_like(u_iter)
        for i in range(n):
            system = assemble(u_prev[i], p[i], cfg, mesh)
            u_new[i], info = solve_linear(system, cfg, x0=u_iter[i].ravel())
            residual = max(residual, info.residual)
            iterations += info.iterations
            clamped += info.clamped
        err = float(np.abs(u_new - u_iter).max())
        errors.append(err)
        u_iter = u_new
        if err <= cfg.picard_tol:
            converged = True
            break
    if not converged:
        raise StepFailure(
            f"Picard iteration did not converge within {cfg.picard_max_iter} "
            f"sweeps (last error {errors[-1]:.3e}, tol {cfg.picard_tol:.3e})",
            error_history=errors,
        )
    new_state = State(k=state.k + 1, u=u_iter, mesh=mesh, p=None)
    new_state.p = _coupling_potential(kernel, u_iter, u_prev, cfg.coupling)
    report = diagnostics.build_report(
        prev=state,
        curr=new_state,
        kernel=kernel,
        cfg=cfg,
        picard_iters=len(errors),
        picard_errors=errors,
        linear_residual=residual,
        clamped=clamped,
        psd_ok=psd_ok,
        full=compute_diagnostics,
    )
    return new_state, report


@dataclass
class RunSummary:
    final_state: State
    reports: list
    initial_masses: np.ndarray
    max_mass_drift: float
    min_density: float
    n_steps: int


def run(
    cfg: SchemeConfig,
    initial: State,
    kernel: DiscreteKernel,
    observers: tuple = (),
    diagnostics_every: int = 1,
    psd_ok: bool | None = None,
) -> RunSummary:
    """Advance N = round(t_end/dt) steps, invoking observers per step."""
    n_steps = cfg.n_steps
    state = initial
    reports = []
    masses0 = initial.masses()
    mass_scale = np.maximum(np.abs(masses0), _TINY)
    max_drift = 0.0
    min_density = float(initial.u.min()) if initial.u.size else np.inf
    for k in range(1, n_steps + 1):
        full = diagnostics_every > 0 and (k % diagnostics_every == 0 or k == n_steps)
        try:
            state, report = advance(state, kernel, cfg, psd_ok, compute_diagnostics=full)
        except StepFailure as exc:
            raise StepFailure(
                f"step {k}/{n_steps} failed: {exc}", step_index=k,
                error_history=exc.error_history,
            ) from exc
        drift = float(np.max(np.abs(state.masses() - masses0) / mass_scale))
        max_drift = max(max_drift, drift)
        min_density = min(min_density, float(state.u.min()))
        reports.append(report)
        for obs in observers:
            obs(state, report)
    return RunSummary(
        final_state=state,
        reports=reports,
        initial_masses=masses0,
        max_mass_drift=max_drift,
        min_density=min_density,
        n_steps=n_steps,
    )
