"""Dictionary-regularized tomographic reconstruction.

The unknown is a non-negative coefficient tensor C (``s x q x r``) whose
t-product with the learned dictionary D gives the image patches:
``x = Perm vec(D * C)``.  The solver minimizes the composite objective

    0.5*||(A x - b)/sqrt(m)||^2 + 0.5*||w_bnd * L x||^2 + mu * phi_nu(C),
    C >= 0,

where L penalizes jumps across patch boundaries with weight
``w_bnd = delta / c`` and ``c = sqrt(2*(M*(M/p-1) + N*(N/r-1)))``, and the
prior is either plain sparsity, ``phi_1 = ||C||_sum / q``, or sparsity plus
low rank of the stacked ``sq x r`` matricization,
``phi_2 = (||C||_sum + ||C_mat||_*) / q``.

The smooth part is handled by accelerated proximal gradient with
backtracking and momentum restart; the non-smooth part enters through its
prox: a one-sided shrinkage for phi_1, and for phi_2 a Dykstra-like
alternation between the singular-value shrinkage and the one-sided
shrinkage, which converges to the prox of the sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .patch_image import (
    PatchGeometry,
    PermutationMap,
    assemble_image,
    boundary_diff_operator,
    build_permutation,
)
from .tensor_core import NumericalError, tprod, ttranspose, unvec, vec

__all__ = [
    "ReconProblem",
    "ReconConfig",
    "ReconDiagnostics",
    "build_recon_problem",
    "tensor_to_stacked",
    "stacked_to_tensor",
    "forward_map",
    "gradient",
    "prox_nonneg_l1",
    "prox_nuclear",
    "dykstra_prox",
    "prox_step",
    "reconstruct",
]


@dataclass(frozen=True)
class ReconProblem:
    A: sp.csr_matrix
    b: np.ndarray
    D: np.ndarray
    geom: PatchGeometry
    perm: PermutationMap
    L: sp.csr_matrix
    m: int
    c_const: float

    @property
    def s(self) -> int:
        return self.D.shape[1]


def build_recon_problem(
    A: sp.csr_matrix, b: np.ndarray, D: np.ndarray, geom: PatchGeometry
) -> ReconProblem:
    b = np.asarray(b, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if D.shape[0] != geom.p or D.shape[2] != geom.r:
        raise ValueError(f"dictionary {D.shape} does not match patches {geom.p}x{geom.r}")
    if A.shape[1] != geom.M * geom.N:
        raise ValueError(f"system matrix has {A.shape[1]} columns, image has {geom.M * geom.N} pixels")
    if b.size != A.shape[0]:
        raise ValueError(f"data length {b.size} != {A.shape[0]} measurements")
    den = geom.M * (geom.blocks_down - 1) + geom.N * (geom.blocks_across - 1)
    return ReconProblem(
        A=A,
        b=b,
        D=D,
        geom=geom,
        perm=build_permutation(geom),
        L=boundary_diff_operator(geom),
        m=A.shape[0],
        c_const=float(np.sqrt(2.0 * den)) if den > 0 else 0.0,
    )


@dataclass
class ReconConfig:
    mu: float | None = None
    tau: float | None = None  # overrides mu when given; tau = mu / q
    delta: float = 0.0
    nu: int = 1
    max_iter: int = 20000
    rel_change_tol: float = 1e-7
    dykstra_tol: float = 1e-3
    dykstra_max_iter: int = 200
    initial_step: float | None = None  # None: power-method estimate
    backtrack_shrink: float = 0.5
    power_iters: int = 10
    # "stacked": boundary weight delta/c inside the residual (default);
    # "penalty": weight delta*sqrt(2)/c, so the quadratic equals delta^2
    # times the mean squared boundary jump exactly.
    boundary_scaling: str = "stacked"

    def __post_init__(self):
        if self.nu not in (1, 2):
            raise ValueError(f"prior selector nu must be 1 or 2, got {self.nu}")
        if self.mu is None and self.tau is None:
            raise ValueError("one of mu or tau must be set")
        if (self.mu is not None and self.mu < 0) or (
            self.tau is not None and self.tau < 0
        ):
            raise ValueError("regularization weights must be >= 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.rel_change_tol <= 0 or self.dykstra_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.boundary_scaling not in ("stacked", "penalty"):
            raise ValueError(f"unknown boundary_scaling {self.boundary_scaling!r}")

    def resolved_tau(self, q: int) -> float:
        if self.tau is not None:
            return self.tau
        return self.mu / q


@dataclass
class ReconDiagnostics:
    converged: bool
    iterations: int
    prior: str
    objective_history: np.ndarray
    step_history: np.ndarray
    rel_change_history: np.ndarray
    smooth_history: np.ndarray | None = None
    restart_iterations: np.ndarray | None = None
    final_objective: float = 0.0
    notes: dict = field(default_factory=dict)


def _boundary_weight(problem: ReconProblem, cfg: ReconConfig) -> float:
    if cfg.delta == 0.0 or problem.c_const == 0.0:
        return 0.0
    w = cfg.delta / problem.c_const
    if cfg.boundary_scaling == "penalty":
        w *= np.sqrt(2.0)
    return w


def tensor_to_stacked(C: np.ndarray) -> np.ndarray:
    """Stack the squeezed lateral slices of an s x q x r tensor into the
    ``sq x r`` matrix (patch j occupies rows j*s..(j+1)*s)."""
    C = np.asarray(C, dtype=np.float64)
    s, q, r = C.shape
    return np.ascontiguousarray(C.transpose(1, 0, 2).reshape(q * s, r))


def stacked_to_tensor(Cmat: np.ndarray, s: int, q: int, r: int) -> np.ndarray:
    """Inverse of :func:`tensor_to_stacked`."""
    Cmat = np.asarray(Cmat, dtype=np.float64)
    if Cmat.shape != (s * q, r):
        raise ValueError(f"stacked matrix shape {Cmat.shape} != ({s * q}, {r})")
    return np.ascontiguousarray(Cmat.reshape(q, s, r).transpose(1, 0, 2))


def _image_vec(problem: ReconProblem, C: np.ndarray) -> np.ndarray:
    return problem.perm.apply(vec(tprod(problem.D, C)))


def forward_map(
    problem: ReconProblem, C: np.ndarray, cfg: ReconConfig
) -> tuple[np.ndarray, np.ndarray, float]:
    """Residuals of the smooth part at C.

    Returns ``r1 = (A z - b)/sqrt(m)`` and ``r2 = w_bnd * (L z)`` for
    ``z = Perm vec(D*C)``, plus the smooth objective
    ``0.5*(||r1||^2 + ||r2||^2)``.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (problem.s, problem.geom.q, problem.geom.r):
        raise ValueError(
            f"coefficient shape {C.shape} != ({problem.s}, {problem.geom.q}, {problem.geom.r})"
        )
    z = _image_vec(problem, C)
    r1 = (problem.A @ z - problem.b) / np.sqrt(problem.m)
    w = _boundary_weight(problem, cfg)
    r2 = w * (problem.L @ z) if w != 0.0 else np.zeros(problem.L.shape[0])
    fval = 0.5 * (float(r1 @ r1) + float(r2 @ r2))
    return r1, r2, fval


def _gradient_from_residuals(
    problem: ReconProblem, r1: np.ndarray, r2: np.ndarray, w: float
) -> np.ndarray:
    g_img = (problem.A.T @ r1) / np.sqrt(problem.m)
    if w != 0.0:
        g_img = g_img + w * (problem.L.T @ r2)
    g_tensor = unvec(
        problem.perm.apply_adjoint(g_img),
        (problem.geom.p, problem.geom.q, problem.geom.r),
    )
    return tprod(ttranspose(problem.D), g_tensor)


def gradient(problem: ReconProblem, C: np.ndarray, cfg: ReconConfig) -> np.ndarray:
    """Gradient of the smooth part at C (adjoint chain of forward_map)."""
    r1, r2, _ = forward_map(problem, C, cfg)
    return _gradient_from_residuals(problem, r1, r2, _boundary_weight(problem, cfg))


# ---------------------------------------------------------------------------
# proximal operators


def prox_nonneg_l1(X: np.ndarray, tau: float) -> np.ndarray:
    """One-sided shrinkage max(X - tau, 0): the prox of
    ``tau*||.||_1 + indicator(. >= 0)``."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return np.maximum(np.asarray(X, dtype=np.float64) - tau, 0.0)


def prox_nuclear(X: np.ndarray, tau: float) -> np.ndarray:
    """Singular value shrinkage: shift every singular value down by tau and
    clamp at zero."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    X = np.asarray(X, dtype=np.float64)
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed in singular value shrinkage: {exc}") from exc
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def dykstra_prox(
    Z: np.ndarray,
    tau: float,
    tol: float = 1e-3,
    max_iter: int = 200,
    diagnostics: dict | None = None,
    nuclear_tau: float | None = None,
) -> np.ndarray:
    """Prox of ``tau*||.||_* + tau*||.||_1 + indicator(. >= 0)`` at Z by
    Dykstra-like alternation of the two individual proxes.

    Iterates ``Y_k = prox_nuc(X_k + P_k)``, ``X_{k+1} = prox_l1+(Y_k + Q_k)``
    with the usual increment corrections, starting from X_1 = Z, and stops
    when ``||Y_k - X_{k+1}||_F < tol``.  Hitting max_iter returns the
    current iterate and reports non-convergence through ``diagnostics``.
    ``nuclear_tau`` decouples the singular-value threshold from the
    elementwise one (with 0 the alternation collapses to the one-sided
    shrinkage alone).
    """
    X = np.asarray(Z, dtype=np.float64).copy()
    P = np.zeros_like(X)
    Q = np.zeros_like(X)
    tau_nuc = tau if nuclear_tau is None else nuclear_tau
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # prox of the zero function is the identity; skip the SVD round trip
        Y = (X + P) if tau_nuc == 0.0 else prox_nuclear(X + P, tau_nuc)
        P = X + P - Y
        X_new = prox_nonneg_l1(Y + Q, tau)
        Q = Y + Q - X_new
        X = X_new
        if float(np.linalg.norm(Y - X_new)) < tol:
            converged = True
            break
    if diagnostics is not None:
        diagnostics["converged"] = converged
        diagnostics["iterations"] = it
    return X


def prox_step(
    C: np.ndarray, tau: float, nu: int, step: float, cfg: ReconConfig | None = None
) -> np.ndarray:
    """Apply the prior's prox with threshold ``step * tau`` to a coefficient
    tensor: one-sided shrinkage for nu=1; for nu=2, shrink the stacked
    matricization through :func:`dykstra_prox` and unstack."""
    if step <= 0:
        raise ValueError("step must be > 0")
    C = np.asarray(C, dtype=np.float64)
    if nu == 1:
        return prox_nonneg_l1(C, step * tau)
    if nu == 2:
        s, q, r = C.shape
        tol = cfg.dykstra_tol if cfg is not None else 1e-3
        max_iter = cfg.dykstra_max_iter if cfg is not None else 200
        X = dykstra_prox(tensor_to_stacked(C), step * tau, tol=tol, max_iter=max_iter)
        return stacked_to_tensor(X, s, q, r)
    raise ValueError(f"prior selector nu must be 1 or 2, got {nu}")


def _prior_value(C: np.ndarray, tau: float, nu: int) -> float:
    # mu*phi_nu(C) expressed through tau = mu/q
    v = tau * float(np.sum(np.abs(C)))
    if nu == 2:
        s = np.linalg.svd(tensor_to_stacked(C), compute_uv=False)
        v += tau * float(np.sum(s))
    return v


def _estimate_sq_opnorm(problem: ReconProblem, cfg: ReconConfig) -> float:
    """Power-method estimate of the squared operator norm of
    C -> (A z/sqrt(m), w*L z), used for the initial step size."""
    w = _boundary_weight(problem, cfg)
    shape = (problem.s, problem.geom.q, problem.geom.r)
    V = np.ones(shape)
    V /= np.linalg.norm(V)
    lam = 1.0
    for _ in range(cfg.power_iters):
        z = _image_vec(problem, V)
        r1 = (problem.A @ z) / np.sqrt(problem.m)
        r2 = w * (problem.L @ z) if w != 0.0 else np.zeros(problem.L.shape[0])
        W = _gradient_from_residuals(problem, r1, r2, w)
        lam = float(np.linalg.norm(W))
        if lam == 0.0:
            return 0.0
        V = W / lam
    return lam


def reconstruct(
    problem: ReconProblem, cfg: ReconConfig
) -> tuple[np.ndarray, np.ndarray, ReconDiagnostics]:
    """Accelerated proximal gradient from C = 0 with backtracking and
    momentum restart on objective increase.

    Stops when ``||C_{k+1} - C_k||_F / max(1, ||C_k||_F)`` drops below
    ``cfg.rel_change_tol`` (or at max_iter, reported through the
    diagnostics).  Returns the image assembled from ``D * C``, the
    coefficient tensor, and diagnostics.
    """
    geom = problem.geom
    tau = cfg.resolved_tau(geom.q)
    shape = (problem.s, geom.q, geom.r)

    if cfg.initial_step is not None:
        step = cfg.initial_step
    else:
        lip = _estimate_sq_opnorm(problem, cfg)
        step = 1.0 if lip == 0.0 else 1.0 / lip

    C = np.zeros(shape)
    Cy = C.copy()
    t_mom = 1.0
    _, _, f_prev = forward_map(problem, C, cfg)
    obj_prev = f_prev + _prior_value(C, tau, cfg.nu)
    obj_hist, step_hist, change_hist, smooth_hist = [], [], [], []
    restarts = []
    converged = False

    for _ in range(cfg.max_iter):
        r1, r2, f_y = forward_map(problem, Cy, cfg)
        g = _gradient_from_residuals(problem, r1, r2, _boundary_weight(problem, cfg))
        while True:
            C_new = prox_step(Cy - step * g, tau, cfg.nu, step, cfg)
            diff = C_new - Cy
            _, _, f_new = forward_map(problem, C_new, cfg)
            quad = f_y + float(np.sum(g * diff)) + float(np.sum(diff * diff)) / (
                2.0 * step
            )
            if f_new <= quad + 1e-12 * max(1.0, abs(quad)):
                break
            step *= cfg.backtrack_shrink
            if step < 1e-16:
                break

        obj_new = f_new + _prior_value(C_new, tau, cfg.nu)
        if obj_new > obj_prev or f_new > f_prev:
            # restart momentum at the new point
            t_mom = 1.0
            Cy = C_new.copy()
            restarts.append(len(obj_hist))
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            Cy = C_new + ((t_mom - 1.0) / t_next) * (C_new - C)
            t_mom = t_next

        rel_change = float(np.linalg.norm(C_new - C)) / max(
            1.0, float(np.linalg.norm(C))
        )
        obj_hist.append(obj_new)
        step_hist.append(step)
        change_hist.append(rel_change)
        smooth_hist.append(f_new)
        C = C_new
        obj_prev = obj_new
        f_prev = f_new
        if rel_change < cfg.rel_change_tol:
            converged = True
            break

    x = assemble_image(tprod(problem.D, C), geom)
    diag = ReconDiagnostics(
        converged=converged,
        iterations=len(obj_hist),
        prior="sparsity" if cfg.nu == 1 else "sparsity+lowrank",
        objective_history=np.asarray(obj_hist),
        step_history=np.asarray(step_hist),
        rel_change_history=np.asarray(change_hist),
        smooth_history=np.asarray(smooth_hist),
        restart_iterations=np.asarray(restarts, dtype=np.int64),
        final_objective=obj_prev,
    )
    return x, C, diag
