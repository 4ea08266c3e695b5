"""Non-negative sparse tensor factorization of patch data by ADMM.

Given a non-negative ``p x t x r`` tensor Y of training patches, find a
dictionary D (``p x s x r``) and coefficients H (``s x t x r``) minimizing

    0.5 * ||Y - D * H||_F^2 + lam * ||H||_sum

subject to H >= 0 and D in the feasible set

    D_set = { D >= 0 : ||D[:, i, :]||_F <= sqrt(p*r) for every atom i },

where ``*`` is the t-product.  The splitting introduces copies U = D,
V = H with multiplier tensors Lam, LamBar and quadratic penalty rho; one
sweep updates, in order,

    D <- P_Dset(U - Lam/rho)                                (projection)
    V <- (U^T*U + rho*I)^{-1} * (U^T*Y + LamBar + rho*H)    (SPD solve)
    H <- clamp_+( softthresh(V - LamBar/rho, lam/rho) )
    U <- (Y*V^T + Lam + rho*D) * (V*V^T + rho*I)^{-1}       (SPD solve)
    Lam    <- Lam    + rho*(D - U)
    LamBar <- LamBar + rho*(H - V)

reading earlier variables at their most recent values.  Both solves run per
Fourier slice (the tube-dimension transpose becomes the conjugate transpose
there).  Iteration stops when four stationarity residuals, each a max-norm
normalized by max(1, ||.||_max) of the reference quantity, drop below tol:

    ||D - U||,  ||H - V||,
    ||LamBar - D^T*(D*H - Y)||,  ||Lam - (D*H - Y)*H^T||.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import identity_tensor, tprod, tsolve_spd, ttranspose

__all__ = [
    "DictLearnConfig",
    "DictLearnState",
    "DictLearnResult",
    "project_onto_feasible",
    "soft_threshold",
    "admm_step",
    "kkt_residuals",
    "learn_dictionary",
    "nnls_tpatch",
    "mean_approx_error",
]


@dataclass
class DictLearnConfig:
    """Solver knobs: ``s`` dictionary atoms, sparsity weight ``lam``,
    quadratic penalty ``rho``, stopping tolerance ``eps`` on the four
    stationarity residuals, and the Dykstra projection limits.  ``seed``
    drives the initial selection of training patches."""

    s: int
    lam: float = 0.1
    rho: float = 1.0
    eps: float = 1e-4
    max_iter: int = 1000
    dykstra_max_iter: int = 100
    dykstra_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("dictionary size s must be >= 1")
        if self.lam < 0:
            raise ValueError("sparsity weight lam must be >= 0")
        if self.rho <= 0:
            raise ValueError("penalty rho must be > 0")
        if self.eps <= 0:
            raise ValueError("stopping tolerance eps must be > 0")


@dataclass
class DictLearnState:
    D: np.ndarray
    H: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Lam: np.ndarray
    LamBar: np.ndarray
    iteration: int = 0


@dataclass
class DictLearnResult:
    D: np.ndarray
    H: np.ndarray
    iterations: int
    converged: bool
    kkt_history: np.ndarray  # (iterations, 4)
    objective_history: np.ndarray  # (iterations,)
    diagnostics: dict = field(default_factory=dict)


def _slice_radius(shape) -> float:
    p, _, r = shape
    return float(np.sqrt(p * r))


def project_onto_feasible(
    T: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-10,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Metric projection onto the dictionary set by Dykstra's alternating
    projections.

    Alternates the projection onto the product of per-atom Frobenius balls
    of radius sqrt(p*r) (radial rescale of any over-norm lateral slice) with
    the projection onto the non-negative orthant (clamp at zero), carrying
    the Dykstra increments so the limit is the true metric projection onto
    the intersection.  The clamp comes second, so the returned tensor is
    exactly non-negative and its slice norms exceed the radius by at most
    the stopping tolerance.  Stops when successive iterates differ by less
    than ``tol`` in Frobenius norm.
    """
    T = np.asarray(T, dtype=np.float64)
    radius = _slice_radius(T.shape)
    x = T.copy()
    p_inc = np.zeros_like(x)
    q_inc = np.zeros_like(x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = x + p_inc
        y = w.copy()
        slice_norms = np.sqrt(np.sum(w * w, axis=(0, 2)))
        over = slice_norms > radius
        if np.any(over):
            y[:, over, :] *= (radius / slice_norms[over])[None, :, None]
        p_inc = w - y
        x_new = np.maximum(y + q_inc, 0.0)
        q_inc = y + q_inc - x_new
        delta = float(np.linalg.norm(x_new - x))
        x = x_new
        if delta < tol:
            converged = True
            break
    if diagnostics is not None:
        diagnostics["converged"] = converged
        diagnostics["iterations"] = it
    return x


def soft_threshold(T: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise sign(a) * max(|a| - tau, 0)."""
    if tau < 0:
        raise ValueError("soft threshold requires tau >= 0")
    T = np.asarray(T, dtype=np.float64)
    return np.sign(T) * np.maximum(np.abs(T) - tau, 0.0)


def admm_step(
    state: DictLearnState,
    Y: np.ndarray,
    cfg: DictLearnConfig,
    proj_diagnostics: dict | None = None,
) -> DictLearnState:
    """One ADMM sweep (see the module docstring for the update order)."""
    rho = cfg.rho
    s = cfg.s
    r = Y.shape[2]
    I_s = rho * identity_tensor(s, r)

    D = project_onto_feasible(
        state.U - state.Lam / rho,
        max_iter=cfg.dykstra_max_iter,
        tol=cfg.dykstra_tol,
        diagnostics=proj_diagnostics,
    )
    Ut = ttranspose(state.U)
    V = tsolve_spd(
        tprod(Ut, state.U) + I_s,
        tprod(Ut, Y) + state.LamBar + rho * state.H,
    )
    H = np.maximum(soft_threshold(V - state.LamBar / rho, cfg.lam / rho), 0.0)
    Vt = ttranspose(V)
    rhs = tprod(Y, Vt) + state.Lam + rho * D
    U = ttranspose(tsolve_spd(tprod(V, Vt) + I_s, ttranspose(rhs)))
    Lam = state.Lam + rho * (D - U)
    LamBar = state.LamBar + rho * (H - V)
    return DictLearnState(
        D=D, H=H, U=U, V=V, Lam=Lam, LamBar=LamBar, iteration=state.iteration + 1
    )


def _max_abs(T: np.ndarray) -> float:
    return float(np.max(np.abs(T))) if T.size else 0.0


def kkt_residuals(state: DictLearnState, Y: np.ndarray) -> np.ndarray:
    """The four normalized stationarity residuals used for stopping."""
    D, H, U, V = state.D, state.H, state.U, state.V
    misfit = tprod(D, H) - Y
    r1 = _max_abs(D - U) / max(1.0, _max_abs(D))
    r2 = _max_abs(H - V) / max(1.0, _max_abs(H))
    r3 = _max_abs(state.LamBar - tprod(ttranspose(D), misfit)) / max(
        1.0, _max_abs(state.LamBar)
    )
    r4 = _max_abs(state.Lam - tprod(misfit, ttranspose(H))) / max(
        1.0, _max_abs(state.Lam)
    )
    return np.array([r1, r2, r3, r4])


def objective(D: np.ndarray, H: np.ndarray, Y: np.ndarray, lam: float) -> float:
    misfit = Y - tprod(D, H)
    return 0.5 * float(np.sum(misfit * misfit)) + lam * float(np.sum(np.abs(H)))


def init_state(Y: np.ndarray, cfg: DictLearnConfig) -> DictLearnState:
    """Initial splitting state: U = seeded random training patches, V = the
    rectangular identity pattern (ones on the main diagonal of slice one),
    H = V, multipliers zero and D the projection of U."""
    p, t, r = Y.shape
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    idx = rng.choice(t, size=cfg.s, replace=cfg.s > t)
    U = np.ascontiguousarray(Y[:, idx, :])
    V = np.zeros((cfg.s, t, r))
    V[:, :, 0] = np.eye(cfg.s, t)
    H = V.copy()
    D = project_onto_feasible(
        U, max_iter=cfg.dykstra_max_iter, tol=cfg.dykstra_tol
    )
    return DictLearnState(
        D=D, H=H, U=U, V=V, Lam=np.zeros_like(U), LamBar=np.zeros_like(V)
    )


def learn_dictionary(Y: np.ndarray, cfg: DictLearnConfig) -> DictLearnResult:
    """Run ADMM from the standard initialization until the stationarity
    residuals drop below ``cfg.eps`` or ``cfg.max_iter`` sweeps.

    Non-convergence is reported through ``result.converged`` (never an
    exception).  The run is deterministic given (Y, cfg.seed).
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 3:
        raise ValueError(f"training tensor must be third order, got {Y.shape}")
    state = init_state(Y, cfg)
    kkt_rows = []
    obj_rows = []
    converged = False
    projections_ok = True
    for _ in range(cfg.max_iter):
        proj_diag: dict = {}
        state = admm_step(state, Y, cfg, proj_diagnostics=proj_diag)
        projections_ok = projections_ok and proj_diag.get("converged", True)
        res = kkt_residuals(state, Y)
        kkt_rows.append(res)
        obj_rows.append(objective(state.D, state.H, Y, cfg.lam))
        if np.all(res <= cfg.eps):
            converged = True
            break
    return DictLearnResult(
        D=state.D,
        H=state.H,
        iterations=state.iteration,
        converged=converged,
        kkt_history=np.asarray(kkt_rows),
        objective_history=np.asarray(obj_rows),
        diagnostics={"projections_converged": projections_ok},
    )


# ---------------------------------------------------------------------------
# non-negative patch coding against a fixed dictionary


def _fourier_sq_opnorm(D: np.ndarray) -> float:
    """max over frequencies of the squared spectral norm of the dictionary
    slice: the Lipschitz constant of C -> D^T*(D*C)."""
    Dh = np.fft.rfft(D, axis=2)
    smax = 0.0
    for k in range(Dh.shape[2]):
        s = np.linalg.svd(Dh[:, :, k], compute_uv=False)
        if s.size:
            smax = max(smax, float(s[0]))
    return smax * smax


def nnls_tpatch(
    D: np.ndarray,
    Xj: np.ndarray,
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Approximately solve ``min_{C >= 0} 0.5*||D*C - Xj||_F^2`` for one
    patch (Xj is p x 1 x r) by projected accelerated gradient with fixed
    step 1/L, restarting momentum when the objective increases.  Stops when
    the relative objective decrease falls below ``tol``."""
    D = np.asarray(D, dtype=np.float64)
    Xj = np.asarray(Xj, dtype=np.float64)
    p, s, r = D.shape
    if Xj.shape[0] != p or Xj.shape[2] != r:
        raise ValueError(f"patch shape {Xj.shape} incompatible with dictionary {D.shape}")
    L = _fourier_sq_opnorm(D)
    if L == 0.0:
        return np.zeros((s, Xj.shape[1], r))
    step = 1.0 / L
    Dt = ttranspose(D)
    C = np.zeros((s, Xj.shape[1], r))
    Cy = C.copy()
    t_mom = 1.0

    def f(Cc):
        rres = tprod(D, Cc) - Xj
        return 0.5 * float(np.sum(rres * rres))

    f_prev = f(C)
    for _ in range(max_iter):
        grad = tprod(Dt, tprod(D, Cy) - Xj)
        C_new = np.maximum(Cy - step * grad, 0.0)
        f_new = f(C_new)
        if f_new > f_prev:
            # momentum restart: plain projected gradient step from C
            t_mom = 1.0
            Cy = C.copy()
            grad = tprod(Dt, tprod(D, Cy) - Xj)
            C_new = np.maximum(Cy - step * grad, 0.0)
            f_new = f(C_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        Cy = C_new + ((t_mom - 1.0) / t_next) * (C_new - C)
        C = C_new
        t_mom = t_next
        if f_prev - f_new < tol * max(f_prev, 1e-300):
            f_prev = f_new
            break
        f_prev = f_new
    return C


def mean_approx_error(D: np.ndarray, X_part: np.ndarray, **nnls_kwargs) -> float:
    """Mean per-pixel misfit of the best non-negative patch codes:
    ``(1/(p*q*r)) * sum_j ||D*Cj - Xj||_F`` with Cj from
    :func:`nnls_tpatch`."""
    D = np.asarray(D, dtype=np.float64)
    X_part = np.asarray(X_part, dtype=np.float64)
    p, q, r = X_part.shape
    total = 0.0
    for j in range(q):
        Xj = X_part[:, j : j + 1, :]
        Cj = nnls_tpatch(D, Xj, **nnls_kwargs)
        total += float(np.linalg.norm(tprod(D, Cj) - Xj))
    return total / (p * q * r)


def per_patch_errors(D: np.ndarray, X_part: np.ndarray, **nnls_kwargs) -> np.ndarray:
    """Frobenius misfit of each patch's best non-negative code (the terms
    averaged by :func:`mean_approx_error`)."""
    X_part = np.asarray(X_part, dtype=np.float64)
    q = X_part.shape[1]
    errs = np.empty(q)
    for j in range(q):
        Xj = X_part[:, j : j + 1, :]
        Cj = nnls_tpatch(D, Xj, **nnls_kwargs)
        errs[j] = float(np.linalg.norm(tprod(D, Cj) - Xj))
    return errs
