"""Exact synchronous algorithms and the fixed-point view used to measure them.

The primal-dual recursion below carries a stacked primal ``X`` (one row per
agent) and an edge dual ``Y`` (one row per edge).  One synchronous step is the
operator whose fixed points are exactly the primal-dual (KKT) solutions, so
``||Z - step(Z)||_M`` serves as a computable optimality residual, with
``M = G / alpha`` the metric induced by the scaled incidence.

Steps are pure ``state -> state`` functions; drivers may run independent
instances concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GammaOutOfRange, NoConvergence, ShapeMismatch, ZeroLipschitz
from .problems import ProblemInstance
from .topology import NetworkSpec, SpectralData

CONSENSUS_TOL = 1e-6


@dataclass
class SolverState:
    """Stacked iterate ``Z = [X; Y]`` at iteration ``k``."""

    X: np.ndarray  # (n, p) primal, row i is agent i's copy
    Y: np.ndarray  # (m, p) dual, row e belongs to edge e
    k: int = 0

    def copy(self) -> "SolverState":
        return SolverState(X=self.X.copy(), Y=self.Y.copy(), k=self.k)


@dataclass(frozen=True)
class StepSizeConfig:
    """Global scalar step size or the per-agent local rule.

    Global mode requires ``0 < alpha < 2 rho_min / L`` for guaranteed
    convergence; violations are tolerated (warned) because hand-tuned larger
    steps are common practice.  Local mode sets
    ``alpha_i = 1 / (L_i / gamma + 1 - w_ii)`` for ``0 < gamma < 2``.
    """

    mode: str  # "global" | "local"
    alpha: float | np.ndarray
    gamma: float | None = None

    def per_agent(self, n: int) -> np.ndarray:
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim == 0:
            return np.full(n, float(a))
        if a.shape != (n,):
            raise ShapeMismatch(f"alpha vector has shape {a.shape}, expected ({n},)")
        return a

    @property
    def metric_alpha(self) -> float:
        """Scalar used in the metric ``M = G / alpha``; mean step in local mode."""
        a = np.asarray(self.alpha, dtype=float)
        return float(a) if a.ndim == 0 else float(a.mean())


def global_step(alpha: float) -> StepSizeConfig:
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return StepSizeConfig(mode="global", alpha=float(alpha))


def local_alphas(prob: ProblemInstance, W: np.ndarray, gamma: float) -> np.ndarray:
    """Per-agent steps ``alpha_i = 1 / (L_i / gamma + 1 - w_ii)``, ``0 < gamma < 2``."""
    if not 0.0 < gamma < 2.0:
        raise GammaOutOfRange(f"gamma must lie in (0, 2), got {gamma}")
    L = np.array([o.lipschitz for o in prob.objectives])
    return 1.0 / (L / gamma + 1.0 - np.diag(W))


def local_step(prob: ProblemInstance, W: np.ndarray, gamma: float) -> StepSizeConfig:
    return StepSizeConfig(mode="local", alpha=local_alphas(prob, W, gamma), gamma=gamma)


def max_global_alpha(spec: SpectralData, prob: ProblemInstance) -> float:
    """Upper step-size limit ``2 rho_min / L`` with ``L = max_i L_i``.

    Raises
    ------
    ZeroLipschitz
        When every smooth term vanishes; use the local rule or any alpha.
    """
    L = prob.max_lipschitz
    if L <= 0:
        raise ZeroLipschitz("max_i L_i == 0: step bound is vacuous")
    return 2.0 * spec.rho_min / L


def check_step_size(cfg: StepSizeConfig, spec: SpectralData, prob: ProblemInstance) -> None:
    """Warn (never refuse) when a global step exceeds the convergence bound."""
    if cfg.mode != "global" or prob.max_lipschitz <= 0:
        return
    bound = max_global_alpha(spec, prob)
    if float(np.asarray(cfg.alpha)) >= bound:
        warnings.warn(
            f"alpha={cfg.alpha} >= 2*rho_min/L = {bound:.6g}; convergence is not guaranteed",
            stacklevel=2,
        )


def initial_state(net: NetworkSpec, p: int) -> SolverState:
    """Default all-zeros starting point (overridable by constructing directly)."""
    return SolverState(X=np.zeros((net.n, p)), Y=np.zeros((net.m, p)), k=0)


def _check_shapes(state: SolverState, prob: ProblemInstance, net: NetworkSpec) -> None:
    if state.X.shape != (net.n, prob.p) or state.Y.shape != (net.m, prob.p):
        raise ShapeMismatch(
            f"state X{state.X.shape} Y{state.Y.shape} does not match n={net.n}, m={net.m}, p={prob.p}"
        )


def _gradients(prob: ProblemInstance, X: np.ndarray) -> np.ndarray:
    return np.stack([o.grad_s(X[i]) for i, o in enumerate(prob.objectives)])


def pg_extra_step(
    state: SolverState,
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    cfg: StepSizeConfig,
) -> SolverState:
    """One synchronous primal-dual step.

    Every agent mixes neighbor copies, takes a proximal gradient step against
    the incident dual rows, and every edge accumulates the disagreement of its
    two endpoints:

    ``x_i <- prox_{a_i r_i}( sum_j w_ij x_j - a_i grad s_i(x_i) - sum_e v_ei y_e )``
    ``y_e <- y_e + v_ei x_i + v_ej x_j``
    """
    _check_shapes(state, prob, net)
    X, Y = state.X, state.Y
    alphas = cfg.per_agent(net.n)
    U = W @ X - alphas[:, None] * _gradients(prob, X) - V.T @ Y
    X_new = np.stack([o.prox_r(U[i], alphas[i]) for i, o in enumerate(prob.objectives)])
    Y_new = Y + V @ X
    return SolverState(X=X_new, Y=Y_new, k=state.k + 1)


def pg_extra_step_ordered(
    state: SolverState,
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    cfg: StepSizeConfig,
) -> SolverState:
    """Algebraically equivalent variant that updates the dual first.

    Computes ``Y_new = Y + V X`` and then feeds ``2 Y_new - Y`` into the primal
    step without the mixing-matrix substitution.  Kept as a cross-check of the
    rewriting used by :func:`pg_extra_step`; trajectories agree to rounding.
    """
    _check_shapes(state, prob, net)
    X, Y = state.X, state.Y
    alphas = cfg.per_agent(net.n)
    Y_new = Y + V @ X
    U = X - alphas[:, None] * _gradients(prob, X) - V.T @ (2.0 * Y_new - Y)
    X_new = np.stack([o.prox_r(U[i], alphas[i]) for i, o in enumerate(prob.objectives)])
    return SolverState(X=X_new, Y=Y_new, k=state.k + 1)


def prox_dgd_step(
    X: np.ndarray, prob: ProblemInstance, W: np.ndarray, alpha: float
) -> np.ndarray:
    """One proximal decentralized gradient step (no dual variables).

    Solves a penalized surrogate, so with fixed ``alpha`` the limit is biased;
    the bias shrinks with ``alpha``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if X.shape != (prob.n, prob.p):
        raise ShapeMismatch(f"X has shape {X.shape}, expected ({prob.n}, {prob.p})")
    U = W @ X - alpha * _gradients(prob, X)
    return np.stack([o.prox_r(U[i], alpha) for i, o in enumerate(prob.objectives)])


# ---------------------------------------------------------------------------
# metric and residuals
# ---------------------------------------------------------------------------


def _metric_sq(DX: np.ndarray, DY: np.ndarray, V: np.ndarray, alpha: float) -> float:
    # tr(D^T G D) / alpha with G = [[I, V^T], [V, I]], never forming G
    cross = float(np.sum(DY * (V @ DX)))
    return (float(np.sum(DX * DX)) + float(np.sum(DY * DY)) + 2.0 * cross) / alpha


def m_norm_distance(
    state: SolverState, ref: SolverState, V: np.ndarray, alpha: float
) -> float:
    """``sqrt(tr((Z - Z*)^T M (Z - Z*)))`` with ``M = G / alpha``."""
    if state.X.shape != ref.X.shape or state.Y.shape != ref.Y.shape:
        raise ShapeMismatch("states have different shapes")
    sq = _metric_sq(state.X - ref.X, state.Y - ref.Y, V, alpha)
    return float(np.sqrt(max(sq, 0.0)))


def fixed_point_residual(
    state: SolverState,
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    cfg: StepSizeConfig,
) -> float:
    """M-weighted norm of ``Z - step(Z)``; zero exactly at primal-dual solutions."""
    nxt = pg_extra_step(state, prob, net, W, V, cfg)
    sq = _metric_sq(state.X - nxt.X, state.Y - nxt.Y, V, cfg.metric_alpha)
    return float(np.sqrt(max(sq, 0.0)))


def consensus_gap(X: np.ndarray) -> float:
    """Largest entrywise spread between any agent row and the row mean."""
    return float(np.max(np.abs(X - X.mean(axis=0)))) if X.size else 0.0


def consensus_point(X: np.ndarray) -> np.ndarray:
    return X.mean(axis=0)


# ---------------------------------------------------------------------------
# reference solving
# ---------------------------------------------------------------------------


def run_pg_extra(
    state: SolverState,
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    cfg: StepSizeConfig,
    max_iters: int,
    tol: float | None = None,
    callback: Callable[[int, SolverState], None] | None = None,
    record_every: int = 1,
) -> tuple[SolverState, float]:
    """Iterate the synchronous step; returns the final state and last residual.

    The residual comes free from the iteration itself:
    ``||Z^k - Z^{k+1}||_M`` is the fixed-point residual at ``Z^k``.
    ``callback(k, state)`` fires every ``record_every`` iterations.
    """
    alpha = cfg.metric_alpha
    res = np.inf
    for _ in range(max_iters):
        nxt = pg_extra_step(state, prob, net, W, V, cfg)
        res = float(np.sqrt(max(_metric_sq(state.X - nxt.X, state.Y - nxt.Y, V, alpha), 0.0)))
        state = nxt
        if callback is not None and state.k % record_every == 0:
            callback(state.k, state)
        if not np.isfinite(res):
            break
        if tol is not None and res < tol:
            break
    return state, res


def solve_reference(
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    tol: float = 1e-12,
    max_iters: int = 200_000,
    cfg: StepSizeConfig | None = None,
    spec: SpectralData | None = None,
    use_fast: bool | None = None,
) -> SolverState:
    """Run the synchronous solver to a fixed-point residual below ``tol``.

    Default step size is 90% of the proven bound (or 1.0 when all smooth
    terms vanish).  The returned primal rows agree to within the consensus
    tolerance.  Known oracle families run on the compiled iteration unless
    ``use_fast=False``.

    Raises
    ------
    NoConvergence
        If the tolerance is not met within ``max_iters`` or iterates blow up.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if cfg is None:
        if prob.max_lipschitz > 0:
            if spec is None:
                from .topology import spectral as _spectral

                spec = _spectral(W, V)
            cfg = global_step(0.9 * max_global_alpha(spec, prob))
        else:
            cfg = global_step(1.0)
    fast_ok = all(
        o.kind in ("least_squares_l1", "logistic_l1", "geometric_median")
        for o in prob.objectives
    )
    if use_fast is None:
        use_fast = fast_ok
    if use_fast:
        if not fast_ok:
            raise ValueError("fast path requires the packed oracle families")
        from ._kernel import run_sync_fast

        state, res, _, _ = run_sync_fast(
            prob, W, V, cfg.per_agent(net.n), max_iters, tol,
            metric_alpha=cfg.metric_alpha,
        )
    else:
        state, res = run_pg_extra(
            initial_state(net, prob.p), prob, net, W, V, cfg, max_iters=max_iters, tol=tol
        )
    if not np.isfinite(res) or res >= tol:
        raise NoConvergence(f"residual {res:.3e} after {state.k} iterations (tol {tol:.1e})")
    gap = consensus_gap(state.X)
    if gap > CONSENSUS_TOL:
        raise NoConvergence(f"consensus gap {gap:.3e} exceeds {CONSENSUS_TOL}")
    return state
