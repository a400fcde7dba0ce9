"""Per-agent composite objectives ``f_i = s_i + r_i`` given by oracles.

Each agent owns a smooth term ``s_i`` (gradient oracle plus a Lipschitz
constant for the gradient) and a nonsmooth term ``r_i`` (proximal oracle).
Factories below build the three benchmark families; the proximal maps they
rely on are exposed as standalone functions with closed forms.

Objectives are immutable after construction and safe to evaluate
concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NonPositiveScale


@dataclass(frozen=True, eq=False)
class AgentObjective:
    """Oracle bundle for one agent.

    ``prox_r(u, scale)`` returns ``argmin_x r_i(x) + ||x - u||^2 / (2 scale)``
    and ``grad_s`` is ``lipschitz``-Lipschitz.  ``kind``/``data`` keep the raw
    construction arrays for serialization and for vectorized execution paths.
    """

    grad_s: Callable[[np.ndarray], np.ndarray]
    prox_r: Callable[[np.ndarray, float], np.ndarray]
    lipschitz: float
    value: Callable[[np.ndarray], float]
    kind: str | None = None
    data: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A consensus problem: ``n`` agent objectives over a shared R^p."""

    p: int
    objectives: tuple[AgentObjective, ...]
    reference_solution: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))

    @property
    def n(self) -> int:
        return len(self.objectives)

    @property
    def max_lipschitz(self) -> float:
        return max(o.lipschitz for o in self.objectives)

    def total_value(self, x: np.ndarray) -> float:
        """Sum over agents of ``f_i(x)`` at a common point."""
        return float(sum(o.value(x) for o in self.objectives))

    def to_json(self) -> str:
        """Serialize construction data (row-major arrays) for replay."""
        objs = []
        for o in self.objectives:
            if o.kind is None:
                raise ValueError("objective lacks construction data; cannot serialize")
            objs.append(
                {"kind": o.kind}
                | {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in o.data.items()}
            )
        ref = None if self.reference_solution is None else self.reference_solution.tolist()
        return json.dumps({"p": self.p, "objectives": objs, "reference_solution": ref})

    @classmethod
    def from_json(cls, doc: str) -> "ProblemInstance":
        d = json.loads(doc)
        factories = {
            "least_squares_l1": lambda o: least_squares_l1(
                np.asarray(o["A"]), np.asarray(o["b"]), o["theta"]
            ),
            "logistic_l1": lambda o: logistic_l1(
                np.asarray(o["H"]), np.asarray(o["d"]), o["theta"]
            ),
            "geometric_median": lambda o: geometric_median(np.asarray(o["b"])),
        }
        objs = tuple(factories[o["kind"]](o) for o in d["objectives"])
        ref = d.get("reference_solution")
        return cls(p=d["p"], objectives=objs, reference_solution=None if ref is None else np.asarray(ref))


# ---------------------------------------------------------------------------
# proximal operators
# ---------------------------------------------------------------------------


def prox_l1(u: np.ndarray, lam: float) -> np.ndarray:
    """Soft thresholding: componentwise ``sign(u) * max(|u| - lam, 0)``."""
    if lam <= 0:
        raise NonPositiveScale(f"lam must be > 0, got {lam}")
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def prox_l2norm(u: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Prox of ``x -> ||x - b||_2``: snap to ``b`` inside the ``lam``-ball, else
    shrink radially by ``lam``."""
    if lam <= 0:
        raise NonPositiveScale(f"lam must be > 0, got {lam}")
    diff = u - b
    nrm = float(np.linalg.norm(diff))
    if nrm <= lam:
        return b.copy()
    return u - lam * diff / nrm


def prox_quadratic_matrix(U: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    """Prox of ``X -> 0.5 ||X - target||_F^2``, i.e. ``(U + lam*target) / (1 + lam)``."""
    if U.shape != target.shape:
        raise DimensionMismatch(f"shapes {U.shape} and {target.shape} differ")
    return (U + lam * target) / (1.0 + lam)


# ---------------------------------------------------------------------------
# objective families
# ---------------------------------------------------------------------------


def least_squares_l1(A: np.ndarray, b: np.ndarray, theta: float) -> AgentObjective:
    """``0.5 ||A x - b||^2 + theta ||x||_1`` with exact oracles.

    The gradient Lipschitz constant is ``sigma_max(A)^2``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise DimensionMismatch(f"A {A.shape} incompatible with b {b.shape}")
    if theta < 0:
        raise ValueError("theta must be >= 0")
    L = float(np.linalg.norm(A, 2) ** 2)

    def grad(x):
        return A.T @ (A @ x - b)

    if theta == 0.0:
        prox = lambda u, scale: u.copy()  # noqa: E731 - r == 0
    else:
        prox = lambda u, scale: prox_l1(u, scale * theta)  # noqa: E731

    def value(x):
        r = A @ x - b
        return 0.5 * float(r @ r) + theta * float(np.abs(x).sum())

    return AgentObjective(
        grad_s=grad, prox_r=prox, lipschitz=L, value=value,
        kind="least_squares_l1", data={"A": A, "b": b, "theta": float(theta)},
    )


def logistic_l1(H: np.ndarray, d: np.ndarray, theta: float) -> AgentObjective:
    """Sparse logistic regression term for one agent.

    ``s(x) = (1/m) sum_j ln(1 + exp(-d_j h_j^T x))`` over rows ``h_j`` of ``H``
    with labels ``d_j in {-1, +1}``, plus ``theta ||x||_1``.  Gradients use the
    stable ``logaddexp``/``expit`` forms; the Lipschitz constant is the usual
    curvature bound ``sigma_max((1/(4m)) sum h h^T)``.
    """
    H = np.asarray(H, dtype=float)
    d = np.asarray(d, dtype=float)
    if H.ndim != 2 or d.shape != (H.shape[0],):
        raise DimensionMismatch(f"H {H.shape} incompatible with d {d.shape}")
    if H.shape[0] < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isin(d, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    m = H.shape[0]
    L = float(np.linalg.norm(H, 2) ** 2 / (4.0 * m))

    def grad(x):
        margins = d * (H @ x)
        return -(H.T @ (d * expit(-margins))) / m

    if theta == 0.0:
        prox = lambda u, scale: u.copy()  # noqa: E731
    else:
        prox = lambda u, scale: prox_l1(u, scale * theta)  # noqa: E731

    def value(x):
        margins = d * (H @ x)
        return float(np.logaddexp(0.0, -margins).mean()) + theta * float(np.abs(x).sum())

    return AgentObjective(
        grad_s=grad, prox_r=prox, lipschitz=L, value=value,
        kind="logistic_l1", data={"H": H, "d": d, "theta": float(theta)},
    )


def geometric_median(b: np.ndarray) -> AgentObjective:
    """Pure distance term ``r(x) = ||x - b||_2`` (``s == 0``).

    The nonsmooth kink at ``b`` is handled entirely by the ball branch of
    :func:`prox_l2norm`, so the prox oracle is single-valued everywhere.
    """
    b = np.asarray(b, dtype=float)

    def grad(x):
        return np.zeros_like(x)

    def value(x):
        return float(np.linalg.norm(x - b))

    return AgentObjective(
        grad_s=grad, prox_r=lambda u, scale: prox_l2norm(u, b, scale),
        lipschitz=0.0, value=value, kind="geometric_median", data={"b": b},
    )
