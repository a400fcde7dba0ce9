"""Network construction, mixing matrices, and the spectral data that gate step sizes.

Agents are indexed ``0..n-1``. Undirected edges are stored as pairs ``(i, j)``
with ``i < j`` in lexicographic order; the edge position in that ordering is
its dual-variable row index ``e``. Everything here is a pure function of
immutable inputs and safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConnectivityFailure, FactorizationMismatch, NotPositiveDefinite

FACTORIZATION_TOL = 1e-12
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """A connected undirected network over ``n`` agents.

    Attributes
    ----------
    n : int
        Number of agents.
    edges : tuple of (int, int)
        Undirected edges ``(i, j)`` with ``i < j``, lexicographically sorted.
        The position of an edge in this tuple is its dual index ``e``.
    seed : int or None
        Seed used to generate the layout, kept for replay.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one agent, got n={self.n}")
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i},{j}) violates 0 <= i < j < n")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if self.edges != tuple(sorted(self.edges)):
            raise ValueError("edges must be sorted lexicographically")
        if not self._connected():
            raise ValueError("graph is not connected")

    def _connected(self) -> bool:
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n

    @property
    def m(self) -> int:
        """Number of edges."""
        return len(self.edges)

    @cached_property
    def neighbor_sets(self) -> tuple[tuple[int, ...], ...]:
        """``N_i``: neighbors of each agent, including the agent itself."""
        nbr = [{i} for i in range(self.n)]
        for i, j in self.edges:
            nbr[i].add(j)
            nbr[j].add(i)
        return tuple(tuple(sorted(s)) for s in nbr)

    @cached_property
    def edge_sets(self) -> tuple[tuple[int, ...], ...]:
        """``E_i``: indices of edges touching each agent."""
        inc = [[] for _ in range(self.n)]
        for e, (i, j) in enumerate(self.edges):
            inc[i].append(e)
            inc[j].append(e)
        return tuple(tuple(s) for s in inc)

    @cached_property
    def owned_edges(self) -> tuple[tuple[int, ...], ...]:
        """``L_i``: edges ``(i, j)`` with ``j > i``, updated by their lower endpoint."""
        own = [[] for _ in range(self.n)]
        for e, (i, _) in enumerate(self.edges):
            own[i].append(e)
        return tuple(tuple(s) for s in own)

    def degree(self, i: int) -> int:
        """Number of neighbors of ``i``, excluding ``i`` itself."""
        return len(self.neighbor_sets[i]) - 1

    def to_json(self) -> str:
        """Serialize as ``{n, edges, seed}``; weights are always recomputed."""
        return json.dumps({"n": self.n, "edges": [list(e) for e in self.edges], "seed": self.seed})

    @classmethod
    def from_json(cls, doc: str) -> "NetworkSpec":
        d = json.loads(doc)
        return cls(n=d["n"], edges=tuple(tuple(e) for e in d["edges"]), seed=d.get("seed"))


@dataclass(frozen=True)
class ScaledIncidence:
    """Signed incidence ``C``, edge scaling ``D``, and their product ``V = D C``."""

    C: np.ndarray  # (m, n) entries in {+1, -1, 0}
    D: np.ndarray  # (m, m) diagonal, D_ee = sqrt(w_ij / 2)
    V: np.ndarray  # (m, n)


@dataclass(frozen=True)
class SpectralData:
    """Eigen-quantities of the mixing matrix and the block metric it induces."""

    lambda_min_W: float
    rho_min: float
    lambda_max_G: float
    kappa: float


def generate_geometric_network(
    n: int,
    area_side: float = 30.0,
    radius: float = 15.0,
    rng_seed: int = 0,
    max_attempts: int = 1000,
) -> NetworkSpec:
    """Drop ``n`` agents uniformly in a square and connect pairs within ``radius``.

    Disconnected draws are rejected and re-sampled with fresh positions, up to
    ``max_attempts`` times.

    Raises
    ------
    ConnectivityFailure
        If no connected layout is found (radius too small for ``n``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_attempts):
        pos = rng.uniform(0.0, area_side, size=(n, 2))
        d2 = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
        edges = tuple(
            (i, j) for i in range(n) for j in range(i + 1, n) if d2[i, j] <= radius * radius
        )
        try:
            return NetworkSpec(n=n, edges=edges, seed=rng_seed)
        except ValueError:
            continue
    raise ConnectivityFailure(
        f"no connected graph with n={n}, radius={radius} after {max_attempts} attempts"
    )


def metropolis_weights(net: NetworkSpec) -> np.ndarray:
    """Metropolis-Hastings mixing matrix for a connected network.

    ``w_ij = 1 / (1 + max(deg_i, deg_j))`` on edges and
    ``w_ii = 1 - sum_j w_ij``, which is symmetric, doubly stochastic, and has
    every self-weight strictly positive.
    """
    n = net.n
    W = np.zeros((n, n))
    for i, j in net.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(net.degree(i), net.degree(j)))
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    _validate_weights(W, net)
    return W


def _validate_weights(W: np.ndarray, net: NetworkSpec) -> None:
    if not np.array_equal(W, W.T):
        raise ValueError("weight matrix must be exactly symmetric")
    if np.any(W < 0):
        raise ValueError("weight matrix entries must be nonnegative")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise ValueError("weight matrix rows must sum to 1")
    if not np.any(np.diag(W) > 0):
        raise ValueError("at least one self-weight must be positive")
    edge_set = set(net.edges)
    off = {(i, j) for i in range(net.n) for j in range(i + 1, net.n) if W[i, j] > 0}
    if off != edge_set:
        raise ValueError("weight support must match the edge set")


def incidence(net: NetworkSpec) -> np.ndarray:
    """Signed incidence matrix: +1 at the lower-indexed endpoint, -1 at the higher."""
    C = np.zeros((net.m, net.n))
    for e, (i, j) in enumerate(net.edges):
        C[e, i] = 1.0
        C[e, j] = -1.0
    return C


def scaled_incidence(W: np.ndarray, C: np.ndarray) -> ScaledIncidence:
    """Scale incidence rows by ``sqrt(w_ij / 2)`` so that ``V^T V = (I - W)/2``.

    Raises
    ------
    FactorizationMismatch
        If the factorization identity fails beyond ``1e-12`` (the inputs do
        not describe the same network).
    """
    m, n = C.shape
    d = np.empty(m)
    for e in range(m):
        i = int(np.argmax(C[e] > 0))
        j = int(np.argmax(C[e] < 0))
        d[e] = np.sqrt(W[i, j] / 2.0)
    D = np.diag(d)
    V = d[:, None] * C
    gap = np.max(np.abs(V.T @ V - (np.eye(n) - W) / 2.0)) if m else np.max(np.abs(np.eye(n) - W))
    if gap > FACTORIZATION_TOL:
        raise FactorizationMismatch(f"max |V^T V - (I-W)/2| = {gap:.3e}")
    return ScaledIncidence(C=C, D=D, V=V)


def metric_matrix(V: np.ndarray) -> np.ndarray:
    """The block matrix ``G = [[I, V^T], [V, I]]`` defining the solver metric."""
    m, n = V.shape
    G = np.eye(n + m)
    G[:n, n:] = V.T
    G[n:, :n] = V
    return G


def spectral(W: np.ndarray, V: np.ndarray) -> SpectralData:
    """Spectral quantities of ``W`` and of ``G = [[I, V^T], [V, I]]``.

    ``G`` is positive definite exactly when ``lambda_min(W) > -1``; its
    extreme eigenvalues bound step sizes and relaxation parameters.

    Raises
    ------
    NotPositiveDefinite
        If ``lambda_min(W) <= -1 + 1e-12``.
    """
    lam_w = float(np.linalg.eigvalsh(W).min())
    if lam_w <= -1.0 + 1e-12:
        raise NotPositiveDefinite(f"lambda_min(W) = {lam_w:.6g} <= -1")
    eig = np.linalg.eigvalsh(metric_matrix(V))
    rho_min = float(eig[0])
    lam_max = float(eig[-1])
    return SpectralData(
        lambda_min_W=lam_w, rho_min=rho_min, lambda_max_G=lam_max, kappa=lam_max / rho_min
    )
