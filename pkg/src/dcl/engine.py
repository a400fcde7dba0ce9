"""Deterministic discrete-event simulator for asynchronous decentralized updates.

Each agent computes continuously: it snapshots its mailbox when a round
begins, finishes after an exponential compute time, applies a relaxed update
to the rows it owns (its primal row and the duals of edges it owns), sends
the new rows to its neighbors with exponential latency, and immediately
starts the next round.  Mailboxes keep the freshest received value per slot
(stale deliveries are discarded), and the trace records how out-of-date every
value used was, in units of completed global updates.

The loop is strictly single-threaded and replayable: ties are broken by
insertion order and all randomness is drawn from per-agent streams derived
from one seed.  Whole simulations are independent and may run concurrently.

``lockstep=True`` replaces the event race with synchronous ticks (all agents
update once per tick from common fresh values) while charging each tick the
barrier cost of the slowest compute plus the slowest delivery, which is the
timed baseline the asynchronous runs are compared against.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import (
    DegenerateProbability,
    HorizonZero,
    NonPositiveMean,
    ShapeMismatch,
)
from .problems import ProblemInstance
from .solvers import SolverState, StepSizeConfig, _metric_sq, pg_extra_step, prox_dgd_step
from .topology import NetworkSpec

_TIMING_TAG = 0x7131  # keeps timing streams independent of instance-data streams

_COMPUTE = 0
_MESSAGE = 1


# ---------------------------------------------------------------------------
# activation and relaxation rules
# ---------------------------------------------------------------------------


def predicted_q(mu: np.ndarray) -> np.ndarray:
    """Activation law for continuously computing agents: ``q_i ∝ 1/mu_i``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise NonPositiveMean("compute means must be > 0")
    inv = 1.0 / mu
    return inv / inv.sum()


def relaxation_parameters(q: np.ndarray, eta: float) -> np.ndarray:
    """Per-agent relaxation ``eta_i = eta / (n q_i)``."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise DegenerateProbability("activation probabilities must be > 0")
    if eta <= 0:
        raise ValueError("eta must be > 0")
    return eta / (len(q) * q)


def eta_max_bound(n: int, q_min: float, kappa: float, tau: float) -> float:
    """Relaxation ceiling ``n q_min / (2 tau sqrt(kappa q_min) + kappa)``.

    Decreasing in both the delay bound ``tau`` and the metric condition
    number ``kappa``.
    """
    if not 0 < q_min < 1 or n < 1 or kappa < 1 or tau < 0:
        raise ValueError("need 0 < q_min < 1, n >= 1, kappa >= 1, tau >= 0")
    return n * q_min / (2.0 * tau * np.sqrt(kappa * q_min) + kappa)


# ---------------------------------------------------------------------------
# configuration and result records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsyncConfig:
    """Timing laws and relaxation for one simulation run.

    ``eta`` may be a global scalar, expanded to ``eta / (n q_i)`` with the
    predicted activation law (uniform ``q`` in lockstep mode), or an explicit
    per-agent vector used as-is.  ``deterministic_times`` replaces the
    exponential draws by their means (used for timing controls).
    """

    compute_means: np.ndarray | float
    comm_mean: float
    eta: float | np.ndarray = 0.5
    horizon_ms: float | None = None
    max_updates: int | None = None
    seed: int = 0
    lockstep: bool = False
    algorithm: str = "primal-dual"  # or "prox-dgd"
    record_every: int = 100
    deterministic_times: bool = False
    delay_mode: str = "full"  # "full" keeps per-update vectors, "max" only the running max

    def __post_init__(self):
        if self.algorithm not in ("primal-dual", "prox-dgd"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.delay_mode not in ("full", "max"):
            raise ValueError(f"unknown delay_mode {self.delay_mode!r}")
        if self.comm_mean < 0:
            raise NonPositiveMean("comm_mean must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def means_vector(self, n: int) -> np.ndarray:
        mu = np.asarray(self.compute_means, dtype=float)
        mu = np.full(n, float(mu)) if mu.ndim == 0 else mu
        if mu.shape != (n,):
            raise ShapeMismatch(f"compute_means shape {mu.shape}, expected ({n},)")
        if np.any(mu <= 0):
            raise NonPositiveMean("compute means must be > 0")
        return mu

    def etas_vector(self, n: int) -> np.ndarray:
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 0:
            if float(eta) <= 0:
                raise ValueError("eta must be > 0")
            q = np.full(n, 1.0 / n) if self.lockstep else predicted_q(self.means_vector(n))
            return relaxation_parameters(q, float(eta))
        if eta.shape != (n,):
            raise ShapeMismatch(f"eta shape {eta.shape}, expected ({n},)")
        if np.any(eta <= 0):
            raise ValueError("all eta_i must be > 0")
        return eta.copy()


@dataclass
class TrajectorySample:
    """One recorded point: after ``k`` updates at simulated time ``t_ms``."""

    k: int
    t_ms: float
    rel_error: float
    residual: float


@dataclass
class DelayTrace:
    """Staleness of the values read at each update, in completed-update counts."""

    max_delay: int
    tau: np.ndarray | None = None  # (K, n) primal staleness per recorded update
    delta: np.ndarray | None = None  # (K, m) dual staleness per recorded update


@dataclass
class ActivationStats:
    """Update counts per agent and the empirical activation frequencies."""

    counts: np.ndarray

    @property
    def q_hat(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            raise DegenerateProbability("no updates happened")
        return self.counts / total


@dataclass
class SimulationResult:
    samples: list[TrajectorySample]
    delays: DelayTrace
    activation: ActivationStats
    state: SolverState
    updates: int = 0
    end_time_ms: float = 0.0


# ---------------------------------------------------------------------------
# timing streams
# ---------------------------------------------------------------------------


class TimingStreams:
    """Per-agent compute and communication draws, replayable from one seed.

    Each agent has its own compute stream; each sender has its own latency
    stream, consumed one draw per outgoing message in neighbor order.  This
    keeps the draw sequences independent of event interleaving, so a fast
    execution path can pre-draw the identical values in bulk.
    """

    def __init__(self, cfg: AsyncConfig, n: int):
        self.mu = cfg.means_vector(n)
        self.comm_mean = float(cfg.comm_mean)
        self.deterministic = cfg.deterministic_times
        if not self.deterministic:
            root = np.random.SeedSequence([int(cfg.seed), _TIMING_TAG])
            children = root.spawn(2 * n)
            self._compute_rngs = [np.random.default_rng(s) for s in children[:n]]
            self._comm_rngs = [np.random.default_rng(s) for s in children[n:]]

    def compute(self, i: int) -> float:
        if self.deterministic:
            return self.mu[i]
        return float(self._compute_rngs[i].exponential(self.mu[i]))

    def comm(self, i: int) -> float:
        if self.deterministic or self.comm_mean == 0.0:
            return self.comm_mean
        return float(self._comm_rngs[i].exponential(self.comm_mean))

    def compute_batch(self, i: int, size: int) -> np.ndarray:
        if self.deterministic:
            return np.full(size, self.mu[i])
        return self._compute_rngs[i].exponential(self.mu[i], size=size)

    def comm_batch(self, i: int, size: int) -> np.ndarray:
        if self.deterministic or self.comm_mean == 0.0:
            return np.full(size, self.comm_mean)
        return self._comm_rngs[i].exponential(self.comm_mean, size=size)


# ---------------------------------------------------------------------------
# mailbox and event queue
# ---------------------------------------------------------------------------


class Mailbox:
    """Latest received rows for one agent, with monotone write stamps.

    Holds one slot per neighbor primal row and one per non-owned incident
    dual row.  A delivery whose stamp is not newer than the stored one is
    discarded, so slot stamps never decrease.
    """

    def __init__(self, nbr_ids, ne_edge_ids, x_rows: np.ndarray, y_rows: np.ndarray):
        self.nbr_ids = list(nbr_ids)
        self.ne_edge_ids = list(ne_edge_ids)
        p = x_rows.shape[1]
        self.x_vals = (
            np.stack([x_rows[j] for j in self.nbr_ids]) if self.nbr_ids else np.zeros((0, p))
        )
        self.x_stamps = np.zeros(len(self.nbr_ids), dtype=np.int64)
        self.y_vals = (
            np.stack([y_rows[e] for e in self.ne_edge_ids]) if self.ne_edge_ids else np.zeros((0, p))
        )
        self.y_stamps = np.zeros(len(self.ne_edge_ids), dtype=np.int64)
        self._x_slot = {j: s for s, j in enumerate(self.nbr_ids)}
        self._y_slot = {e: s for s, e in enumerate(self.ne_edge_ids)}

    def deliver_x(self, src: int, value: np.ndarray, stamp: int) -> bool:
        s = self._x_slot[src]
        if stamp <= self.x_stamps[s]:
            return False
        self.x_vals[s] = value
        self.x_stamps[s] = stamp
        return True

    def deliver_y(self, edge: int, value: np.ndarray, stamp: int) -> bool:
        s = self._y_slot[edge]
        if stamp <= self.y_stamps[s]:
            return False
        self.y_vals[s] = value
        self.y_stamps[s] = stamp
        return True

    def snapshot(self):
        return (
            self.x_vals.copy(),
            self.x_stamps.copy(),
            self.y_vals.copy(),
            self.y_stamps.copy(),
        )


class EventQueue:
    """Min-heap of timed events with a strict, deterministic pop order."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, time: float, kind: int, agent: int, payload=None) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, agent, payload))
        self._seq += 1

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


# ---------------------------------------------------------------------------
# network plumbing shared by both execution paths
# ---------------------------------------------------------------------------


class _Wiring:
    """Index arrays describing who mixes, owns, and messages whom."""

    def __init__(self, net: NetworkSpec, W: np.ndarray, V: np.ndarray, has_duals: bool):
        n = net.n
        self.n = n
        self.w_self = np.diag(W).copy()
        self.nbrs = [
            np.array([j for j in net.neighbor_sets[i] if j != i], dtype=np.int64)
            for i in range(n)
        ]
        self.w_nbr = [W[i, self.nbrs[i]].copy() for i in range(n)]
        if has_duals:
            self.owned = []  # per agent: list of (edge, v_ei, v_ej, slot of j in nbr list)
            for i in range(n):
                rows = []
                for e in net.owned_edges[i]:
                    j = net.edges[e][1]
                    slot = int(np.where(self.nbrs[i] == j)[0][0])
                    rows.append((e, float(V[e, i]), float(V[e, j]), slot))
                self.owned.append(rows)
            self.ne = [
                [(e, float(V[e, i])) for e in net.edge_sets[i] if e not in net.owned_edges[i]]
                for i in range(n)
            ]
            # owned edge shared with each neighbor (or None): rides on that message
            self.msg_edge = []
            for i in range(n):
                shared = {}
                for e in net.owned_edges[i]:
                    shared[net.edges[e][1]] = e
                self.msg_edge.append([shared.get(int(j)) for j in self.nbrs[i]])
        else:
            self.owned = [[] for _ in range(n)]
            self.ne = [[] for _ in range(n)]
            self.msg_edge = [[None] * len(self.nbrs[i]) for i in range(n)]


def _expand_alphas(step_cfg: StepSizeConfig, n: int) -> np.ndarray:
    return step_cfg.per_agent(n)


# ---------------------------------------------------------------------------
# simulation entry points
# ---------------------------------------------------------------------------


def simulate(
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    step_cfg: StepSizeConfig,
    async_cfg: AsyncConfig,
    x_star: np.ndarray | None = None,
    x0: np.ndarray | None = None,
    y0: np.ndarray | None = None,
    post_update: Callable[[int, np.ndarray], None] | None = None,
    record_metric: Callable[[np.ndarray, np.ndarray], float] | None = None,
    compute_residual: bool = True,
    timing_only: bool = False,
    audit: list | None = None,
    event_log: list | None = None,
    use_fast: bool | None = None,
    stop_below: float | None = None,
) -> SimulationResult:
    """Run the asynchronous (or lockstep) recursion under sampled timing.

    Returns the recorded trajectory, the delay trace, the per-agent
    activation statistics, and the final stacked state.  ``x_star`` enables
    the relative-error column; ``record_metric(X, Y)`` overrides it for
    problems whose error is not a distance on ``X`` (it is evaluated at
    record time).  ``post_update(i, x_row)`` runs after agent ``i`` writes its
    row, for algorithms that maintain private local state.  ``audit``
    (a list) collects ``(agent, row_kind, row_index)`` write records;
    ``event_log`` collects ``(time_ms, kind, agent, k)`` tuples.
    ``stop_below`` ends the run early once the recorded error metric falls
    under the threshold (checked at record points only).

    A compiled kernel handles plain vector problems; the interpreted path is
    kept both as the readable reference and for stateful extensions, and
    ``use_fast`` forces the choice.
    """
    if (async_cfg.horizon_ms is None or async_cfg.horizon_ms <= 0) and (
        async_cfg.max_updates is None or async_cfg.max_updates <= 0
    ):
        raise HorizonZero("need horizon_ms > 0 or max_updates > 0")
    n, p = net.n, prob.p
    if len(prob.objectives) != n:
        raise ShapeMismatch(f"problem has {prob.n} objectives for {n} agents")
    has_duals = async_cfg.algorithm == "primal-dual"
    m = net.m if has_duals else 0
    X = np.zeros((n, p)) if x0 is None else np.array(x0, dtype=float)
    Y = np.zeros((m, p)) if y0 is None else np.array(y0, dtype=float)
    if X.shape != (n, p) or Y.shape != (m, p):
        raise ShapeMismatch(f"x0/y0 shapes {X.shape}/{Y.shape} do not match ({n},{p})/({m},{p})")
    X0 = X.copy()

    if async_cfg.lockstep:
        return _lockstep_loop(
            prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star,
            post_update, record_metric, compute_residual, stop_below,
        )

    fast_ok = (
        post_update is None
        and record_metric is None
        and audit is None
        and event_log is None
        and async_cfg.delay_mode == "max"
        and all(o.kind in ("least_squares_l1", "logistic_l1", "geometric_median") for o in prob.objectives)
    )
    if use_fast is None:
        use_fast = fast_ok
    if use_fast:
        if not fast_ok:
            raise ValueError("fast path cannot honor hooks, full delay traces, or custom oracles")
        from . import _kernel

        return _kernel.simulate_fast(
            prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star,
            compute_residual, timing_only, stop_below,
        )
    return _event_loop_python(
        prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star,
        post_update, record_metric, compute_residual, timing_only, audit, event_log,
        stop_below,
    )


def simulate_prox_dgd(
    prob: ProblemInstance,
    net: NetworkSpec,
    W: np.ndarray,
    alpha: float | StepSizeConfig,
    async_cfg: AsyncConfig,
    **kwargs,
) -> SimulationResult:
    """Asynchronous proximal decentralized gradient descent (primal only)."""
    cfg = alpha if isinstance(alpha, StepSizeConfig) else StepSizeConfig(mode="global", alpha=alpha)
    if async_cfg.algorithm != "prox-dgd":
        async_cfg = replace(async_cfg, algorithm="prox-dgd")
    V = np.zeros((0, net.n))
    return simulate(prob, net, W, V, cfg, async_cfg, **kwargs)


# ---------------------------------------------------------------------------
# interpreted event loop (reference semantics)
# ---------------------------------------------------------------------------


def _event_loop_python(
    prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star,
    post_update, record_metric, compute_residual, timing_only, audit, event_log,
    stop_below=None,
):
    from .experiments import relative_error
    n, p = net.n, prob.p
    has_duals = async_cfg.algorithm == "primal-dual"
    wiring = _Wiring(net, W, V if has_duals else np.zeros((0, n)), has_duals)
    alphas = _expand_alphas(step_cfg, n)
    etas = async_cfg.etas_vector(n)
    timing = TimingStreams(async_cfg, n)
    horizon = async_cfg.horizon_ms if async_cfg.horizon_ms is not None else np.inf
    max_updates = async_cfg.max_updates if async_cfg.max_updates is not None else np.inf
    record_every = async_cfg.record_every
    full_delays = async_cfg.delay_mode == "full"

    mailboxes = [
        Mailbox(wiring.nbrs[i], [e for e, _ in wiring.ne[i]], X, Y) for i in range(n)
    ]
    snapshots = [mb.snapshot() for mb in mailboxes]

    queue = EventQueue()
    for i in range(n):
        queue.push(timing.compute(i), _COMPUTE, i)

    counts = np.zeros(n, dtype=np.int64)
    max_delay = 0
    tau_rows, delta_rows = [], []
    raw_samples = []  # (k, t, X copy, Y copy, metric value or None)
    k = 0
    t_now = 0.0

    while len(queue):
        t, _, kind, agent, payload = queue.pop()
        if t > horizon:
            break
        t_now = t
        if kind == _MESSAGE:
            src, x_val, x_stamp, dual = payload
            mailboxes[agent].deliver_x(src, x_val, x_stamp)
            if dual is not None:
                e, y_val, y_stamp = dual
                mailboxes[agent].deliver_y(e, y_val, y_stamp)
            if event_log is not None:
                event_log.append((t, "message", agent, k))
            continue

        i = agent
        sx, sxs, sy, sys_ = snapshots[i]

        if not timing_only:
            if has_duals:
                dual_term = np.zeros(p)
                for (e, vei, _vej, _slot) in wiring.owned[i]:
                    dual_term += vei * Y[e]
                for s, (_e, vei) in enumerate(wiring.ne[i]):
                    dual_term += vei * sy[s]
            else:
                dual_term = 0.0
            obj = prob.objectives[i]
            u = (
                wiring.w_self[i] * X[i]
                + wiring.w_nbr[i] @ sx
                - alphas[i] * obj.grad_s(X[i])
                - dual_term
            )
            x_tilde = obj.prox_r(u, alphas[i])
            y_tilde = [
                Y[e] + vei * X[i] + vej * sx[slot]
                for (e, vei, vej, slot) in wiring.owned[i]
            ]
            X[i] += etas[i] * (x_tilde - X[i])
            if audit is not None:
                audit.append((i, "x", i))
            for (e, *_), yt in zip(wiring.owned[i], y_tilde):
                Y[e] += etas[i] * (yt - Y[e])
                if audit is not None:
                    audit.append((i, "y", e))
            if post_update is not None:
                post_update(i, X[i])

        # delay accounting: staleness of every value read, own rows are fresh
        if len(sxs):
            tau_used = k - sxs
            local_max = int(tau_used.max()) if tau_used.size else 0
        else:
            tau_used, local_max = sxs, 0
        if len(sys_):
            delta_used = k - sys_
            local_max = max(local_max, int(delta_used.max()))
        else:
            delta_used = sys_
        max_delay = max(max_delay, local_max)
        if full_delays:
            tau_row = np.zeros(n, dtype=np.int32)
            tau_row[wiring.nbrs[i]] = tau_used
            tau_rows.append(tau_row)
            delta_row = np.zeros(net.m if has_duals else 0, dtype=np.int32)
            for s, (e, _vei) in enumerate(wiring.ne[i]):
                delta_row[e] = delta_used[s]
            delta_rows.append(delta_row)

        k += 1
        counts[i] += 1
        if event_log is not None:
            event_log.append((t, "compute", i, k))

        # outgoing messages carry the new primal row and the shared owned dual
        stamp = k
        x_payload = X[i].copy()
        for s, j in enumerate(wiring.nbrs[i]):
            e = wiring.msg_edge[i][s]
            dual = None if e is None else (e, Y[e].copy(), stamp)
            queue.push(t + timing.comm(i), _MESSAGE, int(j), (i, x_payload, stamp, dual))

        snapshots[i] = mailboxes[i].snapshot()
        queue.push(t + timing.compute(i), _COMPUTE, i)

        if k % record_every == 0:
            metric = record_metric(X, Y) if record_metric is not None else None
            raw_samples.append((k, t, None if timing_only else X.copy(),
                                None if timing_only else Y.copy(), metric))
            if stop_below is not None:
                err = metric
                if err is None and x_star is not None and not timing_only:
                    err = relative_error(X, np.tile(x_star, (n, 1)), X0)
                if err is not None and err < stop_below:
                    break
        if k >= max_updates:
            break

    samples = _build_samples(
        raw_samples, prob, net, W, V, step_cfg, x_star, X0,
        _residual_mode(compute_residual, has_duals, timing_only),
    )
    delays = DelayTrace(
        max_delay=max_delay,
        tau=np.array(tau_rows, dtype=np.int32) if full_delays and tau_rows else None,
        delta=np.array(delta_rows, dtype=np.int32) if full_delays and delta_rows else None,
    )
    return SimulationResult(
        samples=samples,
        delays=delays,
        activation=ActivationStats(counts=counts),
        state=SolverState(X=X, Y=Y, k=k),
        updates=k,
        end_time_ms=t_now,
    )


def _build_samples(raw, prob, net, W, V, step_cfg, x_star, X0, residual_mode):
    """Turn recorded ``(k, t, X, Y, metric)`` tuples into trajectory samples.

    The residual column is the fixed-point residual of the operator the run
    iterates: the primal-dual step in the ``G/alpha`` metric
    (``residual_mode == "pd"``), or the proximal-gradient map in ``I/alpha``
    for the dual-free recursion (``"dgd"``).
    """
    from .experiments import relative_error  # local import to avoid a cycle

    samples = []
    denom_ready = x_star is not None
    for k, t, Xs, Ys, metric in raw:
        if metric is not None:
            rel = float(metric)
        elif denom_ready and Xs is not None:
            rel = relative_error(Xs, np.tile(x_star, (net.n, 1)), X0)
        else:
            rel = float("nan")
        if residual_mode == "pd" and Xs is not None:
            state = SolverState(X=Xs, Y=Ys, k=k)
            nxt = pg_extra_step(state, prob, net, W, V, step_cfg)
            sq = _metric_sq(Xs - nxt.X, Ys - nxt.Y, V, step_cfg.metric_alpha)
            res = float(np.sqrt(max(sq, 0.0)))
        elif residual_mode == "dgd" and Xs is not None:
            alpha = step_cfg.metric_alpha
            diff = Xs - prox_dgd_step(Xs, prob, W, alpha)
            res = float(np.linalg.norm(diff) / np.sqrt(alpha))
        else:
            res = float("nan")
        samples.append(TrajectorySample(k=k, t_ms=t, rel_error=rel, residual=res))
    return samples


def _residual_mode(compute_residual: bool, has_duals: bool, timing_only: bool = False) -> str:
    if not compute_residual or timing_only:
        return "none"
    return "pd" if has_duals else "dgd"


# ---------------------------------------------------------------------------
# lockstep (synchronous ticks with charged barrier timing)
# ---------------------------------------------------------------------------


def _lockstep_loop(
    prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star,
    post_update, record_metric, compute_residual, stop_below=None,
):
    from .experiments import relative_error
    n, p = net.n, prob.p
    has_duals = async_cfg.algorithm == "primal-dual"
    wiring = _Wiring(net, W, V if has_duals else np.zeros((0, n)), has_duals)
    alphas = _expand_alphas(step_cfg, n)
    etas = async_cfg.etas_vector(n)
    timing = TimingStreams(async_cfg, n)
    horizon = async_cfg.horizon_ms if async_cfg.horizon_ms is not None else np.inf
    max_ticks = async_cfg.max_updates if async_cfg.max_updates is not None else np.inf

    counts = np.zeros(n, dtype=np.int64)
    raw_samples = []
    t_now = 0.0
    k = 0
    while k < max_ticks:
        # two barriers: slowest compute, then slowest delivery among all messages
        duration = max(timing.compute(i) for i in range(n))
        if net.m > 0:
            duration += max(
                timing.comm(i) for i in range(n) for _ in wiring.nbrs[i]
            )
        if t_now + duration > horizon:
            break
        t_now += duration

        Xf, Yf = X.copy(), Y.copy()  # every agent reads the same fresh values
        for i in range(n):
            obj = prob.objectives[i]
            if has_duals:
                dual_term = np.zeros(p)
                for (e, vei, _vej, _slot) in wiring.owned[i]:
                    dual_term += vei * Yf[e]
                for (e, vei) in wiring.ne[i]:
                    dual_term += vei * Yf[e]
            else:
                dual_term = 0.0
            u = (
                wiring.w_self[i] * Xf[i]
                + wiring.w_nbr[i] @ Xf[wiring.nbrs[i]]
                - alphas[i] * obj.grad_s(Xf[i])
                - dual_term
            )
            x_tilde = obj.prox_r(u, alphas[i])
            X[i] = Xf[i] + etas[i] * (x_tilde - Xf[i])
            for (e, vei, vej, slot) in wiring.owned[i]:
                j = wiring.nbrs[i][slot]
                y_tilde = Yf[e] + vei * Xf[i] + vej * Xf[j]
                Y[e] = Yf[e] + etas[i] * (y_tilde - Yf[e])
            if post_update is not None:
                post_update(i, X[i])
        k += 1
        counts += 1
        if k % async_cfg.record_every == 0:
            metric = record_metric(X, Y) if record_metric is not None else None
            raw_samples.append((k, t_now, X.copy(), Y.copy(), metric))
            if stop_below is not None:
                err = metric
                if err is None and x_star is not None:
                    err = relative_error(X, np.tile(x_star, (n, 1)), X0)
                if err is not None and err < stop_below:
                    break

    samples = _build_samples(
        raw_samples, prob, net, W, V, step_cfg, x_star, X0,
        _residual_mode(compute_residual, has_duals)
    )
    full = async_cfg.delay_mode == "full"
    delays = DelayTrace(
        max_delay=0,
        tau=np.zeros((k, n), dtype=np.int32) if full else None,
        delta=np.zeros((k, net.m if has_duals else 0), dtype=np.int32) if full else None,
    )
    return SimulationResult(
        samples=samples,
        delays=delays,
        activation=ActivationStats(counts=counts),
        state=SolverState(X=X, Y=Y, k=k),
        updates=k,
        end_time_ms=t_now,
    )


# ---------------------------------------------------------------------------
# throughput comparison
# ---------------------------------------------------------------------------


def update_throughput_ratio(
    net: NetworkSpec,
    async_cfg: AsyncConfig,
    horizon_ms: float,
) -> float:
    """Per-agent rounds completed asynchronously vs. under barrier timing.

    The asynchronous count comes from a timing-only event run; the
    synchronous baseline charges every iteration the slowest compute plus the
    slowest delivery and counts one round per agent per iteration.  Identical
    timing laws on both sides.
    """
    if horizon_ms <= 0:
        raise HorizonZero("horizon_ms must be > 0")
    n = net.n
    cfg = replace(
        async_cfg, horizon_ms=horizon_ms, max_updates=None, lockstep=False,
        delay_mode="max", record_every=1_000_000_000,
    )
    from .problems import geometric_median

    dummy = ProblemInstance(p=1, objectives=tuple(geometric_median(np.zeros(1)) for _ in range(n)))
    res = simulate(
        dummy, net, np.eye(n), np.zeros((net.m, n)), StepSizeConfig(mode="global", alpha=1.0),
        cfg, timing_only=True, use_fast=False,
    )
    async_updates = res.updates

    timing = TimingStreams(replace(async_cfg, seed=async_cfg.seed + 1), n)
    degs = [net.degree(i) for i in range(n)]
    t = 0.0
    sync_iters = 0
    while True:
        duration = max(timing.compute(i) for i in range(n))
        if net.m > 0:
            duration += max(timing.comm(i) for i in range(n) for _ in range(degs[i]))
        if t + duration > horizon_ms:
            break
        t += duration
        sync_iters += 1
    if sync_iters == 0:
        return float("inf")
    return async_updates / (n * sync_iters)
