"""Benchmark instance generators, the matrix-completion loop, metrics, and runs.

Four desk-scale experiment families are generated from a seed: sparse
recovery from compressed measurements, sparse logistic regression, low-rank
matrix completion, and the geometric median.  ``run_experiment`` builds the
instance, runs the requested synchronous (barrier-timed) and asynchronous
algorithms over a common simulated horizon, and emits one CSV of trajectory
records.

Every random quantity derives from the experiment seed through tagged
streams (instance data, agent compute rates, event timing), so a config
replays byte-identically.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import (
    AsyncConfig,
    SimulationResult,
    TrajectorySample,
    predicted_q,
    simulate,
    simulate_prox_dgd,
)
from .errors import DegenerateStart, DimensionMismatch, RankDeficient, ShapeMismatch
from .problems import (
    AgentObjective,
    ProblemInstance,
    geometric_median,
    least_squares_l1,
    logistic_l1,
    prox_quadratic_matrix,
)
from .solvers import SolverState, StepSizeConfig, consensus_point, global_step, solve_reference
from .topology import (
    NetworkSpec,
    generate_geometric_network,
    incidence,
    metropolis_weights,
    scaled_incidence,
    spectral,
)

_INSTANCE_TAG = 0xDA7A
_MU_TAG = 0x00C7
_MC_INIT_TAG = 0x10F7

AREA_SIDE = 30.0
CONNECT_RADIUS = 15.0
COMM_MEAN_MS = 0.6

EXPERIMENTS = ("cs", "logistic", "matcomp", "geomedian")
ALGORITHMS = ("pg-extra", "async-pd", "prox-dgd", "async-prox-dgd")

# Step sizes follow the values reported for each benchmark family.  The
# reported relaxation scales (eta, expanded per agent as eta / (n q_i))
# were tuned for a timing law whose delays, counted in updates, are much
# larger than under this package's compute-bound timing; where a default
# had to resolve the sync-vs-async comparison we re-tuned it for the local
# timing law and kept the reported value available below.
PAPER_ETA = {"cs": 0.288, "logistic": 0.224, "matcomp": 0.204}

DEFAULTS = {
    "cs": dict(alpha=1.0, eta=0.6, dgd_alpha=0.05, dgd_eta=0.36, horizon_ms=2760.0),
    "logistic": dict(alpha=0.4, eta=0.224, dgd_alpha=0.05, dgd_eta=0.36, horizon_ms=2760.0),
    "matcomp": dict(alpha=0.1, eta=0.4, horizon_ms=4000.0),
    "geomedian": dict(alpha=1.0, eta_uniform=0.4, horizon_ms=800.0),
}


def relative_error(Xk: np.ndarray, Xstar: np.ndarray, X0: np.ndarray) -> float:
    """``||X^k - X*||_F / ||X^0 - X*||_F``.

    Raises
    ------
    DegenerateStart
        If the run started at the reference itself.
    """
    denom = float(np.linalg.norm(X0 - Xstar))
    if denom < 1e-15:
        raise DegenerateStart("||X0 - X*|| is numerically zero")
    return float(np.linalg.norm(Xk - Xstar)) / denom


def default_compute_means(seed: int, n: int) -> np.ndarray:
    """Per-agent mean compute durations ``2 + |N(0,1)|`` ms, seed-derived."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MU_TAG]))
    return 2.0 + np.abs(rng.standard_normal(n))


def _instance_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _INSTANCE_TAG]))


# ---------------------------------------------------------------------------
# instance generators
# ---------------------------------------------------------------------------


def gen_cs_instance(seed: int, return_signal: bool = False):
    """Sparse recovery: 10 agents, 3 measurements each, 50 unknowns.

    Sensing matrices and noise are standard normal, each sensing matrix is
    scaled to unit spectral norm, the signal has 20% nonzero entries, and the
    l1 weights are 0.01.
    """
    net = generate_geometric_network(10, AREA_SIDE, CONNECT_RADIUS, rng_seed=seed)
    rng = _instance_rng(seed)
    p = 50
    signal = np.zeros(p)
    support = rng.choice(p, size=p // 5, replace=False)
    signal[support] = rng.standard_normal(p // 5)
    objs = []
    for _ in range(net.n):
        A = rng.standard_normal((3, p))
        A /= np.linalg.norm(A, 2)
        noise = rng.standard_normal(3)
        objs.append(least_squares_l1(A, A @ signal + noise, 0.01))
    prob = ProblemInstance(p=p, objectives=tuple(objs))
    if return_signal:
        return prob, net, signal
    return prob, net


def logistic_labels(H: np.ndarray, x_gen: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Label rule: +1 where the uniform draw falls below the logistic link."""
    from scipy.special import expit

    return np.where(uniforms <= expit(H @ x_gen), 1.0, -1.0)


def gen_logistic_instance(seed: int, return_signal: bool = False):
    """Sparse logistic regression: 10 agents, 3 samples each, 50 features.

    Features are standard normal; labels are sampled through the logistic
    link of a generating vector with 80% zero entries; l1 weights are 0.1.
    """
    net = generate_geometric_network(10, AREA_SIDE, CONNECT_RADIUS, rng_seed=seed)
    rng = _instance_rng(seed)
    p = 50
    x_gen = np.zeros(p)
    support = rng.choice(p, size=p // 5, replace=False)
    x_gen[support] = rng.standard_normal(p // 5)
    objs = []
    for _ in range(net.n):
        H = rng.standard_normal((3, p))
        d = logistic_labels(H, x_gen, rng.uniform(size=3))
        objs.append(logistic_l1(H, d, 0.1))
    prob = ProblemInstance(p=p, objectives=tuple(objs))
    if return_signal:
        return prob, net, x_gen
    return prob, net


def gen_geomedian_instance(seed: int):
    """Geometric median: 11 agents, dimension 4, anisotropic Gaussian sites."""
    net = generate_geometric_network(11, AREA_SIDE, CONNECT_RADIUS, rng_seed=seed)
    rng = _instance_rng(seed)
    p = 4
    variances = rng.uniform(0.0, 10.0, size=p)
    sites = rng.standard_normal((net.n, p)) * np.sqrt(variances)
    objs = tuple(geometric_median(b) for b in sites)
    return ProblemInstance(p=p, objectives=objs), net


MC_CONNECT_RADIUS = 10.0  # yields ~40-55 edges on 20 nodes, the regime the
# completion loop is reported to converge in; denser graphs can limit-cycle


def mc_generate(seed: int):
    """Rank-4 completion target: 40x140 matrix, 80% observed, 20 agents.

    Returns the full matrix ``A``, the boolean observation mask, and the
    network; agent ``i`` owns the 7-column block ``A[:, 7i:7(i+1)]``.
    """
    net = generate_geometric_network(20, AREA_SIDE, MC_CONNECT_RADIUS, rng_seed=seed)
    rng = _instance_rng(seed)
    E = rng.standard_normal((40, 4))
    F = rng.standard_normal((140, 4))
    D = rng.standard_normal(4)
    A = (E * D) @ F.T
    mask = rng.uniform(size=A.shape) < 0.8
    return A, mask, net


# ---------------------------------------------------------------------------
# matrix completion
# ---------------------------------------------------------------------------


@dataclass
class MatrixCompletionState:
    """Per-agent factor state for the decentralized completion loop.

    ``X`` stacks the public low-rank bases (one ``N x r`` copy per agent),
    ``Y`` the private coefficient blocks, ``Z`` the private completed blocks
    (observed entries always equal the data), and ``Q`` one dual per edge.
    """

    X: np.ndarray  # (n, N, r)
    Y: np.ndarray  # (n, r, K_i)
    Z: np.ndarray  # (n, N, K_i)
    Q: np.ndarray  # (m, N, r)
    A_blocks: np.ndarray  # (n, N, K_i)
    masks: np.ndarray  # (n, N, K_i) bool

    def z_stack(self) -> np.ndarray:
        return np.concatenate(list(self.Z), axis=1)

    def copy(self) -> "MatrixCompletionState":
        return MatrixCompletionState(
            X=self.X.copy(), Y=self.Y.copy(), Z=self.Z.copy(), Q=self.Q.copy(),
            A_blocks=self.A_blocks, masks=self.masks,
        )


def mc_init(A: np.ndarray, mask: np.ndarray, net: NetworkSpec, seed: int, rank: int = 4):
    """Random factors; completed blocks start random but exact on observations."""
    N, K = A.shape
    n = net.n
    if K % n:
        raise DimensionMismatch(f"{K} columns do not split evenly over {n} agents")
    Ki = K // n
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MC_INIT_TAG]))
    X = rng.standard_normal((n, N, rank))
    Y = rng.standard_normal((n, rank, Ki))
    A_blocks = np.stack([A[:, i * Ki : (i + 1) * Ki] for i in range(n)])
    masks = np.stack([mask[:, i * Ki : (i + 1) * Ki] for i in range(n)])
    Z = rng.standard_normal((n, N, Ki))
    Z[masks] = A_blocks[masks]
    Q = np.zeros((net.m, N, rank))
    return MatrixCompletionState(X=X, Y=Y, Z=Z, Q=Q, A_blocks=A_blocks, masks=masks)


def mc_step2_prime(
    state: MatrixCompletionState, net: NetworkSpec, W: np.ndarray, V: np.ndarray, alpha: float
):
    """One synchronous consensus step on the public bases and edge duals.

    ``X_i <- (sum_j w_ij X_j - sum_e v_ei Q_e + alpha Z_i Y_i^T) / (alpha+1)``
    and ``Q_e <- Q_e + v_ei X_i + v_ej X_j`` with the pre-update copies.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    X, Q = state.X, state.Q
    if X.shape[0] != net.n or Q.shape[0] != net.m:
        raise ShapeMismatch("state does not match the network")
    target = np.matmul(state.Z, np.transpose(state.Y, (0, 2, 1)))  # (n, N, r)
    mixed = np.tensordot(W, X, axes=(1, 0))
    dual_pull = np.tensordot(V.T, Q, axes=(1, 0)) if net.m else 0.0
    X_new = (mixed - dual_pull + alpha * target) / (alpha + 1.0)
    Q_new = Q + np.tensordot(V, X, axes=(1, 0)) if net.m else Q.copy()
    return X_new, Q_new


def mc_step3(X_i: np.ndarray, Z_i: np.ndarray) -> np.ndarray:
    """Private coefficients from a least-squares solve against the basis.

    A rank-deficient basis is repaired with a tiny ridge (and a warning);
    only an unrepairable system raises.
    """
    gram = X_i.T @ X_i
    rhs = X_i.T @ Z_i
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        warnings.warn("basis lost column rank; adding 1e-12 ridge", stacklevel=2)
        gram = gram + 1e-12 * np.eye(gram.shape[0])
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge repairs rank loss
        raise RankDeficient("normal equations are singular") from exc


def mc_step4(X_i: np.ndarray, Y_i: np.ndarray, A_i: np.ndarray, mask_i: np.ndarray) -> np.ndarray:
    """Completed block: model values off the mask, exact data on it."""
    if A_i.shape != mask_i.shape:
        raise ShapeMismatch(f"data {A_i.shape} vs mask {mask_i.shape}")
    model = X_i @ Y_i
    if model.shape != A_i.shape:
        raise ShapeMismatch(f"model {model.shape} vs data {A_i.shape}")
    return np.where(mask_i, A_i, model)


def mc_sync_run(
    A: np.ndarray,
    mask: np.ndarray,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    alpha: float = 0.1,
    seed: int = 0,
    tol: float = 1e-3,
    max_outer: int = 2000,
):
    """Full synchronous completion loop; returns the state and error history."""
    state = mc_init(A, mask, net, seed)
    den = float(np.linalg.norm(state.z_stack() - A))
    history = []
    for _ in range(max_outer):
        X_new, Q_new = mc_step2_prime(state, net, W, V, alpha)
        state.X, state.Q = X_new, Q_new
        for i in range(net.n):
            state.Y[i] = mc_step3(state.X[i], state.Z[i])
            state.Z[i] = mc_step4(state.X[i], state.Y[i], state.A_blocks[i], state.masks[i])
        history.append(float(np.linalg.norm(state.z_stack() - A)) / den)
        if history[-1] < tol:
            break
    return state, history


def _mc_engine_problem(state: MatrixCompletionState):
    """Wrap the completion state as flattened per-agent oracles for the engine.

    Row ``i`` of the engine's primal stack is ``X_i`` raveled; the prox target
    tracks the agent's private ``Z_i Y_i^T``, refreshed by ``post_update``
    after every write.
    """
    n, N, r = state.X.shape
    targets = [np.ravel(state.Z[i] @ state.Y[i].T) for i in range(n)]

    def make_obj(i):
        def prox(u, scale):
            return (u + scale * targets[i]) / (1.0 + scale)

        return AgentObjective(
            grad_s=lambda x: np.zeros_like(x),
            prox_r=prox,
            lipschitz=0.0,
            value=lambda x: 0.0,
            kind=None,
        )

    prob = ProblemInstance(p=N * r, objectives=tuple(make_obj(i) for i in range(n)))

    def post_update(i, x_row):
        Xi = x_row.reshape(N, r)
        state.X[i] = Xi
        state.Y[i] = mc_step3(Xi, state.Z[i])
        state.Z[i] = mc_step4(Xi, state.Y[i], state.A_blocks[i], state.masks[i])
        targets[i] = np.ravel(state.Z[i] @ state.Y[i].T)

    return prob, post_update


def mc_run_engine(
    A: np.ndarray,
    mask: np.ndarray,
    net: NetworkSpec,
    W: np.ndarray,
    V: np.ndarray,
    alpha: float,
    async_cfg: AsyncConfig,
    seed: int = 0,
    stop_below: float | None = None,
) -> SimulationResult:
    """Timed completion run through the event engine (or lockstep barriers).

    The recorded metric is ``||Z - A||_F / ||Z^0 - A||_F`` over the stacked
    private blocks; exactness on observed entries is maintained by every
    local update.
    """
    state = mc_init(A, mask, net, seed)
    den = float(np.linalg.norm(state.z_stack() - A))
    prob, post_update = _mc_engine_problem(state)
    x0 = state.X.reshape(net.n, -1).copy()
    y0 = state.Q.reshape(net.m, -1).copy()

    def metric(_X, _Y):
        return float(np.linalg.norm(state.z_stack() - A)) / den

    res = simulate(
        prob, net, W, V, global_step(alpha), async_cfg,
        x0=x0, y0=y0, post_update=post_update, record_metric=metric,
        compute_residual=False, use_fast=False, stop_below=stop_below,
    )
    state.Q = res.state.Y.reshape(net.m, A.shape[0], -1)
    return res


# ---------------------------------------------------------------------------
# experiment runs and CSV output
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible comparison run."""

    experiment: str
    algorithms: tuple[str, ...] = ("pg-extra", "async-pd")
    seed: int = 0
    horizon_ms: float | None = None  # None: family default
    record_every: int = 50
    alpha: float | None = None
    eta: float | None = None
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if self.experiment == "matcomp" and not set(self.algorithms) <= {"pg-extra", "async-pd"}:
            raise ValueError("matcomp supports only pg-extra and async-pd")
        if self.horizon_ms is not None and self.horizon_ms <= 0:
            raise ValueError("horizon_ms must be > 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    algo: str
    seed: int
    k: int
    sim_time_ms: float
    rel_error: float
    residual: float


CSV_HEADER = "algo,seed,k,sim_time_ms,rel_error,residual"


def write_csv(path: str, records: list[TrajectoryRecord]) -> None:
    """Write records with full-precision (round-trippable) floats, atomically."""
    tmp = path + ".tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in records:
                fh.write(
                    f"{r.algo},{r.seed},{r.k},{r.sim_time_ms!r},{r.rel_error!r},{r.residual!r}\n"
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def read_csv(path: str) -> list[TrajectoryRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            algo, seed, k, t, rel, res = line.rstrip("\n").split(",")
            records.append(
                TrajectoryRecord(algo, int(seed), int(k), float(t), float(rel), float(res))
            )
    return records


@dataclass
class InstanceBundle:
    """Everything one experiment family needs, derived from a single seed."""

    experiment: str
    seed: int
    net: NetworkSpec
    W: np.ndarray
    V: np.ndarray
    prob: ProblemInstance | None = None
    mc_A: np.ndarray | None = None
    mc_mask: np.ndarray | None = None

    @property
    def compute_means(self) -> np.ndarray:
        return default_compute_means(self.seed, self.net.n)

    @property
    def q(self) -> np.ndarray:
        return predicted_q(self.compute_means)


def build_instance(experiment: str, seed: int) -> InstanceBundle:
    if experiment == "cs":
        prob, net = gen_cs_instance(seed)
    elif experiment == "logistic":
        prob, net = gen_logistic_instance(seed)
    elif experiment == "geomedian":
        prob, net = gen_geomedian_instance(seed)
    elif experiment == "matcomp":
        A, mask, net = mc_generate(seed)
        W = metropolis_weights(net)
        V = scaled_incidence(W, incidence(net)).V
        return InstanceBundle(experiment, seed, net, W, V, mc_A=A, mc_mask=mask)
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    W = metropolis_weights(net)
    V = scaled_incidence(W, incidence(net)).V
    return InstanceBundle(experiment, seed, net, W, V, prob=prob)


def get_reference(
    bundle: InstanceBundle, cache_dir: str | None = None, max_iters: int = 1_500_000
) -> SolverState:
    """Reference primal-dual solution at residual 1e-12, cached per instance.

    Some seeds are weakly conditioned, so the iteration budget is generous;
    the compiled synchronous kernel keeps even the slow ones to seconds.
    """
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"ref_{bundle.experiment}_{bundle.seed}.npz")
        if os.path.exists(path):
            data = np.load(path)
            X, Y = data["X"], data["Y"]
            if X.shape == (bundle.net.n, bundle.prob.p) and Y.shape == (bundle.net.m, bundle.prob.p):
                return SolverState(X=X, Y=Y, k=int(data["k"]))
    ref = solve_reference(bundle.prob, bundle.net, bundle.W, bundle.V, tol=1e-12, max_iters=max_iters)
    if path is not None:
        np.savez(path, X=ref.X, Y=ref.Y, k=ref.k)
    return ref


def experiment_bounds(experiment: str, seed: int) -> dict:
    """Spectral and step-size diagnostics for an instance, without running it."""
    from .engine import eta_max_bound

    bundle = build_instance(experiment, seed)
    spec = spectral(bundle.W, bundle.V)
    q = bundle.q
    L = bundle.prob.max_lipschitz if bundle.prob is not None else 0.0
    out = {
        "experiment": experiment,
        "seed": seed,
        "n": bundle.net.n,
        "m": bundle.net.m,
        "rho_min": spec.rho_min,
        "lambda_max_G": spec.lambda_max_G,
        "kappa": spec.kappa,
        "max_lipschitz": L,
        "alpha_bound": (2.0 * spec.rho_min / L) if L > 0 else float("inf"),
        "predicted_q": q,
        "eta_max_tau0": eta_max_bound(bundle.net.n, float(q.min()), spec.kappa, 0),
        "eta_max_tau10": eta_max_bound(bundle.net.n, float(q.min()), spec.kappa, 10),
    }
    return out


def _timing_kwargs(cfg: ExperimentConfig, bundle: InstanceBundle, horizon: float) -> dict:
    return dict(
        compute_means=bundle.compute_means,
        comm_mean=COMM_MEAN_MS,
        horizon_ms=horizon,
        seed=cfg.seed,
        record_every=cfg.record_every,
        delay_mode="max",
    )


def _to_records(algo: str, seed: int, samples: list[TrajectorySample]) -> list[TrajectoryRecord]:
    return [
        TrajectoryRecord(
            algo=algo, seed=seed, k=s.k, sim_time_ms=s.t_ms,
            rel_error=s.rel_error, residual=s.residual,
        )
        for s in samples
    ]


def _run_vector_algo(
    cfg: ExperimentConfig, bundle: InstanceBundle, algo: str, x_star: np.ndarray
) -> list[TrajectoryRecord]:
    fam = DEFAULTS[cfg.experiment]
    horizon = cfg.horizon_ms if cfg.horizon_ms is not None else fam["horizon_ms"]
    base = _timing_kwargs(cfg, bundle, horizon)
    n = bundle.net.n
    if algo in ("pg-extra", "async-pd"):
        alpha = cfg.alpha if cfg.alpha is not None else fam["alpha"]
        if algo == "pg-extra":
            acfg = AsyncConfig(eta=1.0, lockstep=True, algorithm="primal-dual", **base)
        else:
            if cfg.eta is not None:
                eta = cfg.eta
            elif "eta_uniform" in fam:
                eta = np.full(n, fam["eta_uniform"])
            else:
                eta = fam["eta"]
            acfg = AsyncConfig(eta=eta, algorithm="primal-dual", **base)
        res = simulate(
            bundle.prob, bundle.net, bundle.W, bundle.V, global_step(alpha), acfg, x_star=x_star
        )
    else:
        alpha = cfg.alpha if cfg.alpha is not None else fam.get("dgd_alpha", fam["alpha"])
        if algo == "prox-dgd":
            acfg = AsyncConfig(eta=1.0, lockstep=True, algorithm="prox-dgd", **base)
        else:
            eta = cfg.eta if cfg.eta is not None else fam.get("dgd_eta", fam.get("eta", 0.5))
            acfg = AsyncConfig(eta=eta, algorithm="prox-dgd", **base)
        res = simulate_prox_dgd(bundle.prob, bundle.net, bundle.W, alpha, acfg, x_star=x_star)
    return _to_records(algo, cfg.seed, res.samples)


def _run_matcomp_algo(cfg: ExperimentConfig, bundle: InstanceBundle, algo: str):
    fam = DEFAULTS["matcomp"]
    horizon = cfg.horizon_ms if cfg.horizon_ms is not None else fam["horizon_ms"]
    alpha = cfg.alpha if cfg.alpha is not None else fam["alpha"]
    base = _timing_kwargs(cfg, bundle, horizon)
    if algo == "pg-extra":
        acfg = AsyncConfig(eta=1.0, lockstep=True, algorithm="primal-dual", **base)
    else:
        eta = cfg.eta if cfg.eta is not None else fam["eta"]
        acfg = AsyncConfig(eta=eta, algorithm="primal-dual", **base)
    res = mc_run_engine(
        bundle.mc_A, bundle.mc_mask, bundle.net, bundle.W, bundle.V, alpha, acfg, seed=cfg.seed
    )
    return _to_records(algo, cfg.seed, res.samples)


def run_experiment(cfg: ExperimentConfig) -> list[TrajectoryRecord]:
    """Build the seeded instance, run every requested algorithm, emit one CSV.

    Synchronous algorithms run under charged barrier timing; asynchronous
    ones through the event engine; all share the instance, the timing law,
    and the simulated horizon.  The CSV (when ``cfg.out`` is set) is written
    atomically, so a failed run leaves no partial output.
    """
    bundle = build_instance(cfg.experiment, cfg.seed)
    records: list[TrajectoryRecord] = []
    if cfg.experiment == "matcomp":
        for algo in cfg.algorithms:
            records.extend(_run_matcomp_algo(cfg, bundle, algo))
    else:
        cache_dir = os.path.dirname(os.path.abspath(cfg.out)) if cfg.out else None
        ref = get_reference(bundle, cache_dir)
        x_star = consensus_point(ref.X)
        for algo in cfg.algorithms:
            records.extend(_run_vector_algo(cfg, bundle, algo, x_star))
    if cfg.out:
        write_csv(cfg.out, records)
    return records
