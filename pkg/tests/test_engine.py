import numpy as np
import pytest

from dcl.engine import (
    ActivationStats,
    AsyncConfig,
    EventQueue,
    Mailbox,
    SimulationResult,
    TimingStreams,
    eta_max_bound,
    predicted_q,
    relaxation_parameters,
    simulate,
    simulate_prox_dgd,
    update_throughput_ratio,
)
from dcl.errors import DegenerateProbability, HorizonZero, NonPositiveMean, ShapeMismatch
from dcl.problems import AgentObjective, ProblemInstance, geometric_median, least_squares_l1
from dcl.solvers import (
    SolverState,
    global_step,
    initial_state,
    m_norm_distance,
    pg_extra_step,
    prox_dgd_step,
    solve_reference,
)
from dcl.topology import (
    NetworkSpec,
    generate_geometric_network,
    incidence,
    metropolis_weights,
    scaled_incidence,
    spectral,
)

PATH2 = NetworkSpec(n=2, edges=((0, 1),))


def network_pieces(net):
    W = metropolis_weights(net)
    V = scaled_incidence(W, incidence(net)).V
    return W, V


def ls_consensus_problem(net, p=2, seed=0, theta=0.02):
    rng = np.random.default_rng(seed)
    objs = tuple(
        least_squares_l1(rng.standard_normal((2, p)) / (2 + p / 2), rng.standard_normal(2), theta)
        for _ in range(net.n)
    )
    return ProblemInstance(p=p, objectives=objs)


class TestActivationLaws:
    def test_predicted_q_symmetric(self):
        assert np.allclose(predicted_q(np.array([2.0, 2.0])), [0.5, 0.5])

    def test_predicted_q_harmonic(self):
        assert np.allclose(predicted_q(np.array([1.0, 3.0])), [0.75, 0.25])

    def test_predicted_q_rejects_nonpositive(self):
        with pytest.raises(NonPositiveMean):
            predicted_q(np.array([1.0, 0.0]))

    def test_empirical_matches_predicted(self):
        # Monte Carlo against the simulator: 1e5 updates, within 0.01 absolute
        net = generate_geometric_network(10, rng_seed=3)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=2)
        mu = 2.0 + np.abs(np.random.default_rng(7).standard_normal(net.n))
        cfg = AsyncConfig(
            compute_means=mu, comm_mean=0.6, eta=0.5, max_updates=100_000,
            seed=11, record_every=10**9, delay_mode="max",
        )
        res = simulate(prob, net, W, V, global_step(0.3), cfg, timing_only=True)
        assert np.max(np.abs(res.activation.q_hat - predicted_q(mu))) < 0.01

    def test_activation_stats_requires_updates(self):
        with pytest.raises(DegenerateProbability):
            ActivationStats(counts=np.zeros(3, dtype=int)).q_hat


class TestRelaxationRules:
    def test_uniform_q_gives_eta(self):
        q = np.full(4, 0.25)
        assert np.allclose(relaxation_parameters(q, 0.7), 0.7)

    def test_paper_scalings_are_eta_over_nq(self):
        # reported per-agent relaxations c/q_i correspond to eta = n*c
        q = predicted_q(np.array([2.1, 2.9, 3.4, 2.2, 4.0, 2.0, 2.5, 3.0, 2.8, 2.4]))
        assert np.allclose(relaxation_parameters(q, 10 * 0.0288), 0.0288 / q)
        assert np.allclose(relaxation_parameters(q, 10 * 0.0224), 0.0224 / q)

    def test_degenerate_probability(self):
        with pytest.raises(DegenerateProbability):
            relaxation_parameters(np.array([0.5, 0.0]), 0.5)

    def test_eta_max_closed_forms(self):
        kappa = (1 + np.sqrt(0.5)) / (1 - np.sqrt(0.5))
        assert eta_max_bound(2, 0.5, kappa, 0) == pytest.approx(1 / kappa, rel=1e-12)
        expected = 1.0 / (2 * np.sqrt(kappa * 0.5) + kappa)
        assert eta_max_bound(2, 0.5, kappa, 1) == pytest.approx(expected, rel=1e-12)
        assert eta_max_bound(2, 0.5, kappa, 0) == pytest.approx(0.17157287525380988, abs=1e-10)
        assert eta_max_bound(2, 0.5, kappa, 1) == pytest.approx(0.10819418255099768, abs=1e-8)

    def test_eta_max_monotone(self):
        taus = np.arange(0, 40, 3)
        vals = [eta_max_bound(10, 0.08, 7.0, t) for t in taus]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        kappas = np.linspace(1.5, 30, 12)
        vals_k = [eta_max_bound(10, 0.08, k, 5) for k in kappas]
        assert all(a > b for a, b in zip(vals_k, vals_k[1:]))


class TestMailbox:
    def test_monotone_discard(self):
        x0 = np.zeros((2, 3))
        y0 = np.zeros((1, 3))
        mb = Mailbox([1], [0], x0, y0)
        assert mb.deliver_x(1, np.ones(3), stamp=5)
        assert not mb.deliver_x(1, 7 * np.ones(3), stamp=4)  # stale, discarded
        assert np.allclose(mb.x_vals[0], 1.0)
        assert not mb.deliver_x(1, 7 * np.ones(3), stamp=5)  # equal stamp, discarded
        assert mb.deliver_x(1, 2 * np.ones(3), stamp=6)
        assert mb.x_stamps[0] == 6
        assert mb.deliver_y(0, np.full(3, 9.0), stamp=3)
        assert not mb.deliver_y(0, np.zeros(3), stamp=2)
        assert np.allclose(mb.y_vals[0], 9.0)

    def test_snapshot_is_a_copy(self):
        mb = Mailbox([1], [], np.zeros((2, 2)), np.zeros((0, 2)))
        snap_x, snap_xs, _, _ = mb.snapshot()
        mb.deliver_x(1, np.ones(2), stamp=1)
        assert np.allclose(snap_x, 0.0) and snap_xs[0] == 0


class TestEventQueue:
    def test_pop_order_time_then_sequence(self):
        q = EventQueue()
        q.push(2.0, 0, 1)
        q.push(1.0, 0, 2)
        q.push(1.0, 1, 3)  # same time: insertion order decides
        order = [q.pop()[3] for _ in range(3)]
        assert order == [2, 3, 1]


class TestLockstep:
    def test_reproduces_synchronous_updates(self):
        net = generate_geometric_network(6, rng_seed=4)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=3, seed=1)
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.6, eta=1.0, max_updates=200, seed=0, record_every=50
        )
        res = simulate(prob, net, W, V, global_step(0.4), cfg)
        state = initial_state(net, 3)
        for _ in range(200):
            state = pg_extra_step(state, prob, net, W, V, global_step(0.4))
        assert np.max(np.abs(res.state.X - state.X)) < 1e-12
        assert np.max(np.abs(res.state.Y - state.Y)) < 1e-12
        assert res.delays.max_delay == 0

    def test_prox_dgd_lockstep_matches_sync(self):
        net = generate_geometric_network(5, rng_seed=9)
        W, _ = network_pieces(net)
        prob = ls_consensus_problem(net, p=2, seed=2)
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.6, eta=1.0, max_updates=120, seed=0,
            record_every=40, algorithm="prox-dgd", lockstep=True,
        )
        res = simulate_prox_dgd(prob, net, W, 0.1, cfg)
        X = np.zeros((net.n, 2))
        for _ in range(120):
            X = prox_dgd_step(X, prob, W, 0.1)
        assert np.max(np.abs(res.state.X - X)) < 1e-12

    def test_barrier_timing_charges_both_waits(self):
        # deterministic times: every tick costs max compute + max delivery
        net = PATH2
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=1)
        cfg = AsyncConfig(
            compute_means=np.array([2.0, 5.0]), comm_mean=0.7, eta=1.0, max_updates=10,
            seed=0, record_every=1, lockstep=True, deterministic_times=True,
        )
        res = simulate(prob, net, W, V, global_step(0.3), cfg)
        assert res.end_time_ms == pytest.approx(10 * (5.0 + 0.7))
        assert [s.t_ms for s in res.samples] == pytest.approx([(5.7) * k for k in range(1, 11)])


class TestEventLoop:
    def test_deterministic_replay(self):
        net = generate_geometric_network(7, rng_seed=5)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=3, seed=3)
        cfg = AsyncConfig(
            compute_means=2 + np.linspace(0, 2, net.n), comm_mean=0.6, eta=0.5,
            max_updates=4000, seed=21, record_every=500,
        )
        a = simulate(prob, net, W, V, global_step(0.3), cfg, use_fast=False)
        b = simulate(prob, net, W, V, global_step(0.3), cfg, use_fast=False)
        assert np.array_equal(a.state.X, b.state.X)
        assert np.array_equal(a.state.Y, b.state.Y)
        assert [s.t_ms for s in a.samples] == [s.t_ms for s in b.samples]

    def test_fast_path_matches_reference_path(self):
        net = generate_geometric_network(8, rng_seed=6)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=4, seed=4)
        cfg = AsyncConfig(
            compute_means=2 + np.abs(np.random.default_rng(0).standard_normal(net.n)),
            comm_mean=0.6, eta=0.4, max_updates=6000, seed=9, record_every=1000,
            delay_mode="max",
        )
        slow = simulate(prob, net, W, V, global_step(0.3), cfg, use_fast=False)
        fast = simulate(prob, net, W, V, global_step(0.3), cfg, use_fast=True)
        assert np.max(np.abs(slow.state.X - fast.state.X)) < 1e-12
        assert np.max(np.abs(slow.state.Y - fast.state.Y)) < 1e-12
        assert np.array_equal(slow.activation.counts, fast.activation.counts)
        assert slow.delays.max_delay == fast.delays.max_delay
        assert slow.end_time_ms == pytest.approx(fast.end_time_ms)

    def test_ownership_discipline(self):
        net = generate_geometric_network(6, rng_seed=8)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=2, seed=5)
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.6, eta=0.5, max_updates=1500, seed=2,
            record_every=10**9,
        )
        log = []
        simulate(prob, net, W, V, global_step(0.3), cfg, audit=log, use_fast=False)
        assert log, "no writes recorded"
        for agent, kind, row in log:
            if kind == "x":
                assert row == agent
            else:
                assert row in net.owned_edges[agent]

    def test_delay_accounting(self):
        net = generate_geometric_network(5, rng_seed=2)
        W, V = network_pieces(net)
        prob = ls_consensus_problem(net, p=2, seed=6)
        cfg = AsyncConfig(
            compute_means=np.linspace(2, 4, net.n), comm_mean=0.6, eta=0.5,
            max_updates=2000, seed=3, record_every=10**9, delay_mode="full",
        )
        res = simulate(prob, net, W, V, global_step(0.3), cfg, use_fast=False)
        tau, delta = res.delays.tau, res.delays.delta
        assert tau.shape == (2000, net.n) and delta.shape == (2000, net.m)
        assert tau.min() >= 0 and delta.min() >= 0
        assert max(tau.max(), delta.max()) == res.delays.max_delay
        assert res.delays.max_delay > 0  # real staleness occurred

    def test_stop_below_ends_early(self):
        W, V = network_pieces(PATH2)
        prob = ls_consensus_problem(PATH2, p=2, seed=7, theta=0.0)
        ref = solve_reference(prob, PATH2, W, V, tol=1e-12)
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.5, eta=0.8, max_updates=500_000, seed=5,
            record_every=200, delay_mode="max",
        )
        res = simulate(
            prob, PATH2, W, V, global_step(0.4), cfg,
            x_star=ref.X.mean(axis=0), stop_below=1e-3,
        )
        assert res.updates < 500_000
        assert res.samples[-1].rel_error < 1e-3

    def test_event_log_export(self):
        W, V = network_pieces(PATH2)
        prob = ls_consensus_problem(PATH2, p=1)
        cfg = AsyncConfig(
            compute_means=1.0, comm_mean=0.2, eta=0.5, max_updates=50, seed=1,
            record_every=10**9,
        )
        log = []
        simulate(prob, PATH2, W, V, global_step(0.3), cfg, event_log=log, use_fast=False)
        kinds = {row[1] for row in log}
        assert kinds == {"compute", "message"}
        times = [row[0] for row in log]
        assert times == sorted(times)

    def test_horizon_required(self):
        W, V = network_pieces(PATH2)
        prob = ls_consensus_problem(PATH2, p=1)
        cfg = AsyncConfig(compute_means=1.0, comm_mean=0.2, eta=0.5, seed=1)
        with pytest.raises(HorizonZero):
            simulate(prob, PATH2, W, V, global_step(0.3), cfg)

    def test_shape_mismatch(self):
        W, V = network_pieces(PATH2)
        prob = ls_consensus_problem(PATH2, p=2)
        cfg = AsyncConfig(compute_means=1.0, comm_mean=0.2, eta=0.5, max_updates=5, seed=1)
        with pytest.raises(ShapeMismatch):
            simulate(prob, PATH2, W, V, global_step(0.3), cfg, x0=np.zeros((3, 2)))


class TestAsyncConvergence:
    @pytest.mark.parametrize("seed", range(20))
    def test_two_node_consensus_all_seeds(self, seed):
        # eta sized by the delay bound observed in a timing pilot
        W, V = network_pieces(PATH2)
        prob = ProblemInstance(
            p=1,
            objectives=(
                least_squares_l1(np.eye(1), np.array([0.0]), 0.0),
                least_squares_l1(np.eye(1), np.array([2.0]), 0.0),
            ),
        )
        spec = spectral(W, V)
        ref = solve_reference(prob, PATH2, W, V, tol=1e-13)
        mu = np.array([2.0, 3.0])
        cfg = AsyncConfig(
            compute_means=mu, comm_mean=0.6, eta=0.5, max_updates=40_000,
            seed=seed, record_every=2000, delay_mode="max",
        )
        pilot = simulate(prob, PATH2, W, V, global_step(0.5), cfg, timing_only=True)
        tau = pilot.delays.max_delay
        q_min = float(predicted_q(mu).min())
        eta = 0.8 * eta_max_bound(2, q_min, spec.kappa, tau)
        run_cfg = AsyncConfig(
            compute_means=mu, comm_mean=0.6, eta=eta, max_updates=40_000,
            seed=seed, record_every=2000, delay_mode="max",
        )
        res = simulate(
            prob, PATH2, W, V, global_step(0.5), run_cfg,
            x_star=ref.X.mean(axis=0), stop_below=1e-4,
        )
        assert res.samples[-1].rel_error < 1e-4

    def test_stochastic_fejer_trend(self):
        # across-seed mean distance to the solution is nonincreasing (1% slack)
        net = PATH2
        W, V = network_pieces(net)
        prob = ProblemInstance(
            p=1,
            objectives=(
                least_squares_l1(np.eye(1), np.array([0.0]), 0.0),
                least_squares_l1(np.eye(1), np.array([2.0]), 0.0),
            ),
        )
        spec = spectral(W, V)
        alpha = 0.5
        ref = solve_reference(prob, net, W, V, tol=1e-13, cfg=global_step(alpha))
        mu = np.array([2.0, 3.0])
        q_min = float(predicted_q(mu).min())
        base = AsyncConfig(
            compute_means=mu, comm_mean=0.6, eta=0.5, max_updates=4000,
            seed=0, record_every=200, delay_mode="max",
        )
        pilot = simulate(prob, net, W, V, global_step(alpha), base, timing_only=True)
        eta = 0.8 * eta_max_bound(2, q_min, spec.kappa, pilot.delays.max_delay)

        def mdist(X, Y):
            return m_norm_distance(SolverState(X=X, Y=Y), ref, V, alpha)

        curves = []
        for seed in range(50):
            cfg = AsyncConfig(
                compute_means=mu, comm_mean=0.6, eta=eta, max_updates=4000,
                seed=seed, record_every=200, delay_mode="max",
            )
            res = simulate(
                prob, net, W, V, global_step(alpha), cfg,
                record_metric=mdist, compute_residual=False, use_fast=False,
            )
            curves.append([s.rel_error for s in res.samples])  # metric hook output
        mean = np.mean(np.array(curves), axis=0)
        assert np.all(mean[1:] <= mean[:-1] * 1.01)

    def test_prox_dgd_pure_averaging_under_delays(self):
        net = generate_geometric_network(6, rng_seed=11)
        W, _ = network_pieces(net)
        objs = tuple(
            least_squares_l1(np.zeros((1, 2)), np.zeros(1), 0.0) for _ in range(net.n)
        )
        prob = ProblemInstance(p=2, objectives=objs)
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((net.n, 2))
        cfg = AsyncConfig(
            compute_means=2 + np.arange(net.n) * 0.4, comm_mean=1.5, eta=0.5,
            max_updates=20_000, seed=4, record_every=10**9, delay_mode="max",
        )
        res = simulate_prox_dgd(prob, net, W, 0.1, cfg, x0=x0)
        spread0 = np.max(np.abs(x0 - x0.mean(axis=0)))
        spread1 = np.max(np.abs(res.state.X - res.state.X.mean(axis=0)))
        assert spread1 < 1e-3 * spread0


class TestThroughputRatio:
    def test_no_waiting_gives_ratio_one(self):
        net = generate_geometric_network(6, rng_seed=13)
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.0, eta=0.5, seed=0, deterministic_times=True
        )
        assert update_throughput_ratio(net, cfg, horizon_ms=500.0) == pytest.approx(1.0)

    def test_slow_agent_increases_ratio(self):
        net = generate_geometric_network(10, rng_seed=14)
        hom = AsyncConfig(compute_means=np.full(10, 2.0), comm_mean=0.6, eta=0.5, seed=3)
        het_mu = np.full(10, 2.0)
        het_mu[0] = 10.0
        het = AsyncConfig(compute_means=het_mu, comm_mean=0.6, eta=0.5, seed=3)
        r_hom = update_throughput_ratio(net, hom, horizon_ms=3000.0)
        r_het = update_throughput_ratio(net, het, horizon_ms=3000.0)
        assert r_het > r_hom

    def test_paper_timing_exceeds_two(self):
        rng = np.random.default_rng(1)
        for seed in range(3):
            net = generate_geometric_network(10, rng_seed=seed)
            mu = 2.0 + np.abs(rng.standard_normal(10))
            cfg = AsyncConfig(compute_means=mu, comm_mean=0.6, eta=0.5, seed=seed)
            assert update_throughput_ratio(net, cfg, horizon_ms=2760.0) > 2.0


class TestAsyncConfig:
    def test_eta_expansion_scalar(self):
        mu = np.array([2.0, 4.0])
        cfg = AsyncConfig(compute_means=mu, comm_mean=0.5, eta=0.3, max_updates=1, seed=0)
        q = predicted_q(mu)
        assert np.allclose(cfg.etas_vector(2), 0.3 / (2 * q))

    def test_eta_expansion_lockstep_uniform(self):
        cfg = AsyncConfig(
            compute_means=np.array([2.0, 4.0]), comm_mean=0.5, eta=1.0,
            max_updates=1, seed=0, lockstep=True,
        )
        assert np.allclose(cfg.etas_vector(2), 1.0)

    def test_explicit_eta_vector(self):
        cfg = AsyncConfig(
            compute_means=2.0, comm_mean=0.5, eta=np.array([0.1, 0.9]), max_updates=1, seed=0
        )
        assert np.allclose(cfg.etas_vector(2), [0.1, 0.9])

    def test_validation(self):
        with pytest.raises(ValueError):
            AsyncConfig(compute_means=2.0, comm_mean=0.5, algorithm="nope")
        with pytest.raises(NonPositiveMean):
            AsyncConfig(compute_means=2.0, comm_mean=-1.0)
        cfg = AsyncConfig(compute_means=np.array([2.0, -1.0]), comm_mean=0.5)
        with pytest.raises(NonPositiveMean):
            cfg.means_vector(2)


class TestTimingStreams:
    def test_streams_are_replayable_and_batch_invariant(self):
        cfg = AsyncConfig(compute_means=np.array([2.0, 3.0]), comm_mean=0.5, seed=12)
        a = TimingStreams(cfg, 2)
        b = TimingStreams(cfg, 2)
        singles = [a.compute(0) for _ in range(5)]
        assert np.allclose(b.compute_batch(0, 5), singles)

    def test_deterministic_mode(self):
        cfg = AsyncConfig(
            compute_means=np.array([2.0, 3.0]), comm_mean=0.5, seed=12,
            deterministic_times=True,
        )
        t = TimingStreams(cfg, 2)
        assert t.compute(0) == 2.0 and t.compute(1) == 3.0 and t.comm(0) == 0.5
