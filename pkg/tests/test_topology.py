import json

import numpy as np
import pytest

from dcl.errors import ConnectivityFailure, FactorizationMismatch, NotPositiveDefinite
from dcl.topology import (
    NetworkSpec,
    ScaledIncidence,
    generate_geometric_network,
    incidence,
    metric_matrix,
    metropolis_weights,
    scaled_incidence,
    spectral,
)


def build(net):
    W = metropolis_weights(net)
    si = scaled_incidence(W, incidence(net))
    return W, si


PATH2 = NetworkSpec(n=2, edges=((0, 1),))
STAR3 = NetworkSpec(n=3, edges=((0, 1), (0, 2)))
TRIANGLE = NetworkSpec(n=3, edges=((0, 1), (0, 2), (1, 2)))
SINGLE = NetworkSpec(n=1, edges=())


class TestNetworkSpec:
    def test_index_sets(self):
        net = STAR3
        assert net.neighbor_sets == ((0, 1, 2), (0, 1), (0, 2))
        assert net.edge_sets == ((0, 1), (0,), (1,))
        assert net.owned_edges == ((0, 1), (), ())

    def test_owned_edges_partition(self):
        net = generate_geometric_network(12, rng_seed=3)
        owned = [e for own in net.owned_edges for e in own]
        assert sorted(owned) == list(range(net.m))
        for i, own in enumerate(net.owned_edges):
            assert set(own) <= set(net.edge_sets[i])

    def test_rejects_disconnected(self):
        with pytest.raises(ValueError, match="not connected"):
            NetworkSpec(n=3, edges=((0, 1),))

    def test_rejects_bad_edges(self):
        with pytest.raises(ValueError):
            NetworkSpec(n=3, edges=((1, 0),))
        with pytest.raises(ValueError):
            NetworkSpec(n=2, edges=((0, 1), (0, 1)))

    def test_json_round_trip(self):
        net = generate_geometric_network(8, rng_seed=11)
        doc = net.to_json()
        assert json.loads(doc).keys() == {"n", "edges", "seed"}
        back = NetworkSpec.from_json(doc)
        assert back == net


class TestGeometricNetwork:
    def test_single_node(self):
        net = generate_geometric_network(1, rng_seed=0)
        assert net.n == 1 and net.m == 0

    def test_two_nodes_forced_adjacency(self):
        net = generate_geometric_network(2, area_side=30, radius=30 * np.sqrt(2), rng_seed=5)
        assert net.edges == ((0, 1),)

    def test_paper_scale_instance_connected(self):
        net = generate_geometric_network(10, area_side=30, radius=15, rng_seed=1)
        assert net.n == 10 and net.m >= net.n - 1

    def test_determinism(self):
        a = generate_geometric_network(10, rng_seed=7)
        b = generate_geometric_network(10, rng_seed=7)
        assert a == b

    def test_connectivity_failure(self):
        with pytest.raises(ConnectivityFailure):
            generate_geometric_network(20, area_side=30, radius=1e-3, rng_seed=0, max_attempts=10)


class TestMetropolisWeights:
    def test_two_node_path(self):
        W = metropolis_weights(PATH2)
        assert np.allclose(W, [[0.5, 0.5], [0.5, 0.5]], atol=0)

    def test_three_node_star(self):
        W = metropolis_weights(STAR3)
        assert W[0, 1] == pytest.approx(1 / 3)
        assert W[0, 2] == pytest.approx(1 / 3)
        assert W[0, 0] == pytest.approx(1 / 3)
        assert W[1, 1] == pytest.approx(2 / 3)

    def test_single_node_identity(self):
        assert np.array_equal(metropolis_weights(SINGLE), [[1.0]])

    @pytest.mark.parametrize("seed", range(8))
    def test_invariants_random_networks(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 31))
        net = generate_geometric_network(n, radius=rng.uniform(12, 40), rng_seed=seed)
        W = metropolis_weights(net)
        assert np.array_equal(W, W.T)
        assert np.max(np.abs(W.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(np.diag(W) > 0)
        eig = np.linalg.eigvalsh(W)
        assert eig[0] > -1.0 and eig[-1] <= 1.0 + 1e-12


class TestIncidence:
    def test_single_edge(self):
        assert np.array_equal(incidence(PATH2), [[1.0, -1.0]])

    def test_empty(self):
        C = incidence(SINGLE)
        assert C.shape == (0, 1)

    def test_triangle(self):
        C = incidence(TRIANGLE)
        assert np.array_equal(C, [[1, -1, 0], [1, 0, -1], [0, 1, -1]])

    @pytest.mark.parametrize("seed", range(4))
    def test_rows_two_nonzeros_summing_to_zero(self, seed):
        net = generate_geometric_network(15, rng_seed=seed)
        C = incidence(net)
        assert np.all((C != 0).sum(axis=1) == 2)
        assert np.all(C.sum(axis=1) == 0)


class TestScaledIncidence:
    def test_two_node_values(self):
        W, si = build(PATH2)
        assert np.allclose(si.V, [[0.5, -0.5]], atol=0)
        assert np.allclose(si.V.T @ si.V, (np.eye(2) - W) / 2, atol=1e-15)

    def test_empty_graph_forces_identity_weights(self):
        W, si = build(SINGLE)
        assert si.V.shape == (0, 1)

    def test_star_identity_holds(self):
        W, si = build(STAR3)
        assert np.max(np.abs(si.V.T @ si.V - (np.eye(3) - W) / 2)) < 1e-12

    def test_mismatched_inputs_raise(self):
        W, _ = build(PATH2)
        C_wrong = incidence(PATH2) * 2.0  # breaks the +1/-1 convention
        with pytest.raises(FactorizationMismatch):
            scaled_incidence(W, C_wrong)

    @pytest.mark.parametrize("seed", range(8))
    def test_factorization_random(self, seed):
        net = generate_geometric_network(4 + 3 * seed, rng_seed=seed)
        W, si = build(net)
        assert np.max(np.abs(si.V.T @ si.V - (np.eye(net.n) - W) / 2)) < 1e-12


class TestSpectral:
    def test_two_node_closed_forms(self):
        # eigenvalues of G are 1 +- the singular values of V
        W, si = build(PATH2)
        s = spectral(W, si.V)
        assert s.rho_min == pytest.approx(1 - np.sqrt(0.5), abs=1e-14)
        assert s.lambda_max_G == pytest.approx(1 + np.sqrt(0.5), abs=1e-14)
        assert s.kappa == pytest.approx((1 + np.sqrt(0.5)) / (1 - np.sqrt(0.5)), abs=1e-12)

    def test_edgeless_graph(self):
        W, si = build(SINGLE)
        s = spectral(W, si.V)
        assert s.rho_min == pytest.approx(1.0)
        assert s.kappa == pytest.approx(1.0)

    def test_random_network_positive(self):
        net = generate_geometric_network(10, rng_seed=2)
        W, si = build(net)
        s = spectral(W, si.V)
        assert s.rho_min > 0
        assert s.kappa >= 1

    def test_invalid_mixing_matrix(self):
        W = np.array([[0.0, 1.0], [1.0, 0.0]])  # lambda_min = -1
        V = np.array([[np.sqrt(0.5), -np.sqrt(0.5)]])
        with pytest.raises(NotPositiveDefinite):
            spectral(W, V)

    def test_metric_matrix_blocks(self):
        _, si = build(TRIANGLE)
        G = metric_matrix(si.V)
        n, m = 3, 3
        assert np.array_equal(G[:n, :n], np.eye(n))
        assert np.array_equal(G[n:, n:], np.eye(m))
        assert np.array_equal(G[n:, :n], si.V)
