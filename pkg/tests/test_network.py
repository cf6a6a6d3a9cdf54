"""Tests for the sigmoid network: forward map, honest cost, backprop."""

import math

import numpy as np
import pytest

from epimap.exceptions import DatasetError, InputError
from epimap.network import (
    Architecture,
    Dataset,
    Network,
    cost,
    cost_and_gradient,
    forward,
    gradient,
    init_network,
    load_model,
    model_hash,
    pairwise_rowsum,
    save_model,
)


@pytest.fixture
def small_net():
    return init_network(Architecture(5, (2,), 4), seed=1)


@pytest.fixture
def small_data():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 5))
    t = (rng.uniform(size=(10, 4)) < 0.5).astype(float)
    return Dataset(x, t)


class TestArchitecture:
    def test_weight_count(self):
        assert Architecture(5, (2,), 4).weight_count == 24
        assert Architecture(5, (3, 3), 4).weight_count == 46
        assert Architecture(2, (2,), 1).weight_count == 9

    def test_bad_width(self):
        with pytest.raises(DatasetError):
            Architecture(5, (0,), 4)


class TestForward:
    def test_zero_weights_give_half(self):
        arch = Architecture(5, (2,), 4)
        net = Network(arch, np.zeros(arch.weight_count))
        np.testing.assert_array_equal(forward(net, np.zeros(5)), 0.5)

    def test_strong_preactivation_saturates(self):
        """A final pre-activation of +20 gives o = sigma(20) ~ 1 - 2e-9."""
        arch = Architecture(1, (), 1)
        net = Network(arch, np.array([0.0, 20.0]))
        o = forward(net, np.array([0.0]))[0]
        assert o == pytest.approx(1.0 / (1.0 + math.exp(-20.0)), rel=1e-12)
        assert 0.0 < o < 1.0

    def test_outputs_in_open_interval(self, small_net):
        rng = np.random.default_rng(3)
        out = forward(small_net, rng.normal(scale=5.0, size=(50, 5)))
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_hidden_permutation_symmetry(self, small_net, small_data):
        """Swapping the two hidden neurons together with their weights
        leaves outputs (and hence Q) unchanged."""
        theta = small_net.theta.copy()
        perm = theta.copy()
        perm[0:6], perm[6:12] = theta[6:12].copy(), theta[0:6].copy()
        w2 = theta[12:24].reshape(4, 3)
        w2p = w2.copy()
        w2p[:, [0, 1]] = w2[:, [1, 0]]
        perm[12:24] = w2p.ravel()
        permuted = small_net.with_theta(perm)
        np.testing.assert_array_equal(
            forward(small_net, small_data.inputs),
            forward(permuted, small_data.inputs),
        )
        assert cost(small_net, small_data) == cost(permuted, small_data)

    def test_nonfinite_input_rejected(self, small_net):
        with pytest.raises(InputError):
            forward(small_net, np.array([1.0, np.nan, 0.0, 0.0, 0.0]))

    def test_wrong_width_rejected(self, small_net):
        with pytest.raises(InputError):
            forward(small_net, np.zeros(4))


class TestCost:
    def test_perfect_outputs_zero_cost(self):
        """In the limit o -> x the cost vanishes; huge pre-activations
        get within clamping distance of it."""
        arch = Architecture(1, (), 1)
        net = Network(arch, np.array([0.0, 500.0]))
        data = Dataset(np.array([[0.0]]), np.array([[1.0]]))
        assert cost(net, data) == pytest.approx(0.0, abs=1e-9)

    def test_single_term_value(self):
        """One sample, one output, x=1, o=0.9 gives -2 ln 0.9."""
        arch = Architecture(1, (), 1)
        net = Network(arch, np.array([0.0, math.log(9.0)]))
        data = Dataset(np.array([[0.0]]), np.array([[1.0]]))
        assert cost(net, data) == pytest.approx(-2.0 * math.log(0.9), abs=1e-12)

    def test_zero_weights_value(self):
        """Every output is 0.5, so each of the 4N terms adds 2 ln 2."""
        arch = Architecture(5, (2,), 4)
        net = Network(arch, np.zeros(arch.weight_count))
        rng = np.random.default_rng(1)
        n = 13
        data = Dataset(
            rng.normal(size=(n, 5)),
            (rng.uniform(size=(n, 4)) < 0.5).astype(float),
        )
        assert cost(net, data) == pytest.approx(8.0 * n * math.log(2.0))

    def test_duplication_doubles_exactly(self, small_net, small_data):
        doubled = Dataset(
            np.vstack([small_data.inputs, small_data.inputs]),
            np.vstack([small_data.targets, small_data.targets]),
        )
        assert cost(small_net, doubled) == 2.0 * cost(small_net, small_data)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DatasetError):
            Dataset(np.empty((0, 5)), np.empty((0, 4)))

    def test_descent_direction(self, small_net, small_data):
        """Q decreases along the negative gradient for a small step."""
        q0, g = cost_and_gradient(small_net, small_data)
        step = 1e-4 / (1.0 + np.max(np.abs(g)))
        q1 = cost(small_net.with_theta(small_net.theta - step * g), small_data)
        assert q1 < q0


class TestGradient:
    def test_matches_finite_differences(self, small_net, small_data):
        """Central finite differences of the cost as the oracle."""
        g = gradient(small_net, small_data)
        fd = np.empty_like(g)
        h = 1e-5
        for i in range(len(g)):
            up = small_net.theta.copy()
            up[i] += h
            dn = small_net.theta.copy()
            dn[i] -= h
            fd[i] = (
                cost(small_net.with_theta(up), small_data)
                - cost(small_net.with_theta(dn), small_data)
            ) / (2 * h)
        rel = np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd)))
        assert rel <= 1e-5

    def test_duplication_doubles_exactly(self, small_net, small_data):
        doubled = Dataset(
            np.vstack([small_data.inputs, small_data.inputs]),
            np.vstack([small_data.targets, small_data.targets]),
        )
        np.testing.assert_array_equal(
            gradient(small_net, doubled),
            2.0 * gradient(small_net, small_data),
        )

    def test_zero_at_exact_optimum(self):
        """A net that already matches the class frequency of a constant
        dataset has a vanishing bias gradient."""
        arch = Architecture(1, (), 1)
        # half the rows are positive; o = 0.5 is the exact optimum
        data = Dataset(np.zeros((4, 1)), np.array([[1.0], [0.0], [1.0], [0.0]]))
        net = Network(arch, np.zeros(2))
        g = gradient(net, data)
        np.testing.assert_allclose(g, 0.0, atol=1e-12)


class TestPairwiseRowsum:
    def test_matches_plain_sum(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(37, 4))
        np.testing.assert_allclose(pairwise_rowsum(a), a.sum(axis=0), rtol=1e-12)

    def test_block_doubling_exact(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(11, 3))
        stacked = np.vstack([a, a])
        np.testing.assert_array_equal(
            pairwise_rowsum(stacked), 2.0 * pairwise_rowsum(a)
        )


class TestModelFile:
    def test_roundtrip(self, tmp_path, small_net):
        path = tmp_path / "model.json"
        norm = {"mean": [0.0] * 5, "sd": [1.0] * 5}
        save_model(
            path,
            small_net,
            normalization=norm,
            seed=1,
            training={"q_final": 1.0, "fully_optimised": True},
        )
        net, meta = load_model(path)
        np.testing.assert_array_equal(net.theta, small_net.theta)
        assert net.arch == small_net.arch
        assert meta["normalization"] == norm
        assert meta["seed"] == 1
        assert meta["training"]["fully_optimised"] is True

    def test_hash_tracks_weights(self, small_net):
        h1 = model_hash(small_net)
        bumped = small_net.with_theta(small_net.theta + 1e-6)
        assert h1 != model_hash(bumped)
        assert h1 == model_hash(small_net)
