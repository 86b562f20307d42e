import numpy as np
import pytest

from voltgame.sensitivity import (
    EmptyChainError,
    IndexOutOfRangeError,
    build_sensitivity,
    chain_eigen_bounds,
    chain_x_inverse,
    uniform_chain_eigenvalues,
    x_inverse_analytic,
)
from voltgame.topology import (
    BusData,
    DegreeDistribution,
    Line,
    RadialNetwork,
    chain_network,
    path_to_root,
    random_tree,
)

from oracles import sensitivity_by_paths


def fig_tree(a=2.0, b=3.0, c=5.0, d=7.0, rs=(0.1, 0.2, 0.3, 0.4)):
    lines = (Line(0, 1, rs[0], a), Line(1, 2, rs[1], b), Line(2, 3, rs[2], c), Line(1, 4, rs[3], d))
    return RadialNetwork(n=4, lines=lines, buses=tuple(BusData() for _ in range(4)))


def random_tree_for(seed, depth=6, x_range=(0.1, 2.0)):
    dist = DegreeDistribution({1: 0.4, 2: 0.4, 3: 0.2}, max_depth=depth, x_range=x_range)
    return random_tree(dist, seed)


class TestBuild:
    def test_chain(self):
        a, b = 1.5, 2.5
        S = build_sensitivity(chain_network([a, b]))
        np.testing.assert_allclose(S.X, [[a, a], [a, a + b]])

    def test_fig_tree_printed_matrix(self):
        a, b, c, d = 2.0, 3.0, 5.0, 7.0
        S = build_sensitivity(fig_tree(a, b, c, d))
        expected = np.array([
            [a, a, a, a],
            [a, a + b, a + b, a],
            [a, a + b, a + b + c, a],
            [a, a, a, a + d],
        ])
        np.testing.assert_allclose(S.X, expected)

    def test_single_bus(self):
        S = build_sensitivity(chain_network([3.0]))
        np.testing.assert_allclose(S.X, [[3.0]])

    def test_against_path_oracle(self):
        for seed in range(5):
            net = random_tree_for(seed)
            S = build_sensitivity(net)
            np.testing.assert_allclose(S.X, sensitivity_by_paths(net, "x"), atol=1e-12)
            np.testing.assert_allclose(S.R, sensitivity_by_paths(net, "r"), atol=1e-12)

    def test_r_matrix_uses_resistances(self):
        net = fig_tree()
        S = build_sensitivity(net)
        np.testing.assert_allclose(S.R, sensitivity_by_paths(net, "r"), atol=1e-14)

    def test_positive_definite(self):
        for seed in range(5):
            S = build_sensitivity(random_tree_for(seed))
            w = np.linalg.eigvalsh(S.X)
            assert w[0] > 1e-12 * w[-1]

    def test_diag_is_root_path_reactance(self):
        net = random_tree_for(2)
        S = build_sensitivity(net)
        for i in range(1, net.n + 1):
            total = sum(ln.x for ln in path_to_root(net, i))
            assert S.X[i - 1, i - 1] == pytest.approx(total, rel=1e-12)

    def test_mutual_below_self(self):
        S = build_sensitivity(random_tree_for(4))
        d = np.diag(S.X)
        assert np.all(S.X <= np.minimum.outer(d, d) + 1e-12)

    def test_decomposition_identity(self):
        S = build_sensitivity(random_tree_for(1))
        np.testing.assert_array_equal(np.diag(S.D) + S.Xbar, S.X)

    def test_restriction_matches_direct_submatrix(self):
        net = random_tree_for(3)
        S = build_sensitivity(net)
        idx = np.array([0, 2, min(5, net.n - 1)])
        sub = S.restrict(idx)
        Xo = sensitivity_by_paths(net, "x")
        np.testing.assert_allclose(sub.X, Xo[np.ix_(idx, idx)], atol=1e-12)


class TestAnalyticInverse:
    def test_fig_tree_printed_inverse(self):
        a, b, c, d = 2.0, 3.0, 5.0, 7.0
        Xinv = x_inverse_analytic(fig_tree(a, b, c, d))
        assert Xinv[0, 0] == pytest.approx((b + d) / (b * d) + 1 / a)
        expected = np.array([
            [(b + d) / (b * d) + 1 / a, -1 / b, 0, -1 / d],
            [-1 / b, (b + c) / (b * c), -1 / c, 0],
            [0, -1 / c, 1 / c, 0],
            [-1 / d, 0, 0, 1 / d],
        ])
        np.testing.assert_allclose(Xinv, expected, atol=1e-15)

    def test_two_bus_chain_hand_inverse(self):
        a, b = 1.3, 0.7
        Xinv = x_inverse_analytic(chain_network([a, b]))
        np.testing.assert_allclose(Xinv, [[1 / a + 1 / b, -1 / b], [-1 / b, 1 / b]], atol=1e-14)

    def test_identity_on_random_trees(self):
        for seed in range(8):
            net = random_tree_for(seed)
            S = build_sensitivity(net)
            P = x_inverse_analytic(net) @ S.X
            err = np.linalg.norm(P - np.eye(net.n)) / np.sqrt(net.n)
            assert err < 1e-10

    def test_row_sums_single_nonzero_at_root_child(self):
        net = random_tree_for(6)
        Xinv = x_inverse_analytic(net)
        sums = Xinv @ np.ones(net.n)
        x01 = [ln.x for ln in net.lines if ln.from_node == 0][0]
        assert sums[0] == pytest.approx(1.0 / x01, rel=1e-12)
        np.testing.assert_allclose(sums[1:], 0.0, atol=1e-12)

    def test_sparsity_is_tree_adjacency(self):
        net = random_tree_for(7)
        Xinv = x_inverse_analytic(net)
        adjacent = set()
        for ln in net.lines:
            if ln.from_node != 0:
                adjacent.add((ln.from_node - 1, ln.to_node - 1))
                adjacent.add((ln.to_node - 1, ln.from_node - 1))
        nz = set(zip(*np.nonzero(Xinv)))
        off_diag = {(i, j) for i, j in nz if i != j}
        assert off_diag == adjacent


class TestChainInverse:
    def test_matches_analytic_on_chain(self):
        xs = [1.1, 0.4, 2.2]
        np.testing.assert_allclose(chain_x_inverse(xs),
                                   x_inverse_analytic(chain_network(xs)), atol=1e-14)

    def test_printed_uniform_matrix(self):
        np.testing.assert_allclose(chain_x_inverse([1.0, 1.0, 1.0]),
                                   [[2, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_single_line(self):
        np.testing.assert_allclose(chain_x_inverse([4.0]), [[0.25]])

    def test_empty_chain(self):
        with pytest.raises(EmptyChainError):
            chain_x_inverse([])


class TestChainEigen:
    def test_n1_forced_value(self):
        lam = uniform_chain_eigenvalues(1, 1.0)
        assert lam[0] == pytest.approx(2 + 2 * np.cos(2 * np.pi / 3))
        assert lam[0] == pytest.approx(1.0)

    def test_matches_numeric_eigensolver(self):
        for n, a in [(3, 1.0), (7, 0.3), (40, 2.5)]:
            lam = uniform_chain_eigenvalues(n, a)
            num = np.linalg.eigvalsh(chain_x_inverse([a] * n))[::-1]
            np.testing.assert_allclose(lam, num, rtol=1e-12)

    def test_lambda_min_of_X(self):
        n, a = 9, 1.4
        lam_min_X = a / (2 + 2 * np.cos(2 * np.pi / (2 * n + 1)))
        num = np.linalg.eigvalsh(np.linalg.inv(chain_x_inverse([a] * n)))[0]
        assert lam_min_X == pytest.approx(num, rel=1e-10)

    def test_descending(self):
        lam = uniform_chain_eigenvalues(25, 0.7)
        assert np.all(np.diff(lam) < 0)


class TestChainEigenBounds:
    def test_interval_collapse(self):
        n, a = 6, 1.2
        lam_X = np.sort(1.0 / uniform_chain_eigenvalues(n, a))[::-1]
        for k in range(1, n + 1):
            lo, hi = chain_eigen_bounds(n, a, a, k)
            assert lo == pytest.approx(hi)
            assert lo == pytest.approx(lam_X[k - 1], rel=1e-12)

    def test_brackets_random_chains(self):
        rng = np.random.default_rng(0)
        n, a, b = 5, 1.0, 2.0
        for _ in range(50):
            xs = rng.uniform(a, b, size=n)
            lam = np.linalg.eigvalsh(np.linalg.inv(chain_x_inverse(xs)))[::-1]
            for k in range(1, n + 1):
                lo, hi = chain_eigen_bounds(n, a, b, k)
                assert lo - 1e-12 <= lam[k - 1] <= hi + 1e-12

    def test_monotone_in_each_reactance(self):
        rng = np.random.default_rng(3)
        xs = rng.uniform(0.5, 1.5, size=6)
        base = np.linalg.eigvalsh(np.linalg.inv(chain_x_inverse(xs)))
        for i in range(6):
            bumped = xs.copy()
            bumped[i] += 0.3
            lam = np.linalg.eigvalsh(np.linalg.inv(chain_x_inverse(bumped)))
            assert np.all(lam >= base - 1e-10)

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            chain_eigen_bounds(4, 1.0, 2.0, 5)
        with pytest.raises(ValueError):
            chain_eigen_bounds(4, 2.0, 1.0, 2)
