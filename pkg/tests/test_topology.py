import numpy as np
import pytest

from voltgame.topology import (
    BusData,
    CycleError,
    DegreeDistribution,
    DisconnectedError,
    InvalidDistributionError,
    Line,
    MultiRootChildError,
    NonpositiveReactanceError,
    RadialNetwork,
    UnknownNodeError,
    chain_network,
    inverse_tree_laplacian,
    path_intersection,
    path_to_root,
    random_instance,
    random_tree,
    validate_tree,
)


def fig_tree(a=2.0, b=3.0, c=5.0, d=7.0):
    # 0-1 (a), 1-2 (b), 2-3 (c), 1-4 (d)
    lines = (Line(0, 1, 0.0, a), Line(1, 2, 0.0, b), Line(2, 3, 0.0, c), Line(1, 4, 0.0, d))
    return RadialNetwork(n=4, lines=lines, buses=tuple(BusData() for _ in range(4)))


class TestValidate:
    def test_minimal_chain_ok(self):
        validate_tree(chain_network([1.0, 1.0]))

    def test_two_root_children_rejected(self):
        lines = (Line(0, 1, 0, 1.0), Line(0, 2, 0, 1.0))
        net = RadialNetwork(n=2, lines=lines, buses=(BusData(), BusData()))
        with pytest.raises(MultiRootChildError):
            validate_tree(net)

    def test_zero_reactance_rejected(self):
        lines = (Line(0, 1, 0, 1.0), Line(1, 2, 0, 0.0))
        net = RadialNetwork(n=2, lines=lines, buses=(BusData(), BusData()))
        with pytest.raises(NonpositiveReactanceError):
            validate_tree(net)

    def test_cycle_rejected(self):
        lines = (Line(0, 1, 0, 1.0), Line(2, 3, 0, 1.0), Line(3, 2, 0, 1.0))
        net = RadialNetwork(n=3, lines=lines, buses=(BusData(),) * 3)
        with pytest.raises(CycleError):
            validate_tree(net)

    def test_disconnected_rejected(self):
        lines = (Line(0, 1, 0, 1.0), Line(1, 2, 0, 1.0), Line(1, 2, 0, 1.0))
        net = RadialNetwork(n=3, lines=lines, buses=(BusData(),) * 3)
        with pytest.raises((DisconnectedError, CycleError)):
            validate_tree(net)
        net = RadialNetwork(n=2, lines=(Line(0, 1, 0, 1.0),), buses=(BusData(), BusData()))
        with pytest.raises(DisconnectedError):
            validate_tree(net)

    def test_actuator_box_must_contain_zero(self):
        net = RadialNetwork(n=1, lines=(Line(0, 1, 0, 1.0),),
                            buses=(BusData(q_min=0.5, q_max=1.0),))
        with pytest.raises(Exception):
            validate_tree(net)


class TestPaths:
    def test_chain_path(self):
        net = chain_network([1.0, 1.0])
        assert [(l.from_node, l.to_node) for l in path_to_root(net, 2)] == [(0, 1), (1, 2)]
        assert [(l.from_node, l.to_node) for l in path_to_root(net, 1)] == [(0, 1)]

    def test_fig_tree_paths(self):
        net = fig_tree()
        assert [(l.from_node, l.to_node) for l in path_to_root(net, 3)] == [(0, 1), (1, 2), (2, 3)]
        inter = path_intersection(net, 3, 4)
        assert [(l.from_node, l.to_node) for l in inter] == [(0, 1)]

    def test_intersection_identities(self):
        net = fig_tree()
        assert path_intersection(net, 3, 3) == path_to_root(net, 3)
        chain = chain_network([1.0, 1.0])
        assert [(l.from_node, l.to_node) for l in path_intersection(chain, 1, 2)] == [(0, 1)]

    def test_unknown_node(self):
        net = chain_network([1.0])
        with pytest.raises(UnknownNodeError):
            path_to_root(net, 5)

    def test_intersection_is_prefix_and_symmetric(self):
        dist = DegreeDistribution({1: 0.4, 2: 0.4, 3: 0.2}, max_depth=5, x_range=(0.0, 2.0))
        net = random_tree(dist, seed=11)
        rng = np.random.default_rng(1)
        for _ in range(50):
            i, j = rng.integers(1, net.n + 1, size=2)
            inter = path_intersection(net, int(i), int(j))
            assert inter == path_intersection(net, int(j), int(i))
            for path_node in (int(i), int(j)):
                path = path_to_root(net, path_node)
                assert path[: len(inter)] == inter


class TestRandomTree:
    def test_determinism(self):
        dist = DegreeDistribution({1: 0.5, 2: 0.5}, max_depth=8)
        n1 = random_tree(dist, seed=42)
        n2 = random_tree(dist, seed=42)
        assert n1.lines == n2.lines
        assert random_tree(dist, seed=43).lines != n1.lines

    def test_degenerate_chain(self):
        dist = DegreeDistribution({1: 1.0}, max_depth=5)
        net = random_tree(dist, seed=0)
        assert net.n == 5
        assert all(ln.from_node == ln.to_node - 1 for ln in net.lines)

    def test_binary_depth15_node_scale(self):
        # branching 1.5 per level: about 1.4k nodes at depth 15
        dist = DegreeDistribution({1: 0.5, 2: 0.5}, max_depth=15)
        sizes = [random_tree(dist, seed=s).n for s in range(4)]
        assert 300 < int(np.mean(sizes)) < 6000

    def test_parameter_ranges_and_depth_cap(self):
        dist = DegreeDistribution({2: 1.0}, max_depth=4, x_range=(0.5, 2.0))
        net = random_tree(dist, seed=3)
        assert net.n == 1 + 2 + 4 + 8
        xs = net.reactances()
        assert np.all(xs > 0.5) and np.all(xs <= 2.0)
        assert max(net.depth(i) for i in range(1, net.n + 1)) == 4

    def test_random_instance_costs(self):
        dist = DegreeDistribution({1: 0.5, 2: 0.5}, max_depth=6, y_range=(0.0, 100.0))
        net, y = random_instance(dist, seed=9)
        assert y.shape == (net.n,)
        assert np.all(y > 0) and np.all(y <= 100.0)
        net2, y2 = random_instance(dist, seed=9)
        assert np.array_equal(y, y2) and net2.lines == net.lines

    def test_bad_distribution(self):
        with pytest.raises(InvalidDistributionError):
            DegreeDistribution({1: 0.6, 2: 0.6}, max_depth=3)
        with pytest.raises(InvalidDistributionError):
            DegreeDistribution({}, max_depth=3)


class TestInverseTreeLaplacian:
    def test_appendix_example(self):
        a, b, c, d = 2.0, 3.0, 5.0, 7.0
        L = inverse_tree_laplacian(fig_tree(a, b, c, d))
        expected = np.array([
            [(b + d) / (b * d), -1 / b, 0, -1 / d],
            [-1 / b, (b + c) / (b * c), -1 / c, 0],
            [0, -1 / c, 1 / c, 0],
            [-1 / d, 0, 0, 1 / d],
        ])
        np.testing.assert_allclose(L, expected, atol=1e-15)

    def test_chain_before_root_correction(self):
        a, b = 1.7, 0.4
        L = inverse_tree_laplacian(chain_network([a, b]))
        np.testing.assert_allclose(L, [[1 / b, -1 / b], [-1 / b, 1 / b]], atol=1e-15)

    def test_single_node(self):
        L = inverse_tree_laplacian(chain_network([2.0]))
        np.testing.assert_allclose(L, [[0.0]])

    def test_row_sums_vanish(self):
        # the root line enters only through the corrected inverse
        dist = DegreeDistribution({1: 0.5, 2: 0.5}, max_depth=7, x_range=(0.1, 3.0))
        net = random_tree(dist, seed=5)
        L = inverse_tree_laplacian(net)
        np.testing.assert_allclose(L @ np.ones(net.n), 0.0, atol=1e-12)
