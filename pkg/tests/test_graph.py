import math

import numpy as np
import pytest

from metaband import graph
from metaband.errors import ValidationError


class TestSpatialKernel:

    def test_diagonal_is_zero(self):
        a = graph.adjacency_spa(10)
        assert np.all(np.diag(a) == 0.0)

    def test_direct_evaluation(self):
        a = graph.adjacency_spa(200)
        assert a[0, 2] == pytest.approx(math.exp(-0.01), abs=1e-9)
        assert a[0, 2] == pytest.approx(0.990050, abs=1e-6)

    def test_monotone_in_band_distance(self):
        a = graph.adjacency_spa(50)
        row = a[0]
        assert all(row[j] > row[j + 1] for j in range(1, 49))


class TestSpectralKernel:

    def test_identical_rows_score_one(self):
        x = np.ones((3, 8))
        a = graph.adjacency_spec(x)
        assert a[0, 1] == pytest.approx(1.0)
        assert np.all(np.diag(a) == 0.0)

    def test_direct_evaluation(self):
        # hw=4, ||xi - xj|| = 2  ->  exp(-0.5)
        x = np.zeros((2, 4))
        x[1, 0] = 2.0
        a = graph.adjacency_spec(x)
        assert a[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-9)
        assert a[0, 1] == pytest.approx(0.606531, abs=1e-6)

    def test_pixel_permutation_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.random((6, 20))
        perm = rng.permutation(20)
        np.testing.assert_allclose(graph.adjacency_spec(x),
                                   graph.adjacency_spec(x[:, perm]), atol=1e-12)


class TestBuildGraph:

    def test_two_band_hand_oracle(self):
        # force adjacency [[0,1],[1,0]]: identical rows
        g = graph.build_graph(np.ones((2, 5)), edge_budget=10, use_spatial=False)
        np.testing.assert_allclose(g.adjacency, [[0, 1], [1, 0]], atol=1e-12)
        np.testing.assert_allclose(g.propagation, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)

    def test_no_truncation_when_budget_exceeds_edges(self):
        rng = np.random.default_rng(1)
        x = rng.random((5, 9))
        g = graph.build_graph(x, edge_budget=100)
        want = graph.adjacency_spa(5) + graph.adjacency_spec(x)
        np.fill_diagonal(want, 0.0)
        np.testing.assert_allclose(g.adjacency, want, atol=1e-12)
        assert g.threshold == 0.0

    def test_edge_budget_respected_for_200_bands(self):
        rng = np.random.default_rng(2)
        g = graph.build_graph(rng.random((200, 25)))
        assert g.n_edges < 1000
        assert np.count_nonzero(np.triu(g.adjacency, k=1)) == 999

    def test_symmetry_zero_diagonal_and_range(self):
        rng = np.random.default_rng(3)
        for trial in range(100):
            n = int(rng.integers(2, 40)) if trial < 99 else 200
            x = rng.random((n, 16))
            g = graph.build_graph(x, edge_budget=60)
            np.testing.assert_allclose(g.adjacency, g.adjacency.T, atol=0)
            assert np.all(np.diag(g.adjacency) == 0.0)
            assert g.adjacency.min() >= 0.0 and g.adjacency.max() <= 2.0
            assert g.n_edges < 60
            np.testing.assert_allclose(g.propagation, g.propagation.T, atol=1e-6)
            assert np.isfinite(g.propagation).all()

    def test_all_equal_weights_tie_break(self):
        # identical rows + no spatial kernel: every edge weighs 1.0
        g = graph.build_graph(np.ones((6, 4)), edge_budget=5, use_spatial=False)
        assert g.n_edges == 4
        iu, ju = np.nonzero(np.triu(g.adjacency, k=1))
        # lexicographically first pairs win: (0,1),(0,2),(0,3),(0,4)
        np.testing.assert_array_equal(iu, [0, 0, 0, 0])
        np.testing.assert_array_equal(ju, [1, 2, 3, 4])

    def test_single_band_rejected(self):
        with pytest.raises(ValidationError):
            graph.build_graph(np.ones((1, 4)))

    def test_stack_matches_single(self):
        rng = np.random.default_rng(4)
        x = rng.random((3, 12, 10))
        stack = graph.build_graph_stack(x, edge_budget=30)
        for p in range(3):
            single = graph.build_graph(x[p], edge_budget=30)
            np.testing.assert_allclose(stack[p], single.propagation, atol=1e-12)
