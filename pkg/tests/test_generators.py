import numpy as np
import pytest

from invchain.generators import (
    gen_erdos_renyi,
    gen_grid2d,
    gen_path,
    gen_random_regular,
    generate,
)


class TestGenerators:
    def test_path_three(self):
        adj = gen_path(3)
        assert adj.dim == 3
        assert adj.nnz // 2 == 2
        assert np.all(adj.data == 1.0)

    def test_grid_4x4_edge_count(self):
        adj = gen_grid2d(4, 4)
        assert adj.dim == 16
        assert adj.nnz // 2 == 24  # 2 * 4 * 3

    def test_degenerate_grid_rejected(self):
        with pytest.raises(ValueError, match="no edges"):
            gen_grid2d(1, 1)

    def test_single_vertex_path_rejected(self):
        with pytest.raises(ValueError):
            gen_path(1)

    def test_erdos_renyi_connected(self):
        for seed in range(5):
            lap = generate("erdos-renyi 40 0.03", seed=seed)
            assert lap.connected

    def test_random_regular(self):
        adj = gen_random_regular(16, 3, seed=1)
        degrees = np.diff(adj.indptr)
        assert np.all(degrees == 3)

    def test_impossible_regular_rejected(self):
        with pytest.raises(ValueError):
            gen_random_regular(5, 3)  # odd n * d

    def test_weight_range(self):
        adj = gen_grid2d(4, 4, seed=2, w_low=1.0, w_high=10.0)
        assert adj.data.min() >= 1.0
        assert adj.data.max() <= 10.0
        assert adj.data.std() > 0

    def test_spec_roundtrip_deterministic(self):
        a = generate("erdos-renyi 30 0.1", seed=9)
        b = generate("erdos-renyi 30 0.1", seed=9)
        assert np.array_equal(a.adjacency.data, b.adjacency.data)
        assert np.array_equal(a.adjacency.indices, b.adjacency.indices)

    def test_unknown_spec_rejected(self):
        with pytest.raises(ValueError, match="unknown generator"):
            generate("torus 5")

    def test_malformed_spec_rejected(self):
        with pytest.raises(ValueError, match="malformed"):
            generate("path")
