import numpy as np
import pytest

from gridfloor.errors import InvalidNodeError
from gridfloor.grid import (
    GridSpec,
    Measurement,
    NodeId,
    neighbors,
    node_position,
    node_positions,
)


class TestGridSpec:
    def test_defaults(self):
        g = GridSpec()
        assert g.n_nodes == 345
        assert (g.n_strips, g.nodes_per_strip) == (23, 15)

    def test_invalid_dimensions(self):
        with pytest.raises(ValueError):
            GridSpec(n_strips=0)
        with pytest.raises(ValueError):
            GridSpec(hall_length=-1.0)

    def test_flat_index_strip_major(self):
        g = GridSpec()
        assert g.flat_index(NodeId(1, 1)) == 0
        assert g.flat_index(NodeId(1, 15)) == 14
        assert g.flat_index(NodeId(2, 1)) == 15
        assert g.flat_index(NodeId(23, 15)) == 344


class TestNodePosition:
    def test_first_corner(self):
        x, y = node_position(GridSpec(), NodeId(1, 1))
        assert x == pytest.approx(0.652, abs=1e-3)
        assert y == pytest.approx(0.5)

    def test_far_corner(self):
        x, y = node_position(GridSpec(), NodeId(23, 15))
        assert x == pytest.approx(29.348, abs=1e-3)
        assert y == pytest.approx(14.5)

    def test_square_grid(self):
        g = GridSpec(2, 2, 2.0, 2.0)
        assert node_position(g, NodeId(2, 1)) == pytest.approx((1.5, 0.5))

    def test_out_of_range(self):
        with pytest.raises(InvalidNodeError):
            node_position(GridSpec(), NodeId(24, 1))
        with pytest.raises(InvalidNodeError):
            node_position(GridSpec(), NodeId(1, 16))

    def test_injective_and_in_bounds(self):
        g = GridSpec(5, 4, 7.0, 3.0)
        seen = set()
        for node in g.all_nodes():
            x, y = node_position(g, node)
            assert 0 <= x <= g.hall_length and 0 <= y <= g.hall_width
            seen.add((round(x, 12), round(y, 12)))
        assert len(seen) == g.n_nodes

    def test_positions_array_matches_scalar(self):
        g = GridSpec(4, 3, 5.0, 3.0)
        arr = node_positions(g)
        for node in g.all_nodes():
            assert arr[g.flat_index(node)] == pytest.approx(node_position(g, node))


class TestNeighbors:
    def test_interior_has_eight(self):
        assert len(neighbors(GridSpec(), NodeId(5, 5))) == 8

    def test_corner_has_three(self):
        assert len(neighbors(GridSpec(), NodeId(1, 1))) == 3

    def test_edge_has_five(self):
        assert len(neighbors(GridSpec(), NodeId(1, 7))) == 5

    def test_excludes_self_and_counts(self):
        g = GridSpec(5, 5, 5.0, 5.0)
        for node in g.all_nodes():
            nbrs = neighbors(g, node)
            assert node not in nbrs
            assert len(nbrs) in (3, 5, 8)

    def test_symmetry(self):
        g = GridSpec(6, 4, 6.0, 4.0)
        for a in g.all_nodes():
            for b in neighbors(g, a):
                assert a in neighbors(g, b)

    def test_chebyshev_distance_one(self):
        g = GridSpec()
        for b in neighbors(g, NodeId(7, 9)):
            assert max(abs(b.strip - 7), abs(b.node - 9)) == 1

    def test_invalid_node(self):
        with pytest.raises(InvalidNodeError):
            neighbors(GridSpec(), NodeId(0, 1))


class TestMeasurement:
    def test_round_trip(self):
        v = np.arange(10.0)
        m = Measurement.from_array(v)
        assert np.array_equal(m.as_array(), v)
        assert m.rssi == 9.0

    def test_rejects_non_finite(self):
        v = np.arange(10.0)
        v[3] = np.nan
        with pytest.raises(ValueError):
            Measurement.from_array(v)
