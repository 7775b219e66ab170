import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randla.rng import Rng
from randla.spatial import build_index, knn, nearest, radius_neighbors

from conftest import brute_knn


def test_single_point_index_answers_everything():
    idx = build_index(np.array([[1.0, 2.0, 3.0]]))
    res = knn(idx, np.array([[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]]), 1)
    assert np.array_equal(res.indices, [[0], [0]])


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        build_index(np.empty((0, 3)))


def test_nonfinite_input_rejected():
    with pytest.raises(ValueError):
        build_index(np.array([[0.0, 0.0, np.nan]]))


def test_duplicate_points_both_retrievable():
    coords = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [5.0, 5.0, 5.0]])
    res = knn(build_index(coords), np.array([[1.0, 1.0, 1.0]]), 2)
    assert np.array_equal(res.indices[0], [0, 1])


def test_self_is_first_neighbor():
    rng = Rng(2)
    coords = rng.uniforms((50, 3))
    res = knn(build_index(coords), coords, 1)
    assert np.array_equal(res.indices[:, 0], np.arange(50))
    assert np.allclose(res.distances, 0.0)


def test_collinear_example():
    coords = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [5.0, 0, 0]])
    res = knn(build_index(coords), coords[:1], 2)
    assert np.array_equal(res.indices[0], [0, 1])


def test_all_identical_tie_break():
    coords = np.zeros((10, 3))
    res = knn(build_index(coords), coords[:1], 3)
    assert np.array_equal(res.indices[0], [0, 1, 2])


def test_matches_brute_force_on_random_clouds():
    rng = Rng(7)
    for n, k, leaf in [(200, 16, 16), (1000, 32, 16), (513, 7, 4), (64, 64, 64)]:
        coords = rng.uniforms((n, 3)) * 10.0
        queries = np.vstack([coords[:40], rng.uniforms((25, 3)) * 10.0])
        mine = knn(build_index(coords, leaf_size=leaf), queries, k)
        oi, od = brute_knn(coords, queries, k)
        assert np.array_equal(mine.indices, oi)
        assert np.allclose(mine.distances, od)


def test_matches_brute_force_on_gridlike_ties():
    # lattice coordinates create massive distance ties; order must still agree
    g = np.arange(4, dtype=np.float64)
    coords = np.array([[x, y, z] for x in g for y in g for z in g])
    mine = knn(build_index(coords), coords, 8)
    oi, _ = brute_knn(coords, coords, 8)
    assert np.array_equal(mine.indices, oi)


def test_exclude_ids_removes_self():
    rng = Rng(9)
    coords = rng.uniforms((100, 3))
    res = knn(build_index(coords), coords, 3, exclude_ids=np.arange(100))
    assert not np.any(res.indices == np.arange(100)[:, None])
    oi, _ = brute_knn(coords, coords, 3, exclude_ids=np.arange(100))
    assert np.array_equal(res.indices, oi)


def test_k_out_of_range():
    idx = build_index(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        knn(idx, np.zeros((1, 3)), 6)
    with pytest.raises(ValueError):
        knn(idx, np.zeros((1, 3)), 0)


def test_row_distances_nondecreasing(rng):
    coords = rng.uniforms((300, 3))
    res = knn(build_index(coords), coords, 20)
    assert (np.diff(res.distances, axis=1) >= 0).all()


def test_nearest_ties_and_oracle(rng):
    coords = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    assert nearest(build_index(coords), np.array([[1.0, 0, 0]]))[0] == 0

    pts = rng.uniforms((150, 3))
    queries = rng.uniforms((60, 3))
    got = nearest(build_index(pts), queries)
    oi, _ = brute_knn(pts, queries, 1)
    assert np.array_equal(got, oi[:, 0])


def test_radius_exact_k_is_identity(rng):
    coords = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [3.0, 0, 0]])
    res = radius_neighbors(build_index(coords), coords[:1], radius=0.25, k=3, rng=rng)
    assert np.array_equal(res.indices[0], [0, 1, 2])
    assert (np.diff(res.distances[0]) >= 0).all()


def test_radius_pad_repeats_nearest(rng):
    coords = np.array([[0.0, 0, 0], [5.0, 0, 0]])
    res = radius_neighbors(build_index(coords), coords[:1], radius=1.0, k=4, rng=rng)
    assert np.array_equal(res.indices[0], [0, 0, 0, 0])


def test_radius_downsample_distinct_members(rng):
    pts = Rng(4).uniforms((200, 3)) * 0.2  # dense blob: everything within radius
    res = radius_neighbors(build_index(pts), pts[:8], radius=1.0, k=16, rng=rng)
    d = np.linalg.norm(pts[:8][:, None] - pts[res.indices], axis=2)
    assert (d <= 1.0 + 1e-9).all()
    for row in res.indices:
        assert len(set(row.tolist())) == 16


def test_radius_empty_errors(rng):
    coords = np.array([[0.0, 0, 0]])
    with pytest.raises(ValueError):
        radius_neighbors(build_index(coords), np.array([[9.0, 9.0, 9.0]]),
                         radius=0.5, k=2, rng=rng)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=60), st.integers(min_value=1, max_value=8),
       st.integers(min_value=0, max_value=2**31))
def test_property_knn_equals_brute_force(n, k, seed):
    k = min(k, n)
    coords = Rng(seed).uniforms((n, 3))
    mine = knn(build_index(coords, leaf_size=4), coords, k)
    oi, _ = brute_knn(coords, coords, k)
    assert np.array_equal(mine.indices, oi)
