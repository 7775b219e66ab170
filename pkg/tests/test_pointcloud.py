import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randla.pointcloud import (LoadError, PointCloud, crop_subcloud, grid_subsample,
                               load_cloud, load_labels, save_cloud, save_labels)
from randla.rng import Rng
from randla.spatial import build_index

from conftest import brute_knn


# --- xyzrgbl text ------------------------------------------------------------

def test_xyzrgbl_basic(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("0 0 0 255 0 0 1\n1 0 0 0 255 0 0\n0 1 0 0 0 255 2\n")
    cloud = load_cloud(str(p), "xyzrgbl-text", n_class=3)
    assert cloud.n == 3
    assert np.allclose(cloud.colors[0], [1.0, 0.0, 0.0])  # scaled by 1/255
    assert cloud.labels.tolist() == [1, 0, 2]
    assert cloud.d_in == 6


def test_xyzrgbl_bad_field_count(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("0 0 0 1 2 3\n")
    with pytest.raises(LoadError, match="line 1"):
        load_cloud(str(p), "xyzrgbl-text")


def test_xyzrgbl_nan_coordinate_rejected(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("0 0 0 10 10 10 0\nnan 0 0 10 10 10 0\n")
    with pytest.raises(LoadError, match="non-finite"):
        load_cloud(str(p), "xyzrgbl-text")


def test_xyzrgbl_label_over_limit(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text(f"0 0 0 1 1 1 {2**31}\n")
    with pytest.raises(LoadError, match="n_class"):
        load_cloud(str(p), "xyzrgbl-text", n_class=3)


def test_xyzrgbl_round_trip_fixed_point(tmp_path, rng):
    cloud = PointCloud(coords=rng.uniforms((40, 3)) * 12.0,
                       colors=rng.uniforms((40, 3)),
                       labels=rng.integers(4, 40), n_class=4)
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    save_cloud(str(a), cloud, "xyzrgbl-text")
    loaded = load_cloud(str(a), "xyzrgbl-text", n_class=4)
    save_cloud(str(b), loaded, "xyzrgbl-text")
    # 6-significant-digit quantization is a fixed point of save->load->save
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(loaded.labels, cloud.labels)
    assert np.allclose(loaded.coords, cloud.coords, rtol=1e-5, atol=1e-6)


# --- PLY ---------------------------------------------------------------------

def _write_ply_ascii(path, with_colors=True, with_labels=False):
    header = ["ply", "format ascii 1.0", "element vertex 3",
              "property float x", "property float y", "property float z"]
    if with_colors:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    if with_labels:
        header += ["property int label"]
    header.append("end_header")
    rows = []
    for i in range(3):
        row = [f"{i}.5", "0", "1"]
        if with_colors:
            row += ["255", "128", "0"]
        if with_labels:
            row += [str(i % 2)]
        rows.append(" ".join(row))
    path.write_text("\n".join(header + rows) + "\n")


def test_ply_ascii_xyz_only(tmp_path):
    p = tmp_path / "c.ply"
    _write_ply_ascii(p, with_colors=False)
    cloud = load_cloud(str(p), "ply-ascii")
    assert cloud.colors is None
    assert cloud.d_in == 3
    assert np.allclose(cloud.coords[:, 0], [0.5, 1.5, 2.5])


def test_ply_ascii_with_colors_and_labels(tmp_path):
    p = tmp_path / "c.ply"
    _write_ply_ascii(p, with_colors=True, with_labels=True)
    cloud = load_cloud(str(p), "ply-ascii", n_class=2)
    assert np.allclose(cloud.colors[0], [1.0, 128 / 255.0, 0.0])
    assert cloud.labels.tolist() == [0, 1, 0]


def test_ply_malformed_header(tmp_path):
    p = tmp_path / "c.ply"
    p.write_text("plywood\nend_header\n")
    with pytest.raises(LoadError, match="magic"):
        load_cloud(str(p), "ply-ascii")
    p.write_text("ply\nformat ascii 1.0\nend_header\n")
    with pytest.raises(LoadError, match="vertex"):
        load_cloud(str(p), "ply-ascii")


def test_ply_binary_round_trip(tmp_path, rng):
    cloud = PointCloud(coords=rng.uniforms((25, 3)) * 5.0,
                       colors=rng.uniforms((25, 3)),
                       labels=rng.integers(3, 25), n_class=3)
    p = tmp_path / "c.ply"
    save_cloud(str(p), cloud, "ply-binary-le")
    loaded = load_cloud(str(p), "ply-binary-le", n_class=3)
    assert np.array_equal(loaded.coords, cloud.coords)  # payload is float64
    assert np.array_equal(loaded.labels, cloud.labels)
    assert np.allclose(loaded.colors, cloud.colors, atol=0.5 / 255)


def test_ply_binary_truncated(tmp_path, rng):
    cloud = PointCloud(coords=rng.uniforms((10, 3)))
    p = tmp_path / "c.ply"
    save_cloud(str(p), cloud, "ply-binary-le")
    data = p.read_bytes()
    p.write_bytes(data[:-9])
    with pytest.raises(LoadError, match="truncated"):
        load_cloud(str(p), "ply-binary-le")


def test_ply_ascii_round_trip(tmp_path, rng):
    cloud = PointCloud(coords=rng.uniforms((12, 3)), labels=rng.integers(2, 12), n_class=2)
    p = tmp_path / "c.ply"
    save_cloud(str(p), cloud, "ply-ascii")
    loaded = load_cloud(str(p), "ply-ascii", n_class=2)
    assert np.allclose(loaded.coords, cloud.coords, rtol=1e-5, atol=1e-6)
    assert np.array_equal(loaded.labels, cloud.labels)
    assert loaded.colors is None


def test_point_order_preserved(tmp_path):
    p = tmp_path / "c.txt"
    lines = [f"{i} 0 0 0 0 0 0" for i in (5, 3, 9, 1)]
    p.write_text("\n".join(lines) + "\n")
    cloud = load_cloud(str(p), "xyzrgbl-text")
    assert cloud.coords[:, 0].tolist() == [5.0, 3.0, 9.0, 1.0]


# --- labels ------------------------------------------------------------------

def test_labels_round_trip(tmp_path, rng):
    labels = rng.integers(7, 100)
    p = tmp_path / "l.txt"
    save_labels(str(p), labels, n_class=7)
    assert np.array_equal(load_labels(str(p)), labels)


def test_labels_empty(tmp_path):
    p = tmp_path / "l.txt"
    save_labels(str(p), np.array([], dtype=np.int64))
    assert p.read_text() == ""
    assert load_labels(str(p)).size == 0


def test_labels_value_over_limit(tmp_path):
    with pytest.raises(ValueError):
        save_labels(str(tmp_path / "l.txt"), np.array([2**31]), n_class=3)


# --- grid subsample ----------------------------------------------------------

def test_grid_subsample_centroids():
    cloud = PointCloud(coords=np.array([[0.01, 0, 0], [0.02, 0, 0], [0.99, 0, 0]]))
    sub, grid = grid_subsample(cloud, 0.5)
    assert sub.n == 2
    assert np.allclose(sorted(sub.coords[:, 0]), [0.015, 0.99])
    assert [len(m) for m in grid.kept_to_source] == [2, 1]


def test_grid_subsample_degenerate_voxel(rng):
    coords = rng.uniforms((50, 3))
    cloud = PointCloud(coords=coords)
    sub, _ = grid_subsample(cloud, 100.0)
    assert sub.n == 1
    assert np.allclose(sub.coords[0], coords.mean(axis=0))


def test_grid_subsample_majority_label():
    cloud = PointCloud(coords=np.zeros((3, 3)) + 0.1, labels=np.array([0, 0, 1]), n_class=2)
    sub, _ = grid_subsample(cloud, 1.0)
    assert sub.labels.tolist() == [0]
    # tie goes to the smallest class id
    cloud2 = PointCloud(coords=np.zeros((2, 3)) + 0.1, labels=np.array([1, 0]), n_class=2)
    sub2, _ = grid_subsample(cloud2, 1.0)
    assert sub2.labels.tolist() == [0]


def test_grid_subsample_idempotent_count(rng):
    cloud = PointCloud(coords=rng.uniforms((500, 3)) * 4.0, colors=rng.uniforms((500, 3)))
    sub, _ = grid_subsample(cloud, 0.3)
    again, _ = grid_subsample(sub, 0.3)
    assert again.n == sub.n


def test_grid_subsample_points_stay_in_voxels(rng):
    coords = rng.uniforms((300, 3)) * 6.0 - 3.0
    sub, grid = grid_subsample(PointCloud(coords=coords), 0.5)
    voxels = np.floor(sub.coords / 0.5)
    for j, members in enumerate(grid.kept_to_source):
        source_voxel = np.floor(coords[members[0]] / 0.5)
        assert np.array_equal(voxels[j], source_voxel)
        assert all(np.array_equal(np.floor(coords[m] / 0.5), source_voxel) for m in members)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=120), st.floats(min_value=0.05, max_value=5.0),
       st.integers(min_value=0, max_value=2**31))
def test_property_grid_subsample(n, voxel, seed):
    coords = Rng(seed).uniforms((n, 3)) * 3.0
    sub, grid = grid_subsample(PointCloud(coords=coords), voxel)
    assert 1 <= sub.n <= n
    assert sum(len(m) for m in grid.kept_to_source) == n


# --- cropping ----------------------------------------------------------------

def test_crop_exhaustive_and_single(rng):
    coords = rng.uniforms((20, 3))
    cloud = PointCloud(coords=coords)
    index = build_index(coords)
    assert sorted(crop_subcloud(cloud, 4, 20, index).tolist()) == list(range(20))
    assert crop_subcloud(cloud, 4, 1, index).tolist() == [4]


def test_crop_collinear_example():
    coords = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [5.0, 0, 0]])
    cloud = PointCloud(coords=coords)
    got = crop_subcloud(cloud, 0, 2, build_index(coords))
    assert sorted(got.tolist()) == [0, 1]


def test_crop_matches_oracle(rng):
    coords = rng.uniforms((100, 3))
    cloud = PointCloud(coords=coords)
    index = build_index(coords)
    got = crop_subcloud(cloud, 17, 12, index)
    oi, _ = brute_knn(coords, coords[17:18], 12)
    assert sorted(got.tolist()) == sorted(oi[0].tolist())
    assert got[0] == 17


def test_crop_too_large_errors(rng):
    coords = rng.uniforms((5, 3))
    with pytest.raises(ValueError):
        crop_subcloud(PointCloud(coords=coords), 0, 6, build_index(coords))


# --- invariants --------------------------------------------------------------

def test_cloud_arrays_immutable(rng):
    cloud = PointCloud(coords=rng.uniforms((5, 3)))
    with pytest.raises(ValueError):
        cloud.coords[0, 0] = 5.0


def test_cloud_requires_points():
    with pytest.raises(LoadError):
        PointCloud(coords=np.empty((0, 3)))


def test_color_range_enforced():
    with pytest.raises(LoadError):
        PointCloud(coords=np.zeros((1, 3)), colors=np.array([[0.0, 0.5, 1.2]]))
