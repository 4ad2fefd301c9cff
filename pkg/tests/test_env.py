"""ESDF tests against the brute-force all-pairs oracle."""

import numpy as np
import pytest

from swarmlift.env import (EmptyGrid, EsdfGrid, build_esdf, esdf_from_scene,
                           rasterize_scene, read_point_file, voxelize_points)


def brute_force_sdf(occ, resolution):
    """Signed distances by exhaustive scan over every cell-center pair."""
    occ = np.asarray(occ, dtype=bool)
    idx = np.indices(occ.shape).reshape(3, -1).T.astype(float)
    occ_flat = occ.ravel()
    out = np.empty(occ_flat.shape, dtype=float)
    cap = np.linalg.norm(np.array(occ.shape) * resolution)
    occ_pts = idx[occ_flat]
    free_pts = idx[~occ_flat]
    for i, cell in enumerate(idx):
        if occ_flat[i]:
            tgt = free_pts
            sign = -1.0
        else:
            tgt = occ_pts
            sign = 1.0
        if len(tgt) == 0:
            out[i] = sign * cap
        else:
            d = np.sqrt(((tgt - cell) ** 2).sum(axis=1)).min() * resolution
            out[i] = sign * min(d, cap)
    return out.reshape(occ.shape)


class TestBuildEsdf:
    def test_all_free_far_sentinel(self):
        g = build_esdf(np.zeros((4, 4, 4), dtype=bool), 0.1, np.zeros(3))
        cap = np.linalg.norm([0.4, 0.4, 0.4])
        assert np.allclose(g.values, cap)

    def test_single_voxel_matches_brute_force(self):
        occ = np.zeros((9, 8, 7), dtype=bool)
        occ[4, 3, 2] = True
        g = build_esdf(occ, 0.25, np.zeros(3))
        expect = brute_force_sdf(occ, 0.25)
        assert np.allclose(g.values, expect, atol=1e-9)

    def test_half_space_axis_distance(self):
        occ = np.zeros((10, 5, 5), dtype=bool)
        occ[:4] = True
        g = build_esdf(occ, 0.2, np.zeros(3))
        for ix in range(4, 10):
            assert np.allclose(g.values[ix], (ix - 3) * 0.2)
        for ix in range(4):
            assert np.allclose(g.values[ix], -(4 - ix) * 0.2)

    def test_random_grids_match_brute_force(self, rng):
        for shape in [(6, 6, 6), (12, 9, 5), (32, 32, 32)]:
            occ = rng.random(shape) < 0.08
            g = build_esdf(occ, 0.1, np.zeros(3))
            expect = brute_force_sdf(occ, 0.1)
            assert np.allclose(g.values, expect, atol=1e-9)

    def test_lipschitz_between_neighbors(self, rng):
        occ = rng.random((16, 16, 8)) < 0.1
        g = build_esdf(occ, 0.1, np.zeros(3))
        v = g.values
        for ax in range(3):
            dif = np.abs(np.diff(v, axis=ax))
            assert dif.max() <= 0.1 * np.sqrt(3) + 1e-9

    def test_boundary_cells_bounded(self, rng):
        occ = rng.random((12, 12, 6)) < 0.15
        if not (occ.any() and (~occ).any()):
            occ[0, 0, 0] = True
        g = build_esdf(occ, 0.1, np.zeros(3))
        # free cell adjacent (26-neighborhood) to occupied: |E| <= res*sqrt(3)
        from scipy import ndimage
        near = ndimage.binary_dilation(occ, np.ones((3, 3, 3), bool)) & ~occ
        assert np.all(np.abs(g.values[near]) <= 0.1 * np.sqrt(3) + 1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyGrid):
            build_esdf(np.zeros((0, 3, 3), dtype=bool), 0.1, np.zeros(3))


class TestQuery:
    def make_grid(self, rng):
        occ = rng.random((14, 12, 10)) < 0.1
        occ[5, 5, 5] = True
        return build_esdf(occ, 0.1, np.array([-0.3, 0.2, 0.0]))

    def test_cell_center_exact(self, rng):
        g = self.make_grid(rng)
        for idx in [(0, 0, 0), (5, 5, 5), (13, 11, 9), (7, 3, 2)]:
            E, _ = g.query(g.cell_center(idx))
            assert E == pytest.approx(g.values[idx], abs=1e-12)

    def test_edge_midpoint_mean(self, rng):
        g = self.make_grid(rng)
        a = g.cell_center((4, 5, 5))
        b = g.cell_center((5, 5, 5))
        E, _ = g.query((a + b) / 2)
        assert E == pytest.approx(0.5 * (g.values[4, 5, 5] + g.values[5, 5, 5]),
                                  abs=1e-12)

    def test_gradient_matches_fd(self, rng):
        g = self.make_grid(rng)
        h = 1e-7
        for _ in range(100):
            # keep the probe away from cell faces where the interpolant kinks
            idx = rng.integers(0, [12, 10, 8], size=3)
            x = g.cell_center(idx) + rng.uniform(0.02, 0.08, size=3) * 0.1 * 10
            x = g.cell_center(idx) + rng.uniform(0.002, 0.008, size=3) * 10
            E, grad = g.query(x)
            fd = np.zeros(3)
            for a in range(3):
                xp = x.copy(); xp[a] += h
                xm = x.copy(); xm[a] -= h
                fd[a] = (g.query(xp)[0] - g.query(xm)[0]) / (2 * h)
            assert np.allclose(grad, fd, atol=1e-8 * max(1, abs(E) / 0.1))

    def test_out_of_bounds_soft(self, rng):
        g = self.make_grid(rng)
        inside = g.cell_center((0, 5, 5))
        E0, _ = g.query(inside)
        x = inside + np.array([-1.0, 0.0, 0.0])
        E, grad, outside = g.query_many(x[None, :])
        assert outside[0]
        assert E[0] == pytest.approx(E0 + 1.0, abs=1e-9)
        # moving further out raises the value along the outward direction
        E2, _, _ = g.query_many((x - [0.5, 0, 0])[None, :])
        assert E2[0] > E[0]

    def test_continuity_across_faces(self, rng):
        g = self.make_grid(rng)
        x = g.cell_center((6, 5, 5))
        for eps in (1e-9, -1e-9):
            E1, _ = g.query(x + [eps, 0, 0])
            E0, _ = g.query(x)
            assert abs(E1 - E0) < 1e-7


class TestCacheFile:
    def test_roundtrip(self, rng, tmp_path):
        occ = rng.random((8, 7, 6)) < 0.2
        g = build_esdf(occ, 0.1, np.array([1.0, -2.0, 0.5]))
        path = tmp_path / "field.esdf"
        g.save(path)
        back = EsdfGrid.load(path)
        assert back.dims == g.dims
        assert back.resolution == g.resolution
        assert np.allclose(back.origin, g.origin)
        assert np.allclose(back.values, g.values, atol=1e-6)  # float32 body

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not an esdf")
        with pytest.raises(ValueError):
            EsdfGrid.load(path)


class TestIngestion:
    def test_xyz_file(self, tmp_path):
        path = tmp_path / "cloud.xyz"
        path.write_text("# comment\n0 0 0\n1.0, 2.0, 0.5\n")
        pts = read_point_file(path)
        assert pts.shape == (2, 3)
        assert np.allclose(pts[1], [1.0, 2.0, 0.5])

    def test_ply_subset(self, tmp_path):
        path = tmp_path / "cloud.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0.5 0.5 0.5\n1.5 0.5 0.5\n")
        pts = read_point_file(path)
        assert pts.shape == (2, 3)

    def test_voxelize_marks_cells(self):
        pts = np.array([[0.05, 0.05, 0.05], [0.55, 0.05, 0.05]])
        occ, origin = voxelize_points(pts, 0.1, origin=np.zeros(3), padding=0.1)
        assert occ[0, 0, 0] and occ[5, 0, 0]

    def test_empty_cloud_rejected(self, tmp_path):
        path = tmp_path / "empty.xyz"
        path.write_text("\n")
        with pytest.raises(EmptyGrid):
            read_point_file(path)


class TestProceduralScenes:
    def test_wall_gap_scene(self):
        occ, origin = rasterize_scene(((0, 0, 0), (4, 3, 2)), 0.1, [
            {"type": "wall_gap", "axis": 0, "at": 2.0, "thickness": 0.2,
             "gap_center": [1.5, 1.0], "gap_width": 1.0, "gap_height": 2.0},
        ])
        g = build_esdf(occ, 0.1, origin)
        # the gap center is free, the wall beside it occupied
        assert g.query(np.array([2.0, 1.5, 1.0]))[0] > 0
        assert g.query(np.array([2.0, 0.2, 1.0]))[0] < 0.1

    def test_cylinder_and_box(self):
        scene = {"bounds": ((0, 0, 0), (3, 3, 2)), "resolution": 0.1,
                 "obstacles": [
                     {"type": "cylinder", "center": [1.0, 1.0], "radius": 0.3},
                     {"type": "box", "min": [2.0, 2.0, 0.0], "max": [2.5, 2.5, 2.0]},
                 ]}
        g = esdf_from_scene(scene)
        assert g.query(np.array([1.0, 1.0, 1.0]))[0] < 0
        assert g.query(np.array([2.25, 2.25, 1.0]))[0] < 0
        assert g.query(np.array([0.3, 2.7, 1.0]))[0] > 0.3

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            rasterize_scene(((0, 0, 0), (1, 1, 1)), 0.1, [{"type": "torus"}])
