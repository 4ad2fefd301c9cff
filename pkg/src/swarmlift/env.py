"""Occupancy-grid ingestion and the Euclidean signed distance field.

Distances are measured between voxel centers: free cells carry the exact
Euclidean distance to the nearest occupied cell center, occupied cells the
negated distance to the nearest free cell center.  Queries interpolate the
field trilinearly on the center lattice and differentiate the interpolant
analytically, so the returned gradient is exact for the interpolated field.

Out-of-bounds queries are soft: the value grows by the distance to the grid
box (clamped query point) so optimizer iterates that momentarily leave the
map still see a well-defined, obstacle-free landscape.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_CACHE_MAGIC = b"ESDF1\n"


class EmptyGrid(ValueError):
    """No voxels to build a field from."""


@dataclass
class EsdfGrid:
    origin: np.ndarray          # (3,) corner of cell (0,0,0)
    resolution: float
    values: np.ndarray          # (nx, ny, nz) signed distance at cell centers

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.size == 0:
            raise EmptyGrid("ESDF needs a non-empty 3-D grid")

    @property
    def dims(self):
        return self.values.shape

    def cell_center(self, idx):
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def query(self, x):
        """Value and gradient at one point; see query_many."""
        E, g, _ = self.query_many(np.asarray(x, dtype=float)[None, :])
        return float(E[0]), g[0]

    def query_many(self, X):
        """Trilinear value, analytic gradient and out-of-bounds flags.

        X: (P, 3).  Returns (E (P,), grad (P, 3), outside (P,) bool).
        Outside the center lattice the value is the boundary value plus the
        clamp distance and the gradient gains the outward unit direction.
        """
        X = np.asarray(X, dtype=float)
        u = (X - self.origin[None, :]) / self.resolution - 0.5
        hi = np.array(self.dims, dtype=float) - 1.0
        uc = np.clip(u, 0.0, hi[None, :])
        out_vec = (u - uc) * self.resolution
        out_dist = np.linalg.norm(out_vec, axis=1)
        outside = out_dist > 0.0

        i0 = np.minimum(uc.astype(int), (np.array(self.dims) - 2).clip(min=0))
        f = uc - i0
        # degenerate axes (single cell) interpolate trivially
        for ax in range(3):
            if self.dims[ax] == 1:
                i0[:, ax] = 0
                f[:, ax] = 0.0

        ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
        sx = 1 if self.dims[0] > 1 else 0
        sy = 1 if self.dims[1] > 1 else 0
        sz = 1 if self.dims[2] > 1 else 0
        V = self.values
        c000 = V[ix, iy, iz]
        c100 = V[ix + sx, iy, iz]
        c010 = V[ix, iy + sy, iz]
        c110 = V[ix + sx, iy + sy, iz]
        c001 = V[ix, iy, iz + sz]
        c101 = V[ix + sx, iy, iz + sz]
        c011 = V[ix, iy + sy, iz + sz]
        c111 = V[ix + sx, iy + sy, iz + sz]

        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        c00 = c000 * (1 - fx) + c100 * fx
        c10 = c010 * (1 - fx) + c110 * fx
        c01 = c001 * (1 - fx) + c101 * fx
        c11 = c011 * (1 - fx) + c111 * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        E = c0 * (1 - fz) + c1 * fz

        dx = ((c100 - c000) * (1 - fy) + (c110 - c010) * fy) * (1 - fz) \
            + ((c101 - c001) * (1 - fy) + (c111 - c011) * fy) * fz
        dy = (c10 - c00) * (1 - fz) + (c11 - c01) * fz
        dz = c1 - c0
        grad = np.stack([dx, dy, dz], axis=1) / self.resolution

        if outside.any():
            E = E + out_dist
            unit = np.zeros_like(out_vec)
            mask = out_dist > 0
            unit[mask] = out_vec[mask] / out_dist[mask, None]
            grad = grad + unit
        return E, grad, outside

    # -- cache file ---------------------------------------------------------

    def save(self, path) -> None:
        """Binary cache: header then float32 values, x-fastest order."""
        with open(path, "wb") as fh:
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<3d", *self.origin))
            fh.write(struct.pack("<d", self.resolution))
            fh.write(struct.pack("<3i", *self.dims))
            fh.write(self.values.astype("<f4").ravel(order="F").tobytes())

    @classmethod
    def load(cls, path) -> "EsdfGrid":
        with open(path, "rb") as fh:
            if fh.read(len(_CACHE_MAGIC)) != _CACHE_MAGIC:
                raise ValueError("not an ESDF cache file")
            origin = struct.unpack("<3d", fh.read(24))
            res, = struct.unpack("<d", fh.read(8))
            dims = struct.unpack("<3i", fh.read(12))
            data = np.frombuffer(fh.read(), dtype="<f4")
        values = data.reshape(dims, order="F").astype(float)
        return cls(np.array(origin), res, values)


def build_esdf(occupancy, resolution, origin) -> EsdfGrid:
    """Signed Euclidean distance transform of a boolean occupancy grid.

    Exact center-to-center distances (verified cell-for-cell against a brute
    force scan in the tests).  An all-free grid gets the domain diagonal as a
    finite "far" sentinel; an all-occupied grid its negative.
    """
    occ = np.asarray(occupancy, dtype=bool)
    if occ.ndim != 3 or occ.size == 0:
        raise EmptyGrid("occupancy grid must be non-empty and 3-D")
    cap = float(np.linalg.norm(np.array(occ.shape) * resolution))
    if not occ.any():
        values = np.full(occ.shape, cap)
    elif occ.all():
        values = np.full(occ.shape, -cap)
    else:
        d_out = ndimage.distance_transform_edt(~occ, sampling=resolution)
        d_in = ndimage.distance_transform_edt(occ, sampling=resolution)
        values = np.minimum(d_out, cap) - np.minimum(d_in, cap)
    return EsdfGrid(np.asarray(origin, dtype=float), float(resolution), values)


def voxelize_points(points, resolution, origin=None, padding=0.5):
    """Occupancy grid from a point cloud; returns (occupancy, origin)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.size == 0:
        raise EmptyGrid("empty point cloud")
    if origin is None:
        origin = pts.min(axis=0) - padding
    origin = np.asarray(origin, dtype=float)
    idx = np.floor((pts - origin) / resolution).astype(int)
    dims = idx.max(axis=0) + 1 + int(round(padding / resolution))
    occ = np.zeros(dims, dtype=bool)
    keep = (idx >= 0).all(axis=1)
    occ[tuple(idx[keep].T)] = True
    return occ, origin


def read_point_file(path):
    """Read an ascii xyz file or a minimal ascii PLY (x y z properties)."""
    with open(path) as fh:
        first = fh.readline()
        if first.strip() == "ply":
            n_vert = 0
            for line in fh:
                tok = line.split()
                if tok[:2] == ["element", "vertex"]:
                    n_vert = int(tok[2])
                if tok and tok[0] == "end_header":
                    break
            pts = []
            for _ in range(n_vert):
                vals = fh.readline().split()
                pts.append([float(v) for v in vals[:3]])
            return np.asarray(pts, dtype=float)
        pts = []
        for line in [first] + fh.readlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = line.replace(",", " ").split()
            pts.append([float(v) for v in vals[:3]])
        if not pts:
            raise EmptyGrid("no points in file")
        return np.asarray(pts, dtype=float)


# -- procedural maps --------------------------------------------------------


def rasterize_scene(bounds, resolution, obstacles):
    """Occupancy grid from a procedural obstacle list.

    bounds: ((x0,y0,z0), (x1,y1,z1)); obstacles: list of dicts with a
    "type" of box ({"min","max"}), cylinder ({"center" xy, "radius",
    "zmin","zmax"}) or wall_gap ({"axis" normal axis, "at" plane coord,
    "thickness", "gap_center" 2 coords in-plane, "gap_width","gap_height"}).
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    dims = np.maximum(np.ceil((hi - lo) / resolution).astype(int), 1)
    occ = np.zeros(dims, dtype=bool)
    centers = [lo[a] + (np.arange(dims[a]) + 0.5) * resolution for a in range(3)]
    X = centers[0][:, None, None]
    Y = centers[1][None, :, None]
    Z = centers[2][None, None, :]
    for ob in obstacles:
        kind = ob["type"]
        if kind == "box":
            mn = np.asarray(ob["min"], dtype=float)
            mx = np.asarray(ob["max"], dtype=float)
            occ |= ((X >= mn[0]) & (X <= mx[0]) & (Y >= mn[1]) & (Y <= mx[1])
                    & (Z >= mn[2]) & (Z <= mx[2]))
        elif kind == "cylinder":
            cx, cy = ob["center"]
            r = ob["radius"]
            zmin = ob.get("zmin", lo[2])
            zmax = ob.get("zmax", hi[2])
            occ |= (((X - cx) ** 2 + (Y - cy) ** 2 <= r * r)
                    & (Z >= zmin) & (Z <= zmax))
        elif kind == "wall_gap":
            axis = int(ob.get("axis", 0))
            at = float(ob["at"])
            th = float(ob.get("thickness", resolution))
            gc = np.asarray(ob["gap_center"], dtype=float)
            gw = float(ob["gap_width"])
            gh = float(ob.get("gap_height", hi[2] - lo[2]))
            coords = [X, Y, Z]
            in_wall = np.abs(coords[axis] - at) <= th / 2
            others = [a for a in range(3) if a != axis]
            in_gap = ((np.abs(coords[others[0]] - gc[0]) <= gw / 2)
                      & (np.abs(coords[others[1]] - gc[1]) <= gh / 2))
            occ |= in_wall & ~in_gap
        else:
            raise ValueError(f"unknown obstacle type {kind!r}")
    return occ, lo


def esdf_from_scene(scene: dict) -> EsdfGrid:
    """Build the distance field described by a scenario "map" section."""
    res = float(scene.get("resolution", 0.1))
    if "points_file" in scene:
        pts = read_point_file(scene["points_file"])
        occ, origin = voxelize_points(pts, res)
    else:
        occ, origin = rasterize_scene(scene["bounds"], res,
                                      scene.get("obstacles", []))
    return build_esdf(occ, res, origin)
