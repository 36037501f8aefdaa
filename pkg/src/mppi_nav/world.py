"""Layered tri-state voxel maps and the field-of-view map update.

A grid stores ``cells[i, j, l]`` with ``i``/``j`` the horizontal cell indices
and ``l`` the layer index along world z.  Values are FREE (0), OCCUPIED (1)
or UNKNOWN (-1).  Horizontal cells and layers may have different sizes.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._accel import INLINE_OPTS, JIT_OPTS, njit

FREE = 0
OCCUPIED = 1
UNKNOWN = -1


class GridError(ValueError):
    pass


class OutOfBoundsError(GridError, IndexError):
    pass


class GridMismatchError(GridError):
    pass


@dataclass
class VoxelGrid:
    cells: np.ndarray
    cell_size: float = 1.0
    layer_height: float = 0.2
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # environment height the layers were built for; the top layer may reach
    # past it (8.5 m at 0.2 m layers -> 43 layers up to 8.6 m)
    height: float = None

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int8)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.cells.ndim != 3:
            raise GridError("cells must be a 3-D array")
        if self.cell_size <= 0 or self.layer_height <= 0:
            raise GridError("cell size and layer height must be positive")
        if self.height is None:
            self.height = self.cells.shape[2] * self.layer_height

    @property
    def dims(self):
        return self.cells.shape

    @property
    def extent(self):
        nx, ny, nz = self.dims
        return np.array([nx * self.cell_size, ny * self.cell_size, nz * self.layer_height])

    @property
    def resolution(self):
        return np.array([self.cell_size, self.cell_size, self.layer_height])

    def layer(self, ell):
        """One horizontal slice as a 2-D (nx, ny) view."""
        return self.cells[:, :, ell]

    def copy(self):
        return VoxelGrid(self.cells.copy(), self.cell_size, self.layer_height, self.origin.copy(), self.height)

    def same_geometry(self, other):
        return (
            self.dims == other.dims
            and self.cell_size == other.cell_size
            and self.layer_height == other.layer_height
            and np.array_equal(self.origin, other.origin)
        )

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.cells, other.cells)


def n_layers(height, layer_height):
    # tolerate representation error, e.g. 8.5 / 0.2 = 42.50000000000001
    return max(1, math.ceil(round(height / layer_height, 9)))


def new_grid(extent, cell_size=1.0, layer_height=0.2, fill=UNKNOWN, origin=(0.0, 0.0, 0.0)):
    extent = np.asarray(extent, dtype=np.float64)
    if extent.shape != (3,) or np.any(extent <= 0) or cell_size <= 0 or layer_height <= 0:
        raise GridError(f"invalid extent {extent} / resolution ({cell_size}, {layer_height})")
    if fill not in (FREE, OCCUPIED, UNKNOWN):
        raise GridError(f"fill must be one of -1, 0, 1, got {fill}")
    nx = max(1, math.ceil(round(extent[0] / cell_size, 9)))
    ny = max(1, math.ceil(round(extent[1] / cell_size, 9)))
    nz = n_layers(extent[2], layer_height)
    return VoxelGrid(np.full((nx, ny, nz), fill, dtype=np.int8), cell_size, layer_height, origin,
                     float(extent[2]))


def world_to_cell(grid, position):
    pos = np.asarray(position, dtype=np.float64)
    idx = np.floor((pos - grid.origin) / grid.resolution).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= grid.dims):
        raise OutOfBoundsError(f"position {pos} outside grid of extent {grid.extent}")
    return tuple(int(v) for v in idx)


def cell_to_world(grid, index):
    """Center of cell ``(i, j, l)`` in world coordinates."""
    return grid.origin + (np.asarray(index, dtype=np.float64) + 0.5) * grid.resolution


def layer_of(grid, z):
    """Layer index of altitude ``z``, for z in [0, height)."""
    rel = z - grid.origin[2]
    ell = math.floor(rel / grid.layer_height)
    if rel < 0 or rel >= grid.height or ell >= grid.dims[2]:
        raise OutOfBoundsError(f"z = {z} outside [0, {grid.height})")
    return ell


@njit(**INLINE_OPTS)
def lookup(cells, ox, oy, oz, cell, lh, x, y, z, outside):
    """Cell value at a world point, ``outside`` when off the grid."""
    fi = math.floor((x - ox) / cell)
    fj = math.floor((y - oy) / cell)
    fl = math.floor((z - oz) / lh)
    if fi < 0 or fj < 0 or fl < 0:
        return outside
    if fi >= cells.shape[0] or fj >= cells.shape[1] or fl >= cells.shape[2]:
        return outside
    return cells[int(fi), int(fj), int(fl)]


def is_occupied(grid, position, outside=OCCUPIED):
    """Tri-state value at ``position``; ``outside`` is returned off the grid."""
    x, y, z = (float(v) for v in position)
    return int(lookup(grid.cells, grid.origin[0], grid.origin[1], grid.origin[2],
                      grid.cell_size, grid.layer_height, x, y, z, outside))


@dataclass(frozen=True)
class FovMask:
    """Sensor footprint in cells: ``fx`` x ``fy`` horizontally, ``fz`` layers,
    rotated by ``theta`` about world z."""

    fx: int = 5
    fy: int = 5
    fz: int = 15
    theta: float = 0.0

    def __post_init__(self):
        for n in (self.fx, self.fy, self.fz):
            if n < 1 or n % 2 == 0:
                raise GridError(f"FoV extents must be odd positive cell counts, got {(self.fx, self.fy, self.fz)}")

    def rotated(self, theta):
        return FovMask(self.fx, self.fy, self.fz, float(theta))

    @classmethod
    def from_meters(cls, size, grid, theta=0.0):
        """Convert a metric footprint to odd cell counts (rounded up to odd)."""
        counts = []
        for s, res in zip(size, (grid.cell_size, grid.cell_size, grid.layer_height)):
            n = max(1, int(round(s / res)))
            counts.append(n if n % 2 else n + 1)
        return cls(*counts, theta=theta)


_MEMBER_EPS = 1e-9


def _fov_block(grid, position, mask):
    """Index arrays (ii, jj) of the horizontal footprint and the layer range."""
    ci, cj, cl = world_to_cell(grid, position)
    nx, ny, nz = grid.dims
    hx, hy = mask.fx / 2.0, mask.fy / 2.0
    c, s = math.cos(mask.theta), math.sin(mask.theta)
    if mask.theta == 0.0:
        reach_x, reach_y = mask.fx // 2, mask.fy // 2
    else:
        # bounding box of the rotated rectangle, in cells
        reach_x = int(math.ceil(abs(c) * hx + abs(s) * hy))
        reach_y = int(math.ceil(abs(s) * hx + abs(c) * hy))
    di = np.arange(-reach_x, reach_x + 1)
    dj = np.arange(-reach_y, reach_y + 1)
    DI, DJ = np.meshgrid(di, dj, indexing="ij")
    # offsets in the mask frame, measured in cell units
    along = c * DI + s * DJ
    across = -s * DI + c * DJ
    # a cell belongs when its center lies in the rectangle of half-size f/2 cells
    inside = (np.abs(along) <= hx + _MEMBER_EPS) & (np.abs(across) <= hy + _MEMBER_EPS)
    ii = ci + DI[inside]
    jj = cj + DJ[inside]
    keep = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
    half_z = mask.fz // 2
    l0, l1 = max(0, cl - half_z), min(nz - 1, cl + half_z)
    return ii[keep], jj[keep], l0, l1


def fov_cells(grid, position, mask):
    """Set of (i, j, l) cells visible from ``position`` through ``mask``."""
    ii, jj, l0, l1 = _fov_block(grid, position, mask)
    return {(int(i), int(j), ell) for i, j in zip(ii, jj) for ell in range(l0, l1 + 1)}


def update_local_map(local, truth, position, mask):
    """Copy the truth cells inside the FoV into ``local`` (in place); returns it."""
    if not local.same_geometry(truth):
        raise GridMismatchError("local and global maps differ in geometry")
    ii, jj, l0, l1 = _fov_block(truth, position, mask)
    local.cells[ii, jj, l0:l1 + 1] = truth.cells[ii, jj, l0:l1 + 1]
    return local


def reveal_all(local, truth):
    if not local.same_geometry(truth):
        raise GridMismatchError("local and global maps differ in geometry")
    local.cells[...] = truth.cells
    return local


def dumps(grid):
    """Text form: header ``nx ny nz cell_size r ox oy oz`` then, per layer,
    ``ny`` rows of ``nx`` values."""
    nx, ny, nz = grid.dims
    ox, oy, oz = (float(v) for v in grid.origin)
    lines = [f"{nx} {ny} {nz} {float(grid.cell_size)!r} {float(grid.layer_height)!r} {ox!r} {oy!r} {oz!r}"]
    for ell in range(nz):
        for j in range(ny):
            lines.append(" ".join(str(int(v)) for v in grid.cells[:, j, ell]))
    return "\n".join(lines) + "\n"


def loads(text):
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 8:
        raise GridError("grid header must be 'nx ny nz cell_size r ox oy oz'")
    head = rows[0]
    nx, ny, nz = (int(v) for v in head[:3])
    cell, lh, ox, oy, oz = (float(v) for v in head[3:])
    body = rows[1:]
    if len(body) != ny * nz or any(len(r) != nx for r in body):
        raise GridError(f"expected {nz} blocks of {ny} rows x {nx} values")
    vals = np.array(body, dtype=np.int8).reshape(nz, ny, nx)
    if not np.isin(vals, (FREE, OCCUPIED, UNKNOWN)).all():
        raise GridError("cell values must be -1, 0 or 1")
    return VoxelGrid(vals.transpose(2, 1, 0), cell, lh, (ox, oy, oz))


def save(grid, path):
    with open(path, "w") as fh:
        fh.write(dumps(grid))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
