"""Uniform lattices over domains in C^n, grid functions, and node sets.

Every grid lives on the global lattice ``h * Z^(2n)``; an array corner
``lo`` (integer node coordinates) places the local array on it.  Grids built
with the same spacing therefore share nodes, which is what the domain
comparison experiments rely on.
"""

import os
import struct
import tempfile

import numpy as np

from .errors import (
    EmptyInterior,
    EmptyRegion,
    EvaluationError,
    GridMismatch,
    NonLatticeOffset,
    PshError,
    UnboundedDomain,
)
from .expr import Expression
from .stencil import StencilSet

EXTERIOR, BAND, INTERIOR = 0, 1, 2

MAGIC = b"PSHG"
FORMAT_VERSION = 1
_CHUNK = 1 << 20


class Grid:
    """Node classification of a lattice over one domain.

    Attributes
    ----------
    n : int
        Complex dimension.
    h : float
        Spacing, shared by all 2n real axes.
    lo : ndarray of int64
        Global integer coordinates of the array's first node.
    labels : ndarray of int8
        ``EXTERIOR``, ``BAND`` or ``INTERIOR`` per node, shape ``shape``.
    stencil : StencilSet
    """

    def __init__(self, n, h, lo, labels, stencil=None):
        self.n = int(n)
        self.h = float(h)
        self.lo = np.asarray(lo, dtype=np.int64)
        labels = np.ascontiguousarray(labels, dtype=np.int8)
        labels.flags.writeable = False
        self.labels = labels
        self.stencil = stencil or StencilSet.default(n)
        if labels.ndim != 2 * self.n or self.lo.shape != (2 * self.n,):
            raise PshError("label array rank must be 2n")
        self._cache = {}

    def __repr__(self):
        return (
            f"Grid(n={self.n}, h={self.h:g}, shape={self.shape}, "
            f"interior={self.num_interior}, band={self.num_band})"
        )

    @property
    def shape(self):
        return self.labels.shape

    @property
    def size(self):
        return self.labels.size

    @property
    def origin(self):
        return self.lo * self.h

    @property
    def interior(self):
        return self.labels == INTERIOR

    @property
    def band(self):
        return self.labels == BAND

    @property
    def active(self):
        return self.labels != EXTERIOR

    @property
    def num_interior(self):
        return int(np.count_nonzero(self.labels == INTERIOR))

    @property
    def num_band(self):
        return int(np.count_nonzero(self.labels == BAND))

    def same_as(self, other):
        return (
            self.n == other.n
            and self.h == other.h
            and np.array_equal(self.lo, other.lo)
            and self.shape == other.shape
            and np.array_equal(self.labels, other.labels)
        )

    def check_same(self, other):
        if self is not other and not self.same_as(other):
            raise GridMismatch("grid functions live on different grids")

    # node geometry ---------------------------------------------------------
    def index_coords(self, flat):
        """Global integer lattice coordinates of flat node indices, shape (N, 2n)."""
        loc = np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)
        return loc + self.lo

    def coords(self, flat):
        """Real coordinates of flat node indices, shape (N, 2n)."""
        return self.index_coords(flat) * self.h

    def flat_index(self, point):
        """Flat index of the node at a real point (must be a lattice node of the array)."""
        p = np.asarray(point, dtype=float) / self.h
        k = np.rint(p).astype(np.int64)
        if not np.allclose(p, k, atol=1e-9):
            raise NonLatticeOffset(f"{point} is not a lattice node for h = {self.h}")
        loc = k - self.lo
        if np.any(loc < 0) or np.any(loc >= np.asarray(self.shape)):
            raise PshError(f"{point} lies outside the grid array")
        return int(np.ravel_multi_index(tuple(loc), self.shape))

    @property
    def interior_flat(self):
        if "interior_flat" not in self._cache:
            self._cache["interior_flat"] = np.flatnonzero(self.labels == INTERIOR)
        return self._cache["interior_flat"]

    @property
    def active_flat(self):
        if "active_flat" not in self._cache:
            self._cache["active_flat"] = np.flatnonzero(self.labels != EXTERIOR)
        return self._cache["active_flat"]

    def flat_offset(self, offset):
        strides = np.asarray(self.labels.strides, dtype=np.int64)  # int8: stride == element step
        return int(np.dot(np.asarray(offset, dtype=np.int64), strides))

    @property
    def direction_offsets(self):
        """(ndir, 2) flat offsets of xi and i*xi for every stencil direction."""
        if "dir_off" not in self._cache:
            self._cache["dir_off"] = np.array(
                [[self.flat_offset(a), self.flat_offset(b)] for a, b in self.stencil.offset_pairs],
                dtype=np.int64,
            )
        return self._cache["dir_off"]

    @property
    def direction_weights(self):
        """h^2 |xi|^2 per direction."""
        return np.array([self.h * self.h * k for k in self.stencil.norms2], dtype=float)

    def colored_interior(self):
        """Interior nodes sorted by colour, row-major within a colour.

        Returns (nodes, color_ptr) with colour c occupying
        ``nodes[color_ptr[c]:color_ptr[c + 1]]``.  Colours use local array
        indices, so a translated grid sweeps in the same order.
        """
        if "colored" not in self._cache:
            m, k = self.stencil.coloring()
            nodes = self.interior_flat
            loc = np.stack(np.unravel_index(nodes, self.shape), axis=-1)
            colors = (loc @ np.asarray(k, dtype=np.int64)) % m
            order = np.argsort(colors, kind="stable")
            ptr = np.zeros(m + 1, dtype=np.int64)
            ptr[1:] = np.cumsum(np.bincount(colors, minlength=m))
            self._cache["colored"] = (np.ascontiguousarray(nodes[order]), ptr)
        return self._cache["colored"]

    def distance_to_band(self):
        """Lattice graph distance (in stencil steps) from each interior node to the band."""
        if "band_dist" not in self._cache:
            dist = np.full(self.shape, -1, dtype=np.int64)
            frontier = self.labels == BAND
            dist[frontier] = 0
            level = 0
            reach = frontier
            while True:
                level += 1
                grown = _dilate(reach, self.stencil.offsets) & (self.labels == INTERIOR) & (dist < 0)
                if not grown.any():
                    break
                dist[grown] = level
                reach = reach | grown
            self._cache["band_dist"] = dist
        return self._cache["band_dist"]

    def translated(self, shift):
        """The same classification relabeled by an integer lattice shift."""
        return Grid(self.n, self.h, self.lo + np.asarray(shift, dtype=np.int64), self.labels, self.stencil)

    def overlap(self, other):
        """Slices of self and other covering their common lattice box."""
        if self.n != other.n or self.h != other.h:
            raise GridMismatch("grids do not share a lattice")
        a_lo, b_lo = self.lo, other.lo
        a_hi = a_lo + np.asarray(self.shape)
        b_hi = b_lo + np.asarray(other.shape)
        lo = np.maximum(a_lo, b_lo)
        hi = np.minimum(a_hi, b_hi)
        if np.any(hi <= lo):
            return None
        sa = tuple(slice(int(l - a), int(u - a)) for l, u, a in zip(lo, hi, a_lo))
        sb = tuple(slice(int(l - b), int(u - b)) for l, u, b in zip(lo, hi, b_lo))
        return sa, sb

    # persistence -----------------------------------------------------------
    def header_bytes(self):
        parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, self.n)]
        parts.append(struct.pack("<" + "I" * (2 * self.n), *self.shape))
        parts.append(struct.pack("<d", self.h))
        parts.append(struct.pack("<" + "d" * (2 * self.n), *self.origin))
        parts.append(self.labels.astype(np.uint8).tobytes(order="C"))
        return b"".join(parts)


def _shift_view(mask, offset):
    """Array whose entry at x is mask[x - offset] (False where out of range)."""
    out = np.zeros_like(mask)
    src = []
    dst = []
    for o, size in zip(offset, mask.shape):
        if o >= 0:
            src.append(slice(0, size - o))
            dst.append(slice(o, size))
        else:
            src.append(slice(-o, size))
            dst.append(slice(0, size + o))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _dilate(mask, offsets):
    out = mask.copy()
    for o in offsets:
        out |= _shift_view(mask, o)
    return out


def build_grid(spec, h, stencil=None):
    """Classify the lattice ``h Z^(2n)`` against ``spec``.

    Raises
    ------
    EmptyInterior
        No node satisfies rho < 0.
    UnboundedDomain
        rho < 0 at a node of the stencil-width margin around the bounding box.
    """
    if not h > 0:
        raise PshError(f"spacing must be positive, got {h}")
    stencil = stencil or StencilSet.default(spec.n)
    if stencil.n != spec.n:
        raise PshError("stencil dimension does not match the domain")
    width = stencil.width
    blo, bhi = spec.bounding_box()
    lo = np.floor(np.asarray(blo) / h).astype(np.int64) - width
    hi = np.ceil(np.asarray(bhi) / h).astype(np.int64) + width
    shape = tuple(int(x) for x in hi - lo + 1)
    total = int(np.prod(shape))
    rho = np.empty(total)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        pts = (np.stack(np.unravel_index(flat, shape), axis=-1) + lo) * h
        rho[start : start + len(flat)] = spec.rho(pts)
    inside = (rho < 0).reshape(shape)
    if not inside.any():
        raise EmptyInterior(f"no lattice node of spacing {h} lies inside the domain")
    margin = np.ones(shape, dtype=bool)
    margin[tuple(slice(width, s - width) for s in shape)] = False
    if np.any(inside & margin):
        raise UnboundedDomain("domain reaches the margin of its bounding box")
    band = _dilate(inside, stencil.offsets) & ~inside
    labels = np.full(shape, EXTERIOR, dtype=np.int8)
    labels[band] = BAND
    labels[inside] = INTERIOR
    return Grid(spec.n, h, lo, labels, stencil)


class GridFunction:
    """Real values on the interior and band nodes of a grid (NaN elsewhere)."""

    def __init__(self, grid, values):
        values = np.array(values, dtype=float, copy=True).reshape(grid.shape)
        values[~grid.active] = np.nan
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"GridFunction({self.grid!r})"

    @property
    def flat(self):
        return self.values.reshape(-1)

    def interior_values(self):
        return self.flat[self.grid.interior_flat]

    def at(self, point):
        return float(self.flat[self.grid.flat_index(point)])

    def copy_values(self):
        return np.array(self.values)

    def with_values(self, values):
        return GridFunction(self.grid, values)

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            self.grid.check_same(other.grid)
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def minimum(self, other):
        return self._binary(other, np.minimum)

    def maximum(self, other):
        return self._binary(other, np.maximum)

    def to_bytes(self):
        vals = np.where(self.grid.active, self.values, np.nan).astype("<f8")
        return self.grid.header_bytes() + vals.tobytes(order="C")


class GridSet:
    """A subset of the interior nodes of a grid."""

    def __init__(self, grid, mask):
        mask = np.array(mask, dtype=bool, copy=True).reshape(grid.shape)
        if np.any(mask & ~grid.interior):
            raise PshError("a GridSet may contain interior nodes only")
        mask.flags.writeable = False
        self.grid = grid
        self.mask = mask

    def __repr__(self):
        return f"GridSet({len(self)} nodes)"

    def __len__(self):
        return int(np.count_nonzero(self.mask))

    @classmethod
    def from_predicate(cls, grid, expr):
        """Interior nodes where ``expr`` (an expression text or callable) is true."""
        flat = grid.interior_flat
        pts = grid.coords(flat)
        if callable(expr):
            keep = np.asarray(expr(pts), dtype=bool)
        else:
            keep = Expression(expr).evaluate(pts) > 0
        mask = np.zeros(grid.size, dtype=bool)
        mask[flat[keep]] = True
        return cls(grid, mask)

    @classmethod
    def all_interior(cls, grid):
        return cls(grid, grid.interior)

    def issubset(self, other):
        return not np.any(self.mask & ~other.mask)

    def transfer(self, grid):
        """The same lattice nodes seen from another grid (nodes outside its interior dropped)."""
        mask = np.zeros(grid.shape, dtype=bool)
        ov = self.grid.overlap(grid)
        if ov is not None:
            sa, sb = ov
            mask[sb] = self.mask[sa]
        return GridSet(grid, mask & grid.interior)


def _node_values(grid, expr):
    flat = grid.active_flat
    pts = grid.coords(flat)
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        vals = np.full(len(flat), float(expr))
    elif callable(expr) and not isinstance(expr, Expression):
        vals = np.asarray(expr(pts), dtype=float)
        if vals.shape != (len(flat),):
            vals = np.broadcast_to(vals, (len(flat),)).astype(float)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("callable produced non-finite values")
    else:
        expr = expr if isinstance(expr, Expression) else Expression(expr)
        vals = np.empty(len(flat))
        for s in range(0, len(flat), _CHUNK):
            vals[s : s + _CHUNK] = expr.evaluate(pts[s : s + _CHUNK])
    return flat, vals


def sample(expr, grid):
    """Evaluate an expression, number or callable at interior and band nodes."""
    flat, vals = _node_values(grid, expr)
    out = np.full(grid.size, np.nan)
    out[flat] = vals
    return GridFunction(grid, out)


def lattice_shift(a, grid):
    """Integer node shift of a real translation vector, or NonLatticeOffset."""
    from .domain import real_vector

    av = real_vector(a, grid.n) / grid.h
    k = np.rint(av)
    if not np.allclose(av, k, rtol=0, atol=1e-9):
        raise NonLatticeOffset(f"offset {a} is not a multiple of h = {grid.h}")
    return k.astype(np.int64)


def translate_function(u, a):
    """Relabel u onto the grid translated by ``a`` (no interpolation).

    The result at node z + a equals u at z.
    """
    shift = lattice_shift(a, u.grid)
    return GridFunction(u.grid.translated(shift), u.values)


def sup_diff(u, v, region=None):
    """max |u - v| over ``region`` (a GridSet) or over all interior nodes."""
    u.grid.check_same(v.grid)
    if region is None:
        mask = u.grid.interior
    else:
        u.grid.check_same(region.grid)
        mask = region.mask
    if not mask.any():
        raise EmptyRegion("sup over an empty region")
    return float(np.max(np.abs(u.values[mask] - v.values[mask])))


def restrict(u, grid, fill=None):
    """Values of u at the nodes of another grid on the same lattice.

    Active nodes of ``grid`` not active in u's grid take ``fill`` (an
    expression or number), or raise if no fill is given.
    """
    out = np.full(grid.shape, np.nan)
    ov = u.grid.overlap(grid)
    if ov is not None:
        sa, sb = ov
        out[sb] = u.values[sa]
    missing = grid.active & np.isnan(out)
    if missing.any():
        if fill is None:
            raise GridMismatch("target grid has active nodes outside the source grid")
        filled = sample(fill, grid).values
        out[missing] = filled[missing]
    return GridFunction(grid, out)


# --- files -------------------------------------------------------------------


def _parse_header(buf):
    if buf[:4] != MAGIC:
        raise PshError("not a PSHG grid file")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise PshError(f"unsupported grid file version {version}")
    pos = 12
    shape = struct.unpack_from("<" + "I" * (2 * n), buf, pos)
    pos += 8 * n
    (h,) = struct.unpack_from("<d", buf, pos)
    pos += 8
    origin = np.array(struct.unpack_from("<" + "d" * (2 * n), buf, pos))
    pos += 16 * n
    count = int(np.prod(shape))
    labels = np.frombuffer(buf, dtype=np.uint8, count=count, offset=pos).reshape(shape)
    pos += count
    lo = np.rint(origin / h).astype(np.int64)
    return n, h, lo, labels.astype(np.int8), pos


def atomic_write(path, data):
    """Write bytes or text via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grid(path, grid):
    atomic_write(path, grid.header_bytes())


def read_grid(path, stencil=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    n, h, lo, labels, _ = _parse_header(buf)
    return Grid(n, h, lo, labels, stencil)


def write_function(path, u):
    atomic_write(path, u.to_bytes())


def read_function(path, stencil=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    n, h, lo, labels, pos = _parse_header(buf)
    grid = Grid(n, h, lo, labels, stencil)
    vals = np.frombuffer(buf, dtype="<f8", count=grid.size, offset=pos)
    if len(buf) != pos + 8 * grid.size:
        raise PshError("grid function file has trailing or missing bytes")
    return GridFunction(grid, vals.astype(float))
