"""Gaussian-integer complex directions and Hermitian-orthogonal frames.

A direction xi in (Z + iZ)^n contributes the four lattice offsets
+-xi and +-i*xi; the second difference over them is the Laplacian of u
restricted to the complex line through the node spanned by xi.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .errors import StencilError

DEFAULT_FRAMES_2D = (
    ((1, 0), (0, 1)),
    ((1, 1), (1, -1)),
    ((1, 1j), (1, -1j)),
)


def _gaussian(v):
    c = complex(v)
    if c.real != int(c.real) or c.imag != int(c.imag):
        raise StencilError(f"{v!r} is not a Gaussian integer")
    return complex(int(c.real), int(c.imag))


def hermitian(a, b):
    """<a, b> = sum a_k conj(b_k), exact for Gaussian integers."""
    return sum(x * y.conjugate() for x, y in zip(a, b))


def real_offset(xi):
    """Real lattice vector (Re xi_1, Im xi_1, ...) of a complex direction."""
    out = []
    for c in xi:
        out.extend((int(c.real), int(c.imag)))
    return tuple(out)


def _parse_gaussian(obj):
    # config form: [re, im] pairs, or plain numbers
    if isinstance(obj, (list, tuple)):
        if len(obj) != 2:
            raise StencilError(f"Gaussian integer must be a [re, im] pair, got {obj!r}")
        return _gaussian(complex(obj[0], obj[1]))
    return _gaussian(obj)


@dataclass(frozen=True)
class StencilSet:
    """Directions, frames and derived lattice offsets for one dimension.

    ``frames`` holds index pairs into ``directions``.  For n = 1 the set is
    the single direction 1 and there are no frames.
    """

    n: int
    directions: tuple
    frames: tuple = ()

    def __post_init__(self):
        if self.n not in (1, 2):
            raise StencilError("stencils exist for n = 1 and n = 2 only")
        if self.n == 1:
            if self.directions != ((1 + 0j,),) or self.frames:
                raise StencilError("the n = 1 stencil is the single direction 1")
            return
        if not self.frames:
            raise StencilError("an n = 2 stencil needs at least one frame")
        for k, (p, q) in enumerate(self.frames):
            a, b = self.directions[p], self.directions[q]
            if hermitian(a, b) != 0:
                raise StencilError(
                    f"frame {k} ({_fmt(a)}, {_fmt(b)}) is not Hermitian-orthogonal"
                )
        for xi in self.directions:
            if len(xi) != self.n or all(c == 0 for c in xi):
                raise StencilError(f"bad direction {_fmt(xi)}")

    @classmethod
    def default(cls, n):
        if n == 1:
            return cls(1, ((1 + 0j,),))
        return cls.from_frames(2, DEFAULT_FRAMES_2D)

    @classmethod
    def from_frames(cls, n, frames):
        """Build from frames given as pairs of directions (complex numbers)."""
        if n == 1:
            return cls.default(1)
        dirs = []
        idx = []
        for fr in frames:
            if len(fr) != 2:
                raise StencilError(f"a frame is a pair of directions, got {fr!r}")
            pair = []
            for xi in fr:
                xi = tuple(_gaussian(c) for c in xi)
                if xi not in dirs:
                    dirs.append(xi)
                pair.append(dirs.index(xi))
            idx.append(tuple(pair))
        return cls(n, tuple(dirs), tuple(idx))

    @classmethod
    def from_config(cls, n, cfg=None):
        """Config form: ``{"frames": [[dir, dir], ...], "extra_frames": [...]}``.

        Each direction is a list of n Gaussian integers written ``[re, im]``.
        """
        if n == 1:
            if cfg and (cfg.get("frames") or cfg.get("extra_frames")):
                raise StencilError("frames are not configurable for n = 1")
            return cls.default(1)
        cfg = cfg or {}
        unknown = set(cfg) - {"frames", "extra_frames"}
        if unknown:
            raise StencilError(f"unknown stencil keys {sorted(unknown)}")
        frames = list(DEFAULT_FRAMES_2D)
        if cfg.get("frames") is not None:
            frames = [_parse_frame(fr, k) for k, fr in enumerate(cfg["frames"])]
        for k, fr in enumerate(cfg.get("extra_frames") or ()):
            frames.append(_parse_frame(fr, k))
        return cls.from_frames(n, frames)

    def to_config(self):
        def enc(xi):
            return [[int(c.real), int(c.imag)] for c in xi]

        return {"frames": [[enc(self.directions[p]), enc(self.directions[q])] for p, q in self.frames]}

    # derived lattice data ----------------------------------------------------
    @property
    def norms2(self):
        """|xi|^2 per direction (integers)."""
        return tuple(int(sum(abs(c) ** 2 for c in xi)) for xi in self.directions)

    @property
    def offset_pairs(self):
        """Per direction, the real offsets of xi and i*xi (each used with both signs)."""
        return tuple(
            (real_offset(xi), real_offset(tuple(1j * c for c in xi))) for xi in self.directions
        )

    @property
    def offsets(self):
        """All distinct nonzero real lattice offsets touched by the stencil."""
        seen = []
        for a, b in self.offset_pairs:
            for o in (a, b, tuple(-x for x in a), tuple(-x for x in b)):
                if o not in seen:
                    seen.append(o)
        return tuple(seen)

    @property
    def width(self):
        return max(max(abs(x) for x in o) for o in self.offsets)

    @property
    def frame_array(self):
        if self.n == 1:
            return np.zeros((1, 2), dtype=np.int64)
        return np.asarray(self.frames, dtype=np.int64)

    def coloring(self):
        """Smallest linear colouring ``c(x) = k.x mod m`` separating stencil neighbours.

        Nodes of one colour never appear in each other's stencils, so a colour
        class can be updated in any order, or all at once, with identical results.
        """
        offs = np.asarray(self.offsets, dtype=np.int64)
        dim = offs.shape[1]
        for m in range(2, 64):
            for k in itertools.product(range(m), repeat=dim):
                if np.all(offs @ np.asarray(k) % m != 0):
                    return m, tuple(k)
        raise StencilError("no linear colouring found for this stencil")


def _parse_frame(fr, k):
    if not isinstance(fr, (list, tuple)) or len(fr) != 2:
        raise StencilError(f"frame {k} must be a pair of directions, got {fr!r}")
    try:
        return tuple(tuple(_parse_gaussian(c) for c in xi) for xi in fr)
    except StencilError as exc:
        raise StencilError(f"frame {k}: {exc}") from None


def _fmt(xi):
    parts = []
    for c in xi:
        c = complex(c)
        if c.imag == 0:
            parts.append(str(int(c.real)))
        elif c.real == 0:
            parts.append(f"{int(c.imag)}i")
        else:
            parts.append(f"{int(c.real)}{int(c.imag):+d}i")
    return "(" + ", ".join(parts) + ")"
