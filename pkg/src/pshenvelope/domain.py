"""Analytic descriptions of bounded domains in C^n via a defining function.

A domain is the strict sublevel set ``{rho < 0}``.  Points of C^n are handled
as real vectors ``(Re z1, Im z1, Re z2, Im z2)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, EmptyInterior, UnboundedDomain
from .expr import Expression

KINDS = ("ball", "polydisc", "box", "sublevel")


def real_vector(v, n):
    """Convert a point given as n complex numbers or 2n reals to a 2n float array."""
    if v is None:
        return np.zeros(2 * n)
    if np.isscalar(v):
        v = [v]
    arr = np.asarray(v)
    if np.iscomplexobj(arr):
        arr = arr.ravel()
        if arr.size != n:
            raise DomainError(f"expected {n} complex coordinates, got {arr.size}")
        out = np.empty(2 * n)
        out[0::2] = arr.real
        out[1::2] = arr.imag
        return out
    arr = np.asarray(arr, dtype=float).ravel()
    if arr.size == 2 * n:
        return arr.copy()
    if arr.size == n:
        # real numbers taken as complex coordinates with zero imaginary part
        out = np.zeros(2 * n)
        out[0::2] = arr
        return out
    raise DomainError(f"expected {n} complex or {2 * n} real coordinates, got {arr.size}")


@dataclass(frozen=True)
class DomainSpec:
    """A bounded domain Omega = {rho < 0} in C^n, n in {1, 2}.

    Use the constructors :func:`ball`, :func:`polydisc`, :func:`box` and
    :func:`sublevel` rather than building instances directly.
    """

    n: int
    kind: str
    center: tuple = ()
    radii: tuple = ()
    lo: tuple = ()
    hi: tuple = ()
    expression: str = ""
    shift: tuple = ()
    offset: float = 0.0
    bounds: tuple = field(default=(), compare=True)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.n}")
        if self.kind not in KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")

    # defining function ------------------------------------------------------
    def rho(self, x):
        """Evaluate the defining function at real points of shape (N, 2n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "ball":
            c = np.asarray(self.center)
            return np.sum((x - c) ** 2, axis=1) - self.radii[0] ** 2
        if self.kind == "polydisc":
            c = np.asarray(self.center)
            d = (x - c) ** 2
            parts = [d[:, 2 * k] + d[:, 2 * k + 1] - self.radii[k] ** 2 for k in range(self.n)]
            return np.max(parts, axis=0)
        if self.kind == "box":
            lo = np.asarray(self.lo)
            hi = np.asarray(self.hi)
            return np.max(np.maximum(lo - x, x - hi), axis=1)
        xs = x - np.asarray(self.shift) if self.shift else x
        return Expression(self.expression).evaluate(xs) + self.offset

    def bounding_box(self):
        """Real axis-aligned box (lo, hi) containing the closure of the domain."""
        if self.kind == "ball":
            c = np.asarray(self.center)
            r = self.radii[0]
            return c - r, c + r
        if self.kind == "polydisc":
            c = np.asarray(self.center)
            r = np.repeat(np.asarray(self.radii), 2)
            return c - r, c + r
        if self.kind == "box":
            return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
        if self.shift:
            lo = lo + np.asarray(self.shift)
            hi = hi + np.asarray(self.shift)
        return lo, hi

    def to_dict(self):
        d = {"n": self.n, "kind": self.kind}
        if self.kind in ("ball", "polydisc"):
            d["center"] = [float(c) for c in self.center]
            d["radius" if self.kind == "ball" else "radii"] = (
                float(self.radii[0]) if self.kind == "ball" else [float(r) for r in self.radii]
            )
        elif self.kind == "box":
            d["lo"] = [float(c) for c in self.lo]
            d["hi"] = [float(c) for c in self.hi]
        else:
            d["rho"] = self.expression
            d["bounds"] = [[float(c) for c in self.bounds[0]], [float(c) for c in self.bounds[1]]]
            if self.shift:
                d["shift"] = [float(c) for c in self.shift]
            if self.offset:
                d["offset"] = float(self.offset)
        return d

    def check_sampled(self, samples_per_axis=None):
        """Verify by sampling that the domain is nonempty and inside its box."""
        lo, hi = self.bounding_box()
        if samples_per_axis is None:
            samples_per_axis = 65 if self.n == 1 else 17
        axes = [np.linspace(a, b, samples_per_axis) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * self.n)
        r = self.rho(mesh)
        if not np.any(r < 0):
            raise EmptyInterior(f"sampled domain {self.kind} is empty")
        on_face = np.zeros(len(mesh), dtype=bool)
        for k in range(2 * self.n):
            on_face |= np.isclose(mesh[:, k], lo[k]) | np.isclose(mesh[:, k], hi[k])
        if np.any(r[on_face] < 0):
            raise UnboundedDomain("defining function is negative on the bounding box faces")
        return self


def ball(center=None, radius=1.0, n=1):
    if radius <= 0:
        raise EmptyInterior(f"ball radius must be positive, got {radius}")
    c = real_vector(center, n)
    return DomainSpec(n=n, kind="ball", center=tuple(c), radii=(float(radius),))


def polydisc(center=None, radii=(1.0,), n=None):
    radii = tuple(float(r) for r in np.atleast_1d(radii))
    n = len(radii) if n is None else n
    if len(radii) == 1 and n > 1:
        radii = radii * n
    if len(radii) != n:
        raise DomainError("polydisc needs one radius per complex coordinate")
    if min(radii) <= 0:
        raise EmptyInterior("polydisc radii must be positive")
    c = real_vector(center, n)
    return DomainSpec(n=n, kind="polydisc", center=tuple(c), radii=radii)


def box(lo, hi):
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape or lo.size not in (2, 4):
        raise DomainError("box corners must be real vectors of length 2 or 4")
    if np.any(hi <= lo):
        raise EmptyInterior("box has empty interior")
    return DomainSpec(n=lo.size // 2, kind="box", lo=tuple(lo), hi=tuple(hi))


def sublevel(rho, bounds, n=1):
    """Domain ``{rho < 0}`` for a closed-form expression, inside ``bounds = (lo, hi)``."""
    expr = Expression(rho)
    lo = real_vector(bounds[0], n) if np.ndim(bounds[0]) else np.full(2 * n, float(bounds[0]))
    hi = real_vector(bounds[1], n) if np.ndim(bounds[1]) else np.full(2 * n, float(bounds[1]))
    spec = DomainSpec(n=n, kind="sublevel", expression=expr.text, bounds=(tuple(lo), tuple(hi)))
    return spec.check_sampled()


def _gradient_bound(spec, delta):
    """Largest sampled |grad rho| on a neighbourhood of the closed domain."""
    lo, hi = spec.bounding_box()
    m = 129 if spec.n == 1 else 21
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    steps = np.array([ax[1] - ax[0] for ax in axes])
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, 2 * spec.n)
    r = spec.rho(pts).reshape(grids[0].shape)
    grads = np.gradient(r, *steps)
    gnorm = np.sqrt(sum(g ** 2 for g in grads))
    gmax = float(gnorm.max())
    near = r < delta * gmax
    if not np.any(near):
        raise EmptyInterior("domain has no sampled points")
    return float(gnorm[near].max())


def shrink_domain(spec, delta):
    """Inner domain ``{z : dist(z, boundary) > delta}``.

    Exact for balls, polydiscs and boxes.  For sublevel domains the result is
    the conservative inner approximation ``{rho < -delta * M}`` with ``M`` the
    largest sampled gradient norm of rho near the domain; the achieved inset
    is recorded in the returned spec's ``offset``.
    """
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta}")
    if spec.kind == "ball":
        r = spec.radii[0] - delta
        if r <= 0:
            raise EmptyInterior(f"shrinking radius {spec.radii[0]} by {delta} leaves nothing")
        return replace(spec, radii=(r,))
    if spec.kind == "polydisc":
        radii = tuple(r - delta for r in spec.radii)
        if min(radii) <= 0:
            raise EmptyInterior("shrunk polydisc is empty")
        return replace(spec, radii=radii)
    if spec.kind == "box":
        lo = np.asarray(spec.lo) + delta
        hi = np.asarray(spec.hi) - delta
        if np.any(hi <= lo):
            raise EmptyInterior("shrunk box is empty")
        return replace(spec, lo=tuple(lo), hi=tuple(hi))
    gbound = _gradient_bound(spec, delta)
    out = replace(spec, offset=spec.offset + delta * gbound)
    return out.check_sampled()


def translate_spec(spec, a):
    """Domain translated by the vector ``a`` (n complex or 2n real coordinates)."""
    av = real_vector(a, spec.n)
    if spec.kind in ("ball", "polydisc"):
        return replace(spec, center=tuple(np.asarray(spec.center) + av))
    if spec.kind == "box":
        return replace(spec, lo=tuple(np.asarray(spec.lo) + av), hi=tuple(np.asarray(spec.hi) + av))
    shift = np.asarray(spec.shift) + av if spec.shift else av
    return replace(spec, shift=tuple(shift))


def from_dict(d):
    """Build a spec from its config mapping (inverse of :meth:`DomainSpec.to_dict`)."""
    d = dict(d)
    n = int(d.pop("n", 1))
    kind = d.pop("kind")
    if kind == "ball":
        spec = ball(d.pop("center", None), float(d.pop("radius", 1.0)), n=n)
    elif kind == "polydisc":
        spec = polydisc(d.pop("center", None), d.pop("radii"), n=n)
    elif kind == "box":
        spec = box(d.pop("lo"), d.pop("hi"))
        if spec.n != n:
            raise DomainError("box corner length does not match n")
    elif kind == "sublevel":
        bounds = d.pop("bounds")
        spec = sublevel(d.pop("rho"), bounds, n=n)
        if "shift" in d:
            spec = replace(spec, shift=tuple(float(s) for s in d.pop("shift")))
        if "offset" in d:
            spec = replace(spec, offset=float(d.pop("offset")))
    else:
        raise DomainError(f"unknown domain kind {kind!r}")
    if d:
        raise DomainError(f"unexpected domain keys {sorted(d)}")
    return spec

