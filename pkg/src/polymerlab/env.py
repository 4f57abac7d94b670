"""Lattice geometry and reproducible i.i.d. random fields.

Sites live on Z^2, admissible steps are e1 = (1, 0) and e2 = (0, 1), and the
level of a site is u + v (its anti-diagonal index).  Per-site randomness is
produced by a keyed counter-based hash of (seed, u, v), so the value at a site
is a pure function of (seed, site, distribution) and does not depend on which
window the field was materialized over.  Overlapping windows therefore agree
site by site, and shifted views are exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import ParameterError, WindowError

__all__ = [
    "E1",
    "E2",
    "EHAT",
    "Site",
    "Window",
    "WeightSpec",
    "WeightField",
    "generate_field",
    "shift_view",
]


@dataclass(frozen=True)
class Site:
    """Lattice point of Z^2. Comparison operators implement the coordinatewise
    partial order (x <= y iff both coordinates are <=), not a total order."""

    u: int
    v: int

    def level(self) -> int:
        return self.u + self.v

    def __add__(self, other: "Site") -> "Site":
        return Site(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "Site") -> "Site":
        return Site(self.u - other.u, self.v - other.v)

    def __neg__(self) -> "Site":
        return Site(-self.u, -self.v)

    def __le__(self, other: "Site") -> bool:
        return self.u <= other.u and self.v <= other.v

    def __ge__(self, other: "Site") -> bool:
        return self.u >= other.u and self.v >= other.v

    def __lt__(self, other: "Site") -> bool:
        return self <= other and self != other

    def __gt__(self, other: "Site") -> bool:
        return self >= other and self != other


E1 = Site(1, 0)
E2 = Site(0, 1)
EHAT = Site(1, 1)


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle of sites: origin + [0, width) x [0, height)."""

    origin: Site
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError("window dimensions must be >= 1")

    @property
    def corner(self) -> Site:
        """Inclusive upper-right corner."""
        return Site(self.origin.u + self.width - 1, self.origin.v + self.height - 1)

    def contains(self, site: Site) -> bool:
        du = site.u - self.origin.u
        dv = site.v - self.origin.v
        return 0 <= du < self.width and 0 <= dv < self.height

    def contains_window(self, other: "Window") -> bool:
        return self.contains(other.origin) and self.contains(other.corner)

    def index(self, site: Site) -> tuple[int, int]:
        """Array index (du, dv) of a site; raises if outside the window."""
        if not self.contains(site):
            raise WindowError(f"site ({site.u},{site.v}) outside window {self}")
        return site.u - self.origin.u, site.v - self.origin.v

    def shifted(self, z: Site) -> "Window":
        return Window(self.origin + z, self.width, self.height)

    def coord_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute (u, v) coordinate arrays of shape (width, height)."""
        uu = self.origin.u + np.arange(self.width, dtype=np.int64)[:, None]
        vv = self.origin.v + np.arange(self.height, dtype=np.int64)[None, :]
        return np.broadcast_to(uu, (self.width, self.height)), np.broadcast_to(
            vv, (self.width, self.height)
        )


_DISTRIBUTIONS = ("gaussian", "inverse_log_gamma", "uniform", "constant")


@dataclass(frozen=True)
class WeightSpec:
    """Marginal distribution of a single weight.

    Supported: gaussian(mean, sd), inverse_log_gamma(shape) with
    omega = -log(Gamma(shape) variate), uniform(a, b), constant(c).
    """

    distribution: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.distribution not in _DISTRIBUTIONS:
            raise ParameterError(f"unknown distribution {self.distribution!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.distribution == "gaussian":
            if len(p) != 2 or p[1] <= 0:
                raise ParameterError("gaussian requires (mean, sd) with sd > 0")
        elif self.distribution == "inverse_log_gamma":
            if len(p) != 1 or p[0] <= 0:
                raise ParameterError("inverse_log_gamma requires shape > 0")
        elif self.distribution == "uniform":
            if len(p) != 2 or p[0] >= p[1]:
                raise ParameterError("uniform requires (a, b) with a < b")
        elif self.distribution == "constant":
            if len(p) != 1:
                raise ParameterError("constant requires a single value")

    @staticmethod
    def gaussian(mean: float, sd: float) -> "WeightSpec":
        return WeightSpec("gaussian", (mean, sd))

    @staticmethod
    def inverse_log_gamma(shape: float) -> "WeightSpec":
        return WeightSpec("inverse_log_gamma", (shape,))

    @staticmethod
    def uniform(a: float, b: float) -> "WeightSpec":
        return WeightSpec("uniform", (a, b))

    @staticmethod
    def constant(c: float) -> "WeightSpec":
        return WeightSpec("constant", (c,))

    def mean(self) -> float:
        if self.distribution == "gaussian":
            return self.params[0]
        if self.distribution == "inverse_log_gamma":
            return -float(_sp.digamma(self.params[0]))
        if self.distribution == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        return self.params[0]

    def variance(self) -> float:
        if self.distribution == "gaussian":
            return self.params[1] ** 2
        if self.distribution == "inverse_log_gamma":
            return float(_sp.polygamma(1, self.params[0]))
        if self.distribution == "uniform":
            return (self.params[1] - self.params[0]) ** 2 / 12.0
        return 0.0

    def quantile(self, q: np.ndarray) -> np.ndarray:
        """Inverse CDF, vectorized; maps per-site uniforms to weights."""
        if self.distribution == "gaussian":
            mean, sd = self.params
            return mean + sd * _sp.ndtri(q)
        if self.distribution == "inverse_log_gamma":
            (shape,) = self.params
            # -log X is decreasing in X, so feed the uniform straight in:
            # the result is still uniform-distribution-correct by symmetry.
            return -np.log(_sp.gammaincinv(shape, q))
        if self.distribution == "uniform":
            a, b = self.params
            return a + (b - a) * q
        return np.full_like(q, self.params[0], dtype=np.float64)


# Counter-based per-site hashing. Chained murmur3 finalizers keyed by
# (stream, seed, u, v); each link is a bijection of uint64, so distinct
# inputs cannot collapse structurally.

_MIX1 = np.uint64(0xFF51AFD7ED558CCD)
_MIX2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

WEIGHT_STREAM = 0x57454947  # namespace tag for weight fields
COUPLING_STREAM = 0x434F5550  # namespace tag for coupling (uniform) fields


def _fmix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _S33)
    z = z * _MIX1
    z = z ^ (z >> _S33)
    z = z * _MIX2
    return z ^ (z >> _S33)


def _absorb(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _fmix64((h ^ x) + _GOLDEN)


def _as_u64(x) -> np.ndarray | np.uint64:
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)
    return np.asarray(x).astype(np.uint64)


def site_uniforms(seed, stream: int, uu, vv) -> np.ndarray:
    """Uniform(0,1) variates attached to sites, as a pure function of
    (seed, stream, u, v). Output is strictly inside (0, 1).  `seed` may be a
    scalar or an array broadcast against the coordinates."""
    u64 = np.asarray(uu, dtype=np.int64).astype(np.uint64)
    v64 = np.asarray(vv, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):  # modular uint64 wrap is intended
        h = _fmix64(_as_u64(seed) ^ _GOLDEN)
        h = _absorb(h, np.uint64(stream & 0xFFFFFFFFFFFFFFFF))
        h = _absorb(h, u64)
        h = _absorb(h, v64)
        h = _fmix64(h)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class WeightField:
    """The i.i.d. environment restricted to a window.

    `shift` implements translated views: value(y) = draw(seed, y + shift).
    Instances are immutable and safe to share across workers.
    """

    window: Window
    spec: WeightSpec
    seed: int
    values: np.ndarray = dataclasses.field(repr=False)
    shift: Site = Site(0, 0)

    def value(self, site: Site) -> float:
        du, dv = self.window.index(site)
        return float(self.values[du, dv])

    def values_at(self, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
        """Weights at arbitrary sites, regenerated from the hash (no window
        restriction); agrees exactly with `values` on the window."""
        q = site_uniforms(
            self.seed, WEIGHT_STREAM, np.asarray(uu) + self.shift.u, np.asarray(vv) + self.shift.v
        )
        return self.spec.quantile(q)

    def subfield(self, window: Window) -> "WeightField":
        """The same environment materialized over another window."""
        uu, vv = window.coord_grids()
        return WeightField(window, self.spec, self.seed, self.spec.quantile(
            site_uniforms(self.seed, WEIGHT_STREAM, uu + self.shift.u, vv + self.shift.v)
        ), self.shift)

    def to_csv(self, path) -> None:
        from .csvio import write_csv

        uu, vv = self.window.coord_grids()
        write_csv(
            path,
            ("u", "v", "omega"),
            zip(uu.ravel().tolist(), vv.ravel().tolist(), self.values.ravel().tolist()),
        )


def generate_field(spec: WeightSpec, seed: int, window: Window) -> WeightField:
    """Materialize the environment over a window.

    Regeneration with the same (seed, spec) over any window reproduces
    identical per-site values; overlapping windows agree on the overlap.
    """
    uu, vv = window.coord_grids()
    values = spec.quantile(site_uniforms(seed, WEIGHT_STREAM, uu, vv))
    return WeightField(window, spec, seed, values)


def shift_view(field: WeightField, z: Site) -> WeightField:
    """Translated view: (shift_view(f, z)).value(y) == f.value(y + z).

    Composes as a group action; shifting by z then -z restores the original.
    """
    window = field.window.shifted(-z)
    shift = field.shift + z
    uu, vv = window.coord_grids()
    values = field.spec.quantile(
        site_uniforms(field.seed, WEIGHT_STREAM, uu + shift.u, vv + shift.v)
    )
    return WeightField(window, field.spec, field.seed, values, shift)


def field_from_values(values: np.ndarray, window: Window, label: str = "explicit") -> WeightField:
    """Wrap an explicit weight grid (hand examples, fixtures) as a field.

    Such fields do not support regeneration outside their window; `values_at`
    falls back to the stored array.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (window.width, window.height):
        raise ParameterError(
            f"values shape {arr.shape} does not match window {window.width}x{window.height}"
        )

    class _ExplicitField(WeightField):
        def values_at(self, uu, vv):  # type: ignore[override]
            uu = np.asarray(uu, dtype=np.int64)
            vv = np.asarray(vv, dtype=np.int64)
            du = uu - self.window.origin.u
            dv = vv - self.window.origin.v
            if np.any((du < 0) | (du >= self.window.width) | (dv < 0) | (dv >= self.window.height)):
                raise WindowError("explicit field queried outside its window")
            return self.values[du, dv]

        def subfield(self, window):  # type: ignore[override]
            if not self.window.contains_window(window):
                raise WindowError("explicit field cannot extend beyond its window")
            du0 = window.origin.u - self.window.origin.u
            dv0 = window.origin.v - self.window.origin.v
            return field_from_values(
                self.values[du0 : du0 + window.width, dv0 : dv0 + window.height], window
            )

    # constant(0) spec is a placeholder carrying no distribution semantics
    return _ExplicitField(window, WeightSpec.constant(0.0), -1, arr)
