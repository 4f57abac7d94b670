"""Finite-horizon Busemann cocycle fields and shape-function estimation.

A Busemann field stores the nearest-neighbor increments b1(y) ~ B(y, y+e1)
and b2(y) ~ B(y, y+e2) over a window.  Fields built from point-to-line or
point-to-point tables satisfy two exact identities inherited from the DP
recursion:

  recovery:   exp(-beta*(b1-omega)) + exp(-beta*(b2-omega)) = 1
              (min(b1, b2) = omega at beta = inf),
  closure:    b1(y) + b2(y+e1) = b2(y) + b1(y+e2),

so B(x, y) summed along any staircase is path-independent.  Cesaro-averaged
fields are empirical means and satisfy neither identity pointwise; they carry
their construction metadata instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .env import E1, E2, Site, WeightField, WeightSpec, Window, generate_field
from .errors import (
    HorizonError,
    ParameterError,
    ProvenanceError,
    WindowError,
)
from .partition import p2l_table, p2p_table

__all__ = [
    "Provenance",
    "BusemannField",
    "ShapeEstimate",
    "busemann_from_p2l",
    "busemann_from_p2p",
    "check_monotonicity",
    "cesaro_busemann",
    "estimate_shape",
    "point_to_line_value",
    "boundary_profile",
    "dual_tilt",
    "cocycle_shape_check",
    "direction_scan",
]


@dataclass(frozen=True)
class Provenance:
    kind: str  # "p2l" | "p2p" | "cesaro"
    h: tuple[float, float] | None = None
    horizon: int | None = None
    target: Site | None = None
    samples: int | None = None
    fpl_residual: float | None = None


@dataclass(frozen=True, eq=False)
class BusemannField:
    window: Window
    beta: float
    b1: np.ndarray
    b2: np.ndarray
    provenance: Provenance
    field: WeightField | None = dc_field(default=None, repr=False)

    @property
    def zero_temp(self) -> bool:
        return math.isinf(self.beta)

    def b_at(self, site: Site, direction: int) -> float:
        du, dv = self.window.index(site)
        return float((self.b1 if direction == 1 else self.b2)[du, dv])

    def recovery_residual(self) -> float:
        """Max recovery defect over the window, measured in units of
        exp(-beta*omega) (equivalently: defect of the transition-probability
        normalization).  At beta = inf: max |min(b1,b2) - omega|."""
        if self.field is None:
            raise ProvenanceError("no environment attached (cesaro field?)")
        w = self.field.subfield(self.window).values
        if self.zero_temp:
            return float(np.max(np.abs(np.minimum(self.b1, self.b2) - w)))
        s = np.exp(-self.beta * (self.b1 - w)) + np.exp(-self.beta * (self.b2 - w))
        return float(np.max(np.abs(s - 1.0)))

    def closure_residual(self) -> float:
        """Max plaquette defect |b1(y) + b2(y+e1) - b2(y) - b1(y+e2)|."""
        d = (
            self.b1[:-1, :-1]
            + self.b2[1:, :-1]
            - self.b2[:-1, :-1]
            - self.b1[:-1, 1:]
        )
        return float(np.max(np.abs(d))) if d.size else 0.0

    def integrated(self) -> np.ndarray:
        """B(origin, x) for every window site x, summed along the staircase
        that first travels in e1 at the bottom edge (closure makes any other
        staircase agree)."""
        W, H = self.b1.shape
        col0 = np.zeros(W)
        col0[1:] = np.cumsum(self.b1[:-1, 0])
        body = np.zeros((W, H))
        body[:, 1:] = np.cumsum(self.b2[:, :-1], axis=1)
        return col0[:, None] + body

    def staircase_sum(self, sites: list[Site]) -> float:
        """Sum of increments along an explicit up-right staircase."""
        total = 0.0
        for a, b in zip(sites[:-1], sites[1:]):
            step = b - a
            if step == E1:
                total += self.b_at(a, 1)
            elif step == E2:
                total += self.b_at(a, 2)
            else:
                raise ParameterError("staircase steps must be e1 or e2")
        return total

    def to_csv(self, path) -> str:
        from .csvio import write_csv

        uu, vv = self.window.coord_grids()
        return write_csv(
            path,
            ("u", "v", "b1", "b2"),
            zip(
                uu.ravel().tolist(),
                vv.ravel().tolist(),
                self.b1.ravel().tolist(),
                self.b2.ravel().tolist(),
            ),
        )


def _b_from_p2l_values(table, window: Window, clamp: bool) -> tuple[np.ndarray, np.ndarray]:
    """Increment arrays from a tilted point-to-line table; sites at or above
    the horizon level get 0 when clamp is set (pre-limit convention)."""
    beta = table.beta
    n = table.n
    base = table.base
    K = table.depth
    L = table.logz
    u0 = window.origin.u - base.u
    v0 = window.origin.v - base.v
    W, H = window.width, window.height
    if u0 < 0 or v0 < 0 or u0 + W > K or v0 + H > K:
        raise WindowError("window plus its e1/e2 shifts exceeds the horizon triangle")
    cur = L[u0 : u0 + W, v0 : v0 + H]
    up1 = L[u0 + 1 : u0 + W + 1, v0 : v0 + H]
    up2 = L[u0 : u0 + W, v0 + 1 : v0 + H + 1]
    scale = 1.0 if table.zero_temp else 1.0 / beta
    with np.errstate(invalid="ignore"):  # -inf minus -inf above the horizon
        b1 = (cur - up1) * scale - table.h[0]
        b2 = (cur - up2) * scale - table.h[1]
    if clamp:
        uu, vv = window.coord_grids()
        beyond = (uu + vv) >= n
        b1 = np.where(beyond, 0.0, b1)
        b2 = np.where(beyond, 0.0, b2)
    return b1, b2


def busemann_from_p2l(
    field: WeightField,
    beta: float,
    h: tuple[float, float],
    n: int,
    window: Window | None = None,
) -> BusemannField:
    """Pre-limit Busemann increments from the tilted point-to-line table:
    b_i(x) = F_{x,(n)} - F_{x+e_i,(n)} - h.e_i.  All window sites must be
    strictly below level n."""
    if window is None:
        window = field.window
    if window.corner.level() >= n:
        raise HorizonError(
            f"window reaches level {window.corner.level()} >= horizon {n}"
        )
    from .partition import p2l_rows

    rows = p2l_rows(field, beta, h, n, window.origin, keep_rows=window.width + 1)
    W, H = window.width, window.height
    scale = 1.0 if math.isinf(beta) else 1.0 / float(beta)
    b1 = (rows[:W, :H] - rows[1 : W + 1, :H]) * scale - h[0]
    b2 = (rows[:W, :H] - rows[:W, 1 : H + 1]) * scale - h[1]
    prov = Provenance(kind="p2l", h=(float(h[0]), float(h[1])), horizon=n)
    return BusemannField(window, float(beta), b1, b2, prov, field)


def busemann_from_p2p(
    field: WeightField, beta: float, target: Site, window: Window
) -> BusemannField:
    """Busemann increments estimated from a point-to-point table:
    b_i(y) = F_{y,target} - F_{y+e_i,target}."""
    if not target >= window.corner + Site(1, 1):
        raise WindowError("target must dominate every window site + (1,1)")
    rect = Window(
        window.origin,
        target.u - window.origin.u + 1,
        target.v - window.origin.v + 1,
    )
    table = p2p_table(field, target, rect, beta, "to_anchor")
    L = table.logz
    W, H = window.width, window.height
    scale = 1.0 if table.zero_temp else 1.0 / float(beta)
    b1 = (L[:W, :H] - L[1 : W + 1, :H]) * scale
    b2 = (L[:W, :H] - L[:W, 1 : H + 1]) * scale
    prov = Provenance(kind="p2p", target=target, horizon=target.level())
    return BusemannField(window, float(beta), b1, b2, prov, field)


@dataclass(frozen=True)
class MonotonicityReport:
    sites: int
    violations_e1: int
    violations_e2: int
    worst_margin: float  # most negative slack observed (0 if none)

    @property
    def violations(self) -> int:
        return self.violations_e1 + self.violations_e2


def check_monotonicity(
    field_a: BusemannField, field_b: BusemannField, tol: float = 1e-12
) -> MonotonicityReport:
    """Tilt monotonicity: with h.e1 <= h'.e1 and h.e2 >= h'.e2 the h-field
    must dominate in e1 increments and be dominated in e2 increments.
    Fields are reordered internally so `a` carries the smaller e1-tilt."""
    if field_a.window != field_b.window or field_a.beta != field_b.beta:
        raise ProvenanceError("fields must share window and beta")
    ha, hb = field_a.provenance.h, field_b.provenance.h
    if ha is None or hb is None:
        raise ParameterError("monotonicity check requires tilted (p2l) fields")
    if field_a.provenance.horizon != field_b.provenance.horizon:
        raise ProvenanceError("fields must share the horizon")
    if ha[0] > hb[0]:
        field_a, field_b = field_b, field_a
        ha, hb = hb, ha
    if not (ha[0] <= hb[0] and ha[1] >= hb[1]):
        raise ParameterError(f"incomparable tilts {ha} vs {hb}")
    d1 = field_a.b1 - field_b.b1  # must be >= 0
    d2 = field_b.b2 - field_a.b2  # must be >= 0
    v1 = int(np.sum(d1 < -tol))
    v2 = int(np.sum(d2 < -tol))
    worst = float(min(d1.min(), d2.min(), 0.0)) if d1.size else 0.0
    return MonotonicityReport(int(d1.size), v1, v2, worst)


@dataclass(frozen=True)
class CesaroReport:
    target: tuple[float, float]  # -h
    mean_b1: float
    mean_b2: float
    se_b1: float
    se_b2: float
    fpl_mean: float
    fpl_se: float
    samples: int


def cesaro_busemann(
    field: WeightField,
    beta: float,
    h: tuple[float, float],
    n: int,
    sample_count: int,
    seed: int,
    window: Window | None = None,
) -> tuple[BusemannField, CesaroReport]:
    """Empirical Cesaro-averaged Busemann field: average of pre-limit fields
    at independent environments and uniform horizons N ~ U{1..n}.

    The mean report compares the origin-site grand means against -h.e_i; it
    is sharp only when h is (close to) a zero of the point-to-line free
    energy, which is what `dual_tilt` supplies.
    """
    if sample_count < 1:
        raise ParameterError("sample_count must be >= 1")
    if window is None:
        window = field.window
    base = window.origin
    if window.corner.level() >= n:
        raise HorizonError("window levels must stay below n")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x4E5)))
    horizons = rng.integers(1, n + 1, size=sample_count)
    env_seeds = _replica_seeds(seed, sample_count, 0xE17)
    b1_acc = np.zeros((window.width, window.height))
    b2_acc = np.zeros_like(b1_acc)
    o_b1 = np.empty(sample_count)
    o_b2 = np.empty(sample_count)
    fpl = np.empty(sample_count)
    for k in range(sample_count):
        env = generate_field(field.spec, env_seeds[k], Window(base, 1, 1))
        N = int(horizons[k])
        b1 = np.zeros((window.width, window.height))
        b2 = np.zeros_like(b1)
        Kn = N - base.level()
        if Kn >= 1:
            # increments are genuine below level N and 0 at or above it; the
            # clamp handles the in-rect part, the zero init the rest
            table = p2l_table(env, beta, h, N, base=base)
            sub = Window(base, min(window.width, Kn), min(window.height, Kn))
            bb1, bb2 = _b_from_p2l_values(table, sub, clamp=True)
            b1[: sub.width, : sub.height] = bb1
            b2[: sub.width, : sub.height] = bb2
        b1_acc += b1
        b2_acc += b2
        o_b1[k] = b1[0, 0]
        o_b2[k] = b2[0, 0]
        full = p2l_table(env, beta, h, n, base=base)
        fpl[k] = full.free_energy_at(base) / (n - base.level())
    b1_mean = b1_acc / sample_count
    b2_mean = b2_acc / sample_count
    se = lambda a: float(np.std(a, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")
    report = CesaroReport(
        target=(-float(h[0]), -float(h[1])),
        mean_b1=float(np.mean(o_b1)),
        mean_b2=float(np.mean(o_b2)),
        se_b1=se(o_b1),
        se_b2=se(o_b2),
        fpl_mean=float(np.mean(fpl)),
        fpl_se=se(fpl),
        samples=sample_count,
    )
    prov = Provenance(
        kind="cesaro",
        h=(float(h[0]), float(h[1])),
        horizon=n,
        samples=sample_count,
        fpl_residual=abs(report.fpl_mean),
    )
    return BusemannField(window, float(beta), b1_mean, b2_mean, prov, None), report


# ---------------------------------------------------------------------------
# Shape function estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShapeEstimate:
    spec: WeightSpec
    beta: float
    seed: int
    t_grid: tuple[float, ...]
    n_list: tuple[int, ...]
    samples: np.ndarray  # (replicas, len(t_grid), len(n_list)) per-replica values
    lambda_hat: np.ndarray  # (len(t_grid), len(n_list))
    se: np.ndarray

    @property
    def replicas(self) -> int:
        return self.samples.shape[0]

    def at(self, t: float, n: int | None = None) -> tuple[float, float]:
        """(estimate, standard error) at direction t and size n (largest by
        default)."""
        ti = self._t_index(t)
        ni = self.n_list.index(n) if n is not None else len(self.n_list) - 1
        return float(self.lambda_hat[ti, ni]), float(self.se[ti, ni])

    def _t_index(self, t: float) -> int:
        for i, tv in enumerate(self.t_grid):
            if abs(tv - t) < 1e-12:
                return i
        raise ParameterError(f"direction {t} not on the estimated grid")

    def paired_difference(self, t1: float, t2: float) -> tuple[float, float]:
        """Mean and SE of lambda(t1) - lambda(t2) using per-replica pairing
        (the replicas share environments across directions)."""
        i, j = self._t_index(t1), self._t_index(t2)
        d = self.samples[:, i, -1] - self.samples[:, j, -1]
        return float(np.mean(d)), float(np.std(d, ddof=1) / math.sqrt(len(d)))

    def trend(self, t: float) -> list[tuple[int, float, float]]:
        """Convergence trend of the estimate at direction t across the size
        ladder: (n, estimate, se) per n."""
        ti = self._t_index(t)
        return [
            (n, float(self.lambda_hat[ti, j]), float(self.se[ti, j]))
            for j, n in enumerate(self.n_list)
        ]

    def to_csv(self, path) -> str:
        from .csvio import write_csv

        rows = []
        for i, t in enumerate(self.t_grid):
            for j, n in enumerate(self.n_list):
                rows.append((t, n, float(self.lambda_hat[i, j]), float(self.se[i, j])))
        return write_csv(path, ("t", "n", "lambda_hat", "se"), rows)


def _replica_seeds(seed: int, count: int, salt: int) -> list[int]:
    return [
        int(s.generate_state(1, np.uint64)[0])
        for s in np.random.SeedSequence((seed, salt)).spawn(count)
    ]


def _shape_replica(args) -> np.ndarray:
    spec, beta, env_seed, t_grid, n_list = args
    n_max = max(n_list)
    fld = generate_field(spec, env_seed, Window(Site(0, 0), 1, 1))
    table = p2p_table(
        fld, Site(0, 0), Window(Site(0, 0), n_max + 1, n_max + 1), beta, "from_anchor"
    )
    zero_temp = math.isinf(beta)
    out = np.empty((len(t_grid), len(n_list)))
    for i, t in enumerate(t_grid):
        for j, n in enumerate(n_list):
            a = int(round(n * t))
            a = min(max(a, 0), n)
            val = table.logz[a, n - a]
            out[i, j] = (val if zero_temp else val / beta) / n
    return out


def estimate_shape(
    spec: WeightSpec,
    beta: float,
    t_grid,
    n_list,
    replicas: int,
    seed: int,
    workers: int = 1,
) -> ShapeEstimate:
    """Monte Carlo estimate of the limiting point-to-point free energy
    Lambda(t, 1-t) = lim n^-1 F_{0, n(t,1-t)} on a direction grid, with the
    same environments reused across directions and sizes (paired design)."""
    t_grid = tuple(float(t) for t in t_grid)
    n_list = tuple(sorted(int(n) for n in n_list))
    if any(not (0.0 < t < 1.0) for t in t_grid):
        raise ParameterError("directions must be interior: t in (0,1)")
    env_seeds = _replica_seeds(seed, replicas, 0x5A7E)
    tasks = [(spec, beta, s, t_grid, n_list) for s in env_seeds]
    if workers > 1:
        from .parallel import map_ordered

        results = map_ordered(_shape_replica, tasks, workers)
    else:
        results = [_shape_replica(t) for t in tasks]
    samples = np.stack(results)
    lam = samples.mean(axis=0)
    if replicas > 1:
        se = samples.std(axis=0, ddof=1) / math.sqrt(replicas)
    else:
        se = np.zeros_like(lam)
    return ShapeEstimate(spec, float(beta), seed, t_grid, n_list, samples, lam, se)


def point_to_line_value(
    spec: WeightSpec, beta: float, h, n: int, replicas: int, seed: int
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, se) of n^-1 F^{beta,h}_{0,(n)}."""
    vals = np.empty(replicas)
    for k, env_seed in enumerate(_replica_seeds(seed, replicas, 0xF91)):
        fld = generate_field(spec, env_seed, Window(Site(0, 0), 1, 1))
        vals[k] = p2l_table(fld, beta, h, n).free_energy_at(Site(0, 0)) / n
    se = float(np.std(vals, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return float(np.mean(vals)), se


def boundary_profile(
    spec: WeightSpec, beta: float, s_list, n_list, replicas: int, seed: int
) -> list[tuple[float, float, float]]:
    """Near-axis shape values: for each (s, n) returns
    (s, ratio, se_ratio) with ratio = (Lambda_hat(s) - E[omega]) / (2 sqrt(s Var)),
    estimated at target (round(n s), n - round(n s))."""
    mean = spec.mean()
    sd = math.sqrt(spec.variance())
    if sd == 0:
        raise ParameterError("boundary profile needs nondegenerate weights")
    out = []
    for s, n in zip(s_list, n_list):
        a = int(round(n * s))
        if a < 1:
            raise ParameterError(f"n={n} too small for s={s}")
        vals = np.empty(replicas)
        for k, env_seed in enumerate(_replica_seeds(seed, replicas, 0xB0D)):
            fld = generate_field(spec, env_seed, Window(Site(0, 0), 1, 1))
            t = p2p_table(
                fld, Site(0, 0), Window(Site(0, 0), a + 1, n - a + 1), beta, "from_anchor"
            )
            F = t.logz[a, n - a] if math.isinf(beta) else t.logz[a, n - a] / beta
            vals[k] = F / n
        denom = 2.0 * math.sqrt(s * spec.variance())
        ratios = (vals - mean) / denom
        se = float(np.std(ratios, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
        out.append((float(s), float(np.mean(ratios)), se))
    return out


@dataclass(frozen=True)
class DualTiltResult:
    t: float
    h: tuple[float, float]
    h_se: tuple[float, float]
    euler_residual: float
    fpl_residual: float | None
    fpl_se: float | None


def dual_tilt(
    shape: ShapeEstimate,
    t: float,
    fpl_replicas: int = 0,
    fpl_n: int | None = None,
) -> DualTiltResult:
    """Dual tilt h = -grad Lambda at direction (t, 1-t), from a central
    finite difference of the shape estimate lifted to a 2-vector with the
    homogeneity identity  t g1 + (1-t) g2 = Lambda.

    With fpl_replicas > 0, also estimates the point-to-line free energy at h
    (its magnitude is the duality residual; zero in the limit)."""
    ti = shape._t_index(t)
    if ti == 0 or ti == len(shape.t_grid) - 1:
        raise ParameterError("direction at the grid boundary: cannot difference")
    t_lo, t_hi = shape.t_grid[ti - 1], shape.t_grid[ti + 1]
    ni = len(shape.n_list) - 1
    lam_r = shape.samples[:, ti, ni]
    slope_r = (shape.samples[:, ti + 1, ni] - shape.samples[:, ti - 1, ni]) / (t_hi - t_lo)
    g2_r = lam_r - t * slope_r
    g1_r = slope_r + g2_r
    h1 = -float(np.mean(g1_r))
    h2 = -float(np.mean(g2_r))
    R = shape.replicas
    if R > 1:
        h1_se = float(np.std(g1_r, ddof=1) / math.sqrt(R))
        h2_se = float(np.std(g2_r, ddof=1) / math.sqrt(R))
    else:
        h1_se = h2_se = 0.0
    lam = float(np.mean(lam_r))
    euler = abs(h1 * t + h2 * (1 - t) + lam)
    fpl_mean = fpl_se = None
    if fpl_replicas > 0:
        n = fpl_n if fpl_n is not None else max(shape.n_list)
        fpl_mean, fpl_se = point_to_line_value(
            shape.spec, shape.beta, (h1, h2), n, fpl_replicas, shape.seed + 1
        )
    return DualTiltResult(
        t=float(t),
        h=(h1, h2),
        h_se=(h1_se, h2_se),
        euler_residual=euler,
        fpl_residual=None if fpl_mean is None else abs(fpl_mean),
        fpl_se=fpl_se,
    )


@dataclass(frozen=True)
class CocycleShapeProfile:
    n_list: tuple[int, ...]
    deviations: tuple[float, ...]

    @property
    def decreasing(self) -> bool:
        return all(
            self.deviations[i + 1] < self.deviations[i]
            for i in range(len(self.deviations) - 1)
        )


def cocycle_shape_check(
    busemann: BusemannField, m_hat: tuple[float, float], n_list
) -> CocycleShapeProfile:
    """Linear-growth deviation of the integrated cocycle:
    max over level-n sites x of |B(0,x) - m_hat . x| / n, per n."""
    n_list = tuple(int(n) for n in n_list)
    W, H = busemann.window.width, busemann.window.height
    for n in n_list:
        if n + 1 > W or n + 1 > H:
            raise WindowError(f"window too small for level {n}")
    B = busemann.integrated()
    devs = []
    for n in n_list:
        a = np.arange(n + 1)
        vals = B[a, n - a] - (m_hat[0] * a + m_hat[1] * (n - a))
        devs.append(float(np.max(np.abs(vals)) / n))
    return CocycleShapeProfile(n_list, tuple(devs))


@dataclass(frozen=True, eq=False)
class ScanProfile:
    t_grid: tuple[float, ...]
    b1: np.ndarray
    violations: int
    max_jump: float

    def to_csv(self, path) -> str:
        from .csvio import write_csv

        jumps = np.abs(np.diff(self.b1, prepend=self.b1[0]))
        return write_csv(
            path,
            ("t", "b1", "jump"),
            zip(self.t_grid, self.b1.tolist(), jumps.tolist()),
        )


def direction_scan(
    field: WeightField, beta: float, t_grid, target_radius: int, x: Site = Site(0, 0)
) -> ScanProfile:
    """b1(x) as a function of the target direction at fixed horizon:
    b1(x; t) = F_{x, target(t)} - F_{x+e1, target(t)} with
    target(t) = x + (round(N t), N - round(N t)).

    The comparison inequality forces the profile to be nonincreasing in t;
    violations beyond 1e-12 are counted (expected zero).  The largest jump
    between adjacent grid directions is descriptive output.
    """
    t_grid = tuple(float(t) for t in t_grid)
    N = int(target_radius)
    rect = Window(x, N + 1, N + 1)
    t0 = p2p_table(field, x, rect, beta, "from_anchor")
    t1 = p2p_table(field, x + E1, rect, beta, "from_anchor")
    scale = 1.0 if math.isinf(beta) else 1.0 / float(beta)
    vals = np.empty(len(t_grid))
    for i, t in enumerate(t_grid):
        a = int(round(N * t))
        a = min(max(a, 1), N - 1)
        du, dv = a, N - a
        vals[i] = (t0.logz[du, dv] - t1.logz[du, dv]) * scale
    diffs = np.diff(vals)
    violations = int(np.sum(diffs > 1e-12))
    max_jump = float(np.max(np.abs(diffs))) if diffs.size else 0.0
    return ScanProfile(t_grid, vals, violations, max_jump)
