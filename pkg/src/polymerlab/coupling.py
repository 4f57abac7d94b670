"""Uniform-variable coupling of {e1,e2}-step walks in a common environment.

A single field of i.i.d. Uniform[0,1] variables theta(x) drives every walk
simultaneously: at site x the step is e1 when theta(x) < p(x).  Walks coupled
this way merge permanently on first meeting, and pointwise-ordered step
probabilities produce pathwise-ordered walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import (
    COUPLING_STREAM,
    Site,
    WeightField,
    Window,
    site_uniforms,
)
from .errors import OrderingError, ParameterError, WindowError
from .gibbs import PolymerPath

__all__ = [
    "CouplingField",
    "CoupledStepRule",
    "constant_rule",
    "band_transition_rule",
    "coupled_walk",
    "coalescence_experiment",
    "ordering_check",
    "junction_statistics",
]


@dataclass(frozen=True)
class CouplingField:
    """Per-site Uniform[0,1] variables with the same counter-based
    determinism contract as weight fields, in an independent seed namespace.
    Values regenerate at any site; the window is only a nominal extent."""

    seed: int
    window: Window | None = None

    def theta_at(self, uu, vv) -> np.ndarray:
        return site_uniforms(self.seed, COUPLING_STREAM, uu, vv)

    def value(self, site: Site) -> float:
        return float(self.theta_at(np.asarray([site.u]), np.asarray([site.v]))[0])


@dataclass(frozen=True)
class CoupledStepRule:
    """Step law p(x) = P(step e1 at x), as a vectorized site function.

    weakly_elliptic declares that 0 < p < 1 holds on the relevant region;
    coalescence claims are downgraded to descriptive when it is unset."""

    p_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    description: str = ""
    weakly_elliptic: bool = True

    def p_at(self, uu, vv) -> np.ndarray:
        return np.asarray(
            self.p_fn(np.asarray(uu, dtype=np.int64), np.asarray(vv, dtype=np.int64))
        )


def constant_rule(p: float) -> CoupledStepRule:
    if not 0.0 <= p <= 1.0:
        raise ParameterError("p must be a probability")
    elliptic = 0.0 < p < 1.0

    def p_fn(uu, vv):
        return np.full(np.shape(uu), p)

    return CoupledStepRule(p_fn, description=f"constant p={p}", weakly_elliptic=elliptic)


def band_transition_rule(
    field: WeightField,
    beta: float,
    h: tuple[float, float],
    horizon: int,
    half_width: int,
) -> CoupledStepRule:
    """Busemann-driven step law on a diagonal band, for long-horizon walks.

    Runs the tilted point-to-line DP restricted to the band
    |u - floor(level/2)| <= half_width, 0 <= u <= level, which is the exact
    polymer recursion of the band-confined path model: transitions normalize
    exactly, walks started inside can never leave (steps that would exit get
    probability 0), and the rule is weakly elliptic in the band interior.
    """
    if math.isinf(beta):
        raise ParameterError("band rule is defined for finite beta")
    if half_width < 2:
        raise ParameterError("half_width must be at least 2")
    n = horizon + 2
    width = 2 * half_width + 1
    bh1 = beta * h[0]
    bh2 = beta * h[1]
    neg_inf = float("-inf")

    def band_lo(k: int) -> int:
        return k // 2 - half_width

    p_rows = np.empty((horizon + 1, width), dtype=np.float32)
    offs = np.arange(width, dtype=np.int64)
    F_next = np.zeros(width)  # level n boundary: F = 0 on valid sites
    uu_next = band_lo(n) + offs
    F_next[(uu_next < 0) | (uu_next > n)] = neg_inf
    for k in range(n - 1, -1, -1):
        uu = band_lo(k) + offs
        valid = (uu >= 0) & (uu <= k)
        w = field.values_at(uu, k - uu)
        # align children: child u+1 and u at level k+1, banded at band_lo(k+1)
        shift = band_lo(k + 1) - band_lo(k)  # 0 or 1
        c1 = np.full(width, neg_inf)  # F_{k+1}[u+1]
        c2 = np.full(width, neg_inf)  # F_{k+1}[u]
        src1 = offs + 1 - shift  # index of u+1 in next row
        ok1 = (src1 >= 0) & (src1 < width)
        c1[ok1] = F_next[src1[ok1]]
        src2 = offs - shift
        ok2 = (src2 >= 0) & (src2 < width)
        c2[ok2] = F_next[src2[ok2]]
        F_cur = beta * w + np.logaddexp(c1 + bh1, c2 + bh2)
        F_cur[~valid] = neg_inf
        if k <= horizon:
            with np.errstate(invalid="ignore"):
                p_rows[k] = np.exp(beta * w + bh1 + c1 - F_cur)
            p_rows[k][~valid] = np.nan
        F_next = F_cur

    def p_fn(uu, vv):
        uu = np.asarray(uu, dtype=np.int64)
        vv = np.asarray(vv, dtype=np.int64)
        kk = uu + vv
        if np.any((kk < 0) | (kk > horizon)):
            raise WindowError("walk level outside the band horizon")
        idx = uu - (kk // 2 - half_width)
        if np.any((idx < 0) | (idx >= width)):
            raise WindowError("walk left the diagonal band")
        return p_rows[kk, idx].astype(np.float64)

    return CoupledStepRule(
        p_fn,
        description=f"banded busemann h={h} horizon={horizon} hw={half_width}",
        weakly_elliptic=True,
    )


def coupled_walk(
    rule: CoupledStepRule, thetas: CouplingField, start: Site, steps: int
) -> PolymerPath:
    """Deterministic walk driven by the shared uniform field."""
    sites = np.empty((steps + 1, 2), dtype=np.int64)
    sites[0] = (start.u, start.v)
    u, v = start.u, start.v
    for k in range(steps):
        th = thetas.theta_at(np.asarray([u]), np.asarray([v]))[0]
        p = float(rule.p_at(np.asarray([u]), np.asarray([v]))[0])
        if th < p:
            u += 1
        else:
            v += 1
        sites[k + 1] = (u, v)
    return PolymerPath(sites)


@dataclass(frozen=True, eq=False)
class CoalescenceStats:
    seeds: np.ndarray
    met_level: np.ndarray  # first-meeting level per seed, -1 when censored
    post_merge_violations: int
    elliptic: bool

    @property
    def pairs(self) -> int:
        return self.met_level.size

    @property
    def coalesced(self) -> int:
        return int((self.met_level >= 0).sum())

    @property
    def censored(self) -> int:
        return self.pairs - self.coalesced

    @property
    def fraction(self) -> float:
        return self.coalesced / self.pairs if self.pairs else float("nan")

    @property
    def levels(self) -> np.ndarray:
        return self.met_level[self.met_level >= 0]

    def to_csv(self, path, pair_id: int = 0) -> str:
        from .csvio import write_csv

        rows = [
            (int(self.seeds[i]), pair_id, 1 if self.met_level[i] >= 0 else 0, int(self.met_level[i]))
            for i in range(self.pairs)
        ]
        return write_csv(path, ("seed", "pair_id", "coalesced", "level"), rows)


def coalescence_experiment(
    rule: CoupledStepRule,
    start_a: Site,
    start_b: Site,
    horizon: int,
    theta_seeds,
) -> CoalescenceStats:
    """Level-synchronized coupled walks from two starts under many coupling
    seeds: detects the first common site, asserts the walks agree from then
    on, and reports the censored (never-met within horizon) fraction."""
    seeds = np.asarray(list(theta_seeds), dtype=np.uint64)
    S = seeds.size
    if start_a.level() > start_b.level():
        start_a, start_b = start_b, start_a
    lag = start_b.level() - start_a.level()
    ua = np.full(S, start_a.u, dtype=np.int64)
    va = np.full(S, start_a.v, dtype=np.int64)
    # bring walker a up to walker b's level first, driven by the same thetas
    for k in range(lag):
        th = site_uniforms(seeds, COUPLING_STREAM, ua, va)
        p = rule.p_at(ua, va)
        step1 = th < p
        ua = ua + step1
        va = va + (~step1)
    ub = np.full(S, start_b.u, dtype=np.int64)
    vb = np.full(S, start_b.v, dtype=np.int64)
    met_level = np.full(S, -1, dtype=np.int64)
    post_merge_violations = 0
    level = start_b.level()
    for k in range(horizon):
        merged_now = (met_level >= 0) | ((ua == ub) & (va == vb))
        just_met = (met_level < 0) & (ua == ub) & (va == vb)
        met_level[just_met] = level
        tha = site_uniforms(seeds, COUPLING_STREAM, ua, va)
        pa = rule.p_at(ua, va)
        sa = tha < pa
        ua = ua + sa
        va = va + (~sa)
        thb = site_uniforms(seeds, COUPLING_STREAM, ub, vb)
        pb = rule.p_at(ub, vb)
        sb = thb < pb
        ub = ub + sb
        vb = vb + (~sb)
        level += 1
        # permanence: pairs that have met must still agree after stepping
        bad = merged_now & ((ua != ub) | (va != vb))
        post_merge_violations += int(bad.sum())
    just_met = (met_level < 0) & (ua == ub) & (va == vb)
    met_level[just_met] = level
    return CoalescenceStats(
        seeds=seeds,
        met_level=met_level,
        post_merge_violations=post_merge_violations,
        elliptic=rule.weakly_elliptic,
    )


def ordering_check(
    rule_low: CoupledStepRule,
    rule_high: CoupledStepRule,
    start: Site,
    steps: int,
    theta_seeds,
    p_low: np.ndarray | None = None,
    p_high: np.ndarray | None = None,
) -> int:
    """Pathwise ordering under pointwise-ordered step laws: the rule with the
    larger e1-probability must never fall e1-behind.  When the p arrays are
    supplied the pointwise precondition is enforced first.  Returns the
    violation count over all seeds and steps (expected 0)."""
    if p_low is not None and p_high is not None:
        if np.any(p_low > p_high + 1e-12):
            raise OrderingError("step laws are not pointwise ordered")
    seeds = np.asarray(list(theta_seeds), dtype=np.uint64)
    S = seeds.size
    ul = np.full(S, start.u, dtype=np.int64)
    vl = np.full(S, start.v, dtype=np.int64)
    uh = ul.copy()
    vh = vl.copy()
    violations = 0
    for k in range(steps):
        thl = site_uniforms(seeds, COUPLING_STREAM, ul, vl)
        sl = thl < rule_low.p_at(ul, vl)
        ul = ul + sl
        vl = vl + (~sl)
        thh = site_uniforms(seeds, COUPLING_STREAM, uh, vh)
        sh = thh < rule_high.p_at(uh, vh)
        uh = uh + sh
        vh = vh + (~sh)
        violations += int((ul > uh).sum())
    return violations


@dataclass(frozen=True)
class JunctionReport:
    box: int
    junctions: int
    density: float
    leaves: int
    interior: int
    trees: int

    @property
    def forest_identity_ok(self) -> bool:
        return self.leaves >= self.interior + self.trees


def junction_statistics(
    rule: CoupledStepRule, box: int, thetas: CouplingField, starts=None
) -> JunctionReport:
    """Coalescence forest of coupled walks from the south-west boundary of
    [0, box]^2 (or explicit starts): counts junction points (first meetings
    of distinct merged classes) inside [1, box]^2 per unit area, and checks
    the binary-forest inequality leaves >= interior + trees."""
    L = int(box)
    if starts is None:
        starts = [(k, 0) for k in range(L + 1)] + [(0, k) for k in range(1, L + 1)]
    else:
        starts = [(int(u), int(v)) for u, v in starts]
    n_start = len(starts)
    parent = list(range(n_start))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # active walkers per class: class -> position; level-synchronized
    pos: dict[int, tuple[int, int]] = {}
    by_level: dict[int, list[int]] = {}
    for i, (u, v) in enumerate(starts):
        by_level.setdefault(u + v, []).append(i)
    junctions = 0
    events = 0
    for level in range(0, 2 * L + 1):
        for i in by_level.get(level, ()):
            pos[i] = starts[i]
        # group by site; merge co-located classes
        sites: dict[tuple[int, int], list[int]] = {}
        for c, xy in pos.items():
            sites.setdefault(xy, []).append(c)
        new_pos: dict[int, tuple[int, int]] = {}
        for xy, classes in sites.items():
            rep = classes[0]
            if len(classes) > 1:
                events += 1
                if 1 <= xy[0] <= L and 1 <= xy[1] <= L:
                    junctions += 1
                for c in classes:
                    parent[find(c)] = find(rep)
            new_pos[find(rep)] = xy
        # one synchronized step per surviving class
        pos = {}
        if new_pos:
            cs = list(new_pos)
            uu = np.asarray([new_pos[c][0] for c in cs], dtype=np.int64)
            vv = np.asarray([new_pos[c][1] for c in cs], dtype=np.int64)
            th = site_uniforms(thetas.seed, COUPLING_STREAM, uu, vv)
            step1 = th < rule.p_at(uu, vv)
            uu2 = uu + step1
            vv2 = vv + (~step1)
            keep = (uu2 <= L) & (vv2 <= L)
            for j, c in enumerate(cs):
                if keep[j]:
                    pos[c] = (int(uu2[j]), int(vv2[j]))
    comp: dict[int, int] = {}
    for i in range(n_start):
        comp[find(i)] = comp.get(find(i), 0) + 1
    leaves = sum(size for size in comp.values() if size >= 2)
    trees = sum(1 for size in comp.values() if size >= 2)
    return JunctionReport(
        box=L,
        junctions=junctions,
        density=junctions / (L * L),
        leaves=leaves,
        interior=events,
        trees=trees,
    )
