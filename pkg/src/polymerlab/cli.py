"""Configuration-driven experiment runner.

Configs are flat key/value text files (``key = value``, ``#`` comments).
Every experiment is deterministic given its config: environments come from
counter-based seeds, samplers from explicit generator seeds, and CSV output
uses 17-significant-digit floats, so reruns are byte-identical.

Commands:
    polymerlab run <config> [--out DIR] [--workers N] [--beta inf]
    polymerlab suite <manifest> [--out DIR] [--workers N]

Exit status 0 means every asserted invariant of the experiment passed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import cif as cif_mod
from . import cocycle as coc
from . import coupling as cpl
from . import gibbs as gb
from .csvio import format_value, write_csv
from .env import Site, WeightSpec, Window, generate_field
from .errors import ConfigError, PolymerlabError
from .fixtures import hand_grid_field
from .partition import comparison_check

__all__ = ["ExperimentConfig", "Check", "Report", "load_config", "run", "suite", "main"]

KINDS = (
    "shape",
    "busemann",
    "monotonicity",
    "cesaro",
    "dlr",
    "ldp",
    "decay",
    "coalescence",
    "junctions",
    "interface",
    "cdf",
    "scan",
)


def _parse_float(s: str) -> float:
    return float(s)


def _parse_int(s: str) -> int:
    return int(s)


def _parse_str(s: str) -> str:
    return s


def _parse_floatlist(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _parse_intlist(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


_REQUIRED = object()

# field name -> (parser, default); _REQUIRED marks mandatory fields
_COMMON = {
    "kind": (_parse_str, _REQUIRED),
    "weights": (_parse_str, "gaussian"),
    "mean": (_parse_float, 0.0),
    "sd": (_parse_float, 1.0),
    "shape_param": (_parse_float, 1.0),
    "a": (_parse_float, 0.0),
    "b": (_parse_float, 1.0),
    "value": (_parse_float, 0.0),
    "beta": (_parse_float, 1.0),
    "seed_weights": (_parse_int, 1),
    "seed_coupling": (_parse_int, 2),
    "seed_sampler": (_parse_int, 3),
    "out": (_parse_str, ""),
    "workers": (_parse_int, 1),
}

_SCHEMAS: dict[str, dict] = {
    "shape": {
        "t_grid": (_parse_floatlist, (0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75)),
        "n": (_parse_int, 1000),
        "n_list": (_parse_intlist, ()),
        "replicas": (_parse_int, 20),
        "entropy_tol": (_parse_float, 0.01),
    },
    "busemann": {
        "construction": (_parse_str, "p2l"),
        "h1": (_parse_float, 0.0),
        "h2": (_parse_float, 0.0),
        "horizon": (_parse_int, 200),
        "width": (_parse_int, 40),
        "height": (_parse_int, 40),
        "target_u": (_parse_int, 0),
        "target_v": (_parse_int, 0),
        "staircases": (_parse_int, 100),
        "recovery_tol": (_parse_float, 1e-9),
        "closure_tol": (_parse_float, 1e-9),
        "path_tol": (_parse_float, 1e-8),
    },
    "monotonicity": {
        "width": (_parse_int, 30),
        "height": (_parse_int, 30),
        "horizon": (_parse_int, 80),
        "pairs": (_parse_int, 100),
        "tilt_scale": (_parse_float, 0.5),
        "triples": (_parse_int, 500),
        "triple_size": (_parse_int, 30),
    },
    "cesaro": {
        "t": (_parse_float, 0.5),
        "n": (_parse_int, 400),
        "samples": (_parse_int, 200),
        "shape_n": (_parse_int, 800),
        "shape_replicas": (_parse_int, 12),
        "shape_step": (_parse_float, 0.05),
        "fpl_replicas": (_parse_int, 8),
    },
    "dlr": {
        "fixture": (_parse_str, ""),
        "windows": (_parse_int, 20),
        "levels": (_parse_int, 10),
        "tol": (_parse_float, 1e-10),
    },
    "ldp": {
        "n": (_parse_int, 500),
        "replicas": (_parse_int, 10),
        "t": (_parse_float, 0.5),
        "shape_n": (_parse_int, 2000),
        "shape_replicas": (_parse_int, 12),
        "shape_step": (_parse_float, 0.05),
        "identity_tol": (_parse_float, 1e-10),
    },
    "decay": {
        "rule": (_parse_str, "half"),
        "levels": (_parse_intlist, (8, 16, 32, 64)),
        "seeds": (_parse_int, 10),
        "h1": (_parse_float, -0.7),
        "h2": (_parse_float, -0.7),
    },
    "coalescence": {
        "rule": (_parse_str, "half"),
        "horizon": (_parse_int, 10000),
        "seeds": (_parse_int, 1000),
        "gap": (_parse_int, 2),
        "threshold": (_parse_float, 0.99),
        "h1": (_parse_float, -0.7),
        "h2": (_parse_float, -0.7),
        "half_width": (_parse_int, 1200),
    },
    "junctions": {
        "p": (_parse_float, 0.5),
        "boxes": (_parse_intlist, (16, 32, 64)),
        "replicas": (_parse_int, 20),
    },
    "interface": {
        "steps": (_parse_int, 2000),
        "replicas": (_parse_int, 1000),
        "interior_eps": (_parse_float, 0.001),
        "interior_min": (_parse_float, 0.97),
    },
    "cdf": {
        "grid_points": (_parse_int, 21),
        "grid_lo": (_parse_float, 0.05),
        "grid_hi": (_parse_float, 0.95),
        "replicas": (_parse_int, 1000),
        "steps": (_parse_int, 2000),
        "busemann_horizon": (_parse_int, 0),
        "tail_eps": (_parse_float, 0.02),
    },
    "scan": {
        "t_points": (_parse_int, 41),
        "radius": (_parse_int, 200),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def weight_spec(self) -> WeightSpec:
        w = self.values["weights"]
        if w == "gaussian":
            return WeightSpec.gaussian(self.values["mean"], self.values["sd"])
        if w == "inverse_log_gamma":
            return WeightSpec.inverse_log_gamma(self.values["shape_param"])
        if w == "uniform":
            return WeightSpec.uniform(self.values["a"], self.values["b"])
        if w == "constant":
            return WeightSpec.constant(self.values["value"])
        raise ConfigError(f"field 'weights': unknown distribution {w!r}")


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty field name")
        if key in raw:
            raise ConfigError(f"field {key!r}: duplicated")
        raw[key] = val
    kind = raw.get("kind")
    if kind is None:
        raise ConfigError("field 'kind': missing")
    if kind not in KINDS:
        raise ConfigError(f"field 'kind': unknown experiment {kind!r}")
    schema = dict(_COMMON)
    schema.update(_SCHEMAS[kind])
    values: dict = {}
    for key, sval in raw.items():
        if key not in schema:
            raise ConfigError(f"field {key!r}: not recognized for kind {kind!r}")
        parser, _ = schema[key]
        try:
            values[key] = parser(sval)
        except ValueError as exc:
            raise ConfigError(f"field {key!r}: cannot parse {sval!r}") from exc
    for key, (parser, default) in schema.items():
        if key not in values:
            if default is _REQUIRED:
                raise ConfigError(f"field {key!r}: missing")
            values[key] = default
    if values["beta"] != math.inf and values["beta"] <= 0:
        raise ConfigError("field 'beta': must be positive or inf")
    return ExperimentConfig(kind, values)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass
class Report:
    kind: str
    config: dict
    checks: list[Check] = dc_field(default_factory=list)
    artifacts: list[str] = dc_field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "passed": self.passed,
                "config": {k: format_value(v) if isinstance(v, float) else v for k, v in self.config.items()},
                "checks": [
                    {
                        "name": c.name,
                        "value": format_value(c.value),
                        "tolerance": format_value(c.tolerance),
                        "passed": c.passed,
                        "note": c.note,
                    }
                    for c in self.checks
                ],
                "artifacts": self.artifacts,
                "seconds": round(self.seconds, 3),
            },
            indent=2,
            sort_keys=True,
        )


def _leq(name: str, value: float, tol: float, note: str = "") -> Check:
    return Check(name, float(value), float(tol), bool(value <= tol), note)


def _eq0(name: str, value: float, note: str = "") -> Check:
    return Check(name, float(value), 0.0, bool(value == 0), note)


def _flag(name: str, ok: bool, note: str = "") -> Check:
    return Check(name, 0.0 if ok else 1.0, 0.0, bool(ok), note)


# ---------------------------------------------------------------------------
# experiment bodies: config -> (checks, {artifact name: writer})
# ---------------------------------------------------------------------------


def _run_shape(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    n_list = cfg.n_list if cfg.n_list else (cfg.n,)
    if max(n_list) != cfg.n:
        n_list = tuple(sorted(set(n_list) | {cfg.n}))
    est = coc.estimate_shape(
        spec, cfg.beta, cfg.t_grid, n_list, cfg.replicas, cfg.seed_weights, cfg.workers
    )
    artifacts.append(est.to_csv(os.path.join(outdir, "shape.csv")))
    if spec.distribution == "constant":
        for t in cfg.t_grid:
            lam, _ = est.at(t)
            ent = -t * math.log(t) - (1 - t) * math.log(1 - t)
            ref = spec.params[0] + ent / cfg.beta
            checks.append(
                _leq(f"entropy_reference_t={t:g}", abs(lam - ref), cfg.entropy_tol)
            )
        return
    for t in cfg.t_grid:
        t2 = 1.0 - t
        if t2 <= t + 1e-12:
            continue
        if not any(abs(t2 - s) < 1e-9 for s in cfg.t_grid):
            continue
        diff, se = est.paired_difference(t, t2)
        checks.append(
            _leq(f"symmetry_t={t:g}", abs(diff), 2 * se + 1e-15, note=f"se={se:.3g}")
        )
    lam = est.lambda_hat[:, -1]
    se = est.se[:, -1]
    for i in range(1, len(cfg.t_grid) - 1):
        second = lam[i - 1] - 2 * lam[i] + lam[i + 1]
        combined = math.sqrt(se[i - 1] ** 2 + 4 * se[i] ** 2 + se[i + 1] ** 2)
        checks.append(
            _leq(f"concavity_t={cfg.t_grid[i]:g}", second, 2 * combined, note=f"se={combined:.3g}")
        )


def _run_busemann(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
    window = Window(Site(0, 0), cfg.width, cfg.height)
    if cfg.construction == "p2l":
        bf = coc.busemann_from_p2l(field, cfg.beta, (cfg.h1, cfg.h2), cfg.horizon, window)
    elif cfg.construction == "p2p":
        target = Site(cfg.target_u, cfg.target_v)
        if target == Site(0, 0):
            target = Site(cfg.width + cfg.horizon, cfg.height + cfg.horizon)
        bf = coc.busemann_from_p2p(field, cfg.beta, target, window)
    else:
        raise ConfigError(f"field 'construction': unknown {cfg.construction!r}")
    artifacts.append(bf.to_csv(os.path.join(outdir, "busemann.csv")))
    checks.append(_leq("recovery_residual", bf.recovery_residual(), cfg.recovery_tol))
    checks.append(_leq("closure_residual", bf.closure_residual(), cfg.closure_tol))
    rng = np.random.default_rng(cfg.seed_sampler)
    B = bf.integrated()
    worst = 0.0
    for _ in range(cfg.staircases):
        tu = int(rng.integers(1, cfg.width))
        tv = int(rng.integers(1, cfg.height))
        steps = np.concatenate([np.ones(tu, dtype=np.int64), np.zeros(tv, dtype=np.int64)])
        rng.shuffle(steps)
        sites = [Site(0, 0)]
        for s in steps:
            sites.append(sites[-1] + (Site(1, 0) if s else Site(0, 1)))
        worst = max(worst, abs(bf.staircase_sum(sites) - B[tu, tv]))
    checks.append(_leq("staircase_independence", worst, cfg.path_tol))


def _run_monotonicity(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
    window = Window(Site(0, 0), cfg.width, cfg.height)
    rng = np.random.default_rng(cfg.seed_sampler)
    violations = 0
    rows = []
    for k in range(cfg.pairs):
        d1 = float(rng.uniform(0, cfg.tilt_scale))
        d2 = float(rng.uniform(0, cfg.tilt_scale))
        h = (float(rng.normal(0, cfg.tilt_scale)), float(rng.normal(0, cfg.tilt_scale)))
        hp = (h[0] + d1, h[1] - d2)
        fa = coc.busemann_from_p2l(field, cfg.beta, h, cfg.horizon, window)
        fb = coc.busemann_from_p2l(field, cfg.beta, hp, cfg.horizon, window)
        rep = coc.check_monotonicity(fa, fb)
        violations += rep.violations
        rows.append((k, h[0], h[1], hp[0], hp[1], rep.violations, rep.worst_margin))
    artifacts.append(
        write_csv(
            os.path.join(outdir, "monotonicity.csv"),
            ("pair", "h1", "h2", "hp1", "hp2", "violations", "worst_margin"),
            rows,
        )
    )
    checks.append(_eq0("tilt_monotonicity_violations", violations))
    comp_bad = 0
    margin_rows = []
    for k in range(cfg.triples):
        L = cfg.triple_size
        x = Site(int(rng.integers(0, L // 3)), int(rng.integers(0, L // 3)))
        u = Site(int(rng.integers(x.u + 1, L)), int(rng.integers(x.v + 1, L)))
        v = Site(int(rng.integers(x.u + 1, u.u + 1)), int(rng.integers(u.v, L)))
        rep = comparison_check(field, x, u, v, cfg.beta)
        if not rep.ok:
            comp_bad += 1
        margin_rows.append((k, rep.margin_e1, rep.margin_e2))
    artifacts.append(
        write_csv(
            os.path.join(outdir, "comparison.csv"),
            ("triple", "margin_e1", "margin_e2"),
            margin_rows,
        )
    )
    checks.append(_eq0("comparison_violations", comp_bad))


def _dual_tilt_for(cfg: ExperimentConfig, spec, t: float, fpl_replicas: int = 8):
    step = cfg.shape_step
    grid = (t - 2 * step, t - step, t, t + step, t + 2 * step)
    est = coc.estimate_shape(
        spec, cfg.beta, grid, [cfg.shape_n], cfg.shape_replicas, cfg.seed_weights + 101, cfg.workers
    )
    return coc.dual_tilt(est, t, fpl_replicas=fpl_replicas, fpl_n=cfg.shape_n), est


def _run_cesaro(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    if spec.distribution == "constant":
        # the zero-free-energy tilt of the constant model, in closed form
        c = spec.params[0]
        h = (-c - math.log(2.0) / cfg.beta, -c - math.log(2.0) / cfg.beta)
    else:
        dt, _ = _dual_tilt_for(cfg, spec, cfg.t, cfg.fpl_replicas)
        h = dt.h
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 8, 8))
    bf, rep = coc.cesaro_busemann(
        field, cfg.beta, h, cfg.n, cfg.samples, cfg.seed_sampler
    )
    artifacts.append(bf.to_csv(os.path.join(outdir, "cesaro_field.csv")))
    artifacts.append(
        write_csv(
            os.path.join(outdir, "cesaro_mean.csv"),
            ("component", "mean", "target", "se"),
            [
                ("e1", rep.mean_b1, rep.target[0], rep.se_b1),
                ("e2", rep.mean_b2, rep.target[1], rep.se_b2),
            ],
        )
    )
    checks.append(
        _leq("cesaro_mean_e1", abs(rep.mean_b1 - rep.target[0]), 3 * rep.se_b1, note=f"fpl={rep.fpl_mean:.4f}")
    )
    checks.append(
        _leq("cesaro_mean_e2", abs(rep.mean_b2 - rep.target[1]), 3 * rep.se_b2)
    )


def _run_dlr(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    rows = []
    if cfg.fixture:
        if cfg.fixture != "hand2x2":
            raise ConfigError(f"field 'fixture': unknown {cfg.fixture!r}")
        field = hand_grid_field(pad_to=6)
        bf = coc.busemann_from_p2p(field, cfg.beta, Site(3, 3), Window(Site(0, 0), 2, 2))
        rep = gb.dlr_consistency_check(bf, field, Site(0, 0), 2)
        rows.append(("hand2x2", rep.paths_checked, rep.max_discrepancy))
        checks.append(_leq("dlr_fixture", rep.max_discrepancy, 1e-12))
    spec = cfg.weight_spec()
    worst = 0.0
    for k in range(cfg.windows):
        field = generate_field(spec, cfg.seed_weights + k, Window(Site(0, 0), 1, 1))
        side = cfg.levels + 1
        bf = coc.busemann_from_p2l(
            field,
            cfg.beta,
            (0.0, 0.0),
            3 * cfg.levels + 4,
            Window(Site(0, 0), side, side),
        )
        rep = gb.dlr_consistency_check(bf, field, Site(0, 0), cfg.levels)
        worst = max(worst, rep.max_discrepancy)
        rows.append((f"seed{cfg.seed_weights + k}", rep.paths_checked, rep.max_discrepancy))
    artifacts.append(
        write_csv(
            os.path.join(outdir, "dlr.csv"), ("case", "paths", "max_discrepancy"), rows
        )
    )
    checks.append(_leq("dlr_max_discrepancy", worst, cfg.tol))


def _run_ldp(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    dt, est = _dual_tilt_for(cfg, spec, cfg.t)
    prof = gb.ldp_rate_profile(
        spec, cfg.beta, dt.h, cfg.n, cfg.replicas, cfg.seed_weights + 7, shape=est
    )
    artifacts.append(prof.to_csv(os.path.join(outdir, "ldp_rate.csv")))
    checks.append(_leq("rate_flow_identity", prof.identity_residual, cfg.identity_tol))
    lower = prof.rate + 2 * prof.rate_se
    checks.append(
        _flag(
            "rate_nonnegative_2se",
            bool(np.all(lower >= -1e-12)),
            note=f"min(rate+2se)={float(lower.min()):.3g}",
        )
    )
    i = int(np.argmin(np.abs(prof.zeta1 - cfg.t)))
    gap = abs(float(prof.gap[i]))
    # the dual-tilt estimate enters the gap linearly; fold its SE in
    tilt_se = dt.h_se[0] * cfg.t + dt.h_se[1] * (1 - cfg.t)
    tol = 2 * (float(prof.gap_se[i]) + tilt_se)
    checks.append(_leq("rate_zero_at_dual", gap, tol, note=f"zeta={prof.zeta1[i]:.3f}"))


def _run_decay(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    n_max = max(cfg.levels)
    rows = []
    all_decreasing = True
    binom_worst = 0.0
    for k in range(cfg.seeds):
        target = Site(n_max, n_max)
        window = Window(Site(0, 0), n_max + 1, n_max + 1)
        if cfg.rule == "half":
            p1 = np.full((window.width, window.height), 0.5)
            trans = gb.TransitionField(window, p1, "busemann", 1, cfg.beta)
        elif cfg.rule == "busemann":
            field = generate_field(spec, cfg.seed_weights + k, Window(Site(0, 0), 1, 1))
            bf = coc.busemann_from_p2l(
                field, cfg.beta, (cfg.h1, cfg.h2), 3 * n_max + 4, window
            )
            trans = gb.busemann_transitions(bf, field)
        else:
            raise ConfigError(f"field 'rule': unknown {cfg.rule!r}")
        prof = gb.rooted_mass_decay(trans, target, cfg.levels)
        all_decreasing &= prof.strictly_decreasing
        for n, mh in zip(prof.levels, prof.max_hit):
            rows.append((k, n, mh))
            if cfg.rule == "half":
                binom_worst = max(
                    binom_worst, abs(mh - math.comb(n, n // 2) / 2.0**n)
                )
        if cfg.rule == "half":
            break  # deterministic; one pass suffices
    artifacts.append(
        write_csv(os.path.join(outdir, "decay.csv"), ("seed", "n", "max_hit"), rows)
    )
    checks.append(_flag("profile_strictly_decreasing", all_decreasing))
    if cfg.rule == "half":
        checks.append(_leq("binomial_match", binom_worst, 1e-12))


def _run_coalescence(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    if cfg.rule == "half":
        rule = cpl.constant_rule(0.5)
    elif cfg.rule == "busemann":
        field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
        rule = cpl.band_transition_rule(
            field, cfg.beta, (cfg.h1, cfg.h2), cfg.horizon + cfg.gap + 2, cfg.half_width
        )
    else:
        raise ConfigError(f"field 'rule': unknown {cfg.rule!r}")
    seeds = [cfg.seed_coupling + k for k in range(cfg.seeds)]
    stats = cpl.coalescence_experiment(
        rule, Site(0, 0), Site(0, cfg.gap), cfg.horizon, seeds
    )
    artifacts.append(stats.to_csv(os.path.join(outdir, "coalescence.csv")))
    checks.append(
        Check(
            "coalesced_fraction",
            stats.fraction,
            cfg.threshold,
            stats.fraction >= cfg.threshold,
            note=f"censored={stats.censored}/{stats.pairs}",
        )
    )
    checks.append(_eq0("post_merge_violations", stats.post_merge_violations))


def _run_junctions(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    rule = cpl.constant_rule(cfg.p)
    rows = []
    densities = []
    identity_ok = True
    for L in cfg.boxes:
        ds = []
        for r in range(cfg.replicas):
            rep = cpl.junction_statistics(rule, L, cpl.CouplingField(cfg.seed_coupling + r))
            ds.append(rep.density)
            identity_ok &= rep.forest_identity_ok
        densities.append(float(np.mean(ds)))
        rows.append((L, densities[-1]))
    artifacts.append(write_csv(os.path.join(outdir, "junctions.csv"), ("L", "density"), rows))
    checks.append(_flag("forest_identity", identity_ok))
    decreasing = all(densities[i + 1] < densities[i] for i in range(len(densities) - 1))
    checks.append(
        _flag("density_decreasing", decreasing, note=" ".join(f"{d:.4f}" for d in densities))
    )


def _run_interface(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
    stats = cif_mod.cif_direction_stats(
        field, cfg.beta, cfg.replicas, cfg.steps, cfg.seed_coupling
    )
    artifacts.append(stats.to_csv(os.path.join(outdir, "interface_directions.csv")))
    # boundary-exact directions have vanishing but positive finite-length
    # mass (2/(steps+1) already for the constant model), so the directedness
    # proxy is a threshold, not an all-replicas assertion
    frac = stats.interior_fraction(cfg.interior_eps)
    checks.append(
        Check(
            "directions_interior",
            frac,
            cfg.interior_min,
            frac >= cfg.interior_min,
            note=f"atom_share={stats.atom_share():.3f}",
        )
    )
    if spec.distribution == "constant":
        half_cdf = float(stats.empirical_cdf([0.5])[0])
        tol = 3.0 / (2.0 * math.sqrt(cfg.replicas))
        checks.append(_leq("median_half", abs(half_cdf - 0.5), tol))


def _run_cdf(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
    grid = np.linspace(cfg.grid_lo, cfg.grid_hi, cfg.grid_points)
    N = cfg.busemann_horizon if cfg.busemann_horizon else cfg.steps
    cmp_ = cif_mod.cif_cdf_check(
        field, cfg.beta, grid, cfg.replicas, cfg.steps, cfg.seed_coupling, busemann_horizon=N
    )
    artifacts.append(cmp_.to_csv(os.path.join(outdir, "cdf_comparison.csv")))
    checks.append(
        _leq(
            "cdf_sup_discrepancy",
            cmp_.sup_discrepancy,
            cmp_.dkw_band,
            note=f"dkw99 at {cfg.replicas} replicas; drift={cmp_.horizon_drift:.4f}",
        )
    )
    checks.append(_flag("cdf_monotone", cmp_.monotone))
    tails = cif_mod._busemann_cdf_values(
        field, cfg.beta, Site(0, 0), np.asarray([cfg.tail_eps, 1 - cfg.tail_eps]), N
    )
    checks.append(_leq("cdf_lower_tail", float(tails[0]), 0.5))
    checks.append(
        Check("cdf_upper_tail", float(tails[1]), 0.9, bool(tails[1] >= 0.9))
    )


def _run_scan(cfg: ExperimentConfig, outdir: str, checks: list, artifacts: list):
    spec = cfg.weight_spec()
    field = generate_field(spec, cfg.seed_weights, Window(Site(0, 0), 1, 1))
    lo = max(2.0 / cfg.radius, 0.02)
    grid = np.linspace(lo, 1 - lo, cfg.t_points)
    prof = coc.direction_scan(field, cfg.beta, grid, cfg.radius)
    artifacts.append(prof.to_csv(os.path.join(outdir, "scan.csv")))
    checks.append(_eq0("scan_monotonicity_violations", prof.violations))
    checks.append(Check("largest_jump", prof.max_jump, math.inf, True, "descriptive"))


_RUNNERS = {
    "shape": _run_shape,
    "busemann": _run_busemann,
    "monotonicity": _run_monotonicity,
    "cesaro": _run_cesaro,
    "dlr": _run_dlr,
    "ldp": _run_ldp,
    "decay": _run_decay,
    "coalescence": _run_coalescence,
    "junctions": _run_junctions,
    "interface": _run_interface,
    "cdf": _run_cdf,
    "scan": _run_scan,
}


def run(config: ExperimentConfig, out_dir: str | None = None, workers: int | None = None) -> Report:
    """Execute one experiment; writes CSV artifacts and report.json."""
    values = dict(config.values)
    if workers is not None:
        values["workers"] = workers
    outdir = out_dir or values.get("out") or f"out_{config.kind}"
    os.makedirs(outdir, exist_ok=True)
    cfg = ExperimentConfig(config.kind, values)
    report = Report(kind=cfg.kind, config=dict(cfg.values))
    t0 = time.perf_counter()
    _RUNNERS[cfg.kind](cfg, outdir, report.checks, report.artifacts)
    report.seconds = time.perf_counter() - t0
    with open(os.path.join(outdir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    return report


def suite(configs, out_dir: str | None = None, workers: int = 1) -> tuple[bool, list[Report]]:
    """Run a list of configs (paths or ExperimentConfig) and aggregate."""
    reports = []
    for i, item in enumerate(configs):
        cfg = load_config(item) if isinstance(item, (str, os.PathLike)) else item
        sub = os.path.join(out_dir, f"{i:02d}_{cfg.kind}") if out_dir else None
        reports.append(run(cfg, out_dir=sub, workers=workers))
    return all(r.passed for r in reports), reports


def _print_report(report: Report, stream=sys.stdout) -> None:
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        tol = "" if math.isinf(c.tolerance) else f" tol={format_value(c.tolerance)}"
        note = f" ({c.note})" if c.note else ""
        print(
            f"[{status}] {report.kind}.{c.name}: value={format_value(c.value)}{tol}{note}",
            file=stream,
        )
    print(
        f"{report.kind}: {'PASS' if report.passed else 'FAIL'} "
        f"({len(report.checks)} checks, {report.seconds:.1f}s)",
        file=stream,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="polymerlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_suite = sub.add_parser("suite", help="run a manifest (one config path per line)")
    p_suite.add_argument("manifest")
    for p in (p_run, p_suite):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None, help="replica-level workers")
        p.add_argument(
            "--beta", default=None, help="override the config beta (accepts 'inf')"
        )
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.beta is not None:
                values = dict(cfg.values)
                values["beta"] = float(args.beta)
                cfg = ExperimentConfig(cfg.kind, values)
            report = run(cfg, out_dir=args.out, workers=args.workers)
            _print_report(report)
            return 0 if report.passed else 1
        with open(args.manifest, "r", encoding="utf-8") as fh:
            paths = [
                line.strip()
                for line in fh
                if line.strip() and not line.strip().startswith("#")
            ]
        base = os.path.dirname(os.path.abspath(args.manifest))
        paths = [p if os.path.isabs(p) else os.path.join(base, p) for p in paths]
        configs = []
        for p in paths:
            cfg = load_config(p)
            if args.beta is not None:
                values = dict(cfg.values)
                values["beta"] = float(args.beta)
                cfg = ExperimentConfig(cfg.kind, values)
            configs.append(cfg)
        ok, reports = suite(configs, out_dir=args.out, workers=args.workers or 1)
        for r in reports:
            _print_report(r)
        print(f"suite: {'PASS' if ok else 'FAIL'} ({len(reports)} experiments)")
        return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PolymerlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
