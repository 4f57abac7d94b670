import math

import numpy as np
import pytest

from polymerlab.cocycle import (
    boundary_profile,
    busemann_from_p2l,
    busemann_from_p2p,
    cesaro_busemann,
    check_monotonicity,
    cocycle_shape_check,
    direction_scan,
    dual_tilt,
    estimate_shape,
    point_to_line_value,
)
from polymerlab.env import E1, E2, Site, WeightSpec, Window, generate_field
from polymerlab.errors import HorizonError, ParameterError, ProvenanceError, WindowError
from polymerlab.fixtures import hand_grid_field
from polymerlab.partition import enumerate_oracle

GAUSS = WeightSpec.gaussian(0, 1)
LOG2 = math.log(2.0)


def test_constant_field_increments_forced_by_recovery():
    f = generate_field(WeightSpec.constant(0.0), 1, Window(Site(0, 0), 8, 8))
    for beta in (1.0, 2.0):
        bf = busemann_from_p2l(f, beta, (0.0, 0.0), 60)
        # exp(-beta b1) + exp(-beta b2) = 1 with b1 = b2 forces b = log(2)/beta
        assert np.allclose(bf.b1, LOG2 / beta, atol=1e-12)
        assert np.allclose(bf.b2, LOG2 / beta, atol=1e-12)


@pytest.mark.parametrize("beta", [0.5, 1.0, 4.0, math.inf])
def test_recovery_and_closure_exact(beta):
    f = generate_field(GAUSS, 7, Window(Site(0, 0), 40, 40))
    bf = busemann_from_p2l(f, beta, (0.1, -0.2), 120)
    assert bf.recovery_residual() <= 1e-10
    assert bf.closure_residual() <= 1e-10
    target = Site(60, 60)
    bp = busemann_from_p2p(f, beta, target, Window(Site(0, 0), 20, 20))
    assert bp.recovery_residual() <= 1e-10
    assert bp.closure_residual() <= 1e-10


def test_p2l_increments_match_oracle_differences():
    f = generate_field(GAUSS, 3, Window(Site(0, 0), 6, 6))
    h = (0.3, -0.2)
    n = 9
    bf = busemann_from_p2l(f, 1.0, h, n, Window(Site(0, 0), 4, 4))
    for u, v in [(0, 0), (2, 1), (3, 3)]:
        want1 = (
            enumerate_oracle(f, Site(u, v), 1.0, level=n, h=h)
            - enumerate_oracle(f, Site(u + 1, v), 1.0, level=n, h=h)
            - h[0]
        )
        want2 = (
            enumerate_oracle(f, Site(u, v), 1.0, level=n, h=h)
            - enumerate_oracle(f, Site(u, v + 1), 1.0, level=n, h=h)
            - h[1]
        )
        assert bf.b1[u, v] == pytest.approx(want1, abs=1e-10)
        assert bf.b2[u, v] == pytest.approx(want2, abs=1e-10)


def test_horizon_guard():
    f = generate_field(GAUSS, 7, Window(Site(0, 0), 10, 10))
    with pytest.raises(HorizonError):
        busemann_from_p2l(f, 1.0, (0.0, 0.0), 10)


def test_p2p_hand_grid_zero_temperature():
    f = hand_grid_field()
    bf = busemann_from_p2p(f, math.inf, Site(1, 1), Window(Site(0, 0), 1, 1))
    assert bf.b1[0, 0] == 1.0  # G(0,0)-G(e1) = 6 - 5
    assert bf.b2[0, 0] == 4.0
    assert min(bf.b1[0, 0], bf.b2[0, 0]) == f.value(Site(0, 0))


def test_p2p_constant_weights_binomial():
    f = generate_field(WeightSpec.constant(0.0), 1, Window(Site(0, 0), 12, 12))
    target = Site(9, 7)
    bf = busemann_from_p2p(f, 1.0, target, Window(Site(0, 0), 4, 4))
    for u, v in [(0, 0), (2, 3), (3, 1)]:
        a, b = target.u - u, target.v - v
        want = math.log(math.comb(a + b, a)) - math.log(math.comb(a - 1 + b, a - 1))
        assert bf.b1[u, v] == pytest.approx(want, abs=1e-10)


def test_p2p_target_guard():
    f = generate_field(GAUSS, 7, Window(Site(0, 0), 10, 10))
    with pytest.raises(WindowError):
        busemann_from_p2p(f, 1.0, Site(5, 20), Window(Site(0, 0), 6, 6))


def test_p2p_horizon_doubling_diagnostic():
    # stabilization of b1(0) as the target radius doubles: report only
    f = generate_field(GAUSS, 19, Window(Site(0, 0), 1, 1))
    win = Window(Site(0, 0), 1, 1)
    diffs = []
    for N in (20, 40, 80):
        a = busemann_from_p2p(f, 1.0, Site(N, N), win).b1[0, 0]
        b = busemann_from_p2p(f, 1.0, Site(2 * N, 2 * N), win).b1[0, 0]
        diffs.append(abs(a - b))
    assert all(np.isfinite(diffs))


def test_monotonicity_equal_and_ordered():
    f = generate_field(GAUSS, 7, Window(Site(0, 0), 30, 30))
    fa = busemann_from_p2l(f, 1.0, (0.0, 0.0), 80)
    same = check_monotonicity(fa, fa)
    assert same.violations == 0 and same.worst_margin == 0.0
    fb = busemann_from_p2l(f, 1.0, (0.5, -0.5), 80)
    rep = check_monotonicity(fa, fb)
    assert rep.violations == 0
    # argument order must not matter
    assert check_monotonicity(fb, fa).violations == 0


def test_monotonicity_random_sweep():
    f = generate_field(GAUSS, 11, Window(Site(0, 0), 20, 20))
    rng = np.random.default_rng(0)
    total = 0
    for _ in range(20):
        h = (float(rng.normal()), float(rng.normal()))
        hp = (h[0] + float(rng.uniform(0, 1)), h[1] - float(rng.uniform(0, 1)))
        fa = busemann_from_p2l(f, 1.0, h, 60)
        fb = busemann_from_p2l(f, 1.0, hp, 60)
        total += check_monotonicity(fa, fb).violations
    assert total == 0


def test_monotonicity_incomparable_tilts_rejected():
    f = generate_field(GAUSS, 7, Window(Site(0, 0), 10, 10))
    fa = busemann_from_p2l(f, 1.0, (0.0, 0.0), 40)
    fb = busemann_from_p2l(f, 1.0, (0.5, 0.5), 40)
    with pytest.raises(ParameterError):
        check_monotonicity(fa, fb)


def test_cesaro_constant_weights_deterministic():
    f = generate_field(WeightSpec.constant(0.0), 1, Window(Site(0, 0), 4, 4))
    h = (-LOG2, -LOG2)  # the zero-free-energy tilt of the constant model
    bf, rep = cesaro_busemann(f, 1.0, h, 50, 20, seed=5)
    assert rep.mean_b1 == pytest.approx(LOG2, abs=1e-12)
    assert rep.mean_b2 == pytest.approx(LOG2, abs=1e-12)
    assert rep.se_b1 == pytest.approx(0.0, abs=1e-12)
    assert abs(rep.fpl_mean) < 1e-12
    assert bf.provenance.kind == "cesaro"
    with pytest.raises(ProvenanceError):
        bf.recovery_residual()  # averaged fields carry no single environment


def test_cesaro_single_sample_degenerates():
    f = generate_field(GAUSS, 9, Window(Site(0, 0), 4, 4))
    bf, rep = cesaro_busemann(f, 1.0, (-1.0, -1.0), 30, 1, seed=3)
    assert bf.provenance.samples == 1
    assert math.isnan(rep.se_b1)


def test_shape_entropy_reference_small():
    est = estimate_shape(WeightSpec.constant(0.0), 1.0, (0.25, 0.5, 0.75), [600], 1, 1)
    for t in (0.25, 0.5, 0.75):
        lam, _ = est.at(t)
        ent = -t * math.log(t) - (1 - t) * math.log(1 - t)
        assert abs(lam - ent) < 0.02


def test_shape_symmetry_and_concavity_small():
    grid = (0.3, 0.4, 0.5, 0.6, 0.7)
    est = estimate_shape(GAUSS, 1.0, grid, [300], 24, 1)
    d, se = est.paired_difference(0.3, 0.7)
    assert abs(d) <= 2 * se
    lam = est.lambda_hat[:, -1]
    for i in (1, 2, 3):
        second = lam[i - 1] - 2 * lam[i] + lam[i + 1]
        comb = math.sqrt(
            est.se[i - 1, -1] ** 2 + 4 * est.se[i, -1] ** 2 + est.se[i + 1, -1] ** 2
        )
        assert second <= 2 * comb


def test_dual_tilt_constant_entropy():
    grid = (0.3, 0.4, 0.5, 0.6, 0.7)
    est = estimate_shape(WeightSpec.constant(0.0), 1.0, grid, [800], 1, 1)
    for t in (0.4, 0.5, 0.6):
        dt = dual_tilt(est, t)
        # exact entropy duals: h = (log t, log(1-t))
        assert dt.h[0] == pytest.approx(math.log(t), abs=0.02)
        assert dt.h[1] == pytest.approx(math.log(1 - t), abs=0.02)
        assert dt.euler_residual < 1e-12
    with pytest.raises(ParameterError):
        dual_tilt(est, 0.3)  # grid boundary


def test_dual_tilt_shift_traces_free_energy_line():
    # f_pl(h + c(e1+e2)) = f_pl(h) + c, exactly at the pre-limit level
    spec = WeightSpec.constant(0.0)
    h = (-LOG2, -LOG2)
    base, _ = point_to_line_value(spec, 1.0, h, 60, 1, 3)
    for c in (-0.3, 0.2):
        val, _ = point_to_line_value(spec, 1.0, (h[0] + c, h[1] + c), 60, 1, 3)
        assert val - base == pytest.approx(c, abs=1e-12)


def test_boundary_profile_gaussian():
    out = boundary_profile(GAUSS, 1.0, [0.04, 0.01], [2500, 10000], 3, 5)
    ratios = [r for _, r, _ in out]
    assert all(0.6 < r < 1.4 for r in ratios)
    with pytest.raises(ParameterError):
        boundary_profile(WeightSpec.constant(0.0), 1.0, [0.01], [1000], 2, 1)


def test_cocycle_shape_trivial_and_control():
    f = generate_field(WeightSpec.constant(0.0), 1, Window(Site(0, 0), 41, 41))
    bf = busemann_from_p2l(f, 1.0, (-LOG2, -LOG2), 200, Window(Site(0, 0), 41, 41))
    prof = cocycle_shape_check(bf, (LOG2, LOG2), [10, 20, 40])
    assert max(prof.deviations) <= 1e-12
    wrong = cocycle_shape_check(bf, (LOG2 + 0.1, LOG2), [10, 20, 40])
    assert all(d == pytest.approx(0.1, abs=1e-9) for d in wrong.deviations)
    with pytest.raises(WindowError):
        cocycle_shape_check(bf, (LOG2, LOG2), [50])


def test_direction_scan_monotone_and_binomial():
    f = generate_field(GAUSS, 3, Window(Site(0, 0), 6, 6))
    prof = direction_scan(f, 1.0, np.linspace(0.1, 0.9, 17), 30)
    assert prof.violations == 0
    f0 = generate_field(WeightSpec.constant(0.0), 1, Window(Site(0, 0), 4, 4))
    N = 24
    grid = [0.25, 0.5, 0.75]
    prof0 = direction_scan(f0, 1.0, grid, N)
    for t, got in zip(grid, prof0.b1):
        a = round(N * t)
        want = math.log(math.comb(N, a)) - math.log(math.comb(N - 1, a - 1))
        assert got == pytest.approx(want, abs=1e-10)
