import numpy as np
import pytest

from vremfl.rem import (
    BitrateTable,
    BsLayout,
    GridSpec,
    LinkBudget,
    Measurement,
    OutOfBoundsError,
    ShadowingResourceError,
    SinrGrid,
    bitrate_at,
    estimate_rem_gpr,
    generate_shadowing,
    ground_truth_rem,
    path_loss_db,
    path_loss_prior_rem,
    sample_measurements,
    sinr_to_bitrate,
)


# ---------------------------------------------------------------- shadowing

def test_shadowing_zero_std_gives_zero_field():
    grid = GridSpec((0, 0), 10.0, 8, 8)
    field = generate_shadowing(grid, 0.0, 25.0, seed=1)
    assert np.all(field == 0.0)


def test_shadowing_deterministic_per_seed():
    grid = GridSpec((0, 0), 10.0, 16, 16)
    a = generate_shadowing(grid, 6.0, 25.0, seed=42)
    b = generate_shadowing(grid, 6.0, 25.0, seed=42)
    c = generate_shadowing(grid, 6.0, 25.0, seed=43)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_shadowing_pair_correlation_at_decorrelation_distance():
    # Monte-Carlo estimate over >= 1e4 realizations of a two-cell grid whose
    # centers sit exactly one decorrelation distance apart.
    dc = 25.0
    grid = GridSpec((0, 0), dc, 2, 1)
    n = 10_000
    pairs = np.empty((n, 2))
    for k in range(n):
        pairs[k] = generate_shadowing(grid, 6.0, dc, seed=k).ravel()
    corr = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
    assert abs(corr - np.exp(-1.0)) < 0.05


def test_shadowing_field_statistics_large_grid():
    # >= 1e5 cells through the FFT path; mean ~ 0, std within 5% of 6 dB.
    grid = GridSpec((0, 0), 25.0, 350, 350)
    field = generate_shadowing(grid, 6.0, 25.0, seed=7)
    assert field.shape == (350, 350)
    assert abs(field.mean()) < 0.1
    assert 5.7 <= field.std() <= 6.3


def test_shadowing_lag_correlations_match_exponential_model():
    # Cell size dc/2 so lags of 1, 2 and 4 cells probe d_c/2, d_c and 2*d_c.
    dc = 25.0
    grid = GridSpec((0, 0), dc / 2, 256, 256)
    f = generate_shadowing(grid, 6.0, dc, seed=11)
    for lag_cells, d in ((1, dc / 2), (2, dc), (4, 2 * dc)):
        a = np.concatenate([f[:, :-lag_cells].ravel(), f[:-lag_cells, :].ravel()])
        b = np.concatenate([f[:, lag_cells:].ravel(), f[lag_cells:, :].ravel()])
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr - np.exp(-d / dc)) < 0.05, f"lag {d} m"


def test_shadowing_exact_and_fft_paths_agree_statistically():
    grid = GridSpec((0, 0), 10.0, 20, 20)
    ex = np.stack([generate_shadowing(grid, 6.0, 25.0, seed=k, method="exact")
                   for k in range(200)])
    ff = np.stack([generate_shadowing(grid, 6.0, 25.0, seed=k, method="fft")
                   for k in range(200)])
    assert abs(ex.std() - ff.std()) < 0.3


def test_shadowing_exact_resource_limit():
    grid = GridSpec((0, 0), 10.0, 200, 200)  # 40000 cells -> 12.8 GB covariance
    with pytest.raises(ShadowingResourceError):
        generate_shadowing(grid, 6.0, 25.0, seed=0, method="exact")


# ---------------------------------------------------------------- path loss

def test_path_loss_at_one_meter_is_intercept():
    budget = LinkBudget()
    a = 32.4 + 20.0 * np.log10(3.5)
    assert path_loss_db(1.0, budget) == pytest.approx(a, rel=1e-12)


def test_path_loss_doubling_distance():
    budget = LinkBudget()
    step = 21.0 * np.log10(2.0)
    for d in (2.0, 10.0, 137.0):
        assert path_loss_db(2 * d, budget) - path_loss_db(d, budget) == \
            pytest.approx(step, rel=1e-12)


def test_path_loss_reference_value_100m():
    assert path_loss_db(100.0, LinkBudget()) == pytest.approx(85.28136088700552, abs=1e-9)


def test_path_loss_clamps_below_one_meter():
    budget = LinkBudget()
    assert path_loss_db(0.2, budget) == path_loss_db(1.0, budget)


def test_path_loss_monotone():
    budget = LinkBudget()
    d = np.linspace(1.0, 2000.0, 500)
    pl = path_loss_db(d, budget)
    assert np.all(np.diff(pl) >= 0)


# ------------------------------------------------------------- ground truth

def make_grid():
    return GridSpec((0.0, 0.0), 10.0, 60, 60)


def test_single_bs_sinr_decreases_with_distance():
    budget = LinkBudget(shadowing_std_db=0.0)
    layout = BsLayout(positions=((5.0, 5.0),))
    rem = ground_truth_rem(layout, budget, make_grid(), seed=0, interference=False)
    row = rem.sinr[0, :]  # walking away from the BS along y=5
    assert np.all(np.diff(row) < 0)


def test_sinr_difference_equals_path_loss_difference_without_shadowing():
    budget = LinkBudget(shadowing_std_db=0.0)
    layout = BsLayout(positions=((5.0, 5.0),))
    rem = ground_truth_rem(layout, budget, make_grid(), seed=0, interference=False)
    dh = budget.antenna_height_delta_m
    d_a = np.hypot(np.hypot(5.0 - 5.0, 5.0 - 5.0), dh)
    d_b = np.hypot(np.hypot(305.0 - 5.0, 5.0 - 5.0), dh)
    expected = path_loss_db(d_b, budget) - path_loss_db(d_a, budget)
    got = rem.lookup((5.0, 5.0)) - rem.lookup((305.0, 5.0))
    assert got == pytest.approx(expected, rel=1e-12)


def test_two_bs_cell_matches_scalar_rederivation():
    # Hand-computed link budget for one cell of a two-BS layout.
    budget = LinkBudget(shadowing_std_db=0.0)
    layout = BsLayout(positions=((0.0, 0.0), (600.0, 0.0)))
    rem = ground_truth_rem(layout, budget, make_grid(), seed=0, interference=True)
    x, y = 295.0, 5.0  # a cell center close to the midpoint between the BSs
    dh = 25.0 - 1.5
    pl1 = 32.4 + 20 * np.log10(3.5) + 21 * np.log10(np.hypot(np.hypot(x, y), dh))
    pl2 = 32.4 + 20 * np.log10(3.5) + 21 * np.log10(np.hypot(np.hypot(600 - x, y), dh))
    rx1, rx2 = 23.0 - pl1, 23.0 - pl2
    noise_mw = 10 ** ((-174 + 10 * np.log10(3.6e6) + 6.0) / 10)
    sinr = rx1 - 10 * np.log10(noise_mw + 10 ** (rx2 / 10))
    assert rem.lookup((x, y)) == pytest.approx(sinr, rel=1e-12)


def test_ground_truth_deterministic():
    budget = LinkBudget()
    layout = BsLayout.lattice((0, 0), (600, 600), 600.0)
    a = ground_truth_rem(layout, budget, make_grid(), seed=3)
    b = ground_truth_rem(layout, budget, make_grid(), seed=3)
    assert np.array_equal(a.sinr, b.sinr)


def test_grid_lookup_edges_and_out_of_bounds():
    rem = SinrGrid((0, 0), 10.0, np.arange(4.0).reshape(2, 2), "ground_truth")
    assert rem.lookup((0.0, 0.0)) == 0.0
    assert rem.lookup((20.0, 20.0)) == 3.0  # closed far edge folds into last cell
    with pytest.raises(OutOfBoundsError):
        rem.lookup((20.01, 5.0))
    with pytest.raises(OutOfBoundsError):
        rem.lookup((-0.5, 5.0))


# --------------------------------------------------------------------- GPR

def constant_prior(value=-3.0, width=10, height=10, cell=10.0):
    return SinrGrid((0, 0), cell, np.full((height, width), value), "ground_truth")


def test_gpr_interpolates_measurements_exactly():
    prior = constant_prior()
    meas = [Measurement((15.0, 25.0), 4.0),
            Measurement((75.0, 35.0), -9.0),
            Measurement((45.0, 85.0), 1.5)]
    est = estimate_rem_gpr(prior, meas, std_db=6.0, decorrelation_m=25.0)
    assert est.kind == "estimated"
    for m in meas:
        assert abs(est.lookup(m.position) - m.sinr_db) <= 1e-9


def test_gpr_posterior_matches_dense_solve_oracle():
    # Independent 3x3 linear-solve oracle on a 10x10 toy grid.
    prior = constant_prior(value=2.0)
    meas = [Measurement((15.0, 15.0), 5.0),
            Measurement((55.0, 25.0), -1.0),
            Measurement((35.0, 75.0), 3.0)]
    std, dc = 6.0, 25.0
    est = estimate_rem_gpr(prior, meas, std_db=std, decorrelation_m=dc)

    pos = np.array([m.position for m in meas])
    resid = np.array([m.sinr_db for m in meas]) - 2.0
    k = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            k[i, j] = std ** 2 * np.exp(-np.linalg.norm(pos[i] - pos[j]) / dc)
    w = np.linalg.solve(k, resid)
    centers = prior.spec.cell_centers()
    expect = np.full(100, 2.0)
    for i in range(3):
        expect += w[i] * std ** 2 * np.exp(-np.linalg.norm(centers - pos[i], axis=1) / dc)
    assert np.allclose(est.sinr.ravel(), expect, atol=1e-6)


def test_gpr_reverts_to_prior_far_from_measurements():
    grid = GridSpec((0, 0), 10.0, 40, 40)
    layout = BsLayout(positions=((5.0, 5.0),))
    budget = LinkBudget(shadowing_std_db=6.0)
    prior = path_loss_prior_rem(layout, budget, grid, interference=False)
    meas = [Measurement((15.0, 15.0), prior.lookup((15.0, 15.0)) + 8.0),
            Measurement((35.0, 25.0), prior.lookup((35.0, 25.0)) - 4.0)]
    est = estimate_rem_gpr(prior, meas, std_db=6.0, decorrelation_m=25.0)
    far = (395.0, 395.0)  # > 10 decorrelation distances from every measurement
    assert abs(est.lookup(far) - prior.lookup(far)) < 0.1


def test_gpr_zero_measurements_returns_prior():
    prior = constant_prior(value=-7.25)
    est = estimate_rem_gpr(prior, [], std_db=6.0, decorrelation_m=25.0)
    assert est.kind == "estimated"
    assert np.array_equal(est.sinr, prior.sinr)


def test_gpr_duplicate_positions_rejected():
    prior = constant_prior()
    meas = [Measurement((15.0, 15.0), 1.0), Measurement((15.0, 15.0), 2.0)]
    with pytest.raises(ValueError):
        estimate_rem_gpr(prior, meas, std_db=6.0, decorrelation_m=25.0)


def test_sample_measurements_covers_sectors_and_is_deterministic():
    grid = make_grid()
    layout = BsLayout.lattice((0, 0), (600, 600), 600.0)
    truth = ground_truth_rem(layout, LinkBudget(), grid, seed=5)
    m1 = sample_measurements(truth, layout, n_per_sector=10, seed=9)
    m2 = sample_measurements(truth, layout, n_per_sector=10, seed=9)
    assert m1 == m2
    positions = {m.position for m in m1}
    assert len(positions) == len(m1)  # no duplicates
    for m in m1:
        assert truth.lookup(m.position) == m.sinr_db


# ------------------------------------------------------------------ bitrate

def test_bitrate_zero_below_table_floor():
    table = BitrateTable.truncated_shannon()
    assert sinr_to_bitrate(-5.001, 3.6e6, table) == 0.0
    assert sinr_to_bitrate(-40.0, 3.6e6, table) == 0.0


def test_bitrate_truncated_shannon_reference_point():
    table = BitrateTable.truncated_shannon()
    assert sinr_to_bitrate(0.0, 3.6e6, table) == pytest.approx(2.7e6, rel=1e-12)


def test_bitrate_monotone_non_decreasing():
    table = BitrateTable.truncated_shannon()
    s = np.linspace(-30.0, 50.0, 2000)
    rates = sinr_to_bitrate(s, 3.6e6, table)
    assert np.all(np.diff(rates) >= 0)
    assert np.all(rates >= 0)


def test_bitrate_capped_at_high_sinr():
    table = BitrateTable.truncated_shannon()
    assert sinr_to_bitrate(60.0, 1.0, table) == pytest.approx(7.4)


def test_bitrate_at_cell_center_equals_cell_value():
    rem = SinrGrid((0, 0), 10.0, np.full((3, 3), 10.0), "ground_truth")
    table = BitrateTable.truncated_shannon()
    direct = sinr_to_bitrate(10.0, 3.6e6, table)
    assert bitrate_at(rem, (15.0, 15.0), 3.6e6, table) == direct
    # uniform grid: same bitrate everywhere
    for pos in ((1.0, 1.0), (29.0, 2.0), (15.0, 25.0)):
        assert bitrate_at(rem, pos, 3.6e6, table) == direct


def test_bitrate_table_validation():
    with pytest.raises(ValueError):
        BitrateTable([0.0, 0.0], [1.0, 2.0])  # non-increasing sinr
    with pytest.raises(ValueError):
        BitrateTable([0.0, 1.0], [2.0, 1.0])  # decreasing efficiency


# ------------------------------------------------------------------- files

def test_rem_raster_round_trip(tmp_path):
    grid = GridSpec((0, 0), 10.0, 12, 9)
    layout = BsLayout(positions=((5.0, 5.0),))
    rem = ground_truth_rem(layout, LinkBudget(), grid, seed=21)
    p1 = tmp_path / "rem.txt"
    p2 = tmp_path / "rem2.txt"
    rem.save(p1)
    loaded = SinrGrid.load(p1)
    assert loaded.kind == rem.kind
    assert loaded.origin == rem.origin
    assert loaded.cell_size_m == rem.cell_size_m
    assert np.allclose(loaded.sinr, rem.sinr, atol=5e-7)  # 6-decimal quantization
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()  # stable after one round trip


def test_bitrate_table_round_trip_exact(tmp_path):
    table = BitrateTable.truncated_shannon()
    path = tmp_path / "table.txt"
    table.save(path)
    loaded = BitrateTable.load(path)
    assert np.array_equal(loaded.sinr_db, table.sinr_db)
    assert np.array_equal(loaded.efficiency, table.efficiency)
