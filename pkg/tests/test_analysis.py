import numpy as np
import pytest

from nhssb import ConfigError, ModelParams
from nhssb import analysis, exact, mc, oracles
from nhssb.analysis import ObservableSeries, ScanMode


def test_series_validation():
    with pytest.raises(ConfigError):
        ObservableSeries("T", [1, 2], [1.0], [0.0], 8, "x")
    with pytest.raises(ConfigError):
        ObservableSeries("T", [1], [1.0], [-0.1], 8, "x")
    s = ObservableSeries("T", [1, 2], [3, 4], None, 8, "x")
    assert len(s) == 2 and s.rows()[1] == {"T": 2.0, "mean": 4.0, "err": 0.0, "L": 8, "tag": "x"}


@pytest.mark.parametrize("beta", [0.5, 2.0, 10.0, 20.0])
def test_fluctuation_cv_equals_energy_derivative(beta):
    p = ModelParams(L=16, U_re=0.4, J=0.05, beta=beta)
    cv = analysis.specific_heat(None, p)[0]
    num = analysis.energy_derivative_cv(p)
    assert cv == pytest.approx(num, rel=1e-4)


def test_plain_centred_difference_at_moderate_temperature():
    p = ModelParams(L=16, U_re=0.4, beta=2.0)
    num = analysis.energy_derivative_cv(p, dT=1e-3, richardson=False)
    assert analysis.specific_heat(None, p)[0] == pytest.approx(num, rel=1e-4)


def test_cv_vanishes_at_infinite_temperature():
    assert abs(analysis.specific_heat(None, ModelParams(L=12, J=0.3, beta=1e-5))[0]) < 1e-8


def test_decoupled_cv_is_ising_plus_free_fermions():
    p = ModelParams(L=14, U_re=0.0, J=0.4, beta=1.7)
    total = analysis.specific_heat(None, p)[0]
    free = analysis.specific_heat(None, p.replace(J=0.0))[0]
    assert total - free == pytest.approx(oracles.ising_chain_energy(14, 1.7, 0.4, True)[1], abs=1e-10)


def test_per_site_flag():
    p = ModelParams(L=10, beta=3.0)
    assert analysis.specific_heat(None, p, per_site=False)[0] == pytest.approx(
        10 * analysis.specific_heat(None, p)[0])


def test_mc_specific_heat_matches_exact():
    p = ModelParams(L=20, U_re=0.4, beta=6.0)
    res = mc.run_chain(mc.RunManifest(params=p, seed=3, n_therm=1000, n_sweeps=20_000, n_chains=4,
                                      full_every=0))
    cv, err = analysis.specific_heat(res, p)
    assert abs(cv - exact.exact_observables(p).specific_heat) < 3 * err
    assert analysis.specific_heat(analysis.samples_of(res), p)[0] == pytest.approx(cv)


def test_plateau_detection():
    axis = np.arange(12, dtype=float)
    w = np.array([0.01, -0.02, 0.03, 0.5, 1.97, 2.05, 1.95, 2.02, 3.2, 3.96, 4.01, 3.98])
    res = analysis.find_plateaus(ObservableSeries("beta", axis, w, None, 70, "w"))
    assert [(p.value, p.n_points) for p in res.plateaus] == [(0, 3), (2, 4), (4, 3)]
    assert res.transitions == [pytest.approx(3.0), pytest.approx(8.0)]


def test_plateau_needs_three_points():
    w = np.array([0.0, 0.02, 0.6, 2.0, 2.01])
    assert analysis.find_plateaus(ObservableSeries("T", np.arange(5.0), w, None, 8, "w")).plateaus == []


def test_exact_unsectored_winding_vanishes():
    s = analysis.exact_winding_series(ModelParams(L=30, U_re=0.4), [2, 6, 12, 20], sectored=False)
    assert np.max(np.abs(s.mean)) < 1e-10


def test_hermitian_control_has_no_winding():
    p = ModelParams(L=30, U_re=0.0, U_im=0.4)
    s = analysis.exact_winding_series(p, [2, 6, 12, 20])
    assert np.max(np.abs(s.mean)) < 1e-10


def test_winding_series_from_runs():
    p = ModelParams(L=16, U_re=0.4)
    runs = [mc.run_chain(mc.RunManifest(params=p.replace(beta=b), seed=1, n_therm=200, n_sweeps=2000,
                                        n_chains=2, full_every=50)) for b in (2.0, 8.0)]
    s = analysis.winding_series([2.0, 8.0], runs)
    assert s.tag == "winding_sector" and s.L == 16 and np.all(s.err >= 0)
    u = analysis.winding_series([2.0, 8.0], runs, sectored=False)
    assert np.all(np.abs(u.mean) <= 3 * u.err + 1e-12)


def test_correlations_ising_ring():
    L, K = 24, 0.8
    p = ModelParams(L=L, U_re=0.0, J=1.0, beta=K)
    res = mc.run_chain(mc.RunManifest(params=p, seed=5, n_therm=500, n_sweeps=16_000, n_chains=4,
                                      full_every=20))
    c = analysis.correlations(res)
    assert c.corr_x[0] == 1.0
    ref = oracles.ising_ring_correlation(L, K, c.r)
    assert np.all(np.abs(c.corr_x - ref) <= 4 * c.corr_x_err + 1e-12)


def test_correlations_disordered_versus_ordered():
    p = ModelParams(L=30, U_re=0.4)
    hot = mc.run_chain(mc.RunManifest(params=p.replace(beta=3.0), seed=1, n_therm=500, n_sweeps=10_000,
                                      n_chains=2, full_every=10))
    cold = mc.run_chain(mc.RunManifest(params=p.replace(beta=30.0), seed=1, n_therm=500, n_sweeps=10_000,
                                       n_chains=2, full_every=10))
    ch, cc = analysis.correlations(hot), analysis.correlations(cold)
    assert abs(ch.corr_x[-1]) < 0.05
    m = cold.estimates["abs_m"].mean
    assert cc.corr_x[-1] == pytest.approx(m * m, abs=0.1)


def test_correlations_need_full_measurements():
    p = ModelParams(L=8, beta=2.0)
    res = mc.run_chain(mc.RunManifest(params=p, seed=1, n_therm=10, n_sweeps=100, n_chains=1, full_every=0))
    with pytest.raises(ConfigError):
        analysis.correlations(res)


def test_histogram_symmetric_sample():
    rng = np.random.default_rng(0)
    v = rng.normal(size=500) + 1j * rng.normal(size=500)
    h = analysis.histogram_v(np.concatenate([v, -v]), bins=10)
    assert h.density.shape == (11, 11)
    assert h.symmetry_score == pytest.approx(0.0, abs=1e-12)
    assert h.density.sum() == pytest.approx(1.0)


def test_histogram_asymmetric_and_empty():
    h = analysis.histogram_v(np.array([1 + 1j] * 10 + [0.1j]), bins=5)
    assert h.symmetry_score > 1.5
    empty = analysis.histogram_v(np.array([np.nan + 0j]))
    assert empty.n_samples == 0 and empty.symmetry_score == 0.0


def test_histogram_modes():
    p = ModelParams(L=16, U_re=0.4)
    hot = mc.run_chain(mc.RunManifest(params=p.replace(beta=1.0), seed=2, n_therm=200, n_sweeps=4000,
                                      n_chains=2, full_every=0))
    cold = mc.run_chain(mc.RunManifest(params=p.replace(beta=20.0), seed=2, n_therm=200, n_sweeps=4000,
                                       n_chains=2, full_every=0))
    vh, vc = analysis.velocity_samples(hot), analysis.velocity_samples(cold)
    assert np.all(np.isfinite(vh))
    ext = float(np.max(np.abs(vc.imag)))
    hh = analysis.histogram_v(vh, bins=15, extent=ext)
    hc = analysis.histogram_v(vc, bins=15, extent=ext)
    centre = 7
    assert hh.density[centre, centre] > 0.5
    im_marginal = hc.density.sum(axis=0)
    assert im_marginal[centre] < 0.1
    assert im_marginal[:centre].sum() > 0.3 and im_marginal[centre + 1:].sum() > 0.3


def test_domain_walls_vanish_without_coupling():
    p = ModelParams(L=40, U_re=0.0)
    scan = analysis.domain_wall_scan(p, "fixed_L", r_values=range(1, 40))
    assert np.max(np.abs(scan.points[:, 1])) < 1e-10


def test_domain_wall_symmetry_and_sign():
    p = ModelParams(L=60, U_re=0.4)
    dE = {r: analysis.domain_wall_energy(p, r) for r in range(1, 60)}
    assert all(dE[r] == dE[60 - r] for r in range(1, 60))
    assert min(dE.values()) >= -1e-10


def test_domain_wall_pair_energy_dense_agrees():
    p = ModelParams(L=24, U_re=0.4)
    from nhssb.model import make_domain_wall_pair
    for r in (1, 5, 12):
        dense = analysis.ground_state_energy(p, make_domain_wall_pair(24, r))
        assert dense == pytest.approx(analysis.ground_state_energy(p, r), abs=1e-9)


def test_domain_wall_modes():
    p = ModelParams(L=64, U_re=0.4)
    fixed_l = analysis.domain_wall_scan(p, ScanMode.FIXED_L)
    assert fixed_l.points.shape == (63, 2) and fixed_l.fit.slope > 0
    fixed_r = analysis.domain_wall_scan(p, "fixed_r", L_values=[100, 200, 400], r=4)
    assert fixed_r.saturation == pytest.approx(fixed_r.points[-1, 1] - fixed_r.points[-2, 1])
    alpha = analysis.domain_wall_scan(p, "fixed_alpha", L_values=[40, 80, 120, 160], alpha=0.25)
    assert alpha.fit.r2 > 0.99 and alpha.fit.slope > 0
    with pytest.raises(ConfigError):
        analysis.domain_wall_scan(p, "fixed_r")
    with pytest.raises(ValueError):
        ScanMode.parse("sideways")
    with pytest.raises(ConfigError):
        analysis.domain_wall_energy(p, 64)


def test_locate_peak_parabola():
    x = np.linspace(0, 2, 21)
    s = ObservableSeries("beta", x, 3 - (x - 1.23) ** 2, None, 8, "cv")
    pk = analysis.locate_peak(s)
    assert pk.beta_peak == pytest.approx(1.23, abs=1e-9) and not pk.at_edge
    assert analysis.locate_peak(s, window=(0, 0.5)).at_edge


def test_betac_synthetic_drift():
    beta_c, c = 9.0, 40.0
    x = np.linspace(5, 15, 201)
    series = {}
    for L in (32, 48, 64, 70):
        peak = beta_c + c / L
        series[L] = ObservableSeries("beta", x, L * 0.05 * np.exp(-((x - peak) / 0.8) ** 2), None, L, "cv")
    est = analysis.betac_from_scaling(series)
    assert est.reliable
    assert est.beta_c == pytest.approx(beta_c, abs=max(3 * est.err, 0.01))


def test_betac_flags_no_sharpening():
    betas = np.linspace(0.2, 20, 40)
    series = [analysis.exact_series(ModelParams(L=L, U_re=0.0), betas, "specific_heat") for L in (16, 32, 48)]
    est = analysis.betac_from_scaling(series)
    assert not est.reliable
    assert not analysis.betac_from_scaling(series[:1]).reliable
