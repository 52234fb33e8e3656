import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import khatri_rao

from sdmimo import (
    AoaGainEstimator,
    ArrayGeometry,
    ChannelSamplerSpec,
    SuChannelParams,
    SuScenario,
    UplinkLink,
    bartlett_spectrum,
    bisect_aod,
    design_codebook,
    estimate_su_channel,
    find_peaks,
    gain_wls,
    path_energy,
    sample_su_channel,
    steering_bs,
    steering_ue,
    su_channel_matrix,
)
from sdmimo.channel import bs_manifold, ue_manifold
from sdmimo.estimator import (
    RankDeficiencyWarning,
    _cached_codebook,
    aoa_grid,
    aod_grid,
    clip_level_step1,
    clip_level_step2,
    run_step1,
    step1_precoder,
)
from sdmimo.exceptions import ConfigurationError
from sdmimo.noisemodel import prewhitener

deg = np.deg2rad


def test_grids():
    a = aoa_grid()
    assert a.size == 181 and np.all(np.diff(a) > 0)
    assert a[0] == pytest.approx(-np.pi / 2) and a[90] == 0.0
    d = aod_grid(128)
    np.testing.assert_allclose(np.sin(d), -1 + 2 * np.arange(128) / 127, atol=1e-12)
    with pytest.raises(ConfigurationError):
        aod_grid(100)


def test_step1_precoder():
    p = step1_precoder(4)
    np.testing.assert_array_equal(p, [1, 0, 0, 0])
    assert steering_ue(deg(37), 4).conj() @ p == pytest.approx(1.0)


@pytest.mark.parametrize("P, expected", [(1.0, 3.0), (0.0, 3 / np.sqrt(2))])
def test_clip_level_step1(P, expected):
    assert clip_level_step1(P) == pytest.approx(expected)


def test_clip_level_step2():
    assert clip_level_step2(1.0, 32) == pytest.approx(12.186, abs=1e-3)


def test_bartlett_examples():
    grid = aoa_grid()
    Y = np.repeat(steering_bs(0.0, 128)[:, None], 10, axis=1)
    assert np.argmax(bartlett_spectrum(Y, grid)) == 90
    np.testing.assert_array_equal(bartlett_spectrum(np.zeros((128, 3)), grid), np.zeros(181))
    Y2 = np.repeat((steering_bs(deg(-20), 128) + steering_bs(deg(25), 128))[:, None], 10, axis=1)
    idx = find_peaks(bartlett_spectrum(Y2, grid), 2)
    np.testing.assert_array_equal(idx, [70, 115])


def test_find_peaks_examples():
    np.testing.assert_array_equal(find_peaks([0, 1, 3, 2, 0], 1), [2])
    np.testing.assert_array_equal(find_peaks([1, 1, 0], 1), [0])  # plateau: lowest index
    np.testing.assert_array_equal(find_peaks([0, 5, 0, 0, 3, 0], 2), [1, 4])
    np.testing.assert_array_equal(find_peaks([0, 1, 2, 3], 2), [2, 3])  # fill
    with pytest.raises(ConfigurationError):
        find_peaks([1, 2], 3)


@given(st.lists(st.floats(0, 1e3), min_size=3, max_size=60), st.integers(1, 3))
def test_find_peaks_properties(spec, L):
    L = min(L, len(spec))
    idx = find_peaks(spec, L)
    assert len(idx) == L == len(set(idx.tolist()))
    assert np.all(np.diff(idx) > 0)


def literal_wls(Y, aoas, P, W):
    """Khatri-Rao form of the whitened least-squares problem."""
    L = len(aoas)
    n, T = Y.shape
    E = np.ones((L, T))
    Psi = khatri_rao(E.T, np.sqrt(P / L) * W @ bs_manifold(aoas, n))
    return np.linalg.lstsq(Psi, (W @ Y).reshape(-1, order="F"), rcond=None)[0]


def test_gain_wls_examples():
    P = 2.0
    a = steering_bs(deg(12), 64)
    alpha = np.array([0.6 - 0.8j])
    Y = np.repeat((np.sqrt(P) * alpha[0] * a)[:, None], 10, axis=1)
    est, bad = gain_wls(Y, [deg(12)], P, d=0.125)
    np.testing.assert_allclose(est, alpha, atol=1e-10)
    assert not bad
    np.testing.assert_array_equal(gain_wls(np.zeros((64, 4)), [0.1], P)[0], [0])
    alpha2 = np.array([1 + 1j, -0.5 + 2j])
    th = deg(np.array([-20.0, 25.0]))
    Y2 = np.repeat((np.sqrt(P / 2) * bs_manifold(th, 64) @ alpha2)[:, None], 5, axis=1)
    np.testing.assert_allclose(gain_wls(Y2, th, P)[0], alpha2, atol=1e-8)


def test_gain_wls_equals_khatri_rao_and_factor_invariance():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    R = A @ A.conj().T / 32 + np.eye(32)
    W = prewhitener(R)
    Y = rng.standard_normal((32, 7)) + 1j * rng.standard_normal((32, 7))
    th = deg(np.array([-30.0, 5.0, 40.0]))
    fast, _ = gain_wls(Y, th, 3.0, W)
    np.testing.assert_allclose(fast, literal_wls(Y, th, 3.0, W), atol=1e-8)
    # any factor with F^H F = R^-1 gives the same answer
    F = np.linalg.cholesky(np.linalg.inv(R)).conj().T
    np.testing.assert_allclose(gain_wls(Y, th, 3.0, F)[0], fast, atol=1e-8)


def test_gain_wls_rank_deficiency():
    Y = np.ones((16, 2), dtype=complex)
    with pytest.warns(RankDeficiencyWarning):
        gains, bad = gain_wls(Y, [0.0, 0.0], 1.0)
    assert bad and np.all(np.isfinite(gains))


def test_codebook_properties():
    cb = _cached_codebook(32, 128)
    assert cb.n_stages == 7 and not cb.regularized
    for s, P in enumerate(cb.precoders, start=1):
        assert P.shape == (32, 2**s)
        np.testing.assert_allclose(np.linalg.norm(P, axis=0), 1, atol=1e-12)
    A = ue_manifold(cb.grid, 32)
    resp = np.abs(A.conj().T @ cb.precoders[-1])
    assert np.mean(np.argmax(resp, axis=1) == np.arange(128)) >= 0.95
    # beampattern power of the first stage
    r1 = np.abs(A.conj().T @ cb.precoders[0]) ** 2
    inside = np.r_[r1[:64, 0], r1[64:, 1]].mean()
    outside = np.r_[r1[64:, 0], r1[:64, 1]].mean()
    assert inside >= 3 * outside
    np.testing.assert_array_equal(cb.partition(2, 3), np.arange(96, 128))
    with pytest.raises(ConfigurationError):
        design_codebook(32, aod_grid(16))


def test_path_energy_examples():
    assert path_energy(np.zeros((16, 2)), 0.1) == 0.0
    P, L, n, T = 2.0, 1, 64, 3
    alpha, rho, th = 0.7j, 0.4 + 0.1j, deg(15)
    Y = np.repeat((np.sqrt(P / L) * alpha * rho * steering_bs(th, n))[:, None], T, axis=1)
    assert path_energy(Y, th) == pytest.approx(abs(np.sqrt(P * n / L) * alpha * rho) ** 2)
    assert path_energy(2 * Y, th) > path_energy(Y, th)


def test_bisection_noiseless_all_grid_points():
    """Every interior on-grid AoD is found.

    The endpoints are excluded: +-90 deg lie outside the channel model and have
    identical UE responses.
    """
    from sdmimo.adc import Unquantized

    g = ArrayGeometry()
    cb = _cached_codebook(32, 128)
    th = deg(10)
    found = []
    for j in range(1, 127):
        H = su_channel_matrix(SuChannelParams([th], [cb.grid[j]], [1.0]), g)
        link = UplinkLink(H, 1.0, noiseless=True)
        idx = bisect_aod(lambda p: link.transmit(p, Unquantized()), th, cb)
        found.append(idx == j)
        assert link.channel_uses == 2 * 7
    assert all(found)


def test_bisection_tie_break_and_scaling():
    cb = _cached_codebook(32, 128)
    assert bisect_aod(lambda p: np.ones((128, 1)), 0.0, cb) == 0
    rng = np.random.default_rng(1)
    Z = {}

    def oracle(p, scale):
        key = p.tobytes()
        if key not in Z:
            Z[key] = rng.standard_normal((128, 1)) + 1j * rng.standard_normal((128, 1))
        return scale * Z[key]

    assert bisect_aod(lambda p: oracle(p, 1.0), 0.2, cb) == bisect_aod(lambda p: oracle(p, 7.0), 0.2, cb)


def test_step1_independent_of_aods():
    g = ArrayGeometry()
    sc = SuScenario(geometry=g, snr=1.0, n_paths=2, front_end="sigmadelta")
    outs = []
    for aods in ([0.1, -0.5], [0.9, 0.3]):
        H = su_channel_matrix(SuChannelParams(deg([-15.0, 20.0]), aods, [1.0, 1j]), g)
        link = UplinkLink(H, 1.0, np.random.default_rng(5))
        outs.append(run_step1(link, sc))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    np.testing.assert_allclose(outs[0][1], outs[1][1], atol=1e-12)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_noiseless_consistency(L):
    g = ArrayGeometry()
    spec = ChannelSamplerSpec(aoa_sector=(deg(-30), deg(30)), gain_model="truncated_gaussian",
                              aod_grid=aod_grid(128), aoa_grid=aoa_grid())
    rng = np.random.default_rng(L)
    for _ in range(10):
        p = sample_su_channel(spec, L, rng)
        H = su_channel_matrix(p, g)
        sc = SuScenario(geometry=g, snr=10.0, n_paths=L, front_end="unquantized")
        link = UplinkLink(H, 10.0, noiseless=True)
        est = estimate_su_channel(link, sc)
        assert np.linalg.norm(est.H - H) ** 2 / np.linalg.norm(H) ** 2 < 1e-6
        assert link.channel_uses == sc.total_pilots == 10 + 2 * L * 7


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 20), st.sampled_from([16, 64, 128]))
def test_pilot_accounting(L, t2, t1, D):
    g = ArrayGeometry(n_bs=32, n_ue=16)
    spec = ChannelSamplerSpec(aoa_sector=(deg(-60), deg(60)))
    rng = np.random.default_rng(L * 100 + t2)
    p = sample_su_channel(spec, L, rng)
    sc = SuScenario(geometry=g, snr=1.0, n_paths=L, t1=t1, t2=t2, n_aod_grid=D)
    link = UplinkLink(su_channel_matrix(p, g), 1.0, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        estimate_su_channel(link, sc)
    assert link.channel_uses == t1 + 2 * L * t2 * int(np.log2(D))


def test_determinism():
    g = ArrayGeometry()
    p = SuChannelParams([0.1], [0.3], [1j])
    H = su_channel_matrix(p, g)
    sc = SuScenario(geometry=g, snr=1.0)
    a = estimate_su_channel(UplinkLink(H, 1.0, np.random.default_rng(9)), sc)
    b = estimate_su_channel(UplinkLink(H, 1.0, np.random.default_rng(9)), sc)
    assert a.H.tobytes() == b.H.tobytes()


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        SuScenario(n_aod_grid=100)
    with pytest.raises(ConfigurationError):
        SuScenario(front_end="fourbit")
    with pytest.raises(ConfigurationError):
        SuScenario(step2_clip="other")
    assert SuScenario(snr=1.0, step2_clip="step1").clip_levels() == (3.0, 3.0)


def test_aoa_gain_estimator_api():
    from sklearn.base import clone

    g = ArrayGeometry()
    H = su_channel_matrix(SuChannelParams([deg(7)], [0.0], [0.6 + 0.8j]), g)
    X = np.repeat((np.sqrt(4.0) * H[:, 0])[None, :], 10, axis=0)  # snapshots x antennas
    est = AoaGainEstimator(n_paths=1, snr=4.0).fit(X)
    assert est.aoas_[0] == pytest.approx(deg(7))
    np.testing.assert_allclose(est.gains_, [0.6 + 0.8j], atol=1e-10)
    assert est.get_params()["n_paths"] == 1
    assert clone(est).set_params(n_paths=2).n_paths == 2
    assert est.score(X) == pytest.approx(1.0)
    assert est.score(X + 1.0) < 1.0
