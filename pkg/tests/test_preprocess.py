import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from difflstm import dynamics as dy
from difflstm.dynamics import Series
from difflstm.errors import ParameterError, ShapeError
from difflstm.preprocess import (EmbeddingSpec, SavGolSpec, WindowedDataset, apply_scale, build_windows,
                                 false_nearest_neighbors, fit_scale, read_csv_columns, read_series_csv,
                                 savgol_derivative_coeffs, savitzky_golay_derivative, scale_dataset,
                                 split_train_test, unscale)


# -- scaling -----------------------------------------------------------------

def test_fit_scale_maps_range_onto_target():
    p = fit_scale(np.array([2.0, 4.0, 10.0]))
    np.testing.assert_allclose(apply_scale(p, [2.0, 6.0, 10.0]), [-0.5, 0.0, 0.5])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.floats(-5, 5), st.floats(0.1, 5))
def test_scale_roundtrip(xs, lo, width):
    x = np.array(xs)
    if np.ptp(x) < 1e-6:
        return
    p = fit_scale(x, lo, lo + width)
    np.testing.assert_allclose(unscale(p, apply_scale(p, x)), x, rtol=1e-9, atol=1e-9)


def test_scale_accepts_series_and_rejects_constant():
    s = Series([1.0, 3.0], 1.0)
    out = apply_scale(fit_scale(s), s)
    assert isinstance(out, Series) and out.values.tolist() == [-0.5, 0.5]
    with pytest.raises(ParameterError):
        fit_scale(np.ones(4))


# -- Savitzky-Golay ----------------------------------------------------------

def _pinv_row(window, order, dt):
    m = window // 2
    k = np.arange(-m, m + 1) * dt
    return np.linalg.pinv(np.vander(k, order + 1, increasing=True))[1]


def test_savgol_coefficients_match_least_squares_and_classical_stencil():
    np.testing.assert_allclose(savgol_derivative_coeffs(5, 3), np.array([1, -8, 0, 8, -1]) / 12, atol=1e-14)
    for window, order, dt in [(5, 3, 0.1), (7, 2, 1.0), (9, 4, 0.5)]:
        np.testing.assert_allclose(savgol_derivative_coeffs(window, order, dt),
                                   _pinv_row(window, order, dt), atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.01, 1.0), st.integers(5, 60))
def test_savgol_exact_on_cubics(coef, dt, n):
    t = np.arange(n) * dt
    a0, a1, a2, a3 = coef
    x = a0 + a1 * t + a2 * t**2 + a3 * t**3
    exact = a1 + 2 * a2 * t + 3 * a3 * t**2
    scale = max(1.0, np.max(np.abs(exact)))
    mirror = savitzky_golay_derivative(Series(x, dt), SavGolSpec(5, 3, dt)).values
    assert np.max(np.abs(mirror - exact)[2:-2]) <= 1e-8 * scale
    fit = savitzky_golay_derivative(Series(x, dt), SavGolSpec(5, 3, dt, edge="fit")).values
    assert np.max(np.abs(fit - exact)) <= 1e-8 * scale


def test_savgol_linear_exact_everywhere():
    dt = 0.05
    x = 3 * np.arange(30) * dt
    for edge in ("mirror", "fit"):
        d = savitzky_golay_derivative(Series(x, dt), SavGolSpec(5, 3, dt, edge)).values
        np.testing.assert_allclose(d, 3.0, atol=1e-10)


def test_savgol_mirror_edge_keeps_length_and_slope():
    dt = 0.1
    t = np.arange(50) * dt
    d = savitzky_golay_derivative(Series(np.sin(t), dt)).values
    assert d.shape == t.shape
    # point reflection keeps the end slope close to the true one
    assert abs(d[0] - 1.0) < 0.01


def test_savgol_beats_first_differences_on_noise():
    x = np.random.default_rng(4).standard_normal(10_000)
    sg = savitzky_golay_derivative(Series(x, 1.0)).values[2:-2]
    assert np.var(sg) < np.var(np.diff(x))


def test_savgol_validation():
    with pytest.raises(ParameterError):
        SavGolSpec(4, 2)
    with pytest.raises(ParameterError):
        SavGolSpec(5, 5)
    with pytest.raises(ParameterError):
        savitzky_golay_derivative(Series([1.0, 2.0, 3.0], 1.0), SavGolSpec(5, 3))
    with pytest.raises(ParameterError):
        SavGolSpec(edge="wrap")


# -- windows -----------------------------------------------------------------

def _windows_oracle(x, xd, D, T, H):
    N = len(x) - 1
    M = N - (D - 1) * T - H
    X, Xd, Y, Yd = [], [], [], []
    for t in range(M + 1):
        X.append([x[t + j * T] for j in range(D)])
        Xd.append([xd[t + j * T] for j in range(D - 1)])
        Y.append([x[t + (D - 1) * T + k] for k in range(1, H + 1)])
        Yd.append([xd[t + (D - 2) * T + k] for k in range(1, H + 1)])
    return [np.array(a) for a in (X, Xd, Y, Yd)]


@settings(max_examples=60)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(1, 5), st.integers(0, 20))
def test_windows_match_loop_oracle(D, T, H, extra):
    n = (D - 1) * T + H + 1 + extra
    x = np.arange(n, dtype=float)
    xd = 1000.0 + np.arange(n)
    ds = build_windows(x, xd, EmbeddingSpec(D, T, H))
    for got, want in zip((ds.X, ds.Xd, ds.Y, ds.Yd), _windows_oracle(x, xd, D, T, H)):
        np.testing.assert_array_equal(got, want)
    assert len(ds) == extra + 1
    # differential targets never reach past x'[N - T]
    assert ds.Yd.max() <= 1000.0 + (n - 1) - T


def test_window_too_short_and_length_mismatch():
    spec = EmbeddingSpec(5, 1, 10)
    assert spec.min_length() == 15
    build_windows(np.zeros(15), np.zeros(15), spec)
    with pytest.raises(ParameterError):
        build_windows(np.zeros(14), np.zeros(14), spec)
    with pytest.raises(ShapeError):
        build_windows(np.zeros(20), np.zeros(19), spec)
    with pytest.raises(ParameterError):
        EmbeddingSpec(1, 1, 1)


def test_split_is_chronological_floor():
    x = np.arange(30, dtype=float)
    ds = build_windows(x, x, EmbeddingSpec(3, 1, 2))
    tr, te = split_train_test(ds, 0.6)
    assert len(ds) == 26 and len(tr) == 15 and len(te) == 11
    assert tr.X[-1, 0] + 1 == te.X[0, 0]
    assert te.start == 15
    with pytest.raises(ParameterError):
        split_train_test(ds, 1.0)


def test_split_fraction_exact_products():
    # 0.7 * 10 and 0.3 * 10 are not exact in binary
    x = np.arange(13, dtype=float)
    ds = build_windows(x, x, EmbeddingSpec(2, 1, 2))
    assert len(ds) == 10
    assert len(split_train_test(ds, 0.7)[0]) == 7
    assert len(split_train_test(ds, 0.3)[0]) == 3


def test_scale_dataset_uses_separate_maps():
    x = np.linspace(0, 1, 20)
    ds = build_windows(x, 100 * x, EmbeddingSpec(3, 1, 2))
    vs, dsc = fit_scale(x), fit_scale(100 * x)
    scaled = scale_dataset(ds, vs, dsc)
    np.testing.assert_allclose(scaled.X, apply_scale(vs, ds.X))
    np.testing.assert_allclose(scaled.Yd, apply_scale(dsc, ds.Yd))


def test_dataset_dict_roundtrip():
    x = np.linspace(0, 1, 20)
    ds = build_windows(x, np.cos(x), EmbeddingSpec(4, 2, 3))
    back = WindowedDataset.from_dict(ds.to_dict())
    for name in ("X", "Xd", "Y", "Yd"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
    assert back.spec == ds.spec


# -- false nearest neighbours -----------------------------------------------

def test_fnn_on_lorenz_picks_low_dimension():
    v, _ = dy.generate("lorenz", n_samples=3000, sample_every=10)
    res = false_nearest_neighbors(v, lag=1, d_max=8)
    assert res.converged and res.dimension in (3, 4, 5)
    assert res.fractions[0] > 0.5


def test_fnn_on_circle_is_two():
    t = np.arange(2000) * 0.37
    res = false_nearest_neighbors(np.sin(t), lag=4, d_max=5)
    assert res.dimension == 2


def test_fnn_noise_never_converges_and_warns():
    x = np.random.default_rng(0).standard_normal(800)
    with pytest.warns(RuntimeWarning):
        res = false_nearest_neighbors(x, d_max=3)
    assert not res.converged and res.dimension == 3


def test_fnn_short_series():
    with pytest.raises(ParameterError):
        false_nearest_neighbors(np.arange(5.0), d_max=10)


# -- CSV ---------------------------------------------------------------------

def test_csv_reader_skips_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("value,differential\n1.5,0.1\n2.5,0.2\n\n")
    v, d = read_csv_columns(p, (0, 1))
    assert v.tolist() == [1.5, 2.5] and d.tolist() == [0.1, 0.2]
    s = read_series_csv(p, column=1, dt=0.5)
    assert s.dt == 0.5 and s.name == "s"
    with pytest.raises(ParameterError):
        read_csv_columns(p, (2,))


def test_window_count_and_alignment_on_a_ramp():
    x = np.arange(21.0)
    xd = 100.0 + x
    ds = build_windows(x, xd, EmbeddingSpec(5, 1, 10))
    assert len(ds) == 7 and ds.M == 6
    np.testing.assert_array_equal(ds.X[0], [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(ds.Y[0], np.arange(5, 15))
    assert ds.Xd.shape[1] == 4
    np.testing.assert_array_equal(ds.Yd[0], [xd[3 + k] for k in range(1, 11)])


@pytest.mark.parametrize("n, n_train", [(10, 6), (7, 4)])
def test_split_sizes(n, n_train):
    x = np.arange(n + 14.0)
    train, test = split_train_test(build_windows(x, x, EmbeddingSpec(5, 1, 10)), 0.6)
    assert (len(train), len(test)) == (n_train, n - n_train)
    assert train.X[-1, 0] < test.X[0, 0]


def test_fit_scale_on_zero_to_ten():
    p = fit_scale(np.array([0.0, 10.0]))
    np.testing.assert_allclose(apply_scale(p, [0.0, 5.0, 10.0]), [-0.5, 0.0, 0.5], atol=1e-15)
