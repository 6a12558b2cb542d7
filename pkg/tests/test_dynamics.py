import math

import numpy as np
import pytest

from difflstm import dynamics as dy
from difflstm.errors import GenerationError, IntegrationError, ParameterError


def test_rk4_single_step_matches_taylor_polynomial():
    # for x' = x one RK4 step multiplies by the degree-4 Taylor polynomial of exp(dt)
    dt = 0.3
    out = dy.rk4_step(lambda t, y: y, np.array([1.0]), dt)
    assert out[0] == pytest.approx(1 + dt + dt**2 / 2 + dt**3 / 6 + dt**4 / 24, rel=1e-15)


def test_rk4_uses_time_argument():
    # x' = t has exact solution t^2/2, integrated exactly by RK4
    y = np.array([0.0])
    for n in range(10):
        y = dy.rk4_step(lambda t, s: np.array([t]), y, 0.1, t=n * 0.1)
    assert y[0] == pytest.approx(0.5, abs=1e-14)


def test_rk4_reports_failing_step():
    with pytest.raises(IntegrationError) as info, np.errstate(divide="ignore"):
        dy.rk4_step(lambda t, y: y / 0.0, np.array([1.0]), 0.1, step=42)
    assert info.value.step == 42


def _rk4_error(dt):
    y, steps = np.array([1.0]), int(round(1 / dt))
    for _ in range(steps):
        y = dy.rk4_step(lambda t, s: s, y, dt)
    return abs(y[0] - math.e)


def test_rk4_convergence_order():
    errs = [_rk4_error(h) for h in (0.1, 0.05, 0.025)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 3.9


def _mg_oracle(n, alpha=0.2, beta=-0.1, c=10.0, tau=17.0, dt=0.1, x0=1.2):
    """Plain-loop Mackey-Glass with zero history and interpolated half-step delays."""
    lag = round(tau / dt)
    xs = [x0]

    def hist(i):
        return xs[i] if i >= 0 else 0.0

    def f(x, d):
        return beta * x + alpha * d / (1 + d**c)

    for k in range(n - 1):
        x = xs[-1]
        a, b = hist(k - lag), hist(k - lag + 1)
        m = (a + b) / 2
        k1 = f(x, a)
        k2 = f(x + dt / 2 * k1, m)
        k3 = f(x + dt / 2 * k2, m)
        k4 = f(x + dt * k3, b)
        xs.append(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(xs)


def test_mackey_glass_matches_independent_loop():
    v, d = dy.generate_mackey_glass(dy.MackeyGlassParams(n_samples=600))
    ref = _mg_oracle(600)
    np.testing.assert_allclose(v.values, ref, rtol=0, atol=1e-13)
    delayed = np.array([ref[i - 170] if i >= 170 else 0.0 for i in range(600)])
    np.testing.assert_allclose(d.values, -0.1 * ref + 0.2 * delayed / (1 + delayed**10), atol=1e-13)


def test_mackey_glass_frozen_values():
    v, d = dy.generate("mackey-glass", n_samples=1000)
    assert v.values[300] == pytest.approx(0.7833089821915727, abs=1e-12)
    assert v.values[999] == pytest.approx(0.9413544217251868, abs=1e-12)
    assert d.values[999] == pytest.approx(-0.002244690615502365, abs=1e-12)


def test_lorenz_and_rossler_frozen_values():
    v, d = dy.generate("lorenz", n_samples=1000)
    assert v.values[999] == pytest.approx(-5.030890397187077, abs=1e-9)
    assert d.values[999] == pytest.approx(14.029255662556395, abs=1e-9)
    v, d = dy.generate("rossler", n_samples=1000)
    assert v.values[999] == pytest.approx(-7.045927446596963, abs=1e-9)
    assert d.values[999] == pytest.approx(-4.091775915292972, abs=1e-9)


def test_lorenz_first_step_by_hand():
    s, r, b, h = 10.0, 28.0, 8.0 / 3.0, 0.01

    def f(y):
        return np.array([s * (y[1] - y[0]), y[0] * (r - y[2]) - y[1], y[0] * y[1] - b * y[2]])

    y0 = np.ones(3)
    k1 = f(y0)
    k2 = f(y0 + h / 2 * k1)
    k3 = f(y0 + h / 2 * k2)
    k4 = f(y0 + h * k3)
    y1 = y0 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    v, d = dy.generate_lorenz(dy.LorenzParams(n_samples=2))
    assert v.values[0] == 1.0 and d.values[0] == 0.0
    assert v.values[1] == pytest.approx(y1[0], abs=1e-15)
    assert d.values[1] == pytest.approx(s * (y1[1] - y1[0]), abs=1e-13)


@pytest.mark.parametrize("system", ["mackey-glass", "lorenz", "rossler"])
def test_analytic_differential_matches_central_difference(system):
    v, d = dy.generate(system, n_samples=1500)
    x, xd = v.values[500:], d.values[500:]
    central = (x[2:] - x[:-2]) / (2 * v.dt)
    # error measured after mapping the differential onto a unit-width range
    span = xd.max() - xd.min()
    assert np.max(np.abs(central - xd[1:-1])) / span < 0.05


@pytest.mark.parametrize("system", ["mackey_glass", "lorenz", "rossler"])
def test_sampling_controls(system):
    full, dfull = dy.generate(system, n_samples=300)
    sub, dsub = dy.generate(system, n_samples=30, sample_every=10)
    np.testing.assert_array_equal(sub.values, full.values[::10])
    np.testing.assert_array_equal(dsub.values, dfull.values[::10])
    assert sub.dt == pytest.approx(10 * full.dt)
    late, _ = dy.generate(system, n_samples=100, warmup=200)
    np.testing.assert_array_equal(late.values, full.values[200:])


def test_divergence_raises_generation_error():
    with pytest.raises(GenerationError) as info:
        dy.generate("lorenz", dt=0.5, n_samples=200)
    assert info.value.index >= 1


def test_parameter_validation():
    with pytest.raises(ParameterError):
        dy.MackeyGlassParams(tau=17.05)
    with pytest.raises(ParameterError):
        dy.LorenzParams(dt=0.0)
    with pytest.raises(ParameterError):
        dy.RosslerParams(initial=(1.0, 2.0))
    with pytest.raises(ParameterError):
        dy.generate("henon")


def test_series_is_read_only():
    s = dy.Series([1.0, 2.0], 0.5, "x")
    with pytest.raises(ValueError):
        s.values[0] = 3.0
    with pytest.raises(ParameterError):
        dy.Series([1.0, float("nan")], 0.5)
    assert len(s.with_values([4.0, 5.0, 6.0])) == 3


def test_rk4_zero_field_leaves_state():
    s = np.array([0.3, -2.0, 7.0])
    np.testing.assert_array_equal(dy.rk4_step(lambda t, y: np.zeros_like(y), s, 0.5), s)


def test_generators_stay_on_their_attractors():
    mg, _ = dy.generate("mackey-glass", n_samples=3000)
    assert 0.0 < mg.values[500:].min() and mg.values[500:].max() < 1.6
    lz, _ = dy.generate("lorenz", n_samples=1000)
    assert np.max(np.abs(lz.values[100:])) < 25
    rs, _ = dy.generate("rossler", n_samples=2000)
    assert np.max(np.abs(rs.values[500:])) < 20


def test_mackey_glass_without_delay_term_decays_exponentially():
    v, d = dy.generate("mackey-glass", alpha=0.0, n_samples=200)
    t = np.arange(200) * 0.1
    np.testing.assert_allclose(v.values, 1.2 * np.exp(-0.1 * t), rtol=1e-9)
    np.testing.assert_allclose(d.values, -0.1 * v.values, rtol=1e-12)


def test_mackey_glass_growth_sign_diverges():
    with pytest.raises(GenerationError):
        dy.generate("mackey-glass", beta=0.1, n_samples=3000)


def test_lorenz_origin_is_fixed():
    v, d = dy.generate("lorenz", initial=(0.0, 0.0, 0.0), n_samples=100)
    assert not v.values.any() and not d.values.any()


def test_rossler_inner_fixed_point_is_stationary():
    a, b, c = 0.15, 0.2, 10.0
    # a*g^2 + c*g + b = 0 from x = -a*g, z = -g, b + (x - c)*z = 0; inner root
    g = (-c + math.sqrt(c * c - 4 * a * b)) / (2 * a)
    v, d = dy.generate("rossler", initial=(-a * g, g, -g), n_samples=200)
    assert np.max(np.abs(np.diff(v.values))) < 1e-6
    assert np.max(np.abs(d.values)) < 1e-6
