import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from odeclass.forcing import (
    constant,
    eval_forcing,
    exp_decay,
    parse_forcing,
    random_smooth_forcing,
    reference_pair,
    sinusoid,
)
from odeclass.linear import (
    IntegrationAbort,
    convolve_kernel,
    exp_filter_sampled,
    homogeneous_solution,
    integrate,
    make_kernel,
    repeated_exp_filter,
)
from odeclass.series import SampledSeries
from odeclass.system import SystemParams


def test_system_params_validation():
    with pytest.raises(ValueError):
        SystemParams(float("nan"), 1.0)
    with pytest.raises(ValueError):
        SystemParams(1.0, float("inf"))
    p = SystemParams(-1.0, 2.0)
    with pytest.raises(ValueError):
        p.require_stable()
    assert SystemParams(2.0, 1.0).require_stable() is not None


@pytest.mark.parametrize(
    "a,b,regime,closed",
    [
        (2.0, 1.0, "Critical", lambda t: t * np.exp(-t)),
        (3.0, 2.0, "Overdamped", lambda t: np.exp(-t) - np.exp(-2.0 * t)),
        (2.0, 2.0, "Underdamped", lambda t: np.exp(-t) * np.sin(t)),
    ],
)
def test_kernel_regimes_and_closed_forms(a, b, regime, closed):
    kern = make_kernel(SystemParams(a, b))
    assert kern.regime == regime
    ts = np.linspace(0.0, 10.0, 201)
    assert np.max(np.abs(kern.k(ts) - closed(ts))) < 1e-13


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (3.0, 2.0), (2.0, 2.0), (0.0, 1.0), (2.0, 0.0), (0.5, 4.0)])
def test_kernel_initial_values_exact(a, b):
    kern = make_kernel(SystemParams(a, b))
    assert float(kern.k(0.0)) == 0.0
    assert float(kern.kprime(0.0)) == 1.0
    assert float(kern.ksecond(0.0)) == -a


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (3.0, 2.0), (2.0, 2.0), (0.0, 1.0), (0.5, 4.0), (4.0, 0.5)])
def test_kernel_satisfies_its_ode(a, b):
    kern = make_kernel(SystemParams(a, b))
    ts = np.linspace(0.0, 40.0, 811)
    resid = kern.ksecond(ts) + a * kern.kprime(ts) + b * kern.k(ts)
    assert np.max(np.abs(resid)) < 1e-12


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (3.0, 2.0), (2.0, 2.0), (0.5, 4.0), (4.0, 0.5)])
def test_kernel_decays_exponentially_when_stable(a, b):
    kern = make_kernel(SystemParams(a, b))
    ts = np.linspace(5.0, 40.0, 3501)
    for deriv in (kern.k, kern.kprime, kern.ksecond):
        vals = np.abs(np.asarray(deriv(ts)))
        # envelope regression: log of per-unit-interval maxima against bin midpoints
        edges = np.arange(5.0, 41.0, 1.0)
        mids, logmax = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            m = vals[(ts >= lo) & (ts < hi)]
            peak = float(np.max(m))
            if peak > 0.0:
                mids.append(0.5 * (lo + hi))
                logmax.append(math.log(peak))
        slope = np.polyfit(mids, logmax, 1)[0]
        assert slope < 0.0


def test_near_degenerate_discriminant_collapses_to_critical():
    kern = make_kernel(SystemParams(2.0, 1.0 + 1e-14))
    assert kern.regime == "Critical"
    ts = np.linspace(0.0, 10.0, 101)
    assert np.max(np.abs(kern.k(ts) - ts * np.exp(-ts))) < 1e-10


def test_homogeneous_solution_closed_form():
    ts = np.linspace(0.0, 12.0, 241)
    xh, xhp = homogeneous_solution(SystemParams(2.0, 1.0, 1.0, 0.0), ts)
    assert np.max(np.abs(xh - (1.0 + ts) * np.exp(-ts))) < 1e-13
    assert np.max(np.abs(xhp - (-ts) * np.exp(-ts))) < 1e-13


def test_homogeneous_solution_trivial_cases():
    ts = np.linspace(0.0, 5.0, 11)
    xh, xhp = homogeneous_solution(SystemParams(1.5, 2.5, 0.0, 0.0), ts)
    assert np.all(xh == 0.0) and np.all(xhp == 0.0)
    kern = make_kernel(SystemParams(1.5, 2.5))
    xh, xhp = homogeneous_solution(SystemParams(1.5, 2.5, 0.0, 1.0), ts)
    assert np.array_equal(xh, kern.k(ts))
    assert np.array_equal(xhp, kern.kprime(ts))


@pytest.mark.parametrize("a,b,xi0,xi1", [(2.0, 1.0, 1.0, 0.0), (3.0, 2.0, -0.5, 0.7), (2.0, 2.0, 0.3, -1.1)])
def test_homogeneous_solution_satisfies_ode(a, b, xi0, xi1):
    params = SystemParams(a, b, xi0, xi1)
    kern = make_kernel(params)
    ts = np.linspace(0.0, 20.0, 401)
    xh, xhp = homogeneous_solution(params, ts)
    # x_H'' from the kernel identity k''' = -a k'' - b k'
    xhpp = -b * xi0 * kern.kprime(ts) + xi1 * kern.ksecond(ts)
    assert np.max(np.abs(xhpp + a * xhp + b * xh)) < 1e-12


def test_integrate_constant_forcing_closed_forms():
    traj = integrate(SystemParams(3.0, 2.0), constant(1.0), 20.0, tol=1e-9)
    g = traj.grid
    assert np.max(np.abs(traj.x - (0.5 - np.exp(-g) + 0.5 * np.exp(-2.0 * g)))) < 1e-8
    assert np.max(np.abs(traj.y1 - (1.0 - np.exp(-g)))) < 1e-8
    assert np.max(np.abs(traj.y2 - (1.0 - (1.0 + g) * np.exp(-g)))) < 1e-8
    assert np.max(np.abs(traj.Q - g)) < 1e-8
    assert abs(traj.x[-1] - 0.5) < 1e-6


def test_integrate_unforced_reduces_to_homogeneous():
    traj = integrate(SystemParams(2.0, 1.0, 1.0, 0.0), constant(0.0), 10.0)
    g = traj.grid
    assert np.max(np.abs(traj.x - (1.0 + g) * np.exp(-g))) < 1e-9
    assert np.all(traj.y1 == 0.0)
    assert np.all(traj.y2 == 0.0)
    assert np.all(traj.Q == 0.0)


def test_trajectory_initial_values_and_grid():
    traj = integrate(SystemParams(1.0, 3.0, 0.25, -0.75), parse_forcing("sin(t)^2"), 5.0, h_max=0.02)
    assert traj.x[0] == 0.25
    assert traj.xprime[0] == -0.75
    assert traj.y1[0] == 0.0 and traj.y2[0] == 0.0 and traj.y2prime[0] == 0.0 and traj.Q[0] == 0.0
    assert traj.grid[0] == 0.0
    assert np.max(np.diff(traj.grid)) <= 0.02 + 1e-12
    # f >= 0 here, so the cumulative integral never decreases
    assert np.all(np.diff(traj.Q) >= -1e-12)


def test_integrate_input_validation():
    with pytest.raises(ValueError):
        integrate(SystemParams(1.0, 1.0), constant(1.0), 0.0)
    with pytest.raises(ValueError):
        integrate(SystemParams(1.0, 1.0), constant(1.0), 1.0, tol=-1e-9)
    with pytest.raises(ValueError):
        integrate(SystemParams(1.0, 1.0), constant(1.0), 1.0, h_max=0.0)


def test_integrate_matches_reference_solution():
    pair = reference_pair()
    traj = integrate(pair.params, pair.forcing, 4.0, tol=1e-9)
    exact = eval_forcing(pair.exact_solution, traj.grid)
    scale = 1.0 + np.max(np.abs(exact))
    assert np.max(np.abs(traj.x - exact)) <= 1e-6 * scale
    exact_p = eval_forcing(pair.exact_derivative, traj.grid)
    scale_p = 1.0 + np.max(np.abs(exact_p))
    assert np.max(np.abs(traj.xprime - exact_p)) <= 1e-6 * scale_p


def test_integrate_is_linear_in_the_forcing():
    params = SystemParams(1.2, 2.3)
    f1 = sinusoid(1.7, 1.0)
    f2 = exp_decay(0.4)
    alpha, beta = 0.6, -1.4
    combined = parse_forcing(f"{alpha}*({_txt(f1)}) + {beta}*({_txt(f2)})")
    t1 = integrate(params, f1, 15.0)
    t2 = integrate(params, f2, 15.0)
    tc = integrate(params, combined, 15.0)
    for name in ("x", "xprime", "y1", "y2", "Q"):
        want = alpha * getattr(t1, name) + beta * getattr(t2, name)
        assert np.max(np.abs(getattr(tc, name) - want)) < 1e-7


def _txt(e):
    from odeclass.forcing import to_text

    return to_text(e)


def test_initial_state_superposes_with_forced_response():
    f = sinusoid(1.3, 0.8)
    base = SystemParams(2.5, 1.5)
    shifted = SystemParams(2.5, 1.5, 0.7, -0.3)
    t0 = integrate(base, f, 12.0)
    t1 = integrate(shifted, f, 12.0)
    xh, xhp = homogeneous_solution(shifted, t0.grid)
    assert np.max(np.abs((t1.x - t0.x) - xh)) < 1e-8
    assert np.max(np.abs((t1.xprime - t0.xprime) - xhp)) < 1e-8


@pytest.mark.parametrize("seed", [11, 12, 13])
def test_zero_state_response_matches_kernel_convolution(seed):
    rng = np.random.default_rng(seed)
    f = random_smooth_forcing(rng)
    a = float(rng.uniform(0.5, 4.0))
    b = float(rng.uniform(0.5, 4.0))
    params = SystemParams(a, b)
    traj = integrate(params, f, 8.0)
    kern = make_kernel(params)
    fs = SampledSeries(traj.grid, eval_forcing(f, traj.grid))
    conv = convolve_kernel(kern.k, fs)
    fmax = float(np.max(np.abs(fs.v)))
    tol = max(1e-6, 10.0 * traj.h**2 * fmax)
    assert np.max(np.abs(traj.x - conv.v)) <= tol


def test_repeated_filter_stage_zero_samples_the_forcing():
    grid = np.linspace(0.0, 5.0, 11)
    out = repeated_exp_filter(constant(2.5), 0, grid)
    assert np.all(out.v == 2.5)


def test_repeated_filter_closed_forms():
    grid = np.linspace(0.0, 8.0, 801)
    y1 = repeated_exp_filter(constant(1.0), 1, grid)
    assert np.max(np.abs(y1.v - (1.0 - np.exp(-grid)))) < 1e-9
    y2 = repeated_exp_filter(exp_decay(1.0), 2, grid)
    assert np.max(np.abs(y2.v - grid**2 * np.exp(-grid) / 2.0)) < 1e-9
    y3 = repeated_exp_filter(constant(1.0), 3, grid)
    closed = 1.0 - np.exp(-grid) * (1.0 + grid + grid**2 / 2.0)
    assert np.max(np.abs(y3.v - closed)) < 1e-9


def test_repeated_filter_rejects_bad_stage_counts():
    grid = np.linspace(0.0, 1.0, 5)
    for j in (-1, 4, 10):
        with pytest.raises(ValueError):
            repeated_exp_filter(constant(1.0), j, grid)


def test_repeated_filter_agrees_with_trajectory_channels():
    f = parse_forcing("sin(1.3*t)*exp(-0.1*t)+0.4")
    traj = integrate(SystemParams(1.0, 2.0), f, 10.0)
    y1 = repeated_exp_filter(f, 1, traj.grid)
    y2 = repeated_exp_filter(f, 2, traj.grid)
    assert np.max(np.abs(y1.v - traj.y1)) < 1e-7
    assert np.max(np.abs(y2.v - traj.y2)) < 1e-7


def test_second_average_is_filtered_first_average():
    f = parse_forcing("cos(2*t)+0.5")
    traj = integrate(SystemParams(3.0, 2.0), f, 10.0)
    refiltered = exp_filter_sampled(traj.series("y1"))
    assert np.max(np.abs(refiltered.v - traj.y2)) < 1e-4
    tight = repeated_exp_filter(f, 2, traj.grid)
    assert np.max(np.abs(tight.v - traj.y2)) < 1e-8


def test_sampled_filter_error_shrinks_quadratically():
    errs = []
    for n in (801, 1601):
        grid = np.linspace(0.0, 8.0, n)
        out = exp_filter_sampled(SampledSeries(grid, np.exp(-grid)))
        errs.append(np.max(np.abs(out.v - grid * np.exp(-grid))))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_convolution_of_zero_signal_is_zero():
    grid = np.arange(0.0, 1.0001, 0.01)
    out = convolve_kernel(lambda u: np.exp(-u), SampledSeries(grid, np.zeros_like(grid)))
    assert np.all(out.v == 0.0)


def test_convolution_against_closed_form():
    grid = np.arange(0.0, 2.0001, 0.01)
    out = convolve_kernel(lambda u: np.exp(-u), SampledSeries(grid, np.ones_like(grid)))
    expect = 1.0 - math.exp(-1.0)
    err_h = abs(out.v[100] - expect)
    assert err_h < 1e-4
    fine = np.arange(0.0, 2.00001, 0.005)
    out2 = convolve_kernel(lambda u: np.exp(-u), SampledSeries(fine, np.ones_like(fine)))
    err_h2 = abs(out2.v[200] - expect)
    assert 3.0 < err_h / err_h2 < 5.0


def test_convolution_requires_uniform_grid():
    t = np.array([0.0, 0.1, 0.3, 0.35])
    with pytest.raises(ValueError):
        convolve_kernel(lambda u: u, SampledSeries(t, np.ones_like(t)))


def test_integration_abort_reports_last_time_and_partial():
    with pytest.raises(IntegrationAbort) as ei:
        integrate(SystemParams(1.0, 1.0), parse_forcing("1/(2-t)"), 3.0)
    ab = ei.value
    assert 1.9 <= ab.last_time <= 2.0
    assert ab.partial is not None
    assert len(ab.partial.grid) >= 100
    assert ab.partial.grid[-1] <= 2.0


def test_dense_output_interpolates_between_grid_points():
    traj = integrate(SystemParams(3.0, 2.0), constant(1.0), 5.0, dense=True)
    mid = traj.state_at(np.array([1.005, 2.345]))
    exact_x = 0.5 - np.exp(-np.array([1.005, 2.345])) + 0.5 * np.exp(-2.0 * np.array([1.005, 2.345]))
    assert np.max(np.abs(mid[0] - exact_x)) < 1e-8
    plain = integrate(SystemParams(3.0, 2.0), constant(1.0), 5.0)
    with pytest.raises(ValueError):
        plain.state_at(1.0)


@settings(max_examples=30, deadline=None)
@given(
    # halving a subnormal rounds, which breaks the exact k''(0) == -a identity
    st.floats(min_value=-3.0, max_value=3.0, allow_subnormal=False),
    st.floats(min_value=-3.0, max_value=3.0, allow_subnormal=False),
)
def test_kernel_contract_holds_across_coefficients(a, b):
    assume(abs(a * a - 4.0 * b) > 1e-6)
    kern = make_kernel(SystemParams(a, b))
    assert float(kern.k(0.0)) == 0.0
    assert float(kern.kprime(0.0)) == 1.0
    assert float(kern.ksecond(0.0)) == -a
    ts = np.linspace(0.0, 5.0, 41)
    kv, kp, ks = kern.k(ts), kern.kprime(ts), kern.ksecond(ts)
    resid = np.abs(ks + a * kp + b * kv)
    scale = 1.0 + np.abs(kv) + np.abs(kp) + np.abs(ks)
    assert np.max(resid / scale) < 1e-10
