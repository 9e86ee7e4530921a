import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragsim import process as P
from fragsim import stationary, streams
from fragsim.errors import ConfigError, NumericError
from fragsim.kernel import Mixture, PowerLaw, Tabulated
from fragsim.stats import ks_critical, ks_statistic, mean_and_stderr

UNIFORM = PowerLaw(1.0)


def stub(eps=1.0, theta=0.5):
    return itertools.repeat((eps, theta))


# ---------------------------------------------------------------- streams


def test_streams_do_not_depend_on_companions():
    full = streams.PathStreams(5, streams.JUMPS, 0, 3000)
    part = streams.PathStreams(5, streams.JUMPS, 1500, 1600)
    for n in (0, 1, 40, 77):
        assert np.array_equal(full.draw(n)[:, 1500:1600], part.draw(n))


def test_streams_open_interval_and_forward_only():
    s = streams.PathStreams(1, streams.ZINF, 0, 2048)
    u = s.draw(0)
    assert np.all((u > 0) & (u < 1))
    s.draw(100)
    with pytest.raises(ValueError):
        s.draw(3)


def test_tags_give_independent_streams():
    a = streams.PathStreams(1, streams.ZINF, 0, 10).draw(0)
    b = streams.PathStreams(1, streams.XINF, 0, 10).draw(0)
    assert not np.array_equal(a, b)


# ----------------------------------------------------------- single paths


def test_jump_process_first_jump_example():
    params = P.ProcessParams(1.0, UNIFORM, 2.0)
    tr = P.simulate_jump_process(params, 0.75, seed=0, draws=stub())
    assert tr.jump_times[0] == 0.5
    assert tr.values[0] == 1.0
    # the second jump would come at 0.5 + 1/1 = 1.5 > t_end
    assert tr.n_jumps == 1
    assert tr.value_at(0.4) == 2.0 and tr.value_at(0.6) == 1.0


def test_no_jump_before_t_end():
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    tr = P.simulate_jump_process(params, 0.5, seed=0, draws=stub(eps=1.0))
    assert tr.n_jumps == 0
    assert tr.value_at(0.5) == 1.0


def test_pdmp_first_jump_examples():
    tr = P.simulate_pdmp(P.ProcessParams(1.0, UNIFORM, 1.0), 0.7, 0, draws=stub())
    assert tr.jump_times[0] == pytest.approx(math.log(2), rel=1e-15)
    assert tr.values[0] == 1.0
    tr = P.simulate_pdmp(P.ProcessParams(2.0, UNIFORM, 1.0), 0.7, 0, draws=stub(eps=3.0))
    assert tr.jump_times[0] == pytest.approx(math.log(2), rel=1e-15)
    assert tr.values[0] == pytest.approx(1.0, rel=1e-15)
    # between jumps the flow is exponential
    assert tr.value_at(0.6) == pytest.approx(math.exp(0.6), rel=1e-14)
    assert tr.value_at(0.7) == pytest.approx(math.exp(0.7 - math.log(2)), rel=1e-14)


@pytest.mark.parametrize(
    "fn,alpha,t_end",
    [
        (P.simulate_jump_process, -1.0, 1.0),
        (P.simulate_jump_process, 1.0, 0.0),
        (P.simulate_pdmp, -1.0, 1.0),
        (P.simulate_pdmp, 1.0, -1.0),
    ],
)
def test_simulation_errors(fn, alpha, t_end):
    with pytest.raises(ConfigError):
        fn(P.ProcessParams(alpha, UNIFORM, 1.0), t_end, 0)


def test_params_errors():
    with pytest.raises(ConfigError):
        P.ProcessParams(0.0, UNIFORM)
    with pytest.raises(ConfigError):
        P.ProcessParams(math.inf, UNIFORM)
    with pytest.raises(ConfigError):
        P.ProcessParams(1.0, UNIFORM, -2.0)


@given(
    seed=st.integers(0, 2**32),
    alpha=st.floats(0.2, 3.0),
    beta=st.floats(0.2, 5.0),
    y0=st.floats(0.1, 10.0),
)
def test_paths_strictly_decrease(seed, alpha, beta, y0):
    params = P.ProcessParams(alpha, PowerLaw(beta), y0)
    tr = P.simulate_jump_process(params, 20.0, seed, check_time_change=True)
    assert np.all(np.diff(tr.jump_times) > 0)
    v = np.concatenate([[y0], tr.values])
    assert np.all(v > 0) and np.all(np.diff(v) < 0)


def test_time_change_matches_direct_path():
    params = P.ProcessParams(1.5, Mixture(0.5, 1.0, 2.0), 3.0)
    tr = P.simulate_jump_process(params, 100.0, seed=3)
    t = np.linspace(0, 100, 1001)
    tc = P.time_change_values(tr.x0, 1.5, tr.draws, t)
    assert np.max(np.abs(tc - tr.value_at(t)) / tr.value_at(t)) < 1e-12


# ------------------------------------------------------------- coupling


def test_coupling_first_jump_maps_exactly():
    x = 1.7
    eps = 0.8
    params = P.ProcessParams(1.0, UNIFORM, x)
    y = P.simulate_jump_process(params, 5.0, 0, draws=[(eps, 0.5), (1e9, 0.5)])
    s_end = math.log(P.gamma_factor(5.0, 1.0))
    xp = P.simulate_pdmp(params, s_end, 0, draws=[(eps, 0.5), (1e9, 0.5)])
    tau1 = eps / x
    assert y.jump_times[0] == pytest.approx(tau1, rel=1e-15)
    assert xp.jump_times[0] == pytest.approx(math.log1p(eps / x), rel=1e-15)
    assert math.log(P.gamma_factor(tau1, 1.0)) == pytest.approx(xp.jump_times[0], rel=1e-15)


def test_coupling_power_law_two():
    params = P.ProcessParams(2.0, PowerLaw(2.0), 1.0)
    for seed in range(5):
        assert P.coupling_check(params, 50.0, seed) < 1e-10


def test_coupling_zero_horizon_and_mismatch():
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    assert P.coupling_check(params, 0, 1) == 0.0
    y = P.simulate_jump_process(params, 50.0, 1)
    x = P.simulate_pdmp(P.ProcessParams(1.0, UNIFORM, 2.0), math.log(51.0), 1)
    with pytest.raises(ConfigError):
        P.coupling_discrepancy(y, x, 1.0)
    x = P.simulate_pdmp(params, math.log(51.0), 2)
    with pytest.raises(ConfigError):
        P.coupling_discrepancy(y, x, 1.0)


def test_time_change_flag_detects_nothing_on_valid_paths():
    params = P.ProcessParams(0.5, PowerLaw(3.0), 2.0)
    P.simulate_jump_process(params, 200.0, 9, check_time_change=True)


# ----------------------------------------------------------- shattering


def test_shattering_stub_geometric():
    tr = P.simulate_shattering(P.ProcessParams(-1.0, UNIFORM, 1.0), 0, draws=stub())
    assert tr.exploded
    assert tr.exp_functional == pytest.approx(2.0, abs=1e-11)
    tr2 = P.simulate_shattering(P.ProcessParams(-1.0, UNIFORM, 2.0), 0, draws=stub())
    assert tr2.explosion_time == pytest.approx(2.0 * tr2.exp_functional, rel=1e-15)
    assert tr2.exp_functional == pytest.approx(2.0, abs=1e-11)
    assert tr2.value_at(tr2.explosion_time + 1) == 0.0
    assert np.all(np.diff(tr2.values) < 0)


def test_shattering_errors():
    with pytest.raises(ConfigError):
        P.simulate_shattering(P.ProcessParams(1.0, UNIFORM, 1.0), 0)
    with pytest.raises(ConfigError):
        P.simulate_shattering(P.ProcessParams(-1.0, UNIFORM, 1.0), 0, tail_tol=0.0)
    with pytest.raises(NumericError):
        P.simulate_shattering(P.ProcessParams(-1.0, UNIFORM, 1.0), 0, draws=stub(theta=0.999999), max_jumps=100)


def test_shattering_mean_exp_functional():
    params = P.ProcessParams(-1.0, UNIFORM, 1.0)
    i_inf, t_exp, _ = P.shattering_ensemble(params, 10**5, seed=4)
    mean, se = mean_and_stderr(i_inf)
    assert abs(mean - 2.0) < 3 * se
    assert np.array_equal(i_inf, t_exp)


def test_shattering_ensemble_matches_single_paths():
    params = P.ProcessParams(-0.7, PowerLaw(2.0), 1.5)
    i_inf, t_exp, vals = P.shattering_ensemble(params, 50, seed=8, times=[0.1, 0.5])
    for i in (0, 17, 49):
        tr = P.simulate_shattering(params, 8, path_id=i)
        assert tr.exp_functional == pytest.approx(i_inf[i], rel=1e-13)
        assert tr.explosion_time == pytest.approx(t_exp[i], rel=1e-13)
        assert np.allclose(tr.value_at([0.1, 0.5]), vals[i], rtol=1e-13)


def test_exp_functional_law_matches_perpetuity():
    # I_inf with exponent |alpha| has the law of Z_inf with exponent |alpha|
    n = 10**5
    i_inf, _, _ = P.shattering_ensemble(P.ProcessParams(-1.0, UNIFORM, 1.0), n, seed=5)
    z = stationary.sample_Zinf(UNIFORM, 1.0, n, seed=6)
    from fragsim.stats import ks_two_sample

    assert ks_two_sample(i_inf, z) < ks_critical(n, n)


# -------------------------------------------------------------- ensembles


def test_ensemble_equals_single_paths():
    params = P.ProcessParams(1.0, Mixture(0.4, 0.5, 3.0), 2.0)
    times = [0.5, 3.0, 10.0]
    ens = P.jump_process_ensemble(params, times, 2100, seed=11)
    pd = P.pdmp_ensemble(params, times, 2100, seed=11)
    for i in (0, 1023, 1024, 2099):
        y = P.simulate_jump_process(params, 10.0, 11, path_id=i)
        x = P.simulate_pdmp(params, 10.0, 11, path_id=i)
        assert np.allclose(y.value_at(times), ens[i], rtol=1e-13)
        assert np.allclose(x.value_at(times), pd[i], rtol=1e-13)


def test_ensemble_thread_independent():
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    a = P.pdmp_ensemble(params, [1.0, 5.0], 200_000, seed=2, threads=1)
    b = P.pdmp_ensemble(params, [1.0, 5.0], 200_000, seed=2, threads=4)
    assert np.array_equal(a, b)


def test_sampled_initial_values():
    params = P.ProcessParams(1.0, UNIFORM, lambda u: -np.log(u))
    y = P.jump_process_ensemble(params, [0.0], 5000, seed=1)[:, 0]
    x0 = params.initial_values(1, 0, 5000)
    assert np.array_equal(y, x0)
    assert abs(x0.mean() - 1.0) < 0.05
    with pytest.raises(ConfigError):
        P.ProcessParams(1.0, UNIFORM, lambda u: u - 2.0).initial_values(1, 0, 10)


def test_no_path_lost_for_positive_alpha():
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    y = P.jump_process_ensemble(params, [1.0, 10.0, 100.0], 10**5, seed=3)
    assert np.all(y > 0) and np.all(np.isfinite(y))


def test_pdmp_stationary_ks():
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    x = P.pdmp_ensemble(params, [20.0], 10**5, seed=12)[:, 0]
    assert ks_statistic(x, lambda v: 1 - np.exp(-v)) < 0.02


def test_rescaled_mean_at_long_times():
    """``E[gamma(t) Y(t)]`` reaches the stationary mean ``E X = 1`` (alpha=beta=1)
    once the zoom time ``log gamma(t)`` is large.  At physical time ``t`` the
    relaxation is still visible (about 10% at t = 10), so the check is made at
    zoom time 10, i.e. physical time e^10 - 1."""
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    t = math.expm1(10.0)
    y = P.jump_process_ensemble(params, [t], 10**5, seed=21)[:, 0]
    mean, se = mean_and_stderr(P.gamma_factor(t, 1.0) * y)
    assert abs(mean - 1.0) < 3 * se


def test_rescaled_mean_at_physical_time_ten_is_biased():
    # frozen baseline: finite-time relaxation, approaching 1 from above
    params = P.ProcessParams(1.0, UNIFORM, 1.0)
    y = P.jump_process_ensemble(params, [10.0], 10**5, seed=21)[:, 0]
    mean, se = mean_and_stderr(11.0 * y)
    assert 1.08 < mean < 1.12 and se < 0.005


def test_jump_time_sums_converge_or_diverge():
    n = 1000
    neg = P.log_jump_time_sums(UNIFORM, -1.0, n, 1000, seed=7)
    pos = P.log_jump_time_sums(UNIFORM, 1.0, n, 1000, seed=7)
    # strictly increasing until the increments drop below double precision
    assert np.all(np.diff(neg[:, :3], axis=1) > 0)
    assert np.all(np.diff(neg, axis=1) >= 0)
    # converged: the last 500 terms add a negligible amount
    assert np.max(neg[:, -1] - neg[:, 499]) < 1e-12
    # diverging: log tau_n grows linearly (rate E(-log theta) = 1 per jump)
    slope = (pos[:, -1] - pos[:, 499]) / 500
    assert np.all(slope > 0.5)
    assert abs(slope.mean() - 1.0) < 0.05


def test_tabulated_kernel_paths():
    z = np.geomspace(1e-6, 0.999, 500)
    params = P.ProcessParams(1.0, Tabulated(z, np.ones_like(z)), 1.0)
    assert P.coupling_check(params, 50.0, 4) < 1e-10
