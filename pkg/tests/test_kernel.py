import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy import stats as sps

from fragsim import kernel as K
from fragsim.errors import ConfigError
from fragsim.stats import ks_critical, ks_statistic

FAMILIES = [
    K.PowerLaw(1.0),
    K.PowerLaw(2.0),
    K.PowerLaw(0.5),
    K.Mixture(0.5, 1.0, 2.0),
    K.Mixture(0.3, 3.0, 0.5),
]


def _g_integral(k):
    # in y = -log z, so endpoint singularities of g become smooth tails
    f = lambda y: float(k.density(math.exp(-y))) * math.exp(-y)
    return integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)[0]


def test_make_kernel_examples():
    k = K.make_kernel({"family": "power_law", "beta": 1.0})
    z = np.array([0.01, 0.3, 0.99])
    assert np.allclose(k.density(z), 1.0)
    k2 = K.make_kernel({"family": "power_law", "beta": 2.0})
    assert np.allclose(k2.cdf(z), z**2)
    m = K.make_kernel({"family": "mixture", "p": 0.5, "beta1": 1.0, "beta2": 2.0})
    assert isinstance(m, K.Mixture)
    assert K.make_kernel(m) is m


@pytest.mark.parametrize(
    "spec",
    [
        {"family": "power_law", "beta": 0.0},
        {"family": "power_law", "beta": -1.0},
        {"family": "mixture", "p": 1.5, "beta1": 1.0, "beta2": 2.0},
        {"family": "mixture", "p": -0.1, "beta1": 1.0, "beta2": 2.0},
        {"family": "mixture", "p": 0.5, "beta1": 0.0, "beta2": 2.0},
        {"family": "tabulated", "nodes": [0.1, 0.5, 0.9], "values": [0.0, 0.0, 0.0]},
        {"family": "tabulated", "nodes": [0.1, 0.5, 0.5], "values": [1.0, 1.0, 1.0]},
        {"family": "tabulated", "nodes": [0.5, 0.1, 0.9], "values": [1.0, 1.0, 1.0]},
        {"family": "tabulated", "nodes": [0.1, 0.5], "values": [1.0, -1.0]},
        {"family": "tabulated", "nodes": [0.0, 0.5], "values": [1.0, 1.0]},
        {"family": "nope"},
        {"family": "power_law"},
    ],
)
def test_make_kernel_errors(spec):
    with pytest.raises(ConfigError):
        K.make_kernel(spec)


@pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.describe())
def test_normalization_closed_families(k):
    assert abs(_g_integral(k) - 1.0) < 1e-10
    assert k.cdf(0.0) == 0.0
    assert abs(k.cdf(1.0) - 1.0) < 1e-15


def test_tabulated_normalization_is_exact():
    z = np.linspace(0.01, 0.99, 50)
    k = K.Tabulated(z, 3.0 * z**2)
    kz, kh = k.knots
    assert kh[0] == 0.0 and kh[-1] == 1.0
    # piecewise-constant g integrates to H(1) - H(0) exactly
    assert abs(np.sum(k._kg * np.diff(kz)) - 1.0) < 1e-12
    assert abs(k.scale_factor * k.raw_mass - 1.0) < 1e-15


def test_log_divergent_table_normalizer(oracles):
    z, g = K.log_divergent_table()
    k = K.Tabulated(z, g)
    # the table covers [1e-300, 1), which holds this fraction of the unit mass
    target = oracles["log_divergent_mass_above_1e-300"]
    assert abs(k.raw_mass - target) < 1e-3
    assert abs(k.raw_mass - 1.0) < 3e-3
    assert k.mean_log() == math.inf


@pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.describe())
def test_cdf_monotone_and_inverse(k):
    z = np.linspace(0.0, 1.0, 2001)
    h = k.cdf(z)
    assert np.all(np.diff(h) >= 0)
    u = np.linspace(1e-6, 1 - 1e-6, 999)
    assert np.max(np.abs(k.cdf(k.ppf(u)) - u)) < 1e-9


@given(u=st.floats(1e-12, 1 - 1e-12), beta=st.floats(0.05, 20.0), p=st.floats(0.0, 1.0))
def test_inverse_cdf_property(u, beta, p):
    for k in (K.PowerLaw(beta), K.Mixture(p, beta, 1.0 + beta)):
        assert abs(float(k.cdf(k.ppf(u))) - u) < 1e-9


def test_sampling_examples():
    assert K.PowerLaw(1.0).ppf(0.3) == pytest.approx(0.3, abs=1e-15)
    assert K.PowerLaw(2.0).ppf(0.25) == pytest.approx(0.5, abs=1e-15)


def test_sample_mean_power_law_two():
    rng = np.random.default_rng(1)
    th = K.sample_theta(K.PowerLaw(2.0), rng, 10**6)
    assert np.all((th > 0) & (th < 1))
    assert abs(th.mean() - 2 / 3) < 3 * th.std() / 1e3


@pytest.mark.parametrize("k", FAMILIES + [K.Tabulated(*K.log_divergent_table())], ids=lambda k: k.describe())
def test_samples_ks(k):
    rng = np.random.default_rng(7)
    n = 10**5
    th = k.sample(rng, n)
    d = ks_statistic(th, k.cdf)
    assert d < ks_critical(n)
    # same statistic through scipy
    assert d == pytest.approx(sps.kstest(th, k.cdf).statistic, abs=1e-12)


def test_mixture_sampling_matches_components():
    # component choice and inverse CDF: the law is the mixture of two Betas
    k = K.Mixture(0.3, 0.5, 3.0)
    cdf = lambda z: 0.3 * sps.beta.cdf(z, 0.5, 1) + 0.7 * sps.beta.cdf(z, 3.0, 1)
    th = k.sample(np.random.default_rng(3), 10**5)
    assert sps.kstest(th, cdf).statistic < ks_critical(10**5)


def test_moment_examples():
    assert K.PowerLaw(1.0).moment(1) == 0.5
    assert K.Mixture(0.5, 1.0, 2.0).moment(1) == pytest.approx(7 / 12, rel=1e-15)
    for k in FAMILIES:
        assert k.moment(0) == 1.0
    with pytest.raises(ConfigError):
        K.PowerLaw(1.0).moment(-1)


@pytest.mark.parametrize("k", FAMILIES, ids=lambda k: k.describe())
@pytest.mark.parametrize("q", [0.5, 1.0, 2.0, 5.0])
def test_quadrature_moment_matches_closed_form(k, q):
    assert K.quad_moment(k, q) == pytest.approx(k.moment(q), rel=1e-8)


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0, 2.0, 5.0])
def test_tabulated_moment(q):
    z = np.geomspace(1e-6, 0.999, 2000)
    k = K.Tabulated(z, 2.0 * z)
    assert k.moment(q) == pytest.approx(K.quad_moment(k, q), rel=1e-9)
    # close to the exact Beta(2,1) moment of the tabulated function
    assert k.moment(q) == pytest.approx(2.0 / (2.0 + q), rel=2e-3)


def test_laplace_exponent_examples():
    assert K.laplace_exponent(K.PowerLaw(3.0), 2.0) == pytest.approx(2 / 5, rel=1e-15)
    assert K.laplace_exponent(K.PowerLaw(1.0), 1.0) == 0.5
    assert K.laplace_exponent(K.PowerLaw(1.0), 100.0) == pytest.approx(100 / 101, rel=1e-15)
    m = K.Mixture(0.5, 1.0, 2.0)
    assert m.laplace_exponent(1.0) == pytest.approx(1 - 7 / 12, rel=1e-14)
    for q in (0.0, -1.0):
        with pytest.raises(ConfigError):
            K.laplace_exponent(m, q)


@given(beta=st.floats(0.05, 20.0), beta2=st.floats(0.05, 20.0), p=st.floats(0.0, 1.0))
def test_laplace_exponent_increasing_concave(beta, beta2, p):
    q = np.linspace(0.1, 10.0, 100)
    for k in (K.PowerLaw(beta), K.Mixture(p, beta, beta2)):
        phi = np.array([K.laplace_exponent(k, v) for v in q])
        assert np.all(phi > 0) and np.all(phi < 1)
        assert np.all(np.diff(phi) > 0)
        assert np.all(np.diff(phi, 2) <= 1e-15)


def test_mean_log_examples():
    assert K.mean_log(K.PowerLaw(2.0)) == 0.5
    assert K.mean_log(K.Mixture(0.5, 1.0, 2.0)) == 0.75
    z = np.geomspace(1e-8, 0.999, 4000)
    # g = 2z, E(-log theta) = 1/2
    assert K.Tabulated(z, 2 * z).mean_log() == pytest.approx(0.5, abs=1e-4)
    assert K.Tabulated(*K.log_divergent_table()).mean_log() == math.inf


def test_mean_log_bands_decay_for_finite_kernel():
    z = np.geomspace(1e-12, 0.999, 4000)
    bands = K.Tabulated(z, np.ones_like(z)).log_bands()
    # for uniform theta the band (2^-(n+1), 2^-n) contributes about n log2 / 2^(n+1)
    assert np.sum(bands) == pytest.approx(1.0, abs=1e-4)
    assert bands[-1] < 1e-14


def test_table_io_roundtrip(tmp_path):
    z, g = K.log_divergent_table(200)
    p = tmp_path / "g.csv"
    K.write_table(p, z, g)
    k = K.make_kernel({"family": "tabulated", "path": str(p)})
    assert np.array_equal(k.nodes, z) and np.array_equal(k.values, g)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n0.5,1\n")
    with pytest.raises(ConfigError):
        K.read_table(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("z,g\n")
    with pytest.raises(ConfigError):
        K.read_table(empty)


def test_h_recovered_from_g():
    k = K.PowerLaw(2.0)
    assert k.h(0.5) == pytest.approx(2.0)
