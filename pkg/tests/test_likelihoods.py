"""Tests of the four observation models and their quadrature rules."""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from gpadapt import derive_rng
from gpadapt.errors import ConfigError
from gpadapt.likelihoods import (
    NormalReference,
    SigmaPrior,
    UniformDisc,
    class_loglik,
    denreg_loglik,
    density_log_normalizer,
    density_loglik,
    disc_lowdisc,
    disc_rule,
    disc_volume,
    make_model_data,
    reg_loglik,
    reg_marginal_loglik,
    unit_interval_rule,
)
from gpadapt.process import PointSet, ProjectionSpec, build_gram

# log of the tilted-density normalizer for f(x) = sin(3x) + x^2 against
# the uniform reference on [-1, 1]; precomputed by adaptive quadrature
# of 0.5 * exp(f) to machine accuracy
_LOG_NORM_1D = 0.61509745020009621

# log standard normal cdf at -10, precomputed from the asymptotic series
# phi(x)/x * (1 - 1/x^2 + 3/x^4 - ...); accurate to about 1e-8 here
_LOG_PROBIT_TAIL = -53.231285159820203


def test_disc_volume_known_values():
    assert disc_volume(1) == pytest.approx(2.0)
    assert disc_volume(2) == pytest.approx(math.pi)
    assert disc_volume(3) == pytest.approx(4.0 * math.pi / 3.0)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_disc_rule_weights_sum_to_volume(d):
    nodes, weights = disc_rule(d, 512)
    assert weights.sum() == pytest.approx(disc_volume(d), rel=1e-12)
    assert np.sqrt((nodes**2).sum(axis=1)).max() <= 1.0 + 1e-9


def test_disc_rule_1d_integrates_polynomials():
    nodes, weights = disc_rule(1, 64)
    assert (weights * nodes[:, 0] ** 2).sum() == pytest.approx(2.0 / 3.0, abs=1e-13)
    assert (weights * nodes[:, 0] ** 7).sum() == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("d", [2, 3])
def test_disc_rule_matches_known_moments(d):
    # second moment of one coordinate over the unit ball is 1/(d + 2) * vol
    nodes, weights = disc_rule(d, 8192)
    est = (weights * nodes[:, 0] ** 2).sum()
    assert est == pytest.approx(disc_volume(d) / (d + 2.0), rel=2e-3)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_disc_rule_doubling_drift_is_small(d):
    # halving the mesh moves a smooth integral by less than 1e-4 relative
    def smooth(z):
        return np.exp(z.sum(axis=1) / np.sqrt(d))

    m = 2048
    n1, w1 = disc_rule(d, m)
    n2, w2 = disc_rule(d, 2 * m)
    i1 = (w1 * smooth(n1)).sum()
    i2 = (w2 * smooth(n2)).sum()
    assert abs(i1 - i2) / abs(i2) < 1e-4


def test_disc_lowdisc_is_nested():
    for d in (1, 2, 3):
        small = disc_lowdisc(d, 64)
        big = disc_lowdisc(d, 128)
        assert np.array_equal(big[:64], small)


def test_unit_interval_rule_normalized():
    nodes, weights = unit_interval_rule(64)
    assert weights.sum() == pytest.approx(1.0, abs=1e-13)
    assert nodes.min() > 0.0 and nodes.max() < 1.0
    # mean of u over [0,1]
    assert (weights * nodes).sum() == pytest.approx(0.5, abs=1e-13)


def test_sigma_prior():
    sp = SigmaPrior()
    assert sp.contains(0.05) and sp.contains(5.0)
    assert not sp.contains(0.049) and not sp.contains(5.01)
    assert sp.log_pdf(1.0) == pytest.approx(-math.log(4.95))
    with pytest.raises(ValueError):
        SigmaPrior(1.0, 0.5)


def test_references():
    ud = UniformDisc(2)
    x = np.array([[0.1, 0.2], [0.0, 0.0]])
    assert np.allclose(ud.pdf(x), 1.0 / math.pi)
    nr = NormalReference()
    y = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(nr.log_pdf(y), stats.norm.logpdf(y), atol=1e-12)
    assert np.allclose(nr.cdf(y), stats.norm.cdf(y), atol=1e-12)


def test_make_model_data_validation():
    x = np.array([[0.1, 0.2], [0.3, -0.1], [0.0, 0.5]])
    data = make_model_data("reg-fixed", x, np.zeros(3))
    assert data.n == 3 and data.dim == 2
    with pytest.raises(ValueError):
        make_model_data("reg-fixed", x, None)
    with pytest.raises(ValueError):
        make_model_data("classif", x, np.array([0.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        make_model_data("density", x, np.zeros(3))
    with pytest.raises(ValueError):
        make_model_data("reg-fixed", np.array([[1.4, 0.0]]), np.zeros(1))
    with pytest.raises(ValueError):
        make_model_data("classif", x, np.zeros(3), link="cauchit")


def test_denreg_clamps_extreme_responses():
    x = np.array([[0.1], [0.2]])
    with pytest.warns(RuntimeWarning):
        data = make_model_data("denreg", x, np.array([0.0, 1e9]))
    assert data.u_data.max() <= 1.0 - 1e-12
    assert data.u_data.min() >= 1e-12


def test_reg_loglik_matches_normal_logpdf():
    rng = derive_rng(0, "reg")
    x = rng.random((6, 2)) * 0.5
    y = rng.standard_normal(6)
    f = rng.standard_normal(6)
    data = make_model_data("reg-fixed", x, y)
    ours = reg_loglik(f, data, 0.3)
    ref = stats.norm.logpdf(y, loc=f, scale=0.3).sum()
    assert ours == pytest.approx(ref, abs=1e-10)
    with pytest.raises(ValueError):
        reg_loglik(f, data, 0.01)  # outside the sigma prior support


def test_reg_marginal_loglik_matches_mvn():
    rng = derive_rng(1, "marg")
    x = rng.random((8, 2)) * 0.6 - 0.3
    y = rng.standard_normal(8)
    data = make_model_data("reg-fixed", x, y)
    spec = ProjectionSpec(
        scale=1.2, mask=np.array([1, 1]), rotation=np.eye(2), extra_axis=False
    )
    gram = build_gram(PointSet(x), spec)
    sigma = 0.4
    ours = reg_marginal_loglik(data, gram, sigma)
    cov = gram.matrix + sigma**2 * np.eye(8)
    ref = stats.multivariate_normal(mean=np.zeros(8), cov=cov).logpdf(y)
    assert ours == pytest.approx(ref, abs=1e-8)


def test_class_loglik_probit_and_logistic():
    x = np.array([[0.1], [0.2], [-0.3]])
    y = np.array([1.0, 0.0, 1.0])
    data_p = make_model_data("classif", x, y, link="probit")
    data_l = make_model_data("classif", x, y, link="logistic")
    f = np.zeros(3)
    assert class_loglik(f, data_p) == pytest.approx(3.0 * math.log(0.5), abs=1e-12)
    assert class_loglik(f, data_l) == pytest.approx(3.0 * math.log(0.5), abs=1e-12)
    f = np.array([1.0, -2.0, 0.5])
    ref_p = (
        stats.norm.logcdf(1.0) + stats.norm.logcdf(2.0) + stats.norm.logcdf(0.5)
    )
    assert class_loglik(f, data_p) == pytest.approx(ref_p, abs=1e-10)
    ref_l = sum(math.log(1.0 / (1.0 + math.exp(-v))) for v in (1.0, 2.0, 0.5))
    assert class_loglik(f, data_l) == pytest.approx(ref_l, abs=1e-10)


def test_class_loglik_probit_deep_tail_is_stable():
    data = make_model_data("classif", np.array([[0.0]]), np.array([1.0]), link="probit")
    val = class_loglik(np.array([-10.0]), data)
    assert val == pytest.approx(_LOG_PROBIT_TAIL, abs=5e-8)
    assert np.isfinite(class_loglik(np.array([-40.0]), data))


def test_density_normalizer_matches_1d_quadrature_oracle():
    x = np.array([[0.0]])
    data = make_model_data("density", x, quad_size=2048)
    f_quad = np.sin(3.0 * data.quad_x[:, 0]) + data.quad_x[:, 0] ** 2
    assert density_log_normalizer(f_quad, data) == pytest.approx(
        _LOG_NORM_1D, abs=1e-6
    )


def test_density_normalizer_constant_shift():
    x = np.array([[0.0, 0.1]])
    data = make_model_data("density", x, quad_size=256)
    f = np.cos(data.quad_x[:, 0])
    base = density_log_normalizer(f, data)
    assert density_log_normalizer(f + 2.5, data) == pytest.approx(
        base + 2.5, abs=1e-10
    )


def test_density_loglik_invariant_under_constant_shift():
    rng = derive_rng(2, "dens")
    x = rng.random((30, 2)) * 0.5 - 0.25
    data = make_model_data("density", x, quad_size=512)
    n = data.n
    f_all = rng.standard_normal(n + data.quad_x.shape[0])
    base = density_loglik(f_all[:n], f_all[n:], data)
    shifted = density_loglik(f_all[:n] + 7.0, f_all[n:] + 7.0, data)
    assert shifted == pytest.approx(base, abs=1e-10)


def test_density_loglik_zero_f_is_reference_loglik():
    rng = derive_rng(3, "dens0")
    x = rng.random((10, 2)) * 0.4
    data = make_model_data("density", x, quad_size=512)
    val = density_loglik(np.zeros(10), np.zeros(data.quad_x.shape[0]), data)
    assert val == pytest.approx(10.0 * math.log(1.0 / math.pi), abs=1e-10)


def test_denreg_loglik_invariant_under_constant_shift():
    rng = derive_rng(4, "denreg")
    x = rng.random((12, 2)) * 0.4 - 0.2
    y = rng.standard_normal(12)
    data = make_model_data("denreg", x, y, u_size=32)
    m = data.u_nodes.shape[0]
    f_data = rng.standard_normal(12)
    f_quad = rng.standard_normal((12, m))
    base = denreg_loglik(f_data, f_quad, data)
    shifted = denreg_loglik(f_data + 3.0, f_quad + 3.0, data)
    assert shifted == pytest.approx(base, abs=1e-10)


def test_denreg_loglik_zero_f_is_reference_loglik():
    rng = derive_rng(5, "denreg0")
    x = rng.random((9, 1)) * 0.5
    y = rng.standard_normal(9)
    data = make_model_data("denreg", x, y, u_size=64)
    val = denreg_loglik(np.zeros(9), np.zeros((9, 64)), data)
    assert val == pytest.approx(stats.norm.logpdf(y).sum(), abs=1e-10)


def test_density_normalizer_rejects_zero_weights():
    x = np.array([[0.0]])
    data = make_model_data("density", x, quad_size=64)
    broken = data.__class__(
        kind=data.kind,
        x=data.x,
        gstar=data.gstar,
        quad_x=data.quad_x,
        quad_w=np.zeros_like(data.quad_w),
    )
    with pytest.raises(ConfigError):
        density_log_normalizer(np.zeros(64), broken)
