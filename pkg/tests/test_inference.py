"""Tests of the sampler: prior recovery, conjugate checks, plumbing."""

import hashlib

import numpy as np
import pytest
from scipy import stats

from gpadapt import derive_rng
from gpadapt.likelihoods import make_model_data
from gpadapt.mcmc import (
    ChainSchedule,
    inclusion_probs,
    regression_f_draw,
    run_chain,
)
from gpadapt.priors import HyperConfig
from gpadapt.process import PointSet, ProjectionSpec, build_gram


def _reg_data(n, d, seed, noise=0.1):
    rng = derive_rng(seed, "regdata")
    x = rng.random((n, d)) * 0.8 - 0.4
    y = np.sin(2.0 * x[:, 0]) + noise * rng.standard_normal(n)
    return make_model_data("reg-fixed", x, y)


def _batch_se(samples):
    """Batch-means standard error, robust to autocorrelation."""
    samples = np.asarray(samples)
    nb = 30
    usable = (samples.shape[0] // nb) * nb
    batches = samples[:usable].reshape(nb, -1).mean(axis=1)
    return batches.std(ddof=1) / np.sqrt(nb)


def test_prior_recovery_under_constant_likelihood():
    # with the likelihood switched off the chain must reproduce the prior
    data = _reg_data(4, 2, 0)
    hyper = HyperConfig(dim=2, gamma_shape=2.0, gamma_rate=1.5, p_incl=0.5)
    schedule = ChainSchedule(
        iterations=6000,
        burn_in=500,
        thin=3,
        prior_only=True,
        step_sigma=3.0,
        check_every=0,
    )
    chain = run_chain(data, hyper, schedule, derive_rng(0, "prior"))
    snaps = chain.post_burn()
    assert len(snaps) > 1500

    # masks: iid Bernoulli(1/2) per coordinate
    freq = inclusion_probs(chain)
    assert np.all(np.abs(freq - 0.5) < 0.06)

    # path value at one site: standard normal whatever the hyperparameters
    f0 = np.array([s.fvals[0] for s in snaps])
    stat, _ = stats.kstest(f0, stats.norm.cdf)
    assert stat < 0.05

    # rescale factor given one active axis: Gamma(shape, rate) root
    scales_m1 = np.array([s.scale for s in snaps if s.mask.sum() == 1])
    assert scales_m1.shape[0] > 400
    stat, _ = stats.kstest(scales_m1, stats.gamma(2.0, scale=1.0 / 1.5).cdf)
    assert stat < 0.08

    # rotation angle: uniform over the circle
    angles = np.array([np.arctan2(s.rotation[1, 0], s.rotation[0, 0]) for s in snaps])
    stat, _ = stats.kstest((angles + np.pi) / (2.0 * np.pi), stats.uniform.cdf)
    assert stat < 0.06

    # noise scale: uniform over its support
    sig = np.array([s.sigma for s in snaps])
    stat, _ = stats.kstest((sig - 0.05) / 4.95, stats.uniform.cdf)
    assert stat < 0.08


def test_slice_sampler_matches_conjugate_posterior():
    # fixed hyperparameters, Gaussian likelihood: the posterior mean of the
    # latent path has a closed form to compare against
    n, sigma = 10, 0.3
    data = _reg_data(n, 2, 1, noise=0.3)
    hyper = HyperConfig(dim=2)
    schedule = ChainSchedule(
        iterations=8000,
        burn_in=1000,
        thin=2,
        sample_scale=False,
        sample_mask=False,
        sample_rotation=False,
        sample_sigma=False,
        init_sigma=sigma,
        adapt=False,
        check_every=0,
    )
    chain = run_chain(data, hyper, schedule, derive_rng(1, "conj"))
    snaps = chain.post_burn()
    draws = np.stack([s.fvals for s in snaps])

    spec = ProjectionSpec(
        scale=1.0, mask=np.ones(2, dtype=np.int64), rotation=np.eye(2), extra_axis=False
    )
    gram = build_gram(PointSet(data.x), spec)
    k = gram.matrix + gram.jitter * np.eye(n)
    target = k @ np.linalg.solve(k + sigma**2 * np.eye(n), data.y)
    for j in range(n):
        se = _batch_se(draws[:, j])
        assert abs(draws[:, j].mean() - target[j]) < 4.0 * se


def test_chain_runs_all_moves_and_tallies():
    data = _reg_data(24, 3, 2)
    hyper = HyperConfig(dim=3, rotate=True)
    schedule = ChainSchedule(iterations=200, thin=10, marginalized=True)
    chain = run_chain(data, hyper, schedule, derive_rng(2, "moves"))
    for move in ("scale", "mask", "rotation", "sigma"):
        assert chain.attempts[move] > 0
        assert 0 <= chain.accepts[move] <= chain.attempts[move]
    assert chain.meta["marginalized"] is True
    assert chain.meta["n"] == 24


def test_snapshot_digest_matches_fvals():
    data = _reg_data(8, 2, 3)
    hyper = HyperConfig(dim=2)
    schedule = ChainSchedule(iterations=30, thin=10)
    chain = run_chain(data, hyper, schedule, derive_rng(3, "digest"))
    for s in chain.snapshots:
        expect = hashlib.sha256(np.ascontiguousarray(s.fvals).tobytes()).hexdigest()[:16]
        assert s.fvals_digest == expect


def test_sigma_stays_in_support():
    data = _reg_data(12, 2, 4)
    hyper = HyperConfig(dim=2)
    chain = run_chain(
        data, hyper, ChainSchedule(iterations=400, thin=4), derive_rng(4, "sig")
    )
    for s in chain.snapshots:
        assert 0.05 <= s.sigma <= 5.0


def test_run_chain_validates_inputs():
    data = _reg_data(6, 2, 5)
    with pytest.raises(ValueError):
        run_chain(data, HyperConfig(dim=3), ChainSchedule(iterations=5), derive_rng(5, "a"))
    with pytest.raises(ValueError):
        run_chain(
            data,
            HyperConfig(dim=2, extra_axis=True),
            ChainSchedule(iterations=5),
            derive_rng(5, "b"),
        )
    cdata = make_model_data(
        "classif", data.x, (data.y > 0).astype(float), link="probit"
    )
    with pytest.raises(ValueError):
        run_chain(
            cdata,
            HyperConfig(dim=2),
            ChainSchedule(iterations=5, marginalized=True),
            derive_rng(5, "c"),
        )
    with pytest.raises(ValueError):
        run_chain(
            data,
            HyperConfig(dim=2),
            ChainSchedule(iterations=5, init_sigma=9.0),
            derive_rng(5, "d"),
        )
    with pytest.raises(ValueError):
        run_chain(
            data, HyperConfig(dim=2), ChainSchedule(iterations=-1), derive_rng(5, "e")
        )


def test_zero_iterations_gives_initial_snapshot_only():
    data = _reg_data(5, 2, 6)
    chain = run_chain(
        data, HyperConfig(dim=2), ChainSchedule(iterations=0), derive_rng(6, "z")
    )
    assert len(chain.snapshots) == 1
    assert chain.snapshots[0].iteration == 0
    assert np.array_equal(chain.snapshots[0].mask, np.ones(2))


def test_inclusion_probs_needs_post_burn_snapshots():
    data = _reg_data(5, 2, 7)
    chain = run_chain(
        data,
        HyperConfig(dim=2),
        ChainSchedule(iterations=4, burn_in=100, thin=2),
        derive_rng(7, "nb"),
    )
    with pytest.raises(ValueError):
        inclusion_probs(chain)


def test_chains_are_deterministic_per_seed():
    data = _reg_data(16, 2, 8)
    hyper = HyperConfig(dim=2, rotate=True)
    schedule = ChainSchedule(iterations=150, thin=5)
    c1 = run_chain(data, hyper, schedule, derive_rng(8, "det"))
    c2 = run_chain(data, hyper, schedule, derive_rng(8, "det"))
    assert len(c1.snapshots) == len(c2.snapshots)
    for a, b in zip(c1.snapshots, c2.snapshots):
        assert a.scale == b.scale
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.rotation, b.rotation)
        assert a.sigma == b.sigma
        assert np.array_equal(a.fvals, b.fvals)
        assert a.log_post == b.log_post


def test_regression_f_draw_matches_closed_form():
    rng = derive_rng(9, "fdraw")
    n = 12
    x = rng.random((n, 2)) * 0.6 - 0.3
    y = np.cos(3.0 * x[:, 0])
    spec = ProjectionSpec(
        scale=1.5, mask=np.array([1, 1]), rotation=np.eye(2), extra_axis=False
    )
    gram = build_gram(PointSet(x), spec)
    sigma = 0.2
    mean, draw = regression_f_draw(gram, y, sigma, derive_rng(9, "d1"))
    k = gram.matrix + gram.jitter * np.eye(n)
    target = k @ np.linalg.solve(k + sigma**2 * np.eye(n), y)
    assert np.allclose(mean, target, atol=1e-8)
    assert not np.allclose(draw, mean)
    # tiny noise pins the draw to the data
    mean_tight, draw_tight = regression_f_draw(gram, y, 1e-4, derive_rng(9, "d2"))
    assert np.allclose(mean_tight, y, atol=1e-4)
    assert np.allclose(draw_tight, y, atol=1e-2)


def test_marginalized_and_latent_agree_on_inclusion():
    # both samplers explore the same posterior over masks; with a strong
    # single active coordinate they should both find it
    data = _reg_data(48, 2, 10, noise=0.05)
    hyper = HyperConfig(dim=2, rotate=False)
    cm = run_chain(
        data,
        hyper,
        ChainSchedule(iterations=600, thin=5, marginalized=True),
        derive_rng(10, "m"),
    )
    cl = run_chain(
        data,
        hyper,
        ChainSchedule(iterations=1500, thin=5),
        derive_rng(10, "l"),
    )
    pm = inclusion_probs(cm)
    pl = inclusion_probs(cl)
    assert pm[0] > 0.9 and pl[0] > 0.9
