"""Moment-matched and rank-conditioned priors."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaugeflow import priors

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(min_value=2, max_value=6))
def test_fit_gaussian_matches_moments(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    x = rng.standard_normal((4000, d)) @ a + rng.standard_normal(d)
    p = priors.fit_gaussian(x)
    emp_cov = np.cov(x.T, bias=True).reshape(d, d)
    assert np.allclose(p.mean, x.mean(axis=0))
    assert np.allclose(p.cov, emp_cov, atol=1e-8)
    assert np.allclose(p.sqrt @ p.sqrt, p.cov, atol=1e-8)


def test_fit_gaussian_floors_rank_deficient_cov():
    rng = np.random.default_rng(0)
    x = np.zeros((500, 3))
    x[:, 0] = rng.standard_normal(500)     # data lives on a line
    p = priors.fit_gaussian(x)
    vals = np.linalg.eigvalsh(p.cov)
    assert vals.min() >= priors.EIG_FLOOR * (1 - 1e-12)
    # logpdf must stay finite on the flat directions
    assert np.all(np.isfinite(priors.gaussian_logpdf(p, x[:10])))


def test_fit_gaussian_input_validation():
    with pytest.raises(ValueError):
        priors.fit_gaussian(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        priors.fit_gaussian(np.zeros(7))


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_sample_gaussian_roundtrip(seed):
    rng = np.random.default_rng(seed)
    mean = np.array([1.0, -2.0])
    cov = np.array([[2.0, 0.6], [0.6, 0.5]])
    vals, vecs = np.linalg.eigh(cov)
    p = priors.GaussianPrior(mean, cov, (vecs * np.sqrt(vals)) @ vecs.T, isotropic=False)
    x = priors.sample_gaussian(p, 60_000, rng)
    assert np.allclose(x.mean(axis=0), mean, atol=0.05)
    assert np.allclose(np.cov(x.T, bias=True), cov, atol=0.08)


def test_gaussian_logpdf_against_scipy():
    from scipy.stats import multivariate_normal

    rng = np.random.default_rng(5)
    x = rng.standard_normal((200, 3))
    p = priors.fit_gaussian(rng.standard_normal((1000, 3)) * [1.0, 2.0, 0.5])
    ref = multivariate_normal(mean=p.mean, cov=p.cov).logpdf(x)
    assert np.allclose(priors.gaussian_logpdf(p, x), ref, atol=1e-10)


def test_isotropic_prior_shape():
    p = priors.isotropic_prior(4, scale=2.0)
    assert p.isotropic
    assert np.allclose(p.cov, 4.0 * np.eye(4))
    lp = priors.gaussian_logpdf(p, np.zeros(4))
    assert np.allclose(lp, -0.5 * 4 * (np.log(2 * np.pi) + np.log(4.0)))


# ---------------------------------------------------------------------------
# positional categorical


def test_fit_positional_counts_and_smoothing():
    obs = [(0.05, 0), (0.1, 0), (0.9, 1), (0.95, 1), (1.0, 1)]
    p = priors.fit_positional(obs, n_bins=2, n_classes=2, epsilon=1.0, beta=0.0)
    # first bin: counts (2, 0) + 1 smoothing -> (3/4, 1/4)
    assert np.allclose(p.bin_probs[0], [0.75, 0.25])
    # rank 1.0 lands in the last bin: counts (0, 3) + 1 -> (1/5, 4/5)
    assert np.allclose(p.bin_probs[1], [0.2, 0.8])


def test_eval_positional_blend_and_base():
    p = priors.PositionalCategoricalPrior(
        np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.5, 0.5]), beta=0.2)
    lo = priors.eval_positional(p, 0.0)
    assert np.allclose(lo, 0.2 * 0.5 + 0.8 * np.array([1.0, 0.0]))
    # pos = rank * K, so rank 0.25 sits halfway between bins 0 and 1
    q = priors.eval_positional(p, 0.25)
    assert np.allclose(q, 0.2 * 0.5 + 0.8 * np.array([0.5, 0.5]))
    hi = priors.eval_positional(p, 0.5)
    assert np.allclose(hi, 0.2 * 0.5 + 0.8 * np.array([0.0, 1.0]))
    for r in (0.0, 0.3, 0.75, 1.0):
        assert abs(priors.eval_positional(p, r).sum() - 1.0) < 1e-12


def test_positional_validation():
    with pytest.raises(ValueError):
        priors.fit_positional([(1.5, 0)], 2, 2)
    with pytest.raises(ValueError):
        priors.fit_positional([(0.5, 3)], 2, 2)
    with pytest.raises(ValueError):
        priors.eval_positional(priors.fit_positional([], 2, 2), -0.1)
    with pytest.raises(ValueError):
        priors.PositionalCategoricalPrior(np.ones((2, 2)) / 2, np.ones(3) / 3)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_sample_positional_hits_table(seed):
    rng = np.random.default_rng(seed)
    p = priors.PositionalCategoricalPrior(
        np.array([[0.9, 0.1], [0.1, 0.9]]), np.full(2, 0.5), beta=0.0)
    lo = priors.sample_positional(p, np.full(2000, 0.01), rng)
    hi = priors.sample_positional(p, np.full(2000, 0.99), rng)
    assert (lo == 0).mean() > 0.8
    assert (hi == 1).mean() > 0.8


# ---------------------------------------------------------------------------
# rank-binned Gaussian


def test_fit_rank_gaussian_recovers_bins():
    rng = np.random.default_rng(2)
    ranks = np.concatenate([np.full(3000, 0.1), np.full(3000, 0.9)])
    vals = np.concatenate([
        rng.normal(-3.0, 0.5, (3000, 2)),
        rng.normal(+3.0, 2.0, (3000, 2)),
    ])
    p = priors.fit_rank_gaussian(ranks, vals, n_bins=2)
    m0, s0 = priors.eval_rank_gaussian(p, 0.0)      # pure bin 0
    m1, s1 = priors.eval_rank_gaussian(p, 1.0)      # pure bin 1
    assert np.allclose(m0, -3.0, atol=0.1)
    assert np.allclose(s0, 0.5, atol=0.1)
    assert np.allclose(m1, 3.0, atol=0.2)
    assert np.allclose(s1, 2.0, atol=0.2)
    draw = priors.sample_rank_gaussian(p, np.zeros(4000), rng)
    assert np.allclose(draw.mean(axis=0), -3.0, atol=0.1)


def test_rank_gaussian_empty_bin_defaults():
    p = priors.fit_rank_gaussian(np.array([0.05, 0.06, 0.07]),
                                 np.full((3, 1), 2.0), n_bins=4)
    mean, std = priors.eval_rank_gaussian(p, 0.99)
    assert mean == 0.0 and std == 1.0


# ---------------------------------------------------------------------------
# serialization


@pytest.mark.parametrize("make", [
    lambda: priors.fit_gaussian(np.random.default_rng(1).standard_normal((100, 3))),
    lambda: priors.fit_positional([(0.2, 0), (0.8, 1)], 3, 2),
    lambda: priors.fit_rank_gaussian(np.linspace(0, 1, 50),
                                     np.random.default_rng(2).standard_normal((50, 2)), 4),
])
def test_save_load_roundtrip(make, tmp_path):
    p = make()
    path = tmp_path / "prior.json"
    priors.save_prior(p, path)
    q = priors.load_prior(path)
    assert type(q) is type(p)
    for k, v in priors.prior_to_dict(p).items():
        assert priors.prior_to_dict(q)[k] == v


def test_prior_dict_rejects_unknown():
    with pytest.raises(TypeError):
        priors.prior_to_dict(object())
    with pytest.raises(ValueError):
        priors.prior_from_dict({"kind": "mystery"})
