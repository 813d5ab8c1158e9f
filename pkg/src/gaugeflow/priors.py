"""Noise priors for the canonical slice.

Two families: moment-matched Gaussians over flattened continuous states (the
KL-optimal Gaussian approximation of the slice marginal), and rank-conditioned
categorical tables for discrete per-atom features. Rank bins partition [0, 1);
evaluation interpolates linearly between adjacent bins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

EIG_FLOOR = 1e-8


@dataclass
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray
    sqrt: np.ndarray
    isotropic: bool = False

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        self.sqrt = np.asarray(self.sqrt, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def isotropic_prior(dim: int, scale: float = 1.0) -> GaussianPrior:
    return GaussianPrior(np.zeros(dim), scale ** 2 * np.eye(dim), scale * np.eye(dim), isotropic=True)


def fit_gaussian(samples: np.ndarray) -> GaussianPrior:
    """Moment-matched Gaussian: empirical mean and covariance (denominator n).

    Matching first and second moments minimizes KL(data || Gaussian) over all
    Gaussians. Covariance eigenvalues are floored at 1e-8 before the symmetric
    square root, since slice-supported data is often rank-deficient.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need (n, d) samples with n >= 2")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / samples.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, EIG_FLOOR)
    cov = (vecs * vals) @ vecs.T
    sqrt = (vecs * np.sqrt(vals)) @ vecs.T
    return GaussianPrior(mean, cov, sqrt, isotropic=False)


def sample_gaussian(prior: GaussianPrior, n: int, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal((n, prior.dim))
    return prior.mean + eps @ prior.sqrt      # sqrt is symmetric


def gaussian_logpdf(prior: GaussianPrior, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = prior.dim
    diff = x - prior.mean
    chol = np.linalg.cholesky(prior.cov)
    sol = np.linalg.solve(chol, diff.T)
    quad = (sol ** 2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (quad + logdet + d * np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Rank-conditioned categorical prior


@dataclass
class PositionalCategoricalPrior:
    """P(class | rank bin) table with additive smoothing and a base mixture.

    bin_probs has shape (K, C). eval blends the two bins straddling the query
    rank, then mixes with the base distribution: beta * base + (1 - beta) * p_r.
    """

    bin_probs: np.ndarray
    base: np.ndarray
    beta: float = 0.1

    def __post_init__(self):
        self.bin_probs = np.asarray(self.bin_probs, dtype=np.float64)
        self.base = np.asarray(self.base, dtype=np.float64)
        if self.bin_probs.ndim != 2:
            raise ValueError("bin_probs must be (K, C)")
        if self.base.shape != (self.bin_probs.shape[1],):
            raise ValueError("base must be (C,)")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")

    @property
    def n_bins(self) -> int:
        return self.bin_probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.bin_probs.shape[1]


def fit_positional(observations, n_bins: int, n_classes: int,
                   epsilon: float = 1.0, beta: float = 0.1) -> PositionalCategoricalPrior:
    """Count (rank, class) pairs into K bins with additive smoothing epsilon.

    observations: iterable of (rank in [0, 1], class index) pairs. Ranks at
    exactly 1.0 land in the last bin.
    """
    counts = np.zeros((n_bins, n_classes), dtype=np.float64)
    for r, c in observations:
        if not (0.0 <= r <= 1.0):
            raise ValueError(f"rank {r} outside [0, 1]")
        if not (0 <= c < n_classes):
            raise ValueError(f"class {c} outside 0..{n_classes - 1}")
        k = min(int(r * n_bins), n_bins - 1)
        counts[k, c] += 1.0
    probs = (counts + epsilon) / (counts + epsilon).sum(axis=1, keepdims=True)
    base = np.full(n_classes, 1.0 / n_classes)
    return PositionalCategoricalPrior(probs, base, beta)


def eval_positional(prior: PositionalCategoricalPrior, rank: float) -> np.ndarray:
    """Class distribution at a rank: linear blend of the straddling bins,
    then beta-mixed with the base distribution."""
    if not (0.0 <= rank <= 1.0):
        raise ValueError(f"rank {rank} outside [0, 1]")
    k = prior.n_bins
    pos = rank * k
    k0 = min(int(pos), k - 1)
    k1 = min(k0 + 1, k - 1)
    delta = pos - k0
    if k1 == k0:
        delta = 0.0
    p_r = (1.0 - delta) * prior.bin_probs[k0] + delta * prior.bin_probs[k1]
    return prior.beta * prior.base + (1.0 - prior.beta) * p_r


def sample_positional(prior: PositionalCategoricalPrior, ranks: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(len(ranks), dtype=np.int64)
    for i, r in enumerate(ranks):
        p = eval_positional(prior, float(r))
        out[i] = rng.choice(prior.n_classes, p=p)
    return out


# ---------------------------------------------------------------------------
# Rank-binned Gaussian coordinate prior (molecular aligned prior)


@dataclass
class RankBinnedGaussianPrior:
    """Per-rank-bin diagonal Gaussian over coordinates; beta = 0 by default
    for continuous features (no base mixing)."""

    bin_means: np.ndarray     # (K, d)
    bin_stds: np.ndarray      # (K, d)
    beta: float = 0.0

    def __post_init__(self):
        self.bin_means = np.asarray(self.bin_means, dtype=np.float64)
        self.bin_stds = np.asarray(self.bin_stds, dtype=np.float64)
        if self.bin_means.shape != self.bin_stds.shape or self.bin_means.ndim != 2:
            raise ValueError("bin_means and bin_stds must both be (K, d)")

    @property
    def n_bins(self) -> int:
        return self.bin_means.shape[0]


def fit_rank_gaussian(ranks: np.ndarray, values: np.ndarray, n_bins: int) -> RankBinnedGaussianPrior:
    """Bin coordinate rows by rank; per-bin mean and diagonal std (floored)."""
    ranks = np.asarray(ranks, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    d = values.shape[1]
    means = np.zeros((n_bins, d))
    stds = np.ones((n_bins, d))
    bins = np.minimum((ranks * n_bins).astype(int), n_bins - 1)
    for k in range(n_bins):
        mask = bins == k
        if mask.sum() >= 2:
            means[k] = values[mask].mean(axis=0)
            stds[k] = np.maximum(values[mask].std(axis=0), 1e-4)
        elif mask.sum() == 1:
            means[k] = values[mask][0]
    return RankBinnedGaussianPrior(means, stds)


def eval_rank_gaussian(prior: RankBinnedGaussianPrior, rank: float) -> tuple[np.ndarray, np.ndarray]:
    """(mean, std) at a rank via the same two-bin linear blend."""
    k = prior.n_bins
    pos = float(rank) * k
    k0 = min(int(pos), k - 1)
    k1 = min(k0 + 1, k - 1)
    delta = pos - k0 if k1 != k0 else 0.0
    mean = (1.0 - delta) * prior.bin_means[k0] + delta * prior.bin_means[k1]
    std = (1.0 - delta) * prior.bin_stds[k0] + delta * prior.bin_stds[k1]
    return mean, std


def sample_rank_gaussian(prior: RankBinnedGaussianPrior, ranks: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    out = np.zeros((len(ranks), prior.bin_means.shape[1]))
    for i, r in enumerate(ranks):
        mean, std = eval_rank_gaussian(prior, float(r))
        out[i] = mean + std * rng.standard_normal(prior.bin_means.shape[1])
    return out


# ---------------------------------------------------------------------------
# Serialization


def prior_to_dict(prior) -> dict:
    if isinstance(prior, GaussianPrior):
        return {
            "kind": "gaussian",
            "mean": prior.mean.tolist(),
            "cov": prior.cov.tolist(),
            "sqrt": prior.sqrt.tolist(),
            "isotropic": prior.isotropic,
        }
    if isinstance(prior, PositionalCategoricalPrior):
        return {
            "kind": "positional_categorical",
            "bin_probs": prior.bin_probs.tolist(),
            "base": prior.base.tolist(),
            "beta": prior.beta,
        }
    if isinstance(prior, RankBinnedGaussianPrior):
        return {
            "kind": "rank_gaussian",
            "bin_means": prior.bin_means.tolist(),
            "bin_stds": prior.bin_stds.tolist(),
            "beta": prior.beta,
        }
    raise TypeError(f"unknown prior type {type(prior).__name__}")


def prior_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "gaussian":
        return GaussianPrior(
            np.array(doc["mean"]), np.array(doc["cov"]),
            np.array(doc["sqrt"]), bool(doc.get("isotropic", False)),
        )
    if kind == "positional_categorical":
        return PositionalCategoricalPrior(
            np.array(doc["bin_probs"]), np.array(doc["base"]), float(doc["beta"]),
        )
    if kind == "rank_gaussian":
        return RankBinnedGaussianPrior(
            np.array(doc["bin_means"]), np.array(doc["bin_stds"]), float(doc.get("beta", 0.0)),
        )
    raise ValueError(f"unknown prior kind {kind!r}")


def save_prior(prior, path) -> None:
    with open(path, "w") as fh:
        json.dump(prior_to_dict(prior), fh, sort_keys=True)


def load_prior(path):
    with open(path) as fh:
        return prior_from_dict(json.load(fh))
