"""Batch pairing: OT assignment, rigid alignment, group-aligned lift."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaugeflow import coupling, symgroup

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def brute_force_cost(data, noise):
    n = data.shape[0]
    best = np.inf
    for p in itertools.permutations(range(n)):
        c = sum(((data[i] - noise[j]) ** 2).sum() for i, j in enumerate(p))
        best = min(best, c)
    return best


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(min_value=2, max_value=6))
def test_exact_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, 3))
    noise = rng.standard_normal((n, 3))
    plan = coupling.ot_pair(data, noise, mode="exact")
    assert abs(plan.cost - brute_force_cost(data, noise)) < 1e-10
    # a valid assignment touches every noise row once
    assert sorted(j for _, j in plan.pairs) == list(range(n))


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(min_value=2, max_value=40))
def test_sinkhorn_never_worse_than_identity(seed, n):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, 2))
    noise = rng.standard_normal((n, 2))
    plan = coupling.ot_pair(data, noise, mode="sinkhorn")
    identity = coupling.product_pair(n, data, noise)
    assert plan.cost <= identity.cost + 1e-9
    assert sorted(j for _, j in plan.pairs) == list(range(n))
    exact = coupling.ot_pair(data, noise, mode="exact")
    assert plan.cost >= exact.cost - 1e-9


def test_sinkhorn_finds_obvious_assignment():
    # two well-separated clusters; rounding must pair within clusters
    rng = np.random.default_rng(7)
    data = np.concatenate([rng.normal(-10, 0.1, (8, 2)), rng.normal(10, 0.1, (8, 2))])
    noise = np.concatenate([rng.normal(10, 0.1, (8, 2)), rng.normal(-10, 0.1, (8, 2))])
    plan = coupling.ot_pair(data, noise, mode="sinkhorn")
    for i, j in plan.pairs:
        assert (i < 8) == (j >= 8)


def test_ot_pair_validation():
    with pytest.raises(ValueError):
        coupling.ot_pair(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        coupling.ot_pair(np.zeros((2, 2)), np.zeros((2, 2)), mode="swap")
    with pytest.raises(ValueError):
        coupling.ot_pair(np.zeros((coupling.MAX_EXACT + 1, 1)),
                         np.zeros((coupling.MAX_EXACT + 1, 1)), mode="exact")


def test_noise_permutation_inverts_pairs():
    plan = coupling.CouplingPlan([(0, 2), (1, 0), (2, 1)], "exact", 0.0)
    assert plan.noise_permutation().tolist() == [2, 0, 1]


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(min_value=3, max_value=5))
def test_kabsch_recovers_planted_rotation(seed, d):
    rng = np.random.default_rng(seed)
    source = rng.standard_normal((30, d))
    r_true = symgroup.haar_rotation(d, rng)
    target = source @ r_true.T
    r, aligned = coupling.kabsch_align(target, source)
    assert np.allclose(r, r_true, atol=1e-8)
    assert np.allclose(aligned, target, atol=1e-8)
    assert abs(np.linalg.det(r) - 1.0) < 1e-10


def test_kabsch_reflection_blocked():
    # target is a mirror image; the best proper rotation still has det +1
    rng = np.random.default_rng(3)
    source = rng.standard_normal((20, 3))
    target = source * np.array([1.0, 1.0, -1.0])
    r, _ = coupling.kabsch_align(target, source)
    assert abs(np.linalg.det(r) - 1.0) < 1e-10


def test_ot_probability_schedule():
    sched = coupling.AnnealSchedule(max_epochs=10)
    assert coupling.ot_probability(0, sched) == 1.0
    assert coupling.ot_probability(5, sched) == 0.5
    assert coupling.ot_probability(10, sched) == 0.0
    assert coupling.ot_probability(25, sched) == 0.0
    with pytest.raises(ValueError):
        coupling.ot_probability(0, coupling.AnnealSchedule(max_epochs=0))


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_lift_shares_one_element_per_pair(seed):
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal((64, 2))
    z1 = rng.standard_normal((64, 2))
    (l0, l1), mats, idx = coupling.group_aligned_lift(
        (z0, z1), symgroup.c4_group(), rng, return_elements=True)
    for i in range(64):
        assert np.allclose(l0[i], mats[i] @ z0[i])
        assert np.allclose(l1[i], mats[i] @ z1[i])
    assert idx is not None and idx.shape == (64,)
    # norms are untouched by any orthogonal lift
    assert np.allclose(np.linalg.norm(l0, axis=1), np.linalg.norm(z0, axis=1))


def test_lift_rotation_marker():
    rng = np.random.default_rng(11)
    pairs = [(rng.standard_normal(3), rng.standard_normal(3)) for _ in range(5)]
    lifted, mats, idx = coupling.group_aligned_lift(
        pairs, coupling.RotationLift(3), rng, return_elements=True)
    assert idx is None
    for (a, b), g, (la, lb) in zip(pairs, mats, lifted):
        assert np.allclose(g @ g.T, np.eye(3), atol=1e-12)
        assert np.allclose(la, g @ a)
        assert np.allclose(lb, g @ b)
    with pytest.raises(TypeError):
        coupling.group_aligned_lift(pairs, object(), rng)


def test_lift_marginal_is_group_mixture():
    # lifting a point mass by C4 spreads it uniformly over the 4 images
    rng = np.random.default_rng(0)
    z0 = np.tile([2.0, 0.0], (8000, 1))
    z1 = np.zeros((8000, 2))
    (l0, _), _, idx = coupling.group_aligned_lift(
        (z0, z1), symgroup.c4_group(), rng, return_elements=True)
    counts = np.bincount(idx, minlength=4) / 8000
    assert np.allclose(counts, 0.25, atol=0.03)
    images = {tuple(np.round(row, 6)) for row in l0}
    assert images == {(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)}
