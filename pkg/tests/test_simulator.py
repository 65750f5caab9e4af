import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kemlp.dataio import estimate_rates
from kemlp.errors import EnumerationTooLargeError, InvalidArgumentError
from kemlp.graph import Dist, GraphSpec, Weights, predict
from kemlp.simulator import (RNG_BLOCK, WorldConfig, _sample_block, cell_accuracy, cell_masses,
                             clean_robust_split, exact_weighted_accuracy, monte_carlo_accuracy,
                             sample_dataset)
from kemlp.theory import RateProfile, main_weighted_accuracy

from conftest import random_spec

B, A = Dist.BENIGN, Dist.ADVERSARIAL


def fixture_world(seed=0):
    spec = GraphSpec.binary(1, 1)
    prof = RateProfile(0.0, (0.5, 0.5), (0.8, 0.8), ((0.9, 0.9),) * 2, ((0.1, 0.1),) * 2)
    return WorldConfig(spec, prof, seed), Weights.binary(0.0, math.log(4), [math.log(9)] * 2)


def random_world(rng, max_classes=4, max_aux=6, seed=0):
    spec = random_spec(rng, max_classes, max_aux)
    K, C = spec.num_aux, spec.num_classes
    prior = rng.dirichlet(np.ones(C))
    prof = RateProfile(float(rng.uniform()), tuple(prior / prior.sum()), tuple(rng.uniform(0, 1, 2)),
                       tuple(map(tuple, rng.uniform(0.5, 1, (K, 2)))), tuple(map(tuple, rng.uniform(0, 0.5, (K, 2)))))
    return WorldConfig(spec, prof, seed)


class TestSampling:
    def test_deterministic(self):
        world, _ = fixture_world(3)
        a, b = sample_dataset(world, 1000), sample_dataset(world, 1000)
        assert a == b
        assert sample_dataset(WorldConfig(world.spec, world.profile, 4), 1000) != a

    def test_block_split_equals_serial(self):
        world, _ = fixture_world(5)
        n = 2 * RNG_BLOCK + 100
        full = sample_dataset(world, n)
        blocks = [_sample_block(world, 0, RNG_BLOCK), _sample_block(world, 1, RNG_BLOCK),
                  _sample_block(world, 2, 100)]
        for i, part in enumerate(blocks):
            idx = np.arange(i * RNG_BLOCK, i * RNG_BLOCK + len(part))
            assert full.take(idx) == part
        # prefixes agree
        assert sample_dataset(world, 500) == full.take(np.arange(500))

    def test_empty(self):
        world, _ = fixture_world()
        d = sample_dataset(world, 0)
        assert len(d) == 0 and d.aux.shape == (0, 2)
        with pytest.raises(InvalidArgumentError):
            sample_dataset(world, -1)

    def test_perfect_main(self):
        spec = GraphSpec.per_class(3)
        prof = RateProfile(0.5, (0.2, 0.3, 0.5), (1.0, 1.0), ((0.9, 0.8),) * 6, ((0.1, 0.2),) * 6)
        d = sample_dataset(WorldConfig(spec, prof, 1), 5000)
        np.testing.assert_array_equal(d.s_main, d.y)

    def test_uninformative_aux(self):
        spec = GraphSpec.binary(1, 1)
        prof = RateProfile(0.5, (0.5, 0.5), (0.7, 0.7), ((0.4, 0.4),) * 2, ((0.4, 0.4),) * 2)
        d = sample_dataset(WorldConfig(spec, prof, 2), 100000)
        for k in range(2):
            assert abs(np.corrcoef(d.aux[:, k], d.y)[0, 1]) < 0.015

    def test_multiclass_wrong_label_uniform(self):
        spec = GraphSpec(4)
        prof = RateProfile(0.0, (1.0, 0.0, 0.0, 0.0), (0.1, 0.1))
        d = sample_dataset(WorldConfig(spec, prof, 0), 30000)
        counts = np.bincount(d.s_main, minlength=4) / len(d)
        np.testing.assert_allclose(counts, [0.1, 0.3, 0.3, 0.3], atol=0.01)

    def test_rates_recovered(self):
        spec = GraphSpec.binary(2, 1)
        prof = RateProfile(0.4, (0.45, 0.55), (0.9, 0.3), ((0.9, 0.85), (0.8, 0.7), (0.95, 0.9)),
                           ((0.1, 0.15), (0.05, 0.2), (0.12, 0.18)))
        est = estimate_rates(spec, sample_dataset(WorldConfig(spec, prof, 8), 100000))
        assert not est.unestimable
        assert abs(est.pi_adv - 0.4) <= 0.01
        np.testing.assert_allclose(est.class_prior, prof.class_prior, atol=0.01)
        np.testing.assert_allclose(est.main_alpha, prof.main_alpha, atol=0.01)
        np.testing.assert_allclose(est.aux_alpha, prof.aux_alpha, atol=0.01)
        np.testing.assert_allclose(est.aux_eps, prof.aux_eps, atol=0.01)


class TestExact:
    def test_fixture(self):
        world, w = fixture_world()
        assert exact_weighted_accuracy(world, w) == pytest.approx(0.954, abs=1e-9)
        assert exact_weighted_accuracy(world, w, "factorized") == pytest.approx(0.954, abs=1e-9)

    def test_perfect_main(self):
        spec = GraphSpec.per_class(3)
        prof = RateProfile(0.5, (0.2, 0.3, 0.5), (1.0, 1.0), ((0.6, 0.6),) * 6, ((0.4, 0.4),) * 6)
        w = Weights(2.0, (0.0,) * 6, (0.0,) * 3)
        assert exact_weighted_accuracy(WorldConfig(spec, prof), w) == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reduces_to_main(self, seed):
        rng = np.random.default_rng(seed)
        world = random_world(rng)
        w = Weights(float(rng.uniform(0.1, 3)), (0.0,) * world.spec.num_aux, (0.0,) * world.spec.num_classes)
        assert exact_weighted_accuracy(world, w) == pytest.approx(main_weighted_accuracy(world.profile), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_masses_sum_to_one(self, seed):
        world = random_world(np.random.default_rng(seed), max_aux=10)
        np.testing.assert_allclose(cell_masses(world), 1.0, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.booleans())
    def test_lattice_matches_factorized(self, seed, integer_weights):
        rng = np.random.default_rng(seed)
        world = random_world(rng, max_classes=5, max_aux=9)
        P = world.spec.num_params
        theta = rng.integers(-2, 3, P).astype(float) if integer_weights else rng.normal(size=P)
        w = Weights.from_vector(world.spec, theta)
        np.testing.assert_allclose(cell_accuracy(world, w, "lattice"), cell_accuracy(world, w, "factorized"),
                                   atol=1e-12)

    def test_lattice_matches_predict_on_cells(self):
        # deterministic sensors make each cell a single pattern, so predict gives the answer directly
        spec = GraphSpec.per_class(3)
        prof = RateProfile(0.5, (0.2, 0.3, 0.5), (1.0, 0.0), ((1.0, 1.0),) * 6, ((0.0, 0.0),) * 6)
        world = WorldConfig(spec, prof)
        w = Weights.from_vector(spec, np.random.default_rng(3).normal(size=spec.num_params))
        data = sample_dataset(world, 2000)
        hits = predict(spec, w, data) == data.y
        acc = cell_accuracy(world, w)
        for d in (B, A):
            for y in range(3):
                sel = (data.dist == int(d)) & (data.y == y)
                if sel.any() and int(d) == 0:
                    assert hits[sel].mean() == acc[int(d), y]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
    def test_scale_invariance(self, seed, lam):
        rng = np.random.default_rng(seed)
        world = random_world(rng)
        w = Weights.from_vector(world.spec, rng.normal(size=world.spec.num_params))
        assert exact_weighted_accuracy(world, w) == pytest.approx(exact_weighted_accuracy(world, w.scaled(lam)),
                                                                  abs=1e-12)

    def test_budget(self):
        spec = GraphSpec.binary(13, 12)
        prof = RateProfile.homogeneous(spec, 0.9, 0.1)
        w = Weights.zeros(spec)
        with pytest.raises(EnumerationTooLargeError, match="monte_carlo"):
            exact_weighted_accuracy(WorldConfig(spec, prof), w, "lattice")
        with pytest.raises(EnumerationTooLargeError):
            cell_masses(WorldConfig(spec, prof))
        with pytest.raises(InvalidArgumentError):
            cell_accuracy(WorldConfig(spec, prof), w, "magic")

    def test_many_classes_use_factorized(self):
        spec = GraphSpec.per_class(12)  # 24 aux models
        prof = RateProfile(0.5, (1 / 12,) * 12, (0.99, 0.05), ((0.9, 0.9),) * 24, ((0.05, 0.05),) * 24)
        w = Weights(1.0, (2.0,) * 24, (0.0,) * 12)
        acc = exact_weighted_accuracy(WorldConfig(spec, prof), w)
        assert 0.0 < acc <= 1.0


class TestMonteCarlo:
    def test_deterministic(self):
        world, w = fixture_world(9)
        assert monte_carlo_accuracy(world, w, 5000) == monte_carlo_accuracy(world, w, 5000)
        with pytest.raises(InvalidArgumentError):
            monte_carlo_accuracy(world, w, 0)

    def test_close_to_exact(self):
        world, w = fixture_world(1)
        p, se = monte_carlo_accuracy(world, w, 100000)
        assert abs(p - 0.954) <= 3 * se

    def test_deterministic_world(self):
        spec = GraphSpec.binary(1, 1)
        prof = RateProfile(0.5, (0.5, 0.5), (1.0, 0.0), ((1.0, 1.0),) * 2, ((0.0, 0.0),) * 2)
        world = WorldConfig(spec, prof, 0)
        w = Weights.binary(0.0, 1.0, [3.0, 3.0])
        p, se = monte_carlo_accuracy(world, w, 1000)
        assert se == 0.0 and p == exact_weighted_accuracy(world, w) == 1.0


class TestSplit:
    def _world(self, pi):
        spec = GraphSpec(2)
        return WorldConfig(spec, RateProfile(pi, (0.5, 0.5), (1.0, 0.05))), Weights(1.0, (), (0.0, 0.0))

    def test_table_shape(self):
        world, w = self._world(0.5)
        s = clean_robust_split(world, w)
        assert (s.clean, s.robust) == (1.0, pytest.approx(0.05, abs=1e-15))
        assert s.weighted == pytest.approx(0.525, abs=1e-12)

    def test_endpoints(self):
        for pi, attr in ((0.0, "clean"), (1.0, "robust")):
            world, w = self._world(pi)
            s = clean_robust_split(world, w)
            assert s.weighted == getattr(s, attr)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_exact_identity(self, seed):
        rng = np.random.default_rng(seed)
        world = random_world(rng)
        w = Weights.from_vector(world.spec, rng.normal(size=world.spec.num_params))
        s = clean_robust_split(world, w)
        pi = world.profile.pi_adv
        assert abs(s.weighted - ((1 - pi) * s.clean + pi * s.robust)) <= 1e-12
        assert s.weighted == pytest.approx(exact_weighted_accuracy(world, w), abs=1e-12)

    def test_sampled(self):
        world, w = self._world(0.5)
        s = clean_robust_split(world, w, n=20000)
        assert s.clean == 1.0 and abs(s.robust - 0.05) < 0.01
        world0, _ = self._world(0.0)
        s0 = clean_robust_split(world0, w, n=100)
        assert math.isnan(s0.robust) and s0.weighted == s0.clean == 1.0
