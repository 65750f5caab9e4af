import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kemlp.errors import InvalidArgumentError, UnsupportedShapeError
from kemlp.graph import (MAIN, AuxModel, Dist, Example, GraphSpec, Kind, SensorData, Weights,
                         class_scores, delta, factor_value, infer, posterior, posterior_matrix, predict)

from conftest import random_data, random_spec

DELTA_W = Weights.binary(0.5, 2.0, [1.0, 3.0])
DELTA_X = Example(1, Dist.BENIGN, 0, (1, 0))


class TestFactors:
    @pytest.mark.parametrize("kind,s,o,expected", [
        (Kind.PERMISSIVE, 0, 0, 1), (Kind.PERMISSIVE, 0, 1, 1),
        (Kind.PERMISSIVE, 1, 0, 0), (Kind.PERMISSIVE, 1, 1, 1),
        (Kind.PREVENTATIVE, 0, 0, 1), (Kind.PREVENTATIVE, 0, 1, 0),
        (Kind.PREVENTATIVE, 1, 0, 1), (Kind.PREVENTATIVE, 1, 1, 1),
    ])
    def test_truth_table(self, kind, s, o, expected):
        spec = GraphSpec(2, (AuxModel("a", kind, 1),))
        assert factor_value(spec, 0, o, Example(0, Dist.BENIGN, 0, (s,))) == expected

    def test_main_factor(self):
        spec = GraphSpec.binary(0, 0)
        x = Example(1, Dist.BENIGN, 1)
        assert factor_value(spec, MAIN, 1, x) == 1
        assert factor_value(spec, MAIN, 0, x) == 0

    def test_bad_indices(self, spec11):
        x = Example(0, Dist.BENIGN, 0, (0, 0))
        with pytest.raises(InvalidArgumentError):
            factor_value(spec11, 2, 0, x)
        with pytest.raises(InvalidArgumentError):
            factor_value(spec11, 0, 2, x)
        with pytest.raises(InvalidArgumentError):
            factor_value(spec11, 0, 0, Example(0, Dist.BENIGN, 0, (0,)))


def inner_product_margin(spec, w, x):
    """<w, f_1 - f_0> computed factor by factor."""
    m = w.w_main * (factor_value(spec, MAIN, 1, x) - factor_value(spec, MAIN, 0, x))
    for k in range(spec.num_aux):
        m += w.w_aux[k] * (factor_value(spec, k, 1, x) - factor_value(spec, k, 0, x))
    return m + w.bias[1] - w.bias[0]


class TestDelta:
    def test_zero_params(self, spec11):
        assert delta(spec11, Weights.zeros(spec11), DELTA_X, 1) == 0.0

    def test_hand_value(self, spec11):
        assert delta(spec11, DELTA_W, DELTA_X, 1) == pytest.approx(-3.5, abs=1e-12)
        assert inner_product_margin(spec11, DELTA_W, DELTA_X) == pytest.approx(-3.5, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=5, max_size=5),
           st.integers(0, 1), st.integers(0, 1), st.integers(0, 1))
    def test_closed_form_matches_factors(self, params, s_main, si, sj):
        spec = GraphSpec.binary(1, 1)
        w = Weights.binary(params[0], params[1], params[2:4])
        x = Example(0, Dist.BENIGN, s_main, (si, sj))
        closed = (w.b + w.w_main * (2 * s_main - 1) + w.w_aux[0] * si - w.w_aux[1] * (1 - sj))
        assert delta(spec, w, x, 1) == pytest.approx(closed, abs=1e-9)
        assert delta(spec, w, x, 1) == pytest.approx(inner_product_margin(spec, w, x), abs=1e-9)
        assert delta(spec, w, x, 0) == -delta(spec, w, x, 1)

    def test_multiclass_rejected(self):
        spec = GraphSpec(3)
        with pytest.raises(UnsupportedShapeError):
            delta(spec, Weights.zeros(spec), Example(0, Dist.BENIGN, 0), 1)

    def test_bad_y_tilde(self, spec11):
        with pytest.raises(InvalidArgumentError):
            delta(spec11, DELTA_W, DELTA_X, 2)


class TestPosterior:
    def test_symmetric(self, spec11):
        np.testing.assert_array_equal(posterior(spec11, Weights.zeros(spec11), DELTA_X), [0.5, 0.5])

    def test_hand_value(self, spec11):
        p = posterior(spec11, DELTA_W, DELTA_X)
        assert p[1] == pytest.approx(1 / (1 + math.exp(3.5)), rel=1e-12)
        assert p[1] == pytest.approx(0.029312, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_normalized(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        w = Weights.from_vector(spec, rng.uniform(-50, 50, spec.num_params))
        p = posterior_matrix(spec, w, random_data(rng, spec, 20))
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_extreme_margin_is_finite(self, spec11):
        w = Weights.binary(0.0, 700.0, [700.0, 700.0])
        p = posterior(spec11, w, Example(0, Dist.BENIGN, 1, (1, 1)))
        assert np.isfinite(p).all() and p[1] == 1.0


class TestScoresAndInference:
    def test_zero_weights_give_bias(self):
        spec = GraphSpec.per_class(3)
        w = Weights(0.0, (0.0,) * 6, (0.1, 0.2, 0.3))
        x = Example(0, Dist.BENIGN, 1, (1, 0, 1, 1, 0, 0))
        np.testing.assert_array_equal(class_scores(spec, w, x), [0.1, 0.2, 0.3])

    def test_single_indicator(self):
        spec = GraphSpec(3)
        np.testing.assert_array_equal(
            class_scores(spec, Weights(1.0, (), (0, 0, 0)), Example(0, Dist.BENIGN, 2)), [0, 0, 1])

    def test_binary_consistency(self, spec11):
        s = class_scores(spec11, DELTA_W, DELTA_X)
        assert s[1] - s[0] == pytest.approx(-3.5, abs=1e-12)

    def test_infer_hand_value(self, spec11):
        assert infer(spec11, DELTA_W, DELTA_X) == 0

    def test_global_tie_goes_to_main(self, spec11):
        assert infer(spec11, Weights.zeros(spec11), Example(0, Dist.BENIGN, 1, (0, 1))) == 1

    def test_tie_without_main_goes_to_lowest(self):
        spec = GraphSpec(3)
        w = Weights(0.5, (), (1.0, 1.0, 0.0))
        assert infer(spec, w, Example(0, Dist.BENIGN, 2)) == 0

    def test_tie_with_main_among_tied(self):
        spec = GraphSpec(3)
        w = Weights(1.0, (), (2.0, 1.0, 0.0))  # scores (2, 2, 0)
        assert infer(spec, w, Example(0, Dist.BENIGN, 1)) == 1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_main_dominates_without_aux(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        w = Weights(float(rng.uniform(0.01, 5)), (0.0,) * spec.num_aux, (0.0,) * spec.num_classes)
        data = random_data(rng, spec, 30)
        np.testing.assert_array_equal(predict(spec, w, data), data.s_main)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
    def test_bias_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        theta = rng.integers(-3, 4, spec.num_params).astype(float)  # integers keep ties exact
        w = Weights.from_vector(spec, theta)
        shifted = Weights(w.w_main, w.w_aux, tuple(b + round(shift) for b in w.bias))
        data = random_data(rng, spec, 30)
        np.testing.assert_array_equal(predict(spec, w, data), predict(spec, shifted, data))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
    def test_scale_invariance_without_ties(self, seed, lam):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng)
        w = Weights.from_vector(spec, rng.normal(size=spec.num_params))
        data = random_data(rng, spec, 30)
        np.testing.assert_array_equal(predict(spec, w, data), predict(spec, w.scaled(lam), data))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_binary_sign_consistency(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(rng, max_classes=2)
        w = Weights.from_vector(spec, rng.normal(size=spec.num_params) * 5)
        for x in random_data(rng, spec, 10):
            s = class_scores(spec, w, x)
            assert np.sign(s[1] - s[0]) == np.sign(delta(spec, w, x, 1))


class TestTypes:
    def test_spec_validation(self):
        with pytest.raises(InvalidArgumentError):
            GraphSpec(1)
        with pytest.raises(InvalidArgumentError):
            GraphSpec(2, (AuxModel("a", Kind.PERMISSIVE, 0), AuxModel("a", Kind.PERMISSIVE, 1)))
        with pytest.raises(InvalidArgumentError):
            GraphSpec(2, (AuxModel("a", Kind.PERMISSIVE, 2),))
        with pytest.raises(InvalidArgumentError):
            GraphSpec(2, (AuxModel("dist", Kind.PERMISSIVE, 0),))

    def test_spec_helpers(self):
        spec = GraphSpec.per_class(3, 1, 2)
        assert spec.num_aux == 9 and spec.num_params == 13
        assert spec.index_of("prev_c1_1") == 5
        assert list(spec.targets) == [0, 0, 0, 1, 1, 1, 2, 2, 2]

    def test_weights(self, spec11):
        with pytest.raises(InvalidArgumentError):
            Weights(float("nan"), (0.0, 0.0), (0.0, 0.0))
        theta = np.arange(5.0)
        assert np.array_equal(Weights.from_vector(spec11, theta).to_vector(), theta)
        with pytest.raises(InvalidArgumentError):
            Weights(0.0, (0.0,), (0.0, 0.0)).check(spec11)
        assert DELTA_W.b == 0.5

    def test_sensor_data(self, spec11):
        with pytest.raises(InvalidArgumentError):
            SensorData([0, 1], [0], [0, 1], [[0, 0], [0, 0]])
        bad = SensorData([0, 2], [0, 0], [0, 1], [[0, 0], [0, 0]])
        with pytest.raises(InvalidArgumentError):
            bad.validate(spec11)
        d = SensorData.from_examples([DELTA_X, Example(0, Dist.ADVERSARIAL, 1, (0, 1))])
        assert d[1] == Example(0, Dist.ADVERSARIAL, 1, (0, 1))
        assert list(d) == [DELTA_X, Example(0, Dist.ADVERSARIAL, 1, (0, 1))]
        with pytest.raises(ValueError):
            d.y[0] = 1

    def test_dist_parse(self):
        assert Dist.parse("adversarial") is Dist.ADVERSARIAL
        with pytest.raises(InvalidArgumentError):
            Dist.parse("attack")
