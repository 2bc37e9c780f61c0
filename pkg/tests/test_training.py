import numpy as np
import pytest
import sympy

from bcnn.model import Architecture, init_params
from bcnn.states import StateFamily, sample_dataset
from bcnn.training import (
    AdamState,
    TrainConfig,
    adam_step,
    evaluate,
    operator_count,
    adam_config,
    train,
)

SMALL = Architecture(1, 1, 1, hidden=(16,))


@pytest.fixture(scope="module")
def werner_small():
    return sample_dataset("werner", 600, seed=3)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        w = np.array([1.0])
        cfg = TrainConfig(lr=0.001, beta1=0.9, beta2=0.99)
        adam_step([w], [np.array([1.0])], AdamState.zeros_like([w]), cfg)
        # m_hat = v_hat = g on the first step, so the move is lr * g / (|g| + eps)
        assert w[0] == pytest.approx(1.0 - 0.001 / (1.0 + 1e-8), abs=1e-15)

    def test_zero_gradient(self):
        w = np.array([0.3, -2.0])
        state = AdamState.zeros_like([w])
        for _ in range(5):
            adam_step([w], [np.zeros(2)], state, TrainConfig())
        np.testing.assert_array_equal(w, [0.3, -2.0])

    def test_frozen_entries(self):
        w = np.array([1.0, 1.0])
        adam_step([w], [np.ones(2)], AdamState.zeros_like([w]), TrainConfig(), [np.array([True, False])])
        assert w[0] == 1.0 and w[1] < 1.0

    def test_zero_betas_against_symbolic_formula(self):
        g, lr, eps, b1, b2, t = sympy.symbols("g lr eps beta1 beta2 t")
        m = (1 - b1) * g
        v = (1 - b2) * g**2
        step = lr * (m / (1 - b1**t)) / (sympy.sqrt(v / (1 - b2**t)) + eps)
        reduced = sympy.simplify(step.subs({b1: 0, b2: 0}))
        cfg = TrainConfig(lr=0.01, beta1=0.0, beta2=0.0, epsilon=1e-8)
        for gv in (-3.0, -0.2, 1e-9, 0.7, 5.0):
            w = np.array([0.5])
            state = AdamState.zeros_like([w])
            for k in range(1, 4):
                before = w[0]
                adam_step([w], [np.array([gv])], state, cfg)
                want = float(reduced.subs({g: gv, lr: 0.01, eps: 1e-8, t: k}))
                assert before - w[0] == pytest.approx(want, rel=1e-12)

    def test_matches_reference_loop(self, rng):
        cfg = TrainConfig(lr=0.01, beta1=0.8, beta2=0.95)
        w = rng.standard_normal(5)
        ref = w.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        state = AdamState.zeros_like([w])
        for t in range(1, 20):
            g = rng.standard_normal(5)
            adam_step([w], [g], state, cfg)
            m = 0.8 * m + 0.2 * g
            v = 0.95 * v + 0.05 * g * g
            ref -= 0.01 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.95**t)) + 1e-8)
        np.testing.assert_allclose(w, ref, rtol=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0)
        with pytest.raises(ValueError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestAdamRows:
    def test_rows(self):
        assert adam_config("werner", 1) == TrainConfig(0.001, 0.9, 0.99, 1e-8, 10, 10, 0)
        assert adam_config("g1werner", 1).beta1 == 0.35
        assert adam_config("g2werner", 2).batch_size == 200
        assert adam_config("g2werner", 2).epochs == 30
        assert adam_config("g2werner", 7).beta1 == 0.375
        assert adam_config("general", 9).beta2 == 0.85

    def test_nearest_row(self):
        assert adam_config("general", 6) == adam_config("general", 8)
        assert adam_config("general", 27) == adam_config("general", 15)

    def test_operator_count(self):
        assert operator_count(Architecture(3, 1, 1)) == 3
        assert operator_count(Architecture(1, 4, 4, fix_identity=True)) == 15
        assert operator_count(Architecture(9, 2, 2, fix_identity=True)) == 27


class TestTrain:
    def test_deterministic(self, werner_small):
        cfg = TrainConfig(batch_size=32, epochs=2, seed=4)
        a, ha = train(werner_small, SMALL, cfg)
        b, hb = train(werner_small, SMALL, cfg)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)
        assert ha.loss == hb.loss

    def test_zero_epochs_returns_init(self, werner_small):
        cfg = TrainConfig(epochs=0, seed=8)
        params, hist = train(werner_small, SMALL, cfg)
        init = init_params(SMALL, np.random.default_rng(8))
        for x, y in zip(params.arrays(), init.arrays()):
            np.testing.assert_array_equal(x, y)
        assert hist.loss == [] and hist.seconds == []

    def test_all_zero_labels(self, werner_small):
        ds = werner_small.with_labels(np.zeros(len(werner_small)))
        params, hist = train(ds, SMALL, TrainConfig(batch_size=20, epochs=5, seed=1))
        acc, errors = evaluate(params, ds)
        assert acc == 1.0 and errors == []
        assert hist.loss[-1] < hist.loss[0]

    def test_history_lengths(self, werner_small):
        _, hist = train(werner_small, SMALL, TrainConfig(batch_size=64, epochs=3))
        assert len(hist.loss) == len(hist.accuracy) == len(hist.seconds) == 3

    def test_learns_werner(self, werner_small):
        test = sample_dataset("werner", 400, seed=99)
        params, hist = train(werner_small, SMALL, TrainConfig(lr=0.01, batch_size=10, epochs=5, seed=2))
        assert hist.loss[-1] < hist.loss[0]
        acc, _ = evaluate(params, test)
        assert acc > 0.95

    def test_fixed_identity_untouched(self):
        ds = sample_dataset("general", 200, seed=1)
        arch = Architecture(2, 2, 2, hidden=(8,), fix_identity=True)
        params, _ = train(ds, arch, TrainConfig(lr=0.05, batch_size=20, epochs=2))
        np.testing.assert_array_equal(params.kernels1[:, 0], [[0, 0, 0, 1]] * 2)
        np.testing.assert_array_equal(params.kernels2[:, 0], [[0, 0, 0, 1]] * 2)

    def test_empty(self, werner_small):
        with pytest.raises(ValueError):
            train(werner_small.subset(slice(0, 0)), SMALL, TrainConfig())


class TestEvaluate:
    def test_constant_classifier_on_balanced_set(self):
        ds = sample_dataset("general", 200, seed=2, balance=True)
        params = init_params(SMALL, np.random.default_rng(0))
        params.weights[-1][:] = 0.0
        params.biases[-1][:] = 1.0
        acc, errors = evaluate(params, ds)
        assert acc == 0.5 and len(errors) == 100
        assert all(e.label == 0 for e in errors)

    def test_error_records_carry_parameters(self):
        ds = sample_dataset("g2werner", 100, seed=2)
        params = init_params(SMALL, np.random.default_rng(0))
        acc, errors = evaluate(params, ds)
        assert len(errors) == round((1 - acc) * 100)
        for e in errors:
            assert e.p == ds.p[e.index] and e.theta == ds.theta[e.index] and e.phi == ds.phi[e.index]
            assert e.lambda_min == ds.lambda_min[e.index]

    def test_family_enum(self):
        assert StateFamily.parse("G2-Werner") is StateFamily.G2_WERNER
        with pytest.raises(ValueError):
            StateFamily.parse("ghz")
