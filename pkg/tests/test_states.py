import math

import numpy as np
import pytest

from bcnn.linalg import partial_transpose
from bcnn.states import (
    InvalidStateError,
    StateFamily,
    analytic_label,
    gen_g1_werner,
    gen_g2_werner,
    gen_general,
    gen_werner,
    label_ppt,
    read_dataset,
    sample_dataset,
    validate_density,
    write_dataset,
)


def numpy_lambda_min(rho):
    return np.linalg.eigvalsh(partial_transpose(rho, [2, 2], 1))[0]


class TestWerner:
    def test_entangled_above_third(self):
        assert gen_werner(0.5).entangled

    def test_small_p_is_maximally_mixed(self):
        s = gen_werner(1e-9)
        np.testing.assert_allclose(s.matrix, np.eye(4) / 4, atol=1e-9)
        assert not s.entangled

    def test_threshold(self):
        assert abs(gen_werner(1 / 3).lambda_min) < 1e-9

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_range(self, p):
        with pytest.raises(ValueError):
            gen_werner(p)


class TestG1Werner:
    def test_threshold_at_quarter_pi(self):
        assert not gen_g1_werner(1 / 3 - 1e-6, math.pi / 4).entangled
        assert gen_g1_werner(1 / 3 + 1e-6, math.pi / 4).entangled

    def test_small_p_is_product(self):
        theta = 0.7
        s = gen_g1_werner(1e-12, theta)
        prod = np.kron(np.eye(2) / 2, np.diag([math.cos(theta) ** 2, math.sin(theta) ** 2]))
        np.testing.assert_allclose(s.matrix, prod, atol=1e-11)
        assert not s.entangled

    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9])
    def test_half_pi_is_classical(self, p):
        # sin(2 theta) = 0: a mixture of |11> and (I/2) (x) |1><1|, a product-diagonal state
        s = gen_g1_werner(p, math.pi / 2)
        assert abs(s.lambda_min - numpy_lambda_min(s.matrix)) < 1e-12
        assert abs(s.lambda_min) < 1e-12

    def test_range(self):
        with pytest.raises(ValueError):
            gen_g1_werner(0.5, 0.0)
        with pytest.raises(ValueError):
            gen_g1_werner(0.5, 2 * math.pi)


class TestG2Werner:
    def test_threshold_at_half_pi(self):
        assert not gen_g2_werner(1 / 3 - 1e-6, math.pi / 2, 1.0).entangled
        assert gen_g2_werner(1 / 3 + 1e-6, math.pi / 2, 1.0).entangled

    def test_small_theta_separable(self):
        for p in np.linspace(0.01, 0.99, 50):
            assert not gen_g2_werner(p, 1e-9, 2.0).entangled

    def test_phi_does_not_change_lambda_min(self):
        lam = [gen_g2_werner(0.6, math.pi / 2, phi).lambda_min for phi in np.linspace(0.01, 6.27, 40)]
        np.testing.assert_allclose(lam, (1 - 3 * 0.6) / 4, atol=1e-12)
        lam = [numpy_lambda_min(gen_g2_werner(0.45, 1.1, phi).matrix) for phi in np.linspace(0.01, 6.27, 40)]
        assert np.ptp(lam) < 1e-12

    def test_range(self):
        with pytest.raises(ValueError):
            gen_g2_werner(0.5, math.pi, 1.0)
        with pytest.raises(ValueError):
            gen_g2_werner(0.5, 1.0, 0.0)


class TestGeneral:
    def test_valid_state(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = gen_general(rng)
            validate_density(s.matrix)
            assert abs(np.trace(s.matrix) - 1) < 1e-12
            assert abs(s.lambda_min - numpy_lambda_min(s.matrix)) < 1e-12

    def test_deterministic(self):
        a = gen_general(np.random.default_rng(11))
        b = gen_general(np.random.default_rng(11))
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_entangled_fraction_is_nontrivial(self):
        ds = sample_dataset(StateFamily.GENERAL, 10_000, seed=4)
        truth = np.array([numpy_lambda_min(m) < 0 for m in ds.matrices])
        np.testing.assert_array_equal(ds.labels.astype(bool), truth)
        assert 0.0 < truth.mean() < 1.0


class TestLabels:
    def test_maximally_mixed(self):
        lam, ent = label_ppt(np.eye(4) / 4)
        assert abs(lam - 0.25) < 1e-15 and not ent

    def test_bell(self, bell):
        lam, ent = label_ppt(bell)
        assert abs(lam - np.linalg.eigvalsh(partial_transpose(bell))[0]) < 1e-12
        assert abs(lam + 0.5) < 1e-12 and ent

    def test_rejects_non_density(self):
        with pytest.raises(InvalidStateError):
            label_ppt(np.eye(4))
        with pytest.raises(InvalidStateError):
            label_ppt(np.diag([1.5, -0.5, 0, 0]))

    def test_werner_grid(self):
        for p in np.linspace(0.0005, 0.9995, 1000):
            if abs(p - 1 / 3) < 1e-6:
                continue
            assert gen_werner(p).entangled == (p > 1 / 3)

    def test_analytic(self):
        assert analytic_label(StateFamily.WERNER, 0.34)
        assert not analytic_label(StateFamily.G1_WERNER, 0.2)
        assert analytic_label(StateFamily.G2_WERNER, 0.6, math.pi / 6)
        with pytest.raises(ValueError):
            analytic_label(StateFamily.GENERAL, 0.5)


class TestDatasets:
    def test_balanced_general(self):
        ds = sample_dataset("general", 1000, seed=9, balance=True)
        assert ds.labels.sum() == 500 and len(ds) == 1000

    def test_balanced_odd(self):
        ds = sample_dataset("general", 7, seed=9, balance=True)
        assert ds.labels.sum() == 3 and len(ds) == 7

    def test_werner_fraction(self):
        ds = sample_dataset("werner", 100_000, seed=2)
        assert abs(ds.labels.mean() - 2 / 3) < 0.01

    def test_deterministic(self):
        for fam in StateFamily:
            a = sample_dataset(fam, 50, seed=5)
            b = sample_dataset(fam, 50, seed=5)
            np.testing.assert_array_equal(a.matrices, b.matrices)
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_prefix_stable(self):
        # record i depends only on (seed, i)
        a = sample_dataset("g2werner", 20, seed=5)
        b = sample_dataset("g2werner", 40, seed=5)
        np.testing.assert_array_equal(a.matrices, b.matrices[:20])

    @pytest.mark.parametrize("family", ["werner", "g1werner", "g2werner"])
    def test_ppt_agrees_with_analytic(self, family):
        ds = sample_dataset(family, 3000, seed=8)
        for rec in ds:
            if family == "g2werner":
                gap = abs(rec.p - 1 / (1 + 2 * math.sin(rec.theta)))
            else:
                gap = abs(rec.p - 1 / 3)
                if family == "g1werner" and abs(math.sin(2 * rec.theta)) < 1e-3:
                    continue
            if gap > 1e-6:
                assert rec.entangled == analytic_label(ds.family, rec.p, rec.theta)

    def test_records_valid(self):
        for fam in StateFamily:
            ds = sample_dataset(fam, 200, seed=1)
            ds.validate()
            for rec in ds:
                assert rec.family is ds.family
                assert rec.entangled == (rec.lambda_min < 0)

    def test_parameters_in_range(self):
        ds = sample_dataset("g2werner", 2000, seed=3)
        assert np.all((ds.p > 0) & (ds.p < 1))
        assert np.all((ds.theta > 0) & (ds.theta < math.pi))
        assert np.all((ds.phi > 0) & (ds.phi < 2 * math.pi))

    def test_size(self):
        with pytest.raises(ValueError):
            sample_dataset("werner", 0, seed=1)

    def test_round_trip(self, tmp_path):
        for fam in StateFamily:
            ds = sample_dataset(fam, 30, seed=6, split="test")
            write_dataset(ds, tmp_path / "d.csv")
            back = read_dataset(tmp_path / "d.csv")
            np.testing.assert_array_equal(back.matrices, ds.matrices)
            np.testing.assert_array_equal(back.labels, ds.labels)
            np.testing.assert_array_equal(back.lambda_min, ds.lambda_min)
            np.testing.assert_array_equal(back.p, ds.p)
            np.testing.assert_array_equal(back.phi, ds.phi)
            assert (back.family, back.seed, back.split) == (ds.family, 6, "test")

    def test_file_layout(self, tmp_path):
        ds = sample_dataset("werner", 3, seed=6)
        write_dataset(ds, tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0].startswith("# bcnn-dataset v1")
        assert lines[1].split(",")[:6] == ["family", "p", "theta", "phi", "lambda_min", "label"]
        fields = lines[2].split(",")
        assert len(fields) == 38 and fields[0] == "Werner" and fields[2] == "" and fields[3] == ""
