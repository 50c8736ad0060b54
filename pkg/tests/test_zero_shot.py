import numpy as np
import pytest

from mdmtl.descriptors import DomainSchema, encode_distributed, encode_one_hot
from mdmtl.errors import DescriptorError, ShapeError
from mdmtl.model_multi import generate_weight_matrix, init_cp, init_tucker
from mdmtl.model_single import SingleOutputModel, generate_weights, init_single, predict
from mdmtl.zero_shot import zsda_predict, zsda_weight_matrix, zsda_weights, zsl_classify
from oracles import rel_err

GRID = DomainSchema.distributed([("A", ("1", "2")), ("B", ("1", "2"))])


class TestZSDAWeights:
    def test_seen_descriptor_consistent(self, rng):
        m = init_single(6, 4, 3, seed=0, schema=GRID)
        for z in GRID.all_descriptors():
            np.testing.assert_allclose(m.P @ zsda_weights(m, z), generate_weights(m, z), rtol=1e-14)
            x = rng.normal(size=6)
            np.testing.assert_allclose(zsda_predict(m, x, z)[0], predict(m, x, z), rtol=1e-12)

    def test_unseen_combination_sums_columns(self):
        m = init_single(6, 4, 3, seed=1, schema=GRID)
        z = encode_distributed(GRID, ("2", "1"))
        np.testing.assert_allclose(zsda_weights(m, z), m.Q[:, 1] + m.Q[:, 2], rtol=1e-14)

    def test_zero_descriptor(self):
        m = init_single(6, 4, 3, seed=2, schema=GRID)
        assert np.all(zsda_weights(m, np.zeros(4)) == 0)

    def test_linear(self, rng):
        m = init_single(6, 4, 3, seed=3, schema=GRID)
        z1, z2 = rng.normal(size=4), rng.normal(size=4)
        lhs = zsda_weights(m, 0.3 * z1 - 2.0 * z2)
        rhs = 0.3 * zsda_weights(m, z1) - 2.0 * zsda_weights(m, z2)
        assert rel_err(lhs, rhs) <= 1e-12

    def test_one_hot_schema_rejected(self):
        s = DomainSchema.one_hot(4)
        m = init_single(6, 4, fixed_P=True, schema=s)
        with pytest.raises(DescriptorError, match="distributed"):
            zsda_weights(m, encode_one_hot(s, 0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            zsda_weights(init_single(6, 4, 3), np.ones(5))

    def test_multi_model_rejected(self):
        with pytest.raises(TypeError):
            zsda_weights(init_cp(6, 2, 4, 2), np.ones(4))


class TestZSDAWeightMatrix:
    def test_seen(self):
        m = init_tucker(6, 3, 4, (2, 2, 2), seed=0, schema=GRID)
        for z in GRID.all_descriptors():
            np.testing.assert_array_equal(zsda_weight_matrix(m, z), generate_weight_matrix(m, z.values))

    def test_unseen_additive(self):
        m = init_cp(6, 3, 4, 2, seed=1, schema=GRID)
        W = zsda_weight_matrix(m, encode_distributed(GRID, ("2", "1")))
        e = np.eye(4)
        expected = generate_weight_matrix(m, e[1]) + generate_weight_matrix(m, e[2])
        assert rel_err(W, expected) <= 1e-12

    def test_zero(self):
        m = init_cp(6, 3, 4, 2, seed=2, schema=GRID)
        assert np.all(zsda_weight_matrix(m, np.zeros(4)) == 0)

    def test_predict_multi(self, rng):
        m = init_cp(6, 3, 4, 2, seed=3, schema=GRID)
        X = rng.normal(size=(5, 6))
        z = encode_distributed(GRID, ("1", "2"))
        np.testing.assert_allclose(zsda_predict(m, X, z), m.forward(X, np.tile(z.values, (5, 1))), rtol=1e-12)


class TestZSL:
    def test_single_candidate(self, rng):
        m = init_single(5, 3, 2, seed=0)
        assert zsl_classify(m, rng.normal(size=5), [np.ones(3)]) == 0

    def test_ties_lowest_index(self, rng):
        m = init_single(5, 3, 2, seed=0)
        z = rng.normal(size=3)
        assert zsl_classify(m, rng.normal(size=5), [z, z, z]) == 0

    def test_scale_invariant(self, rng):
        m = init_single(5, 4, 3, seed=1)
        cands = list(rng.normal(size=(6, 4)))
        for _ in range(20):
            x = rng.normal(size=5)
            assert zsl_classify(m, x, cands) == zsl_classify(m, 7.5 * x, cands)

    def test_matches_argmax(self, rng):
        m = init_single(5, 4, 3, seed=2)
        cands = rng.normal(size=(6, 4))
        x = rng.normal(size=5)
        assert zsl_classify(m, x, cands) == int(np.argmax([predict(m, x, z) for z in cands]))

    def test_recovers_own_task(self, rng):
        # task weights are orthonormal; instances lie along their own task's weight
        basis, _ = np.linalg.qr(rng.normal(size=(8, 4)))
        m = SingleOutputModel(basis, np.eye(4))
        Z = list(np.eye(4))
        for t in range(4):
            for _ in range(10):
                x = 3.0 * basis[:, t] + 0.3 * rng.normal(size=8)
                assert zsl_classify(m, x, Z) == t

    def test_empty(self):
        with pytest.raises(ValueError):
            zsl_classify(init_single(5, 3, 2), np.ones(5), [])

    def test_multi_output_rejected(self):
        with pytest.raises(ShapeError):
            zsl_classify(init_cp(5, 2, 3, 2), np.ones(5), [np.ones(3)])
