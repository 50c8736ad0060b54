import numpy as np
import pytest

from mdmtl.descriptors import DomainSchema, encode_one_hot_const
from mdmtl.errors import ShapeError
from mdmtl.losses import loss_value_grad
from mdmtl.model_single import (
    MethodPreset,
    SingleOutputModel,
    apply_preset,
    default_rank,
    generate_weights,
    init_single,
    predict,
)
from mdmtl.regularizers import RegKind
from oracles import bilinear_loop, rel_err


class TestGenerateWeights:
    def test_identity_factors(self):
        m = SingleOutputModel(np.eye(3), np.eye(3))
        np.testing.assert_array_equal(generate_weights(m, [0.0, 1.0, 0.0]), [0.0, 1.0, 0.0])

    def test_shared_plus_specific(self, rng):
        s = DomainSchema.one_hot_const(3)
        m = init_single(4, s.length, fixed_P=True, seed=1, schema=s)
        w = generate_weights(m, encode_one_hot_const(s, 1))
        np.testing.assert_allclose(w, m.Q[:, 1] + m.Q[:, 3], rtol=1e-15)

    def test_against_loop(self, rng):
        P, Q = rng.normal(size=(5, 3)), rng.normal(size=(3, 4))
        m = SingleOutputModel(P, Q)
        z = rng.normal(size=4)
        expected = [sum(P[d, k] * sum(Q[k, b] * z[b] for b in range(4)) for k in range(3)) for d in range(5)]
        np.testing.assert_allclose(generate_weights(m, z), expected, rtol=1e-12)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            generate_weights(SingleOutputModel(np.eye(2), np.eye(2)), np.ones(3))


class TestPredict:
    def test_orthogonal_input(self, rng):
        m = init_single(4, 3, 2, seed=0)
        z = np.array([1.0, 0.0, 1.0])
        w = generate_weights(m, z)
        x = rng.normal(size=4)
        x -= (x @ w) / (w @ w) * w
        assert abs(predict(m, x, z)) < 1e-14

    def test_two_orders_agree(self, rng):
        m = init_single(6, 4, 3, seed=2)
        for _ in range(20):
            x, z = rng.normal(size=6), rng.normal(size=4)
            a = predict(m, x, z)
            b = float(x @ generate_weights(m, z))
            assert abs(a - b) <= 1e-12 * max(abs(a), 1e-300)
            assert abs(a - bilinear_loop(m.P, m.Q, x, z)) <= 1e-12 * max(abs(a), 1.0)

    def test_rank_one(self, rng):
        u, v = rng.normal(size=4), rng.normal(size=3)
        m = SingleOutputModel(u[:, None], v[None, :])
        x, z = rng.normal(size=4), rng.normal(size=3)
        np.testing.assert_allclose(predict(m, x, z), (x @ u) * (v @ z), rtol=1e-13)

    def test_bilinear(self, rng):
        m = init_single(5, 3, 2, seed=3)
        x1, x2, z = rng.normal(size=5), rng.normal(size=5), rng.normal(size=3)
        a, b = 1.7, -0.3
        lhs = predict(m, a * x1 + b * x2, z)
        rhs = a * predict(m, x1, z) + b * predict(m, x2, z)
        assert rel_err(lhs, rhs) <= 1e-12
        z2 = rng.normal(size=3)
        lhs = predict(m, x1, a * z + b * z2)
        rhs = a * predict(m, x1, z) + b * predict(m, x1, z2)
        assert rel_err(lhs, rhs) <= 1e-12

    def test_batch_forward_matches(self, rng):
        m = init_single(5, 3, 2, seed=4)
        X, Z = rng.normal(size=(7, 5)), rng.normal(size=(7, 3))
        np.testing.assert_allclose(m.forward(X, Z), [predict(m, x, z) for x, z in zip(X, Z)], rtol=1e-12)

    def test_one_hot_const_is_sum_of_two_models(self, rng):
        s = DomainSchema.one_hot_const(3)
        m = init_single(4, s.length, fixed_P=True, seed=5, schema=s)
        x = rng.normal(size=4)
        for i in range(3):
            z = encode_one_hot_const(s, i)
            np.testing.assert_allclose(predict(m, x, z), x @ m.Q[:, i] + x @ m.Q[:, 3], rtol=1e-13)


class TestModelInvariants:
    def test_rank_mismatch(self):
        with pytest.raises(ShapeError):
            SingleOutputModel(np.ones((4, 2)), np.ones((3, 3)))

    def test_fixed_P_must_be_identity(self):
        with pytest.raises(ShapeError):
            SingleOutputModel(np.ones((3, 3)), np.ones((3, 2)), fixed_P=True)

    def test_fixed_P_frozen(self):
        m = init_single(3, 2, fixed_P=True)
        assert "P" in m.frozen
        assert m.n_params == 6

    def test_schema_length_checked(self):
        with pytest.raises(ShapeError):
            SingleOutputModel(np.eye(2), np.ones((2, 3)), schema=DomainSchema.one_hot(2))

    def test_default_rank(self):
        assert default_rank(50) == 13
        assert default_rank(512) == 82
        assert default_rank(2) == 1
        assert default_rank(1) == 1

    def test_init_scale(self):
        m = init_single(100, 4, 10, seed=0)
        assert np.max(np.abs(m.P)) <= 1 / np.sqrt(100)
        assert np.max(np.abs(m.Q)) <= 1 / np.sqrt(4)

    def test_seeded(self):
        a, b = init_single(5, 3, 2, seed=9), init_single(5, 3, 2, seed=9)
        np.testing.assert_array_equal(a.P, b.P)
        np.testing.assert_array_equal(a.Q, b.Q)

    def test_one_hot_gradient_decouples(self, rng):
        m = init_single(4, 3, fixed_P=True, seed=6)
        X = rng.normal(size=(5, 4))
        Z = np.tile([0.0, 1.0, 0.0], (5, 1))
        y = rng.choice([-1, 1], size=5)
        _, ds = loss_value_grad("hinge", m.forward(X, Z), y)
        g = m.backward(X, Z, ds)["Q"]
        assert np.all(g[:, [0, 2]] == 0.0)


class TestPresets:
    def test_rmtl_feda(self):
        model, Z, regs = apply_preset("rmtl_feda", 5, 3)
        np.testing.assert_array_equal(Z, [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]])
        assert model.fixed_P and regs == []

    def test_mtfl(self):
        model, Z, regs = apply_preset(MethodPreset.MTFL, 5, 3, weight=0.1)
        np.testing.assert_array_equal(Z, np.eye(3))
        assert model.fixed_P
        assert [(r.target, r.kind, r.weight) for r in regs] == [("Q", RegKind.L21, 0.1)]

    def test_tnmtl(self):
        model, _, regs = apply_preset("tnmtl", 5, 3)
        assert model.fixed_P
        assert [(r.target, r.kind) for r in regs] == [("Q", RegKind.TRACE)]

    def test_gomtl(self):
        model, Z, regs = apply_preset("gomtl", 6, 3, k=2)
        assert not model.fixed_P and model.rank == 2
        np.testing.assert_array_equal(Z, np.eye(3))
        assert [(r.target, r.kind) for r in regs] == [("P", RegKind.FROBENIUS), ("Q", RegKind.L1)]

    def test_free(self):
        model, _, regs = apply_preset("free", 6, 3, k=2)
        assert not model.fixed_P and regs == []

    def test_unknown(self):
        with pytest.raises(ValueError):
            apply_preset("nope", 3, 2)
