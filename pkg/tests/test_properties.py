"""Randomised invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mdmtl.descriptors import DomainSchema, build_Z
from mdmtl.losses import loss_value_grad
from mdmtl.model_multi import (
    FullTensorModel,
    compose,
    generate_weight_matrix,
    init_cp,
    init_tt,
    init_tucker,
    predict_multi,
    to_tucker,
)
from mdmtl.model_single import init_single, predict
from mdmtl.persist import dumps_model, loads_model
from mdmtl.regularizers import reg_value_subgrad
from mdmtl.tensor_core import kron, mode2_refold, mode2_unfold, mode_product
from mdmtl.zero_shot import zsda_weights, zsl_classify
from oracles import rel_err

dim = st.integers(1, 5)
seed = st.integers(0, 2**31 - 1)
SETTINGS = settings(max_examples=40, deadline=None)


def rng_of(s):
    return np.random.default_rng(s)


@st.composite
def multi_model(draw):
    d, c, b = draw(dim), draw(dim), draw(dim)
    s = draw(seed)
    kind = draw(st.sampled_from(["cp", "tucker", "tt"]))
    if kind == "cp":
        return init_cp(d, c, b, draw(st.integers(1, 3)), seed=s), s
    if kind == "tucker":
        return init_tucker(d, c, b, (draw(st.integers(1, d)), draw(st.integers(1, c)), draw(st.integers(1, b))), seed=s), s
    return init_tt(d, c, b, (draw(st.integers(1, 3)), draw(st.integers(1, 3))), seed=s), s


class TestTensorProperties:
    @SETTINGS
    @given(dim, dim, dim, seed)
    def test_unfold_refold(self, a, b, c, s):
        t = rng_of(s).normal(size=(a, b, c))
        np.testing.assert_array_equal(mode2_refold(mode2_unfold(t), t.shape), t)

    @SETTINGS
    @given(dim, dim, dim, seed)
    def test_mode_products_commute(self, a, b, c, s):
        r = rng_of(s)
        t, x, z = r.normal(size=(a, b, c)), r.normal(size=a), r.normal(size=c)
        lhs = mode_product(t, x, 1) @ z
        rhs = x @ mode_product(t, z, 3)
        assert rel_err(lhs, rhs) <= 1e-12

    @SETTINGS
    @given(dim, dim, seed)
    def test_kron_norm(self, a, b, s):
        r = rng_of(s)
        u, v = r.normal(size=a), r.normal(size=b)
        assert abs(np.linalg.norm(kron(u, v)) - np.linalg.norm(u) * np.linalg.norm(v)) <= 1e-12 * (1 + np.linalg.norm(u) * np.linalg.norm(v))


class TestModelProperties:
    @SETTINGS
    @given(multi_model())
    def test_factorised_equals_composed(self, ms):
        m, s = ms
        full = FullTensorModel(compose(m))
        r = rng_of(s + 1)
        d, _, b = m.dims
        x, z = r.normal(size=d), r.normal(size=b)
        assert rel_err(predict_multi(m, x, z), predict_multi(full, x, z)) <= 1e-10

    @SETTINGS
    @given(multi_model())
    def test_to_tucker_preserves(self, ms):
        m, s = ms
        tk = to_tucker(m)
        r = rng_of(s + 2)
        d, _, b = m.dims
        X, Z = r.normal(size=(5, d)), r.normal(size=(5, b))
        assert rel_err(tk.forward(X, Z), m.forward(X, Z)) <= 1e-10

    @SETTINGS
    @given(multi_model())
    def test_weight_matrix_linear_in_z(self, ms):
        m, s = ms
        r = rng_of(s + 3)
        b = m.dims[2]
        z1, z2 = r.normal(size=b), r.normal(size=b)
        lhs = generate_weight_matrix(m, 2.0 * z1 - z2)
        rhs = 2.0 * generate_weight_matrix(m, z1) - generate_weight_matrix(m, z2)
        assert rel_err(lhs, rhs) <= 1e-12

    @SETTINGS
    @given(multi_model())
    def test_persist_round_trip(self, ms):
        m, _ = ms
        back = loads_model(dumps_model(m))
        for name in m.blocks:
            assert getattr(m, name).tobytes() == getattr(back, name).tobytes()

    @SETTINGS
    @given(dim, dim, st.integers(1, 4), seed)
    def test_single_bilinear_in_x(self, d, b, k, s):
        m = init_single(d, b, min(k, d), seed=s)
        r = rng_of(s)
        x1, x2, z = r.normal(size=d), r.normal(size=d), r.normal(size=b)
        a, b = predict(m, x1 + x2, z), predict(m, x1, z) + predict(m, x2, z)
        assert abs(a - b) <= 1e-12 * (1.0 + abs(predict(m, x1, z)) + abs(predict(m, x2, z)))


class TestLossRegProperties:
    @SETTINGS
    @given(st.integers(2, 6), seed, st.floats(-50, 50))
    def test_cross_entropy_shift(self, c, s, shift):
        r = rng_of(s)
        S, y = r.normal(size=(4, c)), r.integers(0, c, size=4)
        a, _ = loss_value_grad("cross_entropy", S, y)
        b, _ = loss_value_grad("cross_entropy", S + shift, y)
        assert np.all(a >= 0)
        assert np.max(np.abs(a - b)) <= 1e-12

    @SETTINGS
    @given(seed)
    def test_hinge_nonnegative(self, s):
        r = rng_of(s)
        v, _ = loss_value_grad("hinge", r.normal(size=10) * 3, r.choice([-1, 1], size=10))
        assert np.all(v >= 0)

    @SETTINGS
    @given(dim, dim, seed)
    def test_trace_dominates_frobenius(self, a, b, s):
        M = rng_of(s).normal(size=(a, b))
        assert reg_value_subgrad("trace", M, 1.0)[0] >= np.linalg.norm(M) * (1 - 1e-12)

    @SETTINGS
    @given(dim, dim, seed, st.sampled_from(["frobenius", "l21", "trace", "l1"]))
    def test_penalties_nonnegative_and_homogeneous(self, a, b, s, kind):
        M = rng_of(s).normal(size=(a, b))
        v1 = reg_value_subgrad(kind, M, 1.0)[0]
        v2 = reg_value_subgrad(kind, M, 2.5)[0]
        assert v1 >= 0
        assert abs(v2 - 2.5 * v1) <= 1e-12 * max(v2, 1.0)


class TestDescriptorProperties:
    @SETTINGS
    @given(st.lists(st.integers(1, 3), min_size=1, max_size=3))
    def test_distributed_grid(self, sizes):
        factors = [(f"f{i}", tuple(str(j) for j in range(n))) for i, n in enumerate(sizes)]
        s = DomainSchema.distributed(factors)
        Z = build_Z(s.all_descriptors())
        assert Z.shape == (sum(sizes), int(np.prod(sizes)))
        np.testing.assert_array_equal(Z.sum(axis=0), len(sizes))
        assert len({tuple(col) for col in Z.T}) == Z.shape[1]


class TestZeroShotProperties:
    @SETTINGS
    @given(dim, st.integers(1, 4), seed, st.floats(0.01, 100))
    def test_zsl_positive_scale(self, d, k, s, alpha):
        m = init_single(d, 3, min(k, d), seed=s)
        r = rng_of(s)
        x, cands = r.normal(size=d), list(r.normal(size=(4, 3)))
        scores = [predict(m, x, z) for z in cands]
        top = sorted(scores)[-2:]
        if len(top) == 2 and top[1] - top[0] < 1e-9 * max(1.0, abs(top[1])):
            return
        assert zsl_classify(m, x, cands) == zsl_classify(m, alpha * x, cands)

    @SETTINGS
    @given(dim, st.integers(1, 4), seed)
    def test_zsda_linear(self, d, k, s):
        m = init_single(d, 4, min(k, d), seed=s)
        r = rng_of(s)
        z1, z2, a, b = r.normal(size=4), r.normal(size=4), r.normal(), r.normal()
        lhs = zsda_weights(m, a * z1 + b * z2)
        rhs = a * zsda_weights(m, z1) + b * zsda_weights(m, z2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))
