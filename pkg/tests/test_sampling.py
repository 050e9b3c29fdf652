import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacs.phantoms import PhantomSpec, gen_phantom
from pacs.sampling import (
    CSOperator,
    SamplingScheme,
    add_noise,
    apply_S,
    apply_S_transpose,
    make_scheme,
    power_iteration,
)


def test_sparse_layout_full_size():
    S = make_scheme("sparse", 60, 240).matrix
    for i in range(60):
        row = np.zeros(240)
        row[4 * i] = 2.0  # column 4(i-1)+1 in one-based indexing
        assert np.array_equal(S[i], row)


def test_sparse_full_is_twice_identity():
    assert np.array_equal(make_scheme("sparse", 8, 8).matrix, 2 * np.eye(8))


def test_bernoulli_single_row_is_pm_one():
    S = make_scheme("bernoulli", 1, 20, seed=3).matrix
    assert set(np.unique(S)) <= {-1.0, 1.0}


@given(st.integers(1, 30), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_bernoulli_magnitudes_and_column_norms(m, seed):
    S = make_scheme("bernoulli", m, 32, seed).matrix
    assert np.all(np.abs(S) == 1 / np.sqrt(m))
    assert np.allclose(np.linalg.norm(S, axis=0), 1.0, rtol=1e-14)


def test_bernoulli_deterministic():
    a = make_scheme("bernoulli", 8, 16, 5).matrix
    assert np.array_equal(a, make_scheme("bernoulli", 8, 16, 5).matrix)


@pytest.mark.parametrize("m, M", [(3, 8), (0, 4), (5, 4)])
def test_invalid_schemes(m, M):
    with pytest.raises(ValueError):
        make_scheme("sparse", m, M)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_scheme("gaussian", 2, 4)


def test_scheme_dict_round_trip():
    s = make_scheme("bernoulli", 4, 16, 9, 2.0)
    t = SamplingScheme.from_dict(s.to_dict())
    assert np.array_equal(s.matrix, t.matrix) and t.to_dict() == s.to_dict()


def test_apply_S_sparse_picks_channels(rng):
    p = rng.standard_normal((16, 5))
    g = apply_S(make_scheme("sparse", 4, 16), p)
    assert np.array_equal(g, 2 * p[::4])


def test_apply_S_identity_scaling(rng):
    p = rng.standard_normal((6, 5))
    assert np.array_equal(apply_S(make_scheme("sparse", 6, 6), p), 2 * p)
    assert np.array_equal(apply_S_transpose(make_scheme("sparse", 6, 6), p), 2 * p)


def test_apply_S_transpose_sparse(rng):
    g = rng.standard_normal((4, 5))
    out = apply_S_transpose(make_scheme("sparse", 4, 16), g)
    assert np.array_equal(out[::4], 2 * g)
    assert not np.delete(out, np.s_[::4], axis=0).any()


def test_apply_S_against_dense_oracle(rng):
    s = make_scheme("bernoulli", 8, 16, 2)
    p = rng.standard_normal((16, 9))
    expect = np.array([[sum(s.matrix[j, k] * p[k, l] for k in range(16)) for l in range(9)] for j in range(8)])
    assert np.allclose(apply_S(s, p), expect, rtol=1e-12, atol=1e-14)
    g = rng.standard_normal((8, 9))
    assert abs(np.vdot(apply_S(s, p), g) - np.vdot(p, apply_S_transpose(s, g))) <= 1e-12 * np.linalg.norm(p) * np.linalg.norm(g)


def test_apply_S_shape_errors():
    s = make_scheme("sparse", 4, 16)
    with pytest.raises(ValueError):
        apply_S(s, np.zeros((15, 3)))
    with pytest.raises(ValueError):
        apply_S_transpose(s, np.zeros((5, 3)))


def test_noise_zero_level_identity(rng):
    y = rng.standard_normal((4, 20))
    assert np.array_equal(add_noise(y, 0.0, 1), y)


def test_noise_level_ratio():
    y = np.random.default_rng(0).standard_normal((64, 160))
    for seed in range(5):
        eps = add_noise(y, 0.07, seed) - y
        assert 0.06 <= np.linalg.norm(eps) / np.linalg.norm(y) <= 0.08


def test_noise_deterministic(rng):
    y = rng.standard_normal((3, 10))
    assert np.array_equal(add_noise(y, 0.1, 4), add_noise(y, 0.1, 4))


def test_noise_negative_level():
    with pytest.raises(ValueError):
        add_noise(np.zeros(3), -0.1)


def test_composed_operators_zero(small_op):
    assert not small_op.apply_A(np.zeros(small_op.grid.shape)).any()
    assert not small_op.apply_A_transpose(np.zeros(small_op.data_shape)).any()
    assert not small_op.apply_A_sharp(np.zeros(small_op.data_shape)).any()


@pytest.mark.parametrize("opname", ["sparse_op", "bernoulli_op"])
def test_cs_adjoint(request, opname):
    op = request.getfixturevalue(opname)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = rng.standard_normal(op.grid.shape)
        g = rng.standard_normal(op.data_shape)
        assert abs(np.vdot(op.apply_A(f), g) - np.vdot(f, op.apply_A_transpose(g))) <= 1e-8 * np.linalg.norm(f) * np.linalg.norm(g)


def test_initial_reconstruction_is_sharp_of_data(sparse_op):
    f = gen_phantom(PhantomSpec("vessel", 2), sparse_op.grid)
    assert np.array_equal(sparse_op.initial_reconstruction(f), sparse_op.apply_A_sharp(sparse_op.apply_A(f)))


def test_scheme_operator_mismatch(desk_wave):
    with pytest.raises(ValueError):
        CSOperator(desk_wave, make_scheme("sparse", 4, 16))


def test_power_iteration_diagonal():
    d = np.array([1.0, 2.0, 3.0])
    assert power_iteration(lambda x: d**2 * x, (3,), 200) == pytest.approx(9.0, rel=1e-2)
