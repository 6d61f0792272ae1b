import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tnc import mps
from tnc.errors import NormalizationError, NumericalRankError, ShapeError


def dense_state(model):
    """Psi as a (2**N, N_c) matrix, first site most significant."""
    psi = model.tensors[0]  # (i1, a1)
    for t in model.tensors[1:]:
        psi = np.einsum("Sa,ioa->Sio", psi, t).reshape(-1, t.shape[1])
    return psi


def dense_product(qubits):
    v = np.ones(1)
    for q in qubits:
        v = np.kron(v, q)
    return v


def dense_site_rho(model, site):
    n = model.n_sites
    psi = dense_state(model).reshape((2,) * n + (2,))
    psi = np.moveaxis(psi, site, 0).reshape(2, -1)
    rho = psi @ psi.T
    return rho / np.trace(rho)


def random_qubits(rng, n):
    x = rng.random(n)
    return np.stack([np.cos(x * np.pi / 2), np.sin(x * np.pi / 2)], -1)


def raw_model(n, seed):
    rng = np.random.default_rng(seed)
    return mps.MpsModel([rng.standard_normal(mps.expected_shape(k, n)) for k in range(n)])


def test_shapes_three_sites():
    m = mps.init_random(3, 0)
    assert [t.shape for t in m.tensors] == [(2, 2), (2, 2, 2), (2, 2, 2)]
    assert mps.init_random(1, 0).tensors[0].shape == (2, 2)


def test_bad_shape_rejected():
    with pytest.raises(ShapeError):
        mps.MpsModel([np.zeros((2, 2)), np.zeros((2, 3, 2))])


def test_init_deterministic_and_canonical():
    a, b = mps.init_random(6, 11), mps.init_random(6, 11)
    for x, y in zip(a.tensors, b.tensors):
        np.testing.assert_array_equal(x, y)
    assert a.canonical and mps.isometry_residual(a) <= 1e-10
    assert mps.is_canonical(mps.init_random(6, 11, scale=0.3))


@given(st.integers(1, 7), st.integers(0, 10_000))
def test_canonical_norm_is_class_count(n, seed):
    m = mps.init_random(n, seed)
    assert mps.norm_squared(m) == pytest.approx(2.0, abs=1e-10)
    psi = dense_state(m)
    np.testing.assert_allclose(psi.T @ psi, np.eye(2), atol=1e-10)


@given(st.integers(2, 6), st.integers(0, 10_000))
def test_canonicalize_gives_polar_factor_of_dense_state(n, seed):
    m = raw_model(n, seed)
    psi = dense_state(m)
    u, _, vt = np.linalg.svd(psi, full_matrices=False)
    np.testing.assert_allclose(dense_state(mps.canonicalize(m)), u @ vt, atol=1e-10)


def test_canonicalize_preserves_gauge_transformed_state():
    m = mps.init_random(5, 3)
    rng = np.random.default_rng(0)
    t = [x.copy() for x in m.tensors]
    for k in range(4):
        g = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        if k == 0:
            t[0] = t[0] @ g
        else:
            t[k] = np.einsum("poa,ob->pba", t[k], g)
        t[k + 1] = np.einsum("pqo,bo->pqb", t[k + 1], np.linalg.inv(g))
    gauged = mps.MpsModel(t)
    np.testing.assert_allclose(dense_state(gauged), dense_state(m), atol=1e-10)
    # a global scale factor is removed, everything else is kept
    scaled = gauged.with_tensors([3.0 * t[0]] + t[1:])
    np.testing.assert_allclose(dense_state(mps.canonicalize(scaled)), dense_state(m), atol=1e-10)


def test_canonicalize_idempotent():
    m = mps.init_random(5, 9)
    again = mps.canonicalize(m)
    for a, b in zip(m.tensors, again.tensors):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_rank_deficient_site_reported():
    t = [x.copy() for x in mps.init_random(4, 0).tensors]
    t[2] = np.zeros_like(t[2])
    with pytest.raises(NumericalRankError) as info:
        mps.canonicalize(mps.MpsModel(t))
    assert info.value.site == 2


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_contraction_matches_dense(n, seed):
    m = raw_model(n, seed)
    rng = np.random.default_rng(seed + 1)
    q = np.stack([random_qubits(rng, n) for _ in range(5)])
    dense = np.stack([dense_product(qi) @ dense_state(m) for qi in q])
    np.testing.assert_allclose(mps.contract_batch(m, q), dense, atol=1e-12)
    np.testing.assert_allclose(mps.class_amplitudes(m, q[0]), dense[0], atol=1e-12)
    np.testing.assert_allclose(mps.probability(m, q[0]), dense[0] ** 2, atol=1e-12)


def test_orthogonal_product_state_gives_zero():
    t0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    t1 = np.zeros((2, 2, 2))
    t1[0] = np.eye(2)
    m = mps.MpsModel([t0, t1])
    np.testing.assert_array_equal(mps.class_amplitudes(m, np.array([[0.0, 1.0], [1.0, 0.0]])), [0, 0])


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_amplitudes_bounded_by_norm(n, seed):
    m = mps.init_random(n, seed)
    q = np.stack([random_qubits(np.random.default_rng(seed), n)])
    amp = mps.contract_batch(m, q)[0]
    assert np.all(np.abs(amp) <= 1.0 + 1e-12)


def test_log_probabilities_long_chain():
    m = mps.init_random(784, 0)
    q = np.stack([random_qubits(np.random.default_rng(k), 784) for k in range(3)])
    logp = mps.log_probabilities(m, q)
    assert np.all(np.isfinite(logp)) and np.all(logp <= 1e-9)
    short = mps.init_random(5, 0)
    q5 = q[:, :5]
    np.testing.assert_allclose(np.exp(mps.log_probabilities(short, q5)), mps.contract_batch(short, q5) ** 2, rtol=1e-12)


def test_loss_examples():
    # one site, tensor = identity: amplitudes equal the qubit itself
    m = mps.MpsModel([np.eye(2)])
    q = np.array([[[1.0, 0.0]], [[2**-0.5, 2**-0.5]]])
    assert mps.loss(m, q[:1], [0]) == pytest.approx(0.0, abs=1e-15)
    assert mps.loss(m, q[1:], [0]) == pytest.approx(np.log(2))
    assert mps.loss(m, q, [0, 0]) == pytest.approx(np.log(2))
    # P = 0 is clamped at the floor
    assert mps.loss(m, q[:1], [1]) == pytest.approx(-np.log(mps.PROB_FLOOR))


def test_product_state_entropy_zero():
    t0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    mid = np.zeros((2, 2, 2))
    mid[0, 0, 0] = 1.0
    mid[1, 0, 0] = 0.5
    last = np.zeros((2, 2, 2))
    last[0, 0, 0] = 1.0
    last[0, 1, 0] = 1.0
    m = mps.MpsModel([t0, mid, last])
    np.testing.assert_allclose(mps.entanglement_entropies(m), 0.0, atol=1e-12)


def test_bell_like_site_has_ln2():
    # site 1 perfectly correlated with the label
    t0 = np.eye(2) / np.sqrt(2)
    last = np.zeros((2, 2, 2))
    last[0, 0, 0] = last[0, 1, 1] = 1.0
    m = mps.MpsModel([t0, last])
    assert mps.entanglement_entropy(m, 0) == pytest.approx(np.log(2), abs=1e-12)


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_entropy_matches_dense_partial_trace(n, seed):
    m = raw_model(n, seed)
    rhos = mps.site_density_matrices(m)
    ent = mps.entanglement_entropies(m)
    for k in range(n):
        ref = dense_site_rho(m, k)
        np.testing.assert_allclose(rhos[k], ref, atol=1e-10)
        w = np.linalg.eigvalsh(ref)
        w = w[w > 1e-15]
        assert ent[k] == pytest.approx(-(w * np.log(w)).sum(), abs=1e-10)
        assert -1e-12 <= ent[k] <= np.log(2) + 1e-12


def test_entropy_scale_invariant_and_zero_norm():
    m = raw_model(4, 1)
    scaled = m.with_tensors([5 * m.tensors[0]] + m.tensors[1:])
    np.testing.assert_allclose(mps.entanglement_entropies(m), mps.entanglement_entropies(scaled), atol=1e-12)
    zero = m.with_tensors([0 * m.tensors[0]] + m.tensors[1:])
    with pytest.raises(NormalizationError):
        mps.entanglement_entropies(zero)
