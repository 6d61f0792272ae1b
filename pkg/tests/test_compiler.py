import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ortho_group

from tnc import compiler, mps
from tnc.errors import DecompositionError, PreconditionError


def test_square_input_returned_unchanged():
    q = ortho_group.rvs(4, random_state=0)
    np.testing.assert_array_equal(compiler.complete_unitary(q), q)


def test_single_row_gets_canonical_completion():
    u = compiler.complete_unitary(np.array([[1.0, 0, 0, 0]]))
    np.testing.assert_array_equal(u, np.eye(4))


@given(st.integers(0, 10_000))
def test_random_isometry_completion(seed):
    rows = ortho_group.rvs(4, random_state=seed)[:2]
    u = compiler.complete_unitary(rows, row_indices=[0, 2])
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-12)
    np.testing.assert_array_equal(u[[0, 2]], rows)


def test_non_orthonormal_rows_rejected():
    with pytest.raises(PreconditionError, match="Gram residual"):
        compiler.complete_unitary(np.array([[1.0, 0, 0, 0], [1.0, 1.0, 0, 0]]))


def test_dependent_seeds_rejected():
    with pytest.raises(PreconditionError):
        compiler.complete_unitary(np.eye(4)[:2], seeds=np.eye(4)[:2])


@pytest.mark.parametrize("n_sites, n_gates", [(3, 2), (5, 4), (1, 0)])
def test_gate_counts(n_sites, n_gates):
    c = compiler.compile_model(mps.init_random(n_sites, 0))
    assert len(c.gates) == n_gates and c.n_layers == n_sites


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_compiled_gates_orthogonal_with_constrained_rows(n, seed):
    model = mps.init_random(n, seed)
    c = compiler.compile_model(model)
    np.testing.assert_allclose(c.u1.T @ c.u1, np.eye(2), atol=1e-12)
    np.testing.assert_array_equal(c.u1, model.tensors[0].T)
    for core, g in zip(model.tensors[1:], c.gates):
        np.testing.assert_allclose(g.T @ g, np.eye(4), atol=1e-12)
        for out in range(2):
            for inn in range(2):
                for i in range(2):
                    assert g[2 * out, 2 * inn + i] == core[i, out, inn]


def test_identity_like_model():
    # copy tensors: physical 0 carries the bond, physical 1 maps to nothing
    copy = np.zeros((2, 2, 2))
    copy[0] = np.eye(2)
    model = mps.MpsModel([np.eye(2), copy.copy(), copy.copy()])
    c = compiler.compile_model(model)
    np.testing.assert_array_equal(c.u1, np.eye(2))
    for g in c.gates:
        np.testing.assert_array_equal(g[[0, 2]], compiler.constrained_rows(copy))


def test_non_canonical_rejected():
    rng = np.random.default_rng(0)
    raw = mps.MpsModel([rng.standard_normal(mps.expected_shape(k, 3)) for k in range(3)])
    with pytest.raises(PreconditionError):
        compiler.compile_model(raw)


def test_csd_on_1000_random_orthogonal():
    mats = ortho_group.rvs(4, size=1000, random_state=1)
    worst = 0.0
    for u in mats:
        f = compiler.csd_decompose(u)
        worst = max(worst, np.linalg.norm(f.L @ f.S @ f.R - u))
        # L and R act on the classifier conditioned on the operational qubit
        for blocks in (f.left, f.right):
            for b in blocks:
                np.testing.assert_allclose(b.T @ b, np.eye(2), atol=1e-12)
        assert f.L[0, 1] == 0 and f.L[1, 0] == 0 and f.R[2, 1] == 0
    assert worst <= 1e-10


def test_csd_identity():
    f = compiler.csd_decompose(np.eye(4))
    np.testing.assert_allclose(f.theta, 0.0, atol=1e-15)
    for b in f.left + f.right:
        np.testing.assert_allclose(np.abs(b), np.eye(2), atol=1e-15)


@pytest.mark.parametrize("t1, t2", [(0.3, 0.3), (0.2, 1.1), (1.4, 0.05)])
def test_csd_recovers_known_angles(t1, t2):
    u = compiler._from_partition(compiler.cs_matrix(np.array([t1, t2])))
    f = compiler.csd_decompose(u)
    np.testing.assert_allclose(np.sort(np.abs(f.theta)), np.sort([t1, t2]), atol=1e-12)
    np.testing.assert_allclose(f.matrix(), u, atol=1e-12)


def test_csd_rejects_non_orthogonal():
    with pytest.raises(PreconditionError):
        compiler.csd_decompose(2 * np.eye(4))
    assert issubclass(DecompositionError, Exception)


def test_identity_circuit_angles_zero():
    c = compiler.CompiledCircuit(np.eye(2), [np.eye(4), np.eye(4)])
    ang = compiler.extract_angles(c)
    # reflections are kept as signs, so every rotation angle is a multiple of pi
    assert np.allclose(np.sin(ang.flat()), 0.0, atol=1e-15)
    rebuilt = compiler.circuit_from_angles(c, ang)
    for g in rebuilt.gates:
        np.testing.assert_allclose(g, np.eye(4), atol=1e-15)


def test_three_layer_has_13_angles():
    assert len(compiler.extract_angles(compiler.compile_model(mps.init_random(3, 0)))) == 13


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_angle_roundtrip(n, seed):
    c = compiler.compile_model(mps.init_random(n, seed))
    back = compiler.circuit_from_angles(c, compiler.extract_angles(c))
    np.testing.assert_allclose(back.u1, c.u1, atol=1e-10)
    for a, b in zip(back.gates, c.gates):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_batched_gates_from_angles():
    c = compiler.compile_model(mps.init_random(4, 2))
    ang = compiler.extract_angles(c)
    jitter = np.random.default_rng(0).normal(0, 0.01, (7,) + ang.gate_angles.shape)
    u1, gates = compiler.gates_from_angles(np.full(7, ang.u1_angle), ang.gate_angles + jitter,
                                           ang.u1_sign, ang.gate_signs)
    assert u1.shape == (7, 2, 2) and gates.shape == (7, 3, 4, 4)
    np.testing.assert_allclose(np.swapaxes(gates, -1, -2) @ gates, np.broadcast_to(np.eye(4), gates.shape), atol=1e-12)
    _, single = compiler.gates_from_angles(ang.u1_angle, ang.gate_angles[None] + jitter[3:4], ang.u1_sign, ang.gate_signs)
    np.testing.assert_allclose(gates[3], single[0], atol=1e-15)
