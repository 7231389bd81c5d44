import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghztomo import qlin
from ghztomo.errors import DegenerateProjectionError, PhysicalityError, TomographyError
from ghztomo.qlin import (
    GHZ,
    KET,
    PHI_PLUS,
    DensityMatrix,
    HermitianOperator,
    LocalUnitary,
    PureState,
    eigendecompose,
    expectation,
    fidelity_pure,
    mixture,
    partial_trace,
    pauli_string,
    product_state,
    project_qubit,
    sanitize,
    tensor_product,
)

from .conftest import random_density, random_pure

seeds = st.integers(0, 2**32 - 1)


def brute_partial_trace(m, n, keep):
    """Index-by-index partial trace, independent of the einsum path."""
    keep = sorted(keep)
    traced = [q for q in range(n) if q not in keep]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)
    for r, c in itertools.product(range(2**n), repeat=2):
        rb = [(r >> (n - 1 - q)) & 1 for q in range(n)]
        cb = [(c >> (n - 1 - q)) & 1 for q in range(n)]
        if any(rb[q] != cb[q] for q in traced):
            continue
        ri = int("".join(str(rb[q]) for q in keep), 2)
        ci = int("".join(str(cb[q]) for q in keep), 2)
        out[ri, ci] += m[r, c]
    return out


def test_ordering_is_big_endian():
    assert qlin.QUBIT_ORDER == "big-endian"
    # |HVV> -> binary 011
    assert np.argmax(np.abs(product_state("HVV").amplitudes)) == 3
    assert np.argmax(np.abs(product_state("VHH").amplitudes)) == 4


def test_named_states():
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(KET["D"].amplitudes, [s, s])
    np.testing.assert_allclose(KET["R"].amplitudes, [s, -1j * s])
    np.testing.assert_allclose(KET["A"].amplitudes, [s, -s])
    np.testing.assert_allclose(GHZ.amplitudes[[0, 7]], [s, s])


def test_pure_state_rejects_unnormalized():
    with pytest.raises(TomographyError):
        PureState([1, 1])
    with pytest.raises(TomographyError):
        PureState([1, 0, 0])


def test_density_matrix_invariants():
    with pytest.raises(TomographyError):
        DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(TomographyError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(PhysicalityError):
        DensityMatrix(np.diag([1.1, -0.1]))
    unphysical = DensityMatrix(np.diag([1.1, -0.1]), require_psd=False)
    assert not unphysical.is_physical


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ("H", "H", [1, 0, 0, 0]),
        ("D", "D", [0.5, 0.5, 0.5, 0.5]),
    ],
)
def test_tensor_product_basis(a, b, expected):
    out = tensor_product(KET[a], KET[b])
    np.testing.assert_allclose(out.amplitudes, expected, atol=1e-15)


def test_tensor_product_phi_plus_pairs():
    out = tensor_product(PHI_PLUS, PHI_PLUS).amplitudes
    expected = np.zeros(16)
    expected[[0, 3, 12, 15]] = 0.5
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_tensor_product_kind_mismatch():
    with pytest.raises(TypeError):
        tensor_product(KET["H"], KET["H"].density_matrix())


def test_partial_trace_ghz():
    red = partial_trace(GHZ.density_matrix(), keep={0, 1})
    expected = 0.5 * (product_state("HH").density_matrix().entries + product_state("VV").density_matrix().entries)
    np.testing.assert_allclose(red.entries, expected, atol=1e-15)


def test_partial_trace_simple_cases():
    red = partial_trace(product_state("HH").density_matrix(), keep={1})
    np.testing.assert_allclose(red.entries, np.diag([1, 0]), atol=1e-15)
    red = partial_trace(DensityMatrix.maximally_mixed(3), keep={0})
    np.testing.assert_allclose(red.entries, np.eye(2) / 2, atol=1e-15)


@pytest.mark.parametrize("keep", [{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}])
def test_partial_trace_matches_brute_force(rng, keep):
    rho = random_density(rng, 3)
    np.testing.assert_allclose(partial_trace(rho, keep).entries, brute_partial_trace(rho.entries, 3, keep), atol=1e-14)


@pytest.mark.parametrize("keep", [set(), {3}, {-1}])
def test_partial_trace_invalid_keep(keep):
    with pytest.raises(TomographyError):
        partial_trace(GHZ.density_matrix(), keep)


def test_project_qubit_to_ghz():
    four = PureState(np.eye(16)[0] / np.sqrt(2) + np.eye(16)[15] / np.sqrt(2))
    out, p = project_qubit(four, 3, KET["D"])
    assert p == pytest.approx(0.5, abs=1e-14)
    assert fidelity_pure(out.density_matrix(), GHZ) == pytest.approx(1.0, abs=1e-12)


def test_project_qubit_cases():
    with pytest.raises(DegenerateProjectionError):
        project_qubit(product_state("HH"), 0, KET["V"])
    out, p = project_qubit(product_state("DH"), 0, KET["H"])
    assert p == pytest.approx(0.5)
    np.testing.assert_allclose(out.amplitudes, [1, 0], atol=1e-15)


@given(seeds, st.integers(0, 2))
@settings(max_examples=30, deadline=None)
def test_project_qubit_matches_projector_oracle(seed, qubit):
    rng = np.random.default_rng(seed)
    psi = random_pure(rng, 3)
    onto = random_pure(rng, 1)
    ops = [np.eye(2)] * 3
    ops[qubit] = np.outer(onto.amplitudes, onto.amplitudes.conj())
    big = np.kron(np.kron(ops[0], ops[1]), ops[2])
    p_oracle = np.vdot(psi.amplitudes, big @ psi.amplitudes).real
    _, p = project_qubit(psi, qubit, onto)
    assert p == pytest.approx(p_oracle, abs=1e-12)


@given(seeds, st.integers(0, 2))
@settings(max_examples=30, deadline=None)
def test_project_qubit_probabilities_complete(seed, qubit):
    rng = np.random.default_rng(seed)
    psi = random_pure(rng, 3)
    basis = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
    total = sum(project_qubit(psi, qubit, PureState.normalized(basis[:, k]))[1] for k in range(2))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_fidelity_pure_examples(ghz_rho, mixed8):
    assert fidelity_pure(ghz_rho, GHZ) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_pure(mixed8, GHZ) == pytest.approx(1 / 8, abs=1e-12)
    assert fidelity_pure(product_state("HHH").density_matrix(), GHZ) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(TomographyError):
        fidelity_pure(ghz_rho, PHI_PLUS)


@given(seeds, st.floats(0, 2 * np.pi))
@settings(max_examples=25, deadline=None)
def test_fidelity_global_phase_invariant(seed, phase):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 3)
    psi = random_pure(rng, 3)
    rotated = PureState(np.exp(1j * phase) * psi.amplitudes)
    assert fidelity_pure(rho, rotated) == pytest.approx(fidelity_pure(rho, psi), abs=1e-12)


def test_expectation_examples(ghz_rho, rng):
    assert expectation(random_density(rng), HermitianOperator(np.eye(8))) == pytest.approx(1.0)
    assert expectation(ghz_rho, pauli_string("ZZZ")) == pytest.approx(0.0, abs=1e-12)
    assert expectation(ghz_rho, pauli_string("XXX")) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(TomographyError):
        expectation(ghz_rho, pauli_string("XX"))


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_expectation_bilinear(seed, a, b):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(rng), random_density(rng)
    o1 = pauli_string("XYZ").entries
    o2 = random_density(rng).entries
    # linear in the operator
    lhs = expectation(r1, a * o1 + b * o2)
    assert lhs == pytest.approx(a * expectation(r1, o1) + b * expectation(r1, o2), abs=1e-10)
    # linear in the state
    lhs = expectation(a * r1.entries + b * r2.entries, o1)
    assert lhs == pytest.approx(a * expectation(r1, o1) + b * expectation(r2, o1), abs=1e-10)


@given(seeds, st.floats(0, 1))
@settings(max_examples=25, deadline=None)
def test_mixtures_stay_valid(seed, p):
    rng = np.random.default_rng(seed)
    out = mixture(random_density(rng, 3, rank=2), random_density(rng, 3, rank=1), p)
    assert out.is_physical


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    ra, rb = random_density(rng, 1), random_density(rng, 2)
    joint = tensor_product(ra, rb)
    np.testing.assert_allclose(partial_trace(joint, {0}).entries, ra.entries, atol=1e-10)
    np.testing.assert_allclose(partial_trace(joint, {1, 2}).entries, rb.entries, atol=1e-10)


def test_eigendecompose_examples(ghz_rho):
    w, _ = eigendecompose(pauli_string("Z"))
    np.testing.assert_allclose(w, [1, -1])
    w, _ = eigendecompose(np.eye(8))
    np.testing.assert_allclose(w, np.ones(8))
    w, _ = eigendecompose(ghz_rho)
    np.testing.assert_allclose(w, [1] + [0] * 7, atol=1e-12)
    with pytest.raises(TomographyError):
        eigendecompose(np.array([[0, 1], [0, 0]]))


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_eigendecompose_residual(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    h = g + g.conj().T
    w, v = eigendecompose(h)
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(h - (v * w) @ v.conj().T)) <= 1e-9
    assert np.max(np.abs(v.conj().T @ v - np.eye(8))) <= 1e-9


def test_sanitize_clamps_and_renormalizes():
    m = np.diag([0.7, 0.4, -0.1, 0.0]).astype(complex)
    out = sanitize(m)
    np.testing.assert_allclose(np.diag(out.entries).real, [0.7 / 1.1, 0.4 / 1.1, 0, 0], atol=1e-12)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_local_unitary_is_unitary_product(seed):
    rng = np.random.default_rng(seed)
    lu = LocalUnitary.random(3, rng)
    u = lu.matrix()
    assert np.max(np.abs(u @ u.conj().T - np.eye(8))) <= 1e-10
    f = lu.factors()
    np.testing.assert_allclose(u, np.kron(np.kron(f[0], f[1]), f[2]), atol=1e-14)
