import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomoregion.hilbert import (
    DensityMatrix,
    Povm,
    PureState,
    basis_povm,
    bloch_vector,
    fidelity,
    from_bloch,
    pauli_povm,
    povm_seminorm,
    povm_validate,
    purified_distance,
    random_unitary,
    sample_hilbert_schmidt,
    sample_hilbert_schmidt_batch,
)

KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)
MIXED = np.eye(2, dtype=complex) / 2


def test_density_matrix_rejects_non_hermitian():
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.2], [0.0, 0.5]]))


def test_density_matrix_rejects_negative_and_bad_trace():
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.6, 0.6]))


def test_pure_state_requires_unit_norm():
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0]))
    assert PureState.normalized([1, 1j]).dim == 2


def test_fidelity_examples():
    s = from_bloch([0.1, -0.3, 0.5])
    assert fidelity(s, s) == pytest.approx(1.0, abs=1e-9)
    assert fidelity(KET0, KET1) == pytest.approx(0.0, abs=1e-9)
    assert fidelity(MIXED, KET0) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_purified_distance_examples():
    s = from_bloch([0.2, 0.2, 0.2])
    assert purified_distance(s, s) == pytest.approx(0.0, abs=1e-6)
    assert purified_distance(KET0, KET1) == pytest.approx(1.0)
    assert purified_distance(MIXED, KET0) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_fidelity_dimension_mismatch():
    with pytest.raises(ValueError):
        fidelity(MIXED, np.eye(3) / 3)


def test_fidelity_pure_closed_form(rng):
    for _ in range(20):
        psi = PureState.normalized(rng.normal(size=3) + 1j * rng.normal(size=3))
        sigma = sample_hilbert_schmidt(3, rng)
        expected = math.sqrt((psi.amplitudes.conj() @ sigma.matrix @ psi.amplitudes).real)
        assert fidelity(sigma, psi.density()) == pytest.approx(expected, abs=1e-9)


def test_fidelity_symmetric_and_unitarily_invariant(rng):
    for d in (2, 3, 4):
        for _ in range(20):
            a, b = sample_hilbert_schmidt(d, rng), sample_hilbert_schmidt(d, rng)
            u = random_unitary(d, rng)
            f = fidelity(a, b)
            assert fidelity(b, a) == pytest.approx(f, abs=1e-9)
            ua = u @ a.matrix @ u.conj().T
            ub = u @ b.matrix @ u.conj().T
            assert fidelity(ua, ub) == pytest.approx(f, abs=1e-9)


def test_purified_distance_triangle_inequality(rng):
    for _ in range(200):
        a, b, c = (sample_hilbert_schmidt(2, rng) for _ in range(3))
        assert purified_distance(a, c) <= purified_distance(a, b) + purified_distance(b, c) + 1e-9


def test_povm_seminorm_examples(rng):
    povm = pauli_povm()
    assert povm_seminorm(povm, np.zeros((2, 2))) == 0.0
    s = sample_hilbert_schmidt(2, rng)
    assert povm_seminorm(povm, s.matrix) == pytest.approx(1.0)
    for _ in range(10):
        x = sample_hilbert_schmidt(2, rng).matrix - sample_hilbert_schmidt(2, rng).matrix
        brute = sum(abs(np.trace(e @ x)) for e in povm.elements)
        assert povm_seminorm(povm, x) == pytest.approx(brute, abs=1e-14)


def test_povm_seminorm_dimension_mismatch():
    with pytest.raises(ValueError):
        povm_seminorm(pauli_povm(), np.eye(3))


def test_hilbert_schmidt_d1_is_scalar_one(rng):
    assert sample_hilbert_schmidt(1, rng).matrix[0, 0] == pytest.approx(1.0)


def test_hilbert_schmidt_moments(rng):
    n = 100_000
    s = sample_hilbert_schmidt_batch(2, n, rng)
    mean = s.mean(axis=0)
    target = np.eye(2) / 2
    se_re = s.real.std(axis=0) / math.sqrt(n)
    se_im = s.imag.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(mean.real - target) <= 3 * se_re + 1e-15)
    assert np.all(np.abs(mean.imag) <= 3 * se_im + 1e-15)
    # uniform Bloch ball: E|r|^2 = 3/5, so E tr(sigma^2) = (1 + 3/5)/2
    purity = np.einsum("kij,kji->k", s, s).real
    assert abs(purity.mean() - 0.8) <= 3 * purity.std() / math.sqrt(n)


def test_hilbert_schmidt_samples_are_states(rng):
    for d in (2, 3, 5):
        for m in sample_hilbert_schmidt_batch(d, 50, rng):
            DensityMatrix(m)


def test_bloch_roundtrip():
    r = np.array([0.3, -0.4, 0.5])
    assert np.allclose(bloch_vector(from_bloch(r)), r)


def test_povm_validate_reports():
    assert povm_validate([np.eye(2)]).valid
    assert povm_validate(basis_povm().elements).valid
    rep = povm_validate([KET0])
    assert not rep.valid
    assert rep.completeness_residual == pytest.approx(1.0)
    assert rep.completeness_argmax == (1, 1)


def test_povm_validate_never_raises():
    assert not povm_validate("garbage").valid
    assert not povm_validate([]).valid
    assert not povm_validate([np.array([[1.0, 2.0], [0.0, 0.0]])]).valid
    rep = povm_validate([np.diag([1.5, 1.0]), np.diag([-0.5, 0.0])])
    assert rep.psd_violations == (1,)


def test_povm_constructor_validates():
    with pytest.raises(ValueError):
        Povm(np.array([KET0]))


def test_pauli_povm_is_complete():
    p = pauli_povm()
    assert len(p) == 6
    assert p.span_dimension() == 4
    assert pauli_povm("zy").span_dimension() == 3
    assert np.allclose(p.probabilities(MIXED), 1 / 6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conjugated_povm_probabilities(seed):
    rng = np.random.default_rng(seed)
    u = random_unitary(2, rng)
    s = sample_hilbert_schmidt(2, rng)
    p = pauli_povm()
    rotated = u @ s.matrix @ u.conj().T
    assert np.allclose(p.conjugated(u).probabilities(rotated), p.probabilities(s), atol=1e-12)
