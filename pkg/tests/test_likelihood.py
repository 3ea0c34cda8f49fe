import math

import numpy as np
import pytest

from tomoregion.combinatorics import sym_dim
from tomoregion.hilbert import (
    DensityMatrix,
    Povm,
    basis_povm,
    from_bloch,
    pauli_povm,
    sample_hilbert_schmidt,
)
from tomoregion.likelihood import (
    EstimationError,
    MeasurementRecord,
    bloch_density_grid,
    hs_samples,
    log_likelihood,
    log_likelihood_batch,
    mu_density,
    mu_density_batch,
    normalization_constant,
    self_normalization,
)
from tomoregion.mle import mle_estimate

KET0 = np.diag([1.0, 0.0]).astype(complex)


def flat_record(n=5, d=2):
    return MeasurementRecord(Povm(np.eye(d, dtype=complex)[None]), (n,))


def test_record_validation():
    with pytest.raises(ValueError):
        MeasurementRecord(basis_povm(), (1, 2, 3))
    with pytest.raises(ValueError):
        MeasurementRecord(basis_povm(), (0, 0))
    with pytest.raises(ValueError):
        MeasurementRecord(basis_povm(), (-1, 2))
    rec = MeasurementRecord(basis_povm(), (2, 8))
    assert rec.n == 10
    assert np.allclose(rec.frequencies, [0.2, 0.8])


def test_log_likelihood_examples():
    assert log_likelihood(MeasurementRecord(basis_povm(), (4, 0)), KET0) == 0.0
    rec = MeasurementRecord(basis_povm(), (1, 1))
    assert log_likelihood(rec, np.eye(2) / 2) == pytest.approx(2 * math.log(0.5))
    rec = MeasurementRecord(basis_povm(), (2, 8))
    sigma = np.diag([0.2, 0.8]).astype(complex)
    assert log_likelihood(rec, sigma) == pytest.approx(2 * math.log(0.2) + 8 * math.log(0.8))
    assert log_likelihood(rec, sigma) == pytest.approx(-5.0040, abs=5e-5)


def test_log_likelihood_support_violation():
    rec = MeasurementRecord(basis_povm(), (1, 1))
    assert log_likelihood(rec, KET0) == -math.inf


def test_log_likelihood_dimension_mismatch():
    with pytest.raises(ValueError):
        log_likelihood(MeasurementRecord(basis_povm(), (1, 1)), np.eye(3) / 3)


def test_log_likelihood_concave_on_segments(rng):
    rec = MeasurementRecord(pauli_povm(), (3, 1, 0, 4, 2, 2))
    for _ in range(300):
        a, b = sample_hilbert_schmidt(2, rng).matrix, sample_hilbert_schmidt(2, rng).matrix
        t = rng.uniform()
        lhs = log_likelihood(rec, t * a + (1 - t) * b)
        assert lhs >= t * log_likelihood(rec, a) + (1 - t) * log_likelihood(rec, b) - 1e-9


def test_permuting_outcomes_is_bit_invariant(rng):
    rec = MeasurementRecord(pauli_povm(), (5, 1, 7, 0, 2, 9))
    order = rng.permutation(6)
    perm = rec.permuted(order)
    s = hs_samples(2, 2000, seed=4)
    assert np.array_equal(log_likelihood_batch(rec, s), log_likelihood_batch(perm, s))
    a = normalization_constant(rec, 5000, seed=9)
    b = normalization_constant(perm, 5000, seed=9)
    assert (a.log_c, a.log_c_stderr, a.max_log_likelihood) == (b.log_c, b.log_c_stderr, b.max_log_likelihood)


def test_normalization_flat_record_is_one():
    for n in (1, 7, 50):
        s = normalization_constant(flat_record(n), 2000, seed=1)
        # unit traces hold to round-off, hence the 1e-12 slack
        assert s.c == pytest.approx(1.0, abs=1e-12)
        assert s.log_c_stderr < 1e-12


def test_normalization_single_outcome_is_half():
    s = normalization_constant(MeasurementRecord(basis_povm(), (1, 0)), 100_000, seed=3)
    assert abs(s.c - 0.5) <= 3 * s.c_stderr


def test_normalization_two_outcomes_closed_form():
    # E[<0|sigma|0>^2] = (1 + E z^2)/4 with z^2 averaging 1/5 over the Bloch ball
    s = normalization_constant(MeasurementRecord(basis_povm(), (2, 0)), 200_000, seed=8)
    assert abs(s.c - 0.3) <= 3 * s.c_stderr


def test_normalization_needs_enough_samples():
    with pytest.raises(ValueError):
        normalization_constant(flat_record(), 999)


def test_normalization_degenerate_record_fails():
    # every sampled state has full rank, so a zero-probability outcome cannot occur
    rec = MeasurementRecord(Povm(np.array([np.eye(2), np.zeros((2, 2))])), (3, 1))
    with pytest.raises(EstimationError):
        normalization_constant(rec, 1000, seed=0)


def test_normalization_reproducible_across_threads():
    rec = MeasurementRecord(pauli_povm(), (3, 1, 4, 1, 5, 9))
    a = normalization_constant(rec, 20_000, seed=5, threads=1)
    b = normalization_constant(rec, 20_000, seed=5, threads=4)
    assert a == b


def test_normalization_bracketing():
    rec = MeasurementRecord(pauli_povm(), (4, 2, 1, 5, 3, 3))
    s = normalization_constant(rec, 100_000, seed=12)
    lmax = s.max_log_likelihood
    assert s.c <= math.exp(lmax) + 3 * s.c_stderr
    assert s.c >= math.exp(lmax) / sym_dim(rec.n, 4) - 3 * s.c_stderr


def test_mu_density_flat_and_mismatch():
    rec = flat_record(3)
    s = normalization_constant(rec, 1000, seed=0)
    assert mu_density(rec, from_bloch([0.1, 0.2, 0.3]), s) == pytest.approx(1.0, abs=1e-12)
    other = MeasurementRecord(basis_povm(), (1, 1))
    with pytest.raises(ValueError):
        mu_density(other, np.eye(2) / 2, s)


def test_mu_density_peaks_at_mle(rng):
    rec = MeasurementRecord(pauli_povm(), (14, 6, 9, 11, 4, 16))
    s = normalization_constant(rec, 20_000, seed=2)
    at_mle = mu_density(rec, mle_estimate(rec).estimate, s)
    others = mu_density_batch(rec, hs_samples(2, 5000, seed=77), s)
    assert np.all(at_mle >= others)


def test_self_normalization():
    rec = MeasurementRecord(pauli_povm(), (3, 2, 5, 1, 2, 4))
    s = normalization_constant(rec, 100_000, seed=1)
    mean, se = self_normalization(rec, s, 100_000, seed=2)
    assert abs(mean - 1.0) <= 3 * se


def test_bloch_grid_flat_record_is_constant():
    rec = flat_record(4)
    s = normalization_constant(rec, 1000, seed=0)
    g = bloch_density_grid(rec, 8, True, s)
    assert g.shape == (8, 16)
    assert np.ptp(g.density) < 1e-12
    assert g.density.mean() == pytest.approx(1.0, abs=1e-12)
    b = bloch_density_grid(rec, 8, False, s)
    assert b.shape == (4, 8, 16)


def test_bloch_grid_rejects_non_qubit():
    rec = flat_record(4, d=3)
    s = normalization_constant(rec, 1000, seed=0)
    with pytest.raises(ValueError):
        bloch_density_grid(rec, 8, True, s)


def test_bloch_grid_csv_layout():
    rec = MeasurementRecord(pauli_povm("zy"), (2, 8, 7, 3))
    s = normalization_constant(rec, 5000, seed=0)
    text = bloch_density_grid(rec, 6, True, s).to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# surface grid")
    assert lines[1] == "theta,phi,density"
    assert len(lines) == 2 + 6 * 12
    assert text == bloch_density_grid(rec, 6, True, s).to_csv()


def test_bloch_grid_argmax_matches_frequencies():
    # z outcomes (0.2, 0.8) and y outcomes (0.7, 0.3): best pure state has z=-0.6, y=0.4
    rec = MeasurementRecord(pauli_povm("zy"), (2, 8, 7, 3))
    s = normalization_constant(rec, 5000, seed=0)
    g = bloch_density_grid(rec, 64, True, s)
    v = g.argmax_vector()
    assert v[2] == pytest.approx(-0.6, abs=0.05)
    assert v[1] == pytest.approx(0.4, abs=0.05)
    assert abs(v[0]) == pytest.approx(math.sqrt(1 - 0.36 - 0.16), abs=0.05)


def test_record_key_distinguishes_counts():
    a = MeasurementRecord(basis_povm(), (1, 2))
    b = MeasurementRecord(basis_povm(), (2, 1))
    assert a.key != b.key
    assert a.key == MeasurementRecord(basis_povm(), (1, 2)).key


def test_density_matrix_input_accepted():
    rec = MeasurementRecord(basis_povm(), (1, 1))
    assert log_likelihood(rec, DensityMatrix.maximally_mixed(2)) == pytest.approx(2 * math.log(0.5))
