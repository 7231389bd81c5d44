import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghztomo.analysis import (
    X_SETTING,
    Y_SETTING,
    BlochMeasurement,
    concurrence2,
    format_report,
    full_report,
    ghz_fidelity,
    mermin_correlation,
    mermin_maximum,
    mermin_value,
    pair_concurrences,
    parse_report,
    witness_minimum,
    witness_value,
    with_uncertainties,
)
from ghztomo.errors import DataError, PhysicalityError, TomographyError
from ghztomo.qlin import (
    GHZ,
    PHI_PLUS,
    DensityMatrix,
    LocalUnitary,
    depolarized,
    mixture,
    product_state,
)
from ghztomo.reconstruct import MonteCarloSummary

from .conftest import random_density

seeds = st.integers(0, 2**32 - 1)


def rotate(rho, rng):
    u = LocalUnitary.random(3, rng).matrix()
    return DensityMatrix(u @ rho.entries @ u.conj().T)


def noisy_ghz(rng, weight=0.6):
    return mixture(GHZ.density_matrix(), random_density(rng), weight)


# --- fidelity ---------------------------------------------------------------


def test_fidelity_examples(ghz_rho, mixed8):
    assert ghz_fidelity(ghz_rho) == pytest.approx(1.0, abs=1e-12)
    assert ghz_fidelity(mixed8) == pytest.approx(0.125, abs=1e-12)
    assert ghz_fidelity(depolarized(GHZ, 0.735)) == pytest.approx(0.768125, abs=1e-12)


@given(st.floats(0, 1))
@settings(max_examples=25, deadline=None)
def test_fidelity_affine_in_mixing(p):
    assert ghz_fidelity(depolarized(GHZ, p)) == pytest.approx((1 + 7 * p) / 8, abs=1e-12)


# --- witness ----------------------------------------------------------------


def test_witness_examples(ghz_rho, mixed8):
    w = witness_minimum(ghz_rho)
    assert w.value == pytest.approx(-0.25, abs=1e-9)
    assert witness_value(ghz_rho, w.optimal_unitary.angles) == pytest.approx(w.value, abs=1e-12)
    assert witness_minimum(mixed8).value == pytest.approx(0.625, abs=1e-9)
    assert witness_minimum(product_state("HHH").density_matrix()).value == pytest.approx(0.25, abs=1e-8)


def test_witness_product_state_matches_grid_oracle():
    # |<GHZ| (x) Ry(t_k)|H>|^2 = (c1 c2 c3 + s1 s2 s3)^2 / 2 on a grid of real rotations
    t = np.linspace(0, np.pi, 181)
    c, s = np.cos(t), np.sin(t)
    overlap = (c[:, None, None] * c[None, :, None] * c[None, None, :]
               + s[:, None, None] * s[None, :, None] * s[None, None, :]) ** 2 / 2
    oracle = 0.75 - overlap.max()
    got = witness_minimum(product_state("HHH").density_matrix(), restarts=8).value
    assert got <= oracle + 1e-9
    assert got == pytest.approx(oracle, abs=1e-6)


def test_witness_of_werner_is_offset_minus_fidelity():
    for p in (0.2, 0.735, 1.0):
        rho = depolarized(GHZ, p)
        assert witness_minimum(rho, restarts=4).value == pytest.approx(0.75 - ghz_fidelity(rho), abs=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_witness_invariant_under_local_unitaries(seed):
    rng = np.random.default_rng(seed)
    rho = noisy_ghz(rng)
    a = witness_minimum(rho).value
    b = witness_minimum(rotate(rho, rng)).value
    assert a == pytest.approx(b, abs=1e-6)


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_witness_floor(seed):
    rho = random_density(np.random.default_rng(seed))
    w = witness_minimum(rho, restarts=4).value
    assert -0.25 - 1e-12 <= w <= 0.75
    # never worse than the unrotated value
    assert w <= witness_value(rho, np.zeros(9)) + 1e-12


def test_witness_restart_count(ghz_rho):
    assert witness_minimum(ghz_rho, restarts=3).restarts_used == 3
    assert witness_minimum(ghz_rho, restarts=3, init=np.ones(9)).restarts_used == 4
    with pytest.raises(TomographyError):
        witness_minimum(ghz_rho, restarts=0)


# --- Mermin -----------------------------------------------------------------


def test_mermin_correlation_examples(ghz_rho):
    assert mermin_correlation(ghz_rho, X_SETTING, X_SETTING, X_SETTING) == pytest.approx(1.0)
    assert mermin_correlation(ghz_rho, X_SETTING, X_SETTING, Y_SETTING) == pytest.approx(0.0, abs=1e-12)
    assert mermin_correlation(ghz_rho, Y_SETTING, Y_SETTING, X_SETTING) == pytest.approx(-1.0)


def test_bloch_measurement_operator():
    z = BlochMeasurement(0.0, 0.0)
    np.testing.assert_allclose(z.operator(), np.diag([1, -1]), atol=1e-15)
    np.testing.assert_allclose(X_SETTING.vector(), [1, 0, 0], atol=1e-15)


def test_mermin_examples(ghz_rho, mixed8):
    m = mermin_maximum(ghz_rho)
    assert m.value == pytest.approx(4.0, abs=1e-9)
    assert mermin_value(ghz_rho, m.settings) == pytest.approx(m.value, abs=1e-9)
    assert mermin_value(ghz_rho, (Y_SETTING, X_SETTING) * 3) == pytest.approx(4.0)
    assert mermin_maximum(mixed8).value == pytest.approx(0.0, abs=1e-9)
    assert mermin_maximum(product_state("HHH").density_matrix()).value == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("p", [0.6, 0.8, 1.0])
def test_mermin_of_werner_is_linear(p):
    assert mermin_maximum(depolarized(GHZ, p)).value == pytest.approx(4 * p, abs=1e-6)


def _grid_directions():
    pts = [v for v in itertools.product((-1, 0, 1), repeat=3) if any(v)]
    return np.array([np.array(v) / np.linalg.norm(v) for v in pts])


def test_mermin_beats_direction_grid_oracle(rng):
    rho = noisy_ghz(rng, 0.5)
    paulis = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    t = np.array([
        np.trace(rho.entries @ np.kron(np.kron(paulis[i], paulis[j]), paulis[k])).real
        for i in range(3) for j in range(3) for k in range(3)
    ]).reshape(3, 3, 3)
    d = _grid_directions()  # 26 directions
    tb = np.einsum("ijk,aj->aik", t, d)  # contract B
    best = 0.0
    for a, a2 in itertools.product(range(len(d)), repeat=2):
        ta = np.einsum("i,bik->bk", d[a], tb)  # [b, k]
        ta2 = np.einsum("i,bik->bk", d[a2], tb)
        e_ta = ta @ d.T  # [b, c]
        e_ta2 = ta2 @ d.T
        # E(a,b,c') + E(a,b',c) + E(a',b,c) - E(a',b',c')
        s = (e_ta[:, None, None, :] + e_ta[None, :, :, None]
             + e_ta2[:, None, :, None] - e_ta2[None, :, None, :])
        best = max(best, float(np.abs(s).max()))
    got = mermin_maximum(rho).value
    assert got >= best - 1e-9
    assert got <= 4.0


@pytest.mark.parametrize("seed", range(3))
def test_mermin_invariant_under_local_unitaries(seed):
    rng = np.random.default_rng(100 + seed)
    rho = noisy_ghz(rng)
    a = mermin_maximum(rho).value
    b = mermin_maximum(rotate(rho, rng)).value
    assert a == pytest.approx(b, abs=1e-6)


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_mermin_bounds(seed):
    rng = np.random.default_rng(seed)
    assert 0 <= mermin_maximum(random_density(rng), restarts=4).value <= 4 + 1e-9
    # product states obey the local bound
    prod = np.kron(np.kron(random_density(rng, 1).entries, random_density(rng, 1).entries),
                   random_density(rng, 1).entries)
    assert mermin_maximum(prod, restarts=4).value <= 2 + 1e-9


# --- concurrence ------------------------------------------------------------


def wootters_oracle(m):
    yy = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))
    ev = np.linalg.eigvals(m @ yy @ m.conj() @ yy)
    lam = np.sort(np.sqrt(np.clip(ev.real, 0, None)))[::-1]
    return max(0.0, lam[0] - lam[1:].sum())


def test_concurrence_examples():
    assert concurrence2(PHI_PLUS.density_matrix()) == pytest.approx(1.0, abs=1e-9)
    assert concurrence2(product_state("HD").density_matrix()) == pytest.approx(0.0, abs=1e-9)
    assert concurrence2(np.eye(4) / 4) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p", [0.2, 1 / 3, 0.5, 0.9])
def test_concurrence_of_two_qubit_werner(p):
    rho = depolarized(PHI_PLUS, p)
    assert concurrence2(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-9)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_concurrence_matches_eigvals_oracle(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 2, rank=int(rng.integers(1, 5)))
    assert concurrence2(rho) == pytest.approx(wootters_oracle(rho.entries), abs=1e-7)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_concurrence_local_unitary_invariant(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 2, rank=2)
    u = LocalUnitary.random(2, rng).matrix()
    assert concurrence2(u @ rho.entries @ u.conj().T) == pytest.approx(concurrence2(rho), abs=1e-8)


def test_concurrence_rejects_unphysical():
    with pytest.raises(PhysicalityError):
        concurrence2(np.diag([1.1, 0.0, 0.0, -0.1]))
    with pytest.raises(TomographyError):
        concurrence2(np.eye(8) / 8)


def test_pair_concurrences_of_ghz(ghz_rho):
    conc = pair_concurrences(ghz_rho)
    assert set(conc) == {"AB", "A1", "B1"}
    assert all(v == pytest.approx(0.0, abs=1e-9) for v in conc.values())


def test_pair_concurrences_name_the_kept_photons():
    # Bell pair on photons A and 1, photon B in H
    psi = np.zeros(8)
    psi[[0b000, 0b101]] = 1 / np.sqrt(2)
    rho = np.outer(psi, psi)
    conc = pair_concurrences(rho)
    assert conc["A1"] == pytest.approx(1.0, abs=1e-9)
    assert conc["AB"] == pytest.approx(0.0, abs=1e-9)
    assert conc["B1"] == pytest.approx(0.0, abs=1e-9)


# --- report -----------------------------------------------------------------


def test_full_report_ghz(ghz_rho):
    rep = full_report(ghz_rho)
    s = rep.scalars()
    assert s["fidelity"] == pytest.approx(1.0)
    assert s["witness_min"] == pytest.approx(-0.25, abs=1e-9)
    assert s["mermin_max"] == pytest.approx(4.0, abs=1e-9)
    assert s["concurrence_AB"] == pytest.approx(0.0, abs=1e-9)


def test_full_report_mixed(mixed8):
    s = full_report(mixed8).scalars()
    assert s["fidelity"] == pytest.approx(0.125)
    assert s["witness_min"] == pytest.approx(0.625, abs=1e-9)
    assert s["mermin_max"] == pytest.approx(0.0, abs=1e-9)


def test_full_report_requires_three_qubits():
    with pytest.raises(TomographyError):
        full_report(np.eye(4) / 4)


def test_report_round_trip(werner735):
    rep = full_report(werner735, restarts=4)
    summary = MonteCarloSummary(mean={}, std={"fidelity": 0.02, "mermin_max": 0.1}, trial_count=10)
    rep = with_uncertainties(rep, summary)
    text = format_report(rep, header=["x"])
    back = parse_report(text)
    assert back.fidelity == pytest.approx(rep.fidelity, rel=1e-5)
    assert back.mermin.value == pytest.approx(rep.mermin.value, rel=1e-5)
    assert back.uncertainties.std["mermin_max"] == pytest.approx(0.1)
    assert back.uncertainties.trial_count == 10
    assert format_report(back, header=["x"]) == text


def test_parse_report_errors():
    with pytest.raises(DataError):
        parse_report("fidelity = 1\n")
    with pytest.raises(DataError):
        parse_report("no equals sign here\n")
