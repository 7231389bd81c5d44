"""Entanglement quantities of a reconstructed three-photon state."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, PhysicalityError, TomographyError
from .qlin import (
    GHZ,
    PAULI,
    PSD_FLOOR,
    DensityMatrix,
    LocalUnitary,
    euler_unitary,
    expectation,
    fidelity_pure,
    matrix_of,
    partial_trace,
)
from .reconstruct import MonteCarloSummary

WITNESS_OFFSET = 0.75
DEFAULT_RESTARTS = 32
PHOTONS = ("A", "B", "1")


def _three_qubit(rho) -> np.ndarray:
    m = matrix_of(rho)
    if m.shape != (8, 8):
        raise TomographyError(f"expected a three-qubit (8x8) state, got {m.shape}")
    return m


def ghz_fidelity(rho) -> float:
    return fidelity_pure(_three_qubit(rho), GHZ)


# --- witness -----------------------------------------------------------------


@dataclass(frozen=True)
class WitnessResult:
    value: float
    optimal_unitary: LocalUnitary
    restarts_used: int


def _ghz_image(us) -> np.ndarray:
    """(u1 (x) u2 (x) u3)|GHZ> built from the columns of each 2x2 factor."""
    a = np.kron(np.kron(us[0][:, 0], us[1][:, 0]), us[2][:, 0])
    b = np.kron(np.kron(us[0][:, 1], us[1][:, 1]), us[2][:, 1])
    return (a + b) / np.sqrt(2)


def _rotated_ghz(angles: np.ndarray) -> np.ndarray:
    return _ghz_image([euler_unitary(*angles[3 * k : 3 * k + 3]) for k in range(3)])


def _columns_and_derivatives(angles: np.ndarray):
    """Columns of Rz(a) Ry(b) Rz(c) for each qubit and their angle derivatives.

    Returns a, b with shape (3, 2) and da, db with shape (3, 3, 2) indexed
    [qubit, angle, component].
    """
    al, be, ga = angles.reshape(3, 3).T
    ep = np.exp(-0.5j * (al + ga))
    em = np.exp(-0.5j * (al - ga))
    c, s = np.cos(be / 2), np.sin(be / 2)
    a = np.stack([ep * c, em.conj() * s], axis=1)
    b = np.stack([-em * s, ep.conj() * c], axis=1)
    half = np.array([-0.5j, 0.5j])
    da = np.stack([a * half, np.stack([-ep * s / 2, em.conj() * c / 2], axis=1), -0.5j * a], axis=1)
    db = np.stack([b * half, np.stack([-em * c / 2, -ep.conj() * s / 2], axis=1), 0.5j * b], axis=1)
    return a, b, da, db


def _witness_and_grad(m: np.ndarray, angles: np.ndarray) -> tuple[float, np.ndarray]:
    a, b, da, db = _columns_and_derivatives(angles)
    phi = (np.einsum("i,j,k->ijk", a[0], a[1], a[2]) + np.einsum("i,j,k->ijk", b[0], b[1], b[2])).ravel()
    phi /= np.sqrt(2)
    v = (m @ phi).conj().reshape(2, 2, 2) / np.sqrt(2)
    # contractions of <v| with all but one qubit, for the a- and b-branches
    wa = (np.einsum("ijk,j,k->i", v, a[1], a[2]), np.einsum("ijk,i,k->j", v, a[0], a[2]),
          np.einsum("ijk,i,j->k", v, a[0], a[1]))
    wb = (np.einsum("ijk,j,k->i", v, b[1], b[2]), np.einsum("ijk,i,k->j", v, b[0], b[2]),
          np.einsum("ijk,i,j->k", v, b[0], b[1]))
    grad = np.concatenate([-2 * (da[q] @ wa[q] + db[q] @ wb[q]).real for q in range(3)])
    overlap = np.dot(wa[0], a[0]) + np.dot(wb[0], b[0])
    return WITNESS_OFFSET - float(overlap.real), grad


def witness_value(rho, angles) -> float:
    """Tr[(3/4 I - U P_GHZ U^dagger) rho] for local unitary U(angles)."""
    m = _three_qubit(rho)
    phi = _rotated_ghz(np.asarray(angles, dtype=float).ravel())
    return WITNESS_OFFSET - float(np.vdot(phi, m @ phi).real)


def _multistart(fun, starts):
    """``fun`` returns (value, gradient)."""
    best_x, best_f = None, np.inf
    for x0 in starts:
        res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": 2000})
        # strict comparison keeps the earliest start on ties
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    return best_x


def witness_minimum(rho, restarts: int = DEFAULT_RESTARTS, seed: int = 0, init=None) -> WitnessResult:
    """Minimize the GHZ witness over local unitaries.

    Starts from the identity, then ``restarts - 1`` uniformly random angle
    sets; ``init`` (angles) is tried first when given.
    """
    if restarts < 1:
        raise TomographyError("restarts must be at least 1")
    m = _three_qubit(rho)
    rng = np.random.default_rng(seed)
    starts = [] if init is None else [np.asarray(init, dtype=float).ravel()]
    starts.append(np.zeros(9))
    starts += [rng.uniform(0, 2 * np.pi, 9) for _ in range(restarts - 1)]
    best = _multistart(lambda x: _witness_and_grad(m, x), starts)
    return WitnessResult(witness_value(m, best), LocalUnitary(best.reshape(3, 3)), len(starts))


# --- Mermin ------------------------------------------------------------------


@dataclass(frozen=True)
class BlochMeasurement:
    theta: float
    phi: float

    def vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    def operator(self) -> np.ndarray:
        x, y, z = self.vector()
        return x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"]


X_SETTING = BlochMeasurement(np.pi / 2, 0.0)
Y_SETTING = BlochMeasurement(np.pi / 2, np.pi / 2)


def mermin_correlation(rho, a: BlochMeasurement, b: BlochMeasurement, c: BlochMeasurement) -> float:
    m = _three_qubit(rho)
    obs = np.kron(np.kron(a.operator(), b.operator()), c.operator())
    return expectation(m, obs)


def correlation_tensor(rho) -> np.ndarray:
    """T[i, j, k] = Tr[rho sigma_i sigma_j sigma_k] for i, j, k in (x, y, z)."""
    m = _three_qubit(rho)
    sig = np.array([PAULI["X"], PAULI["Y"], PAULI["Z"]])
    ops = np.einsum("iab,jcd,kef->ijkacebdf", sig, sig, sig).reshape(3, 3, 3, 8, 8)
    return np.einsum("ijkxy,yx->ijk", ops, m).real


def _vectors(angles: np.ndarray) -> np.ndarray:
    th, ph = angles[0::2], angles[1::2]
    st = np.sin(th)
    return np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=1)


def _mermin_sum(tensor: np.ndarray, angles: np.ndarray) -> float:
    a, a2, b, b2, c, c2 = _vectors(angles)
    e = lambda x, y, z: np.einsum("ijk,i,j,k->", tensor, x, y, z)  # noqa: E731
    return e(a, b, c2) + e(a, b2, c) + e(a2, b, c) - e(a2, b2, c2)


def _neg_mermin_sq_and_grad(tensor: np.ndarray, angles: np.ndarray) -> tuple[float, np.ndarray]:
    a, a2, b, b2, c, c2 = _vectors(angles)
    t = tensor
    # gradient of the signed sum with respect to each Bloch vector
    g_vec = [
        np.einsum("ijk,j,k->i", t, b, c2) + np.einsum("ijk,j,k->i", t, b2, c),
        np.einsum("ijk,j,k->i", t, b, c) - np.einsum("ijk,j,k->i", t, b2, c2),
        np.einsum("ijk,i,k->j", t, a, c2) + np.einsum("ijk,i,k->j", t, a2, c),
        np.einsum("ijk,i,k->j", t, a, c) - np.einsum("ijk,i,k->j", t, a2, c2),
        np.einsum("ijk,i,j->k", t, a, b2) + np.einsum("ijk,i,j->k", t, a2, b),
        np.einsum("ijk,i,j->k", t, a, b) - np.einsum("ijk,i,j->k", t, a2, b2),
    ]
    total = float(np.dot(g_vec[0], a) + np.einsum("ijk,i,j,k->", t, a2, b, c) - np.einsum("ijk,i,j,k->", t, a2, b2, c2))
    th, ph = angles[0::2], angles[1::2]
    grad = np.empty(12)
    for k in range(6):
        d_th = np.array([np.cos(th[k]) * np.cos(ph[k]), np.cos(th[k]) * np.sin(ph[k]), -np.sin(th[k])])
        d_ph = np.array([-np.sin(th[k]) * np.sin(ph[k]), np.sin(th[k]) * np.cos(ph[k]), 0.0])
        grad[2 * k] = g_vec[k] @ d_th
        grad[2 * k + 1] = g_vec[k] @ d_ph
    return -total**2, -2 * total * grad


@dataclass(frozen=True)
class MerminResult:
    """``settings`` is (A, A', B, B', C, C')."""

    value: float
    settings: tuple[BlochMeasurement, ...]


def mermin_value(rho, settings: Sequence[BlochMeasurement]) -> float:
    """|E(ABC') + E(AB'C) + E(A'BC) - E(A'B'C')| from explicit correlations."""
    a, a2, b, b2, c, c2 = settings
    e = lambda x, y, z: mermin_correlation(rho, x, y, z)  # noqa: E731
    return abs(e(a, b, c2) + e(a, b2, c) + e(a2, b, c) - e(a2, b2, c2))


def _angles_of(settings) -> np.ndarray:
    return np.array([v for s in settings for v in (s.theta, s.phi)], dtype=float)


CANONICAL_MERMIN_SEEDS = (
    # unprimed Y, primed X: YYX + YXY + XYY - XXX = -4 on GHZ
    (Y_SETTING, X_SETTING) * 3,
    (X_SETTING, Y_SETTING) * 3,
)


def mermin_maximum(rho, restarts: int = DEFAULT_RESTARTS, seed: int = 0, init=None) -> MerminResult:
    """Maximize the Mermin parameter over all six Bloch directions."""
    if restarts < 1:
        raise TomographyError("restarts must be at least 1")
    tensor = correlation_tensor(rho)
    rng = np.random.default_rng(seed)
    starts = [] if init is None else [_angles_of(init)]
    starts += [_angles_of(s) for s in CANONICAL_MERMIN_SEEDS]
    for _ in range(restarts - 1):
        x = np.empty(12)
        x[0::2] = rng.uniform(0, np.pi, 6)
        x[1::2] = rng.uniform(0, 2 * np.pi, 6)
        starts.append(x)
    best = _multistart(lambda x: _neg_mermin_sq_and_grad(tensor, x), starts)
    settings = tuple(BlochMeasurement(float(best[2 * k]), float(best[2 * k + 1])) for k in range(6))
    return MerminResult(abs(float(_mermin_sum(tensor, best))), settings)


# --- concurrence -------------------------------------------------------------

_YY = np.kron(PAULI["Y"], PAULI["Y"])


def concurrence2(rho2) -> float:
    """Wootters concurrence of a two-qubit state.

    The Wootters lambdas (square roots of the eigenvalues of
    rho (Y@Y) rho* (Y@Y)) are the singular values of sqrt(rho) (Y@Y) sqrt(rho)*,
    which avoids taking square roots of near-zero eigenvalues.
    """
    m = matrix_of(rho2)
    if m.shape != (4, 4):
        raise TomographyError(f"expected a two-qubit (4x4) state, got {m.shape}")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    if w[0] < PSD_FLOOR:
        raise PhysicalityError(f"concurrence needs a physical state; min eigenvalue {w[0]:.3g}")
    # eigenvalues at rounding level are zeros of a rank-deficient state
    w = np.where(w > 1e-14 * max(w[-1], 1e-300), w, 0.0)
    sq = (v * np.sqrt(w)) @ v.conj().T
    lam = np.linalg.svd(sq @ _YY @ sq.conj(), compute_uv=False)
    return float(min(max(lam[0] - lam[1:].sum(), 0.0), 1.0))


def pair_concurrences(rho) -> dict[str, float]:
    """Concurrence of each two-photon reduction, keyed by the photons kept."""
    _three_qubit(rho)
    out = {}
    for drop in (2, 1, 0):
        keep = [q for q in range(3) if q != drop]
        name = "".join(PHOTONS[q] for q in keep)
        out[name] = concurrence2(partial_trace(rho, keep))
    return out


# --- report ------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisReport:
    fidelity: float
    witness: WitnessResult
    mermin: MerminResult
    concurrences: dict[str, float]
    uncertainties: MonteCarloSummary | None = None

    def scalars(self) -> dict[str, float]:
        out = {
            "fidelity": self.fidelity,
            "witness_min": self.witness.value,
            "mermin_max": self.mermin.value,
        }
        for k, v in self.concurrences.items():
            out[f"concurrence_{k}"] = v
        return out


def full_report(rho, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> AnalysisReport:
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(np.asarray(rho, dtype=complex))
    if rho.n_qubits != 3:
        raise TomographyError(f"expected a three-qubit state, got {rho.n_qubits} qubits")
    return AnalysisReport(
        fidelity=ghz_fidelity(rho),
        witness=witness_minimum(rho, restarts, seed),
        mermin=mermin_maximum(rho, restarts, seed),
        concurrences=pair_concurrences(rho),
    )


def report_quantities(report: AnalysisReport, restarts: int = 4, seed: int = 0) -> dict:
    """Scalar functions of rho for Monte Carlo, warm-started at the report's optima."""
    w_init = report.witness.optimal_unitary.angles
    m_init = report.mermin.settings

    def conc(name):
        return lambda r: pair_concurrences(r)[name]

    q = {
        "fidelity": ghz_fidelity,
        "witness_min": lambda r: witness_minimum(r, restarts, seed, init=w_init).value,
        "mermin_max": lambda r: mermin_maximum(r, restarts, seed, init=m_init).value,
    }
    for name in report.concurrences:
        q[f"concurrence_{name}"] = conc(name)
    return q


def with_uncertainties(report: AnalysisReport, summary: MonteCarloSummary) -> AnalysisReport:
    return AnalysisReport(report.fidelity, report.witness, report.mermin, report.concurrences, summary)


def _g(x: float) -> str:
    return f"{x:.6g}"


def format_report(report: AnalysisReport, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    unc = report.uncertainties
    for key, val in report.scalars().items():
        buf.write(f"{key} = {_g(val)}\n")
        if unc is not None and key in unc.std:
            buf.write(f"{key}_std = {_g(unc.std[key])}\n")
    angles = report.witness.optimal_unitary.angles.ravel()
    buf.write("witness_angles = " + " ".join(_g(a) for a in angles) + "\n")
    buf.write(f"witness_restarts = {report.witness.restarts_used}\n")
    buf.write("mermin_settings = " + " ".join(_g(a) for a in _angles_of(report.mermin.settings)) + "\n")
    if unc is not None:
        buf.write(f"mc_trials = {unc.trial_count}\n")
    return buf.getvalue()


def parse_report(text: str) -> AnalysisReport:
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, val = (p.strip() for p in s.partition("="))
        if not sep:
            raise DataError(f"line {lineno}: expected 'key = value', got {s!r}")
        fields[key] = val
    try:
        angles = np.array([float(x) for x in fields["witness_angles"].split()]).reshape(3, 3)
        mset = [float(x) for x in fields["mermin_settings"].split()]
        if len(mset) != 12:
            raise ValueError("mermin_settings needs 12 angles")
        settings = tuple(BlochMeasurement(mset[2 * k], mset[2 * k + 1]) for k in range(6))
        conc = {k[len("concurrence_") :]: float(v) for k, v in fields.items()
                if k.startswith("concurrence_") and not k.endswith("_std")}
        unc = None
        if "mc_trials" in fields:
            std = {k[: -len("_std")]: float(v) for k, v in fields.items() if k.endswith("_std")}
            unc = MonteCarloSummary(mean={}, std=std, trial_count=int(fields["mc_trials"]))
        return AnalysisReport(
            fidelity=float(fields["fidelity"]),
            witness=WitnessResult(
                float(fields["witness_min"]), LocalUnitary(angles), int(fields["witness_restarts"])
            ),
            mermin=MerminResult(float(fields["mermin_max"]), settings),
            concurrences=conc,
            uncertainties=unc,
        )
    except (KeyError, ValueError, TomographyError) as exc:
        raise DataError(f"invalid analysis report: {exc!r}") from None
