"""Small dense linear algebra for multi-qubit polarization states.

Qubit ordering is big-endian throughout: the first qubit of a tensor product
is the most significant bit of the computational index.  Polarization maps
onto the computational basis as H -> 0, V -> 1, so ``|HVV>`` is index 3.
For the three-photon state the qubits are photons (A, B, 1) in that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateProjectionError, PhysicalityError, TomographyError

QUBIT_ORDER = "big-endian"

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-9


def _n_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 2**n != dim:
        raise TomographyError(f"dimension {dim} is not a power of two")
    return n


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        _n_qubits(amps.size)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise TomographyError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise TomographyError("cannot normalize the zero vector")
        return cls(amps / norm)

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def projector(self) -> "HermitianOperator":
        return HermitianOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


def _check_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise TomographyError(f"expected a square matrix, got shape {m.shape}")
    _n_qubits(m.shape[0])


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    entries: np.ndarray

    def __post_init__(self):
        m = _frozen(self.entries)
        _check_square(m)
        err = hermiticity_error(m)
        if err > HERMITIAN_TOL:
            raise TomographyError(f"operator is not Hermitian (max deviation {err:.3g})")
        object.__setattr__(self, "entries", m)

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.entries.shape[0])

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace state.

    Positivity is enforced unless ``require_psd=False``, which is reserved for
    diagnostic outputs such as linear inversion; check :attr:`is_physical`.
    """

    entries: np.ndarray
    require_psd: bool = True

    def __post_init__(self):
        m = _frozen(self.entries)
        _check_square(m)
        err = hermiticity_error(m)
        if err > HERMITIAN_TOL:
            raise TomographyError(f"density matrix is not Hermitian (max deviation {err:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise TomographyError(f"density matrix trace {tr!r} differs from 1")
        object.__setattr__(self, "entries", m)
        if self.require_psd and self.min_eigenvalue < PSD_FLOOR:
            raise PhysicalityError(
                f"density matrix has negative eigenvalue {self.min_eigenvalue:.3g}"
            )

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.entries.shape[0])

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= PSD_FLOOR

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d) / d)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


AnyState = Union[PureState, DensityMatrix, HermitianOperator]


def matrix_of(x) -> np.ndarray:
    """Return the dense matrix behind a DensityMatrix/HermitianOperator/array."""
    if isinstance(x, (DensityMatrix, HermitianOperator)):
        return x.entries
    if isinstance(x, PureState):
        raise TypeError("expected a matrix, got a PureState")
    m = np.asarray(x, dtype=complex)
    _check_square(m)
    return m


def as_density(x) -> DensityMatrix:
    if isinstance(x, DensityMatrix):
        return x
    if isinstance(x, PureState):
        return x.density_matrix()
    return DensityMatrix(np.asarray(x, dtype=complex))


# Single-qubit polarization states and Pauli matrices.
_S2 = 1 / np.sqrt(2)
KET = {
    "H": PureState([1, 0]),
    "V": PureState([0, 1]),
    "D": PureState([_S2, _S2]),
    "A": PureState([_S2, -_S2]),
    "R": PureState([_S2, -1j * _S2]),
    "L": PureState([_S2, 1j * _S2]),
}

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


def product_state(labels: str) -> PureState:
    """``product_state("HVD")`` -> |H>|V>|D>."""
    return PureState(reduce(np.kron, (KET[c].amplitudes for c in labels)))


def pauli_string(labels: str) -> HermitianOperator:
    """``pauli_string("XXY")`` -> sigma_x (x) sigma_x (x) sigma_y."""
    return HermitianOperator(reduce(np.kron, (PAULI[c] for c in labels)))


def ghz_state(n_qubits: int = 3) -> PureState:
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = amps[-1] = _S2
    return PureState(amps)


PHI_PLUS = ghz_state(2)
GHZ = ghz_state(3)


def mixture(rho1, rho2, p: float) -> DensityMatrix:
    """p * rho1 + (1 - p) * rho2."""
    if not 0.0 <= p <= 1.0:
        raise TomographyError(f"mixing weight {p} outside [0, 1]")
    return DensityMatrix(p * matrix_of(as_density(rho1)) + (1 - p) * matrix_of(as_density(rho2)))


def depolarized(psi: PureState, p: float) -> DensityMatrix:
    """p |psi><psi| + (1 - p) I/d."""
    return mixture(psi.density_matrix(), DensityMatrix.maximally_mixed(psi.n_qubits), p)


def tensor_product(a: AnyState, b: AnyState) -> AnyState:
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix):
        return DensityMatrix(
            np.kron(a.entries, b.entries), require_psd=a.require_psd and b.require_psd
        )
    if isinstance(a, HermitianOperator):
        return HermitianOperator(np.kron(a.entries, b.entries))
    raise TypeError(f"unsupported operand {type(a).__name__}")


def tensor(*items: AnyState) -> AnyState:
    return reduce(tensor_product, items)


def permute_qubits(psi: PureState, order: Sequence[int]) -> PureState:
    """Reorder qubits so that new qubit k is old qubit ``order[k]``."""
    n = psi.n_qubits
    if sorted(order) != list(range(n)):
        raise TomographyError(f"{order} is not a permutation of {n} qubits")
    amps = psi.amplitudes.reshape((2,) * n).transpose(order)
    return PureState(amps.ravel())


def partial_trace(rho, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the qubits in ``keep`` (kept in ascending order)."""
    m = matrix_of(rho)
    n = _n_qubits(m.shape[0])
    keep = sorted(set(keep))
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise TomographyError(f"invalid keep set {keep} for {n} qubits")
    traced = [q for q in range(n) if q not in keep]
    t = m.reshape((2,) * (2 * n))
    # einsum labels: row index letters then column letters; traced qubits share a letter
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for q in traced:
        cols[q] = rows[q]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = 2 ** len(keep)
    require_psd = rho.require_psd if isinstance(rho, DensityMatrix) else True
    return DensityMatrix(reduced.reshape(dk, dk), require_psd=require_psd)


def project_qubit(psi: PureState, qubit: int, onto: PureState) -> tuple[PureState, float]:
    """Project one qubit of ``psi`` onto ``onto``.

    Returns the renormalized state of the remaining qubits and the success
    probability.
    """
    n = psi.n_qubits
    if onto.n_qubits != 1:
        raise TomographyError("projection target must be a single-qubit state")
    if not 0 <= qubit < n:
        raise TomographyError(f"qubit index {qubit} out of range for {n} qubits")
    t = psi.amplitudes.reshape((2,) * n)
    rest = np.tensordot(onto.amplitudes.conj(), t, axes=([0], [qubit])).ravel()
    prob = float(np.vdot(rest, rest).real)
    if prob < 1e-14:
        raise DegenerateProjectionError(f"projection of qubit {qubit} has probability {prob:.3g}")
    return PureState(rest / np.sqrt(prob)), prob


def fidelity_pure(rho, psi: PureState) -> float:
    """<psi|rho|psi> clamped to [0, 1]."""
    m = matrix_of(rho)
    if m.shape[0] != psi.dim:
        raise TomographyError(f"dimension mismatch: rho {m.shape[0]}, psi {psi.dim}")
    v = psi.amplitudes
    f = np.vdot(v, m @ v)
    if abs(f.imag) > 1e-12:
        raise TomographyError(f"fidelity has imaginary part {f.imag:.3g}")
    return float(min(max(f.real, 0.0), 1.0))


def expectation(rho, obs) -> float:
    """Tr(obs rho) for Hermitian arguments."""
    m = matrix_of(rho)
    o = matrix_of(obs)
    if m.shape != o.shape:
        raise TomographyError(f"dimension mismatch: {m.shape} vs {o.shape}")
    val = np.einsum("ij,ji->", o, m)
    if abs(val.imag) > 1e-10:
        raise TomographyError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def eigendecompose(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors (columns)."""
    m = matrix_of(h)
    err = hermiticity_error(m)
    if err > HERMITIAN_TOL:
        raise TomographyError(f"matrix is not Hermitian (max deviation {err:.3g})")
    w, v = np.linalg.eigh(m)
    return w[::-1].copy(), v[:, ::-1].copy()


def sanitize(m) -> DensityMatrix:
    """Clamp negative eigenvalues to zero and renormalize the trace.

    This is the only place an unphysical matrix is turned into a state; it is
    never applied implicitly.
    """
    m = matrix_of(m)
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise PhysicalityError("matrix has no positive spectrum to keep")
    out = (v * (w / w.sum())) @ v.conj().T
    return DensityMatrix((out + out.conj().T) / 2)


class LocalUnitary:
    """Tensor product of single-qubit unitaries Rz(a) Ry(b) Rz(c).

    ``angles`` has shape (n_qubits, 3); global phases are dropped.
    """

    def __init__(self, angles):
        a = np.array(angles, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 3)
        if a.ndim != 2 or a.shape[1] != 3:
            raise TomographyError(f"expected (n, 3) Euler angles, got shape {a.shape}")
        a.setflags(write=False)
        self.angles = a

    @property
    def n_qubits(self) -> int:
        return self.angles.shape[0]

    def factors(self) -> list[np.ndarray]:
        return [euler_unitary(*row) for row in self.angles]

    def matrix(self) -> np.ndarray:
        return reduce(np.kron, self.factors())

    def apply(self, x):
        """U psi for states, U rho U^dagger for matrices."""
        u = self.matrix()
        if isinstance(x, PureState):
            return PureState(u @ x.amplitudes)
        m = matrix_of(x)
        out = u @ m @ u.conj().T
        out = (out + out.conj().T) / 2
        if isinstance(x, HermitianOperator):
            return HermitianOperator(out)
        return DensityMatrix(out)

    @classmethod
    def random(cls, n_qubits: int, rng: np.random.Generator) -> "LocalUnitary":
        return cls(rng.uniform(0, 2 * np.pi, size=(n_qubits, 3)))

    def __repr__(self):
        return f"LocalUnitary({self.angles.tolist()!r})"


def euler_unitary(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rz(alpha) @ Ry(beta) @ Rz(gamma)."""
    rz_a = np.diag([np.exp(-0.5j * alpha), np.exp(0.5j * alpha)])
    rz_g = np.diag([np.exp(-0.5j * gamma), np.exp(0.5j * gamma)])
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    ry = np.array([[c, -s], [s, c]], dtype=complex)
    return rz_a @ ry @ rz_g
