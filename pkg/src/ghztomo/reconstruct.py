"""Density-matrix reconstruction from 64 three-photon coincidence counts.

Two estimators are provided:

* :func:`linear_invert` solves the Born-rule equations directly.  It is exact on
  noiseless data but can return matrices with negative eigenvalues.
* :func:`mle_reconstruct` maximizes the Poisson likelihood over
  ``M = T^dagger T`` with ``T`` lower triangular.  ``M`` is positive by
  construction; its trace is the flux and ``M / Tr M`` is the state.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, TomographyError
from .qlin import PAULI, DensityMatrix, matrix_of, sanitize
from .tomo import HV_BLOCK, N_SETTINGS, TomographySet, analyzer_kets, counts_to_set

DIM = 8
N_PARAMS = DIM * DIM
LAMBDA_FLOOR = 1e-12
UNPHYSICAL_EIG = -1e-6

# --- Cholesky parameterization ----------------------------------------------

_LOWER = [(i, j) for i in range(DIM) for j in range(i)]


@lru_cache(maxsize=None)
def _t_basis() -> np.ndarray:
    """(64, 8, 8) complex basis with T = sum_k t_k B_k.

    Order: 8 real diagonal entries, then (Re, Im) of each strictly lower
    entry in row-major order.
    """
    b = np.zeros((N_PARAMS, DIM, DIM), dtype=complex)
    for i in range(DIM):
        b[i, i, i] = 1
    for k, (i, j) in enumerate(_LOWER):
        b[DIM + 2 * k, i, j] = 1
        b[DIM + 2 * k + 1, i, j] = 1j
    b.setflags(write=False)
    return b


def t_to_matrix(t: Sequence[float]) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (N_PARAMS,):
        raise TomographyError(f"expected {N_PARAMS} parameters, got shape {t.shape}")
    T = np.zeros((DIM, DIM), dtype=complex)
    T[np.diag_indices(DIM)] = t[:DIM]
    rows, cols = zip(*_LOWER)
    T[rows, cols] = t[DIM::2] + 1j * t[DIM + 1 :: 2]
    return T


def t_to_unnormalized(t) -> np.ndarray:
    T = t_to_matrix(t)
    m = T.conj().T @ T
    return (m + m.conj().T) / 2


def t_to_rho(t) -> DensityMatrix:
    """rho(t) = T^dagger T / Tr(T^dagger T)."""
    m = t_to_unnormalized(t)
    tr = np.trace(m).real
    if tr <= 0:
        raise TomographyError("Cholesky parameters are all zero")
    return DensityMatrix(m / tr)


def matrix_to_t(m) -> np.ndarray:
    """Parameters t with T^dagger T = m for positive definite m."""
    m = matrix_of(m)
    # Reversing the index order turns the usual M = L L^dagger Cholesky
    # factor into a lower-triangular T with M = T^dagger T.
    rev = m[::-1, ::-1]
    L = np.linalg.cholesky((rev + rev.conj().T) / 2)
    T = L[::-1, ::-1].conj().T
    t = np.empty(N_PARAMS)
    t[:DIM] = T.diagonal().real
    rows, cols = zip(*_LOWER)
    t[DIM::2] = T[rows, cols].real
    t[DIM + 1 :: 2] = T[rows, cols].imag
    return t


@dataclass(frozen=True)
class CholeskyParams:
    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        if t.shape != (N_PARAMS,):
            raise TomographyError(f"expected {N_PARAMS} parameters, got shape {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_density(cls, rho, flux: float = 1.0, floor: float = 1e-3) -> "CholeskyParams":
        """Parameters for ``flux * ((1 - floor) rho + floor I/8)``."""
        m = (1 - floor) * matrix_of(rho) + floor * np.eye(DIM) / DIM
        return cls(matrix_to_t(flux * m))

    def rho(self) -> DensityMatrix:
        return t_to_rho(self.t)

    def flux(self) -> float:
        return float(np.sum(self.t**2))


@lru_cache(maxsize=None)
def _quadratic_forms() -> np.ndarray:
    """Q[nu] with <psi_nu|T^dagger T|psi_nu> = t @ Q[nu] @ t."""
    kets = analyzer_kets()
    v = np.einsum("kij,nj->nki", _t_basis(), kets)  # T_k psi_nu
    q = np.einsum("nki,nli->nkl", v.conj(), v).real
    q = (q + q.transpose(0, 2, 1)) / 2
    q.setflags(write=False)
    return q


def intensities(t) -> np.ndarray:
    """Expected counts lambda_nu = <psi_nu|T^dagger T|psi_nu>."""
    q = _quadratic_forms()
    return np.einsum("nkl,k,l->n", q, t, t)


# --- objectives --------------------------------------------------------------


def poisson_log_likelihood(counts, lam) -> float:
    """sum n ln(lambda) - lambda, with lambda floored inside the log."""
    counts = np.asarray(counts, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return float(np.sum(counts * np.log(np.maximum(lam, LAMBDA_FLOOR)) - lam))


class _Objective:
    """Negative log-likelihood (or Gaussian chi^2/2) in the t parameters."""

    def __init__(self, counts: np.ndarray, kind: str = "poisson"):
        if kind not in ("poisson", "gaussian"):
            raise ValueError(f"unknown objective {kind!r}")
        self.counts = np.asarray(counts, dtype=float)
        self.kind = kind
        self.var = np.maximum(self.counts, 1.0)
        self.q = _quadratic_forms()

    def value(self, t) -> float:
        lam = intensities(t)
        if self.kind == "poisson":
            return -poisson_log_likelihood(self.counts, lam)
        return float(np.sum((lam - self.counts) ** 2 / (2 * self.var)))

    def _derivs(self, lam):
        n = self.counts
        if self.kind == "poisson":
            safe = np.maximum(lam, LAMBDA_FLOOR)
            return 1 - n / safe, n / safe**2
        return (lam - n) / self.var, 1 / self.var

    def gradient(self, t) -> np.ndarray:
        qt = np.einsum("nkl,l->nk", self.q, t)
        d1, _ = self._derivs(np.einsum("nk,k->n", qt, t))
        return 2 * d1 @ qt

    def gradient_hessian(self, t) -> tuple[np.ndarray, np.ndarray]:
        qt = np.einsum("nkl,l->nk", self.q, t)
        d1, d2 = self._derivs(np.einsum("nk,k->n", qt, t))
        g = 2 * d1 @ qt
        h = 2 * np.einsum("n,nkl->kl", d1, self.q) + 4 * (qt.T * d2) @ qt
        return g, (h + h.T) / 2


@dataclass
class _Fit:
    t: np.ndarray
    value: float
    iterations: int
    converged: bool
    history: list[float]


def _newton(
    obj: _Objective,
    t0: np.ndarray,
    rtol_f: float,
    rtol_step: float,
    max_iter: int,
) -> _Fit:
    """Levenberg-damped Newton descent; only steps that lower the objective are taken."""
    t = np.array(t0, dtype=float)
    f = obj.value(t)
    history = [f]
    mu = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g, h = obj.gradient_hessian(t)
        w, u = np.linalg.eigh(h)
        scale = max(abs(w[-1]), 1e-300)
        shift = max(0.0, -w[0]) + mu * scale
        step = -u @ ((u.T @ g) / (w + shift))
        t_new = t + step
        f_new = obj.value(t_new)
        if np.isfinite(f_new) and f_new <= f:
            df = f - f_new
            t, f = t_new, f_new
            history.append(f)
            mu = max(mu * 0.2, 1e-12)
            small_f = df <= rtol_f * max(1.0, abs(f))
            small_step = np.linalg.norm(step) <= rtol_step * max(1.0, np.linalg.norm(t))
            if small_f and small_step:
                converged = True
                break
        else:
            mu *= 10
            if mu > 1e12:
                # no descent direction left at machine precision
                converged = bool(np.linalg.norm(g) <= 1e-6 * max(1.0, abs(f)))
                break
    return _Fit(t, f, it, converged, history)


# --- results -----------------------------------------------------------------


@dataclass(frozen=True)
class ReconstructionResult:
    rho: DensityMatrix
    flux: float
    log_likelihood: float
    iterations: int
    converged: bool
    method: str
    physical: bool = True
    objective: str = "poisson"
    params: CholeskyParams | None = None
    history: tuple[float, ...] = field(default=(), repr=False)


# --- linear inversion --------------------------------------------------------


@lru_cache(maxsize=None)
def _pauli_design() -> tuple[np.ndarray, np.ndarray]:
    """Design matrix A[nu, k] = <psi_nu|sigma_k|psi_nu>/8 and the sigma_k."""
    labels = "IXYZ"
    ops = []
    for a in labels:
        for b in labels:
            for c in labels:
                ops.append(np.kron(np.kron(PAULI[a], PAULI[b]), PAULI[c]))
    ops = np.array(ops)
    kets = analyzer_kets()
    design = np.einsum("ni,kij,nj->nk", kets.conj(), ops, kets).real / DIM
    cond = np.linalg.cond(design)
    # the {H,V,D,R}^3 design is well conditioned; anything else is a bug
    assert cond < 1e3, f"tomography design is ill-conditioned (cond={cond:.3g})"
    design.setflags(write=False)
    ops.setflags(write=False)
    return design, ops


def _hv_flux(counts: np.ndarray) -> float:
    flux = float(counts[list(HV_BLOCK)].sum())
    if not flux > 0:
        raise DataError("no counts in the {H,V}^3 settings; flux cannot be estimated")
    return flux


def linear_invert_counts(counts) -> ReconstructionResult:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (N_SETTINGS,):
        raise DataError(f"expected {N_SETTINGS} counts, got shape {counts.shape}")
    flux = _hv_flux(counts)
    design, ops = _pauli_design()
    coeffs = np.linalg.solve(design, counts / flux)
    m = np.einsum("k,kij->ij", coeffs, ops) / DIM
    m = (m + m.conj().T) / 2
    rho = DensityMatrix(m, require_psd=False)
    physical = rho.min_eigenvalue >= UNPHYSICAL_EIG
    lam = flux * (design @ coeffs)
    return ReconstructionResult(
        rho=rho,
        flux=flux,
        log_likelihood=poisson_log_likelihood(counts, lam),
        iterations=0,
        converged=True,
        method="linear",
        physical=physical,
    )


def linear_invert(tset: TomographySet) -> ReconstructionResult:
    return linear_invert_counts(tset.corrected_counts())


# --- maximum likelihood ------------------------------------------------------


def initial_params(counts) -> CholeskyParams:
    """Warm start from the eigen-clamped linear inversion, else maximally mixed."""
    counts = np.asarray(counts, dtype=float)
    flux = _hv_flux(counts)
    try:
        rho0 = sanitize(linear_invert_counts(counts).rho)
    except TomographyError:
        rho0 = DensityMatrix.maximally_mixed(3)
    return CholeskyParams.from_density(rho0, flux)


def mle_reconstruct_counts(
    counts,
    init: CholeskyParams | None = None,
    restarts: int = 5,
    seed: int = 0,
    objective: str = "poisson",
    rtol_f: float = 1e-10,
    rtol_step: float = 1e-8,
    max_iter: int = 100_000,
) -> ReconstructionResult:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (N_SETTINGS,):
        raise DataError(f"expected {N_SETTINGS} counts, got shape {counts.shape}")
    if not np.all(np.isfinite(counts)) or np.any(counts < 0):
        raise DataError("counts must be finite and nonnegative")
    if not counts.sum() > 0:
        raise DataError("all counts are zero")
    obj = _Objective(counts, objective)
    flux0 = _hv_flux(counts)
    starts = [init.t if init is not None else initial_params(counts).t]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        t = rng.standard_normal(N_PARAMS)
        starts.append(t * np.sqrt(flux0) / np.linalg.norm(t))

    best: _Fit | None = None
    total_iter = 0
    for t0 in starts:
        fit = _newton(obj, t0, rtol_f, rtol_step, max_iter)
        total_iter += fit.iterations
        if best is None or fit.value < best.value:
            best = fit
    assert best is not None
    params = CholeskyParams(best.t)
    lam = intensities(best.t)
    return ReconstructionResult(
        rho=params.rho(),
        flux=params.flux(),
        log_likelihood=poisson_log_likelihood(counts, lam),
        iterations=total_iter,
        converged=best.converged,
        method="mle",
        physical=True,
        objective=objective,
        params=params,
        history=tuple(-v for v in best.history) if objective == "poisson" else tuple(best.history),
    )


def mle_reconstruct(tset: TomographySet, init: CholeskyParams | None = None, **kwargs) -> ReconstructionResult:
    return mle_reconstruct_counts(tset.corrected_counts(), init=init, **kwargs)


# --- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloSummary:
    mean: dict[str, float]
    std: dict[str, float]
    trial_count: int
    samples: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


Quantity = Callable[[DensityMatrix], float]


def _named(quantities) -> dict[str, Quantity]:
    if isinstance(quantities, Mapping):
        return dict(quantities)
    return {getattr(q, "__name__", f"q{i}"): q for i, q in enumerate(quantities)}


def monte_carlo(
    tset: TomographySet,
    trials: int,
    seed: int,
    quantities: Mapping[str, Quantity] | Sequence[Quantity],
    **mle_kwargs,
) -> MonteCarloSummary:
    """Propagate Poisson count noise into derived quantities.

    Every corrected count is redrawn as Poisson(observed count), the state is
    re-estimated by maximum likelihood and each quantity evaluated.  Trial
    ``i`` uses the random stream ``(seed, i)``.
    """
    if trials < 2:
        raise TomographyError(f"need at least 2 Monte Carlo trials, got {trials}")
    named = _named(quantities)
    observed = tset.corrected_counts()
    samples = {k: np.empty(trials) for k in named}
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        counts = rng.poisson(observed).astype(float)
        try:
            res = mle_reconstruct_counts(counts, seed=i, **mle_kwargs)
            for k, fn in named.items():
                samples[k][i] = fn(res.rho)
        except Exception as exc:
            raise TomographyError(f"Monte Carlo trial {i} failed: {exc}") from exc
    return MonteCarloSummary(
        mean={k: float(v.mean()) for k, v in samples.items()},
        std={k: float(v.std(ddof=1)) for k, v in samples.items()},
        trial_count=trials,
        samples=samples,
    )


# --- serialization -----------------------------------------------------------


def format_result(res: ReconstructionResult, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(f"method = {res.method}\n")
    buf.write(f"objective = {res.objective}\n")
    buf.write(f"flux = {res.flux:.12g}\n")
    buf.write(f"log_likelihood = {res.log_likelihood:.12g}\n")
    buf.write(f"iterations = {res.iterations}\n")
    buf.write(f"converged = {str(res.converged).lower()}\n")
    buf.write(f"physical = {str(res.physical).lower()}\n")
    m = res.rho.entries
    buf.write(f"matrix = {m.shape[0]}\n")
    for row in m:
        buf.write(" ".join(f"{z.real:.12g} {z.imag:.12g}" for z in row) + "\n")
    return buf.getvalue()


def _bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ValueError(f"expected true/false, got {s!r}")
    return s == "true"


def parse_result(text: str) -> ReconstructionResult:
    meta: dict[str, str] = {}
    rows: list[list[complex]] = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if dim is None:
            if "=" not in s:
                raise DataError(f"line {lineno}: expected 'key = value', got {s!r}")
            key, _, val = (p.strip() for p in s.partition("="))
            meta[key] = val
            if key == "matrix":
                try:
                    dim = int(val)
                except ValueError:
                    raise DataError(f"line {lineno}: bad matrix size {val!r}") from None
            continue
        toks = s.split()
        if len(toks) != 2 * dim:
            raise DataError(f"line {lineno}: expected {2 * dim} numbers, got {len(toks)}")
        try:
            vals = [float(x) for x in toks]
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"line {lineno}: non-finite matrix entry")
        rows.append([complex(vals[2 * k], vals[2 * k + 1]) for k in range(dim)])
    if dim is None:
        raise DataError("no matrix section found")
    if len(rows) != dim:
        raise DataError(f"expected {dim} matrix rows, got {len(rows)}")
    try:
        method = meta.get("method", "mle")
        physical = _bool(meta.get("physical", "true"))
        rho = DensityMatrix(np.array(rows), require_psd=physical and method == "mle")
        return ReconstructionResult(
            rho=rho,
            flux=float(meta.get("flux", "nan")),
            log_likelihood=float(meta.get("log_likelihood", "nan")),
            iterations=int(meta.get("iterations", "0")),
            converged=_bool(meta.get("converged", "true")),
            method=method,
            physical=physical,
            objective=meta.get("objective", "poisson"),
        )
    except (ValueError, TomographyError) as exc:
        raise DataError(f"invalid reconstruction file: {exc}") from None
