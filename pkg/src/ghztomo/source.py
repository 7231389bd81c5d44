"""State preparation at the polarizing beam splitter and the overlap dip."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import TomographyError
from .qlin import (
    KET,
    PHI_PLUS,
    DensityMatrix,
    PureState,
    fidelity_pure,
    mixture,
    permute_qubits,
    product_state,
    project_qubit,
    tensor_product,
)

HALF_MIXED = DensityMatrix(
    0.5 * (product_state("HH").density_matrix().entries + product_state("VV").density_matrix().entries)
)


def parity_check(psi: PureState, qubits: tuple[int, int]) -> tuple[PureState, float]:
    """Post-select equal H/V polarization on two qubits (PBS, one photon per port)."""
    n = psi.n_qubits
    idx = np.arange(psi.dim)
    bit = lambda q: (idx >> (n - 1 - q)) & 1  # noqa: E731
    keep = bit(qubits[0]) == bit(qubits[1])
    amps = np.where(keep, psi.amplitudes, 0)
    prob = float(np.vdot(amps, amps).real)
    if prob < 1e-14:
        raise TomographyError("parity check has zero success probability")
    return PureState(amps / np.sqrt(prob)), prob


def ghz_from_pairs() -> tuple[PureState, dict[str, float]]:
    """Build the three-photon GHZ state from two |phi+> pairs.

    Modes are ordered (1, 2, 3, 4) on input.  Photons 2 and 3 meet at the PBS
    and leave as A and B; photon 4 is the trigger, projected onto |D>.
    Returns the state on (A, B, 1) and the success probability of each stage.
    """
    pairs = tensor_product(PHI_PLUS, PHI_PLUS)
    four, p_pbs = parity_check(pairs, (1, 2))
    four = permute_qubits(four, (1, 2, 0, 3))  # (A=2, B=3, 1, 4)
    three, p_trig = project_qubit(four, 3, KET["D"])
    return three, {"parity_check": p_pbs, "trigger": p_trig}


def dip_state(epsilon: float) -> DensityMatrix:
    """eps |phi+><phi+| + (1 - eps) (|HH><HH| + |VV><VV|)/2 for photons A, B."""
    if not 0.0 <= epsilon <= 1.0:
        raise TomographyError(f"overlap {epsilon} outside [0, 1]")
    return mixture(PHI_PLUS.density_matrix(), HALF_MIXED, epsilon)


_AD = product_state("AD")


def coincidence_probability_ad(epsilon: float) -> float:
    return fidelity_pure(dip_state(epsilon), _AD)


@dataclass(frozen=True)
class DipConfig:
    epsilon0: float = 0.69
    width: float = 60.0
    positions: tuple[float, ...] = tuple(np.linspace(-300.0, 300.0, 41))
    events_per_point: float = 2000.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise TomographyError(f"epsilon0 {self.epsilon0} outside [0, 1]")
        if not self.width > 0:
            raise TomographyError("dip width must be positive")
        if not self.events_per_point > 0:
            raise TomographyError("events_per_point must be positive")
        object.__setattr__(self, "positions", tuple(float(x) for x in self.positions))

    def overlap(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.epsilon0 * np.exp(-(x**2) / (2 * self.width**2))


def dip_expectation(cfg: DipConfig) -> np.ndarray:
    """Noiseless four-fold counts at each mirror position."""
    eps = cfg.overlap(cfg.positions)
    p_ad = np.array([coincidence_probability_ad(e) for e in eps])
    # baseline P_AD is 1/4, so the factor 4 puts the flat region at events_per_point
    return cfg.events_per_point * 4 * p_ad


def dip_curve(cfg: DipConfig, seed: int) -> list[tuple[float, int]]:
    rng = np.random.default_rng(seed)
    counts = rng.poisson(dip_expectation(cfg))
    return [(x, int(c)) for x, c in zip(cfg.positions, counts)]


def visibility(counts) -> float:
    c = np.asarray(counts, dtype=float)
    return float((c.max() - c.min()) / c.max())


def _dip_model(x, baseline, vis, center, width):
    return baseline * (1 - vis * np.exp(-((x - center) ** 2) / (2 * width**2)))


@dataclass(frozen=True)
class DipFit:
    visibility: float
    visibility_err: float
    baseline: float
    center: float
    width: float


def fit_dip(positions, counts) -> DipFit:
    """Poisson-weighted least-squares fit of a Gaussian dip."""
    x = np.asarray(positions, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.size < 5:
        raise TomographyError(f"need at least 5 positions to fit a dip, got {x.size}")
    order = np.argsort(x)
    x, y = x[order], y[order]
    span = x[-1] - x[0]
    step = np.min(np.diff(x)) if x.size > 1 else span
    base0 = float(np.median(y[y >= np.median(y)]))
    vis0 = float(np.clip((base0 - y.min()) / base0, 0.0, 0.99)) if base0 > 0 else 0.0
    p0 = [max(base0, 1.0), vis0, float(x[np.argmin(y)]), span / 8]
    lower = [0.0, -1.0, x[0], max(step, 1e-12)]
    upper = [np.inf, 1.0, x[-1], span]
    p0[3] = float(np.clip(p0[3], lower[3], upper[3]))
    sigma = np.sqrt(np.maximum(y, 1.0))
    popt, pcov = curve_fit(_dip_model, x, y, p0=p0, sigma=sigma, bounds=(lower, upper))
    err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("nan")
    return DipFit(float(popt[1]), err, float(popt[0]), float(popt[2]), float(popt[3]))
