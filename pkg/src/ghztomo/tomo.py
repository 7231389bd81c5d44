"""Three-photon tomography settings, count model and count tables.

Each of the 64 settings projects photons (A, B, 1) onto one of
``|H>, |V>, |D>, |R>``.  The setting index is
``16*code(A) + 4*code(B) + code(1)`` with codes H=0, V=1, D=2, R=3.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from functools import lru_cache, reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, TomographyError
from .qlin import KET, HermitianOperator, matrix_of

BASIS_LABELS = "HVDR"
N_PHOTONS = 3
N_SETTINGS = 4**N_PHOTONS


@dataclass(frozen=True, order=True)
class AnalyzerSetting:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < N_SETTINGS:
            raise TomographyError(f"setting index {self.index} out of range")

    @classmethod
    def from_label(cls, label: str) -> "AnalyzerSetting":
        if len(label) != N_PHOTONS or any(c not in BASIS_LABELS for c in label):
            raise TomographyError(f"invalid setting label {label!r}")
        idx = 0
        for c in label:
            idx = 4 * idx + BASIS_LABELS.index(c)
        return cls(idx)

    @property
    def label(self) -> str:
        return "".join(BASIS_LABELS[(self.index >> (2 * k)) & 3] for k in (2, 1, 0))

    def __str__(self):
        return self.label


SETTINGS = tuple(AnalyzerSetting(i) for i in range(N_SETTINGS))
HV_BLOCK = tuple(s.index for s in SETTINGS if set(s.label) <= {"H", "V"})


def _setting(s) -> AnalyzerSetting:
    if isinstance(s, AnalyzerSetting):
        return s
    if isinstance(s, str):
        return AnalyzerSetting.from_label(s)
    return AnalyzerSetting(int(s))


@lru_cache(maxsize=None)
def _analyzer_kets() -> np.ndarray:
    """(64, 8) array whose row nu is the analyzer state |psi_nu>."""
    rows = [reduce(np.kron, (KET[c].amplitudes for c in s.label)) for s in SETTINGS]
    out = np.array(rows)
    out.setflags(write=False)
    return out


def analyzer_kets() -> np.ndarray:
    return _analyzer_kets()


def projector(setting) -> HermitianOperator:
    psi = _analyzer_kets()[_setting(setting).index]
    return HermitianOperator(np.outer(psi, psi.conj()))


def born_probabilities(rho) -> np.ndarray:
    """All 64 values <psi_nu|rho|psi_nu>, ordered by setting index."""
    m = matrix_of(rho)
    kets = _analyzer_kets()
    p = np.einsum("ni,ij,nj->n", kets.conj(), m, kets).real
    return np.clip(p, 0.0, 1.0)


def born_probability(rho, setting) -> float:
    return float(born_probabilities(rho)[_setting(setting).index])


def expected_count(rho, setting, flux: float) -> float:
    if not flux > 0:
        raise TomographyError(f"flux must be positive, got {flux}")
    return flux * born_probability(rho, setting)


@dataclass(frozen=True)
class TomographyRecord:
    """One measurement setting.

    ``raw_count`` is normally an integer event count; noiseless expected-value
    data carries non-integer values.  ``scale`` is the trigger normalization
    factor.  ``corrected`` is ``max(raw - accidental, 0) * scale``.
    """

    setting: AnalyzerSetting
    raw_count: float
    duration: float = 900.0
    trigger_singles: int = 0
    accidental_estimate: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.raw_count >= 0:
            raise DataError(f"{self.setting}: negative raw count {self.raw_count}")
        if not self.duration > 0:
            raise DataError(f"{self.setting}: duration must be positive")
        if self.trigger_singles < 0:
            raise DataError(f"{self.setting}: negative trigger singles")
        if not self.accidental_estimate >= 0:
            raise DataError(f"{self.setting}: negative accidental estimate")

    @property
    def background_subtracted(self) -> float:
        """raw - accidental; may be negative."""
        return self.raw_count - self.accidental_estimate

    @property
    def corrected(self) -> float:
        return max(self.background_subtracted, 0.0) * self.scale


@dataclass(frozen=True)
class TomographySet:
    records: tuple[TomographyRecord, ...]
    flux_hint: float | None = None

    def __post_init__(self):
        records = tuple(self.records)
        seen: dict[int, int] = {}
        for rec in records:
            i = rec.setting.index
            if i in seen:
                raise DataError(f"duplicate setting {rec.setting.label}")
            seen[i] = 1
        missing = [s.label for s in SETTINGS if s.index not in seen]
        if missing:
            raise DataError(f"missing settings: {', '.join(missing)}")
        object.__setattr__(self, "records", records)

    def by_index(self) -> list[TomographyRecord]:
        out: list[TomographyRecord] = [None] * N_SETTINGS  # type: ignore[list-item]
        for rec in self.records:
            out[rec.setting.index] = rec
        return out

    def corrected_counts(self) -> np.ndarray:
        """Corrected counts ordered by setting index."""
        return np.array([r.corrected for r in self.by_index()], dtype=float)

    def raw_counts(self) -> np.ndarray:
        return np.array([r.raw_count for r in self.by_index()], dtype=float)

    def hv_flux(self) -> float:
        """Sum of corrected counts over the {H,V}^3 settings."""
        return float(self.corrected_counts()[list(HV_BLOCK)].sum())

    def with_records(self, records: Iterable[TomographyRecord]) -> "TomographySet":
        return replace(self, records=tuple(records))


def counts_to_set(counts: Sequence[float], duration: float = 900.0, trigger_singles: int = 0) -> TomographySet:
    """Wrap 64 counts (ordered by setting index) into a TomographySet."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (N_SETTINGS,):
        raise DataError(f"expected {N_SETTINGS} counts, got shape {counts.shape}")
    return TomographySet(
        tuple(
            TomographyRecord(s, _as_count(c), duration, trigger_singles)
            for s, c in zip(SETTINGS, counts)
        )
    )


def _as_count(c: float):
    c = float(c)
    return int(c) if c.is_integer() else c


def expected_counts_set(rho, flux: float, duration: float = 900.0) -> TomographySet:
    """Noiseless data: every raw count equals its expectation flux * p_nu."""
    if not flux > 0:
        raise TomographyError(f"flux must be positive, got {flux}")
    return counts_to_set(flux * born_probabilities(rho), duration)


def simulate_counts(
    rho,
    flux: float,
    seed: int,
    duration: float = 900.0,
    trigger_singles: int = 0,
    background: "BackgroundModel | None" = None,
) -> TomographySet:
    """Poisson-sample the 64 counts.

    Each setting draws from its own stream seeded by ``(seed, nu)`` so that
    results do not depend on evaluation order.  With a background model the
    raw counts include accidental events and each record carries the
    matching accidental estimate.
    """
    if not flux > 0:
        raise TomographyError(f"flux must be positive, got {flux}")
    lam = flux * born_probabilities(rho)
    records = []
    for s, mean in zip(SETTINGS, lam):
        if background is not None:
            mean = mean + duration * background.rate_for(s)
        rng = np.random.default_rng([seed, s.index])
        records.append(TomographyRecord(s, int(rng.poisson(mean)), duration, trigger_singles))
    tset = TomographySet(tuple(records), flux_hint=float(flux))
    if background is not None:
        tset = apply_background(tset, background)
    return tset


@dataclass(frozen=True)
class BackgroundModel:
    """Accidental coincidence rates in events per second.

    ``rate`` is a single value applied to every setting, or a mapping from
    setting label/index to rate for per-setting correction.
    """

    rate: float | Mapping = 0.0

    def rate_for(self, setting: AnalyzerSetting) -> float:
        if isinstance(self.rate, Mapping):
            r = self.rate.get(setting.label, self.rate.get(setting.index, 0.0))
        else:
            r = self.rate
        r = float(r)
        if r < 0:
            raise TomographyError(f"negative accidental rate {r} for {setting}")
        return r


def apply_background(tset: TomographySet, model: BackgroundModel) -> TomographySet:
    out = []
    for rec in tset.records:
        rate = model.rate_for(rec.setting)
        out.append(replace(rec, accidental_estimate=rec.duration * rate))
    return tset.with_records(out)


def normalize_by_trigger(tset: TomographySet) -> TomographySet:
    """Scale each record by (mean singles / singles)^2.

    Counts are thereby referred to the set-mean trigger rate, so the total
    flux keeps its raw-count magnitude.
    """
    singles = np.array([r.trigger_singles for r in tset.records], dtype=float)
    if np.any(singles <= 0):
        bad = [r.setting.label for r in tset.records if r.trigger_singles <= 0]
        raise DataError(f"missing trigger singles for {', '.join(bad)}")
    ref = singles.mean()
    out = [replace(r, scale=(ref / s) ** 2) for r, s in zip(tset.records, singles)]
    return tset.with_records(out)


# --- count table text format -------------------------------------------------

TABLE_COLUMNS = ("setting", "raw_count", "duration_s", "trigger_singles", "accidental_estimate", "scale")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def format_table(tset: TomographySet, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(" ".join(TABLE_COLUMNS) + "\n")
    for rec in tset.records:
        buf.write(
            " ".join(
                [
                    rec.setting.label,
                    _fmt(rec.raw_count),
                    _fmt(rec.duration),
                    str(rec.trigger_singles),
                    _fmt(rec.accidental_estimate),
                    _fmt(rec.scale),
                ]
            )
            + "\n"
        )
    return buf.getvalue()


def _parse_number(tok: str):
    try:
        return int(tok)
    except ValueError:
        v = float(tok)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {tok!r}")
        return v


def parse_table(text: str) -> TomographySet:
    """Inverse of :func:`format_table`; the ``scale`` column is optional."""
    records = []
    header_seen = False
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        toks = s.split()
        if not header_seen:
            if toks[0] == "setting":
                header_seen = True
                continue
            raise DataError(f"line {lineno}: expected column header, got {s!r}")
        if len(toks) not in (5, 6):
            raise DataError(f"line {lineno}: expected 5 or 6 columns, got {len(toks)}")
        label = toks[0]
        try:
            setting = AnalyzerSetting.from_label(label)
            raw, dur, trig, acc = (_parse_number(t) for t in toks[1:5])
            scale = _parse_number(toks[5]) if len(toks) == 6 else 1.0
            if not isinstance(trig, int):
                raise ValueError("trigger_singles must be an integer")
            rec = TomographyRecord(setting, raw, dur, trig, acc, scale)
        except (ValueError, TomographyError) as exc:
            raise DataError(f"line {lineno} ({label}): {exc}") from None
        if label in seen:
            raise DataError(f"line {lineno}: duplicate setting {label} (first on line {seen[label]})")
        seen[label] = lineno
        records.append(rec)
    if not header_seen:
        raise DataError("count table has no column header")
    return TomographySet(tuple(records))
