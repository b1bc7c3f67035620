"""The 35-feature instance vector.

Layout (indices)::

    0-2    ECG           qtc, sdnn, rmssd                (seconds)
    3-12   PPG-BP        tpr_1..tpr_8, co_1, co_2
    13-22  BIA           bod_mag, con_mag_1..4, bod_deg, bfm, smm, tbw, bmr
    23     Age           years
    24-26  FamilyHistory one-hot: none, second-degree, first-degree
    27-34  Time          sin/cos of 1..4 x circadian phase
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TYPE_CHECKING

import numpy as np

from .errors import FeatureUnavailable, ParameterError

if TYPE_CHECKING:
    from .ecgproc import BeatAnnotation

SECONDS_PER_DAY = 86400

ECG_NAMES = ["qtc", "sdnn", "rmssd"]
PPG_BP_NAMES = [f"tpr_{i}" for i in range(1, 9)] + ["co_1", "co_2"]
BIA_NAMES = ["bod_mag"] + [f"con_mag_{i}" for i in range(1, 5)] + ["bod_deg", "bfm", "smm", "tbw", "bmr"]
FAMILY_NAMES = ["family_none", "family_second_degree", "family_first_degree"]
TIME_NAMES = [f"{fn}_{k}phi" for k in range(1, 5) for fn in ("sin", "cos")]

FEATURE_NAMES = ECG_NAMES + PPG_BP_NAMES + BIA_NAMES + ["age"] + FAMILY_NAMES + TIME_NAMES
N_FEATURES = len(FEATURE_NAMES)

GROUPS: dict[str, slice] = {
    "ecg": slice(0, 3),
    "ppg_bp": slice(3, 13),
    "bia": slice(13, 23),
    "age": slice(23, 24),
    "family_history": slice(24, 27),
    "time": slice(27, 35),
}
AGE_INDEX = 23
TIME_SLICE = GROUPS["time"]
NON_TIME = np.arange(TIME_SLICE.start)

assert N_FEATURES == 35


@dataclass(frozen=True)
class EcgFeatures:
    qtc: float
    sdnn: float
    rmssd: float


@dataclass(frozen=True)
class ProvidedFeatures:
    """Values delivered by the watch SDK and the questionnaire."""

    ppg_bp: tuple[float, ...]
    bia: tuple[float, ...]
    age: float
    family_history: int

    def __post_init__(self):
        object.__setattr__(self, "ppg_bp", tuple(float(v) for v in self.ppg_bp))
        object.__setattr__(self, "bia", tuple(float(v) for v in self.bia))
        if len(self.ppg_bp) != 10 or len(self.bia) != 10:
            raise ParameterError("expected 10 PPG-BP and 10 BIA values")
        if not 0 < self.age < 120:
            raise ParameterError(f"age {self.age} outside (0, 120)")
        if self.family_history not in (0, 1, 2):
            raise ParameterError(f"family_history must be 0, 1 or 2, got {self.family_history!r}")


def compute_qtc(beats: Sequence["BeatAnnotation"]) -> float:
    """Median over beats of the Fridericia-corrected QT, qt / rr**(1/3)."""
    vals = [b.qt / b.rr_prev ** (1.0 / 3.0) for b in beats if b.qt is not None and b.rr_prev is not None]
    if not vals:
        raise FeatureUnavailable("no beat has both a QT and a preceding RR interval")
    return float(np.median(vals))


def compute_sdnn(rr: Sequence[float]) -> float:
    rr = np.asarray(rr, dtype=np.float64)
    if rr.size < 2:
        raise FeatureUnavailable("SDNN needs at least two RR intervals")
    return float(np.std(rr, ddof=1))


def compute_rmssd(rr: Sequence[float], adjacency: Sequence[bool] | None = None) -> float:
    """RMS of successive RR differences over valid pairs.

    ``adjacency[j]`` says whether ``rr[j]`` and ``rr[j + 1]`` come from
    consecutive beats; ``None`` means all pairs are consecutive.
    """
    rr = np.asarray(rr, dtype=np.float64)
    if rr.size < 2:
        raise FeatureUnavailable("RMSSD needs at least one consecutive RR pair")
    diffs = np.diff(rr)
    if adjacency is not None:
        adj = np.asarray(adjacency, dtype=bool)
        if adj.size != diffs.size:
            raise ParameterError("adjacency must have len(rr) - 1 entries")
        diffs = diffs[adj]
    if diffs.size == 0:
        raise FeatureUnavailable("RMSSD needs at least one consecutive RR pair")
    return float(np.sqrt(np.mean(diffs**2)))


def rr_series(accepted: Sequence["BeatAnnotation"]) -> tuple[list[float], list[bool]]:
    """RR intervals of accepted beats and the adjacency flags between them."""
    have = [b for b in sorted(accepted, key=lambda b: b.r_peak) if b.rr_prev is not None]
    rr = [b.rr_prev for b in have]
    adj = [b1.index == b0.index + 1 for b0, b1 in zip(have, have[1:])]
    return rr, adj


def ecg_features(accepted: Sequence["BeatAnnotation"]) -> EcgFeatures:
    rr, adj = rr_series(accepted)
    return EcgFeatures(compute_qtc(accepted), compute_sdnn(rr), compute_rmssd(rr, adj))


def seconds_of_day(epoch_s: float) -> float:
    return float(epoch_s) % SECONDS_PER_DAY


def encode_time(t: float) -> np.ndarray:
    """Four sin/cos harmonic pairs of the circadian phase 2*pi*t/86400."""
    if not 0 <= t < SECONDS_PER_DAY:
        raise ParameterError(f"seconds-of-day {t} outside [0, 86400); reduce modulo 86400 first")
    phi = 2.0 * math.pi * t / SECONDS_PER_DAY
    out = np.empty(8)
    for k in range(1, 5):
        out[2 * k - 2] = math.sin(k * phi)
        out[2 * k - 1] = math.cos(k * phi)
    return out


def family_one_hot(category: int) -> np.ndarray:
    v = np.zeros(3)
    v[category] = 1.0
    return v


def assemble(ecg: EcgFeatures | None, provided: ProvidedFeatures | None, t: float) -> np.ndarray:
    """Concatenate all groups in the fixed layout. No normalization."""
    if ecg is None or provided is None:
        raise FeatureUnavailable("missing ECG or provided feature group")
    x = np.concatenate(
        [
            [ecg.qtc, ecg.sdnn, ecg.rmssd],
            provided.ppg_bp,
            provided.bia,
            [provided.age],
            family_one_hot(provided.family_history),
            encode_time(t),
        ]
    )
    if not np.all(np.isfinite(x)):
        raise FeatureUnavailable("feature vector has non-finite entries")
    return x


def group_columns(dropped: Sequence[str]) -> np.ndarray:
    """Indices of the columns that remain after removing the named groups."""
    unknown = set(dropped) - set(GROUPS)
    if unknown:
        raise ParameterError(f"unknown feature group(s): {sorted(unknown)}")
    keep = np.ones(N_FEATURES, dtype=bool)
    for g in dropped:
        keep[GROUPS[g]] = False
    return np.flatnonzero(keep)
