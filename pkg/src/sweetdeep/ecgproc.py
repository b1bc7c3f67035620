"""ECG cleaning, R-peak detection, delineation and beat-level quality control.

The processing chain for one recording is::

    raw -> band-pass -> spike spans -> spike blanking + re-filter
        -> R peaks -> R onset / T offset per beat -> interval QC

Every step is a pure function of its inputs.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage, signal

from .errors import ConfigError, ParameterError, SchemaError

Span = tuple[float, float]

MIN_FS = 100.0


@dataclass
class EcgRecording:
    """A single-lead voltage trace in mV."""

    samples: np.ndarray
    fs: float
    start_time: float = 0.0
    patient_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ParameterError("ECG samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("ECG samples contain NaN or inf")
        if not self.fs >= MIN_FS:
            raise ParameterError(f"sampling rate {self.fs} Hz is below {MIN_FS} Hz")

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs

    def with_samples(self, samples: np.ndarray) -> "EcgRecording":
        return EcgRecording(samples, self.fs, self.start_time, self.patient_id)


@dataclass
class BeatAnnotation:
    """Fiducials of one beat, in seconds from the start of the trace.

    ``index`` is the beat's position in the detected R-peak sequence; two
    accepted beats are consecutive when their indices differ by one.
    """

    index: int
    r_peak: float
    r_onset: float | None = None
    t_offset: float | None = None
    rr_prev: float | None = None
    quality_flags: set[str] = field(default_factory=set)

    @property
    def qt(self) -> float | None:
        if self.r_onset is None or self.t_offset is None:
            return None
        return self.t_offset - self.r_onset

    @property
    def accepted(self) -> bool:
        return not self.quality_flags

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "r_peak": self.r_peak,
            "r_onset": self.r_onset,
            "t_offset": self.t_offset,
            "rr_prev": self.rr_prev,
            "qt": self.qt,
            "quality_flags": sorted(self.quality_flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeatAnnotation":
        try:
            return cls(
                index=int(d["index"]),
                r_peak=float(d["r_peak"]),
                r_onset=None if d.get("r_onset") is None else float(d["r_onset"]),
                t_offset=None if d.get("t_offset") is None else float(d["t_offset"]),
                rr_prev=None if d.get("rr_prev") is None else float(d["rr_prev"]),
                quality_flags=set(d.get("quality_flags", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad beat annotation: {exc}") from exc


@dataclass
class QcReport:
    beats_total: int
    beats_accepted: int
    survival_fraction: float
    instance_accepted: bool
    rejection_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "beats_total": self.beats_total,
            "beats_accepted": self.beats_accepted,
            "survival_fraction": self.survival_fraction,
            "instance_accepted": self.instance_accepted,
            "rejection_histogram": dict(sorted(self.rejection_histogram.items())),
        }


@dataclass(frozen=True)
class QcSettings:
    """Tunable constants of the ECG stage."""

    low_hz: float = 0.5
    high_hz: float = 40.0
    filter_order: int = 4
    spike_mads: float = 8.0
    spike_guard_s: float = 0.1
    refractory_s: float = 0.25
    rr_bounds: tuple[float, float] = (0.33, 2.0)
    qt_bounds: tuple[float, float] = (0.20, 0.60)
    outlier_z: float = 3.5
    min_survival: float = 0.10
    min_beats: int = 8


DEFAULT_QC = QcSettings()


# --------------------------------------------------------------------------
# file formats


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_recording(rec: EcgRecording, csv_path: str | Path) -> None:
    """Write ``t_s,voltage_mv`` CSV plus a ``{fs_hz, start_epoch_s}`` sidecar."""
    csv_path = Path(csv_path)
    t = rec.times
    lines = ["t_s,voltage_mv"]
    lines.extend(f"{ti!r},{vi!r}" for ti, vi in zip(t.tolist(), rec.samples.tolist()))
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {"fs_hz": rec.fs, "start_epoch_s": rec.start_time}
    if rec.patient_id:
        meta["patient_id"] = rec.patient_id
    sidecar_path(csv_path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_recording(csv_path: str | Path) -> EcgRecording:
    csv_path = Path(csv_path)
    try:
        meta = json.loads(sidecar_path(csv_path).read_text())
        fs = float(meta["fs_hz"])
        start = float(meta.get("start_epoch_s", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{sidecar_path(csv_path)}: bad sidecar ({exc})") from exc
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "t_s,voltage_mv":
            raise SchemaError(f"{csv_path}: expected header 't_s,voltage_mv', got {header!r}")
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise SchemaError(f"{csv_path}: {exc}") from exc
    if data.shape[1] != 2:
        raise SchemaError(f"{csv_path}: expected two columns")
    return EcgRecording(data[:, 1], fs, start, str(meta.get("patient_id", "")))


# --------------------------------------------------------------------------
# filtering and spikes


def bandpass_filter(rec: EcgRecording, settings: QcSettings = DEFAULT_QC) -> EcgRecording:
    """Zero-phase Butterworth band-pass; the mean is removed first."""
    nyq = rec.fs / 2.0
    if not 0 < settings.low_hz < settings.high_hz < nyq:
        raise ConfigError(
            f"pass band {settings.low_hz}-{settings.high_hz} Hz is not realisable at fs={rec.fs} Hz"
        )
    x = rec.samples - rec.samples.mean()
    if not np.any(x):
        return rec.with_samples(np.zeros_like(x))
    sos = signal.butter(
        settings.filter_order, [settings.low_hz, settings.high_hz], btype="band", fs=rec.fs, output="sos"
    )
    padlen = min(x.size - 1, int(round(rec.fs / settings.low_hz)))
    y = signal.sosfiltfilt(sos, x, padlen=padlen)
    return rec.with_samples(y - y.mean())


def _robust_limit(v: np.ndarray, n_mads: float) -> float:
    """Reference + k*MAD from the lower half of ``v``.

    Using the lower quartile as reference keeps the limit meaningful when
    artifacts occupy up to half of the windows. A noise-free trace has
    MAD ~ 0; the floor keeps normal beat-to-beat variation legal.
    """
    ref = float(np.percentile(v, 25))
    low = v[v <= np.median(v)]
    mad = 1.4826 * float(np.median(np.abs(low - ref)))
    return ref + n_mads * max(mad, 0.25 * ref)


def _window_maxima(v: np.ndarray, width: int) -> np.ndarray:
    n = v.size // width
    if n == 0:
        return np.array([v.max()])
    return v[: n * width].reshape(n, width).max(axis=1)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open index pairs."""
    if not mask.any():
        return []
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def detect_spikes(rec: EcgRecording, settings: QcSettings = DEFAULT_QC) -> list[Span]:
    """Time spans of high-voltage artifacts, padded by the guard interval.

    Amplitude is measured against a 0.6 s running median so that slow filter
    tails around a spike do not count. Both amplitude and first difference are
    compared with a median + k*MAD limit computed over 2 s window maxima, i.e.
    over the trace's typical QRS size.
    """
    x = rec.samples
    if not np.any(x):
        return []
    k = max(3, int(round(0.6 * rec.fs)) | 1)
    amp = np.abs(x - ndimage.median_filter(x, size=k, mode="nearest"))
    slope = np.abs(np.diff(x, prepend=x[0]))
    win = max(1, int(round(2.0 * rec.fs)))
    amp_lim = _robust_limit(_window_maxima(amp, win), settings.spike_mads)
    slope_lim = _robust_limit(_window_maxima(slope, win), settings.spike_mads)
    hit = (amp > amp_lim) | (slope > slope_lim)
    if not hit.any():
        return []
    guard = int(round(settings.spike_guard_s * rec.fs))
    grown = ndimage.binary_dilation(hit, structure=np.ones(2 * guard + 1, dtype=bool)) if guard else hit
    return [(a / rec.fs, b / rec.fs) for a, b in _runs(grown)]


def _span_mask(n: int, fs: float, spans: Iterable[Span]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for a, b in spans:
        i0 = max(0, int(np.floor(a * fs)))
        i1 = min(n, int(np.ceil(b * fs)))
        if i1 > i0:
            mask[i0:i1] = True
    return mask


def _intersects(a: float, b: float, spans: Iterable[Span]) -> bool:
    return any(sa < b and a < sb for sa, sb in spans)


def blank_spans(rec: EcgRecording, spans: Sequence[Span]) -> EcgRecording:
    """Replace samples inside ``spans`` by a straight line between the span edges."""
    if not spans:
        return rec
    x = rec.samples.copy()
    mask = _span_mask(x.size, rec.fs, spans)
    good = np.flatnonzero(~mask)
    if good.size == 0:
        return rec.with_samples(np.zeros_like(x))
    bad = np.flatnonzero(mask)
    x[bad] = np.interp(bad, good, x[good])
    return rec.with_samples(x)


# --------------------------------------------------------------------------
# R peaks


def detect_r_peaks(
    rec: EcgRecording, excluded: Sequence[Span] = (), settings: QcSettings = DEFAULT_QC
) -> list[float]:
    """Derivative-energy QRS detector with Pan-Tompkins style adaptive levels."""
    fs = rec.fs
    x = rec.samples.copy()
    x[_span_mask(x.size, fs, excluded)] = 0.0
    if not np.any(x):
        return []
    energy = (np.gradient(x) * fs) ** 2
    w = max(1, int(round(0.15 * fs)))
    mwi = np.convolve(energy, np.ones(w) / w, mode="same")
    refractory = max(1, int(round(settings.refractory_s * fs)))
    cand, _ = signal.find_peaks(mwi, distance=refractory)
    if cand.size == 0:
        return []
    heights = mwi[cand]

    spki = float(np.percentile(heights, 90))
    npki = float(np.median(heights)) * 0.5
    accepted: list[int] = []
    rr_recent: list[int] = []
    for j, (c, h) in enumerate(zip(cand, heights)):
        thr = npki + 0.25 * (spki - npki)
        if h > thr and (not accepted or c - accepted[-1] >= refractory):
            if accepted and rr_recent and c - accepted[-1] > 1.66 * np.mean(rr_recent):
                # search back for a weaker beat in the gap
                lo, hi = accepted[-1] + refractory, c - refractory
                gap = [(hh, cc) for cc, hh in zip(cand, heights) if lo <= cc <= hi and hh > 0.5 * thr]
                if gap:
                    hh, cc = max(gap)
                    accepted.append(int(cc))
                    spki = 0.25 * hh + 0.75 * spki
            if accepted:
                rr_recent = (rr_recent + [c - accepted[-1]])[-8:]
            accepted.append(int(c))
            spki = 0.125 * h + 0.875 * spki
        else:
            npki = 0.125 * h + 0.875 * npki

    half = int(round(0.075 * fs))
    peaks: list[float] = []
    for c in accepted:
        lo, hi = max(0, c - half), min(x.size, c + half + 1)
        if _intersects(lo / fs, hi / fs, excluded):
            continue
        i = lo + int(np.argmax(x[lo:hi]))
        t = i / fs
        if 0 < i < x.size - 1:
            y0, y1, y2 = x[i - 1], x[i], x[i + 1]
            denom = y0 - 2 * y1 + y2
            if denom < 0:
                t += 0.5 * (y0 - y2) / denom / fs
        if peaks and t - peaks[-1] < settings.refractory_s:
            continue
        peaks.append(t)
    return peaks


# --------------------------------------------------------------------------
# delineation

_FINE_SIGMA_S = 0.004
_COARSE_SIGMA_S = 0.016


def _interp_crossing(t0: float, y0: float, t1: float, y1: float, level: float) -> float:
    if y1 == y0:
        return t0
    return t0 + (level - y0) * (t1 - t0) / (y1 - y0)


def delineate(
    rec: EcgRecording, r_peaks: Sequence[float], excluded: Sequence[Span] = ()
) -> list[BeatAnnotation]:
    """Locate R onset and T offset around each R peak.

    Two smoothing scales are used: a fine one (4 ms) for the QRS and a coarse
    one (16 ms) for the T wave. The isoelectric level is read at the flattest
    point of the PR segment. R onset is the baseline crossing between the Q
    trough and the R peak (tangent construction on the R upstroke when there
    is no Q trough); T offset is the intersection of the steepest T downslope
    tangent with the baseline.
    """
    fs = rec.fs
    x = rec.samples
    n = x.size
    fine = ndimage.gaussian_filter1d(x, _FINE_SIGMA_S * fs)
    fine_d = ndimage.gaussian_filter1d(x, _FINE_SIGMA_S * fs, order=1) * fs
    coarse = ndimage.gaussian_filter1d(x, _COARSE_SIGMA_S * fs)
    coarse_d = ndimage.gaussian_filter1d(x, _COARSE_SIGMA_S * fs, order=1) * fs
    t_of = lambda i: i / fs  # noqa: E731

    def idx(t: float) -> int:
        return int(np.clip(round(t * fs), 0, n - 1))

    beats: list[BeatAnnotation] = []
    for k, r in enumerate(r_peaks):
        beat = BeatAnnotation(index=k, r_peak=float(r))
        if k > 0 and not _intersects(r_peaks[k - 1], r, excluded):
            beat.rr_prev = float(r - r_peaks[k - 1])
        if k + 1 < len(r_peaks):
            rr_local = r_peaks[k + 1] - r
        elif k > 0:
            rr_local = r - r_peaks[k - 1]
        else:
            rr_local = 1.0
        ir = idx(r)

        # isoelectric reference
        b0, b1 = idx(r - 0.14), idx(r - 0.05)
        if b1 - b0 < 2 or _intersects(r - 0.14, r - 0.05, excluded):
            beat.quality_flags.add("baseline_not_found")
            beats.append(beat)
            continue
        flat = b0 + int(np.argmin(np.abs(coarse_d[b0:b1])))
        h = max(1, int(round(0.01 * fs)))
        base = float(np.mean(fine[max(0, flat - h) : flat + h + 1]))

        # R onset
        q0 = idx(r - 0.08)
        if _intersects(r - 0.08, r, excluded) or ir - q0 < 2:
            beat.quality_flags.add("r_onset_not_found")
        else:
            iq = q0 + int(np.argmin(fine[q0:ir]))
            if fine[iq] < base:
                seg = fine[iq : ir + 1]
                above = np.flatnonzero(seg >= base)
                if above.size:
                    j = iq + int(above[0])
                    beat.r_onset = _interp_crossing(t_of(j - 1), fine[j - 1], t_of(j), fine[j], base)
            else:
                iu = q0 + int(np.argmax(fine_d[q0:ir]))
                if fine_d[iu] > 0:
                    beat.r_onset = t_of(iu) + (base - fine[iu]) / fine_d[iu]
            if beat.r_onset is None or not (r - 0.12 < beat.r_onset < r):
                beat.r_onset = None
                beat.quality_flags.add("r_onset_not_found")

        # T offset
        t_lo = r + 0.10
        # stop short of the next beat's P wave
        t_hi = r + min(0.6, rr_local - 0.17)
        # a spike after the T wave only shortens the search window
        t_hi = min([t_hi] + [sa for sa, sb in excluded if sa < t_hi and t_lo < sb])
        if t_hi <= t_lo + 0.05 or idx(t_hi) >= n - 1:
            beat.quality_flags.add("t_offset_not_found")
        else:
            i0, i1 = idx(t_lo), idx(t_hi)
            dev = coarse[i0:i1] - base
            ip = i0 + int(np.argmax(np.abs(dev)))
            sign = 1.0 if coarse[ip] >= base else -1.0
            if ip >= i1 - 2:
                beat.quality_flags.add("t_offset_not_found")
            else:
                seg = sign * coarse_d[ip : min(i1, ip + int(round(0.15 * fs)))]
                im = ip + int(np.argmin(seg))
                slope = coarse_d[im]
                if sign * slope >= 0:
                    beat.quality_flags.add("t_offset_not_found")
                else:
                    t_off = t_of(im) + (base - coarse[im]) / slope
                    if r < t_off <= t_hi + 0.05 and not _intersects(t_off, t_off, excluded):
                        beat.t_offset = t_off
                    else:
                        beat.quality_flags.add("t_offset_not_found")
        beats.append(beat)
    return beats


# --------------------------------------------------------------------------
# interval QC


def _robust_z(v: np.ndarray, floor: float) -> np.ndarray:
    med = np.median(v)
    mad = max(float(np.median(np.abs(v - med))), floor)
    return 0.6745 * (v - med) / mad


def qc_all_beats(
    beats: Sequence[BeatAnnotation], settings: QcSettings = DEFAULT_QC
) -> tuple[list[BeatAnnotation], QcReport]:
    """Flag every beat; returns time-sorted copies with final flags and the report.

    Clinical-range checks run first, then robust-z outlier removal on RR and
    QT, iterated to a fixed point among the surviving beats.
    """
    out = [
        BeatAnnotation(b.index, b.r_peak, b.r_onset, b.t_offset, b.rr_prev, set(b.quality_flags))
        for b in sorted(beats, key=lambda b: b.r_peak)
    ]
    lo_rr, hi_rr = settings.rr_bounds
    lo_qt, hi_qt = settings.qt_bounds
    for b in out:
        if b.rr_prev is not None and not lo_rr <= b.rr_prev <= hi_rr:
            b.quality_flags.add("rr_out_of_range")
        if b.qt is not None and not lo_qt <= b.qt <= hi_qt:
            b.quality_flags.add("qt_out_of_range")
        elif b.qt is None and not b.quality_flags:
            b.quality_flags.add("qt_not_found")

    # 5 ms MAD floor: smaller spreads are below delineation resolution
    while True:
        alive = [b for b in out if not b.quality_flags]
        changed = False
        for attr, reason in (("rr_prev", "rr_outlier"), ("qt", "qt_outlier")):
            have = [b for b in alive if getattr(b, attr) is not None]
            if len(have) < 3:
                continue
            z = _robust_z(np.array([getattr(b, attr) for b in have]), 0.005)
            for b, zi in zip(have, z):
                if abs(zi) > settings.outlier_z:
                    b.quality_flags.add(reason)
                    changed = True
        if not changed:
            break

    n_ok = sum(1 for b in out if not b.quality_flags)
    total = len(out)
    survival = n_ok / total if total else 0.0
    report = QcReport(
        beats_total=total,
        beats_accepted=n_ok,
        survival_fraction=survival,
        instance_accepted=survival >= settings.min_survival and n_ok >= settings.min_beats,
        rejection_histogram=dict(Counter(f for b in out for f in b.quality_flags)),
    )
    return out, report


def apply_interval_qc(
    beats: Sequence[BeatAnnotation], settings: QcSettings = DEFAULT_QC
) -> tuple[list[BeatAnnotation], QcReport]:
    """Accepted beats (time-sorted copies) and the QC report.

    Re-running on the accepted beats rejects nothing further.
    """
    flagged, report = qc_all_beats(beats, settings)
    return [b for b in flagged if b.accepted], report


@dataclass
class ProcessedRecording:
    filtered: EcgRecording
    spikes: list[Span]
    beats: list[BeatAnnotation]
    report: QcReport

    @property
    def accepted(self) -> list[BeatAnnotation]:
        return [b for b in self.beats if b.accepted]


def process_recording(rec: EcgRecording, settings: QcSettings = DEFAULT_QC) -> ProcessedRecording:
    """Run the whole ECG stage on one raw recording.

    Spikes found on the filtered trace are blanked in the raw trace before a
    second filtering pass, so the band-pass tails of a spike do not leak into
    neighbouring beats.
    """
    first = bandpass_filter(rec, settings)
    spans = detect_spikes(first, settings)
    filtered = bandpass_filter(blank_spans(rec, spans), settings) if spans else first
    peaks = detect_r_peaks(filtered, spans, settings)
    beats = delineate(filtered, peaks, spans)
    flagged, report = qc_all_beats(beats, settings)
    return ProcessedRecording(filtered, spans, flagged, report)
