"""Synthetic ECG traces with known fiducials and synthetic ND/T2D/PD cohorts.

Beats are sums of five Gaussians (P, Q, R, S, T). With this model the
fiducials used downstream are analytic:

* R peak: the R-wave centre,
* R onset: the zero crossing of the Q + R Gaussian pair between their centres,
* T offset: T centre + 2 T widths.

The T wave is placed from the QT base interval rather than from a fixed
offset: for a beat whose preceding RR is ``rr``, its QT is
``qt_base * rr ** (1/3)``, so the Fridericia-corrected QT of every beat
equals ``qt_base`` by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from . import features as F
from .dataset import ND, PD, T2D, InstanceRecord
from .ecgproc import EcgRecording
from .errors import ParameterError

T_OFFSET_WIDTHS = 2.0


@dataclass(frozen=True)
class Wave:
    amplitude: float  # mV
    center: float  # s, relative to the R peak
    width: float  # s, Gaussian sigma


@dataclass(frozen=True)
class BeatTemplateParams:
    p: Wave = Wave(0.15, -0.20, 0.025)
    q: Wave = Wave(-0.12, -0.035, 0.010)
    r: Wave = Wave(1.2, 0.0, 0.010)
    s: Wave = Wave(-0.25, 0.035, 0.010)
    # only amplitude and width are used; the centre follows from qt_base
    t: Wave = Wave(0.35, 0.0, 0.045)
    hr_mean: float = 70.0
    rr_std: float = 0.03
    qt_base: float = 0.38
    wander_amplitude: float = 0.1
    wander_hz: float = 0.25
    noise_std: float = 0.01
    spike_rate: float = 0.0  # events per minute
    spike_amplitude: float = 6.0

    @property
    def rr_mean(self) -> float:
        return 60.0 / self.hr_mean

    @property
    def rr_min(self) -> float:
        return self.rr_mean - 4.0 * self.rr_std

    def validate(self) -> None:
        for name in "pqrst":
            if not getattr(self, name).width > 0:
                raise ParameterError(f"{name.upper()} wave width must be > 0")
        if not (self.q.amplitude < 0 < self.r.amplitude):
            raise ParameterError("template needs a negative Q wave and a positive R wave")
        if not (self.p.center < self.q.center < self.r.center < self.s.center):
            raise ParameterError("wave centres must be ordered P < Q < R < S")
        if not self.hr_mean > 0 or self.rr_std < 0:
            raise ParameterError("hr_mean must be > 0 and rr_std >= 0")
        if self.rr_min <= 0:
            raise ParameterError("RR distribution reaches non-positive intervals")
        if not 0 < self.qt_base < self.rr_min:
            raise ParameterError("qt_base must lie below the minimum RR interval")
        if min(self.noise_std, self.wander_amplitude, self.spike_rate) < 0:
            raise ParameterError("noise, wander and spike rate must be non-negative")
        if self.spike_rate > 0 and self.spike_amplitude < 5.0 * self.r.amplitude:
            raise ParameterError("spike amplitude must be at least 5x the R amplitude")

    def r_onset_offset(self) -> float:
        """R onset relative to the R peak: root of q(t) + r(t) between the two centres."""
        q, r = self.q, self.r

        def f(t):
            return q.amplitude * math.exp(-0.5 * ((t - q.center) / q.width) ** 2) + r.amplitude * math.exp(
                -0.5 * ((t - r.center) / r.width) ** 2
            )

        return optimize.brentq(f, q.center, r.center, xtol=1e-12)

    def t_center_offset(self, rr: float) -> float:
        qt = self.qt_base * rr ** (1.0 / 3.0)
        return self.r_onset_offset() + qt - T_OFFSET_WIDTHS * self.t.width


@dataclass
class TrueBeat:
    r_peak: float
    r_onset: float
    t_offset: float
    rr_prev: float | None = None


@dataclass
class GroundTruth:
    beats: list[TrueBeat] = field(default_factory=list)
    spikes: list[tuple[float, float]] = field(default_factory=list)
    snr_db: float = math.inf

    def to_dict(self) -> dict:
        return {
            "beats": [asdict(b) for b in self.beats],
            "spikes": [list(s) for s in self.spikes],
            "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        snr = d.get("snr_db")
        return cls(
            [TrueBeat(**b) for b in d["beats"]],
            [tuple(s) for s in d["spikes"]],
            math.inf if snr is None else float(snr),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _draw_rr(rng: np.random.Generator, p: BeatTemplateParams, n: int) -> np.ndarray:
    if p.rr_std == 0:
        return np.full(n, p.rr_mean)
    out = np.empty(0)
    while out.size < n:
        z = rng.normal(size=2 * n)
        out = np.concatenate([out, p.rr_mean + p.rr_std * z[np.abs(z) <= 4.0]])
    return out[:n]


def _draw_spikes(rng: np.random.Generator, p: BeatTemplateParams, duration: float) -> list[tuple[float, float, float]]:
    """(start, stop, amplitude) of rectangular artifacts, at least 0.5 s apart."""
    if p.spike_rate == 0:
        return []
    n = rng.poisson(p.spike_rate * duration / 60.0)
    spikes: list[tuple[float, float, float]] = []
    attempts = 0
    while len(spikes) < n and attempts < 100 * (n + 1):
        attempts += 1
        width = rng.uniform(0.02, 0.08)
        start = rng.uniform(0.0, max(duration - width, 0.0))
        amp = p.spike_amplitude * rng.uniform(1.0, 1.5) * rng.choice([-1.0, 1.0])
        if all(start > b + 0.5 or start + width < a - 0.5 for a, b, _ in spikes):
            spikes.append((start, start + width, amp))
    return sorted(spikes)


def _gauss(t: np.ndarray, w: Wave, center: float) -> np.ndarray:
    return w.amplitude * np.exp(-0.5 * ((t - center) / w.width) ** 2)


def synthesize_ecg(
    params: BeatTemplateParams, duration: float, fs: float, seed: int
) -> tuple[EcgRecording, GroundTruth]:
    """Sum-of-Gaussians beat train with wander, white noise and spikes."""
    params.validate()
    if not duration > 0:
        raise ParameterError("duration must be > 0")
    if not fs >= 100:
        raise ParameterError("fs must be at least 100 Hz")
    rng = np.random.default_rng(seed)
    n = int(round(duration * fs))
    t = np.arange(n) / fs

    n_beats = int(duration / params.rr_min) + 3
    rr = _draw_rr(rng, params, n_beats)
    first = 0.35 + rng.uniform(0.0, max(params.rr_mean - 0.35, 0.0))
    r_times = first + np.concatenate([[0.0], np.cumsum(rr[:-1])])
    r_times = r_times[r_times < duration]
    onset = params.r_onset_offset()

    clean = np.zeros(n)
    truth = GroundTruth()
    reach = 5.0
    for k, rt in enumerate(r_times):
        rr_prev = float(rt - r_times[k - 1]) if k > 0 else None
        t_center = params.t_center_offset(rr_prev if rr_prev is not None else params.rr_mean)
        waves = [(params.p, params.p.center), (params.q, params.q.center), (params.r, 0.0),
                 (params.s, params.s.center), (params.t, t_center)]  # fmt: skip
        for w, c in waves:
            lo = max(0, int(math.floor((rt + c - reach * w.width) * fs)))
            hi = min(n, int(math.ceil((rt + c + reach * w.width) * fs)) + 1)
            if hi > lo:
                clean[lo:hi] += _gauss(t[lo:hi], w, rt + c)
        truth.beats.append(
            TrueBeat(
                r_peak=float(rt),
                r_onset=float(rt + onset),
                t_offset=float(rt + t_center + T_OFFSET_WIDTHS * params.t.width),
                rr_prev=rr_prev,
            )
        )

    wander = params.wander_amplitude * np.sin(2 * np.pi * params.wander_hz * t + rng.uniform(0, 2 * np.pi))
    noise = rng.normal(0.0, params.noise_std, n) if params.noise_std > 0 else np.zeros(n)
    x = clean + wander + noise
    for a, b, amp in _draw_spikes(rng, params, duration):
        x[(t >= a) & (t < b)] += amp
        truth.spikes.append((float(a), float(b)))
    power = float(np.mean(clean**2))
    truth.snr_db = 10 * math.log10(power / params.noise_std**2) if params.noise_std > 0 else math.inf
    return EcgRecording(x, float(fs)), truth


# --------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class FeatureDist:
    """Class-conditional Gaussian of one continuous feature.

    ``shift`` is the T2D-minus-ND mean difference in units of ``std`` at
    class separation 1. ``circadian`` is an amplitude in units of ``std``.
    """

    name: str
    mean: float
    std: float
    shift: float
    circadian: float = 0.0
    phase_h: float = 0.0
    floor: float | None = None


# Defaults are plausible magnitudes, not clinical reference values.
DEFAULT_DISTS: tuple[FeatureDist, ...] = (
    FeatureDist("qtc", 0.410, 0.020, 0.9, 0.3, 14.0, floor=0.30),
    FeatureDist("sdnn", 0.050, 0.015, -0.9, 0.4, 6.0, floor=0.005),
    FeatureDist("rmssd", 0.040, 0.014, -0.8, 0.4, 4.0, floor=0.005),
    *(FeatureDist(f"tpr_{i}", 1.0 + 0.05 * i, 0.15, 0.5 if i % 2 else 0.35, 0.5, 13.0) for i in range(1, 9)),
    FeatureDist("co_1", 5.2, 0.8, -0.4, 0.4, 15.0),
    FeatureDist("co_2", 3.1, 0.5, -0.4, 0.4, 15.0),
    FeatureDist("bod_mag", 480.0, 60.0, -0.5, 0.1, 12.0),
    *(FeatureDist(f"con_mag_{i}", 300.0 + 20 * i, 40.0, -0.4, 0.1, 12.0) for i in range(1, 5)),
    FeatureDist("bod_deg", 7.0, 1.0, -0.5, 0.1, 12.0),
    FeatureDist("bfm", 22.0, 7.0, 0.8, 0.05, 12.0, floor=2.0),
    FeatureDist("smm", 29.0, 5.0, -0.3, 0.05, 12.0, floor=10.0),
    FeatureDist("tbw", 38.0, 6.0, -0.3, 0.05, 12.0, floor=15.0),
    FeatureDist("bmr", 1550.0, 190.0, 0.3, 0.05, 12.0, floor=800.0),
)

MEAL_ANCHORS_H = (7.0, 9.0, 12.0, 14.0, 19.0, 21.0)
FAMILY_P_ND = (0.55, 0.25, 0.20)
FAMILY_P_T2D = (0.25, 0.25, 0.50)
BASE_EPOCH_S = 1_704_067_200  # 2024-01-01T00:00:00Z


@dataclass(frozen=True)
class CohortSpec:
    n_nd: int = 162
    n_t2d: int = 123
    n_pd: int = 153
    instances_mean: float = 20.0
    instances_std: float = 4.0
    days: int = 6
    jitter_min: float = 90.0
    off_schedule_fraction: float = 0.1
    separation: float = 1.5
    within_patient_fraction: float = 0.2
    age_mean: float = 46.0
    age_std: float = 12.0
    age_shift: float = 1.0
    dists: tuple[FeatureDist, ...] = DEFAULT_DISTS
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_nd, self.n_t2d, self.n_pd) < 0:
            raise ParameterError("patient counts must be >= 0")
        if len(self.dists) != 23:
            raise ParameterError("expected 23 continuous sensor feature distributions")
        if not 0 <= self.within_patient_fraction <= 1:
            raise ParameterError("within_patient_fraction must lie in [0, 1]")
        if self.days < 1 or self.instances_mean <= 0:
            raise ParameterError("days and instances_mean must be positive")


def _timestamps(rng: np.random.Generator, spec: CohortSpec, n: int, day0: int) -> np.ndarray:
    slots = len(MEAL_ANCHORS_H) * spec.days
    chosen = np.sort(rng.choice(slots, size=min(n, slots), replace=False))
    out = []
    for s in chosen:
        day, meal = divmod(int(s), len(MEAL_ANCHORS_H))
        if rng.random() < spec.off_schedule_fraction:
            sod = rng.uniform(0, F.SECONDS_PER_DAY)
        else:
            sod = MEAL_ANCHORS_H[meal] * 3600 + rng.uniform(-1, 1) * spec.jitter_min * 60
        sod = float(np.clip(np.floor(sod), 0, F.SECONDS_PER_DAY - 1))
        out.append(BASE_EPOCH_S + (day0 + day) * F.SECONDS_PER_DAY + sod)
    return np.array(sorted(set(out)), dtype=np.float64)


def _family_probs(sep: float, mix: float) -> np.ndarray:
    nd, t2 = np.array(FAMILY_P_ND), np.array(FAMILY_P_T2D)
    p = np.clip(nd + sep * mix * (t2 - nd), 1e-6, None)
    return p / p.sum()


def generate_cohort(spec: CohortSpec = CohortSpec()) -> list[InstanceRecord]:
    """Instance records for every patient of the cohort.

    Each patient has a fixed age, family-history category and per-feature
    offset; instances add within-patient noise and a time-of-day sinusoid.
    A PD patient sits at a random point between the ND and T2D class means
    (Beta(0.6, 0.6) mixing weight), which gives a flat, two-humped spread.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    mean = np.array([d.mean for d in spec.dists])
    std = np.array([d.std for d in spec.dists])
    shift = np.array([d.shift for d in spec.dists])
    circ = np.array([d.circadian for d in spec.dists])
    phase = np.array([d.phase_h for d in spec.dists]) * 3600.0
    floor = np.array([-np.inf if d.floor is None else d.floor for d in spec.dists])
    sd_between = std * math.sqrt(1.0 - spec.within_patient_fraction)
    sd_within = std * math.sqrt(spec.within_patient_fraction)

    plan = [("nd", ND, spec.n_nd), ("t2d", T2D, spec.n_t2d), ("pd", PD, spec.n_pd)]
    records: list[InstanceRecord] = []
    for prefix, label, count in plan:
        for i in range(count):
            pid = f"{prefix}-{i + 1:04d}"
            if label == ND:
                mix = 0.0
            elif label == T2D:
                mix = 1.0
            else:
                mix = float(rng.beta(0.6, 0.6))
            center = mean + spec.separation * mix * shift * std
            patient = center + rng.normal(size=std.size) * sd_between
            age = spec.age_mean + spec.separation * mix * spec.age_shift * spec.age_std
            age = float(np.clip(round(age + rng.normal() * spec.age_std, 1), 18.0, 90.0))
            fam = int(rng.choice(3, p=_family_probs(spec.separation, mix)))
            n_inst = int(np.clip(round(rng.normal(spec.instances_mean, spec.instances_std)), 1, 6 * spec.days))
            day0 = int(rng.integers(0, 360))
            for ts in _timestamps(rng, spec, n_inst, day0):
                sod = F.seconds_of_day(ts)
                wave = np.sin(2 * np.pi * (sod - phase) / F.SECONDS_PER_DAY)
                v = patient + rng.normal(size=std.size) * sd_within + circ * std * wave
                v = np.maximum(v, floor)
                ecg = F.EcgFeatures(*v[:3])
                provided = F.ProvidedFeatures(tuple(v[3:13]), tuple(v[13:23]), age, fam)
                records.append(InstanceRecord(pid, float(ts), F.assemble(ecg, provided, sod), label))
    return records


def cohort_spec_from_dict(d: dict) -> CohortSpec:
    d = dict(d)
    dists = d.pop("dists", None)
    spec = replace(CohortSpec(), **d)
    if dists is not None:
        spec = replace(spec, dists=tuple(FeatureDist(**x) for x in dists))
    return spec


def beat_params_from_dict(d: dict) -> BeatTemplateParams:
    d = dict(d)
    for name in "pqrst":
        if name in d:
            d[name] = Wave(**d[name])
    return replace(BeatTemplateParams(), **d)
