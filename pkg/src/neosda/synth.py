"""Synthetic neonatal EEG corpora with ground-truth seizure annotations.

Background is pink noise; seizures are amplitude-modulated chirps with
harmonics mixed into a random electrode subset; artifacts are short
high-amplitude in-band transients. Two synthetic "experts" re-annotate the
ground truth with jittered boundaries and occasional missed short events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import DataError
from .signal_io import AnnotationMask, Recording, events_to_mask, write_edf, write_events

DEFAULT_CHANNELS = ("F3", "F4", "P3", "P4")


@dataclass(frozen=True)
class SynthSpec:
    n_neonates: int = 12
    duration_s: int = 3600
    fs: float = 256.0
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    seizure_rate_per_h: float = 2.0
    seizure_dur_s: tuple[float, float] = (30.0, 300.0)
    seizure_freq_hz: tuple[float, float] = (2.0, 1.0)
    seizure_amp_uv: tuple[float, float] = (50.0, 150.0)
    background_rms_uv: float = 25.0
    burst_suppression: tuple[float, float] | None = None
    artifact_rate_per_h: float = 0.0
    artifact_amp_uv: tuple[float, float] = (500.0, 1500.0)
    expert_jitter_s: float = 5.0
    expert_miss_prob: float = 0.05
    seed: int = 12345

    def __post_init__(self):
        if self.n_neonates < 1:
            raise DataError("need at least one neonate")
        if self.duration_s < 1 or int(self.duration_s) != self.duration_s:
            raise DataError("duration must be a positive whole number of seconds")
        if self.seizure_rate_per_h < 0 or self.artifact_rate_per_h < 0:
            raise DataError("rates must be >= 0")
        if self.seizure_dur_s[0] < 30.0:
            raise DataError("minimum seizure duration is 30 s")


@dataclass
class SynthRecording:
    recording: Recording
    truth: AnnotationMask
    expert1: AnnotationMask
    expert2: AnnotationMask
    seizure_events: list[tuple[float, float]] = field(default_factory=list)
    artifact_events: list[tuple[float, float]] = field(default_factory=list)


def _pink_noise(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    freqs[0] = freqs[1]
    spectrum /= np.sqrt(freqs)
    x = np.fft.irfft(spectrum, n)
    return x / np.std(x)


def _place_events(
    rng: np.random.Generator,
    count: int,
    durations: np.ndarray,
    duration_s: float,
    occupied: list[tuple[float, float]],
    gap_s: float = 10.0,
) -> list[tuple[float, float]]:
    if durations.sum() + gap_s * count > 0.8 * duration_s:
        raise DataError(
            f"event rate implies {durations.sum():.0f} s of events in a "
            f"{duration_s:.0f} s recording; reduce the rate or lengthen the recording"
        )
    placed = list(occupied)
    out = []
    for dur in durations:
        for _ in range(1000):
            onset = float(rng.uniform(0.0, duration_s - dur))
            candidate = (onset, onset + float(dur))
            if all(
                candidate[1] + gap_s <= on or off + gap_s <= candidate[0]
                for on, off in placed
            ):
                placed.append(candidate)
                out.append(candidate)
                break
        else:
            raise DataError("could not place events without overlap; rate too high")
    return sorted(out)


def _chirp(t: np.ndarray, dur: float, f_hz: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    f0, f1 = f_hz
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t**2 / (2.0 * dur)) + phase0
    wave = np.sin(phase) + 0.5 * np.sin(2.0 * phase) + 0.25 * np.sin(3.0 * phase)
    ramp = np.clip(np.minimum(t, dur - t) / 5.0, 0.0, 1.0)
    wobble = 1.0 + 0.25 * np.sin(2.0 * np.pi * 0.08 * t + rng.uniform(0.0, 2.0 * np.pi))
    return wave * ramp * wobble


def _jittered_expert(
    events: list[tuple[float, float]],
    duration_s: int,
    jitter_s: float,
    miss_prob: float,
    rng: np.random.Generator,
    rater: str,
) -> AnnotationMask:
    kept = []
    for onset, offset in events:
        if offset - onset < 60.0 and rng.random() < miss_prob:
            continue
        on = onset + rng.uniform(-jitter_s, jitter_s)
        off = offset + rng.uniform(-jitter_s, jitter_s)
        on = max(0.0, on)
        off = min(float(duration_s), max(off, on + 1.0))
        kept.append((on, off))
    return AnnotationMask(rater=rater, mask=events_to_mask(kept, duration_s))


def generate(spec: SynthSpec, neonate_index: int = 0) -> SynthRecording:
    """One synthetic recording with truth and two synthetic expert masks.

    Deterministic in (spec.seed, neonate_index); component substreams are
    split so e.g. expert jitter does not perturb the background draw.
    """
    root = np.random.SeedSequence(entropy=spec.seed, spawn_key=(neonate_index,))
    rng_bg, rng_sz, rng_art, rng_e1, rng_e2 = (
        np.random.default_rng(s) for s in root.spawn(5)
    )
    n = int(spec.duration_s * spec.fs)
    n_ch = len(spec.channels)
    hours = spec.duration_s / 3600.0

    data = np.empty((n_ch, n))
    for ch in range(n_ch):
        data[ch] = _pink_noise(n, spec.fs, rng_bg) * spec.background_rms_uv
    if spec.burst_suppression is not None:
        burst_s, supp_s = spec.burst_suppression
        env = np.ones(n)
        t = 0.0
        in_burst = True
        while t < spec.duration_s:
            seg = float(rng_bg.uniform(0.5, 1.5)) * (burst_s if in_burst else supp_s)
            if not in_burst:
                lo = int(t * spec.fs)
                hi = min(n, int((t + seg) * spec.fs))
                env[lo:hi] = 0.15
            t += seg
            in_burst = not in_burst
        data *= env

    n_seiz = int(rng_sz.poisson(spec.seizure_rate_per_h * hours))
    lo_d, hi_d = spec.seizure_dur_s
    durations = np.exp(rng_sz.uniform(np.log(lo_d), np.log(hi_d), size=n_seiz))
    seiz_events = _place_events(rng_sz, n_seiz, durations, spec.duration_s, [])
    for onset, offset in seiz_events:
        dur = offset - onset
        i0 = int(round(onset * spec.fs))
        i1 = min(n, int(round(offset * spec.fs)))
        t = np.arange(i1 - i0) / spec.fs
        wave = _chirp(t, dur, spec.seizure_freq_hz, rng_sz)
        amp = rng_sz.uniform(*spec.seizure_amp_uv)
        n_into = min(n_ch, 2)
        chans = rng_sz.choice(n_ch, size=n_into, replace=False)
        for ch in chans:
            data[ch, i0:i1] += wave * amp * rng_sz.uniform(0.6, 1.2)

    n_art = int(rng_art.poisson(spec.artifact_rate_per_h * hours))
    art_durs = rng_art.uniform(1.0, 2.0, size=n_art)
    art_events = _place_events(rng_art, n_art, art_durs, spec.duration_s, seiz_events)
    for onset, offset in art_events:
        i0 = int(round(onset * spec.fs))
        i1 = min(n, int(round(offset * spec.fs)))
        t = np.arange(i1 - i0) / spec.fs
        amp = rng_art.uniform(*spec.artifact_amp_uv)
        swing = amp * np.sin(2.0 * np.pi * 2.0 * t) * np.clip(
            np.minimum(t, (offset - onset) - t) / 0.2, 0.0, 1.0
        )
        ch = int(rng_art.integers(0, n_ch))
        data[ch, i0:i1] += swing

    rec = Recording(
        id=f"synth-{neonate_index:03d}",
        labels=list(spec.channels),
        data=data,
        fs=spec.fs,
        start_time=0.0,
    )
    truth = AnnotationMask(
        rater="truth", mask=events_to_mask(seiz_events, spec.duration_s)
    )
    e1 = _jittered_expert(
        seiz_events, spec.duration_s, spec.expert_jitter_s, spec.expert_miss_prob, rng_e1, "e1"
    )
    e2 = _jittered_expert(
        seiz_events, spec.duration_s, spec.expert_jitter_s, spec.expert_miss_prob, rng_e2, "e2"
    )
    return SynthRecording(
        recording=rec,
        truth=truth,
        expert1=e1,
        expert2=e2,
        seizure_events=seiz_events,
        artifact_events=art_events,
    )


def generate_corpus(spec: SynthSpec) -> list[SynthRecording]:
    return [generate(spec, i) for i in range(spec.n_neonates)]


def write_corpus(spec: SynthSpec, out_dir: str | Path) -> list[str]:
    """Generate and write a corpus: EDFs plus annotation CSV sidecars.

    Layout per neonate: <id>.edf, <id>.truth.events.csv,
    <id>.e1.events.csv, <id>.e2.events.csv and <id>.artifacts.csv.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for item in generate_corpus(spec):
        rid = item.recording.id
        write_edf(item.recording, out_dir / f"{rid}.edf")
        write_events(out_dir / f"{rid}.truth.events.csv", item.seizure_events)
        from .postprocess import extract_events

        write_events(
            out_dir / f"{rid}.e1.events.csv", extract_events(item.expert1)
        )
        write_events(
            out_dir / f"{rid}.e2.events.csv", extract_events(item.expert2)
        )
        write_events(out_dir / f"{rid}.artifacts.csv", item.artifact_events)
        written.append(rid)
    manifest = {
        "spec": asdict(spec),
        "recordings": written,
    }
    (out_dir / "corpus.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return written
