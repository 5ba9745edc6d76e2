"""EDF recording I/O, bipolar montages and per-second annotation masks.

Supported container formats:

* EDF (1992 flavour): 256-byte fixed header plus 256 bytes per signal,
  int16 little-endian samples. EDF+ annotation channels are not parsed.
* Annotation sidecar CSV: one ``onset_s,offset_s`` event per line.
* Bad-electrode sidecar CSV: one ``second,channel_label`` entry per line.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError, EdfParseError

logger = logging.getLogger(__name__)

EEG_UNITS = {"uv", "µv", "µv", "mv_eeg"}  # labels treated as microvolt


@dataclass
class Recording:
    """Multichannel sampled EEG in microvolts.

    ``data`` has shape (n_channels, n_samples); all channels share one
    sampling rate. ``bad_electrode`` is an optional per-second boolean mask
    of shape (n_channels, n_seconds).
    """

    id: str
    labels: list[str]
    data: np.ndarray
    fs: float
    start_time: float = 0.0
    bad_electrode: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError("recording data must be 2-D (channels, samples)")
        if len(self.labels) != self.data.shape[0]:
            raise DataError(
                f"{len(self.labels)} labels for {self.data.shape[0]} channels"
            )
        if len(set(self.labels)) != len(self.labels):
            raise DataError("channel labels must be unique")
        if not self.fs > 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        if self.bad_electrode is not None:
            self.bad_electrode = np.asarray(self.bad_electrode, dtype=bool)
            want = (self.data.shape[0], self.n_seconds)
            if self.bad_electrode.shape != want:
                raise DataError(
                    f"bad-electrode mask shape {self.bad_electrode.shape}, "
                    f"expected {want}"
                )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Recording length in seconds."""
        return self.n_samples / self.fs

    @property
    def n_seconds(self) -> int:
        return math.ceil(self.duration)


@dataclass(frozen=True)
class Montage:
    """Bipolar derivation: each pair is (anode_label, cathode_label)."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        if len(set(self.pairs)) != len(self.pairs):
            raise DataError("montage contains a repeated pair")

    @property
    def labels(self) -> list[str]:
        return [f"{a}-{c}" for a, c in self.pairs]


@dataclass
class AnnotationMask:
    """Per-second binary seizure labels from one rater."""

    rater: str
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).ravel()

    @property
    def duration(self) -> int:
        return int(self.mask.size)

    def seconds(self) -> int:
        """Total seconds labelled seizure."""
        return int(np.count_nonzero(self.mask))


# ---------------------------------------------------------------------------
# EDF reading / writing
# ---------------------------------------------------------------------------

_FIXED_FIELDS = [
    # (name, width)
    ("version", 8),
    ("patient", 80),
    ("recording", 80),
    ("startdate", 8),
    ("starttime", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
]

_SIGNAL_FIELDS = [
    ("label", 16),
    ("transducer", 80),
    ("unit", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("signal_reserved", 32),
]


def _ascii(raw: bytes, offset: int, name: str) -> str:
    try:
        return raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise EdfParseError(
            f"non-ASCII bytes in header field '{name}' at byte offset {offset}"
        ) from exc


def _numeric(text: str, offset: int, name: str, conv):
    try:
        return conv(text.strip())
    except ValueError as exc:
        raise EdfParseError(
            f"cannot parse header field '{name}' at byte offset {offset}: "
            f"{text.strip()!r}"
        ) from exc


def read_edf(path: str | Path) -> Recording:
    """Read an EDF file into a Recording with physical (microvolt) values.

    Digital-to-physical reconstruction uses the per-channel linear map
    fixed by the (physical min/max, digital min/max) header fields. Raises
    EdfParseError on structural problems; non-EEG units only warn.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 256:
        raise EdfParseError(
            f"file is {len(raw)} bytes, shorter than the 256-byte fixed header"
        )

    header: dict[str, str] = {}
    pos = 0
    for name, width in _FIXED_FIELDS:
        header[name] = _ascii(raw[pos : pos + width], pos, name)
        pos += width

    if header["version"].strip() != "0":
        raise EdfParseError(
            f"unsupported EDF version {header['version'].strip()!r} "
            "at byte offset 0 (expected '0')"
        )
    n_records = _numeric(header["n_records"], 236, "n_records", int)
    record_duration = _numeric(
        header["record_duration"], 244, "record_duration", float
    )
    ns = _numeric(header["n_signals"], 252, "n_signals", int)
    if ns <= 0:
        raise EdfParseError("header declares no signals at byte offset 252")
    if n_records < 0:
        raise EdfParseError("unknown record count (-1) is not supported")

    expected_header = 256 + 256 * ns
    declared_header = _numeric(header["header_bytes"], 184, "header_bytes", int)
    if declared_header != expected_header:
        raise EdfParseError(
            f"header_bytes field at byte offset 184 declares {declared_header}, "
            f"expected {expected_header} for {ns} signals"
        )
    if len(raw) < expected_header:
        raise EdfParseError(
            f"file truncated inside the signal header: {len(raw)} bytes, "
            f"need {expected_header}"
        )

    sig: dict[str, list] = {name: [] for name, _ in _SIGNAL_FIELDS}
    for name, width in _SIGNAL_FIELDS:
        for i in range(ns):
            start = pos + i * width
            sig[name].append(_ascii(raw[start : start + width], start, name))
        pos += ns * width

    labels = [s.strip() for s in sig["label"]]
    units = [s.strip() for s in sig["unit"]]
    pmin = [_numeric(s, 0, "physical_min", float) for s in sig["physical_min"]]
    pmax = [_numeric(s, 0, "physical_max", float) for s in sig["physical_max"]]
    dmin = [_numeric(s, 0, "digital_min", int) for s in sig["digital_min"]]
    dmax = [_numeric(s, 0, "digital_max", int) for s in sig["digital_max"]]
    spr = [
        _numeric(s, 0, "samples_per_record", int)
        for s in sig["samples_per_record"]
    ]

    if len(set(spr)) != 1:
        raise EdfParseError(
            f"channels have differing samples-per-record {sorted(set(spr))}; "
            "mixed-rate EDF files are not supported"
        )
    if record_duration <= 0:
        raise EdfParseError("record duration must be positive")

    record_bytes = 2 * sum(spr)
    expected_total = expected_header + n_records * record_bytes
    if len(raw) < expected_total:
        raise EdfParseError(
            f"truncated data record at byte offset {len(raw)}: header declares "
            f"{n_records} records of {record_bytes} bytes ({expected_total} total)"
        )

    digital = np.frombuffer(
        raw, dtype="<i2", count=n_records * sum(spr), offset=expected_header
    )
    digital = digital.reshape(n_records, sum(spr))

    n = spr[0]
    fs = n / record_duration
    data = np.empty((ns, n_records * n), dtype=np.float64)
    for i in range(ns):
        if dmax[i] == dmin[i]:
            raise EdfParseError(f"channel {labels[i]!r}: zero digital range")
        gain = (pmax[i] - pmin[i]) / (dmax[i] - dmin[i])
        chan = digital[:, i * n : (i + 1) * n].reshape(-1).astype(np.float64)
        data[i] = (chan - dmin[i]) * gain + pmin[i]
        if units[i].lower() not in EEG_UNITS:
            logger.warning(
                "channel %r has unit %r, not microvolt; passing values through",
                labels[i],
                units[i],
            )

    start_time = _parse_start(header["startdate"], header["starttime"])
    return Recording(
        id=path.stem, labels=labels, data=data, fs=fs, start_time=start_time
    )


def _parse_start(date_str: str, time_str: str) -> float:
    try:
        dd, mm, yy = (int(p) for p in date_str.strip().split("."))
        hh, mi, ss = (int(p) for p in time_str.strip().split("."))
    except ValueError:
        return 0.0
    year = 1900 + yy if yy >= 85 else 2000 + yy
    try:
        dt = datetime(year, mm, dd, hh, mi, ss, tzinfo=timezone.utc)
    except ValueError:
        return 0.0
    return dt.timestamp()


def write_edf(rec: Recording, path: str | Path) -> None:
    """Write a Recording as EDF (1 s data records, int16 samples).

    Physical ranges are chosen per channel to cover the data; values are
    quantized to the 16-bit digital grid, so a read-back is exact only up
    to that quantization step.
    """
    path = Path(path)
    if abs(rec.fs - round(rec.fs)) > 1e-9:
        raise DataError(f"EDF writer needs an integer sampling rate, got {rec.fs}")
    fs = int(round(rec.fs))
    if rec.n_samples % fs != 0:
        raise DataError("EDF writer needs a whole number of 1 s records")
    n_records = rec.n_samples // fs
    ns = rec.n_channels

    dmin, dmax = -32768, 32767
    pmaxs = []
    for i in range(ns):
        span = float(np.max(np.abs(rec.data[i]))) if rec.n_samples else 0.0
        pmaxs.append(float(math.ceil(span)) + 1.0)

    def pad(text: str, width: int) -> bytes:
        b = text.encode("ascii")
        if len(b) > width:
            raise DataError(f"EDF header field too long: {text!r}")
        return b.ljust(width)

    dt = datetime.fromtimestamp(rec.start_time, tz=timezone.utc)
    parts = [
        pad("0", 8),
        pad("X", 80),
        pad(rec.id[:80], 80),
        pad(dt.strftime("%d.%m.%y"), 8),
        pad(dt.strftime("%H.%M.%S"), 8),
        pad(str(256 + 256 * ns), 8),
        pad("", 44),
        pad(str(n_records), 8),
        pad("1", 8),
        pad(str(ns), 4),
    ]
    parts += [pad(lbl[:16], 16) for lbl in rec.labels]
    parts += [pad("", 80)] * ns
    parts += [pad("uV", 8)] * ns
    parts += [pad(f"{-p:.0f}", 8) for p in pmaxs]
    parts += [pad(f"{p:.0f}", 8) for p in pmaxs]
    parts += [pad(str(dmin), 8)] * ns
    parts += [pad(str(dmax), 8)] * ns
    parts += [pad("", 80)] * ns
    parts += [pad(str(fs), 8)] * ns
    parts += [pad("", 32)] * ns

    digital = np.empty((ns, rec.n_samples), dtype="<i2")
    for i in range(ns):
        gain = (dmax - dmin) / (2.0 * pmaxs[i])
        d = np.round((rec.data[i] + pmaxs[i]) * gain) + dmin
        digital[i] = np.clip(d, dmin, dmax).astype("<i2")

    body = digital.reshape(ns, n_records, fs).transpose(1, 0, 2)
    path.write_bytes(b"".join(parts) + body.tobytes())


# ---------------------------------------------------------------------------
# Montage
# ---------------------------------------------------------------------------


def apply_montage(rec: Recording, montage: Montage) -> Recording:
    """Derive bipolar channels: output i = anode - cathode, label "A-B".

    The derived bad-electrode mask is the union of the source masks.
    """
    index = {lbl: i for i, lbl in enumerate(rec.labels)}
    missing = [l for pair in montage.pairs for l in pair if l not in index]
    if missing:
        raise DataError(
            f"montage references absent channels {sorted(set(missing))}; "
            f"recording has {rec.labels}"
        )
    data = np.empty((len(montage.pairs), rec.n_samples))
    bad = None
    if rec.bad_electrode is not None:
        bad = np.zeros((len(montage.pairs), rec.n_seconds), dtype=bool)
    for i, (anode, cathode) in enumerate(montage.pairs):
        data[i] = rec.data[index[anode]] - rec.data[index[cathode]]
        if bad is not None:
            bad[i] = (
                rec.bad_electrode[index[anode]]
                | rec.bad_electrode[index[cathode]]
            )
    return Recording(
        id=rec.id,
        labels=montage.labels,
        data=data,
        fs=rec.fs,
        start_time=rec.start_time,
        bad_electrode=bad,
    )


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------


def events_to_mask(events, duration: int) -> np.ndarray:
    """1 Hz mask true for every second intersecting an event."""
    mask = np.zeros(int(duration), dtype=bool)
    for onset, offset in events:
        lo = max(0, math.floor(onset))
        hi = min(len(mask), math.ceil(offset))
        if hi > lo:
            mask[lo:hi] = True
    return mask


def load_annotations(
    path: str | Path, duration: float, rater: str | None = None
) -> AnnotationMask:
    """Load an `onset_s,offset_s` event CSV into a per-second mask.

    Events are clipped to [0, duration]; clipping logs a warning. An event
    with offset <= onset is a format error.
    """
    path = Path(path)
    events = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() in ("onset_s", "onset"):
                continue
            try:
                onset, offset = float(row[0]), float(row[1])
            except (ValueError, IndexError) as exc:
                raise DataError(
                    f"{path.name}:{lineno}: expected 'onset_s,offset_s', got {row!r}"
                ) from exc
            if offset <= onset:
                raise DataError(
                    f"{path.name}:{lineno}: offset {offset} <= onset {onset}"
                )
            if onset >= duration or offset > duration or onset < 0:
                logger.warning(
                    "%s:%d: event (%.1f, %.1f) clipped to recording duration %.1f",
                    path.name,
                    lineno,
                    onset,
                    offset,
                    duration,
                )
            onset, offset = max(0.0, onset), min(float(duration), offset)
            if offset > onset:
                events.append((onset, offset))
    n_seconds = math.ceil(duration)
    return AnnotationMask(
        rater=rater if rater is not None else path.stem,
        mask=events_to_mask(events, n_seconds),
    )


def write_events(path: str | Path, events) -> None:
    """Write events as an `onset_s,offset_s` CSV (readable back)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["onset_s", "offset_s"])
        for onset, offset in events:
            writer.writerow([f"{onset:g}", f"{offset:g}"])


def write_mask(path: str | Path, annot: AnnotationMask) -> None:
    """Write a per-second mask as a `second,label` CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["second", "label"])
        for sec, val in enumerate(annot.mask):
            writer.writerow([sec, int(val)])


def read_mask(path: str | Path, rater: str | None = None) -> AnnotationMask:
    """Read a `second,label` CSV back into an AnnotationMask."""
    path = Path(path)
    seconds, labels = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "second":
                continue
            seconds.append(int(row[0]))
            labels.append(int(row[1]))
    if seconds != list(range(len(seconds))):
        raise DataError(f"{path.name}: seconds column must be 0..n-1 contiguous")
    return AnnotationMask(
        rater=rater if rater is not None else path.stem,
        mask=np.asarray(labels, dtype=bool),
    )


def load_bad_electrodes(
    path: str | Path, duration: float, labels: list[str]
) -> np.ndarray:
    """Load a `second,channel_label` CSV into a (n_channels, n_seconds) mask."""
    path = Path(path)
    n_seconds = math.ceil(duration)
    mask = np.zeros((len(labels), n_seconds), dtype=bool)
    index = {lbl: i for i, lbl in enumerate(labels)}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().lower() == "second":
                continue
            try:
                second = int(row[0])
                label = row[1].strip()
            except (ValueError, IndexError) as exc:
                raise DataError(
                    f"{path.name}:{lineno}: expected 'second,channel_label'"
                ) from exc
            if label not in index:
                raise DataError(
                    f"{path.name}:{lineno}: unknown channel {label!r}"
                )
            if 0 <= second < n_seconds:
                mask[index[label], second] = True
            else:
                logger.warning(
                    "%s:%d: second %d outside recording, ignored",
                    path.name,
                    lineno,
                    second,
                )
    return mask


def consensus(masks: list[AnnotationMask]) -> AnnotationMask:
    """Unanimous per-second AND of two or more rater masks."""
    if len(masks) < 2:
        raise DataError("consensus needs at least two raters")
    lengths = {m.duration for m in masks}
    if len(lengths) != 1:
        raise DataError(f"rater masks differ in length: {sorted(lengths)}")
    out = masks[0].mask.copy()
    for m in masks[1:]:
        out &= m.mask
    return AnnotationMask(rater="consensus", mask=out)
