"""Dataset handling: record files, manifests, synthetic data, and splits.

A dataset on disk is a UTF-8 manifest (key=value header, then one
tab-separated line per record: id, subject, label, relative path) plus one
little-endian binary file per record holding the raw multi-lead samples.
Splitting groups by subject so no person straddles a train/test boundary or
two cross-validation folds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

_RECORD_MAGIC = b"ECGR"
_RECORD_VERSION = 1


@dataclass
class EcgRecord:
    """One multi-lead signal with its label and grouping key."""

    record_id: str
    subject_id: str
    label: int
    leads: np.ndarray  # (n_leads, n_samples) float32
    sample_rate_hz: float

    def __post_init__(self):
        self.leads = np.asarray(self.leads, dtype=np.float32)
        if self.leads.ndim != 2 or self.leads.size == 0:
            raise DataError(f"record {self.record_id}: leads must be a non-empty 2-d array")
        if not np.all(np.isfinite(self.leads)):
            raise DataError(f"record {self.record_id}: non-finite samples")
        if self.sample_rate_hz <= 0:
            raise DataError(f"record {self.record_id}: sample rate must be positive")

    @property
    def n_leads(self) -> int:
        return self.leads.shape[0]

    @property
    def n_samples(self) -> int:
        return self.leads.shape[1]


@dataclass
class ManifestEntry:
    record_id: str
    subject_id: str
    label: int
    path: str


@dataclass
class DatasetManifest:
    n_leads: int
    sample_rate_hz: float
    class_names: list[str]
    entries: list[ManifestEntry]


# ---------------------------------------------------------------------------
# record binary files
# ---------------------------------------------------------------------------

def write_record(record: EcgRecord, path) -> None:
    with open(path, "wb") as f:
        f.write(_RECORD_MAGIC)
        f.write(struct.pack("<H", _RECORD_VERSION))
        f.write(struct.pack("<II", record.n_leads, record.n_samples))
        f.write(struct.pack("<d", float(record.sample_rate_hz)))
        f.write(np.ascontiguousarray(record.leads, dtype="<f4").tobytes())


def read_record(path, record_id: str = "", subject_id: str = "", label: int = 0) -> EcgRecord:
    blob = Path(path).read_bytes()
    header = struct.calcsize("<4sHIId")
    if len(blob) < header:
        raise DataError(f"record file {path} is truncated")
    magic, version, n_leads, n_samples, rate = struct.unpack("<4sHIId", blob[:header])
    if magic != _RECORD_MAGIC:
        raise DataError(f"record file {path} has bad magic {magic!r}")
    if version != _RECORD_VERSION:
        raise DataError(f"record file {path} has unsupported version {version}")
    expected = header + 4 * n_leads * n_samples
    if len(blob) != expected:
        raise DataError(
            f"record file {path} has {len(blob)} bytes, expected {expected}")
    leads = np.frombuffer(blob[header:], dtype="<f4").reshape(n_leads, n_samples)
    return EcgRecord(record_id=record_id or Path(path).stem, subject_id=subject_id,
                     label=label, leads=leads.copy(), sample_rate_hz=rate)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [
        f"n_leads={manifest.n_leads}",
        f"sample_rate_hz={manifest.sample_rate_hz!r}",
        "classes=" + ",".join(manifest.class_names),
        "records:",
    ]
    for e in manifest.entries:
        lines.append(f"{e.record_id}\t{e.subject_id}\t{e.label}\t{e.path}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    header: dict[str, str] = {}
    entries: list[ManifestEntry] = []
    in_records = False
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not in_records:
            if line == "records:":
                in_records = True
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value in header, got {line!r}")
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        else:
            parts = raw.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields")
            rec_id, subject, label_s, rel = (p.strip() for p in parts)
            try:
                label = int(label_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {label_s!r} is not an integer")
            entries.append(ManifestEntry(rec_id, subject, label, rel))
    for key in ("n_leads", "sample_rate_hz", "classes"):
        if key not in header:
            raise DataError(f"{path}: manifest header missing {key!r}")
    try:
        n_leads = int(header["n_leads"])
        rate = float(header["sample_rate_hz"])
    except ValueError as exc:
        raise DataError(f"{path}: bad header value: {exc}")
    classes = [c for c in header["classes"].split(",") if c]
    if not classes:
        raise DataError(f"{path}: manifest declares no classes")
    seen = set()
    for e in entries:
        if e.record_id in seen:
            raise DataError(f"{path}: duplicate record id {e.record_id!r}")
        seen.add(e.record_id)
    return DatasetManifest(n_leads=n_leads, sample_rate_hz=rate,
                           class_names=classes, entries=entries)


def load_dataset(manifest_path) -> tuple[DatasetManifest, list[EcgRecord]]:
    """Read and validate every record a manifest references.

    Per-record problems (missing file, bad label, length or lead mismatch)
    are collected and reported together in one :class:`DataError`.
    """
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    records: list[EcgRecord] = []
    problems: list[str] = []
    expected_len: int | None = None
    for e in manifest.entries:
        rec_path = base / e.path
        if not rec_path.exists():
            problems.append(f"{e.record_id}: missing file {rec_path}")
            continue
        try:
            rec = read_record(rec_path, record_id=e.record_id,
                              subject_id=e.subject_id, label=e.label)
        except DataError as exc:
            problems.append(f"{e.record_id}: {exc}")
            continue
        if rec.n_leads != manifest.n_leads:
            problems.append(
                f"{e.record_id}: has {rec.n_leads} leads, manifest declares {manifest.n_leads}")
            continue
        if rec.sample_rate_hz != manifest.sample_rate_hz:
            problems.append(
                f"{e.record_id}: sample rate {rec.sample_rate_hz} differs from "
                f"manifest {manifest.sample_rate_hz}")
            continue
        if not 0 <= e.label < len(manifest.class_names):
            problems.append(
                f"{e.record_id}: label {e.label} outside [0, {len(manifest.class_names)})")
            continue
        if expected_len is None:
            expected_len = rec.n_samples
        elif rec.n_samples != expected_len:
            problems.append(
                f"{e.record_id}: length {rec.n_samples} differs from dataset length {expected_len}")
            continue
        records.append(rec)
    if problems:
        raise DataError(
            f"{len(problems)} invalid record(s) in {manifest_path}", details=problems)
    return manifest, records


def save_dataset(records, out_dir, class_names=None, sample_rate_hz=None) -> Path:
    """Write records and a manifest under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    records = list(records)
    if not records:
        raise DataError("cannot save an empty dataset")
    n_classes = max(r.label for r in records) + 1
    if class_names is None:
        class_names = [f"class{i}" for i in range(n_classes)]
    rate = sample_rate_hz if sample_rate_hz is not None else records[0].sample_rate_hz
    entries = []
    for rec in records:
        rel = f"records/{rec.record_id}.ecg"
        write_record(rec, out_dir / rel)
        entries.append(ManifestEntry(rec.record_id, rec.subject_id, rec.label, rel))
    manifest = DatasetManifest(n_leads=records[0].n_leads, sample_rate_hz=rate,
                               class_names=list(class_names), entries=entries)
    manifest_path = out_dir / "manifest.txt"
    write_manifest(manifest, manifest_path)
    return manifest_path


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def synth_dataset(seed, n_records, n_classes, n_leads, n_samples, noise_std,
                  records_per_subject: int = 1, sample_rate_hz: float = 500.0):
    """Deterministic desk-scale dataset of class-specific sinusoid mixtures.

    Each class owns a disjoint band of integer frequencies; its waveform is a
    fixed sum of three sinusoids drawn from the seed. A record scales the
    class waveform by a per-record gain and fixed per-lead gains, then adds
    Gaussian noise. At ``noise_std=0`` the classes are separable in spectrum
    and same-class records differ only by their record gain.
    """
    if n_classes < 2:
        raise ValueError(f"synth_dataset: need at least 2 classes, got {n_classes}")
    if n_records < 1 or n_leads < 1 or n_samples < 2:
        raise ValueError("synth_dataset: n_records, n_leads >= 1 and n_samples >= 2 required")
    if noise_std < 0:
        raise ValueError("synth_dataset: noise_std must be non-negative")
    if records_per_subject < 1:
        raise ValueError("synth_dataset: records_per_subject must be >= 1")

    band = (n_samples // 2 - 1) // n_classes
    if band < 1:
        raise ValueError(
            f"synth_dataset: {n_samples} samples cannot host {n_classes} distinct bands")
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_classes + 1 + n_records)
    class_rngs = [np.random.default_rng(s) for s in children[:n_classes]]
    lead_rng = np.random.default_rng(children[n_classes])
    record_seeds = children[n_classes + 1:]

    t = np.arange(n_samples)
    templates = np.zeros((n_classes, n_samples))
    for c, rng in enumerate(class_rngs):
        start = 1 + c * band
        n_tones = min(3, band)
        freqs = start + rng.choice(band, size=n_tones, replace=False)
        amps = rng.uniform(0.5, 1.0, size=n_tones)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_tones)
        for f, a, ph in zip(freqs, amps, phases):
            templates[c] += a * np.sin(2.0 * np.pi * f * t / n_samples + ph)
    lead_gains = lead_rng.uniform(0.5, 1.5, size=n_leads)

    records = []
    for r in range(n_records):
        c = r % n_classes
        rng = np.random.default_rng(record_seeds[r])
        gain = rng.uniform(0.7, 1.3)
        leads = gain * lead_gains[:, None] * templates[c][None, :]
        if noise_std > 0:
            leads = leads + rng.normal(0.0, noise_std, size=(n_leads, n_samples))
        records.append(EcgRecord(
            record_id=f"r{r:04d}",
            subject_id=f"s{r // records_per_subject:04d}",
            label=c,
            leads=leads.astype(np.float32),
            sample_rate_hz=sample_rate_hz,
        ))
    return records


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def _group_keys(records, by_subject: bool):
    if by_subject:
        return [r.subject_id for r in records]
    return [r.record_id for r in records]


def split_records(records, train_fraction: float = 0.8, seed: int = 0,
                  by_subject: bool = True):
    """Deterministic (train, test) partition grouped by subject.

    With ``by_subject=False`` every record is its own group, which reproduces
    a plain record-level random split.
    """
    records = list(records)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0,1), got {train_fraction}")
    keys = _group_keys(records, by_subject)
    groups = sorted(set(keys))
    if len(groups) < 2:
        raise DataError("need at least 2 subjects to split into train and test")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = [groups[i] for i in rng.permutation(len(groups))]
    n_train = int(round(train_fraction * len(groups)))
    n_train = min(max(n_train, 1), len(groups) - 1)
    train_groups = set(order[:n_train])
    train = [r for r, k in zip(records, keys) if k in train_groups]
    test = [r for r, k in zip(records, keys) if k not in train_groups]
    return train, test


def kfold_records(records, k: int, seed: int = 0, by_subject: bool = True):
    """Deterministic subject-disjoint folds whose sizes differ by at most one subject."""
    records = list(records)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    keys = _group_keys(records, by_subject)
    groups = sorted(set(keys))
    if len(groups) < k:
        raise DataError(f"need at least {k} subjects for {k} folds, have {len(groups)}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = [groups[i] for i in rng.permutation(len(groups))]
    assignment = {g: i % k for i, g in enumerate(order)}
    folds = [[] for _ in range(k)]
    for rec, key in zip(records, keys):
        folds[assignment[key]].append(rec)
    return folds


def records_to_arrays(records):
    """Stack records into (X, y) arrays of shape (N, leads, samples) and (N,)."""
    records = list(records)
    if not records:
        raise DataError("no records to convert")
    shape = records[0].leads.shape
    for r in records:
        if r.leads.shape != shape:
            raise DataError(
                f"record {r.record_id}: shape {r.leads.shape} differs from {shape}")
    x = np.stack([r.leads for r in records]).astype(np.float32)
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def resample_record(record: EcgRecord, target_len: int) -> EcgRecord:
    """Fourier-resample every lead of a record to ``target_len`` samples."""
    from .signal import fourier_resample

    leads = np.stack([fourier_resample(lead.astype(np.float64), target_len)
                      for lead in record.leads])
    new_rate = record.sample_rate_hz * target_len / record.n_samples
    return EcgRecord(record_id=record.record_id, subject_id=record.subject_id,
                     label=record.label, leads=leads.astype(np.float32),
                     sample_rate_hz=new_rate)
