"""Subjects, recordings, manifests and WAV I/O."""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedWavError, ManifestError, UnsupportedWavError

MANIFEST_SCHEMA_VERSION = 1
LABELS = ("AD", "nonAD")
SEXES = ("M", "F")
AGE_RANGE = (50, 80)


@dataclass(frozen=True, eq=False)
class Recording:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("recording needs a non-empty 1-d sample array")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def segment(self, start: float, end: float) -> "Recording":
        a = max(0, int(round(start * self.sample_rate)))
        b = min(len(self.samples), int(round(end * self.sample_rate)))
        return Recording(self.samples[a:b], self.sample_rate)


@dataclass(frozen=True)
class Subject:
    id: str
    label: str
    sex: str
    age_band: tuple[int, int]
    audio_path: Path
    transcript_path: Path

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"subject {self.id}: label must be one of {LABELS}, got {self.label!r}")
        if self.sex not in SEXES:
            raise ManifestError(f"subject {self.id}: sex must be one of {SEXES}, got {self.sex!r}")
        lo, hi = self.age_band
        if not (AGE_RANGE[0] <= lo < hi <= AGE_RANGE[1]):
            raise ManifestError(f"subject {self.id}: age band {self.age_band} outside [50, 80)")
        object.__setattr__(self, "age_band", (int(lo), int(hi)))
        object.__setattr__(self, "audio_path", Path(self.audio_path))
        object.__setattr__(self, "transcript_path", Path(self.transcript_path))

    @property
    def is_ad(self) -> bool:
        return self.label == "AD"


@dataclass(frozen=True)
class Manifest:
    subjects: tuple[Subject, ...]
    root: Path = Path(".")
    background_audio: tuple[Path, ...] = ()
    embedding_table: Path | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "background_audio", tuple(Path(p) for p in self.background_audio))
        seen = set()
        for s in self.subjects:
            if s.id in seen:
                raise ManifestError(f"duplicate subject id {s.id!r}")
            seen.add(s.id)

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in LABELS}
        for s in self.subjects:
            counts[s.label] += 1
        return counts

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise KeyError(subject_id)

    def sorted(self) -> "Manifest":
        """Same manifest with subjects ordered by id (the canonical fold order)."""
        return Manifest(tuple(sorted(self.subjects, key=lambda s: s.id)), self.root,
                        self.background_audio, self.embedding_table, self.extra)


def load_wav(path) -> Recording:
    """Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedWavError(f"{path}: non-PCM encoding ({exc})") from None
        raise MalformedWavError(f"{path}: {exc}") from None
    except EOFError:
        raise MalformedWavError(f"{path}: truncated header") from None
    if channels != 1:
        raise UnsupportedWavError(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise UnsupportedWavError(f"{path}: {8 * width}-bit samples, expected 16-bit")
    data = np.frombuffer(raw, dtype="<i2")
    if data.size == 0:
        raise MalformedWavError(f"{path}: no sample data")
    return Recording(data.astype(np.float64) / 32768.0, rate)


def write_wav(path, recording: Recording) -> None:
    """Write a recording as mono PCM16, clipping to the representable range."""
    pcm = np.clip(np.round(recording.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(recording.sample_rate)
        w.writeframes(pcm.tobytes())


def manifest_to_dict(manifest: Manifest) -> dict:
    root = Path(manifest.root)

    def rel(p):
        p = Path(p)
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return p.as_posix()

    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "subjects": [
            {
                "id": s.id,
                "label": s.label,
                "sex": s.sex,
                "age_band": list(s.age_band),
                "audio": rel(s.audio_path),
                "transcript": rel(s.transcript_path),
            }
            for s in manifest.subjects
        ],
        "class_counts": manifest.class_counts,
    }
    if manifest.background_audio:
        doc["background_audio"] = [rel(p) for p in manifest.background_audio]
    if manifest.embedding_table is not None:
        doc["embedding_table"] = rel(manifest.embedding_table)
    if manifest.extra:
        doc["extra"] = manifest.extra
    return doc


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=False) + "\n")


def load_manifest(path) -> Manifest:
    """Load a manifest JSON document; relative paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(f"{path}: unsupported schema_version {version!r}")
    root = path.parent.resolve()

    def res(p):
        p = Path(p)
        return p if p.is_absolute() else root / p

    try:
        subjects = [
            Subject(
                id=str(s["id"]),
                label=s["label"],
                sex=s["sex"],
                age_band=tuple(s["age_band"]),
                audio_path=res(s["audio"]),
                transcript_path=res(s["transcript"]),
            )
            for s in doc["subjects"]
        ]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: malformed subject entry ({exc!r})") from None
    manifest = Manifest(
        tuple(subjects),
        root=root,
        background_audio=tuple(res(p) for p in doc.get("background_audio", [])),
        embedding_table=res(doc["embedding_table"]) if doc.get("embedding_table") else None,
        extra=doc.get("extra", {}),
    )
    declared = doc.get("class_counts")
    if declared is not None and declared != manifest.class_counts:
        raise ManifestError(f"{path}: class_counts {declared} disagree with subjects {manifest.class_counts}")
    return manifest


def validate_manifest_files(manifest: Manifest) -> None:
    """Check every referenced file exists."""
    for s in manifest.subjects:
        for p in (s.audio_path, s.transcript_path):
            if not p.exists():
                raise ManifestError(f"subject {s.id}: missing file {p}")
