"""Balanced six-signal sample groups and split-exclusive dataset manifests.

Every group pairs two utterances from two distinct speakers with two rooms,
one from the small-RT60 band and one from the large band, and stores the two
clean signals plus all four reverberant combinations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp.buffers import SAMPLE_RATE, AudioBuffer, ImpulseResponse
from .dsp.rir import convolve_rir, peak_normalize, preprocess_rir, synth_rir
from .dsp.rt60 import estimate_rt60
from .dsp.speech import synth_speech
from .dsp.wavio import read_rir, read_wav, write_wav
from .errors import BandExhausted, InsufficientDecay, IoError, ValidationError
from .train.tasks import SIGNAL_NAMES, SIGNAL_ORDER

GROUP_SECONDS = 3.0
GROUP_SAMPLES = int(GROUP_SECONDS * SAMPLE_RATE)

SMALL_BAND_MAX = 0.25
LARGE_BAND = (0.4, 1.2)
# nominal RT60 ranges used when synthesizing rooms; kept inside the bands
# with margin so the Schroeder estimate of the stored RIR lands in-band
SMALL_SYNTH_RANGE = (0.1, 0.2)
LARGE_SYNTH_RANGE = (0.5, 1.1)

SPLITS = ("train", "val", "test")
SPLIT_ID_OFFSET = {"train": 0, "val": 1_000_000, "test": 2_000_000}
MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = 1

SIGNAL_FIELDS = tuple(SIGNAL_NAMES[sid] for sid in SIGNAL_ORDER)
RIR_FIELDS = ("rir_small", "rir_large")


def _rt60(rir: ImpulseResponse) -> float:
    """Measured RT60, falling back to the nominal value when no fit is possible."""
    try:
        return estimate_rt60(rir)
    except InsufficientDecay:
        if rir.nominal_rt60 is None:
            raise
        return float(rir.nominal_rt60)


def in_small_band(rt60: float) -> bool:
    return rt60 < SMALL_BAND_MAX


def in_large_band(rt60: float) -> bool:
    return LARGE_BAND[0] < rt60 < LARGE_BAND[1]


def select_rir_pair(rir_pool, seed: int) -> tuple[ImpulseResponse, ImpulseResponse]:
    """Draw one small-band and one large-band RIR uniformly within each band.

    Band membership uses the measured RT60 of each RIR.

    Raises:
        BandExhausted: if either band has no candidate.
    """
    rts = [_rt60(r) for r in rir_pool]
    small = [r for r, t in zip(rir_pool, rts) if in_small_band(t)]
    large = [r for r, t in zip(rir_pool, rts) if in_large_band(t)]
    if not small:
        raise BandExhausted(f"no RIR with RT60 < {SMALL_BAND_MAX} s in a pool of {len(rir_pool)}")
    if not large:
        raise BandExhausted(f"no RIR with RT60 in {LARGE_BAND} s in a pool of {len(rir_pool)}")
    rng = np.random.default_rng(seed)
    return small[int(rng.integers(len(small)))], large[int(rng.integers(len(large)))]


@dataclass(frozen=True, eq=False)
class SampleGroup:
    """Two clean utterances, two rooms and the four reverberant combinations.

    ``reverb_ij`` holds utterance ``i`` in room ``j`` where room 1 is the
    small-RT60 RIR and room 2 the large one.
    """

    clean_1: AudioBuffer
    clean_2: AudioBuffer
    reverb_11: AudioBuffer
    reverb_12: AudioBuffer
    reverb_21: AudioBuffer
    reverb_22: AudioBuffer
    rir_small: ImpulseResponse
    rir_large: ImpulseResponse
    speaker_ids: tuple[int, int]
    room_ids: tuple[int, int]
    rt60s: tuple[float, float] = field(default=(float("nan"), float("nan")))

    def signal(self, sid) -> AudioBuffer:
        return getattr(self, SIGNAL_NAMES[tuple(sid)])

    def stack(self) -> np.ndarray:
        """``[6, samples]`` float32 array in ``SIGNAL_ORDER``."""
        return np.stack([getattr(self, name).samples for name in SIGNAL_FIELDS]).astype(np.float32)


def _group_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *key]))


def make_group(speaker_ids, room_ids, rir_small: ImpulseResponse, rir_large: ImpulseResponse,
               seed: int, rt60s=None) -> SampleGroup:
    """Assemble a group from an already selected RIR pair."""
    speaker_ids = tuple(int(s) for s in speaker_ids)
    room_ids = tuple(int(r) for r in room_ids)
    if len(speaker_ids) != 2 or speaker_ids[0] == speaker_ids[1]:
        raise ValidationError(f"need two distinct speaker ids, got {speaker_ids}")
    if len(room_ids) != 2 or room_ids[0] == room_ids[1]:
        raise ValidationError(f"need two distinct room ids, got {room_ids}")
    rng = _group_rng(seed, 1)
    utt = rng.integers(0, 2**31, size=2)
    clean = [synth_speech(GROUP_SECONDS, speaker_ids[k], int(utt[k])) for k in range(2)]
    rirs = (rir_small, rir_large)
    rev = {(i, j): peak_normalize(convolve_rir(clean[i - 1], rirs[j - 1]))
           for i in (1, 2) for j in (1, 2)}
    if rt60s is None:
        rt60s = (_rt60(rir_small), _rt60(rir_large))
    return SampleGroup(
        clean[0], clean[1], rev[1, 1], rev[1, 2], rev[2, 1], rev[2, 2],
        rir_small, rir_large, speaker_ids, room_ids, tuple(float(t) for t in rt60s),
    )


def build_group(speaker_ids, room_ids, rir_pool, seed: int) -> SampleGroup:
    """Build one balanced group.

    Args:
        speaker_ids: Two distinct synthetic speaker ids.
        room_ids: Two distinct room ids. When RIRs in the pool carry room
            ids, the pool is restricted to these rooms.
        rir_pool: Candidate preprocessed impulse responses.
        seed: Seeds the RIR choice and both utterances.

    Raises:
        BandExhausted: if the (restricted) pool lacks a band.
    """
    room_ids = tuple(int(r) for r in room_ids)
    pool = list(rir_pool)
    if any(r.room_id is not None for r in pool):
        pool = [r for r in pool if r.room_id in room_ids]
    small, large = select_rir_pair(pool, int(_group_rng(seed, 0).integers(2**31)))
    if small.room_id is not None and large.room_id is not None:
        room_ids = (small.room_id, large.room_id)
    return make_group(speaker_ids, room_ids, small, large, seed)


def synth_room_pair(room_ids, seed: int) -> list[ImpulseResponse]:
    """Two preprocessed synthetic rooms: one per RT60 band."""
    rng = _group_rng(seed, 2)
    rt_small = float(rng.uniform(*SMALL_SYNTH_RANGE))
    rt_large = float(rng.uniform(*LARGE_SYNTH_RANGE))
    seeds = rng.integers(0, 2**31, size=2)
    return [
        preprocess_rir(synth_rir(rt, max(0.3, 2 * rt), int(s), room_id=int(rid)))
        for rt, s, rid in zip((rt_small, rt_large), seeds, room_ids)
    ]


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestEntry:
    group_id: int
    split: str
    paths: dict
    speaker_ids: tuple[int, int]
    room_ids: tuple[int, int]
    rt60_small: float
    rt60_large: float

    def to_json(self) -> dict:
        return {
            "group_id": self.group_id,
            "split": self.split,
            **self.paths,
            "speaker_ids": list(self.speaker_ids),
            "room_ids": list(self.room_ids),
            "rt60_small": self.rt60_small,
            "rt60_large": self.rt60_large,
        }

    @classmethod
    def from_json(cls, d: dict) -> ManifestEntry:
        return cls(
            int(d["group_id"]),
            str(d["split"]),
            {k: d[k] for k in SIGNAL_FIELDS + RIR_FIELDS},
            tuple(int(s) for s in d["speaker_ids"]),
            tuple(int(r) for r in d["room_ids"]),
            float(d["rt60_small"]),
            float(d["rt60_large"]),
        )


@dataclass
class DatasetManifest:
    """Dataset index; file paths are relative to ``root``."""

    entries: list[ManifestEntry]
    seed: int
    root: Path = Path(".")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def path(self, entry: ManifestEntry, key: str) -> Path:
        return Path(self.root) / entry.paths[key]

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else Path(self.root) / MANIFEST_NAME
        lines = [json.dumps({"manifest_version": MANIFEST_VERSION, "seed": self.seed})]
        lines += [json.dumps(e.to_json()) for e in self.entries]
        try:
            path.write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise IoError(path, f"cannot write manifest: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> DatasetManifest:
        """Read a manifest file (or the manifest inside a dataset directory)."""
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
            header = json.loads(lines[0])
            entries = [ManifestEntry.from_json(json.loads(ln)) for ln in lines[1:]]
        except (OSError, IndexError, ValueError, KeyError, TypeError) as exc:
            raise IoError(path, f"unreadable manifest: {exc}") from exc
        if header.get("manifest_version") != MANIFEST_VERSION:
            raise IoError(path, f"unsupported manifest version {header.get('manifest_version')}")
        return cls(entries, int(header["seed"]), path.parent)

    def load_group(self, entry: ManifestEntry) -> SampleGroup:
        sig = [read_wav(self.path(entry, k)) for k in SIGNAL_FIELDS]
        small = read_rir(self.path(entry, "rir_small"), room_id=entry.room_ids[0])
        large = read_rir(self.path(entry, "rir_large"), room_id=entry.room_ids[1])
        return SampleGroup(*sig, small, large, entry.speaker_ids, entry.room_ids,
                           (entry.rt60_small, entry.rt60_large))


def split_ids(split: str, index: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Speaker and room ids reserved for group ``index`` of ``split``."""
    base = SPLIT_ID_OFFSET[split] + 2 * index
    return (base, base + 1), (base, base + 1)


def build_dataset(root, n_train: int = 200, n_val: int = 20, n_test: int = 20,
                  seed: int = 0) -> DatasetManifest:
    """Generate groups for all three splits under ``root`` and write the manifest.

    Speakers and rooms come from per-split id ranges, so no id can appear in
    two splits. Each group's seed is derived from ``(seed, group_id)``; the
    output does not depend on generation order.
    """
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for name, n in counts.items():
        if int(n) < 1:
            raise ValidationError(f"n_{name} must be >= 1, got {n}")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(root, f"cannot create dataset directory: {exc}") from exc
    entries = []
    group_id = 0
    for split in SPLITS:
        for index in range(int(counts[split])):
            speakers, rooms = split_ids(split, index)
            gseed = int(_group_rng(seed, 3, group_id).integers(2**31))
            pool = synth_room_pair(rooms, gseed)
            group = build_group(speakers, rooms, pool, gseed)
            rel = Path(split) / f"g{group_id:06d}"
            paths = {}
            for name in SIGNAL_FIELDS:
                paths[name] = str(rel / f"{name}.wav")
                write_wav(root / paths[name], getattr(group, name))
            for name, rir in zip(RIR_FIELDS, (group.rir_small, group.rir_large)):
                paths[name] = str(rel / f"{name}.wav")
                write_wav(root / paths[name], rir)
            # bands are judged on what was actually stored
            rts = [_rt60(read_rir(root / paths[k], r.nominal_rt60))
                   for k, r in zip(RIR_FIELDS, (group.rir_small, group.rir_large))]
            entries.append(ManifestEntry(group_id, split, paths, group.speaker_ids,
                                         group.room_ids, rts[0], rts[1]))
            group_id += 1
    manifest = DatasetManifest(entries, int(seed), root)
    manifest.save()
    return manifest


@dataclass
class PartitionReport:
    violations: list[str]
    n_groups: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> str:
        if self.ok:
            return f"pass: {self.n_groups} groups, splits disjoint, files present, RT60 bands valid"
        return "fail:\n" + "\n".join(f"  - {v}" for v in self.violations)


def verify_partition(manifest, check_files: bool = True, remeasure: bool = False) -> PartitionReport:
    """Check split exclusivity, file presence and RT60 bands; report every violation.

    Args:
        manifest: ``DatasetManifest`` or path to one.
        check_files: Require every referenced WAV to exist.
        remeasure: Also re-estimate RT60 from the stored RIR files.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.load(manifest)
    violations = []
    for kind, attr in (("speaker", "speaker_ids"), ("room", "room_ids")):
        owners: dict[int, set] = {}
        for e in manifest.entries:
            for i in getattr(e, attr):
                owners.setdefault(i, set()).add(e.split)
        for i, splits in sorted(owners.items()):
            if len(splits) > 1:
                violations.append(f"{kind} id {i} appears in splits {sorted(splits)}")
    for e in manifest.entries:
        if e.split not in SPLITS:
            violations.append(f"group {e.group_id}: unknown split {e.split!r}")
        if len(set(e.speaker_ids)) != 2:
            violations.append(f"group {e.group_id}: speaker ids not distinct {e.speaker_ids}")
        if len(set(e.room_ids)) != 2:
            violations.append(f"group {e.group_id}: room ids not distinct {e.room_ids}")
        rts = (e.rt60_small, e.rt60_large)
        if remeasure:
            try:
                rts = tuple(_rt60(read_rir(manifest.path(e, k))) for k in RIR_FIELDS)
            except (IoError, InsufficientDecay) as exc:
                violations.append(f"group {e.group_id}: cannot measure RT60 ({exc})")
        if not in_small_band(rts[0]):
            violations.append(f"group {e.group_id}: rir_small RT60 {rts[0]:.3f} s not < {SMALL_BAND_MAX} s")
        if not in_large_band(rts[1]):
            violations.append(
                f"group {e.group_id}: rir_large RT60 {rts[1]:.3f} s outside {LARGE_BAND} s"
            )
        if check_files:
            for key in SIGNAL_FIELDS + RIR_FIELDS:
                if not manifest.path(e, key).is_file():
                    violations.append(f"group {e.group_id}: missing file {e.paths[key]}")
    return PartitionReport(violations, len(manifest.entries))


class GroupBank:
    """All signals of one split held in memory as ``[groups, 6, samples]`` float32."""

    def __init__(self, data: np.ndarray, entries=None):
        self.data = np.asarray(data, dtype=np.float32)
        self.entries = entries or []

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, split: str = "train") -> GroupBank:
        entries = manifest.split(split)
        if not entries:
            raise ValidationError(f"manifest has no {split!r} groups")
        data = np.stack([manifest.load_group(e).stack() for e in entries])
        return cls(data, entries)

    @classmethod
    def from_groups(cls, groups) -> GroupBank:
        return cls(np.stack([g.stack() for g in groups]))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.data[i]
