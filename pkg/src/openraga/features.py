"""Chroma clip production.

Extracts 12-bin chroma from mono audio, tonic-normalizes it, segments
recordings into fixed-length clips with source tracking, generates
synthetic corpora for desk-scale experiments, and builds the augmented
views (time shift + volume change) consumed by the consistency loss.

Frame convention: a chroma matrix is (12, T) with nonnegative entries;
each frame (column) either sums to 1 or is exactly zero (silence). The
silence gate zeroes frames whose total magnitude falls below
SILENCE_FLOOR_RATIO times the loudest frame of the recording.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError

# Equal-tempered reference: pitch class 0 is C (C0 at 440 Hz * 2**(-4.75)).
REFERENCE_C_HZ = 440.0 * 2.0 ** (-4.75)

SILENCE_FLOOR_RATIO = 1e-6

DEFAULT_CLIP_SECONDS = 30.0
DEFAULT_FRAME_HOP = 0.5


@dataclass
class ChromaClip:
    """One fixed-length chroma excerpt of a recording.

    frames is (12, T), per-frame normalized or all-zero. label is None for
    unlabeled clips. start_frame is the clip's offset inside its parent
    recording (used when building shifted views).
    """

    clip_id: int
    source_id: int
    frames: np.ndarray
    label: int | None
    frame_hop: float = DEFAULT_FRAME_HOP
    start_frame: int = 0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] != 12:
            raise InputError(f"clip frames must be (12, T), got {self.frames.shape}")
        if self.frames.shape[1] < 1:
            raise InputError("clip must contain at least one frame")
        if np.any(self.frames < 0):
            raise InputError("chroma frames must be nonnegative")


@dataclass
class SyntheticRagaSpec:
    """Desk-scale stand-in for a raga: an allowed note set with emission
    weights, a tonic, and note-duration statistics."""

    class_id: int
    allowed_pcs: tuple[int, ...]
    weights: np.ndarray
    tonic_pc: int = 0
    note_mean_seconds: float = 1.2
    note_shape: float = 2.0
    gain_jitter: float = 0.2

    def __post_init__(self):
        self.allowed_pcs = tuple(sorted(set(int(p) for p in self.allowed_pcs)))
        if not self.allowed_pcs:
            raise ConfigError("allowed pitch-class set must be non-empty")
        if any(p < 0 or p > 11 for p in self.allowed_pcs):
            raise ConfigError("pitch classes must lie in 0..11")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (12,):
            raise ConfigError(f"weights must have 12 entries, got shape {w.shape}")
        allowed = np.zeros(12, dtype=bool)
        allowed[list(self.allowed_pcs)] = True
        if np.any(w[allowed] <= 0) or np.any(w[~allowed] != 0):
            raise ConfigError("weights must be positive on the allowed set and zero elsewhere")
        self.weights = w / w.sum()
        if not 0 <= self.tonic_pc <= 11:
            raise ConfigError(f"tonic pitch class {self.tonic_pc} out of range")


@dataclass
class DatasetSplit:
    """Labeled clips partitioned into train/val/test at source granularity,
    plus the unlabeled set whose ground-truth labels stay hidden from
    training code."""

    clips: list[ChromaClip]
    labeled_classes: tuple[int, ...]
    unlabeled_classes: tuple[int, ...]
    train_ids: list[int]
    val_ids: list[int]
    test_ids: list[int]
    unlabeled_ids: list[int]
    class_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {c.clip_id: c for c in self.clips}

    def clip(self, clip_id: int) -> ChromaClip:
        return self._by_id[clip_id]

    def _clips(self, ids: list[int]) -> list[ChromaClip]:
        return [self._by_id[i] for i in ids]

    @property
    def train_clips(self) -> list[ChromaClip]:
        return self._clips(self.train_ids)

    @property
    def val_clips(self) -> list[ChromaClip]:
        return self._clips(self.val_ids)

    @property
    def test_clips(self) -> list[ChromaClip]:
        return self._clips(self.test_ids)

    @property
    def unlabeled_clips(self) -> list[ChromaClip]:
        return self._clips(self.unlabeled_ids)


def normalize_frames(frames: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Zero frames with total magnitude below `floor`, sum-normalize the rest.

    Frames already summing to 1 (within 1e-12) are left untouched so the
    operation is idempotent bit-for-bit.
    """
    frames = np.asarray(frames, dtype=np.float64)
    out = frames.copy()
    sums = out.sum(axis=0)
    silent = sums < floor if floor > 0 else np.zeros_like(sums, dtype=bool)
    silent |= sums <= 0
    out[:, silent] = 0.0
    live = ~silent & (np.abs(sums - 1.0) > 1e-12)
    if np.any(live):
        out[:, live] /= sums[live]
    return out


def silence_floor(raw_frames: np.ndarray) -> float:
    """Gate level for a recording: SILENCE_FLOOR_RATIO of its loudest frame."""
    sums = np.asarray(raw_frames, dtype=np.float64).sum(axis=0)
    return SILENCE_FLOOR_RATIO * (float(sums.max()) if sums.size else 0.0)


def pitch_class_of_bin(bin_index: int, window: int, sample_rate: float) -> int:
    """Nearest equal-tempered pitch class of an STFT bin (relative to C)."""
    freq = bin_index * sample_rate / window
    return int(round(12.0 * np.log2(freq / REFERENCE_C_HZ))) % 12


def extract_chroma(samples: np.ndarray, sample_rate: float, window: int = 4096,
                   hop: int = 2048) -> np.ndarray:
    """Magnitude-STFT chroma: (12, T), silence-gated and frame-normalized.

    Each FFT bin's magnitude is assigned to the pitch class nearest its
    frequency. T = 1 + (len(samples) - window) // hop.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if sample_rate <= 0:
        raise ConfigError(f"sample rate must be positive, got {sample_rate}")
    if window < 64:
        raise ConfigError(f"window must be at least 64 samples, got {window}")
    if hop < 1:
        raise ConfigError(f"hop must be at least 1 sample, got {hop}")
    if samples.size == 0:
        raise InputError("empty signal")
    if window > samples.size:
        raise InputError(f"window {window} exceeds signal length {samples.size}")

    n_frames = 1 + (samples.size - window) // hop
    win = np.hanning(window)
    # Pitch-class membership of bins 1..window//2 (DC carries no pitch).
    n_bins = window // 2
    pcs = np.array([pitch_class_of_bin(k, window, sample_rate) for k in range(1, n_bins + 1)])
    fold = np.zeros((12, n_bins))
    fold[pcs, np.arange(n_bins)] = 1.0

    raw = np.empty((12, n_frames))
    for t in range(n_frames):
        seg = samples[t * hop:t * hop + window] * win
        mags = np.abs(np.fft.rfft(seg))[1:n_bins + 1]
        raw[:, t] = fold @ mags
    return normalize_frames(raw, silence_floor(raw))


def tonic_normalize(chroma: np.ndarray, tonic_pc: int) -> np.ndarray:
    """Rotate rows so the tonic pitch class lands on row 0."""
    if not 0 <= tonic_pc <= 11:
        raise InputError(f"tonic pitch class {tonic_pc} out of range 0..11")
    chroma = np.asarray(chroma, dtype=np.float64)
    if chroma.ndim != 2 or chroma.shape[0] != 12:
        raise InputError(f"chroma must be (12, T), got {chroma.shape}")
    return np.roll(chroma, -tonic_pc, axis=0)


def read_wav_mono(path) -> tuple[np.ndarray, int]:
    """Load a PCM WAV (16-bit int or 32-bit float), downmixing to mono.

    Returns (samples in [-1, 1] float64, sample_rate).
    """
    from scipy.io import wavfile

    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise InputError(f"cannot read WAV file {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        samples = data.astype(np.float64)
    return samples, int(rate)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


def default_raga_specs(n_classes: int, seed: int, min_notes: int = 5, max_notes: int = 7,
                       gain_jitter: float = 0.2, n_labeled: int | None = None
                       ) -> list[SyntheticRagaSpec]:
    """Random raga-like class specs. Every class includes the tonic (pc 0);
    the remaining notes are drawn from the other 11 pitch classes, so
    classes overlap the way real scale families do.

    When `n_labeled` is given, classes past that index play the novel role
    in open-set experiments and are built as mixtures of two labeled parent
    classes: roughly half their non-tonic notes come from each parent's
    exclusive notes. Like mixed ragas sharing structure with two parents,
    such classes sit between trained classes rather than on top of one,
    while distinct novel classes (different parent pairs) stay separable.
    Each class draws from its own seeded stream, so a class's spec does not
    depend on how many classes are generated after it.
    """
    if n_classes < 1:
        raise ConfigError("need at least one class")
    if n_labeled is None:
        n_labeled = n_classes
    specs = []
    note_sets: list[set[int]] = []
    for cid in range(n_classes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 101, cid]))
        size = int(rng.integers(min_notes, max_notes + 1))
        if cid < n_labeled:
            # Keep labeled classes mutually distinct (symmetric difference
            # of note sets >= 4) so the closed-set problem is well posed.
            best = None
            for _ in range(300):
                others = rng.choice(np.arange(1, 12), size=size - 1, replace=False)
                candidate = {0, *others.tolist()}
                worst = min((len(candidate ^ s) for s in note_sets[:cid]), default=12)
                if best is None or worst > best[0]:
                    best = (worst, candidate)
                if worst >= 4:
                    break
            chosen = best[1]
        else:
            t = cid - n_labeled
            pa = t % n_labeled
            pb = (t + 1 + t // n_labeled) % n_labeled
            set_a = note_sets[pa] - {0}
            set_b = note_sets[pb] - {0}
            only_a = sorted(set_a - set_b)
            only_b = sorted(set_b - set_a)
            want = size - 1
            take_a = min(len(only_a), (want + 1) // 2)
            take_b = min(len(only_b), want - take_a)
            chosen = {0}
            if take_a:
                chosen.update(rng.choice(only_a, size=take_a, replace=False).tolist())
            if take_b:
                chosen.update(rng.choice(only_b, size=take_b, replace=False).tolist())
            rest = sorted(set(range(1, 12)) - chosen)
            short = want - (len(chosen) - 1)
            if short > 0 and rest:
                chosen.update(rng.choice(rest, size=min(short, len(rest)), replace=False).tolist())
        note_sets.append(chosen)
        allowed = tuple(sorted(chosen))
        weights = np.zeros(12)
        if cid < n_labeled:
            weights[list(allowed)] = rng.dirichlet(np.full(len(allowed), 2.0))
        else:
            # Split emission mass evenly between the parent sides so every
            # clip of a novel class stays ambiguous between its parents.
            half_a = sorted(chosen & set_a)
            half_b = sorted(chosen & set_b)
            leftover = sorted(chosen - set(half_a) - set(half_b))
            for group, mass in ((half_a, 0.45), (half_b, 0.45), (leftover, 0.10)):
                if group:
                    weights[group] = mass * rng.dirichlet(np.full(len(group), 3.0))
            weights /= weights.sum()
        specs.append(SyntheticRagaSpec(class_id=cid, allowed_pcs=allowed, weights=weights,
                                       tonic_pc=0, note_mean_seconds=float(rng.uniform(0.8, 1.6)),
                                       gain_jitter=gain_jitter))
    return specs


def _synth_recording(spec: SyntheticRagaSpec, n_frames: int, frame_hop: float,
                     rng: np.random.Generator, noise: float, weight_jitter: float,
                     silence_prob: float) -> np.ndarray:
    """Raw (un-normalized) chroma magnitudes for one synthetic recording."""
    gain = 1.0 + rng.uniform(-spec.gain_jitter, spec.gain_jitter)
    weights = spec.weights.copy()
    if weight_jitter > 0:
        jitter = np.exp(weight_jitter * rng.normal(size=12))
        weights = weights * jitter
        weights /= weights.sum()
    allowed = np.flatnonzero(spec.weights)
    raw = np.zeros((12, n_frames))
    t = 0
    prev_pc = None
    while t < n_frames:
        dur_s = rng.gamma(spec.note_shape, spec.note_mean_seconds / spec.note_shape)
        dur = max(1, int(round(dur_s / frame_hop)))
        dur = min(dur, n_frames - t)
        if rng.random() < silence_prob:
            t += dur  # rest: frames stay zero
            prev_pc = None
            continue
        pc = int(rng.choice(allowed, p=weights[allowed] / weights[allowed].sum()))
        amp = gain * (1.0 + 0.2 * rng.normal())
        amp = max(amp, 0.05)
        raw[pc, t:t + dur] += amp
        if prev_pc is not None and prev_pc != pc:
            raw[prev_pc, t] += 0.35 * amp  # slide from the previous note
        prev_pc = pc
        t += dur
    if noise > 0:
        raw += noise * gain * rng.random((12, n_frames))
    return raw


def synth_corpus(specs: list[SyntheticRagaSpec], recordings_per_class: int,
                 clip_seconds: float = DEFAULT_CLIP_SECONDS, seed: int = 0, *,
                 frame_hop: float = DEFAULT_FRAME_HOP, clips_per_recording: int = 4,
                 noise: float = 0.05, weight_jitter: float = 0.25,
                 silence_prob: float = 0.03) -> list[ChromaClip]:
    """Generate tonic-normalized clips directly as chroma (no audio round-trip).

    Each recording samples a note-event sequence from its class spec, gets a
    private gain and emission jitter, and is cut into `clips_per_recording`
    consecutive clips. Deterministic under `seed`: every recording derives
    its own generator from (seed, class, recording index).
    """
    if len(specs) < 2:
        raise ConfigError("need at least 2 class specs")
    if recordings_per_class < 1:
        raise ConfigError("recordings_per_class must be at least 1")
    frames_per_clip = int(round(clip_seconds / frame_hop))
    if frames_per_clip < 1:
        raise ConfigError(f"clip_seconds {clip_seconds} is shorter than one frame (hop {frame_hop})")
    class_ids = [s.class_id for s in specs]
    if len(set(class_ids)) != len(class_ids):
        raise ConfigError("class ids must be unique")

    clips: list[ChromaClip] = []
    clip_id = 0
    source_id = 0
    n_frames = clips_per_recording * frames_per_clip
    for spec in specs:
        for rec in range(recordings_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 7, spec.class_id, rec]))
            raw = _synth_recording(spec, n_frames, frame_hop, rng, noise, weight_jitter, silence_prob)
            raw = tonic_normalize(raw, spec.tonic_pc)
            frames = normalize_frames(raw, silence_floor(raw))
            for k in range(clips_per_recording):
                start = k * frames_per_clip
                clips.append(ChromaClip(clip_id=clip_id, source_id=source_id,
                                        frames=frames[:, start:start + frames_per_clip],
                                        label=spec.class_id, frame_hop=frame_hop,
                                        start_frame=start))
                clip_id += 1
            source_id += 1
    return clips


# ---------------------------------------------------------------------------
# Augmented views
# ---------------------------------------------------------------------------


def make_views(clip: ChromaClip, shift_seconds: float, gain_up: float, gain_down: float,
               context: np.ndarray) -> tuple[ChromaClip, ChromaClip]:
    """Two transformed versions of a clip: view A shifted earlier with
    gain_up, view B shifted later with gain_down, both silence-gated against
    the parent recording's floor and re-normalized per frame.

    `context` is the parent recording's (12, T) frame matrix; the clip's
    start_frame locates the window. At recording boundaries the shift
    shrinks to the available margin rather than failing.
    """
    if gain_up <= 0 or gain_down <= 0:
        raise ConfigError(f"gains must be positive, got {gain_up}, {gain_down}")
    context = np.asarray(context, dtype=np.float64)
    if context.ndim != 2 or context.shape[0] != 12:
        raise InputError(f"context must be (12, T), got {context.shape}")
    n_clip = clip.frames.shape[1]
    n_rec = context.shape[1]
    if clip.start_frame < 0 or clip.start_frame + n_clip > n_rec:
        raise InputError("clip window does not lie inside its recording context")
    shift = int(round(shift_seconds / clip.frame_hop))
    floor = silence_floor(context)

    def view(direction: int, gain: float) -> ChromaClip:
        start = clip.start_frame + direction * shift
        start = min(max(start, 0), n_rec - n_clip)
        frames = normalize_frames(context[:, start:start + n_clip] * gain, floor * gain)
        return replace(clip, frames=frames, start_frame=start)

    return view(-1, gain_up), view(+1, gain_down)


def recording_contexts(clips: list[ChromaClip]) -> dict[int, np.ndarray]:
    """Per-source frame matrices rebuilt by concatenating each source's clips
    in clip_id order. Also rewrites each clip's start_frame to match.

    This is the view-building context when the original recording is not
    around (e.g. clips loaded from a dataset file)."""
    by_source: dict[int, list[ChromaClip]] = {}
    for clip in clips:
        by_source.setdefault(clip.source_id, []).append(clip)
    contexts = {}
    for source_id, group in by_source.items():
        group.sort(key=lambda c: c.clip_id)
        offset = 0
        for clip in group:
            clip.start_frame = offset
            offset += clip.frames.shape[1]
        contexts[source_id] = np.concatenate([c.frames for c in group], axis=1)
    return contexts


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_dataset(clips: list[ChromaClip], labeled_classes, unlabeled_classes,
                  fractions: tuple[float, float, float], seed: int,
                  class_names: dict[int, str] | None = None) -> DatasetSplit:
    """Partition at source granularity: all clips of a recording land in the
    same subset, and no source straddles the labeled/unlabeled boundary.

    `fractions` are the train/val/test shares of the labeled sources per
    class (largest-remainder rounding, deterministic under `seed`)."""
    labeled = tuple(sorted(set(int(c) for c in labeled_classes)))
    unlabeled = tuple(sorted(set(int(c) for c in unlabeled_classes)))
    if set(labeled) & set(unlabeled):
        raise ConfigError(f"labeled and unlabeled class sets overlap: {set(labeled) & set(unlabeled)}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")

    sources_by_class: dict[int, list[int]] = {}
    for clip in clips:
        if clip.label is None:
            raise InputError(f"clip {clip.clip_id} has no label; cannot split by class")
        sources_by_class.setdefault(clip.label, [])
        if clip.source_id not in sources_by_class[clip.label]:
            sources_by_class[clip.label].append(clip.source_id)
    for cls in (*labeled, *unlabeled):
        if not sources_by_class.get(cls):
            raise ConfigError(f"class {cls} has zero recordings")

    by_source: dict[int, list[int]] = {}
    for clip in clips:
        by_source.setdefault(clip.source_id, []).append(clip.clip_id)

    train_ids: list[int] = []
    val_ids: list[int] = []
    test_ids: list[int] = []
    unlabeled_ids: list[int] = []
    for cls in labeled:
        sources = sorted(sources_by_class[cls])
        rng = np.random.default_rng(np.random.SeedSequence([seed, 23, cls]))
        rng.shuffle(sources)
        n = len(sources)
        raw = [f * n for f in fractions]
        counts = [int(np.floor(r)) for r in raw]
        remainders = [r - c for r, c in zip(raw, counts)]
        while sum(counts) < n:
            best = int(np.argmax(remainders))
            counts[best] += 1
            remainders[best] = -1.0
        buckets = (train_ids, val_ids, test_ids)
        pos = 0
        for bucket, count in zip(buckets, counts):
            for src in sources[pos:pos + count]:
                bucket.extend(sorted(by_source[src]))
            pos += count
    for cls in unlabeled:
        for src in sorted(sources_by_class[cls]):
            unlabeled_ids.extend(sorted(by_source[src]))

    return DatasetSplit(clips=list(clips), labeled_classes=labeled, unlabeled_classes=unlabeled,
                        train_ids=sorted(train_ids), val_ids=sorted(val_ids),
                        test_ids=sorted(test_ids), unlabeled_ids=sorted(unlabeled_ids),
                        class_names=dict(class_names or {}))
