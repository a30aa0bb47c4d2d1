"""Deterministic synthetic event clips and multi-event "programmes".

Stands in for an event-tagging training set and a genre-labelled programme
archive so that every stage of the pipeline can be trained and checked on a
single CPU. Every output is a pure function of its arguments and seed.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, dump_json
from .errors import ContractViolation, InvalidSignatureError
from .genres import GENRES, genre_slug
from .ingest import SAMPLE_RATE, SEGMENT_SECONDS, Waveform, write_wav

KINDS = ("tone", "harmonic", "noise_band", "chirp", "am_noise")
NYQUIST = SAMPLE_RATE / 2
SIGNAL_RMS = 0.1
SNR_DB = 20.0


@dataclass(frozen=True)
class EventSignature:
    event_id: int
    kind: str
    center_hz: float
    bandwidth_hz: float = 0.0
    mod_rate_hz: float = 0.0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSignatureError(f"event {self.event_id}: unknown kind {self.kind!r}")
        lo = self.center_hz - self.bandwidth_hz / 2
        hi = self.center_hz + self.bandwidth_hz / 2
        if not (0 < lo and hi < NYQUIST):
            raise InvalidSignatureError(
                f"event {self.event_id}: band [{lo:.1f}, {hi:.1f}] Hz leaves (0, {NYQUIST:.0f}) Hz"
            )
        if self.kind in ("chirp", "am_noise") and self.mod_rate_hz <= 0:
            raise InvalidSignatureError(f"event {self.event_id}: {self.kind} needs mod_rate_hz > 0")


@dataclass
class GenreRecipe:
    """Event mixture and length range for one genre.

    Each clip has one foreground event plus up to ``max_overlaps`` quieter
    events, each slot filled with probability ``overlap`` and mixed
    ``overlap_gain_db`` below the foreground. Overlapping events come from
    ``overlap_mixture`` (the event mixture when unset) without repeating an
    event already in the clip.
    """

    genre: str
    event_mixture: np.ndarray
    duration_range: tuple[float, float] = (60.0, 120.0)
    overlap: float = 0.0
    overlap_gain_db: float = -6.0
    overlap_mixture: np.ndarray | None = None
    max_overlaps: int = 1

    def __post_init__(self):
        self.event_mixture = np.asarray(self.event_mixture, dtype=np.float64)
        if self.overlap_mixture is None:
            self.overlap_mixture = self.event_mixture.copy()
        self.overlap_mixture = np.asarray(self.overlap_mixture, dtype=np.float64)
        for name in ("event_mixture", "overlap_mixture"):
            mix = getattr(self, name)
            if mix.ndim != 1 or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
                raise ContractViolation(f"{self.genre}: {name} must be a probability vector")
        if len(self.overlap_mixture) != len(self.event_mixture):
            raise ContractViolation(f"{self.genre}: mixtures cover different event counts")
        if not 0.0 <= self.overlap <= 1.0:
            raise ContractViolation(f"{self.genre}: overlap must lie in [0, 1]")
        if self.max_overlaps < 0:
            raise ContractViolation(f"{self.genre}: max_overlaps must be >= 0")
        lo, hi = self.duration_range
        if lo < SEGMENT_SECONDS or hi < lo:
            raise ContractViolation(
                f"{self.genre}: duration_range must satisfy {SEGMENT_SECONDS} <= min <= max"
            )


def default_signatures(n_events: int = 16) -> list[EventSignature]:
    """Log-spaced event centres from 180 Hz to 9 kHz, cycling through the kinds."""
    centres = np.geomspace(180.0, 9000.0, n_events)
    sigs = []
    for i, fc in enumerate(centres):
        kind = KINDS[i % len(KINDS)]
        bw = {"tone": 0.0, "harmonic": 0.0, "noise_band": 0.25 * fc,
              "chirp": 0.3 * fc, "am_noise": 0.3 * fc}[kind]
        rate = {"chirp": 1.0, "am_noise": 4.0}.get(kind, 0.0)
        sigs.append(EventSignature(i, kind, round(float(fc), 3), round(float(bw), 3), rate))
    return sigs


# Toy corpus over 16 events: (foreground weights, overlapping-bed weights) per
# genre. Event 0 is a "speech" stand-in that dominates most foregrounds, so
# the top-ranked event alone separates genres poorly and the quieter bed
# events carry much of the genre identity.
_TOY_MIXTURES = {
    "Children's": ({0: 0.5, 5: 0.25, 6: 0.25}, {7: 0.6, 6: 0.4}),
    "Drama": ({0: 0.6, 8: 0.4}, {9: 0.6, 8: 0.4}),
    "Factual": ({0: 0.6, 10: 0.4}, {11: 0.6, 10: 0.4}),
    "Music": ({12: 0.5, 13: 0.3, 0: 0.2}, {14: 0.6, 13: 0.4}),
    "Sport": ({0: 0.5, 15: 0.5}, {1: 0.6, 15: 0.4}),
    "Weather": ({0: 0.8, 4: 0.2}, {3: 0.6, 4: 0.4}),
    "Comedy": ({0: 0.6, 2: 0.4}, {2: 0.5, 9: 0.5}),
    "Entertainment": ({0: 0.5, 12: 0.3, 2: 0.2}, {7: 0.5, 2: 0.5}),
    "News": ({0: 0.8, 1: 0.2}, {3: 0.5, 1: 0.5}),
}


def default_recipes(n_events: int = 16, background: float = 0.02,
                    duration_range: tuple[float, float] = (60.0, 120.0),
                    overlap: float = 0.8, overlap_gain_db: float = -3.0,
                    max_overlaps: int = 2) -> list[GenreRecipe]:
    """Nine genre recipes over ``n_events`` events (toy defaults need >= 16).

    Every event keeps ``background`` weight in both mixtures before
    normalisation.
    """
    if n_events < 16:
        raise ContractViolation("the built-in recipes need at least 16 events")
    recipes = []
    for genre in GENRES:
        mixes = []
        for weights in _TOY_MIXTURES[genre]:
            mix = np.full(n_events, background)
            for ev, w in weights.items():
                mix[ev] += w
            mixes.append(mix / mix.sum())
        recipes.append(GenreRecipe(genre, mixes[0], duration_range, overlap, overlap_gain_db,
                                   mixes[1], max_overlaps))
    return recipes


def _band_noise(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, n)


def _render(sig: EventSignature, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    phase = rng.uniform(0, 2 * np.pi)
    fc, bw = sig.center_hz, sig.bandwidth_hz
    if sig.kind == "tone":
        return np.sin(2 * np.pi * fc * t + phase)
    if sig.kind == "harmonic":
        out = np.zeros(n)
        for h in range(1, 7):
            if h * fc >= NYQUIST * 0.95:
                break
            out += np.sin(2 * np.pi * h * fc * t + h * phase) / h
        return out
    if sig.kind == "noise_band":
        return _band_noise(rng, n, fc - bw / 2, fc + bw / 2)
    if sig.kind == "chirp":
        # Sawtooth sweep across the band, repeating at mod_rate_hz.
        sweep = (t * sig.mod_rate_hz + rng.uniform()) % 1.0
        inst = fc - bw / 2 + bw * sweep
        return np.sin(2 * np.pi * np.cumsum(inst) / SAMPLE_RATE + phase)
    if sig.kind == "am_noise":
        carrier = _band_noise(rng, n, fc - bw / 2, fc + bw / 2)
        env = 1.0 - 0.9 * 0.5 * (1 + np.cos(2 * np.pi * sig.mod_rate_hz * t + phase))
        return carrier * env
    raise InvalidSignatureError(f"unknown kind {sig.kind!r}")


def gen_event_clip(sig: EventSignature, duration: float, seed: int) -> Waveform:
    """One clip of ``sig`` plus white noise 20 dB below the signal."""
    if duration <= 0:
        raise ContractViolation("duration must be positive")
    sig.validate()
    n = int(round(duration * SAMPLE_RATE))
    if n < 1:
        raise ContractViolation("duration shorter than one sample")
    rng = np.random.default_rng([seed, sig.event_id])
    x = _render(sig, n, rng)
    gain = rng.uniform(0.5, 1.0) * SIGNAL_RMS
    x *= gain / max(np.sqrt(np.mean(x * x)), 1e-12)
    noise = rng.standard_normal(n)
    noise *= gain * 10 ** (-SNR_DB / 20) / np.sqrt(np.mean(noise * noise))
    y = np.clip(x + noise, -1.0, 1.0)
    return Waveform(y, SAMPLE_RATE, f"event{sig.event_id}")


def _event_index(signatures: list[EventSignature]) -> dict[int, EventSignature]:
    by_id = {}
    for sig in signatures:
        if sig.event_id in by_id:
            raise InvalidSignatureError(f"duplicate event_id {sig.event_id}")
        sig.validate()
        by_id[sig.event_id] = sig
    return by_id


def _draw_extra(rng: np.random.Generator, mix: np.ndarray, taken: list[int], slots: int,
                p: float) -> list[int]:
    out = []
    for _ in range(slots):
        if rng.random() >= p:
            continue
        rest = mix.copy()
        rest[taken + out] = 0.0
        if rest.sum() > 0:
            out.append(int(rng.choice(len(mix), p=rest / rest.sum())))
    return out


def draw_programme(recipe: GenreRecipe, rng: np.random.Generator) -> tuple[np.ndarray, list[list[int]]]:
    """Foreground event ids and the overlapping event ids of every clip.

    A programme is a run of whole 5 s clips whose foreground events are
    drawn i.i.d. from the recipe mixture.
    """
    lo, hi = recipe.duration_range
    n_min = int(np.ceil(lo / SEGMENT_SECONDS))
    n_max = max(n_min, int(hi // SEGMENT_SECONDS))
    n_clips = int(rng.integers(n_min, n_max + 1))
    events = rng.choice(len(recipe.event_mixture), size=n_clips, p=recipe.event_mixture)
    extras = [_draw_extra(rng, recipe.overlap_mixture, [int(ev)], recipe.max_overlaps, recipe.overlap)
              for ev in events]
    return events, extras


@dataclass
class DatasetManifest:
    """Rows of (programme_id, path, genre); paths are relative to ``root``."""

    rows: list[tuple[str, str, str]] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self):
        return len(self.rows)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["programme_id", "path", "genre"])
        writer.writerows(self.rows)
        return buf.getvalue()

    def write(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def read(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["programme_id", "path", "genre"]:
                from .errors import FormatError

                raise FormatError(f"{path}: expected header programme_id,path,genre, got {header}")
            rows = [tuple(r) for r in reader if r]
        return cls(rows, path.parent)


def gen_corpus(recipes: list[GenreRecipe], programmes_per_genre: int, seed: int,
               out_dir: str | os.PathLike,
               signatures: list[EventSignature] | None = None) -> DatasetManifest:
    """Write one PCM16 WAV per programme plus ``manifest.csv`` and ``segments.csv``.

    ``segments.csv`` records the ground-truth event of every 5 s clip.
    """
    if len(recipes) < 2:
        raise ContractViolation("a corpus needs at least two genre recipes")
    if programmes_per_genre < 1:
        raise ContractViolation("programmes_per_genre must be >= 1")
    n_events = len(recipes[0].event_mixture)
    if any(len(r.event_mixture) != n_events for r in recipes):
        raise ContractViolation("all recipes must share one event vocabulary")
    sigs = _event_index(signatures if signatures is not None else default_signatures(n_events))
    missing = set(range(n_events)) - set(sigs)
    if missing:
        raise ContractViolation(f"no signature for event ids {sorted(missing)}")

    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest([], out_dir)
    truth = ["programme_id,index,event_id,overlap_event_ids\n"]
    clip_n = SEGMENT_SECONDS * SAMPLE_RATE
    for g, recipe in enumerate(recipes):
        slug = genre_slug(recipe.genre)
        gain2 = 10 ** (recipe.overlap_gain_db / 20)
        for i in range(programmes_per_genre):
            rng = np.random.default_rng([seed, g, i])
            events, extras = draw_programme(recipe, rng)
            pid = f"{slug}_{i:03d}"
            audio = np.empty(len(events) * clip_n)
            for c, (ev, more) in enumerate(zip(events, extras)):
                clip = gen_event_clip(sigs[int(ev)], SEGMENT_SECONDS, _clip_seed(seed, g, i, c)).samples
                for slot, ev2 in enumerate(more, start=1):
                    extra = gen_event_clip(sigs[ev2], SEGMENT_SECONDS, _clip_seed(seed, g, i, c, slot))
                    clip = clip + gain2 * extra.samples
                audio[c * clip_n:(c + 1) * clip_n] = np.clip(clip, -1.0, 1.0)
                truth.append(f"{pid},{c},{int(ev)},{' '.join(map(str, more))}\n")
            rel = f"audio/{pid}.wav"
            write_wav(out_dir / rel, audio)
            manifest.rows.append((pid, rel, recipe.genre))
    manifest.write(out_dir / "manifest.csv")
    atomic_write_text(out_dir / "segments.csv", "".join(truth))
    return manifest


def _clip_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def gen_clip_set(signatures: list[EventSignature], clips_per_event: int, seed: int,
                 out_dir: str | os.PathLike, overlap: float = 0.0, max_overlaps: int = 2,
                 overlap_gain_db: tuple[float, float] = (-12.0, 0.0)) -> list[tuple]:
    """Labelled 5 s clips for event-model training (``clips.csv``).

    Each clip is built around one event. Up to ``max_overlaps`` other events
    are added, each slot filled with probability ``overlap`` at a gain drawn
    uniformly (in dB) from ``overlap_gain_db``. The ``targets`` column gives
    every event's amplitude share, usable as a soft training target.
    """
    if clips_per_event < 1:
        raise ContractViolation("clips_per_event must be >= 1")
    if not 0.0 <= overlap <= 1.0:
        raise ContractViolation("overlap must lie in [0, 1]")
    sigs = _event_index(signatures)
    ids = sorted(sigs)
    uniform = np.zeros(max(ids) + 1)
    uniform[ids] = 1.0 / len(ids)
    out_dir = Path(out_dir)
    rows = []
    for ev in ids:
        for j in range(clips_per_event):
            clip = gen_event_clip(sigs[ev], SEGMENT_SECONDS, seed=_clip_seed(seed, 10_000 + ev, j)).samples
            rng = np.random.default_rng([seed, 20_000 + ev, j])
            more = _draw_extra(rng, uniform, [ev], max_overlaps, overlap)
            amps = {ev: 1.0}
            for slot, ev2 in enumerate(more, start=1):
                g = 10 ** (rng.uniform(*overlap_gain_db) / 20)
                extra = gen_event_clip(sigs[ev2], SEGMENT_SECONDS, seed=_clip_seed(seed, 10_000 + ev, j, slot))
                clip = clip + g * extra.samples
                amps[ev2] = g
            total = sum(amps.values())
            targets = {e: a / total for e, a in amps.items()}
            rel = f"clips/event{ev:03d}_{j:04d}.wav"
            write_wav(out_dir / rel, np.clip(clip, -1.0, 1.0))
            rows.append((f"event{ev:03d}_{j:04d}", rel, ev, targets))
    text = "clip_id,path,event,targets\n" + "".join(
        f"{c},{p},{e},{' '.join(f'{k}:{w!r}' for k, w in t.items())}\n" for c, p, e, t in rows)
    atomic_write_text(out_dir / "clips.csv", text)
    return rows


def read_clip_manifest(path: str | os.PathLike) -> list[tuple[Path, int, dict[int, float]]]:
    """``(path, event, targets)`` rows; ``targets`` maps event id to its share."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            ev = int(r["event"])
            text = (r.get("targets") or "").split()
            targets = {int(k): float(w) for k, w in (t.split(":") for t in text)} or {ev: 1.0}
            out.append((path.parent / r["path"], ev, targets))
    return out


def clip_targets(rows, n_events: int) -> np.ndarray:
    """Soft target matrix for ``read_clip_manifest`` output."""
    t = np.zeros((len(rows), n_events))
    for i, (_, _, targets) in enumerate(rows):
        for ev, w in targets.items():
            if not 0 <= ev < n_events:
                raise ContractViolation(f"event id {ev} outside [0, {n_events})")
            t[i, ev] = w
    return t


def save_recipes(path: str | os.PathLike, recipes: list[GenreRecipe],
                 signatures: list[EventSignature]) -> None:
    doc = {
        "signatures": [asdict(s) for s in signatures],
        "recipes": [
            {"genre": r.genre, "event_mixture": r.event_mixture.tolist(),
             "duration_range": list(r.duration_range), "overlap": r.overlap,
             "overlap_gain_db": r.overlap_gain_db, "overlap_mixture": r.overlap_mixture.tolist(),
             "max_overlaps": r.max_overlaps}
            for r in recipes
        ],
    }
    atomic_write_text(path, dump_json(doc))


def load_recipes(path: str | os.PathLike) -> tuple[list[GenreRecipe], list[EventSignature]]:
    with open(path) as fh:
        doc = json.load(fh)
    sigs = [EventSignature(**s) for s in doc["signatures"]]
    recipes = [GenreRecipe(r["genre"], r["event_mixture"], tuple(r["duration_range"]),
                           r.get("overlap", 0.0), r.get("overlap_gain_db", -6.0),
                           r.get("overlap_mixture"), r.get("max_overlaps", 1))
               for r in doc["recipes"]]
    return recipes, sigs
