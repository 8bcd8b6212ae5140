"""Deterministic synthetic corpus: harmonic syllable-burst audio plus CHAT transcripts.

Subjects come in matched AD / non-AD pairs sharing an age band and sex,
drawn from the demographic cells of the original training set. AD speakers
get longer pauses, slower and longer syllables, a narrower pitch range,
and shorter, vaguer transcripts with fewer picture concepts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Manifest, Recording, Subject, save_manifest, write_wav
from .errors import DataError
from .text_features import EMBED_DIM, EmbeddingTable, write_embedding_table

SAMPLE_RATE = 16000

# (age band, male count, female count) per diagnosis group
DEMOGRAPHICS = (
    ((50, 55), 1, 0),
    ((55, 60), 5, 4),
    ((60, 65), 3, 6),
    ((65, 70), 6, 10),
    ((70, 75), 6, 8),
    ((75, 80), 3, 2),
)

VOWELS = ((730, 1090), (270, 2290), (530, 1840), (570, 840), (300, 870), (660, 1720), (490, 1350))


@dataclass(frozen=True)
class VoiceParams:
    f0_base: float
    f0_range: float  # relative half-range of per-syllable pitch targets
    syllable_s: tuple  # (min, max) syllable duration
    gap_s: tuple  # intra-phrase gap between syllables
    pause_s: tuple  # inter-phrase pause
    phrase_syllables: tuple  # (min, max) syllables per phrase
    gain: float


def demographic_cells() -> list:
    cells = []
    for band, n_m, n_f in DEMOGRAPHICS:
        cells += [(band, "M")] * n_m + [(band, "F")] * n_f
    return cells


def voice_params(rng: np.random.Generator, ad: bool, sex: str) -> VoiceParams:
    base = (118.0 if sex == "M" else 205.0) * rng.uniform(0.9, 1.1)
    j = rng.uniform(0.9, 1.1)
    if ad:
        return VoiceParams(base, rng.uniform(0.04, 0.08), (0.20 * j, 0.30 * j), (0.05, 0.07),
                           (0.75 * j, 1.3 * j), (2, 5), rng.uniform(0.25, 0.45))
    return VoiceParams(base, rng.uniform(0.18, 0.26), (0.11 * j, 0.17 * j), (0.04, 0.06),
                       (0.18 * j, 0.35 * j), (6, 11), rng.uniform(0.35, 0.6))


def _syllable(rng, p: VoiceParams, sr: int) -> np.ndarray:
    dur = rng.uniform(*p.syllable_s)
    n = int(dur * sr)
    f_a = p.f0_base * (1.0 + p.f0_range * rng.uniform(-1, 1))
    f_b = f_a * (1.0 + 0.5 * p.f0_range * rng.uniform(-1, 1))
    f0 = np.linspace(f_a, f_b, n)
    phase = 2.0 * math.pi * np.cumsum(f0) / sr
    f1, f2 = VOWELS[rng.integers(len(VOWELS))]
    out = np.zeros(n)
    for k in range(1, int(3800 // max(f_a, f_b)) + 1):
        fk = k * 0.5 * (f_a + f_b)
        amp = (np.exp(-0.5 * ((fk - f1) / 140.0) ** 2) + 0.6 * np.exp(-0.5 * ((fk - f2) / 200.0) ** 2)
               + 0.08 / k)
        out += amp * np.sin(k * phase + rng.uniform(0, 2 * math.pi))
    env = np.sin(np.linspace(0.0, math.pi, n)) ** 0.6
    out *= env
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def synth_audio(rng: np.random.Generator, p: VoiceParams, duration: float, sr: int = SAMPLE_RATE) -> Recording:
    """Phrases of syllable bursts separated by pauses, over a faint noise floor."""
    total = int(duration * sr)
    x = np.zeros(total)
    t = int(rng.uniform(0.2, 0.4) * sr)
    while t < total - int(0.4 * sr):
        for _ in range(rng.integers(p.phrase_syllables[0], p.phrase_syllables[1] + 1)):
            syl = _syllable(rng, p, sr) * p.gain * rng.uniform(0.8, 1.0)
            end = min(total, t + syl.size)
            x[t:end] += syl[: end - t]
            t = end + int(rng.uniform(*p.gap_s) * sr)
            if t >= total:
                break
        t += int(rng.uniform(*p.pause_s) * sr)
    x += rng.normal(0.0, 1e-3, total)
    return Recording(np.clip(x, -1.0, 1.0), sr)


# ---------------------------------------------------------------- transcripts

CONCEPT_WORDS = ("kitchen", "mother", "stool", "boy", "girl")
AGENTS = ("boy", "girl", "mother", "woman", "kid", "sister", "brother", "lady")
OBJECTS = ("cookie", "cookies", "jar", "sink", "water", "dishes", "window", "curtains", "plate",
           "cupboard", "floor", "counter", "garden", "stool", "kitchen", "dish")
VERBS = ("taking", "falling", "washing", "running", "overflowing", "reaching", "drying", "standing",
         "holding", "getting", "looking", "tipping", "spilling", "laughing", "giving", "climbing")
ADJECTIVES = ("little", "big", "wet", "dirty", "full", "tall", "young", "open")
PREPS = ("on", "of", "in", "at", "to", "from", "with", "over", "out")
VAGUE = ("he", "she", "it", "they", "that", "this", "thing", "something", "there", "know", "what",
         "oh", "well", "yes", "going", "got", "things", "stuff", "doing", "is")
FUNCTION = ("the", "a", "and", "is", "are")
VOCAB = tuple(sorted(set(AGENTS + OBJECTS + VERBS + ADJECTIVES + PREPS + VAGUE + FUNCTION + CONCEPT_WORDS)))

INV_PROMPTS = (
    "just tell me everything you see happening in that picture .",
    "anything else ?",
    "mhm .",
    "what else is going on ?",
    "okay .",
)


def _np(rng, noun=None):
    words = [FUNCTION[rng.integers(2)]]
    if rng.random() < 0.4:
        words.append(ADJECTIVES[rng.integers(len(ADJECTIVES))])
    words.append(noun or OBJECTS[rng.integers(len(OBJECTS))])
    return words


def healthy_sentence(rng, concept=None) -> list:
    agent = concept if concept in AGENTS else AGENTS[rng.integers(len(AGENTS))]
    words = _np(rng, agent) + ["is", VERBS[rng.integers(len(VERBS))]]
    obj = concept if concept is not None and concept not in AGENTS else None
    words += [PREPS[rng.integers(len(PREPS))]] + _np(rng, obj)
    if rng.random() < 0.5:
        words += ["and"] + _np(rng) + ["is", VERBS[rng.integers(len(VERBS))]]
    return words


def impaired_sentence(rng, concept=None) -> list:
    n = int(rng.integers(3, 6))
    words = [VAGUE[rng.integers(len(VAGUE))] for _ in range(n)]
    if concept is not None:
        words[int(rng.integers(n))] = concept
    elif rng.random() < 0.25:
        words[int(rng.integers(n))] = OBJECTS[rng.integers(len(OBJECTS))]
    return words


def _annotate(rng, words: list) -> str:
    """Decorate a clean word list with CHAT fillers, retracings and events."""
    out = []
    for i, w in enumerate(words):
        r = rng.random()
        if r < 0.06:
            out.append("&uh")
        elif r < 0.09:
            out.append("&=laughs")
        out.append(w)
        if i + 1 < len(words) and rng.random() < 0.04:
            out.append("[/]")
            out.append(w)  # the retraced repetition is itself a spoken word
    return " ".join(out) + " ."


def synth_transcript(rng: np.random.Generator, ad: bool, subject_id: str, sex: str, age: int) -> str:
    n_utt = int(rng.integers(5, 9)) if ad else int(rng.integers(10, 15))
    concepts = [c for c in CONCEPT_WORDS if rng.random() < 0.3] if ad else list(CONCEPT_WORDS)
    lines = [
        "@UTF8", "@Begin", "@Languages:\teng",
        "@Participants:\tPAR Participant, INV Investigator",
        f"@ID:\teng|synthetic|PAR|{age};|{'male' if sex == 'M' else 'female'}|"
        f"{'ProbableAD' if ad else 'Control'}||Participant|||",
        "@ID:\teng|synthetic|INV|||||Investigator|||",
        f"@Media:\t{subject_id}, audio",
        f"*INV:\t{INV_PROMPTS[0]}",
    ]
    for k in range(n_utt):
        c = concepts[k] if k < len(concepts) else None
        words = impaired_sentence(rng, c) if ad else healthy_sentence(rng, c)
        text = _annotate(rng, words)
        if len(text) > 60 and rng.random() < 0.3:
            cut = text.rfind(" ", 0, len(text) // 2)
            text = text[:cut] + "\n\t" + text[cut + 1:]
        lines.append(f"*PAR:\t{text}")
        lines.append("%mor:\t" + " ".join(f"x|{w}" for w in words) + " .")
        if rng.random() < 0.3:
            lines.append(f"*INV:\t{INV_PROMPTS[1 + rng.integers(len(INV_PROMPTS) - 1)]}")
    lines.append("@End")
    return "\n".join(lines) + "\n"


def synth_embedding_table(seed: int, vocab=VOCAB, dim: int = EMBED_DIM) -> EmbeddingTable:
    """Group centroids plus per-word noise, so related words lie close together."""
    rng = np.random.default_rng([seed, 99991])
    groups = {"agent": AGENTS, "object": OBJECTS, "verb": VERBS, "adj": ADJECTIVES, "prep": PREPS,
              "vague": VAGUE, "function": FUNCTION}
    centroids = {g: rng.normal(0.0, 1.0, dim) for g in sorted(groups)}
    vocab_sorted = sorted(vocab)
    vectors = np.empty((len(vocab_sorted), dim))
    for i, w in enumerate(vocab_sorted):
        g = next(g for g in sorted(groups) if w in groups[g])
        vectors[i] = centroids[g] + rng.normal(0.0, 0.4, dim)
    vectors = np.round(vectors, 6)  # matches the text precision of the written table
    return EmbeddingTable({w: i for i, w in enumerate(vocab_sorted)}, vectors)


# ---------------------------------------------------------------- corpus


def generate_synthetic_corpus(n_subjects: int, seed: int, out_dir, n_background: int = 6,
                              duration: float = 10.0) -> Manifest:
    """Write wav/cha pairs, background audio, an embedding table and ``manifest.json``."""
    if n_subjects < 4 or n_subjects % 2:
        raise DataError(f"n_subjects must be even and at least 4, got {n_subjects}")
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    cells = demographic_cells()
    n_pairs = n_subjects // 2
    subjects = []
    for k in range(n_pairs):
        band, sex = cells[(k * len(cells)) // n_pairs]
        for j, label in enumerate(("AD", "nonAD")):
            idx = 2 * k + j
            sid = f"S{idx + 1:03d}"
            rng = np.random.default_rng([seed, idx])
            age = int(rng.integers(band[0], band[1]))
            ad = label == "AD"
            rec = synth_audio(rng, voice_params(rng, ad, sex), duration * rng.uniform(0.9, 1.1))
            wav = out / "audio" / f"{sid}.wav"
            cha = out / "transcripts" / f"{sid}.cha"
            write_wav(wav, rec)
            cha.write_text(synth_transcript(rng, ad, sid, sex, age))
            subjects.append(Subject(sid, label, sex, band, wav, cha))
    background = []
    if n_background:
        (out / "background").mkdir(exist_ok=True)
    for b in range(n_background):
        rng = np.random.default_rng([seed, 100000 + b])
        rec = synth_audio(rng, voice_params(rng, b % 2 == 0, "MF"[(b // 2) % 2]), duration)
        path = out / "background" / f"bg{b:02d}.wav"
        write_wav(path, rec)
        background.append(path)
    table_path = out / "embeddings_50d.txt"
    write_embedding_table(table_path, synth_embedding_table(seed))
    manifest = Manifest(tuple(subjects), root=out, background_audio=tuple(background),
                        embedding_table=table_path,
                        extra={"generator": "synthetic", "seed": int(seed), "n_subjects": int(n_subjects)})
    save_manifest(manifest, out / "manifest.json")
    return manifest
