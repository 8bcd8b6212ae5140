"""Word-embedding tables, intervention padding and linguistic features."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .chat import Transcript
from .errors import DataError, EmbeddingTableError

log = logging.getLogger(__name__)

EMBED_DIM = 50
MAX_TOKENS = 20
CONCEPTS = ("kitchen", "mother", "stool", "boy", "girl")
LINGUISTIC_NAMES = (
    "n_interventions",
    "words_per_intervention",
    "mean_word_length",
    "n_unique_words",
    "concept_kitchen",
    "concept_mother",
    "concept_stool",
    "concept_boy",
    "concept_girl",
    "freq_verbs",
    "freq_nouns",
    "freq_adjectives",
    "freq_pronouns",
)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    vocab: dict
    vectors: np.ndarray

    @property
    def size(self) -> int:
        return len(self.vocab)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def oov_id(self) -> int:
        return self.size

    @property
    def pad_id(self) -> int:
        return self.size + 1

    def lookup_matrix(self) -> np.ndarray:
        """Vectors plus zero rows for the OOV and padding ids."""
        return np.vstack([self.vectors, np.zeros((2, self.dim))])

    def id(self, token: str) -> int:
        return self.vocab.get(token, self.oov_id)


def load_embedding_table(path, dim: int = EMBED_DIM) -> EmbeddingTable:
    """Read a GloVe-style text table: ``token v1 ... v_dim`` per line."""
    vocab: dict = {}
    rows = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0].strip():
                continue
            if len(parts) != dim + 1:
                raise EmbeddingTableError(f"expected 1 token + {dim} values, found {len(parts) - 1} values", lineno)
            tok = parts[0]
            try:
                vec = [float(v) for v in parts[1:]]
            except ValueError:
                raise EmbeddingTableError("non-numeric vector entry", lineno) from None
            if tok in vocab:
                log.warning("duplicate token %r on line %d ignored", tok, lineno)
                continue
            vocab[tok] = len(rows)
            rows.append(vec)
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(vocab, vectors)


def write_embedding_table(path, table: EmbeddingTable) -> None:
    inv = sorted(table.vocab.items(), key=lambda kv: kv[1])
    with open(Path(path), "w", encoding="utf-8") as fh:
        for tok, i in inv:
            fh.write(tok + " " + " ".join(f"{v:.6f}" for v in table.vectors[i]) + "\n")


@dataclass(frozen=True, eq=False)
class PaddedIntervention:
    token_ids: np.ndarray
    mask: np.ndarray

    @property
    def empty(self) -> bool:
        return not self.mask.any()


def pad_intervention(tokens, table: EmbeddingTable, length: int = MAX_TOKENS) -> PaddedIntervention:
    """Left-pad to ``length`` ids, keeping the last ``length`` tokens when longer."""
    tokens = list(tokens)[-length:]
    ids = np.full(length, table.pad_id, dtype=np.int64)
    mask = np.zeros(length, dtype=bool)
    if tokens:
        ids[length - len(tokens):] = [table.id(t) for t in tokens]
        mask[length - len(tokens):] = True
    return PaddedIntervention(ids, mask)


# ---------------------------------------------------------------- POS tagging


def load_pos_lexicon(path=None) -> dict:
    if path is None:
        text = resources.files("cadence").joinpath("data/pos_lexicon.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lex = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, tag = line.split()
        lex.setdefault(word, tag)
    return lex


_DEFAULT_LEXICON = None


def default_lexicon() -> dict:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = load_pos_lexicon()
    return _DEFAULT_LEXICON


def pos_tag(token: str, lexicon: dict) -> str:
    """Lexicon lookup, then suffix rules; unknown words are nouns."""
    tag = lexicon.get(token)
    if tag is not None:
        return tag
    if token.endswith("ly"):
        return "ADV"
    if token.endswith(("ing", "ed")):
        return "VERB"
    if token.endswith(("ness", "tion", "ment", "ity")):
        return "NOUN"
    if token.endswith(("ful", "ous", "ive", "able", "ible", "ish", "less")):
        return "ADJ"
    if token.endswith("s") and lexicon.get(token[:-1]) is not None:
        return lexicon[token[:-1]]
    return "NOUN"


def _has_concept(tokens: set, concept: str) -> bool:
    return concept in tokens or concept + "s" in tokens


def compute_linguistic(transcript: Transcript, pos_lexicon: dict | None = None) -> np.ndarray:
    """The 13 linguistic features of a transcript, in ``LINGUISTIC_NAMES`` order."""
    if not transcript.interventions:
        raise DataError(f"transcript {transcript.subject_id!r} has no participant interventions")
    lex = default_lexicon() if pos_lexicon is None else pos_lexicon
    tokens = transcript.tokens
    n_int = len(transcript.interventions)
    n_tok = len(tokens)
    vocab = set(tokens)
    tags = [pos_tag(t, lex) for t in tokens]
    counts = {tag: tags.count(tag) for tag in ("VERB", "NOUN", "ADJ", "PRON")}
    feats = [
        float(n_int),
        n_tok / n_int,
        float(np.mean([len(t) for t in tokens])),
        float(len(vocab)),
        *[1.0 if _has_concept(vocab, c) else 0.0 for c in CONCEPTS],
        counts["VERB"] / n_tok,
        counts["NOUN"] / n_tok,
        counts["ADJ"] / n_tok,
        counts["PRON"] / n_tok,
    ]
    return np.asarray(feats)


def write_feature_csv(path, names, rows: dict) -> None:
    """CSV with a ``subject_id`` column followed by ``names``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", *names])
        for sid in sorted(rows):
            w.writerow([sid, *[repr(float(v)) for v in rows[sid]]])


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """Column min-max scaling to [0, 1] fitted on training rows.

    Constant training columns map to 0.5; values outside the training range
    are clamped.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, train_matrix) -> "MinMaxScaler":
        X = np.asarray(train_matrix, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("min-max scaler needs a non-empty 2-d training matrix")
        return cls(X.min(axis=0), X.max(axis=0))

    @property
    def constant(self) -> np.ndarray:
        return self.hi <= self.lo

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        span = np.where(self.constant, 1.0, self.hi - self.lo)
        out = np.clip((X - self.lo) / span, 0.0, 1.0)
        return np.where(self.constant, 0.5, out)

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return np.where(self.constant, self.lo, self.lo + Z * (self.hi - self.lo))


def minmax_scale(train_matrix) -> MinMaxScaler:
    return MinMaxScaler.fit(train_matrix)
