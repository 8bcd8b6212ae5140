"""CHAT transcript parsing and participant-word extraction.

Grammar handled (line oriented)::

    header      := '@' key [':' TAB value]
    utterance   := '*' CODE ':' TAB text
    dependent   := '%' name ':' TAB text        (attaches to last utterance)
    continuation:= (TAB | SPACE) text           (appends to previous line)
    blank lines are ignored

Cleaning of utterance text for word extraction, applied in order:

1. timing bullets (``\\x15...\\x15``) removed
2. bracket codes ``[...]`` removed (nested brackets allowed); when
   ``keep_retraced`` is False, ``[/]``, ``[//]`` and ``[///]`` also delete
   the preceding word or ``<...>`` group
3. angle brackets removed, their words kept
4. tokens starting with ``&`` (fillers, ``&=`` events), ``+`` (linkers and
   terminators), ``0`` (omitted words) dropped; ``xxx``/``yyy``/``www``
   dropped
5. ``@`` form suffixes stripped, ``(...)`` around omitted sounds opened,
   ``:`` lengthening and internal compounding ``+`` removed
6. lowercase; only letters, apostrophes and internal hyphens kept
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ChatParseError

SPEAKER_RE = re.compile(r"^\*([A-Z0-9]{3}):(?:\t|\s|$)(.*)$", re.S)
DEPENDENT_RE = re.compile(r"^%([A-Za-z0-9]+):(?:\t|\s|$)(.*)$", re.S)
HEADER_RE = re.compile(r"^@([^:\t]+)(?::\s*(.*))?$", re.S)
BULLET_RE = re.compile("\x15[^\x15]*\x15")
UNINTELLIGIBLE = {"xxx", "yyy", "www", "xx", "yy"}
RETRACE_CODES = {"[/]", "[//]", "[///]", "[/?]", "[/-]"}
PUNCT_TOKENS = {".", "?", "!", ",", ";", "„", "‡", "(.)", "(..)", "(...)", ":", "(", ")"}


@dataclass(frozen=True)
class Utterance:
    speaker: str
    raw_text: str
    dependent_tiers: dict = field(default_factory=dict)
    line: int = 0


@dataclass(frozen=True)
class ChatDocument:
    headers: tuple = ()  # (key, value) pairs
    utterances: tuple = ()

    def header(self, key: str, default=None):
        for k, v in self.headers:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class Transcript:
    subject_id: str
    interventions: tuple  # tuple of tuples of tokens

    def to_json(self) -> str:
        return json.dumps({"subject_id": self.subject_id,
                           "interventions": [list(i) for i in self.interventions]})

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        doc = json.loads(text)
        return cls(doc["subject_id"], tuple(tuple(i) for i in doc["interventions"]))

    @property
    def tokens(self) -> list:
        return [t for i in self.interventions for t in i]


def parse_chat(text: str) -> ChatDocument:
    """Parse CHAT text into headers and utterances with dependent tiers."""
    headers: list[list] = []
    utterances: list[dict] = []
    last = None  # ("header", idx) | ("utt", idx) | ("dep", idx, name)

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("﻿"):
            line = line[1:]
        if not line.strip():
            continue
        head = line[0]
        if head in " \t":
            if last is None:
                raise ChatParseError("continuation line before any tier", lineno)
            cont = " " + line.strip()
            if last[0] == "header":
                headers[last[1]][1] = (headers[last[1]][1] or "") + cont
            elif last[0] == "utt":
                utterances[last[1]]["text"] += cont
            else:
                utterances[last[1]]["deps"][last[2]] += cont
        elif head == "@":
            m = HEADER_RE.match(line)
            if not m:
                raise ChatParseError(f"malformed header {line!r}", lineno)
            headers.append([m.group(1).strip(), m.group(2).strip() if m.group(2) is not None else None])
            last = ("header", len(headers) - 1)
        elif head == "*":
            m = SPEAKER_RE.match(line)
            if not m:
                raise ChatParseError(f"malformed speaker tier {line!r}; expected '*XXX:<TAB>text'", lineno)
            utterances.append({"speaker": m.group(1), "text": m.group(2).strip(), "deps": {}, "line": lineno})
            last = ("utt", len(utterances) - 1)
        elif head == "%":
            if not utterances:
                raise ChatParseError("dependent tier before any utterance", lineno)
            m = DEPENDENT_RE.match(line)
            if not m:
                raise ChatParseError(f"malformed dependent tier {line!r}", lineno)
            name = "%" + m.group(1)
            utterances[-1]["deps"][name] = m.group(2).strip()
            last = ("dep", len(utterances) - 1, name)
        else:
            raise ChatParseError(f"unrecognized line prefix {head!r}", lineno)

    return ChatDocument(
        headers=tuple((k, v) for k, v in headers),
        utterances=tuple(Utterance(u["speaker"], u["text"], dict(u["deps"]), u["line"]) for u in utterances),
    )


def _lex(text: str) -> list:
    """Split into words, ``<``/``>`` marks and whole (possibly nested) bracket codes."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == "[":
            depth, j = 0, i
            while j < n:
                if text[j] == "[":
                    depth += 1
                elif text[j] == "]":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            out.append(("code", text[i:j + 1]))
            i = j + 1
        elif ch in "<>":
            out.append((ch, ch))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "[<>":
                j += 1
            out.append(("word", text[i:j]))
            i = j
    return out


def _group_tree(tokens: list):
    """Nest ``<...>`` groups; returns a list of words, codes and sublists."""
    stack = [[]]
    for kind, val in tokens:
        if kind == "<":
            stack.append([])
        elif kind == ">":
            if len(stack) > 1:
                grp = stack.pop()
                stack[-1].append(grp)
        else:
            stack[-1].append((kind, val))
    while len(stack) > 1:
        grp = stack.pop()
        stack[-1].extend(grp)
    return stack[0]


def _flatten(items, keep_retraced: bool) -> list:
    out: list = []  # list of word-lists, one per item, so a retrace can drop the last group
    for item in items:
        if isinstance(item, list):
            out.append(_flatten(item, keep_retraced))
        elif item[0] == "code":
            if not keep_retraced and item[1].replace(" ", "") in RETRACE_CODES and out:
                out.pop()
        else:
            out.append([item[1]])
    return [w for grp in out for w in grp]


def _clean_word(word: str):
    w = word
    if not w or w in PUNCT_TOKENS:
        return []
    if w[0] in "&+0":
        return []
    if "@" in w:
        w = w.split("@", 1)[0]
    w = w.replace("(", "").replace(")", "")
    w = w.replace(":", "").replace("^", "").replace("~", " ").replace("_", " ")
    parts = w.replace("+", " ").split()
    cleaned = []
    for p in parts:
        p = p.lower()
        p = re.sub(r"[^a-z'\-]", "", p).strip("-'")
        if p and p not in UNINTELLIGIBLE:
            cleaned.append(p)
    return cleaned


def clean_utterance(text: str, keep_retraced: bool = True) -> list:
    """Cleaned lowercase tokens of one utterance's main-tier text."""
    text = BULLET_RE.sub(" ", text)
    words = _flatten(_group_tree(_lex(text)), keep_retraced)
    tokens = []
    for w in words:
        tokens.extend(_clean_word(w))
    return tokens


def extract_interventions(doc: ChatDocument, speaker: str = "PAR", subject_id: str = "",
                          keep_retraced: bool = True) -> Transcript:
    """Cleaned token lists of every non-empty utterance by ``speaker``."""
    interventions = []
    for u in doc.utterances:
        if u.speaker != speaker:
            continue
        toks = clean_utterance(u.raw_text, keep_retraced)
        if toks:
            interventions.append(tuple(toks))
    return Transcript(subject_id, tuple(interventions))


def load_transcript(path, subject_id: str | None = None, speaker: str = "PAR",
                    keep_retraced: bool = True) -> Transcript:
    path = Path(path)
    doc = parse_chat(path.read_text(encoding="utf-8"))
    return extract_interventions(doc, speaker, subject_id if subject_id is not None else path.stem, keep_retraced)
