"""Text normalization applied before any WER/CER computation.

Transcripts carry bracketed annotations like ``[unintelligible]`` and
``[laughter]``; hypotheses from autoregressive models can degenerate into
long repetitions. Both are handled here, ahead of scoring: bracketed spans
are stripped, text is reduced to a frozen lowercase token form, and
hypothesis tokens that repeat past a limit are scrubbed.

The normalizer is intentionally a frozen, documented rule set rather than a
wrapper around an external (and moving) normalizer, so that scores are
reproducible. The rules: lowercase; drop bracketed spans; map curly
apostrophes to ``'``; keep ``[a-z0-9]`` plus apostrophes flanked by letters;
everything else becomes a space; collapse whitespace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_WS = re.compile(r"\s+")
# Curly single quotes normalized before the character filter.
_APOSTROPHES = str.maketrans({"‘": "'", "’": "'", "ʼ": "'"})


def strip_bracketed(text: str) -> str:
    """Remove every maximal ``[ ... ]`` span, brackets included.

    An unmatched ``[`` removes through the end of the string; an unmatched
    ``]`` is left as literal text. Whitespace runs collapse to single spaces.
    """
    out: list[str] = []
    depth = 0
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]" and depth > 0:
            depth -= 1
        elif depth == 0:
            out.append(ch)
    return _WS.sub(" ", "".join(out)).strip()


@dataclass(frozen=True)
class NormalizedText:
    """Lowercase word tokens plus their single-space joined form."""

    tokens: tuple[str, ...]

    @property
    def char_string(self) -> str:
        return " ".join(self.tokens)


_LETTERS = frozenset("abcdefghijklmnopqrstuvwxyz")
_KEEP = _LETTERS | frozenset("0123456789")


def normalize(text: str) -> NormalizedText:
    """Reduce text to the frozen lowercase token form used by all metrics."""
    s = strip_bracketed(text.lower()).translate(_APOSTROPHES)
    chars: list[str] = []
    for i, ch in enumerate(s):
        if ch in _KEEP:
            chars.append(ch)
        elif ch == "'" and 0 < i < len(s) - 1 and s[i - 1] in _LETTERS and s[i + 1] in _LETTERS:
            chars.append(ch)
        else:
            chars.append(" ")
    tokens = tuple("".join(chars).split())
    return NormalizedText(tokens=tokens)


def scrub_repetitions(text: str, limit: int = 10, mode: str = "remove_all") -> str:
    """Drop hypothesis tokens that repeat more than ``limit`` times.

    Counting is over raw whitespace tokens, case-insensitive, before any
    normalization. ``remove_all`` (the default) removes every occurrence of
    an over-limit token type; ``collapse_runs`` instead truncates each
    consecutive run of a token to ``limit`` occurrences.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    tokens = text.split()
    if mode == "remove_all":
        counts: dict[str, int] = {}
        for tok in tokens:
            key = tok.lower()
            counts[key] = counts.get(key, 0) + 1
        kept = [tok for tok in tokens if counts[tok.lower()] <= limit]
    elif mode == "collapse_runs":
        kept = []
        run_key, run_len = None, 0
        for tok in tokens:
            key = tok.lower()
            run_len = run_len + 1 if key == run_key else 1
            run_key = key
            if run_len <= limit:
                kept.append(tok)
    else:
        raise ValueError(f"unknown scrub mode {mode!r}")
    return " ".join(kept)
