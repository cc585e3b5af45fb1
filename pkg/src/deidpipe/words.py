"""Word segmentation shared by the vocabulary, the lexicon matcher and the metrics.

A word is a maximal run of alphanumeric characters; everything else
(whitespace, punctuation, underscores) separates words. Comparisons are
case-insensitive via str.casefold, spans always index the original text.
"""

from __future__ import annotations

import re

WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def word_spans(text: str) -> list[tuple[int, int, str]]:
    """Return (start, end, surface) for every word, in document order."""
    return [(m.start(), m.end(), m.group()) for m in WORD_RE.finditer(text)]


def words(text: str) -> list[str]:
    """Case-folded word list of the text."""
    return [w.casefold() for _, _, w in word_spans(text)]
