"""Tokenization shared by the sparse indexes, the hashing embedder and features."""

from __future__ import annotations

import re

STOPWORDS_VERSION = "1"

# Fixed list; changing it changes every index, so bump STOPWORDS_VERSION.
STOPWORDS = frozenset(
    """
    a an and are as at be been but by can could did do does for from had has
    have if in into is it its not of on or so such that the their then there
    these they this to was were when which while will with would you
    """.split()
)

_ALNUM_RUN = re.compile(r"[A-Za-z0-9]+")
# camelCase / PascalCase / acronym / digit pieces inside one alnum run
_SUBWORD = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased tokens, split on non-alphanumerics and camel/snake joints.

    Tokens shorter than two characters and stopwords are dropped.

    >>> tokenize("NullPointerException in parseFile")
    ['null', 'pointer', 'exception', 'parse', 'file']
    """
    tokens = []
    for run in _ALNUM_RUN.findall(text):
        for piece in _SUBWORD.findall(run):
            tok = piece.lower()
            if len(tok) < 2 or tok in STOPWORDS:
                continue
            tokens.append(tok)
    return tokens
