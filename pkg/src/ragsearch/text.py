"""Tokenization and normalization shared by retrieval, metrics and the mock gateway."""
import re
import string

_PUNCT = string.punctuation
_PUNCT_TABLE = str.maketrans("", "", _PUNCT)
_WS = re.compile(r"\s+")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")

# 50 common English function words; used by the mock pruner/generator to
# decide which question tokens count as content.
STOPWORDS = frozenset("""
a an the and or but if of at by for with about against between into through
to from in out on off over under is are was were be been being have has had
do does did what which who whom this that these those it its as not
""".split())
assert len(STOPWORDS) == 50


def tokenize(text):
    """Lowercase whitespace tokens with leading/trailing punctuation stripped.

    Tokens that are pure punctuation are dropped.
    """
    out = []
    for tok in text.lower().split():
        tok = tok.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def normalize_answer(text):
    """Lowercase, remove all punctuation, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    return _WS.sub(" ", text).strip()


def metric_tokens(text, raw=False):
    if raw:
        return text.split()
    return normalize_answer(text).split()


def split_sentences(text):
    return [s.strip() for s in _SENTENCE_SPLIT.split(text) if s and s.strip()]


def content_tokens(text):
    return {t for t in tokenize(text) if t not in STOPWORDS}
