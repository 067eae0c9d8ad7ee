"""Traditional string-similarity baselines: edit distance, ratio, token sort,
token set. Scores are integers in [0, 100]."""
from __future__ import annotations

from . import _kernels
from .model import normalize_text

__all__ = [
    "levenshtein",
    "similarity_ratio",
    "token_sort_ratio",
    "token_set_ratio",
    "token_sort_key",
    "token_set_strings",
]

levenshtein = _kernels.levenshtein


def _ratio_from_distance(dist: int, lensum: int) -> int:
    if lensum == 0:
        # both strings empty: identical by convention
        return 100
    return int(100.0 * (lensum - dist) / lensum + 0.5)


def similarity_ratio(a: str, b: str) -> int:
    """Similarity in [0,100] from the substitution-cost-2 edit distance:
    round(100 * (|a|+|b| - dist2) / (|a|+|b|))."""
    return _ratio_from_distance(_kernels.levenshtein2(a, b), len(a) + len(b))


def token_sort_key(s: str) -> str:
    """Normalized tokens, sorted, joined with single spaces."""
    return " ".join(sorted(normalize_text(s)))


def token_sort_ratio(a: str, b: str) -> int:
    """similarity_ratio over alphabetically sorted token renderings, so word
    order never matters."""
    return similarity_ratio(token_sort_key(a), token_sort_key(b))


def token_set_strings(a: str, b: str) -> tuple[str, str, str]:
    """The three comparison strings of the token-set method: intersection,
    intersection + tokens only in a, intersection + tokens only in b.
    Token sets are deduplicated."""
    ta, tb = set(normalize_text(a)), set(normalize_text(b))
    inter = sorted(ta & tb)
    only_a = sorted(ta - tb)
    only_b = sorted(tb - ta)
    s0 = " ".join(inter)
    s1 = " ".join(inter + only_a)
    s2 = " ".join(inter + only_b)
    return s0, s1, s2


def token_set_ratio(a: str, b: str) -> int:
    """Max pairwise similarity_ratio over the token-set comparison strings;
    100 whenever one token set contains the other."""
    s0, s1, s2 = token_set_strings(a, b)
    return max(
        similarity_ratio(s0, s1),
        similarity_ratio(s0, s2),
        similarity_ratio(s1, s2),
    )
