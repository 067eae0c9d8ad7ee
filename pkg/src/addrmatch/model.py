"""Canonical address data model, ZIP parsing and text normalization.

Everything downstream (string metrics, BM25, the embedding pipeline) works on
the types defined here. All types are immutable values; all functions are pure.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

__all__ = [
    "ZipCode",
    "NormalizedAddress",
    "UnnormalizedAddress",
    "MalformedZip",
    "InvalidCp4Prefix",
    "parse_zip",
    "normalize_text",
    "render_normalized",
    "artery_key",
    "door_key",
    "load_corpus",
    "dump_corpus",
]


class MalformedZip(ValueError):
    """Raised when no CP4-CP3 digit pattern can be found in the input."""


class InvalidCp4Prefix(ValueError):
    """Raised when the CP4 starts with 0 (valid first digits are 1-9)."""


@dataclass(frozen=True)
class ZipCode:
    cp4: int
    cp3: int
    postal_designation: str = ""

    def __post_init__(self) -> None:
        if not 1000 <= self.cp4 <= 9999:
            raise InvalidCp4Prefix(f"cp4 out of range: {self.cp4}")
        if not 0 <= self.cp3 <= 999:
            raise MalformedZip(f"cp3 out of range: {self.cp3}")

    @property
    def first_digit(self) -> int:
        return self.cp4 // 1000

    def render(self) -> str:
        code = f"{self.cp4:04d}-{self.cp3:03d}"
        if self.postal_designation:
            return f"{code} {self.postal_designation}"
        return code


@dataclass(frozen=True)
class NormalizedAddress:
    id: str
    artery_type: str
    artery_name: str
    door_id: str
    accommodation_id: Optional[str]
    zip: ZipCode

    def __post_init__(self) -> None:
        if not self.artery_name:
            raise ValueError("artery_name must be non-empty")
        if not self.door_id:
            raise ValueError("door_id must be non-empty")


@dataclass(frozen=True)
class UnnormalizedAddress:
    raw: str
    gold_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.raw.strip():
            raise ValueError("raw address must be non-empty")


# Explicit folding table for the Portuguese alphabet. Anything non-ASCII that
# is not listed here is treated as a separator by normalize_text.
_DIACRITICS = {
    "á": "a", "à": "a", "â": "a", "ã": "a", "ä": "a",
    "é": "e", "è": "e", "ê": "e", "ë": "e",
    "í": "i", "ì": "i", "î": "i", "ï": "i",
    "ó": "o", "ò": "o", "ô": "o", "õ": "o", "ö": "o",
    "ú": "u", "ù": "u", "û": "u", "ü": "u",
    "ç": "c", "ñ": "n",
}

_ZIP_RE = re.compile(r"(\d{4})[\s-]?(\d{3})\b\s*(.*)", re.DOTALL)


def parse_zip(text: str) -> ZipCode:
    """Parse "DDDD-DDD", "DDDD DDD" or bare "DDDDDDD" with optional trailing
    postal designation into a ZipCode."""
    m = _ZIP_RE.search(text)
    if m is None:
        raise MalformedZip(f"no CP4-CP3 pattern in {text!r}")
    cp4 = int(m.group(1))
    if cp4 < 1000:
        raise InvalidCp4Prefix(f"CP4 first digit must be 1-9, got {m.group(1)}")
    return ZipCode(cp4=cp4, cp3=int(m.group(2)), postal_designation=m.group(3).strip())


def normalize_text(text: str) -> list[str]:
    """Lowercase, fold diacritics, strip punctuation, split into tokens.

    Tokens contain only [a-z0-9]; the result is deterministic and
    locale-independent.
    """
    out = []
    for ch in text.lower():
        ch = _DIACRITICS.get(ch, ch)
        if "a" <= ch <= "z" or "0" <= ch <= "9":
            out.append(ch)
        else:
            out.append(" ")
    return "".join(out).split()


def render_normalized(addr: NormalizedAddress) -> str:
    """Deterministic single-line rendering of a normalized address."""
    parts = [addr.artery_type, addr.artery_name, addr.door_id]
    if addr.accommodation_id:
        parts.append(addr.accommodation_id)
    parts.append(addr.zip.render())
    return " ".join(parts)


def artery_key(addr: NormalizedAddress) -> str:
    """Canonical key identifying the street: (artery type, name, CP4)."""
    toks = normalize_text(addr.artery_type) + normalize_text(addr.artery_name)
    return " ".join(toks) + f"|{addr.zip.cp4:04d}"


def door_key(addr: NormalizedAddress) -> str:
    """artery_key extended with door and accommodation identifiers.

    Two addresses match at door level iff their door_keys are equal.
    """
    door = " ".join(normalize_text(addr.door_id))
    acc = " ".join(normalize_text(addr.accommodation_id or ""))
    return f"{artery_key(addr)}|{door}|{acc}"


def _addr_to_record(addr: NormalizedAddress) -> dict:
    return {
        "id": addr.id,
        "artery_type": addr.artery_type,
        "artery_name": addr.artery_name,
        "door_id": addr.door_id,
        "accommodation_id": addr.accommodation_id,
        "cp4": addr.zip.cp4,
        "cp3": addr.zip.cp3,
        "designation": addr.zip.postal_designation,
    }


def _record_to_addr(rec: dict) -> NormalizedAddress:
    return NormalizedAddress(
        id=rec["id"],
        artery_type=rec["artery_type"],
        artery_name=rec["artery_name"],
        door_id=rec["door_id"],
        accommodation_id=rec.get("accommodation_id"),
        zip=ZipCode(cp4=int(rec["cp4"]), cp3=int(rec["cp3"]),
                    postal_designation=rec.get("designation", "")),
    )


def dump_corpus(corpus: Iterable[NormalizedAddress], path) -> None:
    """Write a corpus as line-delimited JSON, one record per address."""
    with open(path, "w", encoding="utf-8") as fh:
        for addr in corpus:
            fh.write(json.dumps(_addr_to_record(addr), ensure_ascii=False) + "\n")


def load_corpus(path) -> list[NormalizedAddress]:
    with open(path, encoding="utf-8") as fh:
        return [_record_to_addr(json.loads(line)) for line in fh if line.strip()]
