"""Synthetic Portuguese-style address corpus, noise injection, and training
pair construction for both trainers.

Everything here is deterministic under the configured seeds so runs can be
reproduced bit-for-bit.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .metrics import token_set_ratio
from .model import (NormalizedAddress, UnnormalizedAddress, ZipCode,
                    door_key, render_normalized)
from .store import ShardedIndex, top_k
from .embedding import ProjectionWeights, ZeroVector, embed

__all__ = [
    "CorpusConfig",
    "NoiseConfig",
    "TrainingPair",
    "generate_corpus",
    "derive_unnormalized",
    "build_biencoder_pairs",
    "build_crossencoder_pairs",
    "dump_pairs",
    "load_pairs",
    "dump_gold",
    "load_gold",
]

ARTERY_TYPES = ["Rua", "Avenida", "Travessa", "Praça", "Largo", "Estrada",
                "Beco", "Calçada", "Alameda"]
# Rua dominates real corpora; keep the mix skewed the same way.
ARTERY_TYPE_WEIGHTS = [0.45, 0.15, 0.10, 0.07, 0.06, 0.06, 0.04, 0.04, 0.03]

ABBREVIATIONS = {
    "Rua": "R.", "Avenida": "Av.", "Travessa": "Tv.", "Praça": "Pç.",
    "Largo": "Lg.", "Estrada": "Estr.", "Beco": "Bc.", "Calçada": "Cç.",
    "Alameda": "Al.",
}
_EXPANSIONS = {v: k for k, v in ABBREVIATIONS.items()}

_PARTICLES = ["de", "da", "do", "das", "dos", ""]
_NAME_WORDS = [
    "Flores", "Camões", "Liberdade", "República", "Santo António",
    "São João", "São Miguel", "Santa Catarina", "Almeida Garrett",
    "Fernando Pessoa", "Eça de Queirós", "Vasco da Gama", "Infante",
    "Misericórdia", "Carmo", "Rosário", "Boavista", "Bonfim", "Aliados",
    "Restauradores", "Combatentes", "Descobrimentos", "Junqueira",
    "Alecrim", "Oliveiras", "Castanheiros", "Pinheiros", "Moinhos",
    "Fontainhas", "Azenhas", "Barrocas", "Lameiras", "Valverde",
    "Montebelo", "Quinta Nova", "Encosta", "Ribeirinha", "Salgueiros",
    "Tílias", "Glicínias",
]
_NAME_PREFIXES = ["", "", "", "25 de Abril", "1º de Maio", "5 de Outubro",
                  "Heróis", "Mártires"]
_TOWNS = [
    "Lisboa", "Porto", "Braga", "Coimbra", "Faro", "Évora", "Setúbal",
    "Aveiro", "Viseu", "Guarda", "Beja", "Leiria", "Santarém", "Bragança",
    "Vila Real", "Viana do Castelo", "Portalegre", "Castelo Branco",
    "Funchal", "Ponta Delgada", "Guimarães", "Almada", "Cascais", "Sintra",
    "Loulé", "Matosinhos", "Gondomar", "Odivelas", "Amadora", "Queluz",
]
_ACCOMMODATIONS = ["RC", "CV", "1 DTO", "1 ESQ", "2 DTO", "2 ESQ", "3 DTO",
                   "3 ESQ", "1", "2"]


def _uniform_mix() -> dict[int, float]:
    return {d: 1.0 / 9.0 for d in range(1, 10)}


@dataclass(frozen=True)
class CorpusConfig:
    n_addresses: int
    seed: int = 0
    region_mix: dict[int, float] = field(default_factory=_uniform_mix)
    p_accommodation: float = 0.3

    def __post_init__(self) -> None:
        if self.n_addresses < 1:
            raise ValueError("n_addresses must be >= 1")
        total = sum(self.region_mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"region_mix must sum to 1, got {total}")


def generate_corpus(cfg: CorpusConfig) -> list[NormalizedAddress]:
    """Artery-by-artery generation: each artery gets a CP4 drawn from the
    region mix and several distinct doors, so same-street/different-door
    negatives always exist."""
    rng = np.random.default_rng(cfg.seed)
    digits = sorted(cfg.region_mix)
    probs = np.array([cfg.region_mix[d] for d in digits])
    type_probs = np.array(ARTERY_TYPE_WEIGHTS)

    out: list[NormalizedAddress] = []
    seen_arteries: set[tuple[str, str, int]] = set()
    counter = 0
    while len(out) < cfg.n_addresses:
        digit = int(rng.choice(digits, p=probs))
        cp4 = digit * 1000 + int(rng.integers(0, 1000))
        cp3 = int(rng.integers(1, 1000))
        atype = str(rng.choice(ARTERY_TYPES, p=type_probs))
        prefix = str(rng.choice(_NAME_PREFIXES))
        if prefix:
            name = prefix
        else:
            particle = str(rng.choice(_PARTICLES))
            word = str(rng.choice(_NAME_WORDS))
            name = f"{particle} {word}".strip()
        if (atype, name, cp4) in seen_arteries:
            continue
        seen_arteries.add((atype, name, cp4))
        designation = _TOWNS[cp4 % len(_TOWNS)]
        zipc = ZipCode(cp4=cp4, cp3=cp3, postal_designation=designation)

        n_doors = int(rng.integers(2, 7))
        doors = rng.choice(np.arange(1, 200), size=n_doors, replace=False)
        for door in doors:
            door_id = str(int(door))
            if rng.random() < 0.15:
                door_id += str(rng.choice(["A", "B", "C"]))
            acc = (str(rng.choice(_ACCOMMODATIONS))
                   if rng.random() < cfg.p_accommodation else None)
            counter += 1
            out.append(NormalizedAddress(
                id=f"A{counter:06d}", artery_type=atype, artery_name=name,
                door_id=door_id, accommodation_id=acc, zip=zipc))
            if len(out) == cfg.n_addresses:
                break
    return out


@dataclass(frozen=True)
class NoiseConfig:
    p_abbreviate: float = 0.5
    p_typo: float = 0.3
    p_drop_token: float = 0.15
    p_shuffle: float = 0.2
    p_zip_degrade: float = 0.2
    max_typos: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_abbreviate", "p_typo", "p_drop_token", "p_shuffle",
                     "p_zip_degrade"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")


_TYPO_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _apply_typos(text: str, n: int, rng: np.random.Generator) -> str:
    """Random character edits restricted to alphabetic positions, so door and
    ZIP digits are only degraded through the dedicated ZIP channel."""
    chars = list(text)
    for _ in range(n):
        letter_pos = [i for i, c in enumerate(chars) if c.isalpha()]
        if not letter_pos:
            break
        i = int(rng.choice(letter_pos))
        op = rng.random()
        if op < 0.4:                      # substitute
            chars[i] = str(rng.choice(list(_TYPO_LETTERS)))
        elif op < 0.65:                   # delete
            del chars[i]
        elif op < 0.85:                   # insert
            chars.insert(i, str(rng.choice(list(_TYPO_LETTERS))))
        else:                             # transpose with next char
            if i + 1 < len(chars):
                chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars)


def derive_unnormalized(addr: NormalizedAddress,
                        noise: NoiseConfig) -> UnnormalizedAddress:
    """Noisy sender-style rendering of a normalized address; deterministic
    under (noise.seed, addr.id)."""
    rng = np.random.default_rng([noise.seed, zlib.crc32(addr.id.encode())])
    tokens = [addr.artery_type] + addr.artery_name.split() + [addr.door_id]
    door_pos = len(tokens) - 1
    if addr.accommodation_id:
        tokens.extend(addr.accommodation_id.split())
    zip_pos = len(tokens)
    tokens.append(f"{addr.zip.cp4:04d}-{addr.zip.cp3:03d}")
    tokens.extend(addr.zip.postal_designation.split())

    # abbreviation / expansion of the artery type
    if rng.random() < noise.p_abbreviate:
        t0 = tokens[0]
        tokens[0] = ABBREVIATIONS.get(t0, _EXPANSIONS.get(t0, t0))

    # token drops; door and ZIP tokens are never dropped
    kept = [tok for i, tok in enumerate(tokens)
            if i in (door_pos, zip_pos) or rng.random() >= noise.p_drop_token]
    door_pos = kept.index(tokens[door_pos])
    zip_pos = kept.index(tokens[zip_pos])
    tokens = kept

    if rng.random() < noise.p_shuffle and len(tokens) > 1:
        i, j = rng.choice(len(tokens), size=2, replace=False)
        tokens[int(i)], tokens[int(j)] = tokens[int(j)], tokens[int(i)]
        zip_pos = tokens.index(f"{addr.zip.cp4:04d}-{addr.zip.cp3:03d}")

    if rng.random() < noise.p_zip_degrade:
        if rng.random() < 0.5:
            tokens[zip_pos] = f"{addr.zip.cp4:04d}"          # drop CP3
        else:
            tokens[zip_pos] = tokens[zip_pos].replace("-", "")  # drop hyphen

    raw = " ".join(tokens)
    if rng.random() < noise.p_typo:
        raw = _apply_typos(raw, int(rng.integers(1, noise.max_typos + 1)), rng)
    if not raw.strip():
        raw = addr.door_id
    return UnnormalizedAddress(raw=raw, gold_id=addr.id)


@dataclass(frozen=True)
class TrainingPair:
    unnorm_text: str
    norm_text: str
    label: int
    neg_category: Optional[str] = None   # Easy | Hard | VeryHard | RetrievedTopK
    hard_fallback: bool = False

    def __post_init__(self) -> None:
        if self.label == 1 and self.neg_category is not None:
            raise ValueError("positive pairs carry no negative category")


_HARD_POOL = 150  # candidate sample size for hard-negative search


def build_biencoder_pairs(gold: Sequence[tuple[UnnormalizedAddress, NormalizedAddress]],
                          corpus: Sequence[NormalizedAddress],
                          seed: int = 0) -> list[TrainingPair]:
    """One positive plus one negative per gold record (1:1). The negative
    category is drawn uniformly from Easy / Hard / VeryHard:

    - Easy: uniform random address with a different door key
    - Hard: address with token_set_ratio > 80 against the gold rendering
      (highest-scoring sampled address when none qualifies)
    - VeryHard: random address sharing the gold's full CP4
      (falls back Hard, then Easy, when the shard is too small)
    """
    if len(corpus) < 2:
        raise ValueError("corpus must have at least 2 addresses")
    rng = np.random.default_rng(seed)
    rendered = [render_normalized(a) for a in corpus]
    dkeys = [door_key(a) for a in corpus]
    by_cp4: dict[int, list[int]] = {}
    for i, a in enumerate(corpus):
        by_cp4.setdefault(a.zip.cp4, []).append(i)

    pairs: list[TrainingPair] = []
    for un, na in gold:
        gold_dk = door_key(na)
        gold_render = render_normalized(na)
        pairs.append(TrainingPair(un.raw, gold_render, 1))

        category = str(rng.choice(["Easy", "Hard", "VeryHard"]))
        neg = None
        if category == "VeryHard":
            pool = [i for i in by_cp4.get(na.zip.cp4, []) if dkeys[i] != gold_dk]
            if pool:
                neg = TrainingPair(un.raw, rendered[int(rng.choice(pool))], 0,
                                   "VeryHard")
            else:
                category = "Hard"
        if neg is None and category == "Hard":
            same_cp4 = [i for i in by_cp4.get(na.zip.cp4, []) if dkeys[i] != gold_dk]
            sample = rng.choice(len(corpus), size=min(_HARD_POOL, len(corpus)),
                                replace=False)
            pool = same_cp4 + [int(i) for i in sample if dkeys[i] != gold_dk]
            if pool:
                order = rng.permutation(len(pool))
                best_i, best_score = pool[int(order[0])], -1
                for oi in order:
                    i = pool[int(oi)]
                    score = token_set_ratio(gold_render, rendered[i])
                    if score > 80:
                        neg = TrainingPair(un.raw, rendered[i], 0, "Hard")
                        break
                    if score > best_score:
                        best_i, best_score = i, score
                if neg is None:
                    neg = TrainingPair(un.raw, rendered[best_i], 0, "Hard",
                                       hard_fallback=True)
            else:
                category = "Easy"
        if neg is None:  # Easy, or exhausted fallbacks
            while True:
                i = int(rng.integers(0, len(corpus)))
                if dkeys[i] != gold_dk:
                    break
            neg = TrainingPair(un.raw, rendered[i], 0, "Easy")
        pairs.append(neg)
    return pairs


def build_crossencoder_pairs(gold: Sequence[tuple[UnnormalizedAddress, NormalizedAddress]],
                             index: ShardedIndex, bi: ProjectionWeights,
                             seed: int = 0, k: int = 10) -> list[TrainingPair]:
    """Per gold record: one positive plus up to k-1 negatives taken from the
    top-k retrieved candidates whose door key differs from the gold's
    (an approximate 1:9 ratio at the default k=10)."""
    pairs: list[TrainingPair] = []
    for un, na in gold:
        gold_dk = door_key(na)
        pairs.append(TrainingPair(un.raw, render_normalized(na), 1))
        try:
            qvec = embed(un.raw, bi)
            cands = top_k(index, qvec, shard=None, k=k)
        except ZeroVector:
            continue
        negatives = 0
        for c in cands:
            cand_addr = index.id_to_address[c.id]
            if door_key(cand_addr) == gold_dk:
                continue
            pairs.append(TrainingPair(un.raw, render_normalized(cand_addr), 0,
                                      "RetrievedTopK"))
            negatives += 1
            if negatives == k - 1:
                break
    return pairs


def dump_pairs(pairs: Sequence[TrainingPair], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"unnorm": p.unnorm_text, "norm": p.norm_text,
                                 "label": p.label, "category": p.neg_category},
                                ensure_ascii=False) + "\n")


def load_pairs(path) -> list[TrainingPair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(TrainingPair(rec["unnorm"], rec["norm"],
                                    int(rec["label"]), rec.get("category")))
    return out


def dump_gold(queries: Sequence[UnnormalizedAddress], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"raw": q.raw, "gold_id": q.gold_id},
                                ensure_ascii=False) + "\n")


def load_gold(path) -> list[UnnormalizedAddress]:
    with open(path, encoding="utf-8") as fh:
        return [UnnormalizedAddress(**json.loads(line))
                for line in fh if line.strip()]
