import hashlib
import string
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..models.text_models import PAD_ID, UNK_ID
from ..utils.exceptions import InvalidInputError

CONFUSABLE_DIGITS: Dict[str, str] = {"o": "0", "l": "1", "e": "3", "a": "4", "i": "1", "s": "5"}

_KEYBOARD_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")
KEYBOARD_NEIGHBOURS: Dict[str, str] = {}
for _row in _KEYBOARD_ROWS:
    for _i, _ch in enumerate(_row):
        KEYBOARD_NEIGHBOURS[_ch] = _row[max(0, _i - 1):_i] + _row[_i + 1:_i + 2]

ALL_TRANSFORMS = ("swap", "substitute", "delete", "insert")


def word_candidates(embedding: np.ndarray, token_id: int, k: int, min_sim: float) -> List[int]:
    """
    Up to k vocabulary ids nearest to `token_id` by cosine similarity of their
    embedding rows, excluding the token itself and reserved ids, keeping only
    similarities >= min_sim. Ties go to the smaller id.
    """
    if not 0 <= token_id < embedding.shape[0]:
        raise InvalidInputError(f"token id {token_id} outside vocabulary of size {embedding.shape[0]}")
    if k <= 0:
        return []
    norms = np.linalg.norm(embedding, axis=1)
    query_norm = norms[token_id]
    if query_norm == 0:
        return []
    denom = norms * query_norm
    sims = np.divide(embedding @ embedding[token_id], denom, out=np.zeros_like(norms), where=denom > 0)
    sims[[PAD_ID, UNK_ID, token_id]] = -np.inf
    order = np.argsort(-sims, kind="stable")
    return [int(i) for i in order[:k] if sims[i] >= min_sim]


def _token_rng(token: str) -> np.random.Generator:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def char_transforms(token: str, transforms: Sequence[str] = ALL_TRANSFORMS, min_length: int = 3,
                    rng: Optional[np.random.Generator] = None) -> List[str]:
    """
    Single-edit variants of `token`: adjacent swaps, confusable or keyboard-neighbour
    substitutions, deletions and random-letter insertions. Deduplicated, in that
    order; tokens shorter than `min_length` have none. Insertion letters come from
    `rng`, or from a stream seeded by the token itself.
    """
    if len(token) < min_length:
        return []
    rng = rng if rng is not None else _token_rng(token)
    variants: List[str] = []
    if "swap" in transforms:
        for i in range(len(token) - 1):
            variants.append(token[:i] + token[i + 1] + token[i] + token[i + 2:])
    if "substitute" in transforms:
        for i, ch in enumerate(token):
            for sub in CONFUSABLE_DIGITS.get(ch, "") + KEYBOARD_NEIGHBOURS.get(ch, ""):
                variants.append(token[:i] + sub + token[i + 1:])
    if "delete" in transforms:
        for i in range(len(token)):
            variants.append(token[:i] + token[i + 1:])
    if "insert" in transforms:
        letters = string.ascii_lowercase
        for i in range(len(token) + 1):
            variants.append(token[:i] + letters[int(rng.integers(len(letters)))] + token[i:])

    seen = {token}
    unique = []
    for v in variants:
        if v not in seen:
            seen.add(v)
            unique.append(v)
    return unique
