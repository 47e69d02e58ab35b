"""
METEOR restricted to its exact and stem matching stages (no synonym stage).
"""
from typing import List, Optional, Tuple

from nltk.stem.porter import PorterStemmer

_stemmer = PorterStemmer()


def _tokens(text: str) -> List[str]:
    return text.lower().split()


def align(candidate: List[str], reference: List[str]) -> List[Tuple[int, int]]:
    """Greedy unigram alignment: exact matches first, then Porter-stem matches; sorted by candidate index"""
    pairs: List[Tuple[int, int]] = []
    used_c, used_r = set(), set()

    stages = [lambda w: w, _stemmer.stem]
    for normalize in stages:
        ref_forms = [normalize(w) for w in reference]
        for i, word in enumerate(candidate):
            if i in used_c:
                continue
            form = normalize(word)
            for j, ref_form in enumerate(ref_forms):
                if j not in used_r and ref_form == form:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def count_chunks(pairs: List[Tuple[int, int]]) -> int:
    """Runs of matches adjacent in both candidate and reference"""
    chunks = 0
    previous = None
    for i, j in pairs:
        if previous is None or i != previous[0] + 1 or j != previous[1] + 1:
            chunks += 1
        previous = (i, j)
    return chunks


def meteor_score(candidate: str, reference: str, alpha: float = 0.9, beta: float = 3.0,
                 gamma: float = 0.5) -> Optional[float]:
    """Fmean * (1 - penalty); None when the reference is empty"""
    ref = _tokens(reference)
    if not ref:
        return None
    cand = _tokens(candidate)
    if not cand:
        return 0.0
    pairs = align(cand, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    penalty = gamma * (count_chunks(pairs) / matches) ** beta
    return f_mean * (1 - penalty)
