"""A small synthetic sandhi language for end-to-end exercises.

Twelve SLP1 characters. Morphemes are drawn from seven of them; e, o, y, v,
and R never occur inside a morpheme and can only be created by fusion, the
way Sanskrit gunation, glide formation, and retroflexion leave traces of a
junction.

Fusion applies eight deterministic rules. Seven rewrite the two characters
meeting at a junction:

    a+u -> o     a+i -> e     i+a -> ya    u+a -> va
    i+u -> yu    u+i -> vi    t+n -> nn

The eighth cascades across the junction: when the already-built left side
contains an r, the first n of the newly appended region turns retroflex
(n -> R). Compounds fuse left to right, one junction at a time. Vowel pairs
without a rule (a+a, i+i, u+u) concatenate into geminates, which morpheme
shapes also forbid, so they too mark a junction.

Morphemes are vowel-flanked (VCV by default), so every junction is
vowel-to-vowel and leaves either a fusion trace or a geminate. Fixed-length
morphemes keep split positions near-arithmetic, which makes the location
task learnable at toy scale while the character task still has to undo the
rewrites.

Generated corpora are rejection-sampled so that every compound has exactly
one derivation from the lexicon (up to the part-count cap) and a cleanly
alignable split-location vector.
"""

from __future__ import annotations

import numpy as np

from . import corpus

ALPHABET = "aiueoyvtrnsR"  # 12 characters

MORPHEME_CONSONANTS = "trns"
MORPHEME_VOWELS = "aiu"

# morpheme templates: V draws a vowel, C a consonant. Fixed-length shapes
# keep split positions close to arithmetic, and vowel-flanked shapes put a
# fusion trace or a geminate at almost every junction
MORPHEME_SHAPES = ("VCV",)
SHAPE_PROBS = (1.0,)

# junction rules keyed on (last char of left, first char of right)
BOUNDARY_RULES = {
    ("a", "u"): "o",
    ("a", "i"): "e",
    ("i", "a"): "ya",
    ("u", "a"): "va",
    ("i", "u"): "yu",
    ("u", "i"): "vi",
    ("t", "n"): "nn",
}

_LEXICON_STREAM = 0
_SAMPLE_STREAM = 1


def fuse_pair(left: str, right: str) -> str:
    """Fuse one junction: boundary rewrite, then r-triggered retroflexion."""
    if not left or not right:
        raise ValueError("cannot fuse an empty part")
    rule = BOUNDARY_RULES.get((left[-1], right[0]))
    if rule is not None:
        base, appended = left[:-1], rule + right[1:]
    else:
        base, appended = left, right
    if "r" in base:
        i = appended.find("n")
        if i >= 0:
            appended = appended[:i] + "R" + appended[i + 1 :]
    return base + appended


def fuse(parts) -> str:
    """Left fold of fuse_pair over the constituent sequence."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to fuse")
    word = parts[0]
    for p in parts[1:]:
        word = fuse_pair(word, p)
    return word


def derivations(compound: str, lexicon, max_parts: int = 4, limit: int = 2):
    """All morpheme sequences (2..max_parts long) fusing to `compound`.

    Search stops once `limit` derivations are found; uniqueness checks only
    need to know whether a second one exists. Junction rules rewrite at most
    the final character of the accumulated word, so every prefix except that
    character is final and prunes the search.
    """
    lexicon = list(lexicon)
    found = []

    def dfs(parts, acc):
        if len(found) >= limit:
            return
        if len(parts) >= 2 and acc == compound:
            found.append(tuple(parts))
            return  # any extension is strictly longer
        if len(parts) == max_parts:
            return
        for m in lexicon:
            nxt = fuse_pair(acc, m) if parts else m
            if len(nxt) > len(compound):
                continue
            if nxt[: len(nxt) - 1] != compound[: len(nxt) - 1]:
                continue
            dfs(parts + [m], nxt)

    dfs([], "")
    return found


def _morpheme(rng: np.random.Generator, shapes, shape_probs) -> str:
    shape = shapes[int(rng.choice(len(shapes), p=shape_probs))]
    out = []
    for slot in shape:
        if slot == "V":
            out.append(MORPHEME_VOWELS[rng.integers(3)])
        elif slot == "C":
            out.append(MORPHEME_CONSONANTS[rng.integers(len(MORPHEME_CONSONANTS))])
        else:
            raise ValueError(f"shape slot {slot!r} is not V or C")
    return "".join(out)


def make_lexicon(size: int = 30, seed: int = 7, shapes=MORPHEME_SHAPES,
                 shape_probs=SHAPE_PROBS) -> list:
    """Seeded morpheme inventory; insertion order is deterministic."""
    if size < 2:
        raise ValueError("a lexicon needs at least two morphemes")
    if len(shapes) != len(shape_probs):
        raise ValueError("shapes and shape_probs differ in length")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _LEXICON_STREAM]))
    probs = np.asarray(shape_probs, dtype=np.float64)
    probs = probs / probs.sum()
    out, seen = [], set()
    attempts = 0
    while len(out) < size:
        attempts += 1
        if attempts > 1000 * size:
            raise RuntimeError("morpheme space exhausted; lower the size")
        m = _morpheme(rng, shapes, probs)
        if m not in seen:
            seen.add(m)
            out.append(m)
    return out


def generate_corpus(n_words: int = 2000, seed: int = 7, lexicon_size: int = 30,
                    max_parts: int = 4, shapes=MORPHEME_SHAPES,
                    shape_probs=SHAPE_PROBS, parts_probs=(0.5, 0.4, 0.1)):
    """Rejection-sample `n_words` distinct compounds with 1..max_parts-1 splits.

    A draw survives when the fused surface is not itself a morpheme, has
    exactly one derivation from the lexicon, and yields an unambiguous
    split-location vector. `parts_probs` weights the part counts
    2..max_parts. Returns (records, lexicon) where records are
    (compound, constituent tuple) pairs in generation order.
    """
    if n_words < 1:
        raise ValueError("n_words must be positive")
    if len(parts_probs) != max_parts - 1:
        raise ValueError("parts_probs must cover counts 2..max_parts")
    lexicon = make_lexicon(lexicon_size, seed, shapes, shape_probs)
    lexset = set(lexicon)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SAMPLE_STREAM]))
    probs = np.asarray(parts_probs, dtype=np.float64)
    probs = probs / probs.sum()
    records, taken = [], set()
    attempts = 0
    while len(records) < n_words:
        attempts += 1
        if attempts > 500 * n_words:
            raise RuntimeError("rejection rate too high; the language is too ambiguous")
        k = 2 + int(rng.choice(max_parts - 1, p=probs))
        parts = tuple(lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=k))
        compound = fuse(parts)
        if compound in taken or compound in lexset:
            continue
        if len(derivations(compound, lexicon, max_parts=max_parts, limit=2)) != 1:
            continue
        try:
            corpus.derive_split_locations(compound, parts)
        except corpus.CorpusError:
            continue
        taken.add(compound)
        records.append((compound, parts))
    return records, lexicon
