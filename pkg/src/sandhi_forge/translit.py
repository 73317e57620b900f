"""Lossless transliteration between Devanagari, IAST and SLP1, plus vocabularies.

SLP1 assigns one Latin character per Sanskrit phoneme, so sequence models can
treat a word as a flat character string. All corpus-facing code in this
package works on SLP1; this module is the only place the other scripts exist.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

SEP = "+"

# SLP1 letter <-> Devanagari, grouped as (vowels, consonants, signs).
# Vowels carry an independent form and a dependent mark (matra); the
# inherent 'a' has no matra.
_VOWELS = [
    ("a", "अ", ""),        # अ
    ("A", "आ", "ा"),  # आ ा
    ("i", "इ", "ि"),  # इ ि
    ("I", "ई", "ी"),  # ई ी
    ("u", "उ", "ु"),  # उ ु
    ("U", "ऊ", "ू"),  # ऊ ू
    ("f", "ऋ", "ृ"),  # ऋ ृ
    ("F", "ॠ", "ॄ"),  # ॠ ॄ
    ("x", "ऌ", "ॢ"),  # ऌ ॢ
    ("X", "ॡ", "ॣ"),  # ॡ ॣ
    ("e", "ए", "े"),  # ए े
    ("E", "ऐ", "ै"),  # ऐ ै
    ("o", "ओ", "ो"),  # ओ ो
    ("O", "औ", "ौ"),  # औ ौ
]

_CONSONANTS = [
    ("k", "क"), ("K", "ख"), ("g", "ग"), ("G", "घ"), ("N", "ङ"),
    ("c", "च"), ("C", "छ"), ("j", "ज"), ("J", "झ"), ("Y", "ञ"),
    ("w", "ट"), ("W", "ठ"), ("q", "ड"), ("Q", "ढ"), ("R", "ण"),
    ("t", "त"), ("T", "थ"), ("d", "द"), ("D", "ध"), ("n", "न"),
    ("p", "प"), ("P", "फ"), ("b", "ब"), ("B", "भ"), ("m", "म"),
    ("y", "य"), ("r", "र"), ("l", "ल"), ("v", "व"),
    ("S", "श"), ("z", "ष"), ("s", "स"), ("h", "ह"),
]

# anusvara, visarga, avagraha
_SIGNS = [("M", "ं"), ("H", "ः"), ("'", "ऽ")]

_VIRAMA = "्"

SLP1_VOWELS = frozenset(v for v, _, _ in _VOWELS)
SLP1_CONSONANTS = frozenset(c for c, _ in _CONSONANTS)
SLP1_SIGNS = frozenset(s for s, _ in _SIGNS)
SLP1_ALPHABET = SLP1_VOWELS | SLP1_CONSONANTS | SLP1_SIGNS

_DEVA_OF_VOWEL = {v: d for v, d, _ in _VOWELS}
_DEVA_MARK_OF_VOWEL = {v: m for v, _, m in _VOWELS}
_DEVA_OF_CONSONANT = dict(_CONSONANTS)
_DEVA_OF_SIGN = dict(_SIGNS)

_VOWEL_OF_DEVA = {d: v for v, d, _ in _VOWELS}
_VOWEL_OF_MARK = {m: v for v, _, m in _VOWELS if m}
_CONSONANT_OF_DEVA = {d: c for c, d in _CONSONANTS}
_SIGN_OF_DEVA = {d: s for s, d in _SIGNS}

# IAST <-> SLP1. Multi-letter IAST tokens (aspirates, diphthongs) must be
# matched before their one-letter prefixes.
_IAST_PAIRS = [
    ("a", "a"), ("ā", "A"), ("i", "i"), ("ī", "I"),
    ("u", "u"), ("ū", "U"),
    ("ṛ", "f"), ("ṝ", "F"), ("ḷ", "x"), ("ḹ", "X"),
    ("e", "e"), ("ai", "E"), ("o", "o"), ("au", "O"),
    ("ṃ", "M"), ("ḥ", "H"), ("'", "'"),
    ("k", "k"), ("kh", "K"), ("g", "g"), ("gh", "G"), ("ṅ", "N"),
    ("c", "c"), ("ch", "C"), ("j", "j"), ("jh", "J"), ("ñ", "Y"),
    ("ṭ", "w"), ("ṭh", "W"), ("ḍ", "q"), ("ḍh", "Q"),
    ("ṇ", "R"),
    ("t", "t"), ("th", "T"), ("d", "d"), ("dh", "D"), ("n", "n"),
    ("p", "p"), ("ph", "P"), ("b", "b"), ("bh", "B"), ("m", "m"),
    ("y", "y"), ("r", "r"), ("l", "l"), ("v", "v"),
    ("ś", "S"), ("ṣ", "z"), ("s", "s"), ("h", "h"),
]

_SLP1_OF_IAST = dict(_IAST_PAIRS)
_IAST_OF_SLP1 = {}
for _ia, _sl in _IAST_PAIRS:
    _IAST_OF_SLP1.setdefault(_sl, _ia)
_IAST_MAXLEN = max(len(k) for k in _SLP1_OF_IAST)


class TranslitError(ValueError):
    pass


class UnknownCodePoint(TranslitError):
    """A character outside the supported script, with its 0-based position."""

    def __init__(self, char: str, position: int):
        self.char = char
        self.position = position
        super().__init__(f"unknown code point {char!r} at position {position}")


class EmptyCorpus(ValueError):
    pass


def is_slp1(text: str, allow_sep: bool = False) -> bool:
    """True when every character is an SLP1 letter (optionally the separator)."""
    for ch in text:
        if ch in SLP1_ALPHABET:
            continue
        if allow_sep and ch == SEP:
            continue
        return False
    return True


def validate_slp1(text: str, allow_sep: bool = False) -> str:
    for i, ch in enumerate(text):
        if ch not in SLP1_ALPHABET and not (allow_sep and ch == SEP):
            raise UnknownCodePoint(ch, i)
    return text


def devanagari_to_slp1(text: str) -> str:
    """Convert a Devanagari string to SLP1, one letter per phoneme.

    Handles the inherent 'a' of bare consonants and the virama that
    suppresses it. Whitespace passes through unchanged.
    """
    text = unicodedata.normalize("NFC", text)
    out: list[str] = []
    pending = False  # a consonant was emitted and may still take a vowel
    for i, ch in enumerate(text):
        if ch in _CONSONANT_OF_DEVA:
            if pending:
                out.append("a")
            out.append(_CONSONANT_OF_DEVA[ch])
            pending = True
        elif ch in _VOWEL_OF_MARK:
            if not pending:
                raise UnknownCodePoint(ch, i)
            out.append(_VOWEL_OF_MARK[ch])
            pending = False
        elif ch == _VIRAMA:
            if not pending:
                raise UnknownCodePoint(ch, i)
            pending = False
        elif ch in _VOWEL_OF_DEVA:
            if pending:
                out.append("a")
                pending = False
            out.append(_VOWEL_OF_DEVA[ch])
        elif ch in _SIGN_OF_DEVA:
            if pending:
                out.append("a")
                pending = False
            out.append(_SIGN_OF_DEVA[ch])
        elif ch.isspace():
            if pending:
                out.append("a")
                pending = False
            out.append(ch)
        else:
            raise UnknownCodePoint(ch, i)
    if pending:
        out.append("a")
    return "".join(out)


def slp1_to_devanagari(text: str) -> str:
    """Inverse codec: devanagari_to_slp1(slp1_to_devanagari(s)) == s."""
    out: list[str] = []
    pending = False
    for i, ch in enumerate(text):
        if ch in SLP1_CONSONANTS:
            if pending:
                out.append(_VIRAMA)
            out.append(_DEVA_OF_CONSONANT[ch])
            pending = True
        elif ch in SLP1_VOWELS:
            if pending:
                out.append(_DEVA_MARK_OF_VOWEL[ch])  # '' for inherent a
                pending = False
            else:
                out.append(_DEVA_OF_VOWEL[ch])
        elif ch in SLP1_SIGNS:
            if pending:
                out.append(_VIRAMA)
                pending = False
            out.append(_DEVA_OF_SIGN[ch])
        elif ch.isspace():
            if pending:
                out.append(_VIRAMA)
                pending = False
            out.append(ch)
        else:
            raise UnknownCodePoint(ch, i)
    if pending:
        out.append(_VIRAMA)
    return "".join(out)


def iast_to_slp1(text: str) -> str:
    """Convert IAST (diacritic Latin) to SLP1 with longest-token matching."""
    text = unicodedata.normalize("NFC", text)
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            out.append(text[i])
            i += 1
            continue
        for width in range(min(_IAST_MAXLEN, n - i), 0, -1):
            token = text[i : i + width]
            if token in _SLP1_OF_IAST:
                out.append(_SLP1_OF_IAST[token])
                i += width
                break
        else:
            raise UnknownCodePoint(text[i], i)
    return "".join(out)


def slp1_to_iast(text: str) -> str:
    out: list[str] = []
    for i, ch in enumerate(text):
        if ch.isspace():
            out.append(ch)
        elif ch in _IAST_OF_SLP1:
            out.append(_IAST_OF_SLP1[ch])
        else:
            raise UnknownCodePoint(ch, i)
    return "".join(out)


_CODECS = {
    ("deva", "slp1"): devanagari_to_slp1,
    ("slp1", "deva"): slp1_to_devanagari,
    ("iast", "slp1"): iast_to_slp1,
    ("slp1", "iast"): slp1_to_iast,
}

SCHEMES = ("deva", "iast", "slp1")


def convert(text: str, src: str, dst: str) -> str:
    """Transliterate between any two of deva/iast/slp1 (via SLP1)."""
    if src not in SCHEMES or dst not in SCHEMES:
        raise ValueError(f"unknown scheme in {src!r} -> {dst!r}")
    if src == dst:
        # still validate slp1 so bad input fails uniformly
        return validate_slp1(text) if src == "slp1" and not text.isspace() and text else text
    slp = text if src == "slp1" else _CODECS[(src, "slp1")](text)
    if src == "slp1":
        validate_slp1(slp)
    return slp if dst == "slp1" else _CODECS[("slp1", dst)](slp)


PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP)


@dataclass(frozen=True)
class Vocabulary:
    """Dense char<->id maps over an SLP1 corpus plus the five special tokens."""

    id_of: dict[str, int]
    char_of: dict[int, str] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.id_of)

    @property
    def pad_id(self) -> int:
        return self.id_of[PAD]

    @property
    def bos_id(self) -> int:
        return self.id_of[BOS]

    @property
    def eos_id(self) -> int:
        return self.id_of[EOS]

    @property
    def unk_id(self) -> int:
        return self.id_of[UNK]

    @property
    def sep_id(self) -> int:
        return self.id_of[SEP]

    def encode(self, text: str) -> list[int]:
        ids = []
        for ch in text:
            if ch not in self.id_of:
                raise OovCharacter(ch)
            ids.append(self.id_of[ch])
        return ids

    def decode(self, ids) -> str:
        return "".join(self.char_of[int(i)] for i in ids)

    def chars(self) -> list[str]:
        """Every symbol in id order (specials included)."""
        return [self.char_of[i] for i in range(self.size)]

    @classmethod
    def from_chars(cls, chars: list[str]) -> "Vocabulary":
        id_of = {ch: i for i, ch in enumerate(chars)}
        if len(id_of) != len(chars):
            raise ValueError("duplicate symbol in vocabulary listing")
        for sp in SPECIALS:
            if sp not in id_of:
                raise ValueError(f"vocabulary listing is missing {sp!r}")
        return cls(id_of=id_of, char_of={i: c for c, i in id_of.items()})


class OovCharacter(KeyError):
    def __init__(self, char: str):
        self.char = char
        super().__init__(f"character {char!r} not in vocabulary")


def build_vocab(corpus) -> Vocabulary:
    """Vocabulary over every character occurring in the corpus, specials first."""
    seen: set[str] = set()
    empty = True
    for text in corpus:
        empty = False
        seen.update(text)
    if empty:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    seen -= set(SPECIALS)  # '+' in split strings stays the single SEP token
    chars = list(SPECIALS) + sorted(seen)
    return Vocabulary.from_chars(chars)
