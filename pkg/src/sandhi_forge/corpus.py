"""Dataset parsing, curation, gold split-location labeling, and train/test split.

Records are TAB-separated lines `compound<TAB>c1+c2+...+cn`. All text is
normalized to SLP1 at parse time. Gold location vectors are derived by
minimal-cost unit edit-distance alignment between the compound and the plain
concatenation of its constituents: the compound character aligned to the last
character of each non-final constituent carries the mark, so a fused vowel is
marked rather than the position after it. When distinct minimal alignments
disagree about that index the record is flagged ambiguous and excluded rather
than guessed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import translit


class CorpusError(Exception):
    pass


class AlignmentAmbiguous(CorpusError):
    def __init__(self, compound: str, detail: str = ""):
        self.compound = compound
        super().__init__(f"ambiguous minimal alignment for {compound!r}" + (f": {detail}" if detail else ""))


class AlignmentFailed(CorpusError):
    def __init__(self, compound: str, distance: int):
        self.compound = compound
        self.distance = distance
        super().__init__(f"edit distance {distance} too large for {compound!r}")


@dataclass(frozen=True)
class ParseError:
    line_no: int
    line: str
    reason: str


@dataclass(frozen=True)
class SandhiExample:
    compound: str
    constituents: tuple[str, ...]
    locations: tuple[int, ...]

    def __post_init__(self):
        if len(self.constituents) < 2:
            raise ValueError("an example needs at least two constituents")
        if any(not c for c in self.constituents):
            raise ValueError("empty constituent")
        if len(self.locations) != len(self.compound):
            raise ValueError("locations length differs from compound length")
        if sum(self.locations) != len(self.constituents) - 1:
            raise ValueError("locations must carry exactly n-1 ones")

    @property
    def split_surface(self) -> str:
        return translit.SEP.join(self.constituents)


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    test: list
    seed: int


# characters stripped from raw fields before transliteration; word-internal
# punctuation is noise in every source format we accept (avagraha stays)
_NOISE = set(" \t ।॥.,;:?!()[]{}|-_\"")


def _clean(raw: str) -> str:
    return "".join(ch for ch in raw if ch not in _NOISE)


def _to_slp1(raw: str, scheme: str) -> str:
    text = _clean(raw)
    if scheme == "slp1":
        translit.validate_slp1(text, allow_sep=False)
        return text
    return translit.convert(text, scheme, "slp1")


def parse_dataset(path, scheme: str = "slp1"):
    """Read records from `path`; returns (records, parse_errors).

    records: list of (compound, constituents tuple), all SLP1.
    Malformed lines become ParseError entries instead of aborting the read.
    """
    if scheme not in ("slp1", "iast", "deva"):
        raise ValueError(f"unknown scheme {scheme!r}")
    records: list[tuple[str, tuple[str, ...]]] = []
    errors: list[ParseError] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                errors.append(ParseError(line_no, line, "no_tab"))
                continue
            left, right = line.split("\t", 1)
            try:
                compound = _to_slp1(left, scheme)
                parts = tuple(_to_slp1(p, scheme) for p in right.split(translit.SEP))
            except translit.TranslitError as e:
                errors.append(ParseError(line_no, line, f"bad_text:{e}"))
                continue
            if not compound or any(not p for p in parts):
                errors.append(ParseError(line_no, line, "empty_field"))
                continue
            records.append((compound, parts))
    return records, errors


def curate(records, max_len: int = 31, word_filter=None):
    """Prune parsed records; returns (kept, rejects).

    Drops exact duplicate records, compounds longer than max_len SLP1 chars,
    records whose text fails SLP1 validation, records with fewer than two
    constituents, and (when word_filter is given) records with a constituent
    the filter refuses. rejects pair each dropped record with a reason code.
    word_filter stands in for dictionary validation: callable(word) -> bool.
    """
    kept = []
    rejects = []
    seen = set()
    for rec in records:
        compound, parts = rec[0], tuple(rec[1])
        key = (compound, parts)
        if key in seen:
            rejects.append((rec, "duplicate"))
            continue
        seen.add(key)
        if len(parts) < 2:
            rejects.append((rec, "too_few_parts"))
            continue
        if len(compound) > max_len:
            rejects.append((rec, "too_long"))
            continue
        if not translit.is_slp1(compound) or any(not translit.is_slp1(p) for p in parts):
            rejects.append((rec, "non_slp1"))
            continue
        if word_filter is not None and not all(word_filter(p) for p in parts):
            rejects.append((rec, "wordlist"))
            continue
        kept.append((compound, parts))
    return kept, rejects


def _edit_matrix(a: str, b: str) -> np.ndarray:
    """Full unit-cost edit distance DP table, D[i,j] = dist(a[:i], b[:j])."""
    n, m = len(a), len(b)
    bb = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32) if m else np.empty(0, np.uint32)
    D = np.empty((n + 1, m + 1), dtype=np.int32)
    D[0] = np.arange(m + 1)
    ramp = np.arange(m + 1)
    for i in range(1, n + 1):
        ai = ord(a[i - 1])
        prev = D[i - 1]
        row = np.empty(m + 1, dtype=np.int32)
        row[0] = i
        sub = prev[:m] + (bb != ai)
        row[1:] = np.minimum(prev[1:] + 1, sub)
        # propagate left-to-right insertions: row[j] <= row[j-1] + 1
        row = np.minimum.accumulate(row - ramp) + ramp
        D[i] = row
    return D


def _match_sets(compound: str, concat: str):
    """For each concat index j, the set of compound indices i such that some
    minimal-cost global alignment matches concat[j] with compound[i]."""
    n, m = len(compound), len(concat)
    fwd = _edit_matrix(compound, concat)
    rev = _edit_matrix(compound[::-1], concat[::-1])
    total = int(fwd[n, m])
    sets: list[set[int]] = [set() for _ in range(m)]
    for j in range(m):
        cj = concat[j]
        for i in range(n):
            cost = 0 if compound[i] == cj else 1
            if fwd[i, j] + cost + rev[n - i - 1, m - j - 1] == total:
                sets[j].add(i)
    return sets, total


def derive_split_locations(compound: str, constituents) -> tuple[int, ...]:
    """Gold location bit vector for a (compound, constituents) pair.

    Raises AlignmentFailed when the edit distance exceeds half the compound
    length (the pair is then presumed mislabeled) and AlignmentAmbiguous when
    minimal alignments disagree on a boundary index.
    """
    constituents = list(constituents)
    if len(constituents) < 2:
        raise ValueError("need at least two constituents")
    if not compound or any(not c for c in constituents):
        raise ValueError("empty text")
    concat = "".join(constituents)
    sets, total = _match_sets(compound, concat)
    if total > len(compound) / 2:
        raise AlignmentFailed(compound, total)
    marks = []
    pos = 0
    for part in constituents[:-1]:
        pos += len(part)
        j = pos - 1  # concat index of this constituent's last character
        if not sets[j]:
            # boundary char deleted in every minimal alignment: defer to the
            # nearest concat neighbor that does survive (leftward first)
            found = None
            for jj in range(j - 1, -1, -1):
                if sets[jj]:
                    found = jj
                    break
            if found is None:
                for jj in range(j + 1, len(concat)):
                    if sets[jj]:
                        found = jj
                        break
            if found is None:
                raise AlignmentAmbiguous(compound, "no aligned character near boundary")
            j = found
        candidates = sets[j]
        if len(candidates) > 1:
            raise AlignmentAmbiguous(compound, f"boundary after {part!r} admits {sorted(candidates)}")
        marks.append(next(iter(candidates)))
    if len(set(marks)) != len(marks):
        raise AlignmentAmbiguous(compound, "two boundaries claim one character")
    locations = [0] * len(compound)
    for i in marks:
        locations[i] = 1
    return tuple(locations)


def label_examples(records):
    """Attach location vectors; returns (examples, rejects)."""
    examples = []
    rejects = []
    for rec in records:
        compound, parts = rec[0], tuple(rec[1])
        try:
            locations = derive_split_locations(compound, parts)
        except AlignmentAmbiguous:
            rejects.append((rec, "alignment_ambiguous"))
            continue
        except AlignmentFailed:
            rejects.append((rec, "alignment_failed"))
            continue
        examples.append(SandhiExample(compound, parts, locations))
    return examples, rejects


def train_test_split(examples, ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Seeded shuffle then partition; train gets floor(ratio * n)."""
    if not examples:
        raise ValueError("no examples to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio {ratio} outside (0, 1)")
    order = np.random.default_rng(seed).permutation(len(examples))
    shuffled = [examples[i] for i in order]
    n_train = int(ratio * len(examples))
    return DatasetSplit(train=shuffled[:n_train], test=shuffled[n_train:], seed=seed)


def encode_example(ex: SandhiExample, vocab: translit.Vocabulary):
    """(input ids, location targets, char targets) for one example.

    input: compound character ids. location targets: the bit vector itself
    (values 0/1, one per input position). char targets: BOS + ids of the
    SEP-joined constituents + EOS.
    """
    input_ids = vocab.encode(ex.compound)
    loc_targets = list(ex.locations)
    char_targets = [vocab.bos_id] + vocab.encode(ex.split_surface) + [vocab.eos_id]
    return input_ids, loc_targets, char_targets


def decode_char_targets(ids, vocab: translit.Vocabulary) -> str:
    """Inverse of the char-target encoding: strips BOS/EOS/PAD, keeps SEP."""
    drop = {vocab.bos_id, vocab.eos_id, vocab.pad_id}
    return vocab.decode([i for i in ids if i not in drop])


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for compound, parts in records:
            fh.write(f"{compound}\t{translit.SEP.join(parts)}\n")


def write_rejects(path, rejects) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec, reason in rejects:
            compound, parts = rec[0], rec[1]
            fh.write(f"{compound}\t{translit.SEP.join(parts)}\t{reason}\n")
