"""Cognate dataset handling: parsing, variants, splitting, and encoding.

A dataset is a UTF-8 TSV with one cognate set per line and six columns
(Romanian, French, Italian, Spanish, Portuguese, Latin). A dash marks a
missing daughter word. Words are tokenized one Unicode scalar per
symbol, in both orthographic and phonetic mode, so two-codepoint
affricates such as "tS" are two symbols and a length mark is its own
symbol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

ORTHOGRAPHIC = "orthographic"
PHONETIC = "phonetic"
MODES = (ORTHOGRAPHIC, PHONETIC)

MISSING_CELL = "-"
LENGTH_MARKS = ("ː", ":")  # "ː" or plain colon, both accepted
TENSE_LAX_MAP = {"U": "u", "O": "o", "I": "i", "E": "e"}

VARIANTS = (
    "orthographic",
    "phonetic",
    "orthographic_vowel_length",
    "phonetic_vowel_length",
    "phonetic_no_contrast",
)

VOCAB_FORMAT = "protolens-vocab-v1"

# Special vocabulary entries, in fixed id order.
PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
SEP = "<sep>"
MISSING = "<missing>"
UNK = "<unk>"
SPECIALS = (PAD, BOS, EOS, SEP, MISSING, UNK)
PAD_ID, BOS_ID, EOS_ID, SEP_ID, MISSING_ID, UNK_ID = range(len(SPECIALS))


class Language(IntEnum):
    ROMANIAN = 0
    FRENCH = 1
    ITALIAN = 2
    SPANISH = 3
    PORTUGUESE = 4
    LATIN = 5


#: Canonical order in which daughter words are concatenated for the encoder.
DAUGHTERS = (
    Language.ROMANIAN,
    Language.FRENCH,
    Language.ITALIAN,
    Language.SPANISH,
    Language.PORTUGUESE,
)


class ParseError(ValueError):
    """Malformed dataset line; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Word:
    """A tokenized word: a tuple of single-scalar symbols plus its mode."""

    symbols: tuple[str, ...]
    mode: str = PHONETIC

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def __getitem__(self, i):
        return self.symbols[i]

    def text(self) -> str:
        return "".join(self.symbols)

    @staticmethod
    def from_text(text: str, mode: str = PHONETIC) -> "Word":
        return Word(tuple(text), mode)


@dataclass(frozen=True)
class CognateSet:
    """One comparative entry: daughter words by language plus the gold Latin."""

    daughters: dict[Language, Word]
    latin: Word

    def __post_init__(self):
        if not self.daughters:
            raise ValidationError("cognate set has no daughter words")
        if Language.LATIN in self.daughters:
            raise ValidationError("Latin is the target, not a daughter")
        if len(self.latin) == 0:
            raise ValidationError("empty Latin word")

    @property
    def mode(self) -> str:
        return self.latin.mode


def tokenize(text: str, mode: str) -> Word:
    """Split a cell into one symbol per Unicode scalar."""
    if not text:
        raise ValidationError("empty word")
    return Word(tuple(text), mode)


def parse_dataset(text: str, mode: str) -> list[CognateSet]:
    """Parse TSV text into cognate sets; "-" cells become absent daughters."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    entries = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 6:
            raise ParseError(line_number, f"expected 6 tab-separated columns, got {len(cells)}")
        daughters = {}
        for language, cell in zip(DAUGHTERS, cells[:5]):
            cell = cell.strip()
            if cell == MISSING_CELL or not cell:
                continue
            daughters[language] = tokenize(cell, mode)
        latin_cell = cells[5].strip()
        if not latin_cell or latin_cell == MISSING_CELL:
            raise ParseError(line_number, "missing Latin word")
        if not daughters:
            raise ParseError(line_number, "all daughter words missing")
        entries.append(CognateSet(daughters=daughters, latin=tokenize(latin_cell, mode)))
    return entries


def serialize_dataset(entries: Sequence[CognateSet]) -> str:
    """Inverse of parse_dataset on well-formed data."""
    lines = []
    for entry in entries:
        cells = [
            entry.daughters[lang].text() if lang in entry.daughters else MISSING_CELL
            for lang in DAUGHTERS
        ]
        cells.append(entry.latin.text())
        lines.append("\t".join(cells))
    return "\n".join(lines) + ("\n" if lines else "")


def _strip_length_marks(word: Word) -> Word:
    symbols = tuple(s for s in word.symbols if s not in LENGTH_MARKS)
    return Word(symbols, word.mode)


def _neutralize_contrast(word: Word) -> Word:
    symbols = tuple(TENSE_LAX_MAP.get(s, s) for s in word.symbols)
    return Word(symbols, word.mode)


def apply_variant(entries: Sequence[CognateSet], variant: str) -> list[CognateSet]:
    """Produce one of the five dataset variants.

    Daughter words are never touched; only the Latin side changes.
    vowel_length variants keep the length mark after long vowels, the
    plain variants strip it, and phonetic_no_contrast additionally maps
    the Latin tense-lax vowels U, O, I, E to u, o, i, e.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    mode = ORTHOGRAPHIC if variant.startswith("orthographic") else PHONETIC
    out = []
    for entry in entries:
        if entry.mode != mode:
            raise ValidationError(
                f"variant {variant!r} requires {mode} data, got {entry.mode}"
            )
        latin = entry.latin
        if not variant.endswith("vowel_length"):
            latin = _strip_length_marks(latin)
        if variant == "phonetic_no_contrast":
            latin = _neutralize_contrast(latin)
        out.append(CognateSet(daughters=dict(entry.daughters), latin=latin))
    return out


def split(
    entries: Sequence[CognateSet],
    ratios: tuple[float, float, float] = (0.80, 0.08, 0.12),
    seed: int = 0,
) -> tuple[list[CognateSet], list[CognateSet], list[CognateSet]]:
    """Deterministic shuffled train/dev/test partition.

    Partition sizes are the floor of ratio * n, with the remainder
    assigned to train.
    """
    if not entries:
        raise ValidationError("cannot split an empty dataset")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {sum(ratios)}")
    n = len(entries)
    n_dev = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_dev - n_test  # floor train share plus the remainder
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [entries[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


@dataclass(frozen=True)
class Vocabulary:
    """Single symbol table shared by all languages, Latin included.

    Ids 0..5 are the special tokens (PAD, BOS, EOS, SEP, MISSING, UNK);
    content symbols follow in first-occurrence order.
    """

    symbol_to_id: dict[str, int]
    mode: str = PHONETIC
    id_to_symbol: dict[int, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inverse = {i: s for s, i in self.symbol_to_id.items()}
        if len(inverse) != len(self.symbol_to_id):
            raise ValidationError("vocabulary ids are not unique")
        for j, special in enumerate(SPECIALS):
            if self.symbol_to_id.get(special) != j:
                raise ValidationError(f"special token {special} must have id {j}")
        object.__setattr__(self, "id_to_symbol", inverse)

    def __len__(self) -> int:
        return len(self.symbol_to_id)

    def id(self, symbol: str) -> int:
        try:
            return self.symbol_to_id[symbol]
        except KeyError:
            raise ValidationError(f"symbol {symbol!r} not in vocabulary") from None

    def id_or_unk(self, symbol: str) -> int:
        return self.symbol_to_id.get(symbol, self.symbol_to_id[UNK])

    def symbol(self, index: int) -> str:
        try:
            return self.id_to_symbol[index]
        except KeyError:
            raise ValidationError(f"id {index} not in vocabulary") from None

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def bos_id(self) -> int:
        return BOS_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def sep_id(self) -> int:
        return SEP_ID

    @property
    def missing_id(self) -> int:
        return MISSING_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def content_symbols(self) -> list[str]:
        return [s for s in self.symbol_to_id if s not in SPECIALS]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": VOCAB_FORMAT,
                "mode": self.mode,
                "specials": {s: i for i, s in enumerate(SPECIALS)},
                "symbols": {s: self.symbol_to_id[s] for s in self.content_symbols()},
            },
            ensure_ascii=False,
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "Vocabulary":
        data = json.loads(text)
        if data.get("format") != VOCAB_FORMAT:
            raise ValidationError(f"unsupported vocabulary format {data.get('format')!r}")
        table = dict(data["specials"])
        table.update(data["symbols"])
        return Vocabulary(symbol_to_id=table, mode=data.get("mode", PHONETIC))


def build_vocab(entries: Sequence[CognateSet]) -> Vocabulary:
    """Collect every observed symbol, daughters and Latin alike.

    Ids are assigned in first-occurrence order: entries in dataset order,
    daughters in canonical language order, then Latin, symbols left to
    right.
    """
    if not entries:
        raise ValidationError("cannot build a vocabulary from an empty dataset")
    table = {s: i for i, s in enumerate(SPECIALS)}
    for entry in entries:
        words = [entry.daughters[lang] for lang in DAUGHTERS if lang in entry.daughters]
        words.append(entry.latin)
        for word in words:
            for symbol in word.symbols:
                if symbol not in table:
                    table[symbol] = len(table)
    return Vocabulary(symbol_to_id=table, mode=entries[0].mode)


@dataclass(frozen=True)
class EncodedExample:
    """Model-ready id streams for one cognate set.

    input_ids and input_langs run in parallel over the concatenated
    daughter words (canonical language order, SEP between spans, a
    single MISSING token for an absent daughter). A SEP position carries
    the language id of the span it terminates. target_ids is the Latin
    word terminated by EOS.
    """

    input_ids: tuple[int, ...]
    input_langs: tuple[int, ...]
    target_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.input_ids) != len(self.input_langs):
            raise ValidationError("input_ids and input_langs lengths differ")


def encode_example(
    entry: CognateSet, vocab: Vocabulary, unknown_to_unk: bool = False
) -> EncodedExample:
    """Encode one cognate set into the model's input/output id streams.

    With unknown_to_unk, out-of-vocabulary symbols map to the reserved
    UNK id instead of raising (the evaluation-time behaviour); training
    encodes strictly.
    """
    lookup = vocab.id_or_unk if unknown_to_unk else vocab.id
    input_ids: list[int] = []
    input_langs: list[int] = []
    for position, lang in enumerate(DAUGHTERS):
        if lang in entry.daughters:
            for symbol in entry.daughters[lang].symbols:
                input_ids.append(lookup(symbol))
                input_langs.append(int(lang))
        else:
            input_ids.append(vocab.missing_id)
            input_langs.append(int(lang))
        if position != len(DAUGHTERS) - 1:
            input_ids.append(vocab.sep_id)
            input_langs.append(int(lang))
    target_ids = [lookup(s) for s in entry.latin.symbols]
    target_ids.append(vocab.eos_id)
    return EncodedExample(
        input_ids=tuple(input_ids),
        input_langs=tuple(input_langs),
        target_ids=tuple(target_ids),
    )


def attested_symbols(entries: Sequence[CognateSet]) -> dict[int, list[str]]:
    """Per-language sets of observed symbols, in first-occurrence order."""
    seen: dict[int, dict[str, None]] = {int(lang): {} for lang in Language}
    for entry in entries:
        for lang, word in entry.daughters.items():
            for symbol in word.symbols:
                seen[int(lang)].setdefault(symbol, None)
        for symbol in entry.latin.symbols:
            seen[int(Language.LATIN)].setdefault(symbol, None)
    return {lang: list(symbols) for lang, symbols in seen.items()}


def language_position_counts(examples: Iterable[EncodedExample]) -> dict[int, int]:
    """How many encoder positions each language contributes, corpus-wide."""
    counts = {int(lang): 0 for lang in DAUGHTERS}
    for example in examples:
        for lang in example.input_langs:
            counts[lang] += 1
    return counts
