"""Dataset parsing, variants, splitting, vocabulary, and encoding tests."""

import numpy as np
import pytest

from protolens.corpus import (
    DAUGHTERS,
    ORTHOGRAPHIC,
    PHONETIC,
    SPECIALS,
    CognateSet,
    Language,
    ParseError,
    ValidationError,
    Vocabulary,
    Word,
    apply_variant,
    attested_symbols,
    build_vocab,
    encode_example,
    language_position_counts,
    parse_dataset,
    serialize_dataset,
    split,
)

MILK_ROW = "lapte\tlait\tlatte\tleche\tleite\tlactem"
WORK_ROW = "-\ttKavaj\t-\ttRabaxo\ttR5BaLu\ttrIpalEm"


def toy_entries(n=10, mode=PHONETIC, seed=0):
    rng = np.random.default_rng(seed)
    alphabet = list("abcdefgi")
    entries = []
    for _ in range(n):
        word = lambda: Word(
            tuple(alphabet[i] for i in rng.integers(0, len(alphabet), size=rng.integers(2, 6))),
            mode,
        )
        entries.append(
            CognateSet(daughters={lang: word() for lang in DAUGHTERS}, latin=word())
        )
    return entries


class TestParse:
    def test_full_row(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        assert len(entry.daughters) == 5
        assert entry.daughters[Language.ROMANIAN].text() == "lapte"
        assert entry.latin.symbols == ("l", "a", "c", "t", "e", "m")

    def test_missing_daughters(self):
        (entry,) = parse_dataset(WORK_ROW, PHONETIC)
        assert Language.ROMANIAN not in entry.daughters
        assert Language.ITALIAN not in entry.daughters
        assert entry.daughters[Language.FRENCH].text() == "tKavaj"
        assert entry.latin.text() == "trIpalEm"

    def test_wrong_column_count(self):
        text = MILK_ROW + "\n" + "a\tb\tc\td\te"
        with pytest.raises(ParseError, match="line 2"):
            parse_dataset(text, ORTHOGRAPHIC)

    def test_empty_latin(self):
        with pytest.raises(ParseError, match="Latin"):
            parse_dataset("a\tb\tc\td\te\t-", PHONETIC)

    def test_all_daughters_missing(self):
        with pytest.raises(ParseError, match="daughter"):
            parse_dataset("-\t-\t-\t-\t-\tlactem", PHONETIC)

    def test_blank_lines_skipped(self):
        entries = parse_dataset(MILK_ROW + "\n\n" + MILK_ROW + "\n", ORTHOGRAPHIC)
        assert len(entries) == 2

    def test_single_scalar_tokenization(self):
        (entry,) = parse_dataset("tSa\tb\tc\td\te\ttSam", PHONETIC)
        # affricate notation is two symbols, length marks are their own symbol
        assert entry.daughters[Language.ROMANIAN].symbols == ("t", "S", "a")

    def test_roundtrip(self):
        entries = toy_entries(20)
        text = serialize_dataset(entries)
        assert parse_dataset(text, PHONETIC) == entries

    def test_roundtrip_with_missing(self):
        entries = parse_dataset(WORK_ROW, PHONETIC)
        assert serialize_dataset(entries).strip() == WORK_ROW


class TestVariants:
    def test_no_contrast_maps_tense_lax(self):
        (entry,) = parse_dataset("lapte\tlE\tlatte\tletSe\tl5jt1\tlaktEm", PHONETIC)
        (out,) = apply_variant([entry], "phonetic_no_contrast")
        assert out.latin.text() == "laktem"

    def test_no_contrast_high_vowel(self):
        (entry,) = parse_dataset("pe\tpe\tpe\tpe\tpe\tpIp", PHONETIC)
        (out,) = apply_variant([entry], "phonetic_no_contrast")
        assert out.latin.text() == "pip"

    def test_identity_without_marked_symbols(self):
        (entry,) = parse_dataset("pa\tpa\tpa\tpa\tpa\tlaktem", PHONETIC)
        (out,) = apply_variant([entry], "phonetic")
        assert out.latin == entry.latin

    def test_length_mark_stripping_and_keeping(self):
        for mark in ("ː", ":"):
            (entry,) = parse_dataset(f"pa\tpa\tpa\tpa\tpa\tla{mark}ktem", PHONETIC)
            (plain,) = apply_variant([entry], "phonetic")
            assert plain.latin.text() == "laktem"
            (kept,) = apply_variant([entry], "phonetic_vowel_length")
            assert kept.latin.text() == f"la{mark}ktem"

    def test_daughters_untouched(self):
        (entry,) = parse_dataset("pEː\tpe\tpe\tpe\tpe\tpEp", PHONETIC)
        (out,) = apply_variant([entry], "phonetic_no_contrast")
        assert out.daughters[Language.ROMANIAN].text() == "pEː"

    def test_idempotent(self):
        entries = parse_dataset("pa\tpa\tpa\tpa\tpa\tpaːktEm", PHONETIC)
        for variant in ("phonetic", "phonetic_no_contrast"):
            once = apply_variant(entries, variant)
            assert apply_variant(once, variant) == once

    def test_mode_mismatch(self):
        entries = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        with pytest.raises(ValidationError):
            apply_variant(entries, "phonetic_no_contrast")
        with pytest.raises(ValidationError):
            apply_variant(entries, "phonetic")

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            apply_variant(toy_entries(1), "bogus")


class TestSplit:
    def test_exact_ratios(self):
        entries = toy_entries(100)
        train, dev, test = split(entries, (0.80, 0.08, 0.12), seed=0)
        assert (len(train), len(dev), len(test)) == (80, 8, 12)

    def test_determinism(self):
        entries = toy_entries(50)
        assert split(entries, seed=5) == split(entries, seed=5)

    def test_remainder_goes_to_train(self):
        entries = toy_entries(10)
        train, dev, test = split(entries, (0.80, 0.08, 0.12), seed=0)
        assert (len(train), len(dev), len(test)) == (9, 0, 1)

    def test_partition_property(self):
        entries = toy_entries(37)
        for seed in range(10):
            parts = split(entries, seed=seed)
            combined = [entry for part in parts for entry in part]
            assert len(combined) == len(entries)
            assert sorted(map(id, combined)) == sorted(map(id, entries))

    def test_bad_ratios(self):
        with pytest.raises(ValidationError):
            split(toy_entries(5), (0.5, 0.2, 0.2), seed=0)

    def test_empty(self):
        with pytest.raises(ValidationError):
            split([], seed=0)


class TestVocabulary:
    def test_minimal_vocab(self):
        entry = CognateSet(
            daughters={Language.FRENCH: Word(("a",), PHONETIC)}, latin=Word(("a", "a"), PHONETIC)
        )
        vocab = build_vocab([entry])
        assert len(vocab) == len(SPECIALS) + 1
        assert vocab.content_symbols() == ["a"]

    def test_bijection(self):
        vocab = build_vocab(toy_entries(10))
        for symbol, index in vocab.symbol_to_id.items():
            assert vocab.symbol(index) == symbol
            assert vocab.id(symbol) == index

    def test_set_union_oracle(self):
        entries = toy_entries(3, seed=42)
        vocab = build_vocab(entries)
        observed = set()
        for entry in entries:
            for word in list(entry.daughters.values()) + [entry.latin]:
                observed.update(word.symbols)
        assert set(vocab.content_symbols()) == observed

    def test_first_occurrence_order(self):
        (entry,) = parse_dataset("ba\tcd\te\tf\tg\thi", PHONETIC)
        vocab = build_vocab([entry])
        assert vocab.content_symbols() == ["b", "a", "c", "d", "e", "f", "g", "h", "i"]

    def test_json_roundtrip(self):
        vocab = build_vocab(toy_entries(5))
        again = Vocabulary.from_json(vocab.to_json())
        assert again == vocab

    def test_json_format_check(self):
        with pytest.raises(ValidationError):
            Vocabulary.from_json('{"format": "other", "specials": {}, "symbols": {}}')

    def test_unk_fallback(self):
        vocab = build_vocab(toy_entries(2))
        assert vocab.id_or_unk("☃") == vocab.unk_id
        with pytest.raises(ValidationError, match="☃"):
            vocab.id("☃")


class TestEncodeExample:
    def test_input_length_arithmetic(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        vocab = build_vocab([entry])
        encoded = encode_example(entry, vocab)
        # daughter lengths 5+4+5+5+5 plus 4 separators
        assert len(encoded.input_ids) == 28
        assert len(encoded.input_langs) == 28

    def test_missing_daughter_token(self):
        (entry,) = parse_dataset(WORK_ROW, PHONETIC)
        vocab = build_vocab([entry])
        encoded = encode_example(entry, vocab)
        assert encoded.input_ids[0] == vocab.missing_id
        assert encoded.input_ids[1] == vocab.sep_id

    def test_target_has_eos(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        vocab = build_vocab([entry])
        encoded = encode_example(entry, vocab)
        assert len(encoded.target_ids) == 7
        assert encoded.target_ids[-1] == vocab.eos_id

    def test_length_formula_property(self):
        entries = toy_entries(20, seed=9)
        # drop a few daughters to exercise the MISSING path
        rng = np.random.default_rng(1)
        thinned = []
        for entry in entries:
            daughters = dict(entry.daughters)
            victim = DAUGHTERS[int(rng.integers(0, 5))]
            if len(daughters) > 1:
                daughters.pop(victim, None)
            thinned.append(CognateSet(daughters=daughters, latin=entry.latin))
        vocab = build_vocab(thinned)
        for entry in thinned:
            encoded = encode_example(entry, vocab)
            expected = sum(
                len(entry.daughters[lang]) if lang in entry.daughters else 1
                for lang in DAUGHTERS
            ) + (len(DAUGHTERS) - 1)
            assert len(encoded.input_ids) == expected

    def test_languages_in_canonical_order(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        vocab = build_vocab([entry])
        encoded = encode_example(entry, vocab)
        langs = list(encoded.input_langs)
        assert langs == sorted(langs)
        assert set(langs) == {int(lang) for lang in DAUGHTERS}

    def test_out_of_vocabulary_symbol_named(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        (other,) = parse_dataset("zz\tb\tc\td\te\tzz", ORTHOGRAPHIC)
        vocab = build_vocab([entry])
        with pytest.raises(ValidationError, match="'z'"):
            encode_example(other, vocab)
        encoded = encode_example(other, vocab, unknown_to_unk=True)
        assert encoded.input_ids[0] == vocab.unk_id

    def test_language_position_counts(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        vocab = build_vocab([entry])
        counts = language_position_counts([encode_example(entry, vocab)])
        # each non-final language span contributes its symbols plus one SEP
        assert counts[int(Language.ROMANIAN)] == 6
        assert counts[int(Language.PORTUGUESE)] == 5

    def test_attested_symbols(self):
        (entry,) = parse_dataset(MILK_ROW, ORTHOGRAPHIC)
        table = attested_symbols([entry])
        assert table[int(Language.LATIN)] == ["l", "a", "c", "t", "e", "m"]
        assert set(table[int(Language.FRENCH)]) == set("lait")
