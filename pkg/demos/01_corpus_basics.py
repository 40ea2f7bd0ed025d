"""Walk through dataset handling: parsing, variants, splitting, encoding.

Run from the repository root:

    python demos/01_corpus_basics.py
"""

from pathlib import Path

from protolens import (
    Language,
    apply_variant,
    build_vocab,
    encode_example,
    parse_dataset,
    split,
)

SAMPLE = Path(__file__).parent / "data" / "romance_sample.tsv"

print("=== Parsing a 6-column cognate TSV ===")
entries = parse_dataset(SAMPLE.read_text(encoding="utf-8"), mode="orthographic")
print(f"parsed {len(entries)} cognate sets from {SAMPLE.name}")

milk = entries[0]
print("\nfirst entry (the classic milk set):")
for lang in Language:
    if lang in milk.daughters:
        print(f"  {lang.name.lower():12s} {milk.daughters[lang].text()}")
print(f"  {'latin':12s} {milk.latin.text()}")
print(f"  Latin symbols: {list(milk.latin.symbols)}  (one Unicode scalar each)")

brother = [e for e in entries if e.latin.text() == "fratrem"][0]
absent = [lang.name.lower() for lang in Language if lang != Language.LATIN and lang not in brother.daughters]
print(f"\n'fratrem' has missing daughters (written '-' in the file): {absent}")

print("\n=== Dataset variants (phonetic example) ===")
phonetic_rows = "lapte\tlE\tlatte\tletSe\tl5jt1\tlaktEm"
(photo,) = parse_dataset(phonetic_rows, mode="phonetic")
for variant in ("phonetic", "phonetic_no_contrast"):
    (changed,) = apply_variant([photo], variant)
    print(f"  {variant:22s} latin = {changed.latin.text()}")
print("  (no_contrast neutralizes the tense-lax vowels U,O,I,E in the Latin side only)")

print("\n=== Deterministic 80/8/12 split ===")
train_set, dev_set, test_set = split(entries, (0.80, 0.08, 0.12), seed=0)
print(f"  train {len(train_set)}, dev {len(dev_set)}, test {len(test_set)} (remainder rows go to train)")

print("\n=== Shared vocabulary and model encoding ===")
vocab = build_vocab(entries)
print(f"  vocabulary: {len(vocab)} ids ({len(vocab.content_symbols())} symbols + 6 specials)")
encoded = encode_example(milk, vocab)
print(f"  encoder input length for the milk set: {len(encoded.input_ids)}")
print(f"  per-position language ids:             {list(encoded.input_langs)}")
print(f"  decoder target (latin + EOS):          {list(encoded.target_ids)}")
