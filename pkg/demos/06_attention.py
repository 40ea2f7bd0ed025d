"""Which daughter language does the decoder attend to most?

Trains a small model, decodes with attention tracing, and aggregates the
most-attended language by output position and by output symbol. Run from
the repository root:

    python demos/06_attention.py
"""

import numpy as np

from protolens import attention_summary, builtin_rules, generate_synthetic_corpus, train
from protolens.corpus import Language, encode_example, language_position_counts
from protolens.model import ModelConfig
from protolens.trainer import TrainConfig

print("=== Training a small model ===")
data = generate_synthetic_corpus(builtin_rules(), 300, seed=9)
result = train(
    data,
    [],
    ModelConfig(embed_dim=32, hidden_dim=48, mlp_hidden=64, lang_embed_dim=32, seed=3),
    TrainConfig(max_epochs=15, seed=4),
)
model = result.model

print("\n=== Collecting attention traces over 100 entries ===")
examples = [encode_example(entry, model.vocab) for entry in data[:100]]
traces = [model.greedy_decode(example)[1] for example in examples]
counts = language_position_counts(examples)
summary = attention_summary(traces, counts)
print(f"{summary.raw_total()} decoded symbols; "
      f"{int(summary.special_by_position.sum())} steps most-attended a SEP/MISSING position")

names = [Language(lang).name.lower()[:4] for lang in summary.languages]
print("\nmost-attended language by output position (rows normalized):")
print("  pos  " + "  ".join(f"{n:>5s}" for n in names))
for position in range(min(8, summary.by_position.shape[0])):
    row = summary.by_position[position]
    print(f"  {position:3d}  " + "  ".join(f"{value:5.2f}" for value in row))

print("\nmost-attended language for a few output symbols:")
print("  sym  " + "  ".join(f"{n:>5s}" for n in names))
for index, symbol in enumerate(summary.symbols[:8]):
    row = summary.by_symbol[index]
    print(f"  {symbol:>3s}  " + "  ".join(f"{value:5.2f}" for value in row))

leader = names[int(np.argmax(summary.by_position[:4].sum(axis=0)))]
print(f"\nearly output positions lean on: {leader}")
