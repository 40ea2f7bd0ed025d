"""Ward clustering of learned per-language phoneme representations.

Trains a small model on synthetic data, pulls out the combined
symbol-plus-language vectors for Latin, and prints the dendrogram both
as merge steps and as a Newick tree. Run from the repository root:

    python demos/05_embedding_clusters.py
"""

from protolens import builtin_rules, extract_embeddings, generate_synthetic_corpus, train, ward_clustering
from protolens.analysis import export_dendrogram
from protolens.corpus import Language
from protolens.model import ModelConfig
from protolens.trainer import TrainConfig

print("=== Training a small model to shape the embeddings ===")
data = generate_synthetic_corpus(builtin_rules(), 300, seed=7)
result = train(
    data,
    [],
    ModelConfig(embed_dim=32, hidden_dim=48, mlp_hidden=64, lang_embed_dim=32, seed=0),
    TrainConfig(max_epochs=15, seed=1),
)
print(f"final training loss {result.log[-1].train_loss:.3f}")

print("\n=== Latin phoneme representations ===")
labels, matrix = extract_embeddings(result.model, Language.LATIN)
print(f"{len(labels)} attested Latin symbols: {labels}")

dendrogram = ward_clustering(matrix, labels)
print("\nWard merges (smallest variance increase first):")
names = {i: label for i, label in enumerate(labels)}
for index, (a, b, distance, size) in enumerate(dendrogram.merges):
    left = names.get(a, f"#{a}")
    right = names.get(b, f"#{b}")
    names[len(labels) + index] = f"({left}+{right})"
    print(f"  {left:18s} + {right:18s} at {distance:6.3f} (size {size})")

export = export_dendrogram(dendrogram)
print("\nNewick form (plot-ready):")
print(export.newick)
