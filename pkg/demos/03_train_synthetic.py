"""Train a reconstruction model on a regular synthetic corpus.

The sound-change rule table doubles as a toy generator: composed carrier
syllables map deterministically to daughter forms, so a small model can
learn the inverse mapping in under a minute. Run from the repository
root:

    python demos/03_train_synthetic.py
"""

import time

from protolens import builtin_rules, evaluate, generate_synthetic_corpus, train
from protolens.model import ModelConfig
from protolens.trainer import TrainConfig, predict

print("=== Generating a synthetic cognate corpus ===")
rules = builtin_rules()
corpus = generate_synthetic_corpus(rules, 2000, seed=42)
seen, unique = set(), []
for entry in corpus:
    if entry.latin.text() not in seen:
        seen.add(entry.latin.text())
        unique.append(entry)
train_set, dev_set, test_set = unique[:700], unique[700:780], unique[780:860]
print(f"{len(unique)} unique entries -> train {len(train_set)}, dev {len(dev_set)}, test {len(test_set)}")

print("\n=== Training (small model, dev-based early stopping) ===")
model_config = ModelConfig(embed_dim=64, hidden_dim=96, mlp_hidden=128, lang_embed_dim=64, seed=1)
train_config = TrainConfig(max_epochs=50, patience=10, seed=2)
started = time.time()
result = train(train_set, dev_set, model_config, train_config)
print(f"trained {len(result.log)} epochs in {time.time() - started:.0f}s; best epoch {result.best_epoch}")
for row in result.log[:: max(1, len(result.log) // 8)]:
    print(f"  epoch {row.epoch:3d}  loss {row.train_loss:.4f}  dev edit {row.dev_avg_edit:.3f}  dev exact {row.dev_exact_rate:.1%}")

print("\n=== Held-out evaluation ===")
report = evaluate(test_set, result.model)
print(report.to_table())

print("\n=== Sample reconstructions ===")
for entry in test_set[:6]:
    guess = predict(result.model, entry)
    mark = "=" if guess == entry.latin else "x"
    print(f"  {mark} gold {entry.latin.text():12s} predicted {guess.text()}")
