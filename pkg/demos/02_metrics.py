"""Edit-distance metrics, aggregate reports, and confusion counts.

Run from the repository root:

    python demos/02_metrics.py
"""

from protolens import align, edit_distance, normalized_edit_distance, report, substitution_matrix
from protolens.metrics import substitution_matrix_to_csv

print("=== Edit distance on reconstruction slips ===")
cases = [
    ("pescarium", "piscarium"),  # high/mid vowel confusion
    ("aspargum", "asparagum"),  # dropped unstressed syllable
    ("wessarE", "weksarE"),  # cluster assimilation
    ("lactem", "lactem"),  # perfect reconstruction
]
for pred, gold in cases:
    d = edit_distance(pred, gold)
    nd = normalized_edit_distance(pred, gold)
    print(f"  {pred:10s} vs {gold:10s} -> distance {d}, normalized {nd:.3f}")

print("\n=== Alignment scripts ===")
for op in align("pEm", "paI"):
    print(f"  {op.kind:10s} {op.source or '':2s} -> {op.target or ''}")

print("\n=== Aggregate report (cumulative edit-distance buckets) ===")
pairs = [(pred, gold) for pred, gold in cases] + [("abc", "abcd"), ("xyz", "xbz")]
rep = report(pairs)
print(rep.to_table())

print("\n=== Vowel substitution counts ===")
vowels = set("aeiouEIOU")
confusions = substitution_matrix(
    [("pescarium", "piscarium"), ("pescarium", "piscarium"), ("pUp", "pop")],
    symbols=vowels,
)
print(substitution_matrix_to_csv(confusions))
print("(singleton cells can be dropped with exclude_singletons=True)")
