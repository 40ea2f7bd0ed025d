"""The sound-change rule harness: table, test set, and scoring predicate.

Run from the repository root:

    python demos/04_rule_harness.py
"""

from protolens import builtin_rules, make_rule_testset, score_rule_prediction
from protolens.corpus import DAUGHTERS, Word

rules = builtin_rules()
print(f"=== {len(rules)} phonological-change rules ===")
print(f"{'rule':24s} {'environment':24s} {'reflexes (rm fr it sp pt)':28s} gold")
for rule in rules[:8]:
    reflexes = " ".join(
        rule.reflexes[lang].text() if lang in rule.reflexes else "-" for lang in DAUGHTERS
    )
    print(f"{rule.id:24s} {rule.environment:24s} {reflexes:28s} {rule.gold_latin.text()}")
print(f"... plus {len(rules) - 8} more\n")

testset = make_rule_testset(rules)
print(f"the rules become a {len(testset)}-entry synthetic test set for any trained model\n")

print("=== Scoring ignores extra material around the focus ===")
examples = [
    ("w", "wam"),      # extra ending after an intact focus: pass
    ("U-free-syllable", "pUpUm"),  # doubled carrier, focus intact: pass
    ("aI", "pEm"),     # diphthong collapsed to E: fail
    ("b-intervocalic", "awam"),  # b weakened to w: fail
]
by_id = {rule.id: rule for rule in rules}
for rule_id, text in examples:
    rule = by_id[rule_id]
    outcome = score_rule_prediction(rule, Word(tuple(text)))
    verdict = "pass" if outcome.passed else "fail"
    print(f"  rule {rule_id:18s} gold {rule.gold_latin.text():6s} prediction {text:8s} -> {verdict}")

echo = [score_rule_prediction(rule, rule.gold_latin) for rule in rules]
print(f"\necho of the gold forms scores {sum(o.passed for o in echo)}/{len(rules)} (harness sanity check)")
recorded = sum(rule.expected_correct for rule in rules)
print(f"the stored reference verdicts mark {recorded}/{len(rules)} rules as recoverable")
