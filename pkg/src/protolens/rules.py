"""Sound-change rule harness and synthetic corpus generation.

Each rule pairs a Latin focus segment (in its carrier syllable) with the
per-language reflex forms the change produced. A model prediction passes
a rule when the alignment against the gold Latin form leaves every focus
symbol matched; extra material the model appends (usually morphological
endings such as "m" or "Em") aligns as deletions and is ignored. The
rules double as a toy sound-change applier: composing carrier syllables
and their reflexes yields arbitrarily many synthetic cognate sets with a
fully regular daughters-to-Latin mapping.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from . import metrics
from .corpus import DAUGHTERS, PHONETIC, CognateSet, Language, Word

RULES_FORMAT = "protolens-rules-v1"
MISSING_CELL = "-"
MAX_UNITS_PER_WORD = 3


@dataclass(frozen=True)
class SoundRule:
    """One phonological-change rule: focus segment, environment, reflexes."""

    id: str
    focus: tuple[str, ...]
    environment: str
    reflexes: dict[Language, Word]
    gold_latin: Word
    expected_correct: bool

    def __post_init__(self):
        if not self.reflexes:
            raise ValueError(f"rule {self.id}: no reflex forms")
        if _find_focus(self.gold_latin.symbols, self.focus) is None:
            raise ValueError(f"rule {self.id}: focus not contained in gold Latin form")


@dataclass(frozen=True)
class RuleOutcome:
    rule_id: str
    prediction: Word
    passed: bool
    focus_found_at: int | None


def _find_focus(symbols: Sequence[str], focus: Sequence[str]) -> int | None:
    """Index of the first contiguous occurrence of focus, or None."""
    n, k = len(symbols), len(focus)
    for start in range(n - k + 1):
        if tuple(symbols[start : start + k]) == tuple(focus):
            return start
    return None


def load_rules(text: str) -> list[SoundRule]:
    """Parse the versioned rule TSV."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0].strip() != f"#format={RULES_FORMAT}":
        raise ValueError(f"rule table must start with #format={RULES_FORMAT}")
    header = lines[1].split("\t")
    expected_header = [
        "id",
        "focus",
        "environment",
        "romanian",
        "french",
        "italian",
        "spanish",
        "portuguese",
        "gold_latin",
        "expected_correct",
    ]
    if header != expected_header:
        raise ValueError(f"unexpected rule table header: {header}")
    rules = []
    for line in lines[2:]:
        cells = line.split("\t")
        if len(cells) != len(expected_header):
            raise ValueError(f"rule row has {len(cells)} cells: {line!r}")
        row = dict(zip(expected_header, cells))
        reflexes = {}
        for lang, column in zip(DAUGHTERS, expected_header[3:8]):
            cell = row[column].strip()
            if cell and cell != MISSING_CELL:
                reflexes[lang] = Word(tuple(cell), PHONETIC)
        rules.append(
            SoundRule(
                id=row["id"],
                focus=tuple(row["focus"]),
                environment=row["environment"],
                reflexes=reflexes,
                gold_latin=Word(tuple(row["gold_latin"]), PHONETIC),
                expected_correct=row["expected_correct"] == "yes",
            )
        )
    return rules


def builtin_rules() -> list[SoundRule]:
    """The packaged 33-rule table."""
    text = resources.files("protolens").joinpath("data/rules.tsv").read_text("utf-8")
    return load_rules(text)


def make_rule_testset(rules: Sequence[SoundRule]) -> list[CognateSet]:
    """One cognate set per rule: reflexes as daughters, gold Latin as target."""
    return [
        CognateSet(daughters=dict(rule.reflexes), latin=rule.gold_latin) for rule in rules
    ]


def score_rule_prediction(rule: SoundRule, prediction: Word | Sequence[str]) -> RuleOutcome:
    """Pass iff every focus symbol is aligned as a match against the gold.

    Substituted, deleted, or model-omitted focus symbols fail the rule;
    any other material in the prediction is ignored. The focus is located
    at its first occurrence in the gold form.
    """
    symbols = tuple(prediction)
    word = prediction if isinstance(prediction, Word) else Word(symbols, rule.gold_latin.mode)
    start = _find_focus(rule.gold_latin.symbols, rule.focus)
    end = start + len(rule.focus)
    script = metrics.align(symbols, rule.gold_latin.symbols)
    gold_pos = 0
    pred_pos = 0
    matched = 0
    first_pred_pos = None
    for op in script:
        if op.kind == metrics.MATCH:
            if start <= gold_pos < end:
                if gold_pos == start:
                    first_pred_pos = pred_pos
                matched += 1
            gold_pos += 1
            pred_pos += 1
        elif op.kind == metrics.SUBSTITUTE:
            gold_pos += 1
            pred_pos += 1
        elif op.kind == metrics.INSERT:
            gold_pos += 1
        else:  # delete
            pred_pos += 1
    passed = matched == len(rule.focus)
    return RuleOutcome(
        rule_id=rule.id,
        prediction=word,
        passed=passed,
        focus_found_at=first_pred_pos if passed else None,
    )


def outcomes_to_json(outcomes: Sequence[RuleOutcome], rules: Sequence[SoundRule]) -> str:
    """Per-rule verdicts plus the overall pass count."""
    by_id = {rule.id: rule for rule in rules}
    entries = []
    for outcome in outcomes:
        rule = by_id[outcome.rule_id]
        entries.append(
            {
                "rule": outcome.rule_id,
                "environment": rule.environment,
                "gold": rule.gold_latin.text(),
                "prediction": outcome.prediction.text(),
                "passed": outcome.passed,
                "focus_found_at": outcome.focus_found_at,
                "expected_correct": rule.expected_correct,
            }
        )
    return json.dumps(
        {
            "passed": sum(1 for o in outcomes if o.passed),
            "total": len(outcomes),
            "expected_correct_total": sum(1 for r in rules if r.expected_correct),
            "rules": entries,
        },
        ensure_ascii=False,
        indent=2,
    )


def deterministic_rules(rules: Sequence[SoundRule]) -> list[SoundRule]:
    """Rules usable for corpus generation.

    A rule qualifies when every daughter reflex is present, its daughter
    tuple is not shared with another rule (a shared tuple makes the
    Latin side unrecoverable, e.g. the aI/OI pair), and the carrier
    syllable is at most 3 symbols long.
    """
    def daughter_key(rule: SoundRule):
        return tuple(rule.reflexes[lang].text() for lang in DAUGHTERS if lang in rule.reflexes)

    complete = [rule for rule in rules if len(rule.reflexes) == len(DAUGHTERS)]
    tuple_counts = Counter(daughter_key(rule) for rule in complete)
    return [
        rule
        for rule in complete
        if tuple_counts[daughter_key(rule)] == 1 and len(rule.gold_latin) <= MAX_UNITS_PER_WORD
    ]


def generate_synthetic_corpus(rules: Sequence[SoundRule], n: int, seed: int) -> list[CognateSet]:
    """Compose pseudo-words of 1-3 carrier units into cognate sets.

    Every daughter word is the concatenation of its units' reflexes, so
    the daughters-to-Latin mapping is a deterministic function and a
    sufficiently large model can fit it exactly.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    usable = deterministic_rules(rules)
    if not usable:
        raise ValueError("no deterministic rules available for generation")
    rng = np.random.default_rng(seed)
    entries = []
    for _ in range(n):
        count = int(rng.integers(1, MAX_UNITS_PER_WORD + 1))
        units = [usable[int(i)] for i in rng.integers(0, len(usable), size=count)]
        latin = Word(tuple(s for unit in units for s in unit.gold_latin.symbols), PHONETIC)
        daughters = {
            lang: Word(tuple(s for unit in units for s in unit.reflexes[lang].symbols), PHONETIC)
            for lang in DAUGHTERS
        }
        entries.append(CognateSet(daughters=daughters, latin=latin))
    return entries
