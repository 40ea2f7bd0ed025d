"""Edit-distance metrics, aggregate reports, and alignment machinery.

Distances are computed over symbol tokens (one entry per tokenized
character), so e.g. a vowel-length mark counts as a single edit. All
functions accept any sequence of string tokens, including Word objects.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

MATCH = "match"
SUBSTITUTE = "substitute"
INSERT = "insert"
DELETE = "delete"

BUCKETS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class EditOp:
    """One alignment operation transforming a source into a target.

    source is the symbol consumed from the source sequence (None for
    insert); target is the symbol produced in the target sequence (None
    for delete). For a match, source == target.
    """

    kind: str
    source: str | None
    target: str | None


@dataclass(frozen=True)
class EditDistanceReport:
    """Aggregate edit-distance statistics over a set of (pred, gold) pairs."""

    bucket_rates: tuple[float, float, float, float, float]
    average: float
    average_normalized: float
    n: int

    def exact_rate(self) -> float:
        return self.bucket_rates[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "bucket_rates": {f"<={k}": r for k, r in zip(BUCKETS, self.bucket_rates)},
                "average": self.average,
                "average_normalized": self.average_normalized,
            },
            indent=2,
            sort_keys=True,
        )

    def to_table(self) -> str:
        """Plain-text table with cumulative bucket columns and averages."""
        header = ["0", "<=1", "<=2", "<=3", "<=4", "Average", "Avg, norm"]
        values = [f"{r * 100:.1f}%" for r in self.bucket_rates]
        values += [f"{self.average:.3f}", f"{self.average_normalized:.3f}"]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        head = "  ".join(h.rjust(w) for h, w in zip(header, widths))
        body = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return f"{head}\n{body}\n(n={self.n})"


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Levenshtein distance with unit costs over symbol tokens."""
    a = list(a)
    b = list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, sym_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, sym_b in enumerate(b, start=1):
            cost = 0 if sym_a == sym_b else 1
            cur[j] = min(prev[j - 1] + cost, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[len(b)]


def normalized_edit_distance(
    pred: Sequence[str], gold: Sequence[str], denominator: str = "gold"
) -> float:
    """Edit distance divided by word length.

    The denominator defaults to the gold length; pass denominator="pred"
    to divide by the prediction length instead.
    """
    if denominator not in ("gold", "pred"):
        raise ValueError(f"unknown denominator {denominator!r}")
    ref = gold if denominator == "gold" else pred
    n = len(list(ref))
    if n == 0:
        raise ValueError(f"normalization by empty {denominator} word")
    return edit_distance(pred, gold) / n


def align(pred: Sequence[str], gold: Sequence[str]) -> list[EditOp]:
    """One minimal-cost edit script turning pred into gold.

    Traceback ties are broken by preferring match > substitute > delete
    > insert, so the script is deterministic. Script cost (number of
    non-match ops) always equals edit_distance(pred, gold).
    """
    pred = list(pred)
    gold = list(gold)
    m, n = len(pred), len(gold)
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dist[i][0] = i
    for j in range(n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        row = dist[i]
        prev_row = dist[i - 1]
        for j in range(1, n + 1):
            cost = 0 if pred[i - 1] == gold[j - 1] else 1
            row[j] = min(prev_row[j - 1] + cost, prev_row[j] + 1, row[j - 1] + 1)

    ops: list[EditOp] = []
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and pred[i - 1] == gold[j - 1] and dist[i - 1][j - 1] == here:
            ops.append(EditOp(MATCH, pred[i - 1], gold[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == here:
            ops.append(EditOp(SUBSTITUTE, pred[i - 1], gold[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(EditOp(DELETE, pred[i - 1], None))
            i = i - 1
        else:
            ops.append(EditOp(INSERT, None, gold[j - 1]))
            j = j - 1
    ops.reverse()
    return ops


def script_cost(script: Iterable[EditOp]) -> int:
    return sum(1 for op in script if op.kind != MATCH)


def apply_script(script: Iterable[EditOp], source: Sequence[str]) -> list[str]:
    """Replay an edit script against its source, yielding the target."""
    out: list[str] = []
    pos = 0
    source = list(source)
    for op in script:
        if op.kind == MATCH:
            if source[pos] != op.source:
                raise ValueError(f"script does not fit source at position {pos}")
            out.append(op.target)
            pos += 1
        elif op.kind == SUBSTITUTE:
            out.append(op.target)
            pos += 1
        elif op.kind == INSERT:
            out.append(op.target)
        elif op.kind == DELETE:
            pos += 1
        else:
            raise ValueError(f"unknown op kind {op.kind!r}")
    if pos != len(source):
        raise ValueError("script does not consume the whole source")
    return out


def report(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]], denominator: str = "gold"
) -> EditDistanceReport:
    """Aggregate (pred, gold) pairs into cumulative buckets and averages."""
    if not pairs:
        raise ValueError("cannot report on an empty pair list")
    distances = []
    normalized = []
    for pred, gold in pairs:
        distances.append(edit_distance(pred, gold))
        normalized.append(normalized_edit_distance(pred, gold, denominator=denominator))
    n = len(distances)
    rates = tuple(sum(1 for d in distances if d <= k) / n for k in BUCKETS)
    return EditDistanceReport(
        bucket_rates=rates,
        average=sum(distances) / n,
        average_normalized=sum(normalized) / n,
        n=n,
    )


def substitution_matrix(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
    symbols: Iterable[str] | None = None,
    exclude_singletons: bool = False,
) -> dict[tuple[str, str], int]:
    """Count substitutions keyed by (gold symbol, predicted symbol).

    When a symbol filter is given, only substitutions whose gold and
    predicted symbols are both in the filter are counted (e.g. pass the
    vowel set to get a vowel confusion matrix). exclude_singletons drops
    cells with a count of 1.
    """
    allowed = set(symbols) if symbols is not None else None
    counts: Counter[tuple[str, str]] = Counter()
    for pred, gold in pairs:
        for op in align(pred, gold):
            if op.kind != SUBSTITUTE:
                continue
            if allowed is not None and (op.target not in allowed or op.source not in allowed):
                continue
            counts[(op.target, op.source)] += 1
    if exclude_singletons:
        counts = Counter({k: v for k, v in counts.items() if v > 1})
    return dict(counts)


def substitution_matrix_to_csv(matrix: dict[tuple[str, str], int]) -> str:
    """CSV text (gold, pred, count), sorted by descending count then keys."""
    lines = ["gold,pred,count"]
    for (gold_sym, pred_sym), count in sorted(
        matrix.items(), key=lambda item: (-item[1], item[0])
    ):
        lines.append(f"{gold_sym},{pred_sym},{count}")
    return "\n".join(lines) + "\n"
