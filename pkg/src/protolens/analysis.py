"""Post-hoc analyses over trained checkpoints.

Covers agglomerative Ward clustering of per-language phoneme
representations (the combined symbol-plus-language projection, the only
language-specific vector a shared embedding table offers) and
most-attended-language summaries derived from greedy-decoding attention
traces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import DAUGHTERS, MISSING_ID, SEP_ID, Language
from .model import AttentionTrace, Model, embed_positions, projected_tables


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence of an agglomerative clustering.

    Clusters are numbered scipy-style: leaves 0..n-1, the i-th merge
    creates cluster n+i. Each merge is (cluster_a, cluster_b, linkage
    distance, new cluster size) with cluster_a < cluster_b.
    """

    labels: tuple[str, ...]
    merges: tuple[tuple[int, int, float, int], ...]

    def __post_init__(self):
        if len(self.merges) != len(self.labels) - 1:
            raise ValueError("a dendrogram over n leaves needs exactly n-1 merges")


def extract_embeddings(model: Model, language: Language | int) -> tuple[list[str], np.ndarray]:
    """Combined representations of every symbol attested in one language."""
    try:
        language = Language(language)
    except ValueError:
        raise ValueError(f"unknown language {language!r}") from None
    symbols = model.attested.get(int(language), [])
    if not symbols:
        raise ValueError(f"no attested symbols recorded for {language.name}")
    ids = np.array([model.vocab.id(s) for s in symbols], dtype=np.int64)
    langs = np.full(len(symbols), int(language), dtype=np.int64)
    matrix = embed_positions(projected_tables(model.params), ids, langs).data
    return list(symbols), np.asarray(matrix, dtype=np.float64)


def ward_clustering(matrix: np.ndarray, labels: Sequence[str] | None = None) -> Dendrogram:
    """Agglomerative clustering minimizing the within-cluster variance increase.

    Uses the Lance-Williams recurrence for Ward's criterion on squared
    Euclidean distances; the reported linkage distance is the square root
    (so two singletons merge at their Euclidean distance). Ties pick the
    lexicographically smallest (cluster_a, cluster_b) pair.
    """
    points = np.asarray(matrix, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("ward clustering needs a 2-d matrix with at least 2 rows")
    n = points.shape[0]
    if labels is None:
        labels = [str(i) for i in range(n)]
    if len(labels) != n:
        raise ValueError("one label per row required")
    if len(set(labels)) != n:
        raise ValueError("duplicate labels")

    diff = points[:, None, :] - points[None, :, :]
    d2: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            d2[(i, j)] = float((diff[i, j] ** 2).sum())
    sizes = {i: 1 for i in range(n)}
    active = list(range(n))
    merges = []
    next_id = n
    while len(active) > 1:
        best_pair = None
        best = math.inf
        for a_index in range(len(active)):
            for b_index in range(a_index + 1, len(active)):
                pair = (active[a_index], active[b_index])
                value = d2[pair]
                if value < best:
                    best = value
                    best_pair = pair
        i, j = best_pair
        s_i, s_j = sizes[i], sizes[j]
        merges.append((i, j, math.sqrt(max(best, 0.0)), s_i + s_j))
        d_ij = d2.pop((i, j))
        for k in active:
            if k == i or k == j:
                continue
            s_k = sizes[k]
            d_ik = d2.pop((min(i, k), max(i, k)))
            d_jk = d2.pop((min(j, k), max(j, k)))
            updated = ((s_i + s_k) * d_ik + (s_j + s_k) * d_jk - s_k * d_ij) / (s_i + s_j + s_k)
            d2[(k, next_id)] = updated
        active = [c for c in active if c not in (i, j)]
        active.append(next_id)
        sizes[next_id] = s_i + s_j
        next_id += 1
    return Dendrogram(labels=tuple(labels), merges=tuple(merges))


@dataclass(frozen=True)
class DendrogramExport:
    newick: str
    merge_json: str


def dendrogram_to_newick(d: Dendrogram) -> str:
    """Newick text with branch lengths spanning between merge heights.

    Labels are emitted verbatim; they must not contain the Newick
    structural characters "(),:;".
    """
    n = len(d.labels)
    rendered: dict[int, tuple[str, float]] = {
        i: (label, 0.0) for i, label in enumerate(d.labels)
    }
    for index, (a, b, distance, _) in enumerate(d.merges):
        text_a, height_a = rendered.pop(a)
        text_b, height_b = rendered.pop(b)
        branch_a = distance - height_a
        branch_b = distance - height_b
        rendered[n + index] = (
            f"({text_a}:{branch_a:.10g},{text_b}:{branch_b:.10g})",
            distance,
        )
    (text, _), = rendered.values()
    return text + ";"


def dendrogram_to_json(d: Dendrogram) -> str:
    return json.dumps(
        {
            "labels": list(d.labels),
            "merges": [[a, b, distance, size] for a, b, distance, size in d.merges],
        },
        ensure_ascii=False,
    )


def dendrogram_from_json(text: str) -> Dendrogram:
    data = json.loads(text)
    return Dendrogram(
        labels=tuple(data["labels"]),
        merges=tuple((int(a), int(b), float(dist), int(size)) for a, b, dist, size in data["merges"]),
    )


def export_dendrogram(d: Dendrogram) -> DendrogramExport:
    return DendrogramExport(newick=dendrogram_to_newick(d), merge_json=dendrogram_to_json(d))


@dataclass(frozen=True)
class AttentionSummary:
    """Most-attended-language counts by output position and output symbol.

    Raw count matrices include every decoding step; steps whose
    most-attended position held a SEP or MISSING token are additionally
    broken out in special_by_position. Normalized matrices divide each
    column by the language's corpus-wide input-position frequency and
    then normalize rows to sum to 1; rows with no raw counts stay
    all-zero and are flagged.
    """

    languages: tuple[int, ...]
    symbols: tuple[str, ...]
    raw_by_position: np.ndarray
    raw_by_symbol: np.ndarray
    special_by_position: np.ndarray
    by_position: np.ndarray
    by_symbol: np.ndarray
    zero_position_rows: tuple[int, ...] = field(default=())
    zero_symbol_rows: tuple[int, ...] = field(default=())

    def raw_total(self) -> int:
        return int(self.raw_by_position.sum())


def attention_summary(
    traces: Sequence[AttentionTrace],
    language_counts: Mapping[int, int],
    normalize: str = "language_frequency",
) -> AttentionSummary:
    """Aggregate which language the decoder attends to most at each step."""
    if not traces:
        raise ValueError("no attention traces to summarize")
    if normalize not in ("language_frequency", "none"):
        raise ValueError(f"unknown normalization policy {normalize!r}")
    sep_like = {SEP_ID, MISSING_ID}
    languages = tuple(int(lang) for lang in DAUGHTERS)
    column = {lang: i for i, lang in enumerate(languages)}
    max_steps = max(len(trace) for trace in traces)
    raw_pos = np.zeros((max_steps, len(languages)), dtype=np.int64)
    special_pos = np.zeros((max_steps, len(languages)), dtype=np.int64)
    symbol_rows: dict[str, int] = {}
    symbol_counts: list[np.ndarray] = []
    for trace in traces:
        for step in range(len(trace)):
            position = int(np.argmax(trace.weights[step]))
            lang = column[trace.input_langs[position]]
            raw_pos[step, lang] += 1
            if trace.input_ids[position] in sep_like:
                special_pos[step, lang] += 1
            symbol = trace.emitted_symbols[step]
            if symbol not in symbol_rows:
                symbol_rows[symbol] = len(symbol_rows)
                symbol_counts.append(np.zeros(len(languages), dtype=np.int64))
            symbol_counts[symbol_rows[symbol]][lang] += 1
    raw_sym = np.stack(symbol_counts, axis=0)

    divisor = np.ones(len(languages), dtype=np.float64)
    if normalize == "language_frequency":
        divisor = np.array([max(language_counts.get(lang, 0), 1) for lang in languages], dtype=np.float64)

    def normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
        weighted = raw.astype(np.float64) / divisor
        sums = weighted.sum(axis=1, keepdims=True)
        zero_rows = tuple(int(i) for i in np.where(raw.sum(axis=1) == 0)[0])
        safe = np.where(sums > 0, sums, 1.0)
        return weighted / safe, zero_rows

    by_position, zero_position_rows = normalize_rows(raw_pos)
    by_symbol, zero_symbol_rows = normalize_rows(raw_sym)
    return AttentionSummary(
        languages=languages,
        symbols=tuple(symbol_rows),
        raw_by_position=raw_pos,
        raw_by_symbol=raw_sym,
        special_by_position=special_pos,
        by_position=by_position,
        by_symbol=by_symbol,
        zero_position_rows=zero_position_rows,
        zero_symbol_rows=zero_symbol_rows,
    )


def summary_to_csv(summary: AttentionSummary) -> tuple[str, str]:
    """CSV texts (position x language, symbol x language), plot-ready."""
    names = [Language(lang).name.lower() for lang in summary.languages]

    def table(row_header: str, row_names: Sequence[str], matrix: np.ndarray) -> str:
        lines = [",".join([row_header] + names)]
        for name, row in zip(row_names, matrix):
            lines.append(",".join([name] + [f"{v:.6f}" for v in row]))
        return "\n".join(lines) + "\n"

    positions = [str(i) for i in range(summary.by_position.shape[0])]
    return (
        table("position", positions, summary.by_position),
        table("symbol", list(summary.symbols), summary.by_symbol),
    )
