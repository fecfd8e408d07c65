"""Alignment statistics between TA and LLM grade sheets.

Per-criterion accuracy is exact score agreement; Pearson correlation and
mean absolute error are computed over per-diagram total scores. Degenerate
cases (zero variance, zero over-grades) are reported as None rather than
aborting report construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .rubric import Category, GradeSheet, Rubric, sum_points

REPORT_VERSION = 1


class EmptyInput(Exception):
    pass


class LengthMismatch(Exception):
    pass


class TooFewPoints(Exception):
    pass


class NoOverlap(Exception):
    pass


class UnknownCriterion(Exception):
    pass


class NoRuns(Exception):
    pass


class DiagramSetMismatch(Exception):
    pass


@dataclass(frozen=True)
class PairedScores:
    diagram_id: str
    criterion_id: int
    ta_score: float
    llm_score: float


@dataclass(frozen=True)
class CriterionStats:
    criterion_id: int
    n: int
    accuracy: float
    bias: float
    over_count: int
    under_count: int
    equal_count: int


@dataclass
class ComparisonReport:
    model_name: str
    per_criterion: list[CriterionStats]
    per_category: dict[Category, float]
    overall_accuracy: float
    pearson_r: Optional[float]
    mae: float
    mean_bias: float
    harshness_ratio: Optional[float]
    flagged: list[int]
    unmatched_diagrams: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "model_name": self.model_name,
            "overall_accuracy": self.overall_accuracy,
            "pearson_r": self.pearson_r,
            "mae": self.mae,
            "mean_bias": self.mean_bias,
            "harshness_ratio": self.harshness_ratio,
            "per_category": {c.value: a for c, a in self.per_category.items()},
            "per_criterion": [
                {
                    "criterion_id": s.criterion_id,
                    "n": s.n,
                    "accuracy": s.accuracy,
                    "bias": s.bias,
                    "over_count": s.over_count,
                    "under_count": s.under_count,
                    "equal_count": s.equal_count,
                }
                for s in self.per_criterion
            ],
            "flagged": list(self.flagged),
            "unmatched_diagrams": list(self.unmatched_diagrams),
        }

    def to_table(self) -> str:
        def fmt(value: Optional[float]) -> str:
            return "undefined" if value is None else f"{value:.4f}"

        lines = [
            f"Comparison report for model {self.model_name}",
            f"  overall accuracy : {self.overall_accuracy:.4f}",
            f"  pearson r        : {fmt(self.pearson_r)}",
            f"  mae              : {self.mae:.4f}",
            f"  mean bias        : {self.mean_bias:+.4f}",
            f"  harshness ratio  : {fmt(self.harshness_ratio)}",
            "",
            "  category accuracy:",
        ]
        for category in Category:
            if category in self.per_category:
                lines.append(f"    {category.value:<13}: {self.per_category[category]:.4f}")
        lines.append("")
        lines.append("  id   n    accuracy  bias     over under equal")
        for s in self.per_criterion:
            lines.append(
                f"  {s.criterion_id:<4} {s.n:<4} {s.accuracy:<9.4f} "
                f"{s.bias:<+8.4f} {s.over_count:<4} {s.under_count:<5} {s.equal_count}"
            )
        if self.flagged:
            lines.append("")
            lines.append(f"  flagged criteria: {self.flagged}")
        return "\n".join(lines)


def pair_sheets(
    ta: list[GradeSheet], llm: list[GradeSheet]
) -> tuple[list[PairedScores], list[str]]:
    """Pair scores on (diagram, criterion); returns (pairs, unmatched diagram ids)."""
    ta_by_diagram = {s.diagram_id: s for s in ta}
    llm_by_diagram = {s.diagram_id: s for s in llm}
    shared = sorted(set(ta_by_diagram) & set(llm_by_diagram))
    unmatched = sorted(set(ta_by_diagram) ^ set(llm_by_diagram))
    if not shared:
        raise NoOverlap("TA and LLM sheets share no diagrams")
    pairs: list[PairedScores] = []
    for diagram_id in shared:
        ta_sheet = ta_by_diagram[diagram_id]
        llm_sheet = llm_by_diagram[diagram_id]
        for cid in sorted(ta_sheet.entries):
            if cid in llm_sheet.entries:
                pairs.append(
                    PairedScores(
                        diagram_id=diagram_id,
                        criterion_id=cid,
                        ta_score=ta_sheet.entries[cid].score,
                        llm_score=llm_sheet.entries[cid].score,
                    )
                )
    return pairs, unmatched


def criterion_accuracy(pairs: list[PairedScores]) -> float:
    if not pairs:
        raise EmptyInput("no pairs")
    equal = sum(1 for p in pairs if p.ta_score == p.llm_score)
    return equal / len(pairs)


def pearson(x: list[float], y: list[float]) -> Optional[float]:
    """Product-moment correlation; None when either variance is zero."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise TooFewPoints("pearson needs at least 2 points")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    var_x = sum((v - mean_x) ** 2 for v in x)
    var_y = sum((v - mean_y) ** 2 for v in y)
    if var_x == 0 or var_y == 0:
        return None
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    r = cov / math.sqrt(var_x * var_y)
    return max(-1.0, min(1.0, r))


def mae(x: list[float], y: list[float]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)}")
    if not x:
        raise EmptyInput("mae needs at least one pair")
    return sum(abs(a - b) for a, b in zip(x, y)) / len(x)


def bias_stats(
    pairs: list[PairedScores],
) -> tuple[float, int, int, int, Optional[float]]:
    """Return (mean_bias, over_count, under_count, equal_count, harshness_ratio)."""
    if not pairs:
        raise EmptyInput("no pairs")
    diffs = [p.llm_score - p.ta_score for p in pairs]
    over = sum(1 for d in diffs if d > 0)
    under = sum(1 for d in diffs if d < 0)
    equal = len(diffs) - over - under
    mean_bias = sum(diffs) / len(diffs)
    ratio = under / over if over > 0 else None
    return mean_bias, over, under, equal, ratio


def category_accuracy(
    pairs: list[PairedScores], rubric: Rubric
) -> dict[Category, float]:
    known = {c.id: c.category for c in rubric.criteria}
    buckets: dict[Category, list[PairedScores]] = {}
    for pair in pairs:
        if pair.criterion_id not in known:
            raise UnknownCriterion(f"criterion {pair.criterion_id} not in rubric")
        buckets.setdefault(known[pair.criterion_id], []).append(pair)
    return {cat: criterion_accuracy(ps) for cat, ps in buckets.items()}


def _criterion_stats(cid: int, pairs: list[PairedScores]) -> CriterionStats:
    mean_bias, over, under, equal, _ = bias_stats(pairs)
    return CriterionStats(
        criterion_id=cid,
        n=len(pairs),
        accuracy=equal / len(pairs),
        bias=mean_bias,
        over_count=over,
        under_count=under,
        equal_count=equal,
    )


def build_report(
    ta_sheets: list[GradeSheet],
    llm_sheets: list[GradeSheet],
    rubric: Rubric,
    model_name: str,
    flag_threshold: float = 0.75,
) -> ComparisonReport:
    """Assemble every alignment statistic into one report."""
    pairs, unmatched = pair_sheets(ta_sheets, llm_sheets)

    by_criterion: dict[int, list[PairedScores]] = {}
    for pair in pairs:
        by_criterion.setdefault(pair.criterion_id, []).append(pair)
    per_criterion = [
        _criterion_stats(cid, ps) for cid, ps in sorted(by_criterion.items())
    ]

    mean_bias, _, _, _, harshness = bias_stats(pairs)

    # sum-level metrics over shared diagrams
    shared = sorted({p.diagram_id for p in pairs})
    ta_by_diagram = {s.diagram_id: s for s in ta_sheets}
    llm_by_diagram = {s.diagram_id: s for s in llm_sheets}
    ta_sums = [sum_points(ta_by_diagram[d], rubric) for d in shared]
    llm_sums = [sum_points(llm_by_diagram[d], rubric) for d in shared]
    pearson_r = pearson(ta_sums, llm_sums) if len(shared) >= 2 else None
    sum_mae = mae(ta_sums, llm_sums)

    flagged = sorted(
        (s.criterion_id for s in per_criterion if s.accuracy < flag_threshold),
        key=lambda cid: (
            next(s.accuracy for s in per_criterion if s.criterion_id == cid),
            cid,
        ),
    )

    return ComparisonReport(
        model_name=model_name,
        per_criterion=per_criterion,
        per_category=category_accuracy(pairs, rubric),
        overall_accuracy=criterion_accuracy(pairs),
        pearson_r=pearson_r,
        mae=sum_mae,
        mean_bias=mean_bias,
        harshness_ratio=harshness,
        flagged=flagged,
        unmatched_diagrams=unmatched,
    )


def flag_high_error(report: ComparisonReport, k: int) -> list[int]:
    """The k lowest-accuracy criteria; ties broken by larger |bias|, then lower id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        report.per_criterion,
        key=lambda s: (s.accuracy, -abs(s.bias), s.criterion_id),
    )
    return [s.criterion_id for s in ranked[:k]]


@dataclass(frozen=True)
class OptimalAssignment:
    per_criterion_model: dict[int, str]
    composed_accuracy: float


def compose_optimal(
    ta_sheets: list[GradeSheet],
    runs: dict[str, list[GradeSheet]],
    rubric: Rubric,
) -> OptimalAssignment:
    """Pick the best model per criterion and report the stitched accuracy.

    Ties go to the model with smaller |bias|, then lexicographic model name.
    Selection is in-sample: the same pairs pick the winner and score it.
    """
    if not runs:
        raise NoRuns("no model runs supplied")

    per_model_pairs: dict[str, dict[int, list[PairedScores]]] = {}
    diagram_sets: dict[str, frozenset[str]] = {}
    for model_name, sheets in runs.items():
        pairs, _ = pair_sheets(ta_sheets, sheets)
        diagram_sets[model_name] = frozenset(p.diagram_id for p in pairs)
        grouped: dict[int, list[PairedScores]] = {}
        for pair in pairs:
            grouped.setdefault(pair.criterion_id, []).append(pair)
        per_model_pairs[model_name] = grouped

    if len(set(diagram_sets.values())) > 1:
        raise DiagramSetMismatch(
            f"model runs cover different diagram sets: "
            f"{ {m: sorted(s) for m, s in diagram_sets.items()} }"
        )

    assignment: dict[int, str] = {}
    matched = 0
    total = 0
    for criterion in rubric.criteria:
        candidates = []
        for model_name in sorted(per_model_pairs):
            pairs = per_model_pairs[model_name].get(criterion.id)
            if not pairs:
                continue
            mean_bias, _, _, equal, _ = bias_stats(pairs)
            accuracy = equal / len(pairs)
            candidates.append((-accuracy, abs(mean_bias), model_name, pairs, equal))
        if not candidates:
            continue
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        _, _, best_model, best_pairs, best_equal = candidates[0]
        assignment[criterion.id] = best_model
        matched += best_equal
        total += len(best_pairs)

    composed = matched / total if total else 0.0
    return OptimalAssignment(per_criterion_model=assignment, composed_accuracy=composed)
