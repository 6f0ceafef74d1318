"""Evaluation and inter-annotator agreement statistics.

Covers per-label / micro / macro precision-recall-F1, McNemar's paired
significance test, Krippendorff's alpha (nominal, missing data allowed),
Fleiss' kappa, and label co-occurrence matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Discordant-pair count at or below which the exact binomial branch of
# McNemar's test is used instead of the chi-square approximation.
MCNEMAR_EXACT_CUTOFF = 25


class MetricError(ValueError):
    """Raised when a metric is undefined for the given input."""


@dataclass
class LabelScores:
    precision: float
    recall: float
    f1: float
    support: int
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    """Per-label and aggregate classification scores."""

    labels: list[str]
    per_label: dict[str, LabelScores]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_label": {
                name: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for name, s in self.per_label.items()
            },
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
        }


def _safe_div(num: float, den: float) -> float:
    # 0/0 is defined as 0 so rare labels never produce NaN scores.
    return num / den if den else 0.0


def prf1(gold: np.ndarray, pred: np.ndarray, labels: Sequence[str]) -> EvalReport:
    """Precision/recall/F1 per label plus micro and macro aggregates.

    `gold` and `pred` are multi-hot matrices of shape (n_samples, n_labels).
    Micro scores pool TP/FP/FN over labels; macro-F1 is the unweighted
    mean of per-label F1.
    """
    gold = np.asarray(gold, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if gold.shape != pred.shape:
        raise MetricError(f"shape mismatch: gold {gold.shape} vs pred {pred.shape}")
    if gold.ndim != 2 or gold.shape[1] != len(labels):
        raise MetricError(f"expected (n, {len(labels)}) matrices, got {gold.shape}")

    per_label: dict[str, LabelScores] = {}
    total_tp = total_fp = total_fn = 0
    f1s = []
    for j, name in enumerate(labels):
        tp = int(np.sum((gold[:, j] == 1) & (pred[:, j] == 1)))
        fp = int(np.sum((gold[:, j] == 0) & (pred[:, j] == 1)))
        fn = int(np.sum((gold[:, j] == 1) & (pred[:, j] == 0)))
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * p * r, p + r)
        per_label[name] = LabelScores(p, r, f1, support=int(np.sum(gold[:, j])), tp=tp, fp=fp, fn=fn)
        total_tp += tp
        total_fp += fp
        total_fn += fn
        f1s.append(f1)

    micro_p = _safe_div(total_tp, total_tp + total_fp)
    micro_r = _safe_div(total_tp, total_tp + total_fn)
    micro_f1 = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)
    macro_f1 = float(np.mean(f1s)) if f1s else 0.0
    return EvalReport(list(labels), per_label, micro_p, micro_r, micro_f1, macro_f1)


@dataclass
class McNemarResult:
    label: str
    b: int  # baseline correct, challenger wrong
    c: int  # challenger correct, baseline wrong
    p_value: float
    significant_05: bool
    significant_01: bool
    exact: bool


def mcnemar(gold: Sequence[int], pred_a: Sequence[int], pred_b: Sequence[int], label: str = "") -> McNemarResult:
    """McNemar's test on the discordant predictions of two classifiers.

    `pred_a` is the baseline, `pred_b` the challenger; correctness per
    sentence is agreement with `gold`. For b + c <= 25 the exact
    two-sided binomial test is used, otherwise the chi-square statistic
    with continuity correction ((|b-c|-1)^2 / (b+c), 1 df).
    """
    gold = list(gold)
    pred_a = list(pred_a)
    pred_b = list(pred_b)
    if not (len(gold) == len(pred_a) == len(pred_b)):
        raise MetricError(
            f"length mismatch: gold {len(gold)}, pred_a {len(pred_a)}, pred_b {len(pred_b)}"
        )

    b = c = 0
    for g, a, ch in zip(gold, pred_a, pred_b):
        a_ok = a == g
        b_ok = ch == g
        if a_ok and not b_ok:
            b += 1
        elif b_ok and not a_ok:
            c += 1

    n = b + c
    if n == 0:
        p = 1.0
        exact = True
    elif n <= MCNEMAR_EXACT_CUTOFF:
        k0 = max(b, c)
        tail = sum(math.comb(n, k) for k in range(k0, n + 1))
        p = min(1.0, 2.0 * tail * 0.5**n)
        exact = True
    else:
        stat = (abs(b - c) - 1) ** 2 / n
        # chi-square survival function with 1 degree of freedom
        p = math.erfc(math.sqrt(stat / 2.0))
        exact = False
    return McNemarResult(label, b, c, p, significant_05=p < 0.05, significant_01=p < 0.01, exact=exact)


def _pairable_units(matrix: Sequence[Sequence[Optional[int]]]) -> list[list[int]]:
    units = []
    for row in matrix:
        vals = [int(v) for v in row if v is not None]
        if len(vals) >= 2:
            units.append(vals)
    return units


def krippendorff_alpha(matrix: Sequence[Sequence[Optional[int]]]) -> float:
    """Krippendorff's alpha for nominal data via the coincidence matrix.

    `matrix` is units x annotators; missing annotations are None. Units
    with fewer than two annotations are excluded. Raises MetricError
    when no pairable values remain or expected disagreement is zero.
    """
    units = _pairable_units(matrix)
    if not units:
        raise MetricError("alpha undefined: no units with at least two annotations")

    categories = sorted({v for vals in units for v in vals})
    idx = {c: i for i, c in enumerate(categories)}
    k = len(categories)
    coincidence = np.zeros((k, k))
    for vals in units:
        m = len(vals)
        for a in vals:
            for b_ in vals:
                coincidence[idx[a], idx[b_]] += 1.0 / (m - 1)
        # remove the self-pairings counted above
        for a in vals:
            coincidence[idx[a], idx[a]] -= 1.0 / (m - 1)

    n_c = coincidence.sum(axis=1)
    n = n_c.sum()
    observed_agreement = np.trace(coincidence) / n
    expected_agreement = float(np.sum(n_c * (n_c - 1))) / (n * (n - 1))
    if expected_agreement >= 1.0:
        # all values identical: no chance-corrected scale exists, but
        # perfect observed agreement is conventionally alpha = 1
        if observed_agreement >= 1.0:
            return 1.0
        raise MetricError("alpha undefined: expected disagreement is zero")
    return float((observed_agreement - expected_agreement) / (1.0 - expected_agreement))


def fleiss_kappa(matrix: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa for a complete units x annotators matrix.

    Every unit must have the same number of annotators m >= 2. Raises
    MetricError when expected agreement is 1 (all annotations a single
    category), where kappa is undefined.
    """
    if not matrix:
        raise MetricError("kappa undefined: empty matrix")
    m = len(matrix[0])
    if m < 2:
        raise MetricError("kappa requires at least two annotators per unit")
    for row in matrix:
        if len(row) != m:
            raise MetricError("kappa requires a complete matrix (equal annotators per unit)")

    categories = sorted({v for row in matrix for v in row})
    idx = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(matrix), len(categories)))
    for i, row in enumerate(matrix):
        for v in row:
            counts[i, idx[v]] += 1

    p_i = (np.sum(counts * (counts - 1), axis=1)) / (m * (m - 1))
    p_bar = float(np.mean(p_i))
    p_c = counts.sum(axis=0) / (len(matrix) * m)
    p_e = float(np.sum(p_c**2))
    if p_e >= 1.0:
        raise MetricError("kappa undefined: all annotations are a single category")
    return (p_bar - p_e) / (1.0 - p_e)


@dataclass
class CooccurrenceMatrices:
    labels: list[str]
    absolute: np.ndarray
    relative: np.ndarray

    def difference(self, other: "CooccurrenceMatrices") -> tuple[np.ndarray, np.ndarray]:
        """(absolute, relative) difference matrices: self minus other."""
        if self.labels != other.labels:
            raise MetricError("co-occurrence label orders differ")
        return self.absolute - other.absolute, self.relative - other.relative


def cooccurrence(label_vectors: Sequence[Sequence[int]], labels: Sequence[str]) -> CooccurrenceMatrices:
    """Absolute and row-normalized label co-occurrence matrices.

    absolute[i][j] counts sentences carrying both labels; the diagonal
    holds plain label counts. Each row of the relative matrix is divided
    by its diagonal entry (rows with zero count stay all-zero).
    """
    k = len(labels)
    absolute = np.zeros((k, k))
    for vec in label_vectors:
        if len(vec) != k:
            raise MetricError(f"label vector length {len(vec)} does not match {k} labels")
        on = [i for i, v in enumerate(vec) if v]
        for i in on:
            for j in on:
                absolute[i, j] += 1

    relative = np.zeros_like(absolute)
    for i in range(k):
        if absolute[i, i] > 0:
            relative[i] = absolute[i] / absolute[i, i]
    return CooccurrenceMatrices(list(labels), absolute, relative)


# ---------------------------------------------------------------------------
# report rendering


@dataclass
class EvalComparison:
    """Baseline vs challenger reports over a shared label list."""

    labels: list[str]
    section: str
    baseline: EvalReport
    challengers: list[EvalReport] = field(default_factory=list)
    challenger_names: list[str] = field(default_factory=list)
    mcnemar_results: list[dict[str, McNemarResult]] = field(default_factory=list)


def _marker(res: Optional[McNemarResult]) -> str:
    if res is None:
        return ""
    if res.significant_01:
        return "**"
    if res.significant_05:
        return "*"
    return ""


def render_comparison_table(sections: Sequence[EvalComparison]) -> str:
    """Aligned text table: baseline column, one column per challenger,
    challenger average, with significance markers (* p<0.05, ** p<0.01)."""
    cols = max((len(s.challengers) for s in sections), default=0)
    names = []
    for s in sections:
        if s.challenger_names:
            names = list(s.challenger_names)
            break
    if not names:
        names = [f"A{i + 1}" for i in range(cols)]

    width = 18
    num = 9
    header = "LABEL".ljust(width) + "F1 B.".rjust(num)
    for nm in names:
        header += nm.rjust(num)
    if cols:
        header += "AVG.".rjust(num)
    lines = [header, "-" * len(header)]

    for s in sections:
        lines.append(s.section.upper())
        rows = list(s.labels) + ["micro", "macro"]
        for name in rows:
            if name == "micro":
                base_val = s.baseline.micro_f1
            elif name == "macro":
                base_val = s.baseline.macro_f1
            else:
                base_val = s.baseline.per_label[name].f1
            line = name.ljust(width) + f"{base_val:.2f}".rjust(num)
            vals = []
            for i, rep in enumerate(s.challengers):
                if name == "micro":
                    val = rep.micro_f1
                    mark = ""
                elif name == "macro":
                    val = rep.macro_f1
                    mark = ""
                else:
                    val = rep.per_label[name].f1
                    mark = _marker(s.mcnemar_results[i].get(name) if i < len(s.mcnemar_results) else None)
                vals.append(val)
                line += (f"{val:.2f}{mark}").rjust(num)
            if vals:
                line += f"{sum(vals) / len(vals):.2f}".rjust(num)
            lines.append(line)
        lines.append("-" * len(header))
    lines.append("significance vs baseline: * p<0.05, ** p<0.01 (McNemar)")
    return "\n".join(lines)


def comparison_to_json(sections: Sequence[EvalComparison]) -> dict:
    out: dict = {"sections": []}
    for s in sections:
        sec = {
            "section": s.section,
            "labels": s.labels,
            "baseline": s.baseline.to_json(),
            "challengers": [],
        }
        for i, rep in enumerate(s.challengers):
            entry = {
                "name": s.challenger_names[i] if i < len(s.challenger_names) else f"A{i + 1}",
                "report": rep.to_json(),
                "mcnemar": {},
            }
            if i < len(s.mcnemar_results):
                entry["mcnemar"] = {
                    lbl: {
                        "b": r.b,
                        "c": r.c,
                        "p_value": r.p_value,
                        "significant_05": r.significant_05,
                        "significant_01": r.significant_01,
                        "exact": r.exact,
                    }
                    for lbl, r in s.mcnemar_results[i].items()
                }
            sec["challengers"].append(entry)
        out["sections"].append(sec)
    return out
