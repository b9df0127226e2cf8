"""Classification metrics over scored examples.

Accuracy thresholds the fake probability at 0.5 and reports percents.
Average precision uses the rank formulation: sort by descending
probability (ties broken by ascending id), then average the precision
at each positive's rank. AP is a fraction in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ArgumentError, UndefinedMetricError

REAL, FAKE = 0, 1


@dataclass(frozen=True)
class ScoredExample:
    """One scored image: label is 0 (real) or 1 (fake), probability of fake."""

    id: str
    label: int
    probability: float
    source: str = ""

    def __post_init__(self):
        if self.label not in (REAL, FAKE):
            raise ArgumentError(f"label must be 0 or 1, got {self.label}")
        if not 0.0 <= self.probability <= 1.0:
            raise ArgumentError(f"probability must be in [0, 1], got {self.probability}")


@dataclass(frozen=True)
class AccuracyMetrics:
    """Percent accuracies; a per-class field is None when the class is absent,
    and overall is None unless both classes are present."""

    overall: float | None
    real_acc: float | None
    fake_acc: float | None


def accuracy_metrics(scored, threshold: float = 0.5) -> AccuracyMetrics:
    scored = list(scored)
    if not scored:
        raise ArgumentError("accuracy needs at least one scored example")
    counts = {REAL: [0, 0], FAKE: [0, 0]}  # label -> [correct, total]
    for ex in scored:
        predicted = FAKE if ex.probability >= threshold else REAL
        counts[ex.label][1] += 1
        counts[ex.label][0] += int(predicted == ex.label)

    def pct(correct, total):
        return 100.0 * correct / total if total else None

    real_acc = pct(*counts[REAL])
    fake_acc = pct(*counts[FAKE])
    overall = None
    if counts[REAL][1] and counts[FAKE][1]:
        overall = pct(
            counts[REAL][0] + counts[FAKE][0], counts[REAL][1] + counts[FAKE][1]
        )
    return AccuracyMetrics(overall=overall, real_acc=real_acc, fake_acc=fake_acc)


def average_precision(scored) -> float:
    scored = list(scored)
    if not scored:
        raise ArgumentError("average precision needs at least one scored example")
    n_pos = sum(1 for ex in scored if ex.label == FAKE)
    if n_pos == 0:
        raise UndefinedMetricError("average precision is undefined without positives")
    ranked = sorted(scored, key=lambda ex: (-ex.probability, ex.id))
    hits = 0
    total = 0.0
    for rank, ex in enumerate(ranked, 1):
        if ex.label == FAKE:
            hits += 1
            total += hits / rank
    return total / n_pos
