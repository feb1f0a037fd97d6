"""Single-round masked inference, vote aggregation, and certification.

``predict_all`` classifies each masked view once (n classifier calls for n
masks; there is no second masking round). ``aggregate`` turns the resulting
label vector into one prediction: unanimous agreement wins outright;
otherwise a class appearing exactly k times is returned; otherwise the
majority class, breaking ties toward the smallest label id.

``certify`` decides whether any patch, anywhere, could change the outcome.
For a patch at anchor ``a``, every mask that fully covers it produces a
masked view identical to the clean one (bit-exact), so those votes are
pinned to the clean labels. The remaining ``F = n - |S(a)|`` votes are
adversary-controlled. The image is certified only if the aggregate returns
the true label for every anchor and every possible allocation of the free
votes over the label space (all classifier classes plus two never-seen
ids).

Allocations are explored through a structured candidate family: for every
plausible winner the generator emits the vote placements that could make it
win under each aggregation rule (swamp it with votes, put it at exactly k
while nudging other classes off k, break a unique k-count, and so on),
plus the allocation the clean image itself realizes. The family is checked
against full brute-force enumeration, which remains available via
``exhaustive=True`` for up to 12 free votes.
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterator, Sequence

import numpy as np

from .classifiers import Classifier, classify_batch
from .geometry import Anchor, admissible_anchors, effective_anchor_region
from .masking import FillPolicy, Image, iter_masked_views, load_image
from .tiling import MaskSet
from .verifier import verify

EXHAUSTIVE_FREE_VOTE_LIMIT = 12

RULE_UNANIMOUS = "unanimous"
RULE_EXACT_K = "exact_k"
RULE_MAJORITY = "majority"


class CoverageError(ValueError):
    """The mask set does not provide the coverage certification relies on."""


@dataclass(frozen=True)
class AggregationOutcome:
    label: int
    rule: str
    tie_broken: bool

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "rule": self.rule, "tie_broken": self.tie_broken}


@dataclass(frozen=True)
class CertificationResult:
    certified: bool
    predicted: int
    failing_anchor: Anchor | None
    failing_allocation: dict[str, Any] | None
    masks_evaluated: int

    def to_dict(self) -> dict[str, Any]:
        anchor = None
        if self.failing_anchor is not None:
            anchor = {"ax": self.failing_anchor.ax, "ay": self.failing_anchor.ay}
        return {
            "certified": self.certified,
            "predicted": self.predicted,
            "failing_anchor": anchor,
            "failing_allocation": self.failing_allocation,
            "masks_evaluated": self.masks_evaluated,
        }


@dataclass(frozen=True)
class EvalSummary:
    clean_correct: int
    certified_count: int
    total: int
    excluded: int
    errors: tuple[str, ...] = ()

    @property
    def clean_accuracy(self) -> Fraction:
        return Fraction(self.clean_correct, self.total) if self.total else Fraction(0)

    @property
    def certified_accuracy(self) -> Fraction:
        return Fraction(self.certified_count, self.total) if self.total else Fraction(0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "clean_correct": self.clean_correct,
            "certified_count": self.certified_count,
            "total": self.total,
            "excluded": self.excluded,
            "clean_accuracy": f"{float(self.clean_accuracy):.4f}",
            "certified_accuracy": f"{float(self.certified_accuracy):.4f}",
            "errors": list(self.errors),
        }


def predict_all(
    image: Image,
    mask_set: MaskSet,
    classifier: Classifier,
    fill: FillPolicy = FillPolicy.zero(),
) -> list[int]:
    """Label of every masked view, in placement order. Exactly n calls."""
    return classify_batch(classifier, iter_masked_views(image, mask_set, fill))


def _aggregate_counts(counts: dict[int, int], k: int) -> AggregationOutcome:
    live = {label: c for label, c in counts.items() if c > 0}
    if not live:
        raise ValueError("no votes to aggregate")
    if len(live) == 1:
        return AggregationOutcome(next(iter(live)), RULE_UNANIMOUS, False)
    at_k = sorted(label for label, c in live.items() if c == k)
    if len(at_k) == 1:
        return AggregationOutcome(at_k[0], RULE_EXACT_K, False)
    top = max(live.values())
    leaders = sorted(label for label, c in live.items() if c == top)
    return AggregationOutcome(leaders[0], RULE_MAJORITY, len(leaders) > 1)


def aggregate(preds: Sequence[int], k: int) -> AggregationOutcome:
    """Fold a prediction vector into one label.

    Precedence: unanimity, then a single class with exactly k votes (skipped
    when several classes sit at k), then majority with smallest-id ties.
    """
    if not preds:
        raise ValueError("empty prediction vector")
    if k < 1:
        raise ValueError(f"coverage multiplicity must be >= 1, got {k}")
    return _aggregate_counts(Counter(preds), k)


def infer(
    image: Image,
    mask_set: MaskSet,
    classifier: Classifier,
    fill: FillPolicy = FillPolicy.zero(),
) -> AggregationOutcome:
    """The full defended prediction: mask, classify each view, aggregate."""
    return aggregate(predict_all(image, mask_set, classifier, fill), mask_set.config.k)


# ---------------------------------------------------------------------------
# Worst-case free-vote analysis


def _merge(fixed: dict[int, int], alloc: dict[int, int]) -> dict[int, int]:
    merged = dict(fixed)
    for label, votes in alloc.items():
        merged[label] = merged.get(label, 0) + votes
    return merged


def _candidate_allocations(
    fixed: dict[int, int],
    true_label: int,
    free: int,
    k: int,
    num_classes: int,
    clean_free: dict[int, int] | None = None,
) -> Iterator[tuple[str, dict[int, int]]]:
    """Free-vote placements that can flip the aggregate if anything can.

    Yields (description, allocation) pairs; each allocation assigns exactly
    ``free`` votes. ``clean_free`` is the allocation the unmodified image
    realizes and is always checked first.
    """
    if clean_free is not None:
        yield "free masks keep their clean votes", dict(clean_free)
    if free == 0:
        yield "no free votes", {}
        return

    support = sorted(label for label, c in fixed.items() if c > 0)
    rivals = [label for label in support if label != true_label]
    fresh = None
    for label in range(num_classes):
        if label != true_label and label not in fixed:
            fresh = label
            break
    if fresh is None:
        fresh = num_classes  # ids num_classes and num_classes+1 are never emitted
    winners = rivals + [fresh]
    at_k = [label for label in support if fixed[label] == k]

    for c in winners:
        absorbers = [a for a in (num_classes + 1, num_classes) if a != c]
        receptacles = [d for d in support + [true_label] if d != c]

        yield f"all {free} free votes on {c}", {c: free}

        # Majority path blocked by a single class sitting at exactly k:
        # either push it past k or give a second class exactly k votes.
        others_at_k = [d for d in at_k if d != c]
        if len(others_at_k) == 1:
            d0 = others_at_k[0]
            alloc = {d0: 1}
            if free - 1 > 0:
                alloc[c] = free - 1
            yield f"bump {d0} past k, rest on {c}", alloc
            for d in receptacles + absorbers:
                if d == d0:
                    continue
                need = k - fixed.get(d, 0)
                if 0 < need <= free:
                    alloc = {d: need}
                    if free - need > 0:
                        alloc[c] = free - need
                    yield f"raise {d} to k, rest on {c}", alloc

        # Exact-k path: put c at exactly k, push every other k-count off k,
        # then park the remainder where it cannot create a new k-count.
        need_c = k - fixed.get(c, 0)
        cost = need_c + len(others_at_k)
        if 0 <= need_c and cost <= free:
            base = {d: 1 for d in others_at_k}
            if need_c > 0:
                base[c] = need_c
            rest = free - cost
            if rest == 0:
                yield f"exactly k votes on {c}", base
            else:
                spots: list[tuple[str, dict[int, int]]] = []
                if others_at_k:
                    spots.append((f"rest on {others_at_k[0]}", {others_at_k[0]: rest}))
                spots.append((f"rest on {absorbers[0]}", {absorbers[0]: rest}))
                if len(absorbers) > 1:
                    spots.append(
                        ("rest split on fresh", {absorbers[0]: rest - 1, absorbers[1]: 1})
                    )
                    if rest >= 2:
                        spots.append(
                            ("rest split 2", {absorbers[0]: rest - 2, absorbers[1]: 2})
                        )
                for d in receptacles:
                    spots.append((f"rest on {d}", {d: rest}))
                    if rest >= 2:
                        spots.append(
                            (f"one on {d}", {d: 1, absorbers[0]: rest - 1})
                        )
                for note, extra in spots:
                    alloc = dict(base)
                    for d, votes in extra.items():
                        if votes > 0:
                            alloc[d] = alloc.get(d, 0) + votes
                    yield f"exactly k votes on {c}, {note}", alloc


def _compositions(total: int, slots: int) -> Iterator[tuple[int, ...]]:
    if slots == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, slots - 1):
            yield (head,) + tail


def _exhaustive_allocations(
    free: int, num_classes: int
) -> Iterator[tuple[str, dict[int, int]]]:
    # Every count vector over the K real classes plus two never-seen ids.
    # Equivalent to enumerating all label assignments to the free votes,
    # since aggregation depends only on vote counts.
    labels = list(range(num_classes + 2))
    for combo in _compositions(free, len(labels)):
        alloc = {label: votes for label, votes in zip(labels, combo) if votes > 0}
        yield "exhaustive", alloc


def find_vote_exploit(
    fixed: dict[int, int],
    true_label: int,
    free: int,
    k: int,
    num_classes: int,
    clean_free: dict[int, int] | None = None,
    exhaustive: bool = False,
) -> dict[str, Any] | None:
    """First free-vote allocation that drags the aggregate away from the truth.

    Returns a serializable description, or None if every explored allocation
    keeps the true label winning.
    """
    if exhaustive:
        if free > EXHAUSTIVE_FREE_VOTE_LIMIT:
            raise ValueError(
                f"exhaustive search limited to {EXHAUSTIVE_FREE_VOTE_LIMIT} free "
                f"votes, got {free}"
            )
        candidates = _exhaustive_allocations(free, num_classes)
    else:
        candidates = _candidate_allocations(
            fixed, true_label, free, k, num_classes, clean_free
        )
    for note, alloc in candidates:
        outcome = _aggregate_counts(_merge(fixed, alloc), k)
        if outcome.label != true_label:
            return {
                "free_votes": free,
                "fixed_votes": {str(d): c for d, c in sorted(fixed.items())},
                "allocation": {str(d): c for d, c in sorted(alloc.items())},
                "winner": outcome.label,
                "rule": outcome.rule,
                "note": note,
            }
    return None


def _resolve_classes(
    classifier: Classifier, preds: Sequence[int], true_label: int, classes: int | None
) -> int:
    if classes is not None:
        return classes
    declared = getattr(classifier, "classes", None)
    if declared is not None:
        return declared
    return max(*preds, true_label) + 1


def certify(
    image: Image,
    true_label: int,
    mask_set: MaskSet,
    classifier: Classifier,
    fill: FillPolicy = FillPolicy.zero(),
    *,
    exhaustive: bool = False,
    classes: int | None = None,
) -> CertificationResult:
    """Sound worst-case verdict: can any admissible patch change the answer?

    The mask set's k-fold coverage is re-verified here rather than trusted
    from metadata. Classifier calls: exactly one per mask (the clean masked
    views); the adversary analysis is pure vote arithmetic.
    """
    cfg = mask_set.config
    k = cfg.k
    if fill.mode == "mean":
        # a fill derived from the input image is adversary-influenceable:
        # patch content shifts the mean, so even a covering mask would not
        # reproduce the clean view bit-exactly
        raise CoverageError("certification requires a content-independent fill")
    if verify(mask_set).min_multiplicity < k:
        raise CoverageError("mask set does not k-cover patch")

    preds = predict_all(image, mask_set, classifier, fill)
    n = len(preds)
    num_classes = _resolve_classes(classifier, preds, true_label, classes)
    predicted = _aggregate_counts(Counter(preds), k).label
    total_counts = Counter(preds)

    ranges = admissible_anchors(cfg.domain, cfg.patch)
    nx, ny = ranges.ax_max + 1, ranges.ay_max + 1
    labels = sorted(total_counts)
    grids = {label: np.zeros((ny, nx), dtype=np.int32) for label in labels}
    for placement, pred in zip(mask_set.placements, preds):
        grid = grids[pred]
        for rect in effective_anchor_region(placement, cfg.mask, cfg.patch, cfg.domain):
            grid[rect.y0 : rect.y1, rect.x0 : rect.x1] += 1

    stacked = np.stack([grids[label] for label in labels]).reshape(len(labels), -1)
    unique_cols, first_indices = np.unique(stacked, axis=1, return_index=True)
    for col in range(unique_cols.shape[1]):
        fixed = {
            labels[row]: int(unique_cols[row, col])
            for row in range(len(labels))
            if unique_cols[row, col] > 0
        }
        covered = sum(fixed.values())
        free = n - covered
        clean_free = {
            label: total_counts[label] - fixed.get(label, 0)
            for label in labels
            if total_counts[label] > fixed.get(label, 0)
        }
        exploit = find_vote_exploit(
            fixed,
            true_label,
            free,
            k,
            num_classes,
            clean_free=clean_free,
            exhaustive=exhaustive,
        )
        if exploit is not None:
            flat = int(first_indices[col])
            witness = Anchor(ax=flat % nx, ay=flat // nx)
            return CertificationResult(
                certified=False,
                predicted=predicted,
                failing_anchor=witness,
                failing_allocation=exploit,
                masks_evaluated=n,
            )
    return CertificationResult(
        certified=True,
        predicted=predicted,
        failing_anchor=None,
        failing_allocation=None,
        masks_evaluated=n,
    )


# ---------------------------------------------------------------------------
# Dataset evaluation


def load_manifest(path) -> list[tuple[Image, int]]:
    """Read a ``path,label`` CSV; image paths are relative to the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["path", "label"]:
            raise ValueError("manifest must start with a path,label header")
        dataset = []
        for row in reader:
            dataset.append(
                (load_image(os.path.join(base, row["path"])), int(row["label"]))
            )
    return dataset


def evaluate(
    dataset: Sequence[tuple[Image, int]],
    mask_set: MaskSet,
    classifier: Classifier,
    fill: FillPolicy = FillPolicy.zero(),
    *,
    exhaustive: bool = False,
    jobs: int = 1,
) -> EvalSummary:
    """Clean and certified accuracy over a dataset.

    An image counts as clean-correct when the defended prediction on the
    unmodified image matches its label, and as certified when ``certify``
    accepts it (which implies clean-correctness). Images whose evaluation
    raises are excluded and reported.
    """

    def run_one(item: tuple[Image, int]) -> CertificationResult:
        image, label = item
        return certify(
            image, label, mask_set, classifier, fill, exhaustive=exhaustive
        )

    outcomes: list[CertificationResult | Exception] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_one, item) for item in dataset]
            for future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as exc:  # recorded, not fatal
                    outcomes.append(exc)
    else:
        for item in dataset:
            try:
                outcomes.append(run_one(item))
            except Exception as exc:
                outcomes.append(exc)

    clean = certified = excluded = 0
    errors = []
    for i, outcome in enumerate(outcomes):
        if isinstance(outcome, Exception):
            excluded += 1
            errors.append(f"image {i}: {outcome}")
            continue
        if outcome.predicted == dataset[i][1]:
            clean += 1
        if outcome.certified:
            certified += 1
    return EvalSummary(
        clean_correct=clean,
        certified_count=certified,
        total=len(dataset) - excluded,
        excluded=excluded,
        errors=tuple(errors),
    )
