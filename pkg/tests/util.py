"""Shared test helpers."""

from __future__ import annotations

import random

from certmask import (
    Image,
    LookupTableClassifier,
    admissible_anchors,
    aggregate,
    apply_patch,
    build_mask_set,
    covering_set,
    image_digest,
    masked_views,
)


def random_image(rng: random.Random, width: int, height: int, channels: int = 1) -> Image:
    return Image(width, height, channels, rng.randbytes(width * height * channels))


def compositions(total, bins):
    """All ways to split `total` into `bins` non-negative parts."""
    if bins == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in compositions(total - head, bins - 1):
            yield (head,) + tail


def lookup_instance(rng, config, strategy, votes, classes):
    """Image + mask set + lookup classifier voting `votes[i]` on clean view i.

    Byte-identical views (replicated masks, saturating wrapped masks) must
    vote identically; the first occurrence wins. Returns the effective vote
    vector alongside the fixture.
    """
    mask_set = build_mask_set(config, strategy)
    assert len(votes) == len(mask_set.placements)
    image = random_image(rng, config.domain.lx, config.domain.ly, 1)
    views = masked_views(image, mask_set)
    table = {}
    effective = []
    for view, label in zip(views, votes):
        digest = image_digest(view)
        effective.append(table.setdefault(digest, label))
    classifier = LookupTableClassifier(table=table, default=0, classes=classes)
    return image, mask_set, classifier, effective


def attack_simulation(image, true_label, mask_set, classifier):
    """Run every patch attack realizable through the lookup classifier.

    For each anchor, one adversarial image is built (content differing from
    the original at every patch pixel); each assignment of labels to the
    uncovered views is realized by overriding their digests in the table.
    Masking does not depend on the table, so one round of masked views per
    anchor covers every assignment. Returns (survived, witness).
    """
    cfg = mask_set.config
    k = cfg.k
    classes = classifier.classes
    clean_views = masked_views(image, mask_set)
    clean_digests = {image_digest(v) for v in clean_views}
    content = Image(
        cfg.patch.px,
        cfg.patch.py,
        image.channels,
        bytes((97 + i) % 256 for i in range(cfg.patch.px * cfg.patch.py * image.channels)),
    )
    for anchor in admissible_anchors(cfg.domain, cfg.patch):
        covered = set(covering_set(mask_set, anchor))
        free_idx = [i for i in range(len(clean_views)) if i not in covered]
        adversarial = apply_patch(image, anchor, cfg.patch, content)
        adv_views = masked_views(adversarial, mask_set)
        for i in covered:
            assert adv_views[i].pixels == clean_views[i].pixels, "neutralization broke"
        adv_digests = [image_digest(v) for v in adv_views]
        for i in free_idx:
            assert adv_digests[i] not in clean_digests, "digest collision in fixture"
        for combo in compositions(len(free_idx), classes):
            flat = [lab for lab, cnt in enumerate(combo) for _ in range(cnt)]
            table = dict(classifier.table)
            for i, lab in zip(free_idx, flat):
                table[adv_digests[i]] = lab
            attacked = LookupTableClassifier(
                table=table, default=classifier.default, classes=classes
            )
            preds = [attacked.classify(v) for v in adv_views]
            outcome = aggregate(preds, k)
            if outcome.label != true_label:
                return False, (anchor, combo, outcome)
    return True, None


class CountingClassifier:
    """Wraps a classifier and counts classify() calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    @property
    def classes(self):
        return self.inner.classes

    def classify(self, image):
        self.calls += 1
        return self.inner.classify(image)


class FailingClassifier:
    """Raises on the nth call; classifies as 0 otherwise."""

    classes = 2

    def __init__(self, fail_at: int):
        self.fail_at = fail_at
        self.calls = 0

    def classify(self, image):
        self.calls += 1
        if self.calls == self.fail_at:
            raise RuntimeError("synthetic classifier failure")
        return 0
