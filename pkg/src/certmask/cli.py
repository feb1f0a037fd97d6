"""Command-line interface: bounds, tile, verify, infer, certify, bench.

All commands emit JSON on stdout (add --pretty for indentation). A meta
block with tool version and timestamp is attached unless --no-meta is
given; with --no-meta, identical invocations produce byte-identical output.

Exit codes: 0 success, 1 verification or certification failure, 2 bad
configuration or I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .certify import (
    CoverageError,
    certify,
    evaluate,
    infer,
    load_manifest,
)
from .classifiers import (
    ClassifierError,
    ConstantClassifier,
    ExternalClassifier,
    LookupTableClassifier,
    MeanThresholdClassifier,
)
from .geometry import DomainSize, GeometryError, MaskPlacement, MaskSpec, PatchSpec
from .masking import FillPolicy, Image, ImageError, apply_mask, load_image
from .tiling import (
    MaskSet,
    TilingConfig,
    TilingError,
    build_mask_set,
    forward_pass_counts,
    mask_set_from_dict,
    mask_set_to_dict,
    paper_bounds,
)
from .verifier import DEFAULT_GAP_LIMIT, verify

# Square mask/patch side pairs matching the standard evaluation settings on
# a 224x224 domain; patch sides derive from pixel percentages.
PRESETS = {
    "imagenet-1pct": (32, 23),
    "imagenet-2pct": (48, 32),
    "imagenet-3pct": (56, 39),
    "cifar-04pct": (16, 15),
    "cifar-24pct": (56, 35),
}
PRESET_DOMAIN = (224, 224)
PRESET_K, PRESET_M, PRESET_N = 6, 3, 2


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, _, h = text.lower().partition("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def _patch_side_from_pct(pct: float, lx: int, ly: int) -> int:
    if pct <= 0:
        raise TilingError(f"patch percentage must be positive, got {pct}")
    return math.ceil(math.sqrt(pct / 100.0 * lx * ly))


def _resolve_config(args) -> TilingConfig:
    domain = mask = patch = None
    k, m, n = args.k, args.m, args.n
    if args.preset:
        if args.preset not in PRESETS:
            raise TilingError(
                f"unknown preset {args.preset!r}; have {', '.join(sorted(PRESETS))}"
            )
        mside, pside = PRESETS[args.preset]
        domain, mask, patch = PRESET_DOMAIN, (mside, mside), (pside, pside)
        if k is None:
            k, m, n = PRESET_K, PRESET_M, PRESET_N
    if args.domain:
        domain = args.domain
    if args.mask:
        mask = args.mask
    if args.patch:
        patch = args.patch
    if domain is None:
        raise TilingError("missing --domain (or --preset)")
    if mask is None:
        raise TilingError("missing --mask (or --preset)")
    if patch is None and args.patch_pct is not None:
        side = _patch_side_from_pct(args.patch_pct, *domain)
        patch = (side, side)
    if patch is None:
        raise TilingError("missing --patch or --patch-pct (or --preset)")
    return TilingConfig(
        domain=DomainSize(*domain),
        mask=MaskSpec(*mask),
        patch=PatchSpec(*patch),
        k=k if k is not None else 1,
        m=m,
        n=n,
    )


def _add_geometry_args(sub) -> None:
    sub.add_argument("--domain", type=_parse_size, help="domain size as WxH")
    sub.add_argument("--mask", type=_parse_size, help="mask size as WxH")
    sub.add_argument("--patch", type=_parse_size, help="patch size as WxH")
    sub.add_argument(
        "--patch-pct",
        type=float,
        help="patch area as a percentage of the domain; side = ceil(sqrt(pct*lx*ly))",
    )
    sub.add_argument("--k", type=int, help="required coverage multiplicity")
    sub.add_argument("--m", type=int, help="horizontal fold factor (offset tiling)")
    sub.add_argument("--n", type=int, help="vertical fold factor (offset tiling)")
    sub.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")


def _add_output_args(sub) -> None:
    sub.add_argument("--pretty", action="store_true", help="indent JSON output")
    sub.add_argument(
        "--no-meta",
        action="store_true",
        help="omit timestamps and timings so reruns are byte-identical",
    )


def _emit(args, payload: dict) -> None:
    if not args.no_meta:
        payload = {
            "meta": {
                "tool": "certmask",
                "version": __version__,
                "generated_at": datetime.now(timezone.utc).isoformat(),
            },
            **payload,
        }
    indent = 2 if args.pretty else None
    sys.stdout.write(json.dumps(payload, indent=indent) + "\n")


def _parse_fill(text: str) -> FillPolicy:
    kind, _, rest = text.partition(":")
    if kind == "zero":
        return FillPolicy.zero()
    if kind == "mean":
        return FillPolicy.mean()
    if kind == "constant":
        return FillPolicy.constant(*(int(v) for v in rest.split(",")))
    raise ImageError(f"unknown fill {text!r}")


def _parse_classifier(text: str, timeout: float):
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return ConstantClassifier(int(rest))
    if kind == "mean":
        return MeanThresholdClassifier(tuple(int(v) for v in rest.split(",")))
    if kind == "table":
        with open(rest, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return LookupTableClassifier(
            table={int(d): int(lab) for d, lab in data["entries"].items()},
            default=data.get("default", 0),
            classes=data.get("classes"),
        )
    if kind == "external":
        return ExternalClassifier(rest, timeout=timeout)
    raise ClassifierError(f"unknown classifier spec {text!r}")


def _load_mask_set_arg(path: str):
    if path == "-":
        return mask_set_from_dict(json.load(sys.stdin))
    with open(path, "r", encoding="utf-8") as fh:
        return mask_set_from_dict(json.load(fh))


def cmd_bounds(args) -> int:
    config = _resolve_config(args)
    _emit(args, paper_bounds(config).to_dict())
    return 0


def cmd_tile(args) -> int:
    config = _resolve_config(args)
    mask_set = build_mask_set(config, args.strategy)
    payload = mask_set_to_dict(mask_set)
    if args.out == "-":
        _emit(args, payload)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2 if args.pretty else None)
            fh.write("\n")
    return 0


def cmd_verify(args) -> int:
    mask_set = _load_mask_set_arg(args.mask_set)
    if args.patch:
        config = TilingConfig(
            domain=mask_set.config.domain,
            mask=mask_set.config.mask,
            patch=PatchSpec(*args.patch),
            k=mask_set.config.k,
            m=mask_set.config.m,
            n=mask_set.config.n,
        )
        mask_set = MaskSet(
            config=config,
            strategy=mask_set.strategy,
            placements=mask_set.placements,
            stride_x=mask_set.stride_x,
            stride_y=mask_set.stride_y,
        )
    report = verify(mask_set, gap_limit=args.gap_limit)
    _emit(args, report.to_dict())
    return 0 if report.min_multiplicity >= mask_set.config.k else 1


def cmd_infer(args) -> int:
    mask_set = _load_mask_set_arg(args.mask_set)
    classifier = _parse_classifier(args.classifier, args.timeout)
    fill = _parse_fill(args.fill)
    try:
        if args.manifest:
            results = []
            for i, (image, label) in enumerate(load_manifest(args.manifest)):
                outcome = infer(image, mask_set, classifier, fill)
                results.append(
                    {"index": i, "true_label": label, **outcome.to_dict()}
                )
            _emit(args, {"predictions": results})
        else:
            image = load_image(args.image)
            _emit(args, infer(image, mask_set, classifier, fill).to_dict())
    finally:
        if isinstance(classifier, ExternalClassifier):
            classifier.close()
    return 0


def cmd_certify(args) -> int:
    mask_set = _load_mask_set_arg(args.mask_set)
    classifier = _parse_classifier(args.classifier, args.timeout)
    fill = _parse_fill(args.fill)
    try:
        if args.manifest:
            dataset = load_manifest(args.manifest)
            summary = evaluate(
                dataset,
                mask_set,
                classifier,
                fill,
                exhaustive=args.exhaustive,
                jobs=args.jobs,
            )
            _emit(args, summary.to_dict())
            return 0
        image = load_image(args.image)
        result = certify(
            image,
            args.label,
            mask_set,
            classifier,
            fill,
            exhaustive=args.exhaustive,
        )
        _emit(args, result.to_dict())
        return 0 if result.certified else 1
    finally:
        if isinstance(classifier, ExternalClassifier):
            classifier.close()


def cmd_bench(args) -> int:
    sizes = [int(v) for v in str(args.n).split(",")]
    rng = random.Random(args.seed)
    lx, ly = args.domain or (224, 224)
    mx, my = args.mask or (56, 56)
    image = Image(lx, ly, 3, rng.randbytes(lx * ly * 3))
    classifier = ConstantClassifier(0)
    mask = MaskSpec(mx, my)
    rows = []
    for n1 in sizes:
        counts = forward_pass_counts(n1)
        start = time.perf_counter()
        for i in range(n1):
            placement = MaskPlacement(
                (i * 7) % max(1, lx - mx + 1), (i * 11) % max(1, ly - my + 1)
            )
            classifier.classify(apply_mask(image, placement, mask))
        elapsed = time.perf_counter() - start
        row = dict(counts)
        row["n"] = n1
        if not args.no_meta:
            row["wall_clock_s"] = round(elapsed, 6)
            row["estimated_double_masking_s"] = round(
                elapsed / n1 * counts["double_masking"], 6
            )
        rows.append(row)
    _emit(args, rows[0] if len(rows) == 1 else {"sweep": rows})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="certmask",
        description=(
            "Construct and verify k-fold mask coverings against bounded "
            "adversarial patches, and run the masked inference and "
            "certification pipeline."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("bounds", help="evaluate the closed-form mask-count bounds")
    _add_geometry_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_bounds)

    p = subs.add_parser("tile", help="construct a mask set")
    _add_geometry_args(p)
    _add_output_args(p)
    p.add_argument(
        "--strategy",
        choices=["single", "replicated", "offset"],
        default="offset",
    )
    p.add_argument("--out", default="-", help="output path, - for stdout")
    p.set_defaults(func=cmd_tile)

    p = subs.add_parser("verify", help="exhaustively check k-fold coverage")
    _add_output_args(p)
    p.add_argument("--mask-set", default="-", help="mask-set JSON path, - for stdin")
    p.add_argument("--patch", type=_parse_size, help="override the stored patch size")
    p.add_argument("--gap-limit", type=int, default=DEFAULT_GAP_LIMIT)
    p.set_defaults(func=cmd_verify)

    jobs_default = int(os.environ.get("CERTMASK_JOBS", "1"))

    for name, help_text in (
        ("infer", "masked inference on an image or manifest"),
        ("certify", "worst-case certification of an image or manifest"),
    ):
        p = subs.add_parser(name, help=help_text)
        _add_output_args(p)
        p.add_argument("--mask-set", required=True)
        p.add_argument("--image")
        p.add_argument("--manifest")
        p.add_argument("--classifier", required=True,
                       help="constant:N | mean:T1,T2,... | table:FILE | external:CMD")
        p.add_argument("--fill", default="zero", help="zero | mean | constant:V[,V,V]")
        p.add_argument("--timeout", type=float, default=10.0)
        if name == "certify":
            p.add_argument("--label", type=int, help="true label (single image mode)")
            p.add_argument("--exhaustive", action="store_true",
                           help="brute-force all free-vote allocations (<= 12 free votes)")
            p.add_argument("--jobs", type=int, default=jobs_default)
            p.set_defaults(func=cmd_certify)
        else:
            p.set_defaults(func=cmd_infer)

    p = subs.add_parser("bench", help="forward-pass counts: one round vs two")
    _add_output_args(p)
    p.add_argument("--n", required=True, help="mask count, or comma-separated sweep")
    p.add_argument("--domain", type=_parse_size)
    p.add_argument("--mask", type=_parse_size)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("infer", "certify"):
        if bool(args.image) == bool(args.manifest):
            print("error: give exactly one of --image or --manifest", file=sys.stderr)
            return 2
        if args.command == "certify" and args.image and args.label is None:
            print("error: --label is required with --image", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        GeometryError,
        TilingError,
        ImageError,
        ClassifierError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
