"""Command-line frontend. Thin adapter: every flag maps onto a config or
recipe field; all behavior lives in the library modules."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .control import PARTS, RecipeError, TransferRecipe
from .encoder import EncoderConfig, encode_builtin, import_pyramid
from .pipeline import load_assets, make_assets, run_transfer
from .sac import SacConfig, MODES
from .synthesis import RenderConfig, hm_composite
from .metrics import evaluate
from .tensor import (
    FeaturePyramid,
    load_image,
    load_label_mask,
    save_image,
    save_tensor,
)
from .control import build_transfer_mask


class CliError(Exception):
    """User error: bad flags, unreadable files. Exit code 1."""


def _add_io_flags(p: argparse.ArgumentParser, refs: bool = True) -> None:
    p.add_argument("--source", required=True, help="source image PNG")
    p.add_argument("--source-mask", required=True, help="source parse-mask PNG")
    if refs:
        p.add_argument("--ref", action="append", default=[], help="reference image PNG (repeatable)")
        p.add_argument("--ref-mask", action="append", default=[], help="reference parse-mask PNG (repeatable)")
        p.add_argument("--ref-weight", action="append", type=float, default=[], help="fusion weight per reference")


def _add_transfer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--shade", type=float, default=None)
    p.add_argument("--mode", choices=MODES, default="semantic_soft")
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--alpha", action="append", default=[], metavar="L=V",
                   help="per-level blend override, e.g. --alpha 2=0.5 (repeatable)")
    p.add_argument("--parts", default="lips,eyes,skin",
                   help="comma-separated subset of lips,eyes,skin")
    p.add_argument("--assign", action="append", default=[], metavar="PART=REFIDX",
                   help="part-specific assignment, e.g. --assign lips=1 (repeatable)")
    p.add_argument("--no-hm", action="store_true", help="disable histogram post-matching")
    p.add_argument("--feather", type=int, default=3, help="seam feather width in px (0 disables)")
    p.add_argument("--no-gradients", action="store_true",
                   help="encode without Sobel gradient channels")
    p.add_argument("--import-features", nargs=4, action="append", default=[],
                   metavar="SPT", help="4 SPT files replacing the built-in encoder; "
                   "first use is the source, later uses are references in order")
    p.add_argument("--assume-rgb", action="store_true",
                   help="treat imported level-1 channels 0-2 as raw RGB")
    p.add_argument("--recipe", help="recipe JSON (inline or a file path); flags override")


def _parse_alphas(items: list[str], base: tuple) -> tuple:
    alphas = list(base)
    for item in items:
        try:
            lvl, val = item.split("=", 1)
            lvl_i, val_f = int(lvl), float(val)
        except ValueError:
            raise CliError(f"bad --alpha {item!r}, expected L=V")
        if not 1 <= lvl_i <= 4:
            raise CliError(f"--alpha level must be 1..4, got {lvl_i}")
        alphas[lvl_i - 1] = val_f
    return tuple(alphas)


def _parse_assignment(items: list[str]) -> dict | None:
    if not items:
        return None
    out = {}
    for item in items:
        try:
            part, idx = item.split("=", 1)
            out[part] = int(idx)
        except ValueError:
            raise CliError(f"bad --assign {item!r}, expected PART=REFIDX")
    return out


def _recipe_from_args(args, n_refs: int) -> TransferRecipe:
    base = {}
    if args.recipe:
        text = args.recipe
        if not text.lstrip().startswith("{"):
            try:
                with open(text) as f:
                    text = f.read()
            except OSError as exc:
                raise CliError(f"cannot read recipe {args.recipe}: {exc}")
        try:
            base = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"invalid recipe JSON: {exc}")

    weights = args.ref_weight or base.get("refWeights")
    if not weights:
        weights = [1.0 / n_refs] * n_refs
    assignment = _parse_assignment(args.assign)
    if assignment is None:
        assignment = base.get("partAssignment")
    parts = tuple(p for p in args.parts.split(",") if p)
    try:
        return TransferRecipe(
            shade=args.shade if args.shade is not None else base.get("shade", 1.0),
            ref_weights=tuple(weights),
            part_assignment=assignment,
            transfer_parts=parts,
        )
    except RecipeError as exc:
        raise CliError(str(exc))


def _load_faces(args):
    enc_cfg = EncoderConfig(gradient_channels=not args.no_gradients)
    imports = list(args.import_features)

    def build(image_path, mask_path):
        image = load_image(image_path)
        mask = load_label_mask(mask_path)
        if imports:
            paths = imports.pop(0)
            pyr = import_pyramid(EncoderConfig(mode="external", external_paths=tuple(paths)))
            if args.assume_rgb:
                pyr = FeaturePyramid(pyr.levels, carries_rgb=True)
            from .pipeline import FaceAssets
            from .tensor import mask_pyramid, one_hot

            return FaceAssets(image, mask, mask_pyramid(one_hot(mask)), pyr)
        return make_assets(image, mask, enc_cfg)

    src = build(args.source, args.source_mask)
    if len(args.ref) != len(args.ref_mask):
        raise CliError(
            f"{len(args.ref)} --ref but {len(args.ref_mask)} --ref-mask flags"
        )
    if not args.ref:
        raise CliError("at least one --ref/--ref-mask pair is required")
    refs = [build(r, m) for r, m in zip(args.ref, args.ref_mask)]
    return src, refs


def _cmd_transfer(args, removal: bool = False) -> int:
    src, refs = _load_faces(args)
    if removal and len(refs) != 1:
        raise CliError("remove takes exactly one reference (the non-makeup face)")
    recipe = _recipe_from_args(args, len(refs))
    sac_cfg = SacConfig(
        beta=args.beta,
        mode=args.mode,
        alphas=_parse_alphas(args.alpha, SacConfig().alphas),
    )
    render_cfg = RenderConfig(
        hm_postprocess=not args.no_hm, seam_feather_radius=args.feather
    )
    out, report = run_transfer(src, refs, recipe, sac_cfg, render_cfg)
    save_image(out, args.out)
    print(report.to_json())
    return 0


def _cmd_hm(args) -> int:
    src = load_image(args.source)
    ref = load_image(args.ref[0]) if args.ref else None
    if ref is None:
        raise CliError("hm requires --ref and --ref-mask")
    out = hm_composite(
        src, ref, load_label_mask(args.source_mask), load_label_mask(args.ref_mask[0])
    )
    save_image(out, args.out)
    return 0


def _cmd_metrics(args) -> int:
    src = load_image(args.source)
    ref = load_image(args.ref[0])
    out = load_image(args.out)
    src_mask = load_label_mask(args.source_mask)
    ref_mask = load_label_mask(args.ref_mask[0])
    parts = tuple(p for p in args.parts.split(",") if p)
    mt = build_transfer_mask(src_mask, parts)
    report = evaluate(out, src, ref, src_mask, ref_mask, mt)
    print(report.to_json())
    return 0


def _cmd_encode(args) -> int:
    image = load_image(args.source)
    cfg = EncoderConfig(gradient_channels=not args.no_gradients)
    pyr = encode_builtin(image, cfg)
    for l, fm in enumerate(pyr.levels, start=1):
        save_tensor(fm, f"{args.out_prefix}_l{l}.spt")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transfer", help="apply a reference's makeup to a source face")
    _add_io_flags(p)
    _add_transfer_flags(p)

    p = sub.add_parser("remove", help="strip makeup using a non-makeup reference")
    _add_io_flags(p)
    _add_transfer_flags(p)

    p = sub.add_parser("hm", help="region-wise histogram-matching baseline")
    _add_io_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="evaluate an output image")
    _add_io_flags(p)
    p.add_argument("--out", required=True, help="output image to evaluate")
    p.add_argument("--parts", default="lips,eyes,skin")

    p = sub.add_parser("encode", help="export the built-in feature pyramid as SPT")
    p.add_argument("--source", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--no-gradients", action="store_true")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "transfer":
            return _cmd_transfer(args)
        if args.command == "remove":
            return _cmd_transfer(args, removal=True)
        if args.command == "hm":
            return _cmd_hm(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "encode":
            return _cmd_encode(args)
        if args.command == "serve":
            return _cmd_serve(args)
        raise CliError(f"unknown command {args.command!r}")
    except (CliError, RecipeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
