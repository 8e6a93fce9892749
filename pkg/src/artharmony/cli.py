"""Command-line entry points."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, datapipe, retrieval, trainer
from .encoder import build_encoder
from .harmonizer import HarmonizerModel, harmonize, load_checkpoint
from .imagecore import load_image, load_mask, read_manifest, save_image


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON training config file")
    p.add_argument("--profile", choices=["full", "tiny"], default="tiny")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artharmony",
                                     description="Painterly image harmonization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toydata", help="generate a reproducible toy dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-paintings", type=int, default=8)
    p.add_argument("--n-objects", type=int, default=8)
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("pairs", help="build training pairs and report dataset stats")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="optional directory for composite previews")

    p = sub.add_parser("train-retrieval",
                       help="train the domain aligner on the synthetic two-domain set")
    _add_common(p)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", help="JSON report path")

    p = sub.add_parser("retrieve", help="embed manifest objects and export candidates")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-k", type=int, default=retrieval.DEFAULT_TOPK)

    p = sub.add_parser("train", help="train the harmonizer on a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--ablation", choices=trainer.ABLATIONS, default="FULL")

    p = sub.add_parser("harmonize", help="harmonize a composite image")
    _add_common(p)
    p.add_argument("--composite", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", choices=["ours", "bg"], default="ours")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("compare", help="render composite/BG/RO/OURS panels")
    _add_common(p)
    p.add_argument("--composite", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--reference")
    p.add_argument("--reference-mask")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("locality", help="patch style similarity heatmaps")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("-n", type=int, default=4)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("flops", help="analytic op count and latency")
    _add_common(p)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("-o", "--out")

    p = sub.add_parser("serve", help="run the harmonization HTTP service")
    _add_common(p)
    p.add_argument("--ckpt", default=os.environ.get("ARTHARMONY_CHECKPOINT"))
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("ARTHARMONY_PORT", "8000")))
    p.add_argument("--host", default="127.0.0.1")

    return parser


def run(args) -> int:
    if args.command == "toydata":
        path = datapipe.generate_toy_dataset(
            args.out, seed=args.seed, n_paintings=args.n_paintings,
            n_objects=args.n_objects, size=args.size)
        print(path)
        return 0

    if args.command == "pairs":
        pairs = datapipe.build_pairs(args.manifest)
        stats = datapipe.dataset_stats([p.entry for p in pairs])
        print(json.dumps(stats, indent=2))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            for i, pair in enumerate(pairs):
                save_image(os.path.join(args.out, f"composite_{i:03d}.png"), pair.composite)
        return 0

    if args.command == "train-retrieval":
        data = retrieval.make_synthetic_domains(args.seed)
        projector, heads, history = retrieval.train_domain_aligner(
            *data, steps=args.steps, lr=args.lr, seed=args.seed)
        x_paint, y_paint, x_photo, y_photo = data
        with_proj = lambda x: projector(x).detach()
        report = {
            "steps": args.steps,
            "final_losses": history[-1],
            "acc_painterly": retrieval.classifier_accuracy(heads, with_proj(x_paint), y_paint),
            "acc_photographic": retrieval.classifier_accuracy(heads, with_proj(x_photo), y_photo),
            "disc_accuracy": retrieval.discriminator_accuracy(
                heads, with_proj(x_paint), with_proj(x_photo)),
        }
        print(json.dumps(report, indent=2))
        if args.out:
            with open(args.out, "w") as f:
                json.dump(report, f, indent=2)
        return 0

    if args.command == "retrieve":
        import numpy as np

        entries = read_manifest(args.manifest, check_files=True)
        root = os.path.dirname(os.path.abspath(args.manifest))
        model = retrieval.RetrievalModel(
            build_encoder(args.profile, seed=args.seed),
            num_categories=max(e.category_label for e in entries) + 1)
        feats, ids, domains = [], [], []
        for i, e in enumerate(entries):
            painting = load_image(os.path.join(root, e.painting_path))
            ref_mask = load_mask(os.path.join(root, e.reference_mask_path))
            feats.append(retrieval.embed(model, painting, ref_mask))
            ids.append(f"painterly_{i}")
            domains.append(retrieval.PAINTERLY)
            obj = load_image(os.path.join(root, e.object_image_path))
            obj_mask = load_mask(os.path.join(root, e.object_mask_path))
            feats.append(retrieval.embed(model, obj, obj_mask))
            ids.append(f"photo_{i}")
            domains.append(retrieval.PHOTOGRAPHIC)
        index = retrieval.EmbeddingIndex(np.stack(feats), ids, domains)
        n = retrieval.export_candidates(index, args.out, k=args.k)
        print(f"wrote candidates for {n} painterly objects to {args.out}")
        return 0

    if args.command == "train":
        if args.config:
            config = trainer.load_config(args.config)
        else:
            config = trainer.TrainConfig(width_profile=args.profile)
        config.steps = args.steps
        config.seed = args.seed
        config.ablation = args.ablation
        config.width_profile = args.profile
        if args.lr is not None:
            config.lr = args.lr
        if args.batch_size is not None:
            config.batch_size = args.batch_size
        pairs = datapipe.build_pairs(args.manifest)
        model = HarmonizerModel(config.width_profile, encoder_seed=config.seed)
        trainer.train(model, pairs, config, out_dir=args.out)
        print(os.path.join(args.out, "ckpt_final.pt"))
        return 0

    if args.command == "harmonize":
        model = load_checkpoint(args.ckpt)
        out, _ = harmonize(model, load_image(args.composite), load_mask(args.mask),
                           mode=args.mode)
        save_image(args.out, out)
        print(args.out)
        return 0

    if args.command == "compare":
        model = load_checkpoint(args.ckpt)
        reference = load_image(args.reference) if args.reference else None
        ref_mask = load_mask(args.reference_mask) if args.reference_mask else None
        panels = analysis.compare_modes(
            model, load_image(args.composite), load_mask(args.mask),
            reference=reference, reference_mask=ref_mask, out_path=args.out)
        print(f"{args.out}: panels {list(panels)}")
        return 0

    if args.command == "locality":
        enc = build_encoder(args.profile, seed=args.seed)
        sim, _ = analysis.locality_map(enc, load_image(args.image), n=args.n)
        paths = analysis.render_locality_heatmaps(sim, args.n, args.out_prefix)
        print(f"wrote {len(paths)} heatmaps")
        return 0

    if args.command == "flops":
        model = HarmonizerModel(args.profile, encoder_seed=args.seed)
        report = analysis.flops_report(model, size=args.size,
                                       latency_runs=args.runs, out_path=args.out)
        print(json.dumps(report, indent=2))
        return 0

    if args.command == "serve":
        import uvicorn

        from .server import create_app, load_app

        app = load_app(args.ckpt) if args.ckpt else create_app()
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
