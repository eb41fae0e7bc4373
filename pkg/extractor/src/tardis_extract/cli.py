"""Command-line entry point: dump layer activations to dataset files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractError, ExtractionSpec, extract, list_layers, load_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tardis-extract",
        description="Capture a frozen model's layer activations as dataset files",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint path or torchvision:<name>")
    parser.add_argument("--layer", help="dotted layer name (see --list-layers)")
    parser.add_argument("--inputs", help="text file with one input path per line")
    parser.add_argument("--pool", default="max",
                        choices=("none", "max", "avg", "meanstd", "pca"))
    parser.add_argument("--pca-components", type=int, default=10)
    parser.add_argument("--role", default="wild",
                        choices=("id", "wild", "labeled_id", "labeled_ood"))
    parser.add_argument("--mean", help="comma-separated per-channel means")
    parser.add_argument("--std", help="comma-separated per-channel stds")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--list-layers", action="store_true",
                        help="print layers and output shapes, then exit")
    parser.add_argument("--probe-shape", default="3,32,32",
                        help="input C,H,W for --list-layers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.list_layers:
            shape = tuple(int(v) for v in args.probe_shape.split(","))
            for name, out_shape in list_layers(load_model(args.model), shape):
                print(f"{name}  {tuple(out_shape)}")
            return 0
        if not (args.layer and args.inputs and args.out):
            print("--layer, --inputs and --out are required for extraction",
                  file=sys.stderr)
            return 2
        inputs = [
            line.strip()
            for line in Path(args.inputs).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        spec = ExtractionSpec(
            model=args.model,
            layer=args.layer,
            out_dir=args.out,
            pooling=args.pool,
            pca_components=args.pca_components,
            role=args.role.upper(),
            mean=None if args.mean is None else [float(v) for v in args.mean.split(",")],
            std=None if args.std is None else [float(v) for v in args.std.split(",")],
        )
        manifest_path, payload_path = extract(spec, inputs)
        print(f"wrote {manifest_path} and {payload_path} ({len(inputs)} samples)")
        return 0
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
