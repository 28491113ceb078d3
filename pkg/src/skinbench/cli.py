"""Command-line interface.

Subcommands: detect, extract, recolor, render, run, report, gen-fixtures.
Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from skinbench.errors import SkinbenchError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parse_rgb(text: str):
    from skinbench.colorimetry import SrgbColor

    parts = text.split(",")
    if len(parts) != 3:
        raise SkinbenchError(f"expected r,g,b in [0,1], got {text!r}")
    try:
        return SrgbColor(*(float(p) for p in parts))
    except ValueError as exc:
        raise SkinbenchError(f"bad color {text!r}: {exc}") from exc


def _parse_face_box(text: str):
    from skinbench.face_detect import FaceBox

    parts = text.split(",")
    if len(parts) != 4:
        raise SkinbenchError(f"expected x,y,w,h, got {text!r}")
    try:
        return FaceBox(*(int(p) for p in parts))
    except ValueError as exc:
        raise SkinbenchError(f"bad face box {text!r}: {exc}") from exc


def _estimate_json(est) -> str:
    return json.dumps(
        {
            "method": est.method.value,
            "mean_srgb": [est.mean.r, est.mean.g, est.mean.b],
            "lab": [est.lab.L, est.lab.a, est.lab.b],
            "ita_degrees": est.ita,
            "ita_class": est.ita_class.name,
            "sample_count": est.sample_count,
            "used_chroma_fallback": est.used_chroma_fallback,
        },
        indent=2,
    )


def _cmd_detect(args) -> int:
    from skinbench.face_detect import (
        DetectParams,
        default_cascade,
        detect_faces,
        load_cascade,
    )
    from skinbench.imgio import load_image

    cascade = load_cascade(args.cascade) if args.cascade else default_cascade()
    image = load_image(args.image)
    params = DetectParams(
        scale_factor=args.scale_factor,
        min_size=args.min_size,
        step=args.step,
        min_neighbors=args.min_neighbors,
    )
    boxes = detect_faces(image, cascade, params)
    print(json.dumps([{"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in boxes], indent=2))
    return EXIT_OK


def _cmd_extract(args) -> int:
    from skinbench.extraction import (
        ExtractionInput,
        ExtractionMethod,
        ExtractionParams,
        Landmarks,
        extract,
    )
    from skinbench.face_detect import default_cascade, load_cascade
    from skinbench.imgio import load_image

    inp = ExtractionInput(
        photo=load_image(args.image),
        albedo=load_image(args.albedo) if args.albedo else None,
        landmarks=(
            Landmarks.from_text(Path(args.landmarks).read_text(encoding="utf-8"))
            if args.landmarks
            else None
        ),
        face_box=_parse_face_box(args.face_box) if args.face_box else None,
    )
    cascade = None
    if inp.face_box is None:
        cascade = load_cascade(args.cascade) if args.cascade else default_cascade()
    est = extract(
        inp,
        ExtractionMethod(args.method),
        ExtractionParams(kmeans_seed=args.seed),
        cascade=cascade,
    )
    print(_estimate_json(est))
    return EXIT_OK


def _cmd_recolor(args) -> int:
    from skinbench.recolor import (
        load_texture,
        recolor,
        save_recolored,
        synthetic_base_texture,
    )

    if args.base:
        base = load_texture(args.base)
    else:
        base = synthetic_base_texture(
            args.width, args.height, seed=args.tex_seed, amplitude=args.amplitude
        )
    out = recolor(base, _parse_rgb(args.target), args.strategy, space=args.space)
    save_recolored(out, args.out)
    print(
        f"wrote {args.out} (strategy={args.strategy}, "
        f"clip_fraction={out.provenance.clip_fraction:.6g})"
    )
    return EXIT_OK


def _cmd_render(args) -> int:
    from skinbench.imgio import save_image
    from skinbench.recolor import load_texture
    from skinbench.relight import (
        LightingConfig,
        RenderProxy,
        load_sh,
        render_proxy,
    )

    texture = load_texture(args.texture)
    if args.lighting in ("frontal", "paramount"):
        lighting = LightingConfig(args.lighting)
    else:
        lighting = LightingConfig("image-sh", load_sh(args.lighting))
    h, w = texture.texels.shape[:2]
    proxy = RenderProxy.sphere(w, h) if args.proxy == "sphere" else RenderProxy.flat(w, h)
    image = render_proxy(texture, lighting, proxy, exposure=args.exposure)
    save_image(image, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    from skinbench.pipeline.config import RunConfig
    from skinbench.pipeline.manifest import load_manifest
    from skinbench.pipeline.runner import run

    if args.config:
        config = RunConfig.from_json_file(args.config)
    else:
        config = RunConfig()
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["kmeans_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.methods:
        overrides["methods"] = tuple(args.methods.split(","))
    if args.recolors:
        overrides["recolors"] = tuple(args.recolors.split(","))
    if args.lightings:
        overrides["lightings"] = tuple(args.lightings.split(","))
    if args.proxy:
        overrides["proxy_kind"] = args.proxy
    if args.tex_amplitude is not None:
        overrides["tex_amplitude"] = args.tex_amplitude
    if args.no_cache:
        overrides["cache"] = False
    if overrides:
        merged = config.to_dict()
        merged.update(overrides)
        config = RunConfig.from_dict(merged)

    manifest = load_manifest(args.manifest)
    records, ledger, labels = run(manifest, config)
    counts = ledger.counts()
    out_dir = Path(config.out_dir)
    print(
        f"{len(records)} records over {ledger.cardinality} cells "
        f"(ok={counts['ok']} skipped={counts['skipped']} error={counts['error']}); "
        f"labels for {len(labels)} images"
    )
    print(f"records: {out_dir / 'records.csv'}")
    print(f"ledger:  {out_dir / 'ledger.json'}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from skinbench.pipeline.reports import generate_report

    index = generate_report(
        args.records,
        args.out or str(Path(args.records).parent),
        labels_path=args.labels,
    )
    print(f"report index: {index}")
    return EXIT_OK


def _cmd_gen_fixtures(args) -> int:
    from skinbench.pipeline.fixtures import generate_fixtures

    manifest = generate_fixtures(args.out, count=args.count, size=args.size)
    print(f"manifest: {manifest}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="skinbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="detect faces in an image")
    p.add_argument("--image", required=True)
    p.add_argument("--cascade", default="")
    p.add_argument("--scale-factor", type=float, default=1.1)
    p.add_argument("--min-size", type=int, default=24)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--min-neighbors", type=int, default=3)
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("extract", help="extract a skin-color estimate")
    p.add_argument("--image", required=True)
    p.add_argument(
        "--method", required=True, choices=["cheek", "mask", "cheek-albedo", "mask-albedo"]
    )
    p.add_argument("--albedo", default="")
    p.add_argument("--landmarks", default="")
    p.add_argument("--face-box", default="", help="x,y,w,h (skips detection)")
    p.add_argument("--cascade", default="")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("recolor", help="recolor a base texture toward a target")
    p.add_argument("--target", required=True, help="r,g,b in [0,1]")
    p.add_argument("--strategy", choices=["normalize", "variation"], default="normalize")
    p.add_argument("--out", required=True)
    p.add_argument("--base", default="", help="base texture image (default: synthetic)")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--amplitude", type=float, default=0.08)
    p.add_argument("--tex-seed", type=int, default=0)
    p.add_argument("--space", choices=["gamma", "linear"], default="gamma")
    p.set_defaults(fn=_cmd_recolor)

    p = sub.add_parser("render", help="shade a texture under SH lighting")
    p.add_argument("--texture", required=True)
    p.add_argument(
        "--lighting",
        required=True,
        help="frontal | paramount | path to an SH JSON file",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--proxy", choices=["sphere", "flat"], default="sphere")
    p.add_argument("--exposure", type=float, default=3.141592653589793)
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("run", help="run the full benchmark over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default="", help="JSON file with a full RunConfig")
    p.add_argument("--out", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--methods", default="", help="comma list subset")
    p.add_argument("--recolors", default="", help="comma list subset")
    p.add_argument("--lightings", default="", help="comma list subset")
    p.add_argument("--proxy", choices=["sphere", "flat", ""], default="")
    p.add_argument("--tex-amplitude", type=float, default=None)
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("report", help="build the report bundle from records")
    p.add_argument("--records", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", default="")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("gen-fixtures", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(fn=_cmd_gen_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SkinbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
