#!/usr/bin/env python3
"""Per-view 2D encoder features for `dfd distill --features`.

Reads render/cameras.json and the shaded view PNGs written by `dfd render`,
runs a pretrained ViT encoder, upsamples patch features bilinearly to the
render resolution and writes one view_<k>.fmap per view.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

FMAP_MAGIC = b"DFDF"
FMAP_VERSION = 1
ENCODERS = {
    "dinov2": "facebook/dinov2-small",
    "dinov2-small": "facebook/dinov2-small",
    "dinov2-base": "facebook/dinov2-base",
}


class ExtractorError(RuntimeError):
    pass


def write_fmap(path, view, features):
    """features: float32 array H x W x C, row-major."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 3:
        raise ValueError("features must be H x W x C")
    h, w, c = features.shape
    with open(path, "wb") as f:
        f.write(FMAP_MAGIC)
        f.write(struct.pack("<5I", FMAP_VERSION, view, h, w, c))
        f.write(features.tobytes())


def read_fmap(path):
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:4] != FMAP_MAGIC:
        raise ValueError(f"{path}: not an .fmap file")
    version, view, h, w, c = struct.unpack_from("<5I", data, 4)
    if version != FMAP_VERSION:
        raise ValueError(f"{path}: unsupported .fmap version {version}")
    if len(data) != 24 + 4 * h * w * c:
        raise ValueError(f"{path}: truncated file")
    return view, np.frombuffer(data, dtype="<f4", offset=24).reshape(h, w, c)


def load_manifest(render_dir):
    path = Path(render_dir) / "cameras.json"
    try:
        views = json.loads(path.read_text())["views"]
    except FileNotFoundError:
        raise ExtractorError(f"{path} not found; run `dfd render` first")
    for v in views:
        image = Path(render_dir) / v["image"]
        if not image.exists():
            raise ExtractorError(f"{image} missing; rerun `dfd render` without --no-images")
    return views


def load_encoder(name, device):
    model_id = ENCODERS.get(name, name)
    try:
        import torch  # noqa: F401
        from transformers import AutoImageProcessor, AutoModel

        processor = AutoImageProcessor.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id).to(device).eval()
    except Exception as e:  # missing package, no weights cached, no network
        raise ExtractorError(
            f"cannot load encoder '{model_id}': {e}\n"
            "Install torch and transformers and make the weights available (for example run once "
            "with network access, or set HF_HOME to a cache that holds them). "
            "Without an encoder, use `dfd distill --synthetic parts|smooth|mirror`."
        ) from None
    return model_id, processor, model


def encode_view(image, processor, model, device, height, width):
    import torch
    import torch.nn.functional as F

    inputs = processor(images=image, return_tensors="pt").to(device)
    with torch.no_grad():
        tokens = model(**inputs).last_hidden_state[0]
    patch = model.config.patch_size
    gh, gw = inputs["pixel_values"].shape[-2] // patch, inputs["pixel_values"].shape[-1] // patch
    grid = tokens[-gh * gw:].reshape(gh, gw, -1).permute(2, 0, 1)[None]  # skip CLS/register tokens
    up = F.interpolate(grid, size=(height, width), mode="bilinear", align_corners=False)
    return up[0].permute(1, 2, 0).float().cpu().numpy()


def extract(render_dir, out_dir, encoder="dinov2", device="cpu"):
    from PIL import Image

    views = load_manifest(render_dir)
    model_id, processor, model = load_encoder(encoder, device)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    channels = None
    for v in views:
        width, height = v["resolution"]
        image = Image.open(Path(render_dir) / v["image"]).convert("RGB")
        features = encode_view(image, processor, model, device, height, width)
        channels = features.shape[2]
        write_fmap(out_dir / f"view_{v['id']}.fmap", v["id"], features)
    (out_dir / "extractor.json").write_text(
        json.dumps({"encoder": model_id, "channels": channels, "views": len(views)}, indent=2) + "\n")
    return len(views)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="render_dir", required=True, help="render directory (cameras.json + PNGs)")
    ap.add_argument("--out", dest="out_dir", required=True, help="output directory for .fmap files")
    ap.add_argument("--encoder", default="dinov2", help="dinov2[-small|-base] or a model id")
    ap.add_argument("--device", default="cpu")
    args = ap.parse_args(argv)
    try:
        n = extract(args.render_dir, args.out_dir, args.encoder, args.device)
    except ExtractorError as e:
        print(f"extract: {e}", file=sys.stderr)
        return 2
    print(json.dumps({"views": n, "out": args.out_dir}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
