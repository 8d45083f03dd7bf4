"""Regenerate a convbench operation-set CSV from public model collections.

For every model: instantiate it (architecture only, no weight download),
hook every 2D-convolution module, push one random batch-1 input through the
network, and record the shape tuple each convolution actually executed
with. Dedup happens across the whole collection when the CSV is written.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

import torch
import torch.nn as nn

from .convset_io import ConvShape, write_convset_csv

logger = logging.getLogger(__name__)

CACHE_ENV = "CONVBENCH_MODEL_CACHE"

# Architectures whose forward pass needs a non-default input resolution.
INPUT_SIZE_OVERRIDES = {
    "inception_v3": 299,
}


@dataclass
class LayerCapture:
    model_name: str
    layer_path: str
    shape: ConvShape
    observed_batch: int
    observed_out: tuple[int, int]


class ExtractionError(RuntimeError):
    pass


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _capture_from_module(model_name: str, path: str, mod: nn.Conv2d,
                         x: torch.Tensor, y: torch.Tensor) -> LayerCapture | None:
    if isinstance(mod.padding, str):
        logger.info("%s/%s: string padding %r not representable, skipped",
                    model_name, path, mod.padding)
        return None
    if mod.padding_mode != "zeros":
        logger.info("%s/%s: padding_mode %r is not zero padding, skipped",
                    model_name, path, mod.padding_mode)
        return None
    k_h, k_w = _pair(mod.kernel_size)
    s_h, s_w = _pair(mod.stride)
    p_h, p_w = _pair(mod.padding)
    d_h, d_w = _pair(mod.dilation)
    shape = ConvShape(
        batch=1,  # collection protocol runs batch 1; observed batch is logged
        in_channels=int(x.shape[1]), in_h=int(x.shape[2]), in_w=int(x.shape[3]),
        out_channels=int(mod.out_channels), k_h=k_h, k_w=k_w,
        stride_h=s_h, stride_w=s_w, pad_h=p_h, pad_w=p_w,
        dil_h=d_h, dil_w=d_w, groups=int(mod.groups),
        has_bias=mod.bias is not None)
    observed = (int(y.shape[2]), int(y.shape[3]))
    if shape.out_shape() != observed:
        logger.warning("%s/%s: observed output %s disagrees with derived %s, skipped",
                       model_name, path, observed, shape.out_shape())
        return None
    return LayerCapture(model_name=model_name, layer_path=path, shape=shape,
                        observed_batch=int(x.shape[0]), observed_out=observed)


def _instantiate(model_name: str, collection: str) -> nn.Module:
    cache = os.environ.get(CACHE_ENV)
    if cache:
        os.environ.setdefault("TORCH_HOME", cache)
    if collection == "torchvision":
        import torchvision.models as tvm
        return tvm.get_model(model_name, weights=None)
    if collection == "timm":
        try:
            import timm
        except ImportError as exc:
            raise ExtractionError("timm is not installed (pip install convbench-tools[timm])") from exc
        return timm.create_model(model_name, pretrained=False)
    raise ExtractionError(f"unknown collection {collection!r}")


def list_collection(collection: str) -> list[str]:
    if collection == "torchvision":
        import torchvision.models as tvm
        return list(tvm.list_models(module=tvm))
    if collection == "timm":
        try:
            import timm
        except ImportError as exc:
            raise ExtractionError("timm is not installed (pip install convbench-tools[timm])") from exc
        return list(timm.list_models())
    raise ExtractionError(f"unknown collection {collection!r}")


def default_input_hw(model_name: str, collection: str) -> int:
    if collection == "torchvision":
        try:
            import torchvision.models as tvm
            weights = tvm.get_model_weights(model_name)
            crop = weights.DEFAULT.transforms.keywords.get("crop_size")
            if isinstance(crop, int):
                return crop
        except Exception:
            pass
    return INPUT_SIZE_OVERRIDES.get(model_name, 224)


def extract_model(model_name: str, collection: str = "torchvision",
                  input_hw: int | None = None, seed: int = 0,
                  model: nn.Module | None = None) -> list[LayerCapture]:
    """One forward pass, one capture per executed 2D-convolution call."""
    if model is None:
        model = _instantiate(model_name, collection)
    model.eval()
    hw = input_hw if input_hw is not None else default_input_hw(model_name, collection)
    captures: list[LayerCapture] = []
    handles = []

    def make_hook(path: str):
        def hook(mod, args, out):
            cap = _capture_from_module(model_name, path, mod, args[0], out)
            if cap is not None:
                captures.append(cap)
        return hook

    for path, mod in model.named_modules():
        if isinstance(mod, nn.Conv2d):
            handles.append(mod.register_forward_hook(make_hook(path)))
    try:
        torch.manual_seed(seed)
        x = torch.randn(1, 3, hw, hw)
        with torch.no_grad():
            model(x)
    finally:
        for h in handles:
            h.remove()
    return captures


@dataclass
class ExtractionSummary:
    models_processed: list[str]
    models_skipped: dict[str, str]
    captures: int
    unique_ops: int
    class_counts: dict[str, int]


def build_convset(model_names: list[str], out_path: str,
                  collection: str = "torchvision", input_hw: int | None = None,
                  seed: int = 0) -> ExtractionSummary:
    """Extract every model, dedup by identifying key, write the CSV."""
    if not model_names:
        raise ExtractionError("need at least one model name")
    ordered: list[ConvShape] = []
    seen: set[str] = set()
    processed: list[str] = []
    skipped: dict[str, str] = {}
    n_captures = 0
    for name in model_names:
        try:
            captures = extract_model(name, collection=collection,
                                     input_hw=input_hw, seed=seed)
        except Exception as exc:
            logger.warning("model %s skipped: %s", name, exc)
            skipped[name] = str(exc)
            continue
        processed.append(name)
        n_captures += len(captures)
        for cap in captures:
            key = cap.shape.key()
            if key not in seen:
                seen.add(key)
                ordered.append(cap.shape)
        logger.info("%s: %d convolution calls, set size now %d",
                    name, len(captures), len(ordered))
    counts: dict[str, int] = {}
    for s in ordered:
        for c in s.classes():
            counts[c] = counts.get(c, 0) + 1
    write_convset_csv(ordered, out_path)
    return ExtractionSummary(models_processed=processed, models_skipped=skipped,
                             captures=n_captures, unique_ops=len(ordered),
                             class_counts=counts)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    ap = argparse.ArgumentParser(prog="convset-extract")
    ap.add_argument("--collection", default="torchvision", choices=["torchvision", "timm"])
    ap.add_argument("--models", help="comma list; default: the whole collection")
    ap.add_argument("--limit", type=int, help="cap the number of models")
    ap.add_argument("--input-size", type=int, help="square input resolution override")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    if args.models:
        names = [m.strip() for m in args.models.split(",") if m.strip()]
    else:
        names = list_collection(args.collection)
    if args.limit is not None:
        names = names[:args.limit]
    try:
        summary = build_convset(names, args.out, collection=args.collection,
                                input_hw=args.input_size, seed=args.seed)
    except ExtractionError as exc:
        logger.error("%s", exc)
        return 1
    print(f"models processed: {len(summary.models_processed)} "
          f"(skipped {len(summary.models_skipped)})")
    print(f"convolution calls captured: {summary.captures}")
    print(f"unique operations: {summary.unique_ops}")
    for cls in ("pointwise", "grouped", "dilated", "rectangular", "regular"):
        print(f"  {cls}: {summary.class_counts.get(cls, 0)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
