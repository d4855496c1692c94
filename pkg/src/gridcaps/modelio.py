"""Save/load trained classifiers through the checkpoint container."""

from __future__ import annotations

from .baselines import BASELINE_KINDS, build_baseline
from .capsnet import CapsNet
from .errors import FormatError
from .nn.checkpoint import load_checkpoint, save_checkpoint

MODEL_KINDS = ("capsnet",) + BASELINE_KINDS


def save_model(path, model, extra_meta=None):
    meta = {
        "kind": model.kind,
        "case": model.case if hasattr(model, "case") else model.plan.case,
        "class_map": list(getattr(model, "class_ids", range(getattr(model, "class_count", 0)))),
        "seed": int(model.seed),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, [(n, p.values) for n, p in model.params()], meta)
    return meta


def load_model(path):
    """Rebuild the architecture from metadata and restore its parameters."""
    named, meta = load_checkpoint(path)
    kind = meta.get("kind")
    case = meta.get("case")
    if kind == "capsnet":
        model = CapsNet.build(case, meta["class_map"], seed=int(meta.get("seed", 0)))
    elif kind in BASELINE_KINDS:
        model = build_baseline(kind, case, seed=int(meta.get("seed", 0)))
    else:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    params = dict(model.params())
    stored = dict(named)
    if set(params) != set(stored):
        missing = set(params) ^ set(stored)
        raise FormatError(f"{path}: parameter blocks do not match model ({missing})")
    for name, tensor in params.items():
        arr = stored[name]
        if arr.shape != tensor.values.shape:
            raise FormatError(
                f"{path}: block {name} has shape {arr.shape}, "
                f"expected {tensor.values.shape}"
            )
        tensor.values = arr.astype(tensor.values.dtype)
        tensor.grad = None
    return model, meta
