"""Capture a named layer's activations of a frozen torch model.

Inputs (image files or .npy arrays) are pushed one by one through the model
in eval mode with gradients disabled; a forward hook on the requested layer
records its output. Results are written in the downstream dataset format:
a JSON manifest plus a headerless little-endian float32 payload, either
pooled to one feature vector per input or raw with the activation's
(C, H, W) shape recorded in the manifest.

The model is never modified; extraction is deterministic, so repeated runs
over the same inputs produce byte-identical payloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


class ExtractError(Exception):
    pass


class ModelLoadFailure(ExtractError):
    pass


class LayerNotFound(ExtractError):
    pass


class InferenceFailure(ExtractError):
    def __init__(self, sample, message):
        self.sample = sample
        super().__init__(f"{sample}: {message}")


class ShapeMismatch(ExtractError):
    pass


POOLING_CHOICES = ("none", "max", "avg", "meanstd", "pca")
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class ExtractionSpec:
    model: str                      # checkpoint path or "torchvision:<name>"
    layer: str                      # dotted module path, e.g. "backbone.layer3"
    out_dir: str
    pooling: str = "max"            # "none" keeps the raw (C, H, W) tensor
    pca_components: int = 10
    role: str = "WILD"              # role stamped on every extracted sample
    mean: list[float] | None = None  # optional per-channel normalization
    std: list[float] | None = None
    scale: float = 1.0 / 255.0      # applied to image inputs before mean/std

    def validate(self):
        if self.pooling not in POOLING_CHOICES:
            raise ExtractError(f"unknown pooling {self.pooling!r}")
        if self.role not in ("ID", "WILD", "LABELED_ID", "LABELED_OOD"):
            raise ExtractError(f"unknown role {self.role!r}")


def load_model(identifier: str) -> torch.nn.Module:
    """Load an nn.Module from a checkpoint path or a torchvision name."""
    if identifier.startswith("torchvision:"):
        try:
            from torchvision import models as tv_models

            model = tv_models.get_model(identifier.split(":", 1)[1], weights=None)
        except Exception as exc:
            raise ModelLoadFailure(f"cannot build {identifier!r}: {exc}") from exc
    else:
        path = Path(identifier)
        if not path.exists():
            raise ModelLoadFailure(f"checkpoint not found: {path}")
        try:
            model = torch.load(path, map_location="cpu", weights_only=False)
        except Exception:
            try:
                model = torch.jit.load(str(path), map_location="cpu")
            except Exception as exc:
                raise ModelLoadFailure(f"cannot load {path}: {exc}") from exc
    if not isinstance(model, torch.nn.Module):
        raise ModelLoadFailure(f"{identifier!r} did not contain a torch module")
    model.eval()
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    return model


def list_layers(model: torch.nn.Module, input_shape=(3, 32, 32)) -> list[tuple[str, tuple]]:
    """Leaf layers in forward execution order with their output shapes.

    Shapes come from a dummy forward pass of zeros with the given input
    shape (no batch dimension).
    """
    entries: list[tuple[str, tuple]] = []
    handles = []
    leaves = [(n, m) for n, m in model.named_modules() if n and not list(m.children())]

    def make_hook(name):
        def hook(_module, _inputs, output):
            out = output[0] if isinstance(output, (tuple, list)) else output
            if torch.is_tensor(out):
                entries.append((name, tuple(out.shape[1:])))
        return hook

    for name, module in leaves:
        handles.append(module.register_forward_hook(make_hook(name)))
    try:
        with torch.no_grad():
            model(torch.zeros(1, *input_shape))
    except Exception as exc:
        raise ModelLoadFailure(f"dummy forward pass failed: {exc}") from exc
    finally:
        for handle in handles:
            handle.remove()
    return entries


def _resolve_layer(model: torch.nn.Module, name: str) -> torch.nn.Module:
    modules = dict(model.named_modules())
    if name not in modules:
        known = ", ".join(n for n in sorted(modules) if n)
        raise LayerNotFound(f"layer {name!r} not found; known layers: {known}")
    return modules[name]


def _load_input(path: Path, spec: ExtractionSpec) -> torch.Tensor:
    if path.suffix.lower() == ".npy":
        array = np.load(path).astype(np.float32)
        if array.ndim != 3:
            raise ShapeMismatch(f"{path}: expected a (C, H, W) array, got {array.shape}")
    else:
        from PIL import Image

        with Image.open(path) as image:
            array = np.asarray(image.convert("RGB"), dtype=np.float32)
        array = array.transpose(2, 0, 1) * spec.scale
    tensor = torch.from_numpy(np.ascontiguousarray(array))
    if spec.mean is not None:
        tensor = tensor - torch.tensor(spec.mean, dtype=torch.float32)[:, None, None]
    if spec.std is not None:
        tensor = tensor / torch.tensor(spec.std, dtype=torch.float32)[:, None, None]
    return tensor


def _capture(model, layer, tensor) -> np.ndarray:
    captured = {}

    def hook(_module, _inputs, output):
        out = output[0] if isinstance(output, (tuple, list)) else output
        captured["value"] = out.detach().cpu()

    handle = layer.register_forward_hook(hook)
    try:
        with torch.no_grad():
            model(tensor.unsqueeze(0))
    finally:
        handle.remove()
    if "value" not in captured:
        raise ExtractError("layer produced no tensor output")
    value = captured["value"]
    if value.ndim == 4 and value.shape[0] == 1:
        value = value[0]
    elif value.ndim == 2 and value.shape[0] == 1:
        value = value[0]
    return value.numpy().astype(np.float32)


def _pool(activation: np.ndarray, method: str) -> np.ndarray:
    if activation.ndim == 1:  # already a vector (e.g. a linear layer)
        return activation
    if activation.ndim != 3:
        raise ShapeMismatch(f"cannot pool activation of shape {activation.shape}")
    if method == "max":
        return activation.max(axis=(1, 2))
    if method == "avg":
        return activation.mean(axis=(1, 2))
    if method == "meanstd":
        return np.concatenate([activation.mean(axis=(1, 2)), activation.std(axis=(1, 2))])
    raise ExtractError(f"unknown pooling {method!r}")


def _fit_pca_rows(rows: np.ndarray, n_components: int) -> np.ndarray:
    if rows.shape[0] < n_components:
        raise ExtractError(
            f"PCA needs >= {n_components} inputs, got {rows.shape[0]}"
        )
    mean = rows.mean(axis=0)
    _, _, vt = np.linalg.svd(rows - mean, full_matrices=False)
    basis = vt[:n_components].T.copy()
    for j in range(basis.shape[1]):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return (rows - mean) @ basis


def extract(spec: ExtractionSpec, inputs: list[str | Path]) -> tuple[Path, Path]:
    """Run every input through the model and write manifest + payload.

    Returns (manifest_path, payload_path). Input order becomes row order.
    """
    spec.validate()
    if not inputs:
        raise ExtractError("no inputs given")
    model = load_model(spec.model)
    layer = _resolve_layer(model, spec.layer)
    activations = []
    shape = None
    for path in inputs:
        path = Path(path)
        try:
            tensor = _load_input(path, spec)
            activation = _capture(model, layer, tensor)
        except ExtractError:
            raise
        except Exception as exc:
            raise InferenceFailure(str(path), str(exc)) from exc
        if shape is None:
            shape = activation.shape
        elif activation.shape != shape:
            raise ShapeMismatch(
                f"{path}: activation shape {activation.shape} != first input's {shape}"
            )
        activations.append(activation)

    raw = spec.pooling == "none"
    if raw:
        if len(shape) != 3:
            raise ShapeMismatch(
                f"raw export needs a (C, H, W) activation, layer gives {shape}"
            )
        rows = np.stack([a.reshape(-1) for a in activations])
        header = {"tensor_shape": list(shape)}
        payload_name = "activations.bin"
    else:
        if spec.pooling == "pca":
            flat = np.stack([a.reshape(-1) for a in activations]).astype(np.float64)
            rows = _fit_pca_rows(flat, spec.pca_components).astype(np.float32)
        else:
            rows = np.stack([_pool(a, spec.pooling) for a in activations])
        header = {"feature_dim": int(rows.shape[1])}
        payload_name = "features.bin"

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seen: set[str] = set()
    samples = []
    for i, p in enumerate(inputs):
        sample_id = Path(p).stem
        if sample_id in seen:
            sample_id = f"{sample_id}_{i}"
        seen.add(sample_id)
        samples.append({"sample_id": sample_id, "role": spec.role, "row": i})
    manifest = {"version": 1, "data_file": payload_name, "samples": samples, **header}
    payload_path = out / payload_name
    payload_path.write_bytes(rows.astype("<f4").tobytes(order="C"))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path, payload_path
