"""Forward-hook activation capture for torchvision classifiers.

Selected layers are every convolution and fully-connected module, in the
order they fire. A selected layer's recorded value starts as its own output
and is relayed forward through normalization/activation modules that consume
it, so a conv -> bn -> relu chain records the post-activation tensor. The
relay follows tensor identity: torchvision's in-place residual adds keep the
id alive, so a block's second conv records the post-add block output, while
an out-of-place sum (MobileNet bottlenecks) leaves the conv at its post-BN
value. Pooling, flattening and attention are never relayed through.

Each sample runs in its own batch-of-one forward pass; rows are the
contiguous row-major flattening of the (C, H, W) output, which is exactly
the framework's memory layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import EmptyDataDirectory, ExportError, ModelNotFound, ShapeDrift
from .formats import write_descriptor, write_dump

SELECTED_TYPES = (nn.Conv2d, nn.Linear)
RELAY_TYPES = (
    nn.modules.batchnorm._BatchNorm,
    nn.GroupNorm,
    nn.LayerNorm,
    nn.ReLU,
    nn.ReLU6,
    nn.LeakyReLU,
    nn.Hardswish,
    nn.Hardtanh,
    nn.SiLU,
    nn.GELU,
    nn.Sigmoid,
    nn.Hardsigmoid,
    nn.Dropout,
)

# sample-count defaults per architecture family
MODEL_DEFAULT_SAMPLES = {"resnet18": 64, "mobilenet_v2": 32}
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".webp")


def _build_model(identifier: str, weights_path: str | None) -> nn.Module:
    import torchvision.models as tvm

    builders = {"resnet18": tvm.resnet18, "mobilenet_v2": tvm.mobilenet_v2}
    if identifier not in builders:
        raise ModelNotFound(
            f"unknown model {identifier!r}; expected one of {sorted(builders)}"
        )
    if weights_path is None:
        # no packaged weights in offline environments; seed so that repeated
        # runs of the same command produce byte-identical dumps
        torch.manual_seed(0)
        model = builders[identifier](weights=None)
    else:
        if not Path(weights_path).is_file():
            raise ModelNotFound(f"weights file not found: {weights_path}")
        model = builders[identifier](weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    return model.eval()


@dataclass(frozen=True)
class CaptureConfig:
    model: str
    data_dir: str
    out_dump: str
    out_model: str
    n_samples: int | None = None
    weights: str | None = None

    def __post_init__(self):
        if self.n_samples is not None and self.n_samples < 1:
            raise ExportError(f"need at least one sample, got {self.n_samples}")

    @property
    def resolved_samples(self) -> int:
        if self.n_samples is not None:
            return self.n_samples
        return MODEL_DEFAULT_SAMPLES.get(self.model, 64)


def list_images(data_dir: str | Path) -> list[Path]:
    root = Path(data_dir)
    if not root.is_dir():
        raise EmptyDataDirectory(f"not a directory: {root}")
    paths = sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise EmptyDataDirectory(f"no images under {root}")
    return paths


def load_batch_of_one(path: Path) -> torch.Tensor:
    from PIL import Image
    from torchvision import transforms

    pipeline = transforms.Compose([
        transforms.Resize(256),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(
            mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
        ),
    ])
    with Image.open(path) as img:
        return pipeline(img.convert("RGB")).unsqueeze(0)


class _Recorder:
    """Per-forward bookkeeping: selected-layer values and the identity relay."""

    def __init__(self):
        self.values: dict[str, torch.Tensor] = {}
        self.relay: dict[int, str] = {}
        self.fire_order: list[str] = []

    def reset(self):
        self.values.clear()
        self.relay.clear()
        self.fire_order.clear()

    def on_selected(self, name: str, output: torch.Tensor):
        if name not in self.values:
            self.fire_order.append(name)
        self.values[name] = output
        self.relay[id(output)] = name

    def on_relay(self, inputs, output: torch.Tensor):
        source = inputs[0] if inputs else None
        if not isinstance(source, torch.Tensor):
            return
        name = self.relay.pop(id(source), None)
        if name is None:
            return
        self.values[name] = output
        self.relay[id(output)] = name


def _attach_hooks(model: nn.Module, recorder: _Recorder) -> list:
    handles = []
    for name, module in model.named_modules():
        if isinstance(module, SELECTED_TYPES):
            handles.append(module.register_forward_hook(
                lambda m, i, o, layer=name: recorder.on_selected(layer, o)
            ))
        elif isinstance(module, RELAY_TYPES):
            handles.append(module.register_forward_hook(
                lambda m, i, o: recorder.on_relay(i, o)
            ))
    return handles


def _layer_macs(module: nn.Module, out_shape: tuple[int, ...]) -> int:
    if isinstance(module, nn.Conv2d):
        out_elems = int(np.prod(out_shape[1:]))
        kh, kw = module.kernel_size
        return out_elems * (module.in_channels // module.groups) * kh * kw
    return module.in_features * module.out_features


def _grouping_ids(names: list[str]) -> tuple[dict[str, int], dict[str, int]]:
    """Block and stage ids from module paths, by first appearance: a block is
    the first two dotted components (one residual/inverted block), a stage
    the first component (resnet's layer1..layer4; stem and head their own)."""
    blocks: dict[str, int] = {}
    stages: dict[str, int] = {}
    block_of, stage_of = {}, {}
    for name in names:
        parts = name.split(".")
        block_key = ".".join(parts[:2])
        stage_key = parts[0]
        block_of[name] = blocks.setdefault(block_key, len(blocks))
        stage_of[name] = stages.setdefault(stage_key, len(stages))
    return block_of, stage_of


def capture(config: CaptureConfig) -> tuple[list[str], int]:
    """Run the capture; returns (layer names in order, samples used)."""
    model = _build_model(config.model, config.weights)
    wanted = config.resolved_samples
    images = list_images(config.data_dir)
    if len(images) < wanted:
        raise ExportError(
            f"{config.data_dir}: {len(images)} images but {wanted} samples requested"
        )
    names = capture_model(model, images[:wanted], config.out_dump, config.out_model)
    return names, wanted


def capture_model(
    model: nn.Module,
    images: list[Path],
    out_dump: str | Path,
    out_model: str | Path,
    bit_min: int = 4,
    bit_max: int = 8,
) -> list[str]:
    """Capture loop for an already built (eval-mode) module and image list."""
    modules = dict(model.named_modules())
    recorder = _Recorder()
    handles = _attach_hooks(model, recorder)
    try:
        names: list[str] = []
        shapes: dict[str, tuple[int, ...]] = {}
        rows: dict[str, list[np.ndarray]] = {}
        macs: dict[str, int] = {}
        for index, path in enumerate(images):
            recorder.reset()
            with torch.no_grad():
                model(load_batch_of_one(path))
            if index == 0:
                names = list(recorder.fire_order)
                if not names:
                    raise ExportError("no convolution or linear layers fired")
                for name in names:
                    shape = tuple(recorder.values[name].shape)
                    shapes[name] = shape
                    rows[name] = []
                    macs[name] = _layer_macs(modules[name], shape)
            for name in names:
                value = recorder.values.get(name)
                if value is None or tuple(value.shape) != shapes[name]:
                    got = None if value is None else tuple(value.shape)
                    raise ShapeDrift(
                        f"layer {name!r}: sample {index} produced shape {got}, "
                        f"expected {shapes[name]}"
                    )
                rows[name].append(
                    value.detach().cpu().contiguous().view(-1).numpy().astype("<f4")
                )
    finally:
        for handle in handles:
            handle.remove()

    features = [(name, np.stack(rows[name])) for name in names]
    write_dump(features, out_dump)

    block_of, stage_of = _grouping_ids(names)
    layers = []
    for name in names:
        layers.append({
            "name": name,
            "param_count": int(modules[name].weight.numel()),
            "mac_count": int(macs[name]),
            "block_id": block_of[name],
            "stage_id": stage_of[name],
            "fixed_weight_bit": 8 if name in (names[0], names[-1]) else None,
            "activation_bit": 8,
        })
    write_descriptor(layers, out_model, bit_min=bit_min, bit_max=bit_max)
    return names
