"""Deterministic synthetic multilayer perceptrons for pipeline testing.

A toy net is fully determined by its spec: weights come from one pinned
xoshiro256++ stream (see rng.py) seeded with the net seed, drawn layer by
layer in network order, each in_dim x out_dim matrix filling row-major with
standard normals divided by sqrt(in_dim). Inputs come from an independent
stream. Regenerating with the same seeds therefore reproduces activation
dumps bit for bit, on any implementation of the documented generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, LayerDescriptor, ModelDescriptor
from .errors import ValidationError
from .rng import Xoshiro256pp, splitmix64

NONLINEARITIES = ("relu", "identity")


@dataclass(frozen=True)
class ToyNetSpec:
    """Seeded MLP description: layer_dims[0] is the input width, each later
    entry the output width of one linear layer."""

    seed: int
    layer_dims: tuple[int, ...]
    nonlinearity: str = "relu"
    block_size: int = 1

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {self.seed!r}")
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValidationError(
                f"layer_dims needs an input width plus at least one layer, got {dims}"
            )
        if any(d < 1 for d in dims):
            raise ValidationError(f"layer widths must be >= 1, got {dims}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValidationError(
                f"unknown nonlinearity {self.nonlinearity!r}; "
                f"expected one of {NONLINEARITIES}"
            )
        if not isinstance(self.block_size, int) or isinstance(self.block_size, bool) \
                or self.block_size < 1:
            raise ValidationError(
                f"block_size must be a positive integer, got {self.block_size!r}"
            )
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(frozen=True)
class ToyNet:
    """A spec plus its realized weight matrices (in_dim x out_dim, float64).

    Constructing one directly with hand-picked weights is supported; build()
    is the seeded path.
    """

    spec: ToyNetSpec
    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        dims = self.spec.layer_dims
        if len(weights) != self.spec.n_layers:
            raise ValidationError(
                f"expected {self.spec.n_layers} weight matrices, got {len(weights)}"
            )
        for index, w in enumerate(weights):
            wanted = (dims[index], dims[index + 1])
            if w.shape != wanted:
                raise ValidationError(
                    f"layer {index + 1}: weight shape {w.shape}, expected {wanted}"
                )
            if not np.isfinite(w).all():
                raise ValidationError(f"layer {index + 1}: non-finite weights")
        for w in weights:
            w.setflags(write=False)
        object.__setattr__(self, "weights", weights)


def build(spec: ToyNetSpec) -> ToyNet:
    """Realize the weights of a spec from its seed."""
    stream = Xoshiro256pp(spec.seed)
    weights = []
    dims = spec.layer_dims
    for index in range(spec.n_layers):
        din, dout = dims[index], dims[index + 1]
        weights.append(stream.normal_matrix(din, dout) / math.sqrt(din))
    return ToyNet(spec=spec, weights=tuple(weights))


def input_seed_for(seed: int) -> int:
    """Input-stream seed derived from the net seed (one splitmix64 output).

    Reusing the net seed verbatim would make the inputs replay the prefix of
    the weight stream; the derivation keeps one CLI seed while decorrelating
    the two streams, and is documented for alternate implementations.
    """
    out, _ = splitmix64(seed)
    return out


def sample_inputs(seed: int, n_samples: int, dim: int) -> np.ndarray:
    """Standard-normal input batch from its own pinned stream, row-major."""
    if n_samples < 1 or dim < 1:
        raise ValidationError(
            f"need at least one sample and one input feature, got "
            f"({n_samples}, {dim})"
        )
    return Xoshiro256pp(seed).normal_matrix(n_samples, dim)


def forward_collect(net: ToyNet, inputs: np.ndarray) -> list[FeatureMatrix]:
    """Run the net, collecting every layer's post-nonlinearity activations.

    Layer i's feature matrix is the composition of layers 1..i applied to the
    batch; names are layer01, layer02, ... matching descriptor_for.
    """
    x = np.asarray(inputs, dtype=np.float64)
    dims = net.spec.layer_dims
    if x.ndim != 2 or x.shape[1] != dims[0]:
        raise ValidationError(
            f"inputs must be (n_samples, {dims[0]}), got {x.shape}"
        )
    if not np.isfinite(x).all():
        raise ValidationError("inputs must be finite")
    features = []
    current = x
    for index, w in enumerate(net.weights):
        current = current @ w
        if net.spec.nonlinearity == "relu":
            current = np.maximum(current, 0.0)
        features.append(
            FeatureMatrix(layer_name=_layer_name(index + 1), data=current)
        )
    return features


def descriptor_for(
    spec: ToyNetSpec, bit_min: int = 4, bit_max: int = 8
) -> ModelDescriptor:
    """Descriptor matching forward_collect's layer names and order.

    A dense layer's parameter and MAC counts are both in_dim * out_dim.
    Blocks group block_size consecutive layers; stages group two blocks.
    """
    dims = spec.layer_dims
    layers = []
    for index in range(spec.n_layers):
        block = index // spec.block_size
        layers.append(
            LayerDescriptor(
                name=_layer_name(index + 1),
                param_count=dims[index] * dims[index + 1],
                mac_count=dims[index] * dims[index + 1],
                block_id=block,
                stage_id=block // 2,
                fixed_weight_bit=None,
                activation_bit=8,
            )
        )
    return ModelDescriptor(layers=tuple(layers), bit_min=bit_min, bit_max=bit_max)


def _layer_name(index: int) -> str:
    return f"layer{index:02d}"
