"""Writers for the allocator's on-disk contracts.

Implemented from the published byte layout (see FORMATS.md in the allocator
package), deliberately without importing it: the two packages meet only at
the file boundary, and the allocator's own reader is the conformance check.

Dump layout, little-endian throughout: magic "OMPQACTV", version u32 (1),
layer count u32; then per layer a u32 name length, the UTF-8 name, sample
count u64, feature count u64, dtype tag u8 (1 = float32), and the row-major
float32 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"OMPQACTV"
VERSION = 1
DTYPE_F32 = 1


def write_dump(features: list[tuple[str, np.ndarray]], path: str | Path) -> None:
    """features: (layer_name, N x p float array) in network order."""
    seen: set[str] = set()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(features)))
        for name, data in features:
            if name in seen:
                raise ExportError(f"duplicate layer name {name!r}")
            seen.add(name)
            payload = np.ascontiguousarray(data, dtype="<f4")
            if payload.ndim != 2 or payload.size == 0:
                raise ExportError(
                    f"layer {name!r}: expected nonempty 2-d features, "
                    f"got shape {payload.shape}"
                )
            if not np.isfinite(payload).all():
                raise ExportError(f"layer {name!r}: non-finite activations")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<QQB", payload.shape[0], payload.shape[1], DTYPE_F32))
            fh.write(payload.tobytes())


def write_descriptor(
    layers: list[dict], path: str | Path, bit_min: int = 4, bit_max: int = 8
) -> None:
    """layers: dicts with name/param_count/mac_count/block_id/stage_id/
    fixed_weight_bit/activation_bit, already in network order."""
    document = {"bit_min": bit_min, "bit_max": bit_max, "layers": layers}
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
