"""File formats: activation dumps, model descriptors, matrices, reports.

The activation dump is the cross-component byte contract (exporters in other
languages must reproduce it bit for bit), laid out little-endian:

    magic       8 bytes  "OMPQACTV"
    version     u32      1
    layer_count u32
    per layer:
      name_len  u32      byte length of the UTF-8 name
      name      bytes
      n_samples u64
      n_features u64
      dtype     u8       1 = IEEE-754 binary32 little-endian
      payload   n_samples * n_features * 4 bytes, row-major

Readers verify the length arithmetic before allocating payloads and reject
trailing bytes. Descriptors are JSON, orthogonality matrices are CSV with 17
significant digits (lossless for binary64), allocation reports are JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import (
    AllocationResult,
    FeatureMatrix,
    LayerDescriptor,
    ModelDescriptor,
    OrmMatrix,
)
from .errors import (
    BadMagic,
    DuplicateName,
    FormatError,
    NonFiniteValue,
    Truncated,
    UnsupportedVersion,
    ValidationError,
)

DUMP_MAGIC = b"OMPQACTV"
DUMP_VERSION = 1
_DTYPE_F32 = 1
_MISSING = object()


def write_dump(features: list[FeatureMatrix], path: str | Path) -> None:
    """Serialize feature matrices; float64 data is cast to float32 here."""
    names: set[str] = set()
    for fm in features:
        if fm.layer_name in names:
            raise DuplicateName(f"duplicate feature matrix for layer {fm.layer_name!r}")
        names.add(fm.layer_name)
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<II", DUMP_VERSION, len(features)))
        for fm in features:
            # overflow is detected on the result, not warned about mid-cast
            with np.errstate(over="ignore"):
                data = np.ascontiguousarray(fm.data, dtype="<f4")
            if not np.isfinite(data).all():
                raise ValidationError(
                    f"layer {fm.layer_name!r}: values overflow float32"
                )
            name = fm.layer_name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<QQB", fm.n_samples, fm.n_features, _DTYPE_F32))
            fh.write(data.tobytes())


def read_dump(path: str | Path) -> list[FeatureMatrix]:
    """Parse a dump back into feature matrices (float32 in memory).

    Raises BadMagic, UnsupportedVersion, Truncated, DuplicateName or
    NonFiniteValue with enough context to locate the damage. Payload sizes
    are checked against the actual file length before anything is allocated.
    """
    buf = Path(path).read_bytes()
    total = len(buf)

    def need(offset: int, count: int, what: str) -> None:
        if offset + count > total:
            raise Truncated(
                f"{path}: {what} needs {count} bytes at offset {offset}, "
                f"file has {total - offset} left"
            )

    need(0, len(DUMP_MAGIC), "magic")
    if buf[: len(DUMP_MAGIC)] != DUMP_MAGIC:
        raise BadMagic(
            f"{path}: expected magic {DUMP_MAGIC!r}, got {buf[:len(DUMP_MAGIC)]!r}"
        )
    offset = len(DUMP_MAGIC)
    need(offset, 8, "header")
    version, layer_count = struct.unpack_from("<II", buf, offset)
    offset += 8
    if version != DUMP_VERSION:
        raise UnsupportedVersion(
            f"{path}: dump version {version}, this reader handles {DUMP_VERSION}"
        )

    features: list[FeatureMatrix] = []
    names: set[str] = set()
    for index in range(layer_count):
        need(offset, 4, f"layer {index} name length")
        (name_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        need(offset, name_len, f"layer {index} name")
        try:
            name = buf[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: layer {index} name is not UTF-8: {exc}") from exc
        offset += name_len
        if name in names:
            raise DuplicateName(f"{path}: duplicate layer name {name!r}")
        names.add(name)
        need(offset, 17, f"layer {name!r} shape header")
        n_samples, n_features, dtype = struct.unpack_from("<QQB", buf, offset)
        offset += 17
        if dtype != _DTYPE_F32:
            raise FormatError(
                f"{path}: layer {name!r} has dtype tag {dtype}, only "
                f"{_DTYPE_F32} (float32 LE) is defined"
            )
        payload = n_samples * n_features * 4
        need(offset, payload, f"layer {name!r} payload")
        data = np.frombuffer(buf, dtype="<f4", count=n_samples * n_features,
                             offset=offset).reshape(n_samples, n_features)
        offset += payload
        finite = np.isfinite(data)
        if not finite.all():
            flat = int(np.argmin(finite.ravel()))
            raise NonFiniteValue(
                f"{path}: layer {name!r} has a non-finite value at flat index {flat}"
            )
        features.append(FeatureMatrix(layer_name=name, data=data))
    if offset != total:
        raise Truncated(
            f"{path}: {total - offset} trailing bytes after the declared "
            f"{layer_count} layers"
        )
    return features


def write_descriptor(model: ModelDescriptor, path: str | Path) -> None:
    document = {
        "bit_min": model.bit_min,
        "bit_max": model.bit_max,
        "layers": [
            {
                "name": layer.name,
                "param_count": layer.param_count,
                "mac_count": layer.mac_count,
                "block_id": layer.block_id,
                "stage_id": layer.stage_id,
                "fixed_weight_bit": layer.fixed_weight_bit,
                "activation_bit": layer.activation_bit,
            }
            for layer in model.layers
        ],
    }
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def read_descriptor(path: str | Path) -> ModelDescriptor:
    """Parse and validate a descriptor; errors cite the layer and field."""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(
            f"{path}: not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(document, dict):
        raise FormatError(f"{path}: top level must be an object")

    def pull(obj: dict, field: str, kind, where: str, default=_MISSING):
        if field not in obj:
            if default is not _MISSING:
                return default
            raise FormatError(f"{path}: {where}: missing field {field!r}")
        value = obj[field]
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise FormatError(
                f"{path}: {where}: field {field!r} must be an integer, "
                f"got {value!r}"
            )
        if kind is str and not isinstance(value, str):
            raise FormatError(
                f"{path}: {where}: field {field!r} must be a string, got {value!r}"
            )
        return value

    raw_layers = document.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise FormatError(f"{path}: 'layers' must be a nonempty array")
    layers = []
    for i, entry in enumerate(raw_layers):
        where = f"layer {i}"
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: {where}: must be an object")
        pin = entry.get("fixed_weight_bit")
        if pin is not None and (isinstance(pin, bool) or not isinstance(pin, int)):
            raise FormatError(
                f"{path}: {where}: field 'fixed_weight_bit' must be an "
                f"integer or null, got {pin!r}"
            )
        try:
            layers.append(
                LayerDescriptor(
                    name=pull(entry, "name", str, where),
                    param_count=pull(entry, "param_count", int, where),
                    mac_count=pull(entry, "mac_count", int, where),
                    block_id=pull(entry, "block_id", int, where, 0),
                    stage_id=pull(entry, "stage_id", int, where, 0),
                    fixed_weight_bit=pin,
                    activation_bit=pull(entry, "activation_bit", int, where, 8),
                )
            )
        except ValidationError as exc:
            raise FormatError(f"{path}: {where}: {exc}") from exc
    try:
        return ModelDescriptor(
            layers=tuple(layers),
            bit_min=pull(document, "bit_min", int, "top level"),
            bit_max=pull(document, "bit_max", int, "top level"),
        )
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_orm_csv(
    matrix: OrmMatrix, path: str | Path, names: list[str] | None = None
) -> None:
    """CSV with a layer-name header and 17-significant-digit values.

    17 digits reproduce any binary64 exactly, so write/read round-trips are
    lossless, and repeated runs of a deterministic pipeline produce
    byte-identical files.
    """
    if names is None:
        names = [f"layer{i}" for i in range(matrix.order)]
    if len(names) != matrix.order:
        raise ValidationError(
            f"{len(names)} names for a matrix of order {matrix.order}"
        )
    if len(set(names)) != len(names):
        raise DuplicateName("layer names in a matrix header must be unique")
    for name in names:
        if not name or any(ch in name for ch in ",\r\n"):
            raise FormatError(
                f"layer name {name!r} cannot appear in a CSV header"
            )
    lines = [",".join(names)]
    for row in matrix.values:
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_orm_csv(path: str | Path) -> OrmMatrix:
    """Parse a matrix CSV; the constructor enforces symmetry and range."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty matrix file")
    names = lines[0].split(",")
    order = len(names)
    if len(set(names)) != order:
        raise DuplicateName(f"{path}: duplicate layer names in header")
    if len(lines) - 1 != order:
        raise FormatError(
            f"{path}: header names {order} layers but there are "
            f"{len(lines) - 1} value rows"
        )
    values = np.empty((order, order), dtype=np.float64)
    for r, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != order:
            raise FormatError(
                f"{path}: row {r} has {len(cells)} cells, expected {order}"
            )
        for c, cell in enumerate(cells):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: row {r} column {c}: not a number: {cell!r}"
                ) from None
    return OrmMatrix(values)


def write_report(
    result: AllocationResult,
    model: ModelDescriptor,
    path: str | Path,
    matrix: OrmMatrix | None = None,
    heatmap_path: str | Path | None = None,
) -> None:
    """JSON report of an allocation, optionally plus an SVG chart.

    The report repeats the result's totals verbatim (JSON preserves binary64
    exactly), so parsing it back reproduces them bit for bit. The chart needs
    the orthogonality matrix and is only written when heatmap_path is given.
    """
    if len(result.bits) != len(model):
        raise ValidationError(
            f"result covers {len(result.bits)} layers, descriptor {len(model)}"
        )
    from .allocator import layer_size_mb

    sizes = [
        layer_size_mb(layer.param_count, bit)
        for layer, bit in zip(model.layers, result.bits)
    ]
    total = sum(sizes)
    document = {
        "method": result.method,
        "objective_value": result.objective_value,
        "model_size_mb": result.model_size_mb,
        "bops_g": result.bops_g,
        "layers": [
            {
                "name": layer.name,
                "bits": bit,
                "param_count": layer.param_count,
                "size_mb": size,
                "size_share": (size / total) if total > 0 else 0.0,
            }
            for layer, bit, size in zip(model.layers, result.bits, sizes)
        ],
    }
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    if heatmap_path is not None:
        if matrix is None:
            raise ValidationError("a heatmap needs the orthogonality matrix")
        write_heatmap(matrix, result, model, heatmap_path)


def write_heatmap(
    matrix: OrmMatrix,
    result: AllocationResult,
    model: ModelDescriptor,
    path: str | Path,
) -> None:
    """Side-by-side orthogonality heatmap and bit-profile bar chart (SVG)."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    if matrix.order != len(model) or len(result.bits) != len(model):
        raise ValidationError("matrix, result and descriptor must agree on layers")
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(11, 4.6), gridspec_kw={"width_ratios": [1.0, 1.3]}
    )
    image = left.imshow(matrix.values, vmin=0.0, vmax=1.0, cmap="viridis")
    left.set_title("layer orthogonality")
    left.set_xlabel("layer")
    left.set_ylabel("layer")
    fig.colorbar(image, ax=left, fraction=0.046)
    positions = range(len(model))
    right.bar(positions, result.bits, color="#3b6ea5")
    right.set_title(f"bit profile ({result.method}, {result.model_size_mb:.2f} MB)")
    right.set_xlabel("layer")
    right.set_ylabel("weight bits")
    right.set_ylim(0, max(result.bits) + 1)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
