import json
import math
import struct

import numpy as np
import pytest

from ompq import (
    AllocationResult,
    BadMagic,
    DuplicateName,
    FeatureMatrix,
    FormatError,
    LayerDescriptor,
    ModelDescriptor,
    NonFiniteValue,
    OrmMatrix,
    Truncated,
    UnsupportedVersion,
    ValidationError,
    read_descriptor,
    read_dump,
    read_orm_csv,
    write_descriptor,
    write_dump,
    write_orm_csv,
    write_report,
)
from ompq.model_io import write_heatmap


def fm(name, data, dtype=np.float32):
    return FeatureMatrix(layer_name=name, data=np.asarray(data, dtype=dtype))


def raw_dump(layers, version=1, magic=b"OMPQACTV", layer_count=None):
    out = bytearray(magic)
    out += struct.pack("<II", version, len(layers) if layer_count is None else layer_count)
    for name, ns, nf, dtype, payload in layers:
        out += struct.pack("<I", len(name)) + name
        out += struct.pack("<QQB", ns, nf, dtype)
        out += payload
    return bytes(out)


def one_layer_bytes(values=(1.0, 2.0, 3.0, 4.0), name=b"layer01", **kw):
    payload = struct.pack(f"<{len(values)}f", *values)
    return raw_dump([(name, 2, len(values) // 2, 1, payload)], **kw)


class TestDumpRoundTrip:
    def test_identity(self, tmp_path):
        feats = [
            fm("first", [[1.0, -2.5], [0.25, 4.0]]),
            fm("second", [[0.5, 0.125, 8.0], [1.0, 2.0, 3.0]]),
        ]
        path = tmp_path / "a.dump"
        write_dump(feats, path)
        back = read_dump(path)
        assert [f.layer_name for f in back] == ["first", "second"]
        for a, b in zip(feats, back):
            assert b.data.dtype == np.float32
            assert np.array_equal(a.data, b.data)

    def test_f64_written_as_f32(self, tmp_path):
        f = fm("a", [[1.0, 2.0]], dtype=np.float64)
        path = tmp_path / "a.dump"
        write_dump([f], path)
        back = read_dump(path)
        assert back[0].data.dtype == np.float32
        assert np.array_equal(back[0].data, [[1.0, 2.0]])

    def test_deterministic_bytes(self, tmp_path):
        feats = [fm("a", np.random.default_rng(0).standard_normal((4, 3)))]
        p1, p2 = tmp_path / "1.dump", tmp_path / "2.dump"
        write_dump(feats, p1)
        write_dump(feats, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_list_minimal_file(self, tmp_path):
        path = tmp_path / "empty.dump"
        write_dump([], path)
        assert path.read_bytes() == b"OMPQACTV" + struct.pack("<II", 1, 0)
        assert read_dump(path) == []

    def test_write_rejects_duplicate_names(self, tmp_path):
        f = fm("a", [[1.0]])
        with pytest.raises(DuplicateName):
            write_dump([f, fm("a", [[2.0]])], tmp_path / "x.dump")

    def test_write_rejects_f32_overflow(self, tmp_path):
        f = fm("a", [[1e200, 1.0]], dtype=np.float64)
        with pytest.raises(ValidationError):
            write_dump([f], tmp_path / "x.dump")

    def test_unicode_names_survive(self, tmp_path):
        f = fm("bloc.0/é", [[1.0]])
        path = tmp_path / "u.dump"
        write_dump([f], path)
        assert read_dump(path)[0].layer_name == "bloc.0/é"


class TestDumpCorruption:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes(magic=b"XXXXXXXX"))
        with pytest.raises(BadMagic):
            read_dump(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(b"")
        with pytest.raises(Truncated):
            read_dump(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes(version=2))
        with pytest.raises(UnsupportedVersion):
            read_dump(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes()[:-5])
        with pytest.raises(Truncated):
            read_dump(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes()[:10])
        with pytest.raises(Truncated):
            read_dump(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes() + b"\x00")
        with pytest.raises(Truncated):
            read_dump(path)

    def test_oversized_declaration_never_allocates(self, tmp_path):
        path = tmp_path / "x.dump"
        payload = struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
        path.write_bytes(raw_dump([(b"a", 2**40, 2**40, 1, payload)]))
        with pytest.raises(Truncated):
            read_dump(path)

    def test_nan_payload(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes(values=(1.0, math.nan, 3.0, 4.0)))
        with pytest.raises(NonFiniteValue, match="flat index 1"):
            read_dump(path)

    def test_inf_payload(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes(values=(math.inf, 2.0, 3.0, 4.0)))
        with pytest.raises(NonFiniteValue):
            read_dump(path)

    def test_duplicate_layer_names(self, tmp_path):
        payload = struct.pack("<2f", 1.0, 2.0)
        path = tmp_path / "x.dump"
        path.write_bytes(
            raw_dump([(b"same", 1, 2, 1, payload), (b"same", 1, 2, 1, payload)])
        )
        with pytest.raises(DuplicateName):
            read_dump(path)

    def test_unknown_dtype_tag(self, tmp_path):
        path = tmp_path / "x.dump"
        payload = struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
        path.write_bytes(raw_dump([(b"a", 2, 2, 9, payload)]))
        with pytest.raises(FormatError, match="dtype"):
            read_dump(path)

    def test_non_utf8_name(self, tmp_path):
        path = tmp_path / "x.dump"
        payload = struct.pack("<2f", 1.0, 2.0)
        path.write_bytes(raw_dump([(b"\xff\xfe", 1, 2, 1, payload)]))
        with pytest.raises(FormatError, match="UTF-8"):
            read_dump(path)

    def test_layer_count_larger_than_content(self, tmp_path):
        path = tmp_path / "x.dump"
        path.write_bytes(one_layer_bytes(layer_count=2))
        with pytest.raises(Truncated):
            read_dump(path)


def sample_model():
    return ModelDescriptor(
        layers=(
            LayerDescriptor(name="conv1", param_count=1728, mac_count=1769472,
                            block_id=0, stage_id=0, fixed_weight_bit=8),
            LayerDescriptor(name="conv2", param_count=36864, mac_count=2359296,
                            block_id=1, stage_id=0),
            LayerDescriptor(name="fc", param_count=512000, mac_count=512000,
                            block_id=2, stage_id=1, activation_bit=4),
        ),
        bit_min=4,
        bit_max=8,
    )


class TestDescriptor:
    def test_round_trip(self, tmp_path):
        model = sample_model()
        path = tmp_path / "m.json"
        write_descriptor(model, path)
        assert read_descriptor(path) == model

    def test_defaults_fill_in(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "bit_min": 2, "bit_max": 4,
            "layers": [{"name": "a", "param_count": 10, "mac_count": 20}],
        }))
        model = read_descriptor(path)
        assert model.layers[0].block_id == 0
        assert model.layers[0].stage_id == 0
        assert model.layers[0].activation_bit == 8
        assert model.layers[0].fixed_weight_bit is None

    def test_bad_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(FormatError, match="line 1"):
            read_descriptor(path)

    def test_missing_field_names_layer(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "bit_min": 2, "bit_max": 4,
            "layers": [{"name": "a", "param_count": 10, "mac_count": 20},
                       {"name": "b", "mac_count": 20}],
        }))
        with pytest.raises(FormatError, match="layer 1"):
            read_descriptor(path)

    def test_wrong_type_diagnosed(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "bit_min": 2, "bit_max": 4,
            "layers": [{"name": "a", "param_count": "ten", "mac_count": 20}],
        }))
        with pytest.raises(FormatError, match="param_count"):
            read_descriptor(path)

    def test_missing_bit_range(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "layers": [{"name": "a", "param_count": 10, "mac_count": 20}],
        }))
        with pytest.raises(FormatError, match="bit_min"):
            read_descriptor(path)

    def test_bad_pin_type(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "bit_min": 2, "bit_max": 4,
            "layers": [{"name": "a", "param_count": 10, "mac_count": 20,
                        "fixed_weight_bit": 7.5}],
        }))
        with pytest.raises(FormatError, match="fixed_weight_bit"):
            read_descriptor(path)

    def test_non_list_layers(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"bit_min": 2, "bit_max": 4, "layers": {}}))
        with pytest.raises(FormatError, match="layers"):
            read_descriptor(path)

    def test_invalid_model_rejected_with_path(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "bit_min": 8, "bit_max": 4,
            "layers": [{"name": "a", "param_count": 10, "mac_count": 20}],
        }))
        with pytest.raises(FormatError, match="bit_min"):
            read_descriptor(path)


class TestOrmCsv:
    def test_identity_round_trip(self, tmp_path):
        path = tmp_path / "k.csv"
        write_orm_csv(OrmMatrix(np.eye(2)), path, ["a", "b"])
        back = read_orm_csv(path)
        assert np.array_equal(back.values, np.eye(2))

    def test_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(5)
        raw = rng.uniform(0.0, 1.0, (6, 6))
        sym = (raw + raw.T) / 2
        np.fill_diagonal(sym, 1.0)
        matrix = OrmMatrix(sym)
        path = tmp_path / "k.csv"
        write_orm_csv(matrix, path)
        back = read_orm_csv(path)
        assert np.array_equal(back.values, matrix.values)

    def test_header_names_preserved(self, tmp_path):
        path = tmp_path / "k.csv"
        write_orm_csv(OrmMatrix(np.eye(2)), path, ["alpha", "beta"])
        assert path.read_text().splitlines()[0] == "alpha,beta"

    def test_rejects_wrong_name_count(self, tmp_path):
        with pytest.raises(ValidationError):
            write_orm_csv(OrmMatrix(np.eye(2)), tmp_path / "k.csv", ["only"])

    def test_rejects_comma_in_name(self, tmp_path):
        with pytest.raises(FormatError):
            write_orm_csv(OrmMatrix(np.eye(2)), tmp_path / "k.csv", ["a,b", "c"])

    def test_rejects_duplicate_names(self, tmp_path):
        with pytest.raises(DuplicateName):
            write_orm_csv(OrmMatrix(np.eye(2)), tmp_path / "k.csv", ["a", "a"])

    def test_asymmetric_csv_rejected(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("a,b\n1,0.5\n0.6,1\n")
        with pytest.raises(ValidationError):
            read_orm_csv(path)

    def test_wrong_row_count(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("a,b\n1,0\n")
        with pytest.raises(FormatError, match="rows"):
            read_orm_csv(path)

    def test_bad_cell(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("a,b\n1,zero\n0,1\n")
        with pytest.raises(FormatError, match="zero"):
            read_orm_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("")
        with pytest.raises(FormatError):
            read_orm_csv(path)


class TestReport:
    def result_for(self, model, bits):
        from ompq.allocator import bops_g, layer_size_mb

        size = sum(
            layer_size_mb(layer.param_count, b)
            for layer, b in zip(model.layers, bits)
        )
        return AllocationResult(
            bits=bits,
            objective_value=1.2345,
            model_size_mb=size,
            bops_g=bops_g(list(bits), [l.activation_bit for l in model.layers], model),
            method="dfs",
        )

    def test_parse_back_exact(self, tmp_path):
        model = sample_model()
        result = self.result_for(model, (8, 5, 4))
        path = tmp_path / "r.json"
        write_report(result, model, path)
        doc = json.loads(path.read_text())
        assert doc["objective_value"] == result.objective_value
        assert doc["model_size_mb"] == result.model_size_mb
        assert doc["bops_g"] == result.bops_g
        assert doc["method"] == "dfs"
        assert [row["bits"] for row in doc["layers"]] == [8, 5, 4]

    def test_totals_additive(self, tmp_path):
        from ompq.allocator import layer_size_mb

        model = sample_model()
        result = self.result_for(model, (8, 8, 8))
        path = tmp_path / "r.json"
        write_report(result, model, path)
        doc = json.loads(path.read_text())
        want = sum(layer_size_mb(l.param_count, 8) for l in model.layers)
        assert sum(row["size_mb"] for row in doc["layers"]) == pytest.approx(
            want, rel=1e-15
        )
        assert sum(row["size_share"] for row in doc["layers"]) == pytest.approx(
            1.0, rel=1e-12
        )

    def test_single_layer_report(self, tmp_path):
        model = ModelDescriptor(
            layers=(LayerDescriptor(name="only", param_count=100, mac_count=100),),
            bit_min=2, bit_max=8,
        )
        result = self.result_for(model, (6,))
        path = tmp_path / "r.json"
        write_report(result, model, path)
        assert len(json.loads(path.read_text())["layers"]) == 1

    def test_length_mismatch(self, tmp_path):
        model = sample_model()
        result = self.result_for(model, (8, 5, 4))
        small = ModelDescriptor(layers=model.layers[:2], bit_min=4, bit_max=8)
        with pytest.raises(ValidationError):
            write_report(result, small, tmp_path / "r.json")

    def test_heatmap_svg(self, tmp_path):
        model = sample_model()
        result = self.result_for(model, (8, 5, 4))
        matrix = OrmMatrix(np.eye(3))
        svg = tmp_path / "chart.svg"
        write_heatmap(matrix, result, model, svg)
        content = svg.read_text()
        assert "<svg" in content and len(content) > 1000

    def test_heatmap_requires_matrix(self, tmp_path):
        model = sample_model()
        result = self.result_for(model, (8, 5, 4))
        with pytest.raises(ValidationError):
            write_report(
                result, model, tmp_path / "r.json",
                matrix=None, heatmap_path=tmp_path / "c.svg",
            )
