import json
import sqlite3

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from layerlens.store import (
    COLUMNS,
    ActivationRecord,
    ActivationStore,
    StoreError,
    TensorCodecError,
    decode_tensor,
    encode_tensor,
)

PAPER_COLUMNS = ["name", "architecture", "image_path", "prompt", "label", "layer", "tensor_dim", "tensor"]


def rec(array, layer="head", **kw):
    base = dict(name="Salesforce/blip2-opt-2.7b", architecture="blip2", image_path="a.png",
                prompt="Describe the color in this image in one word.", layer=layer)
    base.update(kw)
    return ActivationRecord.from_array(np.asarray(array, dtype=np.float32), **base)


def test_schema_columns_in_paper_order(store):
    assert store.columns() == PAPER_COLUMNS + ["dtype"]
    assert list(COLUMNS) == PAPER_COLUMNS + ["dtype"]


def test_encode_small():
    dims, blob = encode_tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert dims == [2, 2]
    assert len(blob) == 16
    assert blob[:4] == np.float32(1.0).tobytes()  # little-endian on every supported host
    assert np.array_equal(decode_tensor(dims, blob), [[1, 2], [3, 4]])


def test_encode_empty():
    dims, blob = encode_tensor(np.zeros((0,), dtype=np.float32))
    assert dims == [0] and blob == b""
    assert decode_tensor([0], b"").shape == (0,)


def test_blob_is_little_endian_row_major():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    _, blob = encode_tensor(arr)
    assert blob == np.arange(6, dtype="<f4").tobytes()


def test_encode_rejects_nonfinite():
    with pytest.raises(TensorCodecError, match="NaN"):
        encode_tensor(np.array([1.0, np.nan]))
    dims, blob = encode_tensor(np.array([1.0, np.inf]), allow_nonfinite=True)
    assert np.isinf(decode_tensor(dims, blob)[1])


def test_decode_length_mismatch():
    with pytest.raises(TensorCodecError):
        decode_tensor([2, 3], b"\x00" * 20)


def test_insert_accepts_consistent_record(store):
    r = ActivationRecord("m", "a", "i", "p", None, "head", [2, 3], b"\x00" * 24)
    assert store.insert(r) == 1


def test_insert_rejects_length_mismatch(store):
    r = ActivationRecord("m", "a", "i", "p", None, "head", [2, 3], b"\x00" * 20)
    with pytest.raises(TensorCodecError):
        store.insert(r)
    assert len(store) == 0


def test_ids_increase(store):
    ids = [store.insert(rec(np.ones(2))) for _ in range(5)]
    assert ids == sorted(ids) and len(set(ids)) == 5


def test_insert_into_closed_store(tmp_path):
    s = ActivationStore(tmp_path / "c.db")
    s.close()
    with pytest.raises(StoreError, match="closed"):
        s.insert(rec(np.ones(2)))


def test_paper_layer_queryable(store):
    store.insert(rec(np.ones((1, 3)), layer="vision_model.post_layernorm"))
    store.insert(rec(np.ones((1, 3)), layer="language_model.lm_head"))
    got = store.query(layer="vision_model.post_layernorm")
    assert [r.layer for r in got] == ["vision_model.post_layernorm"]


def test_query_partition(store):
    for i in range(3):
        for layer in ("head", "blocks.0.norm"):
            store.insert(rec(np.full(4, i), layer=layer, image_path=f"{i}.png"))
    heads = store.query(layer="head")
    assert len(heads) == 3
    assert [r.image_path for r in heads] == ["0.png", "1.png", "2.png"]
    assert len(store.query()) == 6


def test_query_unknown_key(store):
    with pytest.raises(StoreError, match="unknown filter"):
        store.query(colour="red")


def test_label_null_and_filter(store):
    store.insert(rec(np.ones(2)))
    store.insert(rec(np.ones(2), label="red"))
    assert [r.label for r in store.query(label=None)] == [None]
    assert [r.label for r in store.query(label="red")] == ["red"]


def test_on_disk_row_format(tmp_path):
    path = tmp_path / "raw.db"
    with ActivationStore(path) as s:
        s.insert(rec(np.arange(6).reshape(1, 2, 3), label="x"))
    row = sqlite3.connect(path).execute("SELECT tensor_dim, tensor, dtype, label FROM tensors").fetchone()
    assert json.loads(row[0]) == [1, 2, 3]
    assert bytes(row[1]) == np.arange(6, dtype="<f4").tobytes()
    assert row[2] == "float32" and row[3] == "x"


def test_batched_commit_visible_to_other_readers(tmp_path):
    path = tmp_path / "batch.db"
    writer = ActivationStore(path)
    for _ in range(63):
        writer.insert(rec(np.ones(2)))
    reader = ActivationStore(path, readonly=True)
    assert len(reader) == 0  # nothing committed yet
    writer.insert(rec(np.ones(2)))
    assert len(reader) == 64
    writer.insert(rec(np.ones(2)))
    writer.close()
    assert len(reader) == 65
    reader.close()


def test_readonly_rejects_insert(tmp_path):
    path = tmp_path / "ro.db"
    ActivationStore(path).close()
    with ActivationStore(path, readonly=True) as ro:
        with pytest.raises(StoreError, match="read-only"):
            ro.insert(rec(np.ones(2)))


def test_readonly_missing(tmp_path):
    with pytest.raises(StoreError, match="not found"):
        ActivationStore(tmp_path / "missing.db", readonly=True)


def test_export(store, tmp_path):
    store.insert(rec(np.arange(4).reshape(2, 2), label="a"))
    store.insert(rec(np.arange(3), layer="x"))
    manifest_path = store.export(tmp_path / "dump")
    manifest = json.loads(manifest_path.read_text())
    assert manifest["encoding"] == "float32-le-row-major"
    first = manifest["records"][0]
    blob = (tmp_path / "dump" / first["file"]).read_bytes()
    assert np.array_equal(decode_tensor(first["tensor_dim"], blob), np.arange(4).reshape(2, 2))
    assert [e["layer"] for e in manifest["records"]] == ["head", "x"]


def test_distinct_layers(store):
    for layer in ("b", "a", "b"):
        store.insert(rec(np.ones(1), layer=layer))
    assert store.distinct("layer") == ["b", "a"]


finite_f32 = st.floats(allow_nan=False, allow_infinity=False, width=32)


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=4, max_side=8), elements=finite_f32))
def test_codec_round_trip_bitwise(arr):
    dims, blob = encode_tensor(arr)
    out = decode_tensor(dims, blob)
    assert out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    rows=st.lists(
        st.tuples(st.sampled_from(["m1", "m2"]), st.sampled_from(["l1", "l2", "l3"]),
                  st.sampled_from([None, "red", "blue"]), st.sampled_from(["a.png", "b.png"])),
        min_size=0, max_size=25,
    ),
    filt=st.dictionaries(st.sampled_from(["name", "layer", "label", "image_path"]),
                         st.sampled_from(["m1", "l2", "red", None, "a.png"]), max_size=3),
)
def test_query_equals_brute_force(tmp_path_factory, rows, filt):
    path = tmp_path_factory.mktemp("q") / "s.db"
    records = []
    with ActivationStore(path) as s:
        for i, (name, layer, label, img) in enumerate(rows):
            r = rec(np.full(2, i), name=name, layer=layer, label=label, image_path=img)
            s.insert(r)
            records.append(r)
        got = [r.id for r in s.query(**filt)]
    want = [r.id for r in records if all(getattr(r, k) == v for k, v in filt.items())]
    assert got == want
