import json
import struct

import numpy as np
import pytest

from tes_exporter.encoder import TokenRecord
from tes_exporter.stream import write_stream


def tiny_record(pid="p1", note="n0", chunk=0, n=3, d=4, seed=0):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(n, d)).astype(np.float32)
    att = rng.dirichlet(np.ones(n), size=n).astype(np.float32)
    return TokenRecord(patient_id=pid, note_id=note, chunk_index=chunk,
                       tokens=[f"t{i}" for i in range(n)],
                       embedding=emb, attention=att)


class TestWriteStream:
    def test_empty_stream_is_header_only(self, tmp_path):
        path = tmp_path / "empty.tes1"
        write_stream([], path, d_model=768)
        raw = path.read_bytes()
        assert len(raw) == 12
        assert raw[:4] == b"TES1"
        assert struct.unpack("<I", raw[8:12])[0] == 768

    def test_empty_stream_requires_d_model(self, tmp_path):
        with pytest.raises(ValueError):
            write_stream([], tmp_path / "x.tes1", d_model=None)

    def test_layout_arithmetic(self, tmp_path):
        records = [tiny_record(chunk=i, n=3, d=4, seed=i) for i in range(2)]
        path = tmp_path / "s.tes1"
        write_stream(records, path)
        expected = 12
        for rec in records:
            meta_len = len(json.dumps(
                {"patient_id": rec.patient_id, "note_id": rec.note_id,
                 "chunk_index": rec.chunk_index, "n_tokens": 3,
                 "tokens": rec.tokens}, sort_keys=True,
                separators=(",", ":")).encode())
            expected += 4 + meta_len + 3 * 4 * 4 + 3 * 3 * 4
        assert path.stat().st_size == expected

    def test_records_sorted_on_write(self, tmp_path):
        records = [tiny_record("p2", "n0", 0, seed=1),
                   tiny_record("p1", "n1", 1, seed=2),
                   tiny_record("p1", "n1", 0, seed=3)]
        path = tmp_path / "s.tes1"
        write_stream(records, path)
        phenocluster_tes1 = pytest.importorskip("phenocluster.tes1")
        back = phenocluster_tes1.read_stream(path)
        order = [(r.patient_id, r.note_id, r.chunk_index) for r in back]
        assert order == sorted(order)

    def test_roundtrip_through_primary_reader(self, tmp_path):
        phenocluster_tes1 = pytest.importorskip("phenocluster.tes1")
        records = [tiny_record(chunk=i, seed=i) for i in range(3)]
        path = tmp_path / "s.tes1"
        write_stream(records, path)
        back = phenocluster_tes1.read_stream(path)
        for mine, theirs in zip(records, back):
            assert mine.tokens == theirs.tokens
            assert np.array_equal(mine.embedding, np.float32(theirs.embedding))
            assert np.array_equal(mine.attention, np.float32(theirs.attention))
