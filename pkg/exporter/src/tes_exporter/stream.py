"""TES1 stream writer (little-endian throughout).

Header: magic "TES1", u8 version 1, u8 flags 0, u16 reserved 0,
u32 d_model. Each record: u32 metadata length, UTF-8 JSON metadata
({patient_id, note_id, chunk_index, n_tokens, tokens}), n x d_model f32
row-major embedding, n x n f32 row-major attention.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TES1"


def write_stream(records, path, d_model: int | None = None) -> None:
    """Write records ordered by (patient_id, note_id, chunk_index).

    With no records, d_model is required and a 12-byte header-only file
    is produced.
    """
    records = sorted(records, key=lambda r: (r.patient_id, r.note_id, r.chunk_index))
    if records:
        d_model = records[0].d_model
        if any(r.d_model != d_model for r in records):
            raise ValueError("records disagree on d_model")
    elif d_model is None:
        raise ValueError("d_model is required to write an empty stream")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBHI", 1, 0, 0, d_model))
        for rec in records:
            meta = json.dumps(
                {"patient_id": rec.patient_id, "note_id": rec.note_id,
                 "chunk_index": rec.chunk_index, "n_tokens": rec.n_tokens,
                 "tokens": list(rec.tokens)},
                sort_keys=True, separators=(",", ":")).encode("utf-8")
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(np.ascontiguousarray(rec.embedding, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(rec.attention, dtype="<f4").tobytes())
