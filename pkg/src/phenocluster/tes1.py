"""TES1 token-embedding/attention binary stream.

Layout (little-endian throughout):

    bytes 0-3   magic "TES1"
    byte  4     version = 1
    byte  5     flags = 0
    bytes 6-7   reserved = 0
    bytes 8-11  d_model, u32

then records until EOF, each:

    u32 L, then L bytes of UTF-8 JSON metadata
        {patient_id, note_id, chunk_index, n_tokens, tokens:[...]}
    n_tokens x d_model f32, row-major (token-major embedding)
    n_tokens x n_tokens f32, row-major (attention, rows attend)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .attnpool import TokenStreamRecord, TokenStreamError

MAGIC = b"TES1"
HEADER_LEN = 12


class StreamFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_header(fh, d_model: int) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<BBH", 1, 0, 0))
    fh.write(struct.pack("<I", d_model))


def write_record(fh, record: TokenStreamRecord) -> None:
    meta = json.dumps(
        {
            "patient_id": record.patient_id,
            "note_id": record.note_id,
            "chunk_index": record.chunk_index,
            "n_tokens": record.n_tokens,
            "tokens": list(record.tokens),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    fh.write(struct.pack("<I", len(meta)))
    fh.write(meta)
    fh.write(np.asarray(record.embedding, dtype="<f4").tobytes(order="C"))
    fh.write(np.asarray(record.attention, dtype="<f4").tobytes(order="C"))


def write_stream(records, path) -> None:
    records = list(records)
    if not records:
        raise ValueError("cannot infer d_model from an empty record list")
    d_model = records[0].d_model
    if any(r.d_model != d_model for r in records):
        raise ValueError("all records in a stream must share d_model")
    with open(path, "wb") as fh:
        write_header(fh, d_model)
        for rec in records:
            write_record(fh, rec)


def read_stream(path) -> list[TokenStreamRecord]:
    """Parse and validate a TES1 file; failures report their byte offset."""
    records = []
    with open(path, "rb") as fh:
        header = fh.read(HEADER_LEN)
        if len(header) < HEADER_LEN:
            raise StreamFormatError("truncated header", 0)
        if header[:4] != MAGIC:
            raise StreamFormatError(f"bad magic {header[:4]!r}", 0)
        version = header[4]
        if version != 1:
            raise StreamFormatError(f"unsupported version {version}", 4)
        (d_model,) = struct.unpack("<I", header[8:12])
        if d_model == 0:
            raise StreamFormatError("d_model must be positive", 8)

        offset = HEADER_LEN
        while True:
            start = offset
            len_bytes = fh.read(4)
            if not len_bytes:
                break
            if len(len_bytes) < 4:
                raise StreamFormatError("truncated record length", start)
            (meta_len,) = struct.unpack("<I", len_bytes)
            offset += 4
            meta_raw = fh.read(meta_len)
            if len(meta_raw) < meta_len:
                raise StreamFormatError("truncated metadata", offset)
            try:
                meta = json.loads(meta_raw.decode("utf-8"))
                n_tokens = int(meta["n_tokens"])
                tokens = [str(t) for t in meta["tokens"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise StreamFormatError(f"bad metadata: {exc}", offset) from exc
            offset += meta_len
            if len(tokens) != n_tokens:
                raise StreamFormatError(
                    f"metadata lists {len(tokens)} tokens but n_tokens={n_tokens}", start)

            emb_bytes = n_tokens * d_model * 4
            raw = fh.read(emb_bytes)
            if len(raw) < emb_bytes:
                raise StreamFormatError("truncated embedding payload", offset)
            embedding = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, d_model)
            offset += emb_bytes

            att_bytes = n_tokens * n_tokens * 4
            raw = fh.read(att_bytes)
            if len(raw) < att_bytes:
                raise StreamFormatError("truncated attention payload", offset)
            attention = np.frombuffer(raw, dtype="<f4").reshape(n_tokens, n_tokens)
            offset += att_bytes

            try:
                records.append(TokenStreamRecord(
                    patient_id=str(meta["patient_id"]),
                    note_id=str(meta["note_id"]),
                    chunk_index=int(meta["chunk_index"]),
                    tokens=tokens,
                    embedding=embedding.astype(float),
                    attention=attention.astype(float),
                ))
            except TokenStreamError as exc:
                raise StreamFormatError(f"record {len(records)}: {exc}", start) from exc
    return records


def group_by_patient(records) -> dict[str, list[TokenStreamRecord]]:
    grouped: dict[str, list[TokenStreamRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.patient_id, []).append(rec)
    for recs in grouped.values():
        recs.sort(key=lambda r: (r.note_id, r.chunk_index))
    return grouped
