"""exporter: cohort notes -> TES1 token stream.

    exporter --cohort cohort.jsonl --model <name-or-path> --out stream.tes1 \
             [--delimiters chars.txt] [--batch-size 8]

Chunks are encoded in batches but always written in
(patient_id, note_id, chunk_index) order.
"""

from __future__ import annotations

import argparse
import sys

from .chunking import DEFAULT_DELIMITERS, clean_and_chunk, load_delimiters
from .cohort import iter_notes
from .encoder import EncoderHandle, TokenRecord
from .stream import write_stream


def export_cohort(cohort_path, model_path, out_path,
                  delimiters=DEFAULT_DELIMITERS, batch_size: int = 8) -> list[TokenRecord]:
    handle = EncoderHandle(model_path)
    jobs = []
    for patient_id, note_id, note in iter_notes(cohort_path):
        plan = clean_and_chunk(note, note_id=note_id, delimiters=delimiters)
        for chunk_index, text in enumerate(plan.chunks):
            jobs.append((patient_id, note_id, chunk_index, text))
    jobs.sort(key=lambda j: (j[0], j[1], j[2]))

    records = []
    for start in range(0, len(jobs), batch_size):
        batch = jobs[start:start + batch_size]
        encoded = handle.encode_batch([j[3] for j in batch])
        for (patient_id, note_id, chunk_index, _), (tokens, emb, att) in zip(batch, encoded):
            records.append(TokenRecord(patient_id=patient_id, note_id=note_id,
                                       chunk_index=chunk_index, tokens=tokens,
                                       embedding=emb, attention=att))
    write_stream(records, out_path, d_model=handle.d_model)
    return records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exporter",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--cohort", required=True, help="cohort JSONL file")
    parser.add_argument("--model", required=True, help="pretrained encoder name or path")
    parser.add_argument("--out", required=True, help="output TES1 path")
    parser.add_argument("--delimiters", help="file whose characters are stripped from notes")
    parser.add_argument("--batch-size", type=int, default=8)
    args = parser.parse_args(argv)

    delimiters = load_delimiters(args.delimiters) if args.delimiters else DEFAULT_DELIMITERS
    try:
        records = export_cohort(args.cohort, args.model, args.out,
                                delimiters=delimiters, batch_size=args.batch_size)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(records)} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
