"""Both end-to-end pipelines on the synthetic dataset, via the same entry
points the CLI uses, with label recovery scored against the ground truth.

Equivalent shell commands:

    phenocluster synth --out demos/output/dataset
    phenocluster run-icd   --cohort .../cohort.jsonl --embeddings .../embeddings.txt \
                           --out demos/output/icd --k 3 --k-sweep 2:6
    phenocluster run-notes --cohort .../cohort.jsonl --stream .../stream.tes1 \
                           --out demos/output/notes --k 3
"""

import json
from pathlib import Path

from phenocluster import (PipelineConfig, SynthSpec, adjusted_rand_index,
                          gen_synthetic_cohort, run_icd_pipeline,
                          run_notes_pipeline)
from phenocluster.cohort import write_cohort
from phenocluster.pipeline import labels_from_csv
from phenocluster.synth import (embedding_table_to_text,
                                gen_synthetic_embedding_table,
                                gen_synthetic_token_stream)
from phenocluster.tes1 import write_stream

root = Path(__file__).parent / "output"
data = root / "dataset"
data.mkdir(parents=True, exist_ok=True)

spec = SynthSpec()
cohort, truth = gen_synthetic_cohort(spec)
write_cohort(cohort, data / "cohort.jsonl")
(data / "embeddings.txt").write_text(
    embedding_table_to_text(gen_synthetic_embedding_table(spec)))
stream, _ = gen_synthetic_token_stream(spec)
write_stream(stream, data / "stream.tes1")

run_icd_pipeline(PipelineConfig(cohort=str(data / "cohort.jsonl"),
                                embeddings=str(data / "embeddings.txt"),
                                out=str(root / "icd"), k=3, k_sweep=(2, 6)))
run_notes_pipeline(PipelineConfig(cohort=str(data / "cohort.jsonl"),
                                  stream=str(data / "stream.tes1"),
                                  out=str(root / "notes"), k=3))

tmap = truth.label_map()
for kind in ("icd", "notes"):
    out = root / kind
    labels = labels_from_csv((out / "labels.csv").read_text())
    common = sorted(set(labels) & set(tmap))
    ari = adjusted_rand_index([tmap[p] for p in common], [labels[p] for p in common])
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"{kind} pipeline: ARI {ari:.3f}, {len(manifest['artifacts'])} artifacts "
          f"in {out}")
    for name in sorted(manifest["artifacts"]):
        print(f"    {name}")
