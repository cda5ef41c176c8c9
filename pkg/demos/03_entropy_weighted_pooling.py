"""How entropy-weighted attention pooling decides token importance.

Each token's attention row is treated as a sample; its differential
entropy is estimated from sorted spacings, and the softmax of the
entropies gives the pooling weights. Rows that spread their attention get
more weight than rows that repeat one dominant pattern, whose clamped
spacings drive the estimate strongly negative.
"""

import math
from pathlib import Path

import numpy as np

from phenocluster import (TokenStreamRecord, differential_entropy_spacing,
                          entropy_weights, patient_note_vector, pool_chunk)
from phenocluster.pipeline import emit_attention_heatmap

print("spacing estimator on hand samples:")
print(f"  h([0,1,2,3])      = {differential_entropy_spacing([0, 1, 2, 3]):+.4f}"
      f"  (= ln 4 = {math.log(4):.4f})")
print(f"  h(0.25 repeated)  = {differential_entropy_spacing([0.25] * 4):+.1f}"
      "  (repeated values clamp to a very negative estimate)")
x = np.random.default_rng(0).random(512)
print(f"  h(3x) - h(x)      = {differential_entropy_spacing(3 * x) - differential_entropy_spacing(x):+.6f}"
      f"  (= ln 3 = {math.log(3):.6f})")

attention = np.array([
    [0.32, 0.33, 0.35],   # spread row: moderate entropy
    [0.001, 0.998, 0.001],  # attends itself, repeated tails
    [0.001, 0.001, 0.998],
])
ew = entropy_weights(attention)
print("\n3-token example:")
for token, h, w in zip(("spread", "selfish-1", "selfish-2"), ew.entropies, ew.weights):
    print(f"  {token:>10}: entropy {h:+9.3f} -> weight {w:.4f}")

record = TokenStreamRecord(
    patient_id="demo", note_id="n0", chunk_index=0,
    tokens=["spread", "selfone", "seltwo"],
    embedding=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
    attention=attention)
print(f"  pooled chunk vector: {pool_chunk(record).round(4)}")
print("  (dominated by the spread token's embedding)")

uniform = TokenStreamRecord(
    patient_id="demo", note_id="n0", chunk_index=1,
    tokens=record.tokens, embedding=record.embedding,
    attention=np.full((3, 3), 1 / 3))
print(f"  uniform attention pools to the plain mean: {pool_chunk(uniform).round(4)}")

pooled = patient_note_vector([record, uniform])
print(f"\npatient vector = mean over {pooled.n_chunks} chunks: {pooled.vector.round(4)}")

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
emit_attention_heatmap(record, out / "attention_heatmap.csv")
print(f"attention heatmap CSV written to {out / 'attention_heatmap.csv'}")
