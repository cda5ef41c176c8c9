"""Entropy-weighted attention pooling of token embeddings.

Each token's weight is the softmax of the spacing-estimator differential
entropy of its attention row; the chunk vector is the weighted sum of token
embeddings and the patient vector is the plain mean of chunk vectors.

All reductions that cross the token dimension are computed over
value-sorted operands, so pooling is exactly invariant to a consistent
permutation of tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPACING_EPS = 1e-12
ROW_SUM_TOL = 1e-3
MAX_TOKENS = 512


class TokenStreamError(ValueError):
    pass


@dataclass
class TokenStreamRecord:
    patient_id: str
    note_id: str
    chunk_index: int
    tokens: list[str]
    embedding: np.ndarray  # (n_tokens, d_model)
    attention: np.ndarray  # (n_tokens, n_tokens), rows sum to 1

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float)
        self.attention = np.asarray(self.attention, dtype=float)
        n = len(self.tokens)
        if not 1 <= n <= MAX_TOKENS:
            raise TokenStreamError(f"n_tokens {n} outside [1, {MAX_TOKENS}]")
        if self.chunk_index < 0:
            raise TokenStreamError("chunk_index must be >= 0")
        if self.embedding.shape[0] != n:
            raise TokenStreamError("embedding rows != n_tokens")
        if self.attention.shape != (n, n):
            raise TokenStreamError("attention must be n_tokens x n_tokens")
        if not np.isfinite(self.embedding).all():
            raise TokenStreamError("non-finite embedding entry")
        if (self.attention < 0).any():
            raise TokenStreamError("negative attention entry")
        sums = self.attention.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            raise TokenStreamError(
                f"attention row {bad[0]} sums to {sums[bad[0]]:.6f}, expected 1 +/- {ROW_SUM_TOL}")

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def d_model(self) -> int:
        return self.embedding.shape[1]


@dataclass
class EntropyWeights:
    entropies: np.ndarray
    weights: np.ndarray
    degenerate: bool = False


@dataclass
class PatientNoteVector:
    patient_id: str
    vector: np.ndarray
    n_chunks: int


@dataclass(frozen=True)
class TokenMaskPolicy:
    """Which tokens participate in pooling.

    Default keeps every token, special tokens included. With `exclude`
    non-empty, listed token strings are dropped and the remaining weights
    renormalized.
    """

    exclude: frozenset = field(default_factory=frozenset)

    @classmethod
    def all_tokens(cls) -> "TokenMaskPolicy":
        return cls()

    @classmethod
    def exclude_tokens(cls, tokens) -> "TokenMaskPolicy":
        return cls(exclude=frozenset(tokens))


def differential_entropy_spacing(sample) -> float:
    """Spacing estimator of differential entropy from a raw sample.

    Sorts the sample, takes window m = floor(sqrt(n)) clamped into
    [1, n-1] (m = 1 when n = 1, a degenerate case), and averages
    ln(n * spacing / (c_i * m)) with the boundary-corrected c_i schedule.
    Spacings are clamped below at 1e-12 before the logarithm, so repeated
    values give a very negative but finite estimate.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1:
        raise ValueError("sample must be a 1-D vector")
    n = x.size
    if n == 0:
        raise ValueError("sample must be non-empty")
    if not np.isfinite(x).all():
        raise ValueError("sample contains non-finite values")
    x = np.sort(x)
    m = max(1, min(math.isqrt(n), n - 1)) if n > 1 else 1

    i = np.arange(1, n + 1)
    upper = np.minimum(i + m, n) - 1
    lower = np.maximum(i - m, 1) - 1
    spacings = np.maximum(x[upper] - x[lower], SPACING_EPS)

    c = np.full(n, 2.0)
    head = i <= m
    tail = i > n - m
    c[head] = 1.0 + (i[head] - 1) / m
    c[tail] = 1.0 + (n - i[tail]) / m

    return float(np.mean(np.log(n * spacings / (c * m))))


def _softmax_sorted(h: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax whose normalizer sums exps in sorted order."""
    z = np.exp(h - np.max(h))
    return z / float(np.sum(np.sort(z)))


def entropy_weights(attention: np.ndarray) -> EntropyWeights:
    """Per-token weights from row-wise spacing entropy of the attention matrix.

    If every row is constant the estimator carries no signal; the weights
    are then exactly uniform and the result is flagged degenerate.
    """
    attention = np.asarray(attention, dtype=float)
    if attention.ndim != 2 or attention.shape[0] != attention.shape[1]:
        raise ValueError("attention must be a square matrix")
    n = attention.shape[0]
    if np.all(attention.max(axis=1) == attention.min(axis=1)):
        return EntropyWeights(
            entropies=np.array([differential_entropy_spacing(row) for row in attention]),
            weights=np.full(n, 1.0 / n),
            degenerate=True,
        )
    h = np.array([differential_entropy_spacing(row) for row in attention])
    return EntropyWeights(entropies=h, weights=_softmax_sorted(h), degenerate=False)


def pool_chunk(record: TokenStreamRecord,
               policy: TokenMaskPolicy = TokenMaskPolicy()) -> np.ndarray:
    """Weighted sum of token embedding rows under the entropy weights.

    Per-component sums run over value-sorted products, making the result
    independent of token order. With a masking policy, weights are
    renormalized over the kept tokens.
    """
    ew = entropy_weights(record.attention)
    w = ew.weights
    if policy.exclude:
        keep = np.array([t not in policy.exclude for t in record.tokens])
        if not keep.any():
            raise ValueError("token mask removed every token")
        w = w[keep]
        w = w / float(np.sum(np.sort(w)))
        emb = record.embedding[keep]
    else:
        emb = record.embedding
    products = w[:, None] * emb
    return np.sum(np.sort(products, axis=0), axis=0)


def patient_note_vector(records, policy: TokenMaskPolicy = TokenMaskPolicy()) -> PatientNoteVector:
    """Unweighted mean of chunk vectors across all of a patient's records.

    Chunks are reduced in (note_id, chunk_index) order for reproducibility.
    """
    records = sorted(records, key=lambda r: (r.note_id, r.chunk_index))
    if not records:
        raise ValueError("patient_note_vector needs at least one record")
    pids = {r.patient_id for r in records}
    if len(pids) != 1:
        raise ValueError(f"records span multiple patients: {sorted(pids)}")
    total = np.zeros(records[0].d_model)
    for rec in records:
        total = total + pool_chunk(rec, policy)
    return PatientNoteVector(patient_id=records[0].patient_id,
                             vector=total / len(records),
                             n_chunks=len(records))
