"""Chunk encoding with a pretrained BERT-family model.

The record payload is the final layer's hidden states (one row per input
token, cast to f32) and the final layer's attention averaged over its
heads. Eager attention is forced so the per-head matrices are available.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

MAX_TOKENS = 512
ROW_SUM_TOL = 1e-3


@dataclass
class TokenRecord:
    patient_id: str
    note_id: str
    chunk_index: int
    tokens: list[str]
    embedding: np.ndarray  # (n_tokens, d_model) f32
    attention: np.ndarray  # (n_tokens, n_tokens) f32

    def __post_init__(self):
        n = len(self.tokens)
        if not 1 <= n <= MAX_TOKENS:
            raise ValueError(f"n_tokens {n} outside [1, {MAX_TOKENS}]")
        if self.embedding.shape[0] != n or self.attention.shape != (n, n):
            raise ValueError("payload shapes disagree with the token count")
        sums = self.attention.astype(np.float64).sum(axis=1)
        if (self.attention < 0).any() or np.abs(sums - 1.0).max() > ROW_SUM_TOL:
            raise ValueError("attention rows must be non-negative and sum to 1")

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def d_model(self) -> int:
        return self.embedding.shape[1]


class EncoderHandle:
    """A loaded tokenizer/model pair in evaluation mode."""

    def __init__(self, model_name_or_path: str):
        self.tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
        self.model = AutoModel.from_pretrained(model_name_or_path,
                                               attn_implementation="eager")
        self.model.eval()
        self.d_model = int(self.model.config.hidden_size)

    def encode_batch(self, texts: list[str]) -> list[tuple[list[str], np.ndarray, np.ndarray]]:
        """Encode a batch of chunk texts; padding never leaks into outputs."""
        for text in texts:
            if len(self.tokenizer.tokenize(text)) + 2 > MAX_TOKENS:
                warnings.warn(f"chunk of {len(text)} chars exceeds {MAX_TOKENS} "
                              "tokens, truncating")
        enc = self.tokenizer(texts, padding=True, truncation=True,
                             max_length=MAX_TOKENS, return_tensors="pt")
        with torch.no_grad():
            out = self.model(**enc, output_attentions=True)
        hidden = out.last_hidden_state
        head_mean = out.attentions[-1].mean(dim=1)

        results = []
        for i in range(len(texts)):
            n = int(enc.attention_mask[i].sum())
            tokens = self.tokenizer.convert_ids_to_tokens(enc.input_ids[i][:n])
            emb = hidden[i, :n].to(torch.float32).numpy().copy()
            att = head_mean[i, :n, :n].to(torch.float32).numpy().copy()
            results.append((list(tokens), emb, att))
        return results


def encode_chunk(chunk_text: str, handle: EncoderHandle, patient_id: str = "",
                 note_id: str = "", chunk_index: int = 0) -> TokenRecord:
    tokens, emb, att = handle.encode_batch([chunk_text])[0]
    return TokenRecord(patient_id=patient_id, note_id=note_id,
                       chunk_index=chunk_index, tokens=tokens,
                       embedding=emb, attention=att)
