"""Note cleaning and fixed-width chunking.

Configured delimiter characters are removed from the note, then the
cleaned text is cut into contiguous 1024-character chunks (the final one
may be shorter). Chunk spans index into the cleaned text and concatenate
back to it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

CHUNK_CHARS = 1024

# EHR exports often carry pipe/underscore/caret field delimiters and stray
# control characters; whitespace is left for the tokenizer.
DEFAULT_DELIMITERS = frozenset("|_^~") | frozenset(
    chr(c) for c in range(0x20) if chr(c) not in "\t\n\r") | {chr(0x7F)}


@dataclass(frozen=True)
class ChunkPlan:
    note_id: str
    cleaned: str
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = 0
        for start, end in self.spans:
            if start != prev_end or end <= start or end - start > CHUNK_CHARS:
                raise ValueError("spans must be contiguous, ordered, and <= 1024 chars")
            prev_end = end
        if prev_end != len(self.cleaned):
            raise ValueError("spans must cover the cleaned note")

    @property
    def chunks(self) -> list[str]:
        return [self.cleaned[s:e] for s, e in self.spans]


def load_delimiters(path) -> frozenset:
    """Every non-newline character in the file joins the delimiter set."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(ch for ch in fh.read() if ch not in "\r\n")


def clean_and_chunk(note_text: str, note_id: str = "",
                    delimiters: frozenset = DEFAULT_DELIMITERS) -> ChunkPlan:
    cleaned = "".join(ch for ch in note_text if ch not in delimiters)
    spans = tuple((start, min(start + CHUNK_CHARS, len(cleaned)))
                  for start in range(0, len(cleaned), CHUNK_CHARS))
    return ChunkPlan(note_id=note_id, cleaned=cleaned, spans=spans)
