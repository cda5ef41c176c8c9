"""Export TES1 token-embedding/attention streams from clinical notes."""

from .chunking import ChunkPlan, clean_and_chunk, load_delimiters
from .cli import export_cohort
from .encoder import EncoderHandle, TokenRecord, encode_chunk
from .stream import write_stream

__version__ = "0.1.0"
