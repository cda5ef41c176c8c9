"""Per-cluster TF-IDF term enrichment over concatenated note text.

All notes of a cluster form one document. Scores use raw term counts with
the smoothed idf ln((1+C)/(1+df)) + 1 and are L2-normalized per document.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

_WORD_RE = re.compile(r"[a-z]+")
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")
_REPEAT_DELIM_RE = re.compile(r"[|_]{2,}")

# Glasgow IR English stop word list (the set scikit-learn ships); extend
# it with nonspecific medical terminology via stop-word files.
ENGLISH_STOP_WORDS = frozenset("""
a about above across after afterwards again against all almost alone along
already also although always am among amongst amoungst amount an and another
any anyhow anyone anything anyway anywhere are around as at back be became
because become becomes becoming been before beforehand behind being below
beside besides between beyond bill both bottom but by call can cannot cant
co con could couldnt cry de describe detail do done down due during each
eg eight either eleven else elsewhere empty enough etc even ever every
everyone everything everywhere except few fifteen fifty fill find fire first
five for former formerly forty found four from front full further get give
go had has hasnt have he hence her here hereafter hereby herein hereupon
hers herself him himself his how however hundred i ie if in inc indeed
interest into is it its itself keep last latter latterly least less ltd
made many may me meanwhile might mill mine more moreover most mostly move
much must my myself name namely neither never nevertheless next nine no
nobody none noone nor not nothing now nowhere of off often on once one only
onto or other others otherwise our ours ourselves out over own part per
perhaps please put rather re same see seem seemed seeming seems serious
several she should show side since sincere six sixty so some somehow
someone something sometime sometimes somewhere still such system take ten
than that the their them themselves then thence there thereafter thereby
therefore therein thereupon these they thick thin third this those though
three through throughout thru thus to together too top toward towards
twelve twenty two un under until up upon us very via was we well were what
whatever when whence whenever where whereafter whereas whereby wherein
whereupon wherever whether which while whither who whoever whole whom whose
why will with within without would yet you your yours yourself yourselves
""".split())


@dataclass
class ClusterDocument:
    cluster_id: int
    term_counts: dict[str, int]
    total_terms: int

    def __post_init__(self):
        if self.total_terms != sum(self.term_counts.values()):
            raise ValueError("total_terms must equal the sum of term counts")


@dataclass(frozen=True)
class StopWordList:
    terms: frozenset

    def __post_init__(self):
        for t in self.terms:
            if t != t.lower() or any(ch.isspace() for ch in t):
                raise ValueError(f"stop word {t!r} must be lowercase without whitespace")


def load_stop_words(path) -> StopWordList:
    """One lowercase term per line; '#' starts a comment."""
    terms = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.split("#", 1)[0].strip().lower()
            if term:
                terms.add(term)
    return StopWordList(terms=frozenset(terms))


def default_stop_words(extra=()) -> StopWordList:
    return StopWordList(terms=frozenset(ENGLISH_STOP_WORDS) | frozenset(extra))


def clean_note_text(text: str) -> str:
    """Strip control characters and collapse runs of pipes/underscores."""
    text = _CONTROL_RE.sub("", text)
    return _REPEAT_DELIM_RE.sub(" ", text)


def tokenize_terms(text: str, stop_words: StopWordList = StopWordList(frozenset())) -> list[str]:
    """Lowercase, split on non-alphabetic characters, keep terms of length
    >= 2, drop stop words."""
    tokens = _WORD_RE.findall(text.lower())
    return [t for t in tokens if len(t) >= 2 and t not in stop_words.terms]


def build_cluster_documents(texts_by_cluster, stop_words=None) -> list[ClusterDocument]:
    """One document per cluster from that cluster's concatenated note texts."""
    stop_words = stop_words or default_stop_words()
    docs = []
    for cluster_id in sorted(texts_by_cluster):
        counts = Counter()
        for text in texts_by_cluster[cluster_id]:
            counts.update(tokenize_terms(clean_note_text(text), stop_words))
        docs.append(ClusterDocument(cluster_id=cluster_id, term_counts=dict(counts),
                                    total_terms=sum(counts.values())))
    return docs


def tfidf_topk(cluster_documents, k: int) -> dict[int, list[tuple[str, float]]]:
    """Top-k terms per cluster document by L2-normalized tf-idf.

    idf(t) = ln((1+C)/(1+df(t))) + 1 with df the number of cluster
    documents containing t. Ties break alphabetically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    docs = list(cluster_documents)
    if not docs:
        raise ValueError("need at least one cluster document")
    n_docs = len(docs)
    df = Counter()
    for doc in docs:
        df.update(set(doc.term_counts))
    idf = {t: math.log((1 + n_docs) / (1 + d)) + 1.0 for t, d in df.items()}

    out: dict[int, list[tuple[str, float]]] = {}
    for doc in docs:
        scores = {t: c * idf[t] for t, c in doc.term_counts.items()}
        norm = math.sqrt(sum(s * s for s in scores.values()))
        if norm > 0:
            scores = {t: s / norm for t, s in scores.items()}
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        out[doc.cluster_id] = ranked[:k]
    return out


def tfidf_to_csv(topk: dict[int, list[tuple[str, float]]]) -> str:
    lines = ["cluster_id,rank,term,score"]
    for cluster_id in sorted(topk):
        for rank, (term, score) in enumerate(topk[cluster_id], start=1):
            lines.append(f"{cluster_id},{rank},{term},{repr(float(score))}")
    return "\n".join(lines) + "\n"
