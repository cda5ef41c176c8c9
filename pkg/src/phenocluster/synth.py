"""Deterministic synthetic cohorts and token streams with planted clusters.

Randomness comes from a counter-based generator built on the splitmix64
mixing function, keyed by (seed, stream, counter), so per-patient streams
are independent of generation order and identical specs produce identical
bytes. Gaussians use the Marsaglia polar method (sqrt/log only) and
simplex rows use sorted uniform gaps, avoiding trig entirely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .attnpool import TokenStreamRecord
from .cohort import CohortRecord, Encounter
from .icd_embed import EmbeddingTable

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Stream purposes; combined with an index to key independent substreams.
_S_CLUSTER = 1
_S_PATIENT = 2
_S_TOKENS = 3
_S_CENTERS = 4
_S_EMBED = 5


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class CounterRng:
    """Counter-based RNG: value_t = mix(mix(mix(seed) ^ stream) ^ t)."""

    def __init__(self, seed: int, purpose: int, index: int = 0):
        stream = (purpose << 32) ^ (index & 0xFFFFFFFF)
        self._key = _splitmix64(_splitmix64(seed & _MASK64) ^ stream)
        self._counter = 0
        self._spare_normal = None

    def next_u64(self) -> int:
        v = _splitmix64(self._key ^ (self._counter * _GOLDEN & _MASK64))
        self._counter += 1
        return v

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def below(self, n: int) -> int:
        return self.next_u64() % n

    def normal(self) -> float:
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        while True:
            u = 2.0 * self.uniform() - 1.0
            v = 2.0 * self.uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                factor = math.sqrt(-2.0 * math.log(s) / s)
                self._spare_normal = v * factor
                return u * factor

    def normal_vector(self, dim: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(dim)])

    def simplex_row(self, n: int) -> np.ndarray:
        """Flat Dirichlet sample via sorted uniform gaps."""
        if n == 1:
            return np.array([1.0])
        cuts = np.sort(np.array([self.uniform() for _ in range(n - 1)]))
        return np.diff(np.concatenate(([0.0], cuts, [1.0])))


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 20240613
    n_patients: int = 600
    n_clusters: int = 3
    codes_per_cluster_signature: int = 4
    signature_prevalence: float = 0.9
    background_codes: int = 30
    background_prevalence: float = 0.05
    embedding_dim: int = 24
    cluster_center_separation: float = 6.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if not 0 < self.signature_prevalence <= 1:
            raise ValueError("signature_prevalence must be in (0, 1]")
        if not self.signature_prevalence > self.background_prevalence:
            raise ValueError("signature_prevalence must exceed background_prevalence")
        if self.cluster_center_separation <= 0 or self.noise_sd <= 0:
            raise ValueError("separation and noise_sd must be positive")
        if self.n_patients < 1 or self.embedding_dim < 1:
            raise ValueError("n_patients and embedding_dim must be positive")

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_json_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    labels: list[int]
    patient_ids: list[str]
    signature_codes: dict[int, list[str]] = field(default_factory=dict)
    signature_terms: dict[int, list[str]] = field(default_factory=dict)

    def label_map(self) -> dict[str, int]:
        return dict(zip(self.patient_ids, self.labels))

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": {pid: lab for pid, lab in zip(self.patient_ids, self.labels)},
                "signature_codes": {str(c): v for c, v in self.signature_codes.items()},
                "signature_terms": {str(c): v for c, v in self.signature_terms.items()},
            },
            sort_keys=True, indent=2) + "\n"


def _letters(i: int) -> str:
    out = ""
    while True:
        out = chr(97 + i % 26) + out
        i //= 26
        if i == 0:
            return out


def signature_code(cluster: int, j: int) -> str:
    return f"7{cluster}{j}.9"


def background_code(j: int) -> str:
    return f"4{j:02d}.1"


def signature_term(cluster: int, j: int) -> str:
    return f"sig{_letters(cluster)}{_letters(j)}"


_FILLER_TERMS = ("patient", "visit", "exam", "normal", "review", "plan",
                 "history", "stable", "followup", "assessment")
_DEPARTMENTS = ("neurology", "geriatrics", "primary care")
_RACES = ("White", "Black", "Asian", "Other")
_SEXES = ("female", "male", "other")


def _cluster_of(spec: SynthSpec, i: int) -> int:
    return CounterRng(spec.seed, _S_CLUSTER, i).below(spec.n_clusters)


def _all_codes(spec: SynthSpec) -> tuple[dict[int, list[str]], list[str]]:
    signatures = {c: [signature_code(c, j) for j in range(spec.codes_per_cluster_signature)]
                  for c in range(spec.n_clusters)}
    background = [background_code(j) for j in range(spec.background_codes)]
    return signatures, background


def _synth_date(year: int, month_offset: int) -> str:
    y, m = divmod((year - 2000) * 12 + month_offset, 12)
    return f"{2000 + y:04d}-{m + 1:02d}-15"


def _note_text(rng: CounterRng, terms: list[str]) -> str:
    words = []
    for term in terms:
        words.extend([term] * (8 + rng.below(5)))
    while sum(len(w) + 1 for w in words) < 620:
        words.append(_FILLER_TERMS[rng.below(len(_FILLER_TERMS))])
    order = np.argsort([rng.uniform() for _ in words])
    return " ".join(words[i] for i in order)


def gen_synthetic_cohort(spec: SynthSpec) -> tuple[list[CohortRecord], GroundTruth]:
    """Cohort with planted code signatures, valid under every selection filter."""
    signatures, background = _all_codes(spec)
    records = []
    labels = []
    pids = []
    for i in range(spec.n_patients):
        cluster = _cluster_of(spec, i)
        rng = CounterRng(spec.seed, _S_PATIENT, i)
        pid = f"p{i:04d}"

        n_enc = 2 + rng.below(5)
        age_first = round(52.0 + 35.0 * rng.uniform(), 2)
        start_year = 2012 + rng.below(5)
        month = 0
        encounters = []
        for e in range(n_enc):
            date = _synth_date(start_year, month)
            age = round(age_first + month / 12.0, 2)
            enc_type = "office_visit" if e == 0 else \
                ("office_visit", "telemedicine", "other")[rng.below(3)]
            encounters.append({
                "date": date, "age": age, "type": enc_type,
                "department": _DEPARTMENTS[rng.below(len(_DEPARTMENTS))],
                "codes": [],
            })
            month += 1 + rng.below(24)

        # Own-cluster signature codes at signature prevalence; everything
        # else (other signatures and background codes) at background rate.
        for code_set, prevalence in ((signatures[cluster], spec.signature_prevalence),
                                     *((signatures[c], spec.background_prevalence)
                                       for c in range(spec.n_clusters) if c != cluster),
                                     (background, spec.background_prevalence)):
            for code in code_set:
                if rng.uniform() < prevalence:
                    occurrences = 1 + (1 if rng.below(4) == 0 else 0)
                    for _ in range(occurrences):
                        encounters[rng.below(n_enc)]["codes"].append(code)

        terms = [signature_term(cluster, j) for j in range(3)]
        note = _note_text(rng, terms)

        genotyped = rng.below(10) == 0
        dosage = float(rng.below(3)) if genotyped else None
        encounters.sort(key=lambda d: d["date"])
        records.append(CohortRecord(
            patient_id=pid,
            sex=_SEXES[0 if rng.uniform() < 0.5 else (1 if rng.uniform() < 0.96 else 2)],
            race=_RACES[rng.below(len(_RACES))],
            ethnicity="Hispanic" if rng.uniform() < 0.06 else "Non-Hispanic",
            encounters=tuple(
                Encounter(date=e["date"], department=e["department"],
                          encounter_type=e["type"], age_at_encounter=e["age"],
                          icd9_codes=tuple(sorted(e["codes"])),
                          note_text=note if idx == 0 else None)
                for idx, e in enumerate(encounters)),
            genotyped=genotyped,
            apoe_dosage=dosage,
        ))
        labels.append(cluster)
        pids.append(pid)
    truth = GroundTruth(labels=labels, patient_ids=pids,
                        signature_codes={c: list(v) for c, v in signatures.items()},
                        signature_terms={c: [signature_term(c, j) for j in range(3)]
                                         for c in range(spec.n_clusters)})
    return records, truth


def gen_synthetic_embedding_table(spec: SynthSpec) -> EmbeddingTable:
    """Embeddings for every synthetic code; signature codes are scaled by
    the cluster separation so the ICD design matrix is separable."""
    signatures, background = _all_codes(spec)
    rng = CounterRng(spec.seed, _S_EMBED)
    entries = {}
    for c in range(spec.n_clusters):
        for code in signatures[c]:
            entries[code] = rng.normal_vector(spec.embedding_dim) * spec.cluster_center_separation
    for code in background:
        entries[code] = rng.normal_vector(spec.embedding_dim)
    return EmbeddingTable(dim=spec.embedding_dim, entries=entries)


def embedding_table_to_text(table: EmbeddingTable) -> str:
    lines = []
    for code in sorted(table.entries):
        vec = " ".join(repr(float(v)) for v in table.entries[code])
        lines.append(f"{code} {vec}")
    return "\n".join(lines) + "\n"


def gen_synthetic_token_stream(spec: SynthSpec) -> tuple[list[TokenStreamRecord], GroundTruth]:
    """Token stream whose chunk embeddings sit around per-cluster centers."""
    centers_rng = CounterRng(spec.seed, _S_CENTERS)
    centers = [centers_rng.normal_vector(spec.embedding_dim) * spec.cluster_center_separation
               for _ in range(spec.n_clusters)]
    records = []
    labels = []
    pids = []
    for i in range(spec.n_patients):
        cluster = _cluster_of(spec, i)
        rng = CounterRng(spec.seed, _S_TOKENS, i)
        pid = f"p{i:04d}"
        n_chunks = 1 + rng.below(4)
        for chunk in range(n_chunks):
            n_tokens = 8 + rng.below(9)
            embedding = np.stack([
                centers[cluster] + spec.noise_sd * rng.normal_vector(spec.embedding_dim)
                for _ in range(n_tokens)])
            attention = np.stack([rng.simplex_row(n_tokens) for _ in range(n_tokens)])
            records.append(TokenStreamRecord(
                patient_id=pid, note_id="note0", chunk_index=chunk,
                tokens=[f"w{_letters(t)}" for t in range(n_tokens)],
                embedding=embedding, attention=attention))
        labels.append(cluster)
        pids.append(pid)
    truth = GroundTruth(labels=labels, patient_ids=pids)
    return records, truth


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement between two labelings."""
    a = list(labels_a)
    b = list(labels_b)
    if len(a) != len(b):
        raise ValueError(f"label vectors differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise ValueError("empty labelings")
    cats_a = {v: i for i, v in enumerate(dict.fromkeys(a))}
    cats_b = {v: i for i, v in enumerate(dict.fromkeys(b))}
    table = np.zeros((len(cats_a), len(cats_b)), dtype=np.int64)
    for x, y in zip(a, b):
        table[cats_a[x], cats_b[y]] += 1

    def comb2(v):
        return v * (v - 1) // 2

    sum_cells = sum(comb2(int(v)) for v in table.flat)
    sum_rows = sum(comb2(int(v)) for v in table.sum(axis=1))
    sum_cols = sum(comb2(int(v)) for v in table.sum(axis=0))
    expected = sum_rows * sum_cols / comb2(n)
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
