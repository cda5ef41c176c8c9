"""Patient design matrix from ICD code counts and a pre-trained embedding table.

The design matrix is the product of the per-patient code count matrix with
the code embedding matrix; a mean mode divides each row by that patient's
total count of table-covered codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("sum", "mean")


class EmbeddingTableError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]

    def __contains__(self, code: str) -> bool:
        return code in self.entries

    def __getitem__(self, code: str) -> np.ndarray:
        return self.entries[code]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class CodeCountMatrix:
    patients: list[str]
    codes: list[str]
    counts: np.ndarray  # shape (n_patients, n_codes), int64

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.shape != (len(self.patients), len(self.codes)):
            raise ValueError("counts shape does not match patients x codes")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")


@dataclass
class PatientVectorSet:
    patients: list[str]
    vectors: np.ndarray  # shape (n, dim)
    mode: str
    dropped: list[str]

    def __post_init__(self):
        if not np.isfinite(self.vectors).all():
            raise ValueError("patient vectors must be finite")
        if set(self.dropped) & set(self.patients):
            raise ValueError("dropped ids overlap kept patients")


def normalize_code(code: str) -> str:
    """Trim whitespace and strip an optional leading 'IDX_' prefix."""
    code = code.strip()
    if code.startswith("IDX_"):
        code = code[len("IDX_"):]
    return code


def load_embedding_table(path) -> EmbeddingTable:
    """Parse a whitespace-separated "CODE v1 ... v_dim" text file.

    The dimension is inferred from the first line; later lines with a
    different dimension raise with their line number, as do duplicates.
    """
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            code = normalize_code(parts[0])
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=float)
            except ValueError as exc:
                raise EmbeddingTableError(f"line {lineno}: {exc}") from exc
            if dim is None:
                dim = vec.size
                if dim == 0:
                    raise EmbeddingTableError(f"line {lineno}: no vector components")
            elif vec.size != dim:
                raise EmbeddingTableError(
                    f"line {lineno}: dimension {vec.size} != table dimension {dim}")
            if not np.isfinite(vec).all():
                raise EmbeddingTableError(f"line {lineno}: non-finite component")
            if code in entries:
                raise EmbeddingTableError(f"line {lineno}: duplicate code {code!r}")
            entries[code] = vec
    if dim is None:
        raise EmbeddingTableError("empty embedding table")
    return EmbeddingTable(dim=dim, entries=entries)


def build_count_matrix(cohort) -> CodeCountMatrix:
    """Count occurrences of every code per patient, over all encounters.

    Codes are the sorted union of all codes seen; repeated codes on one
    encounter count as repeated occurrences.
    """
    if not cohort:
        raise ValueError("build_count_matrix of empty cohort")
    per_patient = [rec.all_codes() for rec in cohort]
    codes = sorted(set().union(*(set(c) for c in per_patient)) if per_patient else set())
    col = {c: j for j, c in enumerate(codes)}
    counts = np.zeros((len(cohort), len(codes)), dtype=np.int64)
    for i, patient_counts in enumerate(per_patient):
        for code, k in patient_counts.items():
            counts[i, col[code]] = k
    return CodeCountMatrix(patients=[r.patient_id for r in cohort], codes=codes, counts=counts)


def vectorize_patients(counts: CodeCountMatrix, table: EmbeddingTable,
                       mode: str = "sum", binary: bool = False) -> PatientVectorSet:
    """Multiply covered code counts into embedding space.

    Codes absent from the table are ignored entirely; in mean mode the
    denominator is the patient's total count over covered codes only, so
    uncovered codes never perturb the output. Patients with no covered
    code occurrences are moved to `dropped`. `binary` clamps counts to
    presence/absence before the product (ablation switch).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    covered = [j for j, code in enumerate(counts.codes) if normalize_code(code) in table]
    if covered:
        emb = np.stack([table[normalize_code(counts.codes[j])] for j in covered])
        sub = counts.counts[:, covered].astype(float)
    else:
        emb = np.zeros((0, table.dim))
        sub = np.zeros((len(counts.patients), 0))
    if binary:
        sub = (sub > 0).astype(float)

    totals = sub.sum(axis=1)
    keep = totals > 0
    if not keep.any():
        raise ValueError("no patient has any table-covered code")

    # Fixed column order accumulation for bit-reproducibility.
    vectors = sub[keep] @ emb
    if mode == "mean":
        vectors = vectors / totals[keep, None]

    patients = [p for p, k in zip(counts.patients, keep) if k]
    dropped = [p for p, k in zip(counts.patients, keep) if not k]
    return PatientVectorSet(patients=patients, vectors=vectors, mode=mode, dropped=dropped)


def vectors_to_csv(vs: PatientVectorSet) -> str:
    """CSV with header patient_id,v0,...,v_{dim-1}; float repr round-trips."""
    dim = vs.vectors.shape[1]
    lines = ["patient_id," + ",".join(f"v{j}" for j in range(dim))]
    for pid, row in zip(vs.patients, vs.vectors):
        lines.append(pid + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def vectors_from_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    if header[0] != "patient_id":
        raise ValueError("vector CSV must start with patient_id column")
    patients, rows = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        patients.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    return patients, np.array(rows, dtype=float)
