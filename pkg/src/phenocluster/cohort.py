"""Patient/encounter data model, cohort loading, and selection filters.

The cohort file is UTF-8 JSON Lines, one patient object per line:

    {"patient_id": "...", "sex": "female", "race": "...", "ethnicity": "...",
     "genotyped": false, "apoe_dosage": null,
     "encounters": [{"date": "YYYY-MM-DD", "department": "...",
                     "encounter_type": "office_visit", "age": 71.3,
                     "icd9": ["331.0"], "note": "..."}]}
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

ENCOUNTER_TYPES = ("office_visit", "telemedicine", "other")
SEX_VALUES = ("female", "male", "other")

AD_CODES = frozenset({"331.0"})
FTD_CODES = frozenset({"331.1", "331.19", "331.11"})
LBD_CODES = frozenset({"331.82"})
VASCULAR_CODES = frozenset({"290.40", "290.41", "290.42", "290.43"})
MCI_MEMORY_CODES = frozenset({"331.83", "780.93"})

MIN_NOTE_CHARS = 512
AGE_CUTOFF_YEARS = 50.0

FILTER_STAGE_ORDER = ("followup", "age", "icd", "notes")


class CohortFormatError(ValueError):
    """Raised when a cohort file line cannot be parsed into a patient record."""


@dataclass(frozen=True)
class Encounter:
    date: str  # ISO YYYY-MM-DD; only ordering is ever used
    department: str
    encounter_type: str
    age_at_encounter: float
    icd9_codes: tuple[str, ...] = ()
    note_text: str | None = None

    def __post_init__(self):
        if self.encounter_type not in ENCOUNTER_TYPES:
            raise ValueError(f"unknown encounter_type {self.encounter_type!r}")
        if not (self.age_at_encounter >= 0):
            raise ValueError(f"age_at_encounter must be >= 0, got {self.age_at_encounter}")
        if any((not c) or (not isinstance(c, str)) for c in self.icd9_codes):
            raise ValueError("icd9 codes must be non-empty strings")


@dataclass(frozen=True)
class CohortRecord:
    patient_id: str
    sex: str
    race: str
    ethnicity: str
    encounters: tuple[Encounter, ...]
    genotyped: bool = False
    apoe_dosage: float | None = None

    def __post_init__(self):
        if self.sex not in SEX_VALUES:
            raise ValueError(f"unknown sex {self.sex!r}")
        if self.apoe_dosage is not None and not (self.apoe_dosage >= 0):
            raise ValueError("apoe_dosage must be >= 0 when present")
        dates = [e.date for e in self.encounters]
        if dates != sorted(dates):
            raise ValueError(f"encounters of {self.patient_id!r} not sorted by date")

    def all_codes(self) -> Counter:
        """Multiset of ICD9 codes over every encounter."""
        counts = Counter()
        for enc in self.encounters:
            counts.update(enc.icd9_codes)
        return counts

    def unique_code_count(self) -> int:
        return len(set().union(*(set(e.icd9_codes) for e in self.encounters)) if self.encounters else set())


@dataclass(frozen=True)
class PhenotypeFlags:
    ad: bool
    ftd: bool
    lbd: bool
    vascular: bool
    mci_or_memory_loss: bool


@dataclass(frozen=True)
class FilterConfig:
    """Which selection stages are active. Stage semantics:

    followup: >= 2 encounters
    age:      age at first encounter strictly > 50 years
    icd:      >= 1 ICD9 code anywhere in the record
    notes:    >= 1 note of >= 512 characters on an office_visit or
              telemedicine encounter
    """

    followup: bool = True
    age: bool = True
    icd: bool = True
    notes: bool = False

    def active_stages(self) -> tuple[str, ...]:
        return tuple(s for s in FILTER_STAGE_ORDER if getattr(self, s))


@dataclass
class ExclusionReport:
    initial: int
    stages: list[tuple[str, int, int]] = field(default_factory=list)  # (stage, removed, remaining)

    def to_csv(self) -> str:
        lines = ["stage,removed,remaining"]
        for stage, removed, remaining in self.stages:
            lines.append(f"{stage},{removed},{remaining}")
        return "\n".join(lines) + "\n"


def _encounter_from_json(obj: dict) -> Encounter:
    return Encounter(
        date=str(obj["date"]),
        department=str(obj.get("department", "")),
        encounter_type=str(obj.get("encounter_type", "other")),
        age_at_encounter=float(obj["age"]),
        icd9_codes=tuple(str(c) for c in obj.get("icd9", [])),
        note_text=obj.get("note"),
    )


def _record_from_json(obj: dict) -> CohortRecord:
    encounters = sorted((_encounter_from_json(e) for e in obj.get("encounters", [])),
                        key=lambda e: e.date)
    dosage = obj.get("apoe_dosage")
    return CohortRecord(
        patient_id=str(obj["patient_id"]),
        sex=str(obj.get("sex", "other")),
        race=str(obj.get("race", "")),
        ethnicity=str(obj.get("ethnicity", "")),
        encounters=tuple(encounters),
        genotyped=bool(obj.get("genotyped", False)),
        apoe_dosage=None if dosage is None else float(dosage),
    )


def load_cohort(path) -> list[CohortRecord]:
    """Load a JSON Lines cohort file.

    Encounters are re-sorted by date. A malformed line raises
    CohortFormatError with its 1-based line number; a duplicate
    patient_id raises naming the id.
    """
    records: list[CohortRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = _record_from_json(obj)
            except (ValueError, KeyError, TypeError) as exc:
                raise CohortFormatError(f"line {lineno}: {exc}") from exc
            if rec.patient_id in seen:
                raise CohortFormatError(f"line {lineno}: duplicate patient_id {rec.patient_id!r}")
            seen.add(rec.patient_id)
            records.append(rec)
    return records


def record_to_json_dict(rec: CohortRecord) -> dict:
    """Inverse of the JSONL parsing, used by writers."""
    return {
        "patient_id": rec.patient_id,
        "sex": rec.sex,
        "race": rec.race,
        "ethnicity": rec.ethnicity,
        "genotyped": rec.genotyped,
        "apoe_dosage": rec.apoe_dosage,
        "encounters": [
            {
                "date": e.date,
                "department": e.department,
                "encounter_type": e.encounter_type,
                "age": e.age_at_encounter,
                "icd9": list(e.icd9_codes),
                **({"note": e.note_text} if e.note_text is not None else {}),
            }
            for e in rec.encounters
        ],
    }


def write_cohort(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json_dict(rec), sort_keys=True,
                                separators=(",", ":")) + "\n")


def _passes_stage(rec: CohortRecord, stage: str) -> bool:
    if stage == "followup":
        return len(rec.encounters) >= 2
    if stage == "age":
        return bool(rec.encounters) and rec.encounters[0].age_at_encounter > AGE_CUTOFF_YEARS
    if stage == "icd":
        return any(e.icd9_codes for e in rec.encounters)
    if stage == "notes":
        return any(
            e.encounter_type in ("office_visit", "telemedicine")
            and e.note_text is not None
            and len(e.note_text) >= MIN_NOTE_CHARS
            for e in rec.encounters
        )
    raise ValueError(f"unknown filter stage {stage!r}")


def apply_selection_filters(cohort, config: FilterConfig = FilterConfig()):
    """Apply the active selection stages in fixed funnel order.

    Returns (kept, ExclusionReport). Each excluded patient is attributed
    to the first stage it fails; the kept set is the intersection of the
    per-stage kept sets, so membership does not depend on stage order.
    """
    report = ExclusionReport(initial=len(cohort))
    current = list(cohort)
    for stage in config.active_stages():
        kept = [rec for rec in current if _passes_stage(rec, stage)]
        report.stages.append((stage, len(current) - len(kept), len(kept)))
        current = kept
    return current, report


def phenotype_flags(record: CohortRecord) -> PhenotypeFlags:
    """Flag disease groups from the union multiset of the patient's codes."""
    codes = set(record.all_codes())
    return PhenotypeFlags(
        ad=bool(codes & AD_CODES),
        ftd=bool(codes & FTD_CODES),
        lbd=bool(codes & LBD_CODES),
        vascular=bool(codes & VASCULAR_CODES),
        mci_or_memory_loss=bool(codes & MCI_MEMORY_CODES),
    )


def _mean_sd(values) -> tuple[float, float]:
    """Mean and population standard deviation (divide by N)."""
    vals = list(values)
    n = len(vals)
    if n == 0:
        return float("nan"), float("nan")
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / n
    return mean, math.sqrt(var)


def cohort_summary(cohort, flags_per_patient=None) -> dict:
    """Descriptive summary of a cohort, one entry per reported variable.

    Continuous variables map to (mean, population_sd); categorical and
    flag variables map to {category: (count, percent)}.
    """
    if not cohort:
        raise ValueError("cohort_summary of empty cohort")
    if flags_per_patient is None:
        flags_per_patient = [phenotype_flags(rec) for rec in cohort]
    n = len(cohort)

    def cat_counts(values):
        counts = Counter(values)
        return {k: (c, 100.0 * c / n) for k, c in sorted(counts.items())}

    summary: dict = {
        "n_patients": n,
        "age_at_first_encounter": _mean_sd(r.encounters[0].age_at_encounter for r in cohort if r.encounters),
        "age_at_last_encounter": _mean_sd(r.encounters[-1].age_at_encounter for r in cohort if r.encounters),
        "sex": cat_counts(r.sex for r in cohort),
        "race": cat_counts(r.race for r in cohort),
        "ethnicity": cat_counts(r.ethnicity for r in cohort),
        "unique_code_count": _mean_sd(r.unique_code_count() for r in cohort),
    }
    for flag in ("ad", "ftd", "lbd", "vascular", "mci_or_memory_loss"):
        c = sum(1 for f in flags_per_patient if getattr(f, flag))
        summary[f"with_{flag}_code"] = (c, 100.0 * c / n)
    n_geno = sum(1 for r in cohort if r.genotyped)
    summary["genotyped"] = (n_geno, 100.0 * n_geno / n)
    summary["apoe_dosage"] = _mean_sd(r.apoe_dosage for r in cohort
                                      if r.genotyped and r.apoe_dosage is not None)
    return summary


def summary_to_csv(summary: dict) -> str:
    """Render cohort_summary as variable,value rows."""
    lines = ["variable,value"]
    lines.append(f"n_patients,{summary['n_patients']}")
    for key in ("age_at_first_encounter", "age_at_last_encounter"):
        m, s = summary[key]
        lines.append(f"{key},{m:.2f} +/- {s:.2f}")
    for key in ("sex", "race", "ethnicity"):
        for cat, (c, pct) in summary[key].items():
            lines.append(f"{key}={cat},{c} ({pct:.1f}%)")
    for key in ("with_ad_code", "with_ftd_code", "with_lbd_code",
                "with_vascular_code", "with_mci_or_memory_loss_code", "genotyped"):
        c, pct = summary[key]
        lines.append(f"{key},{c} ({pct:.1f}%)")
    m, s = summary["unique_code_count"]
    lines.append(f"unique_code_count,{m:.2f} +/- {s:.2f}")
    m, s = summary["apoe_dosage"]
    if not math.isnan(m):
        lines.append(f"apoe_dosage,{m:.2f} +/- {s:.2f}")
    return "\n".join(lines) + "\n"
