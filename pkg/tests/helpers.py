"""Shared builders for the test suite."""

import numpy as np

from phenocluster.cohort import CohortRecord, Encounter
from phenocluster.icd_embed import EmbeddingTable


def make_record(pid="p1", n_enc=2, age_first=60.0, codes=("331.0",),
                note=None, enc_type="office_visit", **kw):
    encounters = tuple(
        Encounter(date=f"2015-{i + 1:02d}-01", department="neurology",
                  encounter_type=enc_type, age_at_encounter=age_first + i,
                  icd9_codes=tuple(codes) if i == 0 else (),
                  note_text=note if i == 0 else None)
        for i in range(n_enc))
    defaults = dict(sex="female", race="White", ethnicity="Non-Hispanic")
    defaults.update(kw)
    return CohortRecord(patient_id=pid, encounters=encounters, **defaults)


def table_from(entries):
    entries = {k: np.asarray(v, dtype=float) for k, v in entries.items()}
    dim = len(next(iter(entries.values())))
    return EmbeddingTable(dim=dim, entries=entries)
