"""Minimal reader for the cohort JSON Lines interchange format.

Only what the exporter needs: patient ids and their note texts, with
stable note ids derived from the date-ordered encounter index.
"""

from __future__ import annotations

import json


def iter_notes(path):
    """Yield (patient_id, note_id, note_text) for every encounter note."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                patient_id = str(obj["patient_id"])
                encounters = sorted(obj.get("encounters", []),
                                    key=lambda e: str(e.get("date", "")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
            for idx, enc in enumerate(encounters):
                note = enc.get("note")
                if note:
                    yield patient_id, f"n{idx}", str(note)
