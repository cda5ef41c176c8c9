"""Per-cluster ICD code enrichment and cross-cluster comparison tests.

For every (cluster, code) pair a patient-level 2x2 contingency table is
tested with a chi-square statistic; raw p-values get an uncapped
Bonferroni correction (the correction is a multiplier, and corrected
values above 1 are reported as-is). Codes with positive fold change are
ranked by corrected p-value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .special import chi2_sf, f_sf

STAR_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))
N_TESTS_POLICIES = ("per_cluster", "global")


@dataclass(frozen=True)
class ContingencyTable2x2:
    a: int  # in-cluster, with code
    b: int  # in-cluster, without code
    c: int  # out-of-cluster, with code
    d: int  # out-of-cluster, without code

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency counts must be non-negative")


@dataclass
class EnrichmentRow:
    cluster_id: int
    code: str
    p_raw: float
    p_corrected: float
    stars: str
    prevalence: float
    expected_prevalence: float
    fold_change: float
    code_name: str = ""


def contingency(cluster_members, all_patients, code: str) -> ContingencyTable2x2:
    """Patient-level 2x2 table of code presence, cluster vs rest.

    Presence means at least one occurrence of the code anywhere in the
    patient record; occurrence counts beyond the first do not matter.
    """
    cluster_ids = set(cluster_members)
    if not cluster_ids:
        raise ValueError("cluster is empty")
    a = b = c = d = 0
    seen = 0
    for rec in all_patients:
        has = code in rec.all_codes()
        if rec.patient_id in cluster_ids:
            seen += 1
            if has:
                a += 1
            else:
                b += 1
        elif has:
            c += 1
        else:
            d += 1
    if seen != len(cluster_ids):
        raise ValueError("cluster contains ids missing from the cohort")
    if c + d == 0:
        raise ValueError("cluster must be a strict subset of the cohort")
    return ContingencyTable2x2(a, b, c, d)


def chi2_2x2(table: ContingencyTable2x2, yates: bool = True) -> tuple[float, float]:
    """Chi-square test of a 2x2 table, two-sided.

    With `yates` the |O-E| deviations are reduced by 0.5 (floored at 0).
    Any zero margin gives statistic 0 and p 1.
    """
    a, b, c, d = table.a, table.b, table.c, table.d
    obs = np.array([[a, b], [c, d]], dtype=float)
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    total = obs.sum()
    if (rows == 0).any() or (cols == 0).any():
        return 0.0, 1.0
    expected = np.outer(rows, cols) / total
    dev = np.abs(obs - expected)
    if yates:
        dev = np.maximum(dev - 0.5, 0.0)
    stat = float((dev ** 2 / expected).sum())
    return stat, chi2_sf(stat, 1)


def bonferroni(p_raw: float, n_tests: int) -> float:
    """Multiply by the test count; deliberately not capped at 1."""
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    return p_raw * n_tests


def stars(p_corrected: float) -> str:
    """Significance stars for a corrected p-value, strict thresholds."""
    for threshold, label in STAR_THRESHOLDS:
        if p_corrected < threshold:
            return label
    return "none"


def _row_sort_key(row: EnrichmentRow):
    # Finite fold changes first, then ascending corrected p, then the
    # strongest fold change, then the code string for full determinism.
    infinite = math.isinf(row.fold_change)
    return (infinite, row.p_corrected, 0.0 if infinite else -row.fold_change, row.code)


def enrich_clusters(cohort, labels, code_universe, yates: bool = True,
                    n_tests_policy: str = "per_cluster",
                    code_names=None) -> dict[int, list[EnrichmentRow]]:
    """Enrichment rows for every cluster against its complement.

    `labels` maps patient_id to a cluster id; patients without a label are
    not part of the analysis. Each code in `code_universe` is tested once
    per cluster, so the default correction multiplier is the universe
    size ("per_cluster"); "global" multiplies by universe size times the
    number of clusters. Rows with fold change > 1 come first, ordered by
    ascending corrected p (ties: descending fold change, then code), with
    infinite fold changes after all finite ones.
    """
    if n_tests_policy not in N_TESTS_POLICIES:
        raise ValueError(f"n_tests_policy must be one of {N_TESTS_POLICIES}")
    code_universe = list(code_universe)
    if not code_universe:
        raise ValueError("empty code universe")
    labeled = [rec for rec in cohort if rec.patient_id in labels]
    clusters = sorted({labels[rec.patient_id] for rec in labeled})
    if len(clusters) < 2:
        raise ValueError("enrichment needs at least 2 clusters")
    code_names = code_names or {}

    n_tests = len(code_universe)
    if n_tests_policy == "global":
        n_tests *= len(clusters)

    # Presence sets once per code, shared across clusters.
    presence = {code: {rec.patient_id for rec in labeled if code in rec.all_codes()}
                for code in code_universe}
    members = {c: {rec.patient_id for rec in labeled if labels[rec.patient_id] == c}
               for c in clusters}
    n_total = len(labeled)

    out: dict[int, list[EnrichmentRow]] = {}
    for c in clusters:
        in_cluster = members[c]
        n_in = len(in_cluster)
        n_out = n_total - n_in
        rows = []
        for code in code_universe:
            with_code = presence[code]
            a = len(with_code & in_cluster)
            b = n_in - a
            cc = len(with_code) - a
            d = n_out - cc
            table = ContingencyTable2x2(a, b, cc, d)
            stat, p_raw = chi2_2x2(table, yates=yates)
            p_corr = bonferroni(p_raw, n_tests)
            prev = a / n_in
            exp_prev = cc / n_out
            if exp_prev > 0:
                fc = prev / exp_prev
            else:
                fc = math.inf if prev > 0 else 0.0
            rows.append(EnrichmentRow(
                cluster_id=c, code=code, p_raw=p_raw, p_corrected=p_corr,
                stars=stars(p_corr), prevalence=prev, expected_prevalence=exp_prev,
                fold_change=fc, code_name=code_names.get(code, "")))
        enriched = sorted((r for r in rows if r.fold_change > 1), key=_row_sort_key)
        others = sorted((r for r in rows if not r.fold_change > 1),
                        key=lambda r: (r.p_corrected, r.code))
        out[c] = enriched + others
    return out


def _fmt_p(p: float) -> str:
    return f"{p:.2E}"


def report_to_csv(rows) -> str:
    """Render one cluster's rows in the standard report layout."""
    lines = ["ICD Code,p_value,p_value_fdr,Sig.,Prev.,Exp. Prev.,fc,DiagnosisNM"]
    for r in rows:
        sig = r.stars if r.stars != "none" else "~"
        fc = "inf" if math.isinf(r.fold_change) else f"{r.fold_change:.3f}"
        name = r.code_name.replace(",", ";")
        lines.append(
            f"{r.code},{_fmt_p(r.p_raw)},{_fmt_p(r.p_corrected)},{sig},"
            f"{r.prevalence:.5f},{r.expected_prevalence:.5f},{fc},{name}")
    return "\n".join(lines) + "\n"


def prevalence_matrix(cohort, labels, code_universe) -> tuple[list[str], list[int], np.ndarray]:
    """Codes x clusters matrix of within-cluster prevalence."""
    labeled = [rec for rec in cohort if rec.patient_id in labels]
    clusters = sorted({labels[rec.patient_id] for rec in labeled})
    codes = list(code_universe)
    mat = np.zeros((len(codes), len(clusters)))
    for j, c in enumerate(clusters):
        recs = [rec for rec in labeled if labels[rec.patient_id] == c]
        for i, code in enumerate(codes):
            mat[i, j] = sum(1 for rec in recs if code in rec.all_codes()) / len(recs)
    return codes, clusters, mat


def zscore_matrix(prevalence: np.ndarray) -> np.ndarray:
    """Row-wise (x - mean) / population sd; constant rows map to zeros."""
    prevalence = np.asarray(prevalence, dtype=float)
    if prevalence.ndim != 2 or prevalence.shape[1] < 2:
        raise ValueError("prevalence matrix needs at least 2 clusters")
    mean = prevalence.mean(axis=1, keepdims=True)
    sd = prevalence.std(axis=1, keepdims=True)
    out = np.zeros_like(prevalence)
    np.divide(prevalence - mean, sd, out=out, where=sd > 0)
    return out


def chi2_rxc(table) -> tuple[float, int, float]:
    """Pearson chi-square test of independence for an r x c count table.

    Zero-margin rows/columns are dropped with a warning; if fewer than two
    rows or columns remain the statistic is 0 with p = 1.
    """
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise ValueError("table must be at least 2x2")
    if (obs < 0).any():
        raise ValueError("counts must be non-negative")
    row_keep = obs.sum(axis=1) > 0
    col_keep = obs.sum(axis=0) > 0
    if not row_keep.all() or not col_keep.all():
        warnings.warn("dropping zero-margin rows/columns from contingency table")
        obs = obs[row_keep][:, col_keep]
    r, c = obs.shape
    if r < 2 or c < 2:
        return 0.0, 0, 1.0
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / obs.sum()
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = (r - 1) * (c - 1)
    return stat, dof, chi2_sf(stat, dof)


def anova_f(groups) -> tuple[float, int, int, float]:
    """One-way ANOVA F test across groups of real values."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("anova needs >= 2 non-empty groups")
    n_total = sum(g.size for g in groups)
    k = len(groups)
    if n_total <= k:
        raise ValueError("anova needs total N greater than the group count")
    grand = np.concatenate(groups).mean()
    ssb = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    df_b, df_w = k - 1, n_total - k
    if ssw == 0.0:
        if ssb == 0.0:
            return 0.0, df_b, df_w, 1.0
        return math.inf, df_b, df_w, 0.0
    f = (ssb / df_b) / (ssw / df_w)
    return float(f), df_b, df_w, f_sf(f, df_b, df_w)
