"""End-to-end pipeline runs, artifact writing, and the PCA plot projection.

Every artifact is written with fixed orderings and shortest round-trip
float formatting, so identical configs and inputs produce byte-identical
output trees; a manifest records the sha256 of each artifact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import attnpool, enrich, hac, textstats
from .cohort import (FilterConfig, apply_selection_filters, cohort_summary,
                     load_cohort, phenotype_flags, summary_to_csv)
from .icd_embed import (build_count_matrix, load_embedding_table,
                        vectors_to_csv, vectorize_patients)
from .tes1 import group_by_patient, read_stream


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def thread_cap() -> int:
    """Parallelism cap from PHENO_THREADS; 1 (serial) when unset."""
    raw = os.environ.get("PHENO_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        warnings.warn(f"ignoring non-integer PHENO_THREADS={raw!r}")
        return 1


def ordered_map(fn, items):
    """Map preserving input order, fanned out when PHENO_THREADS allows.

    The callables used here are pure, so the output is identical however
    many workers run.
    """
    items = list(items)
    cap = thread_cap()
    if cap <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, items))


@dataclass
class PipelineConfig:
    cohort: str = ""
    embeddings: str = ""
    stream: str = ""
    out: str = ""
    icd_mode: str = "sum"
    binary_counts: bool = False
    k: int = 3
    k_sweep: tuple[int, int] | None = None
    yates: bool = True
    token_mask_policy: str = "all"
    special_tokens: tuple[str, ...] = ("[CLS]", "[SEP]", "[PAD]")
    n_tests_policy: str = "per_cluster"
    stop_words: tuple[str, ...] = ()
    tfidf_k: int = 10
    code_names: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.token_mask_policy not in ("all", "exclude_special"):
            raise ValueError("token_mask_policy must be 'all' or 'exclude_special'")

    @classmethod
    def load(cls, config_path=None, overrides=None) -> "PipelineConfig":
        data = {}
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                data.update(json.load(fh))
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        if "k_sweep" in data and data["k_sweep"] is not None:
            data["k_sweep"] = tuple(data["k_sweep"])
        if "stop_words" in data:
            data["stop_words"] = tuple(data["stop_words"])
        if "special_tokens" in data:
            data["special_tokens"] = tuple(data["special_tokens"])
        return cls(**data)

    def mask_policy(self) -> attnpool.TokenMaskPolicy:
        if self.token_mask_policy == "exclude_special":
            return attnpool.TokenMaskPolicy.exclude_tokens(self.special_tokens)
        return attnpool.TokenMaskPolicy.all_tokens()


def load_code_names(path) -> dict[str, str]:
    names = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if len(row) >= 2 and row[0] and row[0] != "code":
                names[row[0]] = row[1]
    return names


def pca_project(X, n_components: int = 2) -> np.ndarray:
    """Deterministic PCA projection for plotting.

    Columns are mean-centered and projected onto the leading eigenvectors
    of the covariance matrix; each component is signed so its
    largest-magnitude loading is positive. Zero-variance data projects to
    zeros with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_project needs an n x d matrix with n >= 2")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / X.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 1e-300:
        warnings.warn("zero-variance data, projecting to zeros")
        return np.zeros((X.shape[0], n_components))
    out = np.zeros((X.shape[0], n_components))
    take = min(n_components, X.shape[1])
    for comp in range(take):
        vec = eigvecs[:, -(comp + 1)]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        out[:, comp] = centered @ vec
    return out


def emit_attention_heatmap(record: attnpool.TokenStreamRecord, path) -> None:
    """n x n attention CSV with token strings as header row and column."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["token"] + list(record.tokens))
        for token, row in zip(record.tokens, record.attention):
            writer.writerow([token] + [repr(float(v)) for v in row])


class _ArtifactWriter:
    """Tracks written artifacts for the manifest and failure cleanup."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.written.append(name)

    def cleanup(self) -> None:
        for name in self.written:
            try:
                os.remove(self.path(name))
            except OSError:
                pass

    def write_manifest(self) -> None:
        hashes = {}
        for name in sorted(self.written):
            with open(self.path(name), "rb") as fh:
                hashes[name] = hashlib.sha256(fh.read()).hexdigest()
        manifest = json.dumps({"artifacts": hashes}, sort_keys=True, indent=2) + "\n"
        with open(self.path("manifest.json"), "w", encoding="utf-8", newline="") as fh:
            fh.write(manifest)


def labels_to_csv(patients, labels) -> str:
    lines = ["patient_id,label"]
    for pid, lab in zip(patients, labels):
        lines.append(f"{pid},{int(lab)}")
    return "\n".join(lines) + "\n"


def labels_from_csv(text: str) -> dict[str, int]:
    out = {}
    for line in text.splitlines()[1:]:
        if line:
            pid, lab = line.split(",")
            out[pid] = int(lab)
    return out


def zscore_to_csv(codes, clusters, z) -> str:
    lines = ["code," + ",".join(f"cluster_{c}" for c in clusters)]
    for code, row in zip(codes, z):
        lines.append(code + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def projection_to_csv(patients, labels, proj) -> str:
    lines = ["patient_id,label,pc1,pc2"]
    for pid, lab, row in zip(patients, labels, proj):
        lines.append(f"{pid},{int(lab)},{repr(float(row[0]))},{repr(float(row[1]))}")
    return "\n".join(lines) + "\n"


def comparison_to_csv(cohort, label_map) -> str:
    """ANOVA / chi-square cluster comparison of demographics and flags."""
    labeled = [rec for rec in cohort if rec.patient_id in label_map]
    clusters = sorted({label_map[rec.patient_id] for rec in labeled})
    by_cluster = {c: [r for r in labeled if label_map[r.patient_id] == c] for c in clusters}
    flags = {rec.patient_id: phenotype_flags(rec) for rec in labeled}

    lines = ["variable," + ",".join(f"cluster_{c}" for c in clusters) + ",statistic,p_value,test"]

    def anova_row(name, value_fn, subset_fn=lambda r: True):
        groups = [[value_fn(r) for r in by_cluster[c] if subset_fn(r)] for c in clusters]
        cells = []
        for g in groups:
            if g:
                m = sum(g) / len(g)
                s = math.sqrt(sum((v - m) ** 2 for v in g) / len(g))
                cells.append(f"{m:.2f} +/- {s:.2f}")
            else:
                cells.append("NA")
        try:
            f, _, _, p = enrich.anova_f([g for g in groups if g])
            stat, pv = f"{f:.4f}", f"{p:.4G}"
        except ValueError:
            stat, pv = "NA", "NA"
        lines.append(f"{name}," + ",".join(cells) + f",{stat},{pv},anova")

    def chi2_rows(name, cat_fn):
        cats = sorted({cat_fn(r) for r in labeled})
        table = [[sum(1 for r in by_cluster[c] if cat_fn(r) == cat) for c in clusters]
                 for cat in cats]
        if len(cats) >= 2:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                stat, _, p = enrich.chi2_rxc(table)
            stat_s, p_s = f"{stat:.4f}", f"{p:.4G}"
        else:
            stat_s, p_s = "NA", "NA"
        for cat, counts in zip(cats, table):
            cells = [f"{n} ({100.0 * n / len(by_cluster[c]):.1f}%)"
                     for n, c in zip(counts, clusters)]
            lines.append(f"{name}={cat}," + ",".join(cells) + f",{stat_s},{p_s},chi2")

    anova_row("age_at_first_encounter", lambda r: r.encounters[0].age_at_encounter)
    anova_row("age_at_last_encounter", lambda r: r.encounters[-1].age_at_encounter)
    chi2_rows("sex", lambda r: r.sex)
    chi2_rows("race", lambda r: r.race)
    chi2_rows("ethnicity", lambda r: r.ethnicity)
    for flag in ("ad", "ftd", "lbd", "vascular", "mci_or_memory_loss"):
        chi2_rows(f"with_{flag}_code", lambda r, fl=flag: "yes" if getattr(flags[r.patient_id], fl) else "no")
    anova_row("unique_code_count", lambda r: r.unique_code_count())
    chi2_rows("genotyped", lambda r: "yes" if r.genotyped else "no")
    anova_row("apoe_dosage", lambda r: r.apoe_dosage or 0.0, subset_fn=lambda r: r.genotyped)
    return "\n".join(lines) + "\n"


def _cluster_and_report(writer: _ArtifactWriter, config: PipelineConfig,
                        cohort_kept, patients, X) -> None:
    """Shared clustering / enrichment / comparison / projection stages."""
    stage = "cluster"
    try:
        dend = hac.ward_linkage(X)
        writer.write_text("dendrogram.csv", dend.to_csv())
        model = hac.cut_tree(dend, config.k, X)
        writer.write_text("labels.csv", labels_to_csv(patients, model.labels))
        ks = range(config.k_sweep[0], config.k_sweep[1] + 1) if config.k_sweep else [config.k]
        rows = [(k, hac.inertia(X, hac.cut_tree(dend, k).labels),
                 hac.silhouette(X, hac.cut_tree(dend, k).labels)) for k in ks]
        writer.write_text("diagnostics.csv", hac.sweep_to_csv(rows))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    label_map = dict(zip(patients, (int(v) for v in model.labels)))

    stage = "enrich"
    try:
        id_to_rec = {rec.patient_id: rec for rec in cohort_kept}
        labeled_recs = [id_to_rec[p] for p in patients if p in id_to_rec]
        universe = sorted(set().union(*(set(r.all_codes()) for r in labeled_recs)))
        code_names = load_code_names(config.code_names) if config.code_names else {}
        reports = enrich.enrich_clusters(labeled_recs, label_map, universe,
                                         yates=config.yates,
                                         n_tests_policy=config.n_tests_policy,
                                         code_names=code_names)
        for cluster_id, rows in sorted(reports.items()):
            writer.write_text(f"enrichment_cluster_{cluster_id}.csv",
                              enrich.report_to_csv(rows))
        codes, clusters, prev = enrich.prevalence_matrix(labeled_recs, label_map, universe)
        writer.write_text("zscore_matrix.csv",
                          zscore_to_csv(codes, clusters, enrich.zscore_matrix(prev)))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    stage = "compare"
    try:
        writer.write_text("cluster_comparison.csv", comparison_to_csv(cohort_kept, label_map))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc

    stage = "project"
    try:
        proj = pca_project(X, 2)
        writer.write_text("pca_projection.csv",
                          projection_to_csv(patients, model.labels, proj))
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc


def run_icd_pipeline(config: PipelineConfig) -> str:
    """Cohort -> ICD design matrix -> clusters -> reports. Returns out dir."""
    for name, path in (("cohort", config.cohort), ("embedding table", config.embeddings)):
        if not os.path.exists(path):
            raise FileNotFoundError(f"{name} file not found: {path}")
    writer = _ArtifactWriter(config.out)
    try:
        stage = "ingest"
        try:
            cohort = load_cohort(config.cohort)
            kept, report = apply_selection_filters(
                cohort, FilterConfig(followup=True, age=True, icd=True, notes=False))
            writer.write_text("exclusion_report.csv", report.to_csv())
            writer.write_text("cohort_summary.csv", summary_to_csv(cohort_summary(kept)))
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc

        stage = "vectorize"
        try:
            table = load_embedding_table(config.embeddings)
            counts = build_count_matrix(kept)
            vs = vectorize_patients(counts, table, mode=config.icd_mode,
                                    binary=config.binary_counts)
            writer.write_text("patient_vectors.csv", vectors_to_csv(vs))
            writer.write_text("dropped_patients.txt", "".join(p + "\n" for p in vs.dropped))
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc

        _cluster_and_report(writer, config, kept, vs.patients, vs.vectors)
        writer.write_manifest()
    except Exception:
        writer.cleanup()
        raise
    return config.out


def run_notes_pipeline(config: PipelineConfig) -> str:
    """TES1 stream -> pooled note vectors -> clusters -> reports + TF-IDF.

    Enrichment still runs on ICD codes even though clustering used the
    note representation.
    """
    for name, path in (("cohort", config.cohort), ("token stream", config.stream)):
        if not os.path.exists(path):
            raise FileNotFoundError(f"{name} file not found: {path}")
    writer = _ArtifactWriter(config.out)
    try:
        stage = "ingest"
        try:
            cohort = load_cohort(config.cohort)
            kept, report = apply_selection_filters(
                cohort, FilterConfig(followup=True, age=True, icd=True, notes=True))
            writer.write_text("exclusion_report.csv", report.to_csv())
            writer.write_text("cohort_summary.csv", summary_to_csv(cohort_summary(kept)))
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc

        stage = "pool"
        try:
            grouped = group_by_patient(read_stream(config.stream))
            kept_ids = {rec.patient_id for rec in kept}
            patients = sorted(pid for pid in grouped if pid in kept_ids)
            if not patients:
                raise ValueError("no stream patients survive the cohort filters")
            policy = config.mask_policy()
            pooled = ordered_map(
                lambda pid: attnpool.patient_note_vector(grouped[pid], policy).vector,
                patients)
            X = np.stack(pooled)
            header = "patient_id," + ",".join(f"v{j}" for j in range(X.shape[1]))
            body = "\n".join(p + "," + ",".join(repr(float(v)) for v in row)
                             for p, row in zip(patients, X))
            writer.write_text("note_vectors.csv", header + "\n" + body + "\n")
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc

        _cluster_and_report(writer, config, kept, patients, X)

        stage = "tfidf"
        try:
            label_map = labels_from_csv(
                open(writer.path("labels.csv"), encoding="utf-8").read())
            texts: dict[int, list[str]] = {}
            for rec in kept:
                if rec.patient_id not in label_map:
                    continue
                for enc in rec.encounters:
                    if enc.note_text:
                        texts.setdefault(label_map[rec.patient_id], []).append(enc.note_text)
            stop = textstats.default_stop_words()
            for path in config.stop_words:
                stop = textstats.StopWordList(stop.terms | textstats.load_stop_words(path).terms)
            docs = textstats.build_cluster_documents(texts, stop)
            writer.write_text("tfidf_topk.csv",
                              textstats.tfidf_to_csv(textstats.tfidf_topk(docs, config.tfidf_k)))
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc

        writer.write_manifest()
    except Exception:
        writer.cleanup()
        raise
    return config.out
