"""Command line entry point.

Subcommands mirror the pipeline stages; `run-icd` and `run-notes` chain
them end to end. Most flags can also come from a JSON config file via
--config, with explicit flags taking precedence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import attnpool, enrich, hac, pipeline, textstats
from .cohort import (FilterConfig, apply_selection_filters, cohort_summary,
                     load_cohort, summary_to_csv, write_cohort)
from .icd_embed import (build_count_matrix, load_embedding_table,
                        vectors_from_csv, vectors_to_csv, vectorize_patients)
from .synth import (SynthSpec, embedding_table_to_text, gen_synthetic_cohort,
                    gen_synthetic_embedding_table, gen_synthetic_token_stream)
from .tes1 import read_stream, write_stream


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_labels(path):
    with open(path, encoding="utf-8") as fh:
        return pipeline.labels_from_csv(fh.read())


def _add_config_flag(p):
    p.add_argument("--config", help="JSON config file; flags override its keys")


def _pipeline_config(args, need=()):
    overrides = {key: getattr(args, key.replace("-", "_"), None)
                 for key in ("cohort", "embeddings", "stream", "out", "icd_mode",
                             "k", "yates", "token_mask_policy", "n_tests_policy",
                             "code_names", "tfidf_k")}
    if getattr(args, "k_sweep", None):
        lo, hi = args.k_sweep.split(":")
        overrides["k_sweep"] = (int(lo), int(hi))
    if getattr(args, "stop_words", None):
        overrides["stop_words"] = tuple(args.stop_words)
    config = pipeline.PipelineConfig.load(args.config, overrides)
    for key in need:
        if not getattr(config, key):
            raise SystemExit(f"missing required option --{key.replace('_', '-')}")
    return config


def cmd_ingest(args):
    cohort = load_cohort(args.cohort)
    stages = FilterConfig(followup=not args.no_followup, age=not args.no_age,
                          icd=not args.no_icd, notes=args.notes)
    kept, report = apply_selection_filters(cohort, stages)
    os.makedirs(args.out, exist_ok=True)
    write_cohort(kept, os.path.join(args.out, "filtered_cohort.jsonl"))
    _write(os.path.join(args.out, "exclusion_report.csv"), report.to_csv())
    if kept:
        _write(os.path.join(args.out, "cohort_summary.csv"),
               summary_to_csv(cohort_summary(kept)))
    print(f"kept {len(kept)} of {len(cohort)} patients")


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec(seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    cohort, truth = gen_synthetic_cohort(spec)
    write_cohort(cohort, os.path.join(args.out, "cohort.jsonl"))
    _write(os.path.join(args.out, "embeddings.txt"),
           embedding_table_to_text(gen_synthetic_embedding_table(spec)))
    stream, _ = gen_synthetic_token_stream(spec)
    write_stream(stream, os.path.join(args.out, "stream.tes1"))
    _write(os.path.join(args.out, "truth.json"), truth.to_json())
    _write(os.path.join(args.out, "synth_spec.json"),
           json.dumps(spec.to_json_dict(), sort_keys=True, indent=2) + "\n")
    print(f"wrote synthetic cohort of {spec.n_patients} patients to {args.out}")


def cmd_embed_icd(args):
    cohort = load_cohort(args.cohort)
    table = load_embedding_table(args.embeddings)
    vs = vectorize_patients(build_count_matrix(cohort), table,
                            mode=args.icd_mode, binary=args.binary)
    _write(args.out, vectors_to_csv(vs))
    _write(args.out + ".dropped.txt", "".join(p + "\n" for p in vs.dropped))
    print(f"vectorized {len(vs.patients)} patients ({len(vs.dropped)} dropped)")


def cmd_pool_notes(args):
    policy = (attnpool.TokenMaskPolicy.exclude_tokens(args.exclude_token)
              if args.exclude_token else attnpool.TokenMaskPolicy.all_tokens())
    from .tes1 import group_by_patient
    grouped = group_by_patient(read_stream(args.stream))
    patients = sorted(grouped)
    rows = [attnpool.patient_note_vector(grouped[p], policy).vector for p in patients]
    X = np.stack(rows)
    header = "patient_id," + ",".join(f"v{j}" for j in range(X.shape[1]))
    body = "\n".join(p + "," + ",".join(repr(float(v)) for v in row)
                     for p, row in zip(patients, X))
    _write(args.out, header + "\n" + body + "\n")
    print(f"pooled {len(patients)} patients from {args.stream}")


def cmd_cluster(args):
    patients, X = vectors_from_csv(open(args.vectors, encoding="utf-8").read())
    dend = hac.ward_linkage(X)
    model = hac.cut_tree(dend, args.k, X)
    _write(args.dendrogram, dend.to_csv())
    _write(args.labels, pipeline.labels_to_csv(patients, model.labels))
    print(f"cut tree at k={args.k}")


def cmd_sweep_k(args):
    _, X = vectors_from_csv(open(args.vectors, encoding="utf-8").read())
    rows = hac.k_sweep(X, range(args.kmin, args.kmax + 1))
    _write(args.out, hac.sweep_to_csv(rows))
    best = max(rows, key=lambda r: r[2])
    print(f"best silhouette {best[2]:.4f} at k={best[0]}")


def cmd_enrich(args):
    cohort = load_cohort(args.cohort)
    label_map = _read_labels(args.labels)
    labeled = [r for r in cohort if r.patient_id in label_map]
    universe = sorted(set().union(*(set(r.all_codes()) for r in labeled)))
    code_names = pipeline.load_code_names(args.code_names) if args.code_names else {}
    reports = enrich.enrich_clusters(labeled, label_map, universe, yates=args.yates,
                                     n_tests_policy=args.n_tests_policy,
                                     code_names=code_names)
    os.makedirs(args.out, exist_ok=True)
    for cluster_id, rows in sorted(reports.items()):
        _write(os.path.join(args.out, f"enrichment_cluster_{cluster_id}.csv"),
               enrich.report_to_csv(rows))
    codes, clusters, prev = enrich.prevalence_matrix(labeled, label_map, universe)
    _write(os.path.join(args.out, "zscore_matrix.csv"),
           pipeline.zscore_to_csv(codes, clusters, enrich.zscore_matrix(prev)))
    print(f"wrote enrichment reports for {len(reports)} clusters")


def cmd_tfidf(args):
    cohort = load_cohort(args.cohort)
    label_map = _read_labels(args.labels)
    texts = {}
    for rec in cohort:
        if rec.patient_id not in label_map:
            continue
        for enc in rec.encounters:
            if enc.note_text:
                texts.setdefault(label_map[rec.patient_id], []).append(enc.note_text)
    stop = textstats.default_stop_words()
    for path in args.stop_words or ():
        stop = textstats.StopWordList(stop.terms | textstats.load_stop_words(path).terms)
    docs = textstats.build_cluster_documents(texts, stop)
    _write(args.out, textstats.tfidf_to_csv(textstats.tfidf_topk(docs, args.top_k)))
    print(f"wrote top-{args.top_k} terms for {len(docs)} clusters")


def cmd_compare(args):
    cohort = load_cohort(args.cohort)
    label_map = _read_labels(args.labels)
    _write(args.out, pipeline.comparison_to_csv(cohort, label_map))
    print(f"wrote cluster comparison to {args.out}")


def cmd_project(args):
    patients, X = vectors_from_csv(open(args.vectors, encoding="utf-8").read())
    label_map = _read_labels(args.labels) if args.labels else {}
    labels = [label_map.get(p, 0) for p in patients]
    proj = pipeline.pca_project(X, 2)
    _write(args.out, pipeline.projection_to_csv(patients, labels, proj))
    print(f"projected {len(patients)} patients")


def cmd_heatmap(args):
    records = read_stream(args.stream)
    if not 0 <= args.index < len(records):
        raise SystemExit(f"record index {args.index} outside [0, {len(records)})")
    pipeline.emit_attention_heatmap(records[args.index], args.out)
    print(f"wrote attention heatmap of record {args.index}")


def cmd_run_icd(args):
    config = _pipeline_config(args, need=("cohort", "embeddings", "out"))
    out = pipeline.run_icd_pipeline(config)
    print(f"icd pipeline artifacts in {out}")


def cmd_run_notes(args):
    config = _pipeline_config(args, need=("cohort", "stream", "out"))
    out = pipeline.run_notes_pipeline(config)
    print(f"notes pipeline artifacts in {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phenocluster",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a cohort, apply selection filters")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--notes", action="store_true", help="also require a long note")
    p.add_argument("--no-followup", action="store_true")
    p.add_argument("--no-age", action="store_true")
    p.add_argument("--no-icd", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--seed", type=int, default=SynthSpec().seed)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("embed-icd", help="build the ICD design matrix")
    p.add_argument("--cohort", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--icd-mode", choices=("sum", "mean"), default="sum")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed_icd)

    p = sub.add_parser("pool-notes", help="pool a TES1 stream into patient vectors")
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude-token", action="append", default=[])
    p.set_defaults(fn=cmd_pool_notes)

    p = sub.add_parser("cluster", help="Ward clustering of a vector CSV")
    p.add_argument("--vectors", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dendrogram", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("sweep-k", help="inertia/silhouette diagnostics over k")
    p.add_argument("--vectors", required=True)
    p.add_argument("--kmin", type=int, default=2)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep_k)

    p = sub.add_parser("enrich", help="per-cluster ICD enrichment reports")
    p.add_argument("--cohort", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--yates", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--n-tests-policy", choices=enrich.N_TESTS_POLICIES,
                   default="per_cluster")
    p.add_argument("--code-names")
    p.set_defaults(fn=cmd_enrich)

    p = sub.add_parser("tfidf", help="per-cluster TF-IDF over note text")
    p.add_argument("--cohort", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stop-words", action="append", default=[])
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(fn=cmd_tfidf)

    p = sub.add_parser("compare", help="ANOVA/chi-square cluster comparison table")
    p.add_argument("--cohort", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("project", help="2-D PCA projection for plotting")
    p.add_argument("--vectors", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("heatmap", help="export one record's attention matrix")
    p.add_argument("--stream", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_heatmap)

    for name, fn in (("run-icd", cmd_run_icd), ("run-notes", cmd_run_notes)):
        p = sub.add_parser(name, help=f"full {name.split('-')[1]} pipeline")
        _add_config_flag(p)
        p.add_argument("--cohort")
        p.add_argument("--embeddings")
        p.add_argument("--stream")
        p.add_argument("--out")
        p.add_argument("--icd-mode", dest="icd_mode", choices=("sum", "mean"))
        p.add_argument("--k", type=int)
        p.add_argument("--k-sweep", help="LO:HI inclusive sweep range")
        p.add_argument("--yates", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--token-mask-policy", dest="token_mask_policy",
                       choices=("all", "exclude_special"))
        p.add_argument("--n-tests-policy", dest="n_tests_policy",
                       choices=enrich.N_TESTS_POLICIES)
        p.add_argument("--stop-words", action="append")
        p.add_argument("--tfidf-k", dest="tfidf_k", type=int)
        p.add_argument("--code-names", dest="code_names")
        p.set_defaults(fn=fn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
