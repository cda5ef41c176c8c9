"""Phenotype clustering of EHR cohorts.

Patients are vectorized two ways, from ICD9 code counts through a
pre-trained code embedding table and from clinical notes through
entropy-weighted attention pooling of transformer token embeddings, then
clustered with Ward-linkage agglomerative clustering and characterised by
chi-square code enrichment, demographic comparison tests, and TF-IDF.
"""

from .attnpool import (EntropyWeights, PatientNoteVector, TokenMaskPolicy,
                       TokenStreamRecord, differential_entropy_spacing,
                       entropy_weights, patient_note_vector, pool_chunk)
from .cohort import (CohortRecord, Encounter, FilterConfig, PhenotypeFlags,
                     apply_selection_filters, cohort_summary, load_cohort,
                     phenotype_flags)
from .enrich import (ContingencyTable2x2, EnrichmentRow, anova_f, bonferroni,
                     chi2_2x2, chi2_rxc, contingency, enrich_clusters, stars,
                     zscore_matrix)
from .hac import (ClusterModel, Dendrogram, cut_tree, inertia, k_sweep,
                  silhouette, ward_linkage)
from .icd_embed import (CodeCountMatrix, EmbeddingTable, PatientVectorSet,
                        build_count_matrix, load_embedding_table,
                        vectorize_patients)
from .pipeline import (PipelineConfig, emit_attention_heatmap, pca_project,
                       run_icd_pipeline, run_notes_pipeline)
from .synth import (CounterRng, GroundTruth, SynthSpec, adjusted_rand_index,
                    gen_synthetic_cohort, gen_synthetic_embedding_table,
                    gen_synthetic_token_stream)
from .tes1 import read_stream, write_stream
from .textstats import (ClusterDocument, StopWordList, tfidf_topk,
                        tokenize_terms)

__version__ = "0.1.0"
