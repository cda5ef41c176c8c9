import numpy as np
import pytest

from helpers import make_record, table_from

from phenocluster.icd_embed import (EmbeddingTableError, build_count_matrix,
                                    load_embedding_table, vectorize_patients,
                                    vectors_from_csv, vectors_to_csv)


class TestLoadEmbeddingTable:
    def test_minimal(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("A 1 0\nB 0 1\n")
        table = load_embedding_table(path)
        assert table.dim == 2 and len(table) == 2
        assert np.array_equal(table["A"], [1.0, 0.0])

    def test_idx_prefix_stripped(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("IDX_331.0 0.5 0.5\n")
        table = load_embedding_table(path)
        assert "331.0" in table

    def test_dimension_mismatch_line_number(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("A " + " ".join(["0"] * 300) + "\nB " + " ".join(["0"] * 200) + "\n")
        with pytest.raises(EmbeddingTableError, match="line 2"):
            load_embedding_table(path)

    def test_duplicate_code(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("A 1 0\nIDX_A 0 1\n")
        with pytest.raises(EmbeddingTableError, match="duplicate"):
            load_embedding_table(path)


class TestBuildCountMatrix:
    def test_counts_across_encounters(self):
        from phenocluster.cohort import CohortRecord, Encounter
        rec = CohortRecord(
            patient_id="p1", sex="male", race="W", ethnicity="N",
            encounters=(
                Encounter(date="2015-01-01", department="d", encounter_type="other",
                          age_at_encounter=60, icd9_codes=("331.0",)),
                Encounter(date="2015-02-01", department="d", encounter_type="other",
                          age_at_encounter=60.1, icd9_codes=("331.0", "729.5")),
            ))
        cm = build_count_matrix([rec])
        assert cm.codes == ["331.0", "729.5"]
        assert cm.counts.tolist() == [[2, 1]]

    def test_zero_row_for_codeless_patient(self):
        cm = build_count_matrix([make_record("p1", codes=("331.0",)),
                                 make_record("p2", codes=())])
        assert cm.counts[1].tolist() == [0]

    def test_against_brute_force_recount(self):
        cohort = [
            make_record("p1", codes=("331.0", "331.0", "729.5")),
            make_record("p2", codes=("729.5",)),
            make_record("p3", codes=("401.9", "331.0")),
        ]
        cm = build_count_matrix(cohort)
        for i, rec in enumerate(cohort):
            for j, code in enumerate(cm.codes):
                expected = sum(list(e.icd9_codes).count(code) for e in rec.encounters)
                assert cm.counts[i, j] == expected


class TestVectorizePatients:
    def test_sum_and_mean_modes(self):
        cohort = [make_record("p1", codes=("c1", "c1", "c2"))]
        cm = build_count_matrix(cohort)
        table = table_from({"c1": (1, 0), "c2": (0, 1)})
        vs = vectorize_patients(cm, table, mode="sum")
        assert vs.vectors[0].tolist() == [2.0, 1.0]
        vm = vectorize_patients(cm, table, mode="mean")
        assert vm.vectors[0] == pytest.approx([2 / 3, 1 / 3])

    def test_uncovered_only_patient_dropped(self):
        cohort = [make_record("p1", codes=("c1",)), make_record("p2", codes=("ZZZ",))]
        cm = build_count_matrix(cohort)
        vs = vectorize_patients(cm, table_from({"c1": (1.0,)}), mode="sum")
        assert vs.patients == ["p1"]
        assert vs.dropped == ["p2"]

    def test_all_uncovered_errors(self):
        cm = build_count_matrix([make_record("p1", codes=("ZZZ",))])
        with pytest.raises(ValueError):
            vectorize_patients(cm, table_from({"c1": (1.0,)}), mode="sum")

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(42)
        codes = [f"c{j}" for j in range(5)]
        table = table_from({c: rng.normal(size=3) for c in codes})
        cohort = [make_record(f"p{i}", codes=tuple(
            rng.choice(codes, size=rng.integers(1, 8)))) for i in range(10)]
        cm = build_count_matrix(cohort)
        vs = vectorize_patients(cm, table, mode="sum")
        for i, pid in enumerate(cm.patients):
            expected = np.zeros(3)
            for j, code in enumerate(cm.codes):
                expected += cm.counts[i, j] * table[code]
            row = vs.vectors[vs.patients.index(pid)]
            assert row == pytest.approx(expected, abs=1e-12)

    def test_sum_mode_linearity(self):
        cohort = [make_record("p1", codes=("c1", "c2", "c2"))]
        cm = build_count_matrix(cohort)
        table = table_from({"c1": (1.0, 2.0), "c2": (0.5, -1.0)})
        once = vectorize_patients(cm, table, mode="sum").vectors
        cm.counts = cm.counts * 2
        twice = vectorize_patients(cm, table, mode="sum").vectors
        assert np.array_equal(twice, 2 * once)

    def test_mean_mode_duplication_invariance(self):
        table = table_from({"c1": (1.0, 2.0), "c2": (0.5, -1.0)})
        base = build_count_matrix([make_record("p1", codes=("c1", "c2"))])
        dup = build_count_matrix([make_record("p1", codes=("c1", "c1", "c2", "c2"))])
        a = vectorize_patients(base, table, mode="mean").vectors
        b = vectorize_patients(dup, table, mode="mean").vectors
        assert a == pytest.approx(b, abs=1e-15)

    def test_uncovered_code_does_not_perturb_either_mode(self):
        table = table_from({"c1": (1.0,), "c2": (2.0,)})
        plain = build_count_matrix([make_record("p1", codes=("c1", "c2"))])
        extra = build_count_matrix([make_record("p1", codes=("c1", "c2", "ZZZ"))])
        for mode in ("sum", "mean"):
            a = vectorize_patients(plain, table, mode=mode).vectors
            b = vectorize_patients(extra, table, mode=mode).vectors
            assert np.array_equal(a, b)

    def test_binary_flag(self):
        cm = build_count_matrix([make_record("p1", codes=("c1", "c1", "c1"))])
        table = table_from({"c1": (2.0,)})
        vs = vectorize_patients(cm, table, mode="sum", binary=True)
        assert vs.vectors[0].tolist() == [2.0]

    def test_csv_roundtrip(self):
        cm = build_count_matrix([make_record("p1", codes=("c1",))])
        vs = vectorize_patients(cm, table_from({"c1": (0.1, -2.5)}), mode="sum")
        patients, X = vectors_from_csv(vectors_to_csv(vs))
        assert patients == vs.patients
        assert np.array_equal(X, vs.vectors)
