import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenocluster.textstats import (ClusterDocument, StopWordList,
                                    build_cluster_documents, clean_note_text,
                                    default_stop_words, load_stop_words,
                                    tfidf_to_csv, tfidf_topk, tokenize_terms)

NO_STOPS = StopWordList(frozenset())


def doc(cluster_id, counts):
    return ClusterDocument(cluster_id=cluster_id, term_counts=dict(counts),
                           total_terms=sum(counts.values()))


class TestTokenize:
    def test_casefold_and_split(self):
        assert tokenize_terms("Pain, pain & TREMOR!", NO_STOPS) == ["pain", "pain", "tremor"]

    def test_stop_word_removal(self):
        stops = StopWordList(frozenset({"the"}))
        assert tokenize_terms("the pain", stops) == ["pain"]

    def test_length_filter(self):
        assert tokenize_terms("x2 mg b.i.d.", NO_STOPS) == ["mg"]

    def test_idempotent(self):
        tokens = tokenize_terms("Gait instability; follow-up MRI 3T!", NO_STOPS)
        assert tokenize_terms(" ".join(tokens), NO_STOPS) == tokens

    @given(st.text(max_size=200))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_property(self, text):
        tokens = tokenize_terms(text, NO_STOPS)
        assert tokenize_terms(" ".join(tokens), NO_STOPS) == tokens

    def test_default_stop_words_contain_english(self):
        stops = default_stop_words()
        assert "the" in stops.terms and "whereupon" in stops.terms

    def test_stop_word_file(self, tmp_path):
        path = tmp_path / "stops.txt"
        path.write_text("# nonspecific medical terms\nmedication\ndose # inline\n\n")
        stops = load_stop_words(path)
        assert stops.terms == frozenset({"medication", "dose"})

    def test_clean_note_text(self):
        assert clean_note_text("a|||b__c\x07d") == "a b cd"
        assert clean_note_text("plain text") == "plain text"


class TestTfidf:
    def test_single_document_idf_one(self):
        out = tfidf_topk([doc(0, {"pain": 5, "gait": 2})], k=2)
        assert [t for t, _ in out[0]] == ["pain", "gait"]
        norm = math.sqrt(sum(s * s for _, s in out[0]))
        assert norm == pytest.approx(1.0)

    def test_unique_term_outranks_shared(self):
        docs = [doc(0, {"u": 5, "v": 5}), doc(1, {"v": 5}), doc(2, {"v": 5})]
        out = tfidf_topk(docs, k=2)
        assert out[0][0][0] == "u"  # idf(u)=ln(4/2)+1 > idf(v)=1

    def test_idf_monotone_in_df(self):
        docs = [doc(0, {"rare": 3, "common": 3}),
                doc(1, {"common": 1}), doc(2, {"common": 1})]
        scores = dict(tfidf_topk(docs, k=5)[0])
        assert scores["rare"] >= scores["common"]

    def test_tie_break_alphabetical(self):
        out = tfidf_topk([doc(0, {"zeta": 2, "alpha": 2})], k=2)
        assert [t for t, _ in out[0]] == ["alpha", "zeta"]

    def test_planted_signatures(self):
        docs = []
        for c in range(3):
            counts = {f"sig{c}{j}": 10 for j in range(3)}
            counts.update({f"shared{j}": 8 for j in range(4)})
            docs.append(doc(c, counts))
        out = tfidf_topk(docs, k=3)
        for c in range(3):
            assert {t for t, _ in out[c]} == {f"sig{c}{j}" for j in range(3)}

    def test_l2_norm_is_one(self):
        docs = [doc(0, {"a": 1, "b": 9}), doc(1, {"c": 4})]
        for rows in tfidf_topk(docs, k=10).values():
            assert math.sqrt(sum(s * s for _, s in rows)) == pytest.approx(1.0)

    def test_empty_documents(self):
        assert tfidf_topk([doc(0, {})], k=3)[0] == []
        with pytest.raises(ValueError):
            tfidf_topk([], k=3)

    def test_against_sklearn(self):
        sk_text = pytest.importorskip("sklearn.feature_extraction.text")
        corpus = ["pain tremor pain gait", "memory recall memory", "gait tremor gait gait"]
        vec = sk_text.TfidfVectorizer(norm="l2", smooth_idf=True, sublinear_tf=False)
        ref = vec.fit_transform(corpus).toarray()
        vocab = vec.vocabulary_
        docs = build_cluster_documents({i: [corpus[i]] for i in range(3)}, NO_STOPS)
        out = tfidf_topk(docs, k=10)
        for i in range(3):
            for term, score in out[i]:
                assert score == pytest.approx(ref[i, vocab[term]], rel=1e-9)

    def test_csv_output(self):
        text = tfidf_to_csv(tfidf_topk([doc(0, {"pain": 3})], k=1))
        lines = text.splitlines()
        assert lines[0] == "cluster_id,rank,term,score"
        assert lines[1].startswith("0,1,pain,")


class TestBuildClusterDocuments:
    def test_concatenates_notes(self):
        docs = build_cluster_documents(
            {0: ["pain pain", "tremor"], 1: ["memory"]}, NO_STOPS)
        assert docs[0].term_counts == {"pain": 2, "tremor": 1}
        assert docs[0].total_terms == 3
        assert docs[1].cluster_id == 1

    def test_stop_words_applied(self):
        docs = build_cluster_documents({0: ["the patient has pain"]})
        assert "the" not in docs[0].term_counts
