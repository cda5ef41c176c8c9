import pytest

from tes_exporter.chunking import ChunkPlan, clean_and_chunk, load_delimiters


class TestCleanAndChunk:
    def test_2500_char_note(self):
        plan = clean_and_chunk("x" * 2500)
        assert [len(c) for c in plan.chunks] == [1024, 1024, 452]

    def test_empty_after_cleaning(self):
        plan = clean_and_chunk("|||___^^^")
        assert plan.chunks == []
        assert plan.cleaned == ""

    def test_identity_on_clean_text(self):
        text = "Patient presents with tremor.\nFollow-up in 6 months."
        plan = clean_and_chunk(text)
        assert plan.cleaned == text
        assert "".join(plan.chunks) == text

    def test_delimiters_removed(self):
        plan = clean_and_chunk("a|b_c^d~e\x07f")
        assert plan.cleaned == "abcdef"

    def test_spans_cover_and_do_not_overlap(self):
        plan = clean_and_chunk("y" * 3000)
        assert plan.spans[0] == (0, 1024)
        assert plan.spans[-1][1] == 3000
        for (s1, e1), (s2, e2) in zip(plan.spans, plan.spans[1:]):
            assert e1 == s2

    def test_custom_delimiter_file(self, tmp_path):
        path = tmp_path / "delims.txt"
        path.write_text("*#\n")
        delims = load_delimiters(path)
        assert clean_and_chunk("a*b#c|d", delimiters=delims).cleaned == "abc|d"

    def test_invalid_plan_rejected(self):
        with pytest.raises(ValueError):
            ChunkPlan(note_id="n", cleaned="abc", spans=((0, 2),))
        with pytest.raises(ValueError):
            ChunkPlan(note_id="n", cleaned="ab", spans=((0, 1), (0, 2)))
