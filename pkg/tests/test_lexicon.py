import math

import pytest
from hypothesis import given, strategies as st

from aidistress.lexicon import (
    AiFeatures,
    DocumentRecord,
    Lexicon,
    LexiconError,
    PatentRecord,
    TermGroup,
    compile_lexicon,
    count_terms,
    default_lexicon,
    extract_ai_features,
    parse_document_file,
    text_length,
)


def make_lexicon(groups):
    return Lexicon(
        groups=tuple(
            TermGroup(cid, tuple(surfaces)) for cid, surfaces in sorted(groups.items())
        )
    )


SMALL = make_lexicon(
    {
        "artificial intelligence": [("artificial intelligence", "en"), ("AI", "en"), ("人工智能", "zh")],
        "machine learning": [("machine learning", "en"), ("机器学习", "zh")],
        "machine learning platform": [("machine learning platform", "en")],
        "big data": [("big data", "en"), ("大数据", "zh")],
        "big data analytics": [("big data analytics", "en"), ("大数据分析", "zh")],
    }
)


def oracle_count(text, lex):
    """Greedy longest-match-first, left-to-right scan; independent of regex."""
    surfaces = sorted(
        ((t, l) for g in lex.groups for t, l in g.surfaces), key=lambda s: -len(s[0])
    )
    low = text.lower()
    alnum = set("abcdefghijklmnopqrstuvwxyz0123456789")
    i, n, count = 0, len(text), 0
    while i < n:
        matched = 0
        for surf, lang in surfaces:
            s = surf.lower()
            if lang == "en":
                if not low.startswith(s, i):
                    continue
                before = low[i - 1] if i > 0 else ""
                after = low[i + len(s)] if i + len(s) < n else ""
                if before in alnum or after in alnum:
                    continue
            else:
                if not low.startswith(s, i):
                    continue
            matched = len(s)
            break
        if matched:
            count += 1
            i += matched
        else:
            i += 1
    return count


class TestCompile:
    def test_default_lexicon_has_72_groups(self):
        lex = default_lexicon()
        assert len(lex) == 72
        for core in [
            "artificial intelligence",
            "machine learning",
            "natural language processing",
            "Internet of Things",
            "distributed computing",
            "big data analytics",
        ]:
            assert core in lex.canonical_ids

    def test_compile_from_file(self, tmp_path):
        p = tmp_path / "lex.csv"
        p.write_text(
            "canonical_id,language,surface\n"
            "machine learning,en,machine learning\n"
            "machine learning,zh,机器学习\n"
            "cloud computing,en,cloud computing\n",
            encoding="utf-8",
        )
        lex = compile_lexicon(p)
        assert lex.canonical_ids == ["cloud computing", "machine learning"]

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "lex.csv"
        p.write_text("canonical_id,language,surface\n", encoding="utf-8")
        with pytest.raises(LexiconError):
            compile_lexicon(p)

    def test_duplicate_surface_names_both_groups(self, tmp_path):
        p = tmp_path / "lex.csv"
        p.write_text(
            "canonical_id,language,surface\n"
            "group one,en,AI\n"
            "group two,en,AI\n",
            encoding="utf-8",
        )
        with pytest.raises(LexiconError, match="group one.*group two"):
            compile_lexicon(p)

    def test_empty_group_rejected(self):
        with pytest.raises(LexiconError):
            TermGroup("empty", ())

    def test_language_invariants(self):
        with pytest.raises(LexiconError):
            TermGroup("bad", (("machine learning", "zh"),))
        with pytest.raises(LexiconError):
            TermGroup("bad", (("机器学习", "en"),))


class TestCountTerms:
    def test_empty_text(self):
        assert count_terms("", SMALL) == 0

    def test_exact_repetition(self):
        text = " ".join(["machine learning"] * 100)
        assert count_terms(text, SMALL) == 100

    def test_longest_match_wins(self):
        # "machine learning platform" must count once, not as "machine learning"
        assert count_terms("we built a machine learning platform", SMALL) == 1
        assert count_terms("大数据分析", SMALL) == 1

    def test_case_insensitive_word_boundary(self):
        assert count_terms("Machine Learning, MACHINE LEARNING.", SMALL) == 2
        assert count_terms("chain learning", SMALL) == 0
        assert count_terms("AIs and AI", SMALL) == 1  # plural is a different word

    def test_zh_substring(self):
        assert count_terms("公司推进人工智能与机器学习落地", SMALL) == 2

    def test_against_oracle_handmade(self):
        texts = [
            "big data analytics on big data with AI",
            "大数据分析与大数据, 机器学习 machine learning platform",
            "AI AI AI 人工智能machine learning",
            "no terms here at all",
        ]
        for t in texts:
            assert count_terms(t, SMALL) == oracle_count(t, SMALL)

    @given(
        st.lists(
            st.sampled_from(
                ["AI", "big data", "big data analytics", "大数据", "大数据分析",
                 "machine", "learning", "machine learning", "平台", "data"]
            ),
            min_size=0,
            max_size=30,
        )
    )
    def test_against_oracle_random(self, tokens):
        text = " ".join(tokens)
        assert count_terms(text, SMALL) == oracle_count(text, SMALL)


class TestTextLength:
    def test_empty(self):
        assert text_length("") == 0

    def test_mixed_definition(self):
        assert text_length("推进数字化 machine learning") == 7  # 5 CJK + 2 tokens

    @given(st.text(alphabet="ab1 ,.智能云端x", max_size=80))
    def test_against_reference_scanner(self, text):
        # character-by-character single-pass reference
        cjk = sum(1 for ch in text if "一" <= ch <= "鿿")
        tokens = 0
        in_tok = False
        for ch in text:
            is_alnum = ch.isascii() and ch.isalnum()
            if is_alnum and not in_tok:
                tokens += 1
            in_tok = is_alnum
        assert text_length(text) == cjk + tokens


class TestExtractFeatures:
    def test_all_zero(self):
        doc = DocumentRecord("f1", 2020, "plain report text", "nothing", "普通文本")
        feats = extract_ai_features(doc, [], SMALL)
        assert feats.as_row() == {k: 0.0 for k in feats.as_row()}

    def test_density_example(self):
        # 100 mentions in 20,000 units scores higher than 100 in 50,000
        body_a = " ".join(["AI"] * 100) + " " + "云" * 19900
        body_b = " ".join(["AI"] * 100) + " " + "云" * 49900
        fa = extract_ai_features(DocumentRecord("a", 2020, body_a), [], SMALL)
        fb = extract_ai_features(DocumentRecord("b", 2020, body_b), [], SMALL)
        assert fa.ai_density_full == pytest.approx(100 / 20000)
        assert fb.ai_density_full == pytest.approx(100 / 50000)
        assert fa.ai_density_full > fb.ai_density_full

    def test_single_patent_match(self):
        doc = DocumentRecord("f1", 2020, "text")
        pats = [
            PatentRecord("f1", 2020, "invention", "一种人工智能装置", "摘要"),
            PatentRecord("f1", 2020, "utility", "水杯", "不含相关词"),
            PatentRecord("f1", 2019, "design", "人工智能外观", "wrong year"),
        ]
        feats = extract_ai_features(doc, pats, SMALL)
        assert feats.ai_invention == pytest.approx(math.log(2))
        assert feats.ai_patents_total == pytest.approx(math.log(2))
        assert feats.ai_utility == 0.0
        assert feats.ai_design == 0.0

    def test_patents_total_monotone(self):
        doc = DocumentRecord("f1", 2020, "text")
        pats = [
            PatentRecord("f1", 2020, "invention", "人工智能", ""),
            PatentRecord("f1", 2020, "utility", "机器学习", ""),
        ]
        feats = extract_ai_features(doc, pats, SMALL)
        assert feats.ai_patents_total >= max(
            feats.ai_invention, feats.ai_utility, feats.ai_design
        )

    def test_mdna_absent_flag(self):
        feats = extract_ai_features(DocumentRecord("f", 2020, "AI text"), [], SMALL)
        assert feats.ai_level_mdna == 0.0
        assert "mdna_missing" in feats.flags
        assert "narrative_fallback_full" in feats.flags

    def test_duplicated_text_invariance(self):
        text = "AI 人工智能 filler words here"
        f1 = extract_ai_features(DocumentRecord("f", 2020, text), [], SMALL)
        f2 = extract_ai_features(DocumentRecord("f", 2020, text + " " + text), [], SMALL)
        assert f2.ai_density_full == pytest.approx(f1.ai_density_full)
        assert f2.ai_level > f1.ai_level

    def test_log_round_trip(self):
        for count in [0, 1, 7, 12345, 10**6]:
            text = " ".join(["AI"] * count) if count else "none"
            f = extract_ai_features(DocumentRecord("f", 2020, text), [], SMALL)
            back = math.expm1(f.ai_level)
            assert abs(back - count) <= 1e-9 * max(count, 1)


class TestCorpusParsing:
    def test_sections(self, tmp_path):
        p = tmp_path / "000001_2020.txt"
        p.write_text(
            "header text AI\n===MDNA===\n管理层讨论 人工智能\n===NARRATIVE===\n叙述 机器学习\n",
            encoding="utf-8",
        )
        doc = parse_document_file(p)
        assert doc.firm_id == "000001"
        assert doc.year == 2020
        assert "人工智能" in doc.mdna_text
        assert "机器学习" in doc.narrative_text
        assert count_terms(doc.full_text, SMALL) == 3

    def test_bad_name(self, tmp_path):
        p = tmp_path / "report.txt"
        p.write_text("x", encoding="utf-8")
        with pytest.raises(ValueError):
            parse_document_file(p)
