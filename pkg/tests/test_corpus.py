"""Standoff parsing, tokenization, alignment, and serialization."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioee.corpus import (
    BB_SCHEMA,
    BGI_SCHEMA,
    Corpus,
    Event,
    align_entities,
    corpus_stats,
    load_corpus_dir,
    load_schema,
    parse_standoff,
    split_sentences,
    tokenize,
    write_standoff,
)
from bioee.errors import AlignmentError, IntegrityError, ParseError, SchemaError

import fixtures


class TestTokenize:
    def test_terminal_period_detaches(self):
        assert [t.text for t in tokenize("cotB and cotC.")] == ["cotB", "and", "cotC", "."]

    def test_whitespace_offsets(self):
        toks = tokenize("The expression of rsfA")
        assert [t.span for t in toks] == [(0, 3), (4, 14), (15, 17), (18, 22)]

    def test_parenthesized_gene_names_stay_whole(self):
        toks = tokenize("sigma(F) and sigma(G).")
        assert [t.text for t in toks] == ["sigma(F)", "and", "sigma(G)", "."]

    def test_glue_characters_inside_runs(self):
        assert [t.text for t in tokenize("DNA-binding PMID-10629188-S5 spo0A_1")] == [
            "DNA-binding",
            "PMID-10629188-S5",
            "spo0A_1",
        ]

    def test_edge_punctuation_detaches(self):
        assert [t.text for t in tokenize("(GerE) -35")] == ["(", "GerE", ")", "-", "35"]

    def test_empty_text(self):
        assert tokenize("") == []

    @given(st.text(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_every_token_matches_its_span(self, text):
        for tok in tokenize(text):
            s, e = tok.span
            assert text[s:e] == tok.text
            assert not any(ch.isspace() for ch in tok.text)

    @given(st.text(max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_spans_disjoint_and_ordered(self, text):
        spans = [t.span for t in tokenize(text)]
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2
        assert all(s < e for s, e in spans)


class TestSplitSentences:
    def test_two_sentences(self):
        assert split_sentences("A b. C d.") == [(0, 4), (5, 9)]

    def test_no_split_without_uppercase(self):
        assert split_sentences("A b. c d.") == [(0, 9)]

    def test_entity_guard_keeps_one_interval(self):
        text = "Grown in E. Coli cultures overnight."
        assert len(split_sentences(text)) == 2
        guarded = split_sentences(text, protected_spans=[(9, 16)])  # "E. Coli"
        assert guarded == [(0, len(text))]

    def test_gere_abstract_is_one_sentence_containing_all_entities(self):
        corpus = fixtures.bgi_corpus()
        doc = next(d for d in corpus.documents if d.id == "GERE")
        assert len(doc.sentences) == 1
        lo, hi = doc.sentences[0].span
        for ent in corpus.doc_entities("GERE"):
            assert lo <= ent.span[0] and ent.span[1] <= hi

    def test_digit_starts_new_sentence(self):
        assert len(split_sentences("Done already. 12 strains grew.")) == 2


class TestAlignEntities:
    def _sentence(self, corpus, doc_id, idx=0):
        doc = next(d for d in corpus.documents if d.id == doc_id)
        return doc.sentences[idx]

    def test_phrase_entity_covers_four_tokens(self):
        corpus = fixtures.bgi_corpus()
        ent = corpus.entity("GERE", "T1")  # "purified product of gerE"
        first, last = ent.token_span
        assert last - first + 1 == 4

    def test_single_token_entity(self):
        corpus = fixtures.bgi_corpus()
        ent = corpus.entity("GERE", "T4")  # "promoters"
        first, last = ent.token_span
        assert first == last

    def test_partial_token_takes_whole_token_with_flag(self):
        text = "The cotB gene."
        a1 = "T1\tGene 4 7\tcot\n"  # "cot" inside "cotB"
        doc, entities, _ = parse_standoff(text, a1, "", BGI_SCHEMA, doc_id="d")
        ent = entities["T1"]
        assert ent.partial_tokens
        first, last = ent.token_span
        tok = doc.sentences[0].tokens[first]
        assert tok.text == "cotB" and first == last

    def test_span_outside_sentence_raises(self):
        corpus = fixtures.bgi_corpus()
        sent = self._sentence(corpus, "GERE")
        bad = corpus.entity("GERE", "T4")
        bad = type(bad)(id="TX", label="Gene", span=(sent.span[1] + 1, sent.span[1] + 4))
        with pytest.raises(AlignmentError):
            align_entities(sent, [bad])


class TestParseStandoff:
    def test_gere_sentence_counts(self):
        _, text, a1, a2 = fixtures.gere_document()
        doc, entities, events = parse_standoff(text, a1, a2, BGI_SCHEMA, doc_id="GERE")
        assert len(entities) == 6
        assert len(events) == 4

    def test_empty_event_file(self):
        _, text, a1, _ = fixtures.gere_document()
        _, entities, events = parse_standoff(text, a1, "", BGI_SCHEMA, doc_id="GERE")
        assert len(entities) == 6 and events == {}

    def test_dangling_reference_names_the_entity(self):
        text = "Bacteria live in soil."
        a1 = "T2\tHabitat 17 21\tsoil\n"
        bad = "R1\tLives_In Bacteria:T9 Location:T2\n"
        with pytest.raises(IntegrityError, match="T9"):
            parse_standoff(text, a1, bad, BB_SCHEMA)

    def test_malformed_entity_line_reports_line_number(self):
        text = "Bacteria live in soil."
        with pytest.raises(ParseError, match="line 2"):
            parse_standoff(text, "T1\tHabitat 17 21\tsoil\nT2 broken\n", "", BB_SCHEMA)

    def test_surface_mismatch_is_alignment_error(self):
        text = "Bacteria live in soil."
        with pytest.raises(AlignmentError):
            parse_standoff(text, "T1\tHabitat 17 21\tmud\n", "", BB_SCHEMA)

    def test_unknown_event_type_is_schema_error(self):
        text = "Bacteria live in soil."
        a1 = "T1\tBacteria 0 8\tBacteria\nT2\tHabitat 17 21\tsoil\n"
        with pytest.raises(SchemaError, match="Eats"):
            parse_standoff(text, a1, "R1\tEats Bacteria:T1 Location:T2\n", BB_SCHEMA)

    def test_roles_accepted_in_either_order(self):
        text = "Bacteria live in soil."
        a1 = "T1\tBacteria 0 8\tBacteria\nT2\tHabitat 17 21\tsoil\n"
        _, _, ev1 = parse_standoff(text, a1, "R1\tLives_In Bacteria:T1 Location:T2\n", BB_SCHEMA)
        _, _, ev2 = parse_standoff(text, a1, "R1\tLives_In Location:T2 Bacteria:T1\n", BB_SCHEMA)
        assert ev1["R1"].source == ev2["R1"].source == "T1"
        assert ev1["R1"].target == ev2["R1"].target == "T2"

    def test_event_prefix_line_form(self):
        text = "Bacteria live in soil."
        a1 = "T1\tBacteria 0 8\tBacteria\nT2\tHabitat 17 21\tsoil\n"
        _, _, events = parse_standoff(text, a1, "E1\tLives_In Bacteria:T1 Location:T2\n", BB_SCHEMA)
        assert events["E1"].type == "Lives_In"

    def test_self_link_rejected(self):
        text = "Bacteria live in soil."
        a1 = "T1\tBacteria 0 8\tBacteria\n"
        with pytest.raises(IntegrityError):
            parse_standoff(text, a1, "R1\tLives_In Bacteria:T1 Location:T1\n", BB_SCHEMA)

    def test_duplicate_entity_id_rejected(self):
        text = "Bacteria live in soil."
        a1 = "T1\tBacteria 0 8\tBacteria\nT1\tHabitat 17 21\tsoil\n"
        with pytest.raises(IntegrityError):
            parse_standoff(text, a1, "", BB_SCHEMA)

    def test_discontinuous_entity_takes_covering_hull(self):
        corpus = fixtures.bb_corpus()
        ent = corpus.entity("BB-2", "T3")
        assert ent.discontinuous
        doc = next(d for d in corpus.documents if d.id == "BB-2")
        assert "dairy" in doc.text[ent.span[0] : ent.span[1]]
        assert "products" in doc.text[ent.span[0] : ent.span[1]]

    def test_cross_sentence_event_flagged(self):
        corpus = fixtures.bb_corpus()
        assert corpus.events[Corpus.qualify("BB-2", "R2")].cross_sentence
        assert not corpus.events[Corpus.qualify("BB-2", "R1")].cross_sentence


class TestWriteStandoff:
    def test_lives_in_line(self):
        line = write_standoff(
            [Event(id="", type="Lives_In", source="T3", target="T5")], BB_SCHEMA
        )
        assert line == "R1\tLives_In Bacteria:T3 Location:T5\n"

    def test_empty_list(self):
        assert write_standoff([], BB_SCHEMA) == ""

    def test_two_action_target_events(self):
        out = write_standoff(
            [
                Event(id="", type="ActionTarget", source="T1", target="T2"),
                Event(id="", type="ActionTarget", source="T3", target="T4"),
            ],
            BGI_SCHEMA,
        )
        assert out.splitlines() == [
            "R1\tActionTarget Action:T1 Target:T2",
            "R2\tActionTarget Action:T3 Target:T4",
        ]

    def test_unknown_type_is_schema_error(self):
        with pytest.raises(SchemaError):
            write_standoff([Event(id="", type="Nope", source="T1", target="T2")], BB_SCHEMA)

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(sorted(BGI_SCHEMA.events)),
                st.sampled_from(["T1", "T2", "T3", "T4", "T5", "T6"]),
                st.sampled_from(["T1", "T2", "T3", "T4", "T5", "T6"]),
            ).filter(lambda t: t[1] != t[2]),
            max_size=12,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_reproduces_typed_edges(self, triples):
        _, text, a1, _ = fixtures.gere_document()
        events = [Event(id="", type=t, source=s, target=g) for t, s, g in triples]
        emitted = write_standoff(events, BGI_SCHEMA)
        _, _, parsed = parse_standoff(text, a1, emitted, BGI_SCHEMA, doc_id="GERE")
        got = [(e.type, e.source, e.target) for e in parsed.values()]
        assert sorted(got) == sorted((t, s, g) for t, s, g in triples)


class TestCorpusAssembly:
    def test_every_token_matches_document_text(self):
        for corpus in (fixtures.bgi_corpus(), fixtures.bb_corpus()):
            for doc in corpus.documents:
                for sent in doc.sentences:
                    for tok in sent.tokens:
                        assert doc.text[tok.span[0] : tok.span[1]] == tok.text

    def test_entity_token_coverage(self):
        corpus = fixtures.bgi_corpus()
        for doc in corpus.documents:
            for ent in corpus.doc_entities(doc.id):
                sent = doc.sentences[ent.sentence_index]
                first, last = ent.token_span
                assert sent.tokens[first].span[0] <= ent.span[0]
                assert sent.tokens[last].span[1] >= ent.span[1]

    def test_stats_shape(self):
        stats = corpus_stats(fixtures.bgi_corpus())
        assert stats["events"]["PromoterOf"] == 2
        assert stats["events"]["Interaction"] == 4
        assert stats["arguments"]["Target"] == 4  # distinct entities in Target role
        assert set(stats["arguments"]) == set(BGI_SCHEMA.argument_types)

    def test_load_corpus_dir(self, tmp_path):
        fixtures.write_corpus_dir(tmp_path / "bb", fixtures.bb_documents())
        corpus = load_corpus_dir(tmp_path / "bb", BB_SCHEMA)
        assert len(corpus.documents) == 3
        assert corpus_stats(corpus)["events"]["Lives_In"] == 5

    def test_missing_entity_file(self, tmp_path):
        (tmp_path / "d.txt").write_text("Some text.", encoding="utf-8")
        with pytest.raises(ParseError, match="a1"):
            load_corpus_dir(tmp_path, BB_SCHEMA)

    def test_empty_dir(self, tmp_path):
        with pytest.raises(ParseError):
            load_corpus_dir(tmp_path, BB_SCHEMA)

    def test_missing_a2_means_no_events(self, tmp_path):
        (tmp_path / "d.txt").write_text("Bacteria live in soil.", encoding="utf-8")
        (tmp_path / "d.a1").write_text("T1\tBacteria 0 8\tBacteria\n", encoding="utf-8")
        corpus = load_corpus_dir(tmp_path, BB_SCHEMA)
        assert corpus.events == {}


class TestSchema:
    def test_builtin_names(self):
        assert load_schema("bb") is BB_SCHEMA
        assert load_schema("BGI") is BGI_SCHEMA

    def test_json_schema_file(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text('{"name": "toy", "events": {"Binds": ["Head", "Tail"]}}')
        schema = load_schema(path)
        assert schema.roles("Binds") == ("Head", "Tail")
        assert schema.argument_types == ["Head", "Tail"]

    def test_unknown_schema(self):
        with pytest.raises(SchemaError):
            load_schema("not-a-task")
