"""Candidate pairs, two-bit labels, event heads, and decoding."""

import numpy as np
import pytest

from bioee import vecent, vecom
from bioee.embed import make_hashed_table
from bioee.errors import DataError, ShapeError, TrainingSetupError
from bioee.vecom import (
    CandidatePair,
    EventHyper,
    PairInput,
    PairLabel,
    PairSample,
    build_pair_samples,
    decode_events,
    event_forward,
    gen_candidates,
    label_pairs,
    new_event_model,
    pair_input,
    train_event_model,
    typed_filter,
    vecom_compose,
)

import fixtures


@pytest.fixture(scope="module")
def bgi():
    return fixtures.bgi_corpus()


@pytest.fixture(scope="module")
def table():
    return make_hashed_table(dim=10, seed=9)


def _sentence_pairs(corpus, doc_id, sidx=0):
    doc = next(d for d in corpus.documents if d.id == doc_id)
    ents = corpus.sentence_entities(doc_id, sidx)
    return gen_candidates(doc.sentences[sidx], ents)


class TestGenCandidates:
    def test_case_study_has_twelve_ordered_pairs(self, bgi):
        pairs = _sentence_pairs(bgi, "PMID-10629188")
        assert len(pairs) == 12
        keys = {(p.first.id, p.second.id) for p in pairs}
        # includes the eight orderings called out for this sentence
        for a, b in [
            ("T1", "T2"), ("T2", "T1"), ("T2", "T3"), ("T3", "T2"),
            ("T2", "T4"), ("T4", "T2"), ("T1", "T3"), ("T1", "T4"),
        ]:
            assert (a, b) in keys

    def test_single_entity_yields_nothing(self, bgi):
        doc = next(d for d in bgi.documents if d.id == "PMID-10629188")
        only = bgi.sentence_entities("PMID-10629188", 0)[:1]
        assert gen_candidates(doc.sentences[0], only) == []

    def test_gere_sentence_has_thirty_pairs(self, bgi):
        assert len(_sentence_pairs(bgi, "GERE")) == 30


class TestLabelPairs:
    def _labels(self, corpus, doc_id, event_type):
        pairs = _sentence_pairs(corpus, doc_id)
        labels = label_pairs(pairs, list(corpus.events.values()), event_type)
        return {(p.first.id, p.second.id): (l.exists, l.forward) for p, l in zip(pairs, labels)}

    def test_action_target_two_bits(self, bgi):
        got = self._labels(bgi, "PMID-10629188", "ActionTarget")
        assert got[("T1", "T2")] == (1, 1)
        assert got[("T2", "T1")] == (1, 0)
        assert got[("T1", "T3")] == (0, 0)

    def test_interaction_case_study_row(self, bgi):
        got = self._labels(bgi, "PMID-10629188", "Interaction")
        expected = {
            ("T1", "T2"): (0, 0), ("T2", "T1"): (0, 0),
            ("T2", "T3"): (1, 0), ("T3", "T2"): (1, 1),
            ("T2", "T4"): (1, 0), ("T4", "T2"): (1, 1),
            ("T1", "T3"): (0, 0), ("T1", "T4"): (0, 0),
        }
        for key, bits in expected.items():
            assert got[key] == bits, key

    def test_absent_event_type_all_zero(self, bgi):
        got = self._labels(bgi, "PMID-10629188", "PromoterOf")
        assert set(got.values()) == {(0, 0)}

    def test_forward_implies_exists(self, bgi):
        for doc in bgi.documents:
            for event_type in bgi.task_schema.event_types:
                pairs = _sentence_pairs(bgi, doc.id)
                for lab in label_pairs(pairs, list(bgi.events.values()), event_type):
                    assert lab.exists >= lab.forward

    def test_conflicting_directions_rejected(self, bgi):
        pairs = _sentence_pairs(bgi, "PMID-10629188")
        events = list(bgi.events.values())
        flipped = [e for e in events if e.doc_id == "PMID-10629188"][0]
        conflict = type(flipped)(
            id="R9",
            type=flipped.type,
            source=flipped.target,
            target=flipped.source,
            doc_id=flipped.doc_id,
        )
        with pytest.raises(DataError):
            label_pairs(pairs, events + [conflict], flipped.type)

    def test_cross_sentence_events_ignored(self):
        bb = fixtures.bb_corpus()
        pairs = _sentence_pairs(bb, "BB-2", sidx=1)  # second sentence: T4 only + nothing else
        # sentence 2 has a single entity; no pairs at all
        assert pairs == []
        # sentence 1 pairs never see the cross-sentence event T1 -> T4
        pairs = _sentence_pairs(bb, "BB-2", sidx=0)
        labels = label_pairs(pairs, list(bb.events.values()), "Lives_In")
        linked = {
            frozenset((p.first.id, p.second.id))
            for p, l in zip(pairs, labels)
            if l.exists
        }
        assert frozenset(("T1", "T4")) not in linked


class TestPairInput:
    def test_halves_are_twice_embedding_size(self, bgi, table):
        model_s = vecent.new_argument_model("Action", table.dim, 6, 5, rng=np.random.default_rng(0))
        model_t = vecent.new_argument_model("Target", table.dim, 6, 5, rng=np.random.default_rng(1))
        pair = _sentence_pairs(bgi, "PMID-10629188")[0]
        x = pair_input(pair, model_s, model_t, u=3, table=table)
        assert x.first_half.shape == (10,)
        assert x.second_half.shape == (10,)

    def test_half_layout_matches_role_models(self, bgi, table):
        model_s = vecent.new_argument_model("Action", table.dim, 6, 5, rng=np.random.default_rng(2))
        model_t = vecent.new_argument_model("Target", table.dim, 6, 5, rng=np.random.default_rng(3))
        pair = next(
            p for p in _sentence_pairs(bgi, "PMID-10629188")
            if (p.first.id, p.second.id) == ("T1", "T2")
        )
        x = pair_input(pair, model_s, model_t, u=3, table=table)
        w_first = vecent.build_context(pair.sentence, pair.first, 3, table)
        w_second = vecent.build_context(pair.sentence, pair.second, 3, table)
        np.testing.assert_allclose(
            x.first_half[:5], vecent.argument_embedding(model_s, w_first), atol=1e-12
        )
        np.testing.assert_allclose(
            x.first_half[5:], vecent.argument_embedding(model_t, w_first), atol=1e-12
        )
        np.testing.assert_allclose(
            x.second_half[:5], vecent.argument_embedding(model_t, w_second), atol=1e-12
        )
        np.testing.assert_allclose(
            x.second_half[5:], vecent.argument_embedding(model_s, w_second), atol=1e-12
        )

    def test_deterministic(self, bgi, table):
        model_s = vecent.new_argument_model("Action", table.dim, 6, 5, rng=np.random.default_rng(4))
        model_t = vecent.new_argument_model("Target", table.dim, 6, 5, rng=np.random.default_rng(5))
        pair = _sentence_pairs(bgi, "PMID-10629188")[3]
        a = pair_input(pair, model_s, model_t, u=3, table=table)
        b = pair_input(pair, model_s, model_t, u=3, table=table)
        np.testing.assert_array_equal(a.first_half, b.first_half)
        np.testing.assert_array_equal(a.second_half, b.second_half)


class TestCompose:
    def test_equal_halves_give_zero(self):
        v = np.arange(6.0)
        np.testing.assert_array_equal(vecom_compose(PairInput(v, v.copy())), np.zeros(6))

    def test_zero_second_half_is_identity(self):
        v = np.arange(6.0)
        np.testing.assert_array_equal(vecom_compose(PairInput(v, np.zeros(6))), v)

    def test_matches_elementwise_loop_oracle(self):
        rng = np.random.default_rng(11)
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        got = vecom_compose(PairInput(a, b))
        expected = np.array([a[i] - b[i] for i in range(16)])
        np.testing.assert_allclose(got, expected, atol=1e-15)

    def test_antisymmetric_under_half_swap(self):
        rng = np.random.default_rng(12)
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        lhs = vecom_compose(PairInput(a, b))
        rhs = -vecom_compose(PairInput(b, a))
        np.testing.assert_allclose(lhs, rhs, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            vecom_compose(PairInput(np.zeros(4), np.zeros(5)))


class TestEventForward:
    def test_existence_invariant_under_sign_flip(self):
        rng = np.random.default_rng(13)
        model = new_event_model("E", "S", "T", input_dim=8, hidden=4, rng=rng)
        v = rng.standard_normal(8)
        p1, _ = event_forward(model, PairInput(v, np.zeros(8)))
        p2, _ = event_forward(model, PairInput(np.zeros(8), v))  # composed = -v
        assert p1 == pytest.approx(p2, abs=0)

    def test_zero_weight_model_gives_half_half(self):
        model = new_event_model("E", "S", "T", input_dim=8, hidden=4,
                                rng=np.random.default_rng(14))
        for t in model.parameters().values():
            t.data[...] = 0.0
        p_exists, p_forward = event_forward(model, PairInput(np.ones(8), np.zeros(8)))
        assert p_exists == pytest.approx(0.5)
        assert p_forward == pytest.approx(0.5)

    def test_direction_changes_under_sign_flip(self):
        rng = np.random.default_rng(15)
        model = new_event_model("E", "S", "T", input_dim=8, hidden=4, rng=rng)
        v = rng.standard_normal(8)
        _, f1 = event_forward(model, PairInput(v, np.zeros(8)))
        _, f2 = event_forward(model, PairInput(np.zeros(8), v))
        assert f1 != pytest.approx(f2)


def _pair_stub(doc_id, first_id, second_id):
    from bioee.corpus import Entity, Sentence

    sent = Sentence(id=f"{doc_id}-S1", span=(0, 10))
    mk = lambda tid: Entity(id=tid, label="X", span=(0, 1), doc_id=doc_id, sentence_index=0)
    return CandidatePair(doc_id=doc_id, sentence=sent, first=mk(first_id), second=mk(second_id))


def _separable_pair_samples(n=160, dim=12, seed=0):
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    samples = []
    for i in range(n):
        exists = i % 2
        forward = (i // 2) % 2 if exists else 0
        if exists:
            v = direction * (3.0 if forward else -3.0) + 0.1 * rng.standard_normal(dim)
        else:
            v = 0.05 * rng.standard_normal(dim)
        samples.append(
            PairSample(
                pair=_pair_stub("D", f"T{i}", f"T{i + 1}"),
                x=PairInput(first_half=v, second_half=np.zeros(dim)),
                label=PairLabel(exists=exists, forward=forward),
            )
        )
    return samples


class TestTrainEventModel:
    def test_separable_pairs_reach_95_accuracy(self):
        hyper = EventHyper(hidden=8, batch=16, epochs=10, lr=0.05)
        model, log = train_event_model(
            _separable_pair_samples(), "E", "S", "T", hyper, rng=np.random.default_rng(0)
        )
        assert log[-1].accuracy >= 0.95

    def test_zero_epochs_returns_initialized_model(self):
        hyper = EventHyper(hidden=8, epochs=0)
        model, log = train_event_model(
            _separable_pair_samples(n=20), "E", "S", "T", hyper, rng=np.random.default_rng(0)
        )
        assert log == []

    def test_single_class_existence_rejected(self):
        samples = [s for s in _separable_pair_samples(n=40) if s.label.exists == 1]
        with pytest.raises(TrainingSetupError):
            train_event_model(samples, "E", "S", "T", EventHyper(), np.random.default_rng(0))

    def test_direction_learned_on_separable_pairs(self):
        hyper = EventHyper(hidden=8, batch=16, epochs=12, lr=0.05)
        samples = _separable_pair_samples()
        model, _ = train_event_model(samples, "E", "S", "T", hyper, rng=np.random.default_rng(0))
        correct = 0
        n_pos = 0
        for s in samples:
            if not s.label.exists:
                continue
            _, pf = event_forward(model, s.x)
            n_pos += 1
            correct += int((pf >= 0.5) == bool(s.label.forward))
        assert correct / n_pos >= 0.95


class TestDecodeEvents:
    def test_forward_bit_orients_first_to_second(self):
        pairs = [_pair_stub("D", "T1", "T2"), _pair_stub("D", "T2", "T1")]
        events = decode_events(pairs, [(1.0, 1.0), (1.0, 0.0)], "ActionTarget")
        assert len(events) == 1
        assert (events[0].source, events[0].target) == ("T1", "T2")

    def test_zero_bit_orients_second_to_first(self):
        pairs = [_pair_stub("D", "T2", "T3"), _pair_stub("D", "T3", "T2")]
        events = decode_events(pairs, [(0.9, 0.0), (0.2, 0.9)], "Interaction")
        assert len(events) == 1
        assert (events[0].source, events[0].target) == ("T3", "T2")

    def test_below_threshold_yields_nothing(self):
        pairs = [_pair_stub("D", "T1", "T2"), _pair_stub("D", "T2", "T1")]
        assert decode_events(pairs, [(0.4, 1.0), (0.3, 0.2)], "E") == []

    def test_higher_existence_ordering_wins(self):
        pairs = [_pair_stub("D", "T1", "T2"), _pair_stub("D", "T2", "T1")]
        events = decode_events(pairs, [(0.6, 0.9), (0.8, 0.9)], "E")
        assert len(events) == 1
        # (T2, T1) scored higher and its forward bit points T2 -> T1
        assert (events[0].source, events[0].target) == ("T2", "T1")


class TestGoldRoundTrip:
    def _round_trip(self, corpus):
        """Gold labels as hard predictions must decode to the gold events."""
        for doc in corpus.documents:
            for sidx, sent in enumerate(doc.sentences):
                ents = corpus.sentence_entities(doc.id, sidx)
                if len(ents) < 2:
                    continue
                pairs = gen_candidates(sent, ents)
                for event_type in corpus.task_schema.event_types:
                    labels = label_pairs(pairs, list(corpus.events.values()), event_type)
                    preds = [(float(l.exists), float(l.forward)) for l in labels]
                    decoded = {
                        (e.source, e.target)
                        for e in decode_events(pairs, preds, event_type)
                    }
                    gold = {
                        (e.source, e.target)
                        for e in corpus.events.values()
                        if e.doc_id == doc.id
                        and e.type == event_type
                        and not e.cross_sentence
                        and corpus.entity(doc.id, e.source).sentence_index == sidx
                    }
                    assert decoded == gold, (doc.id, event_type)

    def test_bgi_fixture(self, bgi):
        self._round_trip(bgi)

    def test_bb_fixture(self):
        self._round_trip(fixtures.bb_corpus())

    def test_case_study_sentence_three_events(self, bgi):
        doc = next(d for d in bgi.documents if d.id == "PMID-10629188")
        ents = bgi.sentence_entities("PMID-10629188", 0)
        pairs = gen_candidates(doc.sentences[0], ents)
        decoded = []
        for event_type in bgi.task_schema.event_types:
            labels = label_pairs(pairs, list(bgi.events.values()), event_type)
            preds = [(float(l.exists), float(l.forward)) for l in labels]
            decoded.extend(decode_events(pairs, preds, event_type))
        got = {(e.type, e.source, e.target) for e in decoded}
        assert got == {
            ("ActionTarget", "T1", "T2"),
            ("Interaction", "T3", "T2"),
            ("Interaction", "T4", "T2"),
        }


class TestBuildPairSamples:
    def test_features_and_labels_align(self, bgi, table):
        rng = np.random.default_rng(0)
        arg_models = {
            role: vecent.new_argument_model(role, table.dim, 6, 5, rng=rng)
            for role in ("Action", "Target")
        }
        windows = vecent.build_entity_windows(bgi, 3, table)
        samples = build_pair_samples(bgi, "ActionTarget", arg_models, windows)
        positive = [s for s in samples if s.label.exists]
        assert len(positive) == 2  # both orderings of (T1, T2) in the case doc
        for s in samples:
            assert s.x.first_half.shape == (10,)

    def test_missing_model_is_configuration_error(self, bgi, table):
        from bioee.errors import ConfigurationError

        windows = vecent.build_entity_windows(bgi, 3, table)
        with pytest.raises(ConfigurationError):
            build_pair_samples(bgi, "ActionTarget", {}, windows)


class TestTypedFilter:
    def test_keeps_only_role_labeled_pairs(self, table):
        from bioee.corpus import BB_SCHEMA, corpus_from_documents

        text = "Vibrio lives in water and mud."
        a1 = (
            "T1\tBacteria 0 6\tVibrio\n"
            "T2\tLocation 16 21\twater\n"
            "T3\tOther 26 29\tmud\n"
        )
        corpus = corpus_from_documents([("D", text, a1, "", None, None)], BB_SCHEMA)
        doc = corpus.documents[0]
        pairs = gen_candidates(doc.sentences[0], corpus.sentence_entities("D", 0))
        kept = typed_filter(pairs, BB_SCHEMA, "Lives_In")
        assert {(p.first.id, p.second.id) for p in kept} == {("T1", "T2"), ("T2", "T1")}
