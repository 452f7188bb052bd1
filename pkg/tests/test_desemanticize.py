import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelsql.desemanticize import (
    MASK_TOKEN,
    build_matching_matrix,
    build_shift_matrix,
    desemanticize,
    fuse_relevance,
    make_skeleton,
    minmax_normalize,
    pos_vector,
    question_scores,
    schema_item_texts,
    schema_item_scores,
)
from skelsql.encoder import EncodeRequest, PosTag, PosTagging, ReferenceBackend
from skelsql.errors import ShapeMismatch
from skelsql.hyperbolic import poincare_distance, project_hyperbolic
from skelsql.spider import (
    DatabaseSchema,
    Example,
    ItemKind,
    SchemaItem,
    ValueStore,
    tokenize,
)


def toy_schema(db_id: str, tables: dict[str, list[str]]) -> DatabaseSchema:
    items = []
    table_ids = {}
    for name in tables:
        table_ids[name] = len(items)
        items.append(SchemaItem(len(items), ItemKind.TABLE, name, name))
    for name, cols in tables.items():
        for col in cols:
            items.append(
                SchemaItem(
                    len(items), ItemKind.COLUMN, col, col,
                    parent_table=table_ids[name], column_type="text",
                )
            )
    return DatabaseSchema(db_id=db_id, items=items)


def toy_example(text: str, db_id: str = "toy") -> Example:
    return Example(text, tokenize(text), "SELECT 1", db_id)


class CountingBackend(ReferenceBackend):
    def __init__(self):
        super().__init__()
        self.calls = 0

    def encode(self, req):
        self.calls += 1
        return super().encode(req)


class TestShiftMatrix:
    def test_trigram_free_token_row_is_zero(self):
        schema = toy_schema("toy", {"singer": ["name"]})
        ex = toy_example("names of singers")
        shift = build_shift_matrix(ex, schema, ReferenceBackend())
        assert np.all(shift[1] == 0.0)  # "of"

    def test_related_token_entry_positive(self):
        schema = toy_schema("toy", {"singer": ["name"]})
        ex = toy_example("names of singers")
        shift = build_shift_matrix(ex, schema, ReferenceBackend())
        name_idx = next(i.id for i in schema.items if i.name == "name")
        assert shift[0, name_idx] > 0.0

    def test_backend_called_q_plus_one_times(self):
        schema = toy_schema("toy", {"singer": ["name", "age"]})
        ex = toy_example("names of singers")
        backend = CountingBackend()
        build_shift_matrix(ex, schema, backend)
        assert backend.calls == len(ex.question_tokens) + 1

    def test_entries_match_primitive_recomputation(self):
        schema = toy_schema("toy", {"singer": ["name", "citizenship"]})
        ex = toy_example("what are the names of french singers ?")
        backend = ReferenceBackend()
        shift = build_shift_matrix(ex, schema, backend)

        tokens = tuple(ex.question_tokens)
        texts = tuple(schema_item_texts(schema))
        unmasked = backend.encode(EncodeRequest(tokens, texts, None))
        for i in range(len(tokens)):
            masked = backend.encode(EncodeRequest(tokens, texts, i))
            for j in range(len(texts)):
                expected = poincare_distance(
                    project_hyperbolic(masked.vectors[j]),
                    project_hyperbolic(unmasked.vectors[j]),
                )
                assert abs(shift[i, j] - expected) < 1e-12

    def test_nonnegative_finite(self, schemas, values, dev_examples, backend):
        ex = dev_examples[0]
        shift = build_shift_matrix(ex, schemas[ex.db_id], backend, values)
        assert np.all(shift >= 0.0)
        assert np.all(np.isfinite(shift))


def brute_force_matching(tokens, schema, value_sets):
    n_q, n_s = len(tokens), len(schema.items)
    out = np.zeros((n_q, n_s))
    for i in range(n_q):
        for j, item in enumerate(schema.items):
            words = item.name.split()
            name_hit = any(
                tokens[s : s + len(words)] == words and s <= i < s + len(words)
                for s in range(n_q)
            )
            value_hit = (
                item.kind is ItemKind.COLUMN and tokens[i] in value_sets.get(item.id, set())
            )
            out[i, j] = int(name_hit) + int(value_hit)
    return out


class TestMatchingMatrix:
    def make(self, question, tables, value_map):
        schema = toy_schema("toy", tables)
        store = ValueStore()
        ids = {}
        for item in schema.items:
            if item.kind is ItemKind.COLUMN:
                store.put("toy", item.id, set(value_map.get(item.name, set())))
                ids[item.name] = item.id
        ex = toy_example(question)
        return ex, schema, store, ids

    def test_value_only_match(self):
        ex, schema, store, ids = self.make(
            "show france", {"people": ["citizenship"]}, {"citizenship": {"france"}}
        )
        m = build_matching_matrix(ex, schema, store)
        assert m[1, ids["citizenship"]] == 1

    def test_name_only_match(self):
        ex, schema, store, ids = self.make(
            "concert name", {"concert": ["name"]}, {}
        )
        m = build_matching_matrix(ex, schema, store)
        assert m[1, ids["name"]] == 1

    def test_both_branches_score_two(self):
        ex, schema, store, ids = self.make(
            "show france", {"people": ["france"]}, {"france": {"france"}}
        )
        m = build_matching_matrix(ex, schema, store)
        assert m[1, ids["france"]] == 2

    def test_multiword_span_marks_every_member(self):
        ex, schema, store, _ = self.make(
            "list the singer id values", {"singer": ["singer id"]}, {}
        )
        m = build_matching_matrix(ex, schema, store)
        col = next(i.id for i in schema.items if i.name == "singer id")
        assert m[2, col] == 1 and m[3, col] == 1
        # the span also matches the table "singer" at token 2 only
        table = next(i.id for i in schema.items if i.name == "singer")
        assert m[2, table] == 1 and m[3, table] == 0

    def test_entries_in_zero_one_two(self, schemas, values, dev_examples):
        for ex in dev_examples:
            m = build_matching_matrix(ex, schemas[ex.db_id], values)
            assert set(np.unique(m)) <= {0.0, 1.0, 2.0}

    def test_matches_brute_force_on_toy_grid(self):
        rng = np.random.default_rng(42)
        vocab = ["name", "age", "france", "city", "show", "the", "of", "people",
                 "country", "id"]
        tables = {"people": ["name", "age", "country"], "city": ["id", "name",
                  "population", "mayor"]}
        schema = toy_schema("toy", tables)
        assert len(schema.items) == 9
        value_sets = {}
        store = ValueStore()
        for item in schema.items:
            if item.kind is ItemKind.COLUMN:
                chosen = set(rng.choice(vocab, size=3, replace=False).tolist())
                value_sets[item.id] = chosen
                store.put("toy", item.id, chosen)
        for _ in range(5):
            tokens = rng.choice(vocab, size=10, replace=True).tolist()
            ex = Example(" ".join(tokens), tokens, "SELECT 1", "toy")
            got = build_matching_matrix(ex, schema, store)
            expected = brute_force_matching(tokens, schema, value_sets)
            assert np.array_equal(got, expected)


class TestFuseRelevance:
    def test_arithmetic(self):
        # one entry normalizing to 0.2 combined with a match score of 2
        shift = np.array([[0.0, 0.2, 1.0]])
        match = np.array([[0.0, 2.0, 0.0]])
        fused = fuse_relevance(shift, match, beta=0.5)
        assert fused[0, 1] == pytest.approx(1.2, abs=1e-12)

    def test_beta_zero_gives_normalized_distances(self):
        rng = np.random.default_rng(1)
        shift = rng.uniform(size=(4, 3))
        match = rng.integers(0, 3, size=(4, 3)).astype(float)
        assert np.array_equal(fuse_relevance(shift, match, beta=0.0), minmax_normalize(shift))

    def test_degenerate_all_zero_distances(self):
        shift = np.zeros((2, 2))
        match = np.array([[1.0, 0.0], [2.0, 0.0]])
        assert np.array_equal(fuse_relevance(shift, match, beta=0.5), 0.5 * match)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            fuse_relevance(np.zeros((2, 2)), np.zeros((2, 3)), beta=0.5)

    def test_monotone_in_matches(self):
        rng = np.random.default_rng(2)
        shift = rng.uniform(size=(3, 3))
        match = rng.integers(0, 2, size=(3, 3)).astype(float)
        r_before = fuse_relevance(shift, match, beta=0.5)
        bumped = match.copy()
        bumped[1, 1] += 1
        r_after = fuse_relevance(shift, bumped, beta=0.5)
        assert np.all(r_after >= r_before)

    def test_rescaling_distances_preserves_normalization(self):
        rng = np.random.default_rng(3)
        shift = rng.uniform(size=(5, 4))
        a = minmax_normalize(shift)
        b = minmax_normalize(3.7 * shift)
        assert np.max(np.abs(a - b)) < 1e-12


class TestPosVector:
    def test_alpha_assignment(self):
        tags = PosTagging((PosTag.NOUN, PosTag.OTHER, PosTag.NUMBER))
        assert pos_vector(tags, alpha=0.9).tolist() == [0.9, 0.0, 0.9]

    def test_alpha_zero(self):
        tags = PosTagging((PosTag.NOUN, PosTag.NUMBER))
        assert pos_vector(tags, alpha=0.0).tolist() == [0.0, 0.0]

    def test_all_other(self):
        tags = PosTagging((PosTag.OTHER, PosTag.OTHER))
        assert pos_vector(tags, alpha=0.9).tolist() == [0.0, 0.0]


class TestQuestionScores:
    def test_direct_arithmetic(self):
        r = np.array([[0.4, 0.4]])
        p = np.array([0.9])
        assert question_scores(r, p)[0] == pytest.approx(0.65, abs=1e-12)

    def test_all_zero(self):
        assert np.array_equal(question_scores(np.zeros((3, 2)), np.zeros(3)), np.zeros(3))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            r = rng.uniform(size=(4, 3))
            p = rng.uniform(size=4)
            got = question_scores(r, p)
            for i in range(4):
                expected = 0.5 * (sum(r[i]) / 3 + p[i])
                assert abs(got[i] - expected) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            question_scores(np.zeros((2, 2)), np.zeros(3))


class TestSkeleton:
    def example(self):
        return toy_example("what are the names of the singers ?")

    def test_tau_above_any_score_keeps_question(self):
        ex = self.example()
        scores = np.full(len(ex.question_tokens), 1.0)
        skel = make_skeleton(ex, scores, tau=1.9)
        assert skel.tokens == ex.question_tokens
        assert skel.masked_positions == frozenset()

    def test_tau_zero_masks_everything(self):
        ex = self.example()
        scores = np.zeros(len(ex.question_tokens))
        skel = make_skeleton(ex, scores, tau=0.0)
        assert all(t == MASK_TOKEN for t in skel.tokens)
        assert skel.masked_positions == frozenset(range(len(ex.question_tokens)))

    def test_per_token_masks_no_collapsing(self):
        ex = toy_example("a b c")
        skel = make_skeleton(ex, np.array([0.9, 0.9, 0.1]), tau=0.5)
        assert skel.tokens == [MASK_TOKEN, MASK_TOKEN, "c"]

    def test_length_preserved(self):
        ex = self.example()
        rng = np.random.default_rng(6)
        skel = make_skeleton(ex, rng.uniform(size=len(ex.question_tokens)), tau=0.5)
        assert len(skel.tokens) == len(ex.question_tokens)

    @given(
        scores=st.lists(st.floats(0, 2), min_size=3, max_size=3),
        taus=st.tuples(st.floats(0, 1), st.floats(0, 1)),
    )
    @settings(max_examples=100, deadline=None)
    def test_mask_set_shrinks_as_tau_grows(self, scores, taus):
        ex = toy_example("one two three")
        t1, t2 = min(taus), max(taus)
        low = make_skeleton(ex, np.array(scores), tau=t1)
        high = make_skeleton(ex, np.array(scores), tau=t2)
        assert high.masked_positions <= low.masked_positions


class TestSchemaItemScores:
    def test_column_max_rule(self):
        r = np.array([[0.1, 0.0], [1.2, 0.4], [0.3, 0.2]])
        scores = schema_item_scores(r)
        assert scores[0] == 1.0 and scores[1] == 0.0

    def test_single_item_degenerates_to_zero(self):
        assert schema_item_scores(np.array([[0.7], [0.9]]))[0] == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            r = rng.uniform(size=(5, 4))
            got = schema_item_scores(r)
            per_item = [max(r[i][j] for i in range(5)) for j in range(4)]
            lo, hi = min(per_item), max(per_item)
            expected = [(v - lo) / (hi - lo) if hi > lo else 0.0 for v in per_item]
            assert np.max(np.abs(got - np.array(expected))) == 0.0


class TestDesemanticizePipeline:
    def test_fig_sentence_masks_schema_words(self, schemas, values, dev_examples, backend):
        ex = dev_examples[1]
        assert ex.question_text == "What are the names of the singers who are not French?"
        skeleton, bundle = desemanticize(ex, schemas[ex.db_id], backend, values)
        assert skeleton.text == "what are the [MASK] of the [MASK] who are not [MASK] ?"
        masked_words = {ex.question_tokens[i] for i in skeleton.masked_positions}
        assert masked_words == {"names", "singers", "french"}

    def test_zero_shift_token_retained(self, schemas, values, backend):
        # "of" produces no representation shift and is a function word, so any
        # positive threshold keeps it
        ex = Example("names of singers", tokenize("names of singers"), "SELECT 1",
                     "concert_singer")
        skeleton, bundle = desemanticize(
            ex, schemas["concert_singer"], backend, values, tau=0.05
        )
        of_pos = ex.question_tokens.index("of")
        assert np.all(bundle.shift[of_pos] == 0.0)
        assert of_pos not in skeleton.masked_positions

    def test_bundle_shapes_consistent(self, schemas, values, dev_examples, backend):
        ex = dev_examples[0]
        schema = schemas[ex.db_id]
        _, bundle = desemanticize(ex, schema, backend, values)
        n_q, n_s = len(ex.question_tokens), len(schema.items)
        assert bundle.shift.shape == (n_q, n_s)
        assert bundle.match.shape == (n_q, n_s)
        assert bundle.relevance.shape == (n_q, n_s)
        assert bundle.pos_prior.shape == (n_q,)
        assert bundle.token_scores.shape == (n_q,)
        assert bundle.item_scores.shape == (n_s,)
        assert np.all(bundle.item_scores >= 0.0) and np.all(bundle.item_scores <= 1.0)

    def test_rescaled_distances_leave_skeleton_unchanged(self, schemas, values,
                                                         dev_examples, backend):
        ex = dev_examples[1]
        schema = schemas[ex.db_id]
        shift = build_shift_matrix(ex, schema, backend, values)
        match = build_matching_matrix(ex, schema, values)
        tags = backend.pos_tag(ex.question_tokens)
        p = pos_vector(tags, 0.9)

        def skeleton_for(matrix):
            r = fuse_relevance(matrix, match, 0.5)
            return make_skeleton(ex, question_scores(r, p), 0.6).tokens

        assert skeleton_for(shift) == skeleton_for(100.0 * shift)
