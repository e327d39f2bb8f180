import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagedtree import (
    CONTEXT_SPECIFIC,
    LOCAL,
    PARTIAL,
    SYMMETRIC,
    ModelError,
    Schema,
    StagedTree,
    Variable,
    aldag_to_json,
    classify_edge,
    compress,
    condition_hard,
    dependence_subtree,
    encode_bn,
    render_dot,
    saturated_tree,
)

from conftest import local_variant_tree, random_dataset, staging_from_ids


def edge_map(aldag):
    names = aldag.schema.names
    return {(names[e.parent], names[e.child]): e.label for e in aldag.edges}


class TestReferenceCompression:
    def test_exact_edges_and_labels(self, table_model):
        got = edge_map(compress(table_model))
        assert got == {
            ("Country", "Length"): PARTIAL,
            ("Country", "Income"): PARTIAL,
            ("Length", "Satisfaction"): SYMMETRIC,
            ("Income", "Satisfaction"): CONTEXT_SPECIFIC,
        }

    def test_local_variant_labels(self):
        got = edge_map(compress(local_variant_tree()))
        assert got[("Length", "Satisfaction")] == LOCAL
        assert got[("Income", "Satisfaction")] == LOCAL

    def test_full_independence_has_no_edges(self):
        schema = Schema((Variable("u", ("a", "b")), Variable("v", ("x", "y"))))
        stagings = (staging_from_ids(0, [0]), staging_from_ids(1, [0, 0]))
        tree = StagedTree(schema, (0, 1), stagings)
        assert compress(tree).edges == ()

    def test_saturated_tree_is_complete_and_symmetric(self):
        rng = np.random.default_rng(1)
        d = random_dataset(rng, p=3, n=400)
        # fitting is irrelevant for compression; the skeleton suffices
        skeleton = saturated_tree(d.schema, (2, 0, 1))
        graph = compress(skeleton)
        expected_pairs = {(2, 0), (2, 1), (0, 1)}
        assert {(e.parent, e.child) for e in graph.edges} == expected_pairs
        assert all(e.label == SYMMETRIC for e in graph.edges)

    def test_bn_with_distinct_rows_round_trips(self):
        rng = np.random.default_rng(5)
        schema = Schema(
            (Variable("A", ("a", "b")), Variable("B", ("x", "y")), Variable("C", ("u", "v")))
        )
        # rows chosen distinct so no accidental stage pooling occurs
        cpts = {
            "A": np.array([0.3, 0.7]),
            "B": np.array([[0.2, 0.8], [0.6, 0.4]]),
            "C": np.array([[[0.1, 0.9], [0.4, 0.6]], [[0.55, 0.45], [0.8, 0.2]]]),
        }
        parents = {"A": [], "B": ["A"], "C": ["A", "B"]}
        tree = encode_bn(schema, parents, cpts)
        graph = compress(tree)
        assert {(e.parent, e.child) for e in graph.edges} == {(0, 1), (0, 2), (1, 2)}
        assert all(e.label == SYMMETRIC for e in graph.edges)

    def test_edges_point_forward_in_the_ordering(self):
        from conftest import random_fitted_tree

        rng = np.random.default_rng(19)
        for _ in range(10):
            tree = random_fitted_tree(rng)
            position = {v: i for i, v in enumerate(tree.order)}
            for e in compress(tree).edges:
                assert position[e.parent] < position[e.child]

    def test_minimality_removable_predecessor_dropped(self):
        # staging of depth 2 ignores the first variable entirely
        schema = Schema(
            (Variable("A", ("a", "b")), Variable("B", ("x", "y")), Variable("C", ("u", "v")))
        )
        stagings = (
            staging_from_ids(0, [0]),
            staging_from_ids(1, [0, 1]),
            staging_from_ids(2, [0, 1, 0, 1]),  # contexts (A,B): depends on B only
        )
        tree = StagedTree(schema, (0, 1, 2), stagings)
        graph = compress(tree)
        assert graph.parents_of(2) == (1,)


class TestClassifyEdge:
    def test_partial_blocks(self):
        # four parent values staged {0,2} and {1,3}: proper two-element blocks
        grid = np.array([0, 1, 0, 1])
        label, detected = classify_edge(grid, 0)
        assert label == PARTIAL and detected == (PARTIAL,)

    def test_context_specific_full_block(self):
        # in context 0 the parent is irrelevant; in context 1 it matters
        grid = np.array([[0, 0], [1, 2]])
        label, detected = classify_edge(grid, 1)
        assert label == CONTEXT_SPECIFIC and detected == (CONTEXT_SPECIFIC,)

    def test_symmetric_all_singletons(self):
        grid = np.array([[0, 1], [2, 3]])
        assert classify_edge(grid, 0)[0] == SYMMETRIC
        assert classify_edge(grid, 1)[0] == SYMMETRIC

    def test_local_cross_component_equality(self):
        # stages equal only across a two-coordinate change
        grid = np.array([[0, 1], [2, 0]])
        assert classify_edge(grid, 0)[0] == LOCAL
        assert classify_edge(grid, 1)[0] == LOCAL

    def test_removable_axis_rejected(self):
        grid = np.array([[0, 1], [0, 1]])
        with pytest.raises(ModelError, match="removable"):
            classify_edge(grid, 0)

    def test_precedence_partial_beats_context_specific(self):
        # context 0: full block; context 1: proper pair among three values
        grid = np.array([[0, 0, 0], [1, 1, 2]])
        label, detected = classify_edge(grid, 1)
        assert label == PARTIAL
        assert set(detected) == {PARTIAL, CONTEXT_SPECIFIC}

    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_invariant_under_stage_relabeling(self, data):
        shape = data.draw(
            st.tuples(st.integers(2, 3), st.integers(2, 3)), label="shape"
        )
        cells = data.draw(
            st.lists(
                st.integers(0, 4), min_size=shape[0] * shape[1], max_size=shape[0] * shape[1]
            )
        )
        grid = np.array(cells).reshape(shape)
        axis = data.draw(st.integers(0, 1))
        reference = np.take(grid, [0], axis=axis)
        if bool((grid == reference).all()):
            return
        perm = data.draw(st.permutations(list(range(5))))
        relabeled = np.array(perm)[grid]
        assert classify_edge(grid, axis) == classify_edge(relabeled, axis)


class TestDependenceSubtree:
    def test_reference_satisfaction_projection(self, table_model):
        graph = compress(table_model)
        sub = dependence_subtree(table_model, graph, child=3)
        assert sub.parents == (1, 2)  # Length, Income in ordering positions
        stages = {sub.stage_and_probs((l, i))[0] for l in range(2) for i in range(2)}
        assert len(stages) == 3
        # (Low, High) and (Low, Low) pooled
        assert sub.stage_and_probs((1, 0))[0] == sub.stage_and_probs((1, 1))[0]

    def test_parentless_variable(self, table_model):
        graph = compress(table_model)
        sub = dependence_subtree(table_model, graph, child=0)
        assert sub.parents == ()
        sid, vec = sub.stage_and_probs(())
        assert vec.tolist() == [0.35, 0.25, 0.15, 0.25]

    def test_subtree_matches_full_tree_conditionals(self, table_model):
        graph = compress(table_model)
        sub = dependence_subtree(table_model, graph, child=3)
        schema = table_model.schema
        for l in range(2):
            for i in range(2):
                _, vec = sub.stage_and_probs((l, i))
                evidence = {
                    "Length": schema.variables[1].levels[l],
                    "Income": schema.variables[2].levels[i],
                }
                posterior = condition_hard(table_model, evidence).marginals["Satisfaction"]
                assert np.allclose(vec, posterior, atol=1e-12)

    def test_mismatched_aldag_rejected(self, table_model):
        # a saturated tree's graph gives Satisfaction three parents, not two
        other = compress(saturated_tree(table_model.schema, table_model.order))
        with pytest.raises(ModelError, match="does not match"):
            dependence_subtree(table_model, other, child=3)


class TestRendering:
    def test_aldag_dot_deterministic(self, table_model):
        graph = compress(table_model)
        assert render_dot(graph) == render_dot(graph)

    def test_empty_edge_set_renders_nodes_only(self):
        schema = Schema((Variable("u", ("a", "b")), Variable("v", ("x", "y"))))
        stagings = (staging_from_ids(0, [0]), staging_from_ids(1, [0, 0]))
        text = render_dot(compress(StagedTree(schema, (0, 1), stagings)))
        assert '"u"' in text and '"v"' in text and "->" not in text

    def test_reference_aldag_colors(self, table_model):
        text = render_dot(compress(table_model))
        assert "color=blue" in text  # partial
        assert "color=red" in text  # context-specific
        assert "color=black" in text  # symmetric

    def test_evidence_highlight_and_annotations(self, table_model):
        graph = compress(table_model)
        text = render_dot(graph, highlight={"Length"}, annotations={"Length": "p=0.4"})
        assert "gray80" in text and "p=0.4" in text

    def test_tree_and_subtree_render(self, table_model):
        tree_text = render_dot(table_model)
        assert tree_text.startswith("digraph staged_tree")
        sub = dependence_subtree(table_model, compress(table_model), child=3)
        sub_text = render_dot(sub)
        assert "stage" in sub_text

    def test_json_export(self, table_model):
        import json

        payload = json.loads(aldag_to_json(compress(table_model)))
        assert payload["format_version"] == 1
        labels = {(e["from"], e["to"]): e["label"] for e in payload["edges"]}
        assert labels[("Income", "Satisfaction")] == CONTEXT_SPECIFIC


class TestKParentsCompression:
    def test_in_degree_respects_budget(self):
        from stagedtree import kparents_learn

        rng = np.random.default_rng(77)
        schema = Schema(tuple(Variable(f"X{i}", ("a", "b")) for i in range(5)))
        rows = rng.integers(0, 2, size=(250, 5))
        from stagedtree import Dataset

        d = Dataset(schema, rows)
        for k in (1, 2):
            tree, _ = kparents_learn(d, tuple(range(5)), k=k)
            assert compress(tree).max_in_degree() <= k
