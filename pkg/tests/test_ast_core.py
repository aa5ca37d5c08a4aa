"""Parser, ingestion, and BFS serialization tests.

The small-method oracles were drawn by hand: token indices are node ids,
so the expected trees are written out token by token.
"""

import numpy as np
import pytest

from eyetrans.ast_core import (MAX_TOKENS, Ast, AstNode, bfs_serialize,
                               export_ast, ingest_ast, validate_ast)
from eyetrans.categories import (CATEGORY_NAMES, CATEGORY_PRIORITY,
                                 category_id, category_name, resolve_category)
from eyetrans.errors import SourceSyntaxError, TooLarge, ValidationError
from eyetrans.parser import parse_java_subset, parse_with_layout, tokenize


def cat_of(ast, nid):
    return category_name(ast.nodes[nid].category)


def ancestors(ast, nid):
    parent = {}
    for node in ast.nodes.values():
        for c in node.children:
            parent[c] = node.node_id
    chain = []
    while nid in parent:
        nid = parent[nid]
        chain.append(nid)
    return chain


class TestTaxonomy:
    def test_exactly_19_categories(self):
        assert len(CATEGORY_NAMES) == 19
        assert len(set(CATEGORY_NAMES)) == 19

    def test_ids_are_contiguous_bijection(self):
        for i, name in enumerate(CATEGORY_NAMES):
            assert category_id(name) == i
            assert category_name(i) == name

    def test_priority_table_covers_all(self):
        assert sorted(CATEGORY_PRIORITY) == sorted(CATEGORY_NAMES)

    def test_unknown_roles_fall_back_to_other(self):
        assert resolve_category({"mystery"}) == "other"
        assert resolve_category(set()) == "other"

    def test_declaration_beats_operator(self):
        assert resolve_category({"operator", "variable_declaration"}) == "variable_declaration"
        assert resolve_category({"operator", "assignment"}) == "assignment"
        assert resolve_category({"argument", "variable_use"}) == "argument"


class TestParseSimpleMethod:
    # tokens: int(0) f(1) ( (2) int(3) x(4) ) (5) { (6) return(7) x(8) ; (9) } (10)
    SOURCE = "int f(int x){return x;}"

    def test_root_is_method_declaration(self):
        ast = parse_java_subset(self.SOURCE)
        assert ast.root == 1
        assert cat_of(ast, 1) == "method_declaration"

    def test_parameter_and_return_are_descendants(self):
        ast = parse_java_subset(self.SOURCE)
        cats = {cat_of(ast, nid) for nid in ast.nodes}
        assert "parameter" in cats
        assert "return_statement" in cats
        assert 1 in ancestors(ast, 4)  # parameter x under the root
        assert 1 in ancestors(ast, 7)  # return under the root

    def test_hand_drawn_tree_shape(self):
        ast = parse_java_subset(self.SOURCE)
        assert ast.nodes[1].children == [0, 2, 4, 5, 6]
        assert ast.nodes[4].children == [3]
        assert ast.nodes[6].children == [7, 10]
        assert ast.nodes[7].children == [8, 9]
        assert cat_of(ast, 0) == "type_reference"
        assert cat_of(ast, 8) == "variable_use"

    def test_bfs_order_and_heights(self):
        seq = bfs_serialize(parse_java_subset(self.SOURCE))
        assert seq.node_ids == [1, 0, 2, 4, 5, 6, 3, 7, 10, 8, 9]
        assert seq.heights == [0, 1, 1, 1, 1, 1, 2, 2, 2, 3, 3]

    def test_empty_input_is_syntax_error(self):
        with pytest.raises(SourceSyntaxError):
            parse_java_subset("")

    def test_error_carries_position(self):
        with pytest.raises(SourceSyntaxError) as err:
            parse_java_subset("int f(int x){return x;")
        assert err.value.line >= 1

    def test_unsupported_construct_rejected(self):
        with pytest.raises(SourceSyntaxError):
            parse_java_subset("int f(){int[] a = new int[3]; return 0;}")


class TestCategoryRules:
    def test_equals_in_declaration_is_variable_declaration(self):
        # int x = 5;   tokens: int f ( ) { int(5) x(6) =(7) 5(8) ; }
        ast = parse_java_subset("int f(){int x = 5; return x;}")
        eq_nodes = [nid for nid in ast.nodes
                    if cat_of(ast, nid) == "variable_declaration"]
        # both the declared name and the '=' carry the declaration label
        assert len(eq_nodes) == 2

    def test_plain_reassignment_is_assignment(self):
        ast = parse_java_subset("int f(int x){x = 3; return x;}")
        assert "assignment" in {cat_of(ast, nid) for nid in ast.nodes}

    def test_loop_brace_is_loop_body(self):
        ast = parse_java_subset("int f(int n){while(n > 0){n = n - 1;} return n;}")
        cats = {cat_of(ast, nid) for nid in ast.nodes}
        assert "loop_body" in cats
        assert "loop_statement" in cats

    def test_if_brace_is_conditional_block(self):
        ast = parse_java_subset("int f(int n){if(n > 0){return n;} return 0;}")
        cats = {cat_of(ast, nid) for nid in ast.nodes}
        assert "conditional_block" in cats
        assert "conditional_statement" in cats

    def test_if_inside_for_has_loop_body_ancestor(self):
        src = "int f(int n){for(int i = 0; i < n; i = i + 1){if(i > 2){return i;}} return 0;}"
        ast = parse_java_subset(src)
        if_nodes = [nid for nid in ast.nodes
                    if cat_of(ast, nid) == "conditional_statement"]
        assert if_nodes
        chain_cats = {cat_of(ast, a) for a in ancestors(ast, if_nodes[0])}
        assert "loop_body" in chain_cats

    def test_literals_become_placeholders(self):
        ast = parse_java_subset('int f(){String s = "hello"; return 0;}')
        assert "literal_placeholder" in {cat_of(ast, nid) for nid in ast.nodes}

    def test_call_and_arguments(self):
        ast = parse_java_subset("int f(int a, int b){return Math.max(a, b);}")
        cats = [cat_of(ast, nid) for nid in sorted(ast.nodes)]
        assert "method_call" in cats
        assert "field_access" in cats
        assert cats.count("argument") == 2


class TestParserInvariants:
    def test_deterministic(self):
        src = "int f(int n){int s = 0; for(int i = 0; i < n; i = i + 1){s = s + i;} return s;}"
        a1 = parse_java_subset(src)
        a2 = parse_java_subset(src)
        assert export_ast(a1) == export_ast(a2)

    def test_every_token_is_a_node(self):
        src = "int f(int a, int b){if(a < b){return a;} return b;}"
        ast, spans = parse_with_layout(src)
        assert len(ast.nodes) == len(tokenize(src))
        assert {s.node_id for s in spans} == set(ast.nodes)

    def test_bfs_covers_each_node_once(self):
        src = "int f(int n){while(n > 1){n = n / 2;} return n;}"
        ast = parse_java_subset(src)
        seq = bfs_serialize(ast)
        assert sorted(seq.node_ids) == sorted(ast.nodes)
        assert len(seq.node_ids) == len(set(seq.node_ids))
        assert len(seq.node_ids) == len(seq.categories) == len(seq.heights)

    def test_heights_equal_root_path_length(self):
        src = "int f(int n){if(n > 0){if(n > 1){return 2;}} return 0;}"
        ast = parse_java_subset(src)
        for nid, node in ast.nodes.items():
            assert node.height == len(ancestors(ast, nid))

    def test_too_many_tokens_rejected(self):
        body = "".join(f"int v{i} = {i}; " for i in range(60))
        with pytest.raises(TooLarge):
            parse_java_subset("int f(){" + body + "return 0;}")


def doc_of(nodes, root=0, method_id="m"):
    return {"method_id": method_id, "root": root,
            "nodes": [{"id": i, "category": c, "children": ch}
                      for i, c, ch in nodes]}


class TestIngest:
    def test_single_node(self):
        ast = ingest_ast(doc_of([(0, "other", [])]))
        assert len(ast) == 1
        assert ast.nodes[0].height == 0

    def test_bfs_example_tree(self):
        # a(0) -> (b(1), c(2)), b -> (d(3))
        ast = ingest_ast(doc_of([(0, "other", [1, 2]), (1, "other", [3]),
                                 (2, "other", []), (3, "other", [])]))
        seq = bfs_serialize(ast)
        assert seq.node_ids == [0, 1, 2, 3]
        assert seq.heights == [0, 1, 1, 2]

    def test_permuted_child_order_changes_bfs(self):
        ast = ingest_ast(doc_of([(0, "other", [2, 1]), (1, "other", [3]),
                                 (2, "other", []), (3, "other", [])]))
        assert bfs_serialize(ast).node_ids == [0, 2, 1, 3]

    def test_cycle_rejected(self):
        with pytest.raises(ValidationError, match="parent|cycle"):
            ingest_ast(doc_of([(0, "other", [1]), (1, "other", [0])]))

    def test_orphan_rejected(self):
        with pytest.raises(ValidationError, match="unreachable|orphan"):
            ingest_ast(doc_of([(0, "other", []), (1, "other", [])]))

    def test_unknown_category_rejected(self):
        with pytest.raises(ValidationError, match="category"):
            ingest_ast(doc_of([(0, "spaceship", [])]))

    def test_duplicate_id_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            ingest_ast(doc_of([(0, "other", []), (0, "other", [])]))

    def test_201_nodes_too_large(self):
        n = MAX_TOKENS + 1
        nodes = [(0, "other", list(range(1, n)))]
        nodes += [(i, "other", []) for i in range(1, n)]
        with pytest.raises(TooLarge):
            ingest_ast(doc_of(nodes))

    def test_depth_beyond_50_rejected(self):
        n = 52  # chain depth 51
        nodes = [(i, "other", [i + 1] if i + 1 < n else []) for i in range(n)]
        with pytest.raises(ValidationError, match="height"):
            ingest_ast(doc_of(nodes))

    def test_heights_recomputed_not_trusted(self):
        doc = doc_of([(0, "other", [1]), (1, "other", [])])
        doc["nodes"][1]["height"] = 40  # ignored
        ast = ingest_ast(doc)
        assert ast.nodes[1].height == 1


def random_tree_doc(rng, n_nodes):
    """Random rooted tree: node i attaches under a random earlier node."""
    children = {i: [] for i in range(n_nodes)}
    for i in range(1, n_nodes):
        children[int(rng.integers(i))].append(i)
    for i in range(n_nodes):
        rng.shuffle(children[i])
    cats = [CATEGORY_NAMES[int(rng.integers(19))] for _ in range(n_nodes)]
    return doc_of([(i, cats[i], children[i]) for i in range(n_nodes)])


class TestRoundTrip:
    def test_ingest_export_identity_randomized(self):
        rng = np.random.default_rng(2024)
        for trial in range(200):
            doc = random_tree_doc(rng, int(rng.integers(1, 40)))
            ast = ingest_ast(doc)
            doc2 = export_ast(ast)
            ast2 = ingest_ast(doc2)
            assert export_ast(ast2) == doc2
            assert bfs_serialize(ast).node_ids == bfs_serialize(ast2).node_ids

    def test_parse_export_ingest_matches(self):
        src = "int f(int a){if(a > 0){a = a - 1;} return a;}"
        ast = parse_java_subset(src)
        ast2 = ingest_ast(export_ast(ast))
        assert bfs_serialize(ast).categories == bfs_serialize(ast2).categories
        assert bfs_serialize(ast).heights == bfs_serialize(ast2).heights
