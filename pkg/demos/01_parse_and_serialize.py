#!/usr/bin/env python3
"""Walk through the AST front end: parse a Java method, inspect the
literal-free tree, and serialize it to the level-order token sequence
the models consume."""

from eyetrans.ast_core import bfs_serialize, export_ast, ingest_ast
from eyetrans.categories import CATEGORY_NAMES
from eyetrans.parser import parse_java_subset

SOURCE = """\
int findIndex(int[] xs, int n, int key) {
    for (int i = 0; i < n; i = i + 1) {
        if (xs[i] == key) {
            return i;
        }
    }
    return -1;
}
"""

print("source:\n" + SOURCE)

ast = parse_java_subset(SOURCE, method_id="find_index")
print(f"parsed {len(ast.nodes)} nodes, root = node {ast.root}\n")

# The tree is literal-free: the 'key' literal comparison keeps only a
# literal_placeholder node. Print it indented.

def show(nid, indent=0):
    node = ast.nodes[nid]
    print("  " * indent + f"[{nid:3d}] {CATEGORY_NAMES[node.category]}")
    for child in node.children:
        show(child, indent + 1)


show(ast.root)

seq = bfs_serialize(ast)
print("\nBFS sequence (first 12 tokens):")
for nid, cat, h in list(zip(seq.node_ids, seq.categories, seq.heights))[:12]:
    print(f"  node {nid:3d}  height {h}  {CATEGORY_NAMES[cat]}")

# Round trip through the exchange document format
doc = export_ast(ast)
again = ingest_ast(doc)
assert bfs_serialize(again).categories == seq.categories
print(f"\ndocument round-trip OK ({len(doc['nodes'])} records)")
