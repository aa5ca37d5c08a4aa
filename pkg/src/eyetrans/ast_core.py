"""Literal-free AST container, validation, and BFS serialization.

An :class:`Ast` stores only node ids, semantic categories, and child order.
Token literals never survive parsing or ingestion; a literal shows up as a
``literal_placeholder`` node. Heights are always recomputed from the tree
(depth from root, root = 0) and never trusted from input documents.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .categories import CATEGORY_IDS, category_id
from .errors import TooLarge, ValidationError

MAX_TOKENS = 200
MAX_HEIGHT = 50

DOCUMENT_FORMAT_VERSION = 1


@dataclass
class AstNode:
    node_id: int
    category: int  # category id, 0..18
    children: list[int] = field(default_factory=list)
    height: int = 0


@dataclass
class Ast:
    method_id: str
    root: int
    nodes: dict[int, AstNode]
    label_class: int | None = None
    summary_text: str | None = None
    summary_tokens: list[int] | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> AstNode:
        return self.nodes[node_id]


@dataclass
class TokenSequence:
    """Level-order view of an Ast: three parallel lists."""

    node_ids: list[int]
    categories: list[int]
    heights: list[int]

    def __len__(self) -> int:
        return len(self.node_ids)

    def index_of(self, node_id: int) -> int:
        return self.node_ids.index(node_id)


def recompute_heights(ast: Ast) -> None:
    """Set every node's height to its distance from the root."""
    ast.nodes[ast.root].height = 0
    queue = deque([ast.root])
    while queue:
        nid = queue.popleft()
        h = ast.nodes[nid].height
        for child in ast.nodes[nid].children:
            ast.nodes[child].height = h + 1
            queue.append(child)


def validate_ast(ast: Ast) -> Ast:
    """Enforce every structural invariant; raise on the first violation.

    Checks: node budget, root presence, single parent per node, no cycles,
    full reachability from the root, and the height cap.
    """
    if len(ast.nodes) > MAX_TOKENS:
        raise TooLarge(
            f"{ast.method_id}: {len(ast.nodes)} nodes exceeds the {MAX_TOKENS}-token cap"
        )
    if not ast.nodes:
        raise ValidationError(f"{ast.method_id}: empty node set")
    if ast.root not in ast.nodes:
        raise ValidationError(f"{ast.method_id}: root id {ast.root} not among nodes")

    parent_seen: dict[int, int] = {}
    for node in ast.nodes.values():
        for child in node.children:
            if child not in ast.nodes:
                raise ValidationError(
                    f"{ast.method_id}: node {node.node_id} lists unknown child {child}"
                )
            if child in parent_seen:
                raise ValidationError(
                    f"{ast.method_id}: node {child} has two parents "
                    f"({parent_seen[child]} and {node.node_id}); cycle or DAG"
                )
            parent_seen[child] = node.node_id
    if ast.root in parent_seen:
        raise ValidationError(f"{ast.method_id}: root {ast.root} has a parent (cycle)")

    # Reachability: with unique parents and a parentless root, a full sweep
    # from the root also rules out cycles among the reached nodes.
    reached = set()
    queue = deque([ast.root])
    while queue:
        nid = queue.popleft()
        if nid in reached:
            raise ValidationError(f"{ast.method_id}: cycle through node {nid}")
        reached.add(nid)
        queue.extend(ast.nodes[nid].children)
    if reached != set(ast.nodes):
        orphans = sorted(set(ast.nodes) - reached)
        raise ValidationError(
            f"{ast.method_id}: nodes {orphans} unreachable from root (orphans)"
        )

    recompute_heights(ast)
    max_h = max(n.height for n in ast.nodes.values())
    if max_h > MAX_HEIGHT:
        raise ValidationError(
            f"{ast.method_id}: height {max_h} exceeds the {MAX_HEIGHT} cap"
        )
    return ast


def bfs_serialize(ast: Ast) -> TokenSequence:
    """Level-order traversal from the root, children in stored order."""
    node_ids: list[int] = []
    categories: list[int] = []
    heights: list[int] = []
    queue = deque([ast.root])
    while queue:
        nid = queue.popleft()
        node = ast.nodes[nid]
        node_ids.append(nid)
        categories.append(node.category)
        heights.append(node.height)
        queue.extend(node.children)
    return TokenSequence(node_ids, categories, heights)


def ingest_ast(document: dict) -> Ast:
    """Build and validate an Ast from a JSON-style document.

    Document schema: ``{"method_id", "nodes": [{"id", "category",
    "children": [...]}], "root", "label_class"?, "summary"?}``. Category
    names are the canonical lowercase snake_case labels. Heights are
    recomputed, never read.
    """
    if not isinstance(document, dict):
        raise ValidationError("document is not an object")
    for key in ("method_id", "nodes", "root"):
        if key not in document:
            raise ValidationError(f"document missing required key '{key}'")

    nodes: dict[int, AstNode] = {}
    for rec in document["nodes"]:
        nid = rec.get("id")
        if not isinstance(nid, int) or nid < 0:
            raise ValidationError(f"bad node id {nid!r}: must be a non-negative integer")
        if nid in nodes:
            raise ValidationError(f"duplicate node id {nid}")
        cat = rec.get("category")
        if cat not in CATEGORY_IDS:
            raise ValidationError(f"node {nid}: unknown category {cat!r}")
        children = rec.get("children", [])
        if not isinstance(children, list):
            raise ValidationError(f"node {nid}: children must be a list")
        nodes[nid] = AstNode(nid, category_id(cat), list(children))

    ast = Ast(
        method_id=str(document["method_id"]),
        root=document["root"],
        nodes=nodes,
        label_class=document.get("label_class"),
        summary_text=document.get("summary"),
    )
    return validate_ast(ast)


def export_ast(ast: Ast) -> dict:
    """Serialize an Ast back to the document format (inverse of ingest)."""
    from .categories import CATEGORY_NAMES

    doc = {
        "format_version": DOCUMENT_FORMAT_VERSION,
        "method_id": ast.method_id,
        "root": ast.root,
        "nodes": [
            {
                "id": nid,
                "category": CATEGORY_NAMES[ast.nodes[nid].category],
                "children": list(ast.nodes[nid].children),
            }
            for nid in sorted(ast.nodes)
        ],
    }
    if ast.label_class is not None:
        doc["label_class"] = ast.label_class
    if ast.summary_text is not None:
        doc["summary"] = ast.summary_text
    return doc


def copy_ast(ast: Ast) -> Ast:
    """Deep copy, cheap enough for augmentation fan-out."""
    return Ast(
        method_id=ast.method_id,
        root=ast.root,
        nodes={
            nid: AstNode(n.node_id, n.category, list(n.children), n.height)
            for nid, n in ast.nodes.items()
        },
        label_class=ast.label_class,
        summary_text=ast.summary_text,
        summary_tokens=list(ast.summary_tokens) if ast.summary_tokens else None,
    )
