"""Semantic category taxonomy for AST tokens.

Every AST node carries exactly one of 19 categories describing its
syntactic role. A single concrete token can play several roles at once
(the ``=`` of ``int x = 5;`` is an operator *and* part of a variable
declaration); ``resolve_category`` picks the winner from an explicit
priority table so labeling is deterministic. Declaration roles outrank
control flow, which outranks call/argument roles, which outrank plain
operators; structureless roles come last.

The taxonomy is a module-level table so an alternate category set can be
swapped in without touching the parser.
"""

from __future__ import annotations

# Canonical order fixes the category ids (0..18). Order matters: it is the
# id assignment, not the priority.
CATEGORY_NAMES = (
    "method_declaration",
    "variable_declaration",
    "conditional_statement",
    "conditional_block",
    "loop_statement",
    "loop_body",
    "return_statement",
    "method_call",
    "argument",
    "parameter",
    "operator",
    "literal_placeholder",
    "variable_use",
    "type_reference",
    "assignment",
    "field_access",
    "array_access",
    "block_delimiter",
    "other",
)

N_CATEGORIES = len(CATEGORY_NAMES)

CATEGORY_IDS = {name: i for i, name in enumerate(CATEGORY_NAMES)}

# Highest priority first. Resolution scans this list and returns the first
# role present on the token.
CATEGORY_PRIORITY = (
    "method_declaration",
    "variable_declaration",
    "parameter",
    "conditional_statement",
    "conditional_block",
    "loop_statement",
    "loop_body",
    "return_statement",
    "method_call",
    "argument",
    "assignment",
    "field_access",
    "array_access",
    "type_reference",
    "literal_placeholder",
    "variable_use",
    "operator",
    "block_delimiter",
    "other",
)

_PRIORITY_RANK = {name: i for i, name in enumerate(CATEGORY_PRIORITY)}


def category_id(name: str) -> int:
    """Map a canonical category name to its id, raising KeyError if unknown."""
    return CATEGORY_IDS[name]


def category_name(cid: int) -> str:
    return CATEGORY_NAMES[cid]


def is_category(name: str) -> bool:
    return name in CATEGORY_IDS


def resolve_category(roles) -> str:
    """Pick the single category for a token from its set of roles.

    Unknown or empty role sets fall back to ``other``.
    """
    best = None
    best_rank = len(CATEGORY_PRIORITY)
    for role in roles:
        rank = _PRIORITY_RANK.get(role)
        if rank is not None and rank < best_rank:
            best = role
            best_rank = rank
    return best if best is not None else "other"
