"""Recursive-descent parser for a single-method Java subset.

Supported grammar: one method declaration with typed parameters, blocks,
variable declarations, assignments, ``if``/``else``, ``for``, ``while``,
``return``, calls, field/array access, and the usual binary/unary
operators. No generics, lambdas, casts, or class context.

Every source token becomes exactly one AST node (so gaze bounding boxes
have a one-to-one anchor), and node ids are token indices in source
order, which keeps ids stable under later subtree permutation. Literal
text is discarded at parse time; only the ``literal_placeholder``
category survives.

Tokens can play several syntactic roles at once; the parser records the
role *set* and ``assign_semantic_categories`` resolves each set through
the priority table in :mod:`eyetrans.categories`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .ast_core import MAX_TOKENS, Ast, AstNode, validate_ast
from .errors import SourceSyntaxError, TooLarge

KEYWORDS = {"if", "else", "for", "while", "return"}
LITERAL_KEYWORDS = {"true", "false", "null"}

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>//[^\n]*|/\*.*?\*/)
    | (?P<number>\d+\.\d+[fF]?|\d+[lLfF]?|\.\d+[fF]?)
    | (?P<string>"(?:\\.|[^"\\])*")
    | (?P<char>'(?:\\.|[^'\\])')
    | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<punct>\+\+|--|\+=|-=|\*=|/=|%=|==|!=|<=|>=|&&|\|\||[-+*/%<>=!.,;(){}\[\]])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class Token:
    index: int
    kind: str  # ident | number | string | char | punct
    text: str
    row: int
    col: int

    @property
    def length(self) -> int:
        return len(self.text)


@dataclass
class TokenSpan:
    """Screen-layout anchor for one AST node."""

    node_id: int
    row: int
    col: int
    length: int


@dataclass
class ParseNode:
    """Raw parse tree node: one token plus its syntactic role set."""

    token: Token
    roles: set[str] = field(default_factory=set)
    children: list["ParseNode"] = field(default_factory=list)


def tokenize(source: str) -> list[Token]:
    """Rows and columns are 0-based; error positions report 1-based lines."""
    tokens: list[Token] = []
    pos = 0
    row, col = 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise SourceSyntaxError(f"unexpected character {source[pos]!r}", row + 1, col)
        text = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(len(tokens), kind, text, row, col))
        newlines = text.count("\n")
        if newlines:
            row += newlines
            col = len(text) - text.rfind("\n") - 1
        else:
            col += len(text)
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing -------------------------------------------------

    def _peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def _at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def _error(self, message: str) -> SourceSyntaxError:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            row = last.row if last else 0
            col = last.col + last.length if last else 0
            return SourceSyntaxError(f"{message}, found end of input", row + 1, col)
        return SourceSyntaxError(f"{message}, found {tok.text!r}", tok.row + 1, tok.col)

    def _advance(self) -> Token:
        tok = self._peek()
        if tok is None:
            raise self._error("unexpected end of input")
        self.pos += 1
        return tok

    def _expect(self, text: str) -> Token:
        tok = self._peek()
        if tok is None or tok.text != text:
            raise self._error(f"expected {text!r}")
        return self._advance()

    def _expect_ident(self, what: str) -> Token:
        tok = self._peek()
        if tok is None or tok.kind != "ident" or tok.text in KEYWORDS:
            raise self._error(f"expected {what}")
        return self._advance()

    def _check(self, text: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.text == text

    # -- grammar --------------------------------------------------------

    def parse_method(self) -> ParseNode:
        type_node = self._parse_type()
        name = self._expect_ident("method name")
        root = ParseNode(name, {"method_declaration"})
        root.children.append(type_node)
        root.children.append(ParseNode(self._expect("("), {"block_delimiter"}))
        if not self._check(")"):
            while True:
                root.children.append(self._parse_param())
                if self._check(","):
                    root.children.append(
                        ParseNode(self._advance(), {"block_delimiter"})
                    )
                else:
                    break
        root.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))
        root.children.append(self._parse_block("block_delimiter"))
        if not self._at_end():
            raise self._error("expected end of method")
        return root

    def _parse_type(self) -> ParseNode:
        base = self._expect_ident("type name")
        node = ParseNode(base, {"type_reference"})
        while self._check("["):
            node.children.append(ParseNode(self._advance(), {"block_delimiter"}))
            node.children.append(ParseNode(self._expect("]"), {"block_delimiter"}))
        return node

    def _parse_param(self) -> ParseNode:
        type_node = self._parse_type()
        name = self._expect_ident("parameter name")
        node = ParseNode(name, {"parameter"})
        node.children.append(type_node)
        return node

    def _parse_block(self, brace_role: str) -> ParseNode:
        """brace_role: block_delimiter | conditional_block | loop_body."""
        node = ParseNode(self._expect("{"), {brace_role})
        while not self._check("}"):
            if self._at_end():
                raise self._error("expected '}'")
            node.children.append(self._parse_statement())
        node.children.append(ParseNode(self._expect("}"), {"block_delimiter"}))
        return node

    def _parse_statement(self) -> ParseNode:
        tok = self._peek()
        if tok is None:
            raise self._error("expected statement")
        if tok.text == "{":
            return self._parse_block("block_delimiter")
        if tok.text == "if":
            return self._parse_if()
        if tok.text == "for":
            return self._parse_for()
        if tok.text == "while":
            return self._parse_while()
        if tok.text == "return":
            return self._parse_return()
        if tok.text in KEYWORDS:
            raise self._error("unsupported statement keyword")
        if self._looks_like_decl():
            return self._parse_var_decl(consume_semi=True)
        expr = self._parse_expression()
        expr.children.append(ParseNode(self._expect(";"), {"block_delimiter"}))
        return expr

    def _looks_like_decl(self) -> bool:
        # IDENT IDENT, or IDENT '[' ']' IDENT: a type followed by a name.
        t0, t1 = self._peek(0), self._peek(1)
        if t0 is None or t0.kind != "ident" or t0.text in KEYWORDS:
            return False
        if t1 is not None and t1.kind == "ident" and t1.text not in KEYWORDS:
            return True
        if t1 is not None and t1.text == "[":
            t2, t3 = self._peek(2), self._peek(3)
            return (
                t2 is not None
                and t2.text == "]"
                and t3 is not None
                and t3.kind == "ident"
            )
        return False

    def _parse_var_decl(self, consume_semi: bool) -> ParseNode:
        type_node = self._parse_type()
        name = self._expect_ident("variable name")
        node = ParseNode(name, {"variable_declaration"})
        node.children.append(type_node)
        if self._check("="):
            # The '=' of a declaration carries the declaration role too;
            # the priority table makes that role win over 'operator'.
            eq = ParseNode(self._advance(), {"operator", "variable_declaration"})
            eq.children.append(self._parse_expression())
            node.children.append(eq)
        if consume_semi:
            node.children.append(ParseNode(self._expect(";"), {"block_delimiter"}))
        return node

    def _parse_if(self) -> ParseNode:
        node = ParseNode(self._expect("if"), {"conditional_statement"})
        node.children.append(ParseNode(self._expect("("), {"block_delimiter"}))
        node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))
        node.children.append(self._parse_branch("conditional_block"))
        if self._check("else"):
            else_node = ParseNode(self._advance(), {"conditional_statement"})
            else_node.children.append(self._parse_branch("conditional_block"))
            node.children.append(else_node)
        return node

    def _parse_branch(self, brace_role: str) -> ParseNode:
        if self._check("{"):
            return self._parse_block(brace_role)
        return self._parse_statement()

    def _parse_while(self) -> ParseNode:
        node = ParseNode(self._expect("while"), {"loop_statement"})
        node.children.append(ParseNode(self._expect("("), {"block_delimiter"}))
        node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))
        node.children.append(self._parse_branch("loop_body"))
        return node

    def _parse_for(self) -> ParseNode:
        node = ParseNode(self._expect("for"), {"loop_statement"})
        node.children.append(ParseNode(self._expect("("), {"block_delimiter"}))
        if not self._check(";"):
            if self._looks_like_decl():
                node.children.append(self._parse_var_decl(consume_semi=False))
            else:
                node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(";"), {"block_delimiter"}))
        if not self._check(";"):
            node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(";"), {"block_delimiter"}))
        if not self._check(")"):
            node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))
        node.children.append(self._parse_branch("loop_body"))
        return node

    def _parse_return(self) -> ParseNode:
        node = ParseNode(self._expect("return"), {"return_statement"})
        if not self._check(";"):
            node.children.append(self._parse_expression())
        node.children.append(ParseNode(self._expect(";"), {"block_delimiter"}))
        return node

    # Expressions: precedence-climbing; each operator token becomes the
    # parent of its operands.

    def _parse_expression(self) -> ParseNode:
        return self._parse_assignment()

    def _parse_assignment(self) -> ParseNode:
        lhs = self._parse_binary(0)
        tok = self._peek()
        if tok is not None and tok.text in ("=", "+=", "-=", "*=", "/=", "%="):
            op = ParseNode(self._advance(), {"operator", "assignment"})
            op.children.append(lhs)
            op.children.append(self._parse_assignment())
            return op
        return lhs

    _BINARY_LEVELS = (
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", ">", "<=", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    )

    def _parse_binary(self, level: int) -> ParseNode:
        if level >= len(self._BINARY_LEVELS):
            return self._parse_unary()
        node = self._parse_binary(level + 1)
        ops = self._BINARY_LEVELS[level]
        while (tok := self._peek()) is not None and tok.text in ops:
            op = ParseNode(self._advance(), {"operator"})
            op.children.append(node)
            op.children.append(self._parse_binary(level + 1))
            node = op
        return node

    def _parse_unary(self) -> ParseNode:
        tok = self._peek()
        if tok is not None and tok.text in ("!", "-", "+", "++", "--"):
            op = ParseNode(self._advance(), {"operator"})
            op.children.append(self._parse_unary())
            return op
        return self._parse_postfix()

    def _parse_postfix(self) -> ParseNode:
        node = self._parse_primary()
        while True:
            tok = self._peek()
            if tok is None:
                return node
            if tok.text == ".":
                dot = ParseNode(self._advance(), {"field_access"})
                member = self._expect_ident("member name")
                if self._check("("):
                    member_node = ParseNode(member, {"method_call"})
                    self._parse_call_args(member_node)
                else:
                    member_node = ParseNode(member, {"field_access"})
                dot.children.append(node)
                dot.children.append(member_node)
                node = dot
            elif tok.text == "[":
                bracket = ParseNode(self._advance(), {"array_access"})
                bracket.children.append(node)
                bracket.children.append(self._parse_expression())
                bracket.children.append(ParseNode(self._expect("]"), {"block_delimiter"}))
                node = bracket
            elif tok.text in ("++", "--"):
                op = ParseNode(self._advance(), {"operator"})
                op.children.append(node)
                node = op
            else:
                return node

    def _parse_primary(self) -> ParseNode:
        tok = self._peek()
        if tok is None:
            raise self._error("expected expression")
        if tok.text == "(":
            group = ParseNode(self._advance(), {"block_delimiter"})
            group.children.append(self._parse_expression())
            group.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))
            return group
        if tok.kind in ("number", "string", "char") or tok.text in LITERAL_KEYWORDS:
            return ParseNode(self._advance(), {"literal_placeholder"})
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            name = self._advance()
            if self._check("("):
                call = ParseNode(name, {"method_call"})
                self._parse_call_args(call)
                return call
            return ParseNode(name, {"variable_use"})
        raise self._error("expected expression")

    def _parse_call_args(self, call: ParseNode) -> None:
        call.children.append(ParseNode(self._expect("("), {"block_delimiter"}))
        if not self._check(")"):
            while True:
                arg = self._parse_expression()
                # The root token of each argument expression is also an
                # argument; priority decides which label wins.
                arg.roles.add("argument")
                call.children.append(arg)
                if self._check(","):
                    call.children.append(
                        ParseNode(self._advance(), {"block_delimiter"})
                    )
                else:
                    break
        call.children.append(ParseNode(self._expect(")"), {"block_delimiter"}))


def assign_semantic_categories(parse_root: ParseNode) -> dict[int, str]:
    """Resolve every node's role set to a single category name.

    Returns a map token-index -> category name. Unknown constructs fall
    back to ``other``.
    """
    from .categories import resolve_category

    out: dict[int, str] = {}
    stack = [parse_root]
    while stack:
        node = stack.pop()
        out[node.token.index] = resolve_category(node.roles)
        stack.extend(node.children)
    return out


def parse_java_subset(source: str, method_id: str = "method") -> Ast:
    """Parse one method into a validated, literal-free Ast."""
    ast, _ = parse_with_layout(source, method_id)
    return ast


def parse_with_layout(source: str, method_id: str = "method") -> tuple[Ast, list[TokenSpan]]:
    """Parse and also return per-node screen spans (row, col, length).

    Node ids equal token indices, so the span list is parallel to the
    gaze pipeline's bounding boxes.
    """
    from .categories import category_id

    tokens = tokenize(source)
    if not tokens:
        raise SourceSyntaxError("empty input", 1, 0)
    if len(tokens) > MAX_TOKENS:
        raise TooLarge(
            f"{method_id}: {len(tokens)} tokens exceeds the {MAX_TOKENS}-token cap"
        )
    parse_root = _Parser(tokens).parse_method()
    categories = assign_semantic_categories(parse_root)

    nodes: dict[int, AstNode] = {}
    spans: list[TokenSpan] = []

    def build(pnode: ParseNode) -> int:
        nid = pnode.token.index
        nodes[nid] = AstNode(
            node_id=nid,
            category=category_id(categories[nid]),
            children=[build(c) for c in pnode.children],
        )
        return nid

    root_id = build(parse_root)
    for tok in tokens:
        spans.append(TokenSpan(tok.index, tok.row, tok.col, tok.length))
    ast = Ast(method_id=method_id, root=root_id, nodes=nodes)
    return validate_ast(ast), spans
