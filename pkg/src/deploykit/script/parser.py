"""Recursive-descent parser producing a :class:`ModuleAST`."""

from __future__ import annotations

from ..errors import ScriptSyntaxError
from . import nodes as n
from .lexer import Token, tokenize

COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
AUG_OPS = {"+=": "+", "-=": "-", "*=": "*", "/=": "/"}


def parse_module(name: str, source: str) -> n.ModuleAST:
    """Parse ``source`` as module ``name``.  Side-effect free."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    parser = _Parser(name, tokenize(source, name))
    statements = parser.parse_file()
    return n.ModuleAST(name=name, statements=statements, imports=parser.imports)


class _Parser:
    def __init__(self, module: str, tokens: list[Token]):
        self.module = module
        self.tokens = tokens
        self.pos = 0
        self.imports: list[n.ImportDecl] = []

    # -- token helpers --

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at(self, kind: str, value=None) -> bool:
        tok = self.tokens[self.pos]
        return tok.kind == kind and (value is None or tok.value == value)

    def at_op(self, value: str) -> bool:
        return self.at("OP", value)

    def at_kw(self, value: str) -> bool:
        return self.at("KEYWORD", value)

    def accept(self, kind: str, value=None) -> Token | None:
        if self.at(kind, value):
            return self.advance()
        return None

    def expect(self, kind: str, value=None, what: str | None = None) -> Token:
        if self.at(kind, value):
            return self.advance()
        self.error(f"expected {what or value or kind}")

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        shown = tok.value if tok.value is not None else tok.kind
        raise ScriptSyntaxError(msg, self.module, tok.line, tok.col, str(shown))

    # -- statements --

    def parse_file(self) -> list:
        body = []
        while not self.at("EOF"):
            if self.accept("NEWLINE"):
                continue
            if self.at("INDENT"):
                self.error("unexpected indent")
            body.extend(self.statement())
        return body

    def block(self) -> list:
        self.expect("OP", ":")
        if not self.accept("NEWLINE"):
            return self.simple_statement()
        self.expect("INDENT", what="an indented block")
        body = []
        while not self.accept("DEDENT"):
            if self.at("EOF"):
                self.error("unexpected end of file in block")
            body.extend(self.statement())
        return body

    def statement(self) -> list:
        tok = self.tok
        if tok.kind == "KEYWORD":
            kw = tok.value
            if kw == "if":
                return [self.if_stmt()]
            if kw == "while":
                self.advance()
                test = self.expression()
                return [n.While(test, self.block(), tok.line)]
            if kw == "for":
                return [self.for_stmt()]
            if kw == "def":
                return [self.def_stmt()]
            if kw == "class":
                return [self.class_stmt()]
        return self.simple_statement()

    def simple_statement(self) -> list:
        tok = self.tok
        if tok.kind == "KEYWORD":
            kw = tok.value
            if kw == "pass":
                self.advance()
                stmts = [n.Pass(tok.line)]
            elif kw == "break":
                self.advance()
                stmts = [n.Break(tok.line)]
            elif kw == "continue":
                self.advance()
                stmts = [n.Continue(tok.line)]
            elif kw == "return":
                self.advance()
                value = None
                if not self.at("NEWLINE"):
                    value = self.expression_list()
                stmts = [n.Return(value, tok.line)]
            elif kw == "import":
                stmts = self.import_stmt()
            elif kw == "from":
                stmts = [self.from_stmt()]
            else:
                stmts = [self.expr_statement()]
        else:
            stmts = [self.expr_statement()]
        if not self.accept("NEWLINE"):
            if not self.at("EOF") and not self.at("DEDENT"):
                self.error("expected end of line")
        return stmts

    def expr_statement(self):
        line = self.tok.line
        expr = self.expression_list()
        if self.at_op("="):
            targets = [expr]
            extra = None
            while self.at_op("="):
                eq = self.advance()
                if len(targets) == 2 and extra is None:
                    extra = eq
                targets.append(self.expression_list())
            value = targets.pop()
            if extra is not None:
                self.error("chained assignment is not supported", extra)
            target = targets[0]
            self.check_target(target)
            return n.Assign(target, value, line)
        tok = self.tok
        if tok.kind == "OP" and tok.value in AUG_OPS:
            self.advance()
            if not isinstance(expr, (n.Name, n.Attribute, n.Subscript)):
                self.error("invalid augmented assignment target", tok)
            return n.AugAssign(expr, AUG_OPS[tok.value], self.expression(), line)
        return n.ExprStmt(expr, line)

    def check_target(self, target):
        if isinstance(target, (n.Name, n.Attribute, n.Subscript)):
            return
        if isinstance(target, n.ListExpr) and target.items:
            for item in target.items:
                self.check_target(item)
            return
        self.error("invalid assignment target")

    def if_stmt(self):
        tok = self.advance()  # 'if' or 'elif'
        test = self.expression()
        body = self.block()
        orelse: list = []
        if self.at_kw("elif"):
            orelse = [self.if_stmt()]
        elif self.accept("KEYWORD", "else"):
            orelse = self.block()
        return n.If(test, body, orelse, tok.line)

    def for_stmt(self):
        tok = self.advance()
        first = self.postfix()
        if self.at_op(","):
            items = [first]
            while self.accept("OP", ","):
                items.append(self.postfix())
            target = n.ListExpr(items, tok.line)
        else:
            target = first
        self.check_target(target)
        self.expect("KEYWORD", "in")
        iterable = self.expression()
        return n.For(target, iterable, self.block(), tok.line)

    def def_stmt(self):
        tok = self.advance()
        name = self.expect("NAME", what="function name").value
        self.expect("OP", "(")
        params: list[str] = []
        defaults: list = []
        while not self.at_op(")"):
            pname = self.expect("NAME", what="parameter name")
            if pname.value in params:
                self.error("duplicate parameter", pname)
            params.append(pname.value)
            if self.accept("OP", "="):
                defaults.append(self.expression())
            elif defaults:
                self.error("non-default parameter follows default parameter", pname)
            if not self.accept("OP", ","):
                break
        self.expect("OP", ")")
        return n.FunctionDef(name, params, defaults, self.block(), tok.line)

    def class_stmt(self):
        tok = self.advance()
        name = self.expect("NAME", what="class name").value
        if self.accept("OP", "("):
            if not self.at_op(")"):
                self.error("class inheritance is not supported")
            self.expect("OP", ")")
        return n.ClassDef(name, self.block(), tok.line)

    def dotted_name(self) -> str:
        parts = [self.expect("NAME", what="module name").value]
        while self.accept("OP", "."):
            parts.append(self.expect("NAME", what="module name").value)
        return ".".join(parts)

    def import_stmt(self) -> list:
        tok = self.advance()
        stmts = []
        while True:
            module = self.dotted_name()
            asname = None
            if self.accept("KEYWORD", "as"):
                asname = self.expect("NAME").value
            self.imports.append(n.ImportDecl(module))
            stmts.append(n.Import(module, asname, tok.line))
            if not self.accept("OP", ","):
                return stmts

    def from_stmt(self):
        tok = self.advance()
        if self.at_op("."):
            self.error("relative imports are not supported")
        module = self.dotted_name()
        self.expect("KEYWORD", "import")
        paren = self.accept("OP", "(")
        names: list[tuple[str, str | None]] = []
        while True:
            if paren and self.at_op(")"):
                break
            name = self.expect("NAME", what="imported name").value
            asname = None
            if self.accept("KEYWORD", "as"):
                asname = self.expect("NAME").value
            names.append((name, asname))
            if not self.accept("OP", ","):
                break
        if paren:
            self.expect("OP", ")")
        if not names:
            self.error("empty import list")
        self.imports.append(n.ImportDecl(module, tuple(name for name, _ in names)))
        return n.ImportFrom(module, names, tok.line)

    # -- expressions --

    def expression_list(self):
        line = self.tok.line
        first = self.expression()
        if not self.at_op(","):
            return first
        items = [first]
        while self.accept("OP", ","):
            if self.at("NEWLINE") or self.at_op("="):
                break
            items.append(self.expression())
        return n.ListExpr(items, line)

    def expression(self):
        expr = self.or_expr()
        if self.at_kw("if"):
            tok = self.advance()
            test = self.or_expr()
            self.expect("KEYWORD", "else")
            orelse = self.expression()
            return n.IfExp(test, expr, orelse, tok.line)
        return expr

    def or_expr(self):
        expr = self.and_expr()
        if not self.at_kw("or"):
            return expr
        values = [expr]
        line = self.tok.line
        while self.accept("KEYWORD", "or"):
            values.append(self.and_expr())
        return n.BoolOp("or", values, line)

    def and_expr(self):
        expr = self.not_expr()
        if not self.at_kw("and"):
            return expr
        values = [expr]
        line = self.tok.line
        while self.accept("KEYWORD", "and"):
            values.append(self.not_expr())
        return n.BoolOp("and", values, line)

    def not_expr(self):
        if self.at_kw("not"):
            tok = self.advance()
            return n.UnaryOp("not", self.not_expr(), tok.line)
        return self.comparison()

    def comparison(self):
        left = self.arith()
        ops = []
        comparators = []
        line = self.tok.line
        while True:
            tok = self.tok
            if tok.kind == "OP" and tok.value in COMPARE_OPS:
                self.advance()
                op = tok.value
            elif tok.kind == "KEYWORD" and tok.value == "in":
                self.advance()
                op = "in"
            elif tok.kind == "KEYWORD" and tok.value == "not" and self.tokens[self.pos + 1].value == "in":
                self.advance()
                self.advance()
                op = "not in"
            elif tok.kind == "KEYWORD" and tok.value == "is":
                self.advance()
                op = "is not" if self.accept("KEYWORD", "not") else "is"
            else:
                break
            ops.append(op)
            comparators.append(self.arith())
        if not ops:
            return left
        return n.Compare(left, ops, comparators, line)

    def arith(self):
        left = self.term()
        while self.tok.kind == "OP" and self.tok.value in ("+", "-"):
            tok = self.advance()
            left = n.BinOp(tok.value, left, self.term(), tok.line)
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "OP" and self.tok.value in ("*", "/", "//", "%"):
            tok = self.advance()
            left = n.BinOp(tok.value, left, self.unary(), tok.line)
        return left

    def unary(self):
        tok = self.tok
        if tok.kind == "OP" and tok.value in ("-", "+"):
            self.advance()
            operand = self.unary()
            if tok.value == "-" and isinstance(operand, n.Const) and type(operand.value) in (int, float):
                return n.Const(-operand.value, tok.line)
            return n.UnaryOp(tok.value, operand, tok.line)
        return self.postfix()

    def postfix(self):
        expr = self.atom()
        while True:
            tok = self.tok
            if tok.kind != "OP":
                return expr
            if tok.value == "(":
                self.advance()
                args, starred = [], []
                while not self.at_op(")"):
                    star = bool(self.accept("OP", "*"))
                    args.append(self.expression())
                    starred.append(star)
                    if self.at_op("="):
                        self.error("keyword arguments are not supported")
                    if not self.accept("OP", ","):
                        break
                self.expect("OP", ")")
                expr = n.Call(expr, args, starred, tok.line)
            elif tok.value == ".":
                self.advance()
                name = self.expect("NAME", what="attribute name").value
                expr = n.Attribute(expr, name, tok.line)
            elif tok.value == "[":
                self.advance()
                index = self.expression()
                self.expect("OP", "]")
                expr = n.Subscript(expr, index, tok.line)
            else:
                return expr

    def atom(self):
        tok = self.tok
        kind = tok.kind
        if kind == "NAME":
            self.advance()
            return n.Name(tok.value, tok.line)
        if kind in ("INT", "FLOAT"):
            self.advance()
            return n.Const(tok.value, tok.line)
        if kind == "STRING":
            self.advance()
            value = tok.value
            while self.at("STRING"):  # implicit concatenation
                value += self.advance().value
            return n.Const(value, tok.line)
        if kind == "KEYWORD":
            if tok.value == "None":
                self.advance()
                return n.Const(None, tok.line)
            if tok.value == "True":
                self.advance()
                return n.Const(True, tok.line)
            if tok.value == "False":
                self.advance()
                return n.Const(False, tok.line)
        if kind == "OP":
            if tok.value == "(":
                self.advance()
                if self.at_op(")"):
                    self.error("empty tuple is not supported")
                expr = self.expression()
                if self.at_op(","):
                    items = [expr]
                    while self.accept("OP", ","):
                        if self.at_op(")"):
                            break
                        items.append(self.expression())
                    expr = n.ListExpr(items, tok.line)
                self.expect("OP", ")")
                return expr
            if tok.value == "[":
                self.advance()
                items = []
                while not self.at_op("]"):
                    items.append(self.expression())
                    if not self.accept("OP", ","):
                        break
                self.expect("OP", "]")
                return n.ListExpr(items, tok.line)
            if tok.value == "{":
                self.advance()
                keys, values = [], []
                while not self.at_op("}"):
                    keys.append(self.expression())
                    self.expect("OP", ":")
                    values.append(self.expression())
                    if not self.accept("OP", ","):
                        break
                self.expect("OP", "}")
                return n.DictExpr(keys, values, tok.line)
        self.error("unexpected token")
