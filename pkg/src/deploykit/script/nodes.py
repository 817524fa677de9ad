"""Syntax tree for the script language."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, slots=True)
class ImportDecl:
    module: str
    names: tuple[str, ...] = ()


@dataclass(slots=True)
class ModuleAST:
    name: str
    statements: list = field(default_factory=list)
    imports: list[ImportDecl] = field(default_factory=list)


# -- expressions --

@dataclass(slots=True)
class Const:
    value: object
    line: int = 0


@dataclass(slots=True)
class Name:
    id: str
    line: int = 0


@dataclass(slots=True)
class ListExpr:
    items: list
    line: int = 0


@dataclass(slots=True)
class DictExpr:
    keys: list
    values: list
    line: int = 0


@dataclass(slots=True)
class BinOp:
    op: str
    left: object
    right: object
    line: int = 0


@dataclass(slots=True)
class UnaryOp:
    op: str  # "-", "+", "not"
    operand: object
    line: int = 0


@dataclass(slots=True)
class BoolOp:
    op: str  # "and" / "or"
    values: list
    line: int = 0


@dataclass(slots=True)
class Compare:
    left: object
    ops: list  # "==", "<", "in", "not in", "is", "is not", ...
    comparators: list
    line: int = 0


@dataclass(slots=True)
class Call:
    func: object
    args: list
    starred: list  # parallel to args: True for *arg
    line: int = 0


@dataclass(slots=True)
class Attribute:
    value: object
    attr: str
    line: int = 0


@dataclass(slots=True)
class Subscript:
    value: object
    index: object
    line: int = 0


@dataclass(slots=True)
class IfExp:
    test: object
    body: object
    orelse: object
    line: int = 0


# -- statements --

@dataclass(slots=True)
class ExprStmt:
    value: object
    line: int = 0


@dataclass(slots=True)
class Assign:
    target: object  # Name | Attribute | Subscript | ListExpr of Names
    value: object
    line: int = 0


@dataclass(slots=True)
class AugAssign:
    target: object
    op: str
    value: object
    line: int = 0


@dataclass(slots=True)
class If:
    test: object
    body: list
    orelse: list
    line: int = 0


@dataclass(slots=True)
class While:
    test: object
    body: list
    line: int = 0


@dataclass(slots=True)
class For:
    target: object
    iter: object
    body: list
    line: int = 0


@dataclass(slots=True)
class Break:
    line: int = 0


@dataclass(slots=True)
class Continue:
    line: int = 0


@dataclass(slots=True)
class Pass:
    line: int = 0


@dataclass(slots=True)
class Return:
    value: object | None
    line: int = 0


@dataclass(slots=True)
class FunctionDef:
    name: str
    params: list[str]
    defaults: list  # expressions for the trailing params
    body: list
    line: int = 0


@dataclass(slots=True)
class ClassDef:
    name: str
    body: list
    line: int = 0


@dataclass(slots=True)
class Import:
    module: str
    asname: str | None
    line: int = 0


@dataclass(slots=True)
class ImportFrom:
    module: str
    names: list[tuple[str, str | None]]
    line: int = 0
