"""Tokenizer for the script language (Python-like, indentation-sensitive)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ScriptSyntaxError

KEYWORDS = frozenset(
    "def class return if elif else while for in import from as pass break "
    "continue and or not None True False is".split()
)

# longest first
OPERATORS = (
    "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=",
    "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}",
    ",", ":", ".",
)

ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"', "0": "\0"}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # NAME KEYWORD INT FLOAT STRING OP NEWLINE INDENT DEDENT EOF
    value: object
    line: int
    col: int


def tokenize(source: str, module: str = "<script>") -> list[Token]:
    tokens: list[Token] = []
    indents = [0]
    depth = 0  # bracket nesting; newlines inside brackets are ignored
    pos = 0
    text = source
    n = len(text)
    at_line_start = True

    def err(msg, line, col, tok):
        raise ScriptSyntaxError(msg, module, line, col, tok)

    line_no = 1
    col_base = 0  # offset of current line start
    while pos < n or at_line_start:
        if at_line_start:
            at_line_start = False
            # measure indentation of a logical line
            start = pos
            width = 0
            while pos < n and text[pos] in " \t":
                width += 1 if text[pos] == " " else 8 - (width % 8)
                pos += 1
            if pos >= n:
                break
            ch = text[pos]
            if ch == "\n" or ch == "#":
                # blank or comment-only line
                while pos < n and text[pos] != "\n":
                    pos += 1
                if pos < n:
                    pos += 1
                    line_no += 1
                    col_base = pos
                at_line_start = True
                continue
            if depth == 0:
                if width > indents[-1]:
                    indents.append(width)
                    tokens.append(Token("INDENT", width, line_no, 1))
                else:
                    while width < indents[-1]:
                        indents.pop()
                        tokens.append(Token("DEDENT", width, line_no, 1))
                    if width != indents[-1]:
                        err("inconsistent dedent", line_no, width + 1, text[start:pos + 1])
            continue
        ch = text[pos]
        col = pos - col_base + 1
        if ch == "\n":
            if depth == 0 and tokens and tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT"):
                tokens.append(Token("NEWLINE", None, line_no, col))
            pos += 1
            line_no += 1
            col_base = pos
            if depth == 0:
                at_line_start = True
            continue
        if ch in " \t\r":
            pos += 1
            continue
        if ch == "#":
            while pos < n and text[pos] != "\n":
                pos += 1
            continue
        if ch == "\\" and pos + 1 < n and text[pos + 1] == "\n":
            pos += 2
            line_no += 1
            col_base = pos
            continue
        if ch.isalpha() or ch == "_":
            end = pos + 1
            while end < n and (text[end].isalnum() or text[end] == "_"):
                end += 1
            word = text[pos:end]
            tokens.append(Token("KEYWORD" if word in KEYWORDS else "NAME", word, line_no, col))
            pos = end
            continue
        if ch.isdigit() or (ch == "." and pos + 1 < n and text[pos + 1].isdigit()):
            end = pos
            while end < n and (text[end].isdigit() or text[end] == "_"):
                end += 1
            is_float = False
            if end < n and text[end] == "." and not (end + 1 < n and text[end + 1] == "."):
                is_float = True
                end += 1
                while end < n and text[end].isdigit():
                    end += 1
            if end < n and text[end] in "eE":
                k = end + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_float = True
                    end = k
                    while end < n and text[end].isdigit():
                        end += 1
            lit = text[pos:end]
            if end < n and (text[end].isalpha() or text[end] == "_"):
                err("invalid number literal", line_no, col, text[pos:end + 1])
            if is_float:
                tokens.append(Token("FLOAT", float(lit), line_no, col))
            else:
                value = int(lit)
                if value > 2**63 - 1:
                    err("integer literal does not fit in 64 bits", line_no, col, lit)
                tokens.append(Token("INT", value, line_no, col))
            pos = end
            continue
        if ch in "'\"":
            quote = ch
            end = pos + 1
            buf = []
            while True:
                if end >= n or text[end] == "\n":
                    err("unterminated string literal", line_no, col, text[pos:end])
                c = text[end]
                if c == quote:
                    end += 1
                    break
                if c == "\\":
                    if end + 1 >= n:
                        err("unterminated string literal", line_no, col, text[pos:end])
                    e = text[end + 1]
                    if e not in ESCAPES:
                        err("unknown escape", line_no, end - col_base + 1, "\\" + e)
                    buf.append(ESCAPES[e])
                    end += 2
                    continue
                buf.append(c)
                end += 1
            tokens.append(Token("STRING", "".join(buf), line_no, col))
            pos = end
            continue
        for op in OPERATORS:
            if text.startswith(op, pos):
                if op in "([{":
                    depth += 1
                elif op in ")]}":
                    depth = max(0, depth - 1)
                tokens.append(Token("OP", op, line_no, col))
                pos += len(op)
                break
        else:
            err("unexpected character", line_no, col, ch)
    if depth:
        err("unexpected end of file inside brackets", line_no, pos - col_base + 1, "EOF")
    if tokens and tokens[-1].kind not in ("NEWLINE", "DEDENT", "INDENT"):
        tokens.append(Token("NEWLINE", None, line_no, 1))
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", 0, line_no, 1))
    tokens.append(Token("EOF", None, line_no, 1))
    return tokens
