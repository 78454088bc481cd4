"""Concrete syntax for actor programs and behavioural types.

Grammar (whitespace-insensitive, `//` line comments):

    Program ::= TopDef* "0"?
    TopDef  ::= "val" NAME ":" Type "=" "actor" "{" Expr "}" ";"
    Expr    ::= "0"
              | Id "!" LABEL Args? (";" Expr)?
              | "react" "{" Branch ("," Branch)* "}"
              | "val" NAME ":" Type "=" "actor" "{" Expr "}" ";" Expr
    Branch  ::= LABEL Params? "=>" Expr
    Args    ::= "(" (Id ("," Id)*)? ")"
    Params  ::= "(" (NAME ("," NAME)*)? ")"
    Id      ::= NAME | "self"
    Type    ::= "[" Seq "]"
    Seq     ::= "end" | Out "." Seq | In | "*"? "&" "{" In ("," In)* "}"
    Out     ::= "!" LABEL TArgs? | Type "!" LABEL TArgs?
    In      ::= "*"? "?" LABEL TArgs? "." Seq
    TArgs   ::= "(" (Type ("," Type)*)? ")"

A send without a trailing ";" continues as 0.  A bare input is a
one-branch choice, and "*" marks both the branch and its choice.  The
second Out form attaches the target's continuation type to the output
(deadlock-excluding mode).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .names import KIND_NAME, KIND_SELF, KIND_VAR, Ident, Span
from . import terms, types

KEYWORDS = {"val", "actor", "react", "end", "self"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<name>[A-Za-z_][A-Za-z_0-9']*)
  | (?P<arrow>=>)
  | (?P<sym>[!?*&{}()\[\].,;:=]|0)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # "name", keyword text, or the symbol itself
    text: str
    span: Span


class ParseError(Exception):
    def __init__(self, span: Span, expected: list[str], found: str):
        self.span = span
        self.expected = expected
        self.found = found
        want = " or ".join(expected)
        super().__init__(f"{span}: expected {want}, found {found}")


class MarkingSyntaxError(ParseError):
    """The marking discipline is violated in a written type."""

    def __init__(self, span: Span, reason: str):
        self.span = span
        self.expected = [reason]
        self.found = ""
        Exception.__init__(self, f"{span}: {reason}")


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(Span(pos, pos + 1, line, col), ["a token"], repr(text[pos]))
        lexeme = m.group(0)
        span = Span(pos, m.end(), line, col)
        if m.lastgroup == "name":
            kind = lexeme if lexeme in KEYWORDS else "name"
            tokens.append(Token(kind, lexeme, span))
        elif m.lastgroup in ("sym", "arrow"):
            tokens.append(Token(lexeme, lexeme, span))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("<eof>", "", Span(len(text), len(text), line, col)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, k: int = 0) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "<eof>":
            self.i += 1
        return t

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    def eat(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(t.span, [repr(kind)], repr(t.text or "end of input"))
        return self.next()

    def fail(self, expected: list[str]) -> ParseError:
        t = self.peek()
        return ParseError(t.span, expected, repr(t.text or "end of input"))

    # -- programs -----------------------------------------------------------

    def program(self) -> terms.Program:
        defs = []
        while self.at("val"):
            defs.append(self.top_def(top_level=True))
        if self.at("0"):
            self.next()
        self.eat("<eof>")
        return terms.Program(tuple(defs))

    def top_def(self, top_level: bool = False) -> terms.Def:
        start = self.eat("val")
        name = self.eat("name")
        self.eat(":")
        annot = self.type_()
        self.eat("=")
        self.eat("actor")
        self.eat("{")
        body = self.expr()
        self.eat("}")
        # the separator may be left off when nothing follows
        if not (top_level and self.peek().kind in ("0", "<eof>")):
            self.eat(";")
        ident = Ident(name.text, 0, KIND_NAME, name.span)
        return terms.Def(ident, annot, body, start.span)

    def expr(self) -> terms.Expr:
        t = self.peek()
        if t.kind == "0":
            self.next()
            return terms.NIL
        if t.kind == "val":
            d = self.top_def()  # same shape; the ";" separates body from cont
            cont = self.expr()
            return terms.Spawn(d.name, d.annot, d.body, cont, d.span)
        if t.kind == "react":
            return self.react()
        if t.kind in ("name", "self"):
            return self.send()
        raise self.fail(["an expression"])

    def send(self) -> terms.Send:
        tgt = self.ident()
        self.eat("!")
        label = self.eat("name")
        args: tuple[Ident, ...] = ()
        if self.at("("):
            self.next()
            lst = []
            if not self.at(")"):
                lst.append(self.ident())
                while self.at(","):
                    self.next()
                    lst.append(self.ident())
            self.eat(")")
            args = tuple(lst)
        cont: terms.Expr = terms.NIL
        if self.at(";"):
            self.next()
            cont = self.expr()
        return terms.Send(tgt, label.text, args, cont, tgt.span)

    def react(self) -> terms.React:
        start = self.eat("react")
        self.eat("{")
        branches = [self.branch()]
        while self.at(","):
            self.next()
            branches.append(self.branch())
        self.eat("}")
        ordered = tuple(sorted(branches, key=lambda b: b.label))
        return terms.React(ordered, start.span)

    def branch(self) -> terms.Branch:
        label = self.eat("name")
        params: tuple[Ident, ...] = ()
        if self.at("("):
            self.next()
            lst = []
            if not self.at(")"):
                lst.append(self.eat("name"))
                while self.at(","):
                    self.next()
                    lst.append(self.eat("name"))
            self.eat(")")
            params = tuple(Ident(t.text, 0, KIND_VAR, t.span) for t in lst)
        self.eat("=>")
        body = self.expr()
        return terms.Branch(label.text, params, body, label.span)

    def ident(self) -> Ident:
        t = self.peek()
        if t.kind == "self":
            self.next()
            return Ident("self", 0, KIND_SELF, t.span)
        tok = self.eat("name")
        return Ident(tok.text, 0, KIND_NAME, tok.span)

    # -- types --------------------------------------------------------------

    def type_(self) -> types.BType:
        open_ = self.eat("[")
        body = self.seq()
        self.eat("]")
        try:
            types.validate_marking(body)
        except types.MarkingError as exc:
            raise MarkingSyntaxError(open_.span, str(exc)) from None
        return types.BType(body)

    def seq(self) -> types.SType:
        t = self.peek()
        if t.kind == "end":
            self.next()
            return types.END
        if t.kind == "*":
            # marked input, or a redundant "*" on a whole choice
            if self.peek(1).kind == "&":
                self.next()
                return self.choice(marked=True, star_span=t.span)
            return self.singleton(self.in_branch())
        if t.kind == "?":
            return self.singleton(self.in_branch())
        if t.kind == "&":
            return self.choice(marked=False, star_span=t.span)
        if t.kind == "!":
            return self.out(annot=None)
        if t.kind == "[":
            annot = self.type_()
            return self.out(annot=annot)
        raise self.fail(["a type action"])

    @staticmethod
    def singleton(branch: types.InBranch) -> types.Choice:
        return types.Choice(branch.marked, (branch,))

    def out(self, annot: types.BType | None) -> types.Out:
        self.eat("!")
        label = self.eat("name")
        params = self.targs()
        self.eat(".")
        cont = self.seq()
        return types.Out(label.text, params, cont, annot)

    def choice(self, marked: bool, star_span: Span) -> types.Choice:
        self.eat("&")
        self.eat("{")
        branches = [self.in_branch()]
        while self.at(","):
            self.next()
            branches.append(self.in_branch())
        self.eat("}")
        labels = [b.label for b in branches]
        if len(set(labels)) != len(labels):
            raise MarkingSyntaxError(star_span, "duplicate input labels in one choice")
        is_marked = marked or any(b.marked for b in branches)
        if marked and not any(b.marked for b in branches):
            raise MarkingSyntaxError(
                star_span, "a marked choice needs exactly one marked branch"
            )
        return types.Choice(is_marked, tuple(sorted(branches, key=lambda b: b.label)))

    def in_branch(self) -> types.InBranch:
        marked = False
        if self.at("*"):
            self.next()
            marked = True
        self.eat("?")
        label = self.eat("name")
        params = self.targs()
        self.eat(".")
        cont = self.seq()
        return types.InBranch(marked, label.text, params, cont)

    def targs(self) -> tuple[types.BType, ...]:
        if not self.at("("):
            return ()
        self.next()
        lst = []
        if not self.at(")"):
            lst.append(self.type_())
            while self.at(","):
                self.next()
                lst.append(self.type_())
        self.eat(")")
        return tuple(lst)


def parse_type(text: str) -> types.BType:
    p = _Parser(tokenize(text))
    t = p.type_()
    p.eat("<eof>")
    return t


def parse_program(text: str) -> terms.Program:
    """Parse, rename binders apart and check well-formedness.

    Raises ParseError (or MarkingSyntaxError) on bad syntax and
    WellFormednessError when the binding conventions are violated.
    """
    p = _Parser(tokenize(text))
    raw = p.program()
    renamed = terms.alpha_rename(raw)
    report = terms.well_formed(renamed)
    if not report.ok:
        raise terms.WellFormednessError(report)
    return renamed


def parse_file(path: str) -> terms.Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())
