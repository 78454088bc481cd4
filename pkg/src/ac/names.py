"""Identifiers and source locations shared by the syntax and type layers."""

from __future__ import annotations

from dataclasses import dataclass, field

KIND_NAME = "name"
KIND_VAR = "var"
KIND_SELF = "self"  # parser-only; resolved to the enclosing actor during renaming


@dataclass(frozen=True)
class Span:
    """Half-open byte range plus the line/column of its start."""

    start: int
    end: int
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Ident:
    """An actor name or variable.

    `uid` is the binder identity: every binding occurrence in a renamed
    program gets a globally unique positive uid, free occurrences keep 0.
    Two idents are the same identifier iff name and uid agree; kind and
    span are carried for diagnostics only.
    """

    name: str
    uid: int = 0
    kind: str = field(default=KIND_NAME, compare=False)
    span: Span | None = field(default=None, compare=False)

    def is_var(self) -> bool:
        return self.kind == KIND_VAR

    def is_name(self) -> bool:
        return self.kind == KIND_NAME

    def __str__(self) -> str:
        return self.name

    def tagged(self) -> str:
        """Unambiguous rendering, used when one env holds homonymous idents."""
        return f"{self.name}#{self.uid}" if self.uid else self.name
