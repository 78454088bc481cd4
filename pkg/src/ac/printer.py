"""Pretty-printing for types, programs, configurations and environments.

Printed programs and types re-parse to the same thing (programs up to
binder uids).  Nullary messages print without parentheses and one-branch
choices print bare, matching the input shorthand.
"""

from __future__ import annotations

from .names import Ident
from . import terms, types


def print_type(t: types.BType | types.SType) -> str:
    if isinstance(t, types.BType):
        return f"[{print_seq(t.body)}]"
    return print_seq(t)


def print_seq(s: types.SType) -> str:
    if isinstance(s, types.End):
        return "end"
    if isinstance(s, types.Out):
        annot = print_type(s.annot) if s.annot is not None else ""
        return f"{annot}!{s.label}{_targs(s.params)}.{print_seq(s.cont)}"
    if len(s.branches) == 1:
        return _branch(s.branches[0])
    return "&{" + ", ".join(_branch(b) for b in s.branches) + "}"


def _branch(b: types.InBranch) -> str:
    star = "*" if b.marked else ""
    return f"{star}?{b.label}{_targs(b.params)}.{print_seq(b.cont)}"


def _targs(params: tuple[types.BType, ...]) -> str:
    if not params:
        return ""
    return "(" + ", ".join(print_type(p) for p in params) + ")"


# ---------------------------------------------------------------------------
# programs


def print_program(p: terms.Program) -> str:
    lines = [_print_def(d, 0) for d in p.defs]
    lines.append("0")
    return "\n".join(lines) + "\n"


def _print_def(d: terms.Def, depth: int) -> str:
    pad = "  " * depth
    body = print_expr(d.body, depth + 1)
    return (
        f"{pad}val {d.name} : {print_type(d.annot)} = actor{{\n"
        f"{body}\n{pad}}};"
    )


def print_expr(e: terms.Expr, depth: int = 0) -> str:
    pad = "  " * depth
    if isinstance(e, terms.Nil):
        return f"{pad}0"
    if isinstance(e, terms.Send):
        args = "(" + ", ".join(str(a) for a in e.args) + ")" if e.args else ""
        head = f"{pad}{e.target}!{e.label}{args}"
        if isinstance(e.cont, terms.Nil):
            return head
        return f"{head};\n{print_expr(e.cont, depth)}"
    if isinstance(e, terms.React):
        inner = ",\n".join(_print_branch(b, depth + 1) for b in e.branches)
        return f"{pad}react{{\n{inner}\n{pad}}}"
    if isinstance(e, terms.Spawn):
        d = _print_def(terms.Def(e.name, e.annot, e.body), depth)
        return f"{d}\n{print_expr(e.cont, depth)}"
    raise TypeError(type(e).__name__)


def _print_branch(b: terms.Branch, depth: int) -> str:
    pad = "  " * depth
    params = "(" + ", ".join(str(x) for x in b.params) + ")" if b.params else ""
    body = print_expr(b.body, depth + 1)
    return f"{pad}{b.label}{params} =>\n{body}"


# ---------------------------------------------------------------------------
# configurations


def print_config(f: terms.Config, multiline: bool = False) -> str:
    if f.is_empty():
        return "0"
    parts = []
    for a in sorted(f.actors, key=lambda a: (a.name.name, a.name.uid)):
        mb = ", ".join(_print_message(m) for m in a.mailbox) or "-"
        body = print_expr(a.body).replace("\n", " ").replace("  ", " ")
        while "  " in body:
            body = body.replace("  ", " ")
        parts.append(f"[{a.name.tagged()} |> {mb}] {a.name.tagged()}{{ {body} }}")
    for d in f.residual:
        parts.append(f"val {d.name} = actor{{...}}")
    sep = "\n| " if multiline else " | "
    news = "".join(
        f"(new {u.tagged()})"
        for u in sorted(f.restricted, key=lambda u: (u.name, u.uid))
    )
    return news + ("(" + sep.join(parts) + ")" if news else sep.join(parts))


def _print_message(m: terms.Message) -> str:
    if not m.args:
        return m.label
    return f"{m.label}(" + ", ".join(a.tagged() for a in m.args) + ")"


# ---------------------------------------------------------------------------
# environments


def ident_key(u: Ident) -> tuple:
    # names before variables, then alphabetically
    return (u.is_var(), u.name, u.uid)


def _display_names(idents) -> dict:
    """Print bare names, uid-tagged only where two binders share a name."""
    counts: dict[str, int] = {}
    for u in idents:
        counts[u.name] = counts.get(u.name, 0) + 1
    return {u: (u.tagged() if counts[u.name] > 1 else str(u)) for u in idents}


def print_env(env: types.TypeEnv) -> str:
    shown = _display_names(env)
    items = sorted(env.items(), key=lambda kv: ident_key(kv[0]))
    return "{" + ", ".join(f"{shown[u]}:{print_type(t)}" for u, t in items) + "}"


def print_escape(d: types.EscapeEnv) -> str:
    if isinstance(d, types.Leaf):
        return print_env(d.env)
    return "&{" + ", ".join(print_escape(c) for c in d.children) + "}"


def env_lines(d: types.EscapeEnv, indent: str = "  ") -> list[str]:
    """One line per binding, alternatives rendered as nested blocks."""
    if isinstance(d, types.Leaf):
        shown = _display_names(d.env)
        items = sorted(d.env.items(), key=lambda kv: ident_key(kv[0]))
        return [f"{indent}{shown[u]} : {print_type(t)}" for u, t in items]
    lines: list[str] = []
    for i, c in enumerate(d.children):
        lines.append(f"{indent}alternative {i + 1}:")
        lines += env_lines(c, indent + "  ")
    return lines


def pretty_print(x) -> str:
    """Single entry point used by the CLI and tests."""
    if isinstance(x, (types.BType, types.End, types.Out, types.Choice)):
        return print_type(x)
    if isinstance(x, terms.Program):
        return print_program(x)
    if isinstance(x, terms.Config):
        return print_config(x)
    if isinstance(x, (types.Leaf, types.ChoiceNode)):
        return print_escape(x)
    if isinstance(x, dict):
        return print_env(x)
    if isinstance(x, (terms.Nil, terms.Send, terms.React, terms.Spawn)):
        return print_expr(x)
    raise TypeError(f"cannot pretty-print {type(x).__name__}")
