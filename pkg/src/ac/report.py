"""Exploration reports: delimited state/edge tables plus a rendered figure.

`write_report` drops three files into a directory: `states.csv` and
`edges.csv` describing the explored graph, and `graph.png`, a drawing of
it with terminals highlighted.  When a verdict is supplied a fourth file
`verdict.json` mirrors the CLI's JSON output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .printer import print_config
from .semantics import StateGraph


def write_report(graph: StateGraph, outdir: str | Path, verdict_payload=None) -> list[str]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    ids = {k: i for i, k in enumerate(sorted(graph.states))}
    written = []

    with open(out / "states.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "initial", "terminal", "config"])
        for k in sorted(graph.states):
            terminal = (
                "success" if k in graph.success else "stuck" if k in graph.stuck else ""
            )
            w.writerow(
                [ids[k], "yes" if k == graph.initial else "", terminal,
                 print_config(graph.states[k])]
            )
    written.append("states.csv")

    with open(out / "edges.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "rule", "to"])
        for src, lbl, dst in graph.edges:
            w.writerow([ids[src], str(lbl), ids[dst]])
    written.append("edges.csv")

    _draw(graph, ids, out / "graph.png")
    written.append("graph.png")

    if verdict_payload is not None:
        (out / "verdict.json").write_text(
            json.dumps(verdict_payload, indent=2) + "\n", encoding="utf-8"
        )
        written.append("verdict.json")
    return written


def _draw(graph: StateGraph, ids: dict[str, int], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import networkx as nx

    g = nx.MultiDiGraph()
    for k in graph.states:
        g.add_node(ids[k])
    for src, lbl, dst in graph.edges:
        g.add_edge(ids[src], ids[dst], label=str(lbl))

    colors = []
    for k in sorted(graph.states):
        if k in graph.success:
            colors.append("#7fc97f")
        elif k in graph.stuck:
            colors.append("#f46d43")
        elif k == graph.initial:
            colors.append("#80b1d3")
        else:
            colors.append("#d9d9d9")

    n = len(graph.states)
    size = max(6.0, min(16.0, 1.5 * n ** 0.5 + 4))
    fig, ax = plt.subplots(figsize=(size, size))
    try:
        pos = nx.nx_agraph.graphviz_layout(g, prog="dot")
    except Exception:
        pos = nx.spring_layout(g, seed=1)
    nx.draw_networkx_nodes(
        g, pos, ax=ax, node_color=colors, node_size=420, edgecolors="black"
    )
    nx.draw_networkx_labels(g, pos, ax=ax, font_size=8)
    nx.draw_networkx_edges(
        g, pos, ax=ax, arrows=True, arrowsize=10, connectionstyle="arc3,rad=0.08"
    )
    if n <= 40:
        labels = {}
        for src, lbl, dst in graph.edges:
            labels.setdefault((ids[src], ids[dst]), str(lbl))
        nx.draw_networkx_edge_labels(
            g, pos, ax=ax, edge_labels=labels, font_size=6, rotate=False
        )
    ax.set_title(
        f"{n} states, {len(graph.edges)} edges; "
        f"{len(graph.success)} success / {len(graph.stuck)} stuck terminals"
    )
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
