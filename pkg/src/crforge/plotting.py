"""Figures for report commands (matplotlib, file output only)."""

from __future__ import annotations

import os
from collections import Counter
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .powerseries import Series  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def degree_profile(series: Sequence[Series], labels: Sequence[str], title: str, path: str) -> str:
    """Number of nonzero coefficients per total degree, one bar group per series."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    order = max((s.order for s in series), default=0)
    width = 0.8 / max(len(series), 1)
    for idx, (s, lab) in enumerate(zip(series, labels)):
        counts = Counter(sum(e) for e, _ in s.terms())
        xs = list(range(order + 1))
        ax.bar([x + idx * width for x in xs], [counts.get(x, 0) for x in xs], width=width, label=lab)
    ax.set_xlabel("total degree")
    ax.set_ylabel("nonzero coefficients")
    ax.set_title(title)
    if labels:
        ax.legend(fontsize=8)
    return _save(fig, path)


def segre_ranks(ranks: Dict[int, dict], N: int, title: str, path: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    js = sorted(ranks)
    ax.plot(js, [ranks[j]["rank"] for j in js], marker="o", label="generic rank of v^j")
    ax.axhline(N, color="grey", linestyle="--", label=f"N = {N}")
    ax.set_xlabel("Segre level j")
    ax.set_ylabel("rank")
    ax.set_xticks(js)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def standard_monomials(std: Sequence[Sequence[int]], order: int, title: str, path: str) -> str:
    """Staircase for two variables, degree histogram otherwise."""
    fig, ax = plt.subplots(figsize=(4.6, 4))
    if std and len(std[0]) == 2:
        ax.scatter([e[0] for e in std], [e[1] for e in std], marker="s", s=60)
        ax.set_xlim(-0.5, order + 0.5)
        ax.set_ylim(-0.5, order + 0.5)
        ax.set_xlabel("exponent of variable 1")
        ax.set_ylabel("exponent of variable 2")
    else:
        counts = Counter(sum(e) for e in std)
        xs = list(range(order + 1))
        ax.bar(xs, [counts.get(x, 0) for x in xs])
        ax.set_xlabel("total degree")
        ax.set_ylabel("standard monomials")
    ax.set_title(title)
    return _save(fig, path)


def determination(agreement: Sequence[int], conclusion: Sequence[int], margin: int, order: int,
                  title: str, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    xs = list(range(order + 1))
    a, c = Counter(agreement), Counter(conclusion)
    ax.bar([x - 0.2 for x in xs], [a.get(x, 0) for x in xs], width=0.4, label="ideal agreement order")
    ax.bar([x + 0.2 for x in xs], [c.get(x, 0) for x in xs], width=0.4, label="level conclusion order")
    ax.axvline(margin - 0.5, color="red", linestyle="--", label=f"margin {margin}")
    ax.set_xlabel("order through which the survivor agrees with H0")
    ax.set_ylabel("survivors")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def check_timings(names: Sequence[str], millis: Sequence[float], ok: Sequence[Optional[bool]], title: str,
                  path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.22 * len(names) + 1)))
    colors = ["tab:green" if o else ("tab:red" if o is False else "tab:orange") for o in ok]
    ys = list(range(len(names)))
    ax.barh(ys, millis, color=colors)
    ax.set_yticks(ys)
    ax.set_yticklabels(names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("milliseconds")
    ax.set_title(title)
    return _save(fig, path)
