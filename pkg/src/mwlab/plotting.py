"""PNG figures from the plotdata tables (Agg backend, no display needed)."""

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}
FIG_SIZE = (5.0, 3.1)
# keeps PNG bytes independent of the matplotlib version string
PNG_META = {"Software": None}


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return float("nan")


def certificates_figure(rows, path):
    """Ratio over pass bound per (theorem, weight); the pass line sits at 1."""
    labels = [f"{r['theorem']}\n{r['weight']}" for r in rows]
    vals = [_num(r["ratio"]) / _num(r["pass_bound"]) for r in rows]
    colors = {"pass": "#2b8cbe", "fail": "#d7301f", "inconclusive": "#999999"}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(FIG_SIZE[0], 0.32 * len(rows)), FIG_SIZE[1]))
        ax.bar(range(len(vals)), vals, color=[colors.get(r["status"], "k") for r in rows])
        ax.axhline(1.0, color="k", ls="--", lw=0.8)
        ax.set_yscale("log")
        ax.set_ylabel("ratio / pass bound")
        ax.set_xticks(range(len(vals)))
        ax.set_xticklabels(labels, rotation=90, fontsize=5)
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def lambda_figure(rows, path):
    curves = defaultdict(list)
    for r in rows:
        curves[(r["theorem"], r["weight"], r["trial"])].append((_num(r["lambda"]),
                                                                _num(r["value"])))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIG_SIZE)
        seen = set()
        for (tid, wk, trial), pts in sorted(curves.items(), key=lambda kv: str(kv[0])):
            pts.sort()
            label = None if (tid, wk) in seen else f"{tid} {wk}"
            seen.add((tid, wk))
            ax.loglog([a for a, _ in pts], [max(b, 1e-300) for _, b in pts], alpha=0.6,
                      label=label)
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(r"$\lambda\,|\{|v|>\lambda\}|^{1/t} / \|f\|_t$")
        ax.legend(loc="best", ncol=2)
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def sparse_figure(rows, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIG_SIZE)
        idx = [int(r["instance"]) for r in rows]
        ax.plot(idx, [_num(r["ratio_upper"]) for r in rows], "o", label="lhs / upper rhs")
        ax.plot(idx, [_num(r["ratio_lower"]) for r in rows], "x", label="lhs / lower rhs")
        ax.set_xlabel("instance")
        ax.set_ylabel("domination ratio")
        ax.legend(loc="best")
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


def refinement_figure(rows, path):
    per = defaultdict(list)
    for r in rows:
        per[int(r["instance"])].append((int(r["dL"]), _num(r["ratio_upper"])))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIG_SIZE)
        for inst, pts in sorted(per.items()):
            pts.sort()
            ax.plot([a for a, _ in pts], [b for _, b in pts], "-o", color="#2b8cbe", alpha=0.5)
        ax.set_xlabel("refinement L - L0")
        ax.set_ylabel("lhs / upper rhs")
        fig.savefig(path, metadata=PNG_META)
        plt.close(fig)


RENDERERS = {
    "certificates": certificates_figure,
    "lambda_sweep": lambda_figure,
    "sparse_domination": sparse_figure,
    "refinement": refinement_figure,
}


def render_figures(tables, out_dir):
    """One PNG per known table; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, (_, rows) in sorted(tables.items()):
        if name in RENDERERS and rows:
            path = os.path.join(out_dir, f"{name}.png")
            RENDERERS[name](rows, path)
            written.append(path)
    return written


__all__ = ["render_figures", "RENDERERS"]
