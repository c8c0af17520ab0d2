"""Figure rendering for experiment reports.

Every renderer writes a PNG next to the delimited output it illustrates.
Rendering is deterministic: fixed figure geometry, no timestamps.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def sweep_figure(rows, path) -> None:
    """F1 versus N, one panel per feature family, one line per algorithm."""
    families = sorted({r.family for r in rows})
    fig, axes = plt.subplots(1, len(families),
                             figsize=(4.2 * len(families), 3.4), squeeze=False)
    for ax, family in zip(axes[0], families):
        fam_rows = [r for r in rows if r.family == family]
        for alg in sorted({r.algorithm for r in fam_rows}):
            pts = sorted((r.n, r.mean, r.ci99) for r in fam_rows if r.algorithm == alg)
            ns = [p[0] for p in pts]
            means = np.array([p[1] for p in pts])
            cis = np.array([p[2] for p in pts])
            ax.plot(ns, means, marker="o", label=alg)
            ax.fill_between(ns, means - cis, means + cis, alpha=0.2)
        ax.set_title(family)
        ax.set_xlabel("N")
        ax.set_ylabel("F1")
        ax.set_ylim(0.0, 1.05)
        ax.legend(fontsize=8)
    _save(fig, path)


def nestedcv_figure(report, path) -> None:
    """Per-fold scores with the mean and its 99% interval."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    folds = np.arange(1, len(report.fold_scores) + 1)
    ax.bar(folds, report.fold_scores, color="tab:blue", alpha=0.7)
    ax.axhline(report.mean, color="tab:red", label=f"mean {report.mean:.3f}")
    ax.axhspan(report.mean - report.ci99, report.mean + report.ci99,
               color="tab:red", alpha=0.15, label="99% CI")
    ax.set_xlabel("outer fold")
    ax.set_ylabel(report.metric_name)
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{report.algorithm} nested CV")
    ax.legend(fontsize=8)
    _save(fig, path)


def shift_figure(report, path) -> None:
    """Score against test domain, one line per feature spec and train tag."""
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    combos = sorted({(c.spec_name, c.train_tag) for c in report.cells})
    test_tags = sorted({c.test_tag for c in report.cells})
    xs = np.arange(len(test_tags))
    for spec, train in combos:
        cells = {c.test_tag: c for c in report.cells
                 if c.spec_name == spec and c.train_tag == train}
        means = [cells[t].mean if t in cells else np.nan for t in test_tags]
        cis = [cells[t].ci99 if t in cells else 0.0 for t in test_tags]
        ax.errorbar(xs, means, yerr=cis, marker="o", capsize=3,
                    label=f"{spec} (train {train})")
    ax.set_xticks(xs)
    ax.set_xticklabels(test_tags)
    ax.set_xlabel(f"test {report.axis}")
    ax.set_ylabel("F1")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{report.algorithm}, stage {report.stage}")
    ax.legend(fontsize=7)
    _save(fig, path)


def importance_figure(pairs, path, title="feature importance (MDI)") -> None:
    """Horizontal bars, most important on top."""
    names = [p[0] for p in pairs]
    values = [p[1] for p in pairs]
    fig, ax = plt.subplots(figsize=(6.0, 0.32 * len(pairs) + 1.2))
    ys = np.arange(len(pairs))[::-1]
    ax.barh(ys, values, color="tab:green", alpha=0.8)
    ax.set_yticks(ys)
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("mean decrease in impurity")
    ax.set_title(title)
    _save(fig, path)


def learncurve_figure(entries, path, metric_name="F1") -> None:
    """Score against training-set size on a log axis."""
    sizes = [e[0] for e in entries]
    means = [e[1] for e in entries]
    cis = [e[2] for e in entries]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(sizes, means, yerr=cis, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("training rows")
    ax.set_ylabel(metric_name)
    ax.set_ylim(0.0, 1.05)
    ax.set_title("learning curve")
    _save(fig, path)


def confusion_figure(cm, path, title="confusion") -> None:
    """Heatmap of one confusion matrix with counts annotated."""
    counts = np.asarray(cm.counts)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(cm.classes),
                                    1.0 + 0.7 * len(cm.classes)))
    ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(cm.classes)))
    ax.set_yticks(range(len(cm.classes)))
    ax.set_xticklabels(cm.classes, rotation=45, ha="right", fontsize=7)
    ax.set_yticklabels(cm.classes, fontsize=7)
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=7,
                    color="white" if counts[i, j] > counts.max() / 2 else "black")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    _save(fig, path)
