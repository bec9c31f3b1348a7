"""Figure rendering for the report path.

Every run that writes a report also renders PNG figures next to the
delimited output: training curves, uncertainty-score histograms, embedding
scatter plots, confusion heatmaps, and the ablation/openness comparison
charts. Rendering consumes only on-disk artifacts and the report document,
so it can be re-run (or skipped with --no-figures) without touching the
pipeline results.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import storage

plt.rcParams.update({
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def _plot_classifier_curves(out: Path, rows: list[dict]) -> None:
    epochs = [r["epoch"] for r in rows]
    fig, ax1 = plt.subplots()
    ax1.plot(epochs, [r["loss"] for r in rows], color="tab:red", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("cross-entropy", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [r["val_f1"] for r in rows], color="tab:blue", label="val macro-F1")
    ax2.set_ylabel("macro-F1", color="tab:blue")
    ax2.set_ylim(0, 1.05)
    ax2.grid(False)
    ax1.set_title("Supervised training")
    _save(fig, out / "figures" / "classifier_training.png")


def _plot_ncd_curves(out: Path, rows: list[dict]) -> None:
    epochs = [r["epoch"] for r in rows]
    fig, ax = plt.subplots()
    for key, color in (("bce", "tab:blue"), ("cl", "tab:orange"),
                       ("mse", "tab:green"), ("total", "black")):
        ax.plot(epochs, [r[key] for r in rows], label=key, color=color,
                linewidth=2 if key == "total" else 1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Encoder training losses")
    ax.legend()
    _save(fig, out / "figures" / "ncd_losses.png")


def _plot_ood_hist(out: Path, report: dict) -> None:
    scores_path = out / "ood" / "scores.csv"
    split_path = out / "data" / "split.csv"
    if not scores_path.exists() or not split_path.exists():
        return
    roles = {int(r["clip_id"]): r["partition"] for r in storage.read_csv(split_path)}
    id_scores, ood_scores = [], []
    for row in storage.read_csv(scores_path):
        role = roles.get(int(row["clip_id"]))
        if role == "unlabeled":
            ood_scores.append(float(row["score"]))
        elif role == "test":
            id_scores.append(float(row["score"]))
    if not id_scores and not ood_scores:
        return
    fig, ax = plt.subplots()
    bins = np.histogram_bin_edges(id_scores + ood_scores, bins=40)
    if id_scores:
        ax.hist(id_scores, bins=bins, alpha=0.6, label="in-distribution (test)")
    if ood_scores:
        ax.hist(ood_scores, bins=bins, alpha=0.6, label="novel classes")
    threshold = report.get("stages", {}).get("ood", {}).get("threshold")
    if threshold is not None:
        ax.axvline(threshold, color="black", linestyle="--", label="threshold")
    ax.set_xlabel("MC-dropout predictive variance")
    ax.set_ylabel("clips")
    ax.set_title("Uncertainty scores")
    ax.legend()
    _save(fig, out / "figures" / "ood_scores.png")


def _plot_embedding_scatter(out: Path, variant: str) -> None:
    coords_path = out / "clustering" / f"coords_reduce-kmeans_{variant}.csv"
    assign_path = out / "clustering" / f"assignment_reduce-kmeans_{variant}.csv"
    labels_path = out / "data" / "labels.csv"
    if not coords_path.exists() or not assign_path.exists():
        return
    coords = {int(r["clip_id"]): (float(r["x"]), float(r["y"]))
              for r in storage.read_csv(coords_path)}
    pred = {int(r["clip_id"]): int(r["cluster_id"]) for r in storage.read_csv(assign_path)}
    truth = {}
    if labels_path.exists():
        truth = {r["clip_id"]: r["label"] for r in storage.read_label_csv(labels_path)}
    ids = sorted(coords)
    xy = np.array([coords[i] for i in ids])
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.2), sharex=True, sharey=True)
    for ax, values, title in ((axes[0], [pred[i] for i in ids], "predicted clusters"),
                              (axes[1], [truth.get(i, -1) for i in ids], "true classes")):
        scatter = ax.scatter(xy[:, 0], xy[:, 1], c=values, cmap="tab20", s=14)
        ax.set_title(title)
        ax.set_xlabel("component 1")
    axes[0].set_ylabel("component 2")
    fig.suptitle(f"Novel-class embeddings ({variant})")
    _save(fig, out / "figures" / f"embeddings_{variant}.png")


def _plot_confusion(out: Path, report: dict, key: str) -> None:
    conf = report.get("confusion", {}).get(key)
    if not conf:
        return
    table = np.array(conf["table"], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(table, cmap="Blues")
    ax.set_xticks(range(len(conf["pred_clusters"])), [str(p) for p in conf["pred_clusters"]])
    ax.set_yticks(range(len(conf["true_labels"])), [str(t) for t in conf["true_labels"]])
    ax.set_xlabel("predicted cluster")
    ax.set_ylabel("true class")
    ax.set_title(f"Contingency ({key})")
    ax.grid(False)
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j]:
                ax.text(j, i, int(table[i, j]), ha="center", va="center", fontsize=7,
                        color="black" if table[i, j] < table.max() * 0.6 else "white")
    fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, out / "figures" / f"confusion_{key.replace('/', '_')}.png")


def render_run_figures(out, report: dict) -> None:
    out = Path(out)
    logs = report.get("loss_logs", {})
    if logs.get("classifier"):
        _plot_classifier_curves(out, logs["classifier"])
    if logs.get("ncd"):
        _plot_ncd_curves(out, logs["ncd"])
    if "ood" in report.get("stages", {}):
        _plot_ood_hist(out, report)
    for variant in ("baseline", "proposed"):
        _plot_embedding_scatter(out, variant)
    for key in ("kmeans/proposed", "kmeans/baseline"):
        _plot_confusion(out, report, key)


def render_ablation_figure(out, table: dict) -> None:
    out = Path(out)
    masks = list(table)
    fig, axes = plt.subplots(2, 2, figsize=(8.5, 6.0))
    for ax, metric, label in ((axes[0][0], "ss", "silhouette"),
                              (axes[0][1], "ari", "adjusted Rand index"),
                              (axes[1][0], "mi", "mutual information"),
                              (axes[1][1], "acc_overall", "accuracy (%)")):
        values = [table[m].get(metric) for m in masks]
        heights = [0.0 if v is None else v for v in values]
        ax.bar(masks, heights, color="tab:blue")
        ax.set_title(label)
    fig.suptitle("Loss-component ablation (k-means on encoder outputs)")
    fig.tight_layout()
    _save(fig, out / "figures" / "ablation_metrics.png")


def render_openness_figure(out, entries: list[dict]) -> None:
    out = Path(out)
    xs, series = [], {}
    for entry in entries:
        doc = entry.get("metrics", {}).get("kmeans", {}).get("proposed")
        if not doc:
            continue
        xs.append(entry["openness"])
        for metric in ("ss", "ari", "mi", "acc_overall"):
            series.setdefault(metric, []).append(doc.get(metric))
    if not xs:
        return
    fig, ax1 = plt.subplots()
    for metric, color in (("ss", "tab:blue"), ("ari", "tab:orange"), ("mi", "tab:green")):
        vals = series.get(metric, [])
        ax1.plot(xs, [np.nan if v is None else v for v in vals], "o-", label=metric, color=color)
    ax1.set_xlabel("openness")
    ax1.set_ylabel("ss / ari / mi")
    ax2 = ax1.twinx()
    acc = series.get("acc_overall", [])
    ax2.plot(xs, [np.nan if v is None else v for v in acc], "s--", color="tab:red", label="acc")
    ax2.set_ylabel("accuracy (%)", color="tab:red")
    ax2.grid(False)
    ax1.set_title("Clustering quality vs openness")
    ax1.legend(loc="lower left")
    _save(fig, out / "figures" / "openness_trend.png")
