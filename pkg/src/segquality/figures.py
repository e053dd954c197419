"""Report figures: metric-vs-history curves and predicted-vs-true scatter.

Written next to the delimited report files by the train-eval command. All
rendering goes through the Agg backend so the package stays headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = {
    "lr": "tab:blue",
    "lr_l1": "tab:purple",
    "lr_l2": "tab:green",
    "logistic_l1": "tab:purple",
    "gb": "tab:cyan",
    "nn_l1": "tab:orange",
    "nn_l2": "tab:pink",
    "entropy": "tab:gray",
    "naive": "black",
}

_METRIC_LABEL = {
    "acc": "accuracy",
    "auroc": "AUROC",
    "r2": "$R^2$",
    "sigma": "$\\sigma$ (RMSE)",
}


def plot_metric_vs_history(
    report: dict, task: str, metric: str, path: str | Path, composition: str | None = None
) -> None:
    """One line per model over n_c, with a +-std band, like the report tables."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    comps = {c["composition"] for c in report["cells"]}
    comp = composition or sorted(comps)[0]
    by_model: dict[str, list[tuple[int, float, float]]] = {}
    for cell in report["cells"]:
        if cell["task"] != task or cell["composition"] != comp:
            continue
        if metric not in cell["mean"]:
            continue
        by_model.setdefault(cell["model"], []).append(
            (cell["n_c"], cell["mean"][metric], cell["std"][metric])
        )
    for model, pts in sorted(by_model.items()):
        pts.sort()
        x = np.array([p[0] for p in pts])
        m = np.array([p[1] for p in pts])
        s = np.array([p[2] for p in pts])
        color = _COLORS.get(model)
        if len(x) == 1:
            ax.axhline(m[0], linestyle="--", color=color, label=model, alpha=0.8)
        else:
            ax.plot(x, m, marker="o", markersize=3, color=color, label=model)
            ax.fill_between(x, m - s, m + s, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel("considered previous frames $n_c$")
    ax.set_ylabel(_METRIC_LABEL.get(metric, metric))
    ax.set_title(f"{task}: {_METRIC_LABEL.get(metric, metric)} vs history ({comp})")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pred_vs_true(
    y_true: np.ndarray, scores: np.ndarray, sizes: np.ndarray, path: str | Path
) -> None:
    """Predicted vs true quality; dot area scales with segment size."""
    fig, ax = plt.subplots(figsize=(4.4, 4.4))
    s = 4.0 + 60.0 * np.sqrt(sizes / max(sizes.max(), 1.0))
    ax.scatter(y_true, scores, s=s, alpha=0.35, linewidths=0, color="tab:blue")
    ax.plot([0, 1], [0, 1], color="black", linewidth=0.8)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("true quality")
    ax.set_ylabel("predicted quality")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def report_figures(report: dict, extras: dict, out_dir: str | Path) -> list[Path]:
    """Standard figure set for one experiment report; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    tasks = {(c["task"]) for c in report["cells"]}
    pairs = []
    if "classify" in tasks:
        pairs += [("classify", "auroc"), ("classify", "acc")]
    if "regress" in tasks:
        pairs += [("regress", "r2"), ("regress", "sigma")]
    for task, metric in pairs:
        p = out_dir / f"fig_{task}_{metric}.png"
        plot_metric_vs_history(report, task, metric, p)
        written.append(p)
    # scatter for the best regression cell, first run
    best = None
    for key, pred in extras.get("predictions", {}).items():
        task, model, comp, n_c = key
        if task != "regress" or model in ("entropy",):
            continue
        r2 = None
        for cell in report["cells"]:
            if (cell["task"], cell["model"], cell["composition"], cell["n_c"]) == key:
                r2 = cell["mean"].get("r2")
        if r2 is None:
            continue
        if best is None or r2 > best[0]:
            best = (r2, pred)
    if best is not None:
        p = out_dir / "fig_pred_vs_true.png"
        plot_pred_vs_true(best[1]["y_true"], best[1]["scores"], best[1]["sizes"], p)
        written.append(p)
    return written
