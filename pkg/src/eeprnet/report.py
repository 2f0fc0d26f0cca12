"""Figures and the strategy x classifier grid built from evaluation reports."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .classifiers import CLASSIFIERS  # noqa: E402
from .evaluation import EvaluationReport, cmc_svg  # noqa: E402
from .train import STRATEGIES  # noqa: E402


def _label(r: EvaluationReport) -> str:
    return f"{r.strategy or '?'}/{r.classifier}"


def _ordered(reports: list[EvaluationReport]) -> list[EvaluationReport]:
    def key(r):
        s = STRATEGIES.index(r.strategy) if r.strategy in STRATEGIES else len(STRATEGIES)
        c = CLASSIFIERS.index(r.classifier) if r.classifier in CLASSIFIERS else len(CLASSIFIERS)
        return (s, r.strategy, c, r.classifier, r.seed)

    return sorted(reports, key=key)


def strategy_grid(reports: list[EvaluationReport], metric: str = "rank1") -> tuple[list[str], list[str], dict]:
    """Mean ``metric`` per (strategy, classifier) cell, averaged over seeds."""
    cells: dict[tuple[str, str], list[float]] = {}
    for r in reports:
        cells.setdefault((r.strategy, r.classifier), []).append(getattr(r, metric))
    rows = [s for s in STRATEGIES if any(k[0] == s for k in cells)] + sorted({k[0] for k in cells} - set(STRATEGIES))
    cols = [c for c in CLASSIFIERS if any(k[1] == c for k in cells)]
    return rows, cols, {k: sum(v) / len(v) for k, v in cells.items()}


def write_grid_csv(path, reports: list[EvaluationReport]) -> None:
    """Rows = strategies, columns = classifier rank-1 and rank-30 in percent."""
    rows, cols, r1 = strategy_grid(reports, "rank1")
    _, _, r30 = strategy_grid(reports, "rank30")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy"] + [f"{c}_rank1" for c in cols] + [f"{c}_rank30" for c in cols])
        for s in rows:
            vals = [r1.get((s, c)) for c in cols] + [r30.get((s, c)) for c in cols]
            w.writerow([s] + ["" if v is None else f"{100 * v:.2f}" for v in vals])


def plot_cmc(path, reports: list[EvaluationReport], max_rank: int | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in _ordered(reports):
        curve = r.cmc[:max_rank] if max_rank else r.cmc
        ax.plot(range(1, len(curve) + 1), [100 * v for v in curve], label=_label(r), lw=1.2)
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate (%)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_acc(path, reports: list[EvaluationReport]) -> None:
    """ACC@N (exactly N gallery samples) and ACC@L (probe side at least L)."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for r in _ordered(reports):
        if not r.acc:
            continue
        n = [(int(k), v["exactly"]) for k, v in r.acc["ACC@N"].items() if v["exactly"] is not None]
        side = [(int(k), v["at_least"]) for k, v in r.acc["ACC@L"].items() if v["at_least"] is not None]
        if n:
            a1.plot(*zip(*[(x, 100 * y) for x, y in sorted(n)]), marker="o", label=_label(r))
        if side:
            a2.plot(*zip(*[(x, 100 * y) for x, y in sorted(side)]), marker="s", label=_label(r))
    a1.set_xlabel("gallery samples of the probe palm (N)")
    a1.set_ylabel("rank-1 (%)")
    a2.set_xlabel("probe image side, at least (px)")
    for a in (a1, a2):
        a.set_ylim(0, 100)
        a.grid(alpha=0.3)
        if a.get_legend_handles_labels()[0]:
            a.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(reports: list[EvaluationReport], out_dir) -> dict[str, str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"grid": out / "strategy_grid.csv", "cmc_png": out / "cmc.png", "acc_png": out / "acc.png", "cmc_svg": out / "cmc.svg"}
    write_grid_csv(paths["grid"], reports)
    plot_cmc(paths["cmc_png"], reports)
    plot_acc(paths["acc_png"], reports)
    paths["cmc_svg"].write_text(cmc_svg({_label(r): r.cmc for r in _ordered(reports)}))
    return {k: str(v) for k, v in paths.items()}
