"""Run reports: the JSON report, the per-document CSV, and summary figures.

The JSON report is the interchange format (the significance command consumes
two of them); the CSV and the PNG figures are rendered alongside it for quick
inspection.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .config import RunConfig, config_hash
from .errors import IdMismatch
from .evaluation import Metrics, SignificanceResult, aggregate, wilcoxon_signed_rank


def build_report(
    cfg: RunConfig, per_doc: Sequence[tuple[str, Metrics]], model_id: str
) -> dict:
    items = sorted(per_doc, key=lambda pair: pair[0])
    agg = aggregate([m for _, m in items]) if items else Metrics.from_counts(0, 0, 0)
    return {
        "dataset": cfg.dataset_name,
        "model": model_id,
        "aggregate": {
            "precision": agg.precision,
            "recall": agg.recall,
            "f1": agg.f1,
        },
        "per_doc": [
            {
                "doc_id": doc_id,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "true_positives": m.true_positives,
                "predicted_count": m.predicted_count,
                "gold_count": m.gold_count,
            }
            for doc_id, m in items
        ],
        "config_hash": config_hash(cfg),
    }


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def write_report_files(report: dict, out_dir: str | Path, figures: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    report_path.write_bytes(report_json_bytes(report))
    _write_csv(report, out / "report.csv")
    if figures:
        render_figures(report, out / "figures")
    return report_path


def _write_csv(report: dict, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["doc_id", "precision", "recall", "f1", "true_positives", "predicted_count", "gold_count"]
        )
        for row in report["per_doc"]:
            writer.writerow(
                [
                    row["doc_id"],
                    f"{row['precision']:.6f}",
                    f"{row['recall']:.6f}",
                    f"{row['f1']:.6f}",
                    row["true_positives"],
                    row["predicted_count"],
                    row["gold_count"],
                ]
            )


def render_figures(report: dict, fig_dir: str | Path) -> list[Path]:
    """Per-document F1 bars and an F1 histogram, written as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    rows = report["per_doc"]
    written: list[Path] = []
    if not rows:
        return written

    doc_ids = [r["doc_id"] for r in rows]
    f1s = [r["f1"] for r in rows]

    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows)), 4))
    ax.bar(range(len(rows)), f1s, color="#4878a8")
    ax.axhline(report["aggregate"]["f1"], color="#c44e52", linestyle="--", linewidth=1,
               label=f"aggregate F1 = {report['aggregate']['f1']:.3f}")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(doc_ids, rotation=90, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("entity-level F1")
    ax.set_title(f"{report['dataset']} / {report['model']}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = fig_dir / "f1_per_doc.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(f1s, bins=min(20, max(5, len(rows))), range=(0, 1), color="#4878a8",
            edgecolor="white")
    ax.set_xlabel("per-document F1")
    ax.set_ylabel("documents")
    ax.set_title("F1 distribution")
    fig.tight_layout()
    path = fig_dir / "f1_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


# --- significance between two runs ---------------------------------------------


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def significance_between(report_a: dict, report_b: dict) -> SignificanceResult:
    """Wilcoxon signed-rank over the per-document F1 lists, paired by doc_id."""
    a_f1 = {r["doc_id"]: r["f1"] for r in report_a["per_doc"]}
    b_f1 = {r["doc_id"]: r["f1"] for r in report_b["per_doc"]}
    if set(a_f1) != set(b_f1):
        only_a = sorted(set(a_f1) - set(b_f1))[:5]
        only_b = sorted(set(b_f1) - set(a_f1))[:5]
        raise IdMismatch(f"reports cover different documents (e.g. {only_a} vs {only_b})")
    doc_ids = sorted(a_f1)
    return wilcoxon_signed_rank([a_f1[i] for i in doc_ids], [b_f1[i] for i in doc_ids])


def significance_to_obj(result: SignificanceResult) -> dict:
    return {
        "n_pairs": result.n_pairs,
        "n_nonzero": result.n_nonzero,
        "w_statistic": result.w_statistic,
        "p_value": result.p_value,
        "method": result.method,
    }
