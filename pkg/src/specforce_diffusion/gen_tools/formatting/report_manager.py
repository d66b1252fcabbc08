"""
Report Manager for rendering a cross-evaluation report as a CSV/text bundle.
"""

import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from ..data.signals import NormalizationStats
from ..evaluation.cross_evaluation import TAG_REAL, TAG_SYNTHETIC, EvaluationReport, TsneCoordinates

FLOAT_FORMAT = "%.9g"


class ReportManager:
    """Writes every artifact of an evaluation report into one directory."""

    def __init__(self, class_names):
        self.class_names = tuple(class_names)
        self.logger = logging.getLogger(__name__)

    def format_summary(self, report: EvaluationReport) -> str:
        """Accuracy table with one row per classifier, one column per data source and the gap."""
        headers = ["Classifier", "Real test (%)", "Synthetic (%)", "Gap (pts)"]
        rows = []
        for variant in report.classification:
            rows.append([f"{variant}-based", f"{report.accuracy(variant, TAG_REAL):.2f}",
                         f"{report.accuracy(variant, TAG_SYNTHETIC):.2f}", f"{report.gap(variant):.2f}"])
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
        separator = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
        line = "| " + " | ".join(f"{{:{w}}}" for w in widths) + " |"
        lines = [separator, line.format(*headers), separator]
        lines += [line.format(*r) for r in rows]
        lines.append(separator)
        lines.append("")
        shrink = " (diagonal loading applied)" if report.fid.shrinkage_applied else ""
        lines.append(f"Frechet distance (image-classifier features): {report.fid.score:.6f}{shrink}")
        for channel, pdf in report.pdfs.items():
            lines.append(f"Channel {channel}: JS divergence {pdf.js_divergence:.6f} nats, "
                         f"Wasserstein-1 {pdf.wasserstein:.6f}")
        return "\n".join(lines) + "\n"

    def accuracy_frame(self, report: EvaluationReport) -> pd.DataFrame:
        records = []
        for variant, reports in report.classification.items():
            for tag, rep in reports.items():
                record = {"variant": variant, "split": tag, "accuracy": rep.accuracy, "samples": rep.total}
                record.update({f"acc_{name}": value for name, value in zip(self.class_names, rep.per_class)})
                records.append(record)
        return pd.DataFrame(records)

    def confusion_frame(self, confusion: np.ndarray) -> pd.DataFrame:
        frame = pd.DataFrame(confusion, index=list(self.class_names), columns=list(self.class_names))
        frame.index.name = "true"
        return frame

    def tsne_frame(self, coords: TsneCoordinates) -> pd.DataFrame:
        return pd.DataFrame({"x": coords.coords[:, 0], "y": coords.coords[:, 1], "source": coords.sources,
                             "class": [self.class_names[int(k)] for k in coords.labels]})

    def write_bundle(self, report: EvaluationReport, stats: NormalizationStats,
                     out_dir: Union[str, Path]) -> List[Path]:
        """
        Write summary.txt, accuracy.csv, confusion_<variant>_<split>.csv, fid.csv,
        pdf_<channel>.csv, tsne.csv, tsne_<channel>.csv and stats.csv.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written: List[Path] = []

        def save(frame: pd.DataFrame, name: str, index: bool = False) -> None:
            path = out_dir / name
            frame.to_csv(path, index=index, float_format=FLOAT_FORMAT)
            written.append(path)

        summary = out_dir / "summary.txt"
        summary.write_text(self.format_summary(report), encoding="utf-8")
        written.append(summary)
        save(self.accuracy_frame(report), "accuracy.csv")
        for variant, reports in report.classification.items():
            for tag, rep in reports.items():
                save(self.confusion_frame(rep.confusion), f"confusion_{variant}_{tag}.csv", index=True)
        save(pd.DataFrame([{"score": report.fid.score, "real_samples": report.fid.real.samples,
                            "synthetic_samples": report.fid.synthetic.samples,
                            "feature_dim": report.fid.real.dim,
                            "shrinkage": max(report.fid.real.shrinkage, report.fid.synthetic.shrinkage)}]),
             "fid.csv")
        for channel, pdf in report.pdfs.items():
            save(pd.DataFrame({"bin_center": pdf.bin_centers, "real_density": pdf.real_density,
                               "synth_density": pdf.synth_density}), f"pdf_{channel}.csv")
        if report.tsne is not None:
            save(self.tsne_frame(report.tsne), "tsne.csv")
        for channel, coords in report.tsne_channels.items():
            save(self.tsne_frame(coords), f"tsne_{channel}.csv")
        save(pd.DataFrame({"channel": list(stats.channel_names), "mean": stats.mean, "std": stats.std,
                           "split": stats.computed_over, "count": stats.count}), "stats.csv")
        self.logger.info(f"Report bundle with {len(written)} files written to {out_dir}")
        return written
