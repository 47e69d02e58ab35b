"""
Benchmark reports: per-split tables, run comparisons and bar plots.

An evaluation directory holds report.json (an EvalReport), report.csv,
report.txt and optionally timing.json with inference throughput.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from ..models.eval_models import EvalReport, SplitScore

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"
TIMING_FILE = "timing.json"
EMPTY_NOTICE = "No evaluation runs found; nothing to report."

QUERY_ORDER = ("QP", "OTSA")
FUSION_ORDER = ("AVI", "AVI_CONCAT", "CONCAT", "WEIGHTED_SUM", "ATTENTION")

logger = logging.getLogger(__name__)


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(rows: List[Dict[str, Any]], columns: Sequence[str], title: str = "") -> str:
    """Left-aligned first column, right-aligned numbers, one header rule"""
    cells = [[_fmt(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]

    def line(values: Sequence[str]) -> str:
        parts = [values[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(values[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    out = [title] if title else []
    out.append(line(list(columns)))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(r) for r in cells)
    return "\n".join(out)


def split_rows(report: EvalReport) -> List[Dict[str, Any]]:
    """Rows for the overall score, splits I-VIII and tagged subsets, in that order"""
    def row(s: SplitScore, group: str) -> Dict[str, Any]:
        return {"group": group, "name": s.name, "J": s.J, "F": s.F, "J&F": s.JF, "MET.": s.meteor, "n": s.count}

    rows = [row(report.overall, "overall")]
    rows.extend(row(s, "split") for s in report.splits.values())
    rows.extend(row(s, "subset") for _, s in sorted(report.subsets.items()))
    return rows


def render_report(report: EvalReport) -> str:
    rows = split_rows(report)
    text = format_table(rows, ["name", "J", "F", "J&F", "MET.", "n"], title="Per-split scores")
    if report.missing:
        text += f"\n\n{report.missing} expression(s) had no prediction and scored 0."
    return text


def write_report(report: EvalReport, out_dir: Path, timing: Optional[Dict[str, Any]] = None) -> Path:
    """report.json, report.csv and report.txt (plus timing.json when throughput is known)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / REPORT_JSON, "w") as f:
        json.dump(report.to_dict(), f, indent=1, sort_keys=True)
    pd.DataFrame(split_rows(report)).to_csv(out_dir / REPORT_CSV, index=False)
    (out_dir / REPORT_TXT).write_text(render_report(report) + "\n")
    if timing is not None:
        with open(out_dir / TIMING_FILE, "w") as f:
            json.dump(timing, f, indent=1, sort_keys=True)
    logger.info(f"Wrote evaluation report to {out_dir}")
    return out_dir / REPORT_JSON


def read_timing(directory: Path) -> Optional[Dict[str, Any]]:
    path = Path(directory) / TIMING_FILE
    if not path.exists():
        return None
    with open(path, "r") as f:
        return json.load(f)


def load_run(eval_dir: Path) -> Tuple[EvalReport, Dict[str, Any]]:
    eval_dir = Path(eval_dir)
    with open(eval_dir / REPORT_JSON, "r") as f:
        report = EvalReport.from_dict(json.load(f))
    return report, read_timing(eval_dir) or {}


def _run_name(eval_dir: Path, report: EvalReport) -> str:
    info = report.run_info
    if "regime" in info and "fusion" in info:
        return f"{info['fusion']}-{info['regime']}-seed{info.get('seed', 0)}"
    return eval_dir.name


def _ordered(keys: Sequence[str], order: Sequence[str]) -> List[str]:
    known = [k for k in order if k in keys]
    return known + sorted(k for k in keys if k not in order)


class ReportBuilder:
    """Collects evaluated runs and renders split tables plus query-type and fusion-type comparisons"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.runs: List[Dict[str, Any]] = []
        self.missing: List[str] = []

    def add_runs(self, eval_dirs: Sequence[Path]) -> "ReportBuilder":
        for eval_dir in eval_dirs:
            eval_dir = Path(eval_dir)
            if not (eval_dir / REPORT_JSON).exists():
                self.logger.warning(f"No report in {eval_dir}; listed as missing")
                self.missing.append(str(eval_dir))
                continue
            try:
                report, timing = load_run(eval_dir)
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                self.logger.warning(f"Unreadable report in {eval_dir}: {e}")
                self.missing.append(str(eval_dir))
                continue
            self.runs.append({"name": _run_name(eval_dir, report), "report": report, "timing": timing})
        return self

    def comparison(self, key: str, order: Sequence[str]) -> List[Dict[str, Any]]:
        """One row per distinct run_info[key], scores averaged over the runs (seeds) sharing it"""
        groups: Dict[str, List[Dict[str, Any]]] = {}
        for run in self.runs:
            value = run["report"].run_info.get(key)
            if value is not None:
                groups.setdefault(str(value), []).append(run)

        rows = []
        for value in _ordered(list(groups), order):
            members = groups[value]
            overall = [m["report"].overall for m in members]
            sync = [m["report"].subsets["sync_critical"].JF for m in members
                    if "sync_critical" in m["report"].subsets]
            fps = [m["timing"]["fps"] for m in members if "fps" in m["timing"]]
            rows.append({
                key: value,
                "J": float(np.mean([s.J for s in overall])),
                "F": float(np.mean([s.F for s in overall])),
                "J&F": float(np.mean([s.JF for s in overall])),
                "sync J&F": float(np.mean(sync)) if sync else None,
                "fps": float(np.mean(fps)) if fps else None,
                "runs": len(members),
            })
        return rows

    def render(self) -> str:
        if not self.runs:
            text = EMPTY_NOTICE
            if self.missing:
                text += "\nMissing runs:\n" + "\n".join(f"  {m}" for m in self.missing)
            return text

        sections = []
        for run in self.runs:
            sections.append(f"== {run['name']} ==\n{render_report(run['report'])}")

        query = self.comparison("regime", QUERY_ORDER)
        if len(query) > 1:
            sections.append(format_table(query, ["regime", "J", "F", "J&F", "fps", "runs"],
                                         title="Query type comparison"))
        fusion = self.comparison("fusion", FUSION_ORDER)
        if len(fusion) > 1:
            sections.append(format_table(fusion, ["fusion", "J", "F", "J&F", "sync J&F", "runs"],
                                         title="Fusion type comparison"))
        if self.missing:
            sections.append("Missing runs:\n" + "\n".join(f"  {m}" for m in self.missing))
        return "\n\n".join(sections)

    def write(self, out_dir: Path) -> Path:
        """summary.txt, comparison CSVs and PNG bar plots"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = out_dir / "summary.txt"
        summary.write_text(self.render() + "\n")
        if not self.runs:
            self.logger.warning(EMPTY_NOTICE)
            return summary

        rows = []
        for run in self.runs:
            rows.extend(dict(run=run["name"], **r) for r in split_rows(run["report"]))
        pd.DataFrame(rows).to_csv(out_dir / "splits.csv", index=False)
        self._plot_splits(out_dir / "splits.png")

        for key, order, name in (("regime", QUERY_ORDER, "query_type"), ("fusion", FUSION_ORDER, "fusion_type")):
            table = self.comparison(key, order)
            if len(table) > 1:
                pd.DataFrame(table).to_csv(out_dir / f"{name}.csv", index=False)
                self._plot_bars([r[key] for r in table], [r["J&F"] for r in table],
                                f"J&F by {key}", out_dir / f"{name}.png")
        self.logger.info(f"Wrote report for {len(self.runs)} run(s) to {out_dir}")
        return summary

    def _plot_splits(self, path: Path):
        names = [s for s in ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")
                 if any(s in run["report"].splits for run in self.runs)]
        if not names:
            return
        x = np.arange(len(names))
        width = 0.8 / len(self.runs)
        fig, ax = plt.subplots(figsize=(8, 4))
        for k, run in enumerate(self.runs):
            values = [run["report"].splits[s].JF if s in run["report"].splits else 0.0 for s in names]
            ax.bar(x + k * width, values, width, label=run["name"])
        ax.set_xticks(x + width * (len(self.runs) - 1) / 2)
        ax.set_xticklabels(names)
        ax.set_ylim(0, 1)
        ax.set_ylabel("J&F")
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)

    @staticmethod
    def _plot_bars(labels: List[str], values: List[float], title: str, path: Path):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.bar(labels, values, color="tab:blue")
        ax.set_ylim(0, 1)
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
