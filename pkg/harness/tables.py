import logging
import os
from typing import Dict, List, Optional

import pandas as pd

from harness.runner import ExperimentReport, check_output_dir

logger = logging.getLogger('bandsel.tables')

SELECTED_BANDS_FILE = "selected_bands.txt"
CLASS_MCC_FILE = "class_mcc.csv"
LONG_FILE = "weighted_mcc_long.csv"
SUMMARY_FILE = "weighted_mcc_summary.csv"
MAX_LISTED_BANDS = 15


def long_frame(report: ExperimentReport) -> pd.DataFrame:
    rows = [{"method": r.method, "k": r.band_count, "ratio": r.ratio, "seed": r.seed, "weighted_mcc": r.weighted_mcc}
            for r in report.ok_records()]
    return pd.DataFrame(rows, columns=["method", "k", "ratio", "seed", "weighted_mcc"])


def write_selected_bands(report: ExperimentReport, path: str) -> int:
    """Per method, ratio and seed: the first min(k_max, 15) bands of its ranking, space-separated."""
    lines = []
    for method in report.methods:
        records = [r for r in report.ok_records() if r.method == method]
        for ratio, seed in sorted({(r.ratio, r.seed) for r in records}):
            longest = max((r for r in records if r.ratio == ratio and r.seed == seed), key=lambda r: r.band_count)
            listed = longest.bands[:min(longest.band_count, MAX_LISTED_BANDS)]
            lines.append(f"{method:<8}{ratio:<8g}{seed:<6}{' '.join(str(b) for b in listed)}")
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{'method':<8}{'ratio':<8}{'seed':<6}bands\n")
        f.write("".join(line + "\n" for line in lines))
    return len(lines)


def write_class_mcc(report: ExperimentReport, path: str, focus_band_count: int) -> pd.DataFrame:
    """Classes as rows, methods as columns, at one band count; values are averaged over ratios and seeds present."""
    ok = report.ok_records()
    available = sorted({r.band_count for r in ok})
    if not available:
        frame = pd.DataFrame(columns=["class", "size"] + report.methods)
        frame.to_csv(path, index=False)
        return frame
    k = focus_band_count if focus_band_count in available else max(available)
    if k != focus_band_count:
        logger.warning(f"No records at {focus_band_count} bands; class MCC table uses k={k}")

    chosen = [r for r in ok if r.band_count == k]
    class_ids: List[int] = sorted({c for r in chosen for c in r.class_ids})
    names = [report.class_names.get(c, f"class_{c}") for c in class_ids]
    sizes: Dict[int, int] = {}
    columns: Dict[str, List[Optional[float]]] = {}
    weighted: Dict[str, Optional[float]] = {}
    for method in report.methods:
        mine = [r for r in chosen if r.method == method]
        if not mine:
            continue
        per_class = pd.DataFrame([dict(zip(r.class_ids, r.per_class_mcc)) for r in mine])
        columns[method] = [per_class[c].mean() if c in per_class else None for c in class_ids]
        weighted[method] = float(pd.Series([r.weighted_mcc for r in mine]).mean())
        for r in mine:
            for c, s in zip(r.class_ids, r.class_sizes):
                sizes.setdefault(c, s)

    frame = pd.DataFrame({"class": names, "size": [sizes.get(c) for c in class_ids], **columns})
    footer = pd.DataFrame({"class": ["Weighted Average"], "size": [sum(sizes.values())],
                           **{m: [v] for m, v in weighted.items()}})
    frame = pd.concat([frame, footer], ignore_index=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return frame


def write_summary(long: pd.DataFrame, path: str) -> pd.DataFrame:
    summary = (long.groupby(["method", "k", "ratio"], sort=False)["weighted_mcc"]
               .agg(["mean", "std", "count"]).reset_index())
    summary.to_csv(path, index=False, float_format="%.6f")
    return summary


def emit_tables(report: ExperimentReport, output_dir: str, focus_band_count: int = 15) -> List[str]:
    """Selected bands, per-class MCC, the long weighted-MCC CSV and, for several seeds, the seed summary."""
    check_output_dir(output_dir)
    written = []

    path = os.path.join(output_dir, SELECTED_BANDS_FILE)
    rows = write_selected_bands(report, path)
    written.append(path)

    path = os.path.join(output_dir, CLASS_MCC_FILE)
    write_class_mcc(report, path, focus_band_count)
    written.append(path)

    long = long_frame(report)
    path = os.path.join(output_dir, LONG_FILE)
    long.to_csv(path, index=False, float_format="%.6f")
    written.append(path)

    if long["seed"].nunique() > 1:
        path = os.path.join(output_dir, SUMMARY_FILE)
        write_summary(long, path)
        written.append(path)

    logger.info(f"Wrote {len(written)} tables to {output_dir} ({rows} band lists, {len(long)} weighted MCC rows)")
    return written
