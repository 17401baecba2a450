"""
Report generation: JSON, trajectory CSV, sweep XLSX and run summaries.

Every file is written atomically. JSON is key-sorted and uses the shortest
round-trip float representation; CSV values use 17 significant digits.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from hyperlap.errors import BadInput
from hyperlap.utils import atomic_write_text, ensure_dir, format_row

logger = logging.getLogger(__name__)

try:
    from openpyxl import Workbook
    from openpyxl.styles import Alignment, Font, PatternFill
    from openpyxl.utils import get_column_letter
except ImportError:
    Workbook = None


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return _finite(float(o))
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"Object of type {o.__class__.__name__} is not JSON serializable")


def _finite(x: float):
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _plain(obj):
    """Recursively replace non-finite floats with strings (strict JSON)."""
    if isinstance(obj, float):
        return _finite(obj)
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _json_default(obj)
    return obj


def dumps_json(data: Any) -> str:
    return json.dumps(_plain(data), indent=2, sort_keys=True, ensure_ascii=False, default=_json_default) + "\n"


def read_trajectory_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Load a ``t,x1,...,xN`` file back into (times, states)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise BadInput(f"{path}: {e}")
    if not rows or not rows[0] or rows[0][0] != "t":
        raise BadInput(f"{path}: missing 't,x1,...' header")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as e:
        raise BadInput(f"{path}: {e}")
    width = len(rows[0])
    data = data.reshape(-1, width)
    return data[:, 0], data[:, 1:]


class Reporter:
    """Write run outputs into ``output_dir``."""

    def __init__(self, output_dir: str):
        self.output_dir = ensure_dir(output_dir)

    def write_json(self, name: str, data: Any) -> str:
        path = atomic_write_text(self.output_dir / name, dumps_json(data))
        logger.info(f"JSON report generated: {path}")
        return path

    def write_trajectory_csv(self, name: str, times: Sequence[float], states: np.ndarray, prefix: str = "x") -> str:
        states = np.asarray(states, dtype=float)
        header = ",".join(["t"] + [f"{prefix}{i + 1}" for i in range(states.shape[1])])
        lines = [header] + [format_row([t, *row]) for t, row in zip(times, states)]
        path = atomic_write_text(self.output_dir / name, "\n".join(lines) + "\n")
        logger.info(f"CSV generated: {path}")
        return path

    def write_sweep_xlsx(self, summary_rows: List[Dict[str, Any]], stage_rows: Dict[str, List[Dict[str, Any]]]) -> str:
        """SUMMARY sheet with one row per (q, lambda) stage plus one sheet per stage."""
        if Workbook is None:
            logger.warning("openpyxl not available, skipping Excel report generation")
            return ""

        xlsx_path = self.output_dir / "sweep_report.xlsx"
        wb = Workbook()

        ws_summary = wb.active
        ws_summary.title = "SUMMARY"
        ws_summary["A1"] = "SWEEP TO THE ORIGINAL PROBLEM"
        ws_summary["A1"].font = Font(bold=True, size=14)
        headers = list(summary_rows[0].keys()) if summary_rows else []
        self._write_table(ws_summary, headers, summary_rows, first_row=3)

        for title, rows in stage_rows.items():
            ws = wb.create_sheet(title=title[:31])
            self._write_table(ws, list(rows[0].keys()) if rows else [], rows, first_row=1)

        tmp_path = xlsx_path.with_suffix(".xlsx.tmp")
        wb.save(tmp_path)
        tmp_path.replace(xlsx_path)
        logger.info(f"Excel report generated: {xlsx_path}")
        return str(xlsx_path)

    @staticmethod
    def _write_table(ws, headers: List[str], rows: List[Dict[str, Any]], first_row: int) -> None:
        for col_idx, header in enumerate(headers, 1):
            cell = ws.cell(row=first_row, column=col_idx)
            cell.value = header
            cell.font = Font(bold=True)
            cell.fill = PatternFill(start_color="D3D3D3", end_color="D3D3D3", fill_type="solid")
            cell.alignment = Alignment(horizontal="center", vertical="center")
        for row_idx, row_data in enumerate(rows, first_row + 1):
            for col_idx, header in enumerate(headers, 1):
                value = row_data.get(header, "")
                ws.cell(row=row_idx, column=col_idx).value = _plain(value) if isinstance(value, float) else value
        ws.freeze_panes = ws.cell(row=first_row + 1, column=1).coordinate
        for col_idx in range(1, len(headers) + 1):
            ws.column_dimensions[get_column_letter(col_idx)].width = 22

    def write_summary(self, title: str, sections: Mapping[str, Mapping[str, Any]]) -> str:
        """Plain-text run summary (``run_summary.txt``)."""
        lines = ["=" * 80, title, "=" * 80, ""]
        for section, values in sections.items():
            lines.append(section)
            lines.append("-" * 80)
            for key, value in values.items():
                lines.append(f"{key}: {value}")
            lines.append("")
        lines.append("=" * 80)
        path = atomic_write_text(self.output_dir / "run_summary.txt", "\n".join(lines) + "\n")
        logger.info(f"Summary generated: {path}")
        return path
