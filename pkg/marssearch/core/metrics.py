"""Effort and data ratios, their macro averages, and tabular report data.

E = Mars session time / Earth session time and D = pages sent to Mars /
pages delivered on Earth are computed per session and then averaged over
sessions (a mean of ratios, not a ratio of means).
"""

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from marssearch.core.models import (
    CacheHitReport,
    Exclusion,
    GainCurve,
    RatioReport,
    SessionOutcome,
    SessionRatio,
    SimulationResult,
    TableRow,
)
from marssearch.utils.io import TABLE_DELIMITERS, write_table
from marssearch.utils.logger import logger

TABLE_HEADER = ("location", "lag_min", "avg_time_s", "avg_pages", "E", "D")
SESSION_HEADER = ("session_id", "earth_time_s", "mars_time_s", "pages", "waits")
SCATTER_HEADER = ("session_id", "duration_s", "pages")
HIT_RATIO_HEADER = ("fraction", "clicked_ratio", "serp_ratio")
GAIN_HEADER = ("time_s", "recall", "shipped")
EXCLUSION_HEADER = ("policy", "lag_min", "session_id", "reason")


class UndefinedRatioError(ValueError):
    """A session has no Earth duration or no Earth pages to divide by."""


def effort_ratio(outcome: SessionOutcome) -> float:
    if outcome.earth_time_s <= 0:
        raise UndefinedRatioError(f"Session {outcome.session_id} has zero Earth duration")
    return outcome.mars_time_s / outcome.earth_time_s


def data_ratio(outcome: SessionOutcome, earth_pages: Optional[int] = None) -> float:
    pages = outcome.earth_pages if earth_pages is None else earth_pages
    if pages <= 0:
        raise UndefinedRatioError(f"Session {outcome.session_id} has zero Earth pages")
    return outcome.pages_transferred / pages


def _split(outcomes: Iterable[SessionOutcome]) -> Tuple[List[SessionRatio], List[Exclusion]]:
    ratios, excluded = [], []
    for outcome in outcomes:
        try:
            e, d = effort_ratio(outcome), data_ratio(outcome)
        except UndefinedRatioError as exc:
            excluded.append(Exclusion(session_id=outcome.session_id, reason=str(exc)))
            continue
        ratios.append(
            SessionRatio(
                session_id=outcome.session_id,
                E=e,
                D=d,
                earth_time_s=outcome.earth_time_s,
                mars_time_s=outcome.mars_time_s,
                earth_pages=outcome.earth_pages,
                pages_transferred=outcome.pages_transferred,
            )
        )
    if excluded:
        logger.warning(f"Excluded {len(excluded)} sessions with undefined ratios")
    return ratios, excluded


def ratio_report(
    outcomes: Sequence[SessionOutcome],
    policy: str = "baseline",
    lag_min: float = 0.0,
    location: str = "Mars",
) -> RatioReport:
    ratios, excluded = _split(outcomes)
    report = RatioReport(
        location=location, policy=policy, lag_min=lag_min, per_session=ratios, excluded=excluded
    )
    if ratios:
        report.macro_E = float(np.mean([r.E for r in ratios]))
        report.macro_D = float(np.mean([r.D for r in ratios]))
        report.avg_time_s = float(np.mean([r.mars_time_s for r in ratios]))
        report.avg_pages = float(np.mean([r.pages_transferred for r in ratios]))
    return report


def result_report(result: SimulationResult) -> RatioReport:
    return ratio_report(result.outcomes, result.policy, result.lag_min)


def location_label(policy: str) -> str:
    return "Mars" if policy == "baseline" else f"Mars/{policy}"


def table_row(report: RatioReport) -> TableRow:
    return TableRow(
        location=report.location if report.location != "Mars" else location_label(report.policy),
        lag_min=report.lag_min,
        avg_time_s=report.avg_time_s,
        avg_pages=report.avg_pages,
        E=report.macro_E,
        D=report.macro_D,
        policy=report.policy,
    )


def earth_row(outcomes: Sequence[SessionOutcome]) -> TableRow:
    """The Earth reference row: logged durations and pages, E = D = 1."""
    ratios, _ = _split(outcomes)
    return TableRow(
        location="Earth",
        lag_min=0,
        avg_time_s=float(np.mean([r.earth_time_s for r in ratios])) if ratios else 0.0,
        avg_pages=float(np.mean([r.earth_pages for r in ratios])) if ratios else 0.0,
        E=1.0,
        D=1.0,
    )


def table_rows(results: Sequence[SimulationResult]) -> List[TableRow]:
    """Earth row first, then one row per policy and lag. Empty in, empty out."""
    populated = [r for r in results if r.outcomes]
    if not populated:
        return []
    ordered = sorted(populated, key=lambda r: (r.policy != "baseline", r.policy, r.lag_min))
    return [earth_row(ordered[0].outcomes)] + [table_row(result_report(r)) for r in ordered]


def _fmt_lag(lag: float) -> str:
    return str(int(lag)) if float(lag).is_integer() else f"{lag:g}"


def _fmt(value: Optional[float], digits: int = 3) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def format_row(row: TableRow) -> List[str]:
    return [
        row.location,
        _fmt_lag(row.lag_min),
        _fmt(row.avg_time_s),
        _fmt(row.avg_pages),
        _fmt(row.E),
        _fmt(row.D),
    ]


def session_rows(outcomes: Sequence[SessionOutcome]) -> List[List[str]]:
    return [
        [o.session_id, _fmt(o.earth_time_s), _fmt(o.mars_time_s), str(o.pages_transferred), str(o.blocking_waits)]
        for o in outcomes
    ]


def scatter_points(outcomes: Sequence[SessionOutcome]) -> List[Tuple[str, float, int]]:
    """Per-session (session_id, Mars duration, pages transferred)."""
    return [(o.session_id, o.mars_time_s, o.pages_transferred) for o in outcomes]


def hit_ratio_rows(reports: Sequence[CacheHitReport]) -> List[List[str]]:
    return [
        [_fmt(r.fraction, 4), _fmt(r.clicked_hit_ratio, 4), _fmt(r.serp_hit_ratio, 4)]
        for r in reports
    ]


def gain_curve_rows(curve: GainCurve) -> List[List[str]]:
    return [[_fmt(p.time_s), f"{p.recall:.4f}", str(p.docs_shipped)] for p in curve.points]


def exclusion_rows(results: Sequence[SimulationResult]) -> List[List[str]]:
    rows = []
    for result in results:
        for exclusion in result_report(result).excluded:
            rows.append([result.policy, _fmt_lag(result.lag_min), exclusion.session_id, exclusion.reason])
    return rows


def emit_reports(
    results: Sequence[SimulationResult], out_dir: str | Path, fmt: str = "csv"
) -> List[Path]:
    """Write the summary table, per-result scatter data and exclusions."""
    if fmt not in TABLE_DELIMITERS:
        raise ValueError(f"Unknown format: '{fmt}' (expected one of {sorted(TABLE_DELIMITERS)})")
    out_dir = Path(out_dir)
    written = [
        write_table(out_dir / f"table.{fmt}", TABLE_HEADER, [format_row(r) for r in table_rows(results)], fmt)
    ]
    for result in results:
        rows = [[sid, _fmt(t), str(p)] for sid, t, p in scatter_points(result.outcomes)]
        name = f"scatter_{result.policy}_{_fmt_lag(result.lag_min)}.{fmt}"
        written.append(write_table(out_dir / name, SCATTER_HEADER, rows, fmt))
    written.append(write_table(out_dir / f"exclusions.{fmt}", EXCLUSION_HEADER, exclusion_rows(results), fmt))
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
