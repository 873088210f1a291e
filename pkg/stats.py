"""
kworst/stats.py

Extra views over a stored backtest report. Invoke with
`python stats.py <report-dir>`, optionally followed by an ROI horizon in days.
"""

import sys
from typing import Optional

from main.backtest import BacktestReport, load_report
from main.metrics import evaluate, roi_table
from main.storage import format_cell


def show_metrics(report: BacktestReport) -> None:
    frame = evaluate(report).to_frame()
    print(f'Out-of-sample performance over {len(report.dates)} days:')
    print(frame.map(format_cell).to_string(index=False))
    print('')


def show_roi(report: BacktestReport, horizon: Optional[int]) -> None:
    frame = roi_table(report, horizon).to_frame()
    print(f'ROI over {horizon or "the default"} day horizon:')
    print(frame.map(format_cell).to_string(index=False))
    print('')


def show_failures(report: BacktestReport) -> None:
    for name, run in report.runs.items():
        for diagnostic in run.diagnostics:
            if diagnostic.failed:
                print(
                    f'{name:<16} | {diagnostic.rebalance_date.isoformat()} | '
                    f'{diagnostic.status:<15} | {diagnostic.message}'
                )


if __name__ == '__main__':
    if len(sys.argv) < 2:
        print('usage: python stats.py <report-dir> [roi-horizon]')
        sys.exit(1)

    report = load_report(sys.argv[1])
    horizon = int(sys.argv[2]) if len(sys.argv) > 2 else None

    show_metrics(report)
    show_roi(report, horizon)
    if report.failures:
        print(f'{report.failures} solve(s) were replaced by held weights:')
        show_failures(report)
