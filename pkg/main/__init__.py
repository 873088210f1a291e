"""
kworst/main

The k-Worst Non-ESG portfolio engine: data ingestion, score normalization,
the quadratic program solver, the portfolio models, the efficient surface,
backtests and performance measures.
"""

__version__ = '1.0.0'
