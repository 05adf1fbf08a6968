"""Range governance analytics for perpetual futures.

Builds normalized 4H panels (candles, funding, open interest, order books,
liquidations) out of raw venue data, computes structural / cost / positioning /
liquidity metrics, evaluates four range-behavior hypotheses against them, and
turns the results into regime labels and advisory output. Ships a deterministic
synthetic scenario generator and a backtester so every evaluator can be driven
against scripted ground truth.
"""

__version__ = "0.1.0"
