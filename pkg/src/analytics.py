"""
Analytics module
Seed-averaged summaries, relative gains and ordering checks over result tables
"""

import numpy as np
import pandas as pd

from src.utils import percent_gain


class Analytics:
    """Statistics over wide result tables (one column per method, one row per cell)"""

    def __init__(self, frame):
        self.frame = frame

    def summarize(self, keys, methods, baseline=None):
        """
        Mean and standard deviation over seeds for every method at each key
        combination, plus the relative gain of each method over the baseline in percent.
        """
        if self.frame.empty:
            return pd.DataFrame()
        grouped = self.frame.groupby(list(keys), sort=True)[list(methods)]
        means = grouped.mean()
        stds = grouped.std(ddof=0).fillna(0.0)
        out = pd.DataFrame(index=means.index)
        out['seeds'] = grouped.size()
        for method in methods:
            out[f'{method}_mean'] = means[method]
            out[f'{method}_std'] = stds[method]
        if baseline is not None:
            for method in methods:
                if method == baseline:
                    continue
                out[f'{method}_gain_pct'] = [percent_gain(v, r) for v, r in zip(means[method], means[baseline])]
        return out.reset_index()

    def mean(self, column, **where):
        rows = self._select(where)
        return float(rows[column].mean()) if not rows.empty else float("nan")

    def gain(self, method, baseline, **where):
        """Relative gain of the seed-averaged method over the seed-averaged baseline, percent"""
        return percent_gain(self.mean(method, **where), self.mean(baseline, **where))

    def ordering_holds(self, keys, methods, tol=1e-9):
        """True if seed-averaged means are non-increasing along `methods` at every key"""
        if self.frame.empty:
            return False
        means = self.frame.groupby(list(keys))[list(methods)].mean()
        values = means.to_numpy()
        return bool(np.all(values[:, :-1] >= values[:, 1:] - tol))

    def _select(self, where):
        rows = self.frame
        for column, value in where.items():
            rows = rows[np.isclose(rows[column], value)] if isinstance(value, float) else rows[rows[column] == value]
        return rows

    @staticmethod
    def is_monotone(values, tol=1e-9):
        values = list(values)
        return all(b >= a - tol for a, b in zip(values, values[1:]))

    @staticmethod
    def ber_non_increasing(frame):
        """
        BER non-increasing in SNR within confidence: each point's lower bound
        stays below the previous point's upper bound.
        """
        ordered = frame.sort_values('snr_db')
        lows = ordered['ci_low'].to_numpy()
        highs = ordered['ci_high'].to_numpy()
        return bool(np.all(lows[1:] <= highs[:-1] + 1e-15))
