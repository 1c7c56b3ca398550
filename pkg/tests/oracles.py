"""Independent reference implementations used as test oracles.

Everything here is written from the mathematical definitions with plain
Python / scipy building blocks, deliberately sharing no code with the
package under test.
"""
import math

import numpy as np
from scipy.optimize import linprog


def brute_force_features(posted_s, deadline_s, funder_ids, times_s, amounts,
                         orientation="mean-over-std"):
    """Reference crowd features from plain-python arithmetic.

    Times are epoch seconds sorted ascending; returns a dict of the five
    features.  Sample (n-1) standard deviations throughout.
    """
    n = len(times_s)
    assert n >= 1

    appeal = len(set(funder_ids))

    def mean(vs):
        return sum(vs) / len(vs)

    def sample_std(vs):
        if len(vs) < 2:
            return 0.0
        m = mean(vs)
        return math.sqrt(sum((v - m) ** 2 for v in vs) / (len(vs) - 1))

    momentum = 0.0
    if n >= 3:
        gaps = [(times_s[i + 1] - times_s[i]) / 86400.0 for i in range(n - 1)]
        sd = sample_std(gaps)
        if sd > 0.0:
            if orientation == "mean-over-std":
                momentum = mean(gaps) / sd
            else:
                momentum = sd / mean(gaps) if mean(gaps) > 0 else 0.0

    variation = 0.0
    if n >= 2 and mean(amounts) > 0:
        variation = sample_std(amounts) / mean(amounts)

    first_days = (times_s[0] - posted_s) / 86400.0
    if deadline_s is not None:
        window_days = (deadline_s - posted_s) / 86400.0
        latency = min(max(first_days / window_days, 0.0), 1.0)
    else:
        latency = first_days

    engagement = (times_s[-1] - times_s[0]) / 86400.0

    return {"appeal": float(appeal), "momentum": momentum, "variation": variation,
            "latency": latency, "engagement": engagement}


def student_t_two_sided_p(t_value, df):
    """Two-sided t-tail probability by numerical quadrature of the pdf."""
    t_value = abs(float(t_value))

    def pdf(x):
        c = math.gamma((df + 1) / 2.0) / (math.sqrt(df * math.pi) * math.gamma(df / 2.0))
        return c * (1.0 + x * x / df) ** (-(df + 1) / 2.0)

    # integrate the density over [0, t] with Simpson's rule, then fold
    steps = 20001
    xs = np.linspace(0.0, t_value, steps)
    ys = np.array([pdf(x) for x in xs])
    h = xs[1] - xs[0] if t_value > 0 else 0.0
    integral = h / 3.0 * (ys[0] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum() + ys[-1]) if t_value > 0 else 0.0
    return 2.0 * (0.5 - integral)


def dip_lp_oracle(x):
    """Dip statistic via linear programming.

    min over unimodal cdfs G of sup |F_n - G|: for each candidate mode index
    solve an LP for the best piecewise-linear G with increasing slopes before
    the mode and decreasing after, within the ecdf's corner constraints.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    dx = np.diff(x)
    best = np.inf
    for m in range(n):
        nv = n + 1  # G_0..G_{n-1}, rho
        c = np.zeros(nv)
        c[-1] = 1.0
        rows = []
        rhs = []
        for i in range(n):
            row = np.zeros(nv)
            row[i], row[-1] = 1.0, -1.0
            rows.append(row)
            rhs.append(i / n)
            row = np.zeros(nv)
            row[i], row[-1] = -1.0, -1.0
            rows.append(row)
            rhs.append(-(i + 1) / n)
        for i in range(n - 1):
            row = np.zeros(nv)
            row[i], row[i + 1] = 1.0, -1.0
            rows.append(row)
            rhs.append(0.0)
        for i in range(1, m):
            row = np.zeros(nv)
            row[i - 1] = -dx[i]
            row[i] = dx[i] + dx[i - 1]
            row[i + 1] = -dx[i - 1]
            rows.append(row)
            rhs.append(0.0)
        for i in range(m + 1, n - 1):
            row = np.zeros(nv)
            row[i - 1] = dx[i]
            row[i] = -dx[i] - dx[i - 1]
            row[i + 1] = dx[i - 1]
            rows.append(row)
            rhs.append(0.0)
        bounds = [(0.0, 1.0)] * n + [(0.0, None)]
        res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                      method="highs")
        if res.status == 0 and res.fun < best:
            best = res.fun
    return best
