"""Pure-numpy implementations of the hot kernels.

Mirrors ``vam._kernels`` call-for-call. Used when the compiled extension is
missing or when ``VAM_PURE_PYTHON`` is set.
"""
import numpy as np


def kprototype_cross(xs, xc, ys, yc, gamma):
    """Mixed distance between every row of ``xs`` and every row of ``ys``.

    ``xs``/``ys`` hold numeric attributes already divided by their range
    width; ``xc``/``yc`` hold integer category codes.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    acc = np.zeros((xs.shape[0], ys.shape[0]))
    for k in range(xs.shape[1]):
        d = xs[:, k, None] - ys[None, :, k]
        acc += d * d
    mism = np.zeros_like(acc)
    for k in range(xc.shape[1]):
        mism += xc[:, k, None] != yc[None, :, k]
    return np.sqrt(acc + gamma * mism)


def rate_adjusted_cross(xf, xage, xc, yf, yage, yc, max_age, gamma):
    """Moneyness/age-weighted distance between rows of two feature blocks.

    Feature columns are ``exp(-r) * age``, ``exp(-r) * maturity`` and
    ``exp(-r) * withdrawal_rate`` with ``r = AV / GD``.
    """
    xf = np.asarray(xf, dtype=np.float64)
    yf = np.asarray(yf, dtype=np.float64)
    d = xf[:, 0, None] - yf[None, :, 0]
    acc = np.exp((xage[:, None] + yage[None, :]) / 2.0 - max_age) * (d * d)
    for k in (1, 2):
        d = xf[:, k, None] - yf[None, :, k]
        acc += d * d
    mism = np.zeros_like(acc)
    for k in range(xc.shape[1]):
        mism += xc[:, k, None] != yc[None, :, k]
    return np.sqrt(acc + gamma * mism)


def va_liabilities(growth, av0s, gd0, gw0, wr, death_w, surv_w, disc):
    """Per-scenario discounted guarantee cost for several starting fund values.

    Parameters
    ----------
    growth : (M, T) array
        Gross fund return over each policy year.
    av0s : (K,) array
        Starting account values (base and bumped) sharing the same paths.
    gd0, gw0, wr : float
        Death benefit base, withdrawal benefit base, annual withdrawal rate.
        ``gw0 = 0`` disables withdrawals.
    death_w, surv_w, disc : (T,) arrays
        Probability of dying in year t, of surviving to the end of year t,
        and the discount factor to the end of year t.

    Returns
    -------
    (K, M) array
    """
    growth = np.asarray(growth, dtype=np.float64)
    av0s = np.asarray(av0s, dtype=np.float64)
    m, horizon = growth.shape
    av = np.repeat(av0s[:, None], m, axis=1)
    out = np.zeros_like(av)
    planned = wr * gw0
    balance = gw0
    gd = gd0
    for t in range(horizon):
        av = av * growth[:, t]
        cost = death_w[t] * np.maximum(gd - av, 0.0)
        if planned > 0.0 and balance > 0.0:
            w = min(planned, balance)
            cost = cost + surv_w[t] * np.maximum(w - av, 0.0)
            av = np.maximum(av - w, 0.0)
            balance -= w
            gd = gd0 * balance / gw0
        out += disc[t] * cost
    return out
