"""Log-log slope fits for convergence-order estimation."""
import numpy as np

__all__ = ["loglog_slope", "within"]


def loglog_slope(x, y, floor=None):
    """Least-squares slope of ``log y`` against ``log x``.

    Points within ``10 * floor`` of the noise floor get weight 0.1.
    Non-positive values are dropped. Returns ``nan`` with fewer than two
    usable points.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    w = np.ones(ok.sum())
    if floor is not None:
        w[y[ok] < 10.0 * floor] = 0.1
    slope, _ = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1, w=np.sqrt(w))
    return float(slope)


def within(value, target, tol):
    return bool(np.isfinite(value) and abs(value - target) <= tol)
