""" Least-squares tail fits shared by the trajectory diagnostics. """
import logging
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from torus_nf.utils import NumericError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_RATE_BOUNDS = (0.5, 10.0)


class TailFit(NamedTuple):
    """ Fit of y(t) = limit + amplitude * exp(-rate * (t - t0)). """

    limit: np.ndarray
    amplitude: np.ndarray
    rate: float
    residual: float
    window: tuple
    condition: float
    n_points: int

    def to_dict(self):
        return {
            "limit": self.limit,
            "amplitude": self.amplitude,
            "rate": self.rate,
            "residual": self.residual,
            "window": list(self.window),
            "condition": self.condition,
            "n_points": self.n_points,
        }


class LogLinearFit(NamedTuple):
    """ Fit of log y = intercept + slope * t + log_coeff * log t. """

    intercept: float
    slope: float
    log_coeff: float
    residual: float
    window: tuple
    n_points: int

    def to_dict(self):
        return dict(self._asdict(), window=list(self.window))


def _window_arrays(t, y, window):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y)
    if window is not None:
        t0, t1 = window
        eps = 1e-9 * max(1.0, abs(t1))
        mask = (t >= t0 - eps) & (t <= t1 + eps)
        t, y = t[mask], y[mask]
    if len(t) < 4:
        raise ValidationError(
            f"Need at least 4 samples to fit, got {len(t)} in window {window}"
        )
    return t, y


def _projected_fit(t, Y, rate, t0):
    X = np.stack([np.ones_like(t), np.exp(-rate * (t - t0))], axis=1)
    coef, _, _, sv = np.linalg.lstsq(X.astype(Y.dtype), Y, rcond=None)
    res = Y - X @ coef
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    return coef, float(np.sum(np.abs(res) ** 2)), cond


def fit_exponential_tail(t, y, window=None, rate_bounds=DEFAULT_RATE_BOUNDS):
    """ Fit limit + c exp(-rate t) on a window by variable projection.

    For fixed rate the model is linear in (limit, c), so the residual is
    minimized over the rate only. ``y`` may be real or complex and may carry
    trailing axes; all components share one rate.

    Parameters
    ----------
    t : array_like, shape (n,)
        Sample times.

    y : array_like, shape (n, ...)
        Samples.

    window : tuple, optional
        (t_start, t_end) restricting the samples.

    rate_bounds : tuple, default (0.5, 10)
        Admissible range of the transient rate.

    Returns
    -------
    fit : TailFit
    """
    t, y = _window_arrays(t, y, window)
    shape = y.shape[1:]
    Y = y.reshape(len(t), -1)
    if not np.iscomplexobj(Y):
        Y = Y.astype(float)
    if not np.all(np.isfinite(Y)):
        raise NumericError("Non-finite samples in tail fit")

    t0 = t[0]
    lo, hi = rate_bounds
    if not 0 < lo < hi:
        raise ValidationError(f"Invalid rate bounds {rate_bounds}")

    opt = minimize_scalar(
        lambda r: _projected_fit(t, Y, r, t0)[1],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    rate = float(opt.x)
    coef, ss, cond = _projected_fit(t, Y, rate, t0)

    fit = TailFit(
        limit=coef[0].reshape(shape),
        amplitude=coef[1].reshape(shape),
        rate=rate,
        residual=float(np.sqrt(ss / Y.size)),
        window=(float(t[0]), float(t[-1])),
        condition=cond,
        n_points=len(t),
    )
    logger.log(
        5, f"Tail fit on [{t[0]:g}, {t[-1]:g}]: rate={rate:.4g}, "
        f"residual={fit.residual:.3e}"
    )

    return fit


def fit_log_linear(t, y, window=None, log_term=False):
    """ Least-squares fit of log y against t (and log t if requested). """
    t, y = _window_arrays(t, y, window)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise NumericError("Log-linear fit needs positive finite samples")
    if log_term and t[0] <= 0:
        raise ValidationError("Log-time term needs a window with t > 0")

    columns = [np.ones_like(t), t]
    if log_term:
        columns.append(np.log(t))
    X = np.stack(columns, axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    res = np.log(y) - X @ coef

    return LogLinearFit(
        intercept=float(coef[0]),
        slope=float(coef[1]),
        log_coeff=float(coef[2]) if log_term else 0.0,
        residual=float(np.sqrt(np.mean(res ** 2))),
        window=(float(t[0]), float(t[-1])),
        n_points=len(t),
    )


def select_power_degree(
    t, y, window=None, max_degree=2, reduction=10.0, floor=1e-10
):
    """ Fit |y| ~ t^d exp(s t) with the smallest adequate integer d.

    Degrees are tested in turn; d+1 replaces d only if it lowers the sum of
    squared log residuals by the factor ``reduction``. A degree whose rms
    residual is already below ``floor`` is accepted at once.

    Returns
    -------
    degree : int

    fit : LogLinearFit
        Fit of log(|y| / t^d).
    """
    t, y = _window_arrays(t, y, window)
    y = np.abs(np.asarray(y))
    if t[0] <= 0:
        raise ValidationError("Power fit needs a window with t > 0")

    best_d, best = None, None
    for d in range(max_degree + 1):
        fit = fit_log_linear(t, y / t ** d)
        if best is None:
            best_d, best = d, fit
        elif fit.residual ** 2 * reduction < best.residual ** 2:
            best_d, best = d, fit
        else:
            break
        if best.residual < floor:
            break

    return best_d, best
