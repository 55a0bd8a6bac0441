""" Long-time diagnostics of trajectories. """
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from torus_nf.fitting import (
    fit_exponential_tail,
    fit_log_linear,
    select_power_degree,
)
from torus_nf.solver import energy_checks, evolve
from torus_nf.spectral import SpectralField
from torus_nf.utils import NumericError, ValidationError

logger = logging.getLogger(__name__)

DECAY_FLOOR = 1e-300


def default_window(T):
    """ Fit window [0.6 T, 0.95 T]. """
    return 0.6 * T, 0.95 * T


def _state_norms(traj):
    mag2 = (np.abs(traj.states) ** 2).sum(axis=-1)
    return mag2.sum(axis=1), mag2 @ traj.lattice.ksq


@dataclass
class QuotientSeries:
    """ Dirichlet quotient along a trajectory and its fitted limit. """

    times: np.ndarray
    values: np.ndarray
    limit: float
    matched: int
    residual: float
    window: tuple
    rate: float
    tolerance: float
    nonmonotone_tail: bool
    monotone: bool
    growth_constant: float

    def to_dict(self):
        return {
            "limit": self.limit,
            "matched": self.matched,
            "distance": abs(self.limit - self.matched),
            "residual": self.residual,
            "window": list(self.window),
            "rate": self.rate,
            "tolerance": self.tolerance,
            "nonmonotone_tail": self.nonmonotone_tail,
            "monotone": self.monotone,
            "growth_constant": self.growth_constant,
            "lambda_min": float(self.values.min()),
        }


def _growth_constant(lam, u2, h1):
    """ max over t < t' of log(λ(t')/λ(t)) / (|u(t)| ‖u(t)‖). """
    later_max = np.maximum.accumulate(lam[::-1])[::-1]
    growth = np.log(later_max[1:] / lam[:-1])
    scale = np.sqrt(u2[:-1] * h1[:-1])
    mask = (growth > 0) & (scale > 0)
    if not mask.any():
        return 0.0
    return float((growth[mask] / scale[mask]).max())


def dirichlet_limit(traj, window=None, floor=DECAY_FLOOR):
    """ Fitted limit of λ(t) = ‖u‖²/|u|² matched to an eigenvalue of A.

    Parameters
    ----------
    traj : Trajectory
        Nonzero trajectory.

    window : tuple, optional
        Fit window, defaults to [0.6 T, 0.95 T].

    floor : float, default 1e-300
        Smallest admissible |u|² in the window.

    Returns
    -------
    series : QuotientSeries
    """
    u2, h1 = _state_norms(traj)
    window = window or default_window(traj.t_end)
    idx = traj.window(*window)
    if np.any(u2[idx] <= floor):
        raise NumericError(
            f"Trajectory decayed below {floor:g} inside window {window}"
        )
    if np.any(u2 == 0):
        raise ValidationError("Dirichlet quotient of a vanishing trajectory")

    lam = h1 / u2
    fit = fit_exponential_tail(traj.times, lam, window=window)
    limit = float(fit.limit.real)

    shells = np.array(traj.lattice.shells)
    matched = int(shells[np.argmin(np.abs(shells - limit))])
    tolerance = max(1e-3, 10 * fit.residual)
    if abs(limit - matched) > tolerance:
        raise NumericError(
            f"Fitted limit {limit:.6f} is not within {tolerance:.1e} of an "
            f"eigenvalue (nearest {matched})"
        )

    steps = np.diff(lam)
    tail = np.diff(lam[idx])
    nonmonotone = bool(
        np.any(tail > 1e-12 * lam[idx][1:]) and np.any(tail < 0)
    )
    if nonmonotone:
        logger.warning(f"Non-monotone Dirichlet quotient on {window}")

    series = QuotientSeries(
        times=traj.times,
        values=lam,
        limit=limit,
        matched=matched,
        residual=fit.residual,
        window=fit.window,
        rate=fit.rate,
        tolerance=tolerance,
        nonmonotone_tail=nonmonotone,
        monotone=bool(np.all(steps <= 1e-12 * lam[1:])),
        growth_constant=_growth_constant(lam, u2, h1),
    )
    logger.debug(f"Dirichlet limit {limit:.8f} -> {matched}")

    return series


@dataclass
class Membership:
    """ Whether e^{jt} R_j u(t) decays for every shell j < k. """

    k: int
    member: bool
    evidence: list = field(default_factory=list)

    def to_dict(self):
        return {"k": self.k, "member": self.member, "evidence": self.evidence}


def manifold_membership(traj, k, window=None, delta_min=0.5, floor=1e-12):
    """ Test membership of u0 in M_{k-1} from the shell components.

    Components whose amplitude stays below ``floor`` relative to |u(t)| on
    the whole window count as decaying.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    window = window or default_window(traj.t_end)
    idx = traj.window(*window)
    times = traj.times[idx]
    u_norm = np.sqrt((np.abs(traj.states[idx]) ** 2).sum(axis=(1, 2)))

    evidence = []
    for j in range(1, k):
        if not traj.lattice.is_representable(j):
            continue
        mask = traj.lattice.shell_mask(j)
        comp = np.sqrt(
            (np.abs(traj.states[idx][:, mask]) ** 2).sum(axis=(1, 2))
        )
        above = comp > floor * u_norm
        if above.sum() < 4:
            evidence.append(
                {"shell": j, "decaying": True, "identically_zero": True}
            )
            continue
        fit = fit_log_linear(
            times[above], np.exp(j * times[above]) * comp[above]
        )
        evidence.append(
            {
                "shell": j,
                "decaying": fit.slope <= -delta_min,
                "identically_zero": False,
                "rate": fit.slope,
                "residual": fit.residual,
                "window": list(fit.window),
            }
        )

    member = all(e["decaying"] for e in evidence)
    logger.debug(f"Membership in M_{k - 1}: {member}")

    return Membership(k=k, member=member, evidence=evidence)


@dataclass
class PhiValue:
    """ Φ_k(u0) with the tail estimate of the truncated integral. """

    k: int
    value: SpectralField
    tail: float
    T_max: float
    tail_rate: float

    def to_dict(self):
        return {
            "k": self.k,
            "value": self.value.to_dict(),
            "norm": self.value.norm(),
            "tail": self.tail,
            "tail_rate": self.tail_rate,
            "T_max": self.T_max,
        }


def phi_from_trajectory(traj, k, tail_tol=1e-6, check_domain=True):
    """ Φ_k(u0) = R_k u0 - ∫_0^∞ e^{kt} R_k B(u, u) dt from stored snapshots.

    The integral is truncated at the end of the trajectory (composite
    Simpson rule) and the remainder bounded by |f(T)| / rate with the decay
    rate fitted on the last fifth of the integrand.
    """
    lattice = traj.lattice
    if not lattice.is_representable(k):
        raise ValidationError(f"Shell {k} carries no modes in {lattice}")
    if check_domain and k >= 2:
        membership = manifold_membership(traj, k)
        if not membership.member:
            raise ValidationError(
                f"Initial data is not in M_{k - 1}, Φ_{k} is undefined"
            )

    mask = lattice.shell_mask(k)
    integrand = np.zeros((len(traj), lattice.size, lattice.dim), dtype=complex)
    for i, (t, a) in enumerate(zip(traj.times, traj.states)):
        integrand[i, mask] = np.exp(k * t) * lattice.bilinear(a, a)[mask]

    integral = simpson(integrand, x=traj.times, axis=0)
    value = traj.initial.shell_project(k).amplitudes - integral

    size = np.sqrt((np.abs(integrand) ** 2).sum(axis=(1, 2)))
    tail, rate = 0.0, float("inf")
    if size[-1] > 0:
        t0 = traj.times[int(0.8 * len(traj))]
        fit = fit_log_linear(traj.times, size, window=(t0, traj.t_end))
        rate = -fit.slope
        if rate <= 0:
            raise NumericError(
                f"Integrand of Φ_{k} does not decay (rate {rate:.3g})"
            )
        tail = float(size[-1] / rate)
    if tail > tail_tol:
        raise NumericError(
            f"Tail of Φ_{k} integral {tail:.3e} exceeds {tail_tol:.1e}, "
            f"increase T_max"
        )

    return PhiValue(
        k=k,
        value=SpectralField(lattice, value),
        tail=tail,
        T_max=traj.t_end,
        tail_rate=rate,
    )


def phi_functional(
    u0, k, T_max=15.0, dt=1e-3, stride=10, tail_tol=1e-6, check_domain=True
):
    """ Φ_k(u0), integrating the trajectory up to T_max. """
    traj = evolve(u0, T_max, dt=dt, stride=stride)
    return phi_from_trajectory(traj, k, tail_tol, check_domain)


@dataclass
class HelicityReport:
    """ Helicity asymptotics of a trajectory. """

    identically_zero: bool
    max_helicity: float
    balance_residual: float
    cauchy_schwarz_excess: float
    alpha0: dict = None
    h0: dict = None
    degree: int = None
    decay_exponent: float = None
    decay_fit: dict = None
    alpha_bound: float = None

    def to_dict(self):
        return {
            "identically_zero": self.identically_zero,
            "max_helicity": self.max_helicity,
            "balance_residual": self.balance_residual,
            "cauchy_schwarz_excess": self.cauchy_schwarz_excess,
            "alpha0": self.alpha0,
            "h0": self.h0,
            "degree": self.degree,
            "decay_exponent": self.decay_exponent,
            "decay_fit": self.decay_fit,
            "alpha_bound": self.alpha_bound,
        }


def _ratio_fit(t, ratio, window):
    fit = fit_exponential_tail(t, ratio, window=window)
    return {
        "value": float(fit.limit.real),
        "residual": fit.residual,
        "rate": fit.rate,
        "window": list(fit.window),
    }


def helicity_report(traj, window=None, zero_tol=1e-12):
    """ Helicity H, its balance ½ dH/dt + I = 0 and its decay rates.

    H(t) is declared identically zero when max |H| < zero_tol * max |u|².
    Otherwise H/|u|² and I/H are fitted to their limits α0 and h0, and
    |H| to t^d e^{-2 h0 t} with the smallest adequate degree d.
    """
    s = traj.series
    t = s["t"].to_numpy()
    hel = s["helicity"].to_numpy()
    hel_i = s["I"].to_numpy()
    u2 = 2 * s["energy"].to_numpy()
    w2 = s["enstrophy"].to_numpy()

    checks = energy_checks(traj)
    report = HelicityReport(
        identically_zero=False,
        max_helicity=float(np.abs(hel).max()),
        balance_residual=checks["helicity_residual"],
        cauchy_schwarz_excess=float(
            np.max(np.abs(hel) - np.sqrt(u2 * w2), initial=-np.inf)
        ),
    )

    if traj.lattice.dim == 2 or report.max_helicity < zero_tol * u2.max():
        report.identically_zero = True
        return report

    window = window or default_window(traj.t_end)
    idx = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    if not (np.all(hel[idx] > 0) or np.all(hel[idx] < 0)):
        raise NumericError(f"Helicity changes sign inside window {window}")

    report.alpha0 = _ratio_fit(t, hel / u2, window)
    report.h0 = _ratio_fit(t[idx], hel_i[idx] / hel[idx], None)
    degree, fit = select_power_degree(t, hel, window=window)
    report.degree = degree
    report.decay_exponent = -fit.slope
    report.decay_fit = fit.to_dict()
    report.alpha_bound = float(np.sqrt(w2[-1] / u2[-1]))

    logger.debug(
        f"Helicity: alpha0={report.alpha0['value']:.6g}, "
        f"h0={report.h0['value']:.6g}, d={degree}"
    )

    return report
