""" Asymptotic expansion, normalization map and normal form.

A state of the normal form is a NormalState ξ = (ξ_1, ξ_2, ...) with ξ_m
supported on the shell |k|² = m. The expansion coefficients q_n(t, ξ) are
the polynomial solutions of

    q_n' + (A - n) q_n + β_n = 0,   R_n q_n(0) = ξ_n,
    β_n = Σ_{k+l=n} B(q_k, q_l),

and u(t) = Σ_n q_n(t, ξ) e^{-nt} is the trajectory with normalization
W(u(0)) = ξ. The normal form itself is solved by s_normal: its component n
is R_n q_n(t, ξ) e^{-nt}.
"""
import dataclasses
import logging
import math
import threading
from collections import OrderedDict

import numpy as np

from torus_nf.exppoly import (
    ExpPolyField,
    PolyField,
    ep_bilinear,
    poly_bilinear,
    solve_level,
)
from torus_nf.fitting import fit_exponential_tail, fit_log_linear
from torus_nf.multiindex import indices_with
from torus_nf.solver import IFRK4, _check_steps
from torus_nf.spectral import SpectralField, get_lattice
from torus_nf.utils import (
    LatticeMismatchError,
    NumericError,
    ValidationError,
)

logger = logging.getLogger(__name__)

TRACE = 5

DEFAULT_EXTRACTION_WINDOWS = {1: (6.0, 12.0), 2: (4.0, 10.0), 3: (3.0, 8.0)}
LATE_LEVEL_WINDOW = (2.5, 6.0)

# operating radius of the normal state in the star norm
SMALL_DATA_AMPLITUDE = 0.05


class NormalState:
    """ Sequence of shell components ξ_m = R_m ξ of a truncated field.

    Stored as a single SpectralField whose shell projections are the
    components; components of non-representable m are zero.
    """

    __slots__ = ("field",)

    def __init__(self, field):
        if not isinstance(field, SpectralField):
            raise TypeError(f"Expected SpectralField, got {type(field)}")
        self.field = field

    @classmethod
    def zeros(cls, lattice):
        return cls(SpectralField.zeros(lattice))

    @classmethod
    def from_field(cls, u):
        """ Shell split of a field. """
        return cls(u)

    @classmethod
    def from_components(cls, lattice, components):
        """ State from a mapping shell -> SpectralField supported on it. """
        amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
        for m, comp in components.items():
            if comp.lattice != lattice:
                raise LatticeMismatchError(
                    f"Component {m} lives on {comp.lattice}"
                )
            mask = lattice.shell_mask(m)
            if np.any(comp.amplitudes[~mask]):
                raise ValidationError(
                    f"Component {m} is not supported on |k|^2 = {m}"
                )
            amplitudes[mask] += comp.amplitudes[mask]
        return cls(SpectralField(lattice, amplitudes, copy=False))

    def __repr__(self):
        body = ", ".join(
            f"{m}: {n:.3g}" for m, n in self.component_norms().items()
        )
        return f"NormalState({{{body}}})"

    @property
    def lattice(self):
        return self.field.lattice

    def component(self, m):
        return self.field.shell_project(m)

    def components(self):
        """ Nonzero components keyed by shell. """
        return {m: self.component(m) for m in self.support()}

    def component_norms(self):
        return {m: self.component(m).norm() for m in self.support()}

    def support(self):
        return self.field.support()

    @property
    def max_shell(self):
        return max(self.support(), default=0)

    def __add__(self, other):
        return NormalState(self.field + other.field)

    def __sub__(self, other):
        return NormalState(self.field - other.field)

    def __neg__(self):
        return NormalState(-self.field)

    def __mul__(self, scalar):
        return NormalState(self.field * scalar)

    __rmul__ = __mul__

    def stokes(self, alpha):
        """ (A^alpha ξ)_m = m^alpha ξ_m. """
        return NormalState(self.field.stokes(alpha))

    def norm(self):
        return self.field.norm()

    def digest(self):
        return self.field.digest()

    def to_dict(self):
        return {
            "dim": self.lattice.dim,
            "lambda_max": self.lattice.lambda_max,
            "components": [
                {"shell": m, "modes": comp.to_dict()["modes"]}
                for m, comp in self.components().items()
            ],
        }

    @classmethod
    def from_dict(cls, data, lattice=None):
        try:
            dim, lambda_max = int(data["dim"]), int(data["lambda_max"])
            entries = data["components"]
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed normal state: {e}")
        if lattice is None:
            lattice = get_lattice(dim, lambda_max)
        components = {}
        for entry in entries:
            try:
                m = int(entry["shell"])
                comp = SpectralField.from_dict(
                    {"dim": dim, "lambda_max": lambda_max,
                     "modes": entry["modes"]},
                    lattice=lattice,
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"Malformed component {entry}: {e}")
            components[m] = comp
        return cls.from_components(lattice, components)


def random_normal_state(lattice, amplitude, seed=0, shells=None, decay=1.0):
    """ Seeded random state with |ξ_m| = amplitude * decay^(m-1).

    ``decay`` < 1 gives graded data whose higher components are of the size
    they acquire along an actual trajectory.
    """
    rng = np.random.default_rng(seed)
    shells = lattice.shells if shells is None else shells
    amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
    for m in shells:
        mask = lattice.shell_mask(m)
        if not mask.any():
            continue
        shape = (int(mask.sum()), lattice.dim)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        full = np.zeros_like(amplitudes)
        full[mask] = z
        full = lattice.leray(full)
        full *= amplitude * decay ** (m - 1) / np.linalg.norm(full)
        amplitudes += full
    return NormalState(SpectralField(lattice, amplitudes, copy=False))


class WeightSchedule:
    """ Weights of the ⋆-norm, stored as logarithms.

    Defaults are κ̃_n = e^{-n 2^n}, γ_n = n^{-2n}, ρ_1 = 1 and
    ρ_n = κ̃_n γ_n ρ_{n-1}²; ρ_n underflows double precision from n = 6 on,
    hence the log storage.
    """

    def __init__(self, log_kappa, log_gamma, log_rho):
        self.log_kappa = np.asarray(log_kappa, dtype=float)
        self.log_gamma = np.asarray(log_gamma, dtype=float)
        self.log_rho = np.asarray(log_rho, dtype=float)
        n = len(self.log_rho)
        if len(self.log_kappa) != n or len(self.log_gamma) != n or n == 0:
            raise ValidationError("Weight sequences must have equal length")

    def __len__(self):
        return len(self.log_rho)

    @classmethod
    def default(cls, n_max):
        n = np.arange(1, n_max + 1, dtype=float)
        log_kappa = -n * 2.0 ** n
        log_gamma = -2 * n * np.log(n)
        log_rho = np.zeros(n_max)
        for i in range(1, n_max):
            log_rho[i] = log_kappa[i] + log_gamma[i] + 2 * log_rho[i - 1]
        return cls(log_kappa, log_gamma, log_rho)

    @classmethod
    def from_values(cls, kappa, gamma, rho):
        """ Schedule from explicit values, which are not validated. """
        with np.errstate(divide="ignore", invalid="ignore"):
            return cls(
                np.log(np.asarray(kappa, dtype=float)),
                np.log(np.asarray(gamma, dtype=float)),
                np.log(np.asarray(rho, dtype=float)),
            )

    @classmethod
    def from_config(cls, config, n_max):
        """ Default schedule, with the sequences given in ``config`` replacing
        their default values.
        """
        default = cls.default(n_max)
        if not config or all(config.get(k) is None for k in config):
            return default
        values = {
            "kappa": np.exp(default.log_kappa),
            "gamma": np.exp(default.log_gamma),
            "rho": np.exp(default.log_rho),
        }
        for key in values:
            if config.get(key) is not None:
                values[key] = config[key]
        return cls.from_values(**values)

    def rho(self, n):
        if not 1 <= n <= len(self):
            raise ValidationError(f"No weight for level {n}")
        return float(np.exp(self.log_rho[n - 1]))

    def validate(self, tol=1e-9):
        """ List of violated weight constraints (empty if conforming). """
        violations = []
        for name, logs in (("kappa", self.log_kappa), ("gamma", self.log_gamma)):
            for n, v in enumerate(logs, start=1):
                if not (np.isfinite(v) and v <= tol):
                    violations.append(f"{name}_{n} = {np.exp(v):g} not in (0, 1]")
        for n, v in enumerate(self.log_rho, start=1):
            if not np.isfinite(v):
                violations.append(f"rho_{n} is not positive")
        if np.isfinite(self.log_rho[0]) and abs(self.log_rho[0]) > tol:
            violations.append(f"rho_1 = {np.exp(self.log_rho[0]):g} != 1")
        for i in range(1, len(self)):
            expected = (
                self.log_kappa[i] + self.log_gamma[i] + 2 * self.log_rho[i - 1]
            )
            actual = self.log_rho[i]
            if not np.isfinite(expected) or not np.isfinite(actual):
                continue
            if abs(actual - expected) > tol * max(1.0, abs(expected)):
                violations.append(
                    f"rho_{i + 1} violates the recursion "
                    f"(log {actual:.6g} vs {expected:.6g})"
                )
        return violations

    def to_dict(self):
        return {
            "log_kappa": self.log_kappa,
            "log_gamma": self.log_gamma,
            "log_rho": self.log_rho,
        }


def star_norm(xi, weights):
    """ Σ_n ρ_n ‖ξ_n‖ for a NormalState or a sequence of levels u_1, u_2, ... """
    if isinstance(xi, NormalState):
        parts = xi.components().items()
    else:
        parts = enumerate(xi, start=1)
    total = 0.0
    for n, comp in parts:
        v = comp.norm(alpha=0.5)
        if v == 0:
            continue
        if n > len(weights):
            raise ValidationError(f"Weight schedule does not cover level {n}")
        total += math.exp(weights.log_rho[n - 1] + math.log(v))
    return total


class ExpansionCache:
    """ Memo table of q_n(·, ξ) keyed by (ξ digest, n).

    Parameters
    ----------
    max_entries : int, default 4096
        Least recently used entries are evicted beyond this size.
    """

    def __init__(self, max_entries=4096):
        self.max_entries = max_entries
        self._table = OrderedDict()
        self._lock = threading.RLock()

    def __len__(self):
        return len(self._table)

    def clear(self):
        with self._lock:
            self._table.clear()

    def q(self, xi, n):
        if n < 1:
            raise ValidationError(f"Level must be >= 1, got {n}")
        key = (xi.digest(), n)
        with self._lock:
            if key in self._table:
                self._table.move_to_end(key)
                return self._table[key]

            beta = level_forcing(xi, n, cache=self)
            q = solve_level(n, xi.component(n), beta)

            self._table[key] = q
            while len(self._table) > self.max_entries:
                self._table.popitem(last=False)

        logger.log(TRACE, f"q_{n}: degree {q.degree}")

        return q


_CACHE = ExpansionCache()


def level_forcing(xi, n, cache=None):
    """ β_n = Σ_{k+l=n} B(q_k, q_l) as a PolyField. """
    cache = cache if cache is not None else _CACHE
    beta = PolyField.zero(xi.lattice)
    for k in range(1, n):
        beta = beta + poly_bilinear(cache.q(xi, k), cache.q(xi, n - k))
    return beta


def q_n(xi, n, cache=None):
    """ Expansion coefficient q_n(·, ξ) as a PolyField. """
    return (cache if cache is not None else _CACHE).q(xi, n)


def expansion(xi, N, cache=None):
    """ U_N = Σ_{n<=N} q_n(t, ξ) e^{-nt} as an ExpPolyField. """
    return ExpPolyField(xi.lattice, {n: q_n(xi, n, cache) for n in range(1, N + 1)})


def initial_state_from_xi(xi, order, cache=None):
    """ Σ_{n<=order} q_n(0, ξ). """
    return expansion(xi, order, cache).evaluate(0.0)


def degree_bound_holds(xi, N, cache=None):
    """ deg q_j <= j - 1 for j <= N. """
    return all(q_n(xi, j, cache).degree <= j - 1 for j in range(1, N + 1))


def s_normal(xi0, t, N=None, cache=None):
    """ Normal-form flow: component n is R_n q_n(t, ξ0) e^{-nt}. """
    lattice = xi0.lattice
    N = lattice.lambda_max if N is None else N
    amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
    for n in lattice.shells:
        if n > N:
            break
        mask = lattice.shell_mask(n)
        value = q_n(xi0, n, cache).evaluate_array(t)
        amplitudes[mask] = np.exp(-n * t) * value[mask]
    return NormalState(SpectralField(lattice, amplitudes, copy=False))


def extended_nonlinearity(lattice, N):
    """ N(t, U)_n = -Σ_{j+k=n} B(U_j, U_k) on stacked levels (index n-1). """

    def _nonlinear(t, U):
        out = np.zeros_like(U)
        for n in range(2, N + 1):
            for j in range(1, n):
                out[n - 1] -= lattice.bilinear(U[j - 1], U[n - j - 1])
        return out

    return _nonlinear


def s_ext(levels, t, N, dt=1e-3):
    """ Extended system du_n/dt + A u_n + Σ_{j+k=n} B(u_j, u_k) = 0.

    All N levels are advanced together with the integrating-factor RK4 of
    the solver; levels beyond the given ones start at zero.

    Parameters
    ----------
    levels : sequence of SpectralField
        Initial levels u_1, ..., u_K with K <= N.

    t : float or sequence of float
        Output time(s), multiples of dt.

    N : int
        Number of levels.

    Returns
    -------
    levels : list of SpectralField, or a list of those for several times
    """
    levels = list(levels)
    if not levels:
        raise ValidationError("s_ext needs at least one level")
    if len(levels) > N:
        raise ValidationError(
            f"{len(levels)} initial levels exceed the level budget N={N}"
        )
    lattice = levels[0].lattice
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValidationError(f"Output times must be sorted and >= 0: {t}")

    U = np.zeros((N, lattice.size, lattice.dim), dtype=complex)
    for i, u in enumerate(levels):
        if u.lattice != lattice:
            raise LatticeMismatchError("Levels live on different lattices")
        U[i] = u.amplitudes

    integrator = IFRK4(lattice, dt, extended_nonlinearity(lattice, N))
    out, step = [], 0
    for t_out in times:
        n_target = _check_steps(t_out, dt) if t_out > 0 else 0
        while step < n_target:
            U = integrator.step(step * dt, U)
            step += 1
        if not np.all(np.isfinite(U)):
            raise NumericError(f"Non-finite extended state at t={t_out:g}")
        out.append([SpectralField(lattice, U[i]) for i in range(N)])

    return out[0] if np.ndim(t) == 0 else out


@dataclasses.dataclass
class Normalization:
    """ Extracted normalization W(u0) with per-level fit evidence. """

    xi: NormalState
    N: int
    fits: list = dataclasses.field(default_factory=list)

    @property
    def reliable(self):
        return all(f["reliable"] for f in self.fits)

    def to_dict(self):
        return {
            "N": self.N,
            "xi": self.xi.to_dict(),
            "component_norms": self.xi.component_norms(),
            "fits": self.fits,
            "reliable": self.reliable,
        }


def extraction_window(j, t_end, windows=None):
    """ Tail window of level j, clipped to the trajectory. """
    windows = windows or {}
    t0, t1 = windows.get(
        j, DEFAULT_EXTRACTION_WINDOWS.get(j, LATE_LEVEL_WINDOW)
    )
    t1 = min(t1, t_end)
    if t1 - t0 <= 0:
        raise ValidationError(
            f"Window of level {j} starts after the trajectory ends ({t_end:g})"
        )
    return t0, t1


def extract_normalization(
    traj, N, windows=None, delta_min=0.5, fit_tol=1e-6, cache=None
):
    """ Peel off ξ_1, ..., ξ_N from a trajectory.

    For each level j the known part Σ_{i<j} q_i e^{-it} and the forced part
    q_j^0 of q_j (solved with ξ_j = 0) are removed; the shell-j component of
    e^{jt}(u - Σ_{i<j} q_i e^{-it}) - q_j^0 is fitted to ξ_j + c e^{-δt}
    with δ >= delta_min on the level's tail window.
    """
    lattice = traj.lattice
    cache = cache if cache is not None else _CACHE
    xi = NormalState.zeros(lattice)
    known = {}
    fits = []

    for j in range(1, N + 1):
        beta = PolyField.zero(lattice)
        for k in range(1, j):
            beta = beta + poly_bilinear(known[k], known[j - k])
        forced = solve_level(j, None, beta)

        if lattice.is_representable(j):
            window = extraction_window(j, traj.t_end, windows)
            idx = traj.window(*window)
            times = traj.times[idx]
            mask = lattice.shell_mask(j)
            samples = np.empty((len(idx), int(mask.sum()), lattice.dim),
                               dtype=complex)
            for row, (i, t) in enumerate(zip(idx, times)):
                w = traj.states[i].copy()
                for k, q in known.items():
                    w -= np.exp(-k * t) * q.evaluate_array(t)
                w = np.exp(j * t) * w - forced.evaluate_array(t)
                samples[row] = w[mask]

            fit = fit_exponential_tail(
                times, samples, rate_bounds=(delta_min, 10.0)
            )
            amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
            amplitudes[mask] = fit.limit
            xi_j = SpectralField(lattice, lattice.leray(amplitudes))
            reliable = fit.residual <= fit_tol
            if not reliable:
                logger.warning(
                    f"Level {j}: fit residual {fit.residual:.2e} above "
                    f"{fit_tol:.1e}, component unreliable"
                )
            fits.append(
                {
                    "shell": j,
                    "window": list(fit.window),
                    "residual": fit.residual,
                    "rate": fit.rate,
                    "condition": fit.condition,
                    "norm": xi_j.norm(),
                    "reliable": bool(reliable),
                }
            )
            xi = xi + NormalState(xi_j)
            known[j] = forced + PolyField.constant(xi_j)
        else:
            known[j] = forced

        logger.debug(f"Extracted level {j}")

    return Normalization(xi=xi, N=N, fits=fits)


def remainder_nonlinearity(U, N):
    """ N(t, v) of the remainder v = u - U_N.

    v' + A v + B(v, v) + B(U_N, v) + B(v, U_N) + ρ_N = 0 where ρ_N collects
    the terms of B(U_N, U_N) with decay index above N.
    """
    lattice = U.lattice
    rho = ExpPolyField(lattice)
    for m in range(N + 1, 2 * U.max_index + 1):
        rho = rho + ep_bilinear(U, U, index=m)

    def _nonlinear(t, v):
        u = U.evaluate_array(t)
        return -(
            lattice.bilinear(v, v)
            + lattice.bilinear(u, v)
            + lattice.bilinear(v, u)
            + rho.evaluate_array(t)
        )

    return _nonlinear


def _integrate_remainder(v0, U, N, T, dt, stride):
    """ Snapshots of the remainder of order N started at v0. """
    n_steps = _check_steps(T, dt)
    integrator = IFRK4(U.lattice, dt, remainder_nonlinearity(U, N))
    v = np.array(v0, dtype=complex)
    times, states = [], []
    for i in range(n_steps + 1):
        if i % stride == 0:
            times.append(i * dt)
            states.append(v.copy())
        if i < n_steps:
            v = integrator.step(i * dt, v)
            if not np.all(np.isfinite(v)):
                raise NumericError(
                    f"Non-finite remainder at t={(i + 1) * dt:g}"
                )
    return np.array(times), np.array(states)


def _series_norms(lattice, states, gevrey):
    weights = lattice.ksq ** (2 * gevrey[0]) * np.exp(
        2 * gevrey[1] * lattice.kabs
    )
    mag2 = (np.abs(states) ** 2).sum(axis=-1)
    return np.sqrt(mag2.sum(axis=1)), np.sqrt(mag2 @ weights)


def remainder_series(u0, xi, N, T, dt=5e-3, stride=10, gevrey=(1.0, 0.1),
                     data_order=None, cache=None):
    """ Norms of v(t) = u(t) - Σ_{n<=N} q_n(t, ξ) e^{-nt}, integrated from its
    own equation so that its decay is resolved below the roundoff of u.

    With ``data_order`` K > N the data are u0 = Σ_{n<=K} q_n(0, ξ) and the
    given u0 is ignored. Then v = Σ_{N<n<=K} q_n e^{-nt} + v_K where the sum
    is evaluated in closed form and only v_K, which starts at zero, is
    integrated.

    Returns times, H norms and Gevrey norms at every ``stride`` steps.
    """
    lattice = xi.lattice
    if data_order is None:
        U = expansion(xi, N, cache)
        times, states = _integrate_remainder(
            u0.amplitudes - U.evaluate_array(0.0), U, N, T, dt, stride
        )
    else:
        times, states = _constructed_remainder(
            xi, N, data_order, T, dt, stride, cache
        )
    h_norms, g_norms = _series_norms(lattice, states, gevrey)
    return times, h_norms, g_norms


def _constructed_remainder(xi, N, K, T, dt, stride, cache, v_K=None):
    if K <= N:
        raise ValidationError(f"Data order {K} must exceed N={N}")
    lattice = xi.lattice
    if v_K is None:
        v_K = _integrate_remainder(
            np.zeros((lattice.size, lattice.dim), dtype=complex),
            expansion(xi, K, cache), K, T, dt, stride,
        )
    times, states = v_K
    tail = ExpPolyField(
        lattice, {n: q_n(xi, n, cache) for n in range(N + 1, K + 1)}
    )
    return times, states + np.array([tail.evaluate_array(t) for t in times])


def clear_window(times, values, floor, window, ratio=1e3, min_length=4.0):
    """ Fit window of a remainder that stays above its integration floor.

    The window ends before the first time where ``values`` drops below
    ``ratio`` times ``floor``. When that leaves less than ``min_length`` of
    the requested window the start is moved back, not before the first
    sample after t = 0.
    """
    t0, t1 = window
    below = np.flatnonzero((values < ratio * floor) & (times > 0))
    if below.size and times[below[0]] <= t1:
        t1 = float(times[max(below[0] - 1, 0)])
    if t1 - t0 < min_length:
        t0 = max(t1 - min_length, float(times[1]))
    return t0, t1


def _decay_fit(times, values, window, N):
    idx = (times >= window[0] - 1e-9) & (times <= window[1] + 1e-9)
    if np.all(values[idx] == 0):
        return {"vanishes": True, "passed": True, "window": list(window)}
    full = fit_log_linear(times, values, window=window, log_term=True)
    raw = fit_log_linear(times, values, window=window)
    return {
        "vanishes": False,
        "exponent": full.slope,
        "log_power": full.log_coeff,
        "residual": full.residual,
        "raw_slope": raw.slope,
        "raw_residual": raw.residual,
        "window": list(full.window),
        "bound": -(N + 0.8),
        "passed": full.slope <= -(N + 0.8),
    }


def expansion_report(u0, xi, orders=(1, 2, 3), window=(8.0, 14.0), dt=5e-3,
                     gevrey=(1.0, 0.1), degree_levels=6, data_order=None,
                     cache=None):
    """ Decay of the expansion remainder for each order N.

    ``log|v|`` is fitted to c + s t + p log t on the window, in the H norm
    and in the Gevrey norm with exponents ``gevrey``; the exponent s is
    compared with -(N + 0.8). ``data_order`` selects constructed data, see
    remainder_series.
    """
    report = {
        "orders": {},
        "gevrey": list(gevrey),
        "data_order": data_order,
        "dt": dt,
    }
    v_K = None
    if data_order is not None:
        v_K = _integrate_remainder(
            np.zeros((xi.lattice.size, xi.lattice.dim), dtype=complex),
            expansion(xi, data_order, cache), data_order, window[1], dt, 10,
        )
        # v_K bounds the accuracy of every lower-order remainder
        floors = _series_norms(xi.lattice, v_K[1], gevrey)
    for N in orders:
        if v_K is None:
            times, h, g = remainder_series(
                u0, xi, N, window[1], dt=dt, gevrey=gevrey, cache=cache
            )
        else:
            times, states = _constructed_remainder(
                xi, N, data_order, window[1], dt, 10, cache, v_K=v_K
            )
            h, g = _series_norms(xi.lattice, states, gevrey)
        fit_window = window
        if v_K is not None:
            fit_window = min(
                clear_window(times, h, floors[0], window),
                clear_window(times, g, floors[1], window),
                key=lambda w: w[1],
            )
        report["orders"][N] = {
            "H": _decay_fit(times, h, fit_window, N),
            "gevrey": _decay_fit(times, g, fit_window, N),
            "initial_norm": float(h[0]),
        }
        logger.debug(f"Remainder of order {N}: {report['orders'][N]['H']}")

    report["degrees"] = {
        j: q_n(xi, j, cache).degree for j in range(1, degree_levels + 1)
    }
    report["degree_bound_holds"] = all(
        d <= j - 1 for j, d in report["degrees"].items()
    )
    return report


def contraction_ratio(lattice, eps0, t, weights, samples=20, seed=0, N=None,
                      cache=None):
    """ max ‖S(t)ξ - S(t)χ‖_⋆ / (e^{-t} ‖ξ - χ‖_⋆) over random pairs with
    ⋆-norms below eps0.
    """
    rng = np.random.default_rng(seed)
    shells = None if N is None else [m for m in lattice.shells if m <= N]
    worst = 0.0
    for _ in range(samples):
        pair = []
        for _ in range(2):
            state = random_normal_state(
                lattice, 1.0, seed=int(rng.integers(2 ** 31)), shells=shells,
                decay=0.5,
            )
            size = rng.uniform(0.1, 0.99) * eps0
            pair.append(state * (size / star_norm(state, weights)))
        xi, chi = pair
        base = star_norm(xi - chi, weights)
        if base == 0:
            continue
        flowed = s_normal(xi, t, N, cache) - s_normal(chi, t, N, cache)
        worst = max(worst, star_norm(flowed, weights) / (math.exp(-t) * base))
    return worst


def gauge_table(xi, max_order, max_weight):
    """ [[ξ]]_{d,n}² for d <= max_order, n <= max_weight.

    Σ_{|α|=d, ‖α‖=n} Π_k |ξ_k|^{2 α_k} is the coefficient of x^d y^n in
    Π_k 1 / (1 - |ξ_k|² x y^k).
    """
    table = np.zeros((max_order + 1, max_weight + 1))
    table[0, 0] = 1.0
    for k in xi.lattice.shells:
        if k > max_weight:
            break
        c = xi.component(k).norm() ** 2
        if c == 0:
            continue
        new = table.copy()
        for a in range(1, max_order + 1):
            if a * k > max_weight:
                break
            new[a:, a * k:] += c ** a * table[: max_order + 1 - a,
                                              : max_weight + 1 - a * k]
        table = new
    return np.sqrt(table)


def sinorm(xi, index):
    """ [ξ]^α = Π_k |ξ_k|^{α_k}. """
    out = 1.0
    for k, a in index.items():
        out *= xi.component(k).norm() ** a
    return out


def gauge(xi, d, n):
    """ Homogeneous gauge [[ξ]]_{d,n}, by explicit enumeration. """
    parts = tuple(k for k in xi.lattice.shells if k <= n)
    return math.sqrt(
        sum(sinorm(xi, index) ** 2 for index in indices_with(d, n, parts))
    )


def product_bound_holds(xi, max_total=6, max_weight=10, rtol=1e-12):
    """ [[ξ]]_{d,n} [[ξ]]_{d',n'} <= e^{d+d'} [[ξ]]_{d+d',n+n'}. """
    table = gauge_table(xi, max_total, 2 * max_weight)
    for d in range(1, max_total):
        for d2 in range(1, max_total - d + 1):
            lhs = np.outer(table[d, : max_weight + 1],
                           table[d2, : max_weight + 1])
            n = np.arange(max_weight + 1)
            rhs = math.exp(d + d2) * table[d + d2][n[:, None] + n[None, :]]
            if np.any(lhs > rhs * (1 + rtol)):
                return False
    return True


def smoothing_bound_holds(xi, alpha, s, max_order=6, max_weight=10,
                          rtol=1e-12):
    """ [[A^alpha ξ]]_{d,n} <= (d/n)^s [[A^{alpha+s} ξ]]_{d,n}. """
    lhs = gauge_table(xi.stokes(alpha), max_order, max_weight)
    rhs = gauge_table(xi.stokes(alpha + s), max_order, max_weight)
    for d in range(1, max_order + 1):
        for n in range(d, max_weight + 1):
            if lhs[d, n] > (d / n) ** s * rhs[d, n] * (1 + rtol):
                return False
    return True


def expansion_polynomial(xi, j, cache=None):
    """ 𝒫_j(ξ) = q_j(0, ξ). """
    return q_n(xi, j, cache).evaluate(0.0)


def resonant_term(xi, j, cache=None):
    """ ℬ_j(ξ) = Σ_{k+l=j} R_j B(𝒫_k(ξ), 𝒫_l(ξ)). """
    beta = level_forcing(xi, j, cache)
    return beta.evaluate(0.0).shell_project(j)


def resonant_nonlinearity(xi, cache=None):
    """ ℬ(ξ) = Σ_j ℬ_j(ξ) over the shells of the truncation. """
    total = SpectralField.zeros(xi.lattice)
    for j in xi.lattice.shells:
        total = total + resonant_term(xi, j, cache)
    return total


def chebyshev_scales(n):
    """ n Chebyshev points on [1/2, 1]. """
    i = np.arange(n)
    return 0.75 + 0.25 * np.cos((2 * i + 1) * np.pi / (2 * n))


def homogeneous_part(F, xi, d, d_max):
    """ Degree-d homogeneous component of a polynomial map F at ξ.

    F(sξ) = Σ_{e<=d_max} s^e F^{[e]}(ξ) is sampled at d_max + 1 Chebyshev
    scales and the Vandermonde system solved for the coefficients.

    Returns
    -------
    value : same type as F(ξ)

    condition : float
        Condition number of the Vandermonde matrix.
    """
    if not 0 <= d <= d_max:
        raise ValidationError(f"Degree {d} outside [0, {d_max}]")
    scales = chebyshev_scales(d_max + 1)
    samples = [F(xi * s) for s in scales]
    kind = type(samples[0])
    arrays = np.stack([_as_array(v) for v in samples])
    V = np.vander(scales, d_max + 1, increasing=True)
    coef = np.linalg.solve(V, arrays.reshape(d_max + 1, -1))
    value = coef[d].reshape(arrays.shape[1:])
    condition = float(np.linalg.cond(V))
    if kind is SpectralField:
        value = SpectralField(xi.lattice, value)
    elif kind is NormalState:
        value = NormalState(SpectralField(xi.lattice, value))
    return value, condition


def _as_array(value):
    if isinstance(value, NormalState):
        return value.field.amplitudes
    if isinstance(value, SpectralField):
        return value.amplitudes
    return np.asarray(value)


def graded_expansion(xi, max_degree):
    """ Homogeneous parts q_j^{[e]} of the expansion coefficients.

    q_j^{[1]} = ξ_j and, for e >= 2,
    q_j^{[e]} solves the level equation with zero shell data and forcing
    β_j^{[e]} = Σ_{k+l=j} Σ_{m+n=e} B(q_k^{[m]}, q_l^{[n]}).

    Returns a dict e -> (q, beta) with q and beta dicts j -> PolyField.
    """
    lattice = xi.lattice
    top = max(xi.max_shell, 1)
    graded = {1: ({j: PolyField.constant(xi.component(j))
                   for j in xi.support()}, {})}
    for e in range(2, max_degree + 1):
        q_e, beta_e = {}, {}
        for j in range(e, e * top + 1):
            beta = PolyField.zero(lattice)
            for m in range(1, e):
                q_m, q_n_ = graded[m][0], graded[e - m][0]
                for k, qk in q_m.items():
                    if j - k in q_n_:
                        beta = beta + poly_bilinear(qk, q_n_[j - k])
            if beta.is_zero():
                continue
            beta_e[j] = beta
            q_e[j] = solve_level(j, None, beta)
        graded[e] = (q_e, beta_e)
    return graded


def graded_parts(xi, max_degree):
    """ Lists of 𝒫^{[e]}(ξ) and ℬ^{[e]}(ξ), index e - 1. """
    lattice = xi.lattice
    graded = graded_expansion(xi, max_degree)
    P, Bres = [], []
    for e in range(1, max_degree + 1):
        q_e, beta_e = graded[e]
        p = np.zeros((lattice.size, lattice.dim), dtype=complex)
        b = np.zeros_like(p)
        for q in q_e.values():
            p += q.coeffs[0]
        for j, beta in beta_e.items():
            if lattice.is_representable(j):
                mask = lattice.shell_mask(j)
                b[mask] += beta.coeffs[0][mask]
        P.append(SpectralField(lattice, p, copy=False))
        Bres.append(SpectralField(lattice, b, copy=False))
    return P, Bres


def directional_derivative(degree, xi, eta, rel_step=1e-4):
    """ D𝒫^{[degree]}(ξ)(η) by the five-point central difference. """
    if eta.norm() == 0:
        return SpectralField.zeros(xi.lattice)
    h = rel_step * max(xi.norm(), 1e-300) / eta.norm()
    eta_state = NormalState(eta)
    stencil = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))
    total = np.zeros((xi.lattice.size, xi.lattice.dim), dtype=complex)
    for k, c in stencil:
        P, _ = graded_parts(xi + eta_state * (k * h), degree)
        total += c * P[degree - 1].amplitudes
    return SpectralField(xi.lattice, total / (12 * h), copy=False)


def homology_residual(xi, d, return_parts=False):
    """ Relative discrepancy between Q^{[d]}(ξ) and ℬ^{[d]}(ξ).

    Q^{[d]} = A𝒫^{[d]} - D𝒫^{[d]}(Aξ) + Σ_{k+l=d} B(𝒫^{[k]}, 𝒫^{[l]})
              - Σ_{k+l=d+1, 2<=k<=d-1} D𝒫^{[k]}(Q^{[l]}),
    built recursively from Q^{[2]}. When |ℬ^{[d]}| < 1e-14 |ξ|^d the
    absolute discrepancy scaled by |ξ|^d is returned instead.
    """
    if d < 2:
        raise ValidationError(f"Homology degree must be >= 2, got {d}")
    P, Bres = graded_parts(xi, d)
    A_xi = xi.stokes(1.0).field

    Q = {}
    for e in range(2, d + 1):
        value = P[e - 1].stokes(1.0) - directional_derivative(e, xi, A_xi)
        for k in range(1, e):
            value = value + SpectralField(
                xi.lattice,
                xi.lattice.bilinear(P[k - 1].amplitudes, P[e - k - 1].amplitudes),
                copy=False,
            )
        for k in range(2, e):
            value = value - directional_derivative(k, xi, Q[e + 1 - k])
        Q[e] = value

    diff = (Q[d] - Bres[d - 1]).norm()
    scale = Bres[d - 1].norm()
    size = xi.norm() ** d
    if size == 0:
        # ξ = 0: both sides vanish identically
        residual = diff
    elif scale > 1e-14 * size:
        residual = diff / scale
    else:
        residual = diff / size
    logger.debug(f"Homology residual at degree {d}: {residual:.3e}")

    if return_parts:
        return residual, Q[d], Bres[d - 1]
    return residual


def vandermonde_crosscheck(xi, d, levels, cache=None):
    """ max_j |homogeneous_part(𝒫_j, ξ, d) - q_j^{[d]}(0)| relative to |ξ|^d. """
    cache = cache if cache is not None else ExpansionCache()
    graded = graded_expansion(xi, d)[d][0]
    worst, condition = 0.0, 0.0
    for j in range(max(d, 1), levels + 1):
        value, cond = homogeneous_part(
            lambda x: expansion_polynomial(x, j, cache), xi, d, d_max=j
        )
        exact = graded[j].evaluate(0.0) if j in graded else SpectralField.zeros(
            xi.lattice
        )
        worst = max(worst, (value - exact).norm())
        condition = max(condition, cond)
    return worst / max(xi.norm() ** d, 1e-300), condition
