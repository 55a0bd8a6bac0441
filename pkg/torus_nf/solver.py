""" Time integration of the truncated equation du/dt + Au + B(u, u) = 0. """
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from torus_nf.spectral import SpectralField, get_lattice
from torus_nf.utils import (
    NumericError,
    ValidationError,
    dump_json,
    load_json,
)

logger = logging.getLogger(__name__)

TRACE = 5

SERIES_COLUMNS = [
    "t",
    "u_l2",
    "u_h1",
    "lambda",
    "helicity",
    "energy",
    "enstrophy",
    "I",
]
SERIES_VERSION = 1


class IFRK4:
    """ Integrating-factor RK4 for du/dt + Au = N(t, u).

    The linear part is propagated exactly with e^{-dt A}; N is integrated
    with the classical RK4 tableau in the variable e^{tA} u. States are
    amplitude arrays whose second-to-last axis runs over the lattice modes.

    Parameters
    ----------
    lattice : Lattice
        Truncation the states live on.

    dt : float
        Time step.

    nonlinear : callable
        N(t, u) returning an array shaped like u.
    """

    def __init__(self, lattice, dt, nonlinear):
        if not dt > 0:
            raise ValidationError(f"Time step must be positive, got {dt}")
        self.lattice = lattice
        self.dt = float(dt)
        self.nonlinear = nonlinear
        self.E = np.exp(-self.dt * lattice.ksq)[:, None]
        self.E2 = np.exp(-0.5 * self.dt * lattice.ksq)[:, None]

    def step(self, t, u):
        dt, E, E2, N = self.dt, self.E, self.E2, self.nonlinear
        k1 = N(t, u)
        k2 = N(t + 0.5 * dt, E2 * (u + 0.5 * dt * k1))
        k3 = N(t + 0.5 * dt, E2 * u + 0.5 * dt * k2)
        k4 = N(t + dt, E * u + dt * E2 * k3)
        return E * u + dt / 6.0 * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)


def nse_nonlinearity(lattice):
    """ N(t, u) = -B(u, u). """

    def _nonlinear(t, u):
        return -lattice.bilinear(u, u)

    return _nonlinear


def step_ifrk4(u, dt, nonlinear=None, t=0.0):
    """ One integrating-factor RK4 step of the truncated equation. """
    lattice = u.lattice
    integrator = IFRK4(lattice, dt, nonlinear or nse_nonlinearity(lattice))
    out = integrator.step(t, u.amplitudes)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"Non-finite state after step at t={t + dt}")
    return SpectralField(lattice, out, copy=False)


def heat_flow(u, t):
    """ e^{-tA} u, the exact solution whenever B vanishes along the flow. """
    return u.scale_modes(np.exp(-t * u.lattice.ksq))


def scalar_series(lattice, amplitudes):
    """ One row of the per-step scalar series. """
    mag2 = (np.abs(amplitudes) ** 2).sum(axis=-1)
    u2 = float(mag2.sum())
    h1 = float(np.dot(lattice.ksq, mag2))
    if lattice.dim == 3:
        omega = lattice.curl(amplitudes)
        hel = float(np.vdot(omega, amplitudes).real)
        curl_omega = lattice.curl(omega)
        hel_i = float(np.vdot(curl_omega, omega).real)
    else:
        hel = hel_i = 0.0
    lam = h1 / u2 if u2 > 0 else float("nan")
    return np.sqrt(u2), np.sqrt(h1), lam, hel, 0.5 * u2, h1, hel_i


def _check_steps(T, dt):
    if not T > 0 or not dt > 0:
        raise ValidationError(f"T and dt must be positive, got {T}, {dt}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * T:
        raise ValidationError(f"T={T} is not a multiple of dt={dt}")
    return n_steps


class Trajectory:
    """ Snapshots of a time integration plus its per-step scalar series.

    Parameters
    ----------
    lattice : Lattice
        Truncation of all states.

    times : array_like
        Snapshot times, increasing.

    states : array_like
        Amplitude arrays of shape (n_snapshots, n_modes, dim).

    series : pandas.DataFrame
        Per-step scalars with columns ``SERIES_COLUMNS``.

    dt : float
        Time step of the integration.

    stride : int
        Steps between snapshots.
    """

    def __init__(
        self,
        lattice,
        times,
        states,
        series,
        dt,
        stride,
        scheme="ifrk4",
        metadata=None,
    ):
        self.lattice = lattice
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=complex)
        self.states.setflags(write=False)
        self.series = series
        self.dt = float(dt)
        self.stride = int(stride)
        self.scheme = scheme
        self.metadata = dict(metadata or {})

        if self.states.shape != (len(self.times), lattice.size, lattice.dim):
            raise ValidationError(
                f"States of shape {self.states.shape} do not match "
                f"{len(self.times)} snapshots on {lattice}"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("Snapshot times must be increasing")

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return (
            f"Trajectory({self.lattice!r}, t=[{self.times[0]:g}, "
            f"{self.times[-1]:g}], {len(self)} snapshots)"
        )

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def snapshot_dt(self):
        return self.dt * self.stride

    def state(self, i):
        return SpectralField(self.lattice, self.states[i])

    @property
    def initial(self):
        return self.state(0)

    def window(self, t0, t1):
        """ Indices of snapshots with t0 <= t <= t1. """
        eps = 1e-9 * max(1.0, abs(t1))
        return np.flatnonzero(
            (self.times >= t0 - eps) & (self.times <= t1 + eps)
        )

    def shift(self, t0):
        """ Trajectory of S(t0) u0, with time re-based to 0. """
        idx = np.flatnonzero(np.abs(self.times - t0) < 1e-9 * max(1.0, t0))
        if idx.size == 0:
            raise ValidationError(f"t0={t0} is not a snapshot time")
        i0 = idx[0]
        series = self.series[self.series["t"] >= t0 - 1e-9].copy()
        series["t"] = series["t"] - t0
        series = series.reset_index(drop=True)
        return Trajectory(
            self.lattice,
            self.times[i0:] - self.times[i0],
            self.states[i0:],
            series,
            self.dt,
            self.stride,
            self.scheme,
            dict(self.metadata, shifted_by=float(t0)),
        )

    def save(self, folder):
        """ Save as manifest.json (parameters, times, scheme, metadata),
        states/NNNN.json and series.csv.
        """
        folder = Path(folder)
        (folder / "states").mkdir(parents=True, exist_ok=True)
        for i in range(len(self)):
            dump_json(self.state(i).to_dict(), folder / "states" / f"{i:04d}.json")
        self.series.to_csv(
            folder / "series.csv", index=False, float_format="%.17g"
        )
        dump_json(
            {
                "dim": self.lattice.dim,
                "lambda_max": self.lattice.lambda_max,
                "dt": self.dt,
                "stride": self.stride,
                "scheme": self.scheme,
                "times": self.times,
                "series_version": SERIES_VERSION,
                "metadata": self.metadata,
            },
            folder / "manifest.json",
        )
        logger.debug(f"Saved {self!r} to {folder}")

        return folder

    @classmethod
    def load(cls, folder):
        """ Load a trajectory saved with ``save``. """
        folder = Path(folder)
        info = load_json(folder / "manifest.json")
        if info.get("series_version") != SERIES_VERSION:
            raise ValidationError(
                f"Unsupported series version {info.get('series_version')}"
            )
        lattice = get_lattice(info["dim"], info["lambda_max"])
        times = np.asarray(info["times"], dtype=float)
        states = [
            SpectralField.from_dict(
                load_json(folder / "states" / f"{i:04d}.json"), lattice
            ).amplitudes
            for i in range(len(times))
        ]
        series = pd.read_csv(folder / "series.csv")
        if list(series.columns) != SERIES_COLUMNS:
            raise ValidationError(
                f"Unexpected series columns {list(series.columns)}"
            )
        return cls(
            lattice,
            times,
            states,
            series,
            info["dt"],
            info["stride"],
            info.get("scheme", "ifrk4"),
            info.get("metadata"),
        )


def evolve(u0, T, dt=1e-3, stride=10, progress=False, metadata=None):
    """ Integrate from u0 up to time T with snapshots every ``stride`` steps.

    Parameters
    ----------
    u0 : SpectralField
        Initial data.

    T : float
        Final time, a multiple of dt.

    dt : float, default 1e-3
        Time step.

    stride : int, default 10
        Steps between stored snapshots.

    progress : bool, default False
        Show a progress bar.

    Returns
    -------
    traj : Trajectory
        Snapshots and per-step scalar series.
    """
    n_steps = _check_steps(T, dt)
    if int(stride) != stride or stride < 1:
        raise ValidationError(f"Stride must be a positive integer: {stride}")
    if n_steps % stride:
        raise ValidationError(
            f"{n_steps} steps are not a multiple of the stride {stride}"
        )

    lattice = u0.lattice
    integrator = IFRK4(lattice, dt, nse_nonlinearity(lattice))

    u = np.array(u0.amplitudes)
    times, states = [0.0], [u.copy()]
    rows = [(0.0,) + scalar_series(lattice, u)]

    logger.debug(
        f"Integrating {lattice} to T={T} with dt={dt} ({n_steps} steps)"
    )
    for i in tqdm(range(1, n_steps + 1), disable=not progress, leave=False):
        u = integrator.step((i - 1) * dt, u)
        t = i * dt
        if not np.all(np.isfinite(u)):
            raise NumericError(f"Non-finite state at t={t:g}")
        rows.append((t,) + scalar_series(lattice, u))
        if i % stride == 0:
            times.append(t)
            states.append(u.copy())
        if i % 1000 == 0:
            logger.log(TRACE, f"t={t:g}: |u|={rows[-1][1]:.6e}")

    series = pd.DataFrame(rows, columns=SERIES_COLUMNS)

    return Trajectory(
        lattice,
        times,
        states,
        series,
        dt,
        stride,
        metadata=dict(metadata or {}, T=float(T)),
    )


def central_derivative(y, dt):
    """ Fourth-order central difference at interior points y[2:-2]. """
    y = np.asarray(y, dtype=float)
    return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * dt)


def energy_checks(traj):
    """ Discrete energy and helicity balance diagnostics.

    Returns a dict with

    - ``energy_residual``: max |dE/dt + F| at interior steps, derivative by
      fourth-order central differences of the per-step series
    - ``midpoint_residual``: max |½(|u(t+dt)|² - |u(t)|²)/dt + ‖u‖²_mid|
      with the trapezoidal mid value
    - ``helicity_residual``: max |½ dH/dt + I|
    - ``decay_ratio_min``/``max``: range of |u(t)|² e^{2t} / |u0|²
    - ``monotone``: whether |u(t)| decreases strictly along the series
    """
    s = traj.series
    dt = traj.dt
    t = s["t"].to_numpy()
    energy = s["energy"].to_numpy()
    enstrophy = s["enstrophy"].to_numpy()
    hel = s["helicity"].to_numpy()
    hel_i = s["I"].to_numpy()
    u2 = 2 * energy

    report = {
        "energy_residual": 0.0,
        "midpoint_residual": 0.0,
        "helicity_residual": 0.0,
        "decay_ratio_min": 1.0,
        "decay_ratio_max": 1.0,
        "monotone": True,
        "n_steps": int(len(t) - 1),
    }
    if u2[0] == 0:
        return report

    if len(t) >= 5:
        report["energy_residual"] = float(
            np.abs(central_derivative(energy, dt) + enstrophy[2:-2]).max()
        )
        report["helicity_residual"] = float(
            np.abs(0.5 * central_derivative(hel, dt) + hel_i[2:-2]).max()
        )
    if len(t) >= 2:
        report["midpoint_residual"] = float(
            np.abs(
                0.5 * np.diff(u2) / dt + 0.5 * (enstrophy[1:] + enstrophy[:-1])
            ).max()
        )
        report["monotone"] = bool(np.all(np.diff(u2) < 0))

    ratio = u2 * np.exp(2 * t) / u2[0]
    report["decay_ratio_min"] = float(ratio.min())
    report["decay_ratio_max"] = float(ratio.max())

    logger.debug(f"Energy checks: {report}")

    return report


def richardson_check(u0, T, dt):
    """ Observed convergence order of the scheme by step halving.

    Integrates to T with dt, dt/2 and dt/4 and compares the final states.
    An order close to 4 indicates the asymptotic regime of IFRK4.
    """
    finals = []
    for refinement in (1, 2, 4):
        h = dt / refinement
        n_steps = _check_steps(T, h)
        traj = evolve(u0, T, dt=h, stride=n_steps)
        finals.append(traj.state(-1))

    coarse = (finals[0] - finals[1]).norm()
    fine = (finals[1] - finals[2]).norm()
    if fine == 0 or coarse == 0:
        order = float("inf")
    else:
        order = float(np.log2(coarse / fine))

    report = {
        "dt": float(dt),
        "difference_dt": float(coarse),
        "difference_dt2": float(fine),
        "order": order,
    }
    logger.debug(f"Richardson check: {report}")

    return report
