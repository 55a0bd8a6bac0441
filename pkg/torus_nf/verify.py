""" Desk-scale acceptance checks of the solver and the normal form machinery.

Every check returns a CheckResult holding the measured metrics, the limits
they were compared with and the headroom of each comparison. Checks only
depend on the run config and its seed, so two runs with the same config
produce identical results.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from torus_nf.asymptotics import dirichlet_limit, helicity_report
from torus_nf.initial_data import (
    beltrami,
    helical,
    invariant_family,
    m_perp,
    random_small,
)
from torus_nf.normal_form import (
    ExpansionCache,
    WeightSchedule,
    contraction_ratio,
    expansion,
    expansion_polynomial,
    expansion_report,
    extract_normalization,
    gauge,
    gauge_table,
    graded_parts,
    homology_residual,
    initial_state_from_xi,
    product_bound_holds,
    random_normal_state,
    s_ext,
    s_normal,
    smoothing_bound_holds,
    star_norm,
    vandermonde_crosscheck,
)
from torus_nf.pd_engine import (
    PolySystem,
    flow_check,
    is_resonant,
    normal_form,
    truncated_nse_as_polysystem,
    truncated_nse_coordinates,
)
from torus_nf.solver import energy_checks, evolve, heat_flow
from torus_nf.spectral import (
    DEFAULT_LAMBDA_MAX,
    bilinear_B,
    get_lattice,
    inner,
)
from torus_nf.utils import TorusNFError, ValidationError

logger = logging.getLogger(__name__)

CHECKS = OrderedDict()

# checks that fail when all absolute tolerances are scaled by 1e-3
EXPECTED_TIGHT_FAILURES = (
    "round_trip",
    "commutative_diagram",
    "homology",
)

DEFAULT_SETTINGS = {
    "gauge_samples": 1000,
    "homology_samples": 20,
    "antisymmetry_samples": 100,
    "xi_amplitude": 0.03,
    "xi_decay": 0.03,
    "expansion_data_order": 12,
    "contraction_eps0": 0.05,
    "contraction_time": 1.0,
    "contraction_samples": 20,
    "contraction_order": 4,
}

CONTRACTION_BOUND = 4 * math.exp(1 / 8)


def check(name):
    """ Register a check under ``name``. """

    def decorator(func):
        CHECKS[name] = func
        return func

    return decorator


@dataclass
class CheckResult:
    """ Outcome of one acceptance check. """

    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)
    headroom: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    error: str = None

    def to_dict(self):
        return {
            "passed": self.passed,
            "metrics": self.metrics,
            "limits": self.limits,
            "headroom": self.headroom,
            "details": self.details,
            "error": self.error,
        }


def compare(name, metrics, limits, details=None):
    """ CheckResult from metrics and limits.

    ``limits`` maps a metric name to ``("max", value)`` (metric must not
    exceed value) or ``("min", value)`` (metric must reach value). Boolean
    metrics without a limit must be true.
    """
    passed = True
    headroom = {}
    for key, (kind, bound) in limits.items():
        value = metrics[key]
        if kind == "max":
            ok = value <= bound
            if bound <= 0:
                headroom[key] = bound - value
            else:
                # decades below the bound
                headroom[key] = (
                    float("inf") if value <= 0 else math.log10(bound / value)
                )
        else:
            ok = value >= bound
            headroom[key] = value - bound
        passed &= bool(ok)
    for key, value in metrics.items():
        if isinstance(value, (bool, np.bool_)) and key not in limits:
            passed &= bool(value)

    return CheckResult(
        name=name,
        passed=passed,
        metrics=metrics,
        limits={k: list(v) for k, v in limits.items()},
        headroom=headroom,
        details=details or {},
    )


class Verifier:
    """ Runs the acceptance checks for one run config.

    Parameters
    ----------
    run : RunConfig
        Dimension of the checks is always 3 (2D parts use the default 2D
        truncation); ``lambda_max``, ``dt``, ``stride``, ``seed``, the
        windows and the Gevrey exponents are taken from here.

    tolerances : dict
        Acceptance tolerances, already scaled.

    settings : dict, optional
        Sample sizes and amplitudes, see DEFAULT_SETTINGS.

    weights : dict, optional
        Weight overrides of the star norm.
    """

    def __init__(self, run, tolerances, settings=None, weights=None,
                 tolerance_scale=1.0):
        self.run = run
        self.tol = tolerances
        self.settings = dict(DEFAULT_SETTINGS, **(settings or {}))
        self.weights = WeightSchedule.from_config(
            weights or {}, run.lambda_max
        )
        self.tolerance_scale = tolerance_scale
        self.lattice = get_lattice(3, run.lambda_max)
        self.cache = ExpansionCache()
        self._trajectories = {}

    def trajectory(self, key, u0, T):
        """ Memoized integration of u0 up to T. """
        if key not in self._trajectories:
            logger.debug(f"Integrating '{key}' up to T={T}")
            self._trajectories[key] = evolve(
                u0, T, dt=self.run.dt, stride=self.run.stride
            )
        return self._trajectories[key]

    def normal_data(self, shells=None):
        """ Graded normalization state |ξ_m| = amplitude * decay^(m-1). """
        return random_normal_state(
            self.lattice,
            self.settings["xi_amplitude"],
            seed=self.run.seed,
            shells=shells,
            decay=self.settings["xi_decay"],
        )

    def run_checks(self, only=None):
        """ Run all (or the ``only`` selected) checks.

        Returns
        -------
        report : dict
            Per-check results plus the summary.
        """
        names = list(CHECKS) if not only else list(only)
        unknown = set(names) - set(CHECKS)
        if unknown:
            raise ValidationError(
                f"Unknown checks: {', '.join(sorted(unknown))}; "
                f"available: {', '.join(CHECKS)}"
            )

        results = OrderedDict()
        for name in names:
            logger.debug(f"Running check '{name}'")
            try:
                results[name] = CHECKS[name](self)
            except TorusNFError as e:
                logger.debug(f"Check '{name}' raised", exc_info=True)
                results[name] = CheckResult(
                    name=name, passed=False, error=f"{type(e).__name__}: {e}"
                )
            status = "passed" if results[name].passed else "FAILED"
            logger.info(f"{name}: {status}")

        failed = [n for n, r in results.items() if not r.passed]
        expected = (
            [n for n in EXPECTED_TIGHT_FAILURES if n in names]
            if self.tolerance_scale < 1
            else []
        )
        return {
            "passed": not failed,
            "tolerance_scale": self.tolerance_scale,
            "failed": failed,
            "expected_failures": expected,
            "unexpected_failures": [n for n in failed if n not in expected],
            "checks": {n: r.to_dict() for n, r in results.items()},
        }


@check("energy_equality")
def check_energy_equality(v):
    u0 = random_small(v.lattice, 0.1, seed=v.run.seed)
    traj = v.trajectory("generic_5", u0, 5.0)
    balance = energy_checks(traj)

    rng = np.random.default_rng(v.run.seed)
    antisymmetry = 0.0
    for _ in range(v.settings["antisymmetry_samples"]):
        u = random_small(v.lattice, 1.0, seed=int(rng.integers(2 ** 31)))
        antisymmetry = max(antisymmetry, abs(inner(bilinear_B(u, u), u)))

    return compare(
        "energy_equality",
        {
            "energy_residual": balance["energy_residual"],
            "midpoint_residual": balance["midpoint_residual"],
            "antisymmetry": antisymmetry,
            "monotone": balance["monotone"],
        },
        {
            "energy_residual": ("max", v.tol["energy_residual"]),
            "antisymmetry": ("max", v.tol["antisymmetry"]),
        },
        details={"T": 5.0, "decay_ratio_max": balance["decay_ratio_max"]},
    )


@check("invariant_family")
def check_invariant_family(v):
    u0 = invariant_family(v.lattice, k=(1, -1, 0))
    traj = v.trajectory("invariant_family", u0, 1.0)
    exact = heat_flow(u0, 1.0).amplitudes
    error = float(np.abs(traj.states[-1] - exact).max())
    return compare(
        "invariant_family",
        {"max_mode_error": error},
        {"max_mode_error": ("max", v.tol["invariant_family"])},
        details={"k": [1, -1, 0], "t": 1.0},
    )


@check("dirichlet_quotient")
def check_dirichlet_quotient(v):
    seed = v.run.seed
    cases = {
        "beltrami": (beltrami(v.lattice, 1, 1, 0.1, seed), 10.0, 1),
        "m_perp": (m_perp(v.lattice, amplitude=0.1, seed=seed), 10.0, 2),
        "generic": (random_small(v.lattice, 0.1, seed=seed), v.run.T, 1),
    }
    metrics, limits, details = {}, {}, {}
    for name, (u0, T, expected) in cases.items():
        series = dirichlet_limit(v.trajectory(name, u0, T), v.run.fit_window)
        metrics[f"{name}_distance"] = abs(series.limit - expected)
        metrics[f"{name}_matched"] = series.matched == expected
        limits[f"{name}_distance"] = ("max", v.tol["dirichlet_limit"])
        details[name] = series.to_dict()

    lattice_2d = get_lattice(2, DEFAULT_LAMBDA_MAX[2])
    traj = v.trajectory("generic_2d", random_small(lattice_2d, 0.1, seed), 5.0)
    mag2 = (np.abs(traj.states) ** 2).sum(axis=-1)
    lam = (mag2 @ lattice_2d.ksq) / mag2.sum(axis=1)
    metrics["monotone_2d"] = bool(np.all(np.diff(lam) <= 1e-12 * lam[1:]))
    details["lambda_2d_range"] = [float(lam.min()), float(lam.max())]

    return compare("dirichlet_quotient", metrics, limits, details)


@check("expansion_residual")
def check_expansion_residual(v):
    xi = v.normal_data()
    report = expansion_report(
        None,
        xi,
        orders=v.run.expand_orders,
        window=tuple(v.run.expand_window),
        dt=v.run.remainder_dt,
        gevrey=tuple(v.run.gevrey),
        data_order=v.settings["expansion_data_order"],
        cache=v.cache,
    )
    metrics, limits = {"degree_bound": report["degree_bound_holds"]}, {}
    margin = v.tol["expansion_margin"]
    for N, entry in report["orders"].items():
        for norm in ("H", "gevrey"):
            fit = entry[norm]
            if fit["vanishes"]:
                continue
            metrics[f"exponent_{N}_{norm}"] = fit["exponent"]
            limits[f"exponent_{N}_{norm}"] = ("max", -(N + margin))
        if not (entry["H"]["vanishes"] or entry["gevrey"]["vanishes"]):
            metrics[f"slope_gap_{N}"] = abs(
                entry["H"]["exponent"] - entry["gevrey"]["exponent"]
            )
            limits[f"slope_gap_{N}"] = ("max", v.tol["gevrey_slope"])

    return compare("expansion_residual", metrics, limits, report)


def _round_trip_data(v):
    xi = v.normal_data(shells=[1, 2, 3, 4])
    u0 = initial_state_from_xi(xi, 4, cache=v.cache)
    traj = v.trajectory("round_trip", u0, 12.0)
    return xi, traj


@check("round_trip")
def check_round_trip(v):
    xi, traj = _round_trip_data(v)
    result = extract_normalization(
        traj, 4, v.run.extraction_windows(), v.run.delta_min, cache=v.cache
    )
    recovery = (result.xi - xi).norm()

    reference = expansion(xi, 8, cache=v.cache)
    idx = traj.window(0.0, 10.0)
    trajectory_error = max(
        float(np.sqrt((np.abs(
            traj.states[i] - reference.evaluate_array(traj.times[i])
        ) ** 2).sum()))
        for i in idx
    )
    return compare(
        "round_trip",
        {"recovery_error": recovery, "trajectory_error": trajectory_error},
        {
            "recovery_error": ("max", v.tol["round_trip"]),
            "trajectory_error": ("max", v.tol["round_trip_trajectory"]),
        },
        details={
            "xi_norms": xi.component_norms(),
            "extraction": result.to_dict()["fits"],
        },
    )


@check("commutative_diagram")
def check_commutative_diagram(v):
    xi, traj = _round_trip_data(v)
    windows = v.run.extraction_windows()
    W0 = extract_normalization(
        traj, 4, windows, v.run.delta_min, cache=v.cache
    ).xi

    metrics, limits, details = {}, {}, {}
    times = (0.5, 1.0, 2.0)
    for t in times:
        Wt = extract_normalization(
            traj.shift(t), 4, windows, v.run.delta_min, cache=v.cache
        ).xi
        St = s_normal(W0, t, N=4, cache=v.cache)
        diff = Wt - St
        metrics[f"star_{t:g}"] = star_norm(diff, v.weights)
        limits[f"star_{t:g}"] = ("max", v.tol["diagram"])
        details[f"components_{t:g}"] = diff.component_norms()

    levels = [expansion_polynomial(xi, n, v.cache) for n in range(1, 5)]
    summed = s_ext(levels, list(times), N=8, dt=v.run.dt)
    ext_error = 0.0
    for t, out in zip(times, summed):
        total = sum((u.amplitudes for u in out), np.zeros_like(out[0].amplitudes))
        i = int(traj.window(t, t)[0])
        ext_error = max(
            ext_error,
            float(np.sqrt((np.abs(total - traj.states[i]) ** 2).sum())),
        )
    metrics["extended_sum"] = ext_error
    limits["extended_sum"] = ("max", v.tol["extended_sum"])

    return compare("commutative_diagram", metrics, limits, details)


@check("gauges")
def check_gauges(v):
    rng = np.random.default_rng(v.run.seed)
    rtol = v.tol["gauge_rtol"]
    max_weight = v.run.lambda_max
    product = smoothing = equality = True
    enumeration_gap = 0.0
    samples = v.settings["gauge_samples"]
    for i in range(samples):
        xi = random_normal_state(
            v.lattice,
            float(rng.uniform(0.01, 1.0)),
            seed=int(rng.integers(2 ** 31)),
            decay=float(rng.uniform(0.2, 1.0)),
        )
        product &= product_bound_holds(xi, 6, max_weight, rtol)
        for alpha, s in ((0.0, 0.5), (0.0, 1.0), (0.5, 1.0)):
            smoothing &= smoothing_bound_holds(
                xi, alpha, s, 6, max_weight, rtol
            )
        table = gauge_table(xi, 1, max_weight)
        for n in v.lattice.shells:
            equality &= bool(table[1, n] == xi.component(n).norm())
            equality &= gauge(xi, 1, n) == xi.component(n).norm()
        if i < 10:
            table = gauge_table(xi, 3, max_weight)
            for d in (2, 3):
                for n in range(d, max_weight + 1):
                    enum = gauge(xi, d, n)
                    enumeration_gap = max(
                        enumeration_gap,
                        abs(enum - table[d, n]) / max(enum, 1e-300),
                    )

    return compare(
        "gauges",
        {
            "product_bound": bool(product),
            "smoothing_bound": bool(smoothing),
            "first_order_equality": bool(equality),
            "enumeration_gap": enumeration_gap,
        },
        {"enumeration_gap": ("max", 1e-12)},
        details={"samples": samples, "max_weight": max_weight},
    )


@check("homology")
def check_homology(v):
    rng = np.random.default_rng(v.run.seed)
    worst = {2: 0.0, 3: 0.0}
    states = []
    for _ in range(v.settings["homology_samples"]):
        xi = random_normal_state(
            v.lattice, 0.05, seed=int(rng.integers(2 ** 31)),
            shells=[1, 2, 3], decay=0.5,
        )
        states.append(xi)
        for d in worst:
            worst[d] = max(worst[d], homology_residual(xi, d))
    gap, condition = vandermonde_crosscheck(states[0], 2, 4)

    return compare(
        "homology",
        {"residual_2": worst[2], "residual_3": worst[3]},
        {
            "residual_2": ("max", v.tol["homology_2"]),
            "residual_3": ("max", v.tol["homology_3"]),
        },
        details={"vandermonde_gap": gap, "vandermonde_condition": condition},
    )


def _quadratic_system(eigenvalues, seed):
    rng = np.random.default_rng(seed)
    m = len(eigenvalues)
    terms = []
    for a in range(m):
        for b in range(a, m):
            exponents = [0] * m
            exponents[a] += 1
            exponents[b] += 1
            for k in range(m):
                terms.append((exponents, k, float(rng.uniform(-1, 1))))
    return PolySystem.from_terms(eigenvalues, terms)


@check("poincare_dulac")
def check_poincare_dulac(v):
    metrics, details = {}, {}

    nonresonant = normal_form(_quadratic_system([1.0, math.pi], v.run.seed), 4)
    metrics["nonresonant_theta"] = nonresonant.normal_form.nonlinear.max_abs()
    metrics["nonresonant_conjugacy"] = nonresonant.residual

    resonant_sys = PolySystem.from_terms(
        [1.0, 2.0],
        [([2, 0], 1, 0.7), ([1, 1], 0, 0.3), ([1, 1], 1, -0.2),
         ([0, 2], 0, 0.5)],
    )
    resonant = normal_form(resonant_sys, 4)
    kept = [(a.dense(2), k, c) for a, k, c in resonant.resonant_terms()]
    metrics["resonant_kept_exactly"] = (
        [(a, k) for a, k, _ in kept] == [([2, 0], 1)]
        and abs(kept[0][2] - 0.7) < 1e-14
    )
    details["resonant_terms"] = kept

    flow = flow_check(resonant_sys, normal_form(resonant_sys, 3),
                      seed=v.run.seed)
    metrics["flow_slope"] = flow["slope"]
    details["flow"] = flow

    nse = truncated_nse_as_polysystem(2, 3)
    nse_nf = normal_form(nse, 2)
    lam = nse.eigenvalues
    metrics["shell_additivity"] = all(
        is_resonant(lam, a, k) for a, k, _ in nse_nf.resonant_terms()
    )
    lattice = get_lattice(3, 2)
    xi = random_normal_state(lattice, 0.05, seed=v.run.seed)
    theta = nse_nf.normal_form.nonlinear.homogeneous(2).evaluate(
        truncated_nse_coordinates(xi.field)
    )
    _, bres = graded_parts(xi, 2)
    reference = truncated_nse_coordinates(bres[1])
    metrics["cross_module"] = float(np.abs(theta - reference).max())
    details["nse_dimension"] = nse.dimension

    return compare(
        "poincare_dulac",
        metrics,
        {
            "nonresonant_theta": ("max", v.tol["conjugacy"]),
            "nonresonant_conjugacy": ("max", v.tol["conjugacy"]),
            "flow_slope": ("min", 3 + v.tol["flow_margin"]),
            "cross_module": ("max", v.tol["cross_module"]),
        },
        details,
    )


@check("helicity")
def check_helicity(v):
    seed = v.run.seed
    metrics, limits, details = {}, {}, {}

    generic = v.trajectory(
        "generic_5", random_small(v.lattice, 0.1, seed=seed), 5.0
    )
    metrics["balance_residual"] = energy_checks(generic)["helicity_residual"]
    limits["balance_residual"] = ("max", v.tol["helicity_balance"])

    perp = v.trajectory("m_perp_5", m_perp(v.lattice, seed=seed), 5.0)
    s = perp.series
    metrics["m_perp_ratio"] = float(
        (s["helicity"].abs() / (2 * s["energy"])).max()
    )
    limits["m_perp_ratio"] = ("max", v.tol["helicity_zero"])

    targets = {
        "beltrami_plus": (beltrami(v.lattice, 1, 1, 0.1, seed), 1.0, 1),
        "beltrami_minus": (beltrami(v.lattice, 1, -1, 0.1, seed), -1.0, 1),
        "mixture_minus": (
            helical(v.lattice, (1, 1, 0), -math.sqrt(2) * 0.5),
            -math.sqrt(2) * 0.5, 2,
        ),
        "mixture_plus": (
            helical(v.lattice, (1, 1, 0), 0.3 * math.sqrt(2)),
            0.3 * math.sqrt(2), 2,
        ),
    }
    for name, (u0, alpha, n) in targets.items():
        report = helicity_report(v.trajectory(name, u0, 5.0))
        metrics[f"{name}_alpha"] = abs(report.alpha0["value"] - alpha)
        metrics[f"{name}_rate"] = abs(report.h0["value"] - n)
        limits[f"{name}_alpha"] = ("max", v.tol["helicity_ratio"])
        limits[f"{name}_rate"] = ("max", v.tol["helicity_ratio"])
        details[name] = report.to_dict()

    return compare("helicity", metrics, limits, details)


@check("weights")
def check_weights(v):
    violations = v.weights.validate()
    return compare(
        "weights",
        {"conforming": not violations},
        {},
        details={"violations": violations, "schedule": v.weights.to_dict()},
    )


@check("contraction")
def check_contraction(v):
    ratio = contraction_ratio(
        v.lattice,
        v.settings["contraction_eps0"],
        v.settings["contraction_time"],
        v.weights,
        samples=v.settings["contraction_samples"],
        seed=v.run.seed,
        N=v.settings["contraction_order"],
        cache=v.cache,
    )
    return compare(
        "contraction",
        {"ratio": ratio},
        {"ratio": ("max", CONTRACTION_BOUND * (1 + v.tol["contraction"]))},
        details={
            "eps0": v.settings["contraction_eps0"],
            "t": v.settings["contraction_time"],
        },
    )
