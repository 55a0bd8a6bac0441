""" Poincaré–Dulac normal forms of polynomial ODEs dx/dt + λx + φ(x) = 0.

The linear part is diagonal with real eigenvalues λ; φ is a polynomial with
terms of degree 2..D. Normalizing to degree D removes every monomial
x^α e_k whose denominator ⟨α, λ⟩ - λ_k does not vanish, through successive
near-identity changes x = y + ψ^{[d]}(y).
"""
import logging
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from torus_nf.multiindex import MultiIndex, indices_of_order
from torus_nf.spectral import SpectralField, get_lattice, real_basis
from torus_nf.utils import NumericError, SizeError, ValidationError

logger = logging.getLogger(__name__)

TOL_RES = 1e-9
TOL_NEAR = 1e-6
MAX_DEGREE = 5
MAX_DIMENSION = 40


def _mul_scalar(p, q, max_degree):
    """ Product of scalar polynomials, truncated at max_degree. """
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            if a.order + b.order > max_degree:
                continue
            key = a + b
            out[key] = out.get(key, 0.0) + ca * cb
    return out


class PolyMap:
    """ Vector-valued polynomial on R^m, MultiIndex -> coefficient vector. """

    __slots__ = ("m", "terms")

    def __init__(self, m, terms=None):
        self.m = int(m)
        self.terms = {}
        for index, coef in (terms or {}).items():
            coef = np.asarray(coef, dtype=float)
            if coef.shape != (self.m,):
                raise ValidationError(
                    f"Coefficient of {index} has shape {coef.shape}"
                )
            if np.any(coef):
                self.terms[index] = coef

    @classmethod
    def identity(cls, m):
        return cls(m, {MultiIndex.unit(i): np.eye(m)[i] for i in range(m)})

    def __repr__(self):
        return f"PolyMap(m={self.m}, {len(self.terms)} monomials)"

    def __len__(self):
        return len(self.terms)

    @property
    def degree(self):
        return max((a.order for a in self.terms), default=0)

    def homogeneous(self, d):
        return PolyMap(
            self.m, {a: c for a, c in self.terms.items() if a.order == d}
        )

    def truncate(self, max_degree):
        return PolyMap(
            self.m,
            {a: c for a, c in self.terms.items() if a.order <= max_degree},
        )

    def __add__(self, other):
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms[a] + c if a in terms else c
        return PolyMap(self.m, terms)

    def __neg__(self):
        return PolyMap(self.m, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale_targets(self, factors):
        """ Multiply coordinate k of every coefficient by factors[k]. """
        factors = np.asarray(factors, dtype=float)
        return PolyMap(self.m, {a: c * factors for a, c in self.terms.items()})

    def component(self, k):
        """ Scalar polynomial of coordinate k. """
        return {a: c[k] for a, c in self.terms.items() if c[k] != 0}

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.m)
        for a, c in self.terms.items():
            mono = 1.0
            for i, p in a.items():
                mono *= x[i] ** p
            out += mono * c
        return out

    def compose(self, G, max_degree):
        """ self ∘ G truncated at max_degree. """
        components = [G.component(i) for i in range(G.m)]
        powers = {}

        def power(i, p):
            if (i, p) not in powers:
                if p == 1:
                    powers[(i, p)] = components[i]
                else:
                    powers[(i, p)] = _mul_scalar(
                        power(i, p - 1), components[i], max_degree
                    )
            return powers[(i, p)]

        terms = {}
        for a, c in self.terms.items():
            mono = {MultiIndex(): 1.0}
            for i, p in a.items():
                mono = _mul_scalar(mono, power(i, p), max_degree)
            for b, v in mono.items():
                terms[b] = terms[b] + v * c if b in terms else v * c
        return PolyMap(self.m, terms)

    def jacobian_apply(self, V, max_degree):
        """ D self(y) · V(y) truncated at max_degree. """
        components = [V.component(i) for i in range(V.m)]
        terms = {}
        for a, c in self.terms.items():
            for i, p in a.items():
                if not components[i]:
                    continue
                rest = {a - MultiIndex.unit(i): float(p)}
                for b, v in _mul_scalar(
                    rest, components[i], max_degree
                ).items():
                    terms[b] = terms[b] + v * c if b in terms else v * c
        return PolyMap(self.m, terms)

    def max_abs(self):
        return max((float(np.abs(c).max()) for c in self.terms.values()),
                   default=0.0)

    def per_degree_max(self):
        out = {}
        for a, c in self.terms.items():
            out[a.order] = max(out.get(a.order, 0.0), float(np.abs(c).max()))
        return dict(sorted(out.items()))

    def monomials(self):
        """ (index, target, coefficient) for every nonzero coefficient. """
        for a in sorted(self.terms):
            c = self.terms[a]
            for k in np.flatnonzero(c):
                yield a, int(k), float(c[k])


class PolySystem:
    """ dx/dt + λx + φ(x) = 0 with diagonal linear part.

    Parameters
    ----------
    eigenvalues : array_like
        Real eigenvalues λ.

    nonlinear : PolyMap
        φ, with monomials of degree >= 2.
    """

    def __init__(self, eigenvalues, nonlinear=None):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        if self.eigenvalues.ndim != 1 or not len(self.eigenvalues):
            raise ValidationError("Eigenvalues must be a non-empty vector")
        if not np.all(np.isfinite(self.eigenvalues)):
            raise ValidationError("Eigenvalues must be finite reals")
        m = len(self.eigenvalues)
        self.nonlinear = nonlinear if nonlinear is not None else PolyMap(m)
        if self.nonlinear.m != m:
            raise ValidationError(
                f"Nonlinearity has dimension {self.nonlinear.m}, expected {m}"
            )
        low = [a for a in self.nonlinear.terms if a.order < 2]
        if low:
            raise ValidationError(f"Nonlinear terms of degree < 2: {low}")

    def __repr__(self):
        return (
            f"PolySystem(m={self.dimension}, degree={self.nonlinear.degree}, "
            f"{len(self.nonlinear)} monomials)"
        )

    @property
    def dimension(self):
        return len(self.eigenvalues)

    @classmethod
    def from_terms(cls, eigenvalues, terms):
        """ System from (exponents, target, coefficient) triples. """
        m = len(eigenvalues)
        coeffs = {}
        for exponents, target, value in terms:
            index = (
                exponents
                if isinstance(exponents, MultiIndex)
                else MultiIndex.from_dense(exponents)
            )
            if not 0 <= target < m:
                raise ValidationError(f"Target coordinate {target} out of range")
            coeffs.setdefault(index, np.zeros(m))[target] += value
        return cls(eigenvalues, PolyMap(m, coeffs))

    def vector_field(self, x):
        """ dx/dt at x. """
        x = np.asarray(x, dtype=float)
        return -self.eigenvalues * x - self.nonlinear.evaluate(x)

    def linear_map(self):
        """ x -> λx as a PolyMap. """
        return PolyMap.identity(self.dimension).scale_targets(self.eigenvalues)

    def field_map(self):
        """ The full vector field -λx - φ(x) as a PolyMap. """
        return -(self.linear_map() + self.nonlinear)

    def to_dict(self):
        return {
            "dimension": self.dimension,
            "eigenvalues": self.eigenvalues,
            "terms": [
                {
                    "exponents": a.dense(self.dimension),
                    "target": k,
                    "coefficient": c,
                }
                for a, k, c in self.nonlinear.monomials()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            m = int(data["dimension"])
            eigenvalues = [float(v) for v in data["eigenvalues"]]
            terms = [
                (t["exponents"], int(t["target"]), float(t["coefficient"]))
                for t in data["terms"]
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed polynomial system: {e}")
        if len(eigenvalues) != m:
            raise ValidationError(
                f"{len(eigenvalues)} eigenvalues for dimension {m}"
            )
        for exponents, _, _ in terms:
            if len(exponents) != m:
                raise ValidationError(
                    f"Exponent vector {exponents} has wrong length"
                )
        return cls.from_terms(eigenvalues, terms)


def is_resonant(eigenvalues, index, k, tol=TOL_RES):
    """ |⟨α, λ⟩ - λ_k| < tol. """
    return abs(index.dot(eigenvalues) - eigenvalues[k]) < tol


class NFResult:
    """ Normal form Θ with the change of coordinates x = T(z). """

    def __init__(self, system, D, normal_form, transformation, psi,
                 near_resonances, removed):
        self.system = system
        self.D = D
        self.normal_form = normal_form
        self.transformation = transformation
        self.psi = psi
        self.near_resonances = near_resonances
        self.removed = removed
        self.residual = None
        self.residual_per_degree = None

    def __repr__(self):
        return (
            f"NFResult(D={self.D}, {len(self.normal_form.nonlinear)} "
            f"resonant monomials, {self.removed} removed)"
        )

    def resonant_terms(self):
        return list(self.normal_form.nonlinear.monomials())

    def to_dict(self):
        m = self.system.dimension
        return {
            "D": self.D,
            "normal_form": self.normal_form.to_dict(),
            "transformation": [
                {"exponents": a.dense(m), "target": k, "coefficient": c}
                for a, k, c in (self.transformation
                                - PolyMap.identity(m)).monomials()
            ],
            "near_resonances": self.near_resonances,
            "removed": self.removed,
            "residual": self.residual,
            "residual_per_degree": self.residual_per_degree,
        }


def _check_size(m, D):
    if D < 2:
        raise ValidationError(f"Normalization degree must be >= 2, got {D}")
    if D > MAX_DEGREE or m > MAX_DIMENSION:
        raise SizeError(
            f"Dense normalization supports D <= {MAX_DEGREE} and "
            f"m <= {MAX_DIMENSION}, got D={D}, m={m}"
        )


def normal_form(system, D, tol_res=TOL_RES, tol_near=TOL_NEAR):
    """ Normalize ``system`` up to degree D.

    For d = 2..D every non-resonant degree-d monomial c x^α e_k is removed
    with ψ coefficient c / (⟨α, λ⟩ - λ_k). The transformed nonlinearity Θ
    solves Θ = λψ - Dψ·λy + φ∘(id + ψ) - Dψ·Θ, iterated to degree D.
    Denominators below ``tol_near`` are kept as resonant with a warning.

    Returns
    -------
    result : NFResult
    """
    lam = system.eigenvalues
    m = system.dimension
    _check_size(m, D)

    identity = PolyMap.identity(m)
    linear = system.linear_map()
    G = system.nonlinear.truncate(D)
    T = identity
    psi_all, near, removed = {}, [], 0

    for d in range(2, D + 1):
        psi = {}
        for index, coef in G.homogeneous(d).terms.items():
            denom = index.dot(lam) - lam
            for k in np.flatnonzero(coef):
                if abs(denom[k]) < tol_res:
                    continue
                if abs(denom[k]) < tol_near:
                    logger.warning(
                        f"Near resonance {index} -> {k}: denominator "
                        f"{denom[k]:.3e}, keeping the term"
                    )
                    near.append(
                        {
                            "exponents": index.dense(m),
                            "target": int(k),
                            "denominator": float(denom[k]),
                        }
                    )
                    continue
                psi.setdefault(index, np.zeros(m))[k] = coef[k] / denom[k]
        psi = PolyMap(m, psi)
        if not len(psi):
            continue

        shift = identity + psi
        base = (
            psi.scale_targets(lam)
            - psi.jacobian_apply(linear, D)
            + G.compose(shift, D)
        )
        # each pass fixes at least one more degree
        theta = base
        for _ in range(D):
            theta = base - psi.jacobian_apply(theta, D)

        terms = {a: c for a, c in theta.terms.items() if a.order != d}
        for index, coef in theta.homogeneous(d).terms.items():
            if index in psi.terms:
                mask = psi.terms[index] != 0
                leftover = np.abs(coef[mask]).max(initial=0.0)
                if leftover > 1e-8 * max(1.0, np.abs(G.terms[index]).max()):
                    raise NumericError(
                        f"Monomial {index} not eliminated ({leftover:.3e})"
                    )
                coef = coef.copy()
                coef[mask] = 0.0
            terms[index] = coef
        G = PolyMap(m, terms)
        T = T.compose(shift, D)
        psi_all[d] = psi
        removed += sum(int(np.count_nonzero(c)) for c in psi.terms.values())

        logger.debug(f"Degree {d}: removed {len(psi)} monomial groups")

    result = NFResult(
        system=system,
        D=D,
        normal_form=PolySystem(lam, G),
        transformation=T,
        psi=psi_all,
        near_resonances=near,
        removed=removed,
    )
    result.residual, result.residual_per_degree = verify_conjugacy(
        system, result, D
    )
    return result


def verify_conjugacy(system, result, D):
    """ Coefficients of F(T(z)) - DT(z)·Θ(z) up to degree D.

    F is the vector field of ``system`` and Θ that of the normal form.

    Returns
    -------
    residual : float
        Largest coefficient discrepancy.

    per_degree : dict
        Largest discrepancy per degree.
    """
    T = result.transformation
    lhs = system.field_map().truncate(D).compose(T, D)
    rhs = T.jacobian_apply(result.normal_form.field_map().truncate(D), D)
    diff = (lhs - rhs).truncate(D)
    return diff.max_abs(), diff.per_degree_max()


def invert_transformation(T, x, tol=1e-15, max_iter=200):
    """ z with T(z) = x by fixed-point iteration z <- x - (T(z) - z). """
    x = np.asarray(x, dtype=float)
    nonlinear = T - PolyMap.identity(T.m)
    z = x.copy()
    for _ in range(max_iter):
        z_new = x - nonlinear.evaluate(z)
        if np.max(np.abs(z_new - z)) <= tol * max(1.0, np.max(np.abs(x))):
            return z_new
        z = z_new
    raise NumericError(f"Inverse transformation did not converge at {x}")


def flow_check(system, result, amplitudes=(0.02, 0.04, 0.08, 0.16),
               t_end=1.0, seed=0, n_out=21):
    """ Error of T(z(t)) against x(t) for shrinking initial data.

    x(t) integrates the system and z(t) the truncated normal form from
    z(0) = T^{-1}(x(0)); the error should scale like |x0|^{D+1}.

    Returns
    -------
    report : dict
        Errors per amplitude and the slope of log error against log |x0|.
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(system.dimension)
    direction /= np.linalg.norm(direction)
    t_eval = np.linspace(0.0, t_end, n_out)

    def _integrate(f, y0):
        sol = solve_ivp(
            lambda t, y: f(y),
            (0.0, t_end),
            y0,
            method="DOP853",
            t_eval=t_eval,
            rtol=1e-13,
            atol=1e-18,
        )
        if not sol.success:
            raise NumericError(f"Flow integration failed: {sol.message}")
        return sol.y.T

    errors = []
    for a in amplitudes:
        x0 = a * direction
        z0 = invert_transformation(result.transformation, x0)
        xs = _integrate(system.vector_field, x0)
        zs = _integrate(result.normal_form.vector_field, z0)
        err = max(
            np.linalg.norm(result.transformation.evaluate(z) - x)
            for z, x in zip(zs, xs)
        )
        errors.append(float(err))

    slope = float(np.polyfit(np.log(amplitudes), np.log(errors), 1)[0])
    return {
        "amplitudes": list(amplitudes),
        "errors": errors,
        "slope": slope,
        "bound": result.D + 0.8,
        "passed": slope >= result.D + 0.8,
        "t_end": t_end,
    }


@lru_cache(maxsize=None)
def _nse_basis(dim, lambda_max):
    lattice = get_lattice(dim, lambda_max)
    vectors, eigenvalues = [], []
    for i, k in enumerate(lattice.wavevectors):
        for b in real_basis(k):
            for phase in (1.0, 1j):
                vectors.append((i, phase * b))
                eigenvalues.append(float(lattice.ksq[i]))
    return lattice, tuple(vectors), np.array(eigenvalues)


def field_from_coordinates(x, dim, lambda_max):
    """ SpectralField with real coordinates x in the fiber basis. """
    lattice, vectors, _ = _nse_basis(dim, lambda_max)
    if len(x) != len(vectors):
        raise ValidationError(f"Expected {len(vectors)} coordinates")
    amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
    for xi, (i, v) in zip(x, vectors):
        amplitudes[i] += xi * v
    return SpectralField(lattice, amplitudes, copy=False)


def truncated_nse_coordinates(u):
    """ Real coordinates of a field in the fiber basis. """
    _, vectors, _ = _nse_basis(u.dim, u.lambda_max)
    return np.array(
        [np.vdot(v, u.amplitudes[i]).real for i, v in vectors]
    )


def truncated_nse_as_polysystem(lambda_max, dim):
    """ The Galerkin system as dx/dt + λx + φ(x) = 0 in real coordinates.

    Coordinates are the real and imaginary parts along an orthonormal real
    basis of the divergence-free fiber of each stored mode, so the
    eigenvalues are the shell integers with multiplicity 2 (dim - 1) per
    mode.
    """
    lattice, vectors, eigenvalues = _nse_basis(dim, lambda_max)
    m = len(vectors)
    basis = [field_from_coordinates(np.eye(m)[a], dim, lambda_max).amplitudes
             for a in range(m)]

    terms = {}
    for a in range(m):
        for b in range(a, m):
            value = lattice.bilinear(basis[a], basis[b])
            if a != b:
                value = value + lattice.bilinear(basis[b], basis[a])
            coef = truncated_nse_coordinates(
                SpectralField(lattice, value, copy=False)
            )
            coef[np.abs(coef) < 1e-15] = 0.0
            if np.any(coef):
                terms[MultiIndex.unit(a) + MultiIndex.unit(b)] = coef

    logger.debug(
        f"Truncated NSE on {lattice}: {m} coordinates, {len(terms)} "
        f"quadratic monomials"
    )
    return PolySystem(eigenvalues, PolyMap(m, terms))


def resonant_monomials(eigenvalues, D, tol=TOL_RES):
    """ All (α, k) with 2 <= |α| <= D and ⟨α, λ⟩ = λ_k. """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    m = len(eigenvalues)
    _check_size(m, D)
    return [
        (index, k)
        for d in range(2, D + 1)
        for index in indices_of_order(d, m)
        for k in range(m)
        if is_resonant(eigenvalues, index, k, tol)
    ]
