""" Exact algebra of Σ_m P_m(t) e^{-mt} with field-valued polynomials P_m. """
import logging

import numpy as np

from torus_nf.spectral import SpectralField, get_lattice
from torus_nf.utils import LatticeMismatchError, ValidationError

logger = logging.getLogger(__name__)


class PolyField:
    """ Polynomial c_0 + c_1 t + ... + c_d t^d with SpectralField coefficients.

    Trailing zero coefficients are dropped; the zero polynomial keeps a
    single zero coefficient.
    """

    __slots__ = ("lattice", "coeffs")

    def __init__(self, lattice, coeffs):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[1:] != (lattice.size, lattice.dim):
            raise ValidationError(
                f"Coefficients of shape {coeffs.shape} do not match {lattice}"
            )
        nonzero = np.flatnonzero(np.any(coeffs != 0, axis=(1, 2)))
        top = nonzero[-1] + 1 if nonzero.size else 1
        coeffs = coeffs[: max(top, 1)]
        if coeffs.shape[0] == 0:
            coeffs = np.zeros((1, lattice.size, lattice.dim), dtype=complex)
        coeffs.setflags(write=False)
        self.lattice = lattice
        self.coeffs = coeffs

    @classmethod
    def zero(cls, lattice):
        return cls(lattice, np.zeros((1, lattice.size, lattice.dim)))

    @classmethod
    def constant(cls, field):
        return cls(field.lattice, field.amplitudes[None])

    @classmethod
    def from_fields(cls, fields):
        fields = list(fields)
        return cls(fields[0].lattice, [f.amplitudes for f in fields])

    def __repr__(self):
        return f"PolyField(degree={self.degree}, {self.lattice!r})"

    @property
    def degree(self):
        """ Degree, 0 for constants and the zero polynomial. """
        return self.coeffs.shape[0] - 1

    def is_zero(self):
        return not np.any(self.coeffs)

    def coefficient(self, i):
        if i > self.degree:
            return SpectralField.zeros(self.lattice)
        return SpectralField(self.lattice, self.coeffs[i])

    def _check(self, other):
        if other.lattice != self.lattice:
            raise LatticeMismatchError(
                f"Cannot combine polynomials on {self.lattice} and "
                f"{other.lattice}"
            )

    def __add__(self, other):
        self._check(other)
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        out = np.zeros((n,) + self.coeffs.shape[1:], dtype=complex)
        out[: self.coeffs.shape[0]] += self.coeffs
        out[: other.coeffs.shape[0]] += other.coeffs
        return PolyField(self.lattice, out)

    def __neg__(self):
        return PolyField(self.lattice, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return PolyField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def scale_modes(self, factors):
        """ Apply a diagonal operator mode-wise to every coefficient. """
        return PolyField(
            self.lattice, self.coeffs * np.asarray(factors)[None, :, None]
        )

    def shell_project(self, m):
        return self.scale_modes(self.lattice.shell_mask(m).astype(float))

    def derivative(self):
        if self.degree == 0:
            return PolyField.zero(self.lattice)
        powers = np.arange(1, self.degree + 1)[:, None, None]
        return PolyField(self.lattice, self.coeffs[1:] * powers)

    def integral(self):
        """ Antiderivative vanishing at t = 0. """
        n = self.coeffs.shape[0]
        out = np.zeros((n + 1,) + self.coeffs.shape[1:], dtype=complex)
        out[1:] = self.coeffs / np.arange(1, n + 1)[:, None, None]
        return PolyField(self.lattice, out)

    def evaluate_array(self, t):
        """ Horner evaluation returning the raw amplitude array. """
        out = self.coeffs[-1].copy()
        for c in self.coeffs[-2::-1]:
            out *= t
            out += c
        return out

    def evaluate(self, t):
        return SpectralField(self.lattice, self.evaluate_array(t), copy=False)

    def max_abs(self):
        return float(np.abs(self.coeffs).max())

    def to_dict(self):
        return {
            "degree": self.degree,
            "coeffs": [
                self.coefficient(i).to_dict() for i in range(self.degree + 1)
            ],
        }

    @classmethod
    def from_dict(cls, data, lattice=None):
        try:
            fields = [
                SpectralField.from_dict(c, lattice=lattice)
                for c in data["coeffs"]
            ]
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed polynomial data: {e}")
        if not fields:
            raise ValidationError("Polynomial without coefficients")
        return cls.from_fields(fields)


def poly_bilinear(p, q):
    """ Coefficient-wise B(p, q): degrees add. """
    p._check(q)
    lattice = p.lattice
    out = np.zeros(
        (p.degree + q.degree + 1, lattice.size, lattice.dim), dtype=complex
    )
    for a, pa in enumerate(p.coeffs):
        if not np.any(pa):
            continue
        for b, qb in enumerate(q.coeffs):
            if np.any(qb):
                out[a + b] += lattice.bilinear(pa, qb)
    return PolyField(lattice, out)


class ExpPolyField:
    """ Finite sum Σ_m P_m(t) e^{-mt}, keyed by decay index m >= 0. """

    __slots__ = ("lattice", "terms")

    def __init__(self, lattice, terms=None):
        self.lattice = lattice
        self.terms = {}
        for m, p in sorted((terms or {}).items()):
            if int(m) != m or m < 0:
                raise ValidationError(f"Invalid decay index {m}")
            if p.lattice != lattice:
                raise LatticeMismatchError(
                    f"Term {m} lives on {p.lattice}, expected {lattice}"
                )
            if not p.is_zero():
                self.terms[int(m)] = p

    def __repr__(self):
        body = ", ".join(f"{m}: deg {p.degree}" for m, p in self.terms.items())
        return f"ExpPolyField({{{body}}})"

    @property
    def max_index(self):
        return max(self.terms, default=0)

    def term(self, m):
        return self.terms.get(m, PolyField.zero(self.lattice))

    def __add__(self, other):
        terms = dict(self.terms)
        for m, p in other.terms.items():
            terms[m] = terms[m] + p if m in terms else p
        return ExpPolyField(self.lattice, terms)

    def __neg__(self):
        return ExpPolyField(
            self.lattice, {m: -p for m, p in self.terms.items()}
        )

    def __sub__(self, other):
        return self + (-other)

    def restrict(self, m):
        """ Single-term ExpPolyField {m: P_m}. """
        return ExpPolyField(self.lattice, {m: self.term(m)})

    def truncate(self, max_index):
        return ExpPolyField(
            self.lattice,
            {m: p for m, p in self.terms.items() if m <= max_index},
        )

    def evaluate_array(self, t):
        out = np.zeros((self.lattice.size, self.lattice.dim), dtype=complex)
        for m, p in self.terms.items():
            out += np.exp(-m * t) * p.evaluate_array(t)
        return out

    def evaluate(self, t):
        return SpectralField(self.lattice, self.evaluate_array(t), copy=False)

    def to_dict(self):
        return {
            "dim": self.lattice.dim,
            "lambda_max": self.lattice.lambda_max,
            "terms": [
                dict(m=m, **p.to_dict()) for m, p in self.terms.items()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            lattice = get_lattice(int(data["dim"]), int(data["lambda_max"]))
            terms = {
                int(t["m"]): PolyField.from_dict(t, lattice=lattice)
                for t in data["terms"]
            }
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed exponential polynomial: {e}")
        return cls(lattice, terms)


def ep_eval(f, t):
    """ Σ_m P_m(t) e^{-mt}. """
    return f.evaluate(t)


def ep_derivative(f):
    """ Term-wise (P_m' - m P_m) e^{-mt}. """
    return ExpPolyField(
        f.lattice,
        {m: p.derivative() - m * p for m, p in f.terms.items()},
    )


def ep_bilinear(f, g, index=None):
    """ B(f, g) as an ExpPolyField; decay indices and degrees add.

    If ``index`` is given only the term with that decay index is computed.
    """
    if f.lattice != g.lattice:
        raise LatticeMismatchError(
            f"Cannot combine {f.lattice} and {g.lattice}"
        )
    terms = {}
    for m, p in f.terms.items():
        for n, q in g.terms.items():
            if index is not None and m + n != index:
                continue
            prod = poly_bilinear(p, q)
            terms[m + n] = terms[m + n] + prod if m + n in terms else prod
    return ExpPolyField(f.lattice, terms)


def solve_level(j, xi_j, beta, tol=1e-12):
    """ Polynomial solution of q' + (A - j) q + β = 0 with R_j q(0) = ξ_j.

    Parameters
    ----------
    j : int
        Level (decay index), j >= 1.

    xi_j : SpectralField or None
        Data on the shell |k|^2 = j; ignored (zero) if the shell is empty.

    beta : PolyField
        Polynomial forcing at decay index j.

    Returns
    -------
    q : PolyField
        ξ_j - ∫_0^t R_j β + Σ_n (-1)^{n+1} (A - j)^{-n-1} (d/dt)^n (I - R_j) β
    """
    if j < 1:
        raise ValidationError(f"Level must be >= 1, got {j}")

    lattice = beta.lattice
    on_shell = lattice.shell_mask(j)

    if xi_j is None:
        xi_j = SpectralField.zeros(lattice)
    elif xi_j.lattice != lattice:
        raise LatticeMismatchError(f"ξ_{j} and β live on different lattices")
    off = np.abs(xi_j.amplitudes[~on_shell]).max(initial=0.0)
    if off > tol * max(1.0, np.abs(xi_j.amplitudes).max(initial=0.0)):
        raise ValidationError(
            f"ξ_{j} is not supported on the shell |k|^2 = {j} "
            f"(off-shell amplitude {off:.3e})"
        )

    shell_part = beta.shell_project(j)
    off_part = beta - shell_part

    q = PolyField.constant(xi_j) - shell_part.integral()

    resolvent = np.zeros(lattice.size)
    resolvent[~on_shell] = 1.0 / (lattice.ksq[~on_shell] - j)
    deriv = off_part
    for n in range(off_part.degree + 1):
        q = q + (-1) ** (n + 1) * deriv.scale_modes(resolvent ** (n + 1))
        deriv = deriv.derivative()

    return q


def level_residual(j, q, beta):
    """ max coefficient of q' + (A - j) q + β. """
    lattice = q.lattice
    res = q.derivative() + q.scale_modes(lattice.ksq - j) + beta
    return res.max_abs()
