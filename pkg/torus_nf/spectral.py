""" Fourier representation of divergence-free fields on the periodic torus.

With period 2π and unit viscosity the Stokes operator A is diagonal with
eigenvalue |k|² on the mode e^{ik·x}. Fields live on a shell-complete
truncation 1 ≤ |k|² ≤ lambda_max and store one representative per conjugate
pair (the first nonzero coordinate of k is positive); û(−k) = conj(û(k)).

All norms and inner products are sums over the stored representatives, so a
single stored mode with |û| = 1 has unit norm.
"""
import hashlib
import itertools
import logging
import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import sparse

from torus_nf.utils import LatticeMismatchError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_MAX = {2: 8, 3: 10}


def _is_canonical(k):
    """ Whether k is the stored representative of the pair {k, -k}. """
    for c in k:
        if c != 0:
            return c > 0
    return False


@lru_cache(maxsize=None)
def is_representable(m, dim):
    """ Whether m is a sum of ``dim`` integer squares. """
    if m < 1:
        return False
    r = math.isqrt(m)
    return any(
        sum(c * c for c in k) == m
        for k in itertools.product(range(r + 1), repeat=dim)
    )


class GevreyParams(NamedTuple):
    """ Exponents of the norm |A^alpha exp(sigma A^{1/2}) u|. """

    alpha: float = 0.0
    sigma: float = 0.0


H_NORM = GevreyParams(0.0, 0.0)
V_NORM = GevreyParams(0.5, 0.0)


class Lattice:
    """ Shell-complete set of half-space wavevectors.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.

    lambda_max : int
        Cutoff, modes with 1 <= |k|^2 <= lambda_max are kept.
    """

    def __init__(self, dim, lambda_max):
        if dim not in (2, 3):
            raise ValidationError(f"dim must be 2 or 3, got {dim}")
        if int(lambda_max) != lambda_max or lambda_max < 1:
            raise ValidationError(
                f"lambda_max must be a positive integer, got {lambda_max}"
            )

        self.dim = int(dim)
        self.lambda_max = int(lambda_max)

        r = math.isqrt(self.lambda_max)
        ks = [
            k
            for k in itertools.product(range(-r, r + 1), repeat=self.dim)
            if 1 <= sum(c * c for c in k) <= self.lambda_max
            and _is_canonical(k)
        ]
        ks.sort(key=lambda k: (sum(c * c for c in k), k))

        self.wavevectors = np.array(ks, dtype=np.int64).reshape(-1, self.dim)
        self.wavevectors.setflags(write=False)
        self.ksq = (self.wavevectors ** 2).sum(axis=1)
        self.ksq.setflags(write=False)
        self.kabs = np.sqrt(self.ksq)
        self.kabs.setflags(write=False)
        self.shells = tuple(sorted(set(self.ksq.tolist())))
        self._index = {k: i for i, k in enumerate(ks)}
        self._triads = None

        logger.debug(
            f"Built lattice dim={self.dim}, lambda_max={self.lambda_max}: "
            f"{self.size} modes on shells {self.shells}"
        )

    def __repr__(self):
        return f"Lattice(dim={self.dim}, lambda_max={self.lambda_max})"

    def __eq__(self, other):
        return (
            isinstance(other, Lattice)
            and self.dim == other.dim
            and self.lambda_max == other.lambda_max
        )

    def __hash__(self):
        return hash((self.dim, self.lambda_max))

    def __reduce__(self):
        return get_lattice, (self.dim, self.lambda_max)

    @property
    def size(self):
        """ Number of stored modes. """
        return self.wavevectors.shape[0]

    @property
    def full_wavevectors(self):
        """ Stored wavevectors followed by their negatives. """
        return np.concatenate([self.wavevectors, -self.wavevectors])

    def index(self, k):
        """ Index of the stored mode k and whether -k was given. """
        k = tuple(int(c) for c in k)
        if k in self._index:
            return self._index[k], False
        neg = tuple(-c for c in k)
        if neg in self._index:
            return self._index[neg], True
        raise KeyError(f"{k} is not part of {self}")

    def shell_mask(self, m):
        """ Boolean mask of modes with |k|^2 = m. """
        return self.ksq == m

    def is_representable(self, m):
        """ Whether shell m carries modes in this truncation. """
        return m in self.shells

    @property
    def triads(self):
        """ Interacting pairs (p, q) with p + q on the stored half-space.

        Returns the output mode index, the indices of p and q into
        ``full_wavevectors`` and a sparse matrix summing contributions per
        output mode.
        """
        if self._triads is None:
            kf = self.full_wavevectors
            lookup = {tuple(k): i for i, k in enumerate(kf.tolist())}
            out_idx, p_idx, q_idx = [], [], []
            for o, k in enumerate(self.wavevectors):
                for a, q in enumerate((k - kf).tolist()):
                    b = lookup.get(tuple(q))
                    if b is not None:
                        out_idx.append(o)
                        p_idx.append(a)
                        q_idx.append(b)

            n = len(out_idx)
            scatter = sparse.csr_matrix(
                (np.ones(n), (out_idx, np.arange(n))), shape=(self.size, n)
            )
            self._triads = (
                np.array(out_idx, dtype=np.int64),
                np.array(p_idx, dtype=np.int64),
                np.array(q_idx, dtype=np.int64),
                scatter,
            )
            logger.debug(f"{self}: {n} triad interactions")

        return self._triads

    def leray(self, amplitudes):
        """ Remove the component along k from every mode. """
        k = self.wavevectors
        div = np.einsum("...ij,ij->...i", amplitudes, k)
        return amplitudes - (div / self.ksq)[..., None] * k

    def bilinear(self, a, b):
        """ Projected truncated convolution P[(a·∇)b] on amplitude arrays. """
        _, p_idx, q_idx, scatter = self.triads
        af = np.concatenate([a, a.conj()])
        bf = np.concatenate([b, b.conj()])
        kf = self.full_wavevectors
        coupling = 1j * np.einsum("ij,ij->i", af[p_idx], kf[q_idx])
        return self.leray(scatter @ (coupling[:, None] * bf[q_idx]))

    def curl(self, amplitudes):
        """ Mode-wise ik × û, scalar in 2D. """
        k = self.wavevectors
        if self.dim == 3:
            return 1j * np.cross(k, amplitudes)
        return 1j * (k[:, 0] * amplitudes[:, 1] - k[:, 1] * amplitudes[:, 0])


@lru_cache(maxsize=None)
def get_lattice(dim, lambda_max):
    """ Cached lattice for a truncation. """
    return Lattice(dim, lambda_max)


class SpectralField:
    """ Truncated divergence-free zero-mean vector field. """

    __slots__ = ("lattice", "amplitudes")

    def __init__(self, lattice, amplitudes, copy=True):
        if copy:
            amplitudes = np.array(amplitudes, dtype=complex)
        else:
            amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (lattice.size, lattice.dim):
            raise ValidationError(
                f"Amplitudes of shape {amplitudes.shape} do not match "
                f"{lattice} ({lattice.size} modes)"
            )
        amplitudes.setflags(write=False)
        self.lattice = lattice
        self.amplitudes = amplitudes

    @classmethod
    def zeros(cls, lattice):
        """ Zero field. """
        return cls(lattice, np.zeros((lattice.size, lattice.dim)), copy=False)

    @classmethod
    def from_modes(cls, lattice, modes, project=False):
        """ Field from a mapping wavevector -> amplitude vector.

        Wavevectors in the negative half-space are conjugated onto their
        stored representative.
        """
        amplitudes = np.zeros((lattice.size, lattice.dim), dtype=complex)
        for k, value in modes.items():
            try:
                idx, conj = lattice.index(k)
            except KeyError as e:
                raise ValidationError(str(e))
            value = np.asarray(value, dtype=complex)
            amplitudes[idx] = value.conj() if conj else value
        if project:
            amplitudes = lattice.leray(amplitudes)
        return cls(lattice, amplitudes, copy=False)

    def __repr__(self):
        return (
            f"SpectralField({self.lattice!r}, |u|={self.norm():.6g}, "
            f"shells={self.support()})"
        )

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def lambda_max(self):
        return self.lattice.lambda_max

    def _check(self, other):
        if not isinstance(other, SpectralField):
            raise TypeError(f"Expected SpectralField, got {type(other)}")
        if other.lattice != self.lattice:
            raise LatticeMismatchError(
                f"Cannot combine fields on {self.lattice} and {other.lattice}"
            )

    def _new(self, amplitudes):
        return SpectralField(self.lattice, amplitudes, copy=False)

    def __add__(self, other):
        self._check(other)
        return self._new(self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        self._check(other)
        return self._new(self.amplitudes - other.amplitudes)

    def __neg__(self):
        return self._new(-self.amplitudes)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._new(self.amplitudes * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.amplitudes / scalar)

    def scale_modes(self, factors):
        """ Multiply mode i by factors[i]. """
        return self._new(self.amplitudes * np.asarray(factors)[:, None])

    def inner(self, other):
        """ H inner product Re Σ û·conj(v̂). """
        self._check(other)
        return float(np.vdot(other.amplitudes, self.amplitudes).real)

    def norm(self, alpha=0.0, sigma=0.0):
        """ Gevrey norm (Σ |k|^{4α} e^{2σ|k|} |û(k)|²)^{1/2}. """
        return norms(self, GevreyParams(alpha, sigma))

    def shell_project(self, m):
        return shell_project(self, m)

    def stokes(self, alpha=1.0):
        return stokes_apply(self, alpha)

    def support(self, tol=0.0):
        """ Shells carrying modes with amplitude above tol. """
        mag = np.abs(self.amplitudes).max(axis=1)
        return tuple(sorted(set(self.lattice.ksq[mag > tol].tolist())))

    def is_zero(self):
        return not np.any(self.amplitudes)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.amplitudes)))

    def max_divergence(self):
        """ max |k·û(k)| over stored modes. """
        div = np.einsum("ij,ij->i", self.amplitudes, self.lattice.wavevectors)
        return float(np.abs(div).max(initial=0.0))

    def validate(self, tol=1e-10):
        """ Check incompressibility and finiteness. """
        if not self.is_finite():
            raise ValidationError("Field contains non-finite amplitudes")
        scale = max(1.0, float(np.abs(self.amplitudes).max(initial=0.0)))
        if self.max_divergence() > tol * scale * math.sqrt(self.lambda_max):
            raise ValidationError(
                f"Field is not divergence-free (max |k·û| = "
                f"{self.max_divergence():.3e})"
            )
        return self

    def digest(self):
        """ Content hash, used as memo key. """
        h = hashlib.sha256()
        h.update(f"{self.dim}:{self.lambda_max}:".encode())
        h.update(np.ascontiguousarray(self.amplitudes).tobytes())
        return h.hexdigest()

    def to_dict(self):
        """ Serializable representation of the nonzero modes. """
        modes = []
        for k, a in zip(self.lattice.wavevectors, self.amplitudes):
            if np.any(a):
                modes.append(
                    {
                        "k": k.tolist(),
                        "re": a.real.tolist(),
                        "im": a.imag.tolist(),
                    }
                )
        return {"dim": self.dim, "lambda_max": self.lambda_max, "modes": modes}

    @classmethod
    def from_dict(cls, data, lattice=None, tol=1e-10):
        """ Parse and validate the serialized representation. """
        try:
            dim = int(data["dim"])
            lambda_max = int(data["lambda_max"])
            modes = data["modes"]
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed field data: {e}")

        if lattice is None:
            lattice = get_lattice(dim, lambda_max)
        elif (dim, lambda_max) != (lattice.dim, lattice.lambda_max):
            raise LatticeMismatchError(
                f"Field with dim={dim}, lambda_max={lambda_max} does not "
                f"match {lattice}"
            )

        amplitudes = np.zeros((lattice.size, dim), dtype=complex)
        seen = set()
        for mode in modes:
            try:
                k = tuple(int(c) for c in mode["k"])
                re = np.asarray(mode["re"], dtype=float)
                im = np.asarray(mode["im"], dtype=float)
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"Malformed mode entry {mode}: {e}")
            if len(k) != dim or re.shape != (dim,) or im.shape != (dim,):
                raise ValidationError(f"Mode {k} has wrong dimension")
            ksq = sum(c * c for c in k)
            if not 1 <= ksq <= lambda_max:
                raise ValidationError(
                    f"Mode {k} outside truncation 1 <= |k|^2 <= {lambda_max}"
                )
            if not _is_canonical(k):
                raise ValidationError(
                    f"Mode {k} is not a half-space representative"
                )
            if k in seen:
                raise ValidationError(f"Duplicate mode {k}")
            seen.add(k)
            amplitudes[lattice.index(k)[0]] = re + 1j * im

        return cls(lattice, amplitudes, copy=False).validate(tol)


class ScalarField:
    """ Truncated zero-mean scalar field, e.g. 2D vorticity. """

    __slots__ = ("lattice", "amplitudes")

    def __init__(self, lattice, amplitudes):
        amplitudes = np.array(amplitudes, dtype=complex)
        if amplitudes.shape != (lattice.size,):
            raise ValidationError(
                f"Scalar amplitudes of shape {amplitudes.shape} do not match "
                f"{lattice}"
            )
        amplitudes.setflags(write=False)
        self.lattice = lattice
        self.amplitudes = amplitudes

    def inner(self, other):
        return float(np.vdot(other.amplitudes, self.amplitudes).real)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


def stokes_apply(u, alpha=1.0):
    """ A^alpha u, diagonal with factor |k|^{2 alpha}. """
    return u.scale_modes(u.lattice.ksq.astype(float) ** alpha)


def leray_project(v):
    """ Orthogonal projection onto divergence-free fields. """
    return SpectralField(v.lattice, v.lattice.leray(v.amplitudes), copy=False)


def bilinear_B(u, v):
    """ B(u, v) = P[(u·∇)v], Galerkin-truncated. """
    u._check(v)
    return SpectralField(
        u.lattice, u.lattice.bilinear(u.amplitudes, v.amplitudes), copy=False
    )


def shell_project(u, m):
    """ R_m u, zero if no mode has |k|^2 = m. """
    return u.scale_modes(u.lattice.shell_mask(m).astype(float))


def norms(u, params=H_NORM):
    """ Gevrey norm |A^alpha exp(sigma A^{1/2}) u|. """
    alpha, sigma = params
    if alpha < 0 or sigma < 0:
        raise ValidationError(f"Gevrey exponents must be >= 0, got {params}")
    weights = u.lattice.ksq ** (2 * alpha) * np.exp(2 * sigma * u.lattice.kabs)
    mag2 = (np.abs(u.amplitudes) ** 2).sum(axis=1)
    return float(np.sqrt(np.dot(weights, mag2)))


def curl(u):
    """ Vorticity; a SpectralField in 3D and a ScalarField in 2D. """
    w = u.lattice.curl(u.amplitudes)
    if u.dim == 3:
        return SpectralField(u.lattice, w, copy=False)
    return ScalarField(u.lattice, w)


def inner(u, v):
    return u.inner(v)


def energy(u):
    """ Kinetic energy ½|u|². """
    return 0.5 * u.norm() ** 2


def enstrophy(u):
    """ |ω|² = ‖u‖². """
    return u.norm(alpha=0.5) ** 2


def helicity(u):
    """ ⟨u, curl u⟩, zero in 2D. """
    if u.dim == 2:
        return 0.0
    return u.inner(curl(u))


def dirichlet_quotient(u):
    """ λ = ‖u‖²/|u|². """
    return enstrophy(u) / u.norm() ** 2


def helical_basis(k):
    """ Unit curl eigenvectors (h+, h-) at wavevector k (3D).

    ik × h± = ±|k| h±.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValidationError("Helical basis requires a 3D wavevector")
    khat = k / np.linalg.norm(k)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(k)))] = 1.0
    e = ref - np.dot(ref, khat) * khat
    e /= np.linalg.norm(e)
    f = np.cross(khat, e)
    return (e + 1j * f) / np.sqrt(2), (e - 1j * f) / np.sqrt(2)


def real_basis(k):
    """ Real orthonormal basis of the plane orthogonal to k. """
    k = np.asarray(k, dtype=float)
    if k.shape == (2,):
        return [np.array([-k[1], k[0]]) / np.linalg.norm(k)]
    hp, _ = helical_basis(k)
    return [np.sqrt(2) * hp.real, np.sqrt(2) * hp.imag]


def to_physical(u, n):
    """ Values of u on the uniform grid with n points per direction.

    Returns an array of shape (dim,) + (n,) * dim.
    """
    lattice = u.lattice
    if n <= 2 * math.isqrt(lattice.lambda_max):
        raise ValidationError(f"Grid of {n} points aliases {lattice}")
    coeffs = np.zeros((lattice.dim,) + (n,) * lattice.dim, dtype=complex)
    for k, a in zip(lattice.wavevectors, u.amplitudes):
        coeffs[(slice(None),) + tuple(k % n)] = a
        coeffs[(slice(None),) + tuple(-k % n)] = a.conj()
    axes = tuple(range(1, lattice.dim + 1))
    return np.fft.ifftn(coeffs, axes=axes).real * n ** lattice.dim


def from_physical(values, lattice):
    """ Truncated Fourier coefficients of grid values, without projection.

    ``values`` has shape (dim,) + (n,) * dim; the result is generally not
    divergence-free, apply ``leray_project`` for that.
    """
    n = values.shape[1]
    axes = tuple(range(1, lattice.dim + 1))
    coeffs = np.fft.fftn(values, axes=axes) / n ** lattice.dim
    amplitudes = np.array(
        [coeffs[(slice(None),) + tuple(k % n)] for k in lattice.wavevectors]
    ).reshape(lattice.size, lattice.dim)
    return SpectralField(lattice, amplitudes, copy=False)
