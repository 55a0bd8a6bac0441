""" Initial data constructors. """
import logging

import numpy as np

from torus_nf.spectral import (
    SpectralField,
    get_lattice,
    helical_basis,
)
from torus_nf.utils import ValidationError, load_json

logger = logging.getLogger(__name__)

KINDS = (
    "file",
    "random_small",
    "beltrami",
    "invariant_family",
    "m_perp",
    "helical",
    "from_xi",
)


def _rescale(amplitudes, lattice, amplitude):
    u = SpectralField(lattice, amplitudes, copy=False)
    norm = u.norm()
    if norm == 0:
        raise ValidationError("Constructed initial data vanishes identically")
    if amplitude is None:
        return u
    return u * (amplitude / norm)


def random_small(lattice, amplitude=0.1, seed=0, shells=None):
    """ Seeded complex Gaussian modes, Leray-projected, rescaled to |u| = amplitude.

    Parameters
    ----------
    lattice : Lattice
        Truncation.

    amplitude : float, default 0.1
        Target H norm.

    seed : int, default 0
        Seed of the generator.

    shells : iterable of int, optional
        Restrict the support to these shells.
    """
    if not amplitude > 0:
        raise ValidationError(f"Amplitude must be positive, got {amplitude}")
    rng = np.random.default_rng(seed)
    shape = (lattice.size, lattice.dim)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if shells is not None:
        mask = np.isin(lattice.ksq, list(shells))
        if not mask.any():
            raise ValidationError(f"No modes on shells {shells}")
        z[~mask] = 0.0
    return _rescale(lattice.leray(z), lattice, amplitude)


def beltrami(lattice, shell=1, sign=1, amplitude=0.1, seed=0):
    """ Random curl eigenfield on one shell, curl u = sign * sqrt(shell) * u. """
    if lattice.dim != 3:
        raise ValidationError("Beltrami fields require dim=3")
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {sign}")
    if not lattice.is_representable(shell):
        raise ValidationError(f"Shell {shell} carries no modes in {lattice}")

    rng = np.random.default_rng(seed)
    amplitudes = np.zeros((lattice.size, 3), dtype=complex)
    for i in np.flatnonzero(lattice.shell_mask(shell)):
        hp, hm = helical_basis(lattice.wavevectors[i])
        c = rng.standard_normal() + 1j * rng.standard_normal()
        amplitudes[i] = c * (hp if sign > 0 else hm)
    return _rescale(amplitudes, lattice, amplitude)


def invariant_family(lattice, k=None, profile=None, direction=None):
    """ u(x) = a φ(k·x) with a ⟂ k; B(u, u) vanishes and u solves the heat
    equation mode by mode.

    ``profile`` maps harmonics j >= 1 to the complex coefficient of
    e^{ij k·x}; harmonics beyond the truncation are rejected.
    """
    dim = lattice.dim
    if k is None:
        k = (1, -1, 0)[:dim] if dim == 3 else (1, -1)
    k = np.asarray(k, dtype=int)
    if k.shape != (dim,) or not np.any(k):
        raise ValidationError(f"Invalid wavevector {k.tolist()} for dim={dim}")
    if direction is None:
        direction = np.ones(3) if dim == 3 else np.array([-k[1], k[0]])
    a = np.asarray(direction, dtype=float)
    if a.shape != (dim,) or not np.any(a):
        raise ValidationError(f"Invalid direction {a.tolist()}")
    if abs(np.dot(a, k)) > 1e-12 * np.linalg.norm(a):
        raise ValidationError(
            f"Direction {a.tolist()} is not orthogonal to k={k.tolist()}"
        )
    if profile is None:
        profile = {1: 0.05, 2: 0.03}

    modes = {}
    for j, c in sorted(profile.items()):
        j = int(j)
        if j < 1:
            raise ValidationError(f"Harmonic must be >= 1, got {j}")
        if j * j * int(np.dot(k, k)) > lattice.lambda_max:
            raise ValidationError(
                f"Harmonic {j} of k={k.tolist()} is outside {lattice}"
            )
        modes[tuple(j * k)] = complex(c) * a
    return SpectralField.from_modes(lattice, modes)


def m_perp(lattice, direction=None, shells=None, amplitude=0.1, seed=0):
    """ Random data with every mode k ⟂ a and amplitude collinear to a.

    The set of such fields is invariant under the flow and carries zero
    helicity.
    """
    dim = lattice.dim
    if direction is None:
        direction = (1, 1, 1)[:dim] if dim == 3 else (1, 1)
    a = np.asarray(direction, dtype=float)
    if a.shape != (dim,) or not np.any(a):
        raise ValidationError(f"Invalid direction {direction}")

    mask = np.abs(lattice.wavevectors @ a) < 1e-12 * np.linalg.norm(a)
    if shells is not None:
        mask &= np.isin(lattice.ksq, list(shells))
    if not mask.any():
        raise ValidationError(
            f"No modes orthogonal to {a.tolist()} on shells {shells}"
        )

    rng = np.random.default_rng(seed)
    c = rng.standard_normal(lattice.size) + 1j * rng.standard_normal(
        lattice.size
    )
    amplitudes = np.where(mask[:, None], c[:, None] * a[None, :], 0.0)
    return _rescale(amplitudes, lattice, amplitude)


def helical(lattice, k=(1, 0, 0), alpha=0.0, amplitude=0.1):
    """ Single-wavevector mixture a h+ + b h- with H/|u|² = alpha.

    With n = |k|² and r = alpha/sqrt(n), |a|² = (1+r)/2 and |b|² = (1-r)/2.
    The field is an exact solution with I/H = n whenever H does not vanish.
    """
    if lattice.dim != 3:
        raise ValidationError("Helical mixtures require dim=3")
    k = tuple(int(c) for c in k)
    n = sum(c * c for c in k)
    if not 1 <= n <= lattice.lambda_max:
        raise ValidationError(f"Wavevector {k} is outside {lattice}")
    r = alpha / np.sqrt(n)
    if abs(r) > 1:
        raise ValidationError(
            f"alpha={alpha} outside [-sqrt({n}), sqrt({n})]"
        )
    hp, hm = helical_basis(k)
    value = np.sqrt((1 + r) / 2) * hp + np.sqrt((1 - r) / 2) * hm
    u = SpectralField.from_modes(lattice, {k: value})
    return u * (amplitude / u.norm())


def from_file(path, lattice=None):
    """ SpectralField stored as JSON. """
    return SpectralField.from_dict(load_json(path), lattice=lattice)


def from_xi(path, order, lattice=None):
    """ Σ_{n <= order} q_n(0, ξ) for a NormalState stored as JSON. """
    from torus_nf.normal_form import NormalState, initial_state_from_xi

    xi = NormalState.from_dict(load_json(path), lattice=lattice)
    return initial_state_from_xi(xi, order)


def build(spec, dim, lambda_max, seed=0, order=4):
    """ Initial data from a config entry ``{"kind": ..., **params}``. """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    lattice = get_lattice(dim, lambda_max)

    logger.debug(f"Building initial data '{kind}' with {spec}")

    try:
        if kind == "file":
            return from_file(spec.pop("path"), lattice, **spec)
        if kind == "from_xi":
            return from_xi(spec.pop("path"), spec.pop("order", order), lattice)
        if kind == "random_small":
            return random_small(lattice, seed=spec.pop("seed", seed), **spec)
        if kind == "beltrami":
            return beltrami(lattice, seed=spec.pop("seed", seed), **spec)
        if kind == "m_perp":
            return m_perp(lattice, seed=spec.pop("seed", seed), **spec)
        if kind == "invariant_family":
            if "profile" in spec:
                spec["profile"] = _parse_profile(spec["profile"])
            return invariant_family(lattice, **spec)
        if kind == "helical":
            return helical(lattice, **spec)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Invalid parameters for '{kind}' data: {e}")

    raise ValidationError(
        f"Unknown initial data kind '{kind}', expected one of {KINDS}"
    )


def _parse_profile(profile):
    """ Harmonic -> coefficient, coefficients as numbers or [re, im]. """
    out = {}
    for j, c in dict(profile).items():
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1])
        out[int(j)] = complex(c)
    return out
