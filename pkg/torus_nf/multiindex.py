""" Sparse exponent sequences. """
from functools import lru_cache

from torus_nf.utils import ValidationError


class MultiIndex:
    """ Sparse exponent sequence ᾱ = (α_k), stored as sorted (k, α_k) pairs.

    ``order`` is |ᾱ| = Σ α_k and ``weight`` is ‖ᾱ‖ = Σ k α_k. Indices are
    shell integers for gauges and 0-based coordinates in polynomial systems.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, exponents=None):
        if exponents is None:
            exponents = {}
        elif not isinstance(exponents, dict):
            exponents = dict(exponents)

        items = []
        for k, a in exponents.items():
            if int(a) != a or a < 0:
                raise ValidationError(f"Invalid exponent {a} at index {k}")
            if a:
                items.append((int(k), int(a)))
        self._items = tuple(sorted(items))
        self._hash = hash(self._items)

    @classmethod
    def unit(cls, k, power=1):
        return cls({k: power})

    @classmethod
    def from_dense(cls, exponents):
        return cls(enumerate(exponents))

    def dense(self, m):
        """ Exponents as a length-m list. """
        out = [0] * m
        for k, a in self._items:
            if k >= m:
                raise ValidationError(f"{self} has index {k} >= {m}")
            out[k] = a
        return out

    def items(self):
        return self._items

    def indices(self):
        return tuple(k for k, _ in self._items)

    def get(self, k):
        for i, a in self._items:
            if i == k:
                return a
        return 0

    @property
    def order(self):
        return sum(a for _, a in self._items)

    @property
    def weight(self):
        return sum(k * a for k, a in self._items)

    def dot(self, values):
        """ ⟨ᾱ, λ⟩ for values indexable by the indices. """
        return sum(a * values[k] for k, a in self._items)

    def __add__(self, other):
        merged = dict(self._items)
        for k, a in other.items():
            merged[k] = merged.get(k, 0) + a
        return MultiIndex(merged)

    def __sub__(self, other):
        merged = dict(self._items)
        for k, a in other.items():
            merged[k] = merged.get(k, 0) - a
            if merged[k] < 0:
                raise ValidationError(f"{other} is not contained in {self}")
        return MultiIndex(merged)

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._items == other._items

    def __lt__(self, other):
        return (self.order, self._items) < (other.order, other._items)

    def __hash__(self):
        return self._hash

    def __bool__(self):
        return bool(self._items)

    def __repr__(self):
        body = ", ".join(f"{k}: {a}" for k, a in self._items)
        return f"MultiIndex({{{body}}})"


@lru_cache(maxsize=None)
def indices_with(order, weight, parts):
    """ All ᾱ over ``parts`` with |ᾱ| = order and ‖ᾱ‖ = weight.

    Bounded knapsack enumeration; ``parts`` is a sorted tuple of allowed
    positive indices.
    """

    def _walk(i, order, weight):
        if order == 0:
            if weight == 0:
                yield {}
            return
        if i < 0:
            return
        k = parts[i]
        for a in range(min(order, weight // k), -1, -1):
            for rest in _walk(i - 1, order - a, weight - a * k):
                if a:
                    rest = dict(rest)
                    rest[k] = a
                yield rest

    return tuple(
        MultiIndex(e) for e in _walk(len(parts) - 1, int(order), int(weight))
    )


@lru_cache(maxsize=None)
def indices_of_order(order, m):
    """ All dense exponents over m coordinates with |ᾱ| = order. """

    def _walk(i, order):
        if i == m - 1:
            yield {i: order}
            return
        for a in range(order, -1, -1):
            for rest in _walk(i + 1, order - a):
                out = dict(rest)
                out[i] = a
                yield out

    if m == 0:
        return ()
    return tuple(MultiIndex(e) for e in _walk(0, int(order)))
