"""Scalars carrying a gradient with respect to the RIS phase vector.

``Graded`` supports the arithmetic used by the rate formulas, so the same
formula code evaluates plain floats or value-with-gradient pairs.
``TraceChain`` differentiates cyclic traces of matrices interleaved with
the phase matrix, its conjugate transpose and the estimator matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np


class Graded:
    """A real or complex value together with its gradient (an N-vector)."""

    __slots__ = ("value", "grad")
    __array_ufunc__ = None  # make numpy scalars defer to our reflected ops

    def __init__(self, value, grad):
        self.value = value
        self.grad = np.asarray(grad)

    @staticmethod
    def _split(other):
        if isinstance(other, Graded):
            return other.value, other.grad
        return other, 0.0

    def __add__(self, other):
        v, g = self._split(other)
        return Graded(self.value + v, self.grad + g)

    __radd__ = __add__

    def __sub__(self, other):
        v, g = self._split(other)
        return Graded(self.value - v, self.grad - g)

    def __rsub__(self, other):
        v, g = self._split(other)
        return Graded(v - self.value, g - self.grad)

    def __neg__(self):
        return Graded(-self.value, -self.grad)

    def __mul__(self, other):
        v, g = self._split(other)
        return Graded(self.value * v, self.grad * v + self.value * g)

    __rmul__ = __mul__

    def __truediv__(self, other):
        v, g = self._split(other)
        return Graded(self.value / v, (self.grad * v - self.value * g) / (v * v))

    def __rtruediv__(self, other):
        v, g = self._split(other)
        return Graded(v / self.value, (g * self.value - v * self.grad) / (self.value * self.value))

    def conj(self):
        return Graded(np.conj(self.value), np.conj(self.grad))

    @property
    def real(self):
        return Graded(float(np.real(self.value)), np.real(self.grad))

    def abs2(self):
        return Graded(abs(self.value) ** 2, 2 * np.real(np.conj(self.value) * self.grad))

    def log2p1(self):
        """log2(1 + value)."""
        return Graded(math.log2(1 + self.value), self.grad / (math.log(2) * (1 + self.value)))

    def __repr__(self):
        return f"Graded({self.value!r}, |grad|={np.linalg.norm(self.grad):.3g})"


def value_of(x):
    return x.value if isinstance(x, Graded) else x


def grad_of(x, n):
    return x.grad if isinstance(x, Graded) else np.zeros(n)


# Trace chains ---------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # "phi", "phi_h" or "ups"
    user: int = -1


PHI = Token("phi")
PHI_H = Token("phi_h")


def UPS(k: int) -> Token:
    return Token("ups", k)


class TraceChain:
    """Evaluate Tr{X_1 ... X_L} and its phase gradient.

    ``ups_matrix(k)`` returns the estimator matrix of user k and
    ``ups_grad(k, T)`` the derivative of Tr{T Upsilon_k}; both are
    supplied by the caller so the chain engine stays model agnostic.
    """

    def __init__(self, c: np.ndarray, ups_matrix=None, ups_grad=None):
        self.c = c
        self.ups_matrix = ups_matrix
        self.ups_grad = ups_grad

    def _matrix(self, item):
        """Dense matrix, or a 1-D vector standing for a diagonal matrix."""
        if isinstance(item, Token):
            if item.kind == "phi":
                return self.c
            if item.kind == "phi_h":
                return self.c.conj()
            return self.ups_matrix(item.user)
        return item

    def value(self, items) -> complex:
        mats = [self._matrix(x) for x in items]
        return complex(_trace(reduce(_mul, mats)))

    def evaluate(self, items) -> Graded:
        mats = [self._matrix(x) for x in items]
        L = len(mats)
        prefix = [None] * (L + 1)
        suffix = [None] * (L + 1)
        for j in range(L):
            prefix[j + 1] = mats[j] if prefix[j] is None else _mul(prefix[j], mats[j])
        for j in range(L - 1, -1, -1):
            suffix[j] = mats[j] if suffix[j + 1] is None else _mul(mats[j], suffix[j + 1])
        val = complex(_trace(prefix[L]))
        grad = np.zeros(len(self.c), complex)
        for j, item in enumerate(items):
            if not isinstance(item, Token):
                continue
            after, before = suffix[j + 1], prefix[j]
            if item.kind == "ups":
                if after is None and before is None:
                    rest = np.eye(mats[j].shape[0])
                elif after is None or before is None:
                    rest = _dense(after if before is None else before, mats[j].shape[0])
                else:
                    rest = _dense(_mul(after, before), mats[j].shape[0])
                grad += self.ups_grad(item.user, rest)
                continue
            if after is None and before is None:
                diag = np.ones(len(self.c), complex)
            elif after is None or before is None:
                diag = _diag(after if before is None else before)
            else:
                diag = _diag_of_product(after, before)
            if item.kind == "phi":
                grad += 1j * self.c * diag
            else:
                grad -= 1j * self.c.conj() * diag
        return Graded(val, grad)


def _mul(a, b):
    if a.ndim == 1 and b.ndim == 1:
        return a * b
    if a.ndim == 1:
        return a[:, None] * b
    if b.ndim == 1:
        return a * b[None, :]
    return a @ b


def _trace(a):
    return np.sum(a) if a.ndim == 1 else np.trace(a)


def _diag(a):
    return a if a.ndim == 1 else np.diagonal(a)


def _dense(a, n):
    return np.diag(a) if a.ndim == 1 else a


def _diag_of_product(a, b):
    if a.ndim == 1 or b.ndim == 1:
        return _diag(a) * _diag(b)
    return np.einsum("ij,ji->i", a, b)
