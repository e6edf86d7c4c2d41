"""Closed-form reference objects for the 1-d Ornstein-Uhlenbeck target N(0, 1).

The generator ``L f = -f'' + x f'`` has eigenpairs ``(k, He_k / sqrt(k!))``
with probabilists' Hermite polynomials ``He_k``.  These helpers build an exact
``SpectralModel`` over a monomial dictionary, with Gauss-Hermite nodes as the
"training" measure so empirical inner products are exact for polynomials.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite_e as He
from numpy.polynomial import polynomial as Poly

from .dictionary import MonomialDictionary
from .koopman import SpectralModel


def hermite(k, x):
    """``He_k(x)`` (unnormalized)."""
    return He.hermeval(np.asarray(x, float), [0.0] * k + [1.0])


def hermite_monomial_coefficients(k, degree=None):
    """Monomial coefficients (constant first) of ``He_k / sqrt(k!)``."""
    c = He.herme2poly([0.0] * k + [1.0]) / math.sqrt(math.factorial(k))
    degree = k if degree is None else degree
    out = np.zeros(degree + 1)
    out[: c.size] = c
    return out


def gauss_hermite_measure(n_nodes=60):
    """Nodes and probability weights integrating polynomials of degree < 2n exactly against N(0,1)."""
    x, w = He.hermegauss(n_nodes)
    return x[:, None], w / w.sum()


def exact_ou_model(r, degree=None, n_nodes=60, ranks=None):
    """Exact rank-``r`` spectral model of the standard OU generator.

    ``ranks`` selects which Hermite indices to keep (default ``1..r``).
    """
    ks = list(range(1, r + 1)) if ranks is None else list(ranks)
    degree = max(ks) if degree is None else max(degree, max(ks))
    C = np.column_stack([hermite_monomial_coefficients(k, degree) for k in ks])
    X, w = gauss_hermite_measure(n_nodes)
    return SpectralModel.from_eigenpairs(
        MonomialDictionary(1, degree), C, np.array(ks, float), X, w, dt=1.0
    )


def ou_generator_apply(coefficients):
    """Apply ``L f = -f'' + x f'`` to a polynomial given by monomial coefficients."""
    c = np.asarray(coefficients, float)
    d1 = Poly.polyder(c, 1)
    d2 = Poly.polyder(c, 2)
    out = Poly.polysub(Poly.polymulx(d1), d2)
    res = np.zeros(max(c.size, out.size))
    res[: out.size] = out
    return res


def polyval(coefficients, x):
    return Poly.polyval(np.asarray(x, float), coefficients)
