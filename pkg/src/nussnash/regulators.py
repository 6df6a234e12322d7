"""State regulators with Nussbaum gains.

Every control law here acts on one scalar channel.  The sign of the input
gain is never an argument: the Nussbaum gain ``N0(k)`` sweeps through both
signs as ``k`` grows until the loop stabilises.

The laws are plain arithmetic compiled with numba, so they accept Python
floats, numpy arrays (element-wise) and can be called from other compiled
code.  ``kind`` selects the Nussbaum function: 0 for ``k^2 sin k``,
1 for ``k^2 cos k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

NUSSBAUM_KINDS = {"sin": 0, "cos": 1}


def nussbaum_code(kind) -> int:
    if isinstance(kind, str):
        try:
            return NUSSBAUM_KINDS[kind]
        except KeyError:
            raise ValueError(f"unknown Nussbaum kind {kind!r}; choose from {sorted(NUSSBAUM_KINDS)}") from None
    if kind not in (0, 1):
        raise ValueError(f"unknown Nussbaum kind code {kind!r}")
    return int(kind)


@njit(cache=True)
def nussbaum(k, kind=0):
    if kind == 1:
        return k * k * np.cos(k)
    return k * k * np.sin(k)


@njit(cache=True)
def nussbaum_prime(k, kind=0):
    if kind == 1:
        return 2.0 * k * np.cos(k) - k * k * np.sin(k)
    return 2.0 * k * np.sin(k) + k * k * np.cos(k)


def nussbaum_integral(q, kind="sin"):
    """Closed form of the integral of ``N0`` over ``[0, q]``."""
    q = np.asarray(q, dtype=float)
    if nussbaum_code(kind) == 1:
        return q * q * np.sin(q) + 2 * q * np.cos(q) - 2 * np.sin(q)
    return -q * q * np.cos(q) + 2 * q * np.sin(q) + 2 * np.cos(q) - 2


@dataclass(frozen=True)
class NussbaumFn:
    kind: str = "sin"

    def __post_init__(self):
        nussbaum_code(self.kind)

    @property
    def code(self) -> int:
        return nussbaum_code(self.kind)

    def __call__(self, k):
        return nussbaum(k, self.code)

    def derivative(self, k):
        return nussbaum_prime(k, self.code)

    def integral(self, q):
        return nussbaum_integral(q, self.kind)


@njit(cache=True)
def first_order_control(x, y, ydot, k, theta_hat, phi, kind=0):
    """Regulator for ``dx/dt = b u + phi(x) theta``; returns ``(u, dk, dtheta_hat)``."""
    e = x - y
    w = e + phi * theta_hat
    return nussbaum(k, kind) * w, e * w, phi * e


@njit(cache=True)
def first_order_control_no_uncertainty(x, y, k, kind=0):
    """Regulator for ``dx/dt = b u``; returns ``(u, dk)`` with ``dk >= 0``."""
    e = x - y
    return nussbaum(k, kind) * e, e * e


@njit(cache=True)
def second_order_control(x, y, v, ydot, xdot, k, theta_hat, phi, kind=0):
    """Regulator for the chain ``dx/dt = v, dv/dt = b u + phi(x) theta``.

    ``xdot`` is the measured velocity and ``ydot`` the reference rate.
    Returns ``(u, dk, dtheta_hat)``.
    """
    xi = x - y + v
    w = xi + phi * theta_hat + (xdot - ydot)
    return nussbaum(k, kind) * w, xi * w, phi * xi


@njit(cache=True)
def backstepping_control(x, y, ydot, v, k1, k2, theta_hat1, theta_bar1, theta_bar2, b_bar1,
                         phi1, dphi1_dx, phi2, kind=0):
    """Two-stage Nussbaum backstepping for ``dx/dt = b1 v + phi1 theta1, dv/dt = b2 u + phi2 theta2``.

    The first stage builds a virtual velocity ``alpha`` steering ``x`` to
    ``y``; the second drives ``beta = v - alpha`` to zero, absorbing the
    unknown ``b1``, ``theta1`` and ``theta2`` through adaptive estimates.

    Returns ``(u, alpha, beta, dk1, dtheta_hat1, dk2, dtheta_bar1,
    dtheta_bar2, db_bar1)``.
    """
    e = x - y
    w1 = e + phi1 * theta_hat1
    n1 = nussbaum(k1, kind)
    alpha = n1 * w1
    dk1 = e * w1
    dtheta_hat1 = phi1 * e
    beta = v - alpha

    psi1 = -n1 * (phi1 + dphi1_dx * theta_hat1 * phi1)
    psi2 = -nussbaum_prime(k1, kind) * e * w1 * w1 - n1 * (-ydot + phi1 * phi1 * e)
    psi3 = -n1 * (dphi1_dx * theta_hat1 + 1.0) * v

    w2 = beta + phi2 * theta_bar2 + psi1 * theta_bar1 + psi2 + psi3 * b_bar1
    u = nussbaum(k2, kind) * w2
    return u, alpha, beta, dk1, dtheta_hat1, beta * w2, beta * psi1, beta * phi2, beta * psi3


# --- known nonlinearities ---------------------------------------------------

class Phi:
    """Known regressor ``phi(x, v)`` of one player, evaluated per component.

    ``encode`` returns the compiled-kernel form ``(coef, source, from_v)``
    meaning ``phi[c] = coef[c] * (v if from_v[c] else x)[source[c]]``, or
    ``None`` when the function has no such form.
    """

    def __call__(self, x, v=None) -> np.ndarray:
        raise NotImplementedError

    def dx_diag(self, x, v=None) -> np.ndarray:
        """Diagonal of the Jacobian with respect to ``x``."""
        raise NotImplementedError

    def encode(self, dim: int):
        return None

    def describe(self) -> dict:
        return {"name": "custom"}


@dataclass(frozen=True)
class Zero(Phi):
    def __call__(self, x, v=None):
        return np.zeros_like(np.asarray(x, dtype=float))

    def dx_diag(self, x, v=None):
        return np.zeros_like(np.asarray(x, dtype=float))

    def encode(self, dim):
        return np.zeros(dim), np.arange(dim), np.zeros(dim, dtype=bool)

    def describe(self):
        return {"name": "zero"}


@dataclass(frozen=True)
class Linear(Phi):
    """``phi(x) = c x`` component-wise."""

    c: float

    def __call__(self, x, v=None):
        return self.c * np.asarray(x, dtype=float)

    def dx_diag(self, x, v=None):
        return np.full(np.shape(x), float(self.c))

    def encode(self, dim):
        return np.full(dim, float(self.c)), np.arange(dim), np.zeros(dim, dtype=bool)

    def describe(self):
        return {"name": "linear", "c": self.c}


@dataclass(frozen=True)
class ComponentLinear(Phi):
    """``phi(x, v) = [c x[index], c v[index]]`` for two-dimensional actions."""

    c: float
    index: int = 1

    def _check(self, x):
        if np.shape(x) != (2,):
            raise ValueError("component_linear is defined for two-dimensional actions")

    def __call__(self, x, v=None):
        self._check(x)
        v = np.zeros(2) if v is None else np.asarray(v, dtype=float)
        return self.c * np.array([x[self.index], v[self.index]], dtype=float)

    def dx_diag(self, x, v=None):
        self._check(x)
        return np.array([self.c if self.index == 0 else 0.0, 0.0])

    def encode(self, dim):
        if dim != 2:
            raise ValueError("component_linear is defined for two-dimensional actions")
        return np.full(2, float(self.c)), np.array([self.index, self.index]), np.array([False, True])

    def describe(self):
        return {"name": "component_linear", "c": self.c, "index": self.index}


class CustomPhi(Phi):
    """Arbitrary regressor with a user-supplied Jacobian diagonal."""

    def __init__(self, fn, dx_diag=None):
        self.fn = fn
        self._dx = dx_diag

    def __call__(self, x, v=None):
        return np.asarray(self.fn(np.asarray(x, dtype=float), v), dtype=float)

    def dx_diag(self, x, v=None):
        if self._dx is None:
            raise ValueError("this regressor has no derivative attached")
        return np.asarray(self._dx(np.asarray(x, dtype=float), v), dtype=float)


PHI_REGISTRY = {"zero": Zero, "linear": Linear, "component_linear": ComponentLinear}


def make_phi(spec) -> Phi:
    """Build a regressor from ``None``, a registry name, or ``{"name": ..., **params}``."""
    if spec is None:
        return Zero()
    if isinstance(spec, Phi):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in PHI_REGISTRY:
        raise ValueError(f"unknown phi {name!r}; registered: {sorted(PHI_REGISTRY)}")
    return PHI_REGISTRY[name](**spec)
