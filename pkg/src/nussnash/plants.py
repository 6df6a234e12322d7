"""Player dynamics with hidden gains and parameters.

``b`` and ``theta`` are the ground truth the regulators must not see.  Gains
act per component (diagonal input matrices).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .regulators import Phi, make_phi


class PlantKind(str, Enum):
    FIRST_ORDER = "first_order"
    SECOND_ORDER_CHAIN = "second_order_chain"
    GENERAL_SECOND_ORDER = "general_second_order"

    @property
    def has_velocity(self) -> bool:
        return self is not PlantKind.FIRST_ORDER


def _vec(val, dim, name) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(val, dtype=float), (dim,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class PlantSpec:
    """One player's dynamics.

    ``first_order``:           dx = b*u + phi(x)*theta
    ``second_order_chain``:    dx = v, dv = b*u + phi(x)*theta
    ``general_second_order``:  dx = b*v + phi(x)*theta, dv = b2*u + phi2(x, v)*theta2
    """

    kind: PlantKind
    dim: int
    b: np.ndarray
    theta: np.ndarray
    phi: Phi = field(default_factory=lambda: make_phi(None))
    b2: np.ndarray | None = None
    theta2: np.ndarray | None = None
    phi2: Phi | None = None

    def __post_init__(self):
        kind = PlantKind(self.kind)
        object.__setattr__(self, "kind", kind)
        d = int(self.dim)
        if d < 1:
            raise ValueError("plant dimension must be positive")
        object.__setattr__(self, "b", _vec(self.b, d, "b"))
        object.__setattr__(self, "theta", _vec(self.theta, d, "theta"))
        object.__setattr__(self, "phi", make_phi(self.phi))
        if np.any(self.b == 0):
            raise ValueError("every entry of b must be nonzero")
        if kind is PlantKind.GENERAL_SECOND_ORDER:
            if self.b2 is None:
                raise ValueError("general_second_order plants need b2")
            object.__setattr__(self, "b2", _vec(self.b2, d, "b2"))
            object.__setattr__(self, "theta2", _vec(1.0 if self.theta2 is None else self.theta2, d, "theta2"))
            object.__setattr__(self, "phi2", make_phi(self.phi2))
            if np.any(self.b2 == 0):
                raise ValueError("every entry of b2 must be nonzero")
        elif self.b2 is not None or self.theta2 is not None or self.phi2 is not None:
            raise ValueError(f"{kind.value} plants take no second-stage parameters")

    def flipped(self) -> "PlantSpec":
        """Same plant with every control direction reversed."""
        return PlantSpec(self.kind, self.dim, -self.b, self.theta, self.phi,
                         None if self.b2 is None else -self.b2, self.theta2, self.phi2)


@dataclass
class PlantState:
    x: np.ndarray
    v: np.ndarray | None = None


def plant_rhs(spec: PlantSpec, s: PlantState, u) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(dx, dv)``; ``dv`` is ``None`` for first-order plants."""
    x = np.asarray(s.x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (spec.dim,) or u.shape != (spec.dim,):
        raise ValueError(f"state/control must have shape ({spec.dim},), got {x.shape} and {u.shape}")
    if spec.kind is PlantKind.FIRST_ORDER:
        return spec.b * u + spec.phi(x) * spec.theta, None
    if s.v is None:
        raise ValueError(f"{spec.kind.value} plants need a velocity")
    v = np.asarray(s.v, dtype=float)
    if v.shape != (spec.dim,):
        raise ValueError(f"velocity must have shape ({spec.dim},), got {v.shape}")
    if spec.kind is PlantKind.SECOND_ORDER_CHAIN:
        return v.copy(), spec.b * u + spec.phi(x) * spec.theta
    dx = spec.b * v + spec.phi(x) * spec.theta
    dv = spec.b2 * u + spec.phi2(x, v) * spec.theta2
    return dx, dv
