"""Single-track (bicycle) lateral dynamics with linear tires.

State is ``(x, y, phi, v_y, phi_dot)``: world position, yaw, body-frame
lateral velocity and yaw rate, at a fixed longitudinal speed ``v_x``.
The front longitudinal tire force is taken as zero, so the sin(delta)
drive-force terms vanish from the lateral and yaw equations.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState

log = logging.getLogger(__name__)

# Ordering of the controller-model state used by linearize/discretize.
LINEAR_STATES = ("lateral", "v_y", "phi", "phi_dot")


@dataclass(frozen=True)
class VehicleParams:
    m: float = 3.5
    I_z: float = 0.06
    d_front: float = 0.16
    d_rear: float = 0.16
    C_cf: float = 60.0
    C_cr: float = 60.0
    v_x: float = 3.0
    delta_max: float = 0.4
    ddelta_max: float = 0.05

    def __post_init__(self):
        for name in ("m", "I_z", "d_front", "d_rear", "C_cf", "C_cr", "ddelta_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.v_x <= 0.1:
            raise ValueError("v_x must exceed 0.1 m/s")
        if not 0 < self.delta_max <= math.pi / 3:
            raise ValueError("delta_max must lie in (0, pi/3]")

    @property
    def wheelbase(self):
        return self.d_front + self.d_rear


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0
    v_y: float = 0.0
    phi_dot: float = 0.0

    def as_array(self):
        return np.array([self.x, self.y, self.phi, self.v_y, self.phi_dot])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class TireState:
    alpha_f: float
    alpha_r: float
    F_cf: float
    F_cr: float


@dataclass(frozen=True)
class LinearModel:
    """Continuous and discrete lateral models.

    States are ordered ``(lateral, v_y, phi, phi_dot)``; ``C_d`` picks out
    ``(lateral, phi)``.
    """

    A_c: np.ndarray
    B_c: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray
    C_d: np.ndarray
    T_s: float
    states: tuple = LINEAR_STATES


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w == -math.pi else w


def tire_forces(state, delta_f, p):
    vx = p.v_x
    alpha_f = delta_f - (state.v_y + p.d_front * state.phi_dot) / vx
    alpha_r = -(state.v_y - p.d_rear * state.phi_dot) / vx
    return TireState(alpha_f, alpha_r, p.C_cf * alpha_f, p.C_cr * alpha_r)


def _rhs(s, delta, p):
    _, _, phi, vy, r = s
    vx = p.v_x
    f_cf = p.C_cf * (delta - (vy + p.d_front * r) / vx)
    f_cr = p.C_cr * (-(vy - p.d_rear * r) / vx)
    cd = math.cos(delta)
    cphi, sphi = math.cos(phi), math.sin(phi)
    return np.array([
        vx * cphi - vy * sphi,
        vx * sphi + vy * cphi,
        r,
        (2 * f_cf * cd + 2 * f_cr) / p.m - vx * r,
        (2 * p.d_front * f_cf * cd - 2 * p.d_rear * f_cr) / p.I_z,
    ])


def dynamics_rhs(state, delta_f, p):
    """Time derivative ``(x', y', phi', v_y', phi_dot')`` as an array."""
    return _rhs(state.as_array(), delta_f, p)


def clamp_steering(delta_f, p):
    """Return ``(delta, clamped)`` with ``|delta| <= p.delta_max``."""
    if abs(delta_f) > p.delta_max:
        return math.copysign(p.delta_max, delta_f), True
    return delta_f, False


def step(state, delta_f, p, dt):
    """Advance one classical RK4 step; steering beyond delta_max is clamped."""
    if not 0 < dt <= 0.02:
        raise ValueError("dt must lie in (0, 0.02]")
    delta, clamped = clamp_steering(delta_f, p)
    if clamped:
        log.debug("steering %.4f clamped to %.4f", delta_f, delta)
    s = state.as_array()
    with np.errstate(invalid="ignore", over="ignore"):
        k1 = _rhs(s, delta, p)
        k2 = _rhs(s + 0.5 * dt * k1, delta, p)
        k3 = _rhs(s + 0.5 * dt * k2, delta, p)
        k4 = _rhs(s + dt * k3, delta, p)
        s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(s)):
        raise NonFiniteState(f"non-finite state after step: {s}")
    s[2] = wrap_angle(s[2])
    return VehicleState.from_array(s)


def linearize(op_state, op_delta, p):
    """Analytic Jacobians of the lateral subsystem at an operating point.

    Returns ``(A_c, B_c)`` for states ``(lateral, v_y, phi, phi_dot)`` where
    ``lateral`` is the world y coordinate (or the lateral error coordinate
    when the state is expressed in a path- or vehicle-aligned frame).
    """
    vx = p.v_x
    phi, vy, r = op_state.phi, op_state.v_y, op_state.phi_dot
    cd, sd = math.cos(op_delta), math.sin(op_delta)
    alpha_f = op_delta - (vy + p.d_front * r) / vx
    cf, cr, a, b = p.C_cf, p.C_cr, p.d_front, p.d_rear

    A = np.zeros((4, 4))
    A[0, 1] = math.cos(phi)
    A[0, 2] = vx * math.cos(phi) - vy * math.sin(phi)
    A[1, 1] = (-2 * cf * cd / vx - 2 * cr / vx) / p.m
    A[1, 3] = (-2 * cf * a * cd / vx + 2 * cr * b / vx) / p.m - vx
    A[2, 3] = 1.0
    A[3, 1] = (-2 * a * cf * cd / vx + 2 * b * cr / vx) / p.I_z
    A[3, 3] = (-2 * a * a * cf * cd / vx - 2 * b * b * cr / vx) / p.I_z

    dfc = cf * (cd - alpha_f * sd)  # d(F_cf cos delta)/d delta
    B = np.zeros((4, 1))
    B[1, 0] = 2 * dfc / p.m
    B[3, 0] = 2 * a * dfc / p.I_z
    return A, B


def discretize(A_c, B_c, T_s):
    """Forward-Euler discretization."""
    if not 0 < T_s <= 0.2:
        raise ValueError("T_s must lie in (0, 0.2]")
    A_c = np.asarray(A_c, dtype=float)
    return np.eye(A_c.shape[0]) + T_s * A_c, T_s * np.asarray(B_c, dtype=float)


def output_matrix():
    """Selects ``(lateral, phi)`` from the 4-state model."""
    C = np.zeros((2, 4))
    C[0, 0] = 1.0
    C[1, 2] = 1.0
    return C


def linear_model(op_state, op_delta, p, T_s):
    A_c, B_c = linearize(op_state, op_delta, p)
    A_d, B_d = discretize(A_c, B_c, T_s)
    return LinearModel(A_c, B_c, A_d, B_d, output_matrix(), T_s)
