"""Lateral controllers: incremental state-space MPC and a look-ahead PID.

MPC model: the discrete lateral model augmented with the previous steering
command, so the decision variables are steering increments. Outputs are
predicted over ``N_p`` steps with increments free for the first ``N_c``
steps and zero afterwards.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import HorizonMismatch, InvalidLane, SingularHessian
from .vehicle import VehicleState, linear_model


@dataclass(frozen=True)
class IncrementalModel:
    A_aug: np.ndarray
    B_aug: np.ndarray
    C_aug: np.ndarray


@dataclass(frozen=True)
class MpcConfig:
    N_p: int = 20
    N_c: int = 5
    q_y: float = 10.0
    q_phi: float = 2.0
    r_du: float = 500.0
    T_s: float = 0.05
    relinearize: bool = False
    v_target: float = 3.0
    kp_v: float = 1.0

    def __post_init__(self):
        if not 1 <= self.N_c <= self.N_p:
            raise ValueError("need 1 <= N_c <= N_p")
        if min(self.q_y, self.q_phi, self.r_du) < 0:
            raise ValueError("weights must be non-negative")
        if self.q_y == 0 and self.q_phi == 0:
            raise ValueError("at least one output weight must be positive")


@dataclass(frozen=True)
class PredictionMatrices:
    F: np.ndarray
    Phi: np.ndarray
    n_outputs: int = 2


@dataclass(frozen=True)
class ControlCommand:
    delta_f: float
    accel: float
    cost: float = 0.0
    clamped: bool = False


@dataclass(frozen=True)
class MpcDiagnostics:
    cost: float
    clamped: bool
    du_unconstrained: float
    residual: float
    du_sequence: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.8
    ki: float = 0.0
    kd: float = 0.05
    kp_v: float = 1.0
    v_target: float = 3.0
    lookahead: float = 0.8
    integral_clamp: float = 0.5

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd, self.kp_v, self.integral_clamp) < 0:
            raise ValueError("gains must be non-negative")
        if self.lookahead <= 0:
            raise ValueError("lookahead must be positive")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = None


def build_incremental(model):
    """Augment ``(A_d, B_d, C_d)`` with the previous input as an extra state."""
    A, B, C = np.atleast_2d(model.A_d), np.atleast_2d(model.B_d), np.atleast_2d(model.C_d)
    n, m = B.shape
    ny = C.shape[0]
    A_aug = np.block([[A, B], [np.zeros((m, n)), np.eye(m)]])
    B_aug = np.vstack([B, np.eye(m)])
    C_aug = np.hstack([C, np.zeros((ny, m))])
    return IncrementalModel(A_aug, B_aug, C_aug)


def build_prediction(models, n_c):
    """Stack the time-varying horizon: ``Y = F x(k) + Phi dU``.

    ``models[i]`` propagates step ``k+i -> k+i+1``. Block-row ``i`` of ``F``
    is ``C A_{k+i} ... A_k``; block ``(i, j)`` of ``Phi`` is
    ``C A_{k+i} ... A_{k+j+1} B_{k+j}`` for ``j <= min(i, n_c - 1)``.
    """
    n_p = len(models)
    if n_p < 1 or not 1 <= n_c <= n_p:
        raise HorizonMismatch(f"need 1 <= N_c <= N_p, got N_c={n_c}, N_p={n_p}")
    nx = models[0].A_aug.shape[0]
    nu = models[0].B_aug.shape[1]
    ny = models[0].C_aug.shape[0]
    F = np.zeros((ny * n_p, nx))
    Phi = np.zeros((ny * n_p, nu * n_c))
    # columns: transition from x(k) and from each input to the current step
    state_map = np.eye(nx)
    input_maps = [None] * n_c
    for i, mdl in enumerate(models):
        state_map = mdl.A_aug @ state_map
        for j in range(min(i, n_c)):
            input_maps[j] = mdl.A_aug @ input_maps[j]
        if i < n_c:
            input_maps[i] = mdl.B_aug
        rows = slice(i * ny, (i + 1) * ny)
        F[rows] = mdl.C_aug @ state_map
        for j in range(min(i + 1, n_c)):
            Phi[rows, j * nu:(j + 1) * nu] = mdl.C_aug @ input_maps[j]
    return PredictionMatrices(F, Phi, ny)


def weight_matrices(cfg, n_p, n_outputs, n_inputs):
    """``(Q_bar, R_bar)``; single-output models use ``q_y`` alone."""
    if n_outputs not in (1, 2):
        raise ValueError("expected 1 or 2 outputs per step")
    q = [cfg.q_y, cfg.q_phi][:n_outputs]
    Q = np.diag(np.tile(q, n_p))
    R = cfg.r_du * np.eye(n_inputs)
    return Q, R


def solve_mpc(pm, chi_aug, y_ref, cfg, u_prev, delta_max=np.inf, ddelta_max=np.inf):
    """Minimize ``(Yref - Y)' Q (Yref - Y) + dU' R dU`` and apply the first move.

    Returns ``(delta_u, diagnostics)``. The unconstrained optimum is found by
    Cholesky; the first increment is then clipped to ``+-ddelta_max`` and the
    resulting absolute input to ``+-delta_max``.
    """
    F, Phi = pm.F, pm.Phi
    n_c = Phi.shape[1]
    ny = pm.n_outputs
    n_p = F.shape[0] // ny
    Q, R = weight_matrices(cfg, n_p, ny, n_c)
    err = np.asarray(y_ref, dtype=float) - F @ np.asarray(chi_aug, dtype=float)
    H = Phi.T @ Q @ Phi + R
    g = Phi.T @ Q @ err
    try:
        factor = linalg.cho_factor(H)
    except linalg.LinAlgError as exc:
        raise SingularHessian("Hessian is not positive definite") from exc
    if np.min(np.diag(factor[0])) ** 2 < 1e-12 * max(1.0, np.max(np.abs(np.diag(H)))):
        raise SingularHessian("Hessian is numerically singular")
    du = linalg.cho_solve(factor, g)
    # one refinement step removes the rounding left by the square roots
    du = du + linalg.cho_solve(factor, g - H @ du)
    resid = err - Phi @ du
    cost = float(resid @ Q @ resid + du @ R @ du)

    first = float(du[0])
    applied = float(np.clip(first, -ddelta_max, ddelta_max))
    clamped = applied != first
    u_new = u_prev + applied
    if abs(u_new) > delta_max:
        u_new = float(np.clip(u_new, -delta_max, delta_max))
        applied = u_new - u_prev
        clamped = True
    diag = MpcDiagnostics(cost, clamped, first, float(np.linalg.norm(H @ du - g)), du)
    return applied, diag


def mpc_reference(lane_center, v_x, cfg):
    """Stacked ``(lateral, heading)`` references at stations ``i v_x T_s``."""
    d = np.arange(1, cfg.N_p + 1) * v_x * cfg.T_s
    y = np.asarray(lane_center(d), dtype=float)
    phi = np.arctan(np.asarray(lane_center.slope(d), dtype=float))
    return np.column_stack([y, phi]).ravel()


def mpc_control(lane_center, state, p, cfg, u_prev):
    """One MPC step from a lane-center polynomial in the vehicle frame.

    ``state`` supplies only the body rates ``v_y`` and ``phi_dot``; lateral
    and heading errors are zero at the vehicle origin by construction.
    """
    if not lane_center.valid:
        raise InvalidLane("lane center is not valid")
    local = VehicleState(0.0, 0.0, 0.0, state.v_y, state.phi_dot)
    base = build_incremental(linear_model(local, u_prev, p, cfg.T_s))
    if cfg.relinearize:
        models = _relinearized_models(local, u_prev, p, cfg, base)
    else:
        models = [base] * cfg.N_p
    pm = build_prediction(models, cfg.N_c)
    chi = np.array([0.0, state.v_y, 0.0, state.phi_dot, u_prev])
    y_ref = mpc_reference(lane_center, p.v_x, cfg)
    du, diag = solve_mpc(pm, chi, y_ref, cfg, u_prev, p.delta_max, p.ddelta_max)
    accel = cfg.kp_v * (cfg.v_target - p.v_x)
    return ControlCommand(u_prev + du, accel, diag.cost, diag.clamped)


def _relinearized_models(local, u_prev, p, cfg, base):
    models = []
    chi = np.array([0.0, local.v_y, 0.0, local.phi_dot, u_prev])
    mdl = base
    for _ in range(cfg.N_p):
        models.append(mdl)
        chi = mdl.A_aug @ chi
        op = VehicleState(0.0, chi[0], chi[2], chi[1], chi[3])
        mdl = build_incremental(linear_model(op, chi[4], p, cfg.T_s))
    return models


def pid_control(lane_center, state, gains, dt, pid_state, p):
    """Steer on the lane-center offset at the look-ahead station.

    ``pid_state`` is updated in place. The integral is clamped to
    ``+-integral_clamp``; the derivative is zero on the first call.
    """
    if not lane_center.valid:
        raise InvalidLane("lane center is not valid")
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = float(lane_center(gains.lookahead))
    pid_state.integral = float(np.clip(pid_state.integral + e * dt,
                                       -gains.integral_clamp, gains.integral_clamp))
    de = 0.0 if pid_state.prev_error is None else (e - pid_state.prev_error) / dt
    pid_state.prev_error = e
    raw = gains.kp * e + gains.ki * pid_state.integral + gains.kd * de
    delta = float(np.clip(raw, -p.delta_max, p.delta_max))
    accel = gains.kp_v * (gains.v_target - p.v_x)
    return ControlCommand(delta, accel, 0.0, delta != raw)
