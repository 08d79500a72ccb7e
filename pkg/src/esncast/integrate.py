"""Fixed-step Runge-Kutta 5(4) integration.

The stepper uses the Dormand-Prince coefficient set at a fixed step size:
the 5th-order solution propagates and the embedded 4th-order solution is
only folded into an accuracy diagnostic, never into step-size control.
Driven reservoir runs come in two flavors: co-integration of the source
system with the reservoir (the default for training), and replay of a
stored input signal with cubic Hermite interpolation at the substage times.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from . import _kernels
from ._kernels import DP54_A, DP54_B, DP54_C, DP54_E  # noqa: F401  (re-export)

if TYPE_CHECKING:
    from .systems import ChaoticSystem, Trajectory
    from .topology import Reservoir


class IntegrationError(RuntimeError):
    """Raised when an integration produces a non-finite state."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class StepperConfig:
    """Fixed-step integrator settings; dt defaults to the standard 0.01."""

    dt: float = 0.01
    method: str = "dormand-prince-54"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.method != "dormand-prince-54":
            raise ValueError(f"unknown method {self.method!r}")


def n_steps_between(t0: float, t1: float, dt: float) -> int:
    """Number of fixed steps spanning [t0, t1], validating grid alignment."""
    if t1 < t0:
        raise ValueError(f"t1 ={t1} earlier than t0 ={t0}")
    span = t1 - t0
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"interval [{t0}, {t1}] is not a whole number of steps dt={dt}")
    return n


def integrate_fixed(
    field: Callable[[np.ndarray], np.ndarray],
    state0: np.ndarray,
    t0: float,
    t1: float,
    cfg: StepperConfig = StepperConfig(),
    return_error_estimate: bool = False,
):
    """Integrate an autonomous field on a fixed grid, returning every node.

    `field` maps a state vector to its time derivative. The returned array
    has one row per grid node, t0 first. With return_error_estimate the
    per-step max-norm defect of the embedded 4th-order solution is returned
    alongside.
    """
    dt = cfg.dt
    nsteps = n_steps_between(t0, t1, dt)
    y = np.asarray(state0, dtype=float).copy()
    out = np.empty((nsteps + 1, y.size))
    out[0] = y
    errs = np.empty(nsteps) if return_error_estimate else None
    k = np.empty((7, y.size))
    # Overflow inside a diverging step is expected right before detection.
    with np.errstate(over="ignore", invalid="ignore"):
        k[0] = field(y)
        for n in range(nsteps):
            for j in range(1, 6):
                k[j] = field(y + dt * (DP54_A[j, :j] @ k[:j]))
            y_new = y + dt * (DP54_B[:6] @ k[:6])
            if not np.all(np.isfinite(y_new)):
                raise IntegrationError(
                    f"non-finite state at t = {t0 + (n + 1) * dt:.6g}",
                    time=t0 + (n + 1) * dt,
                )
            k[6] = field(y_new)
            if errs is not None:
                errs[n] = dt * np.max(np.abs(DP54_E @ k))
            y = y_new
            out[n + 1] = y
            k[0] = k[6]
    if errs is not None:
        return out, errs
    return out


# Cubic Hermite basis evaluated at the four interior DP54 substage times.
_INTERIOR_C = DP54_C[1:5]


def _hermite_weights(c: np.ndarray) -> np.ndarray:
    h00 = 2 * c**3 - 3 * c**2 + 1
    h10 = c**3 - 2 * c**2 + c
    h01 = -2 * c**3 + 3 * c**2
    h11 = c**3 - c**2
    return np.stack([h00, h10, h01, h11], axis=1)


_HERMITE_W = _hermite_weights(_INTERIOR_C)


def substage_inputs(u_nodes: np.ndarray, dt: float) -> np.ndarray:
    """Interpolate node samples at the interior substage times of each step.

    Slopes come from centered differences (one-sided at the ends), giving a
    third-order-accurate cubic Hermite interpolant on every step, enough to
    preserve the overall order of the stepper at dt = 0.01.
    """
    u = np.asarray(u_nodes, dtype=float)
    n = u.shape[0] - 1
    if n < 1:
        return np.empty((0, len(_INTERIOR_C), u.shape[1]))
    m = np.empty_like(u)
    m[1:-1] = (u[2:] - u[:-2]) / (2 * dt)
    m[0] = (u[1] - u[0]) / dt if n == 1 else (-3 * u[0] + 4 * u[1] - u[2]) / (2 * dt)
    m[-1] = (u[-1] - u[-2]) / dt if n == 1 else (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * dt)
    # out[step, stage, ch] = h00 u0 + h10 dt m0 + h01 u1 + h11 dt m1
    w = _HERMITE_W
    out = (
        w[:, 0][None, :, None] * u[:-1, None, :]
        + w[:, 1][None, :, None] * (dt * m[:-1, None, :])
        + w[:, 2][None, :, None] * u[1:, None, :]
        + w[:, 3][None, :, None] * (dt * m[1:, None, :])
    )
    return out


def integrate_driven(
    reservoir: "Reservoir",
    input: "Trajectory",
    r0: np.ndarray,
    t0: float,
    t1: float,
    cfg: StepperConfig = StepperConfig(),
    return_error_estimate: bool = False,
):
    """Integrate the listening reservoir against a stored input signal.

    The input trajectory must cover [t0, t1] on a grid commensurate with
    cfg.dt; samples are interpolated to the substage times with a cubic
    Hermite scheme. Returns reservoir states on the same grid.
    """
    dt = cfg.dt
    if abs(input.dt - dt) > 1e-12:
        raise ValueError(f"input grid dt ={input.dt} does not match stepper dt ={dt}")
    if t0 < input.t0 - 1e-9 or t1 > input.end_time + 1e-9:
        raise ValueError(
            f"input covers [{input.t0}, {input.end_time}], cannot drive [{t0}, {t1}]"
        )
    i0 = n_steps_between(input.t0, t0, dt)
    nsteps = n_steps_between(t0, t1, dt)
    u_nodes = np.ascontiguousarray(input.samples[i0 : i0 + nsteps + 1], dtype=float)
    u_interior = np.ascontiguousarray(substage_inputs(u_nodes, dt))
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (reservoir.n,):
        raise ValueError(f"r0 has shape {r0.shape}, expected ({reservoir.n},)")
    indptr, indices, data = reservoir.w_r_csr()
    states, err_max, fail = _kernels.listen_interp(
        indptr, indices, data, reservoir.w_in, reservoir.gamma,
        u_nodes, u_interior, r0, nsteps, dt,
    )
    if fail >= 0:
        raise IntegrationError(
            f"driven reservoir produced non-finite state at t = {t0 + (fail + 1) * dt:.6g}",
            time=t0 + (fail + 1) * dt,
        )
    if return_error_estimate:
        return states, err_max
    return states


def integrate_coupled(
    system: "ChaoticSystem",
    reservoir: "Reservoir",
    s0: np.ndarray,
    t_end: float,
    cfg: StepperConfig = StepperConfig(),
):
    """Co-integrate source system and listening reservoir from t = 0.

    The reservoir starts at rest and sees the exact normalized source signal
    at every substage. Returns (reservoir states, normalized input samples,
    max embedded-error estimate) on the fixed grid.
    """
    nsteps = n_steps_between(0.0, t_end, cfg.dt)
    indptr, indices, data = reservoir.w_r_csr()
    r_states, u_states, err_max, fail = _kernels.listen_coupled(
        system.code, system.param_vector, system.time_scale,
        system.log_mask, system.norm_shift, system.norm_scale,
        indptr, indices, data, reservoir.w_in, reservoir.gamma,
        np.asarray(s0, dtype=float), nsteps, cfg.dt,
    )
    if fail >= 0:
        raise IntegrationError(
            f"coupled run produced non-finite state at t = {(fail + 1) * cfg.dt:.6g}",
            time=(fail + 1) * cfg.dt,
        )
    return r_states, u_states, err_max
