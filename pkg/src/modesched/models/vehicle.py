"""Kinematic vehicle with quantized speed/turn-rate commands.

Four modes, each a fixed (forward speed, turn rate) pair; the task is to
track a moving reference that circles at unit angular rate.  The reference
depends on time, so the optimizer-facing system appends a clock state
(``sdot = 1``) and the tracking error is read against the clock, keeping
every mode field autonomous.
"""
from __future__ import annotations

import math

import numpy as np

from ..integrate import SwitchedSystem

#: (forward speed, turn rate) of each mode
MODES = (
    (4.5, math.pi / 3),
    (4.5, -math.pi / 3),
    (2.0, math.pi / 3),
    (2.0, -math.pi / 3),
)

X0_DEFAULT = (0.0, 0.0, 0.0)
#: seven eighths of the circular reference's period, the horizon of the
#: published benchmark run this model reproduces
HORIZON_DEFAULT = 7.0 * math.pi / 4.0


def vehicle_mode_field(sigma, x):
    """Planar unicycle field of mode ``sigma`` at ``x = [X, Y, psi]``.

    Examples
    --------
    >>> vehicle_mode_field(1, [0.0, 0.0, 0.0])
    array([4.5       , 0.        , 1.04719755])
    """
    v, w = MODES[sigma - 1]
    x = np.asarray(x, float)
    psi = x[..., 2]
    return np.stack(
        [v * np.cos(psi), v * np.sin(psi), np.broadcast_to(w, psi.shape)],
        axis=-1,
    )


def desired_trajectory(t):
    """Reference state ``[X_d, Y_d, psi_d]``: a circle of radius 4 about
    (6.5, -1.5) traversed at 1 rad/s, heading aligned with the velocity.
    """
    t = np.asarray(t, float)
    return np.stack(
        [6.5 - 4.0 * np.cos(t),
         -1.5 + 4.0 * np.sin(t),
         math.pi / 2 - t],
        axis=-1,
    )


def _desired_rate(t):
    t = np.asarray(t, float)
    return np.stack(
        [4.0 * np.sin(t), 4.0 * np.cos(t), np.broadcast_to(-1.0, t.shape)],
        axis=-1,
    )


def vehicle_system():
    """The tracking problem as a 4-state autonomous switched system.

    State is ``[X, Y, psi, s]`` with clock ``s``; running cost is
    ``0.5 * ||[X, Y, psi] - x_d(s)||^2``.
    """

    def mode_field(i, z):
        z = np.asarray(z, float)
        out = np.empty(z.shape)
        out[..., :3] = vehicle_mode_field(i, z[..., :3])
        out[..., 3] = 1.0
        return out

    def mode_jacobian(i, z):
        v, _ = MODES[i - 1]
        psi = float(z[2])
        J = np.zeros((4, 4))
        J[0, 2] = -v * math.sin(psi)
        J[1, 2] = v * math.cos(psi)
        return J

    def running_cost(z):
        z = np.asarray(z, float)
        e = z[..., :3] - desired_trajectory(z[..., 3])
        return 0.5 * np.sum(e * e, axis=-1)

    def running_cost_gradient(z):
        z = np.asarray(z, float)
        s = float(z[3])
        e = z[:3] - desired_trajectory(s)
        g = np.empty(4)
        g[:3] = e
        g[3] = -float(e @ _desired_rate(s))
        return g

    return SwitchedSystem(
        num_modes=len(MODES), dim=4,
        mode_field=mode_field, mode_jacobian=mode_jacobian,
        running_cost=running_cost,
        running_cost_gradient=running_cost_gradient,
        vectorized=True, name="vehicle",
    )


def vehicle_initial_state(x0=None):
    """Optimizer-facing initial state: pose plus zeroed clock."""
    x0 = np.asarray(X0_DEFAULT if x0 is None else x0, float)
    if x0.shape != (3,):
        raise ValueError(f"vehicle pose must have 3 entries, got {x0.shape}")
    return np.concatenate([x0, [0.0]])
