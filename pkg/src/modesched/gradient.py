"""First-order information of the trajectory cost.

Two gradients live here.  The *switching-time gradient* is the ordinary
derivative of the cost with respect to each existing switching time.  The
*insertion gradient* ``d_a(t)`` is the sensitivity of the cost to a
vanishing-length insertion of mode ``a`` at time ``t``; it is a field of N
scalar channels over the horizon, piecewise smooth on the schedule's
partition with jumps only at switching times.  The most negative value of
the field, ``theta``, is the optimality function: ``theta = 0`` exactly at
schedules satisfying the minimum principle, and ``theta < 0`` points at the
mode/time insertion of steepest descent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

#: default minimum-search sampling: grid step = horizon / GRID_DENOM,
#: never fewer than GRID_MIN_PTS points per segment
GRID_DENOM = 2048
GRID_MIN_PTS = 64
#: golden-section refinement tolerance, relative to the horizon
REFINE_TOL = 1e-10
#: stationarity band, scaled by (1 + |d|_inf / T)
STATIONARY_TOL = 1e-6
#: curvature positivity threshold, scaled by (1 + |d|_inf)
CURVATURE_TOL = 1e-8

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def switching_time_gradient(sys, schedule, x, rho):
    """Cost derivative with respect to each interior switching time.

    Entry ``i`` is ``rho(T_i)^T (f_before(x(T_i)) - f_after(x(T_i)))``,
    where *before*/*after* are the modes flanking switching time ``T_i``.

    Returns
    -------
    ndarray, shape (M-1,)
    """
    out = np.empty(len(schedule.times))
    for i, t in enumerate(schedule.times):
        xt = np.asarray(x(t), float)
        rt = np.asarray(rho(t), float)
        fb = np.asarray(sys.mode_field(schedule.sequence[i], xt), float)
        fa = np.asarray(sys.mode_field(schedule.sequence[i + 1], xt), float)
        out[i] = rt @ (fb - fa)
    return out


class InsertionGradientField:
    """The N-channel insertion gradient over a schedule's partition.

    Channel ``a`` at time ``t`` is ``rho(t)^T (f_a(x(t)) - f_active(x(t)))``;
    the active channel is identically zero.  Values and slopes are smooth
    inside each segment and may jump at switching times, so every query
    takes a ``side`` ("left"/"right") that picks the one-sided limit; the
    default is the right limit, matching the schedule's right-continuity.

    Instances are built by :func:`insertion_gradient` from a trajectory
    and adjoint, or by :meth:`from_callables` from explicit channel
    functions (synthetic fields for studies and tests).
    """

    def __init__(self, schedule, values_fn, slopes_fn,
                 grid_step=None, min_grid_pts=GRID_MIN_PTS):
        self.schedule = schedule
        self.num_modes = schedule.num_modes
        self.horizon = schedule.horizon
        self._values_fn = values_fn   # (seg, ts) -> (len(ts), N)
        self._slopes_fn = slopes_fn
        self._grid_step = grid_step if grid_step is not None \
            else schedule.horizon / GRID_DENOM
        self._min_grid_pts = min_grid_pts
        self._grids = {}
        self._grid_vals = {}
        self._minima = None
        self._norm_inf = None

    # -- construction -------------------------------------------------

    @classmethod
    def from_callables(cls, schedule, channels, channel_slopes=None, **kw):
        """Build a synthetic field from N scalar functions of time.

        ``channels[a-1](t)`` gives channel ``a``; functions must be smooth
        inside each schedule segment.  Slopes default to a central finite
        difference with step ``1e-7 * horizon``.
        """
        if len(channels) != schedule.num_modes:
            raise ValueError(
                f"{len(channels)} channel functions for "
                f"{schedule.num_modes} modes"
            )

        def values_fn(seg, ts):
            ts = np.atleast_1d(np.asarray(ts, float))
            return np.column_stack([np.broadcast_to(f(ts), ts.shape)
                                    for f in channels])

        if channel_slopes is not None:
            def slopes_fn(seg, ts):
                ts = np.atleast_1d(np.asarray(ts, float))
                return np.column_stack([np.broadcast_to(g(ts), ts.shape)
                                        for g in channel_slopes])
        else:
            h = 1e-7 * schedule.horizon

            def slopes_fn(seg, ts):
                a, b = schedule.segment_bounds(seg)
                tc = np.clip(np.atleast_1d(np.asarray(ts, float)),
                             a + h, b - h)
                return (values_fn(seg, tc + h) - values_fn(seg, tc - h)) / (2 * h)

        return cls(schedule, values_fn, slopes_fn, **kw)

    # -- evaluation ---------------------------------------------------

    def _segment_for(self, t, side):
        sched = self.schedule
        if side == "left":
            i = int(np.searchsorted(sched.boundaries, t, side="left")) - 1
        else:
            i = int(np.searchsorted(sched.boundaries, t, side="right")) - 1
        return min(max(i, 0), sched.n_segments - 1)

    def value(self, t, side="right"):
        """All N channels at scalar time ``t``; shape (N,)."""
        seg = self._segment_for(float(t), side)
        return self._values_fn(seg, np.array([float(t)]))[0]

    def value_channel(self, a, t, side="right"):
        return float(self.value(t, side)[a - 1])

    def slope(self, a, t, side="right"):
        """One-sided time-derivative of channel ``a`` at ``t``."""
        seg = self._segment_for(float(t), side)
        return float(self._slopes_fn(seg, np.array([float(t)]))[0, a - 1])

    def curvature(self, a, t, side="right"):
        """Second time-derivative of channel ``a`` by differencing slopes.

        Central difference with step ``1e-5 *`` (segment length), the
        evaluation stencil clamped inside the segment so boundary queries
        become one-sided automatically.
        """
        seg = self._segment_for(float(t), side)
        lo, hi = self.schedule.segment_bounds(seg)
        h = 1e-5 * (hi - lo)
        tc = min(max(float(t), lo + h), hi - h)
        sl = self._slopes_fn(seg, np.array([tc - h, tc + h]))[:, a - 1]
        return float((sl[1] - sl[0]) / (2.0 * h))

    def values_in_segment(self, seg, ts):
        """Channel matrix (len(ts), N) using segment ``seg``'s branch."""
        return self._values_fn(seg, np.asarray(ts, float))

    # -- sampling and minima -------------------------------------------

    def grid(self, seg):
        """Master sample times for segment ``seg`` (endpoints included)."""
        if seg not in self._grids:
            a, b = self.schedule.segment_bounds(seg)
            n = max(self._min_grid_pts, int(np.ceil((b - a) / self._grid_step)))
            self._grids[seg] = np.linspace(a, b, n)
        return self._grids[seg]

    def grid_values(self, seg):
        if seg not in self._grid_vals:
            self._grid_vals[seg] = self._values_fn(seg, self.grid(seg))
        return self._grid_vals[seg]

    @property
    def norm_inf(self):
        """Max |d| over all channels on the master grids."""
        if self._norm_inf is None:
            self._norm_inf = max(
                float(np.abs(self.grid_values(s)).max())
                for s in range(self.schedule.n_segments)
            )
        return self._norm_inf

    def local_minima(self):
        """Refined per-channel local minima, one list for the whole field.

        Returns a list of dicts with keys ``value, time, mode, segment,
        boundary`` where ``boundary`` is "left"/"right" when the minimum
        sits on a segment end (one-sided) and None when interior.  Interior
        minima are refined by golden-section search to ``1e-10 * horizon``.
        """
        if self._minima is not None:
            return self._minima
        sched = self.schedule
        tol = REFINE_TOL * self.horizon
        found = []
        for seg in range(sched.n_segments):
            ts = self.grid(seg)
            vals = self.grid_values(seg)
            end_slopes = self._slopes_fn(seg, ts[[0, -1]])
            active = sched.sequence[seg]
            for a in range(1, self.num_modes + 1):
                if a == active:
                    continue
                v = vals[:, a - 1]
                found.append(dict(value=float(v[0]), time=float(ts[0]),
                                  mode=a, segment=seg, boundary="right"))
                found.append(dict(value=float(v[-1]), time=float(ts[-1]),
                                  mode=a, segment=seg, boundary="left"))
                interior = np.flatnonzero(
                    (v[1:-1] <= v[:-2]) & (v[1:-1] <= v[2:])) + 1
                for j in interior:
                    t_min, v_min = self._refine_min(seg, a, ts[j - 1],
                                                    ts[j + 1], tol)
                    found.append(dict(value=v_min, time=t_min, mode=a,
                                      segment=seg, boundary=None))
                # an endpoint slope pointing into the segment means the
                # endpoint is not a one-sided minimum: the true minimum
                # hides inside the first/last grid cell, too close to the
                # edge for the discrete test above to see it
                if end_slopes[0, a - 1] < 0.0 and 1 not in interior:
                    t_min, v_min = self._refine_min(seg, a, ts[0], ts[1],
                                                    tol)
                    found.append(dict(value=v_min, time=t_min, mode=a,
                                      segment=seg, boundary=None))
                if end_slopes[1, a - 1] > 0.0 and len(v) - 2 not in interior:
                    t_min, v_min = self._refine_min(seg, a, ts[-2], ts[-1],
                                                    tol)
                    found.append(dict(value=v_min, time=t_min, mode=a,
                                      segment=seg, boundary=None))
        self._minima = found
        return found

    def _refine_min(self, seg, a, lo, hi, tol):
        """Golden-section minimum of channel ``a`` within one segment."""
        f = lambda t: float(self._values_fn(seg, np.array([t]))[0, a - 1])
        c = hi - _INV_PHI * (hi - lo)
        d = lo + _INV_PHI * (hi - lo)
        fc, fd = f(c), f(d)
        while hi - lo > tol:
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - _INV_PHI * (hi - lo)
                fc = f(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _INV_PHI * (hi - lo)
                fd = f(d)
        t_min = 0.5 * (lo + hi)
        return t_min, f(t_min)


@dataclass
class OptimalityResult:
    """The optimality function and its minimizer.

    ``theta`` is the most negative insertion-gradient value over all modes
    and times (0 when no insertion can reduce the cost).  ``mode``/``time``
    locate the minimizer; ties go to the earliest time, then the lowest
    mode index.  ``boundary`` is "left"/"right" when the minimum is a
    one-sided segment-end value, None when interior; ``stationary`` marks
    an interior minimum with vanishing slope.
    """

    theta: float
    mode: int | None
    time: float | None
    segment: int | None
    boundary: str | None
    slope: float
    curvature: float
    stationary: bool
    norm_inf: float

    @property
    def is_optimal(self):
        return self.mode is None


def insertion_gradient(sys, schedule, x, rho, grid_step=None):
    """Build the insertion-gradient field from trajectory and adjoint.

    Parameters
    ----------
    sys : SwitchedSystem
    schedule : ModeSchedule
    x, rho : SampledCurve
        Forward trajectory and backward adjoint on the same partition.

    Returns
    -------
    InsertionGradientField
    """
    N = sys.num_modes

    def values_fn(seg, ts):
        ts = np.atleast_1d(np.asarray(ts, float))
        xs = np.atleast_2d(x.eval_in_segment(seg, ts))
        rs = np.atleast_2d(rho.eval_in_segment(seg, ts))
        active = schedule.sequence[seg]
        fm = sys.field_at(active, xs)
        out = np.empty((len(ts), N))
        for a in range(1, N + 1):
            if a == active:
                out[:, a - 1] = 0.0
            else:
                out[:, a - 1] = np.einsum(
                    "ij,ij->i", rs, sys.field_at(a, xs) - fm)
        return out

    def slopes_fn(seg, ts):
        ts = np.atleast_1d(np.asarray(ts, float))
        xs = np.atleast_2d(x.eval_in_segment(seg, ts))
        rs = np.atleast_2d(rho.eval_in_segment(seg, ts))
        xd = np.atleast_2d(x.derivative_in_segment(seg, ts))
        rd = np.atleast_2d(rho.derivative_in_segment(seg, ts))
        active = schedule.sequence[seg]
        fm = sys.field_at(active, xs)
        out = np.empty((len(ts), N))
        for a in range(1, N + 1):
            if a == active:
                out[:, a - 1] = 0.0
                continue
            fa = sys.field_at(a, xs)
            term1 = np.einsum("ij,ij->i", rd, fa - fm)
            term2 = np.empty(len(ts))
            for j in range(len(ts)):
                dJ = (sys.mode_jacobian(a, xs[j])
                      - sys.mode_jacobian(active, xs[j]))
                term2[j] = rs[j] @ (dJ @ xd[j])
            out[:, a - 1] = term1 + term2
        return out

    return InsertionGradientField(schedule, values_fn, slopes_fn,
                                  grid_step=grid_step)


def optimality(field):
    """Locate ``theta``, the global minimum of the insertion gradient.

    Ties (within ``1e-12`` of the minimum, relatively) resolve to the
    earliest time and then the lowest mode index.  When every channel is
    nonnegative the schedule already satisfies the optimality condition
    and the result carries ``theta = 0`` with no minimizer.
    """
    cands = field.local_minima()
    if not cands:
        return OptimalityResult(0.0, None, None, None, None,
                                0.0, 0.0, False, field.norm_inf)
    vmin = min(c["value"] for c in cands)
    norm_inf = field.norm_inf
    if vmin >= 0.0:
        return OptimalityResult(0.0, None, None, None, None,
                                0.0, 0.0, False, norm_inf)
    tie = 1e-12 * (1.0 + abs(vmin))
    best = min((c for c in cands if c["value"] <= vmin + tie),
               key=lambda c: (c["time"], c["mode"]))
    side = best["boundary"] or "right"
    slope = field.slope(best["mode"], best["time"], side=side)
    curvature = field.curvature(best["mode"], best["time"], side=side)
    slope_tol = STATIONARY_TOL * (1.0 + norm_inf / field.horizon)
    stationary = best["boundary"] is None and abs(slope) <= slope_tol
    return OptimalityResult(
        theta=float(best["value"]), mode=best["mode"], time=best["time"],
        segment=best["segment"], boundary=best["boundary"],
        slope=slope, curvature=curvature, stationary=stationary,
        norm_inf=norm_inf,
    )
