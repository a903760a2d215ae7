"""Step-by-step driver around scipy's DOP853 with dense output and projection."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853

from .errors import StepSizeUnderflow


class PiecewiseDense:
    """Concatenation of per-step dense interpolants."""

    def __init__(self):
        self._breaks: list[float] = []
        self._interps = []

    def append(self, t_old, t_new, interp):
        if not self._breaks:
            self._breaks.append(t_old)
        self._breaks.append(t_new)
        self._interps.append(interp)

    @property
    def t_min(self) -> float:
        return self._breaks[0]

    @property
    def t_max(self) -> float:
        return self._breaks[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self._one(float(t))
        return np.stack([self._one(float(x)) for x in t])

    def _one(self, t):
        if not self._interps:
            raise ValueError("no steps recorded")
        k = bisect_right(self._breaks, t) - 1
        k = min(max(k, 0), len(self._interps) - 1)
        return self._interps[k](t)


@dataclass
class Propagation:
    t: np.ndarray
    y: np.ndarray
    dense: PiecewiseDense
    stopped: str | None = None
    n_steps: int = 0
    extras: dict = field(default_factory=dict)


def propagate(fun, y0, t_end, sample_times, *, rtol, atol, max_step=np.inf,
              project=None, check=None) -> Propagation:
    """Integrate ``y' = fun(t, y)`` from 0 to ``t_end``.

    ``sample_times`` (sorted, within ``[0, t_end]``) are filled from the dense
    output.  ``project(y)`` is applied after every accepted step and the
    solver's stored derivative is refreshed.  ``check(t, y)`` may return a
    string to stop early; the reason is reported in ``Propagation.stopped``.
    """
    y0 = np.asarray(y0, dtype=float)
    sample_times = np.asarray(sample_times, dtype=float)
    dense = PiecewiseDense()
    out_t, out_y = [], []
    k = 0
    while k < len(sample_times) and sample_times[k] <= 0.0:
        out_t.append(sample_times[k])
        out_y.append(y0.copy())
        k += 1
    solver = DOP853(fun, 0.0, y0, t_end, rtol=rtol, atol=atol, max_step=max_step)
    steps = 0
    stopped = None
    while solver.status == "running":
        t_old = solver.t
        message = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(f"integration failed at t={solver.t:.6g}: {message}")
        steps += 1
        interp = solver.dense_output()
        dense.append(t_old, solver.t, interp)
        while k < len(sample_times) and sample_times[k] <= solver.t:
            ts = sample_times[k]
            out_t.append(ts)
            out_y.append(solver.y.copy() if ts == solver.t else interp(ts))
            k += 1
        if project is not None:
            solver.y = project(solver.y)
            solver.f = fun(solver.t, solver.y)
        if check is not None:
            stopped = check(solver.t, solver.y)
            if stopped:
                break
    if solver.status == "finished" and not stopped:
        # sample grids built as multiples of a step can overshoot t_end by round-off
        slack = 1e-12 * max(1.0, abs(t_end))
        while k < len(sample_times) and sample_times[k] <= t_end + slack:
            out_t.append(sample_times[k])
            out_y.append(solver.y.copy())
            k += 1
    y = np.array(out_y) if out_y else np.empty((0, y0.size))
    return Propagation(np.array(out_t), y, dense, stopped, steps)
