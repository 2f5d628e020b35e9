"""Method-of-lines integration of the radial potential flow.

The evolving metric is ``omega(t) = chi(t) + i d dbar phi`` with reference form
``chi(t) = e^{-t}(omega_0 + Ric(omega_0)) - Ric(omega_0)``, and the potential obeys

    d phi / dt = log(omega(t)^n / omega_0^n) - phi,

which radially reads ``(n-1) log(a / a0) + log(b / b0) - phi``. Spatial
derivatives are second-order central differences on a uniform ``s`` grid,
time stepping is explicit Heun under a parabolic CFL bound, and ``phi`` is held
at zero on the outer node.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels as K
from .radial import EigenPair, log_det_profile, eigen_pair

MIN_NODES = 16


class PositivityError(RuntimeError):
    """The discrete metric left the Kahler cone."""

    def __init__(self, node: int, s: float, t: float):
        super().__init__(f"metric not positive at node {node} (s={s!r}) at t={t!r}")
        self.node = node
        self.s = s
        self.t = t


class NonFiniteError(RuntimeError):
    def __init__(self, t: float, last_good: "FlowState | None" = None):
        super().__init__(f"non-finite potential after t={t!r}")
        self.t = t
        self.last_good = last_good


class StepReport(NamedTuple):
    dt: float
    cfl_bound: float
    max_rhs: float
    positivity_margin: float


@dataclass
class FlowState:
    n: int
    s: np.ndarray
    ds: float
    a0: np.ndarray
    b0: np.ndarray
    dF0: np.ndarray
    sdF0: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    steps: int = 0
    last_dt: float = 0.0
    sigma: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.phi.size - 1

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    def tables(self):
        return self.s, self.ds, self.a0, self.b0, self.dF0, self.sdF0

    def copy(self, readonly: bool = False) -> "FlowState":
        out = copy.copy(self)
        out.phi = self.phi.copy()
        out.meta = dict(self.meta)
        if readonly:
            out.phi.flags.writeable = False
        return out

    def with_phi(self, phi, t: float) -> "FlowState":
        out = self.copy()
        out.phi = np.array(phi, dtype=float)
        out.t = float(t)
        return out


def grid(N: int, s_max: float) -> tuple[np.ndarray, float]:
    ds = s_max / N
    return np.arange(N + 1) * ds, ds


def init_flow(u0, N: int, s_max: float | None = None, *, sigma: float = 0.5) -> FlowState:
    """State at ``t = 0``: ``phi == 0`` with background tables taken from ``u0``."""
    if N < MIN_NODES:
        raise ValueError(f"grid needs N >= {MIN_NODES}, got {N}")
    if not 0.0 < sigma <= 1.0:
        raise ValueError("CFL safety factor must lie in (0, 1]")
    s_max = u0.s_max if s_max is None else s_max
    s, ds = grid(N, s_max)
    a0, b0 = eigen_pair(u0, s)
    _, dF0, sdF0 = log_det_profile(u0, s)
    return FlowState(
        n=u0.n,
        s=s,
        ds=ds,
        a0=np.asarray(a0, dtype=float),
        b0=np.asarray(b0, dtype=float),
        dF0=np.asarray(dF0, dtype=float),
        sdF0=np.asarray(sdF0, dtype=float),
        phi=np.zeros(N + 1),
        sigma=sigma,
    )


def background_pair(state: FlowState, t: float | None = None) -> EigenPair:
    """Eigen-parts of the reference form ``chi(t)`` at the nodes."""
    t = state.t if t is None else t
    e = math.exp(-t)
    return EigenPair(
        e * (state.a0 - state.dF0) + state.dF0,
        e * (state.b0 - state.sdF0) + state.sdF0,
    )


def metric_pair(state: FlowState) -> EigenPair:
    """Eigen-parts ``(a, b)`` of ``omega(t)`` at all ``N + 1`` nodes.

    The outer node uses one-sided stencils and is meant for diagnostics.
    """
    a = np.empty_like(state.phi)
    b = np.empty_like(state.phi)
    s, ds, a0, b0, dF0, sdF0 = state.tables()
    K.eigen_parts(state.phi, state.t, s, ds, a0, b0, dF0, sdF0, a, b)
    return EigenPair(a, b)


def _raise_status(state: FlowState, status: int, t: float):
    if status == K.NONFINITE:
        raise NonFiniteError(t)
    raise PositivityError(status, float(state.s[status]), t)


def rhs_full(state: FlowState) -> np.ndarray:
    out = np.empty_like(state.phi)
    a = np.empty_like(state.phi)
    b = np.empty_like(state.phi)
    s, ds, a0, b0, dF0, sdF0 = state.tables()
    status = K.rhs_into(state.phi, state.t, state.n, s, ds, a0, b0, dF0, sdF0, out, a, b)
    if status != K.OK:
        _raise_status(state, status, state.t)
    return out


def rhs(state: FlowState) -> np.ndarray:
    """``d phi / dt`` at the nodes ``0 .. N-1``."""
    return rhs_full(state)[:-1]


def cfl_dt(state: FlowState, sigma: float | None = None) -> float:
    """``sigma * ds^2 * min_i b_i / max(s_i, ds)`` over the non-boundary nodes."""
    sigma = state.sigma if sigma is None else sigma
    if sigma <= 0:
        raise ValueError("CFL safety factor must be positive")
    _, b = metric_pair(state)
    if np.any(b[:-1] <= 0):
        node = int(np.argmax(b[:-1] <= 0))
        raise PositivityError(node, float(state.s[node]), state.t)
    return float(K.cfl_from(b, state.s, state.ds, sigma))


def step(state: FlowState, dt: float) -> tuple[FlowState, StepReport]:
    """One Heun step of size ``dt``; the input state is left untouched."""
    bound = cfl_dt(state)
    if not dt > 0:
        raise ValueError("time step must be positive")
    if dt > bound:
        raise ValueError(f"dt={dt!r} exceeds the CFL bound {bound!r}")
    k1 = rhs_full(state)
    new = np.empty_like(state.phi)
    k2 = np.empty_like(state.phi)
    a = np.empty_like(state.phi)
    b = np.empty_like(state.phi)
    s, ds, a0, b0, dF0, sdF0 = state.tables()
    status = K.heun_into(state.phi, state.t, dt, k1, state.n, s, ds, a0, b0, dF0, sdF0, new, k2, a, b)
    if status != K.OK:
        _raise_status(state, status, state.t + dt)
    out = state.with_phi(new, state.t + dt)
    out.steps = state.steps + 1
    out.last_dt = dt
    pa, pb = metric_pair(out)
    if np.any(pa[:-1] <= 0) or np.any(pb[:-1] <= 0):
        node = int(np.argmax((pa[:-1] <= 0) | (pb[:-1] <= 0)))
        raise PositivityError(node, float(out.s[node]), out.t)
    margin = float(min(pa[:-1].min(), pb[:-1].min()))
    return out, StepReport(dt, bound, float(np.abs(k1[:-1]).max()), margin)


def advance_to(state: FlowState, t_stop: float) -> FlowState:
    """Integrate in place up to ``t_stop``, landing on it exactly."""
    if t_stop <= state.t:
        return state
    before = state.copy()
    s, ds, a0, b0, dF0, sdF0 = state.tables()
    t, steps, last_dt, status, fail_t = K.advance(
        state.phi, state.t, float(t_stop), state.sigma, state.n, s, ds, a0, b0, dF0, sdF0
    )
    state.t = float(t)
    state.steps += int(steps)
    if steps:
        state.last_dt = float(last_dt)
    if status == K.NONFINITE or not np.all(np.isfinite(state.phi)):
        raise NonFiniteError(fail_t, before)
    if status != K.OK:
        raise PositivityError(int(status), float(state.s[status]), float(fail_t))
    return state


def record_times(t: float, t_end: float, cadence: float, start_index: int | None = None):
    """``(index, time)`` pairs of the recording schedule ``k * cadence`` capped at ``t_end``."""
    if cadence <= 0:
        raise ValueError("cadence must be positive")
    resumed = start_index is not None
    k = start_index if resumed else math.ceil(t / cadence - 1e-9)
    while True:
        tk = min(k * cadence, t_end)
        # a resumed run has already recorded the snapshot time itself
        if tk < t or (resumed and tk <= t):
            if tk >= t_end:
                return
            k += 1
            continue
        yield k, tk
        if tk >= t_end:
            return
        k += 1


def run_until(
    state: FlowState,
    t_end: float,
    *,
    cadence: float,
    observer: Callable | None = None,
    early_stop: float = 0.0,
    start_index: int | None = None,
):
    """Drive the flow to ``t_end``, handing read-only snapshots to ``observer``.

    The observer is called as ``observer(snapshot, index)`` at each recording
    time and may return a record with an ``einstein_residual`` attribute; the
    run stops early once that drops below ``early_stop``. Returns the final
    state and the list of records.
    """
    records = []
    if t_end < state.t:
        return state, records
    for k, tk in record_times(state.t, t_end, cadence, start_index):
        advance_to(state, tk)
        if observer is None:
            continue
        rec = observer(state.copy(readonly=True), k)
        if rec is None:
            continue
        records.append(rec)
        if early_stop > 0 and rec.einstein_residual < early_stop:
            break
    return state, records
