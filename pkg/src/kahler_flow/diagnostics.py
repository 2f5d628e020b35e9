"""Monitored quantities along the flow and the pass/fail verdict.

Everything here is a pure function of flow snapshots. :class:`Monitor` strings
them together into one :class:`DiagnosticsRecord` per recording time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np
from scipy.signal import savgol_coeffs

from . import hermitian as hl
from .flow import FlowState, background_pair, metric_pair, rhs_full
from .radial import curvature_from_jets, metric_jets

CSV_HEADER = (
    "t,sup_S,schwarz_threshold,sup_phidot,einstein_residual,lambda_ratio_min,"
    "lambda_ratio_max,christoffel_diff,boundary_influence,heat_identity_residual,dt"
)
AUX_HEADER = "t,volume_ratio_max,sandwich_ratio,curvature_norm"
ZERO_FLOOR = 1e-13


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    sup_S: float
    schwarz_threshold: float
    sup_phidot: float
    einstein_residual: float
    lambda_ratio_min: float
    lambda_ratio_max: float
    christoffel_diff: float
    boundary_influence: float
    heat_identity_residual: float
    dt: float
    # not part of the CSV schema; written to the auxiliary table
    volume_ratio_max: float = math.nan
    sandwich_ratio: float = math.nan
    curvature_norm: float = math.nan

    def csv_row(self) -> str:
        vals = [getattr(self, name) for name in CSV_HEADER.split(",")]
        return ",".join(format_float(v) for v in vals)

    def aux_row(self) -> str:
        vals = [getattr(self, name) for name in AUX_HEADER.split(",")]
        return ",".join(format_float(v) for v in vals)


def format_float(x: float) -> str:
    return "%.17g" % x


def parse_records(csv_text: str, aux_text: str | None = None) -> list[DiagnosticsRecord]:
    lines = [ln for ln in csv_text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("diagnostics CSV header does not match the expected schema")
    aux = {}
    if aux_text:
        aux_lines = [ln for ln in aux_text.splitlines() if ln.strip()]
        for ln in aux_lines[1:]:
            vals = [float(v) for v in ln.split(",")]
            aux[vals[0]] = vals[1:]
    names = CSV_HEADER.split(",")
    out = []
    for ln in lines[1:]:
        vals = dict(zip(names, (float(v) for v in ln.split(","))))
        extra = aux.get(vals["t"])
        if extra is not None:
            vals.update(zip(AUX_HEADER.split(",")[1:], extra))
        out.append(DiagnosticsRecord(**vals))
    return out


def schwarz_threshold(n: int, kappa: float) -> float:
    """``max(n, 2n / ((n+1) kappa))``; infinite without negative curvature."""
    if kappa <= 0:
        return math.inf
    return max(float(n), 2.0 * n / ((n + 1) * kappa))


def trace_S(state: FlowState):
    """``tr_{omega(t)} omega_0 = (n-1) a0/a + b0/b`` at the nodes ``0 .. N-1``."""
    a, b = metric_pair(state)
    S = (state.n - 1) * state.a0[:-1] / a[:-1] + state.b0[:-1] / b[:-1]
    return S, float(S.max())


def _d1(f, ds):
    """Central first difference at nodes ``1 .. N-1``, one-sided at node 0."""
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * ds)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * ds)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * ds)
    return out


def _sd1_d(f, s, ds):
    """``(s f')'`` in the same conservative form the flow uses; node 0 gets ``f'(0)``."""
    out = np.empty_like(f)
    sp = s[1:-1] + 0.5 * ds
    sm = s[1:-1] - 0.5 * ds
    out[1:-1] = (sp * (f[2:] - f[1:-1]) - sm * (f[1:-1] - f[:-2])) / ds**2
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * ds)
    dd = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / ds**2
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * ds) + s[-1] * dd
    return out


def laplacian(state: FlowState, f, pair=None) -> np.ndarray:
    """``Delta_{omega(t)} f = (n-1) f'/a + (s f')'/b`` with the flow's own stencils."""
    a, b = metric_pair(state) if pair is None else pair
    return (state.n - 1) * _d1(f, state.ds) / a + _sd1_d(f, state.s, state.ds) / b


def einstein_residual(state: FlowState, phidot=None) -> float:
    """Relative size of ``Ric(omega) + omega`` at the interior nodes.

    The log-volume of the current metric is ``F0 + phi + phidot`` (the flow
    equation itself), so its derivatives come from the closed-form background
    plus differences of ``phi + phidot``.
    """
    phidot = rhs_full(state) if phidot is None else phidot
    a, b = metric_pair(state)
    psi = state.phi + phidot
    dF = state.dF0 + _d1(psi, state.ds)
    sdF = state.sdF0 + _sd1_d(psi, state.s, state.ds)
    inner = slice(1, -1)
    r = np.maximum(np.abs(dF[inner] - a[inner]) / a[inner], np.abs(sdF[inner] - b[inner]) / b[inner])
    return float(r.max())


def equivalence_ratios(state: FlowState) -> tuple[float, float]:
    """Extreme eigenvalue ratios of ``omega(t)`` against ``omega_0`` over nodes ``0 .. N-1``."""
    a, b = metric_pair(state)
    ra = a[:-1] / state.a0[:-1]
    rb = b[:-1] / state.b0[:-1]
    if state.n == 1:
        return float(rb.min()), float(rb.max())
    return float(min(ra.min(), rb.min())), float(max(ra.max(), rb.max()))


def boundary_influence(state: FlowState, fraction: float = 0.1) -> float:
    start = int(math.ceil((1.0 - fraction) * state.N))
    return float(np.abs(state.phi[start:]).max())


def heat_source(state: FlowState, pair=None) -> np.ndarray:
    """``tr_{omega(t)}(omega_0 + Ric(omega_0))``."""
    a, b = metric_pair(state) if pair is None else pair
    return (state.n - 1) * (state.a0 - state.dF0) / a + (state.b0 - state.sdF0) / b


def heat_identity_residual(states: Sequence[FlowState], phidots: Sequence[np.ndarray] | None = None) -> float:
    """Residual of ``(d/dt - Delta)(e^t phidot) + tr(omega_0 + Ric(omega_0))`` at the middle snapshot.

    ``states`` are three consecutive snapshots at uniform spacing; the time
    derivative is the central difference across them.
    """
    if len(states) != 3:
        raise ValueError("need exactly three consecutive snapshots")
    t0, t1, t2 = (s.t for s in states)
    h = t1 - t0
    if h <= 0 or abs((t2 - t1) - h) > 1e-9 * max(1.0, abs(h)):
        raise ValueError("snapshots must be at a uniform cadence")
    if phidots is None:
        phidots = [rhs_full(s) for s in states]
    w = [math.exp(s.t) * p for s, p in zip(states, phidots)]
    mid = states[1]
    pair = metric_pair(mid)
    r = (w[2] - w[0]) / (t2 - t0) - laplacian(mid, w[1], pair) + heat_source(mid, pair)
    return float(np.abs(r[:-1]).max())


def _christoffel(state: FlowState, nodes):
    a, b = metric_pair(state)
    s = state.s
    u2 = (b - a) / np.where(s > 0, s, 1.0)
    du2 = _d1(b, state.ds)
    u3 = (du2 - 2 * u2) / np.where(s > 0, s, 1.0)
    out = []
    for i in nodes:
        z = np.zeros(state.n, dtype=complex)
        z[0] = math.sqrt(s[i])
        g, dg, _, _ = metric_jets(z, a[i], u2[i], u3[i], 0.0)
        ginv = np.linalg.inv(g).T
        out.append((g, ginv, np.einsum("ml,ikl->mik", ginv, dg)))
    return out


def christoffel_diff(state: FlowState, reference: FlowState) -> float:
    """``sup |Gamma(t) - Gamma_ref|^2_{g(t)}`` over the interior nodes."""
    if state.N != reference.N or state.ds != reference.ds:
        raise ValueError("states live on different grids")
    nodes = range(1, state.N)
    cur = _christoffel(state, nodes)
    ref = _christoffel(reference, nodes)
    best = 0.0
    for (g, ginv, gam), (_, _, gam_ref) in zip(cur, ref):
        T = gam - gam_ref
        val = np.einsum("mn,ij,kl,mik,njl->", g, ginv, ginv, T, T.conj()).real
        best = max(best, float(val))
    return best


def christoffel_diff_fast(state: FlowState, reference: FlowState) -> float:
    """Vectorised :func:`christoffel_diff`."""
    if state.N != reference.N or state.ds != reference.ds:
        raise ValueError("states live on different grids")
    n = state.n
    idx = np.arange(1, state.N)

    def gammas(st):
        a, b = metric_pair(st)
        s = st.s[idx]
        u2 = (b[idx] - a[idx]) / s
        u3 = (_d1(b, st.ds)[idx] - 2 * u2) / s
        z = np.zeros((idx.size, n))
        z[:, 0] = np.sqrt(s)
        d = np.eye(n)
        g = a[idx, None, None] * d + u2[:, None, None] * np.einsum("pk,pl->pkl", z, z)
        dg = u2[:, None, None, None] * (
            np.einsum("pi,kl->pikl", z, d) + np.einsum("pk,il->pikl", z, d)
        ) + u3[:, None, None, None] * np.einsum("pi,pk,pl->pikl", z, z, z)
        ginv = np.linalg.inv(g).transpose(0, 2, 1)
        return g, ginv, np.einsum("pml,pikl->pmik", ginv, dg)

    g, ginv, gam = gammas(state)
    _, _, gam_ref = gammas(reference)
    T = gam - gam_ref
    vals = np.einsum("pmn,pij,pkl,pmik,pnjl->p", g, ginv, ginv, T, T)
    return float(vals.max()) if vals.size else 0.0


def reconstructed_curvature_norm(state: FlowState, stride: int | None = None) -> float:
    """Sampled ``sup |Rm(omega(t))|`` from quintic fits of ``a = U'`` over 7-node windows."""
    a, _ = metric_pair(state)
    ds = state.ds
    N = state.N
    stride = stride or max(1, N // 32)
    coeffs = [savgol_coeffs(7, 5, deriv=k, delta=ds, use="dot") for k in range(4)]
    best = 0.0
    for i in range(3, N - 3, stride):
        window = a[i - 3 : i + 4]
        u1, u2, u3, u4 = (float(c @ window) for c in coeffs)
        z = np.zeros(state.n, dtype=complex)
        z[0] = math.sqrt(state.s[i])
        jets = metric_jets(z, u1, u2, u3, u4)
        R = hl.symmetrize_curvature(curvature_from_jets(*jets))
        best = max(best, hl.curvature_norm(R, jets[0]))
    return best


def volume_ratio_max(state: FlowState, phidot=None) -> float:
    """``sup omega(t)^n / omega_0^n = sup exp(phi + phidot)``."""
    phidot = rhs_full(state) if phidot is None else phidot
    return float(np.exp(state.phi[:-1] + phidot[:-1]).max())


def sandwich_ratio(state: FlowState, sup_S: float, phidot=None) -> float:
    """Largest eigenvalue ratio divided by ``(volume bound) * (trace bound)^(n-1)``; at most 1."""
    _, lam_max = equivalence_ratios(state)
    bound = hl.eigen_sandwich_bound(volume_ratio_max(state, phidot), sup_S, state.n)
    return lam_max / bound


class DecayFit(NamedTuple):
    rate: float
    amplitude: float
    exact_zero: bool
    samples: int


def phidot_decay_fit(times, sup_phidot, window=(2.0, 8.0), *, zero_floor: float = ZERO_FLOOR) -> DecayFit:
    """Fit ``sup|phidot| ~ A t e^{-r t}`` over ``window`` by least squares in log space."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(sup_phidot, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    t, y = t[sel], y[sel]
    if t.size < 5:
        raise ValueError(f"need at least 5 records in the fit window, have {t.size}")
    if np.all(y <= zero_floor):
        return DecayFit(math.inf, 0.0, True, int(t.size))
    if np.any(y <= 0):
        raise ValueError("sup|phidot| vanishes inside the window")
    slope, intercept = np.polyfit(t, np.log(y) - np.log(t), 1)
    return DecayFit(float(-slope), float(math.exp(intercept)), False, int(t.size))


class Monitor:
    """Observer for :func:`kahler_flow.flow.run_until` that produces diagnostics records."""

    def __init__(self, reference: FlowState, kappa: float, *, curvature_stride: int | None = None):
        self.reference = reference.copy(readonly=True)
        self.kappa = kappa
        self.threshold = schwarz_threshold(reference.n, kappa)
        self.curvature_stride = curvature_stride
        self.history: list[tuple[FlowState, np.ndarray]] = []

    def prime(self, states: Sequence[FlowState]):
        """Restore the snapshots preceding a resumed run."""
        self.history = [(s.copy(readonly=True), rhs_full(s)) for s in states[-2:]]

    def __call__(self, state: FlowState, index: int | None = None) -> DiagnosticsRecord:
        phidot = rhs_full(state)
        _, sup_S = trace_S(state)
        lo, hi = equivalence_ratios(state)
        heat = math.nan
        if len(self.history) == 2:
            states = [h[0] for h in self.history] + [state]
            try:
                heat = heat_identity_residual(states, [h[1] for h in self.history] + [phidot])
            except ValueError:
                heat = math.nan
        rec = DiagnosticsRecord(
            t=state.t,
            sup_S=sup_S,
            schwarz_threshold=self.threshold,
            sup_phidot=float(np.abs(phidot[:-1]).max()),
            einstein_residual=einstein_residual(state, phidot),
            lambda_ratio_min=lo,
            lambda_ratio_max=hi,
            christoffel_diff=christoffel_diff_fast(state, self.reference),
            boundary_influence=boundary_influence(state),
            heat_identity_residual=heat,
            dt=state.last_dt,
            volume_ratio_max=volume_ratio_max(state, phidot),
            sandwich_ratio=sandwich_ratio(state, sup_S, phidot),
            curvature_norm=reconstructed_curvature_norm(state, self.curvature_stride),
        )
        self.history = (self.history + [(state, phidot)])[-2:]
        return rec


class Criterion(NamedTuple):
    name: str
    passed: bool
    measured: float
    threshold: float

    def line(self) -> str:
        return (
            f"criterion={self.name} pass={str(self.passed).lower()} "
            f"measured={format_float(self.measured)} threshold={format_float(self.threshold)}"
        )


@dataclass
class VerdictReport:
    criteria: list[Criterion]
    kappa: float
    B: float
    partial: bool = False

    @property
    def passed(self) -> bool:
        return not self.partial and all(c.passed for c in self.criteria)

    def get(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def text(self) -> str:
        head = [
            f"kappa_est={format_float(self.kappa)}",
            f"B_est={format_float(self.B)}",
            f"partial={str(self.partial).lower()}",
        ]
        return "\n".join(head + [c.line() for c in self.criteria] + [f"overall pass={str(self.passed).lower()}"]) + "\n"


def verdict(records: Sequence[DiagnosticsRecord], kappa: float, B: float, config) -> VerdictReport:
    """Aggregate a completed run into per-criterion pass/fail lines."""
    crit = [Criterion("hypothesis_negative_hsc", kappa > 0, kappa, 0.0)]
    if not records:
        return VerdictReport(crit, kappa, B, partial=True)
    recs = list(records)
    n = config.n
    partial = recs[-1].t < config.T_end and recs[-1].einstein_residual >= config.early_stop

    thr = schwarz_threshold(n, kappa) + config.schwarz_slack
    sup_S = max(r.sup_S for r in recs)
    crit.append(Criterion("schwarz_bound", sup_S <= thr, sup_S, thr))

    lo, hi = config.fit_window
    times = [r.t for r in recs]
    phidot = [r.sup_phidot for r in recs]
    try:
        fit = phidot_decay_fit(times, phidot, (lo, hi))
        crit.append(Criterion("phidot_decay_rate", fit.rate >= config.min_decay_rate, fit.rate, config.min_decay_rate))
    except ValueError:
        crit.append(Criterion("phidot_decay_rate", False, math.nan, config.min_decay_rate))

    C = max(max(r.lambda_ratio_max, 1.0 / r.lambda_ratio_min) for r in recs)
    crit.append(Criterion("metric_equivalence_C", math.isfinite(C), C, math.inf))
    sw = [r.sandwich_ratio for r in recs if math.isfinite(r.sandwich_ratio)]
    sw_max = max(sw) if sw else math.nan
    crit.append(Criterion("eigen_sandwich", bool(sw) and sw_max <= 1.0 + 1e-12, sw_max, 1.0))

    res = recs[-1].einstein_residual
    crit.append(Criterion("einstein_limit", res < config.einstein_target, res, config.einstein_target))

    rm = [r.curvature_norm for r in recs if math.isfinite(r.curvature_norm)]
    rm_max = max(rm) if rm else math.nan
    rm_thr = config.curvature_factor * B
    crit.append(Criterion("curvature_bounded", bool(rm) and rm_max <= rm_thr, rm_max, rm_thr))
    return VerdictReport(crit, kappa, B, partial=partial)


def record_dict(rec: DiagnosticsRecord) -> dict:
    return asdict(rec)


def record_fields() -> list[str]:
    return [f.name for f in fields(DiagnosticsRecord)]
