"""Orchestration of runs, resumes and refinement studies.

All artifacts of a run live in one output directory:

* ``config.echo``: the parsed configuration, re-serialised
* ``diagnostics.csv`` and ``diagnostics_aux.csv``: one row per recording time
* ``snapshot_<t>.state``: bit-exact flow state for resuming
* ``verdict.txt``: one line per criterion
* ``plots/*.svg``: optional charts
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics as dg
from . import flow, radial
from . import snapshot as snap
from .plots import write_plots

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICS = 4

MIN_ORDER = 1.8
DEGENERATE = 1e-9


class RunFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunResult:
    code: int
    records: list
    report: dg.VerdictReport | None
    state: flow.FlowState | None
    kappa: float = math.nan
    B: float = math.nan


def build_family(cfg: cfgmod.RunConfig) -> radial.RadialPotential:
    try:
        return radial.make_family(cfg)
    except ValueError as exc:
        raise RunFailure(EXIT_CONFIG, f"invalid initial metric: {exc}") from exc


def measure_hypothesis(cfg, u) -> radial.HypothesisConstants:
    grid = radial.default_sample_grid(cfg.s_max, cfg.sample_count)
    return radial.hypothesis_constants(u, grid, budget=cfg.hsc_budget, seed=cfg.seed)


def hypothesis_gate(cfg, hc) -> None:
    if hc.valid:
        return
    msg = f"hypothesis H <= -kappa violated: kappa_est={hc.kappa!r}"
    if cfg.force:
        log.warning("%s; continuing because force is set", msg)
        return
    raise RunFailure(EXIT_HYPOTHESIS, msg + "; flow run refused without --force")


def write_tables(out: Path, records) -> None:
    snap.atomic_write(out / "diagnostics.csv", "\n".join([dg.CSV_HEADER] + [r.csv_row() for r in records]) + "\n")
    snap.atomic_write(
        out / "diagnostics_aux.csv", "\n".join([dg.AUX_HEADER] + [r.aux_row() for r in records]) + "\n"
    )


def read_tables(out: Path) -> list[dg.DiagnosticsRecord]:
    main = (out / "diagnostics.csv").read_text(encoding="utf-8")
    aux_path = out / "diagnostics_aux.csv"
    aux = aux_path.read_text(encoding="utf-8") if aux_path.exists() else None
    return dg.parse_records(main, aux)


class _Recorder:
    """Observer that feeds the monitor and writes tables and snapshots as it goes."""

    def __init__(self, cfg, out: Path, monitor: dg.Monitor, config_text: str, records):
        self.cfg = cfg
        self.out = out
        self.monitor = monitor
        self.config_text = config_text
        self.records = list(records)
        self.last_index = None
        self.last_state = None

    def snapshot(self, state, index) -> None:
        history = [(h.t, np.array(h.phi)) for h, _ in self.monitor.history[:-1]]
        snap.write(
            self.out,
            snap.Snapshot(self.config_text, state.t, index, state.steps, state.last_dt, np.array(state.phi), history),
        )

    def __call__(self, state, index):
        rec = self.monitor(state, index)
        self.records.append(rec)
        self.last_index, self.last_state = index, state
        if index % self.cfg.snapshot_every == 0:
            self.snapshot(state, index)
            write_tables(self.out, self.records)
        return rec


def _drive(cfg, out: Path, state, monitor, config_text, records, start_index, hc) -> RunResult:
    rec = _Recorder(cfg, out, monitor, config_text, records)
    code = EXIT_OK
    try:
        state, _ = flow.run_until(
            state, cfg.T_end, cadence=cfg.cadence, observer=rec, early_stop=cfg.early_stop, start_index=start_index
        )
    except (flow.PositivityError, flow.NonFiniteError) as exc:
        log.error("flow failed: %s", exc)
        code = EXIT_NUMERICS
    if rec.last_state is not None and rec.last_index % cfg.snapshot_every != 0:
        rec.snapshot(rec.last_state, rec.last_index)
    write_tables(out, rec.records)
    report = dg.verdict(rec.records, hc.kappa, hc.B, cfg)
    if code == EXIT_NUMERICS:
        report.partial = True
    snap.atomic_write(out / "verdict.txt", report.text())
    if code == EXIT_OK and not report.passed:
        code = EXIT_VERDICT
    return RunResult(code, rec.records, report, state, hc.kappa, hc.B)


def prepare_output(out: Path, cfg) -> str:
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("snapshot_*.state"):
        old.unlink()
    text = cfgmod.serialize(cfg)
    snap.atomic_write(out / "config.echo", text)
    return text


def run(cfg: cfgmod.RunConfig, out=None, *, svg: bool = False) -> RunResult:
    """Build the family, check the hypothesis, integrate and judge."""
    out = Path(out if out is not None else cfg.out)
    config_text = prepare_output(out, cfg)
    u = build_family(cfg)
    hc = measure_hypothesis(cfg, u)
    log.info("kappa_est=%r B_est=%r", hc.kappa, hc.B)
    try:
        hypothesis_gate(cfg, hc)
    except RunFailure:
        report = dg.verdict([], hc.kappa, hc.B, cfg)
        snap.atomic_write(out / "verdict.txt", report.text())
        raise
    state = flow.init_flow(u, cfg.N, cfg.s_max, sigma=cfg.sigma)
    monitor = dg.Monitor(state, hc.kappa)
    result = _drive(cfg, out, state, monitor, config_text, [], None, hc)
    if svg:
        write_plots(result.records, out / "plots")
    return result


def resume(out, cfg: cfgmod.RunConfig | None = None, *, svg: bool = False) -> RunResult:
    """Continue a run from its latest snapshot.

    Records up to the snapshot are taken from the existing tables; the rest of
    the trajectory is recomputed and is bit-identical to an uninterrupted run.
    """
    out = Path(out)
    try:
        echo = (out / "config.echo").read_text(encoding="utf-8")
    except OSError as exc:
        raise RunFailure(EXIT_CONFIG, f"no config.echo in {out}") from exc
    cfg = cfg or cfgmod.parse(echo)
    config_text = cfgmod.serialize(cfg)
    if config_text != echo:
        snap.atomic_write(out / "config.echo", config_text)
    path = snap.latest(out)
    if path is None:
        raise RunFailure(EXIT_CONFIG, f"no snapshot to resume from in {out}")
    s = snap.read(path)
    u = build_family(cfg)
    hc = measure_hypothesis(cfg, u)
    hypothesis_gate(cfg, hc)
    base = flow.init_flow(u, cfg.N, cfg.s_max, sigma=cfg.sigma)
    if s.phi.size != base.phi.size:
        raise RunFailure(EXIT_CONFIG, "snapshot grid does not match the config")
    monitor = dg.Monitor(base, hc.kappa)
    state = base.with_phi(s.phi, s.t)
    state.steps, state.last_dt = s.steps, s.last_dt
    try:
        monitor.prime([base.with_phi(phi, t) for t, phi in s.history] + [state])
    except (flow.PositivityError, flow.NonFiniteError) as exc:
        raise RunFailure(EXIT_NUMERICS, f"snapshot {path.name} is not a valid state: {exc}") from exc
    records = [r for r in read_tables(out) if r.t <= s.t]
    log.info("resuming from %s at t=%r", path.name, s.t)
    result = _drive(cfg, out, state, monitor, config_text, records, s.index + 1, hc)
    if svg:
        write_plots(result.records, out / "plots")
    return result


# refinement study -----------------------------------------------------------


@dataclass
class RungResult:
    N: int
    max_phi: float
    heat_residual: float
    einstein_residual: float
    christoffel_diff: float
    C: float


def run_rung(cfg, u, N: int, t_probe: float, delta: float, stride: int = 1) -> RungResult:
    """Integrate on ``N`` nodes through ``t_probe + delta`` and sample the probes.

    ``max_phi`` is taken over every ``stride``-th node, so that all rungs of a
    ladder sample the potential at the same points of the coarsest grid.
    """
    state = flow.init_flow(u, N, cfg.s_max, sigma=cfg.sigma)
    ref = state.copy(readonly=True)
    snaps = []
    for t in (t_probe - delta, t_probe, t_probe + delta):
        flow.advance_to(state, t)
        snaps.append(state.copy(readonly=True))
    mid = snaps[1]
    lo, hi = dg.equivalence_ratios(mid)
    return RungResult(
        N,
        float(np.abs(mid.phi[::stride]).max()),
        dg.heat_identity_residual(snaps),
        dg.einstein_residual(mid),
        dg.christoffel_diff_fast(mid, ref),
        max(hi, 1.0 / lo),
    )


def observed_order(values, *, richardson: bool) -> tuple[float, bool]:
    """Observed order on a ladder with refinement ratio 2.

    With ``richardson`` the errors are successive differences of a converging
    quantity (three rungs give one order); otherwise the values are residuals
    that should vanish and every consecutive pair gives an order. The smallest
    order is returned with a flag for the degenerate case, where everything
    is zero to rounding and the order is reported as exact.
    """
    v = [abs(float(x)) for x in values]
    if richardson:
        errs = [abs(float(a) - float(b)) for a, b in zip(values[:-1], values[1:])]
    else:
        errs = v
    if max(v) < DEGENERATE or max(errs) < DEGENERATE * 1e-3:
        return math.inf, True
    orders = [math.inf if b == 0 else math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    return min(orders), False


def refine(cfg, rungs: int = 3, *, t_probe: float = 1.0, delta0: float = 0.25, out=None):
    """Run the ladder ``N, 2N, 4N, ...`` and report observed orders."""
    if rungs < 3:
        raise RunFailure(EXIT_CONFIG, "a refinement ladder needs at least three rungs")
    u = build_family(cfg)
    hc = measure_hypothesis(cfg, u)
    hypothesis_gate(cfg, hc)
    results = []
    for k in range(rungs):
        N = cfg.N * 2**k
        # snapshot spacing shrinks with ds so the time-difference error keeps pace
        try:
            results.append(run_rung(cfg, u, N, t_probe, delta0 / 2**k, stride=2**k))
        except (flow.PositivityError, flow.NonFiniteError) as exc:
            raise RunFailure(EXIT_NUMERICS, f"rung N={N} failed: {exc}") from exc
    lines = ["N,max_phi,heat_identity_residual,einstein_residual,christoffel_diff,C"]
    for r in results:
        lines.append(
            ",".join(
                dg.format_float(x)
                for x in (r.N, r.max_phi, r.heat_residual, r.einstein_residual, r.christoffel_diff, r.C)
            )
        )
    orders = []
    for i in range(rungs - 2):
        window = results[i : i + 3]
        p_phi, d_phi = observed_order([r.max_phi for r in window], richardson=True)
        p_heat, d_heat = observed_order([r.heat_residual for r in window], richardson=False)
        orders.append(("max_phi", window[0].N, p_phi, d_phi))
        orders.append(("heat_identity_residual", window[0].N, p_heat, d_heat))
    ok = True
    for name, N, p, degenerate in orders:
        passed = degenerate or p >= MIN_ORDER
        ok &= passed
        lines.append(
            f"order quantity={name} base_N={N} observed={dg.format_float(p)} "
            f"degenerate={str(degenerate).lower()} pass={str(passed).lower()}"
        )
    text = "\n".join(lines) + "\n"
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        snap.atomic_write(Path(out) / "refine.txt", text)
    return (EXIT_OK if ok else EXIT_VERDICT), text, results, orders


# curvature oracle -----------------------------------------------------------


def oracle(cfg, s_values) -> tuple[int, str]:
    """Curvature report for the configured family at the given radii."""
    u = build_family(cfg)
    hc = measure_hypothesis(cfg, u)
    lines = [
        f"family={cfg.family} n={cfg.n} c={cfg.c!r} eps={cfg.eps!r}",
        f"kappa_est={dg.format_float(hc.kappa)} B_est={dg.format_float(hc.B)} valid={str(hc.valid).lower()}",
    ]
    hmax = []
    for s in s_values:
        if not 0 <= s < cfg.s_max:
            raise RunFailure(EXIT_CONFIG, f"sample point s={s!r} outside [0, s_max)")
        R = radial.curvature_tensor_at(u, s)
        g = radial.metric_at(u, s)
        top = radial.hl.hsc_sup_estimate(R, g, cfg.hsc_budget, seed=cfg.seed)
        bottom = -radial.hl.hsc_sup_estimate(-R, g, cfg.hsc_budget, seed=cfg.seed)
        fd = radial.fd_curvature_at(u, s)
        delta = float(np.abs(fd - R).max() / max(1.0, np.abs(R).max()))
        hmax.append(top)
        lines.append(
            f"s={dg.format_float(s)} hsc_max={dg.format_float(top)} hsc_min={dg.format_float(bottom)} "
            f"rm_norm={dg.format_float(radial.hl.curvature_norm(R, g))} fd_delta={dg.format_float(delta)}"
        )
    spread = max(hmax) - min(hmax) if hmax else 0.0
    lines.append(f"kappa_spread={dg.format_float(spread)}")
    return EXIT_OK, "\n".join(lines) + "\n"
