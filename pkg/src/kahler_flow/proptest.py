"""Randomised checks of the pointwise inequalities behind the trace estimate.

Each suite draws instances from a seeded generator, counts violations and
reports the worst normalised violation. A failing instance is kept so the CLI
can serialise it for replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hl

SUITES = ("royden", "yau", "sandwich", "symmetry")
TOL = 1e-10
EQUALITY_TOL = 1e-12


@dataclass
class SuiteResult:
    suite: str
    n: int
    samples: int
    failures: int = 0
    max_violation: float = 0.0
    first_failure: dict | None = None
    equality_checks: int = 0
    notes: list[str] = field(default_factory=list)

    def line(self) -> str:
        return (
            f"suite={self.suite} n={self.n} samples={self.samples} "
            f"failures={self.failures} max_violation={self.max_violation:.17g}"
        )

    def record(self, violation: float, instance: dict | None = None):
        self.max_violation = max(self.max_violation, violation)
        if violation > 0:
            self.failures += 1
            if self.first_failure is None and instance is not None:
                self.first_failure = instance


def _rng(seed: int, suite: str, n: int) -> np.random.Generator:
    return np.random.default_rng([seed, SUITES.index(suite), n])


def random_metric(rng, n: int) -> np.ndarray:
    """Positive Hermitian matrix with eigenvalues spread over a few decades."""
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(X)
    lam = np.exp(rng.uniform(-2.0, 2.0, n))
    g = (Q * lam) @ Q.conj().T
    return 0.5 * (g + g.conj().T)


def random_curvature(rng, n: int) -> np.ndarray:
    R = rng.standard_normal((n,) * 4) + 1j * rng.standard_normal((n,) * 4)
    return hl.symmetrize_curvature(R)


def random_jet(rng, n: int) -> np.ndarray:
    B = rng.standard_normal((n,) * 3) + 1j * rng.standard_normal((n,) * 3)
    return 0.5 * (B + B.transpose(1, 0, 2))


def _encode(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return {"re": x.real.tolist(), "im": x.imag.tolist()}
    return x.tolist()


def decode(obj):
    if isinstance(obj, dict) and set(obj) == {"re", "im"}:
        return np.asarray(obj["re"]) + 1j * np.asarray(obj["im"])
    return np.asarray(obj)


def royden_suite(n: int, samples: int, seed: int) -> SuiteResult:
    """Constant holomorphic sectional curvature ``-kappa'`` with ``kappa' >= kappa`` against random metrics."""
    rng = _rng(seed, "royden", n)
    res = SuiteResult("royden", n, samples)
    for _ in range(samples):
        g = random_metric(rng, n)
        gh = random_metric(rng, n)
        kappa = float(np.exp(rng.uniform(-2.0, 2.0)))
        kappa_hat = kappa * (1.0 + rng.exponential(0.5)) if rng.random() < 0.5 else kappa
        R = hl.constant_hsc_curvature(gh, kappa_hat)
        lhs, rhs, _ = hl.royden_check(R, g, gh, kappa, rtol=TOL)
        viol = (lhs - rhs) / (1.0 + abs(rhs)) - TOL
        res.record(max(viol, 0.0), {"g": _encode(g), "g_hat": _encode(gh), "R_hat": _encode(R), "kappa": kappa})
        # equality case: g proportional to g_hat with the sharp constant
        lam = float(np.exp(rng.uniform(-1.0, 1.0)))
        lhs, rhs, _ = hl.royden_check(hl.constant_hsc_curvature(gh, kappa), lam * gh, gh, kappa, rtol=TOL)
        res.equality_checks += 1
        gap = abs(lhs - rhs) / (1.0 + abs(rhs)) - EQUALITY_TOL
        res.record(max(gap, 0.0), {"g": _encode(lam * gh), "g_hat": _encode(gh), "kappa": kappa, "equality": True})
    return res


def equality_jet(g, coeffs) -> np.ndarray:
    """``A[k, a, b] = c_k g_{a bbar}``, for which the gradient estimate is sharp."""
    return np.einsum("k,ab->kab", np.asarray(coeffs, dtype=complex), g)


def yau_suite(n: int, samples: int, seed: int) -> SuiteResult:
    rng = _rng(seed, "yau", n)
    res = SuiteResult("yau", n, samples)
    for _ in range(samples):
        g = random_metric(rng, n)
        gh = random_metric(rng, n)
        A = random_jet(rng, n)
        lhs, rhs = hl.yau_identity_terms(g, gh, A)
        viol = (lhs - rhs) / (1.0 + abs(rhs)) - TOL
        res.record(max(viol, 0.0), {"g": _encode(g), "g_hat": _encode(gh), "A": _encode(A)})
    if samples:
        g = random_metric(rng, n)
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lhs, rhs = hl.yau_identity_terms(g, g, equality_jet(g, c), check=False)
        res.equality_checks += 1
        gap = abs(lhs - rhs) / (1.0 + abs(rhs)) - EQUALITY_TOL
        res.record(max(gap, 0.0), {"g": _encode(g), "coeffs": _encode(c), "equality": True})
    return res


def sandwich_suite(n: int, samples: int, seed: int) -> SuiteResult:
    """Every eigenvalue is bounded by ``det_bound * inverse_bound**(n-1)``."""
    rng = _rng(seed, "sandwich", n)
    res = SuiteResult("sandwich", n, samples)
    for _ in range(samples):
        lam = np.exp(rng.uniform(-3.0, 3.0, n))
        slack = float(np.exp(rng.uniform(0.0, 1.0)))
        det_bound = float(np.prod(lam)) * slack
        inv_bound = float(np.sum(1.0 / lam)) if rng.random() < 0.5 else float(np.max(1.0 / lam))
        bound = hl.eigen_sandwich_bound(det_bound, inv_bound, n)
        viol = (float(lam.max()) - bound) / bound - TOL
        res.record(max(viol, 0.0), {"lam": _encode(lam), "det_bound": det_bound, "inverse_bound": inv_bound})
    return res


def _break_symmetry(rng, R):
    """Bump one entry by a complex amount; either its partner under conjugation
    is left unchanged or the entry must be real, so the tensor is never valid."""
    n = R.shape[0]
    idx = tuple(int(i) for i in rng.integers(0, n, 4))
    bad = R.copy()
    bad[idx] += 0.5 + 0.5j
    return bad


def symmetry_suite(n: int, samples: int, seed: int, *, plant: bool = False) -> SuiteResult:
    """Symmetrised tensors are accepted and perturbed ones rejected.

    With ``plant=True`` one broken tensor is slipped into the stream of valid
    ones, which must register as a failure.
    """
    rng = _rng(seed, "symmetry", n)
    res = SuiteResult("symmetry", n, samples)
    for i in range(samples):
        R = random_curvature(rng, n)
        if plant and i == 0:
            R = _break_symmetry(rng, R)
        try:
            hl.check_curvature(R)
        except hl.TensorSymmetryError:
            res.record(hl.symmetry_defect(R), {"R": _encode(R), "expected": "accepted"})
        bad = _break_symmetry(rng, random_curvature(rng, n))
        try:
            hl.check_curvature(bad)
            res.record(1.0, {"R": _encode(bad), "expected": "rejected"})
        except hl.TensorSymmetryError:
            pass
    return res


def run_suites(seed: int, samples: int, dims=(1, 2, 3), suites=SUITES, *, plant: bool = False) -> list[SuiteResult]:
    out = []
    for suite in suites:
        for n in dims:
            if suite == "royden":
                out.append(royden_suite(n, samples, seed))
            elif suite == "yau":
                out.append(yau_suite(n, samples, seed))
            elif suite == "sandwich":
                out.append(sandwich_suite(n, samples, seed))
            elif suite == "symmetry":
                out.append(symmetry_suite(n, samples, seed, plant=plant))
            else:
                raise ValueError(f"unknown suite {suite!r}")
    return out


def replay_document(results: list[SuiteResult], seed: int, samples: int) -> str:
    failed = [r for r in results if r.first_failure is not None]
    doc = {
        "seed": seed,
        "samples": samples,
        "failures": [{"suite": r.suite, "n": r.n, "instance": r.first_failure} for r in failed],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def replay(instance: dict, suite: str) -> bool:
    """Re-run one serialised instance; True when the property holds."""
    if suite == "royden":
        if instance.get("equality"):
            g, gh = decode(instance["g"]), decode(instance["g_hat"])
            lhs, rhs, _ = hl.royden_check(hl.constant_hsc_curvature(gh, instance["kappa"]), g, gh, instance["kappa"])
            return abs(lhs - rhs) <= EQUALITY_TOL * (1 + abs(rhs))
        return hl.royden_check(
            decode(instance["R_hat"]), decode(instance["g"]), decode(instance["g_hat"]), instance["kappa"], rtol=TOL
        ).holds
    if suite == "yau":
        g = decode(instance["g"])
        if instance.get("equality"):
            lhs, rhs = hl.yau_identity_terms(g, g, equality_jet(g, decode(instance["coeffs"])), check=False)
            return abs(lhs - rhs) <= EQUALITY_TOL * (1 + abs(rhs))
        lhs, rhs = hl.yau_identity_terms(g, decode(instance["g_hat"]), decode(instance["A"]))
        return lhs <= rhs + TOL * (1 + abs(rhs))
    if suite == "sandwich":
        lam = decode(instance["lam"])
        return lam.max() <= hl.eigen_sandwich_bound(instance["det_bound"], instance["inverse_bound"], lam.size) * (1 + TOL)
    if suite == "symmetry":
        try:
            hl.check_curvature(decode(instance["R"]))
            accepted = True
        except hl.TensorSymmetryError:
            accepted = False
        return accepted == (instance["expected"] == "accepted")
    raise ValueError(f"unknown suite {suite!r}")
