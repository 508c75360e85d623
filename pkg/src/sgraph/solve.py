"""SDP backends and the interior/exterior sweeps that build an SG approximation."""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .lmi import FEAS_EPS, PSD_EPS, Certificate, LmiProblem, build_problem, disk_family, halfplane_family
from .model import StateSpace, SweepConfig, SystemModel, lambda_grid, lti_parts, system_hash
from .regions import RegionSpec, SGApproximation

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, TRIVIAL, FAILED = "optimal", "infeasible", "trivial", "numerical_failure"
TOL_LADDER = (1e-10, 1e-9, 1e-8, 1e-7)
TRIVIAL_RTOL = 1e-5
DEFAULT_GRID_SIZE = 81


class SweepError(RuntimeError):
    pass


class BackendResult(NamedTuple):
    status: str          # optimal | infeasible | numerical_failure
    x: np.ndarray | None
    objective: float
    info: str = ""


@dataclass(frozen=True)
class CvxoptBackend:
    """Primal-dual interior-point solve with cvxopt, retried on a tolerance ladder."""

    tolerances: tuple = TOL_LADDER
    maxiters: int = 200

    name = "cvxopt"

    def solve(self, prob: LmiProblem) -> BackendResult:
        from cvxopt import matrix, solvers

        c = matrix(prob.objective())
        Gs = [matrix(b.coeffs.reshape(prob.nvar, -1).T.copy()) for b in prob.blocks]
        hs = [matrix(-b.const) for b in prob.blocks]
        G, h = prob.all_linear()
        lin = {} if G.shape[0] == 0 else {"Gl": matrix(G), "hl": matrix(h)}
        notes = []
        for tol in self.tolerances:
            opts = {"show_progress": False, "abstol": tol, "reltol": tol,
                    "feastol": tol, "maxiters": self.maxiters}
            try:
                sol = solvers.sdp(c, Gs=Gs, hs=hs, options=opts, **lin)
            except (ArithmeticError, ValueError) as exc:
                notes.append(f"tol={tol:g}: {type(exc).__name__}")
                continue
            status = sol["status"]
            if status == "primal infeasible":
                return BackendResult(INFEASIBLE, None, math.nan, f"tol={tol:g}")
            if status == "dual infeasible":
                return BackendResult(FAILED, None, math.nan, "unbounded objective")
            x = np.array(sol["x"]).ravel()
            if status == "optimal" or prob.max_eig(x) <= FEAS_EPS:
                return BackendResult(OPTIMAL, x, float(x[0]), f"tol={tol:g} status={status}")
            notes.append(f"tol={tol:g}: {status}")
        return BackendResult(FAILED, None, math.nan, "; ".join(notes))


@dataclass(frozen=True)
class BisectionBackend:
    """Bisection on the scalar with a feasibility SDP per step (cvxpy).

    Independent of the cvxopt path: it never optimizes the scalar directly,
    so agreement of the two backends cross-checks optima.
    """

    iterations: int = 30
    solver: str = "CLARABEL"
    feas_tol: float = 1e-9

    name = "bisection"

    def _feasibility(self, prob: LmiProblem):
        import cvxpy as cp

        nrest = prob.nvar - 1
        s = cp.Parameter()
        y = cp.Variable(nrest) if nrest else None
        t = cp.Variable()
        cons = [t >= -1.0]
        for b in prob.blocks:
            # identically zero rows pin the margin t at 0; drop them
            live = np.any(b.const != 0, axis=1) | np.any(b.coeffs != 0, axis=(0, 2))
            if not live.any():
                continue
            const = b.const[np.ix_(live, live)]
            coeffs = b.coeffs[:, live][:, :, live]
            k = const.shape[0]
            expr = const + s * coeffs[0]
            if nrest:
                expr = expr + sum(y[i] * coeffs[i + 1] for i in range(nrest)
                                  if np.any(coeffs[i + 1]))
            expr = (expr + expr.T) / 2 if nrest else expr
            cons.append(expr << t * np.eye(k))
        if prob.G.shape[0] and nrest:
            cons.append(prob.G[:, 1:] @ y <= prob.h - s * prob.G[:, 0])
        return cp.Problem(cp.Minimize(t), cons), s, y, t

    def solve(self, prob: LmiProblem) -> BackendResult:
        lo, hi = prob.scalar_bounds
        if not (math.isfinite(lo) and math.isfinite(hi)):
            return BackendResult(FAILED, None, math.nan, "bisection needs finite bounds")
        problem, s, y, t = self._feasibility(prob)

        def check(value):
            s.value = value
            try:
                problem.solve(solver=self.solver)
            except Exception as exc:  # solver errors count as infeasible
                log.debug("bisection step failed: %s", exc)
                return None
            if t.value is None or t.value > self.feas_tol:
                return None
            rest = y.value if y is not None else np.zeros(0)
            return np.concatenate([[value], rest])

        maximize = prob.sense == "max"
        # feasible side of the bracket first, then the optimistic end
        best = check(lo if maximize else hi)
        if best is None:
            return BackendResult(INFEASIBLE, None, math.nan, "bracket end infeasible")
        at_end = check(hi if maximize else lo)
        if at_end is not None:
            return BackendResult(OPTIMAL, at_end, float(at_end[0]), "bracket end")
        a, b = lo, hi
        for _ in range(self.iterations):
            mid = 0.5 * (a + b)
            x = check(mid)
            if x is not None:
                best = x
            if (x is not None) == maximize:
                a = mid
            else:
                b = mid
        return BackendResult(OPTIMAL, best, float(best[0]), f"bracket [{a:.3g}, {b:.3g}]")


@dataclass
class SweepEntry:
    lambda_c: float
    sigma: int
    status: str
    rho_opt: float = math.nan
    region: RegionSpec | None = None
    certificate: Certificate | None = None
    cap_hit: bool = False
    seconds: float = 0.0
    message: str = ""

    @property
    def r(self) -> float:
        return self.region.r if self.region is not None and self.region.is_disk else math.nan

    def to_dict(self) -> dict:
        return {"lambda_c": self.lambda_c, "sigma": self.sigma, "status": self.status,
                "rho_opt": None if math.isnan(self.rho_opt) else self.rho_opt,
                "r": None if math.isnan(self.r) else self.r,
                "region": self.region.to_dict() if self.region else None,
                "cap_hit": self.cap_hit, "seconds": round(self.seconds, 6),
                "max_constraint_eig": self.certificate.max_constraint_eig if self.certificate else None,
                "message": self.message}


def state_gain(sys: SystemModel) -> float:
    """Peak gain from input to state over the LTI parts (used for the soundness margin)."""
    worst = 0.0
    for ss in lti_parts(sys):
        if ss.m == 0:
            continue
        if not ss.is_hurwitz():
            return 1e3
        omega = np.concatenate([[0.0], np.logspace(-4, 4, 400)])
        I = np.eye(ss.m)
        for w in omega:
            G = np.linalg.solve(1j * w * I - ss.A, ss.B)
            worst = max(worst, np.linalg.norm(G, 2))
    return float(worst)


def _margin(max_eig: float, kappa: float) -> float:
    """Scalar slack that makes a certificate with residual ``max_eig`` sound."""
    return max(max_eig, 0.0) * (1.0 + kappa * kappa) + 1e-14


def _run(prob: LmiProblem, backend):
    t0 = time.perf_counter()
    res = backend.solve(prob)
    return res, time.perf_counter() - t0


def _entry(prob: LmiProblem, res: BackendResult, seconds: float, kappa: float,
           trivial_r: float) -> SweepEntry:
    fam = prob.family
    lam = fam.lambda_c if fam.kind != "halfplane" else math.nan
    sig = fam.sigma if fam.kind != "halfplane" else fam.sign
    if res.status != OPTIMAL:
        return SweepEntry(lam, sig, res.status, seconds=seconds, message=res.info)
    cert = prob.certificate(res.x)
    if cert.max_constraint_eig > FEAS_EPS:
        return SweepEntry(lam, sig, FAILED, res.objective, certificate=cert, seconds=seconds,
                          message=f"a posteriori residual {cert.max_constraint_eig:.3g}")
    if prob.hard and cert.P.size and np.linalg.eigvalsh(cert.P).min() < -PSD_EPS:
        return SweepEntry(lam, sig, FAILED, res.objective, certificate=cert, seconds=seconds,
                          message="P not positive semidefinite")
    delta = _margin(cert.max_constraint_eig, kappa)
    rho = float(res.objective)
    cap_hit = math.isfinite(prob.scalar_bounds[1]) and rho >= prob.scalar_bounds[1] * (1 - 1e-6)
    if fam.kind == "disk_in":
        region = RegionSpec.disk_in(lam, math.sqrt(max(rho, 0.0) + delta))
    elif fam.kind == "disk_out":
        r = math.sqrt(max(rho - delta, 0.0))
        if r <= trivial_r:
            return SweepEntry(lam, sig, TRIVIAL, rho, certificate=cert, seconds=seconds,
                              message="exterior radius numerically zero")
        region = RegionSpec.disk_out(lam, r)
    else:
        region = RegionSpec.halfplane(fam.sign, rho + delta)
    return SweepEntry(lam, sig, OPTIMAL, rho, region, cert, cap_hit, seconds, res.info)


def _solve_family(sys, family, hard, backend, cap=math.inf, kappa=None, trivial_r=TRIVIAL_RTOL):
    prob = build_problem(sys, family, hard)
    if family.kind == "disk_out":
        prob = prob.with_bounds(0.0, cap)
    elif family.kind == "disk_in" and math.isfinite(cap):
        prob = prob.with_bounds(0.0, cap)
    res, secs = _run(prob, backend)
    kappa = state_gain(sys) if kappa is None else kappa
    return _entry(prob, res, secs, kappa, trivial_r)


def solve_interior(sys: SystemModel, lambda_c: float, hard: bool = False,
                   backend=None, **kw) -> SweepEntry:
    """Smallest disk centred at ``lambda_c`` certified to contain the SG."""
    if not math.isfinite(lambda_c):
        raise ValueError("lambda_c must be finite")
    return _solve_family(sys, disk_family(-1, lambda_c), hard, backend or CvxoptBackend(), **kw)


def solve_exterior(sys: SystemModel, lambda_c: float, hard: bool = False,
                   backend=None, cap: float = math.inf, **kw) -> SweepEntry:
    """Largest disk centred at ``lambda_c`` certified to avoid the SG (capped)."""
    if not math.isfinite(lambda_c):
        raise ValueError("lambda_c must be finite")
    if not math.isfinite(cap) and isinstance(backend, BisectionBackend):
        raise ValueError("the bisection backend needs a finite cap")
    return _solve_family(sys, disk_family(1, lambda_c), hard, backend or CvxoptBackend(),
                         cap=cap, **kw)


def solve_halfplane(sys: SystemModel, sign: int, hard: bool = False, backend=None, **kw) -> SweepEntry:
    """Tightest half-plane ``2 sign Re z + c >= 0`` containing the SG."""
    return _solve_family(sys, halfplane_family(sign), hard, backend or CvxoptBackend(), **kw)


def default_config(gamma0: float, hard: bool = False) -> SweepConfig:
    n = DEFAULT_GRID_SIZE
    li = np.linspace(-2 * gamma0, 2 * gamma0, n)
    le = np.linspace(-5 * gamma0, 5 * gamma0, n)
    return SweepConfig(tuple(np.round(li, 12)), tuple(np.round(le, 12)), hard)


@dataclass
class SweepResult:
    config: SweepConfig
    gamma0: float
    rho_cap: float
    entries: list
    approximation: SGApproximation
    backend: str = "cvxopt"
    seconds: float = 0.0
    warnings: list = field(default_factory=list)

    def interior(self) -> list:
        return [e for e in self.entries if e.sigma == -1 and not math.isnan(e.lambda_c)]

    def exterior(self) -> list:
        return [e for e in self.entries if e.sigma == 1 and not math.isnan(e.lambda_c)]

    def counts(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out[e.status] = out.get(e.status, 0) + 1
        return out

    def report(self) -> dict:
        return {"config": self.config.to_dict(), "gamma0": self.gamma0, "rho_cap": self.rho_cap,
                "backend": self.backend, "seconds": round(self.seconds, 3),
                "counts": self.counts(), "warnings": self.warnings,
                "system_hash": self.approximation.system_hash,
                "entries": [e.to_dict() for e in self.entries]}


def _task(args):
    sys, family, hard, backend, cap, kappa, trivial_r = args
    return _solve_family(sys, family, hard, backend, cap, kappa, trivial_r)


def sweep(sys: SystemModel, cfg: SweepConfig | None = None, backend=None,
          workers: int = 1, hard: bool | None = None) -> SweepResult:
    """Solve every interior and exterior problem of the grids and intersect the regions."""
    backend = backend or CvxoptBackend()
    t0 = time.perf_counter()
    hard = cfg.hard if hard is None and cfg is not None else bool(hard)
    kappa = state_gain(sys)
    base = _solve_family(sys, disk_family(-1, 0.0), hard, CvxoptBackend(), kappa=kappa)
    if base.status != OPTIMAL:
        raise SweepError(f"bounded-real problem at lambda_c=0 failed: {base.status} {base.message}")
    gamma0 = base.region.r
    cfg = cfg or default_config(gamma0, hard)
    rho_cap = (10.0 * gamma0) ** 2
    trivial_r = TRIVIAL_RTOL * (1.0 + gamma0)

    tasks = []
    bisect = isinstance(backend, BisectionBackend)
    for lam in cfg.lambda_interior:
        if lam == 0.0:
            continue
        cap = (abs(lam) + 10.0 * gamma0) ** 2 if bisect else math.inf
        tasks.append((sys, disk_family(-1, lam), hard, backend, cap, kappa, trivial_r))
    for lam in cfg.lambda_exterior:
        tasks.append((sys, disk_family(1, lam), hard, backend, rho_cap, kappa, trivial_r))
    for sign in cfg.include_halfplanes:
        tasks.append((sys, halfplane_family(sign), hard, CvxoptBackend(), math.inf, kappa, trivial_r))

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            solved = list(pool.map(_task, tasks))
    else:
        solved = [_task(t) for t in tasks]

    entries = []
    if 0.0 in cfg.lambda_interior:
        entries.append(base)
    entries.extend(solved)
    entries.sort(key=lambda e: (e.sigma if not math.isnan(e.lambda_c) else 2,
                                e.lambda_c if not math.isnan(e.lambda_c) else 0.0))

    notes = []
    for e in entries:
        if e.status == FAILED:
            msg = f"numerical failure at lambda_c={e.lambda_c:g} sigma={e.sigma:+d}: {e.message}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
        if e.cap_hit:
            notes.append(f"exterior radius hit the cap at lambda_c={e.lambda_c:g}")
    regions = [e.region for e in entries if e.status == OPTIMAL and e.region is not None]
    certs = [e.certificate for e in entries if e.status == OPTIMAL and e.region is not None]
    if not regions:
        raise SweepError("sweep produced no regions")
    approx = SGApproximation(tuple(regions), tuple(certs), system_hash(sys),
                             "hard" if hard else "soft")
    return SweepResult(cfg, gamma0, rho_cap, entries, approx, backend.name,
                       time.perf_counter() - t0, notes)


def gain_bound(sys: SystemModel, hard: bool = False) -> float:
    """Radius of the certified disk centred at the origin."""
    e = solve_interior(sys, 0.0, hard)
    if e.status != OPTIMAL:
        raise SweepError(f"gain bound problem failed: {e.status}")
    return e.region.r


def sweep_grids(li: tuple, le: tuple, hard: bool = False) -> SweepConfig:
    """Convenience: ``(start, step, count)`` triples for both grids."""
    return SweepConfig(lambda_grid(*li), lambda_grid(*le), hard)
