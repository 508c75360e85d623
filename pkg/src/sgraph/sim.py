"""Time-domain simulation and sampling of scaled graphs.

Fixed-step RK4 from rest. Reset events are located by bisection inside the
step; piecewise-linear modes are chosen at the start of each step. Many
samples are integrated together as a batch, each with its own input.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .model import PwlSystem, ResetSystem, StateSpace, SystemModel, lti_parts, system_kind

TOL_EVENT = 1e-10
DWELL_STEPS = 10
N_MAX_EVENTS = 10_000
MODE_SLACK = -1e-12
EPS_DECAY = 1e-6
STEPS_PER_TAU = 50
BATCH = 32


class SimulationError(RuntimeError):
    pass


class ChatteringError(SimulationError):
    pass


@dataclass(frozen=True)
class MultiSineInput:
    """``u(t) = sum_m k_m sin(w_m t + phi_m) * exp(mu t)``, per input channel."""

    amplitudes: np.ndarray   # (M,) or (M, n)
    freqs: np.ndarray
    phases: np.ndarray
    mu: float

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amplitudes, float))
        freqs = np.atleast_1d(np.asarray(self.freqs, float))
        phases = np.atleast_1d(np.asarray(self.phases, float))
        if not (amps.shape[0] == freqs.size == phases.size) or freqs.size < 1:
            raise ValueError("multi-sine needs M >= 1 matching amplitudes, freqs and phases")
        if not self.mu < 0:
            raise ValueError("decay rate mu must be negative")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "phases", phases)

    @property
    def M(self) -> int:
        return self.freqs.size

    def __call__(self, t) -> np.ndarray:
        """Input values with shape ``(len(t), n)``."""
        t = np.atleast_1d(np.asarray(t, float))
        s = np.sin(np.outer(t, self.freqs) + self.phases) * np.exp(self.mu * t)[:, None]
        amps = self.amplitudes if self.amplitudes.ndim == 2 else self.amplitudes[:, None]
        return s @ amps

    def to_dict(self) -> dict:
        return {"amplitudes": self.amplitudes.tolist(), "freqs": self.freqs.tolist(),
                "phases": self.phases.tolist(), "mu": self.mu}


@dataclass(frozen=True)
class InputRanges:
    max_terms: int = 20
    amplitude: tuple = (-1.0, 1.0)
    freq: tuple = (0.05, 10.0)
    mu: tuple = (-1.0, -0.1)

    def draw(self, rng: np.random.Generator, n: int = 1) -> MultiSineInput:
        M = int(rng.integers(1, self.max_terms + 1))
        amps = rng.uniform(*self.amplitude, size=(M, n) if n > 1 else M)
        freqs = np.exp(rng.uniform(np.log(self.freq[0]), np.log(self.freq[1]), M))
        phases = rng.uniform(0.0, 2 * np.pi, M)
        return MultiSineInput(amps, freqs, phases, float(rng.uniform(*self.mu)))


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    reset_times: list = field(default_factory=list)
    modes: np.ndarray | None = None
    settled: bool = True
    tail_yy: float = 0.0       # analytic output energy after the horizon (LTI)
    tail_bound: float = 0.0    # bound on neglected output energy (hybrid)

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class SGSample:
    rho: float
    theta: float
    norms: tuple            # (||u||, ||y||, <u, y>)
    input: object = None
    trusted: bool = True

    @property
    def z(self) -> complex:
        return self.rho * complex(math.cos(self.theta), math.sin(self.theta))

    def points(self) -> tuple:
        return self.z, self.z.conjugate()


# --- integration ------------------------------------------------------------

def _rk4_maps(A: np.ndarray, B: np.ndarray, h: float):
    """Matrices of one RK4 step: ``x+ = Phi x + G0 u(t) + Gh u(t+h/2) + G1 u(t+h)``."""
    m, n = B.shape
    I = np.eye(m)
    hA = h * A
    # stage derivatives are linear; expand k1..k4 symbolically in (x, u0, uh, u1)
    k1 = [A, B, np.zeros((m, n)), np.zeros((m, n))]
    k2 = [A @ (I + 0.5 * hA), 0.5 * hA @ B, B, np.zeros((m, n))]
    k3 = [A + 0.5 * hA @ k2[0], 0.5 * hA @ k2[1], 0.5 * hA @ k2[2] + B, np.zeros((m, n))]
    k4 = [A + hA @ k3[0], hA @ k3[1], hA @ k3[2], B]
    out = []
    for i in range(4):
        out.append(h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]))
    out[0] = out[0] + I
    return tuple(out)


def _rk4(A, B, x, u0, uh, u1, h):
    k1 = A @ x + B @ u0
    k2 = A @ (x + 0.5 * h * k1) + B @ uh
    k3 = A @ (x + 0.5 * h * k2) + B @ uh
    k4 = A @ (x + h * k3) + B @ u1
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def default_step(sys: SystemModel, inputs) -> float:
    fast = max((np.abs(np.linalg.eigvals(ss.A)).max() for ss in lti_parts(sys) if ss.m), default=1.0)
    h = 1.0 / (STEPS_PER_TAU * max(fast, 1e-12))
    wmax = max((float(np.max(i.freqs)) for i in inputs if isinstance(i, MultiSineInput)), default=0.0)
    if wmax > 0:
        h = min(h, 2 * np.pi / wmax / STEPS_PER_TAU)
    return h


def slow_time(sys: SystemModel) -> float:
    rates = [np.abs(np.linalg.eigvals(ss.A).real).min() for ss in lti_parts(sys) if ss.m]
    return 1.0 / max(min(rates, default=1.0), 1e-6)


def default_horizon(sys: SystemModel, mu: float) -> float:
    return math.log(1e8) / abs(mu) + 1.5 * math.log(1e7) * slow_time(sys)


def _input_grid(inp, t_half: np.ndarray, n: int) -> np.ndarray:
    u = np.asarray(inp(t_half), float)
    return u.reshape(len(t_half), n)


def _simulate_batch(sys: SystemModel, inputs: list, horizon: float, h: float) -> list:
    kind = system_kind(sys)
    parts = lti_parts(sys)
    m, n = parts[0].m, parts[0].n
    N = int(math.ceil(horizon / h)) + 1
    t = np.arange(N) * h
    t_half = np.arange(2 * N - 1) * (0.5 * h)
    Bn = len(inputs)
    U = np.stack([_input_grid(inp, t_half, n) for inp in inputs])  # (B, 2N-1, n)
    X = np.zeros((Bn, N, m))
    Y = np.zeros((Bn, N, n))
    resets = [[] for _ in range(Bn)]
    modes = np.zeros((Bn, N), int) if kind == "pwl" else None

    if kind == "pwl":
        maps = [_rk4_maps(md.ss.A, md.ss.B, h) for md in sys.modes]
        Phi, G0, Gh, G1 = (np.stack([mp[i] for mp in maps]) for i in range(4))
        Cs = np.stack([md.ss.C for md in sys.modes])
        Ds = np.stack([md.ss.D for md in sys.modes])
        Es = np.stack([md.E for md in sys.modes])            # (N_modes, p, m+n)
        switches = np.zeros(Bn, int)
    else:
        ss = parts[0]
        Phi, G0, Gh, G1 = _rk4_maps(ss.A, ss.B, h)
    if kind == "reset":
        dwell_until = np.zeros(Bn)
        events = np.zeros(Bn, int)

    x = np.zeros((Bn, m))
    for k in range(N):
        u0 = U[:, 2 * k]
        if kind == "pwl":
            xi = np.concatenate([x, u0], axis=1)
            ok = np.all(np.einsum("ipq,bq->bip", Es, xi) >= MODE_SLACK, axis=2)
            if not ok.any(axis=1).all():
                raise SimulationError(f"no mode covers the state at t={t[k]:g}")
            mode = np.argmax(ok, axis=1)
            modes[:, k] = mode
            if k:
                switches += mode != modes[:, k - 1]
                if switches.max() > N_MAX_EVENTS:
                    raise ChatteringError("mode switches exceeded the event limit")
            Y[:, k] = np.einsum("bij,bj->bi", Cs[mode], x) + np.einsum("bij,bj->bi", Ds[mode], u0)
        else:
            Y[:, k] = x @ ss.C.T + u0 @ ss.D.T
        X[:, k] = x
        if k == N - 1:
            break
        uh, u1 = U[:, 2 * k + 1], U[:, 2 * k + 2]
        if kind == "pwl":
            x_new = (np.einsum("bij,bj->bi", Phi[mode], x) + np.einsum("bij,bj->bi", G0[mode], u0)
                     + np.einsum("bij,bj->bi", Gh[mode], uh) + np.einsum("bij,bj->bi", G1[mode], u1))
        else:
            x_new = x @ Phi.T + u0 @ G0.T + uh @ Gh.T + u1 @ G1.T
        if kind == "reset":
            due = (t[k + 1] >= dwell_until) & (sys.flow_value(x_new, u1) < 0.0)
            for b in np.nonzero(due)[0]:
                x_new[b], te = _reset_step(sys, inputs[b], x[b], t[k], h, dwell_until[b])
                resets[b].append(te)
                dwell_until[b] = te + DWELL_STEPS * h
                events[b] += 1
                if events[b] > N_MAX_EVENTS:
                    raise ChatteringError("resets exceeded the event limit")
        x = x_new

    out = []
    for b in range(Bn):
        out.append(_finish(sys, kind, t, U[b, ::2], X[b], Y[b], resets[b],
                           None if modes is None else modes[b]))
    return out


def _reset_step(sys: ResetSystem, inp, x0, t0, h, dwell_until):
    """Integrate one step that leaves the flow set, resetting at the crossing."""
    A, B = sys.base.A, sys.base.B

    def flow(x, s):
        u = _input_grid(inp, np.array([t0, t0 + s / 2, t0 + s]), B.shape[1])
        return _rk4(A, B, x, u[0], u[1], u[2], s), u[2]

    def g(s):
        xs, us = flow(x0, s)
        return float(sys.flow_value(xs[None], us[None])[0])

    lo, hi = max(0.0, dwell_until - t0), h
    if g(lo) < 0.0:
        # already in the jump set when resets become allowed
        hi = lo
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = g(mid)
            if val < 0.0:
                hi = mid
                if val >= -TOL_EVENT:
                    break
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, t0):
                break
    s_e = hi
    x_e, _ = flow(x0, s_e) if s_e > 0 else (x0, None)
    x_plus = sys.R @ x_e
    rest = h - s_e
    if rest > 0:
        u = _input_grid(inp, np.array([t0 + s_e, t0 + s_e + rest / 2, t0 + h]), B.shape[1])
        x_plus = _rk4(A, B, x_plus, u[0], u[1], u[2], rest)
    return x_plus, t0 + s_e


def _observability_gramian(ss: StateSpace) -> np.ndarray:
    return linalg.solve_continuous_lyapunov(ss.A.T, -ss.C.T @ ss.C)


def _finish(sys, kind, t, u, x, y, resets, modes) -> Trajectory:
    nx = np.linalg.norm(x, axis=1)
    peak = nx.max()
    settled = bool(nx[-1] <= EPS_DECAY * peak) if peak > 0 else True
    tail_yy = tail_bound = 0.0
    xT = x[-1]
    if kind == "lti":
        if sys.m:
            tail_yy = float(xT @ _observability_gramian(sys) @ xT)
    else:
        parts = [p for p in lti_parts(sys) if p.is_hurwitz()]
        if parts and sys.m:
            tail_bound = max(float(xT @ _observability_gramian(p) @ xT) for p in parts)
    return Trajectory(t, u, x, y, list(resets), modes, settled, tail_yy, tail_bound)


def simulate_many(sys: SystemModel, inputs: list, horizon: float | None = None,
                  step: float | None = None) -> list:
    """Simulate a list of inputs from rest; batches share one step and horizon."""
    if not inputs:
        return []
    if step is None:
        step = default_step(sys, inputs)
    if horizon is None:
        mus = [inp.mu for inp in inputs if isinstance(inp, MultiSineInput)]
        horizon = default_horizon(sys, max(mus) if mus else -1.0)
    if not (step > 0 and horizon > step):
        raise ValueError("need step > 0 and horizon > step")
    out = []
    for i in range(0, len(inputs), BATCH):
        out.extend(_simulate_batch(sys, list(inputs[i:i + BATCH]), horizon, step))
    return out


def simulate(sys: SystemModel, inp, horizon: float | None = None,
             step: float | None = None) -> Trajectory:
    """Simulate one input (a MultiSineInput or any callable ``t -> (len(t), n)``)."""
    if not isinstance(inp, MultiSineInput) and (horizon is None or step is None):
        raise ValueError("sampled inputs need explicit horizon and step")
    traj = simulate_many(sys, [inp], horizon, step)[0]
    if not traj.settled:
        warnings.warn("trajectory has not settled by the end of the horizon", RuntimeWarning,
                      stacklevel=2)
    return traj


# --- functionals ------------------------------------------------------------

def _integral(values: np.ndarray, t: np.ndarray) -> float:
    return float(integrate.simpson(values, x=t))


def functionals(traj: Trajectory, require_settled: bool = True) -> tuple:
    """``(||u||, ||y||, <u, y>)`` over ``[0, inf)``."""
    if require_settled and not traj.settled:
        raise SimulationError("trajectory has not settled; functionals are not trusted")
    uu = _integral(np.sum(traj.u ** 2, axis=1), traj.t)
    yy = _integral(np.sum(traj.y ** 2, axis=1), traj.t) + traj.tail_yy
    uy = _integral(np.sum(traj.u * traj.y, axis=1), traj.t)
    return math.sqrt(max(uu, 0.0)), math.sqrt(max(yy, 0.0)), uy


def gain_phase(nu: float, ny: float, uy: float) -> tuple:
    if not nu > 0:
        raise SimulationError("gain is undefined for a zero input")
    rho = ny / nu
    if ny == 0.0:
        return rho, 0.0
    return rho, math.acos(min(1.0, max(-1.0, uy / (nu * ny))))


def _sample_from(traj: Trajectory, inp) -> SGSample:
    nu, ny, uy = functionals(traj, require_settled=False)
    rho, theta = gain_phase(nu, ny, uy)
    return SGSample(rho, theta, (nu, ny, uy), inp, traj.settled)


def sg_sample(sys: SystemModel, inp, horizon=None, step=None) -> SGSample:
    traj = simulate_many(sys, [inp], horizon, step)[0]
    return _sample_from(traj, inp)


@dataclass
class SampleCloud:
    samples: list
    untrusted: int

    def points(self, trusted_only: bool = True) -> np.ndarray:
        zs = [s.z for s in self.samples if s.trusted or not trusted_only]
        zs = np.array(zs, dtype=complex)
        return np.concatenate([zs, np.conj(zs)])


def cloud_inputs(count: int, seed: int, n: int = 1, ranges: InputRanges | None = None) -> list:
    ranges = ranges or InputRanges()
    children = np.random.SeedSequence(seed).spawn(count)
    return [ranges.draw(np.random.default_rng(c), n) for c in children]


def sample_cloud(sys: SystemModel, count: int, seed: int = 0,
                 ranges: InputRanges | None = None) -> SampleCloud:
    """Seeded multi-sine samples of the scaled graph.

    Step and horizon depend only on the system and the input ranges, so each
    sample is reproducible regardless of how the batch is split.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    ranges = ranges or InputRanges()
    n = lti_parts(sys)[0].n
    inputs = cloud_inputs(count, seed, n, ranges)
    fast = max((np.abs(np.linalg.eigvals(ss.A)).max() for ss in lti_parts(sys) if ss.m), default=1.0)
    step = min(1.0 / (STEPS_PER_TAU * fast), 2 * np.pi / ranges.freq[1] / STEPS_PER_TAU)
    horizon = default_horizon(sys, max(ranges.mu))
    trajs = simulate_many(sys, inputs, horizon, step)
    samples = [_sample_from(tr, inp) for tr, inp in zip(trajs, inputs)]
    return SampleCloud(samples, sum(not s.trusted for s in samples))


def iqc_check(traj: Trajectory, Pi, hard: bool = False) -> bool:
    """Sign of ``int [y; u]' (Pi kron I) [y; u] dt`` with tolerance.

    Soft mode checks the full integral, hard mode every running integral.
    """
    a, b, c = (Pi.a, Pi.b, Pi.c) if hasattr(Pi, "a") else (Pi[0][0], Pi[0][1], Pi[1][1])
    yy = np.sum(traj.y ** 2, axis=1)
    uy = np.sum(traj.u * traj.y, axis=1)
    uu = np.sum(traj.u ** 2, axis=1)
    f = a * yy + 2 * b * uy + c * uu
    nu, ny, _ = functionals(traj, require_settled=False)
    eps = 1e-6 * (1.0 + nu ** 2 + ny ** 2)
    if hard:
        running = integrate.cumulative_simpson(f, x=traj.t, initial=0.0)
        return bool(np.all(running >= -eps))
    return bool(_integral(f, traj.t) + a * traj.tail_yy >= -eps)


def storage_residual(traj: Trajectory, P: np.ndarray, Pi) -> np.ndarray:
    """``W(x(T)) - int_0^T s dt`` along the grid; nonpositive for a valid certificate."""
    a, b, c = Pi.a, Pi.b, Pi.c
    f = (a * np.sum(traj.y ** 2, axis=1) + 2 * b * np.sum(traj.u * traj.y, axis=1)
         + c * np.sum(traj.u ** 2, axis=1))
    W = np.einsum("ti,ij,tj->t", traj.x, P, traj.x)
    return W - integrate.cumulative_simpson(f, x=traj.t, initial=0.0)
