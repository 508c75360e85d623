"""System descriptions (LTI, reset, piecewise linear) and their JSON files.

All matrices are stored as read-only float64 arrays so that model objects can
be shared freely between workers.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

HURWITZ_EPS = 1e-9
SYM_EPS = 1e-9
COVERAGE_SAMPLES = 10_000
COVERAGE_BOX = 10.0


class ModelError(ValueError):
    """Raised for malformed or inconsistent system descriptions."""


def _matrix(value, name: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{name}: not a numeric matrix") from exc
    if arr.ndim != 2:
        if arr.size == 0:
            arr = arr.reshape(0, 0)
        else:
            raise ModelError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Square LTI block ``x' = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        D = _matrix(self.D, "D")
        n = D.shape[0]
        if D.shape != (n, n) or n == 0:
            raise ModelError(f"D must be square and nonempty, got {D.shape}")
        m = A.shape[0]
        B = _matrix(self.B, "B") if m else np.zeros((0, n))
        C = _matrix(self.C, "C") if m else np.zeros((n, 0))
        if A.shape != (m, m):
            raise ModelError(f"A must be square, got {A.shape}")
        if B.shape != (m, n):
            raise ModelError(f"B has shape {B.shape}, expected {(m, n)}")
        if C.shape != (n, m):
            raise ModelError(f"C has shape {C.shape}, expected {(n, m)}")
        for name, arr in zip("ABCD", (A, B, C, D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        """State dimension."""
        return self.A.shape[0]

    @property
    def n(self) -> int:
        """Input (= output) dimension."""
        return self.D.shape[0]

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.m else np.zeros(0, complex)

    def is_hurwitz(self, eps: float = HURWITZ_EPS) -> bool:
        return bool(np.all(self.poles().real < -eps))

    def require_hurwitz(self) -> None:
        if not self.is_hurwitz():
            raise ModelError(
                f"A is not Hurwitz (max Re eig = {self.poles().real.max():.3g})")

    def freqresp(self, omega) -> np.ndarray:
        """Evaluate ``C (jw I - A)^-1 B + D`` for every ``w`` in ``omega``.

        Returns an array of shape ``(len(omega), n, n)``.
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.broadcast_to(self.D, (omega.size, self.n, self.n)).astype(complex)
        if self.m == 0:
            return out
        eye = np.eye(self.m)
        lhs = 1j * omega[:, None, None] * eye - self.A
        X = np.linalg.solve(lhs, np.broadcast_to(self.B, (omega.size,) + self.B.shape))
        return out + self.C @ X

    def dc_gain(self) -> np.ndarray:
        if self.m == 0:
            return self.D.copy()
        return self.D - self.C @ np.linalg.solve(self.A, self.B)

    def __eq__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "ABCD")

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ResetSystem:
    """LTI flow with state resets ``x+ = R x`` when ``xi' M xi <= 0``.

    ``xi = [x; u]``; the system flows while ``xi' M xi >= 0``.
    """

    base: StateSpace
    R: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        m, n = self.base.m, self.base.n
        R = _matrix(self.R, "R")
        M = _matrix(self.M, "M")
        if R.shape != (m, m):
            raise ModelError(f"R has shape {R.shape}, expected {(m, m)}")
        if M.shape != (m + n, m + n):
            raise ModelError(f"M has shape {M.shape}, expected {(m + n, m + n)}")
        if np.max(np.abs(M - M.T), initial=0.0) > SYM_EPS * max(1.0, np.abs(M).max()):
            raise ModelError("M is not symmetric")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "M", M)

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def n(self) -> int:
        return self.base.n

    def flow_value(self, x, u) -> np.ndarray:
        """``xi' M xi`` for (batched) states and inputs; >= 0 means flow."""
        xi = np.concatenate([np.atleast_2d(x), np.atleast_2d(u)], axis=-1)
        return np.einsum("bi,ij,bj->b", xi, self.M, xi)

    def __eq__(self, other):
        if not isinstance(other, ResetSystem):
            return NotImplemented
        return (self.base == other.base and np.array_equal(self.R, other.R)
                and np.array_equal(self.M, other.M))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PwlMode:
    ss: StateSpace
    E: np.ndarray

    def __post_init__(self):
        E = _matrix(self.E, "E")
        if E.shape[1] != self.ss.m + self.ss.n:
            raise ModelError(
                f"E has {E.shape[1]} columns, expected {self.ss.m + self.ss.n}")
        object.__setattr__(self, "E", E)

    def __eq__(self, other):
        if not isinstance(other, PwlMode):
            return NotImplemented
        return self.ss == other.ss and np.array_equal(self.E, other.E)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PwlSystem:
    """Piecewise linear system: mode ``i`` is active while ``E_i xi >= 0``."""

    modes: tuple

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ModelError("a PWL system needs at least one mode")
        m, n, p = modes[0].ss.m, modes[0].ss.n, modes[0].E.shape[0]
        for i, mode in enumerate(modes):
            if (mode.ss.m, mode.ss.n) != (m, n):
                raise ModelError(f"mode {i} has inconsistent dimensions")
            if mode.E.shape[0] != p:
                raise ModelError(f"mode {i}: E has {mode.E.shape[0]} rows, expected {p}")
        object.__setattr__(self, "modes", modes)

    @property
    def m(self) -> int:
        return self.modes[0].ss.m

    @property
    def n(self) -> int:
        return self.modes[0].ss.n

    def coverage_gaps(self, samples: int = COVERAGE_SAMPLES, box: float = COVERAGE_BOX,
                      seed: int = 0) -> int:
        """Count random points of ``[-box, box]^(m+n)`` covered by no mode."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-box, box, size=(samples, self.m + self.n))
        covered = np.zeros(samples, bool)
        for mode in self.modes:
            covered |= np.all(pts @ mode.E.T >= 0, axis=1)
        return int(np.count_nonzero(~covered))

    def __eq__(self, other):
        if not isinstance(other, PwlSystem):
            return NotImplemented
        return len(self.modes) == len(other.modes) and all(
            a == b for a, b in zip(self.modes, other.modes))

    __hash__ = None


SystemModel = Union[StateSpace, ResetSystem, PwlSystem]


def system_kind(sys: SystemModel) -> str:
    if isinstance(sys, StateSpace):
        return "lti"
    if isinstance(sys, ResetSystem):
        return "reset"
    if isinstance(sys, PwlSystem):
        return "pwl"
    raise TypeError(f"not a system model: {type(sys).__name__}")


def lti_parts(sys: SystemModel) -> list[StateSpace]:
    """The LTI building blocks of a model (one per PWL mode)."""
    kind = system_kind(sys)
    if kind == "lti":
        return [sys]
    if kind == "reset":
        return [sys.base]
    return [mode.ss for mode in sys.modes]


@dataclass(frozen=True)
class SweepConfig:
    """Centre grids for the interior and exterior disk problems."""

    lambda_interior: tuple = ()
    lambda_exterior: tuple = ()
    hard: bool = False
    include_halfplanes: tuple = ()

    def __post_init__(self):
        for name in ("lambda_interior", "lambda_exterior"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not all(np.isfinite(vals)):
                raise ModelError(f"{name}: non-finite grid value")
            if len(set(vals)) != len(vals):
                raise ModelError(f"{name}: grid values must be distinct")
            object.__setattr__(self, name, vals)
        signs = tuple(int(s) for s in self.include_halfplanes)
        if any(s not in (-1, 1) for s in signs):
            raise ModelError("half-plane signs must be +1 or -1")
        object.__setattr__(self, "include_halfplanes", signs)

    def to_dict(self) -> dict:
        return {"lambda_interior": list(self.lambda_interior),
                "lambda_exterior": list(self.lambda_exterior),
                "hard": self.hard,
                "include_halfplanes": list(self.include_halfplanes)}


def lambda_grid(start: float, step: float, count: int) -> tuple:
    """``{start + step*k | k = 0..count-1}``, rounded to kill float drift."""
    return tuple(float(np.round(start + step * k, 12)) for k in range(count))


# --- serialization --------------------------------------------------------

def _ss_dict(ss: StateSpace) -> dict:
    return {k: getattr(ss, k).tolist() for k in "ABCD"}


def system_to_dict(sys: SystemModel) -> dict:
    kind = system_kind(sys)
    if kind == "lti":
        return {"kind": "lti", **_ss_dict(sys)}
    if kind == "reset":
        return {"kind": "reset", **_ss_dict(sys.base),
                "R": sys.R.tolist(), "M": sys.M.tolist()}
    return {"kind": "pwl",
            "modes": [{**_ss_dict(md.ss), "E": md.E.tolist()} for md in sys.modes]}


def _ss_from(d: dict, where: str) -> StateSpace:
    missing = [k for k in "ABCD" if k not in d]
    if missing:
        raise ModelError(f"{where}: missing matrices {missing}")
    return StateSpace(d["A"], d["B"], d["C"], d["D"])


def system_from_dict(d: dict) -> SystemModel:
    if not isinstance(d, dict):
        raise ModelError("system description must be a JSON object")
    kind = d.get("kind")
    if kind == "lti":
        return _ss_from(d, "lti")
    if kind == "reset":
        if "R" not in d or "M" not in d:
            raise ModelError("reset system needs R and M")
        return ResetSystem(_ss_from(d, "reset"), d["R"], d["M"])
    if kind == "pwl":
        modes = d.get("modes")
        if not isinstance(modes, list) or not modes:
            raise ModelError("pwl system needs a nonempty 'modes' list")
        out = []
        for i, md in enumerate(modes):
            if "E" not in md:
                raise ModelError(f"mode {i}: missing E")
            out.append(PwlMode(_ss_from(md, f"mode {i}"), md["E"]))
        pwl = PwlSystem(tuple(out))
        gaps = pwl.coverage_gaps()
        if gaps:
            warnings.warn(f"PWL guards leave {gaps}/{COVERAGE_SAMPLES} sampled points "
                          "uncovered", stacklevel=2)
        return pwl
    raise ModelError(f"unknown system kind {kind!r}")


def load_system(path, require_hurwitz: bool = False) -> SystemModel:
    """Read and validate a JSON system file.

    With ``require_hurwitz`` a plain LTI system must have a Hurwitz ``A``.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: malformed JSON ({exc})") from exc
    sys = system_from_dict(data)
    if require_hurwitz and isinstance(sys, StateSpace):
        sys.require_hurwitz()
    return sys


def save_system(sys: SystemModel, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(sys), indent=1), encoding="utf-8")


def system_hash(sys: SystemModel) -> str:
    blob = json.dumps(system_to_dict(sys), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def realize_tf_denominator(coeffs) -> StateSpace:
    """Controllable canonical form of ``1 / (c0 s^k + c1 s^(k-1) + ... + ck)``."""
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size == 0 or c[0] == 0.0:
        raise ModelError("leading denominator coefficient must be nonzero")
    lead, a = c[0], c[1:] / c[0]
    k = a.size
    if k == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)),
                          [[1.0 / lead]])
    A = np.zeros((k, k))
    A[:-1, 1:] = np.eye(k - 1)
    A[-1, :] = -a[::-1]
    B = np.zeros((k, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, k))
    C[0, 0] = 1.0 / lead
    return StateSpace(A, B, C, [[0.0]])
