"""Assembly of the dissipation LMIs as affine symmetric-matrix functions.

Every constraint block is stored as ``const + sum_k x_k * coeffs[k]`` and must
be negative semidefinite.  The first decision variable is always the scalar
that parametrizes the supply rate: ``rho = r^2`` for disk regions, the offset
``c`` for half-planes.  Using ``rho`` instead of ``r`` keeps ``Pi`` affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .model import PwlSystem, ResetSystem, StateSpace, SystemModel, system_kind

FEAS_EPS = 1e-7
PSD_EPS = 1e-9


class SupplyFamily(NamedTuple):
    """``Pi(s) = pi0 + s * pi1`` with ``s`` the optimized scalar."""

    kind: str          # disk_in | disk_out | halfplane
    sigma: int
    lambda_c: float
    sign: int
    pi0: np.ndarray
    pi1: np.ndarray

    @property
    def sense(self) -> str:
        return "max" if self.kind == "disk_out" else "min"


def disk_family(sigma: int, lambda_c: float) -> SupplyFamily:
    if sigma not in (-1, 1):
        raise ValueError("sigma must be +1 or -1")
    lc = float(lambda_c)
    pi0 = sigma * np.array([[1.0, -lc], [-lc, lc * lc]])
    pi1 = sigma * np.array([[0.0, 0.0], [0.0, -1.0]])
    return SupplyFamily("disk_in" if sigma < 0 else "disk_out", sigma, lc, 0, pi0, pi1)


def halfplane_family(sign: int) -> SupplyFamily:
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    pi0 = np.array([[0.0, sign], [sign, 0.0]])
    pi1 = np.array([[0.0, 0.0], [0.0, 1.0]])
    return SupplyFamily("halfplane", 0, 0.0, sign, pi0, pi1)


def theta(Pi, C, D, n: int | None = None) -> np.ndarray:
    """``[C D; 0 I]' (Pi kron I_n) [C D; 0 I]``."""
    Pi = Pi.as_array() if hasattr(Pi, "as_array") else np.asarray(Pi, float)
    C, D = np.atleast_2d(C), np.atleast_2d(D)
    n = D.shape[0] if n is None else n
    m = C.shape[1]
    if C.shape[0] != n or D.shape != (n, n) or Pi.shape != (2, 2):
        raise ValueError("theta: dimension mismatch")
    outer = np.block([[C, D], [np.zeros((n, m)), np.eye(n)]])
    T = outer.T @ np.kron(Pi, np.eye(n)) @ outer
    return 0.5 * (T + T.T)


def kyp_term(A, B, P) -> np.ndarray:
    """``[A B; I 0]' [0 P; P 0] [A B; I 0]``."""
    m, n = B.shape
    K = np.block([[A, B], [np.eye(m), np.zeros((m, n))]])
    Z = np.zeros((m, m))
    return K.T @ np.block([[Z, P], [P, Z]]) @ K


def sym_basis(k: int) -> list:
    out = []
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def sym_from_vec(v, k: int) -> np.ndarray:
    S = np.zeros((k, k))
    iu = np.triu_indices(k)
    S[iu] = v
    return S + np.triu(S, 1).T


@dataclass(frozen=True)
class LmiBlock:
    name: str
    const: np.ndarray
    coeffs: np.ndarray  # (nvar, k, k)

    def value(self, x) -> np.ndarray:
        return self.const + np.tensordot(np.asarray(x, float), self.coeffs, axes=1)


@dataclass(frozen=True)
class Certificate:
    P: np.ndarray
    rho_opt: float
    max_constraint_eig: float
    tau1: float | None = None
    tau2: float | None = None
    U: tuple = ()

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "rho_opt": self.rho_opt,
                "max_constraint_eig": self.max_constraint_eig,
                "tau1": self.tau1, "tau2": self.tau2,
                "U": [u.tolist() for u in self.U]}


@dataclass(frozen=True)
class LmiProblem:
    """Affine LMI feasibility/optimization problem in the vector ``x``.

    ``blocks`` must all be NSD; ``G x <= h`` collects scalar constraints.
    The objective is to minimize or maximize ``x[0]`` (see ``sense``)
    within ``scalar_bounds``.
    """

    variables: tuple
    blocks: tuple
    G: np.ndarray
    h: np.ndarray
    family: SupplyFamily
    hard: bool
    system: str
    layout: dict = field(default_factory=dict)
    scalar_bounds: tuple = (-np.inf, np.inf)

    @property
    def nvar(self) -> int:
        return len(self.variables)

    @property
    def sense(self) -> str:
        return self.family.sense

    def objective(self) -> np.ndarray:
        c = np.zeros(self.nvar)
        c[0] = -1.0 if self.sense == "max" else 1.0
        return c

    def with_bounds(self, lo: float, hi: float) -> "LmiProblem":
        return replace(self, scalar_bounds=(float(lo), float(hi)))

    def all_linear(self):
        """Scalar constraints including the bounds on ``x[0]``."""
        rows, rhs = [self.G], [self.h]
        lo, hi = self.scalar_bounds
        if np.isfinite(lo):
            e = np.zeros((1, self.nvar)); e[0, 0] = -1.0
            rows.append(e); rhs.append([-lo])
        if np.isfinite(hi):
            e = np.zeros((1, self.nvar)); e[0, 0] = 1.0
            rows.append(e); rhs.append([hi])
        return np.vstack(rows), np.concatenate([np.ravel(r) for r in rhs])

    def max_eig(self, x) -> float:
        """Largest violation over all blocks and scalar constraints."""
        worst = max(np.linalg.eigvalsh(b.value(x)).max() for b in self.blocks)
        G, h = self.all_linear()
        if G.shape[0]:
            worst = max(worst, float(np.max(G @ x - h)))
        return float(worst)

    def with_scalar_fixed(self, value: float):
        """Blocks with ``x[0] = value`` substituted, over the remaining variables."""
        out = []
        for b in self.blocks:
            out.append(LmiBlock(b.name, b.const + value * b.coeffs[0], b.coeffs[1:]))
        G, h = self.G, self.h
        return out, G[:, 1:], h - value * G[:, 0]

    def certificate(self, x) -> Certificate:
        x = np.asarray(x, float)
        lay = self.layout
        P = sym_from_vec(x[lay["P"]], lay["m"]) if lay["m"] else np.zeros((0, 0))
        tau1 = float(x[lay["tau1"]]) if "tau1" in lay else None
        tau2 = float(x[lay["tau2"]]) if "tau2" in lay else None
        U = tuple(sym_from_vec(x[idx], lay["p"]) for idx in lay.get("U", ()))
        return Certificate(P, float(x[0]), self.max_eig(x), tau1, tau2, U)

    def dump(self) -> str:
        """Sparse triplets ``block i j const coeff_1 .. coeff_nvar`` (upper triangle)."""
        lines = ["# block i j const " + " ".join(self.variables)]
        for b in self.blocks:
            k = b.const.shape[0]
            for i in range(k):
                for j in range(i, k):
                    vals = [b.const[i, j]] + list(b.coeffs[:, i, j])
                    if any(v != 0.0 for v in vals):
                        lines.append(f"{b.name} {i} {j} " + " ".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


class _Builder:
    """Collects variables and blocks; coefficients are filled per variable."""

    def __init__(self):
        self.names: list = []
        self.blocks: list = []  # (name, const, {var_index: coeff})
        self.G: list = []
        self.h: list = []

    def var(self, name: str) -> int:
        self.names.append(name)
        return len(self.names) - 1

    def sym_vars(self, name: str, k: int) -> list:
        return [self.var(f"{name}[{i},{j}]") for i in range(k) for j in range(i, k)]

    def block(self, name: str, const, terms: dict):
        self.blocks.append((name, np.asarray(const, float), terms))

    def nonneg(self, idx: int):
        self.G.append((idx, -1.0))
        self.h.append(0.0)

    def build(self, family, hard, system, layout, bounds) -> LmiProblem:
        nv = len(self.names)
        blocks = []
        for name, const, terms in self.blocks:
            k = const.shape[0]
            coeffs = np.zeros((nv, k, k))
            for idx, mat in terms.items():
                coeffs[idx] += mat
            blocks.append(LmiBlock(name, const, coeffs))
        G = np.zeros((len(self.G), nv))
        for row, (idx, val) in enumerate(self.G):
            G[row, idx] = val
        return LmiProblem(tuple(self.names), tuple(blocks), G, np.array(self.h, float),
                          family, hard, system, layout, bounds)


def _flow_terms(bld: _Builder, ss: StateSpace, family: SupplyFamily, P_idx: list):
    """Constant and per-variable terms of ``KYP(P) - Theta(Pi)``."""
    const = -theta(family.pi0, ss.C, ss.D)
    terms = {0: -theta(family.pi1, ss.C, ss.D)}
    for idx, E in zip(P_idx, sym_basis(ss.m)):
        terms[idx] = kyp_term(ss.A, ss.B, E)
    return const, terms


def _start(ss: StateSpace, family: SupplyFamily, hard: bool):
    bld = _Builder()
    bld.var("rho" if family.kind != "halfplane" else "c")
    P_idx = bld.sym_vars("P", ss.m)
    return bld, P_idx


def _finish_hard(bld: _Builder, m: int, P_idx: list, hard: bool):
    if hard and m:
        bld.block("P_psd", np.zeros((m, m)),
                  {idx: -E for idx, E in zip(P_idx, sym_basis(m))})


def _bounds(family: SupplyFamily) -> tuple:
    return (0.0, np.inf) if family.kind != "halfplane" else (-np.inf, np.inf)


def build_lti(sys: StateSpace, sigma: int, lambda_c: float, hard: bool = False,
              family: SupplyFamily | None = None) -> LmiProblem:
    """Single block ``F = KYP(P) - Theta(Pi(sigma, lambda_c, r))``, plus ``P >= 0`` if hard."""
    sys.require_hurwitz()
    family = family or disk_family(sigma, lambda_c)
    bld, P_idx = _start(sys, family, hard)
    const, terms = _flow_terms(bld, sys, family, P_idx)
    bld.block("F", const, terms)
    _finish_hard(bld, sys.m, P_idx, hard)
    return bld.build(family, hard, "lti", {"P": P_idx, "m": sys.m}, _bounds(family))


def build_reset(sys: ResetSystem, sigma: int, lambda_c: float, hard: bool = False,
                family: SupplyFamily | None = None) -> LmiProblem:
    """Flow block ``F + tau1 M`` and jump block ``[R'PR - P, 0; 0, 0] - tau2 M``."""
    family = family or disk_family(sigma, lambda_c)
    ss, m, n = sys.base, sys.m, sys.n
    bld, P_idx = _start(ss, family, hard)
    t1, t2 = bld.var("tau1"), bld.var("tau2")
    const, terms = _flow_terms(bld, ss, family, P_idx)
    terms[t1] = sys.M.copy()
    bld.block("flow", const, terms)
    jump = {t2: -sys.M}
    for idx, E in zip(P_idx, sym_basis(m)):
        J = np.zeros((m + n, m + n))
        J[:m, :m] = sys.R.T @ E @ sys.R - E
        jump[idx] = J
    bld.block("jump", np.zeros((m + n, m + n)), jump)
    bld.nonneg(t1)
    bld.nonneg(t2)
    _finish_hard(bld, m, P_idx, hard)
    layout = {"P": P_idx, "m": m, "tau1": t1, "tau2": t2}
    return bld.build(family, hard, "reset", layout, _bounds(family))


def build_pwl(sys: PwlSystem, sigma: int, lambda_c: float, hard: bool = False,
              family: SupplyFamily | None = None) -> LmiProblem:
    """One block per mode, ``F_i + E_i' U_i E_i``, sharing ``P`` and ``rho``."""
    family = family or disk_family(sigma, lambda_c)
    first = sys.modes[0].ss
    p = sys.modes[0].E.shape[0]
    bld, P_idx = _start(first, family, hard)
    U_idx = []
    for i, mode in enumerate(sys.modes):
        idx = bld.sym_vars(f"U{i + 1}", p)
        U_idx.append(idx)
        const, terms = _flow_terms(bld, mode.ss, family, P_idx)
        for k, Eb in zip(idx, sym_basis(p)):
            terms[k] = mode.E.T @ Eb @ mode.E
        bld.block(f"mode{i + 1}", const, terms)
        for k in idx:
            bld.nonneg(k)
    _finish_hard(bld, first.m, P_idx, hard)
    layout = {"P": P_idx, "m": first.m, "U": U_idx, "p": p}
    return bld.build(family, hard, "pwl", layout, _bounds(family))


def build_problem(sys: SystemModel, family: SupplyFamily, hard: bool = False) -> LmiProblem:
    kind = system_kind(sys)
    builder = {"lti": build_lti, "reset": build_reset, "pwl": build_pwl}[kind]
    return builder(sys, family.sigma, family.lambda_c, hard, family=family)
