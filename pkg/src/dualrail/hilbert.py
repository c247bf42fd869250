"""Truncated two-mode + ancilla Fock space: operators, states and metrics.

Mode ordering is fixed globally as Alice (x) Bob (x) ancilla, with basis index
``(i_a * dim_b + i_b) * dim_q + i_q``.  All matrices are dense complex; the
largest space used anywhere in the package is 4*4*3 = 48 dimensional.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

HERMITICITY_TOL = 1e-12
STATE_NORM_TOL = 1e-9
RHO_HERM_TOL = 1e-10
RHO_TRACE_TOL = 1e-8
RHO_EIG_FLOOR = -1e-7
EDGE_POPULATION_TOL = 1e-6


class LayoutError(ValueError):
    """Raised for invalid mode layouts or layout mismatches."""


class TruncationWarning(UserWarning):
    """Emitted when population reaches the highest Fock level of a cavity."""


@dataclass(frozen=True)
class ModeLayout:
    """Fock truncations: ``dim_a``/``dim_b`` cavity levels, ``dim_q`` ancilla levels."""

    dim_a: int
    dim_b: int
    dim_q: int = 2

    def __post_init__(self):
        if self.dim_a < 2 or self.dim_b < 2:
            raise LayoutError(f"cavity dimensions must be >= 2, got ({self.dim_a}, {self.dim_b})")
        if self.dim_q not in (2, 3):
            raise LayoutError(f"ancilla must have 2 or 3 levels, got {self.dim_q}")

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b * self.dim_q

    def index(self, n_a: int, n_b: int, q: int) -> int:
        if not (0 <= n_a < self.dim_a and 0 <= n_b < self.dim_b and 0 <= q < self.dim_q):
            raise LayoutError(f"state ({n_a},{n_b},{q}) outside layout {self}")
        return (n_a * self.dim_b + n_b) * self.dim_q + q


def _check_same_layout(l1: ModeLayout, l2: ModeLayout):
    if l1 != l2:
        raise LayoutError(f"layout mismatch: {l1} vs {l2}")


@dataclass(frozen=True)
class OperatorMatrix:
    layout: ModeLayout
    m: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.m, dtype=np.complex128)
        object.__setattr__(self, "m", m)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dim {self.layout.dim}")

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.m.conj().T)

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return float(np.max(np.abs(self.m - self.m.conj().T))) < tol

    def require_hermitian(self, tol: float = HERMITICITY_TOL) -> "OperatorMatrix":
        dev = float(np.max(np.abs(self.m - self.m.conj().T)))
        if dev >= tol:
            raise ValueError(f"operator claimed Hermitian but max |M - M^+| = {dev:.3e}")
        return self

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_same_layout(self.layout, other.layout)
            return OperatorMatrix(self.layout, self.m @ other.m)
        return self.m @ other


@dataclass(frozen=True)
class PureState:
    layout: ModeLayout
    vec: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vec, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "vec", v)
        if v.shape != (self.layout.dim,):
            raise LayoutError(f"vector length {v.shape} does not match layout dim {self.layout.dim}")
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > STATE_NORM_TOL:
            raise ValueError(f"state norm {n} deviates from 1 by more than {STATE_NORM_TOL}")

    def density(self) -> "MixedState":
        return MixedState(self.layout, np.outer(self.vec, self.vec.conj()))


@dataclass(frozen=True)
class MixedState:
    layout: ModeLayout
    rho: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        r = np.ascontiguousarray(self.rho, dtype=np.complex128)
        object.__setattr__(self, "rho", r)
        if r.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(f"matrix shape {r.shape} does not match layout dim {self.layout.dim}")
        if self.validate:
            herm = float(np.max(np.abs(r - r.conj().T)))
            if herm > RHO_HERM_TOL:
                raise ValueError(f"density matrix non-Hermitian: max deviation {herm:.3e}")
            tr = complex(np.trace(r))
            if abs(tr - 1.0) > RHO_TRACE_TOL:
                raise ValueError(f"density matrix trace {tr} deviates from 1")
            w = np.linalg.eigvalsh(0.5 * (r + r.conj().T))
            if float(w.min()) < RHO_EIG_FLOOR:
                raise ValueError(f"density matrix min eigenvalue {w.min():.3e} below floor")


def state_vector(layout: ModeLayout, n_a: int, n_b: int, q: int = 0) -> np.ndarray:
    v = np.zeros(layout.dim, dtype=np.complex128)
    v[layout.index(n_a, n_b, q)] = 1.0
    return v


def basis_state(layout: ModeLayout, n_a: int, n_b: int, q: int = 0) -> PureState:
    return PureState(layout, state_vector(layout, n_a, n_b, q))


def _destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(np.complex128)


def _embed(layout: ModeLayout, op_a=None, op_b=None, op_q=None) -> np.ndarray:
    a = op_a if op_a is not None else np.eye(layout.dim_a)
    b = op_b if op_b is not None else np.eye(layout.dim_b)
    q = op_q if op_q is not None else np.eye(layout.dim_q)
    return np.kron(np.kron(a, b), q).astype(np.complex128)


@dataclass(frozen=True)
class OperatorBundle:
    """Tensor-embedded single-mode operators for a given layout."""

    layout: ModeLayout
    a: np.ndarray
    b: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    sigma_x: np.ndarray
    sigma_z: np.ndarray
    proj_g: np.ndarray
    proj_e: np.ndarray
    proj_f: np.ndarray | None
    identity: np.ndarray

    def ancilla_projector(self, level: int) -> np.ndarray:
        return (self.proj_g, self.proj_e, self.proj_f)[level]


def build_mode_operators(layout: ModeLayout) -> OperatorBundle:
    """Standard lowering / number / ancilla operators embedded per the fixed ordering."""
    dq = layout.dim_q
    a1 = _destroy(layout.dim_a)
    b1 = _destroy(layout.dim_b)
    ket = lambda i: np.eye(dq, dtype=np.complex128)[:, i : i + 1]
    proj = lambda i: ket(i) @ ket(i).conj().T
    sx = ket(0) @ ket(1).conj().T + ket(1) @ ket(0).conj().T
    sz = proj(0) - proj(1)
    return OperatorBundle(
        layout=layout,
        a=_embed(layout, op_a=a1),
        b=_embed(layout, op_b=b1),
        n_a=_embed(layout, op_a=a1.conj().T @ a1),
        n_b=_embed(layout, op_b=b1.conj().T @ b1),
        sigma_x=_embed(layout, op_q=sx),
        sigma_z=_embed(layout, op_q=sz),
        proj_g=_embed(layout, op_q=proj(0)),
        proj_e=_embed(layout, op_q=proj(1)),
        proj_f=_embed(layout, op_q=proj(2)) if dq == 3 else None,
        identity=np.eye(layout.dim, dtype=np.complex128),
    )


def ancilla_transition(layout: ModeLayout, lower: int, upper: int) -> np.ndarray:
    """Embedded |lower><upper| ancilla operator (e.g. the decay jump direction)."""
    dq = layout.dim_q
    if not (0 <= lower < upper < dq):
        raise LayoutError(f"invalid ancilla transition ({lower},{upper}) for dim_q={dq}")
    op = np.zeros((dq, dq), dtype=np.complex128)
    op[lower, upper] = 1.0
    return _embed(layout, op_q=op)


def total_photon_projector(layout: ModeLayout, N: int) -> OperatorMatrix:
    """Projector onto total cavity photon number N (ancilla untouched)."""
    if N < 0 or N >= layout.dim_a + layout.dim_b - 1:
        raise LayoutError(f"total photon number {N} outside truncation range of {layout}")
    diag = np.zeros(layout.dim)
    for n_a in range(layout.dim_a):
        n_b = N - n_a
        if 0 <= n_b < layout.dim_b:
            for q in range(layout.dim_q):
                diag[layout.index(n_a, n_b, q)] = 1.0
    return OperatorMatrix(layout, np.diag(diag))


def cavity_edge_projector(layout: ModeLayout) -> np.ndarray:
    """Projector onto states with either cavity at its highest Fock level."""
    diag = np.zeros(layout.dim)
    for n_a in range(layout.dim_a):
        for n_b in range(layout.dim_b):
            if n_a == layout.dim_a - 1 or n_b == layout.dim_b - 1:
                for q in range(layout.dim_q):
                    diag[layout.index(n_a, n_b, q)] = 1.0
    return np.diag(diag).astype(np.complex128)


def edge_population(state, layout: ModeLayout) -> float:
    proj = cavity_edge_projector(layout)
    if isinstance(state, PureState):
        return float(np.real(state.vec.conj() @ (proj @ state.vec)))
    rho = state.rho if isinstance(state, MixedState) else state
    return float(np.real(np.trace(proj @ rho)))


def warn_if_truncated(pop: float, context: str = "") -> bool:
    if pop > EDGE_POPULATION_TOL:
        warnings.warn(
            f"population {pop:.2e} on the highest cavity Fock level{' in ' + context if context else ''};"
            " increase the truncation",
            TruncationWarning,
            stacklevel=3,
        )
        return True
    return False


def fidelity(s1, s2) -> float:
    """State fidelity; squared overlap when both arguments are pure."""
    if isinstance(s1, PureState) and isinstance(s2, PureState):
        _check_same_layout(s1.layout, s2.layout)
        return float(abs(np.vdot(s1.vec, s2.vec)) ** 2)
    if isinstance(s1, PureState):
        s1, s2 = s2, s1
    if isinstance(s2, PureState):
        _check_same_layout(s1.layout, s2.layout)
        return float(np.real(s2.vec.conj() @ (s1.rho @ s2.vec)))
    _check_same_layout(s1.layout, s2.layout)
    sq = sqrtm(s1.rho)
    inner = sqrtm(sq @ s2.rho @ sq)
    val = float(np.real(np.trace(inner))) ** 2
    return min(max(val, 0.0), 1.0)


MODE_NAMES = ("alice", "bob", "ancilla")


def partial_trace(state: MixedState, keep) -> np.ndarray:
    """Reduced density matrix over the named modes in ``keep`` (subset of
    ``{"alice", "bob", "ancilla"}``), returned as a plain array in the fixed
    mode ordering restricted to the kept modes."""
    keep_idx = sorted(MODE_NAMES.index(k) for k in keep)
    if not keep_idx:
        raise ValueError("keep must name at least one mode")
    lay = state.layout
    dims = (lay.dim_a, lay.dim_b, lay.dim_q)
    rho = state.rho.reshape(dims + dims)
    traced = [i for i in range(3) if i not in keep_idx]
    for i in sorted(traced, reverse=True):
        rho = np.trace(rho, axis1=i, axis2=i + rho.ndim // 2)
    d = int(np.prod([dims[i] for i in keep_idx]))
    return rho.reshape(d, d)


def expectation(op, state) -> complex:
    m = op.m if isinstance(op, OperatorMatrix) else op
    if isinstance(op, OperatorMatrix):
        _check_same_layout(op.layout, state.layout)
    if isinstance(state, PureState):
        return complex(state.vec.conj() @ (m @ state.vec))
    return complex(np.trace(m @ state.rho))
