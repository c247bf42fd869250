"""Time-dependent closed (Schrodinger) and open (Lindblad) propagation.

Schedules are compiled to piecewise-smooth segments.  Constant segments are
propagated exactly (eigendecomposition for states, superoperator exponential
for density matrices); time-dependent segments use the adaptive RK45 kernels,
with step boundaries forced at every envelope breakpoint.  ``method="rk45"``
forces stepping everywhere, which the tests use to cross-check the exact path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .hilbert import (
    MixedState,
    ModeLayout,
    OperatorBundle,
    PureState,
    ancilla_transition,
    build_mode_operators,
    edge_population,
    warn_if_truncated,
)
from .pulses import DriveSchedule, InstantRotation, Segment, compile_segments

MAX_STEPS = 5_000_000
NORM_DRIFT_TOL = 1e-8
TRACE_DRIFT_TOL = 1e-8


class EvolveError(RuntimeError):
    """Numerical failure during propagation (CLI exit code 3)."""


def tphi_from_t2r(t1: float, t2r: float) -> float:
    """Pure-dephasing time from 1/T2R = 1/(2 T1) + 1/Tphi."""
    rate = 1.0 / t2r - 0.5 / t1
    if rate <= 0.0:
        return math.inf
    return 1.0 / rate


@dataclass(frozen=True)
class NoiseParams:
    """Device coherences in us; ``inf`` disables a channel.

    For a three-level ancilla, ``t1_fe`` and ``tphi_gf`` default to the
    harmonic-ladder scalings t1_ge/2 and tphi_ge/4 when left unset.
    """

    t1_a: float = math.inf
    t1_b: float = math.inf
    t1_ge: float = math.inf
    tphi_ge: float = math.inf
    t1_fe: float | None = None
    tphi_gf: float | None = None
    nth_a: float = 0.0
    nth_b: float = 0.0
    heating: bool = False

    def __post_init__(self):
        for name in ("t1_a", "t1_b", "t1_ge", "tphi_ge"):
            v = getattr(self, name)
            if not (v > 0.0):
                raise ValueError(f"{name} must be positive or inf, got {v}")
        for name in ("t1_fe", "tphi_gf"):
            v = getattr(self, name)
            if v is not None and not (v > 0.0):
                raise ValueError(f"{name} must be positive or inf, got {v}")
        for name in ("nth_a", "nth_b"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {v}")

    def resolved_t1_fe(self) -> float:
        return self.t1_fe if self.t1_fe is not None else 0.5 * self.t1_ge

    def resolved_tphi_gf(self) -> float:
        return self.tphi_gf if self.tphi_gf is not None else 0.25 * self.tphi_ge

    def transmon_only(self) -> "NoiseParams":
        from dataclasses import replace

        return replace(self, t1_a=math.inf, t1_b=math.inf, nth_a=0.0, nth_b=0.0, heating=False)

    def cavities_only(self) -> "NoiseParams":
        from dataclasses import replace

        return replace(self, t1_ge=math.inf, tphi_ge=math.inf, t1_fe=None, tphi_gf=None)

    @classmethod
    def off(cls) -> "NoiseParams":
        return cls()


@dataclass(frozen=True)
class CollapseTerm:
    operator: np.ndarray
    rate: float


@dataclass(frozen=True)
class CollapseSet:
    terms: tuple

    def __len__(self) -> int:
        return len(self.terms)

    def scaled_stack(self, dim: int):
        """(L, L^+, sum L^+ L) with the rates folded in as sqrt(rate)."""
        k = len(self.terms)
        ls = np.zeros((k, dim, dim), dtype=np.complex128)
        for i, term in enumerate(self.terms):
            ls[i] = math.sqrt(term.rate) * term.operator
        ldag = np.ascontiguousarray(ls.conj().transpose(0, 2, 1))
        m = np.zeros((dim, dim), dtype=np.complex128)
        for i in range(k):
            m += ldag[i] @ ls[i]
        return ls, ldag, m

    @classmethod
    def empty(cls) -> "CollapseSet":
        return cls(terms=())


def collapse_operators(noise: NoiseParams, layout: ModeLayout) -> CollapseSet:
    """Jump operators from device noise parameters.

    Cavity decay sqrt(1/T1) a, ancilla decay sqrt(1/T1_ge) |g><e| (plus
    sqrt(1/T1_fe) |e><f| with three levels), and pure dephasing
    sqrt(2/Tphi_ge) (|e><e| + c |f><f|) with c = sqrt(Tphi_ge / Tphi_gf),
    which makes the g-e coherence decay at exactly 1/Tphi_ge.  Thermal
    heating terms sqrt(nth/T1) a+ are added only when enabled.
    """
    ops = build_mode_operators(layout)
    terms = []
    if math.isfinite(noise.t1_a):
        terms.append(CollapseTerm(ops.a, 1.0 / noise.t1_a))
    if math.isfinite(noise.t1_b):
        terms.append(CollapseTerm(ops.b, 1.0 / noise.t1_b))
    if math.isfinite(noise.t1_ge):
        terms.append(CollapseTerm(ancilla_transition(layout, 0, 1), 1.0 / noise.t1_ge))
    if layout.dim_q == 3 and math.isfinite(noise.resolved_t1_fe()):
        terms.append(CollapseTerm(ancilla_transition(layout, 1, 2), 1.0 / noise.resolved_t1_fe()))
    if math.isfinite(noise.tphi_ge):
        op = ops.proj_e.copy()
        if layout.dim_q == 3:
            c = math.sqrt(noise.tphi_ge / noise.resolved_tphi_gf())
            op = op + c * ops.proj_f
        terms.append(CollapseTerm(op, 2.0 / noise.tphi_ge))
    if noise.heating:
        if noise.nth_a > 0.0 and math.isfinite(noise.t1_a):
            terms.append(CollapseTerm(ops.a.conj().T, noise.nth_a / noise.t1_a))
        if noise.nth_b > 0.0 and math.isfinite(noise.t1_b):
            terms.append(CollapseTerm(ops.b.conj().T, noise.nth_b / noise.t1_b))
    return CollapseSet(terms=tuple(terms))


def drive_coupling(layout: ModeLayout, level: int, phase: float) -> np.ndarray:
    """e^{i theta} |g><level| + h.c., tensor-embedded."""
    g = ancilla_transition(layout, 0, level)
    return np.exp(1j * phase) * g + np.exp(-1j * phase) * g.conj().T


def rotation_unitary(layout: ModeLayout, rot: InstantRotation) -> np.ndarray:
    """Exact unitary of an instantaneous ancilla rotation (delta pulse)."""
    gop = ancilla_transition(layout, 0, rot.level)
    x = np.exp(1j * rot.phase) * gop + np.exp(-1j * rot.phase) * gop.conj().T
    sub = gop.conj().T @ gop + gop @ gop.conj().T
    half = 0.5 * rot.angle
    return np.eye(layout.dim) + (math.cos(half) - 1.0) * sub - 1j * math.sin(half) * x


@dataclass
class _CompiledSegment:
    seg: Segment
    h0: np.ndarray
    hbs: np.ndarray
    hdr: np.ndarray
    genv: np.ndarray
    fenv: np.ndarray
    _eig: tuple | None = field(default=None, repr=False)
    _superop_gen: np.ndarray | None = field(default=None, repr=False)

    @property
    def constant(self) -> bool:
        return self.seg.constant

    def h_const(self) -> np.ndarray:
        g = _kernels.envelope_value(self.genv, 0.5 * (self.seg.t0 + self.seg.t1))
        f = _kernels.envelope_value(self.fenv, 0.5 * (self.seg.t0 + self.seg.t1))
        return self.h0 + g * self.hbs + f * self.hdr

    def eig(self):
        if self._eig is None:
            w, v = np.linalg.eigh(self.h_const())
            self._eig = (w, v)
        return self._eig


class CompiledSchedule:
    """Schedule bound to a layout: per-segment Hamiltonian pieces and event unitaries."""

    def __init__(self, schedule: DriveSchedule, layout: ModeLayout, ops: OperatorBundle | None = None):
        self.schedule = schedule
        self.layout = layout
        self.ops = ops if ops is not None else build_mode_operators(layout)
        disp = schedule.dispersive
        dim = layout.dim
        nb = self.ops.n_b
        h_disp = disp.chi_e * (nb @ self.ops.proj_e)
        if layout.dim_q == 3 and disp.chi_f != 0.0:
            h_disp = h_disp + disp.chi_f * (nb @ self.ops.proj_f)
        if schedule.beamsplitter is not None:
            bs = schedule.beamsplitter
            abdag = self.ops.a @ self.ops.b.conj().T
            hbs = 0.5 * (np.exp(1j * bs.phase) * abdag + np.exp(-1j * bs.phase) * abdag.conj().T)
            h_bs_frame = -bs.detuning * nb
        else:
            hbs = np.zeros((dim, dim), dtype=np.complex128)
            h_bs_frame = 0.0
        zero = np.zeros((dim, dim), dtype=np.complex128)
        self.segments = []
        for seg in compile_segments(schedule):
            h0 = h_disp.copy()
            if seg.bs_active:
                h0 += h_bs_frame
            if seg.pulse_index >= 0:
                p = schedule.transmon[seg.pulse_index]
                hdr = drive_coupling(layout, p.level, p.phase)
                if p.detuning != 0.0:
                    proj = self.ops.ancilla_projector(p.level)
                    h0 -= p.detuning * proj
            else:
                hdr = zero
            self.segments.append(
                _CompiledSegment(
                    seg=seg,
                    h0=np.ascontiguousarray(h0),
                    hbs=np.ascontiguousarray(hbs),
                    hdr=np.ascontiguousarray(hdr),
                    genv=np.array(seg.g_env, dtype=np.float64),
                    fenv=np.array(seg.f_env, dtype=np.float64),
                )
            )
        self.events = sorted(
            ((rot.time, rotation_unitary(layout, rot)) for rot in schedule.rotations),
            key=lambda e: e[0],
        )
        self.duration = schedule.duration

    def hamiltonian(self, t: float) -> np.ndarray:
        for cs in self.segments:
            if cs.seg.t0 - 1e-12 <= t <= cs.seg.t1 + 1e-12:
                g = _kernels.envelope_value(cs.genv, t)
                f = _kernels.envelope_value(cs.fenv, t)
                return cs.h0 + g * cs.hbs + f * cs.hdr
        raise EvolveError(f"t={t} outside schedule of duration {self.duration}")


def assemble_hamiltonian(schedule: DriveSchedule, t: float, ops: OperatorBundle):
    """Hermitian H(t)/hbar in rad/us for a schedule, as an OperatorMatrix."""
    from .hilbert import OperatorMatrix

    compiled = CompiledSchedule(schedule, ops.layout, ops)
    return OperatorMatrix(ops.layout, compiled.hamiltonian(t)).require_hermitian()


# ---------------------------------------------------------------------------
# Superoperators (row-major vec convention: vec(A X B) = kron(A, B.T) vec(X))
# ---------------------------------------------------------------------------


def lindblad_generator(h: np.ndarray, lstack: np.ndarray) -> np.ndarray:
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    if lstack.shape[0]:
        m = np.zeros((d, d), dtype=np.complex128)
        for k in range(lstack.shape[0]):
            lk = lstack[k]
            gen += np.kron(lk, lk.conj())
            m += lk.conj().T @ lk
        gen -= 0.5 * (np.kron(m, eye) + np.kron(eye, m.T))
    return gen


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def kraus_superop(ks) -> np.ndarray:
    out = None
    for k in ks:
        term = np.kron(k, k.conj())
        out = term if out is None else out + term
    return out


def apply_superop(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (s @ rho.reshape(-1)).reshape(d, d)


def _advance_psi(cs: _CompiledSegment, psi, t0, t1, h, rtol, atol, force_rk):
    if cs.constant and not force_rk:
        w, v = cs.eig()
        return v @ (np.exp(-1j * w * (t1 - t0)) * (v.conj().T @ psi)), h
    psi, h, _, status = _kernels.rk45_segment_psi(
        psi, t0, t1, h, cs.h0, cs.hbs, cs.hdr, cs.genv, cs.fenv, rtol, atol, MAX_STEPS
    )
    if status != 0:
        raise EvolveError(f"RK45 step budget exhausted in segment [{t0}, {t1}]")
    return psi, h


def _advance_rho(cs: _CompiledSegment, rho, t0, t1, h, ls, ldags, m, rtol, atol, force_rk, expm_cache):
    if cs.constant and not force_rk:
        key = (id(cs), round(t1 - t0, 14))
        prop = expm_cache.get(key)
        if prop is None:
            if cs._superop_gen is None:
                cs._superop_gen = lindblad_generator(cs.h_const(), ls)
            prop = expm(cs._superop_gen * (t1 - t0))
            expm_cache[key] = prop
        return apply_superop(prop, rho), h
    rho, h, _, status = _kernels.rk45_segment_rho(
        rho, t0, t1, h, cs.h0, cs.hbs, cs.hdr, cs.genv, cs.fenv, ls, ldags, m, rtol, atol, MAX_STEPS
    )
    if status != 0:
        raise EvolveError(f"RK45 step budget exhausted in segment [{t0}, {t1}]")
    return rho, h


def _merged_times(compiled: CompiledSchedule, sample_times):
    pts = {cs.seg.t0 for cs in compiled.segments}
    pts.add(compiled.duration)
    pts.update(t for t, _ in compiled.events)
    pts.update(float(t) for t in sample_times)
    return sorted(pts)


def _segment_at(compiled: CompiledSchedule, t0: float, t1: float) -> _CompiledSegment:
    tm = 0.5 * (t0 + t1)
    for cs in compiled.segments:
        if cs.seg.t0 - 1e-12 <= tm <= cs.seg.t1 + 1e-12:
            return cs
    raise EvolveError(f"no segment covers [{t0}, {t1}]")


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    truncation_flagged: bool = False

    def final(self):
        return self.states[-1]

    def expectation_series(self, op) -> np.ndarray:
        from .hilbert import expectation

        return np.array([expectation(op, s) for s in self.states])

    def to_csv(self, path, named_ops: dict):
        """Write time_us plus named real expectation values, one row per sample."""
        import csv

        cols = list(named_ops)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_us"] + cols)
            series = {c: self.expectation_series(named_ops[c]) for c in cols}
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.9g}"] + [f"{np.real(series[c][i]):.12g}" for c in cols])


def _run_schedule(compiled, state, sample_times, advance, apply_event, record):
    times = _merged_times(compiled, sample_times)
    sample_set = {float(t) for t in sample_times}
    ev_idx = 0
    events = compiled.events
    t_prev = times[0]
    if t_prev != 0.0:
        raise EvolveError("schedules start at t=0")
    while ev_idx < len(events) and events[ev_idx][0] <= t_prev + 1e-12:
        state = apply_event(state, events[ev_idx][1])
        ev_idx += 1
    if t_prev in sample_set:
        record(t_prev, state)
    h = 0.0
    for t_next in times[1:]:
        cs = _segment_at(compiled, t_prev, t_next)
        state, h = advance(cs, state, t_prev, t_next, h)
        while ev_idx < len(events) and events[ev_idx][0] <= t_next + 1e-12:
            state = apply_event(state, events[ev_idx][1])
            ev_idx += 1
        if t_next in sample_set:
            record(t_next, state)
        t_prev = t_next
    return state


def evolve_schrodinger(
    schedule: DriveSchedule,
    psi0: PureState,
    sample_times,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "auto",
) -> Trajectory:
    """Propagate a pure state through a schedule, sampling at the given times.

    Norm is monitored at every sample (drift beyond 1e-8 raises); population
    on the top Fock level of either cavity beyond 1e-6 flags truncation.
    """
    layout = psi0.layout
    compiled = CompiledSchedule(schedule, layout)
    sample_times = np.atleast_1d(np.asarray(sample_times, dtype=np.float64))
    _check_samples(sample_times, compiled.duration)
    force_rk = method == "rk45"
    out_t, out_s, flagged = [], [], [False]

    def record(t, psi):
        n = float(np.linalg.norm(psi))
        if abs(n - 1.0) > NORM_DRIFT_TOL:
            raise EvolveError(f"norm drift {abs(n - 1.0):.3e} at t={t}; tighten tolerances")
        st = PureState(layout, psi / n)
        if warn_if_truncated(edge_population(st, layout), "evolve_schrodinger"):
            flagged[0] = True
        out_t.append(t)
        out_s.append(st)

    def advance(cs, psi, t0, t1, h):
        return _advance_psi(cs, psi, t0, t1, h, rtol, atol, force_rk)

    def apply_event(psi, u):
        return u @ psi

    _run_schedule(compiled, psi0.vec.copy(), sample_times, advance, apply_event, record)
    return Trajectory(times=np.array(out_t), states=out_s, truncation_flagged=flagged[0])


def evolve_lindblad(
    schedule: DriveSchedule,
    rho0: MixedState,
    collapse: CollapseSet,
    sample_times,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "auto",
) -> Trajectory:
    """Propagate a density matrix under the Lindblad equation.

    Trace, Hermiticity and positivity are validated at every sample point
    (raising EvolveError with a diagnostic on failure), not at internal steps.
    """
    layout = rho0.layout
    compiled = CompiledSchedule(schedule, layout)
    sample_times = np.atleast_1d(np.asarray(sample_times, dtype=np.float64))
    _check_samples(sample_times, compiled.duration)
    ls, ldags, m = collapse.scaled_stack(layout.dim)
    force_rk = method == "rk45"
    expm_cache: dict = {}
    out_t, out_s, flagged = [], [], [False]

    def record(t, rho):
        tr = float(np.real(np.trace(rho)))
        if abs(tr - 1.0) > TRACE_DRIFT_TOL:
            raise EvolveError(f"trace drift {abs(tr - 1.0):.3e} at t={t}")
        try:
            st = MixedState(layout, rho)
        except ValueError as exc:
            raise EvolveError(f"density matrix invariant violated at t={t}: {exc}") from exc
        if warn_if_truncated(edge_population(st, layout), "evolve_lindblad"):
            flagged[0] = True
        out_t.append(t)
        out_s.append(st)

    def advance(cs, rho, t0, t1, h):
        return _advance_rho(cs, rho, t0, t1, h, ls, ldags, m, rtol, atol, force_rk, expm_cache)

    def apply_event(rho, u):
        return u @ rho @ u.conj().T

    _run_schedule(compiled, rho0.rho.copy(), sample_times, advance, apply_event, record)
    return Trajectory(times=np.array(out_t), states=out_s, truncation_flagged=flagged[0])


def _check_samples(sample_times, duration):
    if len(sample_times) == 0:
        raise EvolveError("at least one sample time is required")
    if np.any(np.diff(sample_times) < 0):
        raise EvolveError("sample times must be sorted")
    if sample_times[0] < -1e-12 or sample_times[-1] > duration + 1e-9:
        raise EvolveError(f"sample times must lie within [0, {duration}]")


def propagate_psi(schedule, psi, layout, rtol=1e-10, atol=1e-12, method="auto") -> np.ndarray:
    """Final-state fast path for bare vectors (no sampling, no validation)."""
    compiled = CompiledSchedule(schedule, layout)
    force_rk = method == "rk45"

    def advance(cs, p, t0, t1, h):
        return _advance_psi(cs, p, t0, t1, h, rtol, atol, force_rk)

    return _run_schedule(compiled, np.asarray(psi, dtype=np.complex128).copy(), [compiled.duration], advance, lambda p, u: u @ p, lambda t, s: None)


def schedule_unitary(schedule, layout, rtol=1e-10, atol=1e-12, method="auto") -> np.ndarray:
    """Total propagator of a (noise-free) schedule as a dense matrix."""
    compiled = CompiledSchedule(schedule, layout)
    force_rk = method == "rk45"
    u = np.eye(layout.dim, dtype=np.complex128)
    cols = [u[:, j].copy() for j in range(layout.dim)]

    def advance(cs, p, t0, t1, h):
        return _advance_psi(cs, p, t0, t1, h, rtol, atol, force_rk)

    out = [
        _run_schedule(compiled, c, [compiled.duration], advance, lambda p, uu: uu @ p, lambda t, s: None)
        for c in cols
    ]
    return np.stack(out, axis=1)


def schedule_superop(
    schedule: DriveSchedule,
    collapse: CollapseSet,
    layout: ModeLayout,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "auto",
) -> np.ndarray:
    """Complete quantum channel of a schedule as a dense (d^2, d^2) superoperator.

    Constant segments contribute expm of the Lindblad generator; ramped or
    Gaussian segments are integrated column by column with the RK45 kernel.
    """
    compiled = CompiledSchedule(schedule, layout)
    d = layout.dim
    ls, ldags, m = collapse.scaled_stack(d)
    force_rk = method == "rk45"
    total = np.eye(d * d, dtype=np.complex128)
    ev_idx = 0
    events = compiled.events
    t_prev = 0.0
    while ev_idx < len(events) and events[ev_idx][0] <= 1e-12:
        total = unitary_superop(events[ev_idx][1]) @ total
        ev_idx += 1
    boundaries = sorted({cs.seg.t0 for cs in compiled.segments} | {compiled.duration} | {t for t, _ in events})
    for t_next in boundaries:
        if t_next <= t_prev + 1e-15:
            continue
        cs = _segment_at(compiled, t_prev, t_next)
        dt = t_next - t_prev
        if cs.constant and not force_rk:
            if cs._superop_gen is None:
                cs._superop_gen = lindblad_generator(cs.h_const(), ls)
            total = expm(cs._superop_gen * dt) @ total
        else:
            block = np.empty((d * d, d * d), dtype=np.complex128)
            for j in range(d * d):
                rho = np.zeros(d * d, dtype=np.complex128)
                rho[j] = 1.0
                rho = rho.reshape(d, d)
                rho, _, _, status = _kernels.rk45_segment_rho(
                    rho, t_prev, t_next, 0.0, cs.h0, cs.hbs, cs.hdr, cs.genv, cs.fenv,
                    ls, ldags, m, rtol, atol, MAX_STEPS,
                )
                if status != 0:
                    raise EvolveError(f"RK45 step budget exhausted in segment [{t_prev}, {t_next}]")
                block[:, j] = rho.reshape(-1)
            total = block @ total
        while ev_idx < len(events) and events[ev_idx][0] <= t_next + 1e-12:
            total = unitary_superop(events[ev_idx][1]) @ total
            ev_idx += 1
        t_prev = t_next
    return total
