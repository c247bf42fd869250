"""Protocol drivers and error metrics for the dual-rail qubit.

Covers the erasure check (single and repeated, with echo), the joint-parity
check, the zero-photon-selective CPHASE (joint-SNAP) gate with its Ramsey
probe, the two-qubit gate error-channel sampler, and the readout-induced
dephasing estimate.

Measurement model: the ancilla readout is an ideal projection placed a
configurable fraction of the way into the readout window (``flag_fraction``,
default one half: assignment reflects the ancilla state at the window
midpoint); noise stays active for the rest of the window and a flagged
ancilla is then reset ideally.  Deterministic single-oscillator phases accrued
during a drive window are removed by virtual frame rotations calibrated from
the noise-free schedule, mirroring how drive frames are tracked in software
on hardware.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .evolve import (
    CollapseSet,
    NoiseParams,
    apply_superop,
    collapse_operators,
    kraus_superop,
    schedule_superop,
    schedule_unitary,
    unitary_superop,
)
from .hilbert import (
    MixedState,
    ModeLayout,
    PureState,
    build_mode_operators,
    state_vector,
)
from .pulses import (
    ChoppedGaussian,
    DriveSchedule,
    idle_schedule,
    joint_parity_schedule,
    selective_pi_pulse_pair,
)

CARDINAL_LABELS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")


class ProtocolError(ValueError):
    pass


def prepare_cardinal(label: str, layout: ModeLayout) -> PureState:
    """Dual-rail cardinal state in the single-photon manifold, ancilla in g.

    Encoding: |0_L> = |1,0>, |1_L> = |0,1>; |+Z> = |0_L>, equator states are
    the standard equal-weight superpositions.
    """
    zero = state_vector(layout, 1, 0, 0)
    one = state_vector(layout, 0, 1, 0)
    table = {
        "+Z": zero,
        "-Z": one,
        "+X": (zero + one) / math.sqrt(2),
        "-X": (zero - one) / math.sqrt(2),
        "+Y": (zero + 1j * one) / math.sqrt(2),
        "-Y": (zero - 1j * one) / math.sqrt(2),
    }
    if label not in table:
        raise ProtocolError(f"unknown cardinal label {label!r}")
    return PureState(layout, table[label])


def code_space_projector(layout: ModeLayout) -> np.ndarray:
    diag = np.zeros(layout.dim)
    for q in range(layout.dim_q):
        diag[layout.index(1, 0, q)] = 1.0
        diag[layout.index(0, 1, q)] = 1.0
    return np.diag(diag).astype(np.complex128)


def vacuum_projector(layout: ModeLayout) -> np.ndarray:
    diag = np.zeros(layout.dim)
    for q in range(layout.dim_q):
        diag[layout.index(0, 0, q)] = 1.0
    return np.diag(diag).astype(np.complex128)


def swap_cavities_unitary(layout: ModeLayout) -> np.ndarray:
    """Ideal cavity SWAP |n_a, n_b> -> |n_b, n_a> (the echo pulse)."""
    if layout.dim_a != layout.dim_b:
        raise ProtocolError("cavity SWAP needs equal truncations")
    u = np.zeros((layout.dim, layout.dim), dtype=np.complex128)
    for na in range(layout.dim_a):
        for nb in range(layout.dim_b):
            for q in range(layout.dim_q):
                u[layout.index(nb, na, q), layout.index(na, nb, q)] = 1.0
    return u


def beamsplitter_unitary(layout: ModeLayout, angle: float, phase: float = 0.0) -> np.ndarray:
    """exp(-i angle (e^{i phase} a b+ + h.c.)); angle = pi/4 is a 50:50 splitter."""
    from scipy.linalg import expm

    ops = build_mode_operators(layout)
    abdag = ops.a @ ops.b.conj().T
    gen = np.exp(1j * phase) * abdag + np.exp(-1j * phase) * abdag.conj().T
    return expm(-1j * angle * gen)


def local_phase_unitary(layout: ModeLayout, alpha: float, beta: float) -> np.ndarray:
    """Virtual oscillator frame rotation exp(-i alpha n_a - i beta n_b)."""
    diag = np.empty(layout.dim, dtype=np.complex128)
    for na in range(layout.dim_a):
        for nb in range(layout.dim_b):
            ph = cmath.exp(-1j * (alpha * na + beta * nb))
            for q in range(layout.dim_q):
                diag[layout.index(na, nb, q)] = ph
    return np.diag(diag)


def calibrate_local_phases(schedule: DriveSchedule, layout: ModeLayout) -> tuple[float, float]:
    """Single-photon return phases of the noise-free schedule, used as the
    virtual frame update per application."""
    u = schedule_unitary(schedule, layout)
    i10 = layout.index(1, 0, 0)
    i01 = layout.index(0, 1, 0)
    return float(np.angle(u[i10, i10])), float(np.angle(u[i01, i01]))


@dataclass(frozen=True)
class ReadoutModel:
    """Readout window: idle of tau_ro us with the projection (assignment) at
    flag_fraction of the way through; flagged outcomes get an ideal reset."""

    tau_ro: float = 1.65
    flag_fraction: float = 0.5

    def __post_init__(self):
        if self.tau_ro < 0 or not 0.0 <= self.flag_fraction <= 1.0:
            raise ProtocolError("invalid readout model")

    @classmethod
    def none(cls) -> "ReadoutModel":
        return cls(tau_ro=0.0)


def _ancilla_reset_kraus(layout: ModeLayout):
    from .hilbert import ancilla_transition

    ops = build_mode_operators(layout)
    ks = [ops.proj_g, ancilla_transition(layout, 0, 1)]
    if layout.dim_q == 3:
        ks.append(ancilla_transition(layout, 0, 2))
    return ks


@dataclass
class CompiledCheck:
    """One mid-circuit check as branch superoperators.

    ``s_pass`` and ``s_flag`` are the (trace-decreasing) branches conditioned
    on the assignment; ``s_uncond = s_pass + s_flag`` is the full channel with
    the flagged ancilla reset.  ``duration`` includes the readout window.
    """

    layout: ModeLayout
    s_pass: np.ndarray
    s_flag: np.ndarray
    duration: float

    @property
    def s_uncond(self) -> np.ndarray:
        return self.s_pass + self.s_flag

    def run(self, state) -> "CheckOutcome":
        rho = state.density().rho if isinstance(state, PureState) else state.rho
        bp = apply_superop(self.s_pass, rho)
        bf = apply_superop(self.s_flag, rho)
        p_flag = float(np.real(np.trace(bf)))
        passed = MixedState(self.layout, bp / np.trace(bp)) if p_flag < 1.0 - 1e-12 else None
        flagged = MixedState(self.layout, bf / np.trace(bf)) if p_flag > 1e-12 else None
        return CheckOutcome(p_flag=p_flag, passed=passed, flagged=flagged)


@dataclass
class CheckOutcome:
    p_flag: float
    passed: MixedState | None
    flagged: MixedState | None


def compile_check(
    schedule: DriveSchedule,
    noise: NoiseParams,
    layout: ModeLayout,
    readout: ReadoutModel = ReadoutModel(),
    rtol: float = 1e-9,
    atol: float = 1e-11,
    calibrate: bool = True,
    method: str = "auto",
) -> CompiledCheck:
    """Build the branch superoperators of a mid-circuit check.

    Works for any check whose flag is 'ancilla not in g' at assignment time:
    the erasure check (flag = e) and both joint-parity variants (for g-f the
    e level is the error flag and f the even-parity outcome; both count as
    erasures here).
    """
    collapse = collapse_operators(noise, layout)
    ops = build_mode_operators(layout)
    s = schedule_superop(schedule, collapse, layout, rtol=rtol, atol=atol, method=method)
    if calibrate:
        alpha, beta = calibrate_local_phases(schedule, layout)
        s = unitary_superop(local_phase_unitary(layout, alpha, beta)) @ s
    chi = schedule.dispersive
    t1 = readout.flag_fraction * readout.tau_ro
    t2 = readout.tau_ro - t1
    if t1 > 0:
        s = schedule_superop(idle_schedule(chi.chi_e, t1, chi.chi_f), collapse, layout, rtol=rtol, atol=atol) @ s
    p_g = ops.proj_g
    p_flag = ops.identity - p_g
    s_pass = kraus_superop([p_g]) @ s
    s_flag = kraus_superop([p_flag]) @ s
    if t2 > 0:
        tail = schedule_superop(idle_schedule(chi.chi_e, t2, chi.chi_f), collapse, layout, rtol=rtol, atol=atol)
        s_pass = tail @ s_pass
        s_flag = tail @ s_flag
    s_flag = kraus_superop(_ancilla_reset_kraus(layout)) @ s_flag
    return CompiledCheck(
        layout=layout,
        s_pass=s_pass,
        s_flag=s_flag,
        duration=schedule.duration + readout.tau_ro,
    )


def run_erasure_check(
    state,
    schedule: DriveSchedule,
    noise: NoiseParams,
    layout: ModeLayout,
    readout: ReadoutModel = ReadoutModel(),
) -> CheckOutcome:
    """Single erasure check on a state: flag probability and conditioned states."""
    return compile_check(schedule, noise, layout, readout).run(state)


def false_negative_rate(
    schedule: DriveSchedule,
    noise: NoiseParams,
    layout: ModeLayout,
    readout: ReadoutModel = ReadoutModel(),
) -> float:
    """P(no flag | cavities leaked to |0,0>), post-selected on staying in |0,0>."""
    check = compile_check(schedule, noise, layout, readout)
    rho0 = PureState(layout, state_vector(layout, 0, 0, 0)).density().rho
    bp = apply_superop(check.s_pass, rho0)
    bf = apply_superop(check.s_flag, rho0)
    pvac = vacuum_projector(layout)
    w_pass = float(np.real(np.trace(pvac @ bp)))
    w_flag = float(np.real(np.trace(pvac @ bf)))
    return w_pass / (w_pass + w_flag)


# ---------------------------------------------------------------------------
# Repeated checks and tomography-style analysis
# ---------------------------------------------------------------------------


def pauli_rate_from_fidelity(fbar: float) -> float:
    """Total Pauli probability from the cardinal-average state fidelity, 3/2 (1 - F)."""
    if not 0.0 <= fbar <= 1.0 + 1e-12:
        raise ProtocolError(f"average fidelity must be in [0, 1], got {fbar}")
    return 1.5 * (1.0 - min(fbar, 1.0))


@dataclass
class RepeatedCheckData:
    """Raw per-n results of the repeated-check (or idle) tomography sequence."""

    n_values: np.ndarray
    mode: str
    echo: bool
    success_prob: dict = field(default_factory=dict)
    fidelity: dict = field(default_factory=dict)
    p00: np.ndarray | None = None

    def mean_success(self) -> np.ndarray:
        return np.mean([self.success_prob[k] for k in self.success_prob], axis=0)

    def mean_fidelity(self) -> np.ndarray:
        return np.mean([self.fidelity[k] for k in self.fidelity], axis=0)


def repeated_check_experiment(
    check: CompiledCheck,
    layout: ModeLayout,
    n_values=None,
    labels=CARDINAL_LABELS,
    echo: bool = True,
    mode: str = "check",
    noise: NoiseParams | None = None,
    chi: float | None = None,
) -> RepeatedCheckData:
    """Prepare each cardinal state, apply n checks (echo SWAP halfway), and
    extract per-n pass probability, post-selected code-space fidelity and the
    unconditioned leakage probability P00.

    ``mode="idle"`` replaces every check by a free-evolution delay of the same
    duration (noise and chi must then be given).
    """
    if n_values is None:
        n_values = np.arange(0, 21)
    n_values = np.asarray(n_values, dtype=int)
    if mode == "check":
        s_step_pass = check.s_pass
        s_step_uncond = check.s_uncond
    elif mode == "idle":
        if noise is None or chi is None:
            raise ProtocolError("idle mode needs noise parameters and chi")
        collapse = collapse_operators(noise, layout)
        s_idle = schedule_superop(idle_schedule(chi, check.duration), collapse, layout)
        s_step_pass = s_idle
        s_step_uncond = s_idle
    else:
        raise ProtocolError(f"mode must be 'check' or 'idle', got {mode!r}")
    s_echo = unitary_superop(swap_cavities_unitary(layout))
    pcode = code_space_projector(layout)
    pvac = vacuum_projector(layout)
    nmax = int(n_values.max())
    data = RepeatedCheckData(n_values=n_values, mode=mode, echo=echo)
    p00_acc = np.zeros(len(n_values))
    for label in labels:
        psi = prepare_cardinal(label, layout)
        rho0 = psi.density().rho
        fwd_pass = [rho0]
        fwd_unc = [rho0]
        for _ in range(nmax):
            fwd_pass.append(apply_superop(s_step_pass, fwd_pass[-1]))
            fwd_unc.append(apply_superop(s_step_uncond, fwd_unc[-1]))
        succ = np.empty(len(n_values))
        fid = np.empty(len(n_values))
        p00 = np.empty(len(n_values))
        for i, n in enumerate(n_values):
            k = n // 2
            if echo and n > 0:
                rho_p = apply_superop(s_echo, fwd_pass[k])
                rho_u = apply_superop(s_echo, fwd_unc[k])
                for _ in range(n - k):
                    rho_p = apply_superop(s_step_pass, rho_p)
                    rho_u = apply_superop(s_step_uncond, rho_u)
                target = swap_cavities_unitary(layout) @ psi.vec
            else:
                rho_p = fwd_pass[n]
                rho_u = fwd_unc[n]
                target = psi.vec
            succ[i] = float(np.real(np.trace(rho_p)))
            num = float(np.real(target.conj() @ (rho_p @ target)))
            den = float(np.real(np.trace(pcode @ rho_p)))
            fid[i] = num / den if den > 0 else 0.0
            p00[i] = float(np.real(np.trace(pvac @ rho_u)))
        data.success_prob[label] = succ
        data.fidelity[label] = fid
        p00_acc += p00 / len(labels)
    data.p00 = p00_acc
    return data


def _slope_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.vstack([x, np.ones_like(x)]).T
    coeff, *_ = np.linalg.lstsq(a, y, rcond=None)
    return float(coeff[0])


@dataclass(frozen=True)
class ErrorBudget:
    """Per-check error rates extracted from the repeated-check experiment."""

    p_fn: float
    p_fp: float
    p_erasure: float
    p_intrinsic: float
    p_pauli: float
    per_cardinal_fidelity: dict
    n_values: tuple
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "p_fn": self.p_fn,
            "p_fp": self.p_fp,
            "p_erasure": self.p_erasure,
            "p_intrinsic": self.p_intrinsic,
            "p_pauli": self.p_pauli,
            "per_cardinal_fidelity": {k: list(map(float, v)) for k, v in self.per_cardinal_fidelity.items()},
            "n_values": list(map(int, self.n_values)),
            "note": self.note,
        }


def error_budget_from_data(data: RepeatedCheckData, p_fn: float = float("nan")) -> ErrorBudget:
    """Fit the per-check rates: erasure from -ln(success), intrinsic from
    -ln(1 - P00), Pauli from the slope of 3/2 (1 - F) over n >= 1."""
    n = data.n_values
    sel = n >= 1
    p_erasure = _slope_fit(n[sel], -np.log(np.clip(data.mean_success()[sel], 1e-300, None)))
    p_intrinsic = _slope_fit(n[sel], -np.log(np.clip(1.0 - data.p00[sel], 1e-300, None)))
    pauli_n = 1.5 * (1.0 - data.mean_fidelity())
    p_pauli = _slope_fit(n[sel], pauli_n[sel])
    return ErrorBudget(
        p_fn=p_fn,
        p_fp=p_erasure - p_intrinsic,
        p_erasure=p_erasure,
        p_intrinsic=p_intrinsic,
        p_pauli=p_pauli,
        per_cardinal_fidelity=dict(data.fidelity),
        n_values=tuple(int(v) for v in n),
    )


# ---------------------------------------------------------------------------
# Logical measurement
# ---------------------------------------------------------------------------


def logical_measurement(state, axis: str, post_select: bool = True):
    """Ideal end-of-line logical measurement.

    X/Y are measured by first applying a 50:50 beamsplitter rotation onto Z,
    then reading the photon number of both cavities; post-selection keeps the
    single-photon manifold.  Returns (expectation, pass_probability).
    """
    layout = state.layout
    rho = state.density().rho if isinstance(state, PureState) else state.rho
    if axis not in ("X", "Y", "Z"):
        raise ProtocolError(f"axis must be X, Y or Z, got {axis!r}")
    if axis != "Z":
        phase = 0.5 * math.pi if axis == "X" else math.pi
        u = beamsplitter_unitary(layout, 0.25 * math.pi, phase)
        rho = u @ rho @ u.conj().T
    p10 = sum(float(np.real(rho[layout.index(1, 0, q), layout.index(1, 0, q)])) for q in range(layout.dim_q))
    p01 = sum(float(np.real(rho[layout.index(0, 1, q), layout.index(0, 1, q)])) for q in range(layout.dim_q))
    pass_prob = p10 + p01
    if pass_prob <= 0:
        return 0.0, 0.0
    value = (p10 - p01) / pass_prob if post_select else (p10 - p01)
    return value, pass_prob


# ---------------------------------------------------------------------------
# Joint-parity check
# ---------------------------------------------------------------------------


@dataclass
class ParityOutcome:
    probabilities: dict
    conditioned: dict
    p_erasure_flag: float


def run_joint_parity_check(
    state,
    variant: str = "ge",
    noise: NoiseParams | None = None,
    layout: ModeLayout | None = None,
    chi: float = None,
    idealized: bool = True,
    readout: ReadoutModel = ReadoutModel.none(),
    g_bs: float | None = None,
) -> ParityOutcome:
    """Joint-parity check: even total photon number maps the ancilla to its
    upper check level (e, or f with the g-f encoding where e is an error
    flag); an erasure is declared whenever the ancilla is not found in g.
    """
    if layout is None:
        layout = state.layout
    if chi is None:
        raise ProtocolError("chi is required")
    if noise is None:
        noise = NoiseParams.off()
    schedule = joint_parity_schedule(chi, variant=variant, idealized=idealized, g_bs=g_bs)
    collapse = collapse_operators(noise, layout)
    s = schedule_superop(schedule, collapse, layout)
    alpha, beta = calibrate_local_phases(schedule, layout)
    s = unitary_superop(local_phase_unitary(layout, alpha, beta)) @ s
    ops = build_mode_operators(layout)
    t1 = readout.flag_fraction * readout.tau_ro
    if t1 > 0:
        s = schedule_superop(idle_schedule(chi, t1), collapse, layout) @ s
    rho = state.density().rho if isinstance(state, PureState) else state.rho
    rho = apply_superop(s, rho)
    projs = {"g": ops.proj_g, "e": ops.proj_e}
    if layout.dim_q == 3:
        projs["f"] = ops.proj_f
    probs, conditioned = {}, {}
    for name, p in projs.items():
        branch = p @ rho @ p
        w = float(np.real(np.trace(branch)))
        probs[name] = w
        conditioned[name] = MixedState(layout, branch / w) if w > 1e-12 else None
    return ParityOutcome(
        probabilities=probs,
        conditioned=conditioned,
        p_erasure_flag=1.0 - probs["g"],
    )


# ---------------------------------------------------------------------------
# Joint-SNAP CPHASE(theta) and Ramsey probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CphaseSummary:
    conditional_phase: float
    phases: dict
    raw_phases: dict
    leakage: float
    p_ancilla_excited: float
    phase_offset: float


def _wrap(phi: float) -> float:
    return (phi + math.pi) % (2.0 * math.pi) - math.pi


def _basis_amplitudes(u: np.ndarray, layout: ModeLayout):
    amps = {}
    for na, nb in ((0, 0), (0, 1), (1, 0), (1, 1)):
        i = layout.index(na, nb, 0)
        amps[(na, nb)] = u[i, i]
    return amps


def cphase_pulse_template(chi: float, sigma: float = 1.5, n_chop: float = 3.0) -> ChoppedGaussian:
    """Zero-photon-selective pi pulse template for the joint-SNAP gate."""
    s = sigma
    area = s * math.sqrt(2 * math.pi) * math.erf(n_chop / math.sqrt(2)) - 2 * n_chop * s * math.exp(-0.5 * n_chop**2)
    return ChoppedGaussian(amplitude=0.5 * math.pi / area, sigma=s, n_chop=n_chop)


def calibrate_cphase_offset(
    chi: float,
    g_bs: float,
    layout: ModeLayout,
    pulse: ChoppedGaussian | None = None,
) -> float:
    """Drive-phase offset that zeroes the conditional phase of the reference
    (theta = 0) gate; the geometric phase is linear in the relative drive
    phase, so one reference run calibrates every theta."""
    if pulse is None:
        pulse = cphase_pulse_template(chi)
    sched = selective_pi_pulse_pair(chi, g_bs, pulse, relative_phase=-math.pi)
    u = schedule_unitary(sched, layout)
    amps = _basis_amplitudes(u, layout)
    inv = _wrap(
        np.angle(amps[(0, 0)]) + np.angle(amps[(1, 1)]) - np.angle(amps[(0, 1)]) - np.angle(amps[(1, 0)])
    )
    return -inv


def cphase_joint_snap(
    theta: float,
    chi: float,
    g_bs: float,
    layout: ModeLayout,
    pulse: ChoppedGaussian | None = None,
    noise: NoiseParams | None = None,
    phase_offset: float | None = None,
) -> CphaseSummary:
    """CPHASE(theta) via two consecutive zero-photon-selective pi pulses.

    The relative drive phase of the second pulse encloses a geometric phase
    on the joint-vacuum component only.  Reported per-state phases are in the
    virtual-frame gauge (single-oscillator rotations and the global phase
    removed); the gauge-invariant content is ``conditional_phase``.
    """
    if pulse is None:
        pulse = cphase_pulse_template(chi)
    if phase_offset is None:
        phase_offset = calibrate_cphase_offset(chi, g_bs, layout, pulse)
    sched = selective_pi_pulse_pair(chi, g_bs, pulse, relative_phase=theta - math.pi + phase_offset)
    u = schedule_unitary(sched, layout)
    amps = _basis_amplitudes(u, layout)
    raw = {k: float(np.angle(v)) for k, v in amps.items()}
    leakage = max(1.0 - float(abs(v)) ** 2 for v in amps.values())
    inv = _wrap(raw[(0, 0)] + raw[(1, 1)] - raw[(0, 1)] - raw[(1, 0)])
    phases = {(0, 0): inv, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 0.0}
    p_exc = 0.0
    if noise is not None:
        collapse = collapse_operators(noise, layout)
        s = schedule_superop(sched, collapse, layout)
        ops = build_mode_operators(layout)
        p_not_g = ops.identity - ops.proj_g
        for na, nb in ((0, 0), (0, 1), (1, 0), (1, 1)):
            rho0 = PureState(layout, state_vector(layout, na, nb, 0)).density().rho
            rho = apply_superop(s, rho0)
            p_exc += 0.25 * float(np.real(np.trace(p_not_g @ rho)))
    return CphaseSummary(
        conditional_phase=inv,
        phases={f"{a}{b}": p for (a, b), p in phases.items()},
        raw_phases={f"{a}{b}": p for (a, b), p in raw.items()},
        leakage=leakage,
        p_ancilla_excited=p_exc,
        phase_offset=phase_offset,
    )


def ramsey_phase_probe(
    theta: float,
    alice_state: int,
    phase_grid,
    chi: float,
    g_bs: float,
    layout: ModeLayout,
    pulse: ChoppedGaussian | None = None,
    noise: NoiseParams | None = None,
    phase_offset: float | None = None,
):
    """Ramsey probe of the phase Bob's superposition acquires during the gate.

    Bob starts in (|0> + |1>)/sqrt(2) with Alice in a Fock state; the return
    is the oscillation trace over the analysis phases plus the fitted phase
    offset (the angle of Bob's 0-1 coherence, post-selected on the ancilla
    returning to g).
    """
    if alice_state not in (0, 1):
        raise ProtocolError("alice_state must be 0 or 1")
    if pulse is None:
        pulse = cphase_pulse_template(chi)
    if phase_offset is None:
        phase_offset = calibrate_cphase_offset(chi, g_bs, layout, pulse)
    sched = selective_pi_pulse_pair(chi, g_bs, pulse, relative_phase=theta - math.pi + phase_offset)
    v0 = state_vector(layout, alice_state, 0, 0)
    v1 = state_vector(layout, alice_state, 1, 0)
    psi0 = PureState(layout, (v0 + v1) / math.sqrt(2.0))
    i0 = layout.index(alice_state, 0, 0)
    i1 = layout.index(alice_state, 1, 0)
    if noise is None:
        u = schedule_unitary(sched, layout)
        psi = u @ psi0.vec
        coh = psi[i0] * np.conj(psi[i1])
    else:
        collapse = collapse_operators(noise, layout)
        s = schedule_superop(sched, collapse, layout)
        rho = apply_superop(s, psi0.density().rho)
        coh = rho[i0, i1]
    phase_grid = np.asarray(phase_grid, dtype=float)
    trace = 0.5 + np.real(coh * np.exp(-1j * phase_grid))
    return trace, float(np.angle(coh))


# ---------------------------------------------------------------------------
# Two-qubit gate error-channel sampler
# ---------------------------------------------------------------------------

PAULIS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class GateErrorSample:
    erased: tuple
    missed: bool
    pauli: tuple
    gate: str


def sample_gate_error_channel(p: float, r_e: float, p_fn: float, gate: str, rng) -> GateErrorSample:
    """One draw from the two-qubit gate error channel.

    With probability p(1 - R_e) both qubits get a uniform two-qubit Pauli;
    with probability p R_e one (uniformly chosen) qubit is erased and the
    partner gets the gate-dependent leakage-induced Pauli: CZ partner I/Z,
    CX with leaked control gives the target I/X, CX with leaked target gives
    the control I/Z.  Erased events are missed (no flag) with probability
    p_fn.
    """
    for name, v in (("p", p), ("r_e", r_e), ("p_fn", p_fn)):
        if not 0.0 <= v <= 1.0:
            raise ProtocolError(f"{name} must be a probability, got {v}")
    if gate not in ("CX", "CZ"):
        raise ProtocolError(f"gate must be CX or CZ, got {gate!r}")
    u = rng.random()
    if u < p * (1.0 - r_e):
        pauli = (PAULIS[rng.integers(4)], PAULIS[rng.integers(4)])
        return GateErrorSample(erased=(False, False), missed=False, pauli=pauli, gate=gate)
    if u < p:
        which = int(rng.integers(2))
        partner_flip = bool(rng.integers(2))
        if gate == "CZ":
            partner = "Z" if partner_flip else "I"
        elif which == 0:  # leaked control: target gets I/X
            partner = "X" if partner_flip else "I"
        else:  # leaked target: control gets I/Z
            partner = "Z" if partner_flip else "I"
        pauli = ["I", "I"]
        pauli[1 - which] = partner
        erased = [False, False]
        erased[which] = True
        missed = bool(rng.random() < p_fn)
        return GateErrorSample(erased=tuple(erased), missed=missed, pauli=tuple(pauli), gate=gate)
    return GateErrorSample(erased=(False, False), missed=False, pauli=("I", "I"), gate=gate)


def sample_gate_error_channel_counts(p, r_e, p_fn, gate, rng, size: int) -> dict:
    """Vectorized tally over ``size`` draws (for statistics checks and the CLI)."""
    u = rng.random(size)
    pauli_both = u < p * (1.0 - r_e)
    erased = (u >= p * (1.0 - r_e)) & (u < p)
    which = rng.integers(2, size=size)
    missed = rng.random(size) < p_fn
    return {
        "draws": size,
        "pauli_both": int(np.count_nonzero(pauli_both)),
        "erased": int(np.count_nonzero(erased)),
        "erased_qubit0": int(np.count_nonzero(erased & (which == 0))),
        "missed": int(np.count_nonzero(erased & missed)),
    }


# ---------------------------------------------------------------------------
# Readout-induced dephasing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReadoutDephasing:
    gamma_phi: float
    p_pauli: float


def readout_induced_dephasing(nbar: float, kappa: float, chi_cr: float, duration: float) -> ReadoutDephasing:
    """Shot-noise dephasing of a cavity from photons in the readout resonator.

    Gamma_phi = nbar kappa chi^2 / (kappa^2 + chi^2) and the per-check Pauli
    probability is Gamma_phi t / 2 (exact formula values, including the
    Gamma_phi = 0 limits at chi = 0 or kappa -> inf).
    """
    for name, v in (("nbar", nbar), ("kappa", kappa), ("duration", duration)):
        if v < 0:
            raise ProtocolError(f"{name} must be nonnegative")
    denom = kappa * kappa + chi_cr * chi_cr
    gamma = 0.0 if denom == 0.0 else nbar * kappa * chi_cr * chi_cr / denom
    return ReadoutDephasing(gamma_phi=gamma, p_pauli=0.5 * gamma * duration)


def readout_cross_kerr_estimate(chi_tr: float, chi_ct: float, alpha: float) -> float:
    """Readout-resonator/cavity cross-Kerr estimate chi_tr * chi_ct / alpha."""
    return chi_tr * chi_ct / alpha
