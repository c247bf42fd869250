"""Pulse envelopes, drive schedules and analytic starting points.

A :class:`DriveSchedule` bundles the beamsplitter drive (amplitude envelope
with cosine ramps, detuning, phase) with transmon pulses and optional
idealized instantaneous rotations, plus the static dispersive shifts, so that
it fully determines the time-dependent Hamiltonian

    H(t) = g(t)/2 (e^{i phi} a b+ + h.c.) - Delta b+b [while the drive is on]
           + chi_e b+b |e><e| + chi_f b+b |f><f|
           + f(t) (e^{i theta} |g><l| + h.c.) - d_omega |l><l| [while a pulse
             addressing ancilla level l is on]

in the rotating frame of the undriven ancilla transition (the pulse detuning
``d_omega`` enters as a frame term over the pulse window).  All rates are in
rad/us and times in us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import ENV_CONST, ENV_GAUSS, ENV_RAMP_DOWN, ENV_RAMP_UP, ENV_ZERO

DEFAULT_TRANSMON_RAMP = 0.024
DEFAULT_BS_RAMP = 0.120


class PulseError(ValueError):
    pass


@dataclass(frozen=True)
class SquarePulse:
    """Cosine-ramped square transmon pulse."""

    amplitude: float
    duration: float
    ramp: float = 0.0
    detuning: float = 0.0
    phase: float = 0.0
    level: int = 1

    def __post_init__(self):
        if not 0.0 <= 2.0 * self.ramp <= self.duration:
            raise PulseError(f"need 0 <= 2*ramp <= duration, got ramp={self.ramp}, duration={self.duration}")
        if self.level not in (1, 2):
            raise PulseError("transmon pulse must address ancilla level 1 (e) or 2 (f)")

    def envelope(self, t: float) -> float:
        return square_envelope(t, self)

    def area(self) -> float:
        """Integral of the envelope, A*(duration - ramp)."""
        return self.amplitude * (self.duration - self.ramp)


@dataclass(frozen=True)
class ChoppedGaussian:
    """Gaussian pulse chopped to 2*n_chop*sigma with the offset subtracted."""

    amplitude: float
    sigma: float
    n_chop: float = 2.0
    detuning: float = 0.0
    phase: float = 0.0
    level: int = 1

    def __post_init__(self):
        if self.sigma <= 0 or self.n_chop <= 0:
            raise PulseError("sigma and n_chop must be positive")
        if self.level not in (1, 2):
            raise PulseError("transmon pulse must address ancilla level 1 (e) or 2 (f)")

    @property
    def duration(self) -> float:
        return 2.0 * self.n_chop * self.sigma

    @property
    def offset(self) -> float:
        return math.exp(-0.5 * self.n_chop**2)

    def envelope(self, t: float) -> float:
        return gaussian_envelope(t, self)

    def area(self) -> float:
        n, s = self.n_chop, self.sigma
        return self.amplitude * (s * math.sqrt(2 * math.pi) * math.erf(n / math.sqrt(2)) - 2 * n * s * self.offset)


@dataclass(frozen=True)
class InstantRotation:
    """Idealized delta-function ancilla rotation at a fixed time."""

    time: float
    angle: float
    phase: float = 0.0
    level: int = 1


@dataclass(frozen=True)
class BeamsplitterDrive:
    """Flat-top beamsplitter drive with cosine-shaped ramps."""

    g_bs: float
    detuning: float
    phase: float = 0.0
    ramp: float = 0.0
    hold: float = 0.0

    def __post_init__(self):
        if self.g_bs < 0:
            raise PulseError("g_bs must be >= 0 (sign is absorbed into the phase)")
        if self.ramp < 0 or self.hold < 0:
            raise PulseError("ramp and hold must be >= 0")

    @property
    def duration(self) -> float:
        return 2.0 * self.ramp + self.hold

    def envelope(self, t: float) -> float:
        r, h = self.ramp, self.hold
        if t < 0 or t > self.duration:
            return 0.0
        if r > 0 and t < r:
            return 0.5 * self.g_bs * (1.0 - math.cos(math.pi * t / r))
        if t <= r + h:
            return self.g_bs
        return 0.5 * self.g_bs * (1.0 + math.cos(math.pi * (t - r - h) / r))


@dataclass(frozen=True)
class DispersiveShifts:
    """Static ancilla-state-dependent shifts of Bob's mode (rad/us)."""

    chi_e: float
    chi_f: float = 0.0


@dataclass(frozen=True)
class DriveSchedule:
    dispersive: DispersiveShifts
    beamsplitter: BeamsplitterDrive | None = None
    bs_start: float = 0.0
    transmon: tuple = ()
    transmon_starts: tuple = ()
    rotations: tuple = ()
    tail: float = 0.0

    def __post_init__(self):
        if len(self.transmon) != len(self.transmon_starts):
            raise PulseError("each transmon pulse needs a start time")
        spans = sorted(
            (s, s + p.duration) for s, p in zip(self.transmon_starts, self.transmon)
        )
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1 - 1e-12:
                raise PulseError("transmon pulses overlap")

    @property
    def duration(self) -> float:
        ends = [0.0]
        if self.beamsplitter is not None:
            ends.append(self.bs_start + self.beamsplitter.duration)
        ends.extend(s + p.duration for s, p in zip(self.transmon_starts, self.transmon))
        ends.extend(r.time for r in self.rotations)
        return max(ends) + self.tail

    def with_tail(self, tail: float) -> "DriveSchedule":
        return replace(self, tail=tail)

    def bs_window(self):
        if self.beamsplitter is None:
            return None
        return (self.bs_start, self.bs_start + self.beamsplitter.duration)

    def envelopes(self, t: float):
        """(beamsplitter, transmon) envelope values at time t."""
        g = 0.0
        if self.beamsplitter is not None:
            g = self.beamsplitter.envelope(t - self.bs_start)
        f = 0.0
        for start, p in zip(self.transmon_starts, self.transmon):
            if start <= t <= start + p.duration:
                f = p.envelope(t - start)
                break
        return g, f


def square_envelope(t: float, p: SquarePulse) -> float:
    """Three-piece cosine-ramped square envelope; t must lie within the pulse."""
    if t < 0.0 or t > p.duration:
        raise PulseError(f"t={t} outside pulse of duration {p.duration}")
    a, tr, tp = p.amplitude, p.ramp, p.duration
    if tr > 0.0 and t < tr:
        return 0.5 * a * (1.0 - math.cos(math.pi * t / tr))
    if t <= tp - tr:
        return a
    return 0.5 * a * (1.0 + math.cos(math.pi * (t - (tp - tr)) / tr))


def gaussian_envelope(t: float, p: ChoppedGaussian) -> float:
    if t < 0.0 or t > p.duration:
        raise PulseError(f"t={t} outside pulse of duration {p.duration}")
    x = (t - p.n_chop * p.sigma) / p.sigma
    return p.amplitude * (math.exp(-0.5 * x * x) - p.offset)


@dataclass(frozen=True)
class ErasureCheckGuess:
    """Analytic starting point for the joint-photon-number erasure check."""

    t_p: float
    g_bs: float
    amplitude: float
    bs_detuning: float
    drive_detuning: float
    n: int
    m: int


def erasure_check_guess(chi: float, n: int = 1, m: int = 2) -> ErasureCheckGuess:
    """Square-pulse operating point: notch the pulse spectrum on the central
    single-photon transition (n detuned Rabi cycles) while the oscillator
    states complete m beamsplitter revolutions.

        T_p  = 2 pi sqrt(4 n^2 - 1) / |chi|
        g_bs = |chi| sqrt(m^2 / (4 n^2 - 1) - 1/4)
        A    = |chi| / (4 sqrt(4 n^2 - 1)),  with delta = chi/2, d_omega = 0.
    """
    if chi == 0.0:
        raise PulseError("chi must be nonzero")
    if n < 1 or m <= n:
        raise PulseError(f"need integers n >= 1 and m > n, got n={n}, m={m}")
    q = 4 * n * n - 1
    disc = m * m / q - 0.25
    if disc <= 0.0:
        raise PulseError(f"m={m} too small for n={n}: beamsplitter amplitude would be imaginary")
    ach = abs(chi)
    return ErasureCheckGuess(
        t_p=2.0 * math.pi * math.sqrt(q) / ach,
        g_bs=ach * math.sqrt(disc),
        amplitude=ach / (4.0 * math.sqrt(q)),
        bs_detuning=0.5 * chi,
        drive_detuning=0.0,
        n=n,
        m=m,
    )


def square_check_schedule(
    chi: float,
    g_bs: float,
    t_p: float,
    amplitude: float | None = None,
    bs_detuning: float | None = None,
    drive_detuning: float = 0.0,
    transmon_ramp: float = 0.0,
    bs_ramp: float = 0.0,
    bs_phase: float = 0.0,
    drive_phase: float = 0.0,
    level: int = 1,
    chi_f: float | None = None,
    alignment: float = 0.0,
    tail: float = 0.0,
) -> DriveSchedule:
    """Erasure-check schedule: simultaneous flat-top transmon and beamsplitter
    pulses with ramp centers aligned (plus an optional alignment offset)."""
    if bs_detuning is None:
        bs_detuning = 0.5 * chi
    if amplitude is None:
        # pi pulse on the zero-photon transition: integral of 2 f(t) dt = pi
        amplitude = 0.5 * math.pi / (t_p - transmon_ramp)
    pulse = SquarePulse(
        amplitude=amplitude,
        duration=t_p,
        ramp=transmon_ramp,
        detuning=drive_detuning,
        phase=drive_phase,
        level=level,
    )
    start = 0.5 * (bs_ramp - transmon_ramp) + alignment
    if start < 0:
        raise PulseError("transmon pulse would start before the schedule; increase the beamsplitter ramp")
    hold = t_p - transmon_ramp - bs_ramp + alignment
    if hold < 0:
        raise PulseError("beamsplitter hold would be negative for these ramp durations")
    bs = BeamsplitterDrive(g_bs=g_bs, detuning=bs_detuning, phase=bs_phase, ramp=bs_ramp, hold=hold)
    chi_e, chi_fv = _dispersive_for_level(chi, level, chi_f)
    return DriveSchedule(
        dispersive=DispersiveShifts(chi_e=chi_e, chi_f=chi_fv),
        beamsplitter=bs,
        bs_start=0.0,
        transmon=(pulse,),
        transmon_starts=(start,),
        tail=tail,
    )


def _dispersive_for_level(chi: float, level: int, chi_f: float | None):
    """chi assignment: the addressed level carries the full shift; when the
    check runs on g-f, the e level defaults to the physical chi/2."""
    if level == 1:
        return chi, (chi_f if chi_f is not None else 0.0)
    return (chi_f if chi_f is not None else 0.5 * chi), chi


def joint_parity_schedule(
    chi: float,
    variant: str = "ge",
    idealized: bool = True,
    g_bs: float | None = None,
    bs_ramp: float = 0.0,
    pulse_width: float = 0.010,
    tail: float = 0.0,
) -> DriveSchedule:
    """Joint-parity check: two pi/2 ancilla pulses separated by a beamsplitter
    hold of 2 pi / |chi| at amplitude (sqrt(3)/2) |chi| and symmetric detuning."""
    if chi == 0.0:
        raise PulseError("chi must be nonzero")
    if variant not in ("ge", "gf"):
        raise PulseError(f"variant must be 'ge' or 'gf', got {variant!r}")
    level = 1 if variant == "ge" else 2
    ach = abs(chi)
    hold = 2.0 * math.pi / ach
    if g_bs is None:
        g_bs = 0.5 * math.sqrt(3.0) * ach
    bs = BeamsplitterDrive(g_bs=g_bs, detuning=0.5 * chi, ramp=bs_ramp, hold=hold)
    chi_e, chi_f = _dispersive_for_level(chi, level, None)
    disp = DispersiveShifts(chi_e=chi_e, chi_f=chi_f)
    t0 = bs_ramp
    t1 = bs_ramp + hold
    if idealized:
        rot = (
            InstantRotation(time=t0, angle=0.5 * math.pi, level=level),
            InstantRotation(time=t1, angle=0.5 * math.pi, level=level),
        )
        return DriveSchedule(
            dispersive=disp, beamsplitter=bs, rotations=rot, tail=tail
        )
    amp = 0.25 * math.pi / pulse_width
    p = SquarePulse(amplitude=amp, duration=pulse_width, level=level)
    return DriveSchedule(
        dispersive=disp,
        beamsplitter=BeamsplitterDrive(g_bs=g_bs, detuning=0.5 * chi, ramp=bs_ramp, hold=hold + 2 * pulse_width),
        transmon=(p, p),
        transmon_starts=(t0, t1 + pulse_width),
        tail=tail,
    )


def selective_pi_pulse_pair(
    chi: float,
    g_bs: float,
    pulse: ChoppedGaussian,
    relative_phase: float,
    bs_ramp: float = 0.0,
    bs_detuning: float | None = None,
    tail: float = 0.0,
) -> DriveSchedule:
    """Two back-to-back zero-photon-selective pi pulses under a common
    beamsplitter drive; the relative drive phase sets the enclosed geometric
    phase (joint-SNAP construction)."""
    if bs_detuning is None:
        bs_detuning = 0.5 * chi
    first = pulse
    second = replace(pulse, phase=pulse.phase + relative_phase)
    span = 2.0 * first.duration
    bs = BeamsplitterDrive(g_bs=g_bs, detuning=bs_detuning, ramp=bs_ramp, hold=span)
    start = bs_ramp
    return DriveSchedule(
        dispersive=DispersiveShifts(chi_e=chi),
        beamsplitter=bs,
        transmon=(first, second),
        transmon_starts=(start, start + first.duration),
        tail=tail,
    )


def idle_schedule(chi: float, duration: float, chi_f: float = 0.0) -> DriveSchedule:
    return DriveSchedule(dispersive=DispersiveShifts(chi_e=chi, chi_f=chi_f), tail=duration)


@dataclass(frozen=True)
class Segment:
    """One piecewise-smooth interval of a schedule, with envelope descriptors
    in the kernel encoding (code, p0, p1, p2, p3)."""

    t0: float
    t1: float
    g_env: tuple
    f_env: tuple
    bs_active: bool
    pulse_index: int  # -1 when no transmon pulse is active

    @property
    def constant(self) -> bool:
        return self.g_env[0] in (ENV_ZERO, ENV_CONST) and self.f_env[0] in (ENV_ZERO, ENV_CONST)


def _breakpoints(schedule: DriveSchedule):
    pts = {0.0, schedule.duration}
    bsw = schedule.bs_window()
    if bsw is not None:
        r = schedule.beamsplitter.ramp
        pts.update((bsw[0], bsw[1]))
        if r > 0:
            pts.update((bsw[0] + r, bsw[1] - r))
    for start, p in zip(schedule.transmon_starts, schedule.transmon):
        pts.update((start, start + p.duration))
        if isinstance(p, SquarePulse) and p.ramp > 0:
            pts.update((start + p.ramp, start + p.duration - p.ramp))
    for rot in schedule.rotations:
        pts.add(rot.time)
    out = sorted(pts)
    merged = [out[0]]
    for t in out[1:]:
        if t - merged[-1] > 1e-12:
            merged.append(t)
    return merged


def _g_env_at(schedule: DriveSchedule, t: float):
    bsw = schedule.bs_window()
    if bsw is None or not (bsw[0] <= t < bsw[1]) or schedule.beamsplitter.g_bs == 0.0:
        return (ENV_ZERO, 0.0, 0.0, 0.0, 0.0), bsw is not None and bsw[0] <= t < bsw[1]
    bs = schedule.beamsplitter
    r = bs.ramp
    if r > 0 and t < bsw[0] + r:
        return (ENV_RAMP_UP, bs.g_bs, bsw[0], r, 0.0), True
    if t < bsw[1] - r:
        return (ENV_CONST, bs.g_bs, 0.0, 0.0, 0.0), True
    return (ENV_RAMP_DOWN, bs.g_bs, bsw[1] - r, r, 0.0), True


def _f_env_at(schedule: DriveSchedule, t: float):
    for i, (start, p) in enumerate(zip(schedule.transmon_starts, schedule.transmon)):
        if not (start <= t < start + p.duration):
            continue
        if isinstance(p, ChoppedGaussian):
            return (ENV_GAUSS, p.amplitude, start + p.n_chop * p.sigma, p.sigma, p.offset), i
        if p.ramp > 0 and t < start + p.ramp:
            return (ENV_RAMP_UP, p.amplitude, start, p.ramp, 0.0), i
        if t < start + p.duration - p.ramp:
            return (ENV_CONST, p.amplitude, 0.0, 0.0, 0.0), i
        return (ENV_RAMP_DOWN, p.amplitude, start + p.duration - p.ramp, p.ramp, 0.0), i
    return (ENV_ZERO, 0.0, 0.0, 0.0, 0.0), -1


def compile_segments(schedule: DriveSchedule):
    """Split a schedule at its envelope breakpoints into kernel-ready segments."""
    pts = _breakpoints(schedule)
    segs = []
    for t0, t1 in zip(pts, pts[1:]):
        tm = 0.5 * (t0 + t1)
        g_env, bs_active = _g_env_at(schedule, tm)
        f_env, idx = _f_env_at(schedule, tm)
        segs.append(Segment(t0=t0, t1=t1, g_env=g_env, f_env=f_env, bs_active=bs_active, pulse_index=idx))
    return segs
