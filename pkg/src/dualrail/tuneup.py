"""Calibration fits and automated pulse tune-up against the simulator.

Chevron fits recover the beamsplitter amplitude and resonance, a degree-5
polynomial maps DAC amplitude to g_bs, and the square / chopped-Gaussian
erasure-check pulses are tuned by derivative-free local search on the summed
infidelity of the three defining transfers:

    |0,0,g> -> |0,0,e>,   |0,1,g> -> |0,1,g>,   |1,0,g> -> |1,0,g>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar

from .evolve import propagate_psi
from .hilbert import ModeLayout, state_vector
from .pulses import (
    BeamsplitterDrive,
    ChoppedGaussian,
    DispersiveShifts,
    DriveSchedule,
    ErasureCheckGuess,
    erasure_check_guess,
    square_check_schedule,
)


class TuneupError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Chevron calibration
# ---------------------------------------------------------------------------


def chevron_model(omega, t, g_bs, omega0, a, c, phi):
    """Detuned beamsplitter population-exchange pattern.

    P1(omega, t) = A [cos^2(W t/2 + phi) + ((omega - omega0)/W)^2 sin^2(W t/2 + phi)] + c
    with W = sqrt(g_bs^2 + (omega - omega0)^2).
    """
    d = omega - omega0
    w = np.sqrt(g_bs**2 + d**2)
    ph = 0.5 * w * t + phi
    return a * (np.cos(ph) ** 2 + (d / w) ** 2 * np.sin(ph) ** 2) + c


def simulate_chevron(
    g_bs: float,
    omega0: float,
    t_grid,
    freq_grid,
    layout: ModeLayout | None = None,
    noise=None,
    bs_ramp: float = 0.0,
):
    """P(one photon in Bob) after driving |0,1,g> with a detuned beamsplitter.

    Returns a (len(freq_grid), len(t_grid)) matrix; ``freq_grid`` holds drive
    frequencies relative to the same reference as ``omega0``.  Sampling
    happens during the flat top, after the optional ramp.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    freq_grid = np.asarray(freq_grid, dtype=float)
    if len(t_grid) == 0 or len(freq_grid) == 0:
        raise TuneupError("time and frequency grids must be nonempty")
    if layout is None:
        layout = ModeLayout(3, 3, 2)
    from .evolve import CollapseSet, evolve_lindblad, evolve_schrodinger
    from .hilbert import MixedState, PureState, build_mode_operators

    ops = build_mode_operators(layout)
    proj01 = np.zeros((layout.dim, layout.dim), dtype=np.complex128)
    for q in range(layout.dim_q):
        i = layout.index(0, 1, q)
        proj01[i, i] = 1.0
    psi0 = PureState(layout, state_vector(layout, 0, 1, 0))
    out = np.empty((len(freq_grid), len(t_grid)))
    for i, f in enumerate(freq_grid):
        bs = BeamsplitterDrive(g_bs=g_bs, detuning=f - omega0, ramp=bs_ramp, hold=float(t_grid.max()))
        sched = DriveSchedule(dispersive=DispersiveShifts(chi_e=0.0), beamsplitter=bs)
        samples = bs_ramp + t_grid
        if noise is None:
            traj = evolve_schrodinger(sched, psi0, samples)
        else:
            from .evolve import collapse_operators

            traj = evolve_lindblad(sched, psi0.density(), collapse_operators(noise, layout), samples)
        for j, st in enumerate(traj.states):
            vec = getattr(st, "vec", None)
            if vec is not None:
                out[i, j] = float(np.real(vec.conj() @ (proj01 @ vec)))
            else:
                out[i, j] = float(np.real(np.trace(proj01 @ st.rho)))
    return out


@dataclass(frozen=True)
class ChevronFitResult:
    g_bs: float
    omega0: float
    a: float
    c: float
    phi: float
    residual_norm: float
    cov_diag: tuple


def fit_chevron(data, freq_grid, t_grid) -> ChevronFitResult:
    """Nonlinear least squares of the chevron pattern.

    Initial guesses: omega0 from the maximum-contrast frequency column, g_bs
    from the FFT peak of the on-resonance time trace.
    """
    data = np.asarray(data, dtype=float)
    freq_grid = np.asarray(freq_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    contrast = data.std(axis=1)
    i0 = int(np.argmax(contrast))
    omega0_init = float(freq_grid[i0])
    trace = data[i0] - data[i0].mean()
    dt = float(t_grid[1] - t_grid[0])
    spec = np.abs(np.fft.rfft(trace, n=8 * len(trace)))
    nu = np.fft.rfftfreq(8 * len(trace), d=dt)
    g_init = 2.0 * math.pi * float(nu[np.argmax(spec[1:]) + 1])
    w, t = np.meshgrid(freq_grid, t_grid, indexing="ij")

    def resid(x):
        return (chevron_model(w, t, *x) - data).ravel()

    x0 = np.array([g_init, omega0_init, float(np.ptp(data)), float(data.min()), 0.0])
    sol = least_squares(resid, x0, max_nfev=2000)
    if not sol.success:
        raise TuneupError(f"chevron fit did not converge: {sol.message}; best-so-far {sol.x}")
    jtj = sol.jac.T @ sol.jac
    dof = max(sol.fun.size - sol.x.size, 1)
    try:
        cov = np.linalg.inv(jtj) * 2.0 * sol.cost / dof
        cov_diag = tuple(float(v) for v in np.diag(cov))
    except np.linalg.LinAlgError:
        cov_diag = tuple(float("nan") for _ in sol.x)
    g_fit, om0, a, c, phi = sol.x
    return ChevronFitResult(
        g_bs=abs(float(g_fit)),
        omega0=float(om0),
        a=float(a),
        c=float(c),
        phi=float(phi),
        residual_norm=float(np.linalg.norm(sol.fun)),
        cov_diag=cov_diag,
    )


def fit_amplitude_polynomial(dac_amps, g_bs_values, degree: int = 5):
    """Least-squares degree-5 polynomial through the origin, mapping DAC
    amplitude to g_bs.  Returns (coefficients c1..c5, monotonic, max_residual);
    evaluate with :func:`eval_amplitude_polynomial`."""
    x = np.asarray(dac_amps, dtype=float)
    y = np.asarray(g_bs_values, dtype=float)
    if len(x) < degree + 1:
        raise TuneupError(f"need at least {degree + 1} points, got {len(x)}")
    basis = np.vstack([x**k for k in range(1, degree + 1)]).T
    coeffs, *_ = np.linalg.lstsq(basis, y, rcond=None)
    fit = basis @ coeffs
    grid = np.linspace(x.min(), x.max(), 512)
    deriv = sum(k * coeffs[k - 1] * grid ** (k - 1) for k in range(1, degree + 1))
    return tuple(float(c) for c in coeffs), bool(np.all(deriv >= 0)), float(np.max(np.abs(fit - y)))


def eval_amplitude_polynomial(coeffs, x):
    x = np.asarray(x, dtype=float)
    return sum(c * x ** (k + 1) for k, c in enumerate(coeffs))


# ---------------------------------------------------------------------------
# Square-pulse erasure-check tune-up
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuneupResult:
    t_p: float
    g_bs: float
    amplitude: float
    bs_detuning: float
    drive_detuning: float
    cost: float
    cost_trace: tuple
    n_iterations: int
    converged: bool

    def as_dict(self) -> dict:
        return {
            "t_p_us": self.t_p,
            "g_bs_rad_per_us": self.g_bs,
            "amplitude_rad_per_us": self.amplitude,
            "bs_detuning_rad_per_us": self.bs_detuning,
            "drive_detuning_rad_per_us": self.drive_detuning,
            "cost": self.cost,
            "iterations": self.n_iterations,
            "converged": self.converged,
        }


def _transfer_cost(chi, layout, transmon_ramp, bs_ramp, level=1):
    targets = [
        (state_vector(layout, 0, 0, 0), state_vector(layout, 0, 0, level)),
        (state_vector(layout, 0, 1, 0), state_vector(layout, 0, 1, 0)),
        (state_vector(layout, 1, 0, 0), state_vector(layout, 1, 0, 0)),
    ]

    def cost(g_bs, bs_det, t_p, amp, d_det):
        if g_bs <= 0 or t_p <= 2 * max(transmon_ramp, bs_ramp) or amp <= 0:
            return 3.0
        sched = square_check_schedule(
            chi=chi,
            g_bs=g_bs,
            t_p=t_p,
            amplitude=amp,
            bs_detuning=bs_det,
            drive_detuning=d_det,
            transmon_ramp=transmon_ramp,
            bs_ramp=bs_ramp,
            level=level,
        )
        total = 0.0
        for src, dst in targets:
            psi = propagate_psi(sched, src, layout)
            total += 1.0 - abs(np.vdot(dst, psi)) ** 2
        return max(total, 0.0)

    return cost


def tune_square_erasure_check(
    guess: ErasureCheckGuess,
    chi: float,
    layout: ModeLayout | None = None,
    transmon_ramp: float = 0.0,
    bs_ramp: float = 0.0,
    bounds_scale: float = 0.25,
    cost_tol: float = 1e-5,
    step_tol: float = 1e-9,
    max_iter: int = 600,
    level: int = 1,
) -> TuneupResult:
    """Derivative-free local search over (g_bs, beamsplitter detuning, T_p,
    amplitude, drive detuning) minimizing the summed transfer infidelities of
    the noise-free check.  Bounds clip each parameter to within
    ``bounds_scale`` (relative) of the analytic guess."""
    if layout is None:
        layout = ModeLayout(3, 3, 2 if level == 1 else 3)
    cost_fn = _transfer_cost(chi, layout, transmon_ramp, bs_ramp, level)
    scales = np.array([guess.g_bs, abs(chi), guess.t_p, guess.amplitude, abs(chi)])
    x0 = np.array([guess.g_bs, guess.bs_detuning, guess.t_p, guess.amplitude, guess.drive_detuning]) / scales
    lo = x0 - bounds_scale
    hi = x0 + bounds_scale
    trace: list = []

    def f(x):
        c = cost_fn(*(x * scales))
        trace.append(c if not trace else min(c, trace[-1]))
        return c

    res = minimize(
        f,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={"xatol": step_tol, "fatol": 1e-12, "maxiter": max_iter, "maxfev": 4 * max_iter},
    )
    g_bs, bs_det, t_p, amp, d_det = res.x * scales
    return TuneupResult(
        t_p=float(t_p),
        g_bs=float(g_bs),
        amplitude=float(amp),
        bs_detuning=float(bs_det),
        drive_detuning=float(d_det),
        cost=float(res.fun),
        cost_trace=tuple(trace),
        n_iterations=int(res.nit),
        converged=bool(res.fun < cost_tol),
    )


@lru_cache(maxsize=32)
def tuned_square_check(
    chi: float,
    n: int = 1,
    m: int = 2,
    transmon_ramp: float = 0.0,
    bs_ramp: float = 0.0,
    level: int = 1,
) -> TuneupResult:
    """Memoized tune-up from the analytic (n, m) guess; raises if it fails."""
    guess = erasure_check_guess(chi, n, m)
    result = tune_square_erasure_check(
        guess, chi, transmon_ramp=transmon_ramp, bs_ramp=bs_ramp, level=level
    )
    if not result.converged and result.cost > 1e-4:
        raise TuneupError(f"square check tune-up did not converge: cost {result.cost:.3e}")
    return result


def tuned_check_schedule(chi: float, result: TuneupResult, transmon_ramp=0.0, bs_ramp=0.0, level=1):
    return square_check_schedule(
        chi=chi,
        g_bs=result.g_bs,
        t_p=result.t_p,
        amplitude=result.amplitude,
        bs_detuning=result.bs_detuning,
        drive_detuning=result.drive_detuning,
        transmon_ramp=transmon_ramp,
        bs_ramp=bs_ramp,
        level=level,
    )


# ---------------------------------------------------------------------------
# Chopped-Gaussian erasure-check tune-up
# ---------------------------------------------------------------------------


def _gaussian_check_schedule(chi, g_bs, pulse: ChoppedGaussian, bs_detuning=None):
    if bs_detuning is None:
        bs_detuning = 0.5 * chi
    bs = BeamsplitterDrive(g_bs=g_bs, detuning=bs_detuning, hold=pulse.duration)
    return DriveSchedule(
        dispersive=DispersiveShifts(chi_e=chi),
        beamsplitter=bs,
        transmon=(pulse,),
        transmon_starts=(0.0,),
    )


def _vacuum_excitation(chi, g_bs, pulse, layout):
    sched = _gaussian_check_schedule(chi, g_bs, pulse)
    psi = propagate_psi(sched, state_vector(layout, 0, 0, 0), layout)
    return float(abs(psi[layout.index(0, 0, 1)]) ** 2)


def _logical_metrics(chi, g_bs, pulse, layout):
    sched = _gaussian_check_schedule(chi, g_bs, pulse)
    exc, ret = 0.0, 0.0
    for na, nb in ((0, 1), (1, 0)):
        src = state_vector(layout, na, nb, 0)
        psi = propagate_psi(sched, src, layout)
        pe = sum(abs(psi[layout.index(a, b, 1)]) ** 2 for a in range(layout.dim_a) for b in range(layout.dim_b))
        exc = max(exc, float(pe))
        ret += 0.5 * (1.0 - abs(np.vdot(src, psi)) ** 2)
    return exc, ret


@dataclass
class GaussianTuneupResult:
    pulse: ChoppedGaussian
    g_bs: float
    bs_detuning: float
    vacuum_excitation: float
    logical_infidelity: float
    loop_trace: list = field(default_factory=list)
    converged: bool = False


def tune_gaussian_erasure_check(
    chi: float,
    g_bs_start: float | None = None,
    g_bs_max: float | None = None,
    sigma: float = 0.6,
    n_chop: float = 3.0,
    layout: ModeLayout | None = None,
    selectivity_threshold: float = 1e-3,
    return_tol: float = 1e-4,
    max_loops: int = 8,
) -> GaussianTuneupResult:
    """Iterative chopped-Gaussian tune-up.

    Starting inside (sqrt(3)/2)|chi| < g_bs < g_bs_max: calibrate the vacuum
    pi-pulse amplitude, raise sigma until the logical states stay unexcited,
    then adjust g_bs (or sigma, at the amplitude ceiling) until the logical
    states complete an integer number of beamsplitter revolutions, iterating
    amplitude and revolution steps until the return infidelity passes.
    """
    ach = abs(chi)
    if g_bs_max is None:
        g_bs_max = 2.0 * ach
    if g_bs_start is None:
        g_bs_start = 0.5 * (0.5 * math.sqrt(3.0) * ach + g_bs_max)
    if not 0.5 * math.sqrt(3.0) * ach < g_bs_start < g_bs_max:
        raise TuneupError("g_bs_start must lie in (sqrt(3)/2 |chi|, g_bs_max)")
    if layout is None:
        layout = ModeLayout(3, 3, 2)
    result = GaussianTuneupResult(
        pulse=ChoppedGaussian(amplitude=1.0, sigma=sigma, n_chop=n_chop),
        g_bs=g_bs_start,
        bs_detuning=0.5 * chi,
        vacuum_excitation=0.0,
        logical_infidelity=1.0,
    )

    def calibrated_pulse(sig):
        # pi-pulse amplitude on |0,0>: rotation angle 2 * area = pi exactly
        ref = ChoppedGaussian(amplitude=1.0, sigma=sig, n_chop=n_chop)
        return ChoppedGaussian(amplitude=0.5 * math.pi / ref.area(), sigma=sig, n_chop=n_chop)

    pulse = calibrated_pulse(sigma)
    # selectivity sweep: grow sigma until logical excitation is below threshold
    for _ in range(20):
        exc, _ = _logical_metrics(chi, result.g_bs, pulse, layout)
        result.loop_trace.append(("selectivity", pulse.sigma, exc))
        if exc < selectivity_threshold:
            break
        pulse = calibrated_pulse(pulse.sigma * 1.2)
    else:
        raise TuneupError("selectivity sweep did not reach the threshold")

    for loop in range(max_loops):
        # revolution matching: minimize return infidelity over g_bs near start
        omega = lambda g: math.hypot(g, 0.5 * chi)
        revs = omega(result.g_bs) * pulse.duration / (2 * math.pi)
        target_revs = max(round(revs), 1)
        g_target_sq = (2 * math.pi * target_revs / pulse.duration) ** 2 - (0.5 * chi) ** 2
        if g_target_sq <= 0 or math.sqrt(g_target_sq) >= g_bs_max:
            pulse = calibrated_pulse(pulse.sigma * (revs + 1) / revs)
            result.loop_trace.append(("sigma_stretch", pulse.sigma, None))
            continue
        g_grid = math.sqrt(g_target_sq)
        opt = minimize_scalar(
            lambda g: _logical_metrics(chi, g, pulse, layout)[1],
            bracket=None,
            bounds=(0.97 * g_grid, 1.03 * g_grid),
            method="bounded",
            options={"xatol": 1e-6 * ach},
        )
        result.g_bs = float(opt.x)
        exc, ret = _logical_metrics(chi, result.g_bs, pulse, layout)
        result.loop_trace.append(("revolution", result.g_bs, ret))
        # re-fine-tune the pi-pulse amplitude at the new operating point
        amp_opt = minimize_scalar(
            lambda a: -_vacuum_excitation(chi, result.g_bs, ChoppedGaussian(a, pulse.sigma, n_chop), layout),
            bounds=(0.8 * pulse.amplitude, 1.2 * pulse.amplitude),
            method="bounded",
            options={"xatol": 1e-8},
        )
        pulse = ChoppedGaussian(float(amp_opt.x), pulse.sigma, n_chop)
        exc, ret = _logical_metrics(chi, result.g_bs, pulse, layout)
        result.loop_trace.append(("amplitude", pulse.amplitude, ret))
        if ret < return_tol:
            result.converged = True
            break
    else:
        raise TuneupError(f"gaussian tune-up loop cap exceeded; best return infidelity {ret:.2e}")
    result.pulse = pulse
    result.vacuum_excitation = _vacuum_excitation(chi, result.g_bs, pulse, layout)
    result.logical_infidelity = ret
    return result


def gaussian_check_schedule(chi: float, result: GaussianTuneupResult) -> DriveSchedule:
    return _gaussian_check_schedule(chi, result.g_bs, result.pulse, result.bs_detuning)


# ---------------------------------------------------------------------------
# Square-pulse spectroscopy alignment (pulse-duration diagnostic)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentReport:
    t_p: float
    detuning_grid: np.ndarray
    p_e: dict
    vacuum_peak: float
    logical_minimum: float
    gap: float


def spectroscopy_alignment(
    chi: float,
    t_p_candidates,
    g_bs: float,
    amplitude: float | None = None,
    layout: ModeLayout | None = None,
    detuning_span: float | None = None,
    n_points: int = 61,
):
    """P(flag) vs transmon pulse detuning for |0,0>, |0,1>, |1,0> input, for
    each candidate pulse duration; reports the gap between the vacuum-peak
    maximum and the logical-state minima (both from parabolic refinement).
    Post-selection on conserved photon number is implicit (noise-free)."""
    if layout is None:
        layout = ModeLayout(3, 3, 2)
    if detuning_span is None:
        detuning_span = 0.5 * abs(chi)
    grid = np.linspace(-detuning_span, detuning_span, n_points)
    reports = []
    for t_p in np.atleast_1d(t_p_candidates):
        amp = amplitude if amplitude is not None else 0.5 * math.pi / t_p
        curves = {}
        for label, (na, nb) in {"00": (0, 0), "01": (0, 1), "10": (1, 0)}.items():
            src = state_vector(layout, na, nb, 0)
            pe = np.empty(len(grid))
            for i, d in enumerate(grid):
                sched = square_check_schedule(
                    chi=chi, g_bs=g_bs, t_p=float(t_p), amplitude=amp, drive_detuning=float(d)
                )
                psi = propagate_psi(sched, src, layout)
                pe[i] = sum(
                    abs(psi[layout.index(a, b, 1)]) ** 2
                    for a in range(layout.dim_a)
                    for b in range(layout.dim_b)
                )
            curves[label] = pe
        peak = _parabolic_extremum(grid, curves["00"], maximum=True)
        minima = [
            _parabolic_extremum(grid, curves["01"], maximum=False),
            _parabolic_extremum(grid, curves["10"], maximum=False),
        ]
        reports.append(
            AlignmentReport(
                t_p=float(t_p),
                detuning_grid=grid,
                p_e=curves,
                vacuum_peak=peak,
                logical_minimum=float(np.mean(minima)),
                gap=abs(peak - float(np.mean(minima))),
            )
        )
    return reports


def _parabolic_extremum(x, y, maximum=True) -> float:
    i = int(np.argmax(y) if maximum else np.argmin(y))
    if i == 0 or i == len(x) - 1:
        return float(x[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(x[i])
    return float(x[i] + 0.5 * (y0 - y2) / denom * (x[1] - x[0]))
