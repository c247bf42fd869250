"""Hot numeric kernels: drive envelopes and adaptive RK45 segment integrators.

Everything here is written in numba-compatible style and compiled with
``@njit`` when the numba backend is active (see ``backend.py``).  The same
source runs un-jitted as the numpy fallback.

Hamiltonian model per segment (all rates in rad/us, times in us):

    H(t) = H0 + g(t) * Hbs + f(t) * Hdr

with real scalar envelopes g(t), f(t) described by a 5-element float array
``(code, p0, p1, p2, p3)``:

    code 0: zero
    code 1: constant p0
    code 2: cosine ramp up,   p0/2 * (1 - cos(pi (t - p1) / p2))
    code 3: cosine ramp down, p0/2 * (1 + cos(pi (t - p1) / p2))
    code 4: chopped Gaussian, p0 * (exp(-(t - p1)^2 / 2 p2^2) - p3)
"""

from __future__ import annotations

import math

import numpy as np

from .backend import maybe_njit

ENV_ZERO = 0.0
ENV_CONST = 1.0
ENV_RAMP_UP = 2.0
ENV_RAMP_DOWN = 3.0
ENV_GAUSS = 4.0

# Dormand-Prince 5(4) coefficients
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0


def envelope_value(env, t):
    code = env[0]
    if code == 1.0:
        return env[1]
    if code == 2.0:
        return 0.5 * env[1] * (1.0 - math.cos(math.pi * (t - env[2]) / env[3]))
    if code == 3.0:
        return 0.5 * env[1] * (1.0 + math.cos(math.pi * (t - env[2]) / env[3]))
    if code == 4.0:
        x = (t - env[2]) / env[3]
        return env[1] * (math.exp(-0.5 * x * x) - env[4])
    return 0.0


def _rhs_psi(t, psi, H0, Hbs, Hdr, genv, fenv):
    g = envelope_value(genv, t)
    f = envelope_value(fenv, t)
    H = H0 + g * Hbs + f * Hdr
    return -1j * (H @ psi)


def _rhs_rho(t, rho, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M):
    g = envelope_value(genv, t)
    f = envelope_value(fenv, t)
    H = H0 + g * Hbs + f * Hdr
    out = -1j * (H @ rho - rho @ H)
    if Ls.shape[0] > 0:
        out -= 0.5 * (M @ rho + rho @ M)
        for k in range(Ls.shape[0]):
            out += Ls[k] @ rho @ Ldags[k]
    return out


def rk45_segment_psi(psi, t0, t1, h_init, H0, Hbs, Hdr, genv, fenv, rtol, atol, max_steps):
    """Integrate i dpsi/dt = H(t) psi over [t0, t1].

    Returns (psi, last_step, n_steps, status); status 0 on success, 1 when the
    step budget is exhausted.
    """
    t = t0
    span = t1 - t0
    h = h_init
    if h <= 0.0 or h > span:
        h = span
    k1 = _rhs_psi(t, psi, H0, Hbs, Hdr, genv, fenv)
    nsteps = 0
    tiny = 1e-14 * (abs(t1) + 1.0)
    while t < t1 - tiny:
        if h > t1 - t:
            h = t1 - t
        y2 = psi + h * (_A21 * k1)
        k2 = _rhs_psi(t + _C2 * h, y2, H0, Hbs, Hdr, genv, fenv)
        y3 = psi + h * (_A31 * k1 + _A32 * k2)
        k3 = _rhs_psi(t + _C3 * h, y3, H0, Hbs, Hdr, genv, fenv)
        y4 = psi + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
        k4 = _rhs_psi(t + _C4 * h, y4, H0, Hbs, Hdr, genv, fenv)
        y5 = psi + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
        k5 = _rhs_psi(t + _C5 * h, y5, H0, Hbs, Hdr, genv, fenv)
        y6 = psi + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        k6 = _rhs_psi(t + h, y6, H0, Hbs, Hdr, genv, fenv)
        ynew = psi + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = _rhs_psi(t + h, ynew, H0, Hbs, Hdr, genv, fenv)
        errvec = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(psi), np.abs(ynew))
        err = math.sqrt(np.mean((np.abs(errvec) / sc) ** 2))
        if err <= 1.0:
            t += h
            psi = ynew
            k1 = k7
        if err > 0.0:
            fac = 0.9 * err ** (-0.2)
        else:
            fac = 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
        nsteps += 1
        if nsteps > max_steps:
            return psi, h, nsteps, 1
    return psi, h, nsteps, 0


def rk45_segment_rho(rho, t0, t1, h_init, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M, rtol, atol, max_steps):
    """Integrate the Lindblad equation over one segment.

    drho/dt = -i[H(t), rho] + sum_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2),
    with ``M = sum_k L_k^+ L_k`` precomputed.  Same return convention as
    ``rk45_segment_psi``.  ``rho`` need not be Hermitian (linear map), which
    lets callers propagate matrix units for process reconstruction.
    """
    t = t0
    span = t1 - t0
    h = h_init
    if h <= 0.0 or h > span:
        h = span
    k1 = _rhs_rho(t, rho, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
    nsteps = 0
    tiny = 1e-14 * (abs(t1) + 1.0)
    while t < t1 - tiny:
        if h > t1 - t:
            h = t1 - t
        y2 = rho + h * (_A21 * k1)
        k2 = _rhs_rho(t + _C2 * h, y2, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        y3 = rho + h * (_A31 * k1 + _A32 * k2)
        k3 = _rhs_rho(t + _C3 * h, y3, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        y4 = rho + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
        k4 = _rhs_rho(t + _C4 * h, y4, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        y5 = rho + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
        k5 = _rhs_rho(t + _C5 * h, y5, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        y6 = rho + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        k6 = _rhs_rho(t + h, y6, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        ynew = rho + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = _rhs_rho(t + h, ynew, H0, Hbs, Hdr, genv, fenv, Ls, Ldags, M)
        errmat = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(rho), np.abs(ynew))
        err = math.sqrt(np.mean((np.abs(errmat) / sc) ** 2))
        if err <= 1.0:
            t += h
            rho = ynew
            k1 = k7
        if err > 0.0:
            fac = 0.9 * err ** (-0.2)
        else:
            fac = 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac
        nsteps += 1
        if nsteps > max_steps:
            return rho, h, nsteps, 1
    return rho, h, nsteps, 0


envelope_value = maybe_njit(envelope_value)
_rhs_psi = maybe_njit(_rhs_psi)
_rhs_rho = maybe_njit(_rhs_rho)
rk45_segment_psi = maybe_njit(rk45_segment_psi)
rk45_segment_rho = maybe_njit(rk45_segment_rho)
