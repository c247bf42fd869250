"""Closed-form spin-N/2 model for two beamsplitter-coupled modes and a
dispersive ancilla.

Two cavities sharing N photons map onto a single spin S = N/2.  With the
beamsplitter drive acting as a transverse field, the ancilla-conditioned spin
Hamiltonians define two quantization axes; eigenenergies, ancilla transition
frequencies and Wigner-d transition matrix elements all follow in closed form.
These serve as the analytic oracle the numerical propagators are checked
against.

Conventions: chi is stored signed (negative for a standard dispersive
transmon); all formulas hold for either sign.  Wigner d-matrices use the
standard convention d^{1/2}_{1/2,1/2}(b) = cos(b/2),
d^{1/2}_{1/2,-1/2}(b) = -sin(b/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateAxisError(ValueError):
    """Raised when a quantization axis vector vanishes (g_bs = 0 with zero detuning)."""


@dataclass(frozen=True)
class SpinModelParams:
    """Parameters of the spin model for the N-photon manifold (rates rad/us)."""

    N: int
    g_bs: float
    delta: float
    chi: float
    phi: float = 0.0

    def __post_init__(self):
        if self.N < 0:
            raise ValueError(f"total photon number must be >= 0, got {self.N}")
        for name in ("g_bs", "delta", "chi", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class QuantizationAxes:
    """Effective field vectors for the ancilla-g and ancilla-e spin Hamiltonians."""

    omega_g: tuple[float, float, float]
    omega_e: tuple[float, float, float]


def quantization_axes(g_bs: float, delta: float, chi: float, phi: float = 0.0) -> QuantizationAxes:
    gx = g_bs * math.cos(phi)
    gy = -g_bs * math.sin(phi)
    return QuantizationAxes((gx, gy, delta), (gx, gy, delta - chi))


def larmor_frequency(g_bs: float, chi: float) -> float:
    """Effective spin precession rate at symmetric detuning: sqrt(g_bs^2 + (chi/2)^2)."""
    return math.hypot(g_bs, 0.5 * chi)


def spin_eigenenergies(params: SpinModelParams):
    """Ancilla-conditioned manifold energies.

    Returns (m_values, E_g, E_e) with m running -N/2 .. N/2 and

        E_g(m) = -N delta / 2          + m sqrt(g^2 + delta^2)
        E_e(m) = +N (chi - delta) / 2  + m sqrt(g^2 + (delta - chi)^2)
    """
    N, g, d, chi = params.N, params.g_bs, params.delta, params.chi
    m = np.arange(-N / 2.0, N / 2.0 + 0.5, 1.0)
    eg = -0.5 * N * d + m * math.hypot(g, d)
    ee = 0.5 * N * (chi - d) + m * math.hypot(g, d - chi)
    return m, eg, ee


def transition_frequencies_symmetric(N: int, g_bs: float, chi: float):
    """The 2N+1 transition frequencies at symmetric detuning delta = chi/2.

    Returns a list of ``(delta_m, omega, degeneracy)`` with
    omega = N chi / 2 + delta_m * Omega and degeneracy (N+1) - |delta_m|.
    """
    omega_l = larmor_frequency(g_bs, chi)
    out = []
    for dm in range(-N, N + 1):
        out.append((dm, 0.5 * N * chi + dm * omega_l, (N + 1) - abs(dm)))
    return out


def transition_frequencies_general(N: int, g_bs: float, delta: float, chi: float):
    """All (N+1)^2 transition frequencies for arbitrary beamsplitter detuning.

    Returns a list of ``(m_g, m_e, omega)`` sorted stably by (m_e - m_g, m_g),
    with omega = N chi/2 + m_e sqrt(g^2 + (delta-chi)^2) - m_g sqrt(g^2 + delta^2).
    """
    wg = math.hypot(g_bs, delta)
    we = math.hypot(g_bs, delta - chi)
    ms = [(-N / 2.0) + k for k in range(N + 1)]
    rows = []
    for mg in ms:
        for me in ms:
            rows.append((mg, me, 0.5 * N * chi + me * we - mg * wg))
    rows.sort(key=lambda r: (round(r[1] - r[0]), r[0]))
    return rows


def axes_angle(g_bs: float, delta: float, chi: float) -> float:
    """Angle between the ancilla-g and ancilla-e quantization axes.

    delta_theta = arctan(delta / g_bs) - arctan((delta - chi) / g_bs); at
    symmetric detuning this reduces to 2 arctan(chi / 2 g_bs).
    """
    if g_bs == 0.0 and (delta == 0.0 or delta == chi):
        raise DegenerateAxisError("quantization axis undefined: g_bs = 0 with zero effective detuning")
    return math.atan2(delta, g_bs) - math.atan2(delta - chi, g_bs)


def _validate_half_integers(j: float, m1: float, m2: float):
    twoj = round(2 * j)
    if twoj < 0 or abs(2 * j - twoj) > 1e-12:
        raise ValueError(f"j must be a non-negative half-integer, got {j}")
    for m in (m1, m2):
        twom = round(2 * m)
        if abs(2 * m - twom) > 1e-12 or (twoj - twom) % 2 != 0:
            raise ValueError(f"m={m} must have the same integrality as j={j}")
        if abs(twom) > twoj:
            raise ValueError(f"|m| = {abs(m)} exceeds j = {j}")


def wigner_small_d(j: float, m1: float, m2: float, beta: float) -> float:
    """Wigner small d-matrix element d^j_{m1,m2}(beta) via the factorial sum.

    Uses log-factorials so arbitrary (small) j stay numerically safe.
    """
    _validate_half_integers(j, m1, m2)
    lg = math.lgamma
    pref = 0.5 * (
        lg(j + m1 + 1) + lg(j - m1 + 1) + lg(j + m2 + 1) + lg(j - m2 + 1)
    )
    c, s = math.cos(0.5 * beta), math.sin(0.5 * beta)
    smin = max(0, round(m2 - m1))
    smax = min(round(j - m1), round(j + m2))
    total = 0.0
    for k in range(smin, smax + 1):
        logden = lg(j + m2 - k + 1) + lg(k + 1) + lg(m1 - m2 + k + 1) + lg(j - m1 - k + 1)
        pc = round(2 * j + m2 - m1 - 2 * k)
        ps = round(m1 - m2 + 2 * k)
        term = math.exp(pref - logden) * (c ** pc) * (s ** ps)
        total += term if (k + round(m1 - m2)) % 2 == 0 else -term
    return total


@dataclass(frozen=True)
class TransitionTable:
    """Per-(m_g, m_e) transition frequencies and normalized matrix elements."""

    params: SpinModelParams
    m_g: np.ndarray
    m_e: np.ndarray
    delta_m: np.ndarray
    frequency: np.ndarray
    element: np.ndarray

    def __len__(self) -> int:
        return len(self.frequency)

    def rows(self):
        for i in range(len(self)):
            yield (self.m_g[i], self.m_e[i], int(self.delta_m[i]), self.frequency[i], self.element[i])

    def element_for(self, m_g: float, m_e: float) -> float:
        mask = (np.abs(self.m_g - m_g) < 1e-9) & (np.abs(self.m_e - m_e) < 1e-9)
        (idx,) = np.nonzero(mask)
        return float(self.element[idx[0]])


def transition_matrix_elements(params: SpinModelParams) -> TransitionTable:
    """Frequencies plus |d^{N/2}_{m_g,m_e}(delta_theta)| transition strengths."""
    dtheta = axes_angle(params.g_bs, params.delta, params.chi)
    rows = transition_frequencies_general(params.N, params.g_bs, params.delta, params.chi)
    j = params.N / 2.0
    m_g = np.array([r[0] for r in rows])
    m_e = np.array([r[1] for r in rows])
    freq = np.array([r[2] for r in rows])
    elem = np.array([abs(wigner_small_d(j, r[0], r[1], dtheta)) for r in rows])
    return TransitionTable(
        params=params,
        m_g=m_g,
        m_e=m_e,
        delta_m=np.round(m_e - m_g).astype(int),
        frequency=freq,
        element=elem,
    )


def manifold_hamiltonians(N: int, g_bs: float, delta: float, chi: float, phi: float = 0.0):
    """Ancilla-g / ancilla-e Hamiltonian blocks on the N-photon Fock manifold.

    Basis |k, N-k> for k = 0..N (photons in Alice, Bob).  This is the direct
    Fock-space construction used to cross-check the spin model numerically.
    """
    dim = N + 1
    hbs = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(dim - 1):
        # <k+1, N-k-1| a^+ b |k, N-k> = sqrt((k+1)(N-k))
        amp = 0.5 * g_bs * math.sqrt((k + 1) * (N - k))
        hbs[k + 1, k] += amp * np.exp(-1j * phi)
        hbs[k, k + 1] += amp * np.exp(1j * phi)
    nb = np.diag([N - k for k in range(dim)]).astype(np.complex128)
    hg = hbs - delta * nb
    he = hbs + (chi - delta) * nb
    return hg, he
