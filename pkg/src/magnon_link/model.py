"""Hamiltonians, dissipators and thermal occupations of the qubit-cavity-magnon chain.

Unit convention: configuration values are cyclic (frequencies in GHz, rates
in MHz, i.e. the value of quantity/2pi), times are in microseconds. Everything
handed to the integrator is angular, in rad/us.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.constants import Boltzmann, Planck

from .tensor import (
    CAVITY,
    MAGNON_L,
    MAGNON_R,
    QUBIT,
    SIGMA_MINUS,
    SIGMA_Z,
    HilbertLayout,
    destroy,
    embed,
    standard_layout,
)

TWO_PI = 2.0 * math.pi

# Calibrated defaults for quantities with no given value; see README "Default parameters".
DEFAULT_G_WG = 2000.0  # waveguide decay scale g/2pi, MHz
DEFAULT_STAGE1_COUPLING = 7.0  # target g1/2pi, MHz; fixes T1 through g1 = sqrt(2) pi / (4 T1)
DEFAULT_OMEGA_RATIO = 0.15  # Omega = 0.15 g
DEFAULT_T2_SPAN = 250.0  # T2 - T1 in units of 1/g (angular)


@dataclass(frozen=True)
class SystemParams:
    omega_q: float = 5.0
    omega_c: float = 10.0
    omega_mL: float = 5.0
    omega_mR: float = 5.0
    gamma_q: float = 0.01
    gamma_phi: float = 0.1
    kappa_c: float = 0.5
    kappa_mL: float = 0.5
    kappa_mR: float = 0.5
    T_th: float = 0.05
    g_wg: float = DEFAULT_G_WG
    Omega: Optional[float] = None
    T1: Optional[float] = None
    T2: Optional[float] = None
    rates_are_angular: bool = False
    boson_dim: int = 2
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("gamma_q", "gamma_phi", "kappa_c", "kappa_mL", "kappa_mR"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("omega_q", "omega_c", "omega_mL", "omega_mR", "T_th", "g_wg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 2 <= self.boson_dim <= 4:
            raise ValueError("boson_dim must be between 2 and 4")

        defaulted = set(self.defaulted)
        if self.Omega is None:
            object.__setattr__(self, "Omega", DEFAULT_OMEGA_RATIO * self.g_wg)
            defaulted.add("Omega")
        if self.T1 is None:
            g1 = TWO_PI * DEFAULT_STAGE1_COUPLING
            object.__setattr__(self, "T1", math.sqrt(2) * math.pi / (4 * g1))
            defaulted.add("T1")
        if self.T2 is None:
            object.__setattr__(self, "T2", self.T1 + DEFAULT_T2_SPAN / (TWO_PI * self.g_wg))
            defaulted.add("T2")
        object.__setattr__(self, "defaulted", tuple(sorted(defaulted)))

        if self.Omega <= 0:
            raise ValueError("Omega must be > 0")
        if not 0 < self.T1 < self.T2:
            raise ValueError(f"need 0 < T1 < T2, got T1={self.T1}, T2={self.T2}")

    # angular accessors, rad/us
    def rate(self, name: str) -> float:
        value = getattr(self, name)
        if name.startswith("kappa") and self.rates_are_angular:
            return float(value)
        return TWO_PI * float(value)

    @property
    def g_angular(self) -> float:
        return TWO_PI * self.g_wg

    @property
    def Omega_angular(self) -> float:
        return TWO_PI * self.Omega

    @property
    def layout(self) -> HilbertLayout:
        return standard_layout(self.boson_dim)

    def replace(self, **changes) -> "SystemParams":
        values = asdict(self)
        # derived defaults must be recomputed when their inputs change
        for name in self.defaulted:
            if name not in changes:
                values[name] = None
        values.update(changes)
        values["defaulted"] = ()
        return SystemParams(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["defaulted"] = list(self.defaulted)
        return d


@dataclass(frozen=True)
class DissipatorTerm:
    operator: np.ndarray
    rate: float
    label: str = ""


@dataclass(frozen=True)
class CrossDissipator:
    """One magnon term ``S_jk (2 m_k rho m_j^dag - m_j^dag m_k rho - rho m_j^dag m_k)``."""

    op_left: np.ndarray  # m_j
    op_right: np.ndarray  # m_k
    coefficient: Callable[[float], complex]
    label: str = ""


@lru_cache(maxsize=None)
def mode_operators(layout: HilbertLayout) -> dict[str, np.ndarray]:
    """Embedded lowering operators and sigma_z on the standard four-factor layout."""
    if len(layout) != 4 or layout.dims[QUBIT] != 2:
        raise ValueError(f"expected (qubit, cavity, magnon_L, magnon_R) layout, got {layout.dims}")
    ops = {
        "sm": embed(SIGMA_MINUS, QUBIT, layout),
        "sz": embed(SIGMA_Z, QUBIT, layout),
        "c": embed(destroy(layout.dims[CAVITY]), CAVITY, layout),
        "mL": embed(destroy(layout.dims[MAGNON_L]), MAGNON_L, layout),
        "mR": embed(destroy(layout.dims[MAGNON_R]), MAGNON_R, layout),
    }
    for op in ops.values():
        op.setflags(write=False)
    return ops


def number_operator(layout: HilbertLayout) -> np.ndarray:
    """Total excitation number sigma_+ sigma_- + c^dag c + m_L^dag m_L + m_R^dag m_R."""
    ops = mode_operators(layout)
    return sum(op.conj().T @ op for k, op in ops.items() if k != "sz")


def stage1_terms(layout: HilbertLayout) -> tuple[np.ndarray, np.ndarray]:
    """The two Hermitian pieces multiplied by g1 and g2 in the stage-1 Hamiltonian."""
    ops = mode_operators(layout)
    sm, c, mL = ops["sm"], ops["c"], ops["mL"]
    qc = sm @ c.conj().T + sm.conj().T @ c
    cm = c @ mL.conj().T + c.conj().T @ mL
    return qc, cm


def h_stage1(g1: float, g2: float, layout: HilbertLayout) -> np.ndarray:
    qc, cm = stage1_terms(layout)
    return g1 * qc + g2 * cm


def stage2_terms(layout: HilbertLayout) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian pieces X, Y with g m_R^dag m_L + h.c. = Re(g) X + Im(g) Y."""
    ops = mode_operators(layout)
    hop = ops["mR"].conj().T @ ops["mL"]
    return hop + hop.conj().T, 1j * (hop - hop.conj().T)


def h_stage2(g_eff: complex, layout: HilbertLayout) -> np.ndarray:
    ops = mode_operators(layout)
    hop = ops["mR"].conj().T @ ops["mL"]
    return g_eff * hop + np.conj(g_eff) * hop.conj().T


def g_eff_from_pulses(G_L, G_R, g_wg):
    """Magnon-magnon coupling 2i G_L G_R / g mediated by the waveguide."""
    if np.any(np.asarray(g_wg) == 0):
        raise ZeroDivisionError("waveguide decay scale g must be non-zero")
    return 2j * np.asarray(G_L) * np.asarray(G_R) / g_wg


def stilde_coefficients(G_L, G_R, g_wg: float) -> np.ndarray:
    """2x2 matrix [[S_LL, S_LR], [S_RL, S_RR]] for real pulse amplitudes.

    Built from S_jk~ = (G_j* G_k / 2)(S_jk + S_kj*) with S_LL = S_RR = 2/g,
    S_RL = -4/g and S_LR = 0. Array pulses give an array of shape
    ``(2, 2) + G_L.shape``.
    """
    if g_wg == 0:
        raise ZeroDivisionError("waveguide decay scale g must be non-zero")
    s = {("L", "L"): 2.0 / g_wg, ("R", "R"): 2.0 / g_wg, ("R", "L"): -4.0 / g_wg, ("L", "R"): 0.0}
    G = {"L": np.asarray(G_L), "R": np.asarray(G_R)}
    out = np.empty((2, 2) + np.broadcast(G["L"], G["R"]).shape, dtype=complex)
    for a, j in enumerate("LR"):
        for b, k in enumerate("LR"):
            out[a, b] = 0.5 * np.conj(G[j]) * G[k] * (s[(j, k)] + np.conj(s[(k, j)]))
    return out


def thermal_occupation(freq_cyclic: float, T_th: float) -> float:
    """Bose-Einstein occupation for a mode at ``freq_cyclic`` GHz and ``T_th`` kelvin."""
    if freq_cyclic <= 0 or T_th <= 0:
        raise ValueError("frequency and temperature must be positive")
    x = Planck * freq_cyclic * 1e9 / (Boltzmann * T_th)
    return float(1.0 / np.expm1(x))


def build_dissipators(
    params: SystemParams,
    layout: Optional[HilbertLayout] = None,
    pulses: Optional[Callable[[float], tuple[float, float]]] = None,
) -> tuple[list[DissipatorTerm], list[CrossDissipator]]:
    """Static Lindblad channels plus the four waveguide-mediated magnon terms.

    ``pulses`` maps time to (G_L, G_R) in rad/us; without it the cross terms
    are omitted. Zero-rate channels are dropped.
    """
    layout = layout or params.layout
    ops = mode_operators(layout)
    sm, sz, c, mL, mR = (ops[k] for k in ("sm", "sz", "c", "mL", "mR"))

    n_c = thermal_occupation(params.omega_c, params.T_th)
    n_mL = thermal_occupation(params.omega_mL, params.T_th)
    n_mR = thermal_occupation(params.omega_mR, params.T_th)
    k_c, k_mL, k_mR = params.rate("kappa_c"), params.rate("kappa_mL"), params.rate("kappa_mR")

    candidates = [
        (sm, params.rate("gamma_q"), "gamma_q L[sm]"),
        (sz, params.rate("gamma_phi") / 2, "gamma_phi/2 L[sz]"),
        (c, k_c * (n_c + 1), "kappa_c (n_c+1) L[c]"),
        (c.conj().T, k_c * n_c, "kappa_c n_c L[c+]"),
        (mL, k_mL * (n_mL + 1), "kappa_mL (n_mL+1) L[mL]"),
        (mL.conj().T, k_mL * n_mL, "kappa_mL n_mL L[mL+]"),
        (mR, k_mR * (n_mR + 1), "kappa_mR (n_mR+1) L[mR]"),
        (mR.conj().T, k_mR * n_mR, "kappa_mR n_mR L[mR+]"),
    ]
    terms = [DissipatorTerm(op, rate, label) for op, rate, label in candidates if rate > 0]

    cross: list[CrossDissipator] = []
    if pulses is not None:
        g = params.g_angular
        modes = {"L": mL, "R": mR}
        for a, j in enumerate("LR"):
            for b, k in enumerate("LR"):

                def coef(t, a=a, b=b):
                    return stilde_coefficients(*pulses(t), g)[a, b][()]

                cross.append(CrossDissipator(modes[j], modes[k], coef, f"S_{j}{k}"))
    return terms, cross
