"""Control design: invariant-based stage-1 couplings and stage-2 pulse profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .model import SystemParams, g_eff_from_pulses, stilde_coefficients

ScalarFn = Callable[[float], float]


class SingularCouplingError(ValueError):
    """cot(gamma) diverges at the requested time."""


@dataclass(frozen=True)
class InvariantSpec:
    gamma_fn: ScalarFn
    theta_fn: ScalarFn
    gamma_dot_fn: ScalarFn
    theta_dot_fn: ScalarFn
    T1: float
    Omega0: float = 1.0
    # analytically reduced (g1, g2) when the generic formula is 0 * inf somewhere
    reduced_couplings: Optional[tuple[float, float]] = None

    def angles(self, t):
        return self.gamma_fn(t), self.theta_fn(t), self.gamma_dot_fn(t), self.theta_dot_fn(t)


def default_invariant_spec(T1: float) -> InvariantSpec:
    """gamma = pi t / (2 T1) - pi/2, theta = pi/4 on [0, T1]."""
    rate = math.pi / (2 * T1)
    g = math.sqrt(2) * math.pi / (4 * T1)
    return InvariantSpec(
        gamma_fn=lambda t: rate * np.asarray(t, dtype=float) - math.pi / 2,
        theta_fn=lambda t: np.full_like(np.asarray(t, dtype=float), math.pi / 4),
        gamma_dot_fn=lambda t: np.full_like(np.asarray(t, dtype=float), rate),
        theta_dot_fn=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        T1=T1,
        reduced_couplings=(g, -g),
    )


def _invariant_from_angles(gamma, theta, omega0):
    cg, sg, ct, st = np.cos(gamma), np.sin(gamma), np.cos(theta), np.sin(theta)
    return omega0 * np.array(
        [
            [0, cg * st, -1j * sg],
            [cg * st, 0, cg * ct],
            [1j * sg, cg * ct, 0],
        ],
        dtype=complex,
    )


def invariant_matrix(spec: InvariantSpec, t: float) -> np.ndarray:
    gamma, theta = float(spec.gamma_fn(t)), float(spec.theta_fn(t))
    return _invariant_from_angles(gamma, theta, spec.Omega0)


def invariant_time_derivative(spec: InvariantSpec, t: float) -> np.ndarray:
    """dI/dt by the chain rule through gamma and theta."""
    gamma, theta, gd, td = (float(x) for x in spec.angles(t))
    cg, sg, ct, st = np.cos(gamma), np.sin(gamma), np.cos(theta), np.sin(theta)
    d_gamma = np.array(
        [[0, -sg * st, -1j * cg], [-sg * st, 0, -sg * ct], [1j * cg, -sg * ct, 0]], dtype=complex
    )
    d_theta = np.array(
        [[0, cg * ct, 0], [cg * ct, 0, -cg * st], [0, -cg * st, 0]], dtype=complex
    )
    return spec.Omega0 * (gd * d_gamma + td * d_theta)


def _eigenstates_from_angles(gamma, theta):
    cg, sg, ct, st = np.cos(gamma), np.sin(gamma), np.cos(theta), np.sin(theta)
    phi0 = np.array([cg * ct, -1j * sg, -cg * st], dtype=complex)
    phi_p = np.array([sg * ct + 1j * st, 1j * cg, -sg * st + 1j * ct], dtype=complex) / math.sqrt(2)
    phi_m = np.array([sg * ct - 1j * st, 1j * cg, -sg * st - 1j * ct], dtype=complex) / math.sqrt(2)
    return phi0, phi_p, phi_m


def invariant_eigenstates(spec: InvariantSpec, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form eigenvectors (phi_0, phi_+, phi_-) for eigenvalues 0, +Omega0, -Omega0."""
    return _eigenstates_from_angles(float(spec.gamma_fn(t)), float(spec.theta_fn(t)))


def invariant_eigenstate_derivatives(spec: InvariantSpec, t: float):
    gamma, theta, gd, td = (float(x) for x in spec.angles(t))
    cg, sg, ct, st = np.cos(gamma), np.sin(gamma), np.cos(theta), np.sin(theta)
    r = 1 / math.sqrt(2)
    d0 = gd * np.array([-sg * ct, -1j * cg, sg * st]) + td * np.array([-cg * st, 0, -cg * ct])
    dp = r * (
        gd * np.array([cg * ct, -1j * sg, -cg * st])
        + td * np.array([-sg * st + 1j * ct, 0, -sg * ct - 1j * st])
    )
    dm = r * (
        gd * np.array([cg * ct, -1j * sg, -cg * st])
        + td * np.array([-sg * st - 1j * ct, 0, -sg * ct + 1j * st])
    )
    return d0.astype(complex), dp.astype(complex), dm.astype(complex)


def sta_couplings(spec: InvariantSpec, t):
    """(g1, g2) from g1 = th' cot(ga) sin(th) + ga' cos(th), g2 = th' cot(ga) cos(th) - ga' sin(th).

    Accepts scalar or array ``t``. Specs carrying ``reduced_couplings`` return
    those constants, which avoids the removable 0 * inf at sin(gamma) = 0.
    """
    t_arr = np.asarray(t, dtype=float)
    if spec.reduced_couplings is not None:
        g1, g2 = spec.reduced_couplings
        return np.full_like(t_arr, g1)[()], np.full_like(t_arr, g2)[()]

    gamma, theta, gd, td = (np.asarray(x, dtype=float) for x in spec.angles(t_arr))
    sg = np.sin(gamma)
    bad = np.abs(sg) < 1e-12
    if np.any(bad):
        t_bad = np.broadcast_to(t_arr, bad.shape)[bad]
        raise SingularCouplingError(f"cot(gamma) is singular at t = {float(np.ravel(t_bad)[0]):.6g}")
    cot = np.cos(gamma) / sg
    g1 = td * cot * np.sin(theta) + gd * np.cos(theta)
    g2 = td * cot * np.cos(theta) - gd * np.sin(theta)
    return g1[()], g2[()]


def three_level_hamiltonian(g1: float, g2: float) -> np.ndarray:
    """Stage-1 Hamiltonian on the basis (|e000>, |g100>, |g010>)."""
    return np.array([[0, g1, 0], [np.conj(g1), 0, g2], [0, np.conj(g2), 0]], dtype=complex)


def lr_phase(
    spec: InvariantSpec,
    mode_index,
    t: float,
    h_fn: Optional[Callable[[float], np.ndarray]] = None,
    max_step: Optional[float] = None,
) -> float:
    """Lewis-Riesenfeld phase of eigenstate ``mode_index`` (0, '+' or '-') at time ``t``.

    Composite trapezoid over [0, t] of <phi_n| i d/dt - H |phi_n> with step at
    most T1/2000. ``h_fn`` defaults to the three-level Hamiltonian driven by
    :func:`sta_couplings`.
    """
    index = {0: 0, "0": 0, "+": 1, 1: 1, "-": 2, -1: 2}[mode_index]
    max_step = spec.T1 / 2000 if max_step is None else max_step
    if not max_step > 0 or not math.isfinite(max_step):
        raise ValueError(f"invalid quadrature step {max_step}")
    if t == 0:
        return 0.0
    if h_fn is None:
        h_fn = lambda s: three_level_hamiltonian(*(float(x) for x in sta_couplings(spec, s)))

    n = max(1, math.ceil(abs(t) / max_step))
    grid = np.linspace(0.0, t, n + 1)
    vals = np.empty(n + 1)
    for i, s in enumerate(grid):
        phi = invariant_eigenstates(spec, s)[index]
        dphi = invariant_eigenstate_derivatives(spec, s)[index]
        vals[i] = np.real(1j * np.vdot(phi, dphi) - np.vdot(phi, h_fn(s) @ phi))
    return float(np.trapezoid(vals, grid))


def reconstruct_state(spec: InvariantSpec, psi0: np.ndarray, t: float, h_fn=None) -> np.ndarray:
    """Invariant-based solution sum_n c_n exp(i alpha_n(t)) phi_n(t) of the three-level problem."""
    basis0 = invariant_eigenstates(spec, 0.0)
    basis_t = invariant_eigenstates(spec, t)
    out = np.zeros(3, dtype=complex)
    for n, mode in enumerate((0, "+", "-")):
        c_n = np.vdot(basis0[n], psi0)
        if abs(c_n) == 0:
            continue
        out += c_n * np.exp(1j * lr_phase(spec, mode, t, h_fn)) * basis_t[n]
    return out


def stage2_pulses(params: SystemParams, t):
    """(G_L, G_R) in rad/us on the stage-2 interval.

    With y = 4 Omega^2 (t - T1)/g - 10 the profiles are
    G_L = Omega sqrt(expit(y)), G_R = Omega sqrt(expit(-y)), which is the
    same sigmoid written in an overflow-free form.
    """
    Om, g = params.Omega_angular, params.g_angular
    y = 4 * Om**2 * (np.asarray(t, dtype=float) - params.T1) / g - 10.0
    return (Om * np.sqrt(expit(y)))[()], (Om * np.sqrt(expit(-y)))[()]


@dataclass(frozen=True)
class ControlSchedule:
    """Gated control functions over the full protocol.

    The ``*_fn`` members vanish outside their stage. The integrator uses the
    ungated ``stage1_couplings`` / ``stage2_pulses`` on closed stage intervals
    so that RK4 sub-steps landing exactly on a boundary see the stage's own
    controls.
    """

    params: SystemParams
    spec: InvariantSpec

    @property
    def T1(self) -> float:
        return self.params.T1

    @property
    def T2(self) -> float:
        return self.params.T2

    def stage1_couplings(self, t):
        return sta_couplings(self.spec, t)

    def stage2_pulses(self, t):
        return stage2_pulses(self.params, t)

    def _stage1_mask(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= 0) & (t < self.T1)

    def _stage2_mask(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.T1) & (t < self.T2)

    def g1_fn(self, t):
        t = np.asarray(t, dtype=float)
        m = self._stage1_mask(t)
        g1 = np.zeros_like(t)
        if np.any(m):
            g1[m] = np.broadcast_to(self.stage1_couplings(t[m])[0], t[m].shape)
        return g1[()]

    def g2_fn(self, t):
        t = np.asarray(t, dtype=float)
        m = self._stage1_mask(t)
        g2 = np.zeros_like(t)
        if np.any(m):
            g2[m] = np.broadcast_to(self.stage1_couplings(t[m])[1], t[m].shape)
        return g2[()]

    def GL_fn(self, t):
        return np.where(self._stage2_mask(t), self.stage2_pulses(t)[0], 0.0)[()]

    def GR_fn(self, t):
        return np.where(self._stage2_mask(t), self.stage2_pulses(t)[1], 0.0)[()]

    def g_eff_fn(self, t):
        return g_eff_from_pulses(self.GL_fn(t), self.GR_fn(t), self.params.g_angular)[()]

    def stilde_fn(self, t: float) -> np.ndarray:
        return stilde_coefficients(float(self.GL_fn(t)), float(self.GR_fn(t)), self.params.g_angular)

    def samples(self, per_stage: int = 512) -> dict[str, list[float]]:
        """Sampled control values (rad/us) for the run manifest."""
        t1 = np.linspace(0.0, self.T1, per_stage, endpoint=False)
        t2 = np.linspace(self.T1, self.T2, per_stage, endpoint=False)
        g_eff = self.g_eff_fn(t2)
        return {
            "stage1_t_us": t1.tolist(),
            "g1": np.broadcast_to(self.g1_fn(t1), t1.shape).tolist(),
            "g2": np.broadcast_to(self.g2_fn(t1), t1.shape).tolist(),
            "stage2_t_us": t2.tolist(),
            "G_L": self.GL_fn(t2).tolist(),
            "G_R": self.GR_fn(t2).tolist(),
            "g_eff_imag": np.imag(g_eff).tolist(),
        }


def build_schedule(params: SystemParams, spec: Optional[InvariantSpec] = None) -> ControlSchedule:
    return ControlSchedule(params, spec or default_invariant_spec(params.T1))
