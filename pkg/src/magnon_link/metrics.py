"""Fidelities, negativities and logical-state populations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import (
    MAGNON_L,
    MAGNON_R,
    QUBIT,
    HilbertLayout,
    LayoutError,
    partial_trace,
    partial_transpose,
    standard_layout,
    trace_norm,
)

log = logging.getLogger(__name__)

PAIR_N1 = (QUBIT, MAGNON_L)
PAIR_N2 = (QUBIT, MAGNON_R)

# (qubit, cavity, magnon_L, magnon_R) levels; qubit g = 0, e = 1
LOGICAL_KETS = {
    "P_e000": (1, 0, 0, 0),
    "P_g100": (0, 1, 0, 0),
    "P_g010": (0, 0, 1, 0),
    "P_g001": (0, 0, 0, 1),
}


def _layout_for(rho: np.ndarray, layout: Optional[HilbertLayout]) -> HilbertLayout:
    if layout is not None:
        return layout
    d = np.shape(rho)[0]
    for boson in (2, 3, 4):
        if 2 * boson**3 == d:
            return standard_layout(boson)
    raise LayoutError(f"cannot infer the standard layout for dimension {d}")


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """<psi|rho|psi> for a pure target."""
    rho = np.asarray(rho)
    target = np.asarray(target)
    if rho.shape != (target.size, target.size):
        raise LayoutError(f"state of shape {rho.shape} does not match target of length {target.size}")
    return float(np.real(np.vdot(target, rho @ target)))


@dataclass(frozen=True)
class BellTarget:
    """(|a> + phase |b>) / sqrt(2) on the full layout."""

    subsystem_pair: tuple[int, int]
    ket_a: tuple[int, ...]
    ket_b: tuple[int, ...]
    relative_phase: complex = 1.0

    def __post_init__(self):
        if abs(abs(self.relative_phase) - 1) > 1e-12:
            raise ValueError("relative phase must have unit modulus")
        if self.ket_a == self.ket_b:
            raise ValueError("Bell components must be distinct basis kets")

    def state(self, layout: HilbertLayout, phase: Optional[complex] = None) -> np.ndarray:
        phase = self.relative_phase if phase is None else phase
        return (layout.ket(self.ket_a) + phase * layout.ket(self.ket_b)) / math.sqrt(2)

    def with_phase(self, phase: complex) -> "BellTarget":
        return BellTarget(self.subsystem_pair, self.ket_a, self.ket_b, complex(phase))


# stage-1 and final targets as written, with a + sign
STAGE1_TARGET = BellTarget(PAIR_N1, (1, 0, 0, 0), (0, 0, 1, 0))
FINAL_TARGET = BellTarget(PAIR_N2, (1, 0, 0, 0), (0, 0, 0, 1))


def fidelity_up_to_phase(
    rho: np.ndarray, target: BellTarget, layout: Optional[HilbertLayout] = None
) -> tuple[float, complex]:
    """Best fidelity over the relative phase of a Bell target.

    For (|a> + e^{i phi}|b>)/sqrt(2) the fidelity is
    (rho_aa + rho_bb)/2 + Re(e^{i phi} rho_ab), maximised at e^{i phi} = rho_ba/|rho_ba|.
    """
    layout = _layout_for(rho, layout)
    a = layout.basis_index(target.ket_a)
    b = layout.basis_index(target.ket_b)
    rho = np.asarray(rho)
    if rho.shape != (layout.total_dim, layout.total_dim):
        raise LayoutError("state does not match layout")
    coherence = rho[b, a]
    if abs(coherence) > 0:
        phase = coherence / abs(coherence)
    else:
        phase = complex(target.relative_phase)
    best = 0.5 * float(np.real(rho[a, a] + rho[b, b])) + abs(coherence)
    return best, complex(phase)


def reduced_pair(rho: np.ndarray, pair: tuple[int, int], layout: Optional[HilbertLayout] = None):
    layout = _layout_for(rho, layout)
    a, b = pair
    if a == b or not (0 <= a < len(layout) and 0 <= b < len(layout)):
        raise LayoutError(f"invalid subsystem pair {pair}")
    red = partial_trace(rho, {a, b}, layout)
    dims = (layout.dims[min(a, b)], layout.dims[max(a, b)])
    pair_layout = HilbertLayout(dims)
    return red, pair_layout, (0 if a < b else 1)


def negativity(rho: np.ndarray, pair: tuple[int, int], layout: Optional[HilbertLayout] = None) -> float:
    """(||rho_AB^{T_A}||_1 - 1)/2 on the reduction to ``pair``, transposing the first member."""
    red, pair_layout, first = reduced_pair(rho, pair, layout)
    pt = partial_transpose(red, first, pair_layout)
    pt = 0.5 * (pt + pt.conj().T)
    value = 0.5 * (trace_norm(pt) - 1.0)
    if value < 0:
        if value < -1e-12:
            log.debug("negativity clipped from %.3e", value)
        return 0.0
    return float(value)


def logical_populations(rho: np.ndarray, layout: Optional[HilbertLayout] = None) -> dict[str, float]:
    layout = _layout_for(rho, layout)
    rho = np.asarray(rho)
    return {name: float(np.real(rho[layout.basis_index(k), layout.basis_index(k)])) for name, k in LOGICAL_KETS.items()}
