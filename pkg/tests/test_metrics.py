import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnon_link import metrics
from magnon_link.harness.checks import werner_state, werner_threshold
from magnon_link.tensor import HilbertLayout, LayoutError, ket_to_dm, standard_layout

LAY = standard_layout()


def bell_full(phase=1.0, b=(0, 0, 0, 1)):
    return (LAY.ket((1, 0, 0, 0)) + phase * LAY.ket(b)) / math.sqrt(2)


def test_fidelity_of_pure_states():
    psi = bell_full()
    assert metrics.fidelity(ket_to_dm(psi), psi) == pytest.approx(1.0)
    assert metrics.fidelity(ket_to_dm(LAY.ket((0, 1, 0, 0))), psi) == pytest.approx(0.0)
    with pytest.raises(LayoutError):
        metrics.fidelity(np.eye(4), psi)


@pytest.mark.parametrize("phase", [1.0, -1.0, 1j, np.exp(0.7j)])
def test_fidelity_up_to_phase_recovers_the_phase(phase):
    rho = ket_to_dm(bell_full(phase))
    best, found = metrics.fidelity_up_to_phase(rho, metrics.FINAL_TARGET)
    assert best == pytest.approx(1.0)
    assert found == pytest.approx(phase)
    literal = metrics.fidelity(rho, metrics.FINAL_TARGET.state(LAY))
    assert literal == pytest.approx((1 + np.real(phase)) / 2)


def test_fidelity_up_to_phase_matches_brute_force_maximum():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    best, _ = metrics.fidelity_up_to_phase(rho, metrics.FINAL_TARGET)
    grid = max(
        metrics.fidelity(rho, metrics.FINAL_TARGET.state(LAY, np.exp(1j * p))) for p in np.linspace(0, 2 * np.pi, 4001)
    )
    assert best >= grid - 1e-12 and best - grid < 1e-6


def test_bell_target_validation():
    with pytest.raises(ValueError):
        metrics.BellTarget((0, 3), (1, 0, 0, 0), (1, 0, 0, 0))
    with pytest.raises(ValueError):
        metrics.BellTarget((0, 3), (1, 0, 0, 0), (0, 0, 0, 1), relative_phase=2.0)
    t = metrics.FINAL_TARGET.with_phase(-1)
    assert np.allclose(t.state(LAY), bell_full(-1))


def test_negativity_bell_pairs():
    rho = ket_to_dm(bell_full())
    assert metrics.negativity(rho, metrics.PAIR_N2) == pytest.approx(0.5, abs=1e-12)
    assert metrics.negativity(rho, metrics.PAIR_N1) == pytest.approx(0.0, abs=1e-12)
    rho1 = ket_to_dm(bell_full(-1, (0, 0, 1, 0)))
    assert metrics.negativity(rho1, metrics.PAIR_N1) == pytest.approx(0.5, abs=1e-12)
    # the pair order does not matter
    assert metrics.negativity(rho1, (2, 0)) == pytest.approx(0.5, abs=1e-12)


def test_negativity_pair_validation():
    with pytest.raises(LayoutError):
        metrics.negativity(np.eye(16) / 16, (0, 0))
    with pytest.raises(LayoutError):
        metrics.negativity(np.eye(6) / 6, (0, 1))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1))
def test_werner_negativity_closed_form(p):
    n = metrics.negativity(werner_state(p), (0, 1), HilbertLayout((2, 2)))
    assert n == pytest.approx(max(0.0, (3 * p - 1) / 4), abs=1e-12)


def test_werner_threshold():
    assert werner_threshold() == pytest.approx(1 / 3, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_product_states_have_zero_negativity(seed):
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(4):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        r = a @ a.conj().T
        parts.append(r / np.trace(r))
    rho = parts[0]
    for r in parts[1:]:
        rho = np.kron(rho, r)
    assert metrics.negativity(rho, metrics.PAIR_N1) < 1e-12
    assert metrics.negativity(rho, metrics.PAIR_N2) < 1e-12


def test_logical_populations_and_layout_inference():
    rho = ket_to_dm(bell_full())
    pops = metrics.logical_populations(rho)
    assert pops == pytest.approx({"P_e000": 0.5, "P_g100": 0.0, "P_g010": 0.0, "P_g001": 0.5})
    big = standard_layout(3)
    rho3 = ket_to_dm(big.ket((0, 1, 0, 0)))
    assert metrics.logical_populations(rho3)["P_g100"] == pytest.approx(1.0)
    with pytest.raises(LayoutError):
        metrics.logical_populations(np.eye(10))
