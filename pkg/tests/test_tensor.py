import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnon_link.tensor import (
    SIGMA_MINUS,
    SIGMA_Z,
    HilbertLayout,
    LayoutError,
    destroy,
    embed,
    hermitian_eigensystem,
    hermiticity_error,
    kron,
    ket_to_dm,
    normalize,
    partial_trace,
    partial_transpose,
    standard_layout,
    trace_norm,
)


def random_density(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_layout_basics():
    lay = standard_layout()
    assert lay.dims == (2, 2, 2, 2) and lay.total_dim == 16
    assert lay.basis_index((1, 0, 0, 0)) == 8
    assert lay.basis_index((0, 0, 0, 1)) == 1
    assert standard_layout(3).total_dim == 54
    with pytest.raises(LayoutError):
        lay.basis_index((2, 0, 0, 0))
    with pytest.raises(LayoutError):
        HilbertLayout((2, 1))
    with pytest.raises(LayoutError):
        HilbertLayout(())


def test_embed_matches_explicit_kron():
    lay = standard_layout()
    a = destroy(2)
    expected = np.kron(np.kron(np.eye(2), a), np.eye(4))
    assert np.array_equal(embed(a, 1, lay), expected)
    with pytest.raises(LayoutError):
        embed(destroy(3), 1, lay)
    with pytest.raises(LayoutError):
        embed(a, 4, lay)


def test_embedded_operators_commute_across_factors():
    lay = standard_layout(3)
    a = embed(destroy(3), 1, lay)
    b = embed(destroy(3), 2, lay)
    assert np.allclose(a @ b.conj().T, b.conj().T @ a)


def test_destroy_and_pauli_conventions():
    assert np.allclose(destroy(3), [[0, 1, 0], [0, 0, np.sqrt(2)], [0, 0, 0]])
    # sigma_- lowers e (index 1) to g (index 0)
    assert np.allclose(SIGMA_MINUS @ np.array([0, 1]), [1, 0])
    assert np.allclose(SIGMA_Z @ np.array([0, 1]), [0, 1])
    assert np.allclose(SIGMA_Z @ np.array([1, 0]), [-1, 0])


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(1)
    rhos = [random_density(2, rng) for _ in range(4)]
    full = rhos[0]
    for r in rhos[1:]:
        full = np.kron(full, r)
    lay = standard_layout()
    assert np.allclose(partial_trace(full, [0, 2], lay), np.kron(rhos[0], rhos[2]))
    assert np.allclose(partial_trace(full, [3], lay), rhos[3])
    assert np.allclose(partial_trace(full, [2, 0], lay), np.kron(rhos[0], rhos[2]))
    with pytest.raises(LayoutError):
        partial_trace(full, [], lay)
    with pytest.raises(LayoutError):
        partial_trace(np.eye(8), [0], lay)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sets(st.integers(0, 3), min_size=1, max_size=4))
def test_partial_trace_preserves_trace_and_positivity(seed, keep):
    rng = np.random.default_rng(seed)
    rho = random_density(16, rng)
    red = partial_trace(rho, keep, standard_layout())
    assert abs(np.trace(red) - 1) < 1e-12
    assert hermiticity_error(red) < 1e-12
    assert np.linalg.eigvalsh(red).min() > -1e-12


def test_partial_transpose_known_matrix():
    lay = HilbertLayout((2, 2))
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    pt = partial_transpose(ket_to_dm(bell), 0, lay)
    # the swap operator / 2
    swap = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]) / 2
    assert np.allclose(pt, swap)
    assert np.allclose(partial_transpose(ket_to_dm(bell), 1, lay), swap)
    with pytest.raises(LayoutError):
        partial_transpose(np.eye(16), 0, standard_layout())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_transpose_is_involution_and_keeps_trace(seed):
    rng = np.random.default_rng(seed)
    lay = HilbertLayout((2, 3))
    rho = random_density(6, rng)
    pt = partial_transpose(rho, 1, lay)
    assert np.allclose(partial_transpose(pt, 1, lay), rho)
    assert abs(np.trace(pt) - 1) < 1e-12
    # full transpose = both partial transposes
    assert np.allclose(partial_transpose(pt, 0, lay), rho.T)


def test_eigensystem_phase_convention_and_residual():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    h = a + a.conj().T
    vals, vecs = hermitian_eigensystem(h)
    assert np.all(np.diff(vals) >= 0)
    assert np.allclose(h @ vecs, vecs * vals)
    for j in range(5):
        first = vecs[np.flatnonzero(np.abs(vecs[:, j]) > 1e-12)[0], j]
        assert abs(first.imag) < 1e-14 and first.real > 0
    with pytest.raises(ValueError):
        hermitian_eigensystem(a)


def test_trace_norm():
    assert trace_norm(np.diag([1.0, -2.0, 0.5])) == pytest.approx(3.5)
    with pytest.raises(ValueError):
        trace_norm(np.array([[0, 1], [0, 0]]))


def test_kron_and_normalize():
    assert kron(np.eye(2), np.eye(3)).shape == (6, 6)
    with pytest.raises(LayoutError):
        kron(np.ones((2, 3)), np.eye(2))
    assert np.linalg.norm(normalize([3, 4])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        normalize([0, 0])
