"""Dense linear algebra on small tensor-product Hilbert spaces.

States and operators are plain ``numpy`` arrays. A :class:`HilbertLayout`
carries the per-factor dimensions so that embedding, partial traces and
partial transposes can address factors by index. The standard layout orders
the factors as (qubit, cavity, local magnon, remote magnon).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10

QUBIT, CAVITY, MAGNON_L, MAGNON_R = 0, 1, 2, 3


class LayoutError(ValueError):
    """Raised when an operator or state does not fit the requested layout."""


@dataclass(frozen=True)
class HilbertLayout:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise LayoutError("layout needs at least one factor")
        if any(d < 2 for d in dims):
            raise LayoutError(f"every factor dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.dims)

    def basis_index(self, occupations: Sequence[int]) -> int:
        """Flat index of the product basis ket with the given per-factor levels."""
        if len(occupations) != len(self.dims):
            raise LayoutError("one level per factor required")
        for n, d in zip(occupations, self.dims):
            if not 0 <= n < d:
                raise LayoutError(f"level {n} outside factor of dimension {d}")
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def ket(self, occupations: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.total_dim, dtype=complex)
        v[self.basis_index(occupations)] = 1.0
        return v


def standard_layout(boson_dim: int = 2) -> HilbertLayout:
    """Qubit plus three bosonic modes truncated at ``boson_dim`` levels."""
    return HilbertLayout((2, boson_dim, boson_dim, boson_dim))


def _require_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LayoutError(f"{name} must be square, got shape {m.shape}")
    return m


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(_require_square(a, "a"), _require_square(b, "b"))


def embed(op: np.ndarray, subsystem_index: int, layout: HilbertLayout) -> np.ndarray:
    """Lift a single-factor operator to the full space (identity elsewhere)."""
    op = _require_square(op, "op")
    if not 0 <= subsystem_index < len(layout):
        raise LayoutError(f"subsystem index {subsystem_index} out of range for {layout.dims}")
    if op.shape[0] != layout.dims[subsystem_index]:
        raise LayoutError(
            f"operator dimension {op.shape[0]} does not match factor "
            f"{subsystem_index} of dimension {layout.dims[subsystem_index]}"
        )
    factors = [np.eye(d, dtype=complex) for d in layout.dims]
    factors[subsystem_index] = op.astype(complex)
    return reduce(np.kron, factors)


def _check_state(rho: np.ndarray, layout: HilbertLayout) -> np.ndarray:
    rho = _require_square(rho, "rho")
    if rho.shape[0] != layout.total_dim:
        raise LayoutError(f"density matrix of size {rho.shape[0]} does not match {layout.dims}")
    return rho


def partial_trace(rho: np.ndarray, keep: Iterable[int], layout: HilbertLayout) -> np.ndarray:
    """Reduced density matrix on ``keep``, factors kept in their original order."""
    rho = _check_state(rho, layout)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise LayoutError("keep set must be non-empty")
    n = len(layout)
    if keep[0] < 0 or keep[-1] >= n:
        raise LayoutError(f"keep indices {keep} out of range for {layout.dims}")

    tensor = rho.reshape(layout.dims + layout.dims)
    row = list(range(n))
    col = list(range(n, 2 * n))
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = [row[i] for i in keep] + [col[i] for i in keep]
    reduced = np.einsum(tensor, row + col, out)
    d = int(np.prod([layout.dims[i] for i in keep]))
    return reduced.reshape(d, d)


def partial_transpose(rho: np.ndarray, transpose_subsystem: int, layout: HilbertLayout) -> np.ndarray:
    """Transpose the indices of one factor of a two-factor operator."""
    rho = _check_state(rho, layout)
    if len(layout) != 2:
        raise LayoutError(f"partial transpose needs a bipartite layout, got {layout.dims}")
    if transpose_subsystem not in (0, 1):
        raise LayoutError("transpose_subsystem must be 0 or 1")
    da, db = layout.dims
    t = rho.reshape(da, db, da, db)
    if transpose_subsystem == 0:
        t = t.transpose(2, 1, 0, 3)
    else:
        t = t.transpose(0, 3, 2, 1)
    return t.reshape(da * db, da * db)


def hermiticity_error(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def _require_hermitian(m: np.ndarray) -> np.ndarray:
    m = _require_square(m)
    err = hermiticity_error(m)
    if err > HERMITIAN_TOL:
        raise ValueError(f"matrix is not Hermitian (max |m - m^dag| = {err:.3e})")
    return m


def hermitian_eigensystem(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column eigenvectors of a Hermitian matrix.

    Each eigenvector is rotated so that its first non-negligible component is
    real and positive, which makes the output deterministic.
    """
    m = _require_hermitian(m)
    h = 0.5 * (m + m.conj().T)
    try:
        vals, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"Hermitian eigensolver did not converge: {exc}") from exc

    vecs = np.array(vecs, dtype=complex)
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            pivot = col[nz[0]]
            vecs[:, j] = col * (abs(pivot) / pivot)

    scale = max(np.linalg.norm(h, 2), 1.0)
    residual = np.linalg.norm(h @ vecs - vecs * vals, axis=0)
    if residual.size and residual.max() > 1e-9 * scale:
        raise ArithmeticError(f"eigen-residual {residual.max():.3e} exceeds tolerance")
    return vals, vecs


def trace_norm(m: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    m = _require_hermitian(m)
    vals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sum(np.abs(vals)))


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / n


# single-factor building blocks

def destroy(d: int) -> np.ndarray:
    """Truncated bosonic lowering operator."""
    return np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)


SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with g=0, e=1
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)  # |e><e| - |g><g|
