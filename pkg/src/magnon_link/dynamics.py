"""Time evolution under the stage Hamiltonians and the dissipative master equation.

The Lindblad integrator is fixed-step RK4 on the row-major vectorised density
matrix. The generator is compiled once per stage into a handful of sparse
superoperators, each multiplied by a scalar control coefficient that is
pre-sampled on the RK4 half-step grid; the inner loop runs under numba.
:func:`lindblad_rhs` is the plain matrix-form reference used to cross-check
the compiled path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np
import scipy.sparse as sp

from . import metrics
from .control import ControlSchedule, build_schedule
from .model import (
    CrossDissipator,
    DissipatorTerm,
    SystemParams,
    build_dissipators,
    g_eff_from_pulses,
    stage1_terms,
    stage2_terms,
)
from .tensor import HilbertLayout, hermiticity_error

log = logging.getLogger(__name__)

CoefFn = Callable[[np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite or non-normalised state."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: Optional[float] = None  # us; None -> T1/4000 in stage 1, (T2-T1)/40000 in stage 2
    record_stride: Optional[int] = None  # None -> about 500 samples per stage
    method: str = "rk4"
    trace_abort: float = 1e-6
    renorm_threshold: float = 1e-9
    max_renormalizations: int = 100
    enforce_dt_bound: bool = True

    def __post_init__(self):
        if self.method != "rk4":
            raise ValueError(f"unsupported integration method {self.method!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def stage_dts(self, params: SystemParams) -> tuple[float, float]:
        if self.dt is not None:
            return float(self.dt), float(self.dt)
        return default_stage_dts(params)


def default_stage_dts(params: SystemParams) -> tuple[float, float]:
    return params.T1 / 4000, (params.T2 - params.T1) / 40000


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    populations: np.ndarray  # (n, 4) for |e000>, |g100>, |g010>, |g001>
    N1: np.ndarray
    N2: np.ndarray
    trace_err: np.ndarray
    herm_err: np.ndarray
    min_eig: np.ndarray
    renormalizations: int = 0
    max_trace_drift: float = 0.0

    COLUMNS = ("t_us", "P_e000", "P_g100", "P_g010", "P_g001", "N1", "N2", "trace_err", "herm_err", "min_eig")

    def __len__(self) -> int:
        return len(self.times)

    def table(self) -> np.ndarray:
        """Rows in the timeseries CSV column order."""
        return np.column_stack(
            [self.times, self.populations, self.N1, self.N2, self.trace_err, self.herm_err, self.min_eig]
        )

    @classmethod
    def concatenate(cls, parts: Sequence["TrajectoryRecord"]) -> "TrajectoryRecord":
        keep = []
        last = -math.inf
        for part in parts:
            mask = part.times > last
            keep.append((part, mask))
            if len(part.times):
                last = part.times[mask][-1] if mask.any() else last
        cat = lambda name: np.concatenate([getattr(p, name)[m] for p, m in keep])
        return cls(
            times=cat("times"),
            populations=np.concatenate([p.populations[m] for p, m in keep]),
            N1=cat("N1"),
            N2=cat("N2"),
            trace_err=cat("trace_err"),
            herm_err=cat("herm_err"),
            min_eig=cat("min_eig"),
            renormalizations=sum(p.renormalizations for p in parts),
            max_trace_drift=max((p.max_trace_drift for p in parts), default=0.0),
        )


@dataclass
class StageGenerator:
    """Master-equation generator of one stage.

    ``hamiltonian`` holds Hermitian pieces H_k with coefficient functions so
    that H(t) = sum_k c_k(t) H_k. Coefficient functions take an array of
    times and return an array of values.
    """

    layout: HilbertLayout
    hamiltonian: list[tuple[np.ndarray, CoefFn]] = field(default_factory=list)
    dissipators: list[DissipatorTerm] = field(default_factory=list)
    cross: list[CrossDissipator] = field(default_factory=list)
    _compiled: Optional[tuple] = field(default=None, init=False, repr=False)

    def hamiltonian_at(self, t: float) -> np.ndarray:
        d = self.layout.total_dim
        H = np.zeros((d, d), dtype=complex)
        for op, coef in self.hamiltonian:
            H = H + complex(np.asarray(coef(np.asarray(t)))) * op
        return H

    def max_rate(self, times: np.ndarray) -> float:
        """Largest coupling or dissipation rate over the sampled times."""
        rates = [t.rate for t in self.dissipators]
        for _, coef in self.hamiltonian:
            rates.append(float(np.max(np.abs(coef(times)))))
        if self.cross:
            n = int(round(math.sqrt(len(self.cross))))
            S = np.stack([c.coefficient(times) for c in self.cross]).reshape(n, n, -1)
            # largest eigenvalue of the coefficient block bounds the cross-term rates
            rates.append(float(np.max(np.abs(np.linalg.eigvalsh(np.moveaxis(S, -1, 0))))))
        return max(rates, default=0.0)

    def compile(self):
        """Pack superoperators into stacked CSR arrays for the RK4 kernel."""
        if self._compiled is not None:
            return self._compiled
        d = self.layout.total_dim
        eye = sp.identity(d, dtype=complex, format="csr")

        def left(a):
            return sp.kron(sp.csr_matrix(a), eye, format="csr")

        def right(b):
            return sp.kron(eye, sp.csr_matrix(b).T, format="csr")

        static = sp.csr_matrix((d * d, d * d), dtype=complex)
        for term in self.dissipators:
            L = term.operator
            LdL = L.conj().T @ L
            sup = sp.kron(sp.csr_matrix(L), sp.csr_matrix(L.conj()), format="csr")
            static = static + term.rate * (sup - 0.5 * left(LdL) - 0.5 * right(LdL))

        mats = [static]
        coefs: list[CoefFn] = [lambda t: np.ones_like(t, dtype=complex)]
        for op, coef in self.hamiltonian:
            mats.append(-1j * (left(op) - right(op)))
            coefs.append(coef)
        for c in self.cross:
            mj, mk = c.op_left, c.op_right
            jk = mj.conj().T @ mk
            sup = 2 * sp.kron(sp.csr_matrix(mk), sp.csr_matrix(mj.conj()), format="csr")
            mats.append(sup - left(jk) - right(jk))
            coefs.append(c.coefficient)

        indptr = np.empty((len(mats), d * d + 1), dtype=np.int32)
        indices, data = [], []
        offset = 0
        for k, m in enumerate(mats):
            m = sp.csr_matrix(m)
            m.eliminate_zeros()
            m.sort_indices()
            indptr[k] = m.indptr + offset
            indices.append(m.indices.astype(np.int32))
            data.append(m.data.astype(complex))
            offset += m.nnz
        self._compiled = (
            indptr,
            np.concatenate(indices) if indices else np.zeros(0, np.int32),
            np.concatenate(data) if data else np.zeros(0, complex),
            coefs,
        )
        return self._compiled

    def coefficient_grid(self, times: np.ndarray) -> np.ndarray:
        _, _, _, coefs = self.compile()
        out = np.empty((len(coefs), len(times)), dtype=complex)
        for k, c in enumerate(coefs):
            out[k] = np.broadcast_to(np.asarray(c(times), dtype=complex), times.shape)
        return out

    def check_hermiticity_preserving(self, coef_columns: np.ndarray, tol: float = 1e-10) -> None:
        """Raise unless the full generator maps a Hermitian probe to a Hermitian matrix.

        The RK4 kernel only evaluates the upper triangle, which is valid
        exactly when this holds at every coefficient column.
        """
        indptr, indices, data, _ = self.compile()
        d = self.layout.total_dim
        rng = np.random.default_rng(0)
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        probe = (a + a.conj().T).reshape(-1)
        out = np.empty_like(probe)
        scale = max(float(np.max(np.abs(data), initial=0.0)), 1.0) * float(np.max(np.abs(probe)))
        for col in np.atleast_2d(coef_columns).T:
            _matvec(out, probe, indptr, indices, data, np.ascontiguousarray(col))
            m = out.reshape(d, d)
            err = hermiticity_error(m) / (scale * max(float(np.max(np.abs(col))), 1.0))
            if err > tol:
                raise IntegrationError(f"generator does not preserve Hermiticity (relative defect {err:.2e})")

    def rhs(self, rho: np.ndarray, t: float) -> np.ndarray:
        """Compiled-path derivative at a single time, for cross-checks."""
        indptr, indices, data, _ = self.compile()
        c = self.coefficient_grid(np.array([float(t)]))[:, 0].copy()
        v = np.ascontiguousarray(rho, dtype=complex).reshape(-1)
        out = np.zeros_like(v)
        _matvec(out, v, indptr, indices, data, c)
        return out.reshape(rho.shape)


def _lindblad_term(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


def lindblad_rhs(
    rho: np.ndarray,
    t: float,
    hamiltonian: Callable[[float], np.ndarray],
    dissipators: Sequence[DissipatorTerm] = (),
    cross: Sequence[CrossDissipator] = (),
) -> np.ndarray:
    """Matrix-form master-equation derivative.

    drho/dt = -i[H(t), rho] + sum_k r_k L[A_k] rho
              + sum_jk S_jk(t) (2 m_k rho m_j^dag - m_j^dag m_k rho - rho m_j^dag m_k)
    """
    rho = np.asarray(rho)
    H = hamiltonian(t)
    if H.shape != rho.shape:
        raise ValueError(f"Hamiltonian shape {H.shape} does not match state {rho.shape}")
    out = -1j * (H @ rho - rho @ H)
    for term in dissipators:
        out = out + term.rate * _lindblad_term(term.operator, rho)
    for c in cross:
        s = complex(np.asarray(c.coefficient(np.asarray(t))))
        if s == 0:
            continue
        mj, mk = c.op_left, c.op_right
        jk = mj.conj().T @ mk
        out = out + s * (2 * mk @ rho @ mj.conj().T - jk @ rho - rho @ jk)
    return out


@numba.njit(cache=True)
def _matvec(out, v, indptr, indices, data, coef):
    n = v.shape[0]
    for i in range(n):
        out[i] = 0.0
    for k in range(indptr.shape[0]):
        c = coef[k]
        if c == 0:
            continue
        for row in range(n):
            acc = 0j
            for p in range(indptr[k, row], indptr[k, row + 1]):
                acc += data[p] * v[indices[p]]
            out[row] += c * acc


@numba.njit(cache=True)
def _matvec_hermitian(out, v, indptr, indices, data, coef, upper, mirror):
    # rows of the upper triangle only; the rest follows from d(rho)/dt being Hermitian
    for idx in range(upper.shape[0]):
        out[upper[idx]] = 0.0
    for k in range(indptr.shape[0]):
        c = coef[k]
        if c == 0:
            continue
        for idx in range(upper.shape[0]):
            row = upper[idx]
            acc = 0j
            for p in range(indptr[k, row], indptr[k, row + 1]):
                acc += data[p] * v[indices[p]]
            out[row] += c * acc
    for idx in range(upper.shape[0]):
        out[mirror[idx]] = out[upper[idx]].conjugate()


@numba.njit(cache=True)
def _rk4_run(v, d, dt, nsteps, indptr, indices, data, coefs, renorm_threshold, upper, mirror):
    """Advance ``nsteps`` RK4 steps; ``coefs`` columns sit on the half-step grid.

    Returns (renormalisations, max trace drift, last Hermiticity error, ok).
    """
    n = v.shape[0]
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    renorms = 0
    drift_max = 0.0
    herm = 0.0
    for s in range(nsteps):
        c0 = coefs[:, 2 * s]
        ch = coefs[:, 2 * s + 1]
        c1 = coefs[:, 2 * s + 2]
        _matvec_hermitian(k1, v, indptr, indices, data, c0, upper, mirror)
        for i in range(n):
            tmp[i] = v[i] + 0.5 * dt * k1[i]
        _matvec_hermitian(k2, tmp, indptr, indices, data, ch, upper, mirror)
        for i in range(n):
            tmp[i] = v[i] + 0.5 * dt * k2[i]
        _matvec_hermitian(k3, tmp, indptr, indices, data, ch, upper, mirror)
        for i in range(n):
            tmp[i] = v[i] + dt * k3[i]
        _matvec_hermitian(k4, tmp, indptr, indices, data, c1, upper, mirror)
        for i in range(n):
            v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

        herm = 0.0
        tr = 0j
        for i in range(d):
            for j in range(i + 1, d):
                a = v[i * d + j]
                b = v[j * d + i]
                e = abs(a - b.conjugate())
                if e > herm:
                    herm = e
                m = 0.5 * (a + b.conjugate())
                v[i * d + j] = m
                v[j * d + i] = m.conjugate()
            x = v[i * d + i]
            e = abs(x.imag) * 2.0
            if e > herm:
                herm = e
            v[i * d + i] = x.real
            tr += x.real
        drift = abs(tr - 1.0)
        if drift > drift_max:
            drift_max = drift
        if not np.isfinite(drift):
            return renorms, drift_max, herm, False
        if drift > renorm_threshold:
            for i in range(n):
                v[i] /= tr
            renorms += 1
    return renorms, drift_max, herm, True


def _triangle_rows(d: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(d)
    return (i * d + j).astype(np.int32), (j * d + i).astype(np.int32)


def _record_sample(rho: np.ndarray, layout: HilbertLayout, herm: float):
    pops = metrics.logical_populations(rho, layout)
    return (
        [pops[k] for k in metrics.LOGICAL_KETS],
        metrics.negativity(rho, metrics.PAIR_N1, layout),
        metrics.negativity(rho, metrics.PAIR_N2, layout),
        abs(np.trace(rho).real - 1.0),
        herm,
        float(np.linalg.eigvalsh(rho)[0]),
    )


def evolve_lindblad(
    rho0: np.ndarray,
    t_span: tuple[float, float],
    generator: StageGenerator,
    config: IntegratorConfig,
    dt: Optional[float] = None,
    record_stride: Optional[int] = None,
    record_start: bool = True,
) -> tuple[np.ndarray, TrajectoryRecord]:
    """Fixed-step RK4 over ``t_span`` with sampled diagnostics.

    The step is shrunk so that an integer number of steps lands exactly on
    ``t_span[1]``. The state is symmetrised after every step; its trace is
    renormalised only when it drifts by more than ``config.renorm_threshold``.
    """
    t_a, t_b = map(float, t_span)
    layout = generator.layout
    d = layout.total_dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError(f"initial state shape {rho0.shape} does not match layout {layout.dims}")
    if not t_b > t_a:
        raise ValueError("t_span must be increasing")
    dt = float(dt if dt is not None else config.dt)
    nsteps = max(1, math.ceil((t_b - t_a) / dt - 1e-9))
    h = (t_b - t_a) / nsteps
    stride = record_stride or config.record_stride or max(1, nsteps // 500)

    indptr, indices, data, _ = generator.compile()
    half_grid = t_a + 0.5 * h * np.arange(2 * nsteps + 1)
    half_grid[-1] = t_b
    coefs = generator.coefficient_grid(half_grid)
    generator.check_hermiticity_preserving(coefs[:, :: max(1, coefs.shape[1] // 64)])
    upper, mirror = _triangle_rows(d)

    v = rho0.reshape(-1).copy()
    rows = []
    times = []
    if record_start:
        times.append(t_a)
        rows.append(_record_sample(rho0, layout, hermiticity_error(rho0)))

    renorms = 0
    drift_max = 0.0
    done = 0
    while done < nsteps:
        n = min(stride, nsteps - done)
        seg = np.ascontiguousarray(coefs[:, 2 * done : 2 * (done + n) + 1])
        r, drift, herm, ok = _rk4_run(
            v, d, h, n, indptr, indices, data, seg, config.renorm_threshold, upper, mirror
        )
        done += n
        renorms += r
        drift_max = max(drift_max, drift)
        t_now = t_b if done == nsteps else t_a + done * h
        if not ok or not np.all(np.isfinite(v)):
            raise IntegrationError(f"non-finite state at t = {t_now:.6g} us")
        if drift > config.trace_abort:
            raise IntegrationError(
                f"trace drift {drift:.3e} exceeds {config.trace_abort:.1e} at t = {t_now:.6g} us; reduce dt"
            )
        if renorms > config.max_renormalizations:
            raise IntegrationError(
                f"{renorms} trace renormalisations by t = {t_now:.6g} us "
                f"(limit {config.max_renormalizations}); generator or step size is suspect"
            )
        rho = v.reshape(d, d)
        times.append(t_now)
        rows.append(_record_sample(rho, layout, herm))

    if renorms:
        log.info("trace renormalised %d times over [%g, %g]", renorms, t_a, t_b)
    pops, n1, n2, tr, he, me = zip(*rows)
    record = TrajectoryRecord(
        times=np.array(times),
        populations=np.array(pops),
        N1=np.array(n1),
        N2=np.array(n2),
        trace_err=np.array(tr),
        herm_err=np.array(he),
        min_eig=np.array(me),
        renormalizations=renorms,
        max_trace_drift=drift_max,
    )
    return v.reshape(d, d).copy(), record


def evolve_schrodinger(
    psi0: np.ndarray,
    t_span: tuple[float, float],
    h_fn: Callable[[float], np.ndarray],
    dt: float,
    checkpoints: Optional[Sequence[float]] = None,
):
    """RK4 for d psi/dt = -i H(t) psi, renormalised every step.

    With ``checkpoints`` the states at those times (which must lie on the step
    grid within rounding) are returned alongside the final state.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if abs(np.linalg.norm(psi) - 1) > 1e-12:
        raise ValueError("initial state must be normalised")
    t_a, t_b = map(float, t_span)
    nsteps = max(1, math.ceil((t_b - t_a) / dt - 1e-9))
    h = (t_b - t_a) / nsteps
    wanted = sorted(checkpoints or [])
    saved = {}
    drift = 0.0
    f = lambda t, y: -1j * (h_fn(t) @ y)
    for s in range(nsteps):
        t = t_a + s * h
        while wanted and wanted[0] <= t + 0.5 * h:
            saved[wanted.pop(0)] = psi.copy()
        k1 = f(t, psi)
        k2 = f(t + h / 2, psi + h / 2 * k1)
        k3 = f(t + h / 2, psi + h / 2 * k2)
        k4 = f(t + h, psi + h * k3)
        psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        norm = np.linalg.norm(psi)
        if not np.isfinite(norm):
            raise IntegrationError(f"non-finite state at t = {t + h:.6g}")
        drift = max(drift, abs(norm - 1))
        psi /= norm
    for t in wanted:
        saved[t] = psi.copy()
    log.debug("Schrodinger RK4 max norm drift per step %.3e", drift)
    if checkpoints is not None:
        return psi, saved
    return psi


def stage1_generator(params: SystemParams, schedule: ControlSchedule, dissipative: bool = True) -> StageGenerator:
    layout = params.layout
    qc, cm = stage1_terms(layout)
    g1 = lambda t: np.asarray(schedule.stage1_couplings(t)[0], dtype=complex)
    g2 = lambda t: np.asarray(schedule.stage1_couplings(t)[1], dtype=complex)
    terms = build_dissipators(params, layout)[0] if dissipative else []
    return StageGenerator(layout, [(qc, g1), (cm, g2)], terms, [])


def stage2_generator(params: SystemParams, schedule: ControlSchedule, dissipative: bool = True) -> StageGenerator:
    layout = params.layout
    X, Y = stage2_terms(layout)
    g = params.g_angular

    def geff(t):
        return g_eff_from_pulses(*schedule.stage2_pulses(t), g)

    terms, cross = build_dissipators(params, layout, pulses=schedule.stage2_pulses)
    if not dissipative:
        terms = []
    return StageGenerator(
        layout,
        [(X, lambda t: np.real(geff(t)).astype(complex)), (Y, lambda t: np.imag(geff(t)).astype(complex))],
        terms,
        cross,
    )


def initial_state(params: SystemParams) -> np.ndarray:
    layout = params.layout
    psi = layout.ket((0, 1, 0, 0))
    return np.outer(psi, psi.conj())


def check_dt(params: SystemParams, generators: Sequence[tuple[StageGenerator, tuple[float, float]]], dt: float):
    """Return (max_rate, bound) where bound = 0.01 / max_rate."""
    rate = 0.0
    for gen, (a, b) in generators:
        rate = max(rate, gen.max_rate(np.linspace(a, b, 513)))
    bound = 0.01 / rate if rate > 0 else math.inf
    return rate, bound


@dataclass
class ProtocolRun:
    rho: np.ndarray
    record: TrajectoryRecord
    schedule: ControlSchedule
    dts: tuple[float, float]
    strides: tuple[int, int]
    max_rate: float
    dt_bound: float

    def __iter__(self):
        # unpacks as (rho, record)
        return iter((self.rho, self.record))


def run_protocol(params: SystemParams, config: Optional[IntegratorConfig] = None) -> ProtocolRun:
    """Evolve |g100><g100| through stage 1 on [0, T1] and stage 2 on [T1, T2]."""
    config = config or IntegratorConfig()
    schedule = build_schedule(params)
    gen1 = stage1_generator(params, schedule)
    gen2 = stage2_generator(params, schedule)
    spans = ((0.0, params.T1), (params.T1, params.T2))
    dts = config.stage_dts(params)
    rate, bound = check_dt(params, [(gen1, spans[0]), (gen2, spans[1])], max(dts))
    if config.enforce_dt_bound and max(dts) > bound * (1 + 1e-12):
        raise ValueError(f"dt = {max(dts):.3e} us exceeds 0.01/max_rate = {bound:.3e} us")

    strides = []
    for (a, b), dt in zip(spans, dts):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        strides.append(config.record_stride or max(1, n // 500))

    rho, rec1 = evolve_lindblad(
        initial_state(params), spans[0], gen1, config, dt=dts[0], record_stride=strides[0]
    )
    rho, rec2 = evolve_lindblad(
        rho, spans[1], gen2, config, dt=dts[1], record_stride=strides[1], record_start=False
    )
    record = TrajectoryRecord.concatenate([rec1, rec2])
    if record.renormalizations > config.max_renormalizations:
        raise IntegrationError(f"{record.renormalizations} trace renormalisations over the run")
    return ProtocolRun(rho, record, schedule, dts, tuple(strides), rate, bound)
