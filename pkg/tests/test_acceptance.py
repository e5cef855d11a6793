"""Acceptance criteria, one test each; every test reports a PASS/FAIL line with measured values.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section at the end of the terminal output (or add ``-s`` to see lines inline).
"""

import json
import math
import time

import numpy as np
import pytest

from magnon_link import metrics
from magnon_link.dynamics import IntegratorConfig, StageGenerator, evolve_lindblad, run_protocol
from magnon_link.harness.checks import (
    closed_stage1,
    invariant_residual,
    lr_reconstruction,
    negativity_units,
    rabi_oracle,
    scaled_integrator,
)
from magnon_link.harness.config import parse_config
from magnon_link.harness.runner import evaluate_cells, run_sweep
from magnon_link.model import SystemParams, build_dissipators, thermal_occupation

ZERO = dict(gamma_q=0.0, gamma_phi=0.0, kappa_c=0.0, kappa_mL=0.0, kappa_mR=0.0)


@pytest.fixture(scope="module")
def default_run():
    p = SystemParams()
    start = time.perf_counter()
    run = run_protocol(p)
    return p, run, time.perf_counter() - start


def test_c01_closed_stage1_rabi_oracle(closed_params, acceptance_report):
    start = time.perf_counter()
    m = closed_stage1(closed_params)
    elapsed = time.perf_counter() - start
    oracle = np.abs(rabi_oracle(closed_params.T1, closed_params.T1)) ** 2
    ok = (
        m["P_g100"] <= 1e-6
        and abs(m["P_e000"] - 0.5) <= 1e-4
        and abs(m["P_g010"] - 0.5) <= 1e-4
        and abs(m["P_e000"] - oracle[0]) <= 1e-4
        and abs(m["N1"] - 0.5) <= 1e-4
        and elapsed < 1.0
    )
    acceptance_report(
        1, ok,
        f"P_g100={m['P_g100']:.2e} P_e000={m['P_e000']:.8f} P_g010={m['P_g010']:.8f} "
        f"N1={m['N1']:.8f} runtime={elapsed:.2f}s",
    )
    assert ok


def test_c02_lr_reconstruction(default_params, acceptance_report):
    overlap = lr_reconstruction(default_params.T1, checkpoints=20)
    ok = overlap >= 1 - 1e-6
    acceptance_report(2, ok, f"min overlap over 20 checkpoints = 1 - {1 - overlap:.2e}")
    assert ok


def test_c03_invariant_condition(default_params, acceptance_report):
    residual, omega0 = invariant_residual(default_params.T1, points=1000)
    ok = residual <= 1e-8 * omega0
    acceptance_report(3, ok, f"max residual = {residual:.2e} (bound {1e-8 * omega0:.0e})")
    assert ok


def test_c04_closed_full_protocol(closed_params, acceptance_report):
    run = run_protocol(closed_params)
    F, phase = metrics.fidelity_up_to_phase(run.rho, metrics.FINAL_TARGET)
    N2 = metrics.negativity(run.rho, metrics.PAIR_N2)
    ok = F >= 0.99 and N2 >= 0.49
    acceptance_report(4, ok, f"F_up_to_phase={F:.6f} (phase {phase.real:+.3f}{phase.imag:+.3f}i) N2(T2)={N2:.6f}")
    assert ok


def test_c05_headline_numbers(default_run, acceptance_report):
    p, run, elapsed = default_run
    F, _ = metrics.fidelity_up_to_phase(run.rho, metrics.FINAL_TARGET)
    N2max = float(run.record.N2.max())
    ok = F >= 0.85 and N2max >= 0.35 and elapsed < 30
    band = abs(F - 0.90) <= 0.05 and abs(N2max - 0.40) <= 0.05
    acceptance_report(
        5, ok,
        f"F={F:.4f} max N2={N2max:.4f} (within +-0.05 of 0.90/0.40: {band}) runtime={elapsed:.1f}s",
    )
    assert ok


def test_c06_generator_sanity(default_run, acceptance_report):
    p, run, _ = default_run
    rec = run.record
    tr, herm, mineig = rec.trace_err.max(), rec.herm_err.max(), rec.min_eig.min()
    F = metrics.fidelity_up_to_phase(run.rho, metrics.FINAL_TARGET)[0]
    half = run_protocol(p, scaled_integrator(p, IntegratorConfig(), 0.5))
    F_half = metrics.fidelity_up_to_phase(half.rho, metrics.FINAL_TARGET)[0]
    ok = tr <= 1e-8 and herm <= 1e-10 and mineig >= -1e-7 and abs(F - F_half) <= 1e-6
    acceptance_report(
        6, ok,
        f"samples={len(rec)} max|tr-1|={tr:.1e} herm={herm:.1e} min eig={mineig:.1e} "
        f"|F(dt)-F(dt/2)|={abs(F - F_half):.1e}",
    )
    assert ok


def test_c07_amplitude_damping(acceptance_report):
    p = SystemParams(**{**ZERO, "gamma_q": 0.5})
    terms, _ = build_dissipators(p)
    assert [t.label for t in terms] == ["gamma_q L[sm]"]
    gen = StageGenerator(p.layout, [], terms, [])
    gamma = p.rate("gamma_q")
    psi = p.layout.ket((1, 0, 0, 0))
    T = 3.0 / gamma
    _, rec = evolve_lindblad(np.outer(psi, psi), (0.0, T), gen, IntegratorConfig(), dt=T / 20000, record_stride=2000)
    err = np.abs(rec.populations[1:, 0] - np.exp(-gamma * rec.times[1:]))
    ok = len(err) == 10 and err.max() <= 1e-8
    acceptance_report(7, ok, f"max |P_e - exp(-gamma t)| over {len(err)} checkpoints = {err.max():.1e}")
    assert ok


def test_c08_thermal_occupations(acceptance_report):
    n5, n10 = thermal_occupation(5.0, 0.05), thermal_occupation(10.0, 0.05)
    # hand evaluation: x = h f / (k_B T); 1 / (e^x - 1)
    hand5 = 1 / math.expm1(6.62607015e-34 * 5e9 / (1.380649e-23 * 0.05))
    ok = abs(n5 / 8.30e-3 - 1) <= 0.01 and abs(n10 / 6.8e-5 - 1) <= 0.01 and n5 == pytest.approx(hand5, rel=1e-12)
    acceptance_report(8, ok, f"n(5 GHz, 50 mK)={n5:.4e} n(10 GHz, 50 mK)={n10:.4e}")
    assert ok


def test_c09_negativity_units(acceptance_report):
    m = negativity_units()
    ok = (
        abs(m["bell"] - 0.5) <= 1e-10
        and m["product_pure"] <= 1e-12
        and m["product_mixed"] <= 1e-12
        and abs(m["werner_threshold"] - 1 / 3) <= 1e-6
    )
    acceptance_report(
        9, ok,
        f"Bell={m['bell']:.12f} product={max(m['product_pure'], m['product_mixed']):.1e} "
        f"Werner p*={m['werner_threshold']:.9f}",
    )
    assert ok


def test_c10_robustness_ordering(acceptance_report):
    """Rate lines at 21 points: dephasing vs relaxation, local vs remote magnon decay, and monotonicity.

    In a comparison pair the partner rate is zero and all other rates stay at
    baseline, so that both curves start from the same point at r = 0.
    """
    base = SystemParams()
    qubit_grid = [0.5 * i / 20 for i in range(21)]
    kappa_grid = [2.5 * i / 20 for i in range(21)]
    lines = {
        "gamma_q": [dict(gamma_q=r, gamma_phi=0.0) for r in qubit_grid],
        "gamma_phi": [dict(gamma_phi=r, gamma_q=0.0) for r in qubit_grid],
        "kappa_mL": [dict(kappa_mL=r, kappa_mR=0.0) for r in kappa_grid],
        "kappa_mR": [dict(kappa_mR=r, kappa_mL=0.0) for r in kappa_grid],
        "kappa_c": [dict(kappa_c=r) for r in kappa_grid],
    }
    cells = [c for name in lines for c in lines[name]]
    start = time.perf_counter()
    results = evaluate_cells(base, IntegratorConfig(), cells)
    elapsed = time.perf_counter() - start
    assert all(r.ok for r in results)
    F = {n: np.array([r.F for r in results[21 * k : 21 * (k + 1)]]) for k, n in enumerate(lines)}
    N = {n: np.array([r.N2_max for r in results[21 * k : 21 * (k + 1)]]) for k, n in enumerate(lines)}

    verdicts = {}
    for label, data in (("F", F), ("N2max", N)):
        verdicts[f"{label} dephasing<=relaxation"] = bool(np.all(data["gamma_phi"] <= data["gamma_q"]))
        verdicts[f"{label} local<=remote"] = bool(np.all(data["kappa_mL"] <= data["kappa_mR"]))
        verdicts[f"{label} monotone"] = all(bool(np.all(np.diff(v) <= 0)) for v in data.values())
    ok = all(verdicts.values()) and elapsed < 300
    failed = [k for k, v in verdicts.items() if not v]
    acceptance_report(
        10, ok,
        f"{len(cells)} runs in {elapsed:.0f}s; "
        f"F at r_max: gamma_q {F['gamma_q'][-1]:.4f} gamma_phi {F['gamma_phi'][-1]:.4f} "
        f"kappa_mL {F['kappa_mL'][-1]:.4f} kappa_mR {F['kappa_mR'][-1]:.4f} kappa_c {F['kappa_c'][-1]:.4f}"
        + (f"; failed: {', '.join(failed)}" if failed else ""),
    )
    assert ok


def test_c11_sweep_determinism(tmp_path, acceptance_report):
    text = json.dumps(
        {
            "experiment": {
                "kind": "sweep",
                "sweep": {"axes": [{"name": "gamma_phi", "points": 3}, {"name": "kappa_mR", "points": 2}]},
            }
        }
    )
    cfg = parse_config(text)
    a = run_sweep(cfg, tmp_path / "w1", workers=1)
    b = run_sweep(cfg, tmp_path / "w2", workers=2)
    same = all(
        (tmp_path / "w1" / n).read_bytes() == (tmp_path / "w2" / n).read_bytes()
        for n in ("sweep_F.csv", "sweep_N2max.csv", "sweep_cells.csv")
    )
    ok = same and a.exit_code == b.exit_code == 0
    acceptance_report(11, ok, f"3x2 sweep with 1 and 2 workers: CSV files bit-identical = {same}")
    assert ok
