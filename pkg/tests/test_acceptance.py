"""Acceptance suite: one test per release criterion, full stated scale.

Each test prints a single PASS/FAIL line so `pytest -s` gives a
criterion-by-criterion report. Tolerances are fixed here, not tuned.
"""

import itertools
import time

import numpy as np

from nbbsim.cli import main as cli_main
from nbbsim.config import ArrayConfig, SimConfig, with_zero_noise
from nbbsim.controller import Controller
from nbbsim.crossbar import CrossbarArray, RailDrive, Topology, solve_nodal
from nbbsim.device import DeviceParams, logic_device_params
from nbbsim.experiments import (DEFAULT_SWEEP_REFS_OHM, ExperimentKind,
                                ExperimentSpec, run_endurance, run_error_sweep,
                                run_histogram)
from nbbsim.signal_chain import CalibrationTable, ReferenceResistor

from dense_oracle import solve_dense


def _verdict(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
    return ok


def default_cfg(seed):
    return SimConfig(seed=seed, array=ArrayConfig(rows=16, cols=8))


def test_accuracy_envelope(tmp_path):
    """Error sweep over the 11 reference values: <5% error, <1% sigma."""
    t0 = time.monotonic()
    spec = ExperimentSpec(
        kind=ExperimentKind.ERROR_SWEEP, seed=20_240_001,
        out_path=str(tmp_path / "sweep.csv"),
        repeats=1_000, samples_per_measurement=50,
        reference_values=list(DEFAULT_SWEEP_REFS_OHM))
    summary = run_error_sweep(spec, default_cfg(20_240_001))
    elapsed = time.monotonic() - t0

    worst_err = max(p["relative_error_pct"] for p in summary["points"])
    worst_sig = max(p["relative_sigma_pct"] for p in summary["points"])
    ok = (all(p["status"] == "ok" for p in summary["points"])
          and worst_err < 5.0 and worst_sig < 1.0 and elapsed < 120.0)
    assert _verdict(
        "accuracy-envelope", ok,
        f"(11 points x 1000 reps x 50 samples; worst err {worst_err:.3f}%, "
        f"worst sigma {worst_sig:.3f}%, {elapsed:.1f}s)")


def test_histogram_experiment(tmp_path):
    """1000 measurements of the 99896-ohm reference."""
    truth = 99_896.0
    spec = ExperimentSpec(
        kind=ExperimentKind.HISTOGRAM, seed=20_240_002,
        out_path=str(tmp_path / "hist.csv"),
        repeats=1_000, samples_per_measurement=50, truth_ohm=truth)
    summary = run_histogram(spec, default_cfg(20_240_002))

    with open(spec.out_path) as fh:
        values = [float(line.split(",")[1]) for line in fh.readlines()[1:]]
    ok = (summary["count"] == 1_000
          and truth * 0.95 <= summary["mean_ohm"] <= truth * 1.05
          and summary["relative_sigma_pct"] < 1.0
          and all(1e3 <= v <= 1e6 for v in values))
    assert _verdict(
        "histogram-experiment", ok,
        f"(mean {summary['mean_ohm']:.0f} Ohm, "
        f"sigma/mean {summary['relative_sigma_pct']:.3f}%)")


def test_quantization_only_bound():
    """Noise-free, identity-calibrated log sweep against the in-test bound."""
    cfg = with_zero_noise(SimConfig(seed=20_240_003,
                                    array=ArrayConfig(rows=4, cols=4)),
                          zero_parasitics=True)
    controller = Controller(cfg)
    controller.load_calibration(CalibrationTable.identity())
    chain = controller.chain
    rng = np.random.default_rng(0)

    worst_margin = np.inf
    ok = True
    for r_true in np.logspace(3, 6, 25):
        rec = chain.measure_resistance(
            ReferenceResistor(float(r_true)), cfg.measure.v_read, 50,
            CalibrationTable.identity(), rng)
        stage = chain.stages[rec.stage_id]
        v_out_true = rec.v_drive / r_true * stage.r_feedback_ohm
        # propagated quantization bound: half an ADC LSB on the sensed
        # voltage plus half a DAC LSB on the drive, both relative
        adc_term = 0.5 * chain.adc.full_scale / chain.adc.code_max / v_out_true
        dac_term = 0.5 * 5.0 / chain.dac.code_max / rec.v_drive
        bound = adc_term + dac_term
        rel_err = abs(rec.resistance_ohm - r_true) / r_true
        worst_margin = min(worst_margin, bound - rel_err)
        ok = ok and rel_err <= bound
    assert _verdict("quantization-only-bound", ok,
                    f"(25 log points, worst margin {worst_margin:.2e})")


def test_nodal_solver_oracle_equivalence():
    """200 random small arrays vs. dense elimination, <1e-9 relative."""
    rng = np.random.default_rng(20_240_004)
    params = DeviceParams(sigma_c2c=0.0, sigma_d2d=0.0, sigma_read=0.0)
    worst_dev = 0.0
    worst_resid = 0.0
    for _ in range(200):
        rows = int(rng.integers(1, 9))
        cols = int(rng.integers(1, 9))
        topology = Topology.PASSIVE_1R if rng.random() < 0.5 else Topology.ACTIVE_1T1R
        arr = CrossbarArray.uniform(
            rows, cols, topology, params,
            r_wire_segment=float(rng.uniform(0.0, 100.0)),
            r_transistor_on=float(rng.uniform(100.0, 1000.0)))
        for r in arr.cells:
            for c in r:
                c.x = float(rng.uniform(0.0, 1.0))
        if topology is Topology.ACTIVE_1T1R:
            arr.gate_mask = rng.random((rows, cols)) < 0.8
        row_v = [float(rng.uniform(-0.4, 0.4)) if rng.random() < 0.85 else None
                 for _ in range(rows)]
        col_v = [0.0 if rng.random() < 0.85 else None for _ in range(cols)]
        row_v[int(rng.integers(rows))] = float(rng.uniform(-0.4, 0.4))
        col_v[int(rng.integers(cols))] = 0.0
        if rng.random() < 0.2:
            col_v[int(rng.integers(cols))] = float(rng.uniform(-0.2, 0.2))
        drive = RailDrive(tuple(row_v), tuple(col_v))

        sol = solve_nodal(arr, drive)
        oracle, _ = solve_dense(arr, drive)
        scale = max(np.max(np.abs(oracle)), 1e-15)
        worst_dev = max(worst_dev, float(np.max(np.abs(sol.col_currents - oracle)) / scale))
        worst_resid = max(worst_resid,
                          abs(sol.conservation_residual) / scale)
    ok = worst_dev < 1e-9 and worst_resid < 1e-9
    assert _verdict("nodal-oracle-equivalence", ok,
                    f"(200 arrays; max dev {worst_dev:.2e}, "
                    f"max KCL residual {worst_resid:.2e})")


def test_endurance_toggling(tmp_path):
    """100 RESET/SET cycles: strict separation and >=5x median ratio."""
    spec = ExperimentSpec(
        kind=ExperimentKind.ENDURANCE, seed=20_240_005,
        out_path=str(tmp_path / "end.csv"),
        repeats=100, samples_per_measurement=50)
    cfg = SimConfig(seed=20_240_005)  # default 512x32 1T1R array
    summary = run_endurance(spec, cfg)
    sep_ok = summary["post_set_max_ohm"] < summary["post_reset_min_ohm"]
    ratio_ok = summary["median_ratio"] >= 5.0

    # sigma_c2c = 0 with a silent chain: the trace must be exactly two-valued
    spec0 = ExperimentSpec(
        kind=ExperimentKind.ENDURANCE, seed=20_240_005,
        out_path=str(tmp_path / "end0.csv"),
        repeats=100, samples_per_measurement=50)
    run_endurance(spec0, with_zero_noise(cfg))
    with open(spec0.out_path) as fh:
        distinct = {line.split(",")[1] for line in fh.readlines()[1:]}
    two_valued = len(distinct) == 2

    ok = sep_ok and ratio_ok and two_valued
    assert _verdict(
        "endurance-toggling", ok,
        f"(median ratio {summary['median_ratio']:.2f}, "
        f"two-valued noise-free trace: {two_valued})")


def test_mvm_correctness():
    """100 random 8x4 matrices, noise off, ADC-quantization-bound match."""
    failures = 0
    worst = 0.0
    for trial in range(100):
        seed = 30_000 + trial
        cfg = with_zero_noise(SimConfig(
            seed=seed, array=ArrayConfig(rows=8, cols=4, topology="passive_1r",
                                         r_wire_segment=0.0)))
        controller = Controller(cfg)
        rng = np.random.default_rng(seed)
        for row in controller.array.cells:
            for c in row:
                c.x = float(rng.uniform(0.0, 1.0))
        v = [float(x) for x in rng.uniform(0.02, 0.5, 8)]
        result = controller.mvm(v)
        g = controller.array.branch_conductances()
        oracle = g.T @ result.v_actual
        for col, exact in zip(result.columns, oracle):
            if col.error is not None:
                failures += 1
                continue
            lsb_i = (controller.chain.adc.full_scale / controller.chain.adc.code_max
                     / controller.chain.stages[col.stage_id].r_feedback_ohm)
            dev = abs(col.current_a - exact) / lsb_i
            worst = max(worst, dev)
            if dev > 0.5 * (1 + 1e-9):
                failures += 1
    ok = failures == 0
    assert _verdict("mvm-correctness", ok,
                    f"(100 trials; worst deviation {worst:.3f} ADC LSB)")


def test_magic_nor_truth_table():
    """All 4 input patterns x 50 variability seeds; inputs untouched."""
    wrong = 0
    disturbed = 0
    for seed in range(50):
        cfg = SimConfig(seed=40_000 + seed, device=logic_device_params(),
                        array=ArrayConfig(rows=2, cols=4))
        controller = Controller(cfg)
        controller.calibrate()
        for a, b in itertools.product((0, 1), repeat=2):
            controller.write_cell(0, 0, "set_lrs" if a else "reset_hrs")
            controller.write_cell(0, 1, "set_lrs" if b else "reset_hrs")
            xa = controller.array.cell(0, 0).x
            xb = controller.array.cell(0, 1).x
            result = controller.magic_nor(0, [0, 1], 2)
            if result.value != int(not (a or b)):
                wrong += 1
            if (controller.array.cell(0, 0).x != xa
                    or controller.array.cell(0, 1).x != xb):
                disturbed += 1
    ok = wrong == 0 and disturbed == 0
    assert _verdict("magic-nor-truth-table", ok,
                    f"(200 gate runs; {wrong} wrong, {disturbed} disturbed inputs)")


def test_cli_determinism(tmp_path):
    """Identical config + seed => byte-identical CSV through the CLI."""
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(
        '{"schema_version": 1, "seed": 777, "array": {"rows": 8, "cols": 4}}\n')

    pairs = []
    for cmd, extra in (
        ("histogram", ["--repeats", "50"]),
        ("sweep", ["--repeats", "20", "--refs", "1k,100k,1M"]),
        ("endurance", ["--repeats", "10"]),
    ):
        outs = []
        for run in ("x", "y"):
            out = tmp_path / f"{cmd}_{run}.csv"
            rc = cli_main([cmd, "--config", str(cfg_path), "--seed", "777",
                           "--out", str(out)] + extra)
            assert rc == 0
            outs.append(out.read_bytes())
        pairs.append((cmd, outs[0] == outs[1]))
    ok = all(same for _, same in pairs)
    assert _verdict("cli-determinism", ok,
                    f"({', '.join(f'{c}={s}' for c, s in pairs)})")
