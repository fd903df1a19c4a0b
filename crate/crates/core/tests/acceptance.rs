//! Acceptance criteria, one PASS/FAIL line each. Tolerances are pinned
//! below; exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use sotpim::array::{two_t_one_r_read, vgsot_divider, Array, ArraySpec, CellState};
use sotpim::device::{channel_resistance, mtj_resistance, DeviceParams, MagState, Topology};
use sotpim::gates::{calibrate_gate, margin_analysis, pattern_bits, truth_table, GateKind, GateOp};
use sotpim::network::{BranchLabel, NetworkSolution};
use sotpim::variation::{
    current_histogram, run_mc, sample_cell, trial_rng, McResult, VariationSpec,
};

/// Relative tolerance on the analytic oracles (criteria 1 and 2).
const ORACLE_RTOL: f64 = 1e-3;
/// General nodal solver vs closed forms, relative.
const SOLVER_RTOL: f64 = 1e-9;
/// Kirchhoff current-law residual on every solve, A.
const KCL_TOL: f64 = 1e-9;
/// Energy scale: within this factor of the reference values.
const ENERGY_FACTOR: f64 = 10.0;
/// Reference maximum NOR energies, J.
const ENERGY_2T1R_REF: f64 = 243e-15;
const ENERGY_VGSOT_REF: f64 = 86e-15;
/// Monte-Carlo settings for the pattern-fidelity criteria.
const MC_SIGMA: f64 = 0.03;
const MC_TRIALS: usize = 1000;
const MC_SEED: u64 = 1;
/// Threshold placement inside the nominal gap (from the must-hold edge).
const TIGHT_POSITION_2T1R: f64 = 0.25;
const TIGHT_POSITION_VGSOT: f64 = 0.75;
/// Sampled relative std of t_ox must land in this window.
const STD_WINDOW: (f64, f64) = (0.028, 0.032);
const STD_DRAWS: u64 = 100_000;
/// Two-sample KS critical coefficient at α = 0.01.
const KS_C_ALPHA: f64 = 1.628;

// Hand-derived values (table parameters).
const R_P_2T1R: f64 = 5092.958178940651;
const R_P_VGSOT: f64 = 331042.28163114237;
const R_CHANNEL: f64 = 1112.0;
const I_OUT_R_ON_0: [f64; 3] = [
    177.2775848406764e-6,
    244.0482482408333e-6,
    300.6713918813892e-6,
];
const V_BL: [f64; 3] = [0.75, 0.9, 1.0];

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let p2 = DeviceParams::two_t_one_r();
    let pv = DeviceParams::vgsot();
    let r_p2 = mtj_resistance(&p2, MagState::P, 0.0);
    let r_pv = mtj_resistance(&pv, MagState::P, 0.0);
    let r_ch = channel_resistance(&p2);
    let errs = [
        rel(r_p2, R_P_2T1R),
        rel(r_pv, R_P_VGSOT),
        rel(r_ch, R_CHANNEL),
    ];
    // the rounded figures quoted for the table values
    let quoted = [rel(r_p2, 5.093e3), rel(r_pv, 331.0e3), rel(r_ch, 1112.0)];
    let worst = errs.iter().chain(&quoted).fold(0.0f64, |a, &b| a.max(b));
    outcome(
        worst <= ORACLE_RTOL,
        format!(
            "R_P(2T-1R) = {r_p2:.3} Ω, R_P(VGSOT) = {r_pv:.1} Ω, R_channel = {r_ch:.3} Ω; worst rel err {worst:.2e} (tol {ORACLE_RTOL:.0e})"
        ),
    )
}

fn solver_mismatch(closed: &NetworkSolution, general: &NetworkSolution) -> f64 {
    let mut worst = 0.0f64;
    for b in &closed.branches {
        let g = general.current(&b.label).expect("same branches");
        let scale = b.current.abs().max(1e-30);
        worst = worst.max((g - b.current).abs() / scale);
    }
    for n in &closed.nodes {
        let g = general.voltage(&n.name).expect("same nodes");
        worst = worst.max((g - n.voltage).abs() / n.voltage.abs().max(1e-30));
    }
    worst
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut worst_oracle = 0.0f64;
    let mut worst_solver = 0.0f64;
    let mut worst_kcl = 0.0f64;
    let mut currents = Vec::new();
    let mut voltages = Vec::new();
    for (topology, n_inputs) in [
        (Topology::TwoT1R, 2),
        (Topology::Vgsot, 2),
        (Topology::TwoT1R, 3),
        (Topology::Vgsot, 4),
    ] {
        let mut nominal = DeviceParams::for_topology(topology);
        nominal.r_on = 0.0;
        let spec = ArraySpec::new(topology, n_inputs + 1, 1, nominal);
        let op = GateOp::standard(GateKind::Nor, topology, n_inputs);
        for p in 0..(1usize << n_inputs) {
            let bits = pattern_bits(p, n_inputs);
            let mut array = Array::new(spec.clone()).unwrap();
            for (row, &b) in bits.iter().enumerate() {
                array.write_cell(row, 0, MagState::from_bit(b)).unwrap();
            }
            array.write_cell(n_inputs, 0, op.out_init).unwrap();
            let inputs: Vec<(usize, CellState)> = (0..n_inputs)
                .map(|r| (r, *array.cell(r, 0).unwrap()))
                .collect();
            let output = (n_inputs, *array.cell(n_inputs, 0).unwrap());
            let v = op.v_drive;
            let closed = match topology {
                Topology::TwoT1R => two_t_one_r_read(&inputs, output, v),
                Topology::Vgsot => vgsot_divider(&inputs, output, v),
            };
            let rows: Vec<usize> = (0..n_inputs).collect();
            let general = array
                .gate_network(&rows, n_inputs, 0, v)
                .unwrap()
                .solve()
                .unwrap();
            let via_array = match topology {
                Topology::TwoT1R => array.solve_2t1r_read(&rows, n_inputs, 0, v).unwrap(),
                Topology::Vgsot => array.solve_vgsot_divider(&rows, n_inputs, 0, v).unwrap(),
            };
            worst_solver = worst_solver.max(solver_mismatch(&closed, &general));
            for s in [&closed, &general, &via_array] {
                worst_kcl = worst_kcl.max(s.kcl_residual());
            }
            if n_inputs == 2 {
                let ones = bits.iter().filter(|&&b| b).count();
                match topology {
                    Topology::TwoT1R => {
                        let i = general
                            .current(&BranchLabel::OutputChannel(n_inputs))
                            .unwrap();
                        worst_oracle = worst_oracle.max(rel(i, I_OUT_R_ON_0[ones]));
                        if p != 2 {
                            currents.push(i);
                        }
                    }
                    Topology::Vgsot => {
                        let v_bl = general.voltage("BL").unwrap();
                        worst_oracle = worst_oracle.max(rel(v_bl, V_BL[ones]));
                        if p != 2 {
                            voltages.push(v_bl);
                        }
                    }
                }
            }
        }
    }
    ok &= worst_oracle <= ORACLE_RTOL && worst_solver <= SOLVER_RTOL && worst_kcl < KCL_TOL;
    outcome(
        ok,
        format!(
            "I_out = {:.1}/{:.1}/{:.1} µA, V_BL = {:.3}/{:.3}/{:.3} V; oracle err {worst_oracle:.1e} (tol {ORACLE_RTOL:.0e}), solver err {worst_solver:.1e} (tol {SOLVER_RTOL:.0e}), KCL {worst_kcl:.1e} A (tol {KCL_TOL:.0e})",
            currents[0] * 1e6,
            currents[1] * 1e6,
            currents[2] * 1e6,
            voltages[0],
            voltages[1],
            voltages[2]
        ),
    )
}

fn calibrated(topology: Topology, kind: GateKind, n: usize, position: f64) -> (ArraySpec, GateOp) {
    let spec = ArraySpec::for_gate(topology, n);
    let op = GateOp::standard(kind, topology, n);
    calibrate_gate(&spec, &op, position)
        .expect("calibration")
        .apply(&spec, &op)
}

fn criterion_3() -> Outcome {
    let mut mismatches = 0;
    let mut tables = 0;
    for topology in [Topology::TwoT1R, Topology::Vgsot] {
        for kind in GateKind::ALL {
            for n in [2, 3] {
                let (spec, op) = calibrated(topology, kind, n, 0.5);
                let t = truth_table(&spec, &op).unwrap();
                for (p, row) in t.rows.iter().enumerate() {
                    if row.output != kind.eval(&pattern_bits(p, n)) {
                        mismatches += 1;
                    }
                }
                tables += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{tables} calibrated truth tables, {mismatches} mismatches (tol 0)"),
    )
}

fn mc_nor(topology: Topology, position: f64, sigma: f64) -> McResult {
    let (spec, op) = calibrated(topology, GateKind::Nor, 2, position);
    run_mc(
        &spec,
        &op,
        MC_TRIALS,
        &VariationSpec::uniform(sigma, MC_SEED),
    )
    .unwrap()
}

fn rates(r: &McResult) -> [f64; 4] {
    ["00", "01", "10", "11"].map(|l| r.pattern(l).unwrap().success_rate)
}

fn criterion_4(two: &McResult, vg: &McResult) -> Outcome {
    let a = rates(two);
    let v = rates(vg);
    let two_ok = a[0] < a[1] && a[0] < a[2] && a[0] < a[3];
    let vg_ok = v[1].max(v[2]) < v[0].min(v[3]);
    let pct = |r: [f64; 4]| r.map(|x| format!("{:.1}%", 100.0 * x)).join("/");
    outcome(
        two_ok && vg_ok,
        format!(
            "2T-1R NOR 00/01/10/11 = {} (00 lowest: {two_ok}); VGSOT NOR = {} (01,10 lowest: {vg_ok})",
            pct(a),
            pct(v)
        ),
    )
}

fn overlap_consistent(r: &McResult) -> (bool, f64, usize) {
    let h = current_histogram(r, 40).unwrap();
    let fraction = h.overlap.map(|o| o.fraction).unwrap_or(0.0);
    let unintended = r.pattern("00").unwrap().unintentional_switches();
    ((fraction > 0.0) == (unintended >= 1), fraction, unintended)
}

fn criterion_5(two: &McResult) -> Outcome {
    let (tight_ok, tight_f, tight_u) = overlap_consistent(two);
    let none = mc_nor(Topology::TwoT1R, TIGHT_POSITION_2T1R, 0.0);
    let (none_ok, none_f, none_u) = overlap_consistent(&none);
    outcome(
        tight_ok && none_ok,
        format!(
            "σ=3%: overlap {tight_f:.3} with {tight_u} unintentional 00 switches; σ=0: overlap {none_f:.3} with {none_u}"
        ),
    )
}

fn max_energy(topology: Topology) -> f64 {
    let (spec, op) = calibrated(topology, GateKind::Nor, 2, 0.5);
    truth_table(&spec, &op)
        .unwrap()
        .rows
        .iter()
        .map(|r| r.energy)
        .fold(0.0, f64::max)
}

fn criterion_6() -> Outcome {
    let e2 = max_energy(Topology::TwoT1R);
    let ev = max_energy(Topology::Vgsot);
    let within = |e: f64, r: f64| e <= r * ENERGY_FACTOR && e >= r / ENERGY_FACTOR;
    let ok = ev < e2 && within(e2, ENERGY_2T1R_REF) && within(ev, ENERGY_VGSOT_REF);
    outcome(
        ok,
        format!(
            "max NOR energy 2T-1R {:.1} fJ (ref 243), VGSOT {:.1} fJ (ref 86), factor tol {ENERGY_FACTOR}",
            e2 * 1e15,
            ev * 1e15
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for topology in [Topology::TwoT1R, Topology::Vgsot] {
        let margins: Vec<f64> = [2, 3, 4]
            .into_iter()
            .map(|n| {
                let spec = ArraySpec::for_gate(topology, n);
                let op = GateOp::standard(GateKind::Nor, topology, n);
                margin_analysis(&spec, &op).unwrap().margin
            })
            .collect();
        ok &= margins.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!(
            "{topology} {:.2}/{:.2}/{:.2} µA",
            margins[0] * 1e6,
            margins[1] * 1e6,
            margins[2] * 1e6
        ));
    }
    outcome(
        ok,
        format!("NOR margin for 2/3/4 inputs: {}", parts.join(", ")),
    )
}

fn run_cli(out: &Path, extra: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sotpim"))
        .args([
            "mc",
            "--trials",
            "1000",
            "--seed",
            "7",
            "--threshold-position",
            "0.25",
        ])
        .args(extra)
        .arg("--out")
        .arg(out)
        .env_remove("SOTPIM_CONFIG")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut compared = 0;
    for (topology, format) in [("2t1r", "csv"), ("vgsot", "json")] {
        let common = ["--topology", topology, "--format", format];
        let runs: Vec<Vec<(String, Vec<u8>)>> =
            [["--workers", "1"], ["--workers", "1"], ["--workers", "4"]]
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let out = root.path().join(format!("{topology}-{k}"));
                    let mut args = common.to_vec();
                    args.extend_from_slice(w);
                    ok &= run_cli(&out, &args);
                    dir_bytes(&out)
                })
                .collect();
        ok &= !runs[0].is_empty() && runs[0] == runs[1] && runs[0] == runs[2];
        compared += runs[0].len();
    }
    outcome(
        ok,
        format!("{compared} output files byte-identical across repeat runs and 1 vs 4 workers"),
    )
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn observables(r: &McResult, label: &str) -> Vec<f64> {
    r.pattern(label)
        .unwrap()
        .samples
        .iter()
        .map(|s| s.observable)
        .collect()
}

fn criterion_9(two: &McResult, vg: &McResult) -> Outcome {
    let nominal = DeviceParams::two_t_one_r();
    let spec = VariationSpec::uniform(MC_SIGMA, MC_SEED);
    let xs: Vec<f64> = (0..STD_DRAWS)
        .map(|k| {
            sample_cell(&nominal, &spec, &mut trial_rng(MC_SEED, u64::MAX, k)).t_ox / nominal.t_ox
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    let std_ok = std >= STD_WINDOW.0 && std <= STD_WINDOW.1;

    let critical = KS_C_ALPHA * (2.0 / MC_TRIALS as f64).sqrt();
    let d2 = ks_statistic(&observables(two, "01"), &observables(two, "10"));
    let dv = ks_statistic(&observables(vg, "01"), &observables(vg, "10"));
    let ks_ok = d2 < critical && dv < critical;
    outcome(
        std_ok && ks_ok,
        format!(
            "t_ox rel std {std:.5} over {STD_DRAWS} draws (window {:.3}..{:.3}); KS D(01,10) 2T-1R {d2:.4}, VGSOT {dv:.4} (critical {critical:.4})",
            STD_WINDOW.0, STD_WINDOW.1
        ),
    )
}

fn main() {
    let start = Instant::now();
    let two = mc_nor(Topology::TwoT1R, TIGHT_POSITION_2T1R, MC_SIGMA);
    let vg = mc_nor(Topology::Vgsot, TIGHT_POSITION_VGSOT, MC_SIGMA);
    let results = [
        ("resistance oracle", criterion_1()),
        ("network oracle", criterion_2()),
        ("nominal logic", criterion_3()),
        ("MC pattern fidelity", criterion_4(&two, &vg)),
        ("histogram overlap", criterion_5(&two)),
        ("energy ordering and scale", criterion_6()),
        ("margin monotonicity", criterion_7()),
        ("determinism", criterion_8()),
        ("statistical sanity", criterion_9(&two, &vg)),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {verdict} — {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
