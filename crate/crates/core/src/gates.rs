//! Stateful gates: recipes, execution, truth tables, margins and
//! operating-point calibration.
//!
//! A gate initializes its output cell, drives the inputs and lets the output
//! switch conditionally. NOR/NAND start the output in P (`1`) and switch it
//! to AP; OR/AND start in AP (`0`) and switch to P with reversed polarity.
//! NOR/OR switch when any input is `1`, NAND/AND only when all inputs are.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Array, ArrayError, ArraySpec, NODE_BL};
use crate::device::{
    check_read_disturb, critical_sot_current, switch_decision_with, DisturbVerdict, MagState,
    SwitchModel, SwitchVerdict, Topology,
};
use crate::network::{BranchLabel, NetworkSolution};

/// RBL drive of the 2T-1R recipe (V).
pub const DEFAULT_V_RBL: f64 = 1.1;
/// Input WBL/WBLB drive of the VGSOT recipe (V).
pub const DEFAULT_V_IN: f64 = 1.5;
/// VGSOT output write current (A).
pub const DEFAULT_I_SOT: f64 = 60e-6;
/// Evaluation pulse width (s).
pub const DEFAULT_PULSE: f64 = 2e-9;

/// Grid used when the VGSOT input drive has to be lowered to separate cases.
const DRIVE_SEARCH_STEPS: usize = 200;

#[derive(Debug, Error)]
pub enum GateError {
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("invalid gate operation: {0}")]
    InvalidOp(String),
    #[error("inseparable: no threshold realizes {n_inputs}-input {kind} on {topology} ({detail})")]
    Inseparable {
        kind: GateKind,
        topology: Topology,
        n_inputs: usize,
        detail: String,
    },
    #[error("output cell has no zero-bias switching barrier; Ic_cal cannot be scaled")]
    NoBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Nor,
    Nand,
    Or,
    And,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::Nor, GateKind::Nand, GateKind::Or, GateKind::And];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nor" => Some(GateKind::Nor),
            "nand" => Some(GateKind::Nand),
            "or" => Some(GateKind::Or),
            "and" => Some(GateKind::And),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Nor => "nor",
            GateKind::Nand => "nand",
            GateKind::Or => "or",
            GateKind::And => "and",
        }
    }

    /// Boolean function.
    pub fn eval(self, inputs: &[bool]) -> bool {
        let any = inputs.iter().any(|&b| b);
        let all = inputs.iter().all(|&b| b);
        match self {
            GateKind::Nor => !any,
            GateKind::Nand => !all,
            GateKind::Or => any,
            GateKind::And => all,
        }
    }

    pub fn out_init(self) -> MagState {
        match self {
            GateKind::Nor | GateKind::Nand => MagState::P,
            GateKind::Or | GateKind::And => MagState::AP,
        }
    }

    /// +1 drives the output toward AP, −1 toward P.
    pub fn polarity(self) -> f64 {
        match self {
            GateKind::Nor | GateKind::Nand => 1.0,
            GateKind::Or | GateKind::And => -1.0,
        }
    }

    pub fn must_switch(self, inputs: &[bool]) -> bool {
        self.eval(inputs) != self.out_init().bit()
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_ascii_uppercase())
    }
}

/// Input bits of pattern `index`: bit `j` is the value of input `j`.
pub fn pattern_bits(index: usize, n_inputs: usize) -> Vec<bool> {
    (0..n_inputs).map(|j| (index >> j) & 1 == 1).collect()
}

/// Pattern label with the last input first, e.g. `01` means IN1=0, IN0=1.
pub fn pattern_label(bits: &[bool]) -> String {
    bits.iter()
        .rev()
        .map(|&b| if b { '1' } else { '0' })
        .collect()
}

/// One stateful operation on an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub input_rows: Vec<usize>,
    pub output_row: usize,
    pub col: usize,
    /// Magnitude of the RBL voltage (2T-1R) or input WBL/WBLB voltage (VGSOT).
    pub v_drive: f64,
    /// Magnitude of the VGSOT output write current; unused for 2T-1R.
    pub i_sot: f64,
    pub pulse: f64,
    pub out_init: MagState,
}

impl GateOp {
    pub fn new(
        kind: GateKind,
        topology: Topology,
        input_rows: Vec<usize>,
        output_row: usize,
        col: usize,
    ) -> Self {
        GateOp {
            kind,
            input_rows,
            output_row,
            col,
            v_drive: default_drive(topology),
            i_sot: DEFAULT_I_SOT,
            pulse: DEFAULT_PULSE,
            out_init: kind.out_init(),
        }
    }

    /// Inputs in rows `0..n`, output in row `n`, column 0.
    pub fn standard(kind: GateKind, topology: Topology, n_inputs: usize) -> Self {
        Self::new(kind, topology, (0..n_inputs).collect(), n_inputs, 0)
    }

    pub fn n_inputs(&self) -> usize {
        self.input_rows.len()
    }

    pub fn validate(&self, spec: &ArraySpec) -> Result<(), GateError> {
        if self.input_rows.is_empty() {
            return Err(GateError::InvalidOp("no input rows".into()));
        }
        if self.input_rows.contains(&self.output_row) {
            return Err(GateError::InvalidOp(format!(
                "output row {} is also an input",
                self.output_row
            )));
        }
        for (i, r) in self.input_rows.iter().enumerate() {
            if self.input_rows[..i].contains(r) {
                return Err(GateError::InvalidOp(format!("input row {r} repeated")));
            }
        }
        for &r in self
            .input_rows
            .iter()
            .chain(std::iter::once(&self.output_row))
        {
            if r >= spec.rows {
                return Err(GateError::InvalidOp(format!(
                    "row {r} outside array of {} rows",
                    spec.rows
                )));
            }
        }
        if self.col >= spec.cols {
            return Err(GateError::InvalidOp(format!(
                "column {} outside array of {} columns",
                self.col, spec.cols
            )));
        }
        if self.out_init != self.kind.out_init() {
            return Err(GateError::InvalidOp(format!(
                "{} requires the output initialized to {}",
                self.kind,
                self.kind.out_init()
            )));
        }
        for (name, v) in [
            ("v_drive", self.v_drive),
            ("i_sot", self.i_sot),
            ("pulse", self.pulse),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(GateError::InvalidOp(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

pub fn default_drive(topology: Topology) -> f64 {
    match topology {
        Topology::TwoT1R => DEFAULT_V_RBL,
        Topology::Vgsot => DEFAULT_V_IN,
    }
}

/// Everything observed during one gate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTrace {
    pub solution: NetworkSolution,
    /// Signed write current through the output channel (A).
    pub applied_current: f64,
    /// Critical current of the output at `gate_voltage` (A).
    pub critical_current: f64,
    /// Voltage across the output MTJ (BL potential for VGSOT, 0 for 2T-1R).
    pub gate_voltage: f64,
    pub verdict: SwitchVerdict,
    pub output_before: MagState,
    pub output_after: MagState,
    pub input_currents: Vec<(usize, f64)>,
    pub disturb: Vec<(usize, DisturbVerdict)>,
    /// Resistance the VGSOT write current flows through (Ω); 0 for 2T-1R.
    pub write_path_resistance: f64,
    pub post: Array,
    pub energy: f64,
}

impl GateTrace {
    pub fn disturb_ok(&self) -> bool {
        self.disturb.iter().all(|(_, d)| d.pass)
    }

    /// |applied| / critical; switching happens at >= 1.
    pub fn drive_ratio(&self) -> f64 {
        if self.critical_current > 0.0 {
            self.applied_current.abs() / self.critical_current
        } else {
            f64::INFINITY
        }
    }
}

/// Execute `op` with the deterministic threshold.
pub fn execute_gate(array: &Array, op: &GateOp) -> Result<GateTrace, GateError> {
    execute_gate_with(array, op, SwitchModel::Deterministic, &mut NoRng)
}

/// Execute `op`; `rng` is only consumed by a stochastic switch model.
pub fn execute_gate_with<R: Rng + ?Sized>(
    array: &Array,
    op: &GateOp,
    model: SwitchModel,
    rng: &mut R,
) -> Result<GateTrace, GateError> {
    op.validate(array.spec())?;
    let mut post = array.clone();
    post.write_cell(op.output_row, op.col, op.out_init)?;
    let out_cell = *post.cell(op.output_row, op.col)?;

    let polarity = op.kind.polarity();
    let (solution, applied, gate_voltage, write_r) = match array.topology() {
        Topology::TwoT1R => {
            let sol =
                post.solve_2t1r_read(&op.input_rows, op.output_row, op.col, polarity * op.v_drive)?;
            let i = sol
                .current(&BranchLabel::OutputChannel(op.output_row))
                .expect("output channel branch");
            (sol, i, 0.0, 0.0)
        }
        Topology::Vgsot => {
            let sol =
                post.solve_vgsot_divider(&op.input_rows, op.output_row, op.col, op.v_drive)?;
            let v_bl = sol.voltage(NODE_BL).expect("BL node");
            let r = out_cell.channel_resistance() + out_cell.dev.r_on;
            (sol, polarity * op.i_sot, v_bl, r)
        }
    };
    let critical = critical_sot_current(&out_cell.dev, gate_voltage);
    let verdict = switch_decision_with(model, op.out_init, applied, critical, rng);
    if let SwitchVerdict::Switched(state) = verdict {
        post.write_cell(op.output_row, op.col, state)?;
    }

    let mut input_currents = Vec::with_capacity(op.input_rows.len());
    let mut disturb = Vec::with_capacity(op.input_rows.len());
    for &row in &op.input_rows {
        let i = solution.current(&BranchLabel::InputMtj(row)).unwrap_or(0.0);
        let dev = array.cell(row, op.col)?.dev;
        input_currents.push((row, i));
        disturb.push((row, check_read_disturb(&dev, i)));
    }

    let mut trace = GateTrace {
        solution,
        applied_current: applied,
        critical_current: critical,
        gate_voltage,
        verdict,
        output_before: op.out_init,
        output_after: post.state(op.output_row, op.col)?,
        input_currents,
        disturb,
        write_path_resistance: write_r,
        post,
        energy: 0.0,
    };
    trace.energy = gate_energy(&trace, op);
    Ok(trace)
}

/// Constant-drive energy over the pulse: source power of the solved network
/// plus, for VGSOT, the write current through the output's channel path.
pub fn gate_energy(trace: &GateTrace, op: &GateOp) -> f64 {
    let write = trace.applied_current * trace.applied_current * trace.write_path_resistance;
    let power = trace.solution.source_power() + write;
    power.max(0.0) * op.pulse
}

struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic switching draws no randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic switching draws no randomness")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("deterministic switching draws no randomness")
    }
}

/// Load `bits` into the op's input cells.
pub fn load_inputs(array: &mut Array, op: &GateOp, bits: &[bool]) -> Result<(), GateError> {
    for (&row, &b) in op.input_rows.iter().zip(bits) {
        array.write_cell(row, op.col, MagState::from_bit(b))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub inputs: Vec<bool>,
    pub expected: bool,
    pub output: bool,
    pub must_switch: bool,
    pub applied_current: f64,
    pub critical_current: f64,
    pub gate_voltage: f64,
    pub energy: f64,
    pub disturb_ok: bool,
}

impl TruthRow {
    pub fn label(&self) -> String {
        pattern_label(&self.inputs)
    }

    pub fn correct(&self) -> bool {
        self.expected == self.output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub kind: GateKind,
    pub topology: Topology,
    pub rows: Vec<TruthRow>,
}

impl TruthTable {
    pub fn mismatches(&self) -> usize {
        self.rows.iter().filter(|r| !r.correct()).count()
    }
}

/// Run `op` at nominal parameters over every input pattern.
pub fn truth_table(spec: &ArraySpec, op: &GateOp) -> Result<TruthTable, GateError> {
    let base = Array::new(spec.clone())?;
    op.validate(spec)?;
    let n = op.n_inputs();
    let mut rows = Vec::with_capacity(1 << n);
    for p in 0..(1usize << n) {
        let bits = pattern_bits(p, n);
        let mut array = base.clone();
        load_inputs(&mut array, op, &bits)?;
        let trace = execute_gate(&array, op)?;
        rows.push(TruthRow {
            expected: op.kind.eval(&bits),
            output: trace.output_after.bit(),
            must_switch: op.kind.must_switch(&bits),
            applied_current: trace.applied_current,
            critical_current: trace.critical_current,
            gate_voltage: trace.gate_voltage,
            energy: trace.energy,
            disturb_ok: trace.disturb_ok(),
            inputs: bits,
        });
    }
    Ok(TruthTable {
        kind: op.kind,
        topology: spec.topology,
        rows,
    })
}

/// Which analog quantity separates the cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginQuantity {
    /// 2T-1R output-channel current; switching patterns must be larger.
    OutputCurrent,
    /// VGSOT gated critical current; switching patterns must be smaller.
    CriticalCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub kind: GateKind,
    pub topology: Topology,
    pub n_inputs: usize,
    pub quantity: MarginQuantity,
    /// Edge of the must-switch group (min current / max critical current).
    pub switch_edge: f64,
    /// Edge of the must-not-switch group (max current / min critical current).
    pub hold_edge: f64,
    /// Positive when a separating threshold exists.
    pub margin: f64,
    pub midpoint: f64,
    pub relative: f64,
    pub switch_patterns: Vec<String>,
    pub hold_patterns: Vec<String>,
}

impl MarginReport {
    pub fn separable(&self) -> bool {
        self.margin > 0.0
    }
}

/// Nominal analog quantity per pattern plus whether it must switch.
fn pattern_quantities(
    spec: &ArraySpec,
    op: &GateOp,
) -> Result<Vec<(Vec<bool>, bool, f64)>, GateError> {
    let table = truth_table(spec, op)?;
    Ok(table
        .rows
        .into_iter()
        .map(|r| {
            let q = match spec.topology {
                Topology::TwoT1R => r.applied_current.abs(),
                Topology::Vgsot => r.critical_current,
            };
            (r.inputs, r.must_switch, q)
        })
        .collect())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Worst-case separation between must-switch and must-not-switch patterns.
pub fn margin_analysis(spec: &ArraySpec, op: &GateOp) -> Result<MarginReport, GateError> {
    let quantities = pattern_quantities(spec, op)?;
    let switching = quantities.iter().filter(|q| q.1);
    let holding = quantities.iter().filter(|q| !q.1);
    let (quantity, switch_edge, hold_edge) = match spec.topology {
        Topology::TwoT1R => (
            MarginQuantity::OutputCurrent,
            switching.map(|q| q.2).fold(f64::INFINITY, f64::min),
            holding.map(|q| q.2).fold(f64::NEG_INFINITY, f64::max),
        ),
        Topology::Vgsot => (
            MarginQuantity::CriticalCurrent,
            switching.map(|q| q.2).fold(f64::NEG_INFINITY, f64::max),
            holding.map(|q| q.2).fold(f64::INFINITY, f64::min),
        ),
    };
    let margin = match quantity {
        MarginQuantity::OutputCurrent => switch_edge - hold_edge,
        MarginQuantity::CriticalCurrent => hold_edge - switch_edge,
    };
    let midpoint = 0.5 * (switch_edge + hold_edge);
    let relative = if midpoint > 0.0 {
        margin / midpoint
    } else {
        0.0
    };
    let labels = |must: bool, edge: f64| {
        quantities
            .iter()
            .filter(|q| q.1 == must && close(q.2, edge))
            .map(|q| pattern_label(&q.0))
            .collect::<Vec<_>>()
    };
    Ok(MarginReport {
        kind: op.kind,
        topology: spec.topology,
        n_inputs: op.n_inputs(),
        quantity,
        switch_edge,
        hold_edge,
        margin,
        midpoint,
        relative,
        switch_patterns: labels(true, switch_edge),
        hold_patterns: labels(false, hold_edge),
    })
}

/// Operating point that realizes a gate at nominal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kind: GateKind,
    pub topology: Topology,
    pub n_inputs: usize,
    /// Fraction of the gap, measured from the must-not-switch edge, where
    /// the threshold is placed (0.5 = midpoint).
    pub position: f64,
    /// Threshold placed in the gap: critical current (2T-1R) or write
    /// current (VGSOT), in A.
    pub threshold: f64,
    /// New `Ic_cal` for the 2T-1R output cell.
    pub ic_cal: Option<f64>,
    /// Write current for the VGSOT output.
    pub i_sot: Option<f64>,
    /// Drive voltage the calibration is valid for.
    pub v_drive: f64,
    /// True when the VGSOT input drive had to be lowered.
    pub drive_adjusted: bool,
    /// 2T-1R drive that would place the unmodified device threshold at the
    /// same position in the gap.
    pub suggested_v_drive: Option<f64>,
    pub margin: MarginReport,
}

impl Calibration {
    /// Array spec and op with the calibration applied.
    pub fn apply(&self, spec: &ArraySpec, op: &GateOp) -> (ArraySpec, GateOp) {
        let mut spec = spec.clone();
        let mut op = op.clone();
        if let Some(c) = self.ic_cal {
            spec.nominal.ic_cal = c;
        }
        if let Some(i) = self.i_sot {
            op.i_sot = i;
        }
        op.v_drive = self.v_drive;
        (spec, op)
    }
}

fn inseparable(spec: &ArraySpec, op: &GateOp, detail: String) -> GateError {
    GateError::Inseparable {
        kind: op.kind,
        topology: spec.topology,
        n_inputs: op.n_inputs(),
        detail,
    }
}

/// Place the switching threshold inside the nominal gap between
/// must-not-switch and must-switch patterns.
///
/// 2T-1R scales `Ic_cal`. VGSOT picks `i_sot`; if the cases are not
/// separable at the configured input drive, the drive is lowered to the
/// grid value with the widest gap.
pub fn calibrate_gate(
    spec: &ArraySpec,
    op: &GateOp,
    position: f64,
) -> Result<Calibration, GateError> {
    if !(position > 0.0 && position < 1.0) {
        return Err(GateError::InvalidOp(format!(
            "threshold position {position} must lie in (0, 1)"
        )));
    }
    let mut margin = margin_analysis(spec, op)?;
    match spec.topology {
        Topology::TwoT1R => {
            if !margin.separable() {
                return Err(inseparable(
                    spec,
                    op,
                    format!("current margin {:.3e} A", margin.margin),
                ));
            }
            let threshold = margin.hold_edge + position * (margin.switch_edge - margin.hold_edge);
            let ic_now = critical_sot_current(&spec.nominal, 0.0);
            if ic_now <= 0.0 {
                return Err(GateError::NoBarrier);
            }
            Ok(Calibration {
                kind: op.kind,
                topology: spec.topology,
                n_inputs: op.n_inputs(),
                position,
                threshold,
                ic_cal: Some(spec.nominal.ic_cal * threshold / ic_now),
                i_sot: None,
                v_drive: op.v_drive,
                drive_adjusted: false,
                suggested_v_drive: Some(op.v_drive * ic_now / threshold),
                margin,
            })
        }
        Topology::Vgsot => {
            let mut v_drive = op.v_drive;
            let mut adjusted = false;
            if !margin.separable() {
                let mut best: Option<(f64, MarginReport)> = None;
                for k in 1..DRIVE_SEARCH_STEPS {
                    let v = op.v_drive * k as f64 / DRIVE_SEARCH_STEPS as f64;
                    let trial = GateOp {
                        v_drive: v,
                        ..op.clone()
                    };
                    let m = margin_analysis(spec, &trial)?;
                    if m.separable() && best.as_ref().is_none_or(|(_, b)| m.margin > b.margin) {
                        best = Some((v, m));
                    }
                }
                let (v, m) = best.ok_or_else(|| {
                    inseparable(
                        spec,
                        op,
                        format!(
                            "critical-current margin {:.3e} A at {} V and at every lower drive",
                            margin.margin, op.v_drive
                        ),
                    )
                })?;
                v_drive = v;
                margin = m;
                adjusted = true;
            }
            let threshold = margin.hold_edge + position * (margin.switch_edge - margin.hold_edge);
            Ok(Calibration {
                kind: op.kind,
                topology: spec.topology,
                n_inputs: op.n_inputs(),
                position,
                threshold,
                ic_cal: None,
                i_sot: Some(threshold),
                v_drive,
                drive_adjusted: adjusted,
                suggested_v_drive: None,
                margin,
            })
        }
    }
}
