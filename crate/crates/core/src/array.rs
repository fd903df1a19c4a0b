//! Array topologies and the resistive networks a stateful gate induces in
//! them.
//!
//! 2T-1R: every column shares RBL, SL and WBL. A gate opens the read
//! transistors of the inputs and the write transistor of the output, drives
//! the RBL and grounds the WBL with SL floating:
//!
//! ```text
//!   RBL ──[R_on + R_mtj(in0)]──┐
//!   RBL ──[R_on + R_mtj(in1)]──┤ SL ──[R_on + R_ch(out)]── WBL (0 V)
//! ```
//!
//! VGSOT: the inputs' channels are driven, the output's channel grounded and
//! the shared BL floats at the divider potential:
//!
//! ```text
//!   V_in ──[R_mtj(in0)]──┐
//!   V_in ──[R_mtj(in1)]──┤ BL ──[R_mtj(out)]── 0 V
//! ```
//!
//! Unselected cells are open circuits unless `off_resistance` is set, in
//! which case their transistors leak and the general solver is used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{
    channel_resistance, mtj_resistance, DeviceError, DeviceParams, MagState, Topology,
};
use crate::network::{BranchLabel, Network, NetworkError, NetworkSolution};

pub const NODE_RBL: &str = "RBL";
pub const NODE_SL: &str = "SL";
pub const NODE_WBL: &str = "WBL";
pub const NODE_WBL_IN: &str = "WBL_in";
pub const NODE_BL: &str = "BL";
pub const NODE_GND: &str = "GND";

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("array needs at least 3 rows and 1 column, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("off-resistance must be finite and > 0, got {0}")]
    BadOffResistance(f64),
    #[error("cell ({row}, {col}) is outside the {rows}x{cols} array")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("operation needs a {expected} array, this one is {found}")]
    TopologyMismatch { expected: Topology, found: Topology },
    #[error("gate needs at least one input row")]
    NoInputs,
    #[error("row {0} is used more than once in one gate")]
    RowReused(usize),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("array csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub topology: Topology,
    pub rows: usize,
    pub cols: usize,
    pub nominal: DeviceParams,
    /// Off-state transistor resistance (Ω); `None` means unselected cells
    /// are fully disconnected.
    pub off_resistance: Option<f64>,
}

impl ArraySpec {
    pub fn new(topology: Topology, rows: usize, cols: usize, nominal: DeviceParams) -> Self {
        ArraySpec {
            topology,
            rows,
            cols,
            nominal,
            off_resistance: None,
        }
    }

    /// Smallest array that fits an `n_inputs` gate in column 0, with the
    /// table parameters for `topology`.
    pub fn for_gate(topology: Topology, n_inputs: usize) -> Self {
        Self::new(
            topology,
            (n_inputs + 1).max(3),
            1,
            DeviceParams::for_topology(topology),
        )
    }

    pub fn validate(&self) -> Result<(), ArrayError> {
        if self.rows < 3 || self.cols < 1 {
            return Err(ArrayError::TooSmall {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if let Some(r) = self.off_resistance {
            if !(r.is_finite() && r > 0.0) {
                return Err(ArrayError::BadOffResistance(r));
            }
        }
        self.nominal.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub mag: MagState,
    pub dev: DeviceParams,
}

impl CellState {
    pub fn new(mag: MagState, dev: DeviceParams) -> Self {
        CellState { mag, dev }
    }

    pub fn mtj_resistance(&self) -> f64 {
        mtj_resistance(&self.dev, self.mag, 0.0)
    }

    pub fn channel_resistance(&self) -> f64 {
        channel_resistance(&self.dev)
    }
}

fn parallel(resistances: impl IntoIterator<Item = f64>) -> f64 {
    1.0 / resistances.into_iter().map(|r| 1.0 / r).sum::<f64>()
}

/// Closed-form 2T-1R stateful read: inputs in parallel from the RBL to the
/// SL, output channel from the SL to the grounded WBL. Rows label branches.
pub fn two_t_one_r_read(
    inputs: &[(usize, CellState)],
    output: (usize, CellState),
    v_rbl: f64,
) -> NetworkSolution {
    let input_r: Vec<f64> = inputs
        .iter()
        .map(|(_, c)| c.dev.r_on + c.mtj_resistance())
        .collect();
    let out_r = output.1.dev.r_on + output.1.channel_resistance();
    let r_par = parallel(input_r.iter().copied());
    let v_sl = v_rbl * out_r / (r_par + out_r);

    let mut n = Network::new();
    let rbl = n.fixed(NODE_RBL, v_rbl);
    let sl = n.free(NODE_SL);
    let wbl = n.fixed(NODE_WBL, 0.0);
    for ((row, _), r) in inputs.iter().zip(&input_r) {
        n.resistor(rbl, sl, *r, BranchLabel::InputMtj(*row));
    }
    n.resistor(sl, wbl, out_r, BranchLabel::OutputChannel(output.0));
    closed_form_solution(&n, &[v_rbl, v_sl, 0.0])
}

/// Closed-form VGSOT divider: input MTJs in parallel from `v_in` to the BL,
/// output MTJ (in its current state) from the BL to ground.
pub fn vgsot_divider(
    inputs: &[(usize, CellState)],
    output: (usize, CellState),
    v_in: f64,
) -> NetworkSolution {
    let input_r: Vec<f64> = inputs.iter().map(|(_, c)| c.mtj_resistance()).collect();
    let out_r = output.1.mtj_resistance();
    let r_par = parallel(input_r.iter().copied());
    let v_bl = v_in * out_r / (r_par + out_r);

    let mut n = Network::new();
    let src = n.fixed(NODE_WBL_IN, v_in);
    let bl = n.free(NODE_BL);
    let gnd = n.fixed(NODE_GND, 0.0);
    for ((row, _), r) in inputs.iter().zip(&input_r) {
        n.resistor(src, bl, *r, BranchLabel::InputMtj(*row));
    }
    n.resistor(bl, gnd, out_r, BranchLabel::OutputMtj(output.0));
    closed_form_solution(&n, &[v_in, v_bl, 0.0])
}

fn closed_form_solution(n: &Network, voltages: &[f64]) -> NetworkSolution {
    use crate::network::{BranchCurrent, NodeKind, NodeVoltage};
    NetworkSolution {
        nodes: n
            .nodes
            .iter()
            .zip(voltages)
            .map(|(node, &v)| NodeVoltage {
                name: node.name.clone(),
                voltage: v,
                fixed: matches!(node.kind, NodeKind::Fixed(_)),
            })
            .collect(),
        branches: n
            .branches
            .iter()
            .map(|b| BranchCurrent {
                label: b.label.clone(),
                from: b.from,
                to: b.to,
                resistance: b.resistance,
                current: (voltages[b.from] - voltages[b.to]) / b.resistance,
            })
            .collect(),
    }
}

/// A grid of cells, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array {
    spec: ArraySpec,
    cells: Vec<CellState>,
}

impl Array {
    /// All cells start in AP (`0`) with nominal parameters.
    pub fn new(spec: ArraySpec) -> Result<Self, ArrayError> {
        spec.validate()?;
        let cells = vec![CellState::new(MagState::AP, spec.nominal); spec.rows * spec.cols];
        Ok(Array { spec, cells })
    }

    pub fn spec(&self) -> &ArraySpec {
        &self.spec
    }

    pub fn topology(&self) -> Topology {
        self.spec.topology
    }

    fn index(&self, row: usize, col: usize) -> Result<usize, ArrayError> {
        if row >= self.spec.rows || col >= self.spec.cols {
            return Err(ArrayError::OutOfBounds {
                row,
                col,
                rows: self.spec.rows,
                cols: self.spec.cols,
            });
        }
        Ok(row * self.spec.cols + col)
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&CellState, ArrayError> {
        Ok(&self.cells[self.index(row, col)?])
    }

    pub fn state(&self, row: usize, col: usize) -> Result<MagState, ArrayError> {
        Ok(self.cell(row, col)?.mag)
    }

    /// Unconditional write through the normal write path.
    pub fn write_cell(
        &mut self,
        row: usize,
        col: usize,
        state: MagState,
    ) -> Result<(), ArrayError> {
        let i = self.index(row, col)?;
        self.cells[i].mag = state;
        Ok(())
    }

    /// Replace a cell's device parameters (sampled variation).
    pub fn set_device(
        &mut self,
        row: usize,
        col: usize,
        dev: DeviceParams,
    ) -> Result<(), ArrayError> {
        dev.validate()?;
        let i = self.index(row, col)?;
        self.cells[i].dev = dev;
        Ok(())
    }

    pub fn states(&self) -> impl Iterator<Item = MagState> + '_ {
        self.cells.iter().map(|c| c.mag)
    }

    fn check_rows(
        &self,
        input_rows: &[usize],
        output_row: usize,
        col: usize,
    ) -> Result<(), ArrayError> {
        if input_rows.is_empty() {
            return Err(ArrayError::NoInputs);
        }
        let mut seen = vec![false; self.spec.rows];
        for &r in input_rows.iter().chain(std::iter::once(&output_row)) {
            self.index(r, col)?;
            if seen[r] {
                return Err(ArrayError::RowReused(r));
            }
            seen[r] = true;
        }
        Ok(())
    }

    fn expect(&self, topology: Topology) -> Result<(), ArrayError> {
        if self.spec.topology != topology {
            return Err(ArrayError::TopologyMismatch {
                expected: topology,
                found: self.spec.topology,
            });
        }
        Ok(())
    }

    fn selected(&self, rows: &[usize], col: usize) -> Result<Vec<(usize, CellState)>, ArrayError> {
        rows.iter().map(|&r| Ok((r, *self.cell(r, col)?))).collect()
    }

    /// Read-current network of a 2T-1R gate in column `col`.
    pub fn solve_2t1r_read(
        &self,
        input_rows: &[usize],
        output_row: usize,
        col: usize,
        v_rbl: f64,
    ) -> Result<NetworkSolution, ArrayError> {
        self.expect(Topology::TwoT1R)?;
        self.check_rows(input_rows, output_row, col)?;
        if self.spec.off_resistance.is_some() {
            let net = self.gate_network(input_rows, output_row, col, v_rbl)?;
            return Ok(net.solve()?);
        }
        let inputs = self.selected(input_rows, col)?;
        Ok(two_t_one_r_read(
            &inputs,
            (output_row, *self.cell(output_row, col)?),
            v_rbl,
        ))
    }

    /// BL divider network of a VGSOT gate in column `col`.
    pub fn solve_vgsot_divider(
        &self,
        input_rows: &[usize],
        output_row: usize,
        col: usize,
        v_in: f64,
    ) -> Result<NetworkSolution, ArrayError> {
        self.expect(Topology::Vgsot)?;
        self.check_rows(input_rows, output_row, col)?;
        if self.spec.off_resistance.is_some() {
            let net = self.gate_network(input_rows, output_row, col, v_in)?;
            return Ok(net.solve()?);
        }
        let inputs = self.selected(input_rows, col)?;
        Ok(vgsot_divider(
            &inputs,
            (output_row, *self.cell(output_row, col)?),
            v_in,
        ))
    }

    /// Full column network for a gate, including leakage through
    /// unselected cells when an off-resistance is configured.
    pub fn gate_network(
        &self,
        input_rows: &[usize],
        output_row: usize,
        col: usize,
        v_drive: f64,
    ) -> Result<Network, ArrayError> {
        self.check_rows(input_rows, output_row, col)?;
        let off = self.spec.off_resistance;
        let mut n = Network::new();
        match self.spec.topology {
            Topology::TwoT1R => {
                let rbl = n.fixed(NODE_RBL, v_drive);
                let sl = n.free(NODE_SL);
                let wbl = n.fixed(NODE_WBL, 0.0);
                for row in 0..self.spec.rows {
                    let c = self.cell(row, col)?;
                    if input_rows.contains(&row) {
                        n.resistor(
                            rbl,
                            sl,
                            c.dev.r_on + c.mtj_resistance(),
                            BranchLabel::InputMtj(row),
                        );
                    } else if let Some(r_off) = off {
                        n.resistor(
                            rbl,
                            sl,
                            r_off + c.mtj_resistance(),
                            BranchLabel::LeakMtj(row),
                        );
                    }
                    if row == output_row {
                        n.resistor(
                            sl,
                            wbl,
                            c.dev.r_on + c.channel_resistance(),
                            BranchLabel::OutputChannel(row),
                        );
                    } else if let Some(r_off) = off {
                        n.resistor(
                            sl,
                            wbl,
                            r_off + c.channel_resistance(),
                            BranchLabel::LeakChannel(row),
                        );
                    }
                }
            }
            Topology::Vgsot => {
                let src = n.fixed(NODE_WBL_IN, v_drive);
                let bl = n.free(NODE_BL);
                let gnd = n.fixed(NODE_GND, 0.0);
                for row in 0..self.spec.rows {
                    let c = self.cell(row, col)?;
                    if input_rows.contains(&row) {
                        n.resistor(src, bl, c.mtj_resistance(), BranchLabel::InputMtj(row));
                    } else if row == output_row {
                        n.resistor(bl, gnd, c.mtj_resistance(), BranchLabel::OutputMtj(row));
                    } else if let Some(r_off) = off {
                        n.resistor(
                            bl,
                            gnd,
                            r_off + c.mtj_resistance(),
                            BranchLabel::LeakMtj(row),
                        );
                    }
                }
            }
        }
        Ok(n)
    }

    /// `rows,cols,topology` header, then one line per row of `0`/`1`
    /// (AP = 0, P = 1).
    pub fn to_csv_string(&self) -> String {
        let mut s = format!(
            "rows,cols,topology\n{},{},{}\n",
            self.spec.rows, self.spec.cols, self.spec.topology
        );
        for row in self.cells.chunks(self.spec.cols) {
            let line: Vec<&str> = row
                .iter()
                .map(|c| if c.mag.bit() { "1" } else { "0" })
                .collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Parse the CSV grid. `nominal` defaults to the table parameters for
    /// the topology named in the file.
    pub fn from_csv_str(text: &str, nominal: Option<DeviceParams>) -> Result<Self, ArrayError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| ArrayError::Csv("empty input".into()))?;
        if header.replace(' ', "") != "rows,cols,topology" {
            return Err(ArrayError::Csv(format!("bad header `{header}`")));
        }
        let dims = lines
            .next()
            .ok_or_else(|| ArrayError::Csv("missing dimension line".into()))?;
        let fields: Vec<&str> = dims.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ArrayError::Csv(format!("bad dimension line `{dims}`")));
        }
        let rows: usize = fields[0]
            .parse()
            .map_err(|_| ArrayError::Csv(format!("bad row count `{}`", fields[0])))?;
        let cols: usize = fields[1]
            .parse()
            .map_err(|_| ArrayError::Csv(format!("bad column count `{}`", fields[1])))?;
        let topology = Topology::parse(fields[2])
            .ok_or_else(|| ArrayError::Csv(format!("unknown topology `{}`", fields[2])))?;
        let nominal = nominal.unwrap_or_else(|| DeviceParams::for_topology(topology));
        let mut array = Array::new(ArraySpec::new(topology, rows, cols, nominal))?;
        let mut row = 0;
        for line in lines {
            if row >= rows {
                return Err(ArrayError::Csv(format!("more than {rows} grid rows")));
            }
            let bits: Vec<&str> = line.split(',').map(str::trim).collect();
            if bits.len() != cols {
                return Err(ArrayError::Csv(format!(
                    "grid row {row} has {} entries, expected {cols}",
                    bits.len()
                )));
            }
            for (col, b) in bits.iter().enumerate() {
                let state = match *b {
                    "0" => MagState::AP,
                    "1" => MagState::P,
                    other => return Err(ArrayError::Csv(format!("bad cell value `{other}`"))),
                };
                array.write_cell(row, col, state)?;
            }
            row += 1;
        }
        if row != rows {
            return Err(ArrayError::Csv(format!(
                "expected {rows} grid rows, found {row}"
            )));
        }
        Ok(array)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Series/parallel hand evaluation with R_on = 0.
    const I_00: f64 = 1.772_775_848_406_764e-4;
    const I_01: f64 = 2.440_482_482_408_333e-4;
    const I_11: f64 = 3.006_713_918_813_892e-4;

    fn ideal(topology: Topology) -> Array {
        let mut p = DeviceParams::for_topology(topology);
        p.r_on = 0.0;
        let mut spec = ArraySpec::for_gate(topology, 2);
        spec.nominal = p;
        Array::new(spec).unwrap()
    }

    fn with_inputs(mut a: Array, bits: [bool; 2]) -> Array {
        a.write_cell(0, 0, MagState::from_bit(bits[0])).unwrap();
        a.write_cell(1, 0, MagState::from_bit(bits[1])).unwrap();
        a.write_cell(2, 0, MagState::P).unwrap();
        a
    }

    #[test]
    fn read_currents_match_hand_values() {
        for (bits, expect) in [
            ([false, false], I_00),
            ([true, false], I_01),
            ([false, true], I_01),
            ([true, true], I_11),
        ] {
            let a = with_inputs(ideal(Topology::TwoT1R), bits);
            let sol = a.solve_2t1r_read(&[0, 1], 2, 0, 1.1).unwrap();
            let i = sol.current(&BranchLabel::OutputChannel(2)).unwrap();
            assert_relative_eq!(i, expect, max_relative = 1e-9);
            assert!(sol.kcl_residual() < 1e-12);
        }
    }

    #[test]
    fn divider_matches_hand_values() {
        for (bits, expect) in [
            ([true, true], 1.0),
            ([true, false], 0.9),
            ([false, true], 0.9),
            ([false, false], 0.75),
        ] {
            let a = with_inputs(ideal(Topology::Vgsot), bits);
            let sol = a.solve_vgsot_divider(&[0, 1], 2, 0, 1.5).unwrap();
            assert_relative_eq!(sol.voltage(NODE_BL).unwrap(), expect, max_relative = 1e-12);
            assert!(sol.kcl_residual() < 1e-12);
        }
    }

    #[test]
    fn general_solver_agrees_with_closed_forms() {
        for topology in [Topology::TwoT1R, Topology::Vgsot] {
            for p in 0..4u8 {
                let a = with_inputs(ideal(topology), [p & 1 == 1, p & 2 == 2]);
                let v = if topology == Topology::TwoT1R {
                    1.1
                } else {
                    1.5
                };
                let closed = match topology {
                    Topology::TwoT1R => a.solve_2t1r_read(&[0, 1], 2, 0, v).unwrap(),
                    Topology::Vgsot => a.solve_vgsot_divider(&[0, 1], 2, 0, v).unwrap(),
                };
                let general = a.gate_network(&[0, 1], 2, 0, v).unwrap().solve().unwrap();
                for (c, g) in closed.branches.iter().zip(&general.branches) {
                    assert_eq!(c.label, g.label);
                    assert_relative_eq!(c.current, g.current, max_relative = 1e-9);
                }
                assert!(general.kcl_residual() < 1e-9);
            }
        }
    }

    #[test]
    fn leakage_perturbs_output_current() {
        let mut spec = ArraySpec::for_gate(Topology::TwoT1R, 2);
        spec.rows = 8;
        let base = with_inputs(Array::new(spec.clone()).unwrap(), [false, false]);
        spec.off_resistance = Some(1e6);
        let leaky = with_inputs(Array::new(spec).unwrap(), [false, false]);
        let i0 = base.solve_2t1r_read(&[0, 1], 2, 0, 1.1).unwrap();
        let i1 = leaky.solve_2t1r_read(&[0, 1], 2, 0, 1.1).unwrap();
        assert!(i1.kcl_residual() < 1e-9);
        let a = i0.current(&BranchLabel::OutputChannel(2)).unwrap();
        let b = i1.current(&BranchLabel::OutputChannel(2)).unwrap();
        assert!(b != a && (b - a).abs() < 0.05 * a, "{a} {b}");
    }

    #[test]
    fn topology_mismatch() {
        let a = ideal(Topology::Vgsot);
        assert!(matches!(
            a.solve_2t1r_read(&[0, 1], 2, 0, 1.1),
            Err(ArrayError::TopologyMismatch { .. })
        ));
        let b = ideal(Topology::TwoT1R);
        assert!(matches!(
            b.solve_vgsot_divider(&[0, 1], 2, 0, 1.5),
            Err(ArrayError::TopologyMismatch { .. })
        ));
    }

    #[test]
    fn bad_addresses() {
        let a = ideal(Topology::TwoT1R);
        assert!(matches!(
            a.solve_2t1r_read(&[0, 5], 2, 0, 1.1),
            Err(ArrayError::OutOfBounds { .. })
        ));
        assert!(matches!(
            a.solve_2t1r_read(&[0, 2], 2, 0, 1.1),
            Err(ArrayError::RowReused(2))
        ));
        assert!(matches!(
            a.solve_2t1r_read(&[], 2, 0, 1.1),
            Err(ArrayError::NoInputs)
        ));
    }

    #[test]
    fn write_cell_semantics() {
        let mut a = Array::new(ArraySpec::for_gate(Topology::TwoT1R, 2)).unwrap();
        a.write_cell(1, 0, MagState::P).unwrap();
        assert_eq!(a.state(1, 0).unwrap(), MagState::P);
        let once = a.clone();
        a.write_cell(1, 0, MagState::P).unwrap();
        assert_eq!(a, once);
        a.write_cell(1, 0, MagState::AP).unwrap();
        assert_eq!(a.state(1, 0).unwrap(), MagState::AP);
        assert!(matches!(
            a.write_cell(3, 0, MagState::P),
            Err(ArrayError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn small_array_rejected() {
        let spec = ArraySpec::new(Topology::TwoT1R, 2, 1, DeviceParams::two_t_one_r());
        assert!(matches!(Array::new(spec), Err(ArrayError::TooSmall { .. })));
    }

    #[test]
    fn csv_grid() {
        let mut a =
            Array::new(ArraySpec::new(Topology::Vgsot, 3, 2, DeviceParams::vgsot())).unwrap();
        a.write_cell(0, 1, MagState::P).unwrap();
        a.write_cell(2, 0, MagState::P).unwrap();
        let text = a.to_csv_string();
        assert_eq!(text, "rows,cols,topology\n3,2,vgsot\n0,1\n0,0\n1,0\n");
        assert_eq!(Array::from_csv_str(&text, None).unwrap(), a);
        assert!(
            Array::from_csv_str("rows,cols,topology\n3,2,vgsot\n0,1\n0,2\n1,0\n", None).is_err()
        );
        assert!(Array::from_csv_str("rows,cols,topology\n3,2,vgsot\n0,1\n", None).is_err());
    }

    fn arb_state() -> impl Strategy<Value = MagState> {
        any::<bool>().prop_map(MagState::from_bit)
    }

    proptest! {
        #[test]
        fn read_current_properties(
            a in arb_state(), b in arb_state(), v in 0.1f64..2.0, r_on in 0.0f64..5e3
        ) {
            let mut p = DeviceParams::two_t_one_r();
            p.r_on = r_on;
            let cell = |m| CellState::new(m, p);
            let out = (2, cell(MagState::P));
            let i = |x, y, v| two_t_one_r_read(&[(0, cell(x)), (1, cell(y))], out, v)
                .current(&BranchLabel::OutputChannel(2)).unwrap();
            let ab = i(a, b, v);
            prop_assert!((ab - i(b, a, v)).abs() <= 1e-12 * ab);
            prop_assert!((i(a, b, 2.0 * v) - 2.0 * ab).abs() <= 1e-12 * ab);
            if a == MagState::P {
                prop_assert!(i(MagState::AP, b, v) < ab);
            }
            let sol = two_t_one_r_read(&[(0, cell(a)), (1, cell(b))], out, v);
            prop_assert!(sol.kcl_residual() < 1e-9);
        }

        #[test]
        fn divider_properties(a in arb_state(), b in arb_state(), v in 0.1f64..2.0) {
            let p = DeviceParams::vgsot();
            let cell = |m| CellState::new(m, p);
            let out = (2, cell(MagState::P));
            let vbl = |x, y| vgsot_divider(&[(0, cell(x)), (1, cell(y))], out, v).voltage(NODE_BL).unwrap();
            let ab = vbl(a, b);
            prop_assert!((ab - vbl(b, a)).abs() <= 1e-12 * ab);
            if a == MagState::AP {
                prop_assert!(vbl(MagState::P, b) > ab);
            }
        }
    }
}
