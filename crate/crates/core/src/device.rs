//! Compact electrical model of a single SOT-MRAM cell.
//!
//! The cell is an MTJ sitting on a heavy-metal / antiferromagnet channel.
//! Reads go through the MTJ, writes go through the channel. This module
//! provides the resistances of both paths, the (optionally VCMA-assisted)
//! critical SOT switching current, the threshold switching decision and the
//! STT read-disturb check.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 4.0e-7 * PI;
/// A/m per oersted.
pub const AMPERE_PER_METER_PER_OERSTED: f64 = 1.0e3 / (4.0 * PI);

const SQUARE_MICRON: f64 = 1.0e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("device parameter `{key}` = {value} is invalid: {reason}")]
    InvalidParam {
        key: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Magnetization of the free layer relative to the reference layer.
///
/// Logic mapping is fixed: parallel (low resistance) is `1`, anti-parallel is `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MagState {
    P,
    AP,
}

impl MagState {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            MagState::P
        } else {
            MagState::AP
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, MagState::P)
    }
}

impl fmt::Display for MagState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MagState::P => write!(f, "P"),
            MagState::AP => write!(f, "AP"),
        }
    }
}

/// Which electrical flavour of the array a parameter set targets.
///
/// Only the resistance-area product differs between the two default sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "2t1r")]
    TwoT1R,
    #[serde(rename = "vgsot")]
    Vgsot,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::TwoT1R => "2t1r",
            Topology::Vgsot => "vgsot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2t1r" | "2t-1r" | "twot1r" => Some(Topology::TwoT1R),
            "vgsot" => Some(Topology::Vgsot),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical parameters of one cell. SI units unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// MTJ diameter (m).
    pub diameter: f64,
    /// Free-layer thickness (m).
    pub t_free: f64,
    /// MgO thickness (m).
    pub t_ox: f64,
    /// Saturation magnetization (A/m).
    pub ms: f64,
    /// Interfacial anisotropy at zero bias (J/m²).
    pub ki0: f64,
    /// Gilbert damping. Inert under the default critical-current law.
    pub alpha: f64,
    /// Spin polarization. Inert: only the STT disturb threshold could use it.
    pub polarization: f64,
    /// Resistance-area product (Ω·µm²).
    pub ra: f64,
    /// TMR ratio at zero bias (1.0 = 100%).
    pub tmr0: f64,
    /// VCMA coefficient (J/(V·m)).
    pub beta: f64,
    /// Spin Hall angle.
    pub theta_sh: f64,
    /// Exchange-bias field (A/m), signed.
    pub h_ex: f64,
    /// SOT channel length (m).
    pub channel_length: f64,
    /// SOT channel width (m).
    pub channel_width: f64,
    /// SOT channel thickness (m).
    pub channel_thickness: f64,
    /// SOT channel resistivity (Ω·m).
    pub rho_sot: f64,
    /// Access transistor on-resistance (Ω).
    pub r_on: f64,
    /// Multiplier on the macrospin critical current.
    pub ic_cal: f64,
    /// STT critical current density for the read-disturb check (A/m²).
    pub j_stt_crit: f64,
    /// Subtract the in-plane exchange-bias assist term from the threshold.
    pub field_assist: bool,
}

impl DeviceParams {
    /// Table values for the 2T-1R array (RA = 10 Ω·µm²).
    pub fn two_t_one_r() -> Self {
        DeviceParams {
            diameter: 50e-9,
            t_free: 1.1e-9,
            t_ox: 1.4e-9,
            ms: 6.25e5,
            ki0: 3.2e-4,
            alpha: 0.05,
            polarization: 0.58,
            ra: 10.0,
            tmr0: 1.0,
            beta: 60e-15,
            theta_sh: 0.25,
            h_ex: -50.0 * AMPERE_PER_METER_PER_OERSTED,
            channel_length: 60e-9,
            channel_width: 50e-9,
            channel_thickness: 3e-9,
            rho_sot: 2.78e-6,
            r_on: 1.0e3,
            ic_cal: 1.0,
            j_stt_crit: 5e10,
            field_assist: false,
        }
    }

    /// Table values for the VGSOT array (RA = 650 Ω·µm²).
    pub fn vgsot() -> Self {
        DeviceParams {
            ra: 650.0,
            ..Self::two_t_one_r()
        }
    }

    pub fn for_topology(topology: Topology) -> Self {
        match topology {
            Topology::TwoT1R => Self::two_t_one_r(),
            Topology::Vgsot => Self::vgsot(),
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("D", self.diameter),
            ("t_f", self.t_free),
            ("t_ox", self.t_ox),
            ("Ms", self.ms),
            ("RA", self.ra),
            ("L", self.channel_length),
            ("W", self.channel_width),
            ("T", self.channel_thickness),
            ("rho_SOT", self.rho_sot),
            ("Ic_cal", self.ic_cal),
            ("J_stt_crit", self.j_stt_crit),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(DeviceError::InvalidParam {
                    key,
                    value,
                    reason: "must be finite and > 0",
                });
            }
        }
        if !(self.r_on.is_finite() && self.r_on >= 0.0) {
            return Err(DeviceError::InvalidParam {
                key: "R_on",
                value: self.r_on,
                reason: "must be finite and >= 0",
            });
        }
        if !(self.tmr0.is_finite() && self.tmr0 >= 0.0) {
            return Err(DeviceError::InvalidParam {
                key: "TMR0",
                value: self.tmr0,
                reason: "must be finite and >= 0",
            });
        }
        if !(self.theta_sh > 0.0 && self.theta_sh <= 1.0) {
            return Err(DeviceError::InvalidParam {
                key: "theta_SH",
                value: self.theta_sh,
                reason: "must lie in (0, 1]",
            });
        }
        for (key, value) in [
            ("Ki0", self.ki0),
            ("alpha", self.alpha),
            ("P", self.polarization),
            ("beta", self.beta),
            ("H_EX", self.h_ex),
        ] {
            if !value.is_finite() {
                return Err(DeviceError::InvalidParam {
                    key,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }
}

/// MTJ junction area, πD²/4 (m²).
pub fn mtj_area(p: &DeviceParams) -> f64 {
    PI * p.diameter * p.diameter / 4.0
}

/// TMR ratio at a given bias. Bias roll-off is not modelled.
pub fn tmr(p: &DeviceParams, _v_bias: f64) -> f64 {
    p.tmr0
}

/// MTJ resistance in the given state (Ω).
pub fn mtj_resistance(p: &DeviceParams, state: MagState, v_bias: f64) -> f64 {
    let r_p = p.ra * SQUARE_MICRON / mtj_area(p);
    match state {
        MagState::P => r_p,
        MagState::AP => r_p * (1.0 + tmr(p, v_bias)),
    }
}

/// SOT channel resistance ρL/(WT) (Ω).
pub fn channel_resistance(p: &DeviceParams) -> f64 {
    p.rho_sot * p.channel_length / (p.channel_width * p.channel_thickness)
}

/// Effective perpendicular anisotropy density with VCMA applied (J/m³).
pub fn effective_anisotropy(p: &DeviceParams, v_gate: f64) -> f64 {
    let ki = p.ki0 - p.beta * v_gate / p.t_ox;
    ki / p.t_free - MU0 * p.ms * p.ms / 2.0
}

/// Damping-like SOT critical current of a perpendicular macrospin (A).
///
/// `J_c = (2e/ħ)(Ms t_f / θ_SH) μ0 H_k,eff / 2` with `H_k,eff = 2 K_eff / (μ0 Ms)`,
/// scaled by `Ic_cal` and the channel cross-section. A positive gate voltage
/// lowers `K_eff`; the result clamps at zero once the barrier vanishes.
pub fn critical_sot_current(p: &DeviceParams, v_gate: f64) -> f64 {
    let k_eff = effective_anisotropy(p, v_gate);
    if k_eff <= 0.0 {
        return 0.0;
    }
    let h_k_eff = 2.0 * k_eff / (MU0 * p.ms);
    let mut field_term = MU0 * h_k_eff / 2.0;
    if p.field_assist {
        field_term -= MU0 * p.h_ex.abs() * FRAC_1_SQRT_2;
    }
    if field_term <= 0.0 {
        return 0.0;
    }
    let j_c = (2.0 * ELEMENTARY_CHARGE / HBAR) * (p.ms * p.t_free / p.theta_sh) * field_term;
    p.ic_cal * j_c * p.channel_width * p.channel_thickness
}

/// How the threshold comparison turns into a switching event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SwitchModel {
    /// Switch iff `|i| >= i_crit`.
    #[default]
    Deterministic,
    /// Switch with probability `σ((|i| − i_crit) / (width · i_crit))`.
    Logistic { width: f64 },
}

/// Outcome of applying a write current to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchVerdict {
    Switched(MagState),
    NoChange,
}

impl SwitchVerdict {
    pub fn switched(self) -> bool {
        matches!(self, SwitchVerdict::Switched(_))
    }
}

/// State a write current drives toward: positive current writes AP,
/// negative current writes P.
pub fn target_state(i_applied: f64) -> MagState {
    if i_applied >= 0.0 {
        MagState::AP
    } else {
        MagState::P
    }
}

/// Deterministic threshold decision. Equality switches.
pub fn switch_decision(current: MagState, i_applied: f64, i_crit: f64) -> SwitchVerdict {
    let target = target_state(i_applied);
    if target != current && i_applied.abs() >= i_crit {
        SwitchVerdict::Switched(target)
    } else {
        SwitchVerdict::NoChange
    }
}

/// Probability that the applied current switches the cell under `model`,
/// ignoring polarity.
pub fn switch_probability(model: SwitchModel, i_applied: f64, i_crit: f64) -> f64 {
    let drive = i_applied.abs();
    match model {
        SwitchModel::Deterministic => {
            if drive >= i_crit {
                1.0
            } else {
                0.0
            }
        }
        SwitchModel::Logistic { width } => {
            if i_crit <= 0.0 || width <= 0.0 {
                return if drive >= i_crit { 1.0 } else { 0.0 };
            }
            let x = (drive - i_crit) / (width * i_crit);
            1.0 / (1.0 + (-x).exp())
        }
    }
}

/// Switching decision under `model`; draws one uniform from `rng` in the
/// logistic case only.
pub fn switch_decision_with<R: Rng + ?Sized>(
    model: SwitchModel,
    current: MagState,
    i_applied: f64,
    i_crit: f64,
    rng: &mut R,
) -> SwitchVerdict {
    match model {
        SwitchModel::Deterministic => switch_decision(current, i_applied, i_crit),
        SwitchModel::Logistic { .. } => {
            let target = target_state(i_applied);
            let u: f64 = rng.random();
            if target != current && u < switch_probability(model, i_applied, i_crit) {
                SwitchVerdict::Switched(target)
            } else {
                SwitchVerdict::NoChange
            }
        }
    }
}

/// Result of the STT read-disturb check on one MTJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbVerdict {
    pub current_density: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Fails iff the MTJ current density reaches the STT critical density.
pub fn check_read_disturb(p: &DeviceParams, i_mtj: f64) -> DisturbVerdict {
    let current_density = i_mtj.abs() / mtj_area(p);
    DisturbVerdict {
        current_density,
        limit: p.j_stt_crit,
        pass: current_density < p.j_stt_crit,
    }
}
