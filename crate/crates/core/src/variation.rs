//! Monte-Carlo process variation.
//!
//! Every trial resamples the parameters of each participating cell
//! independently. Each trial owns a ChaCha stream keyed by
//! `(seed, pattern, trial)`, so results do not depend on execution order or
//! on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Array, ArraySpec};
use crate::device::{critical_sot_current, DeviceParams, SwitchModel, Topology};
use crate::gates::{
    execute_gate, execute_gate_with, load_inputs, pattern_bits, pattern_label, GateError, GateKind,
    GateOp,
};

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("invalid variation spec: {0}")]
    InvalidSpec(String),
    #[error("need at least one trial")]
    NoTrials,
    #[error("result holds no samples")]
    Empty,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Relative standard deviations of the varied parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationSpec {
    pub sigma_t_ox: f64,
    pub sigma_t_f: f64,
    pub sigma_tmr: f64,
    /// Not part of the default variation set; kept for sensitivity studies.
    pub sigma_ra: f64,
    /// Normal draws are truncated at ±`truncation` standard deviations.
    pub truncation: f64,
    pub seed: u64,
}

impl Default for VariationSpec {
    fn default() -> Self {
        VariationSpec {
            sigma_t_ox: 0.03,
            sigma_t_f: 0.03,
            sigma_tmr: 0.03,
            sigma_ra: 0.0,
            truncation: 4.0,
            seed: 0,
        }
    }
}

impl VariationSpec {
    pub fn none(seed: u64) -> Self {
        VariationSpec {
            sigma_t_ox: 0.0,
            sigma_t_f: 0.0,
            sigma_tmr: 0.0,
            sigma_ra: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn uniform(sigma: f64, seed: u64) -> Self {
        VariationSpec {
            sigma_t_ox: sigma,
            sigma_t_f: sigma,
            sigma_tmr: sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err(McError::InvalidSpec(format!(
                "truncation {} must be finite and > 0",
                self.truncation
            )));
        }
        for (name, s) in [
            ("sigma_t_ox", self.sigma_t_ox),
            ("sigma_t_f", self.sigma_t_f),
            ("sigma_TMR", self.sigma_tmr),
            ("sigma_RA", self.sigma_ra),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(McError::InvalidSpec(format!("{name} = {s} must be >= 0")));
            }
            // keeps every truncated factor 1 + σz strictly positive
            if s * self.truncation >= 1.0 {
                return Err(McError::InvalidSpec(format!(
                    "{name} = {s} allows non-positive samples at ±{}σ",
                    self.truncation
                )));
            }
        }
        Ok(())
    }
}

/// Counter-based stream for one trial.
pub fn trial_rng(seed: u64, pattern: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&pattern.to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Standard normal draw rejected outside ±`limit`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= limit {
            return z;
        }
    }
}

/// Nominal parameters with t_ox, t_f, TMR0 (and RA) scaled by independent
/// truncated-Gaussian factors. Four draws are always consumed, in that
/// order, so streams line up across different sigmas.
pub fn sample_cell<R: Rng + ?Sized>(
    nominal: &DeviceParams,
    spec: &VariationSpec,
    rng: &mut R,
) -> DeviceParams {
    let z_ox = truncated_normal(rng, spec.truncation);
    let z_f = truncated_normal(rng, spec.truncation);
    let z_tmr = truncated_normal(rng, spec.truncation);
    let z_ra = truncated_normal(rng, spec.truncation);
    let mut p = *nominal;
    p.t_ox *= 1.0 + spec.sigma_t_ox * z_ox;
    p.t_free *= 1.0 + spec.sigma_t_f * z_f;
    p.tmr0 *= 1.0 + spec.sigma_tmr * z_tmr;
    p.ra *= 1.0 + spec.sigma_ra * z_ra;
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub switching: SwitchModel,
}

/// Which direction of the histogram observable drives switching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Larger values switch (2T-1R current).
    HigherSwitches,
    /// Smaller values switch (VGSOT critical current).
    LowerSwitches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub trial: usize,
    /// Signed write current through the output channel (A).
    pub applied_current: f64,
    /// Sampled critical current of the output at the gate voltage (A).
    pub critical_current: f64,
    /// BL potential for VGSOT, 0 for 2T-1R (V).
    pub gate_voltage: f64,
    /// Histogram observable: threshold-referred output current for 2T-1R,
    /// effective critical current for VGSOT (A).
    pub observable: f64,
    pub output: bool,
    pub switched: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    pub index: usize,
    pub label: String,
    pub inputs: Vec<bool>,
    pub expected: bool,
    pub must_switch: bool,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Observable at nominal parameters.
    pub nominal_observable: f64,
    pub samples: Vec<TrialSample>,
}

impl PatternResult {
    /// Trials that switched although the pattern must hold.
    pub fn unintentional_switches(&self) -> usize {
        if self.must_switch {
            0
        } else {
            self.samples.iter().filter(|s| s.switched).count()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub topology: Topology,
    pub kind: GateKind,
    pub n_inputs: usize,
    pub seed: u64,
    pub variation: VariationSpec,
    pub op: GateOp,
    /// Nominal zero-bias critical current used to refer 2T-1R currents (A).
    pub reference_threshold: f64,
    pub orientation: Orientation,
    pub patterns: Vec<PatternResult>,
}

impl McResult {
    pub fn pattern(&self, label: &str) -> Option<&PatternResult> {
        self.patterns.iter().find(|p| p.label == label)
    }

    pub fn total_trials(&self) -> usize {
        self.patterns.iter().map(|p| p.trials).sum()
    }
}

pub fn run_mc(
    spec: &ArraySpec,
    op: &GateOp,
    trials: usize,
    variation: &VariationSpec,
) -> Result<McResult, McError> {
    run_mc_with(spec, op, trials, variation, &McOptions::default())
}

/// Run `trials` independent trials for every input pattern of `op`.
pub fn run_mc_with(
    spec: &ArraySpec,
    op: &GateOp,
    trials: usize,
    variation: &VariationSpec,
    options: &McOptions,
) -> Result<McResult, McError> {
    if trials == 0 {
        return Err(McError::NoTrials);
    }
    variation.validate()?;
    op.validate(spec).map_err(McError::Gate)?;
    let base = Array::new(spec.clone()).map_err(GateError::from)?;

    let n = op.n_inputs();
    let n_patterns = 1usize << n;
    let reference_threshold = critical_sot_current(&spec.nominal, 0.0);
    let observable = |applied: f64, critical: f64| match spec.topology {
        Topology::TwoT1R => {
            if critical > 0.0 {
                applied.abs() * reference_threshold / critical
            } else {
                f64::INFINITY
            }
        }
        Topology::Vgsot => critical,
    };

    let mut nominal = Vec::with_capacity(n_patterns);
    for p in 0..n_patterns {
        let bits = pattern_bits(p, n);
        let mut array = base.clone();
        load_inputs(&mut array, op, &bits)?;
        let t = execute_gate(&array, op)?;
        nominal.push(observable(t.applied_current, t.critical_current));
    }

    let participants: Vec<usize> = op
        .input_rows
        .iter()
        .copied()
        .chain(std::iter::once(op.output_row))
        .collect();

    let run_one = |job: usize| -> Result<TrialSample, GateError> {
        let (p, trial) = (job / trials, job % trials);
        let bits = pattern_bits(p, n);
        let mut rng = trial_rng(variation.seed, p as u64, trial as u64);
        let mut array = base.clone();
        load_inputs(&mut array, op, &bits)?;
        for &row in &participants {
            let dev = sample_cell(&spec.nominal, variation, &mut rng);
            array.set_device(row, op.col, dev)?;
        }
        let t = execute_gate_with(&array, op, options.switching, &mut rng)?;
        let output = t.output_after.bit();
        Ok(TrialSample {
            trial,
            applied_current: t.applied_current,
            critical_current: t.critical_current,
            gate_voltage: t.gate_voltage,
            observable: observable(t.applied_current, t.critical_current),
            output,
            switched: t.verdict.switched(),
            success: output == op.kind.eval(&bits),
        })
    };

    let jobs = n_patterns * trials;
    let samples: Result<Vec<TrialSample>, GateError> = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| McError::Pool(e.to_string()))?
            .install(|| (0..jobs).into_par_iter().map(run_one).collect()),
        None => (0..jobs).into_par_iter().map(run_one).collect(),
    };
    let mut samples = samples?.into_iter();

    let patterns = (0..n_patterns)
        .map(|p| {
            let bits = pattern_bits(p, n);
            let s: Vec<TrialSample> = samples.by_ref().take(trials).collect();
            let successes = s.iter().filter(|x| x.success).count();
            PatternResult {
                index: p,
                label: pattern_label(&bits),
                expected: op.kind.eval(&bits),
                must_switch: op.kind.must_switch(&bits),
                trials,
                successes,
                success_rate: successes as f64 / trials as f64,
                nominal_observable: nominal[p],
                inputs: bits,
                samples: s,
            }
        })
        .collect();

    Ok(McResult {
        topology: spec.topology,
        kind: op.kind,
        n_inputs: n,
        seed: variation.seed,
        variation: variation.clone(),
        op: op.clone(),
        reference_threshold,
        orientation: match spec.topology {
            Topology::TwoT1R => Orientation::HigherSwitches,
            Topology::Vgsot => Orientation::LowerSwitches,
        },
        patterns,
    })
}

/// Overlap between the closest must-hold and must-switch groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub hold_patterns: Vec<String>,
    pub switch_patterns: Vec<String>,
    /// Fraction of hold-group samples reaching the extreme of the switch
    /// group (its minimum current, or maximum critical current).
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternHistogram {
    pub observable: String,
    pub unit: String,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub series: Vec<(String, Vec<usize>)>,
    pub overlap: Option<Overlap>,
}

impl PatternHistogram {
    pub fn counts(&self, label: &str) -> Option<&[usize]> {
        self.series
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, c)| c.as_slice())
    }
}

fn near(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Fixed-width histogram of the observable over the pooled range, one
/// series per pattern, plus the overlap measure.
pub fn current_histogram(result: &McResult, bins: usize) -> Result<PatternHistogram, McError> {
    if bins == 0 {
        return Err(McError::NoBins);
    }
    let finite = result
        .patterns
        .iter()
        .flat_map(|p| p.samples.iter())
        .map(|s| s.observable)
        .filter(|x| x.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if !lo.is_finite() {
        return Err(McError::Empty);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();
    let bin_of = |x: f64| -> usize {
        if width <= 0.0 || x.is_nan() {
            return 0;
        }
        if !x.is_finite() {
            return if x > 0.0 { bins - 1 } else { 0 };
        }
        (((x - lo) / width).floor() as usize).min(bins - 1)
    };
    let series = result
        .patterns
        .iter()
        .map(|p| {
            let mut counts = vec![0usize; bins];
            for s in &p.samples {
                counts[bin_of(s.observable)] += 1;
            }
            (p.label.clone(), counts)
        })
        .collect();

    let higher = result.orientation == Orientation::HigherSwitches;
    let hold: Vec<&PatternResult> = result.patterns.iter().filter(|p| !p.must_switch).collect();
    let switch: Vec<&PatternResult> = result.patterns.iter().filter(|p| p.must_switch).collect();
    let overlap = if hold.is_empty() || switch.is_empty() {
        None
    } else {
        let pick = |group: &[&PatternResult], want_max: bool| -> Vec<usize> {
            let values = group.iter().map(|p| p.nominal_observable);
            let edge = if want_max {
                values.fold(f64::NEG_INFINITY, f64::max)
            } else {
                values.fold(f64::INFINITY, f64::min)
            };
            group
                .iter()
                .filter(|p| near(p.nominal_observable, edge))
                .map(|p| p.index)
                .collect()
        };
        // closest-to-threshold patterns on each side
        let hold_idx = pick(&hold, higher);
        let switch_idx = pick(&switch, !higher);
        let switch_samples = switch_idx
            .iter()
            .flat_map(|&i| result.patterns[i].samples.iter().map(|s| s.observable));
        let extreme = if higher {
            switch_samples.fold(f64::INFINITY, f64::min)
        } else {
            switch_samples.fold(f64::NEG_INFINITY, f64::max)
        };
        let (mut reached, mut total) = (0usize, 0usize);
        for &i in &hold_idx {
            for s in &result.patterns[i].samples {
                total += 1;
                let hit = if higher {
                    s.observable >= extreme
                } else {
                    s.observable <= extreme
                };
                if hit {
                    reached += 1;
                }
            }
        }
        Some(Overlap {
            hold_patterns: hold_idx
                .iter()
                .map(|&i| result.patterns[i].label.clone())
                .collect(),
            switch_patterns: switch_idx
                .iter()
                .map(|&i| result.patterns[i].label.clone())
                .collect(),
            fraction: if total > 0 {
                reached as f64 / total as f64
            } else {
                0.0
            },
        })
    };

    let observable = match result.topology {
        Topology::TwoT1R => "threshold_referred_output_current",
        Topology::Vgsot => "effective_critical_current",
    };
    Ok(PatternHistogram {
        observable: observable.to_string(),
        unit: "A".to_string(),
        edges,
        series,
        overlap,
    })
}
