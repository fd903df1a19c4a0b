//! Run configuration: TOML file plus command-line overrides.
//!
//! Precedence, lowest to highest: built-in table values, the `[device]`
//! section, the `[device_2t1r]` / `[device_vgsot]` section matching the
//! topology, then command-line flags. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceParams, SwitchModel, Topology, AMPERE_PER_METER_PER_OERSTED};
use crate::gates::{default_drive, GateKind, DEFAULT_I_SOT, DEFAULT_PULSE};
use crate::report::{digest_of, ReportError};
use crate::variation::VariationSpec;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SOTPIM_CONFIG";

/// Device keys accepted in config files, `--set` and sweep axes.
pub const DEVICE_KEYS: [&str; 20] = [
    "D",
    "t_f",
    "t_ox",
    "Ms",
    "Ki0",
    "alpha",
    "P",
    "RA",
    "TMR0",
    "beta",
    "theta_SH",
    "H_EX_Oe",
    "L",
    "W",
    "T",
    "rho_SOT",
    "R_on",
    "Ic_cal",
    "J_stt_crit",
    "field_assist",
];

/// Operating-point keys that can also be swept.
pub const OP_KEYS: [&str; 3] = ["v_drive", "i_sot", "pulse"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown key `{key}` in {section}")]
    UnknownKey { key: String, section: String },
    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

/// Set one named device parameter. `value` is in the config units (SI,
/// except `H_EX_Oe` in oersted); `field_assist` takes 0/1.
pub fn set_device_key(p: &mut DeviceParams, key: &str, value: f64) -> Result<(), ConfigError> {
    if !value.is_finite() {
        return Err(bad(key, format!("{value} is not finite")));
    }
    match key {
        "D" => p.diameter = value,
        "t_f" => p.t_free = value,
        "t_ox" => p.t_ox = value,
        "Ms" => p.ms = value,
        "Ki0" => p.ki0 = value,
        "alpha" => p.alpha = value,
        "P" => p.polarization = value,
        "RA" => p.ra = value,
        "TMR0" => p.tmr0 = value,
        "beta" => p.beta = value,
        "theta_SH" => p.theta_sh = value,
        "H_EX_Oe" => p.h_ex = value * AMPERE_PER_METER_PER_OERSTED,
        "L" => p.channel_length = value,
        "W" => p.channel_width = value,
        "T" => p.channel_thickness = value,
        "rho_SOT" => p.rho_sot = value,
        "R_on" => p.r_on = value,
        "Ic_cal" => p.ic_cal = value,
        "J_stt_crit" => p.j_stt_crit = value,
        "field_assist" => {
            p.field_assist = match value {
                0.0 => false,
                1.0 => true,
                _ => return Err(bad(key, "expects true/false (or 0/1)")),
            }
        }
        _ => {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                section: "device parameters".into(),
            })
        }
    }
    Ok(())
}

/// Read one named device parameter in config units.
pub fn get_device_key(p: &DeviceParams, key: &str) -> Option<f64> {
    Some(match key {
        "D" => p.diameter,
        "t_f" => p.t_free,
        "t_ox" => p.t_ox,
        "Ms" => p.ms,
        "Ki0" => p.ki0,
        "alpha" => p.alpha,
        "P" => p.polarization,
        "RA" => p.ra,
        "TMR0" => p.tmr0,
        "beta" => p.beta,
        "theta_SH" => p.theta_sh,
        "H_EX_Oe" => p.h_ex / AMPERE_PER_METER_PER_OERSTED,
        "L" => p.channel_length,
        "W" => p.channel_width,
        "T" => p.channel_thickness,
        "rho_SOT" => p.rho_sot,
        "R_on" => p.r_on,
        "Ic_cal" => p.ic_cal,
        "J_stt_crit" => p.j_stt_crit,
        "field_assist" => f64::from(u8::from(p.field_assist)),
        _ => return None,
    })
}

/// Parse `KEY=VALUE` for `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, f64), ConfigError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| bad(s, "expected KEY=VALUE"))?;
    let key = key.trim();
    let value = value.trim();
    let number = match value {
        "true" => 1.0,
        "false" => 0.0,
        v => v
            .parse::<f64>()
            .map_err(|_| bad(key, format!("`{v}` is not a number")))?,
    };
    if !DEVICE_KEYS.contains(&key) {
        return Err(ConfigError::UnknownKey {
            key: key.to_string(),
            section: "--set".into(),
        });
    }
    Ok((key.to_string(), number))
}

// ---- file schema -------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub topology: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub device: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub device_2t1r: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub device_vgsot: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub kind: Option<String>,
    pub inputs: Option<usize>,
    pub v_drive: Option<f64>,
    pub i_sot: Option<f64>,
    pub pulse: Option<f64>,
    pub calibrate: Option<bool>,
    pub threshold_position: Option<f64>,
    pub off_resistance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub sigma_t_ox: Option<f64>,
    pub sigma_t_f: Option<f64>,
    pub sigma_tmr: Option<f64>,
    pub sigma_ra: Option<f64>,
    pub truncation: Option<f64>,
    pub bins: Option<usize>,
    pub workers: Option<usize>,
    pub switching_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}

fn apply_device_table(
    p: &mut DeviceParams,
    table: &BTreeMap<String, toml::Value>,
    section: &str,
) -> Result<(), ConfigError> {
    for (key, value) in table {
        if !DEVICE_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                section: format!("[{section}]"),
            });
        }
        let number = match value {
            toml::Value::Float(x) => *x,
            toml::Value::Integer(i) => *i as f64,
            toml::Value::Boolean(b) if key == "field_assist" => f64::from(u8::from(*b)),
            other => {
                return Err(bad(
                    key,
                    format!(
                        "expected a number in [{section}], found {}",
                        other.type_str()
                    ),
                ))
            }
        };
        set_device_key(p, key, number)?;
    }
    Ok(())
}

// ---- overrides ---------------------------------------------------------

/// Command-line values; `None` leaves the file or built-in value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub topology: Option<Topology>,
    pub seed: Option<u64>,
    pub gate: Option<GateKind>,
    pub inputs: Option<usize>,
    pub v_drive: Option<f64>,
    pub i_sot: Option<f64>,
    pub pulse: Option<f64>,
    pub r_on: Option<f64>,
    pub ic_cal: Option<f64>,
    pub set: Vec<(String, f64)>,
    pub no_calibrate: bool,
    pub threshold_position: Option<f64>,
    pub off_resistance: Option<f64>,
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub sigma_t_ox: Option<f64>,
    pub sigma_t_f: Option<f64>,
    pub sigma_tmr: Option<f64>,
    pub sigma_ra: Option<f64>,
    pub truncation: Option<f64>,
    pub bins: Option<usize>,
    pub workers: Option<usize>,
    pub switching_width: Option<f64>,
    pub axis: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

// ---- resolved ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub trials: usize,
    pub variation: VariationSpec,
    pub bins: usize,
    pub switching: SwitchModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub axis: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl SweepSettings {
    /// Evenly spaced axis values; a single point sits at `from`.
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    self.to
                } else {
                    self.from + step * k as f64
                }
            })
            .collect()
    }
}

/// Fully resolved configuration. Worker count and output location are
/// excluded from the digest: they never change results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub topology: Topology,
    pub device: DeviceParams,
    pub gate: GateKind,
    pub inputs: usize,
    pub v_drive: f64,
    pub i_sot: f64,
    pub pulse: f64,
    pub calibrate: bool,
    pub threshold_position: f64,
    pub off_resistance: Option<f64>,
    pub seed: u64,
    pub mc: McSettings,
    pub sweep: SweepSettings,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub format: OutputFormat,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_POSITION: f64 = 0.5;

impl RunConfig {
    /// Resolve built-ins, file and overrides, then validate everything.
    pub fn resolve(file: &FileConfig, o: &Overrides) -> Result<Self, ConfigError> {
        let file_topology = match &file.topology {
            Some(s) => Some(
                Topology::parse(s)
                    .ok_or_else(|| bad("topology", format!("unknown topology `{s}`")))?,
            ),
            None => None,
        };
        let topology = o.topology.or(file_topology).unwrap_or(Topology::TwoT1R);

        let mut device = DeviceParams::for_topology(topology);
        apply_device_table(&mut device, &file.device, "device")?;
        match topology {
            Topology::TwoT1R => apply_device_table(&mut device, &file.device_2t1r, "device_2t1r")?,
            Topology::Vgsot => apply_device_table(&mut device, &file.device_vgsot, "device_vgsot")?,
        }
        // keep the other section's keys honest even when unused
        let mut scratch = DeviceParams::two_t_one_r();
        apply_device_table(&mut scratch, &file.device_2t1r, "device_2t1r")?;
        apply_device_table(&mut scratch, &file.device_vgsot, "device_vgsot")?;
        if let Some(r) = o.r_on {
            set_device_key(&mut device, "R_on", r)?;
        }
        if let Some(c) = o.ic_cal {
            set_device_key(&mut device, "Ic_cal", c)?;
        }
        for (k, v) in &o.set {
            set_device_key(&mut device, k, *v)?;
        }
        device
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let g = &file.gate;
        let gate = match (o.gate, &g.kind) {
            (Some(k), _) => k,
            (None, Some(s)) => {
                GateKind::parse(s).ok_or_else(|| bad("gate.kind", format!("unknown gate `{s}`")))?
            }
            (None, None) => GateKind::Nor,
        };
        let inputs = o.inputs.or(g.inputs).unwrap_or(2);
        if inputs == 0 {
            return Err(bad("inputs", "must be >= 1"));
        }
        let v_drive = o.v_drive.or(g.v_drive).unwrap_or(default_drive(topology));
        let i_sot = o.i_sot.or(g.i_sot).unwrap_or(DEFAULT_I_SOT);
        let pulse = o.pulse.or(g.pulse).unwrap_or(DEFAULT_PULSE);
        for (key, v) in [("v_drive", v_drive), ("i_sot", i_sot), ("pulse", pulse)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(key, format!("{v} must be finite and >= 0")));
            }
        }
        // an explicit threshold on the command line pins the operating point
        let pinned = o.i_sot.is_some() || o.ic_cal.is_some();
        let calibrate = !o.no_calibrate && !pinned && g.calibrate.unwrap_or(true);
        let threshold_position = o
            .threshold_position
            .or(g.threshold_position)
            .unwrap_or(DEFAULT_POSITION);
        if !(threshold_position > 0.0 && threshold_position < 1.0) {
            return Err(bad(
                "threshold_position",
                format!("{threshold_position} must lie in (0, 1)"),
            ));
        }
        let off_resistance = o.off_resistance.or(g.off_resistance);
        if let Some(r) = off_resistance {
            if !(r.is_finite() && r > 0.0) {
                return Err(bad("off_resistance", format!("{r} must be finite and > 0")));
            }
        }

        let seed = o.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let m = &file.mc;
        let defaults = VariationSpec::default();
        let pick = |flag: Option<f64>, key: Option<f64>, default: f64| {
            flag.or(o.sigma).or(key).or(m.sigma).unwrap_or(default)
        };
        let variation = VariationSpec {
            sigma_t_ox: pick(o.sigma_t_ox, m.sigma_t_ox, defaults.sigma_t_ox),
            sigma_t_f: pick(o.sigma_t_f, m.sigma_t_f, defaults.sigma_t_f),
            sigma_tmr: pick(o.sigma_tmr, m.sigma_tmr, defaults.sigma_tmr),
            // RA stays nominal unless asked for explicitly
            sigma_ra: o.sigma_ra.or(m.sigma_ra).unwrap_or(defaults.sigma_ra),
            truncation: o.truncation.or(m.truncation).unwrap_or(defaults.truncation),
            seed,
        };
        variation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let trials = o.trials.or(m.trials).unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(bad("trials", "must be >= 1"));
        }
        let bins = o.bins.or(m.bins).unwrap_or(DEFAULT_BINS);
        if bins == 0 {
            return Err(bad("bins", "must be >= 1"));
        }
        let switching = match o.switching_width.or(m.switching_width) {
            None => SwitchModel::Deterministic,
            Some(w) if w.is_finite() && w > 0.0 => SwitchModel::Logistic { width: w },
            Some(w) => {
                return Err(bad(
                    "switching_width",
                    format!("{w} must be finite and > 0"),
                ))
            }
        };
        let workers = o.workers.or(m.workers);
        if workers == Some(0) {
            return Err(bad("workers", "must be >= 1"));
        }

        let s = &file.sweep;
        let axis = o
            .axis
            .clone()
            .or_else(|| s.axis.clone())
            .unwrap_or_else(|| "RA".into());
        if !DEVICE_KEYS.contains(&axis.as_str()) && !OP_KEYS.contains(&axis.as_str()) {
            return Err(ConfigError::UnknownKey {
                key: axis,
                section: "sweep axis".into(),
            });
        }
        if axis == "field_assist" {
            return Err(bad("axis", "field_assist is not a numeric parameter"));
        }
        let current = match axis.as_str() {
            "v_drive" => v_drive,
            "i_sot" => i_sot,
            "pulse" => pulse,
            key => get_device_key(&device, key).expect("known key"),
        };
        let from = o.from.or(s.from).unwrap_or(current);
        let to = o.to.or(s.to).unwrap_or(from);
        let points = o.points.or(s.points).unwrap_or(1);
        if points == 0 {
            return Err(bad("points", "must be >= 1"));
        }
        if !(from.is_finite() && to.is_finite()) {
            return Err(bad("sweep", "range bounds must be finite"));
        }

        let out_dir = o
            .out
            .clone()
            .or_else(|| file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("sotpim-out"));
        let format = match (o.format, &file.output.format) {
            (Some(f), _) => f,
            (None, Some(s)) => OutputFormat::parse(s)
                .ok_or_else(|| bad("output.format", format!("unknown format `{s}`")))?,
            (None, None) => OutputFormat::Csv,
        };

        Ok(RunConfig {
            topology,
            device,
            gate,
            inputs,
            v_drive,
            i_sot,
            pulse,
            calibrate,
            threshold_position,
            off_resistance,
            seed,
            mc: McSettings {
                trials,
                variation,
                bins,
                switching,
            },
            sweep: SweepSettings {
                axis,
                from,
                to,
                points,
            },
            workers,
            out_dir,
            format,
        })
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn digest(&self) -> Result<String, ConfigError> {
        Ok(digest_of(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FileConfig, ConfigError> {
        FileConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn defaults_resolve_to_table_values() {
        let c = RunConfig::resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        assert_eq!(c.topology, Topology::TwoT1R);
        assert_eq!(c.device, DeviceParams::two_t_one_r());
        assert_eq!(c.gate, GateKind::Nor);
        assert_eq!(c.inputs, 2);
        assert!(c.calibrate);
        let v = RunConfig::resolve(
            &FileConfig::default(),
            &Overrides {
                topology: Some(Topology::Vgsot),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.device.ra, 650.0);
        assert_eq!(v.v_drive, 1.5);
    }

    #[test]
    fn precedence_builtin_file_flag() {
        let file = parse("[device]\nRA = 12\nR_on = 500.0\n[device_2t1r]\nRA = 15.0\n").unwrap();
        let c = RunConfig::resolve(&file, &Overrides::default()).unwrap();
        assert_eq!(c.device.ra, 15.0);
        assert_eq!(c.device.r_on, 500.0);
        let o = Overrides {
            r_on: Some(0.0),
            set: vec![("RA".into(), 20.0)],
            ..Default::default()
        };
        let c = RunConfig::resolve(&file, &o).unwrap();
        assert_eq!(c.device.ra, 20.0);
        assert_eq!(c.device.r_on, 0.0);
    }

    #[test]
    fn oersted_conversion() {
        let file = parse("[device]\nH_EX_Oe = -50\n").unwrap();
        let c = RunConfig::resolve(&file, &Overrides::default()).unwrap();
        assert!((c.device.h_ex + 50.0 * 79.577_471_545_947_67).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_are_named() {
        let file = parse("[device]\nRB = 3.0\n").unwrap();
        let err = RunConfig::resolve(&file, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("`RB`"), "{err}");
        let err = parse("[mc]\ntrails = 3\n").unwrap_err();
        assert!(err.to_string().contains("trails"), "{err}");
        let err = parse_assignment("Rx=1").unwrap_err();
        assert!(err.to_string().contains("`Rx`"), "{err}");
        let o = Overrides {
            axis: Some("bogus".into()),
            ..Default::default()
        };
        let err = RunConfig::resolve(&FileConfig::default(), &o).unwrap_err();
        assert!(err.to_string().contains("`bogus`"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        let file = parse("[device]\nTMR0 = -1.0\n").unwrap();
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let o = Overrides {
            sigma: Some(0.5),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&FileConfig::default(), &o).is_err());
        let o = Overrides {
            threshold_position: Some(1.0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&FileConfig::default(), &o).is_err());
    }

    #[test]
    fn explicit_threshold_disables_calibration() {
        let o = Overrides {
            i_sot: Some(25e-6),
            ..Default::default()
        };
        let c = RunConfig::resolve(&FileConfig::default(), &o).unwrap();
        assert!(!c.calibrate);
    }

    #[test]
    fn digest_ignores_workers_and_output() {
        let a = RunConfig::resolve(&FileConfig::default(), &Overrides::default()).unwrap();
        let b = RunConfig::resolve(
            &FileConfig::default(),
            &Overrides {
                workers: Some(3),
                out: Some("elsewhere".into()),
                format: Some(OutputFormat::Json),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        let c = RunConfig::resolve(
            &FileConfig::default(),
            &Overrides {
                seed: Some(99),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn sweep_values() {
        let s = SweepSettings {
            axis: "RA".into(),
            from: 5.0,
            to: 50.0,
            points: 10,
        };
        let v = s.values();
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 5.0);
        assert_eq!(v[9], 50.0);
        assert!((v[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn device_key_round_trip() {
        let mut p = DeviceParams::two_t_one_r();
        for key in DEVICE_KEYS {
            let v = get_device_key(&p, key).unwrap();
            set_device_key(&mut p, key, v).unwrap();
        }
        let q = DeviceParams::two_t_one_r();
        assert_eq!(p.ra, q.ra);
        assert!((p.h_ex - q.h_ex).abs() < 1e-9);
    }
}
