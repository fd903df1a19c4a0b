//! Command-line front end: `truth-table`, `gate`, `mc`, `margin`,
//! `calibrate` and `sweep`.
//!
//! Exit codes: 0 success, 1 logic-verification failure (wrong nominal
//! output or inseparable cases), 2 configuration, input or I/O error.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::array::{Array, ArrayError, ArraySpec};
use crate::config::{
    get_device_key, parse_assignment, set_device_key, ConfigError, FileConfig, OutputFormat,
    Overrides, RunConfig, CONFIG_ENV,
};
use crate::device::{critical_sot_current, Topology};
use crate::gates::{
    calibrate_gate, execute_gate, margin_analysis, pattern_bits, pattern_label, truth_table,
    Calibration, GateError, GateKind, GateOp, MarginReport, TruthTable,
};
use crate::report::{
    emit_csv, emit_json, format_sig9, ColumnKind, NamedHistogram, ReportBundle, ReportError,
    RunMetadata, Table, Value,
};
use crate::variation::{current_histogram, run_mc_with, McError, McOptions, McResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOGIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sotpim",
    version,
    about = "Stateful logic simulator for SOT-MRAM arrays"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TopologyArg {
    #[value(name = "2t1r")]
    TwoT1R,
    Vgsot,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::TwoT1R => Topology::TwoT1R,
            TopologyArg::Vgsot => Topology::Vgsot,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GateArg {
    Nor,
    Nand,
    Or,
    And,
}

impl From<GateArg> for GateKind {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Nor => GateKind::Nor,
            GateArg::Nand => GateKind::Nand,
            GateArg::Or => GateKind::Or,
            GateArg::And => GateKind::And,
        }
    }
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file (default: $SOTPIM_CONFIG, else built-in values).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, global = true, value_enum)]
    pub topology: Option<TopologyArg>,
}

#[derive(Debug, Args, Default)]
pub struct GateArgs {
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    /// Number of gate inputs.
    #[arg(long)]
    pub inputs: Option<usize>,
    /// RBL voltage (2T-1R) or input WBL voltage (VGSOT), V.
    #[arg(long)]
    pub v_drive: Option<f64>,
    /// VGSOT write current, A. Pins the threshold (disables calibration).
    #[arg(long)]
    pub i_sot: Option<f64>,
    /// Pulse width, s.
    #[arg(long)]
    pub pulse: Option<f64>,
    /// Access-transistor on-resistance, Ω.
    #[arg(long)]
    pub r_on: Option<f64>,
    /// Critical-current multiplier. Pins the threshold (disables calibration).
    #[arg(long)]
    pub ic_cal: Option<f64>,
    /// Device override, e.g. `--set TMR0=0` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Use the configured operating point as is.
    #[arg(long)]
    pub no_calibrate: bool,
    /// Threshold position inside the nominal gap, from the must-hold edge.
    #[arg(long)]
    pub threshold_position: Option<f64>,
    /// Finite off-resistance of unselected cells, Ω (default: disconnected).
    #[arg(long)]
    pub off_resistance: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct McArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    /// Relative sigma applied to t_ox, t_f and TMR.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub sigma_t_ox: Option<f64>,
    #[arg(long)]
    pub sigma_t_f: Option<f64>,
    #[arg(long)]
    pub sigma_tmr: Option<f64>,
    #[arg(long)]
    pub sigma_ra: Option<f64>,
    /// Truncation of the normal draws, in sigmas.
    #[arg(long)]
    pub truncation: Option<f64>,
    /// Histogram bin count.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Enable logistic switching with this relative width.
    #[arg(long)]
    pub switching_width: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    /// Device key (RA, beta, R_on, ...) or v_drive / i_sot / pulse.
    #[arg(long)]
    pub axis: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Nominal truth table with analog observables.
    TruthTable {
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Execute gate operations on an array and verify each result.
    Gate {
        #[command(flatten)]
        gate: GateArgs,
        /// Operation list: `kind,col,in_rows,out_row[,v_drive,i_sot,pulse]`.
        #[arg(long)]
        ops: Option<PathBuf>,
        /// Initial array state (CSV grid).
        #[arg(long)]
        array: Option<PathBuf>,
        /// Input pattern for the single configured gate, MSB first.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Monte-Carlo variation study.
    Mc {
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Nominal margin between must-switch and must-hold patterns.
    Margin {
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Place the switching threshold inside the nominal gap.
    Calibrate {
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Margin, feasibility and disturb verdict along one parameter.
    Sweep {
        #[command(flatten)]
        gate: GateArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TruthTable { .. } => "truth-table",
            Command::Gate { .. } => "gate",
            Command::Mc { .. } => "mc",
            Command::Margin { .. } => "margin",
            Command::Calibrate { .. } => "calibrate",
            Command::Sweep { .. } => "sweep",
        }
    }

    /// File-name stem for outputs.
    fn stem(&self) -> &'static str {
        match self {
            Command::TruthTable { .. } => "truth_table",
            other => other.name(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    OpsFile {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let gate = match self {
            CliError::Gate(g) => Some(g),
            CliError::Mc(McError::Gate(g)) => Some(g),
            _ => None,
        };
        match gate {
            Some(GateError::Inseparable { .. } | GateError::NoBarrier) => EXIT_LOGIC,
            _ => EXIT_CONFIG,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn overrides(global: &GlobalArgs, gate: &GateArgs) -> Result<Overrides, ConfigError> {
    Ok(Overrides {
        topology: global.topology.map(Topology::from),
        seed: global.seed,
        out: global.out.clone(),
        format: global.format.map(|f| match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }),
        gate: gate.gate.map(GateKind::from),
        inputs: gate.inputs,
        v_drive: gate.v_drive,
        i_sot: gate.i_sot,
        pulse: gate.pulse,
        r_on: gate.r_on,
        ic_cal: gate.ic_cal,
        set: gate
            .set
            .iter()
            .map(|s| parse_assignment(s))
            .collect::<Result<_, _>>()?,
        no_calibrate: gate.no_calibrate,
        threshold_position: gate.threshold_position,
        off_resistance: gate.off_resistance,
        ..Default::default()
    })
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    match path.map(Path::to_path_buf).or(env_path) {
        Some(p) => FileConfig::load(&p),
        None => Ok(FileConfig::default()),
    }
}

/// Resolve the configuration for a parsed command line.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = load_file_config(cli.global.config.as_deref())?;
    let mut o = match &cli.command {
        Command::TruthTable { gate }
        | Command::Gate { gate, .. }
        | Command::Mc { gate, .. }
        | Command::Margin { gate }
        | Command::Calibrate { gate }
        | Command::Sweep { gate, .. } => overrides(&cli.global, gate)?,
    };
    if let Command::Mc { mc, .. } = &cli.command {
        o.trials = mc.trials;
        o.sigma = mc.sigma;
        o.sigma_t_ox = mc.sigma_t_ox;
        o.sigma_t_f = mc.sigma_t_f;
        o.sigma_tmr = mc.sigma_tmr;
        o.sigma_ra = mc.sigma_ra;
        o.truncation = mc.truncation;
        o.bins = mc.bins;
        o.workers = mc.workers;
        o.switching_width = mc.switching_width;
    }
    if let Command::Sweep { sweep, .. } = &cli.command {
        o.axis = sweep.axis.clone();
        o.from = sweep.from;
        o.to = sweep.to;
        o.points = sweep.points;
    }
    if let Command::Gate {
        array: Some(path), ..
    } = &cli.command
    {
        // the array file decides the topology
        let text = read(path)?;
        let topology = Array::from_csv_str(&text, None)?.topology();
        if let Some(t) = o.topology {
            if t != topology {
                return Err(CliError::Usage(format!(
                    "--topology {t} conflicts with {} array in {}",
                    topology,
                    path.display()
                )));
            }
        }
        o.topology = Some(topology);
    }
    Ok(RunConfig::resolve(&file, &o)?)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Run a parsed command line: writes the report and returns the exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = resolve(cli)?;
    let meta = RunMetadata::new(cli.command.stem(), Some(cfg.seed), cfg.digest()?);
    let (bundle, ok) = match &cli.command {
        Command::TruthTable { .. } => cmd_truth_table(&cfg, meta)?,
        Command::Gate {
            ops,
            array,
            pattern,
            ..
        } => cmd_gate(
            &cfg,
            meta,
            ops.as_deref(),
            array.as_deref(),
            pattern.as_deref(),
        )?,
        Command::Mc { .. } => cmd_mc(&cfg, meta)?,
        Command::Margin { .. } => cmd_margin(&cfg, meta)?,
        Command::Calibrate { .. } => cmd_calibrate(&cfg, meta)?,
        Command::Sweep { .. } => cmd_sweep(&cfg, meta)?,
    };
    write_bundle(&bundle, &cfg)?;
    Ok(if ok { EXIT_OK } else { EXIT_LOGIC })
}

/// Emit the bundle in the configured format; returns the files written.
pub fn write_bundle(bundle: &ReportBundle, cfg: &RunConfig) -> Result<Vec<PathBuf>, ReportError> {
    let paths = match cfg.format {
        OutputFormat::Csv => emit_csv(bundle, &cfg.out_dir)?,
        OutputFormat::Json => {
            let path = cfg
                .out_dir
                .join(format!("{}.json", bundle.metadata.command));
            emit_json(bundle, &path)?;
            vec![path]
        }
    };
    println!("wrote {} file(s) to {}", paths.len(), cfg.out_dir.display());
    Ok(paths)
}

// ---- operating point ---------------------------------------------------

/// Array spec and standard op for the configured gate, before calibration.
pub fn base_operating_point(cfg: &RunConfig) -> (ArraySpec, GateOp) {
    let mut spec = ArraySpec::for_gate(cfg.topology, cfg.inputs);
    spec.nominal = cfg.device;
    spec.off_resistance = cfg.off_resistance;
    let mut op = GateOp::standard(cfg.gate, cfg.topology, cfg.inputs);
    op.v_drive = cfg.v_drive;
    op.i_sot = cfg.i_sot;
    op.pulse = cfg.pulse;
    (spec, op)
}

/// Configured operating point, calibrated unless disabled.
pub fn operating_point(
    cfg: &RunConfig,
) -> Result<(ArraySpec, GateOp, Option<Calibration>), GateError> {
    let (spec, op) = base_operating_point(cfg);
    if !cfg.calibrate {
        return Ok((spec, op, None));
    }
    let cal = calibrate_gate(&spec, &op, cfg.threshold_position)?;
    let (spec, op) = cal.apply(&spec, &op);
    Ok((spec, op, Some(cal)))
}

fn describe(
    meta: &mut RunMetadata,
    cfg: &RunConfig,
    spec: &ArraySpec,
    op: &GateOp,
    calibrated: bool,
) {
    let notes = &mut meta.notes;
    notes.insert("topology".into(), cfg.topology.to_string());
    notes.insert("gate".into(), op.kind.to_string());
    notes.insert("inputs".into(), op.n_inputs().to_string());
    notes.insert("calibrated".into(), calibrated.to_string());
    notes.insert("v_drive".into(), format_sig9(op.v_drive));
    notes.insert("pulse".into(), format_sig9(op.pulse));
    notes.insert("R_on".into(), format_sig9(spec.nominal.r_on));
    match cfg.topology {
        Topology::TwoT1R => {
            notes.insert("Ic_cal".into(), format_sig9(spec.nominal.ic_cal));
            notes.insert(
                "Ic".into(),
                format_sig9(critical_sot_current(&spec.nominal, 0.0)),
            );
        }
        Topology::Vgsot => {
            notes.insert("i_sot".into(), format_sig9(op.i_sot));
        }
    }
}

fn bool_int(b: bool) -> Value {
    Value::Int(i64::from(b))
}

// ---- table builders ----------------------------------------------------

pub fn truth_table_table(t: &TruthTable) -> Table {
    let mut table = Table::new(
        "table",
        &[
            ("pattern", ColumnKind::Text),
            ("expected", ColumnKind::Int),
            ("output", ColumnKind::Int),
            ("correct", ColumnKind::Bool),
            ("must_switch", ColumnKind::Bool),
            ("applied_current", ColumnKind::Float),
            ("critical_current", ColumnKind::Float),
            ("gate_voltage", ColumnKind::Float),
            ("energy", ColumnKind::Float),
            ("disturb_ok", ColumnKind::Bool),
        ],
    );
    for r in &t.rows {
        table.push(vec![
            r.label().into(),
            bool_int(r.expected),
            bool_int(r.output),
            r.correct().into(),
            r.must_switch.into(),
            r.applied_current.into(),
            r.critical_current.into(),
            r.gate_voltage.into(),
            r.energy.into(),
            r.disturb_ok.into(),
        ]);
    }
    table
}

const MARGIN_COLUMNS: [(&str, ColumnKind); 10] = [
    ("quantity", ColumnKind::Text),
    ("switch_edge", ColumnKind::Float),
    ("hold_edge", ColumnKind::Float),
    ("margin", ColumnKind::Float),
    ("midpoint", ColumnKind::Float),
    ("relative", ColumnKind::Float),
    ("switch_patterns", ColumnKind::Text),
    ("hold_patterns", ColumnKind::Text),
    ("separable", ColumnKind::Bool),
    ("n_inputs", ColumnKind::Int),
];

fn margin_cells(m: &MarginReport) -> Vec<Value> {
    let quantity = match m.quantity {
        crate::gates::MarginQuantity::OutputCurrent => "output_current",
        crate::gates::MarginQuantity::CriticalCurrent => "critical_current",
    };
    vec![
        quantity.into(),
        m.switch_edge.into(),
        m.hold_edge.into(),
        m.margin.into(),
        m.midpoint.into(),
        m.relative.into(),
        m.switch_patterns.join(";").into(),
        m.hold_patterns.join(";").into(),
        m.separable().into(),
        m.n_inputs.into(),
    ]
}

pub fn margin_table(m: &MarginReport) -> Table {
    let mut table = Table::new("margin", &MARGIN_COLUMNS);
    table.push(margin_cells(m));
    table
}

pub fn calibration_table(c: &Calibration) -> Table {
    let mut cols = vec![
        ("position", ColumnKind::Float),
        ("threshold", ColumnKind::Float),
        ("ic_cal", ColumnKind::Float),
        ("i_sot", ColumnKind::Float),
        ("v_drive", ColumnKind::Float),
        ("drive_adjusted", ColumnKind::Bool),
        ("suggested_v_drive", ColumnKind::Float),
    ];
    cols.extend(MARGIN_COLUMNS);
    let mut table = Table::new("calibration", &cols);
    let nan = f64::NAN;
    let mut row: Vec<Value> = vec![
        c.position.into(),
        c.threshold.into(),
        c.ic_cal.unwrap_or(nan).into(),
        c.i_sot.unwrap_or(nan).into(),
        c.v_drive.into(),
        c.drive_adjusted.into(),
        c.suggested_v_drive.unwrap_or(nan).into(),
    ];
    row.extend(margin_cells(&c.margin));
    table.push(row);
    table
}

/// Success rate per input pattern.
pub fn mc_summary_table(r: &McResult) -> Table {
    let mut table = Table::new(
        "summary",
        &[
            ("pattern", ColumnKind::Text),
            ("expected_out", ColumnKind::Int),
            ("must_switch", ColumnKind::Bool),
            ("trials", ColumnKind::Int),
            ("successes", ColumnKind::Int),
            ("success_rate", ColumnKind::Float),
            ("nominal_observable", ColumnKind::Float),
        ],
    );
    for p in &r.patterns {
        table.push(vec![
            p.label.clone().into(),
            bool_int(p.expected),
            p.must_switch.into(),
            p.trials.into(),
            p.successes.into(),
            p.success_rate.into(),
            p.nominal_observable.into(),
        ]);
    }
    table
}

pub fn mc_trials_table(r: &McResult) -> Table {
    let mut table = Table::new(
        "trials",
        &[
            ("pattern", ColumnKind::Text),
            ("trial", ColumnKind::Int),
            ("applied_current", ColumnKind::Float),
            ("critical_current", ColumnKind::Float),
            ("gate_voltage", ColumnKind::Float),
            ("observable", ColumnKind::Float),
            ("output", ColumnKind::Int),
            ("switched", ColumnKind::Bool),
            ("success", ColumnKind::Bool),
        ],
    );
    for p in &r.patterns {
        for s in &p.samples {
            table.push(vec![
                p.label.clone().into(),
                s.trial.into(),
                s.applied_current.into(),
                s.critical_current.into(),
                s.gate_voltage.into(),
                s.observable.into(),
                bool_int(s.output),
                s.switched.into(),
                s.success.into(),
            ]);
        }
    }
    table
}

// ---- commands ----------------------------------------------------------

pub fn cmd_truth_table(
    cfg: &RunConfig,
    mut meta: RunMetadata,
) -> Result<(ReportBundle, bool), CliError> {
    let (spec, op, cal) = operating_point(cfg)?;
    describe(&mut meta, cfg, &spec, &op, cal.is_some());
    let table = truth_table(&spec, &op)?;
    let mismatches = table.mismatches();
    meta.notes
        .insert("mismatches".into(), mismatches.to_string());
    println!("{} {}-input {}:", cfg.topology, op.n_inputs(), op.kind);
    for r in &table.rows {
        println!(
            "  {}  expected {}  got {}{}",
            r.label(),
            u8::from(r.expected),
            u8::from(r.output),
            if r.correct() { "" } else { "  MISMATCH" }
        );
    }
    if mismatches > 0 {
        let m = margin_analysis(&spec, &op)?;
        if m.separable() {
            eprintln!(
                "logic failure: {mismatches} pattern(s) wrong at the configured operating point"
            );
        } else {
            eprintln!(
                "logic failure: {mismatches} pattern(s) wrong; the cases are inseparable (margin {:.3e} A)",
                m.margin
            );
        }
    }
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(truth_table_table(&table));
    Ok((bundle, mismatches == 0))
}

pub fn cmd_margin(
    cfg: &RunConfig,
    mut meta: RunMetadata,
) -> Result<(ReportBundle, bool), CliError> {
    let (spec, op) = base_operating_point(cfg);
    describe(&mut meta, cfg, &spec, &op, false);
    let m = margin_analysis(&spec, &op)?;
    println!(
        "{} {}-input {} margin {:.4e} A ({:.2}% of midpoint)",
        cfg.topology,
        op.n_inputs(),
        op.kind,
        m.margin,
        100.0 * m.relative
    );
    if !m.separable() {
        eprintln!("logic failure: inseparable (no threshold separates the cases)");
    }
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(margin_table(&m));
    Ok((bundle, m.separable()))
}

pub fn cmd_calibrate(
    cfg: &RunConfig,
    mut meta: RunMetadata,
) -> Result<(ReportBundle, bool), CliError> {
    let (spec, op) = base_operating_point(cfg);
    let cal = calibrate_gate(&spec, &op, cfg.threshold_position)?;
    let (cspec, cop) = cal.apply(&spec, &op);
    describe(&mut meta, cfg, &cspec, &cop, true);
    println!(
        "{} {}-input {} threshold {:.4e} A at position {}",
        cfg.topology,
        op.n_inputs(),
        op.kind,
        cal.threshold,
        cal.position
    );
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(calibration_table(&cal));
    Ok((bundle, true))
}

pub fn cmd_mc(cfg: &RunConfig, mut meta: RunMetadata) -> Result<(ReportBundle, bool), CliError> {
    let (spec, op, cal) = operating_point(cfg)?;
    describe(&mut meta, cfg, &spec, &op, cal.is_some());
    let options = McOptions {
        workers: cfg.workers,
        switching: cfg.mc.switching,
    };
    let result = run_mc_with(&spec, &op, cfg.mc.trials, &cfg.mc.variation, &options)?;
    let histogram = current_histogram(&result, cfg.mc.bins)?;
    let v = &result.variation;
    let notes = &mut meta.notes;
    notes.insert("trials".into(), cfg.mc.trials.to_string());
    notes.insert(
        "sigma".into(),
        format!(
            "t_ox={} t_f={} TMR={} RA={}",
            format_sig9(v.sigma_t_ox),
            format_sig9(v.sigma_t_f),
            format_sig9(v.sigma_tmr),
            format_sig9(v.sigma_ra)
        ),
    );
    notes.insert(
        "reference_threshold".into(),
        format_sig9(result.reference_threshold),
    );
    if let Some(o) = &histogram.overlap {
        notes.insert("overlap_fraction".into(), format_sig9(o.fraction));
    }
    let unintended: usize = result
        .patterns
        .iter()
        .map(|p| p.unintentional_switches())
        .sum();
    notes.insert("unintentional_switches".into(), unintended.to_string());

    println!(
        "{} {}-input {} MC, {} trials per pattern:",
        cfg.topology,
        op.n_inputs(),
        op.kind,
        cfg.mc.trials
    );
    for p in &result.patterns {
        println!(
            "  {}  OUT={}  success {:.1}%",
            p.label,
            u8::from(p.expected),
            100.0 * p.success_rate
        );
    }
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(mc_summary_table(&result));
    bundle.tables.push(mc_trials_table(&result));
    bundle.histograms.push(NamedHistogram {
        name: "histogram".into(),
        histogram,
    });
    Ok((bundle, true))
}

/// One sweep point: the nominal gate at the fixed operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub margin: MarginReport,
    pub threshold: f64,
    pub slack: f64,
    pub feasible: bool,
    pub disturb_ok: bool,
}

/// Evaluate the configured gate along the sweep axis. The operating point
/// (calibrated once at the base configuration unless disabled) is held
/// fixed, so feasibility reflects the configured threshold.
pub fn sweep_points(cfg: &RunConfig) -> Result<(Vec<SweepPoint>, Option<Calibration>), CliError> {
    let (spec0, op0, cal) = operating_point(cfg)?;
    let mut points = Vec::with_capacity(cfg.sweep.points);
    for value in cfg.sweep.values() {
        let mut spec = spec0.clone();
        let mut op = op0.clone();
        match cfg.sweep.axis.as_str() {
            "v_drive" => op.v_drive = value,
            "i_sot" => op.i_sot = value,
            "pulse" => op.pulse = value,
            key => {
                set_device_key(&mut spec.nominal, key, value)?;
                spec.nominal
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("sweep {key} = {value}: {e}")))?;
            }
        }
        let margin = margin_analysis(&spec, &op)?;
        let table = truth_table(&spec, &op)?;
        let (threshold, slack) = match cfg.topology {
            Topology::TwoT1R => {
                let t = critical_sot_current(&spec.nominal, 0.0);
                (t, (t - margin.hold_edge).min(margin.switch_edge - t))
            }
            Topology::Vgsot => {
                let t = op.i_sot;
                (t, (margin.hold_edge - t).min(t - margin.switch_edge))
            }
        };
        points.push(SweepPoint {
            value,
            threshold,
            slack,
            feasible: table.mismatches() == 0,
            disturb_ok: table.rows.iter().all(|r| r.disturb_ok),
            margin,
        });
    }
    Ok((points, cal))
}

/// Where the margin sign, the feasibility flag or the disturb verdict
/// changes between consecutive sweep points.
pub fn sweep_boundaries(points: &[SweepPoint]) -> Table {
    let mut table = Table::new(
        "boundaries",
        &[
            ("quantity", ColumnKind::Text),
            ("lower", ColumnKind::Float),
            ("upper", ColumnKind::Float),
            ("estimate", ColumnKind::Float),
            ("transition", ColumnKind::Text),
        ],
    );
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let sa = a.margin.separable();
        let sb = b.margin.separable();
        if sa != sb {
            let (ma, mb) = (a.margin.margin, b.margin.margin);
            let t = if (mb - ma).abs() > 0.0 {
                -ma / (mb - ma)
            } else {
                0.5
            };
            table.push(vec![
                "margin".into(),
                a.value.into(),
                b.value.into(),
                (a.value + t.clamp(0.0, 1.0) * (b.value - a.value)).into(),
                format!("{}->{}", sign(sa), sign(sb)).into(),
            ]);
        }
        for (name, fa, fb) in [
            ("feasible", a.feasible, b.feasible),
            ("disturb_ok", a.disturb_ok, b.disturb_ok),
        ] {
            if fa != fb {
                table.push(vec![
                    name.into(),
                    a.value.into(),
                    b.value.into(),
                    (0.5 * (a.value + b.value)).into(),
                    format!("{fa}->{fb}").into(),
                ]);
            }
        }
    }
    table
}

fn sign(separable: bool) -> &'static str {
    if separable {
        "positive"
    } else {
        "non-positive"
    }
}

pub fn cmd_sweep(cfg: &RunConfig, mut meta: RunMetadata) -> Result<(ReportBundle, bool), CliError> {
    let (points, cal) = sweep_points(cfg)?;
    let (spec, op, _) = operating_point(cfg)?;
    describe(&mut meta, cfg, &spec, &op, cal.is_some());
    meta.notes.insert("axis".into(), cfg.sweep.axis.clone());
    let mut table = Table::new(
        "points",
        &[
            ("value", ColumnKind::Float),
            ("margin", ColumnKind::Float),
            ("relative_margin", ColumnKind::Float),
            ("switch_edge", ColumnKind::Float),
            ("hold_edge", ColumnKind::Float),
            ("threshold", ColumnKind::Float),
            ("threshold_slack", ColumnKind::Float),
            ("feasible", ColumnKind::Bool),
            ("disturb_ok", ColumnKind::Bool),
        ],
    );
    for p in &points {
        table.push(vec![
            p.value.into(),
            p.margin.margin.into(),
            p.margin.relative.into(),
            p.margin.switch_edge.into(),
            p.margin.hold_edge.into(),
            p.threshold.into(),
            p.slack.into(),
            p.feasible.into(),
            p.disturb_ok.into(),
        ]);
    }
    let boundaries = sweep_boundaries(&points);
    println!(
        "sweep {} over {} point(s): {} feasible, {} boundary crossing(s)",
        cfg.sweep.axis,
        points.len(),
        points.iter().filter(|p| p.feasible).count(),
        boundaries.rows.len()
    );
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(table);
    bundle.tables.push(boundaries);
    Ok((bundle, true))
}

/// One line of an operation file.
#[derive(Debug, Clone, PartialEq)]
pub struct OpLine {
    pub kind: GateKind,
    pub col: usize,
    pub input_rows: Vec<usize>,
    pub output_row: usize,
    pub v_drive: Option<f64>,
    pub i_sot: Option<f64>,
    pub pulse: Option<f64>,
}

/// Parse `kind,col,in_rows,out_row[,v_drive,i_sot,pulse]` lines; input
/// rows are `;`-separated, empty optional fields keep the configured
/// values, `#` starts a comment line.
pub fn parse_ops(text: &str, path: &Path) -> Result<Vec<OpLine>, CliError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CliError::OpsFile {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(4..=7).contains(&fields.len()) {
            return Err(err(format!(
                "expected 4 to 7 fields, found {}",
                fields.len()
            )));
        }
        let kind = GateKind::parse(fields[0])
            .ok_or_else(|| err(format!("unknown gate `{}`", fields[0])))?;
        let int = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("bad {what} `{s}`")))
        };
        let col = int(fields[1], "column")?;
        let input_rows = fields[2]
            .split(';')
            .map(|s| int(s.trim(), "input row"))
            .collect::<Result<Vec<_>, _>>()?;
        let output_row = int(fields[3], "output row")?;
        let opt = |k: usize, what: &str| -> Result<Option<f64>, CliError> {
            match fields.get(k) {
                None => Ok(None),
                Some(&"") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| err(format!("bad {what} `{s}`"))),
            }
        };
        ops.push(OpLine {
            kind,
            col,
            input_rows,
            output_row,
            v_drive: opt(4, "v_drive")?,
            i_sot: opt(5, "i_sot")?,
            pulse: opt(6, "pulse")?,
        });
    }
    Ok(ops)
}

fn parse_pattern(s: &str, n: usize) -> Result<Vec<bool>, CliError> {
    if s.len() != n || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(CliError::Usage(format!(
            "--pattern `{s}` must be {n} binary digit(s)"
        )));
    }
    let index = usize::from_str_radix(s, 2).expect("binary digits");
    Ok(pattern_bits(index, n))
}

pub fn cmd_gate(
    cfg: &RunConfig,
    mut meta: RunMetadata,
    ops_path: Option<&Path>,
    array_path: Option<&Path>,
    pattern: Option<&str>,
) -> Result<(ReportBundle, bool), CliError> {
    let lines = match ops_path {
        Some(p) => {
            if pattern.is_some() {
                return Err(CliError::Usage(
                    "--pattern applies only without --ops".into(),
                ));
            }
            parse_ops(&read(p)?, p)?
        }
        None => vec![OpLine {
            kind: cfg.gate,
            col: 0,
            input_rows: (0..cfg.inputs).collect(),
            output_row: cfg.inputs,
            v_drive: None,
            i_sot: None,
            pulse: None,
        }],
    };
    let mut array = match array_path {
        Some(p) => {
            let a = Array::from_csv_str(&read(p)?, Some(cfg.device))?;
            let mut spec = a.spec().clone();
            spec.off_resistance = cfg.off_resistance;
            let mut fresh = Array::new(spec)?;
            for r in 0..a.spec().rows {
                for c in 0..a.spec().cols {
                    fresh.write_cell(r, c, a.state(r, c)?)?;
                }
            }
            fresh
        }
        None => {
            let rows = lines
                .iter()
                .flat_map(|l| l.input_rows.iter().chain(std::iter::once(&l.output_row)))
                .max()
                .map_or(3, |m| (m + 1).max(3));
            let cols = lines.iter().map(|l| l.col + 1).max().unwrap_or(1);
            let mut spec = ArraySpec::new(cfg.topology, rows, cols, cfg.device);
            spec.off_resistance = cfg.off_resistance;
            Array::new(spec)?
        }
    };
    if let Some(p) = pattern {
        let bits = parse_pattern(p, cfg.inputs)?;
        for (row, b) in bits.into_iter().enumerate() {
            array.write_cell(row, 0, crate::device::MagState::from_bit(b))?;
        }
    }

    let mut calibrations: BTreeMap<(&'static str, usize), Calibration> = BTreeMap::new();
    let mut table = Table::new(
        "ops",
        &[
            ("step", ColumnKind::Int),
            ("kind", ColumnKind::Text),
            ("col", ColumnKind::Int),
            ("input_rows", ColumnKind::Text),
            ("output_row", ColumnKind::Int),
            ("inputs", ColumnKind::Text),
            ("expected", ColumnKind::Int),
            ("output", ColumnKind::Int),
            ("correct", ColumnKind::Bool),
            ("applied_current", ColumnKind::Float),
            ("critical_current", ColumnKind::Float),
            ("gate_voltage", ColumnKind::Float),
            ("energy", ColumnKind::Float),
            ("disturb_ok", ColumnKind::Bool),
        ],
    );
    let mut failures = 0;
    for (step, line) in lines.iter().enumerate() {
        let mut op = GateOp::new(
            line.kind,
            cfg.topology,
            line.input_rows.clone(),
            line.output_row,
            line.col,
        );
        op.v_drive = cfg.v_drive;
        op.i_sot = cfg.i_sot;
        op.pulse = line.pulse.unwrap_or(cfg.pulse);
        op.validate(array.spec())?;
        let pinned = line.v_drive.is_some() || line.i_sot.is_some();
        if cfg.calibrate && !pinned {
            let n = op.n_inputs();
            let key = (line.kind.name(), n);
            let cal = match calibrations.entry(key) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let mut cspec = ArraySpec::for_gate(cfg.topology, n);
                    cspec.nominal = cfg.device;
                    cspec.off_resistance = cfg.off_resistance;
                    let mut cop = GateOp::standard(line.kind, cfg.topology, n);
                    cop.v_drive = cfg.v_drive;
                    cop.i_sot = cfg.i_sot;
                    e.insert(calibrate_gate(&cspec, &cop, cfg.threshold_position)?)
                }
            };
            op.v_drive = cal.v_drive;
            if let Some(i) = cal.i_sot {
                op.i_sot = i;
            }
            if let Some(c) = cal.ic_cal {
                let mut dev = array.cell(op.output_row, op.col)?.dev;
                dev.ic_cal = c;
                array.set_device(op.output_row, op.col, dev)?;
            }
        } else {
            op.v_drive = line.v_drive.unwrap_or(cfg.v_drive);
            op.i_sot = line.i_sot.unwrap_or(cfg.i_sot);
        }
        let bits: Vec<bool> = op
            .input_rows
            .iter()
            .map(|&r| array.state(r, op.col).map(|s| s.bit()))
            .collect::<Result<_, _>>()?;
        let expected = op.kind.eval(&bits);
        let trace = execute_gate(&array, &op)?;
        let output = trace.output_after.bit();
        if output != expected {
            failures += 1;
        }
        println!(
            "  step {step}: {} col {} rows {:?} -> row {}: inputs {} expected {} got {}{}",
            op.kind,
            op.col,
            op.input_rows,
            op.output_row,
            pattern_label(&bits),
            u8::from(expected),
            u8::from(output),
            if output == expected { "" } else { "  MISMATCH" }
        );
        table.push(vec![
            step.into(),
            op.kind.name().into(),
            op.col.into(),
            op.input_rows
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";")
                .into(),
            op.output_row.into(),
            pattern_label(&bits).into(),
            bool_int(expected),
            bool_int(output),
            (output == expected).into(),
            trace.applied_current.into(),
            trace.critical_current.into(),
            trace.gate_voltage.into(),
            trace.energy.into(),
            trace.disturb_ok().into(),
        ]);
        array = trace.post;
    }
    meta.notes
        .insert("topology".into(), cfg.topology.to_string());
    meta.notes
        .insert("calibrated".into(), cfg.calibrate.to_string());
    meta.notes.insert("steps".into(), lines.len().to_string());
    meta.notes.insert("mismatches".into(), failures.to_string());
    if failures > 0 {
        eprintln!("logic failure: {failures} operation(s) produced the wrong output");
    }

    let cols = array.spec().cols;
    let mut col_names: Vec<String> = vec!["row".into()];
    col_names.extend((0..cols).map(|c| format!("col_{c}")));
    let col_spec: Vec<(&str, ColumnKind)> = col_names
        .iter()
        .map(|n| (n.as_str(), ColumnKind::Int))
        .collect();
    let mut grid = Table::new("array", &col_spec);
    for r in 0..array.spec().rows {
        let mut row: Vec<Value> = vec![r.into()];
        for c in 0..cols {
            row.push(bool_int(array.state(r, c)?.bit()));
        }
        grid.push(row);
    }
    let mut bundle = ReportBundle::new(meta);
    bundle.tables.push(table);
    bundle.tables.push(grid);
    Ok((bundle, failures == 0))
}

/// Current value of a sweepable parameter.
pub fn axis_value(cfg: &RunConfig, axis: &str) -> Option<f64> {
    match axis {
        "v_drive" => Some(cfg.v_drive),
        "i_sot" => Some(cfg.i_sot),
        "pulse" => Some(cfg.pulse),
        key => get_device_key(&cfg.device, key),
    }
}
