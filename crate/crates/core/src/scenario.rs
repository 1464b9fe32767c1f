//! Scenario files, initial states and the end-to-end pipeline
//! rates → evolve → Wigner/NV → D_N.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "bell_lorentzian"
//!
//! [state]
//! kind = "bell"
//!
//! [bath]
//! kind = "lorentzian"
//! coupling = 10.0
//! relaxation = 1.0
//! detuning = 1.0
//!
//! [coeffs]
//! c2 = 1.0
//! c4 = 1.0
//!
//! [channel]
//! kind = "qubit_dephasing"
//! target = 0
//!
//! [time]
//! dt = 0.001
//! t_max = 2.0
//! sample_stride = 10
//! ```
//!
//! `grid` and `outputs` sections are optional. See the README for the full
//! grammar.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bath::{
    build_schedule, DampingSchedule, QuadratureConfig, SpectralDensity, TclCoefficients, TimeGrid,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    fock, squeezed_coherent_state, tensor_ket, DensityMatrix, HilbertSpec, Ket, Operator,
    Subsystem, C64,
};
use crate::lindblad::{evolve, Channel, ChannelKind, EvolutionConfig, Trajectory};
use crate::measure::{nonmarkovianity_degree, nv_trace, NegativityTrace};
use crate::phase_space::{
    build_cache, reduce_photonic, wigner_evaluate, GridParams, PhaseSpaceGrid,
};

/// Environment variable naming the output root directory.
pub const OUTPUT_ROOT_ENV: &str = "NMWIGNER_OUT";

/// Margin between a coherent amplitude and the edge of the β grid.
pub const RADIUS_MARGIN: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex> for C64 {
    fn from(c: Complex) -> Self {
        C64::new(c.re, c.im)
    }
}

/// Squeezing parameter `ξ = r e^{iφ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Squeezing {
    pub r: f64,
    pub phi: f64,
}

impl From<Squeezing> for C64 {
    fn from(s: Squeezing) -> Self {
        C64::from_polar(s.r, s.phi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// `(|00⟩ + |11⟩)/√2`.
    Bell,
    /// `|0⟩|ξ₁,α₁⟩ + |1⟩|ξ₂,α₂⟩`, normalized.
    QubitScs {
        alpha1: Complex,
        xi1: Squeezing,
        alpha2: Complex,
        xi2: Squeezing,
        cutoff: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub target: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_stride() -> usize {
    10
}

impl From<TimeSpec> for EvolutionConfig {
    fn from(t: TimeSpec) -> Self {
        EvolutionConfig {
            dt: t.dt,
            t_max: t.t_max,
            sample_stride: t.sample_stride,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory relative to the output root; defaults to the name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Snapshot times at which the Wigner field is dumped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wigner_times: Vec<f64>,
}

/// One simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub state: StateSpec,
    pub bath: SpectralDensity,
    pub coeffs: TclCoefficients,
    pub channel: ChannelSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Grid presets selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Low,
    Ref,
    High,
}

impl Resolution {
    pub fn params(self) -> GridParams {
        match self {
            Resolution::Low => GridParams {
                n_theta: 16,
                n_phi: 8,
                n_beta: 41,
                radius: 4.0,
            },
            Resolution::Ref => GridParams::default(),
            Resolution::High => GridParams {
                n_theta: 64,
                n_phi: 32,
                n_beta: 161,
                radius: 4.0,
            },
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Resolution::Low),
            "ref" => Ok(Resolution::Ref),
            "high" => Ok(Resolution::High),
            other => Err(Error::Config(format!(
                "unknown resolution `{other}` (low, ref, high)"
            ))),
        }
    }
}

/// Sets `path` (dot separated) in a TOML tree. `value` is parsed as a TOML
/// value and taken as a bare string if that fails.
pub fn apply_override(doc: &mut toml::Table, path: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), parsed);
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{arg}` is not of the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, None, &[])
    }

    /// Parses `text`, then applies a resolution preset and `key=value`
    /// overrides, in that order.
    pub fn from_toml_with(
        text: &str,
        resolution: Option<Resolution>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(res) = resolution {
            let p = res.params();
            for (k, v) in [
                ("n_theta", p.n_theta.to_string()),
                ("n_phi", p.n_phi.to_string()),
                ("n_beta", p.n_beta.to_string()),
                ("radius", format!("{:?}", p.radius)),
            ] {
                apply_override(&mut doc, &format!("grid.{k}"), &v)?;
            }
        }
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        let scenario: Scenario = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(scenario)
    }

    pub fn load(
        path: &Path,
        resolution: Option<Resolution>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_with(&text, resolution, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn hilbert_spec(&self) -> Result<HilbertSpec> {
        match &self.state {
            StateSpec::Bell => Ok(HilbertSpec::qubit_qubit()),
            StateSpec::QubitScs { cutoff, .. } => HilbertSpec::qubit_mode(*cutoff),
        }
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        self.bath.validate()?;
        self.coeffs.validate()?;
        EvolutionConfig::from(self.time).steps()?;
        let spec = self.hilbert_spec()?;
        let stub = Arc::new(DampingSchedule::constant(0.0, TimeGrid::new(1.0, 2)?));
        Channel::new(self.channel.kind, self.channel.target, &spec, stub)?;
        PhaseSpaceGrid::for_spec(&spec, &self.grid)?;
        if let StateSpec::QubitScs { alpha1, alpha2, .. } = &self.state {
            let need = [alpha1, alpha2]
                .iter()
                .map(|a| a.re.abs().max(a.im.abs()) + RADIUS_MARGIN)
                .fold(0.0, f64::max);
            if self.grid.radius < need {
                return Err(Error::param(
                    "radius",
                    format!(
                        "{} too small for the coherent amplitudes, need at least {need}",
                        self.grid.radius
                    ),
                ));
            }
        }
        for &t in &self.outputs.wigner_times {
            if !(0.0..=self.time.t_max).contains(&t) {
                return Err(Error::param(
                    "wigner_times",
                    format!("{t} outside [0, {}]", self.time.t_max),
                ));
            }
        }
        Ok(())
    }
}

/// The Bell state `(|00⟩ + |11⟩)/√2`.
pub fn bell_state() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = Ket::from_vec(vec![
        C64::new(s, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
    ]);
    DensityMatrix::from_ket(&ket).expect("Bell vector is a valid state")
}

/// Qubit entangled with a superposition of two squeezed coherent states.
#[derive(Clone, Debug)]
pub struct QubitScsState {
    pub density: DensityMatrix,
    /// `⟨ξ₁,α₁|ξ₂,α₂⟩` on the truncated space.
    pub branch_overlap: C64,
}

/// `(|0⟩|ξ₁,α₁⟩ + |1⟩|ξ₂,α₂⟩)/‖·‖`. The branches are not orthogonal, so
/// the vector is normalized by its actual norm rather than by √2.
pub fn qubit_scs_state(
    alpha1: C64,
    xi1: C64,
    alpha2: C64,
    xi2: C64,
    cutoff: usize,
) -> Result<QubitScsState> {
    let b1 = squeezed_coherent_state(alpha1, xi1, cutoff)?;
    let b2 = squeezed_coherent_state(alpha2, xi2, cutoff)?;
    let branch_overlap = b1.dotc(&b2);
    let ket = tensor_ket(&fock(0, 2)?, &b1) + tensor_ket(&fock(1, 2)?, &b2);
    Ok(QubitScsState {
        density: DensityMatrix::from_ket(&ket)?,
        branch_overlap,
    })
}

/// Pipeline depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Damping schedule only.
    Rates,
    /// Schedule and trajectory.
    Evolve,
    /// Schedule, trajectory and Wigner dumps.
    Wigner,
    /// Full pipeline: NV trace and D_N.
    Measure,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Rates => "rates",
            Stage::Evolve => "evolve",
            Stage::Wigner => "wigner",
            Stage::Measure => "measure",
        }
    }
}

/// Output root: explicit path, else `$NMWIGNER_OUT`, else `./out`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub stage: Stage,
    pub output_root: PathBuf,
}

#[derive(Clone, Debug)]
pub struct WignerDump {
    pub time: f64,
    pub path: PathBuf,
    pub integral: f64,
}

/// Everything a run produced. Files are already on disk.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub name: String,
    pub stage: Stage,
    pub output_dir: PathBuf,
    pub schedule: DampingSchedule,
    pub trajectory: Option<Trajectory>,
    pub negativity: Option<NegativityTrace>,
    pub wigner: Vec<WignerDump>,
    pub dn: Option<f64>,
    pub branch_overlap: Option<C64>,
    pub runtime_s: f64,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    stage: Stage,
    dn: Option<f64>,
    runtime_s: f64,
    version: &'static str,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch_overlap: Option<[f64; 2]>,
    schedule_changes_sign: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_negativity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_normalization_defect: Option<f64>,
    files: Vec<String>,
}

fn write_file(
    dir: &Path,
    name: &str,
    files: &mut Vec<PathBuf>,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    files.push(path.clone());
    Ok(path)
}

fn initial_state(s: &Scenario) -> Result<(Operator, Option<C64>)> {
    match &s.state {
        StateSpec::Bell => Ok((bell_state().into_op(), None)),
        StateSpec::QubitScs {
            alpha1,
            xi1,
            alpha2,
            xi2,
            cutoff,
        } => {
            let st = qubit_scs_state(
                (*alpha1).into(),
                (*xi1).into(),
                (*alpha2).into(),
                (*xi2).into(),
                *cutoff,
            )?;
            Ok((st.density.into_op(), Some(st.branch_overlap)))
        }
    }
}

/// Runs a scenario up to `opts.stage` and writes its files to
/// `<output_root>/<outputs.dir or name>`.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<ScenarioResult> {
    let start = Instant::now();
    s.validate().map_err(|e| e.in_stage("config"))?;
    let echo = s.to_toml()?;
    let config_hash = s.config_hash()?;
    let dir = opts.output_root.join(
        s.outputs
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(&s.name)),
    );
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    write_file(&dir, "scenario.toml", &mut files, |w| {
        Ok(w.write_all(echo.as_bytes())?)
    })?;

    let spec = s.hilbert_spec()?;
    let (rho0, branch_overlap) = initial_state(s).map_err(|e| e.in_stage("state"))?;

    // half-step grid: every RK4 stage time is a node
    let schedule = TimeGrid::covering(s.time.t_max, 0.5 * s.time.dt)
        .and_then(|grid| build_schedule(&s.bath, s.coeffs, grid, &QuadratureConfig::default()))
        .map_err(|e| e.in_stage("rates"))?;
    write_file(&dir, "schedule.csv", &mut files, |w| schedule.write_csv(w))?;

    let mut trajectory = None;
    let mut negativity = None;
    let mut wigner = Vec::new();
    let mut dn = None;
    let mut max_defect = None;

    if opts.stage >= Stage::Evolve {
        let schedule = Arc::new(schedule.clone());
        let channel = Channel::new(s.channel.kind, s.channel.target, &spec, schedule)
            .map_err(|e| e.in_stage("evolve"))?;
        let hamiltonian = Operator::zeros(spec.total_dim());
        let traj = evolve(&rho0, &hamiltonian, &[channel], &s.time.into())
            .map_err(|e| e.in_stage("evolve"))?;
        if opts.stage == Stage::Evolve {
            write_file(&dir, "trajectory.csv", &mut files, |w| traj.write_csv(w))?;
        }
        trajectory = Some(traj);
    }

    if opts.stage >= Stage::Wigner {
        let traj = trajectory.as_ref().expect("evolve stage ran");
        let grid = PhaseSpaceGrid::for_spec(&spec, &s.grid).map_err(|e| e.in_stage("wigner"))?;
        let cache = build_cache(&spec, Arc::new(grid)).map_err(|e| e.in_stage("wigner"))?;

        let mut times = s.outputs.wigner_times.clone();
        if times.is_empty() && opts.stage == Stage::Wigner {
            times = vec![0.0, s.time.t_max];
        }
        for t in times {
            let k = traj.nearest(t).expect("trajectory is never empty");
            let field =
                wigner_evaluate(&traj.states[k], &cache).map_err(|e| e.in_stage("wigner"))?;
            let field = match spec.subsystems() {
                [Subsystem::Qubit, Subsystem::Mode { .. }] => reduce_photonic(&field)?,
                _ => field,
            };
            let time = traj.times[k];
            let integral = field.integral();
            let path = write_file(&dir, &format!("wigner_t{time:.4}.csv"), &mut files, |w| {
                field.write_csv(w)
            })?;
            wigner.push(WignerDump {
                time,
                path,
                integral,
            });
        }

        if opts.stage == Stage::Measure {
            let trace = nv_trace(traj, &cache).map_err(|e| e.in_stage("measure"))?;
            dn = Some(nonmarkovianity_degree(&trace).map_err(|e| e.in_stage("measure"))?);
            max_defect = Some(trace.max_quad_tol());
            write_file(&dir, "negativity.csv", &mut files, |w| trace.write_csv(w))?;
            negativity = Some(trace);
        }
    }

    let runtime_s = start.elapsed().as_secs_f64();
    let summary = Summary {
        name: &s.name,
        stage: opts.stage,
        dn,
        runtime_s,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: &config_hash,
        branch_overlap: branch_overlap.map(|z| [z.re, z.im]),
        schedule_changes_sign: schedule.changes_sign(),
        final_negativity: negativity.as_ref().and_then(|n| n.values.last().copied()),
        max_normalization_defect: max_defect,
        files: files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|f| f.to_string_lossy().into_owned())
            .collect(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir, "result.json", &mut files, |w| {
        Ok(writeln!(w, "{json}")?)
    })?;

    Ok(ScenarioResult {
        name: s.name.clone(),
        stage: opts.stage,
        output_dir: dir,
        schedule,
        trajectory,
        negativity,
        wigner,
        dn,
        branch_overlap,
        runtime_s,
        config_hash,
        files,
    })
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*]
    };
}

/// Scenario files shipped with the crate, keyed by file stem.
pub const BUNDLED: &[(&str, &str)] = bundled![
    "fig1a_blue",
    "fig1a_orange",
    "fig1a_green",
    "fig1b_blue",
    "fig1b_orange",
    "fig1b_green",
    "fig2a_blue",
    "fig2a_orange",
    "fig2a_green",
    "fig2b_blue",
    "fig2b_orange",
    "fig2b_green",
    "fig3_phase",
    "fig3_amplitude",
    "fig4a_blue",
    "fig4a_orange",
    "fig4a_orange_delta5",
    "fig4a_green",
    "fig4b_blue",
    "fig4b_orange",
    "fig4b_orange_delta5",
    "fig4b_green",
    "fig5a_blue",
    "fig5a_orange",
    "fig5a_green",
    "fig5b_blue",
    "fig5b_orange",
    "fig5b_green",
];

/// Figure ids accepted by [`figure_scenarios`].
pub const FIGURES: &[&str] = &["fig1a", "fig1b", "fig2a", "fig2b", "fig3", "fig4", "fig5"];

/// Text of a bundled scenario by file stem.
pub fn bundled_scenario(stem: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, t)| *t)
}

/// Bundled scenarios for a figure id, and the stage that reproduces it.
pub fn figure_scenarios(figure: &str) -> Option<(Vec<(&'static str, &'static str)>, Stage)> {
    if !FIGURES.contains(&figure) {
        return None;
    }
    let list = BUNDLED
        .iter()
        .filter(|(n, _)| n.starts_with(figure))
        .copied()
        .collect();
    let stage = if figure.starts_with("fig1") {
        Stage::Rates
    } else {
        Stage::Measure
    };
    Some((list, stage))
}
