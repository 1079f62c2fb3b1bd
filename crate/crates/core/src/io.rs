//! Run configuration, artifact files and the run manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::control::{ControlBoundReport, HumConfig, WeightSpec};
use crate::dynamics::{energy_report, ControlMask, ControlSignal, TimeGrid, Trajectory};
use crate::error::{config_err, Error, Result};
use crate::filter::FilterParams;
use crate::nonlinear::{FixedPointConfig, DEFAULT_SMALLNESS};
use crate::spectral::{build_basis, sobolev_norm, Basis, SpectralField, WaveVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub k_max: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 16, k_max: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub alpha: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { alpha: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    /// `[x0, x1, y0, y1]`
    pub rect: [f64; 4],
    pub rolloff: f64,
    pub epsilon: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub weights: WeightSpec,
}

impl Default for ControlSection {
    fn default() -> Self {
        let h = HumConfig::default();
        Self {
            rect: [0.0, std::f64::consts::PI, 0.0, std::f64::consts::PI],
            rolloff: 0.0,
            epsilon: h.epsilon,
            cg_tol: h.cg_tol,
            cg_max: h.cg_max,
            weights: h.weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSection {
    pub max_iters: usize,
    pub fp_tol: f64,
    pub relaxation: f64,
    pub sigma: f64,
    pub ball: f64,
    pub smallness: f64,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        let f = FixedPointConfig::default();
        Self {
            max_iters: f.max_iters,
            fp_tol: f.fp_tol,
            relaxation: f.relaxation,
            sigma: f.sigma,
            ball: f.ball,
            smallness: f.smallness,
        }
    }
}

/// Named initial-condition generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// `amplitude · w_k`
    SingleMode {
        k: [i32; 2],
        amplitude: f64,
    },
    /// Modes `(1, 0)` and `(1, 1)` with equal weight, scaled to norm `amplitude`.
    TwoMode {
        amplitude: f64,
    },
    /// Uniform random coefficients on `k_band[0] ≤ |k| ≤ k_band[1]`, scaled
    /// to norm `amplitude`.
    RandomBand {
        seed: u64,
        k_band: [f64; 2],
        amplitude: f64,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::TwoMode { amplitude: 0.1 }
    }
}

impl InitialCondition {
    pub fn build(&self, basis: &Arc<Basis>) -> Result<SpectralField> {
        match *self {
            InitialCondition::Zero => Ok(SpectralField::zeros(basis)),
            InitialCondition::SingleMode { k, amplitude } => {
                SpectralField::single_mode(basis, WaveVector::new(k[0], k[1]), amplitude)
            }
            InitialCondition::TwoMode { amplitude } => {
                let a = SpectralField::single_mode(basis, WaveVector::new(1, 0), 1.0)?;
                let b = SpectralField::single_mode(basis, WaveVector::new(1, 1), 1.0)?;
                Ok(a.add(&b)
                    .scaled(amplitude * std::f64::consts::FRAC_1_SQRT_2))
            }
            InitialCondition::RandomBand {
                seed,
                k_band,
                amplitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut u = SpectralField::random(basis, &mut rng, 0.0);
                let (lo, hi) = (k_band[0] * k_band[0], k_band[1] * k_band[1]);
                for (c, &lam) in u.coeffs_mut().iter_mut().zip(basis.eigenvalues()) {
                    if lam < lo || lam > hi {
                        *c = 0.0;
                    }
                }
                let n = u.norm();
                if n == 0.0 {
                    return Err(config_err(
                        "initial_condition.k_band",
                        "no retained mode in the band",
                    ));
                }
                Ok(u.scaled(amplitude / n))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let amplitude = match *self {
            InitialCondition::Zero => 0.0,
            InitialCondition::SingleMode { amplitude, .. }
            | InitialCondition::TwoMode { amplitude } => amplitude,
            InitialCondition::RandomBand {
                k_band, amplitude, ..
            } => {
                if !(k_band[0] >= 0.0 && k_band[1] >= k_band[0]) {
                    return Err(config_err(
                        "initial_condition.k_band",
                        "need 0 <= k_band[0] <= k_band[1]",
                    ));
                }
                amplitude
            }
        };
        if !amplitude.is_finite() {
            return Err(config_err(
                "initial_condition.amplitude",
                "amplitude must be finite",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Any of `"csv"`, `"binary"`, `"json"`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("lal-output"),
            formats: vec!["csv".into(), "binary".into(), "json".into()],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.4, 0.2, 0.1, 0.05, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeTimeSection {
    pub threshold: f64,
    pub max_coast: f64,
}

impl Default for LargeTimeSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_SMALLNESS,
            max_coast: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSection {
    /// Initial state `ŷ0` of the uncontrolled target trajectory.
    pub target: InitialCondition,
}

impl Default for TrackSection {
    fn default() -> Self {
        Self {
            target: InitialCondition::SingleMode {
                k: [1, 0],
                amplitude: 0.1,
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub physics: PhysicsSection,
    pub control: ControlSection,
    pub fixed_point: FixedPointSection,
    pub initial_condition: InitialCondition,
    pub output: OutputSection,
    pub sweep: SweepSection,
    pub large_time: LargeTimeSection,
    pub track: TrackSection,
}

/// Objects whose key set depends on a `kind` tag; serde checks them.
const TAGGED: [&str; 3] = ["initial_condition", "control.weights", "track.target"];

fn check_keys(value: &Value, reference: &Value, path: &str) -> Result<()> {
    let (Value::Object(map), Value::Object(known)) = (value, reference) else {
        return Ok(());
    };
    for (key, sub) in map {
        let full = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match known.get(key) {
            Some(r) => {
                if !TAGGED.contains(&full.as_str()) {
                    check_keys(sub, r, &full)?;
                }
            }
            None => {
                let hint = known
                    .keys()
                    .map(|k| (strsim::levenshtein(k, key), k))
                    .min()
                    .filter(|(d, _)| *d <= 3)
                    .map(|(_, k)| {
                        format!(
                            "; did you mean `{}`?",
                            if path.is_empty() {
                                k.clone()
                            } else {
                                format!("{path}.{k}")
                            }
                        )
                    })
                    .unwrap_or_default();
                return Err(config_err(&full, format!("unknown key{hint}")));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses JSON text, rejecting unknown keys and re-validating every
    /// cross-field constraint.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let reference = serde_json::to_value(RunConfig::default())?;
        check_keys(&value, &reference, "")?;
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let basis = self.basis()?;
        self.time_grid()?;
        self.filter()?;
        self.hum().validate()?;
        self.fixed_point().validate()?;
        self.mask()?;
        self.initial_condition.validate()?;
        self.initial_condition.build(&basis)?;
        self.track.target.validate()?;
        self.track.target.build(&basis)?;
        for f in &self.output.formats {
            if !["csv", "binary", "json"].contains(&f.as_str()) {
                return Err(config_err(
                    "output.formats",
                    format!("unknown format `{f}`"),
                ));
            }
        }
        for &a in &self.sweep.alphas {
            if !(a.is_finite() && a >= 0.0) {
                return Err(config_err("sweep.alphas", format!("invalid α {a}")));
            }
        }
        if !(self.large_time.max_coast > 0.0) {
            return Err(config_err(
                "large_time.max_coast",
                "coasting horizon must be positive",
            ));
        }
        if !(self.large_time.threshold > 0.0
            && self.large_time.threshold <= self.fixed_point.smallness)
        {
            return Err(config_err(
                "large_time.threshold",
                "threshold must be positive and at most fixed_point.smallness",
            ));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        build_basis(self.grid.n, self.grid.k_max)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_final, self.time.steps)
    }

    pub fn filter(&self) -> Result<FilterParams> {
        FilterParams::new(self.physics.alpha)
    }

    pub fn mask(&self) -> Result<ControlMask> {
        ControlMask::rectangle(self.grid.n, self.control.rect, self.control.rolloff)
    }

    pub fn hum(&self) -> HumConfig {
        HumConfig {
            epsilon: self.control.epsilon,
            cg_tol: self.control.cg_tol,
            cg_max: self.control.cg_max,
            weights: self.control.weights,
        }
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        let f = &self.fixed_point;
        FixedPointConfig {
            max_iters: f.max_iters,
            fp_tol: f.fp_tol,
            relaxation: f.relaxation,
            hum: self.hum(),
            ball: f.ball,
            sigma: f.sigma,
            smallness: f.smallness,
        }
    }
}

/// Reads and validates a JSON configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_json(&text)
}

/// `t, l2_norm, v_norm, da_norm, energy_residual`; the residual of the
/// last row (no following step) is `nan`.
pub fn trajectory_csv(tr: &Trajectory, v: Option<&ControlSignal>, p: FilterParams) -> String {
    let report = energy_report(tr, v, p);
    let g = tr.grid();
    let mut s = String::from("t,l2_norm,v_norm,da_norm,energy_residual\n");
    for (n, y) in tr.states().iter().enumerate() {
        let r = report.balance_residual.get(n).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            g.time(n),
            y.norm(),
            sobolev_norm(y, 1.0),
            sobolev_norm(y, 2.0),
            r
        );
    }
    s
}

/// `t, l2_norm` of the control samples.
pub fn control_csv(v: &ControlSignal) -> String {
    let g = v.grid();
    let mut s = String::from("t,l2_norm\n");
    for (n, x) in v.samples().iter().enumerate() {
        let _ = writeln!(s, "{:.16e},{:.16e}", g.time(n), x.l2_norm());
    }
    s
}

fn le_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

/// Coefficients as little-endian `f64`, time-major, plus a JSON sidecar.
pub fn trajectory_binary(tr: &Trajectory) -> (Vec<u8>, Value) {
    let g = tr.grid();
    let basis = tr.basis();
    let bytes = le_bytes(tr.states().iter().flat_map(|s| s.coeffs().iter().copied()));
    let modes: Vec<[i32; 2]> = basis.modes().iter().map(|k| [k.k1, k.k2]).collect();
    let sidecar = serde_json::json!({
        "dtype": "f64-le",
        "layout": "[time][mode]",
        "shape": [g.len(), basis.len()],
        "t_final": g.t_final(),
        "steps": g.steps(),
        "grid_size": basis.grid_size(),
        "modes": modes,
        "basis": "w_k = sqrt(2) cos(k.x) e(k) for upper k, sqrt(2) sin(k.x) e(k) for lower k",
    });
    (bytes, sidecar)
}

/// Grid samples as little-endian `f64`, `[time][component][j1][j2]`.
pub fn control_binary(v: &ControlSignal) -> (Vec<u8>, Value) {
    let g = v.grid();
    let n = v.mask().n();
    let bytes = le_bytes(v.samples().iter().flat_map(|s| s.data().iter().copied()));
    let sidecar = serde_json::json!({
        "dtype": "f64-le",
        "layout": "[time][component][j1][j2]",
        "shape": [g.len(), 2, n, n],
        "t_final": g.t_final(),
        "steps": g.steps(),
        "mask": v.mask().values(),
    });
    (bytes, sidecar)
}

/// `{epsilon, cg_iters, terminal_norm, cost, fitted_K}`.
pub fn control_record(
    epsilon: f64,
    cg_iters: usize,
    terminal_norm: f64,
    cost: f64,
    bound: &ControlBoundReport,
) -> Value {
    let mut v = serde_json::json!({
        "epsilon": epsilon,
        "cg_iters": cg_iters,
        "terminal_norm": terminal_norm,
        "cost": cost,
    });
    v["fitted_K"] = serde_json::to_value(bound).expect("report serializes")["fitted_k"].clone();
    v
}

/// Per-run record of the nonlinear control loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    pub epsilon: f64,
    pub iters: usize,
    pub converged: bool,
    pub terminal_norm: f64,
    pub control_linf_l2: f64,
    pub sigma_ball_max: f64,
    #[serde(rename = "T0")]
    pub t0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub threads: Option<usize>,
    pub files: Vec<FileEntry>,
    pub records: Vec<Value>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes artifacts into one directory; every file is written atomically
/// and hashed, and [`ArtifactWriter::finish`] writes the manifest last.
pub struct ArtifactWriter {
    dir: PathBuf,
    started: String,
    files: Vec<FileEntry>,
    records: Vec<Value>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            started: chrono::Utc::now().to_rfc3339(),
            files: Vec::new(),
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_atomic(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Adds a summary record to the manifest.
    pub fn record(&mut self, value: impl Serialize) -> Result<()> {
        self.records.push(serde_json::to_value(value)?);
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        threads: Option<usize>,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: chrono::Utc::now().to_rfc3339(),
            threads,
            files: self.files,
            records: self.records,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

/// Recomputes every hash listed in a manifest; returns the mismatching paths.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter(|f| match std::fs::read(dir.join(&f.path)) {
            Ok(bytes) => hex::encode(Sha256::digest(&bytes)) != f.sha256,
            Err(_) => true,
        })
        .map(|f| f.path.clone())
        .collect()
}

/// Trajectory and (optionally) control artifacts for one run, per the
/// configured formats. `stem` prefixes every file name.
pub fn write_run_artifacts(
    w: &mut ArtifactWriter,
    cfg: &RunConfig,
    stem: &str,
    tr: &Trajectory,
    v: Option<&ControlSignal>,
) -> Result<()> {
    let p = cfg.filter()?;
    if cfg.output.wants("csv") {
        w.write_text(&format!("{stem}trajectory.csv"), &trajectory_csv(tr, v, p))?;
        if let Some(v) = v {
            w.write_text(&format!("{stem}control.csv"), &control_csv(v))?;
        }
    }
    if cfg.output.wants("binary") {
        let (bytes, sidecar) = trajectory_binary(tr);
        w.write_bytes(&format!("{stem}trajectory.bin"), &bytes)?;
        w.write_json(&format!("{stem}trajectory.bin.json"), &sidecar)?;
        if let Some(v) = v {
            let (bytes, sidecar) = control_binary(v);
            w.write_bytes(&format!("{stem}control.bin"), &bytes)?;
            w.write_json(&format!("{stem}control.bin.json"), &sidecar)?;
        }
    }
    Ok(())
}
