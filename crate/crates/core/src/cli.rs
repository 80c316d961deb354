//! Command-line front end and the end-to-end pipeline.
//!
//! Every subcommand resolves a [`RunConfig`]: defaults, then an optional
//! `key = value` config file, then explicit flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use sha2::{Digest, Sha256};

use crate::curve::{discounts_from_forwards, read_curve_csv, write_curve_csv, DiscountCurve, ForwardCurve, TimeGrid};
use crate::engine::{SimConfig, SimInputs, SimMode, StrikeFallback, VolModel};
use crate::error::{Error, Result};
use crate::localvol::{LocalVolSurface, LvParams};
use crate::market::{fixtures, read_surface_csv, write_surface_csv, OptionKind, QuoteSurface};
use crate::pricer::{
    comparison_report, price_ensemble, write_report_csv, write_results_csv, AtmReading, EnsembleResult, SwaptionSpec,
};
use crate::smallvol::{calibrate_surface, read_grid_csv, write_grid_csv, Calibration, CalibrationOptions, PvWeight, RootChoice};
use crate::smile::{eval_smile, SmileKnots};

/// Default output directory when neither the config nor a flag sets one.
pub const OUT_DIR_ENV: &str = "HJM_LV_OUT_DIR";

/// A pipeline failure tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("stage '{stage}' failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

trait InStage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

type StageResult<T> = std::result::Result<T, StageError>;

/// Fully resolved settings of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Curve and surface CSVs; when either is missing the fixtures are generated.
    pub curve: Option<PathBuf>,
    pub surface: Option<PathBuf>,
    pub fixture_seed: u64,
    pub out_dir: PathBuf,

    pub dt: f64,
    /// Length of the forward curve and vol grids.
    pub grid_horizon: f64,
    /// Calendar span of the local-vol surface.
    pub lv_horizon: f64,

    pub mode: SimMode,
    pub n_paths: usize,
    pub seed: u64,
    pub cutoff: Option<f64>,
    pub antithetic: bool,
    pub workers: usize,
    pub batch_size: usize,

    pub interpolated_input: bool,
    pub root: RootChoice,
    pub pv_weight: PvWeight,
    pub payment_interval: f64,
    pub atm_reading: AtmReading,

    pub x0: f64,
    pub x_d: f64,
    pub x_u: f64,
    pub d_min: f64,
    pub w_floor: f64,
    pub v_min: f64,
    pub v_max: f64,

    /// Priced offsets; empty means every quoted offset.
    pub offsets: Vec<f64>,
    /// Priced expiries and tenors; empty means every quoted one that fits.
    pub expiries: Vec<f64>,
    pub tenors: Vec<f64>,
    pub bond_maturities: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::<f64>::default();
        let knots = SmileKnots::<f64>::default();
        let lv = LvParams::<f64>::default();
        Self {
            curve: None,
            surface: None,
            fixture_seed: 0,
            out_dir: std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
            dt: sim.dt,
            grid_horizon: 50.0,
            lv_horizon: 30.0,
            mode: sim.mode,
            n_paths: sim.n_paths,
            seed: sim.seed,
            cutoff: sim.long_expiry_cutoff,
            antithetic: sim.antithetic,
            workers: sim.workers,
            batch_size: sim.batch_size,
            interpolated_input: false,
            root: RootChoice::Larger,
            pv_weight: PvWeight::Strike,
            payment_interval: 1.0,
            atm_reading: AtmReading::Forward,
            x0: knots.x0,
            x_d: knots.xd,
            x_u: knots.xu,
            d_min: lv.d_min,
            w_floor: lv.w_floor,
            v_min: lv.v_min,
            v_max: lv.v_max,
            offsets: Vec::new(),
            expiries: Vec::new(),
            tenors: Vec::new(),
            bond_maturities: vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0],
        }
    }
}

fn parse<V: FromStr>(key: &str, v: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = '{v}': expected true or false"))),
    }
}

fn parse_cutoff(key: &str, v: &str) -> Result<Option<f64>> {
    match v {
        "none" | "off" => Ok(None),
        _ => parse(key, v).map(Some),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "curve" => self.curve = Some(PathBuf::from(v)),
            "surface" => self.surface = Some(PathBuf::from(v)),
            "fixture_seed" => self.fixture_seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "dt" => self.dt = parse(key, v)?,
            "grid_horizon" => self.grid_horizon = parse(key, v)?,
            "lv_horizon" => self.lv_horizon = parse(key, v)?,
            "mode" => self.mode = parse(key, v)?,
            "paths" => self.n_paths = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "cutoff" => self.cutoff = parse_cutoff(key, v)?,
            "antithetic" => self.antithetic = parse_bool(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "interpolated_input" => self.interpolated_input = parse_bool(key, v)?,
            "root" => {
                self.root = match v {
                    "larger" => RootChoice::Larger,
                    "smaller" => RootChoice::Smaller,
                    _ => return Err(Error::Config(format!("root = '{v}': expected larger or smaller"))),
                }
            }
            "pv_weight" => self.pv_weight = parse(key, v)?,
            "payment_interval" => self.payment_interval = parse(key, v)?,
            "atm_reading" => {
                self.atm_reading = match v {
                    "forward" => AtmReading::Forward,
                    "path" => AtmReading::Path,
                    _ => return Err(Error::Config(format!("atm_reading = '{v}': expected forward or path"))),
                }
            }
            "x0" => self.x0 = parse(key, v)?,
            "x_d" => self.x_d = parse(key, v)?,
            "x_u" => self.x_u = parse(key, v)?,
            "d_min" => self.d_min = parse(key, v)?,
            "w_floor" => self.w_floor = parse(key, v)?,
            "v_min" => self.v_min = parse(key, v)?,
            "v_max" => self.v_max = parse(key, v)?,
            "offsets" => self.offsets = parse_list(key, v)?,
            "expiries" => self.expiries = parse_list(key, v)?,
            "tenors" => self.tenors = parse_list(key, v)?,
            "bond_maturities" => self.bond_maturities = parse_list(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses the flat config format: `key = value` per line, `#` comments.
    pub fn parse_str(text: &str, mut base: RunConfig) -> Result<RunConfig> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            base.set(k.trim(), v.trim().trim_matches('"'))
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(base)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, RunConfig::default())
    }

    /// Canonical `key = value` rendering; parsing it back gives the same config.
    pub fn render(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        if let Some(c) = &self.curve {
            m.insert("curve", c.display().to_string());
        }
        if let Some(s) = &self.surface {
            m.insert("surface", s.display().to_string());
        }
        m.insert("fixture_seed", self.fixture_seed.to_string());
        m.insert("out_dir", self.out_dir.display().to_string());
        m.insert("dt", self.dt.to_string());
        m.insert("grid_horizon", self.grid_horizon.to_string());
        m.insert("lv_horizon", self.lv_horizon.to_string());
        m.insert(
            "mode",
            match self.mode {
                SimMode::ConstantVol => "const",
                SimMode::LocalVol => "lv",
            }
            .into(),
        );
        m.insert("paths", self.n_paths.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("cutoff", self.cutoff.map_or("none".into(), |c| c.to_string()));
        m.insert("antithetic", self.antithetic.to_string());
        m.insert("workers", self.workers.to_string());
        m.insert("batch_size", self.batch_size.to_string());
        m.insert("interpolated_input", self.interpolated_input.to_string());
        m.insert(
            "root",
            match self.root {
                RootChoice::Larger => "larger",
                RootChoice::Smaller => "smaller",
            }
            .into(),
        );
        m.insert(
            "pv_weight",
            match self.pv_weight {
                PvWeight::Strike => "strike",
                PvWeight::Atm => "atm",
            }
            .into(),
        );
        m.insert("payment_interval", self.payment_interval.to_string());
        m.insert(
            "atm_reading",
            match self.atm_reading {
                AtmReading::Forward => "forward",
                AtmReading::Path => "path",
            }
            .into(),
        );
        m.insert("x0", self.x0.to_string());
        m.insert("x_d", self.x_d.to_string());
        m.insert("x_u", self.x_u.to_string());
        m.insert("d_min", self.d_min.to_string());
        m.insert("w_floor", self.w_floor.to_string());
        m.insert("v_min", self.v_min.to_string());
        m.insert("v_max", self.v_max.to_string());
        m.insert("offsets", fmt_list(&self.offsets));
        m.insert("expiries", fmt_list(&self.expiries));
        m.insert("tenors", fmt_list(&self.tenors));
        m.insert("bond_maturities", fmt_list(&self.bond_maturities));
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn knots(&self) -> Result<SmileKnots<f64>> {
        SmileKnots::new(self.x0, self.x_d, self.x_u)
    }

    pub fn lv_params(&self) -> LvParams<f64> {
        LvParams {
            d_min: self.d_min,
            w_floor: self.w_floor,
            v_min: self.v_min,
            v_max: self.v_max,
        }
    }

    pub fn sim_config(&self) -> SimConfig<f64> {
        SimConfig {
            n_paths: self.n_paths,
            dt: self.dt,
            seed: self.seed,
            mode: self.mode,
            long_expiry_cutoff: self.cutoff,
            antithetic: self.antithetic,
            workers: self.workers,
            batch_size: self.batch_size,
        }
    }

    pub fn calibration_options(&self) -> CalibrationOptions<f64> {
        CalibrationOptions {
            interpolated_input: self.interpolated_input,
            root: self.root,
            payment_interval: self.payment_interval,
            pv_weight: self.pv_weight,
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::covering(self.dt, self.grid_horizon)
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lv_horizon > 0.0 && self.lv_horizon <= self.grid_horizon) {
            return Err(Error::Config("lv_horizon must lie in (0, grid_horizon]".into()));
        }
        self.knots()
            .map_err(|e| Error::Config(format!("smile knots: {e}")))?;
        if !(0.0 < self.d_min && 0.0 < self.v_min && self.v_min < self.v_max && 0.0 < self.w_floor) {
            return Err(Error::Config("need d_min > 0, w_floor > 0 and 0 < v_min < v_max".into()));
        }
        let g = self.time_grid()?;
        g.steps_in(self.payment_interval)?;
        g.steps_in(self.lv_horizon)?;
        for t in &self.bond_maturities {
            if *t > self.lv_horizon && self.mode == SimMode::LocalVol {
                return Err(Error::Config(format!("bond maturity {t} beyond lv_horizon")));
            }
            g.index_of(*t)?;
        }
        for p in [&self.curve, &self.surface].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.curve.is_some() != self.surface.is_some() {
            return Err(Error::Config("curve and surface must be given together".into()));
        }
        Ok(())
    }

    /// Stage plan printed by `--dry-run`.
    pub fn plan(&self) -> Vec<String> {
        let mut s = Vec::new();
        if self.curve.is_none() {
            s.push(format!("fixtures: seed {}, write curve.csv and surface.csv", self.fixture_seed));
        } else {
            s.push("inputs: read curve and surface".into());
        }
        s.push(format!(
            "calibrate: bootstrap per offset ({}, pv weight {:?}) -> grid.csv",
            if self.interpolated_input { "interpolated input" } else { "quoted expiries" },
            self.pv_weight
        ));
        if self.mode == SimMode::LocalVol {
            s.push(format!(
                "localvol: variance grid, smile fits and local vols over {}y",
                self.lv_horizon
            ));
        }
        s.push(format!(
            "simulate: {:?}, {} paths, seed {}, cutoff {}",
            self.mode,
            self.n_paths,
            self.seed,
            self.cutoff.map_or("none".into(), |c| format!("{c}y"))
        ));
        s.push("price: results.csv, bonds.csv".into());
        s.push("report: report.csv".into());
        s.push("manifest: manifest.txt".into());
        s
    }
}

/// Market inputs on the common time grid.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub grid: TimeGrid<f64>,
    pub curve: ForwardCurve<f64>,
    pub disc: DiscountCurve<f64>,
    pub surface: QuoteSurface<f64>,
}

pub fn load_inputs(cfg: &RunConfig) -> StageResult<Inputs> {
    let grid = cfg.time_grid().stage("inputs")?;
    let (curve, surface) = match (&cfg.curve, &cfg.surface) {
        (Some(c), Some(s)) => (
            read_curve_csv(c, &grid).stage("inputs")?,
            read_surface_csv(s).stage("inputs")?,
        ),
        _ => (fixtures::forward_curve(&grid), fixtures::surface(cfg.fixture_seed)),
    };
    for v in surface.calendar_violations() {
        warn!("calendar arbitrage in input: {v:?}");
    }
    let disc = discounts_from_forwards(&curve, &grid).stage("inputs")?;
    Ok(Inputs {
        grid,
        curve,
        disc,
        surface,
    })
}

pub fn calibrate(cfg: &RunConfig, inputs: &Inputs) -> StageResult<Calibration<f64>> {
    let cal = calibrate_surface(&inputs.surface, &inputs.disc, &inputs.grid, &cfg.calibration_options())
        .stage("calibrate")?;
    info!(
        "calibrated {} offsets, last market row {}",
        cal.offsets.len(),
        cal.last_calibrated_row
    );
    Ok(cal)
}

pub fn build_local_vol(cfg: &RunConfig, inputs: &Inputs, cal: &Calibration<f64>) -> StageResult<LocalVolSurface<f64>> {
    let rows = inputs.grid.steps_in(cfg.lv_horizon).stage("localvol")?;
    let knots = cfg.knots().stage("localvol")?;
    LocalVolSurface::from_calibration(cal, cfg.dt, rows, knots, cfg.lv_params()).stage("localvol")
}

/// Swaptions priced by default: every quote that fits the simulated horizon.
pub fn pricing_specs(cfg: &RunConfig, inputs: &Inputs) -> Vec<SwaptionSpec<f64>> {
    let pick = |sel: &[f64], quoted: &[f64]| if sel.is_empty() { quoted.to_vec() } else { sel.to_vec() };
    let offsets = pick(&cfg.offsets, inputs.surface.offsets());
    let expiries = pick(&cfg.expiries, inputs.surface.expiries());
    let tenors = pick(&cfg.tenors, inputs.surface.tenors());
    let sim_horizon = match cfg.mode {
        SimMode::LocalVol => cfg.lv_horizon,
        SimMode::ConstantVol => inputs.grid.horizon(),
    };
    let mut specs = Vec::new();
    for &e in &expiries {
        for &t in &tenors {
            if e > sim_horizon + 1e-9 || e + t > inputs.grid.horizon() + 1e-9 {
                continue;
            }
            for &x in &offsets {
                let mut s = SwaptionSpec::otm(e, t, x);
                s.payment_interval = cfg.payment_interval;
                specs.push(s);
            }
        }
    }
    specs
}

pub fn simulate_and_price(
    cfg: &RunConfig,
    inputs: &Inputs,
    cal: &Calibration<f64>,
    lv: Option<&LocalVolSurface<f64>>,
    specs: &[SwaptionSpec<f64>],
) -> StageResult<EnsembleResult<f64>> {
    let model = match (cfg.mode, lv) {
        (SimMode::LocalVol, Some(lv)) => VolModel::Local(lv),
        (SimMode::LocalVol, None) => {
            return Err(StageError {
                stage: "simulate",
                source: Error::InvalidInput("local-vol mode without a local-vol surface".into()),
            })
        }
        (SimMode::ConstantVol, _) => VolModel::Constant(cal.atm()),
    };
    let fallback = match cfg.cutoff {
        Some(c) => Some(
            StrikeFallback::new(&inputs.grid, c, inputs.surface.tenors(), cfg.payment_interval).stage("simulate")?,
        ),
        None => None,
    };
    let sim_inputs = SimInputs {
        grid: inputs.grid,
        base: &inputs.curve,
        model,
        fallback,
    };
    let bonds: Vec<f64> = cfg
        .bond_maturities
        .iter()
        .copied()
        .filter(|&t| t <= inputs.grid.horizon())
        .collect();
    let started = std::time::Instant::now();
    let r = price_ensemble(&cfg.sim_config(), &sim_inputs, &inputs.disc, specs, &bonds, cfg.atm_reading)
        .stage("simulate")?;
    info!(
        "simulated {} paths for {} swaptions in {:.1}s",
        r.n_paths,
        specs.len(),
        started.elapsed().as_secs_f64()
    );
    if cfg.mode == SimMode::LocalVol {
        let rows_2y = inputs.grid.index_of(2.0).unwrap_or(0);
        info!(
            "local-vol clamp rate: {:.4}% overall, {:.4}% from 2y",
            100.0 * r.lv_stats.clamp_rate_from(0),
            100.0 * r.lv_stats.clamp_rate_from(rows_2y)
        );
    }
    for b in &r.bonds {
        info!("bond {}y: z = {:.2}", b.maturity, b.z_score());
    }
    Ok(r)
}

pub fn write_bonds_csv(path: &Path, r: &EnsembleResult<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["maturity", "mc_mean", "mc_stderr", "market", "z_score"])
        .map_err(|e| Error::csv(path, e))?;
    for b in &r.bonds {
        w.write_record([
            b.maturity.to_string(),
            b.mc_mean.to_string(),
            b.std_error.to_string(),
            b.market.to_string(),
            b.z_score().to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Content hash in git's object framing (`blob <len>\0` + bytes), SHA-256 flavour.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn file_hash(path: &Path) -> Result<String> {
    fs::read(path)
        .map(|b| content_hash(&b))
        .map_err(|e| Error::io(path, e))
}

/// Artifacts of a finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub files: Vec<(String, PathBuf)>,
    pub manifest: PathBuf,
}

/// Runs every stage and writes the artifacts into `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<RunArtifacts> {
    cfg.validate().stage("config")?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e)).stage("config")?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    let mut inputs_used: Vec<(String, PathBuf)> = Vec::new();

    let inputs = load_inputs(cfg)?;
    match (&cfg.curve, &cfg.surface) {
        (Some(c), Some(s)) => {
            inputs_used.push(("curve".into(), c.clone()));
            inputs_used.push(("surface".into(), s.clone()));
        }
        _ => {
            let c = out.join("curve.csv");
            let s = out.join("surface.csv");
            write_curve_csv(&c, &inputs.curve, &inputs.grid).stage("fixtures")?;
            write_surface_csv(&s, &inputs.surface).stage("fixtures")?;
            files.push(("curve".into(), c));
            files.push(("surface".into(), s));
        }
    }

    let cal = calibrate(cfg, &inputs)?;
    let grid_path = out.join("grid.csv");
    write_grid_csv(&grid_path, &cal).stage("calibrate")?;
    files.push(("grid".into(), grid_path));

    let lv = match cfg.mode {
        SimMode::LocalVol => Some(build_local_vol(cfg, &inputs, &cal)?),
        SimMode::ConstantVol => None,
    };

    let specs = pricing_specs(cfg, &inputs);
    let r = simulate_and_price(cfg, &inputs, &cal, lv.as_ref(), &specs)?;
    let results = out.join("results.csv");
    write_results_csv(&results, &r.swaptions).stage("price")?;
    files.push(("results".into(), results));
    let bonds = out.join("bonds.csv");
    write_bonds_csv(&bonds, &r).stage("price")?;
    files.push(("bonds".into(), bonds));

    let report = comparison_report(&r.swaptions, &inputs.surface);
    if !report.unmatched.is_empty() {
        warn!("{} priced swaptions have no market quote", report.unmatched.len());
    }
    let report_path = out.join("report.csv");
    write_report_csv(&report_path, &report).stage("report")?;
    files.push(("report".into(), report_path));

    let config_path = out.join("config.txt");
    let rendered = cfg.render();
    fs::write(&config_path, &rendered)
        .map_err(|e| Error::io(&config_path, e))
        .stage("manifest")?;

    let mut m = String::new();
    let _ = writeln!(m, "config_hash = {}", content_hash(rendered.as_bytes()));
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(m, "paths = {}", cfg.n_paths);
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    for (name, p) in &inputs_used {
        let _ = writeln!(m, "input.{name} = {} {}", file_hash(p).stage("manifest")?, p.display());
    }
    for (name, p) in files.iter().chain(std::iter::once(&("config".to_string(), config_path.clone()))) {
        let _ = writeln!(m, "output.{name} = {} {}", file_hash(p).stage("manifest")?, p.display());
    }
    let manifest = out.join("manifest.txt");
    fs::write(&manifest, m).map_err(|e| Error::io(&manifest, e)).stage("manifest")?;
    files.push(("config".into(), config_path));
    Ok(RunArtifacts { files, manifest })
}

/// Plot lattice for smile and local-vol dumps.
pub fn dump_lattice(knots: &SmileKnots<f64>) -> Vec<f64> {
    // 10bp steps from 2% below x_d to 2% above x_u.
    let lo = ((knots.xd - 0.02) * 1e3).floor() as i64;
    let hi = ((knots.xu + 0.02) * 1e3).ceil() as i64;
    (lo..=hi).map(|k| k as f64 / 1e3).collect()
}

pub fn write_smile_dump(path: &Path, lv: &LocalVolSurface<f64>, i: usize, j: usize) -> Result<()> {
    let cube = lv.smiles();
    if i > cube.rows() || j >= cube.buckets() {
        return Err(Error::InvalidInput(format!(
            "slice ({i}, {j}) outside the fitted cube ({} rows, {} buckets)",
            cube.rows(),
            cube.buckets()
        )));
    }
    let fit = cube.get(i, j);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["calendar_index", "maturity_index", "x", "w_fitted"])
        .map_err(|e| Error::csv(path, e))?;
    for x in dump_lattice(&cube.knots()) {
        let (v, _, _) = eval_smile(fit, x);
        w.write_record([i.to_string(), j.to_string(), x.to_string(), v.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lv_dump(path: &Path, lv: &LocalVolSurface<f64>, i: usize, j: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["calendar_index", "maturity_index", "x", "v_local"])
        .map_err(|e| Error::csv(path, e))?;
    for x in dump_lattice(&lv.smiles().knots()) {
        let v = lv.local_vol(i, j, x)?;
        w.write_record([i.to_string(), j.to_string(), x.to_string(), v.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "hjm-lv", version, about = "Local-volatility HJM calibration and swaption Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic curve and swaption surface.
    Fixtures {
        #[arg(long, default_value = "surface.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the fixture forward curve here.
        #[arg(long)]
        curve_out: Option<PathBuf>,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
    },
    /// Bootstrap the forward-vol grid of every quoted offset.
    Calibrate {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, default_value = "grid.csv")]
        out: PathBuf,
        /// Fill targets at every grid expiry from the time-interpolated surface.
        #[arg(long)]
        interpolated_input: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and write per-swaption prices.
    Simulate {
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Price one swaption and print the result.
    Price {
        /// `expiry,tenor,offset` in years and decimals.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value = "payer")]
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Market-versus-model table, or plot dumps of one smile or local-vol slice.
    Report {
        #[arg(long, conflicts_with_all = ["smile", "lv"])]
        all: bool,
        /// `calendar_index,maturity_index`
        #[arg(long, conflicts_with = "lv")]
        smile: Option<String>,
        /// `calendar_index,maturity_index`
        #[arg(long)]
        lv: Option<String>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline from a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Validate and print the stage plan without running.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Flags shared by the subcommands that need a calibrated model.
#[derive(Debug, Args, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "curve-in")]
    pub curve_in: Option<PathBuf>,
    #[arg(long = "surface-in")]
    pub surface_in: Option<PathBuf>,
    /// Reuse a calibrated grid instead of bootstrapping.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<SimMode>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Years, or `none` to disable the long-expiry strike fallback.
    #[arg(long)]
    pub cutoff: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub no_antithetic: bool,
    #[arg(long)]
    pub pv_weight: Option<PvWeight>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.curve_in {
            cfg.curve = Some(p.clone());
        }
        if let Some(p) = &self.surface_in {
            cfg.surface = Some(p.clone());
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = &self.cutoff {
            cfg.cutoff = parse_cutoff("cutoff", c)?;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if self.no_antithetic {
            cfg.antithetic = false;
        }
        if let Some(p) = self.pv_weight {
            cfg.pv_weight = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("'{s}': expected i,j")))?;
    Ok((parse("i", a.trim())?, parse("j", b.trim())?))
}

fn model(cfg: &RunConfig, common: &Common) -> StageResult<(Inputs, Calibration<f64>, Option<LocalVolSurface<f64>>)> {
    let inputs = load_inputs(cfg)?;
    let cal = match &common.grid {
        Some(p) => read_grid_csv(p, inputs.grid.n_steps()).stage("calibrate")?,
        None => calibrate(cfg, &inputs)?,
    };
    let lv = match cfg.mode {
        SimMode::LocalVol => Some(build_local_vol(cfg, &inputs, &cal)?),
        SimMode::ConstantVol => None,
    };
    Ok((inputs, cal, lv))
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> StageResult<()> {
    match cli.command {
        Command::Fixtures {
            out,
            seed,
            curve_out,
            horizon,
        } => {
            write_surface_csv(&out, &fixtures::surface(seed)).stage("fixtures")?;
            if let Some(c) = curve_out {
                let g = TimeGrid::covering(0.25, horizon).stage("fixtures")?;
                write_curve_csv(&c, &fixtures::forward_curve(&g), &g).stage("fixtures")?;
            }
            Ok(())
        }
        Command::Calibrate {
            curve,
            surface,
            out,
            interpolated_input,
            common,
        } => {
            let mut cfg = common.resolve().stage("config")?;
            cfg.curve = Some(curve);
            cfg.surface = Some(surface);
            cfg.interpolated_input |= interpolated_input;
            cfg.validate().stage("config")?;
            let inputs = load_inputs(&cfg)?;
            let cal = calibrate(&cfg, &inputs)?;
            write_grid_csv(&out, &cal).stage("calibrate")
        }
        Command::Simulate { out, common } => {
            let cfg = common.resolve().stage("config")?;
            let (inputs, cal, lv) = model(&cfg, &common)?;
            let specs = pricing_specs(&cfg, &inputs);
            let r = simulate_and_price(&cfg, &inputs, &cal, lv.as_ref(), &specs)?;
            write_results_csv(&out, &r.swaptions).stage("price")
        }
        Command::Price { spec, kind, common } => {
            let cfg = common.resolve().stage("config")?;
            let parts = parse_list("spec", &spec).stage("config")?;
            let [e, t, x] = parts[..] else {
                return Err(StageError {
                    stage: "config",
                    source: Error::Config(format!("--spec '{spec}': expected expiry,tenor,offset")),
                });
            };
            let kind = match kind.as_str() {
                "payer" => OptionKind::Payer,
                "receiver" => OptionKind::Receiver,
                other => {
                    return Err(StageError {
                        stage: "config",
                        source: Error::Config(format!("--kind '{other}': expected payer or receiver")),
                    })
                }
            };
            let (inputs, cal, lv) = model(&cfg, &common)?;
            let mut s = SwaptionSpec::otm(e, t, x).with_kind(kind);
            s.payment_interval = cfg.payment_interval;
            let r = simulate_and_price(&cfg, &inputs, &cal, lv.as_ref(), &[s])?;
            let p = &r.swaptions[0];
            let market = inputs.surface.get(e, t, x);
            println!("expiry,tenor,strike_offset,mc_price,mc_stderr,model_implied_vol,vol_stderr,market_vol");
            println!(
                "{e},{t},{x},{},{},{},{},{}",
                p.mc_price,
                p.std_error,
                p.model_implied_vol,
                p.vol_std_error(),
                market.map_or(String::new(), |m| m.to_string())
            );
            Ok(())
        }
        Command::Report {
            all,
            smile,
            lv,
            out,
            common,
        } => {
            let mut cfg = common.resolve().stage("config")?;
            if let Some(s) = smile.or(lv.clone()) {
                let (i, j) = pair(&s).stage("config")?;
                cfg.mode = SimMode::LocalVol;
                let (_, _, surface) = model(&cfg, &common)?;
                let surface = surface.expect("local-vol mode builds the surface");
                return if lv.is_some() {
                    write_lv_dump(&out, &surface, i, j).stage("report")
                } else {
                    write_smile_dump(&out, &surface, i, j).stage("report")
                };
            }
            if !all {
                return Err(StageError {
                    stage: "config",
                    source: Error::Config("report needs --all, --smile i,j or --lv i,j".into()),
                });
            }
            let (inputs, cal, surface) = model(&cfg, &common)?;
            let specs = pricing_specs(&cfg, &inputs);
            let r = simulate_and_price(&cfg, &inputs, &cal, surface.as_ref(), &specs)?;
            let report = comparison_report(&r.swaptions, &inputs.surface);
            write_report_csv(&out, &report).stage("report")
        }
        Command::Run {
            config,
            dry_run,
            out_dir,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::from_file(p).stage("config")?,
                None => RunConfig::default(),
            };
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if dry_run {
                cfg.validate().stage("config")?;
                print!("{}", cfg.render());
                for (k, s) in cfg.plan().iter().enumerate() {
                    println!("{}. {s}", k + 1);
                }
                return Ok(());
            }
            let a = run_pipeline(&cfg)?;
            println!("{}", a.manifest.display());
            Ok(())
        }
    }
}
