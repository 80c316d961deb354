//! One-factor HJM Monte Carlo on the quarterly grid.
//!
//! Each step moves every live forward bucket with the same normal shock:
//!
//! ```text
//! f(t_{n+1}, τ_j) = f(t_n, τ_j) + α_j dt + v_j ξ √dt
//! α_j = ½ v_j² dt + v_j Σ_{n<k<j} v_k dt
//! ```
//!
//! which keeps `MM(t)·B(t, T)` an exact martingale for the left-point money
//! market `MM(t_n) = exp(−Σ_{k<n} f(t_k, t_k) dt)`. In local-volatility mode
//! `v_j` is read from the local-vol surface at the strike offset
//! `x_j = f(t_n, τ_j) − f(0, τ_j)`.
//!
//! Paths are independent work units. Sample `s` draws from its own ChaCha
//! stream keyed by `(seed, s)`, and per-batch partial results are merged in
//! batch order, so estimates are bitwise reproducible for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::curve::{swap_rate_from_forwards, ForwardCurve, SwapSchedule, TimeGrid};
use crate::error::{Error, Result};
use crate::localvol::LocalVolSurface;
use crate::scalar::{lit, Real};
use crate::smallvol::ForwardVolGrid;

/// One simulated path: the live forward curve and the money-market log-discount.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState<T> {
    curve: Vec<T>,
    step: usize,
    mm_log: T,
}

impl<T: Real> PathState<T> {
    pub fn new(base: &ForwardCurve<T>) -> Self {
        Self {
            curve: base.rates().to_vec(),
            step: 0,
            mm_log: T::zero(),
        }
    }

    /// Forward rates indexed by absolute bucket; only `j ≥ step()` are live.
    pub fn curve(&self) -> &[T] {
        &self.curve
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `−Σ_{k<n} f(t_k, t_k)·dt`.
    pub fn mm_log(&self) -> T {
        self.mm_log
    }

    /// Money-market discount factor `MM(t_n)`.
    pub fn money_market(&self) -> T {
        self.mm_log.exp()
    }

    /// `B(t_n, t_m)` reconstructed from the path's forwards.
    pub fn bond(&self, m: usize, dt: T) -> T {
        let s: T = self.curve[self.step..m].iter().copied().sum();
        (-(s * dt)).exp()
    }

    fn reset(&mut self, base: &ForwardCurve<T>) {
        self.curve.copy_from_slice(base.rates());
        self.step = 0;
        self.mm_log = T::zero();
    }
}

/// Discrete no-arbitrage drift for a vol row starting at the first bucket
/// that survives the step: `α_k = ½ v_k² dt + v_k Σ_{m<k} v_m dt`.
pub fn hjm_drift_row<T: Real>(vols: &[T], dt: T, out: &mut [T]) {
    let half: T = lit(0.5);
    let mut prefix = T::zero();
    for (a, &v) in out.iter_mut().zip(vols) {
        *a = v * (half * v + prefix) * dt;
        prefix = prefix + v;
    }
}

/// Moves the live curve one step with per-bucket vols `vols[k]` for bucket `step + 1 + k`.
fn advance<T: Real>(state: &mut PathState<T>, vols: &[T], drift: &mut [T], xi: T, dt: T) {
    let n = state.step;
    state.mm_log = state.mm_log - state.curve[n] * dt;
    let live = &mut state.curve[n + 1..];
    let drift = &mut drift[..live.len()];
    hjm_drift_row(&vols[..live.len()], dt, drift);
    let shock = xi * dt.sqrt();
    for ((f, &a), &v) in live.iter_mut().zip(drift.iter()).zip(vols) {
        *f = *f + a * dt + v * shock;
    }
    state.step = n + 1;
}

/// Reusable per-worker buffers for one step.
#[derive(Debug, Clone)]
pub struct StepScratch<T> {
    strikes: Vec<T>,
    vols: Vec<T>,
    drift: Vec<T>,
}

impl<T: Real> StepScratch<T> {
    pub fn new(n: usize) -> Self {
        Self {
            strikes: vec![T::zero(); n],
            vols: vec![T::zero(); n],
            drift: vec![T::zero(); n],
        }
    }
}

/// One step with the calibrated forward-vol grid; every bucket sees the same `ξ`.
pub fn step_constant_vol<T: Real>(
    state: &mut PathState<T>,
    grid: &ForwardVolGrid<T>,
    xi: T,
    dt: T,
    scratch: &mut StepScratch<T>,
) {
    let n = state.step;
    let row = &grid.row(n)[1..];
    advance(state, row, &mut scratch.drift, xi, dt);
}

/// Strike offsets `x_j = f(t_n, τ_j) − f(0, τ_j)` for the buckets surviving the step.
pub fn strike_row<T: Real>(state: &PathState<T>, base: &ForwardCurve<T>, out: &mut [T]) {
    let first = state.step + 1;
    for ((x, &f), &f0) in out.iter_mut().zip(&state.curve[first..]).zip(&base.rates()[first..]) {
        *x = f - f0;
    }
}

/// Swap-rate strike replacement for long calendar times.
///
/// Past `cutoff_step`, bucket `τ_j` takes the offset of the shortest ladder
/// swap starting now that covers it: path swap rate minus the time-0 forward
/// swap rate over the same dates. Buckets past the longest swap share its offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrikeFallback {
    pub cutoff_step: usize,
    /// Swap lengths in grid steps, ascending.
    pub block_steps: Vec<usize>,
    pub payment_steps: usize,
}

impl StrikeFallback {
    pub fn new<T: Real>(grid: &TimeGrid<T>, cutoff: T, tenors: &[T], payment_interval: T) -> Result<Self> {
        let payment_steps = grid.steps_in(payment_interval)?;
        let mut block_steps = tenors.iter().map(|&t| grid.steps_in(t)).collect::<Result<Vec<_>>>()?;
        block_steps.sort_unstable();
        block_steps.dedup();
        if block_steps.iter().any(|b| b % payment_steps != 0) {
            return Err(Error::GridAlignment("fallback tenors must be whole payment periods".into()));
        }
        let cutoff_step = (cutoff / grid.dt() + lit(1e-9)).floor().to_usize().unwrap_or(usize::MAX);
        Ok(Self {
            cutoff_step,
            block_steps,
            payment_steps,
        })
    }

    pub fn active(&self, step: usize) -> bool {
        step > self.cutoff_step
    }
}

/// Strike row honouring the long-expiry swap-rate fallback.
pub fn strike_row_longexpiry<T: Real>(
    state: &PathState<T>,
    base: &ForwardCurve<T>,
    dt: T,
    fallback: Option<&StrikeFallback>,
    out: &mut [T],
) {
    strike_row(state, base, out);
    let Some(fb) = fallback else {
        return;
    };
    let n = state.step;
    if !fb.active(n) {
        return;
    }
    let nb = state.curve.len();
    let first = n + 1;
    let mut covered = first;
    let mut last_x = None;
    for &len in &fb.block_steps {
        if n + len > nb {
            break;
        }
        let schedule = SwapSchedule {
            start: n,
            payments: (1..=len / fb.payment_steps).map(|m| n + m * fb.payment_steps).collect(),
        };
        // Both curves span the schedule, so these cannot fail.
        let r_path = swap_rate_from_forwards(&state.curve, dt, &schedule).unwrap();
        let r_base = swap_rate_from_forwards(base.rates(), dt, &schedule).unwrap();
        let x = r_path - r_base;
        for j in covered..n + len {
            out[j - first] = x;
        }
        covered = covered.max(n + len);
        last_x = Some(x);
    }
    if let Some(x) = last_x {
        for j in covered..nb {
            out[j - first] = x;
        }
    }
}

/// One local-volatility step. Returns how many vol lookups were clamped.
#[allow(clippy::too_many_arguments)]
pub fn step_local_vol<T: Real>(
    state: &mut PathState<T>,
    lv: &LocalVolSurface<T>,
    base: &ForwardCurve<T>,
    xi: T,
    dt: T,
    fallback: Option<&StrikeFallback>,
    scratch: &mut StepScratch<T>,
) -> Result<usize> {
    let n = state.step;
    let live = state.curve.len() - n - 1;
    let strikes = &mut scratch.strikes[..live];
    strike_row_longexpiry(state, base, dt, fallback, strikes);
    let vols = &mut scratch.vols[..live];
    let clamps = lv.local_vol_row_into(n, n + 1, strikes, vols)?;
    advance(state, vols, &mut scratch.drift, xi, dt);
    Ok(clamps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    ConstantVol,
    LocalVol,
}

impl std::str::FromStr for SimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" | "constant" | "constant-vol" => Ok(SimMode::ConstantVol),
            "lv" | "local" | "local-vol" => Ok(SimMode::LocalVol),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected lv or const)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub n_paths: usize,
    pub dt: T,
    pub seed: u64,
    pub mode: SimMode,
    /// Calendar time after which the swap-rate strike fallback applies; `None` disables it.
    pub long_expiry_cutoff: Option<T>,
    pub antithetic: bool,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    /// Samples per work unit. Part of the reproducibility key together with the seed.
    pub batch_size: usize,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dt: lit(0.25),
            seed: 42,
            mode: SimMode::LocalVol,
            long_expiry_cutoff: Some(lit(5.0)),
            antithetic: true,
            workers: 0,
            batch_size: 256,
        }
    }
}

impl<T: Real> SimConfig<T> {
    /// Independent samples: antithetic pairs count once.
    pub fn samples(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum VolModel<'a, T> {
    Constant(&'a ForwardVolGrid<T>),
    Local(&'a LocalVolSurface<T>),
}

/// Shared, read-only inputs of a simulation.
#[derive(Debug, Clone)]
pub struct SimInputs<'a, T> {
    pub grid: TimeGrid<T>,
    pub base: &'a ForwardCurve<T>,
    pub model: VolModel<'a, T>,
    pub fallback: Option<StrikeFallback>,
}

/// Consumer of simulated paths.
///
/// `observe` is called once at step 0 and after every step with the sample's
/// states: one path, or the two legs of an antithetic pair. A partial belongs
/// to one batch; partials are merged in batch order.
pub trait PathObserver<T: Real>: Sync {
    type Partial: Send;

    fn empty(&self) -> Self::Partial;

    /// Last step the observer needs.
    fn horizon(&self) -> usize;

    fn observe(&self, partial: &mut Self::Partial, states: &[PathState<T>]);

    fn merge(&self, into: &mut Self::Partial, other: Self::Partial);
}

/// Per-calendar-row local-vol lookup counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LvStats {
    pub queries: Vec<u64>,
    pub clamps: Vec<u64>,
}

impl LvStats {
    fn with_rows(rows: usize) -> Self {
        Self {
            queries: vec![0; rows],
            clamps: vec![0; rows],
        }
    }

    fn merge(&mut self, other: &LvStats) {
        for (a, b) in self.queries.iter_mut().zip(&other.queries) {
            *a += b;
        }
        for (a, b) in self.clamps.iter_mut().zip(&other.clamps) {
            *a += b;
        }
    }

    /// Clamp rate over rows `from..`.
    pub fn clamp_rate_from(&self, from: usize) -> f64 {
        let q: u64 = self.queries.iter().skip(from).sum();
        let c: u64 = self.clamps.iter().skip(from).sum();
        if q == 0 {
            0.0
        } else {
            c as f64 / q as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput<P> {
    pub estimates: P,
    pub samples: usize,
    pub paths: usize,
    pub lv_stats: LvStats,
}

/// Runs the ensemble and streams every sample through `observer`.
pub fn simulate<T: Real, O: PathObserver<T>>(
    cfg: &SimConfig<T>,
    inputs: &SimInputs<'_, T>,
    observer: &O,
) -> Result<SimOutput<O::Partial>> {
    if cfg.n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be at least 1".into()));
    }
    if (cfg.dt - inputs.grid.dt()).abs() > T::epsilon() * lit(16.0) {
        return Err(Error::InvalidInput(format!(
            "config dt {} differs from the time grid's {}",
            cfg.dt,
            inputs.grid.dt()
        )));
    }
    let nb = inputs.grid.n_steps();
    if inputs.base.len() < nb {
        return Err(Error::GridAlignment("base curve shorter than the grid".into()));
    }
    let base = ForwardCurve::new(inputs.base.rates()[..nb].to_vec())?;
    let steps = observer.horizon();
    let available = match inputs.model {
        VolModel::Constant(g) => {
            if g.size() != nb {
                return Err(Error::GridAlignment(format!(
                    "volatility grid has {} buckets, time grid {nb}",
                    g.size()
                )));
            }
            nb
        }
        VolModel::Local(lv) => {
            if lv.buckets() != nb {
                return Err(Error::GridAlignment(format!(
                    "local-vol surface has {} buckets, time grid {nb}",
                    lv.buckets()
                )));
            }
            // The last step has no live bucket left to diffuse.
            if lv.steps() + 1 >= nb {
                nb
            } else {
                lv.steps()
            }
        }
    };
    if steps > available {
        return Err(Error::InvalidInput(format!(
            "observer needs {steps} steps but the model covers {available}"
        )));
    }

    let samples = cfg.samples();
    let batch = cfg.batch_size.max(1);
    let n_batches = samples.div_ceil(batch);
    let dt = cfg.dt;
    let fallback = match cfg.long_expiry_cutoff {
        Some(_) => inputs.fallback.as_ref(),
        None => None,
    };

    let run_batch = |b: usize| -> std::result::Result<(O::Partial, LvStats), (usize, Error)> {
        let mut partial = observer.empty();
        let mut stats = LvStats::with_rows(steps);
        let legs = if cfg.antithetic { 2 } else { 1 };
        let mut states = vec![PathState::new(&base); legs];
        let mut scratch = StepScratch::new(nb);
        let lo = b * batch;
        let hi = (lo + batch).min(samples);
        for s in lo..hi {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            for st in states.iter_mut() {
                st.reset(&base);
            }
            observer.observe(&mut partial, &states);
            for n in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let z: T = lit(z);
                for (leg, st) in states.iter_mut().enumerate() {
                    let xi = if leg == 0 { z } else { -z };
                    match inputs.model {
                        VolModel::Constant(g) => step_constant_vol(st, g, xi, dt, &mut scratch),
                        VolModel::Local(lv) => {
                            let c = step_local_vol(st, lv, &base, xi, dt, fallback, &mut scratch)
                                .map_err(|e| (s, e))?;
                            stats.queries[n] += (nb - n - 1) as u64;
                            stats.clamps[n] += c as u64;
                        }
                    }
                }
                observer.observe(&mut partial, &states);
            }
        }
        Ok((partial, stats))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| (0..n_batches).into_par_iter().map(run_batch).collect());

    let mut estimates = observer.empty();
    let mut lv_stats = LvStats::with_rows(steps);
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok((p, st)) => {
                observer.merge(&mut estimates, p);
                lv_stats.merge(&st);
            }
            Err((s, e)) => {
                return Err(Error::PartialRun {
                    completed: b * batch,
                    requested: samples,
                    reason: format!("sample {s}: {e}"),
                })
            }
        }
    }
    Ok(SimOutput {
        estimates,
        samples,
        paths: samples * if cfg.antithetic { 2 } else { 1 },
        lv_stats,
    })
}
