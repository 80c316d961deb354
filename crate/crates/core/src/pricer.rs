//! Swaption prices, standard errors and implied vols from simulated paths.
//!
//! A payer swaption expiring at `t_n` into a swap with payment dates `T_m` pays
//!
//! ```text
//! MM(t_n) · max(0, 1 − B(t_n, T_N) − K · Σ_m B(t_n, T_m)),   K = X + r_ATM
//! ```
//!
//! with the bond prices rebuilt from the path's forward curve. By default
//! `r_ATM` is the time-0 forward swap rate of the underlying swap.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{atm_rate_for, DiscountCurve, SwapSchedule, TimeGrid};
use crate::engine::{simulate, LvStats, PathObserver, PathState, SimConfig, SimInputs};
use crate::error::{Error, Result};
use crate::market::{bachelier_price_kind, implied_normal_vol_kind, OptionKind, QuoteSurface};
use crate::scalar::{lit, norm_pdf, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwaptionSpec<T> {
    pub expiry: T,
    pub tenor: T,
    pub strike_offset: T,
    pub kind: OptionKind,
    pub payment_interval: T,
}

impl<T: Real> SwaptionSpec<T> {
    /// Out-of-the-money side for the offset (payer for `X ≥ 0`), annual payments.
    pub fn otm(expiry: T, tenor: T, strike_offset: T) -> Self {
        Self {
            expiry,
            tenor,
            strike_offset,
            kind: OptionKind::out_of_the_money(strike_offset),
            payment_interval: T::one(),
        }
    }

    pub fn with_kind(mut self, kind: OptionKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Which ATM rate anchors the strike `X + r_ATM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AtmReading {
    /// Time-0 forward swap rate for the option's expiry and tenor.
    #[default]
    Forward,
    /// Swap rate observed on the path at expiry.
    Path,
}

/// A swaption spec placed on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSwaption<T> {
    pub spec: SwaptionSpec<T>,
    pub schedule: SwapSchedule,
    /// `r_ATM` from the time-0 curve.
    pub forward_rate: T,
    /// `Σ_m B(0, T_m)`.
    pub annuity: T,
}

impl<T: Real> ResolvedSwaption<T> {
    pub fn new(spec: SwaptionSpec<T>, grid: &TimeGrid<T>, disc: &DiscountCurve<T>) -> Result<Self> {
        if !(spec.expiry > T::zero()) {
            return Err(Error::InvalidInput(format!("swaption expiry must be positive, got {}", spec.expiry)));
        }
        let schedule = SwapSchedule::new(grid, spec.expiry, spec.tenor, spec.payment_interval)?;
        if schedule.end() >= disc.len() {
            return Err(Error::GridAlignment("discount curve too short for swap".into()));
        }
        Ok(Self {
            spec,
            forward_rate: atm_rate_for(disc, &schedule),
            annuity: disc.annuity(&schedule),
            schedule,
        })
    }

    pub fn expiry_step(&self) -> usize {
        self.schedule.start
    }

    /// Deterministic strike `X + r_ATM(0)`.
    pub fn strike(&self) -> T {
        self.spec.strike_offset + self.forward_rate
    }
}

/// `(B(t_n, T_N), Σ_m B(t_n, T_m))` from the path curve at the swap start.
fn path_bonds<T: Real>(state: &PathState<T>, dt: T, schedule: &SwapSchedule) -> (T, T) {
    let curve = state.curve();
    let mut acc = T::zero();
    let mut k = schedule.start;
    let mut annuity = T::zero();
    let mut last = T::one();
    for &p in &schedule.payments {
        while k < p {
            acc = acc + curve[k];
            k += 1;
        }
        last = (-(acc * dt)).exp();
        annuity = annuity + last;
    }
    (last, annuity)
}

fn path_strike<T: Real>(sw: &ResolvedSwaption<T>, reading: AtmReading, b_end: T, annuity: T) -> T {
    match reading {
        AtmReading::Forward => sw.strike(),
        AtmReading::Path => sw.spec.strike_offset + (T::one() - b_end) / annuity,
    }
}

fn check_at_expiry<T: Real>(state: &PathState<T>, sw: &ResolvedSwaption<T>) -> Result<()> {
    if state.step() != sw.expiry_step() {
        return Err(Error::InvalidInput(format!(
            "path is at step {} but the swaption expires at step {}",
            state.step(),
            sw.expiry_step()
        )));
    }
    if sw.schedule.end() > state.curve().len() {
        return Err(Error::GridAlignment("path curve does not cover the swap".into()));
    }
    Ok(())
}

/// Discounted payoff `MM(t_n)·[±(1 − B_N − K·A)]₊` on a path sitting at expiry.
pub fn payoff_on_path<T: Real>(state: &PathState<T>, dt: T, sw: &ResolvedSwaption<T>, reading: AtmReading) -> Result<T> {
    check_at_expiry(state, sw)?;
    Ok(payoff_unchecked(state, dt, sw, reading))
}

fn payoff_unchecked<T: Real>(state: &PathState<T>, dt: T, sw: &ResolvedSwaption<T>, reading: AtmReading) -> T {
    let (b_end, annuity) = path_bonds(state, dt, &sw.schedule);
    let k = path_strike(sw, reading, b_end, annuity);
    let swap = T::one() - b_end - k * annuity;
    let inner = match sw.spec.kind {
        OptionKind::Payer => swap,
        OptionKind::Receiver => -swap,
    };
    state.money_market() * inner.max(T::zero())
}

/// Discounted payer forward-swap value `MM(t_n)·(1 − B_N − K·A)` at expiry.
pub fn forward_swap_on_path<T: Real>(state: &PathState<T>, dt: T, sw: &ResolvedSwaption<T>, reading: AtmReading) -> Result<T> {
    check_at_expiry(state, sw)?;
    let (b_end, annuity) = path_bonds(state, dt, &sw.schedule);
    let k = path_strike(sw, reading, b_end, annuity);
    Ok(state.money_market() * (T::one() - b_end - k * annuity))
}

/// Running mean and sum of squared deviations, mergeable in any fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accumulator {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Accumulates swaption payoffs at their expiries and discounted unit
/// payments `MM(T)` at bond maturities.
#[derive(Debug, Clone)]
pub struct EnsembleObserver<T> {
    dt: T,
    reading: AtmReading,
    swaptions: Vec<ResolvedSwaption<T>>,
    bond_steps: Vec<usize>,
    /// Per step: swaption and bond indices observed there.
    schedule: Vec<(Vec<usize>, Vec<usize>)>,
    horizon: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsemblePartial {
    pub swaptions: Vec<Accumulator>,
    pub bonds: Vec<Accumulator>,
}

impl<T: Real> EnsembleObserver<T> {
    pub fn new(dt: T, swaptions: Vec<ResolvedSwaption<T>>, bond_steps: Vec<usize>, reading: AtmReading) -> Self {
        let horizon = swaptions
            .iter()
            .map(|s| s.expiry_step())
            .chain(bond_steps.iter().copied())
            .max()
            .unwrap_or(0);
        let mut schedule = vec![(Vec::new(), Vec::new()); horizon + 1];
        for (k, s) in swaptions.iter().enumerate() {
            schedule[s.expiry_step()].0.push(k);
        }
        for (k, &m) in bond_steps.iter().enumerate() {
            schedule[m].1.push(k);
        }
        Self {
            dt,
            reading,
            swaptions,
            bond_steps,
            schedule,
            horizon,
        }
    }

    pub fn swaptions(&self) -> &[ResolvedSwaption<T>] {
        &self.swaptions
    }

    pub fn bond_steps(&self) -> &[usize] {
        &self.bond_steps
    }
}

impl<T: Real> PathObserver<T> for EnsembleObserver<T> {
    type Partial = EnsemblePartial;

    fn empty(&self) -> EnsemblePartial {
        EnsemblePartial {
            swaptions: vec![Accumulator::default(); self.swaptions.len()],
            bonds: vec![Accumulator::default(); self.bond_steps.len()],
        }
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn observe(&self, partial: &mut EnsemblePartial, states: &[PathState<T>]) {
        let n = states[0].step();
        let Some((sw, bonds)) = self.schedule.get(n) else {
            return;
        };
        let legs = lit::<T>(states.len() as f64);
        for &k in sw {
            let s = &self.swaptions[k];
            let v: T = states.iter().map(|st| payoff_unchecked(st, self.dt, s, self.reading)).sum();
            partial.swaptions[k].push(to_f64(v / legs));
        }
        for &k in bonds {
            let v: T = states.iter().map(|st| st.money_market()).sum();
            partial.bonds[k].push(to_f64(v / legs));
        }
    }

    fn merge(&self, into: &mut EnsemblePartial, other: EnsemblePartial) {
        for (a, b) in into.swaptions.iter_mut().zip(&other.swaptions) {
            a.merge(b);
        }
        for (a, b) in into.bonds.iter_mut().zip(&other.bonds) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceResult<T> {
    pub spec: SwaptionSpec<T>,
    pub mc_price: f64,
    pub std_error: f64,
    /// Independent observations (antithetic pairs count once).
    pub n_samples: u64,
    pub n_paths: usize,
    pub forward_rate: f64,
    pub annuity: f64,
    /// Zero when the inversion failed.
    pub model_implied_vol: f64,
    pub inversion_ok: bool,
    pub market_vol: Option<f64>,
}

impl<T: Real> PriceResult<T> {
    /// Standard error translated to vol units through the Bachelier vega.
    pub fn vol_std_error(&self) -> f64 {
        let t = to_f64(self.spec.expiry);
        let v = self.model_implied_vol;
        if !(v > 0.0) {
            return f64::NAN;
        }
        let d = to_f64(self.spec.strike_offset) / (v * t.sqrt());
        let vega = self.annuity * t.sqrt() * norm_pdf(d);
        self.std_error / vega
    }
}

/// Turns one swaption's accumulated payoffs into a price and implied vol.
pub fn price_swaption<T: Real>(acc: &Accumulator, sw: &ResolvedSwaption<T>, n_paths: usize) -> PriceResult<T> {
    let price = acc.mean();
    let fwd = to_f64(sw.forward_rate);
    let annuity = to_f64(sw.annuity);
    let strike = to_f64(sw.strike());
    let expiry = to_f64(sw.spec.expiry);
    let inv = implied_normal_vol_kind(sw.spec.kind, price, fwd, strike, expiry, annuity);
    let (vol, ok) = match inv {
        Ok(v) => (v, true),
        Err(_) => (0.0, false),
    };
    PriceResult {
        spec: sw.spec,
        mc_price: price,
        std_error: acc.std_error(),
        n_samples: acc.n,
        n_paths,
        forward_rate: fwd,
        annuity,
        model_implied_vol: vol,
        inversion_ok: ok,
        market_vol: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondResult {
    pub maturity: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    pub market: f64,
}

impl BondResult {
    /// Deviation from `B(0,T)` in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            (self.mc_mean - self.market) / self.std_error
        } else if self.mc_mean == self.market {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult<T> {
    pub swaptions: Vec<PriceResult<T>>,
    pub bonds: Vec<BondResult>,
    pub lv_stats: LvStats,
    pub n_paths: usize,
}

/// Simulates once and prices every swaption plus the discounted bonds.
pub fn price_ensemble<T: Real>(
    cfg: &SimConfig<T>,
    inputs: &SimInputs<'_, T>,
    disc: &DiscountCurve<T>,
    specs: &[SwaptionSpec<T>],
    bond_maturities: &[T],
    reading: AtmReading,
) -> Result<EnsembleResult<T>> {
    let resolved = specs
        .iter()
        .map(|&s| ResolvedSwaption::new(s, &inputs.grid, disc))
        .collect::<Result<Vec<_>>>()?;
    let bond_steps = bond_maturities
        .iter()
        .map(|&t| inputs.grid.index_of(t))
        .collect::<Result<Vec<_>>>()?;
    let observer = EnsembleObserver::new(cfg.dt, resolved, bond_steps.clone(), reading);
    let out = simulate(cfg, inputs, &observer)?;
    let swaptions = observer
        .swaptions()
        .iter()
        .zip(&out.estimates.swaptions)
        .map(|(sw, acc)| price_swaption(acc, sw, out.paths))
        .collect();
    let bonds = bond_steps
        .iter()
        .zip(&out.estimates.bonds)
        .map(|(&m, acc)| BondResult {
            maturity: to_f64(inputs.grid.time(m)),
            mc_mean: acc.mean(),
            std_error: acc.std_error(),
            market: to_f64(disc.at(m)),
        })
        .collect();
    Ok(EnsembleResult {
        swaptions,
        bonds,
        lv_stats: out.lv_stats,
        n_paths: out.paths,
    })
}

/// Closed-form ATM price `Σ·√(T/2π)·A` for a normal swap-rate vol `Σ`.
pub fn atm_closed_form<T: Real>(sigma: T, sw: &ResolvedSwaption<T>) -> T {
    bachelier_price_kind(sw.spec.kind, sw.forward_rate, sw.forward_rate, sigma, sw.spec.expiry, sw.annuity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub expiry: f64,
    pub tenor: f64,
    pub strike_offset: f64,
    pub market_vol: f64,
    pub model_vol: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Monte Carlo standard error in vol units.
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// `(expiry, tenor, offset)` of results without a quote.
    pub unmatched: Vec<(f64, f64, f64)>,
}

impl ComparisonReport {
    /// Largest relative error among rows selected by `keep`.
    pub fn max_rel_err(&self, keep: impl Fn(&ComparisonRow) -> bool) -> Option<f64> {
        self.rows.iter().filter(|r| keep(r)).map(|r| r.rel_err).fold(None, |m, e| {
            Some(match m {
                Some(m) if m >= e => m,
                _ => e,
            })
        })
    }
}

/// Market vs model implied vols, keyed and ordered by `(expiry, tenor, offset)`.
pub fn comparison_report<T: Real>(results: &[PriceResult<T>], quotes: &QuoteSurface<T>) -> ComparisonReport {
    let mut report = ComparisonReport::default();
    let mut keyed = BTreeMap::new();
    for r in results {
        let (e, t, x) = (to_f64(r.spec.expiry), to_f64(r.spec.tenor), to_f64(r.spec.strike_offset));
        let key = (ordered(e), ordered(t), ordered(x));
        match quotes.get(r.spec.expiry, r.spec.tenor, r.spec.strike_offset) {
            Some(q) => {
                let market = to_f64(q);
                let model = r.model_implied_vol;
                let abs_err = (model - market).abs();
                keyed.insert(
                    key,
                    ComparisonRow {
                        expiry: e,
                        tenor: t,
                        strike_offset: x,
                        market_vol: market,
                        model_vol: model,
                        abs_err,
                        rel_err: abs_err / market,
                        mc_stderr: r.vol_std_error(),
                    },
                );
            }
            None => report.unmatched.push((e, t, x)),
        }
    }
    report.rows = keyed.into_values().collect();
    report
}

fn ordered(x: f64) -> i64 {
    (x * 1e8).round() as i64
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &ComparisonReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in &report.rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct ResultRow {
    expiry: f64,
    tenor: f64,
    strike_offset: f64,
    mc_price: f64,
    mc_stderr: f64,
    model_implied_vol: f64,
}

pub fn write_results_csv<T: Real>(path: impl AsRef<Path>, results: &[PriceResult<T>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in results {
        w.serialize(ResultRow {
            expiry: to_f64(r.spec.expiry),
            tenor: to_f64(r.spec.tenor),
            strike_offset: to_f64(r.spec.strike_offset),
            mc_price: r.mc_price,
            mc_stderr: r.std_error,
            model_implied_vol: r.model_implied_vol,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
