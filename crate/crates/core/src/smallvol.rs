//! Small-volatility map between forward-rate volatilities and swaption vols.
//!
//! To first order in σ the discounted swap value at expiry `T` is Gaussian,
//! with instantaneous PV volatility
//!
//! ```text
//! v(t, N) = r_s Σ_n B(0,T_n) I(t,T_n) − B(0,T) I(t,T) + B(0,T_N) I(t,T_N)
//! I(t, U) = ∫_t^U σ(t, τ) dτ
//! ```
//!
//! and the swaption's normal volatility is `Σ(T,N) = √(∫_0^T v² dt / T) / A`
//! with `A = Σ_n B(0,T_n)` converting PV units back to rate units.
//!
//! The bootstrap inverts this map target by target. Every grid cell that a
//! target references for the first time shares one unknown, which turns the
//! target equation into a scalar quadratic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{atm_rate_for, forwards_from_discounts, DiscountCurve, SwapSchedule, TimeGrid};
use crate::error::{Error, Result};
use crate::market::{interpolate_variance_in_time, QuoteSurface};
use crate::scalar::{lit, to_f64, Real};

/// Forward-rate normal volatilities `σ(t_i, τ_k)` for `k ≥ i`, one grid per strike offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardVolGrid<T> {
    n: usize,
    sigma: Vec<T>,
    assigned: Vec<bool>,
}

impl<T: Real> ForwardVolGrid<T> {
    /// Empty grid over `n` calendar rows and `n` maturity buckets.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            sigma: vec![T::zero(); n * n],
            assigned: vec![false; n * n],
        }
    }

    pub fn constant(n: usize, s: T) -> Self {
        Self::from_fn(n, |_, _| s)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut g = Self::new(n);
        for i in 0..n {
            for k in i..n {
                g.set(i, k, f(i, k));
            }
        }
        g
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> T {
        self.sigma[i * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, s: T) {
        self.sigma[i * self.n + k] = s;
        self.assigned[i * self.n + k] = true;
    }

    pub fn is_assigned(&self, i: usize, k: usize) -> bool {
        self.assigned[i * self.n + k]
    }

    /// Calendar row `i` restricted to live buckets `k ≥ i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.sigma[i * self.n + i..(i + 1) * self.n]
    }

    /// Last calendar row holding at least one assigned cell.
    pub fn last_assigned_row(&self) -> Option<usize> {
        (0..self.n).rev().find(|&i| (i..self.n).any(|k| self.is_assigned(i, k)))
    }

    /// Completes cells no calibration target touched.
    ///
    /// Inside a calibrated row a missing cell copies the nearest assigned cell
    /// in maturity; rows after the last calibrated one repeat that row as a
    /// function of time to maturity.
    pub fn fill_unassigned(&mut self) {
        let Some(last) = self.last_assigned_row() else {
            return;
        };
        let n = self.n;
        for i in 0..=last {
            let known: Vec<usize> = (i..n).filter(|&k| self.is_assigned(i, k)).collect();
            if known.is_empty() {
                continue;
            }
            for k in i..n {
                if !self.is_assigned(i, k) {
                    let src = known
                        .iter()
                        .copied()
                        .rfind(|&q| q < k)
                        .unwrap_or(known[0]);
                    let s = self.get(i, src);
                    self.set(i, k, s);
                }
            }
        }
        // Rows with nothing assigned (before `last`) borrow from the row below.
        for i in (0..last).rev() {
            if !(i..n).any(|k| self.is_assigned(i, k)) {
                for k in i..n {
                    let s = self.get(i + 1, (k + 1).min(n - 1));
                    self.set(i, k, s);
                }
            }
        }
        for i in last + 1..n {
            for k in i..n {
                let s = self.get(last, last + (k - i));
                self.set(i, k, s);
            }
        }
    }
}

/// Integrated bond volatility `dt·Σ_{k=i}^{j−1} σ(t_i, τ_k)`.
pub fn bond_vol<T: Real>(grid: &ForwardVolGrid<T>, dt: T, i: usize, j: usize) -> T {
    (i..j).map(|k| grid.get(i, k)).sum::<T>() * dt
}

/// Instantaneous swap PV volatility `v(t_i, N)` for a swap with fixed rate `r_s`.
pub fn swap_vol_row<T: Real>(
    grid: &ForwardVolGrid<T>,
    disc: &DiscountCurve<T>,
    dt: T,
    i: usize,
    schedule: &SwapSchedule,
    r_s: T,
) -> Result<T> {
    check_schedule(grid, disc, schedule)?;
    if i >= schedule.start {
        return Err(Error::GridAlignment(format!(
            "calendar index {i} is not before the swap start {}",
            schedule.start
        )));
    }
    let fixed: T = schedule
        .payments
        .iter()
        .map(|&p| disc.at(p) * bond_vol(grid, dt, i, p))
        .sum();
    let end = schedule.end();
    Ok(r_s * fixed - disc.at(schedule.start) * bond_vol(grid, dt, i, schedule.start)
        + disc.at(end) * bond_vol(grid, dt, i, end))
}

fn check_schedule<T: Real>(grid: &ForwardVolGrid<T>, disc: &DiscountCurve<T>, schedule: &SwapSchedule) -> Result<()> {
    let end = schedule.end();
    if end > grid.size() || end >= disc.len() {
        return Err(Error::GridAlignment(format!(
            "swap ends at index {end}, volatility grid has {} buckets and discount curve {} points",
            grid.size(),
            disc.len()
        )));
    }
    Ok(())
}

/// Sensitivity of `v(t_i, N)` to each cell `σ(t_i, τ_k)`; identical for every row `i ≤ k`.
pub fn swap_cell_weights<T: Real>(disc: &DiscountCurve<T>, dt: T, schedule: &SwapSchedule, r_s: T) -> Vec<T> {
    let end = schedule.end();
    let mut w = vec![T::zero(); end];
    // Walk payments backwards accumulating Σ_{n: T_n > τ_k} B(0, T_n).
    let mut tail = T::zero();
    let mut next = schedule.payments.len();
    for k in (0..end).rev() {
        while next > 0 && schedule.payments[next - 1] > k {
            tail = tail + disc.at(schedule.payments[next - 1]);
            next -= 1;
        }
        let mut c = r_s * tail + disc.at(end);
        if k < schedule.start {
            c = c - disc.at(schedule.start);
        }
        w[k] = c * dt;
    }
    w
}

/// Swaption normal volatility `Σ(T, N)` implied by a forward-vol grid at strike offset `x`.
pub fn sigma_swaption<T: Real>(
    grid: &ForwardVolGrid<T>,
    disc: &DiscountCurve<T>,
    tgrid: &TimeGrid<T>,
    schedule: &SwapSchedule,
    x: T,
) -> Result<T> {
    check_schedule(grid, disc, schedule)?;
    if schedule.start == 0 {
        return Err(Error::GridAlignment("swaption expiry must be after t = 0".into()));
    }
    let dt = tgrid.dt();
    let r_s = atm_rate_for(disc, schedule) + x;
    let weights = swap_cell_weights(disc, dt, schedule, r_s);
    let mut var = T::zero();
    for i in 0..schedule.start {
        let v: T = (i..schedule.end()).map(|k| weights[k] * grid.get(i, k)).sum();
        var = var + v * v;
    }
    let expiry = tgrid.time(schedule.start);
    Ok((var * dt / expiry).sqrt() / disc.annuity(schedule))
}

/// Which root of the per-target quadratic to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootChoice {
    #[default]
    Larger,
    Smaller,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwaptionVolTarget<T> {
    pub expiry: T,
    pub tenor: T,
    /// Offset added to the ATM rate in the PV-vol weights.
    pub strike_offset: T,
    /// Normal volatility in rate units.
    pub vol: T,
    pub payment_interval: T,
}

fn infeasible<T: Real>(t: &SwaptionVolTarget<T>, reason: impl Into<String>) -> Error {
    Error::CalibrationInfeasible {
        expiry: to_f64(t.expiry),
        tenor: to_f64(t.tenor),
        offset: to_f64(t.strike_offset),
        reason: reason.into(),
    }
}

/// Sequential bootstrap of one strike offset's forward-vol grid.
///
/// Targets are processed in (expiry, tenor) order. Cells fixed by earlier
/// targets are held; every cell referenced for the first time is set to one
/// shared unknown σ solving `A σ² + B σ + C = Σ²·T·A_swap²`.
pub fn bootstrap_forward_vols<T: Real>(
    targets: &[SwaptionVolTarget<T>],
    disc: &DiscountCurve<T>,
    tgrid: &TimeGrid<T>,
    root: RootChoice,
) -> Result<ForwardVolGrid<T>> {
    let n = tgrid.n_steps();
    let dt = tgrid.dt();
    let mut ordered = targets.to_vec();
    ordered.sort_by(|a, b| {
        a.expiry
            .partial_cmp(&b.expiry)
            .unwrap()
            .then(a.tenor.partial_cmp(&b.tenor).unwrap())
    });
    check_calendar(&ordered)?;

    let mut grid = ForwardVolGrid::new(n);
    for t in &ordered {
        if !(t.vol >= T::zero()) {
            return Err(infeasible(t, format!("negative target volatility {}", t.vol)));
        }
        let schedule = SwapSchedule::new(tgrid, t.expiry, t.tenor, t.payment_interval)
            .map_err(|e| infeasible(t, e.to_string()))?;
        if schedule.start == 0 {
            return Err(infeasible(t, "expiry must be after t = 0"));
        }
        check_schedule(&grid, disc, &schedule)?;
        let annuity = disc.annuity(&schedule);
        let r_s = atm_rate_for(disc, &schedule) + t.strike_offset;
        let weights = swap_cell_weights(disc, dt, &schedule, r_s);
        let target = (t.vol * annuity).powi(2) * t.expiry;

        let mut qa = T::zero();
        let mut qb = T::zero();
        let mut qc = T::zero();
        let mut fresh = Vec::new();
        for i in 0..schedule.start {
            let (mut a, mut b) = (T::zero(), T::zero());
            for k in i..schedule.end() {
                if grid.is_assigned(i, k) {
                    b = b + weights[k] * grid.get(i, k);
                } else {
                    a = a + weights[k];
                    fresh.push((i, k));
                }
            }
            qa = qa + a * a;
            qb = qb + a * b;
            qc = qc + b * b;
        }
        let (qa, qb, qc) = (qa * dt, qb * dt * lit(2.0), qc * dt - target);

        if fresh.is_empty() || qa == T::zero() {
            let scale = target.max(T::min_positive_value());
            if qc.abs() <= lit::<T>(1e-10) * scale {
                continue;
            }
            return Err(infeasible(t, "target introduces no free volatility cells"));
        }
        let sigma = solve_root(qa, qb, qc, root).ok_or_else(|| {
            infeasible(
                t,
                format!(
                    "no non-negative root: target variance {} below attainable minimum {}",
                    to_f64(target),
                    to_f64(target + qc - qb * qb / (qa * lit(4.0)))
                ),
            )
        })?;
        for (i, k) in fresh {
            grid.set(i, k, sigma);
        }
    }
    Ok(grid)
}

fn check_calendar<T: Real>(ordered: &[SwaptionVolTarget<T>]) -> Result<()> {
    for (a, t) in ordered.iter().enumerate() {
        let prev = ordered[..a]
            .iter()
            .rev()
            .find(|p| p.tenor == t.tenor && p.strike_offset == t.strike_offset && p.expiry < t.expiry);
        if let Some(p) = prev {
            let (w0, w1) = (p.vol.powi(2) * p.expiry, t.vol.powi(2) * t.expiry);
            if w1 < w0 {
                return Err(infeasible(
                    t,
                    format!(
                        "total variance {} decreases from {} at expiry {}",
                        to_f64(w1),
                        to_f64(w0),
                        to_f64(p.expiry)
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Non-negative root of `a x² + b x + c = 0` per `choice`, with `a > 0`.
fn solve_root<T: Real>(a: T, b: T, c: T, choice: RootChoice) -> Option<T> {
    let disc = b * b - lit::<T>(4.0) * a * c;
    let tiny = T::epsilon() * lit(64.0) * (b * b).max((lit::<T>(4.0) * a * c).abs());
    let disc = if disc < T::zero() && disc > -tiny { T::zero() } else { disc };
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let q = if b >= T::zero() { -(b + sq) / lit(2.0) } else { (sq - b) / lit(2.0) };
    let (r1, r2) = if q == T::zero() {
        (T::zero(), T::zero())
    } else {
        let (x, y) = (q / a, c / q);
        (x.min(y), x.max(y))
    };
    // Round-off can leave a zero root marginally negative.
    let clean = |r: T| if r < T::zero() && r > -T::epsilon() * lit(64.0) * r2.abs().max(lit(1e-12)) { T::zero() } else { r };
    let (r1, r2) = (clean(r1), clean(r2));
    match choice {
        RootChoice::Larger => (r2 >= T::zero()).then_some(r2),
        RootChoice::Smaller => {
            if r1 >= T::zero() {
                Some(r1)
            } else {
                (r2 >= T::zero()).then_some(r2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationOptions<T> {
    /// Fill targets at every grid expiry from the time-interpolated surface.
    pub interpolated_input: bool,
    pub root: RootChoice,
    pub payment_interval: T,
    pub pv_weight: PvWeight,
}

/// Fixed rate used in the PV-vol weights of an offset's targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PvWeight {
    /// `r_ATM + X`.
    #[default]
    Strike,
    /// `r_ATM` for every offset.
    Atm,
}

impl std::str::FromStr for PvWeight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strike" => Ok(PvWeight::Strike),
            "atm" => Ok(PvWeight::Atm),
            other => Err(Error::Config(format!("unknown pv weight '{other}' (expected strike or atm)"))),
        }
    }
}

impl CalibrationOptions<f64> {
    pub fn standard() -> Self {
        Self {
            interpolated_input: false,
            root: RootChoice::Larger,
            payment_interval: 1.0,
            pv_weight: PvWeight::Strike,
        }
    }
}

/// Calibrated forward-vol grids for every quoted strike offset.
#[derive(Debug, Clone)]
pub struct Calibration<T> {
    pub offsets: Vec<T>,
    pub grids: Vec<ForwardVolGrid<T>>,
    /// Last calendar row fixed by a market target (later rows are extrapolated).
    pub last_calibrated_row: usize,
}

impl<T: Real> Calibration<T> {
    /// Grid of the offset nearest to `x`.
    pub fn nearest(&self, x: T) -> &ForwardVolGrid<T> {
        &self.grids[nearest_index(&self.offsets, x)]
    }

    pub fn atm(&self) -> &ForwardVolGrid<T> {
        self.nearest(T::zero())
    }
}

pub(crate) fn nearest_index<T: Real>(axis: &[T], x: T) -> usize {
    let mut best = 0;
    for (i, &a) in axis.iter().enumerate() {
        if (a - x).abs() < (axis[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// Volatility targets for one strike offset.
pub fn targets_for_offset<T: Real>(
    surface: &QuoteSurface<T>,
    tgrid: &TimeGrid<T>,
    offset: T,
    opts: &CalibrationOptions<T>,
) -> Result<Vec<SwaptionVolTarget<T>>> {
    let expiries: Vec<T> = if opts.interpolated_input {
        let first = tgrid.index_of(surface.expiries()[0])?;
        let last = tgrid.index_of(*surface.expiries().last().unwrap())?;
        (first..=last).map(|i| tgrid.time(i)).collect()
    } else {
        surface.expiries().to_vec()
    };
    let mut out = Vec::with_capacity(expiries.len() * surface.tenors().len());
    for &expiry in &expiries {
        for &tenor in surface.tenors() {
            let vol = interpolate_variance_in_time(surface, expiry, tenor, offset, false)?;
            out.push(SwaptionVolTarget {
                expiry,
                tenor,
                strike_offset: match opts.pv_weight {
                    PvWeight::Strike => offset,
                    PvWeight::Atm => T::zero(),
                },
                vol,
                payment_interval: opts.payment_interval,
            });
        }
    }
    Ok(out)
}

/// Bootstraps a grid per quoted strike offset and completes untouched cells.
pub fn calibrate_surface<T: Real>(
    surface: &QuoteSurface<T>,
    disc: &DiscountCurve<T>,
    tgrid: &TimeGrid<T>,
    opts: &CalibrationOptions<T>,
) -> Result<Calibration<T>> {
    let mut grids = Vec::with_capacity(surface.offsets().len());
    let mut last_row = 0;
    for &x in surface.offsets() {
        let targets = targets_for_offset(surface, tgrid, x, opts)?;
        let mut g = bootstrap_forward_vols(&targets, disc, tgrid, opts.root)?;
        last_row = g.last_assigned_row().unwrap_or(0);
        g.fill_unassigned();
        grids.push(g);
    }
    // Re-derive forwards only to validate that the curve spans the grid.
    forwards_from_discounts(disc, tgrid)?;
    Ok(Calibration {
        offsets: surface.offsets().to_vec(),
        grids,
        last_calibrated_row: last_row,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    calendar_index: usize,
    maturity_index: usize,
    strike_offset: f64,
    sigma: f64,
}

pub fn write_grid_csv<T: Real>(path: impl AsRef<Path>, cal: &Calibration<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (x, g) in cal.offsets.iter().zip(&cal.grids) {
        for i in 0..g.size() {
            for k in i..g.size() {
                if g.is_assigned(i, k) {
                    w.serialize(GridRow {
                        calendar_index: i,
                        maturity_index: k,
                        strike_offset: to_f64(*x),
                        sigma: to_f64(g.get(i, k)),
                    })
                    .map_err(|e| Error::csv(path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_grid_csv<T: Real>(path: impl AsRef<Path>, n: usize) -> Result<Calibration<T>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut offsets: Vec<T> = Vec::new();
    let mut grids: Vec<ForwardVolGrid<T>> = Vec::new();
    for row in rdr.deserialize::<GridRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if row.maturity_index >= n || row.calendar_index > row.maturity_index {
            return Err(Error::GridAlignment(format!(
                "{}: cell ({}, {}) outside a {n}-bucket grid",
                path.display(),
                row.calendar_index,
                row.maturity_index
            )));
        }
        let x: T = lit(row.strike_offset);
        let o = match offsets.iter().position(|&a| a == x) {
            Some(o) => o,
            None => {
                offsets.push(x);
                grids.push(ForwardVolGrid::new(n));
                offsets.len() - 1
            }
        };
        grids[o].set(row.calendar_index, row.maturity_index, lit(row.sigma));
    }
    let last = grids.iter().filter_map(|g| g.last_assigned_row()).max().unwrap_or(0);
    Ok(Calibration {
        offsets,
        grids,
        last_calibrated_row: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{discounts_from_forwards, ForwardCurve};

    fn setup(n: usize, rate: f64) -> (TimeGrid<f64>, DiscountCurve<f64>) {
        let g = TimeGrid::new(0.25, n).unwrap();
        let d = discounts_from_forwards(&ForwardCurve::flat(rate, n), &g).unwrap();
        (g, d)
    }

    #[test]
    fn bond_vol_examples() {
        let g = ForwardVolGrid::constant(12, 0.01f64);
        assert_eq!(bond_vol(&g, 0.25, 3, 3), 0.0);
        assert!((bond_vol(&g, 0.25, 2, 6) - 0.01).abs() < 1e-17);
        let mut one = ForwardVolGrid::constant(12, 0.0f64);
        one.set(5, 5, 0.02);
        assert!((bond_vol(&one, 0.25, 5, 6) - 0.005).abs() < 1e-18);
    }

    #[test]
    fn zero_grid_gives_zero_vols() {
        let (tg, d) = setup(40, 0.03);
        let g = ForwardVolGrid::constant(40, 0.0);
        let s = SwapSchedule::new(&tg, 2.0, 5.0, 1.0).unwrap();
        assert_eq!(swap_vol_row(&g, &d, 0.25, 3, &s, 0.03).unwrap(), 0.0);
        assert_eq!(sigma_swaption(&g, &d, &tg, &s, 0.0).unwrap(), 0.0);
    }

    /// Direct evaluation of the swap-vol integral for a flat σ and flat curve.
    fn flat_oracle(s: f64, rate: f64, r_s: f64, t_i: f64, expiry: f64, tenor: usize) -> f64 {
        let b = |u: f64| (-rate * u).exp();
        let integral = |u: f64| s * (u - t_i);
        let fixed: f64 = (1..=tenor)
            .map(|n| {
                let u = expiry + n as f64;
                b(u) * integral(u)
            })
            .sum();
        let end = expiry + tenor as f64;
        r_s * fixed - b(expiry) * integral(expiry) + b(end) * integral(end)
    }

    #[test]
    fn flat_grid_matches_direct_integral() {
        let (tg, d) = setup(60, 0.03);
        let g = ForwardVolGrid::constant(60, 0.008);
        let s = SwapSchedule::new(&tg, 3.0, 5.0, 1.0).unwrap();
        for i in [0, 4, 11] {
            let v = swap_vol_row(&g, &d, 0.25, i, &s, 0.035).unwrap();
            let o = flat_oracle(0.008, 0.03, 0.035, 0.25 * i as f64, 3.0, 5);
            assert!((v - o).abs() < 1e-15, "row {i}: {v} vs {o}");
        }
        assert!(swap_vol_row(&g, &d, 0.25, 12, &s, 0.035).is_err());
    }

    #[test]
    fn degenerate_tenor_terms_cancel() {
        // A swap whose last date is its start: only the r_s term survives.
        let (_, d) = setup(20, 0.02);
        let g = ForwardVolGrid::constant(20, 0.01);
        let s = SwapSchedule {
            start: 8,
            payments: vec![8],
        };
        let v = swap_vol_row(&g, &d, 0.25, 2, &s, 0.05).unwrap();
        let expected = 0.05 * d.at(8) * bond_vol(&g, 0.25, 2, 8);
        assert!((v - expected).abs() < 1e-18);
    }

    #[test]
    fn weights_agree_with_bond_vol_form() {
        let (tg, d) = setup(80, 0.025);
        let g = ForwardVolGrid::from_fn(80, |i, k| 0.005 + 0.0001 * ((i * 7 + k * 3) % 11) as f64);
        let s = SwapSchedule::new(&tg, 4.0, 10.0, 1.0).unwrap();
        let w = swap_cell_weights(&d, 0.25, &s, 0.031);
        for i in 0..16 {
            let direct = swap_vol_row(&g, &d, 0.25, i, &s, 0.031).unwrap();
            let via: f64 = (i..s.end()).map(|k| w[k] * g.get(i, k)).sum();
            assert!((direct - via).abs() < 1e-16);
        }
    }

    #[test]
    fn constant_row_vol_gives_that_sigma() {
        // Flat v(t) ⇒ Σ equals v / A.
        let (tg, d) = setup(40, 0.0);
        let g = ForwardVolGrid::constant(40, 0.01);
        let s = SwapSchedule::new(&tg, 0.25, 1.0, 1.0).unwrap();
        // Single row: v(0) = r_s·B·I(1.25) − I(0.25) + I(1.25) = 0.01·(1.25 − 0.25) at r_s = 0.
        let sig = sigma_swaption(&g, &d, &tg, &s, 0.0).unwrap();
        assert!((sig - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_function_rms() {
        // Rows 0..3 at σ = 0.01, rows 4..7 at σ = 0.02, zero rates, 1y swap at 2y.
        let (tg, d) = setup(40, 0.0);
        let g = ForwardVolGrid::from_fn(40, |i, _| if i < 4 { 0.01 } else { 0.02 });
        let s = SwapSchedule::new(&tg, 2.0, 1.0, 1.0).unwrap();
        // v = σ·(T_N − T) = σ; Σ² = (4·0.25·1e-4 + 4·0.25·4e-4) / 2.
        let expected = ((1e-4 + 4e-4) / 2.0_f64).sqrt();
        assert!((sigma_swaption(&g, &d, &tg, &s, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_grid() {
        let (tg, d) = setup(40, 0.03);
        let targets: Vec<_> = [0.25, 1.0, 2.0]
            .iter()
            .flat_map(|&e| {
                [1.0, 5.0].map(|n| SwaptionVolTarget {
                    expiry: e,
                    tenor: n,
                    strike_offset: 0.0,
                    vol: 0.0,
                    payment_interval: 1.0,
                })
            })
            .collect();
        let g = bootstrap_forward_vols(&targets, &d, &tg, RootChoice::Larger).unwrap();
        for i in 0..40 {
            for k in i..40 {
                assert_eq!(g.get(i, k), 0.0);
            }
        }
    }

    #[test]
    fn single_target_matches_brute_force_root() {
        let (tg, d) = setup(20, 0.0);
        let t = SwaptionVolTarget {
            expiry: 1.0,
            tenor: 2.0,
            strike_offset: 0.0,
            vol: 0.009,
            payment_interval: 1.0,
        };
        let g = bootstrap_forward_vols(&[t], &d, &tg, RootChoice::Larger).unwrap();
        // Brute force: bisect Σ(σ) = 0.009 over a constant grid.
        let s = SwapSchedule::new(&tg, 1.0, 2.0, 1.0).unwrap();
        let (mut lo, mut hi) = (0.0, 0.1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let sig = sigma_swaption(&ForwardVolGrid::constant(20, mid), &d, &tg, &s, 0.0).unwrap();
            if sig < 0.009 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((g.get(0, 0) - lo).abs() < 1e-14);
        assert!((g.get(3, 11) - lo).abs() < 1e-14);
        assert!(!g.is_assigned(4, 4));
    }

    #[test]
    fn decreasing_total_variance_is_rejected() {
        let (tg, d) = setup(40, 0.03);
        let mk = |e: f64, v: f64| SwaptionVolTarget {
            expiry: e,
            tenor: 1.0,
            strike_offset: 0.0,
            vol: v,
            payment_interval: 1.0,
        };
        let err = bootstrap_forward_vols(&[mk(1.0, 0.01), mk(2.0, 0.006)], &d, &tg, RootChoice::Larger).unwrap_err();
        match err {
            Error::CalibrationInfeasible { expiry, tenor, .. } => {
                assert_eq!(expiry, 2.0);
                assert_eq!(tenor, 1.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unreachable_target_is_rejected() {
        // 2y×1y: the cells from the 1y×2y target already carry more variance than the target.
        let (tg, d) = setup(40, 0.03);
        let mk = |e: f64, n: f64, v: f64| SwaptionVolTarget {
            expiry: e,
            tenor: n,
            strike_offset: 0.0,
            vol: v,
            payment_interval: 1.0,
        };
        let targets = [mk(1.0, 1.0, 0.002), mk(1.0, 2.0, 0.03), mk(2.0, 1.0, 0.0021)];
        assert!(matches!(
            bootstrap_forward_vols(&targets, &d, &tg, RootChoice::Larger),
            Err(Error::CalibrationInfeasible { .. })
        ));
    }

    #[test]
    fn roots() {
        assert_eq!(solve_root(1.0, -3.0, 2.0, RootChoice::Larger), Some(2.0));
        assert_eq!(solve_root(1.0, -3.0, 2.0, RootChoice::Smaller), Some(1.0));
        assert_eq!(solve_root(1.0, 1.0, -2.0, RootChoice::Smaller), Some(1.0));
        assert_eq!(solve_root(1.0, 0.0, 1.0, RootChoice::Larger), None);
        assert_eq!(solve_root(1.0, 3.0, 2.0, RootChoice::Larger), None);
        assert_eq!(solve_root(2.0, 0.0, 0.0, RootChoice::Larger), Some(0.0));
    }

    #[test]
    fn fill_extends_rows_by_time_to_maturity() {
        let mut g = ForwardVolGrid::<f64>::new(6);
        for k in 0..4 {
            g.set(0, k, 0.01 * (k + 1) as f64);
        }
        g.set(1, 1, 0.5);
        g.fill_unassigned();
        assert_eq!(g.get(0, 5), 0.04);
        assert_eq!(g.get(1, 4), 0.5);
        assert_eq!(g.get(3, 3), 0.5);
        assert_eq!(g.get(2, 5), 0.5);
    }
}
