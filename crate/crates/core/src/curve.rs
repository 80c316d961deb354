//! Discount and forward curve arithmetic on a uniform time lattice.
//!
//! Forward rates are continuously compounded and piecewise constant per
//! bucket `[j·dt, (j+1)·dt)`, so bond prices are exponentials of dt-weighted
//! partial sums:
//!
//! ```text
//! B(t_i, t_j) = exp(−dt · Σ_{k=i}^{j−1} f(t_i, t_k))
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::PathState;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Uniform calendar/maturity lattice `t_i = i·dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    dt: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(dt: T, n_steps: usize) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs at least one step".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Smallest grid with step `dt` whose horizon reaches `horizon` years.
    pub fn covering(dt: T, horizon: T) -> Result<Self> {
        let n = (horizon / dt - lit(1e-9)).ceil();
        let n = n.to_usize().ok_or_else(|| Error::InvalidInput(format!("bad horizon {horizon}")))?;
        Self::new(dt, n.max(1))
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> T {
        self.time(self.n_steps)
    }

    pub fn time(&self, i: usize) -> T {
        T::from_usize(i).unwrap() * self.dt
    }

    /// Index of grid time `t`; fails unless `t` sits on a lattice point.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let k = (t / self.dt).round();
        let eps = (T::epsilon() * lit(64.0)).max(lit(1e-9));
        let tol = eps * t.abs().max(T::one());
        if !t.is_finite() || t < -tol || (k * self.dt - t).abs() > tol {
            return Err(Error::GridAlignment(format!(
                "t = {t} is not a multiple of dt = {}",
                self.dt
            )));
        }
        let idx = k.to_usize().unwrap_or(usize::MAX);
        if idx > self.n_steps {
            return Err(Error::GridAlignment(format!(
                "t = {t} lies beyond the grid horizon {}",
                self.horizon()
            )));
        }
        Ok(idx)
    }

    /// Number of grid steps in `span` years; `span` must be a positive multiple of dt.
    pub fn steps_in(&self, span: T) -> Result<usize> {
        let k = (span / self.dt).round();
        let eps = (T::epsilon() * lit(64.0)).max(lit(1e-9));
        if !(span > T::zero()) || (k * self.dt - span).abs() > eps * span.max(T::one()) {
            return Err(Error::GridAlignment(format!(
                "{span} is not a positive multiple of dt = {}",
                self.dt
            )));
        }
        Ok(k.to_usize().unwrap())
    }
}

/// Time-0 instantaneous forward rates `f(0, τ_j)`, one per grid bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve<T> {
    rates: Vec<T>,
}

impl<T: Real> ForwardCurve<T> {
    pub fn new(rates: Vec<T>) -> Result<Self> {
        if let Some((j, r)) = rates.iter().enumerate().find(|(_, r)| !r.is_finite()) {
            return Err(Error::InvalidInput(format!("forward rate in bucket {j} is not finite: {r}")));
        }
        Ok(Self { rates })
    }

    pub fn flat(rate: T, n: usize) -> Self {
        Self { rates: vec![rate; n] }
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Time-0 zero-coupon bond prices `B(0, T_j)` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve<T> {
    discounts: Vec<T>,
}

impl<T: Real> DiscountCurve<T> {
    pub fn new(discounts: Vec<T>) -> Result<Self> {
        if discounts.is_empty() {
            return Err(Error::InvalidInput("empty discount curve".into()));
        }
        if let Some((j, b)) = discounts
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b > T::zero()))
        {
            return Err(Error::InvalidInput(format!("discount factor {j} must be positive, got {b}")));
        }
        Ok(Self { discounts })
    }

    pub fn discounts(&self) -> &[T] {
        &self.discounts
    }

    pub fn at(&self, j: usize) -> T {
        self.discounts[j]
    }

    pub fn len(&self) -> usize {
        self.discounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discounts.is_empty()
    }

    /// Annuity `Σ_n B(0, T_n)` over a swap's fixed-leg payment dates.
    pub fn annuity(&self, schedule: &SwapSchedule) -> T {
        schedule.payments.iter().map(|&p| self.discounts[p]).sum()
    }
}

/// `B(0,T_j) = exp(−dt·Σ_{k<j} f(0,τ_k))` for `j = 0..=n_steps`.
pub fn discounts_from_forwards<T: Real>(fwd: &ForwardCurve<T>, grid: &TimeGrid<T>) -> Result<DiscountCurve<T>> {
    if fwd.len() < grid.n_steps() {
        return Err(Error::GridAlignment(format!(
            "forward curve has {} buckets, grid needs {}",
            fwd.len(),
            grid.n_steps()
        )));
    }
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    let mut acc = T::zero();
    out.push(T::one());
    for &f in &fwd.rates[..grid.n_steps()] {
        acc = acc + f * dt;
        out.push((-acc).exp());
    }
    DiscountCurve::new(out)
}

/// Inverse of [`discounts_from_forwards`]: `f_j = ln(B_j / B_{j+1}) / dt`.
pub fn forwards_from_discounts<T: Real>(disc: &DiscountCurve<T>, grid: &TimeGrid<T>) -> Result<ForwardCurve<T>> {
    let d = disc.discounts();
    if d.len() < grid.n_steps() + 1 {
        return Err(Error::GridAlignment(format!(
            "discount curve has {} points, grid needs {}",
            d.len(),
            grid.n_steps() + 1
        )));
    }
    let dt = grid.dt();
    // Work with log-levels so the partial sums telescope back exactly.
    let base = d[0].ln();
    let rates = (0..grid.n_steps())
        .map(|j| ((d[j].ln() - base) - (d[j + 1].ln() - base)) / dt)
        .collect();
    ForwardCurve::new(rates)
}

/// Fixed-leg layout of a swap on the grid: start index and payment indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapSchedule {
    pub start: usize,
    pub payments: Vec<usize>,
}

impl SwapSchedule {
    pub fn new<T: Real>(grid: &TimeGrid<T>, expiry: T, tenor: T, payment_interval: T) -> Result<Self> {
        let start = grid.index_of(expiry)?;
        let step = grid.steps_in(payment_interval)?;
        let tenor_steps = grid.steps_in(tenor)?;
        if tenor_steps % step != 0 {
            return Err(Error::GridAlignment(format!(
                "tenor {tenor} is not a whole number of {payment_interval}y payment periods"
            )));
        }
        Self::from_steps(grid, start, tenor_steps / step, step)
    }

    pub fn from_steps<T: Real>(grid: &TimeGrid<T>, start: usize, n_payments: usize, step: usize) -> Result<Self> {
        let end = start + n_payments * step;
        if end > grid.n_steps() {
            return Err(Error::GridAlignment(format!(
                "swap ending at {} lies beyond the grid horizon {}",
                to_f64(grid.time(end)),
                to_f64(grid.horizon())
            )));
        }
        Ok(Self {
            start,
            payments: (1..=n_payments).map(|n| start + n * step).collect(),
        })
    }

    pub fn end(&self) -> usize {
        *self.payments.last().unwrap_or(&self.start)
    }
}

/// Time-0 forward swap rate `(B(0,T) − B(0,T_N)) / Σ B(0,T_n)`.
pub fn atm_swap_rate<T: Real>(
    disc: &DiscountCurve<T>,
    grid: &TimeGrid<T>,
    expiry: T,
    tenor: T,
    payment_interval: T,
) -> Result<T> {
    let schedule = SwapSchedule::new(grid, expiry, tenor, payment_interval)?;
    if schedule.end() >= disc.len() {
        return Err(Error::GridAlignment("discount curve too short for swap".into()));
    }
    Ok(atm_rate_for(disc, &schedule))
}

pub(crate) fn atm_rate_for<T: Real>(disc: &DiscountCurve<T>, schedule: &SwapSchedule) -> T {
    (disc.at(schedule.start) - disc.at(schedule.end())) / disc.annuity(schedule)
}

/// Swap rate implied by a forward curve (absolute bucket indexing) for `schedule`.
///
/// Bond prices are measured from the swap start, `B(T, T_m) = exp(−dt·Σ_{k=start}^{m−1} f_k)`.
pub fn swap_rate_from_forwards<T: Real>(forwards: &[T], dt: T, schedule: &SwapSchedule) -> Result<T> {
    if schedule.end() > forwards.len() {
        return Err(Error::GridAlignment(format!(
            "curve covers {} buckets, swap needs {}",
            forwards.len(),
            schedule.end()
        )));
    }
    let mut acc = T::zero();
    let mut k = schedule.start;
    let mut annuity = T::zero();
    let mut last = T::one();
    for &p in &schedule.payments {
        while k < p {
            acc = acc + forwards[k];
            k += 1;
        }
        last = (-(acc * dt)).exp();
        annuity = annuity + last;
    }
    Ok((T::one() - last) / annuity)
}

/// Swap rate seen on a simulated path at the swap's start date.
pub fn swap_rate_at_state<T: Real>(state: &PathState<T>, dt: T, schedule: &SwapSchedule) -> Result<T> {
    if schedule.start < state.step() {
        return Err(Error::GridAlignment(format!(
            "swap starts at index {} but the path is already at step {}",
            schedule.start,
            state.step()
        )));
    }
    swap_rate_from_forwards(state.curve(), dt, schedule)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    tenor_years: f64,
    forward_rate: f64,
}

/// Reads the `tenor_years,forward_rate` curve file; rows must sit on consecutive bucket starts.
pub fn read_curve_csv<T: Real>(path: impl AsRef<Path>, grid: &TimeGrid<T>) -> Result<ForwardCurve<T>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rates = Vec::new();
    for (row_no, row) in rdr.deserialize::<CurveRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let idx = grid
            .index_of(lit(row.tenor_years))
            .or_else(|_| {
                // Rows past the grid horizon are allowed but ignored.
                if row.tenor_years >= to_f64(grid.horizon()) {
                    Ok(usize::MAX)
                } else {
                    Err(Error::GridAlignment(format!(
                        "{}: row {} tenor {} is not a grid bucket start",
                        path.display(),
                        row_no + 1,
                        row.tenor_years
                    )))
                }
            })?;
        if idx == usize::MAX {
            continue;
        }
        if idx != rates.len() {
            return Err(Error::GridAlignment(format!(
                "{}: row {} has tenor {}, expected bucket start {}",
                path.display(),
                row_no + 1,
                row.tenor_years,
                to_f64(grid.time(rates.len()))
            )));
        }
        rates.push(lit(row.forward_rate));
    }
    if rates.len() < grid.n_steps() {
        return Err(Error::GridAlignment(format!(
            "{}: curve covers {} buckets, grid needs {}",
            path.display(),
            rates.len(),
            grid.n_steps()
        )));
    }
    ForwardCurve::new(rates)
}

pub fn write_curve_csv<T: Real>(path: impl AsRef<Path>, curve: &ForwardCurve<T>, grid: &TimeGrid<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (j, &r) in curve.rates().iter().enumerate() {
        w.serialize(CurveRow {
            tenor_years: to_f64(grid.time(j)),
            forward_rate: to_f64(r),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid<f64> {
        TimeGrid::new(0.25, n).unwrap()
    }

    #[test]
    fn zero_rates_give_unit_discounts() {
        let g = grid(40);
        let d = discounts_from_forwards(&ForwardCurve::flat(0.0, 40), &g).unwrap();
        assert_eq!(d.len(), 41);
        assert!(d.discounts().iter().all(|&b| b == 1.0));
    }

    #[test]
    fn flat_three_percent_one_year() {
        let g = grid(8);
        let d = discounts_from_forwards(&ForwardCurve::flat(0.03, 8), &g).unwrap();
        assert!((d.at(4) - (-0.03_f64).exp()).abs() < 1e-15);
        assert!((d.at(4) - 0.970_446).abs() < 1e-6);
    }

    #[test]
    fn single_bucket() {
        let g = grid(1);
        let d = discounts_from_forwards(&ForwardCurve::new(vec![0.04]).unwrap(), &g).unwrap();
        assert_eq!(d.at(0), 1.0);
        assert!((d.at(1) - (-0.01_f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn rejects_short_or_non_finite_curves() {
        assert!(matches!(
            discounts_from_forwards(&ForwardCurve::flat(0.01, 3), &grid(4)),
            Err(Error::GridAlignment(_))
        ));
        assert!(matches!(
            ForwardCurve::new(vec![0.01, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn atm_rate_flat_curve() {
        let g = grid(20);
        let d = discounts_from_forwards(&ForwardCurve::flat(0.0, 20), &g).unwrap();
        assert_eq!(atm_swap_rate(&d, &g, 1.0, 2.0, 1.0).unwrap(), 0.0);

        let d = discounts_from_forwards(&ForwardCurve::flat(0.03, 20), &g).unwrap();
        let r = atm_swap_rate(&d, &g, 1.0, 2.0, 1.0).unwrap();
        let e = |x: f64| (-x).exp();
        let expected = (e(0.03) - e(0.09)) / (e(0.06) + e(0.09));
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 0.030_455).abs() < 1e-6);
    }

    #[test]
    fn atm_rate_is_scale_invariant() {
        let g = grid(24);
        let fwd = ForwardCurve::new((0..24).map(|j| 0.02 + 0.001 * j as f64).collect()).unwrap();
        let d = discounts_from_forwards(&fwd, &g).unwrap();
        let scaled = DiscountCurve::new(d.discounts().iter().map(|b| 2.0 * b).collect()).unwrap();
        let a = atm_swap_rate(&d, &g, 1.0, 5.0, 1.0).unwrap();
        let b = atm_swap_rate(&scaled, &g, 1.0, 5.0, 1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn off_grid_payment_is_rejected() {
        let g = grid(20);
        let d = discounts_from_forwards(&ForwardCurve::flat(0.01, 20), &g).unwrap();
        assert!(matches!(atm_swap_rate(&d, &g, 1.1, 2.0, 1.0), Err(Error::GridAlignment(_))));
        assert!(matches!(atm_swap_rate(&d, &g, 1.0, 1.5, 1.0), Err(Error::GridAlignment(_))));
        assert!(matches!(atm_swap_rate(&d, &g, 1.0, 5.0, 1.0), Err(Error::GridAlignment(_))));
    }

    #[test]
    fn swap_rate_one_payment_is_simple_forward() {
        let fwd: Vec<f64> = (0..12).map(|j| 0.01 + 0.002 * j as f64).collect();
        let g = grid(12);
        let s = SwapSchedule::new(&g, 1.0, 1.0, 1.0).unwrap();
        let r = swap_rate_from_forwards(&fwd, 0.25, &s).unwrap();
        let b1: f64 = (-(fwd[4..8].iter().sum::<f64>()) * 0.25).exp();
        assert!((r - (1.0 - b1) / b1).abs() < 1e-15);
    }

    #[test]
    fn swap_rate_matches_atm_on_static_curve() {
        let g = grid(60);
        let fwd = ForwardCurve::new((0..60).map(|j| 0.03 + 0.0002 * j as f64).collect()).unwrap();
        let d = discounts_from_forwards(&fwd, &g).unwrap();
        let s = SwapSchedule::new(&g, 2.0, 10.0, 1.0).unwrap();
        let atm = atm_rate_for(&d, &s);
        let path = swap_rate_from_forwards(fwd.rates(), 0.25, &s).unwrap();
        assert!((atm - path).abs() < 1e-14);
    }

    #[test]
    fn parallel_shift_moves_swap_rate_by_about_the_shift() {
        // Brute force: shift every forward by 1% and re-evaluate the swap rate.
        let g = grid(60);
        let fwd: Vec<f64> = (0..60).map(|j| 0.005 + 0.0001 * j as f64).collect();
        let shifted: Vec<f64> = fwd.iter().map(|f| f + 0.01).collect();
        let s = SwapSchedule::new(&g, 2.0, 5.0, 1.0).unwrap();
        let r0 = swap_rate_from_forwards(&fwd, 0.25, &s).unwrap();
        let r1 = swap_rate_from_forwards(&shifted, 0.25, &s).unwrap();
        // Continuous compounding of an annual coupon: shift is reproduced up to O(rate²).
        assert!((r1 - r0 - 0.01).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn forwards_discounts_round_trip(logs in proptest::collection::vec(-0.05f64..0.15, 1..120)) {
            let n = logs.len();
            let g = grid(n);
            // Positive discount sequence starting at 1.
            let mut d = vec![1.0];
            let mut acc = 0.0;
            for l in &logs {
                acc += l * 0.25;
                d.push((-acc).exp());
            }
            let disc = DiscountCurve::new(d).unwrap();
            let back = discounts_from_forwards(&forwards_from_discounts(&disc, &g).unwrap(), &g).unwrap();
            for (a, b) in disc.discounts().iter().zip(back.discounts()) {
                prop_assert!(((a - b) / a).abs() < 1e-14);
            }
        }
    }
}
