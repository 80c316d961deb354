//! Normal-model local volatility on the simulation grid.
//!
//! For a forward rate with total implied variance `w(x, t)` as a function of
//! the strike offset `x`, the local variance is
//!
//! ```text
//!            ∂w/∂t
//! v_L² = ───────────────────────────────────────────────────────
//!        1 − (x/w) w_x + ¼ (−1/w + x²/w²) w_x² + ½ w_xx
//! ```
//!
//! The time derivative is a forward difference in calendar time at fixed
//! absolute maturity, which the variance-grid recurrence makes exact at the
//! quoted offsets.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::smallvol::{nearest_index, Calibration};
use crate::smile::{build_variance_grid, eval_smile, SmileCube, SmileFit, SmileKnots};

/// Protection against the formula's singularities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvParams<T> {
    /// Floor on the denominator.
    pub d_min: T,
    /// Floor on `w` inside the `1/w` terms.
    pub w_floor: T,
    pub v_min: T,
    pub v_max: T,
}

impl<T: Real> Default for LvParams<T> {
    fn default() -> Self {
        Self {
            d_min: lit(0.1),
            w_floor: lit(1e-12),
            v_min: lit(1e-5),
            v_max: lit(0.2),
        }
    }
}

/// Local variance over `[t_i, t_{i+1})` from the slices at `i` and `i + 1`.
///
/// Returns the (possibly clamped) variance and whether any floor or cap fired.
#[inline]
pub fn local_variance<T: Real>(
    fit_now: &SmileFit<T>,
    fit_next: &SmileFit<T>,
    x: T,
    dt: T,
    params: &LvParams<T>,
) -> (T, bool) {
    let (w_raw, wx, wxx) = eval_smile(fit_now, x);
    let w_next = eval_smile(fit_next, x).0;
    let num = (w_next - w_raw) / dt;

    let mut clamped = w_raw < params.w_floor;
    let w = w_raw.max(params.w_floor);
    let r = x / w;
    let quarter: T = lit(0.25);
    let half: T = lit(0.5);
    let denom = T::one() - r * wx + quarter * (r * r - w.recip()) * wx * wx + half * wxx;
    if denom < params.d_min {
        clamped = true;
    }
    let v2 = num / denom.max(params.d_min);
    let (lo, hi) = (params.v_min * params.v_min, params.v_max * params.v_max);
    if !(v2 >= lo && v2 <= hi) {
        clamped = true;
    }
    // NaN propagates past max/min on purpose so callers can detect it.
    let v2 = if v2.is_nan() { v2 } else { v2.max(lo).min(hi) };
    (v2, clamped)
}

/// Local-volatility lookup for every calendar step and live maturity bucket.
#[derive(Debug, Clone)]
pub struct LocalVolSurface<T> {
    dt: T,
    cube: SmileCube<T>,
    params: LvParams<T>,
    offsets: Vec<T>,
    /// `σ_X(t_0, τ_j)` per offset, used for the first step.
    first_row: Vec<Vec<T>>,
}

impl<T: Real> LocalVolSurface<T> {
    /// Builds variance grid and smile fits for `rows` calendar steps.
    pub fn from_calibration(
        cal: &Calibration<T>,
        dt: T,
        rows: usize,
        knots: SmileKnots<T>,
        params: LvParams<T>,
    ) -> Result<Self> {
        let var = build_variance_grid(&cal.offsets, &cal.grids, dt, rows)?;
        let cube = SmileCube::fit(&var, knots)?;
        let first_row = cal.grids.iter().map(|g| g.row(0).to_vec()).collect();
        Ok(Self {
            dt,
            cube,
            params,
            offsets: cal.offsets.clone(),
            first_row,
        })
    }

    pub fn from_parts(dt: T, cube: SmileCube<T>, params: LvParams<T>, offsets: Vec<T>, first_row: Vec<Vec<T>>) -> Self {
        Self {
            dt,
            cube,
            params,
            offsets,
            first_row,
        }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Calendar steps the surface can drive (`i < steps()`).
    pub fn steps(&self) -> usize {
        self.cube.rows()
    }

    pub fn buckets(&self) -> usize {
        self.cube.buckets()
    }

    pub fn params(&self) -> &LvParams<T> {
        &self.params
    }

    pub fn smiles(&self) -> &SmileCube<T> {
        &self.cube
    }

    fn check(&self, i: usize, j: usize, x: T) -> Result<()> {
        if i >= self.steps() || j >= self.buckets() || j < i {
            return Err(Error::LocalVol {
                i,
                j,
                x: to_f64(x),
                reason: format!(
                    "outside the surface ({} steps, {} buckets, need j ≥ i)",
                    self.steps(),
                    self.buckets()
                ),
            });
        }
        Ok(())
    }

    /// `(v_L², clamped)` for step `i`, maturity bucket `j` at strike offset `x`.
    pub fn local_variance(&self, i: usize, j: usize, x: T) -> Result<(T, bool)> {
        self.check(i, j, x)?;
        let out = if i == 0 {
            let o = nearest_index(&self.offsets, x);
            let s = self.first_row[o][j];
            (s * s, false)
        } else {
            local_variance(self.cube.get(i, j), self.cube.get(i + 1, j), x, self.dt, &self.params)
        };
        if !out.0.is_finite() {
            return Err(Error::LocalVol {
                i,
                j,
                x: to_f64(x),
                reason: "non-finite local variance".into(),
            });
        }
        Ok(out)
    }

    pub fn local_vol(&self, i: usize, j: usize, x: T) -> Result<T> {
        self.local_variance(i, j, x).map(|(v2, _)| v2.sqrt())
    }

    /// Local vols for buckets `first, first+1, …` at step `i`, written into `out`.
    ///
    /// Returns how many entries hit a floor or cap.
    pub fn local_vol_row_into(&self, i: usize, first: usize, strikes: &[T], out: &mut [T]) -> Result<usize> {
        let end = first + strikes.len();
        if strikes.len() != out.len() {
            return Err(Error::InvalidInput("strike and output rows differ in length".into()));
        }
        if strikes.is_empty() {
            return Ok(0);
        }
        self.check(i, first, strikes[0])?;
        self.check(i, end - 1, strikes[strikes.len() - 1])?;
        if i == 0 {
            for (k, (&x, v)) in strikes.iter().zip(out.iter_mut()).enumerate() {
                *v = self.first_row[nearest_index(&self.offsets, x)][first + k];
            }
            return Ok(0);
        }
        let mut clamps = 0;
        for (k, (&x, v)) in strikes.iter().zip(out.iter_mut()).enumerate() {
            let j = first + k;
            let (v2, c) = local_variance(self.cube.get(i, j), self.cube.get(i + 1, j), x, self.dt, &self.params);
            if !v2.is_finite() {
                return Err(Error::LocalVol {
                    i,
                    j,
                    x: to_f64(x),
                    reason: "non-finite local variance".into(),
                });
            }
            clamps += c as usize;
            *v = v2.sqrt();
        }
        Ok(clamps)
    }

    /// Allocating form of [`Self::local_vol_row_into`].
    pub fn local_vol_row(&self, i: usize, first: usize, strikes: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); strikes.len()];
        self.local_vol_row_into(i, first, strikes, &mut out)?;
        Ok(out)
    }
}
