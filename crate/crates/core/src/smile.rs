//! Implied grid variance and its strike interpolation.
//!
//! `w(X, t_i, τ_j) = dt·Σ_{n<i} σ_X(t_n, τ_j)²` is the variance the forward
//! rate maturing at `τ_j` has accumulated by calendar time `t_i` under the
//! grid calibrated at strike offset `X`. Across offsets each `(i, j)` slice is
//! fitted with a quadratic on `(−x₀, x₀)`, quadratic wings whose slope decays
//! to zero at `x_d`/`x_u`, and constants beyond.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::smallvol::ForwardVolGrid;

/// Knots of the piecewise smile: `x_d < −x₀ < 0 < x₀ < x_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileKnots<T> {
    pub x0: T,
    pub xd: T,
    pub xu: T,
}

impl<T: Real> SmileKnots<T> {
    pub fn new(x0: T, xd: T, xu: T) -> Result<Self> {
        if !(xd < -x0 && -x0 < T::zero() && x0 < xu) {
            return Err(Error::InvalidInput(format!(
                "smile knots must satisfy x_d < -x0 < 0 < x0 < x_u, got x_d={xd}, x0={x0}, x_u={xu}"
            )));
        }
        Ok(Self { x0, xd, xu })
    }
}

impl<T: Real> Default for SmileKnots<T> {
    fn default() -> Self {
        Self {
            x0: lit(0.02),
            xd: lit(-0.10),
            xu: lit(0.10),
        }
    }
}

/// Total implied variance cube `w(X, i, j)` for `i = 0..=rows`, `j < n`.
#[derive(Debug, Clone)]
pub struct VarianceGrid<T> {
    offsets: Vec<T>,
    rows: usize,
    n: usize,
    // w[o][i * n + j]
    w: Vec<Vec<T>>,
}

impl<T: Real> VarianceGrid<T> {
    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    /// Number of calendar steps covered (`i` runs over `0..=rows`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn buckets(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, offset_index: usize, i: usize, j: usize) -> T {
        self.w[offset_index][i * self.n + j]
    }

    /// `(offset, w)` pairs of slice `(i, j)`.
    pub fn slice(&self, i: usize, j: usize) -> Vec<(T, T)> {
        self.offsets
            .iter()
            .enumerate()
            .map(|(o, &x)| (x, self.get(o, i, j)))
            .collect()
    }
}

/// Accumulates `w(X, i, j)` through the partial-sum recurrence
/// `w(X, i+1, j) = w(X, i, j) + dt·σ_X(t_i, τ_j)²`.
///
/// Maturities already past (`j < i`) keep their final value.
pub fn build_variance_grid<T: Real>(
    offsets: &[T],
    grids: &[ForwardVolGrid<T>],
    dt: T,
    rows: usize,
) -> Result<VarianceGrid<T>> {
    if offsets.len() != grids.len() || grids.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} offsets for {} volatility grids",
            offsets.len(),
            grids.len()
        )));
    }
    let n = grids[0].size();
    if grids.iter().any(|g| g.size() != n) {
        return Err(Error::InvalidInput("volatility grids differ in size".into()));
    }
    if rows > n {
        return Err(Error::InvalidInput(format!("{rows} calendar rows exceed the {n}-bucket grid")));
    }
    let w = grids
        .iter()
        .map(|g| {
            let mut w = vec![T::zero(); (rows + 1) * n];
            for i in 0..rows {
                for j in 0..n {
                    let prev = w[i * n + j];
                    let inc = if j >= i { g.get(i, j).powi(2) * dt } else { T::zero() };
                    w[(i + 1) * n + j] = prev + inc;
                }
            }
            w
        })
        .collect();
    Ok(VarianceGrid {
        offsets: offsets.to_vec(),
        rows,
        n,
        w,
    })
}

/// Piecewise-quadratic C¹ smile of one `(i, j)` slice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmileFit<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub alpha_d: T,
    pub beta_d: T,
    pub gamma_d: T,
    pub alpha_u: T,
    pub beta_u: T,
    pub gamma_u: T,
    pub x0: T,
    pub xd: T,
    pub xu: T,
}

impl<T: Real> SmileFit<T> {
    /// Constant smile `w ≡ c`.
    pub fn flat(c: T, knots: SmileKnots<T>) -> Self {
        Self::from_central(c, T::zero(), T::zero(), knots)
    }

    /// Completes wings and tails from central coefficients.
    pub fn from_central(alpha: T, beta: T, gamma: T, knots: SmileKnots<T>) -> Self {
        let SmileKnots { x0, xd, xu } = knots;
        let two: T = lit(2.0);
        let alpha_d = central(alpha, beta, gamma, -x0);
        let beta_d = central_slope(beta, gamma, -x0);
        let alpha_u = central(alpha, beta, gamma, x0);
        let beta_u = central_slope(beta, gamma, x0);
        Self {
            alpha,
            beta,
            gamma,
            alpha_d,
            beta_d,
            gamma_d: -beta_d / (two * (xd + x0)),
            alpha_u,
            beta_u,
            gamma_u: -beta_u / (two * (xu - x0)),
            x0,
            xd,
            xu,
        }
    }

    /// Central quadratic with its derivatives, at any `x`.
    pub fn central_branch(&self, x: T) -> (T, T, T) {
        (
            central(self.alpha, self.beta, self.gamma, x),
            central_slope(self.beta, self.gamma, x),
            lit::<T>(2.0) * self.gamma,
        )
    }

    /// Lower wing at any `x`. Written in `u / L` so the slope at `x_d` is exactly 0.
    pub fn lower_wing(&self, x: T) -> (T, T, T) {
        wing(self.alpha_d, self.beta_d, x + self.x0, self.xd + self.x0)
    }

    pub fn upper_wing(&self, x: T) -> (T, T, T) {
        wing(self.alpha_u, self.beta_u, x - self.x0, self.xu - self.x0)
    }

    pub fn lower_tail(&self) -> T {
        self.lower_wing(self.xd).0
    }

    pub fn upper_tail(&self) -> T {
        self.upper_wing(self.xu).0
    }

    /// Smallest value on `[x_d, x_u]`.
    pub fn min_on_support(&self) -> T {
        let mut m = self.lower_tail().min(self.upper_tail());
        let mut consider = |x: T| {
            if x >= self.xd && x <= self.xu {
                m = m.min(eval_smile(self, x).0);
            }
        };
        consider(-self.x0);
        consider(self.x0);
        let two: T = lit(2.0);
        if self.gamma != T::zero() {
            let v = -self.beta / (two * self.gamma);
            if v > -self.x0 && v < self.x0 {
                consider(v);
            }
        }
        if self.gamma_d != T::zero() {
            consider(-self.x0 - self.beta_d / (two * self.gamma_d));
        }
        if self.gamma_u != T::zero() {
            consider(self.x0 - self.beta_u / (two * self.gamma_u));
        }
        m
    }
}

#[inline]
fn wing<T: Real>(a: T, b: T, u: T, span: T) -> (T, T, T) {
    let r = u / span;
    let half: T = lit(0.5);
    (a + b * u * (T::one() - half * r), b * (T::one() - r), -b / span)
}

#[inline]
fn central<T: Real>(a: T, b: T, c: T, x: T) -> T {
    a + b * x + c * x * x
}

#[inline]
fn central_slope<T: Real>(b: T, c: T, x: T) -> T {
    b + lit::<T>(2.0) * c * x
}

/// Value, first and second strike derivative of a fitted smile.
///
/// Branches: central on `(−x₀, x₀)`, wings on `(x_d, −x₀]` and `[x₀, x_u)`,
/// constants with zero derivatives on `x ≤ x_d` and `x ≥ x_u`.
#[inline]
pub fn eval_smile<T: Real>(fit: &SmileFit<T>, x: T) -> (T, T, T) {
    if x <= fit.xd {
        (fit.lower_tail(), T::zero(), T::zero())
    } else if x >= fit.xu {
        (fit.upper_tail(), T::zero(), T::zero())
    } else if x <= -fit.x0 {
        fit.lower_wing(x)
    } else if x >= fit.x0 {
        fit.upper_wing(x)
    } else {
        fit.central_branch(x)
    }
}

/// Least-squares central quadratic over the offsets in `[−x₀, x₀]` plus the
/// derived wings. `(i, j)` only label errors.
pub fn fit_smile<T: Real>(points: &[(T, T)], knots: SmileKnots<T>, i: usize, j: usize) -> Result<SmileFit<T>> {
    let tol = T::epsilon() * lit(64.0) * knots.x0;
    let mut central_pts: Vec<(T, T)> = points
        .iter()
        .copied()
        .filter(|(x, _)| x.abs() <= knots.x0 + tol)
        .collect();
    central_pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    central_pts.dedup_by(|a, b| a.0 == b.0);
    if central_pts.len() < 3 {
        return Err(Error::SmileFit {
            i,
            j,
            reason: format!("{} distinct offsets inside ±x0, need 3", central_pts.len()),
        });
    }
    if central_pts.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
        return Err(Error::SmileFit {
            i,
            j,
            reason: "non-finite variance".into(),
        });
    }
    let (alpha, beta, gamma) = least_squares_quadratic(&central_pts, knots.x0).ok_or_else(|| Error::SmileFit {
        i,
        j,
        reason: "singular least-squares system".into(),
    })?;
    let fit = SmileFit::from_central(alpha, beta, gamma, knots);
    if i > 0 {
        let m = fit.min_on_support();
        if !(m > T::zero()) {
            return Err(Error::SmileFit {
                i,
                j,
                reason: format!("fitted variance reaches {} on [x_d, x_u]", to_f64(m)),
            });
        }
    }
    Ok(fit)
}

/// Fits `w ≈ a + b x + c x²` in the scaled variable `x / scale` for conditioning.
fn least_squares_quadratic<T: Real>(pts: &[(T, T)], scale: T) -> Option<(T, T, T)> {
    let mut m = [[T::zero(); 3]; 3];
    let mut r = [T::zero(); 3];
    for &(x, w) in pts {
        let u = x / scale;
        let basis = [T::one(), u, u * u];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = m[a][b] + basis[a] * basis[b];
            }
            r[a] = r[a] + basis[a] * w;
        }
    }
    let sol = solve3(m, r)?;
    Some((sol[0], sol[1] / scale, sol[2] / (scale * scale)))
}

/// Gaussian elimination with partial pivoting.
fn solve3<T: Real>(mut m: [[T; 3]; 3], mut r: [T; 3]) -> Option<[T; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap())?;
        if m[p][c].abs() <= T::epsilon() {
            return None;
        }
        m.swap(c, p);
        r.swap(c, p);
        for row in c + 1..3 {
            let f = m[row][c] / m[c][c];
            for col in c..3 {
                m[row][col] = m[row][col] - f * m[c][col];
            }
            r[row] = r[row] - f * r[c];
        }
    }
    let mut x = [T::zero(); 3];
    for c in (0..3).rev() {
        let s: T = (c + 1..3).map(|k| m[c][k] * x[k]).sum();
        x[c] = (r[c] - s) / m[c][c];
    }
    Some(x)
}

/// Smile fits for every slice `(i, j)` with `1 ≤ i ≤ rows`; slice `i = 0` is zero.
#[derive(Debug, Clone)]
pub struct SmileCube<T> {
    rows: usize,
    n: usize,
    knots: SmileKnots<T>,
    fits: Vec<SmileFit<T>>,
}

impl<T: Real> SmileCube<T> {
    pub fn fit(var: &VarianceGrid<T>, knots: SmileKnots<T>) -> Result<Self> {
        let (rows, n) = (var.rows(), var.buckets());
        let mut fits = vec![SmileFit::flat(T::zero(), knots); (rows + 1) * n];
        for i in 1..=rows {
            // A slice is meaningful while its maturity was alive during [t_{i−1}, t_i).
            for j in (i - 1)..n {
                fits[i * n + j] = fit_smile(&var.slice(i, j), knots, i, j)?;
            }
        }
        Ok(Self { rows, n, knots, fits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn buckets(&self) -> usize {
        self.n
    }

    pub fn knots(&self) -> SmileKnots<T> {
        self.knots
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &SmileFit<T> {
        &self.fits[i * self.n + j]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &SmileFit<T>)> {
        (1..=self.rows).flat_map(move |i| ((i - 1)..self.n).map(move |j| (i, j, self.get(i, j))))
    }
}
