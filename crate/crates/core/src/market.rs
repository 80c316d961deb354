//! Swaption quotes in normal-volatility terms.
//!
//! Holds the quote surface (expiry × tenor × strike offset), the Bachelier
//! pricer and its inverse, linear-in-time interpolation of implied total
//! variance, and the deterministic synthetic fixture surface used by the
//! acceptance suite.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{ForwardCurve, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::{lit, norm_cdf, norm_pdf, to_f64, Real};

/// Fixed-leg direction of a swaption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionKind {
    /// Right to pay fixed: a call on the swap rate.
    Payer,
    /// Right to receive fixed: a put on the swap rate.
    Receiver,
}

impl OptionKind {
    /// The out-of-the-money side for strike offset `x` (payer for `x ≥ 0`).
    pub fn out_of_the_money<T: Real>(x: T) -> Self {
        if x >= T::zero() {
            OptionKind::Payer
        } else {
            OptionKind::Receiver
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwaptionQuote<T> {
    pub expiry: T,
    pub tenor: T,
    /// Strike minus the time-0 ATM swap rate.
    pub strike_offset: T,
    pub normal_vol: T,
}

/// Rectangular quote cube indexed by (strike offset, expiry, tenor).
#[derive(Debug, Clone)]
pub struct QuoteSurface<T> {
    expiries: Vec<T>,
    tenors: Vec<T>,
    offsets: Vec<T>,
    // vols[(o * n_expiries + e) * n_tenors + t]
    vols: Vec<T>,
}

fn key_tol<T: Real>() -> T {
    lit(1e-9)
}

fn find<T: Real>(axis: &[T], x: T) -> Option<usize> {
    axis.iter().position(|&a| (a - x).abs() <= key_tol::<T>() * a.abs().max(T::one()))
}

fn sorted_unique<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= key_tol::<T>() * b.abs().max(T::one()));
    v
}

impl<T: Real> QuoteSurface<T> {
    pub fn from_quotes(quotes: &[SwaptionQuote<T>]) -> Result<Self> {
        if quotes.is_empty() {
            return Err(Error::InvalidInput("empty quote surface".into()));
        }
        for q in quotes {
            let ok = q.expiry > T::zero()
                && q.tenor > T::zero()
                && q.normal_vol >= T::zero()
                && q.normal_vol.is_finite()
                && q.strike_offset.is_finite();
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "bad quote: expiry {}, tenor {}, offset {}, vol {}",
                    q.expiry, q.tenor, q.strike_offset, q.normal_vol
                )));
            }
        }
        let expiries = sorted_unique(quotes.iter().map(|q| q.expiry).collect());
        let tenors = sorted_unique(quotes.iter().map(|q| q.tenor).collect());
        let offsets = sorted_unique(quotes.iter().map(|q| q.strike_offset).collect());
        let (ne, nt) = (expiries.len(), tenors.len());
        let mut vols = vec![T::nan(); offsets.len() * ne * nt];
        for q in quotes {
            let o = find(&offsets, q.strike_offset).unwrap();
            let e = find(&expiries, q.expiry).unwrap();
            let t = find(&tenors, q.tenor).unwrap();
            let slot = &mut vols[(o * ne + e) * nt + t];
            if !slot.is_nan() {
                return Err(Error::InvalidInput(format!(
                    "duplicate quote for expiry {}, tenor {}, offset {}",
                    q.expiry, q.tenor, q.strike_offset
                )));
            }
            *slot = q.normal_vol;
        }
        if let Some(pos) = vols.iter().position(|v| v.is_nan()) {
            let t = pos % nt;
            let e = (pos / nt) % ne;
            let o = pos / (nt * ne);
            return Err(Error::InvalidInput(format!(
                "surface is not rectangular: missing expiry {}, tenor {}, offset {}",
                expiries[e], tenors[t], offsets[o]
            )));
        }
        Ok(Self {
            expiries,
            tenors,
            offsets,
            vols,
        })
    }

    pub fn expiries(&self) -> &[T] {
        &self.expiries
    }

    pub fn tenors(&self) -> &[T] {
        &self.tenors
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    pub fn get(&self, expiry: T, tenor: T, offset: T) -> Option<T> {
        let o = find(&self.offsets, offset)?;
        let e = find(&self.expiries, expiry)?;
        let t = find(&self.tenors, tenor)?;
        Some(self.at(o, e, t))
    }

    fn at(&self, o: usize, e: usize, t: usize) -> T {
        self.vols[(o * self.expiries.len() + e) * self.tenors.len() + t]
    }

    pub fn quotes(&self) -> Vec<SwaptionQuote<T>> {
        let mut out = Vec::with_capacity(self.vols.len());
        for (o, &x) in self.offsets.iter().enumerate() {
            for (e, &expiry) in self.expiries.iter().enumerate() {
                for (t, &tenor) in self.tenors.iter().enumerate() {
                    out.push(SwaptionQuote {
                        expiry,
                        tenor,
                        strike_offset: x,
                        normal_vol: self.at(o, e, t),
                    });
                }
            }
        }
        out
    }

    /// Cells whose total variance `v²·T` falls below the previous expiry's.
    pub fn calendar_violations(&self) -> Vec<CalendarViolation> {
        let mut out = Vec::new();
        for (o, &x) in self.offsets.iter().enumerate() {
            for (t, &tenor) in self.tenors.iter().enumerate() {
                for e in 1..self.expiries.len() {
                    let w_prev = self.at(o, e - 1, t).powi(2) * self.expiries[e - 1];
                    let w = self.at(o, e, t).powi(2) * self.expiries[e];
                    if w < w_prev {
                        out.push(CalendarViolation {
                            expiry: to_f64(self.expiries[e]),
                            tenor: to_f64(tenor),
                            strike_offset: to_f64(x),
                            previous_variance: to_f64(w_prev),
                            variance: to_f64(w),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarViolation {
    pub expiry: f64,
    pub tenor: f64,
    pub strike_offset: f64,
    pub previous_variance: f64,
    pub variance: f64,
}

/// Normal-model payer swaption price `A·[(F−K)Φ(d) + σ√T φ(d)]`, `d = (F−K)/(σ√T)`.
///
/// Zero volatility collapses to the discounted intrinsic value.
pub fn bachelier_price<T: Real>(fwd_rate: T, strike: T, vol: T, expiry: T, annuity: T) -> T {
    bachelier_price_kind(OptionKind::Payer, fwd_rate, strike, vol, expiry, annuity)
}

pub fn bachelier_price_kind<T: Real>(kind: OptionKind, fwd_rate: T, strike: T, vol: T, expiry: T, annuity: T) -> T {
    let m = match kind {
        OptionKind::Payer => fwd_rate - strike,
        OptionKind::Receiver => strike - fwd_rate,
    };
    let s = vol * expiry.sqrt();
    if !(s > T::zero()) {
        return annuity * m.max(T::zero());
    }
    let d = m / s;
    annuity * (m * norm_cdf(d) + s * norm_pdf(d))
}

fn bachelier_vega<T: Real>(fwd_rate: T, strike: T, vol: T, expiry: T, annuity: T) -> T {
    let s = vol * expiry.sqrt();
    annuity * expiry.sqrt() * norm_pdf((fwd_rate - strike) / s)
}

/// Upper end of the volatility search bracket.
pub const MAX_NORMAL_VOL: f64 = 1.0;

/// Implied normal volatility of a payer price.
pub fn implied_normal_vol<T: Real>(price: T, fwd_rate: T, strike: T, expiry: T, annuity: T) -> Result<T> {
    implied_normal_vol_kind(OptionKind::Payer, price, fwd_rate, strike, expiry, annuity)
}

/// Implied normal volatility by safeguarded Newton on `[0, MAX_NORMAL_VOL]`.
pub fn implied_normal_vol_kind<T: Real>(
    kind: OptionKind,
    price: T,
    fwd_rate: T,
    strike: T,
    expiry: T,
    annuity: T,
) -> Result<T> {
    if !(expiry > T::zero()) || !(annuity > T::zero()) || !price.is_finite() {
        return Err(Error::InvalidInput(format!(
            "implied vol needs expiry > 0, annuity > 0 and finite price (got {expiry}, {annuity}, {price})"
        )));
    }
    let intrinsic = bachelier_price_kind(kind, fwd_rate, strike, T::zero(), expiry, annuity);
    let slack = T::epsilon() * lit(16.0) * annuity.max(intrinsic);
    if price < intrinsic - slack {
        return Err(Error::NoSolution(format!("price {price} below intrinsic {intrinsic}")));
    }
    if price <= intrinsic {
        return Ok(T::zero());
    }
    let hi_vol: T = lit(MAX_NORMAL_VOL);
    let cap = bachelier_price_kind(kind, fwd_rate, strike, hi_vol, expiry, annuity);
    if price > cap {
        return Err(Error::NoSolution(format!("price {price} above the {MAX_NORMAL_VOL} vol cap {cap}")));
    }

    // Payer and receiver share vega; work with the price difference directly.
    let f = |v: T| bachelier_price_kind(kind, fwd_rate, strike, v, expiry, annuity) - price;
    let (mut lo, mut hi) = (T::zero(), hi_vol);
    // ATM-style initial guess: price ≈ A·σ·√(T/2π) on top of intrinsic.
    let mut v = ((price - intrinsic) / (annuity * (expiry / (T::PI() + T::PI())).sqrt()))
        .min(hi_vol)
        .max(lit(1e-8));
    let tol = T::epsilon() * lit(4.0);
    for _ in 0..200 {
        let fv = f(v);
        if fv == T::zero() {
            return Ok(v);
        }
        if fv > T::zero() {
            hi = v;
        } else {
            lo = v;
        }
        let vega = bachelier_vega(fwd_rate, strike, v, expiry, annuity);
        if vega > T::zero() {
            let step = fv / vega;
            if step.abs() <= tol * v {
                return Ok((v - step).max(T::zero()));
            }
            let newton = v - step;
            v = if newton > lo && newton < hi { newton } else { (lo + hi) / lit(2.0) };
        } else {
            v = (lo + hi) / lit(2.0);
        }
        if hi - lo <= tol * hi {
            break;
        }
    }
    Ok(v)
}

/// Implied normal vol at time `t` from linear interpolation of `w = v²·t`
/// between the bracketing quoted expiries.
///
/// With `extrapolate` set, times outside the quoted range keep the nearest
/// quote's variance rate (flat vol); otherwise they are an error.
pub fn interpolate_variance_in_time<T: Real>(
    surface: &QuoteSurface<T>,
    t: T,
    tenor: T,
    strike_offset: T,
    extrapolate: bool,
) -> Result<T> {
    let ti = find(&surface.tenors, tenor)
        .ok_or_else(|| Error::InvalidInput(format!("tenor {tenor} not quoted")))?;
    let oi = find(&surface.offsets, strike_offset)
        .ok_or_else(|| Error::InvalidInput(format!("strike offset {strike_offset} not quoted")))?;
    let ex = &surface.expiries;
    let vol = |e: usize| surface.at(oi, e, ti);
    if let Some(e) = find(ex, t) {
        return Ok(vol(e));
    }
    let (lo, hi) = (ex[0], ex[ex.len() - 1]);
    if t < lo || t > hi {
        if extrapolate && t > T::zero() {
            return Ok(if t < lo { vol(0) } else { vol(ex.len() - 1) });
        }
        return Err(Error::Extrapolation {
            t: to_f64(t),
            lo: to_f64(lo),
            hi: to_f64(hi),
            tenor: to_f64(tenor),
            offset: to_f64(strike_offset),
        });
    }
    let n = ex.iter().position(|&e| e > t).unwrap();
    let (t0, t1) = (ex[n - 1], ex[n]);
    let (w0, w1) = (vol(n - 1).powi(2) * t0, vol(n).powi(2) * t1);
    let w = w0 + (t - t0) * (w1 - w0) / (t1 - t0);
    Ok((w.max(T::zero()) / t).sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceRow {
    expiry_years: f64,
    tenor_years: f64,
    strike_offset: f64,
    normal_vol: f64,
}

pub fn read_surface_csv<T: Real>(path: impl AsRef<Path>) -> Result<QuoteSurface<T>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut quotes = Vec::new();
    for row in rdr.deserialize::<SurfaceRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        quotes.push(SwaptionQuote {
            expiry: lit(row.expiry_years),
            tenor: lit(row.tenor_years),
            strike_offset: lit(row.strike_offset),
            normal_vol: lit(row.normal_vol),
        });
    }
    QuoteSurface::from_quotes(&quotes)
}

pub fn write_surface_csv<T: Real>(path: impl AsRef<Path>, surface: &QuoteSurface<T>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for q in surface.quotes() {
        w.serialize(SurfaceRow {
            expiry_years: to_f64(q.expiry),
            tenor_years: to_f64(q.tenor),
            strike_offset: to_f64(q.strike_offset),
            normal_vol: to_f64(q.normal_vol),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Synthetic market used for testing and demos. Not market data.
pub mod fixtures {
    use super::*;

    pub const EXPIRIES: [f64; 10] = [0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0];
    pub const TENORS: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0];
    pub const OFFSETS: [f64; 5] = [-0.02, -0.01, 0.0, 0.01, 0.02];

    /// Vol change at X = −2% and X = +2% relative to ATM.
    pub const SMILE_AT_MINUS_2PCT: f64 = 0.0010;
    pub const SMILE_AT_PLUS_2PCT: f64 = 0.0010;

    /// Upward-sloping forward curve from about 3.0% to 4.0%.
    pub fn forward_curve(grid: &TimeGrid<f64>) -> ForwardCurve<f64> {
        let rates = (0..grid.n_steps())
            .map(|j| {
                let tau = grid.time(j) + 0.5 * grid.dt();
                0.04 - 0.01 * (-tau / 5.0).exp()
            })
            .collect();
        ForwardCurve::new(rates).expect("finite fixture curve")
    }

    /// ATM normal vol: decays smoothly in expiry and tenor from ~118bp to ~68bp.
    pub fn atm_vol(expiry: f64, tenor: f64) -> f64 {
        0.0065 + 0.0055 * (-0.08 * (expiry + 0.5 * tenor)).exp()
    }

    /// Quadratic smile in the strike offset through the ±2% anchors.
    pub fn smile(x: f64) -> f64 {
        let (lo, hi) = (SMILE_AT_MINUS_2PCT, SMILE_AT_PLUS_2PCT);
        let curvature = (hi + lo) / (2.0 * 0.02 * 0.02);
        let skew = (hi - lo) / (2.0 * 0.02);
        skew * x + curvature * x * x
    }

    /// Full fixture cube. A non-zero `seed` adds a per-tenor ATM level shift of
    /// at most ±2bp so distinct seeds give distinct but equally smooth surfaces.
    pub fn surface(seed: u64) -> QuoteSurface<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts: Vec<f64> = TENORS
            .iter()
            .map(|_| if seed == 0 { 0.0 } else { rng.random_range(-0.0002..0.0002) })
            .collect();
        let mut quotes = Vec::new();
        for &x in &OFFSETS {
            for &e in &EXPIRIES {
                for (t, &n) in TENORS.iter().enumerate() {
                    quotes.push(SwaptionQuote {
                        expiry: e,
                        tenor: n,
                        strike_offset: x,
                        normal_vol: atm_vol(e, n) + shifts[t] + smile(x),
                    });
                }
            }
        }
        QuoteSurface::from_quotes(&quotes).expect("fixture surface is rectangular")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn atm_price_is_half_normal_integral() {
        let p = bachelier_price(0.03, 0.03, 0.01, 1.0, 1.0);
        assert!((p - 0.01 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-17);
        assert!((p - 0.003_989_4).abs() < 1e-7);
    }

    #[test]
    fn zero_vol_is_intrinsic() {
        assert_eq!(bachelier_price(0.05, 0.03, 0.0, 1.0, 1.0), 0.05 - 0.03);
        assert_eq!(bachelier_price(0.01, 0.03, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn deep_otm_matches_quadrature_and_grows_with_vol() {
        // Brute-force quadrature of the payoff max(F + s·z − K, 0) against φ(z).
        let quad = |m: f64, s: f64| {
            let n = 400_000;
            let (a, b) = (-12.0, 12.0);
            let h = (b - a) / n as f64;
            (0..=n)
                .map(|i| {
                    let z = a + i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * (m + s * z).max(0.0) * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * h
                / (2.0 * std::f64::consts::PI).sqrt()
        };
        let p = bachelier_price(0.0, 0.05, 0.01, 1.0, 1.0);
        assert!(p > 0.0 && p < 1e-7);
        assert!((p - quad(-0.05, 0.01)).abs() < 1e-12);
        let mut last = 0.0;
        for k in 5..50 {
            let q = bachelier_price(0.0, 0.05, 0.001 * k as f64, 1.0, 1.0);
            assert!(q > last);
            last = q;
        }
    }

    #[test]
    fn convex_in_strike() {
        let h = 1e-4;
        for i in -100..100 {
            let k = 0.03 + i as f64 * 5e-4;
            let c = bachelier_price(0.03, k - h, 0.008, 2.0, 4.0) - 2.0 * bachelier_price(0.03, k, 0.008, 2.0, 4.0)
                + bachelier_price(0.03, k + h, 0.008, 2.0, 4.0);
            assert!(c >= -1e-15, "second difference {c} at strike {k}");
        }
    }

    #[test]
    fn implied_vol_inverts_atm_closed_form() {
        let price = 0.01 * (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
        let v = implied_normal_vol(price, 0.03, 0.03, 1.0, 1.0).unwrap();
        assert!((v - 0.01).abs() < 1e-14);
        assert_eq!(implied_normal_vol(0.02, 0.05, 0.03, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn implied_vol_rejects_unattainable_prices() {
        assert!(matches!(
            implied_normal_vol(0.01, 0.05, 0.03, 1.0, 1.0),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            implied_normal_vol(0.9, 0.03, 0.03, 1.0, 1.0),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn variance_interpolation() {
        let quotes: Vec<_> = [(1.0, 0.01), (2.0, 0.02)]
            .iter()
            .map(|&(e, v)| SwaptionQuote {
                expiry: e,
                tenor: 5.0,
                strike_offset: 0.0,
                normal_vol: v,
            })
            .collect();
        let s = QuoteSurface::from_quotes(&quotes).unwrap();
        assert_eq!(interpolate_variance_in_time(&s, 1.0, 5.0, 0.0, false).unwrap(), 0.01);
        assert_eq!(interpolate_variance_in_time(&s, 2.0, 5.0, 0.0, false).unwrap(), 0.02);
        let v = interpolate_variance_in_time(&s, 1.5, 5.0, 0.0, false).unwrap();
        assert!((v - (0.00045_f64 / 1.5).sqrt()).abs() < 1e-15);
        assert!((v - 0.017_321).abs() < 1e-6);
        assert!(matches!(
            interpolate_variance_in_time(&s, 2.5, 5.0, 0.0, false),
            Err(Error::Extrapolation { .. })
        ));
        assert_eq!(interpolate_variance_in_time(&s, 2.5, 5.0, 0.0, true).unwrap(), 0.02);
    }

    #[test]
    fn constant_vol_interpolates_to_itself() {
        let quotes: Vec<_> = [1.0, 3.0]
            .iter()
            .map(|&e| SwaptionQuote {
                expiry: e,
                tenor: 1.0,
                strike_offset: 0.01,
                normal_vol: 0.0085,
            })
            .collect();
        let s = QuoteSurface::from_quotes(&quotes).unwrap();
        for k in 1..20 {
            let t = 1.0 + 0.1 * k as f64;
            let v = interpolate_variance_in_time(&s, t, 1.0, 0.01, false).unwrap();
            assert!((v - 0.0085).abs() < 1e-15);
        }
    }

    #[test]
    fn surface_validation() {
        let q = |e: f64, n: f64, v: f64| SwaptionQuote {
            expiry: e,
            tenor: n,
            strike_offset: 0.0,
            normal_vol: v,
        };
        assert!(QuoteSurface::from_quotes(&[q(1.0, 1.0, 0.01), q(1.0, 1.0, 0.02)]).is_err());
        assert!(QuoteSurface::from_quotes(&[q(1.0, 1.0, 0.01), q(2.0, 2.0, 0.01)]).is_err());
        assert!(QuoteSurface::from_quotes(&[q(1.0, 1.0, -0.01)]).is_err());
        let s = QuoteSurface::from_quotes(&[q(1.0, 1.0, 0.02), q(2.0, 1.0, 0.01)]).unwrap();
        let v = s.calendar_violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].expiry, 2.0);
    }

    #[test]
    fn fixture_is_within_documented_ranges() {
        let s = fixtures::surface(0);
        assert_eq!(s.offsets().len(), 5);
        for e in fixtures::EXPIRIES {
            for n in fixtures::TENORS {
                let atm = s.get(e, n, 0.0).unwrap();
                assert!((0.0060..=0.0130).contains(&atm), "{e}x{n}: {atm}");
                for x in [-0.02, 0.02] {
                    let d = s.get(e, n, x).unwrap() - atm;
                    assert!((0.0010 - 1e-12..=0.0020 + 1e-12).contains(&d.abs()));
                }
            }
        }
        assert!(s.calendar_violations().is_empty());
        assert_ne!(fixtures::surface(1).get(1.0, 1.0, 0.0), s.get(1.0, 1.0, 0.0));
        assert_eq!(
            fixtures::surface(7).get(5.0, 10.0, 0.01),
            fixtures::surface(7).get(5.0, 10.0, 0.01)
        );
    }

    proptest! {
        #[test]
        fn implied_vol_round_trip(vol in 1e-4f64..0.05, x in -0.1f64..0.1, t in 0.25f64..30.0, a in 0.5f64..20.0) {
            let f = 0.03;
            let k = f + x;
            // Only informative prices: beyond |d| ≈ 8 the time value underflows.
            prop_assume!((x / (vol * t.sqrt())).abs() < 8.0);
            let kind = OptionKind::out_of_the_money(x);
            let p = bachelier_price_kind(kind, f, k, vol, t, a);
            let back = implied_normal_vol_kind(kind, p, f, k, t, a).unwrap();
            prop_assert!((back - vol).abs() < 1e-8 * vol.max(1e-2), "{} vs {}", back, vol);
        }

        #[test]
        fn price_nondecreasing_in_vol(v1 in 0.0f64..0.05, dv in 0.0f64..0.01, x in -0.1f64..0.1) {
            let p1 = bachelier_price(0.03, 0.03 + x, v1, 5.0, 3.0);
            let p2 = bachelier_price(0.03, 0.03 + x, v1 + dv, 5.0, 3.0);
            prop_assert!(p2 >= p1 - 1e-18);
        }
    }
}
