//! Closed-form variance function of the autoregressive chain for `f = 1{x >= a}`.
//!
//! Everything is expressed through `g = dt * h`, whose derivative is
//! `g'(x) = (min(Phi(x), Phi(a)) - Phi(x) Phi(a)) / phi(x)` and which solves
//! `x g' - g'' = 1{x >= a} - mu[a, inf)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{invalid, Error, Result};
use crate::quadrature::integrate_pieces;

const FAR: f64 = 40.0;
const REL_TOL: f64 = 1e-13;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `1 - Phi(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - Phi(t)) / phi(t)`; a continued fraction beyond `t = 6`.
pub fn mills_ratio(t: f64) -> f64 {
    if t <= 6.0 {
        normal_sf(t) / normal_pdf(t)
    } else {
        mills_continued_fraction(t)
    }
}

fn mills_continued_fraction(t: f64) -> f64 {
    // R(t) = 1 / (t + 1 / (t + 2 / (t + 3 / (t + ...)))), evaluated by modified Lentz.
    let tiny = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuAnalytic {
    threshold: f64,
    dt: f64,
    cdf_a: f64,
    sf_a: f64,
    mean_potential: f64,
}

impl OuAnalytic {
    pub fn new(threshold: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if !threshold.is_finite() || threshold.abs() >= FAR / 2.0 {
            return Err(invalid("threshold", format!("must be finite and below {} in magnitude", FAR / 2.0)));
        }
        let mut this = Self {
            threshold,
            dt,
            cdf_a: normal_cdf(threshold),
            sf_a: normal_sf(threshold),
            mean_potential: 0.0,
        };
        this.mean_potential = this.compute_mean_potential()?;
        Ok(this)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `mu[a, inf)`.
    pub fn tail_probability(&self) -> f64 {
        self.sf_a
    }

    /// `g'(x) = dt * h'(x)`.
    pub fn slope(&self, x: f64) -> f64 {
        if x < self.threshold {
            self.sf_a * mills_ratio(-x)
        } else {
            self.cdf_a * mills_ratio(x)
        }
    }

    /// `v(x) = sqrt(2 / dt) g'(x)`.
    pub fn vbar(&self, x: f64) -> f64 {
        (2.0 / self.dt).sqrt() * self.slope(x)
    }

    fn breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut b = vec![lo];
        for p in [0.0, self.threshold] {
            if lo < p && p < hi && !b.contains(&p) {
                b.push(p);
            }
        }
        b.push(hi);
        b.sort_by(f64::total_cmp);
        b
    }

    fn integral<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        if lo > hi {
            return self.integral(f, hi, lo).map(|v| -v);
        }
        integrate_pieces(f, &self.breaks(lo, hi), 0.0, REL_TOL)
    }

    /// `G(x) = int_0^x g'`.
    fn potential(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(invalid("x", "potential is evaluated at finite points only"));
        }
        self.integral(|y| self.slope(y), 0.0, x)
    }

    fn compute_mean_potential(&self) -> Result<f64> {
        // E[G(X)] by parts: int_0^inf (1 - Phi) g' - int_-inf^0 Phi g'.
        let upper = self.integral(|y| normal_sf(y) * self.slope(y), 0.0, FAR)?;
        let lower = self.integral(|y| normal_cdf(y) * self.slope(y), -FAR, 0.0)?;
        Ok(upper - lower)
    }

    /// `dt * h(x)` with the normalisation `mu(h) = 0`.
    pub fn scaled_hbar(&self, x: f64) -> Result<f64> {
        Ok(self.potential(x)? - self.mean_potential)
    }

    /// `h(x)`.
    pub fn hbar(&self, x: f64) -> Result<f64> {
        Ok(self.scaled_hbar(x)? / self.dt)
    }

    /// `dt * mu(v^2) = 2 int phi g'^2`.
    pub fn mcmc_constant(&self) -> Result<f64> {
        Ok(2.0 * self.integral(|y| normal_pdf(y) * self.slope(y).powi(2), -FAR, FAR)?)
    }

    /// `dt * mu(v)^2 = 2 (int phi g')^2`, by quadrature.
    pub fn optimal_constant(&self) -> Result<f64> {
        let m = self.integral(|y| normal_pdf(y) * self.slope(y), -FAR, FAR)?;
        Ok(2.0 * m * m)
    }

    /// `exp(-a^2) / pi`, the exact value of [`Self::optimal_constant`].
    pub fn optimal_constant_closed_form(&self) -> f64 {
        (-self.threshold * self.threshold).exp() / PI
    }

    /// Large-threshold approximation `4 exp(-a^2/2) / (sqrt(2 pi) a^3)` of
    /// [`Self::mcmc_constant`], accurate to `O(a^-2)`.
    pub fn mcmc_constant_asymptotic(&self) -> f64 {
        let a = self.threshold;
        4.0 * (-0.5 * a * a).exp() / ((2.0 * PI).sqrt() * a.powi(3))
    }

    /// Mesh with the variation of `dt * h` bounded by `tol` on each finite interval.
    pub fn mesh(&self, first: f64, last: f64, tol: f64) -> Result<Vec<f64>> {
        build_ou_mesh(first, last, tol, DEFAULT_MESH_CAP, |x| self.scaled_hbar(x))
    }

    /// Variation of `dt * h` over `[lo, hi]`.
    pub fn variation(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.integral(|y| self.slope(y), lo, hi)?.abs())
    }
}

pub fn ou_vbar(x: f64, threshold: f64, dt: f64) -> Result<f64> {
    Ok(OuAnalytic::new(threshold, dt)?.vbar(x))
}

pub fn ou_hbar(x: f64, threshold: f64, dt: f64) -> Result<f64> {
    OuAnalytic::new(threshold, dt)?.hbar(x)
}

pub const DEFAULT_MESH_CAP: usize = 100_000;

/// Greedy mesh for a monotone function `g` on `[first, last]`.
///
/// Starting at `first`, each new point is the furthest one (to about `1e-12`)
/// whose increment of `g` stays within `tol`. The result starts with `-inf`
/// and ends with `+inf`, so the outermost intervals are the unbounded tails.
pub fn build_ou_mesh<G>(first: f64, last: f64, tol: f64, cap: usize, g: G) -> Result<Vec<f64>>
where
    G: Fn(f64) -> Result<f64>,
{
    if !(first < last) || !first.is_finite() || !last.is_finite() {
        return Err(invalid("endpoints", format!("need finite first < last, got ({first}, {last})")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "variation tolerance must be positive"));
    }
    let mut mesh = vec![f64::NEG_INFINITY, first];
    let g_last = g(last)?;
    let mut x = first;
    let mut gx = g(first)?;
    while (g_last - gx).abs() > tol {
        if mesh.len() + 2 > cap {
            return Err(Error::MeshTooFine { cap });
        }
        let (mut lo, mut hi) = (x, last);
        while hi - lo > 1e-12 * (1.0 + hi.abs()) {
            let mid = 0.5 * (lo + hi);
            if (g(mid)? - gx).abs() <= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= x {
            return Err(Error::MeshTooFine { cap });
        }
        x = lo;
        gx = g(x)?;
        mesh.push(x);
    }
    mesh.push(last);
    mesh.push(f64::INFINITY);
    Ok(mesh)
}

/// `int_lo^hi phi`, accurate in both tails.
pub fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}
