//! Series solution of the cohomological equation
//! g(Psi_t x) - g(x) = int_0^t h(Psi_r x) dr
//! via the local integrating operator K and its renormalized iterates G_k,
//! with convergence and obstruction diagnostics.

use crate::ergodic::{eta, renormalized_integral};
use crate::heis::{apply_aut_pow_reduced, reduce, Automorphism, HeisPoint};
use crate::lineint::{windowed_flow_integral, FnWindow};
use crate::observable::Observable;
use crate::special::composite_gl;
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohomologyError {
    #[error("observable has nonzero mean {0:?}: constant obstruction")]
    NonzeroMean(C64),
}

/// Cutoff chi (1 on [0,1/2], 0 on [1,inf)) and the bump
/// phi(t) = chi(t/lambda) - chi(t), supported in (1/2, lambda).
/// The phi(lambda^{-k} .) telescope back to chi: summing phi over dilates
/// recovers 1 on (0, inf).
#[derive(Debug, Clone, Copy)]
pub struct BumpPair {
    pub lambda: f64,
}

impl BumpPair {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda > 1.0);
        Self { lambda }
    }

    pub fn chi(&self, t: f64) -> f64 {
        1.0 - eta(2.0 * t - 1.0)
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.chi(t / self.lambda) - self.chi(t)
    }

    /// int phi, numerically (= (lambda - 1) * int chi).
    pub fn phi_mass(&self) -> f64 {
        composite_gl(0.5, self.lambda, 0.05, 12, &|t| {
            C64::new(self.phi(t), 0.0)
        })
        .re
    }

    /// int chi; lies in (1/2, 1).
    pub fn chi_mass(&self) -> f64 {
        0.5 + composite_gl(0.5, 1.0, 0.05, 12, &|t| C64::new(self.chi(t), 0.0)).re
    }
}

/// (K h)(x) = int phi(s) h(Psi_s x) ds over the support (1/2, lambda).
pub fn k_op(h: &Observable, aut: &Automorphism, x: HeisPoint, bp: &BumpPair) -> C64 {
    let window = FnWindow {
        f: |s| bp.phi(s),
        scale: 0.25,
    };
    windowed_flow_integral(h, aut, x, 0.5, bp.lambda, &window).value
}

/// G~ h(x) = int_0^1 chi(s) h(Psi_s x) ds.
pub fn g_tilde(h: &Observable, aut: &Automorphism, x: HeisPoint, bp: &BumpPair) -> C64 {
    let window = FnWindow {
        f: |s| bp.chi(s),
        scale: 0.25,
    };
    windowed_flow_integral(h, aut, x, 0.0, 1.0, &window).value
}

/// (G_k h)(x) = (K Fhat^k h)(F^k x).
pub fn g_k(h: &Observable, aut: &Automorphism, k: i32, x: HeisPoint, bp: &BumpPair) -> C64 {
    assert!(k >= 0);
    let hk = h.transfer(aut, k);
    k_op(&hk, aut, apply_aut_pow_reduced(aut, x, k, h.lattice), bp)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PartialSum {
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub defect: f64,
}

/// Both sides of the telescoping identity
/// int chi(lambda^{-n} t) h(Psi_t x) dt = G~ h(x) + sum_{k<n} G_k h(x),
/// the left side by one long windowed integral, the right by the series.
pub fn partial_sum_identity(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    n: i32,
    bp: &BumpPair,
) -> PartialSum {
    assert!(n >= 0);
    let ln = bp.lambda.powi(n);
    let window = FnWindow {
        f: move |t: f64| bp.chi(t / ln),
        scale: 0.25 * ln,
    };
    let lhs = windowed_flow_integral(h, aut, x, 0.0, ln, &window).value;
    let mut rhs = g_tilde(h, aut, x, bp);
    for k in 0..n {
        rhs += g_k(h, aut, k, x, bp);
    }
    PartialSum {
        lhs_re: lhs.re,
        lhs_im: lhs.im,
        rhs_re: rhs.re,
        rhs_im: rhs.im,
        defect: (lhs - rhs).norm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Converged,
    Diverged,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoboundarySolution {
    pub sites: Vec<HeisPoint>,
    pub g_values: Vec<(f64, f64)>,
    /// sup over sites of |G_k h| for k = 0, 1, ...
    pub term_history: Vec<f64>,
    pub verdict: Verdict,
    pub kmax_used: i32,
    /// fitted geometric ratio of the term history tail (NaN if unfittable)
    pub geometric_ratio: f64,
}

impl CoboundarySolution {
    pub fn g(&self, i: usize) -> C64 {
        C64::new(self.g_values[i].0, self.g_values[i].1)
    }
}

fn map_sites(
    h: &Observable,
    aut: &Automorphism,
    sites: &[HeisPoint],
    k: i32,
    bp: &BumpPair,
) -> Vec<C64> {
    // one transfer for the whole sweep; k_op then works in the squeezed frame
    let hk = h.transfer(aut, k);
    let one = |x: &HeisPoint| k_op(&hk, aut, apply_aut_pow_reduced(aut, *x, k, h.lattice), bp);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sites.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sites.iter().map(one).collect()
    }
}

/// Geometric envelope ratio of the term history: least-squares slope of
/// log|term| against k over the positive entries.
fn fit_ratio(history: &[f64]) -> f64 {
    let data: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-300)
        .map(|(k, &v)| (k as f64, v.ln()))
        .collect();
    if data.len() < 3 {
        return f64::NAN;
    }
    let n = data.len() as f64;
    let sx: f64 = data.iter().map(|d| d.0).sum();
    let sy: f64 = data.iter().map(|d| d.1).sum();
    let sxx: f64 = data.iter().map(|d| d.0 * d.0).sum();
    let sxy: f64 = data.iter().map(|d| d.0 * d.1).sum();
    ((n * sxy - sx * sy) / (n * sxx - sx * sx)).exp()
}

/// Partial sums of g = -G~ h - sum_k G_k h over a site grid.
///
/// Terms are added until sup_sites |G_k h| < tol for 3 consecutive k or
/// k = kmax. Verdict: converged if the tail criterion was met and a
/// geometric envelope with ratio < 0.95 fits the history; diverged if the
/// terms grow for 5 consecutive k beyond k >= 5; otherwise inconclusive.
pub fn solve(
    h: &Observable,
    aut: &Automorphism,
    sites: &[HeisPoint],
    kmax: i32,
    tol: f64,
    bp: &BumpPair,
) -> Result<CoboundarySolution, CohomologyError> {
    let mean = h.mean();
    if mean.norm() > 1e-10 {
        return Err(CohomologyError::NonzeroMean(mean));
    }
    let mut g: Vec<C64> = {
        let one = |x: &HeisPoint| -g_tilde(h, aut, *x, bp);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            sites.par_iter().map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            sites.iter().map(one).collect()
        }
    };
    let mut history = Vec::new();
    let mut small_run = 0;
    let mut grow_run = 0;
    let mut verdict = Verdict::Inconclusive;
    let mut kmax_used = kmax;
    for k in 0..=kmax {
        let vals = map_sites(h, aut, sites, k, bp);
        let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (gi, vi) in g.iter_mut().zip(&vals) {
            *gi -= vi;
        }
        if let Some(&prev) = history.last() {
            grow_run = if sup > prev { grow_run + 1 } else { 0 };
        }
        history.push(sup);
        small_run = if sup < tol { small_run + 1 } else { 0 };
        if small_run >= 3 {
            verdict = Verdict::Converged;
            kmax_used = k;
            break;
        }
        if k >= 5 && grow_run >= 5 {
            verdict = Verdict::Diverged;
            kmax_used = k;
            break;
        }
    }
    let geometric_ratio = fit_ratio(&history);
    // an unfittable ratio (terms vanished immediately) is fine
    if verdict == Verdict::Converged && geometric_ratio >= 0.95 {
        verdict = Verdict::Inconclusive;
    }
    Ok(CoboundarySolution {
        sites: sites.to_vec(),
        g_values: g.iter().map(|v| (v.re, v.im)).collect(),
        term_history: history,
        verdict,
        kmax_used,
        geometric_ratio,
    })
}

/// Pointwise re-solve at a single point with a fixed truncation depth.
pub fn g_at(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    kmax_used: i32,
    bp: &BumpPair,
) -> C64 {
    let mut g = -g_tilde(h, aut, x, bp);
    for k in 0..=kmax_used {
        g -= g_k(h, aut, k, x, bp);
    }
    g
}

/// Max over samples of |g(Psi_t x) - g(x) - int_0^t h(Psi_r x) dr|, with g
/// re-solved pointwise at both endpoints using the same truncation.
pub fn verify_coboundary(
    h: &Observable,
    aut: &Automorphism,
    kmax_used: i32,
    samples: &[(HeisPoint, f64)],
    bp: &BumpPair,
) -> f64 {
    let mut worst = 0.0f64;
    for &(x, t) in samples {
        let xt = reduce(crate::heis::flow(x, t, aut), h.lattice).rep;
        let gx = g_at(h, aut, x, kmax_used, bp);
        let gt = g_at(h, aut, xt, kmax_used, bp);
        let hh = renormalized_integral(h, aut, x, t);
        worst = worst.max((gt - gx - hh.value()).norm());
    }
    worst
}
