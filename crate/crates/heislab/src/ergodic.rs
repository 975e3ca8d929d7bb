//! Ergodic integrals of the nilflow: renormalized evaluation, the zooming
//! partition of unity, the smooth decomposition of a long Birkhoff integral
//! into renormalizable pieces, and power-law fits for the deviation of
//! ergodic averages.

use crate::heis::{apply_aut_pow_reduced, Automorphism, HeisPoint};
use crate::lineint::{windowed_flow_integral, ConstWindow, FnWindow, IntegralResult};
use crate::observable::Observable;
use num_complex::Complex64 as C64;
use serde::Serialize;

/// exp(-1/t) continued by zero.
pub fn sigma(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for t <= 0, 1 for t >= 1.
pub fn eta(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let s = sigma(t);
        s / (s + sigma(1.0 - t))
    }
}

/// Zooming partition of unity on [0, T] with pieces at scales 4^{-|k|} T,
/// |k| <= N, N = floor(ln T / ln 4).
///
/// eta_k(t) = eta((8t - 4^{-k} T) / (4^{-k} T)) steps up across
/// (4^{-k} T/8, 4^{-k} T/4). For 1 <= k < N the piece phi_k = eta_k -
/// eta_{k-1} lives at scale 4^{-k} T near the left endpoint; phi_N = 1 -
/// eta_{N-1} closes the telescope at the endpoint itself; phi_{-k}(t) =
/// phi_k(T - t) mirrors these at the right endpoint; and the central piece
/// is phi_0(t) = eta_0(t) + eta_0(T - t) - 1, supported in (T/8, 7T/8).
/// The pieces sum to 1 everywhere on [0, T].
#[derive(Debug, Clone, Copy)]
pub struct ZoomPartition {
    pub t_total: f64,
    pub n: i32,
}

impl ZoomPartition {
    pub fn new(t_total: f64) -> Self {
        assert!(t_total > 4.0, "partition needs T > 4");
        let n = (t_total.ln() / 4f64.ln()).floor() as i32;
        Self { t_total, n }
    }

    fn eta_k(&self, k: i32, t: f64) -> f64 {
        let s = 4f64.powi(-k) * self.t_total;
        eta((8.0 * t - s) / s)
    }

    /// phi_k(t); k ranges over -N..=N.
    pub fn phi(&self, k: i32, t: f64) -> f64 {
        let n = self.n;
        assert!(k.abs() <= n, "|k| <= N = {n}");
        if k == 0 {
            self.eta_k(0, t) + self.eta_k(0, self.t_total - t) - 1.0
        } else if k < 0 {
            self.phi(-k, self.t_total - t)
        } else if k == n {
            1.0 - self.eta_k(n - 1, t)
        } else {
            self.eta_k(k, t) - self.eta_k(k - 1, t)
        }
    }

    /// Support interval of phi_k (open cover, slightly generous).
    pub fn support(&self, k: i32) -> (f64, f64) {
        let t = self.t_total;
        let n = self.n;
        let (a, b) = if k == 0 {
            (t / 8.0, 7.0 * t / 8.0)
        } else {
            let ka = k.abs();
            if ka == n {
                (0.0, 4f64.powi(-(n - 1)) * t / 4.0)
            } else {
                (4f64.powi(-ka) * t / 8.0, 4f64.powi(-(ka - 1)) * t / 4.0)
            }
        };
        if k < 0 {
            (t - b, t - a)
        } else {
            (a, b)
        }
    }

    /// Sharpest variation scale of phi_k (the eta_|k| transition width).
    pub fn scale(&self, k: i32) -> f64 {
        4f64.powi(-k.abs().min(self.n - 1).max(0)) * self.t_total / 8.0
    }

    /// Renormalization depth for piece k: the largest m with
    /// lambda^m <= 4^{-|k|} T (never negative).
    pub fn depth(&self, k: i32, lambda: f64) -> i32 {
        let l = (self.t_total.ln() - k.abs() as f64 * 4f64.ln()) / lambda.ln();
        (l.floor() as i32).max(0)
    }
}

/// Plain Birkhoff integral int_0^t h(Psi_s x) ds, chunked directly.
pub fn direct_integral(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    t: f64,
) -> IntegralResult {
    windowed_flow_integral(h, aut, x, 0.0, t, &ConstWindow)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenormIntegral {
    pub value_re: f64,
    pub value_im: f64,
    pub depth: i32,
    pub invocations: u64,
}

impl RenormIntegral {
    pub fn value(&self) -> C64 {
        C64::new(self.value_re, self.value_im)
    }
}

/// Renormalization depth for a plain integral of length t: the smallest
/// k >= 0 with lambda^{-k} t < lambda.
pub fn renorm_depth(t: f64, lambda: f64) -> i32 {
    if t <= lambda {
        0
    } else {
        (t.ln() / lambda.ln() - 1.0).ceil() as i32
    }
}

/// The same Birkhoff integral computed in the renormalized frame:
/// int_0^t h(Psi_s x) ds = int_0^{lambda^{-k} t} (Fhat^k h)(Psi_u F^k x) du,
/// with k chosen so the remaining interval is shorter than lambda. The
/// transferred observable is evaluated genuinely in its own (squeezed)
/// frame; nothing is pulled back.
pub fn renormalized_integral(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    t: f64,
) -> RenormIntegral {
    let k = renorm_depth(t.abs(), aut.lambda);
    let hk = h.transfer(aut, k);
    let xk = apply_aut_pow_reduced(aut, x, k, h.lattice);
    let res = windowed_flow_integral(&hk, aut, xk, 0.0, aut.lambda.powi(-k) * t, &ConstWindow);
    RenormIntegral {
        value_re: res.value.re,
        value_im: res.value.im,
        depth: k,
        invocations: res.invocations,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Piece {
    pub k: i32,
    pub depth: i32,
    pub value_re: f64,
    pub value_im: f64,
    pub invocations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub pieces: Vec<Piece>,
    pub total_re: f64,
    pub total_im: f64,
    pub invocations: u64,
    /// A priori bound on the two endpoint pieces |k| = N:
    /// 2 * 4^{-N} T * sup|h|.
    pub boundary_bound: f64,
}

impl Decomposition {
    pub fn total(&self) -> C64 {
        C64::new(self.total_re, self.total_im)
    }
}

/// Decompose int_0^T h(Psi_t x) dt along the zooming partition; every piece
/// with |k| < N is evaluated in its renormalized frame at depth m_k, the
/// two endpoint pieces are integrated directly over their short supports.
pub fn smooth_decomposition(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    t_total: f64,
) -> Decomposition {
    let part = ZoomPartition::new(t_total);
    let mut pieces = Vec::new();
    let mut total = C64::new(0.0, 0.0);
    let mut invocations = 0;
    for k in -part.n..=part.n {
        let (a, b) = part.support(k);
        let depth = if k.abs() == part.n {
            0
        } else {
            part.depth(k, aut.lambda)
        };
        let lm = aut.lambda.powi(depth);
        let hk = h.transfer(aut, depth);
        let xk = apply_aut_pow_reduced(aut, x, depth, h.lattice);
        let window = FnWindow {
            f: move |u: f64| part.phi(k, lm * u),
            scale: part.scale(k) / lm,
        };
        let res = windowed_flow_integral(&hk, aut, xk, a / lm, b / lm, &window);
        total += res.value;
        invocations += res.invocations;
        pieces.push(Piece {
            k,
            depth,
            value_re: res.value.re,
            value_im: res.value.im,
            invocations: res.invocations,
        });
    }
    let boundary_bound = 2.0 * 4f64.powi(-part.n) * t_total * h.sup_estimate();
    Decomposition {
        pieces,
        total_re: total.re,
        total_im: total.im,
        invocations,
        boundary_bound,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationPoint {
    pub t: f64,
    /// root mean square of |H(x, t)| over the sampled base points
    pub h_rms: f64,
    pub depth: i32,
    pub invocations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationFit {
    pub points: Vec<DeviationPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub t_min: f64,
    pub t_max: f64,
}

/// RMS of |int_0^t (h - mean)| over the given base points, at
/// logarithmically spaced times, with a power-law fit
/// log(rms) = slope log t + intercept over the fitted range (the smallest
/// decade of t is excluded from the fit as transient).
pub fn deviation_fit(
    h: &Observable,
    aut: &Automorphism,
    xs: &[HeisPoint],
    t_max: f64,
    n_points: usize,
    subtract_mean: bool,
) -> DeviationFit {
    assert!(t_max > 100.0 && n_points >= 8 && !xs.is_empty());
    let h = if subtract_mean {
        h.add(&Observable::constant(h.lattice, -h.mean()))
    } else {
        h.clone()
    };
    let lo = 1.0f64.ln();
    let hi = t_max.ln();
    let mut points = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let t = (lo + (hi - lo) * i as f64 / (n_points - 1) as f64).exp();
        let mut sq = 0.0;
        let mut depth = 0;
        let mut invocations = 0;
        for &x in xs {
            let r = renormalized_integral(&h, aut, x, t);
            sq += r.value().norm_sqr();
            depth = r.depth;
            invocations += r.invocations;
        }
        points.push(DeviationPoint {
            t,
            h_rms: (sq / xs.len() as f64).sqrt(),
            depth,
            invocations,
        });
    }
    // least squares on log-log over t >= 10 (skip the transient decade)
    let fit_lo = 10.0f64.min(t_max / 100.0).max(2.0);
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.t >= fit_lo && p.h_rms > 1e-13)
        .map(|p| (p.t.ln(), p.h_rms.ln()))
        .collect();
    let (slope, intercept, r2) = least_squares(&data);
    DeviationFit {
        points,
        slope,
        intercept,
        r2,
        t_min: fit_lo,
        t_max,
    }
}

fn least_squares(data: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = data.len() as f64;
    if data.len() < 2 {
        return (f64::NAN, f64::NAN, 0.0);
    }
    let sx: f64 = data.iter().map(|d| d.0).sum();
    let sy: f64 = data.iter().map(|d| d.1).sum();
    let sxx: f64 = data.iter().map(|d| d.0 * d.0).sum();
    let sxy: f64 = data.iter().map(|d| d.0 * d.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = data.iter().map(|d| (d.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = data
        .iter()
        .map(|d| (d.1 - slope * d.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::Quad;
    use crate::heis::{stable_generator, LatticeSpec};
    use crate::observable::GaussAtom;

    fn aut() -> Automorphism {
        stable_generator(2, 1, 3, 2).unwrap()
    }

    fn sample(lattice: LatticeSpec) -> Observable {
        let mut h = Observable::atom(
            lattice,
            1,
            GaussAtom::plain(
                C64::new(1.0, 0.0),
                [0.42, 0.3],
                Quad {
                    a: 1.1,
                    b: 0.25,
                    c: 0.9,
                },
            ),
        );
        h.torus.coeffs.push(((1, 0), C64::new(0.3, -0.1)));
        h
    }

    #[test]
    fn partition_of_unity() {
        for t_total in [50.0, 1000.0] {
            let p = ZoomPartition::new(t_total);
            let margin = 4f64.powi(-p.n) * t_total / 8.0;
            for i in 0..400 {
                let t = margin + (t_total - 2.0 * margin) * i as f64 / 399.0;
                let s: f64 = (-p.n..=p.n).map(|k| p.phi(k, t)).sum();
                assert!((s - 1.0).abs() < 1e-12, "T={t_total} t={t}: sum={s}");
                for k in -p.n..=p.n {
                    let v = p.phi(k, t);
                    assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                    let (a, b) = p.support(k);
                    if v > 1e-12 {
                        assert!(t > a - 1e-9 && t < b + 1e-9, "k={k} t={t} [{a},{b}]");
                    }
                }
            }
        }
    }

    #[test]
    fn depth_examples() {
        let p = ZoomPartition::new(1000.0);
        let lambda = 2.0 + 3f64.sqrt();
        assert_eq!(p.n, 4);
        assert_eq!(p.depth(0, lambda), 5);
        assert_eq!(p.depth(2, lambda), 3);
        assert_eq!(p.depth(-2, lambda), 3);
    }

    #[test]
    fn renormalized_matches_direct() {
        let a = aut();
        let h = sample(LatticeSpec::new(1).unwrap());
        let x = HeisPoint::new(0.81, 0.23, 0.55);
        for t in [2.0, 17.0, 130.0, 1500.0] {
            let d = direct_integral(&h, &a, x, t);
            let r = renormalized_integral(&h, &a, x, t);
            assert!(
                (d.value - r.value()).norm() < 1e-8,
                "t={t}: {:?} vs {:?} (depth {})",
                d.value,
                r.value(),
                r.depth
            );
            assert!(a.lambda.powi(-r.depth) * t < a.lambda * (1.0 + 1e-12));
        }
    }

    #[test]
    fn decomposition_sums_to_direct() {
        let a = aut();
        let h = sample(LatticeSpec::new(1).unwrap());
        let x = HeisPoint::new(0.1, 0.9, 0.02);
        for t_total in [80.0, 700.0] {
            let dec = smooth_decomposition(&h, &a, x, t_total);
            let dir = direct_integral(&h, &a, x, t_total);
            assert!(
                (dec.total() - dir.value).norm() < 2e-7,
                "T={t_total}: {:?} vs {:?}",
                dec.total(),
                dir.value
            );
            // endpoint pieces within the a priori bound
            let ends: f64 = dec
                .pieces
                .iter()
                .filter(|p| p.k.abs() == ZoomPartition::new(t_total).n)
                .map(|p| C64::new(p.value_re, p.value_im).norm())
                .sum();
            assert!(ends <= dec.boundary_bound, "{ends} vs {}", dec.boundary_bound);
        }
    }

    #[test]
    fn deviation_exponents() {
        let a = aut();
        let e1 = LatticeSpec::new(1).unwrap();
        let mut rng = crate::rng::CounterRng::new(7);
        let xs: Vec<HeisPoint> = (0..12)
            .map(|_| HeisPoint::new(rng.next_f64(), rng.next_f64(), rng.next_f64()))
            .collect();
        // pure nonzero central frequency: rms|H| ~ t^{1/2}
        let h = sample(e1).mode_project(1);
        let fit = deviation_fit(&h, &a, &xs, 2.0e4, 25, true);
        assert!(
            (fit.slope - 0.5).abs() < 0.08,
            "slope {} r2 {}",
            fit.slope,
            fit.r2
        );
        assert!(fit.r2 > 0.95, "r2 {}", fit.r2);
        // constant observable without mean subtraction: |H| = t
        let one = Observable::constant(e1, C64::new(1.0, 0.0));
        let fit1 = deviation_fit(&one, &a, &xs[..2], 1.0e4, 15, false);
        assert!((fit1.slope - 1.0).abs() < 1e-6 && fit1.r2 > 0.999999);
    }

    #[test]
    fn invocation_scaling() {
        // renormalized work grows ~log t, direct work ~t
        let a = aut();
        let h = sample(LatticeSpec::new(1).unwrap());
        let x = HeisPoint::new(0.5, 0.5, 0.5);
        let d1 = direct_integral(&h, &a, x, 100.0);
        let d2 = direct_integral(&h, &a, x, 10000.0);
        assert!(d2.invocations >= 90 * d1.invocations);
        let r1 = renormalized_integral(&h, &a, x, 100.0);
        let r2 = renormalized_integral(&h, &a, x, 10000.0);
        assert!(r2.invocations <= 2 * r1.invocations.max(2));
    }
}
