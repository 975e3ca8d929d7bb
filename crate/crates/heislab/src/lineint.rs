//! Windowed integrals of observables along flow orbits,
//!
//!   I = int_{r1}^{r2} w(r) h(Psi_r x) dr,
//!
//! evaluated per lattice translate in closed form. Along the orbit each
//! translate of a Gaussian atom is exactly a complex Gaussian in r times a
//! polynomial, so its contribution is a combination of complex-erf moments;
//! the smooth window enters through a short Taylor expansion at the bump
//! center. When an atom's bump is not narrow compared to the window (or a
//! torus mode oscillates slowly compared to the chunk) the code falls back
//! to pointwise Gauss-Legendre panels on the same per-translate data.
//!
//! The orbit is processed in chunks of bounded length. Each chunk is
//! re-reduced to the fundamental domain before its translates are
//! enumerated, so all floating-point phases stay O(1) regardless of how
//! long the full integration interval is.

use crate::enumerate::points_near_segment;
use crate::heis::{Automorphism, HeisPoint};
use crate::observable::{atom_radius, Observable};
use crate::special::gl_cached;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Smooth real window along the orbit. `scale` is the characteristic
/// variation length (infinite for a constant window); derivatives are taken
/// by finite differences at a step tied to that scale.
pub trait Window: Sync {
    fn eval(&self, r: f64) -> f64;
    fn scale(&self) -> f64;

    /// w, w', w'', w''', w'''' at r (order-4 central differences).
    fn jet(&self, r: f64) -> [f64; 5] {
        let s = self.scale();
        if !s.is_finite() {
            return [self.eval(r), 0.0, 0.0, 0.0, 0.0];
        }
        let h = s / 50.0;
        let f: Vec<f64> = (-3..=3).map(|i| self.eval(r + i as f64 * h)).collect();
        let d1 = (f[0] - 9.0 * f[1] + 45.0 * f[2] - 45.0 * f[4] + 9.0 * f[5] - f[6]) / (-60.0 * h);
        let d2 = (2.0 * f[0] - 27.0 * f[1] + 270.0 * f[2] - 490.0 * f[3] + 270.0 * f[4]
            - 27.0 * f[5]
            + 2.0 * f[6])
            / (180.0 * h * h);
        let d3 = (f[0] - 8.0 * f[1] + 13.0 * f[2] - 13.0 * f[4] + 8.0 * f[5] - f[6])
            / (-8.0 * h * h * h);
        let d4 = (-f[0] + 12.0 * f[1] - 39.0 * f[2] + 56.0 * f[3] - 39.0 * f[4] + 12.0 * f[5]
            - f[6])
            / (6.0 * h * h * h * h);
        [f[3], d1, d2, d3, d4]
    }
}

pub struct ConstWindow;

impl Window for ConstWindow {
    fn eval(&self, _r: f64) -> f64 {
        1.0
    }
    fn scale(&self) -> f64 {
        f64::INFINITY
    }
}

/// Window from a closure plus a declared variation scale.
pub struct FnWindow<F: Fn(f64) -> f64 + Sync> {
    pub f: F,
    pub scale: f64,
}

impl<F: Fn(f64) -> f64 + Sync> Window for FnWindow<F> {
    fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }
    fn scale(&self) -> f64 {
        self.scale
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegralResult {
    pub value: C64,
    /// Chunk evaluations performed (the unit of work that scales with the
    /// orbit length; inner per-translate arithmetic is not counted).
    pub invocations: u64,
}

const CHUNK_LEN: f64 = 2.0;
/// Bump-width / window-scale ratio below which the Taylor path is accurate
/// to ~1e-10 even for windows with large high derivatives; wider bumps take
/// the quadrature path.
const TAYLOR_RATIO: f64 = 0.0002;

/// Central moments int_{s1}^{s2} (s-mu)^j exp(-a (s-mu)^2 + kappa) ds for
/// j = 0..4, via the erf closed form and integration by parts. The caller
/// guarantees Re(kappa - a (s-mu)^2) <= 0 on the segment.
fn gaussian_moments5(a: f64, mu: C64, kappa: C64, s1: f64, s2: f64) -> [C64; 5] {
    let m = crate::special::gaussian_segment_moments(a, mu, kappa, s1, s2);
    let d1 = C64::new(s1, 0.0) - mu;
    let d2 = C64::new(s2, 0.0) - mu;
    let b1 = (kappa - a * d1 * d1).exp();
    let b2 = (kappa - a * d2 * d2).exp();
    let mut out = [m.m0, m.m1, m.m2, C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
    // m_j = ((j-1) m_{j-2} - [ (s-mu)^{j-1} e^{...} ]_{s1}^{s2}) / (2a)
    out[3] = (2.0 * out[1] - (d2 * d2 * b2 - d1 * d1 * b1)) / (2.0 * a);
    out[4] = (3.0 * out[2] - (d2 * d2 * d2 * b2 - d1 * d1 * d1 * b1)) / (2.0 * a);
    out
}

/// Moments int_{s1}^{s2} s^j exp(i omega s) ds for j = 0..4.
fn exp_moments5(omega: f64, s1: f64, s2: f64) -> [C64; 5] {
    let len = s2 - s1;
    let mut out = [C64::new(0.0, 0.0); 5];
    if omega.abs() * len.abs() < 0.5 {
        // series in omega; converges quickly and avoids 1/omega cancellation
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            let mut pw = C64::new(1.0, 0.0); // (i omega)^n / n!
            for n in 0..24 {
                let k = (j + n + 1) as f64;
                acc += pw * ((s2.powi(j as i32 + n as i32 + 1) - s1.powi(j as i32 + n as i32 + 1)) / k);
                pw *= C64::new(0.0, omega) / (n as f64 + 1.0);
                if pw.norm() < 1e-20 {
                    break;
                }
            }
            *o = acc;
        }
    } else {
        let iw = C64::new(0.0, omega);
        let e1 = (iw * s1).exp();
        let e2 = (iw * s2).exp();
        out[0] = (e2 - e1) / iw;
        let mut p1 = C64::new(1.0, 0.0);
        let mut p2 = C64::new(1.0, 0.0);
        for j in 1..5 {
            p1 *= s1;
            p2 *= s2;
            out[j] = (p2 * e2 - p1 * e1 - j as f64 * out[j - 1]) / iw;
        }
    }
    out
}

/// One translate of one atom restricted to the chunk's orbit segment:
/// (p0 + p1 (s - c)) exp(-a (s - mu)^2 + kappa), with the real expansion
/// point c (clamped bump center) carried along for window Taylor.
struct LineTerm {
    a: f64,
    mu: C64,
    kappa: C64,
    c: f64,
    p0: C64,
    p1: C64,
}

impl LineTerm {
    fn eval(&self, s: f64) -> C64 {
        let d = C64::new(s, 0.0) - self.mu;
        (self.p0 + self.p1 * (s - self.c)) * (self.kappa - self.a * d * d).exp()
    }

    /// Integral against the window over [s1, s2], window arguments offset by
    /// `mid` (the chunk midpoint in global time).
    fn integrate<W: Window + ?Sized>(&self, window: &W, mid: f64, s1: f64, s2: f64) -> C64 {
        let sigma = 1.0 / (2.0 * self.a).sqrt();
        let tw = window.scale();
        if !tw.is_finite() {
            // constant window: two moments suffice and are exact
            let m = crate::special::gaussian_segment_moments(self.a, self.mu, self.kappa, s1, s2);
            let m1c = m.m1 + (self.mu - self.c) * m.m0;
            return window.eval(mid) * (self.p0 * m.m0 + self.p1 * m1c);
        }
        if sigma <= TAYLOR_RATIO * tw {
            let jet = window.jet(mid + self.c);
            let m = gaussian_moments5(self.a, self.mu, self.kappa, s1, s2);
            // power moments about c from central moments about mu
            let d = C64::new(self.c, 0.0) - self.mu;
            let mut pm = [C64::new(0.0, 0.0); 5];
            // (s-c)^j = sum_i binom(j,i) (s-mu)^i (-d)^{j-i}
            let binom = [[1.0_f64, 0., 0., 0., 0.], [1., 1., 0., 0., 0.], [1., 2., 1., 0., 0.], [1., 3., 3., 1., 0.], [1., 4., 6., 4., 1.]];
            for j in 0..5 {
                let mut acc = C64::new(0.0, 0.0);
                let mut dp = C64::new(1.0, 0.0); // (-d)^{j-i} built downward
                for i in (0..=j).rev() {
                    acc += binom[j][i] * m[i] * dp;
                    dp *= -d;
                }
                pm[j] = acc;
            }
            let mut fact = 1.0;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..5 {
                if j > 0 {
                    fact *= j as f64;
                }
                // window Taylor term j needs poly-degree j and j+1 moments
                acc += jet[j] / fact * (self.p0 * pm[j] + if j + 1 < 5 { self.p1 * pm[j + 1] } else {
                    // degree-5 moment of the quartic term's linear part is
                    // negligible at this sigma/tw ratio
                    C64::new(0.0, 0.0)
                });
            }
            acc
        } else {
            // quadrature resolving both the bump and the window; the phase
            // rate is O(1/sigma) so the same spacing resolves it too. The
            // envelope is exp(-a (s - Re mu)^2) up to constants, so restrict
            // to its significant support: the panel count is then O(1)
            // however squeezed the bump is.
            let reach = (46.0 / self.a).sqrt();
            let s1 = s1.max(self.mu.re - reach);
            let s2 = s2.min(self.mu.re + reach);
            if s2 <= s1 {
                return C64::new(0.0, 0.0);
            }
            let panel = (sigma.min(tw) / 3.0).min(0.125);
            let (nodes, weights) = gl_cached(12);
            let n_panels = (((s2 - s1) / panel).ceil() as usize).max(1);
            let h = (s2 - s1) / n_panels as f64;
            let mut acc = C64::new(0.0, 0.0);
            for p in 0..n_panels {
                let c = s1 + (p as f64 + 0.5) * h;
                for (x, w) in nodes.iter().zip(weights) {
                    let s = c + 0.5 * h * x;
                    acc += *w * window.eval(mid + s) * self.eval(s);
                }
            }
            acc * 0.5 * h
        }
    }
}

/// The windowed flow integral; see module docs. `x` is the orbit base point.
pub fn windowed_flow_integral<W: Window + ?Sized>(
    h: &Observable,
    aut: &Automorphism,
    x: HeisPoint,
    r1: f64,
    r2: f64,
    window: &W,
) -> IntegralResult {
    if r1 == r2 {
        return IntegralResult {
            value: C64::new(0.0, 0.0),
            invocations: 0,
        };
    }
    if r1 > r2 {
        let mut res = windowed_flow_integral(h, aut, x, r2, r1, window);
        res.value = -res.value;
        return res;
    }
    let n_chunks = (((r2 - r1) / CHUNK_LEN).ceil() as usize).max(1);
    let len = (r2 - r1) / n_chunks as f64;
    // Base points at chunk midpoints, each reduced directly at its own time
    // so that coordinates (and hence phases) stay O(1) with no accumulated
    // drift along the orbit; see `orbit_point`.
    let bases: Vec<HeisPoint> = (0..n_chunks)
        .map(|i| crate::heis::orbit_point(x, r1 + (i as f64 + 0.5) * len, aut, h.lattice))
        .collect();
    let one = |(i, g0): (usize, &HeisPoint)| -> C64 {
        let mid = r1 + (i as f64 + 0.5) * len;
        chunk_integral(h, aut, *g0, mid, -0.5 * len, 0.5 * len, window)
    };
    #[cfg(feature = "parallel")]
    let value = {
        use rayon::prelude::*;
        bases.par_iter().enumerate().map(one).sum()
    };
    #[cfg(not(feature = "parallel"))]
    let value = bases.iter().enumerate().map(one).sum();
    IntegralResult {
        value,
        invocations: n_chunks as u64,
    }
}

fn chunk_integral<W: Window + ?Sized>(
    h: &Observable,
    aut: &Automorphism,
    g0: HeisPoint,
    mid: f64,
    s1: f64,
    s2: f64,
    window: &W,
) -> C64 {
    let e = (aut.alpha, aut.beta);
    let mut acc = C64::new(0.0, 0.0);

    // Torus part: each mode is a pure exponential in s. The window is
    // projected onto a degree-4 polynomial per panel (a Filon scheme: the
    // node values are shared across modes) and the oscillation is then
    // integrated in closed form, so for transferred modes neither the cost
    // nor the accuracy depends on the lambda^k-sized frequency: the
    // interpolation error loses the same 1/omega to oscillation that the
    // transferred amplitude gains.
    if !h.torus.coeffs.is_empty() {
        let tw = window.scale();
        if !tw.is_finite() {
            let w0 = window.eval(mid);
            for ((m1, m2), coeff) in &h.torus.coeffs {
                let omega = 2.0 * PI * (*m1 as f64 * e.0 + *m2 as f64 * e.1);
                let amp = coeff
                    * C64::new(0.0, 2.0 * PI * (*m1 as f64 * g0.x + *m2 as f64 * g0.y)).exp();
                let m = exp_moments5(omega, s1, s2);
                acc += amp * w0 * m[0];
            }
        } else {
            // degree-4 Lagrange basis on u in {-1, -1/2, 0, 1/2, 1},
            // row i = coefficients of L_i by increasing power of u
            const LAG: [[f64; 5]; 5] = [
                [0.0, 1.0 / 6.0, -1.0 / 6.0, -2.0 / 3.0, 2.0 / 3.0],
                [0.0, -4.0 / 3.0, 8.0 / 3.0, 4.0 / 3.0, -8.0 / 3.0],
                [1.0, 0.0, -5.0, 0.0, 4.0],
                [0.0, 4.0 / 3.0, 8.0 / 3.0, -4.0 / 3.0, -8.0 / 3.0],
                [0.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0, 2.0 / 3.0],
            ];
            let len = s2 - s1;
            let n_panels = ((len / (tw / 32.0)).ceil() as usize).max(1);
            let hh = len / n_panels as f64;
            let half = 0.5 * hh;
            let panels: Vec<(f64, [f64; 5])> = (0..n_panels)
                .map(|p| {
                    let c = s1 + (p as f64 + 0.5) * hh;
                    let mut aj = [0.0f64; 5];
                    for (i, ui) in [-1.0f64, -0.5, 0.0, 0.5, 1.0].iter().enumerate() {
                        let f = window.eval(mid + c + half * ui);
                        for (a, l) in aj.iter_mut().zip(&LAG[i]) {
                            *a += f * l;
                        }
                    }
                    (c, aj)
                })
                .collect();
            for ((m1, m2), coeff) in &h.torus.coeffs {
                let omega = 2.0 * PI * (*m1 as f64 * e.0 + *m2 as f64 * e.1);
                let amp = coeff
                    * C64::new(0.0, 2.0 * PI * (*m1 as f64 * g0.x + *m2 as f64 * g0.y)).exp();
                let m = exp_moments5(omega * half, -1.0, 1.0);
                let mut q = C64::new(0.0, 0.0);
                for (c, aj) in &panels {
                    let mut s = C64::new(0.0, 0.0);
                    for (a, mo) in aj.iter().zip(&m) {
                        s += *a * mo;
                    }
                    q += C64::new(0.0, omega * c).exp() * s;
                }
                acc += amp * q * half;
            }
        }
    }

    // Gaussian atoms
    let rho = atom_radius();
    let mut pts = Vec::new();
    for mode in &h.central {
        let d = h.lattice.e as i64 * mode.n as i64;
        let df = d as f64;
        for atom in &mode.atoms {
            let fq = atom.quad;
            let m = fq.frame;
            let qb = fq.base;
            // frame-mapped flow direction; for transferred atoms this is the
            // stable eigendirection scaled by lambda^k, with no cancellation
            let me = (
                m[0][0] as f64 * e.0 + m[0][1] as f64 * e.1,
                m[1][0] as f64 * e.0 + m[1][1] as f64 * e.1,
            );
            let ee = qb.eval(me);
            let ga = PI * ee;
            let qme = qb.apply(me);
            // w-plane segment traced by the orbit over the chunk
            let w_at = |s: f64| {
                (
                    g0.x + e.0 * s - atom.center[0],
                    g0.y + e.1 * s - atom.center[1],
                )
            };
            points_near_segment(fq, w_at(s1), w_at(s2), rho, &mut pts);
            for &(p, qq) in &pts {
                // (p, qq) is relative to the fractional center; the true
                // lattice translate carries the phase data
                let v1 = p - atom.center_int[0];
                let v2 = qq - atom.center_int[1];
                // frame coordinates of the mid-chunk displacement, with the
                // integer translate folded in exactly
                let mw = fq.frame_coords_split(w_at(0.0), (p, qq));
                // bump center along s and local data evaluated there
                let s0 = -(mw.0 * qme.0 + mw.1 * qme.1) / ee;
                let mw0 = (mw.0 + me.0 * s0, mw.1 + me.1 * s0);
                let g_amp = PI * qb.eval(mw0); // >= 0, small on enumerated points
                // phase rate: 2 pi D d/ds z'(s) (constant along the orbit);
                // the translate index makes this genuinely lambda^k-sized
                let zdot = 0.5
                    * (aut.beta * (g0.x + e.0 * s0 - v1 as f64)
                        - aut.alpha * (g0.y + e.1 * s0 - v2 as f64));
                let omega = 2.0 * PI * df * zdot;
                // phase at s0 (v1 v2 / 2 handled exactly as a sign)
                let odd = (d as i128) * (v1 as i128) * (v2 as i128);
                let sign = if odd & 1 == 1 { -1.0 } else { 1.0 };
                let x0 = g0.x + e.0 * s0;
                let y0 = g0.y + e.1 * s0;
                let z0 = g0.z + 0.5 * (g0.x * aut.beta - g0.y * aut.alpha) * s0;
                let theta = 2.0 * PI * df * (z0 + 0.5 * (v2 as f64 * x0 - v1 as f64 * y0));
                let mu = C64::new(s0, omega / (2.0 * ga));
                let kappa = C64::new(-g_amp - omega * omega / (4.0 * ga), theta);
                let c = s0.clamp(s1, s2);
                // polynomial part in frame coordinates
                let poly_c = atom.poly[0]
                    + atom.poly[1] * (mw.0 + me.0 * c)
                    + atom.poly[2] * (mw.1 + me.1 * c);
                let poly_s = atom.poly[1] * me.0 + atom.poly[2] * me.1;
                let term = LineTerm {
                    a: ga,
                    mu,
                    kappa,
                    c,
                    p0: poly_c,
                    p1: poly_s,
                };
                acc += atom.coeff * sign * term.integrate(window, mid, s1, s2);
            }
        }
    }
    acc
}
