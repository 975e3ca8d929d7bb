//! Special functions used by the line-integral kernels: the Faddeeva
//! function, the complex error function, and Gauss-Legendre rules.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::sync::OnceLock;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Weideman's rational approximation of the Faddeeva function
/// w(z) = exp(-z^2) erfc(-iz), valid for Im z >= 0. N terms of the
/// expansion in Z = (L+iz)/(L-iz); N = 48 gives close to full double
/// precision throughout the closed upper half plane.
const WEIDEMAN_N: usize = 48;

fn weideman_coeffs() -> &'static [f64; WEIDEMAN_N] {
    static COEFFS: OnceLock<[f64; WEIDEMAN_N]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let n = WEIDEMAN_N;
        let m = 2 * n;
        let l = (n as f64).sqrt() / 2f64.powf(0.25);
        // Fourier (cosine) coefficients of theta -> (L^2 + t^2) exp(-t^2),
        // t = L tan(theta/2), sampled at theta_k = k pi / M.
        let mut c = [0.0f64; WEIDEMAN_N];
        for (j, cj) in c.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in -(m as i64 - 1)..=(m as i64 - 1) {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                let f = (l * l + t * t) * (-t * t).exp();
                acc += f * ((j + 1) as f64 * theta).cos();
            }
            *cj = acc / (2.0 * m as f64);
        }
        c
    })
}

fn faddeeva_upper(z: C64) -> C64 {
    debug_assert!(z.im >= 0.0);
    let n = WEIDEMAN_N;
    let l = (n as f64).sqrt() / 2f64.powf(0.25);
    let c = weideman_coeffs();
    let iz = C64::new(-z.im, z.re);
    let denom = C64::new(l, 0.0) - iz;
    let big_z = (C64::new(l, 0.0) + iz) / denom;
    // Horner in Z, highest coefficient first.
    let mut p = C64::new(0.0, 0.0);
    for j in (0..n).rev() {
        p = p * big_z + c[j];
    }
    (2.0 * p) / (denom * denom) + C64::new(1.0 / SQRT_PI, 0.0) / denom
}

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for arbitrary complex z.
/// For Im z < 0 the reflection w(z) = 2 exp(-z^2) - w(-z) is used, which
/// overflows once exp(Im z^2 - Re z^2) does.
pub fn faddeeva_w(z: C64) -> C64 {
    if z.im >= 0.0 {
        faddeeva_upper(z)
    } else {
        2.0 * (-z * z).exp() - faddeeva_upper(-z)
    }
}

/// Scaled complementary error function erfcx(x) = exp(x^2) erfc(x), real x.
pub fn erfcx(x: f64) -> f64 {
    if x >= 0.0 {
        faddeeva_upper(C64::new(0.0, x)).re
    } else {
        2.0 * (x * x).exp() - erfcx(-x)
    }
}

/// Error function for complex argument.
pub fn erf(z: C64) -> C64 {
    // erf(z) = 1 - exp(-z^2) w(iz), stable for Re z >= 0 (then Im(iz) >= 0).
    if z.re >= 0.0 {
        let iz = C64::new(-z.im, z.re);
        C64::new(1.0, 0.0) - (-z * z).exp() * faddeeva_upper(iz)
    } else {
        -erf(-z)
    }
}

pub fn erf_real(x: f64) -> f64 {
    erf(C64::new(x, 0.0)).re
}

/// Central moments of a complex Gaussian over a real segment:
///
///   m_j = int_{r1}^{r2} (r - mu)^j exp(-a (r - mu)^2 + kappa) dr,  j = 0,1,2
///
/// with a > 0 real, mu and kappa complex. Evaluation is overflow-safe
/// provided the caller normalizes kappa so that the real part of the
/// exponent stays bounded on the segment (the usual convention is
/// max_r Re(kappa - a(r-mu)^2) <= 0).
#[derive(Debug, Clone, Copy)]
pub struct SegmentMoments {
    pub m0: C64,
    pub m1: C64,
    pub m2: C64,
}

pub fn gaussian_segment_moments(a: f64, mu: C64, kappa: C64, r1: f64, r2: f64) -> SegmentMoments {
    assert!(a > 0.0, "gaussian_segment_moments requires a > 0");
    let sa = a.sqrt();
    let z1 = sa * (C64::new(r1, 0.0) - mu);
    let z2 = sa * (C64::new(r2, 0.0) - mu);
    // e^{kappa} erf(z) assembled so every exponential carries a combined
    // exponent of the form kappa - z^2 (the endpoint value of the integrand
    // exponent) or plain kappa when Re mu lies inside the segment; both are
    // bounded by assumption.
    let half = |z: C64| -> (f64, C64) {
        // returns (sign, e^{kappa - z^2} w(i sign z)) with sign = sgn(Re z)
        let s = if z.re >= 0.0 { 1.0 } else { -1.0 };
        let zs = s * z;
        let izs = C64::new(-zs.im, zs.re);
        (s, (kappa - z * z).exp() * faddeeva_upper(izs))
    };
    let (s1, t1) = half(z1);
    let (s2, t2) = half(z2);
    let ek = if s1 == s2 {
        C64::new(0.0, 0.0)
    } else {
        kappa.exp()
    };
    // e^{kappa}(erf(z2) - erf(z1)) with the constant parts cancelled
    // analytically when the endpoint signs agree.
    let erf_diff_scaled = (s2 - s1) * ek - s2 * t2 + s1 * t1;
    let m0 = SQRT_PI / (2.0 * sa) * erf_diff_scaled;

    // Boundary values exp(kappa - a (r_i - mu)^2).
    let b1 = (kappa - z1 * z1).exp();
    let b2 = (kappa - z2 * z2).exp();
    let m1 = (b1 - b2) / (2.0 * a);
    let m2 = m0 / (2.0 * a)
        + ((C64::new(r1, 0.0) - mu) * b1 - (C64::new(r2, 0.0) - mu) * b2) / (2.0 * a);
    SegmentMoments { m0, m1, m2 }
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b] with panels of
/// width at most `panel` and `order` nodes per panel.
pub fn composite_gl<F: FnMut(f64) -> C64>(
    a: f64,
    b: f64,
    panel: f64,
    order: usize,
    mut f: F,
) -> C64 {
    if a == b {
        return C64::new(0.0, 0.0);
    }
    let (sign, lo, hi) = if a <= b { (1.0, a, b) } else { (-1.0, b, a) };
    let n_panels = (((hi - lo) / panel).ceil() as usize).max(1);
    let h = (hi - lo) / n_panels as f64;
    let (nodes, weights) = gl_cached(order);
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..n_panels {
        let c = lo + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            acc += *w * f(c + 0.5 * h * x);
        }
    }
    sign * acc * (0.5 * h)
}

/// Cached rule for the orders used in hot loops. Rules are computed once
/// and leaked; only a handful of distinct orders ever occur.
pub fn gl_cached(order: usize) -> (&'static [f64], &'static [f64]) {
    type Cache = std::sync::Mutex<std::collections::HashMap<usize, (&'static [f64], &'static [f64])>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(std::collections::HashMap::new()));
    let mut map = cache.lock().unwrap();
    *map.entry(order).or_insert_with(|| {
        let (n, w) = gauss_legendre(order);
        (
            Box::leak(n.into_boxed_slice()),
            Box::leak(w.into_boxed_slice()),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn faddeeva_reference_values() {
        // Reference values from mpmath (exp(-z^2) erfc(-iz) at 50 digits).
        let cases: &[((f64, f64), (f64, f64))] = &[
            ((0.0, 0.0), (1.0, 0.0)),
            ((0.0, 1.0), (0.42758357615580700442, 0.0)),
            ((1.0, 0.0), (0.36787944117144232160, 0.60715770584139372912)),
            ((2.5, 1.5), (0.11123345956255826876, 0.16323674719804184132)),
            ((-2.5, 1.5), (0.11123345956255826876, -0.16323674719804184132)),
            ((5.0, 0.1), (0.0024069117169427119505, 0.11519442455072768717)),
            ((0.5, -0.5), (1.2220084158685705185, 1.1893393085928644093)),
        ];
        for &((zr, zi), (wr, wi)) in cases {
            let w = faddeeva_w(c(zr, zi));
            assert!(
                (w.re - wr).abs() < TOL && (w.im - wi).abs() < TOL,
                "w({zr}+{zi}i) = {w:?}, want {wr}+{wi}i"
            );
        }
    }

    #[test]
    fn erf_reference_values() {
        let cases: &[((f64, f64), (f64, f64))] = &[
            ((1.0, 0.0), (0.84270079294971486934, 0.0)),
            ((2.0, 0.0), (0.99532226501895273416, 0.0)),
            ((1.0, 1.0), (1.3161512816979476449, 0.19045346923783468628)),
            ((-1.0, 1.0), (-1.3161512816979476449, 0.19045346923783468628)),
            ((0.3, -2.0), (14.028218985110459679, -9.1551462040302196345)),
        ];
        for &((zr, zi), (er, ei)) in cases {
            let v = erf(c(zr, zi));
            let scale = 1.0f64.max(er.abs()).max(ei.abs());
            assert!(
                (v.re - er).abs() < TOL * scale && (v.im - ei).abs() < TOL * scale,
                "erf({zr}+{zi}i) = {v:?}, want {er}+{ei}i"
            );
        }
        assert!((erf_real(0.5) - 0.52049987781304653768).abs() < TOL);
        assert!((erfcx(3.0) - 0.17900115118138995042).abs() < TOL);
        assert!((erfcx(-1.0) - 5.0089800807622834663).abs() < 1e-12);
    }

    #[test]
    fn faddeeva_symmetry() {
        // w(-conj z) = conj(w(z))
        for &(zr, zi) in &[(0.7, 0.3), (3.2, 0.01), (0.1, 4.0), (6.0, 2.0)] {
            let z = c(zr, zi);
            let lhs = faddeeva_w(c(-zr, zi));
            let rhs = faddeeva_w(z).conj();
            assert!((lhs - rhs).norm() < TOL * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn gaussian_moments_against_quadrature() {
        let cases = [
            (1.3, c(0.4, 0.2), c(-0.1, 2.0), -1.0, 2.0),
            (0.2, c(-3.0, -1.0), c(-0.9, 0.3), 0.0, 5.0),
            (8.0, c(2.0, 0.05), c(-0.32, -7.0), 1.5, 2.5),
            (2.0, c(10.0, 0.5), c(-0.2, 0.0), -1.0, 1.0), // saddle far outside
        ];
        for (a, mu, kappa, r1, r2) in cases {
            // normalize kappa as contracted: subtract max real exponent
            let expo = |r: f64| (kappa - a * (c(r, 0.0) - mu) * (c(r, 0.0) - mu)).re;
            let m = expo(r1).max(expo(r2)).max(if (r1..=r2).contains(&mu.re) {
                expo(mu.re)
            } else {
                f64::NEG_INFINITY
            });
            let kap = kappa - m;
            let got = gaussian_segment_moments(a, mu, kap, r1, r2);
            let f = |j: i32| {
                composite_gl(r1, r2, 0.05, 12, |r| {
                    let d = c(r, 0.0) - mu;
                    d.powi(j) * (kap - a * d * d).exp()
                })
            };
            for (mj, j) in [(got.m0, 0), (got.m1, 1), (got.m2, 2)] {
                let want = f(j);
                assert!(
                    (mj - want).norm() < 1e-11 * want.norm().max(1.0),
                    "a={a} mu={mu} j={j}: got {mj:?} want {want:?}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_rule() {
        let (x, w) = gauss_legendre(16);
        assert_eq!(x.len(), 16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact for polynomials of degree <= 31
        for deg in [0usize, 5, 17, 31] {
            let s: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(deg as i32))
                .sum();
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((s - exact).abs() < 1e-13, "deg {deg}");
        }
        // composite quadrature of an oscillatory integrand
        let v = composite_gl(0.0, PI, 0.25, 16, |t| c(0.0, 3.0 * t).exp());
        let exact = (c(0.0, 3.0 * PI).exp() - 1.0) / c(0.0, 3.0);
        assert!((v - exact).norm() < 1e-13);
    }
}
