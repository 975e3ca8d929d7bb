//! Resonance spectra of the fiber transfer operators: the exact algebraic
//! oracle built from the discrete quadratic-phase propagator, truncated
//! anisotropically weighted matrices with band classification, numerical
//! spectral projectors, and the Bargmann/escape-function norm.

use crate::heis::Automorphism;
use crate::observable::Observable;
use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("parity condition ab = cd = 0 mod 2 violated")]
    Parity,
    #[error("propagator is not unitary (defect {0:.3e}); unsupported matrix/degree pair")]
    NotUnitary(f64),
    #[error("quadrature grid {grid} too coarse for max frequency {fmax}")]
    GridTooCoarse { grid: usize, fmax: f64 },
    #[error("eigendecomposition failed")]
    EigenFailure,
    #[error("eigenvalue modulus within 1e-6 of the split radius {0}")]
    SplitCollision(f64),
    #[error("eigenbasis condition number {0:.3e} too large")]
    IllConditioned(f64),
    #[error("invalid argument: {0}")]
    Invalid(&'static str),
}

// ---------------------------------------------------------------------------
// exact oracle
// ---------------------------------------------------------------------------

/// The discrete quadratic-phase propagator of the linear map at
/// inverse-Planck parameter D:
/// U_{k,j} = (i D b)^{-1/2} exp(i pi (a k^2 - 2 k j + d j^2) / (D b)).
/// Requires the parity condition ab = cd = 0 (mod 2); unitarity is checked
/// numerically and failure reported (it can fail for b > 1 at unlucky D).
pub fn quantum_propagator(aut: &Automorphism, d: usize) -> Result<Mat<C64>, SpectralError> {
    if d == 0 {
        return Err(SpectralError::Invalid("D must be positive"));
    }
    if (aut.a * aut.b) % 2 != 0 || (aut.c * aut.d) % 2 != 0 {
        return Err(SpectralError::Parity);
    }
    if aut.b == 0 {
        return Err(SpectralError::Invalid("propagator formula needs b != 0"));
    }
    let db = d as f64 * aut.b as f64;
    // 1/sqrt(i db) with the principal branch: e^{-i pi/4}/sqrt(db)
    let amp = C64::from_polar(1.0 / db.sqrt(), -PI / 4.0 * db.signum());
    let m = Mat::from_fn(d, d, |k, j| {
        let (kf, jf) = (k as f64, j as f64);
        let phase = PI / db * (aut.a as f64 * kf * kf - 2.0 * kf * jf + aut.d as f64 * jf * jf);
        amp * C64::from_polar(1.0, phase)
    });
    // unitarity check
    let mut defect = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += m[(k, i)].conj() * m[(k, j)];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((acc - target).norm());
        }
    }
    if defect > 1e-10 {
        return Err(SpectralError::NotUnitary(defect));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    Exact,
    Numeric,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Resonance {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub phase: f64,
    /// band index k (modulus near lambda^{1/2-k}), if assigned
    pub band: Option<i32>,
    pub multiplicity: usize,
}

impl Resonance {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSet {
    pub items: Vec<Resonance>,
    pub lambda: f64,
    pub source: Source,
}

impl ResonanceSet {
    pub fn band(&self, k: i32) -> Vec<&Resonance> {
        self.items.iter().filter(|r| r.band == Some(k)).collect()
    }
}

fn sort_descending(items: &mut [Resonance]) {
    items.sort_by(|p, q| q.modulus.total_cmp(&p.modulus));
}

/// Eigenphases of the propagator at D = E N, spread over the bands:
/// { lambda^{1/2-k} e^{i phi_j} : j = 1..D, k = 0..kmax }.
pub fn resonances_exact(
    aut: &Automorphism,
    n: i32,
    e: u32,
    kmax: i32,
) -> Result<ResonanceSet, SpectralError> {
    if n == 0 {
        return Err(SpectralError::Invalid("N must be nonzero"));
    }
    let d = (e as i64 * n.unsigned_abs() as i64) as usize;
    let u = quantum_propagator(aut, d)?;
    let evd = u.eigen().map_err(|_| SpectralError::EigenFailure)?;
    let s = evd.S();
    let mut items = Vec::new();
    for k in 0..=kmax {
        let modulus = aut.lambda.powf(0.5 - k as f64);
        for j in 0..d {
            let phase = s[j].arg();
            let v = C64::from_polar(modulus, phase);
            items.push(Resonance {
                re: v.re,
                im: v.im,
                modulus,
                phase,
                band: Some(k),
                multiplicity: 1,
            });
        }
    }
    sort_descending(&mut items);
    Ok(ResonanceSet {
        items,
        lambda: aut.lambda,
        source: Source::Exact,
    })
}

// ---------------------------------------------------------------------------
// twisted basis and weighted transfer matrix
// ---------------------------------------------------------------------------

/// Concrete sections of the degree-D bundle in the u-representation
/// b = e^{-pi i D x y} u, with u periodic in x and u(x, y+1) = e^{2 pi i D x} u(x, y):
/// u_{j,m,s}(x,y) = sum_l e^{2 pi i m (y+l-s)} e^{-pi D (y+l-s)^2} e^{2 pi i (j - D l) x},
/// indexed by residue j mod D, transverse frequency m in [-cutoff, cutoff] and
/// Gaussian center s on the grid i/shift_den, |i| <= shift_den * shift_span.
///
/// The shifts matter: without them the fiber span is only {trig poly * one
/// fixed Gaussian comb}, a proper closed subspace, and compressions of the
/// transfer operator onto it carry no resonance bands. Translated atoms both
/// complete the system (an oversampled Gabor frame for shift_den >= 2) and
/// give it x-frequency reach ~ D * shift_span, which the escape weight needs
/// along the slanted stable frequency axis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwistedBasis {
    pub d: usize,
    pub cutoff: i32,
    pub shift_den: i32,
    pub shift_span: i32,
}

impl TwistedBasis {
    pub fn new(d: usize, cutoff: i32) -> Self {
        assert!(d >= 1 && cutoff >= 1);
        Self { d, cutoff, shift_den: 1, shift_span: 0 }
    }

    /// Basis with translated atoms at centers i/den, i in -den*span..=den*span.
    pub fn with_shifts(d: usize, cutoff: i32, den: i32, span: i32) -> Self {
        assert!(d >= 1 && cutoff >= 1 && den >= 1 && span >= 0);
        Self { d, cutoff, shift_den: den, shift_span: span }
    }

    fn n_shifts(&self) -> usize {
        2 * (self.shift_den * self.shift_span) as usize + 1
    }

    pub fn size(&self) -> usize {
        self.d * (2 * self.cutoff as usize + 1) * self.n_shifts()
    }

    /// flat index -> (j, m, s)
    pub fn label(&self, idx: usize) -> (usize, i32, f64) {
        let ns = self.n_shifts();
        let w = 2 * self.cutoff as usize + 1;
        let j = idx / (w * ns);
        let rem = idx % (w * ns);
        let m = (rem / ns) as i32 - self.cutoff;
        let si = (rem % ns) as i32 - self.shift_den * self.shift_span;
        (j, m, si as f64 / self.shift_den as f64)
    }

    fn l_range(&self) -> i64 {
        // e^{-pi D l^2} below 1e-18
        (3.63 / (self.d as f64).sqrt()).ceil() as i64 + 1
    }

    pub fn eval_u(&self, j: usize, m: i32, s: f64, x: f64, y: f64) -> C64 {
        let big_l = self.l_range();
        let lc = (s - y).round() as i64;
        let mut acc = C64::new(0.0, 0.0);
        for l in lc - big_l..=lc + big_l {
            let yy = y + l as f64 - s;
            let amp = (-PI * self.d as f64 * yy * yy).exp();
            let ph = 2.0 * PI * (m as f64 * yy + (j as f64 - self.d as f64 * l as f64) * x);
            acc += amp * C64::from_polar(1.0, ph);
        }
        acc
    }

    pub fn eval_b(&self, j: usize, m: i32, s: f64, x: f64, y: f64) -> C64 {
        C64::from_polar(1.0, -PI * self.d as f64 * x * y) * self.eval_u(j, m, s, x, y)
    }

    /// Largest x/y frequency carried by the basis itself.
    pub fn max_frequency(&self) -> f64 {
        (self.d as f64 * (self.l_range() + self.shift_span as i64 + 1) as f64)
            .max(self.cutoff as f64)
    }

    /// Representative frequency of an atom: x content sits at j - D l with
    /// l ~ s, y content at m.
    pub fn rep_frequency(&self, idx: usize) -> [f64; 2] {
        let (j, m, s) = self.label(idx);
        let js = if 2 * j as i64 > self.d as i64 {
            j as f64 - self.d as f64
        } else {
            j as f64
        };
        [js - self.d as f64 * s, m as f64]
    }
}

/// Anisotropic escape weight: 1 at the origin, ~ |zp|^{-r} along the stable
/// frequency axis, ~ |zq|^{r} along the unstable one. Arguments are scaled
/// by sqrt(2 pi max(|N|,1)).
pub fn escape_weight(r: f64, n: i32, zp: f64, zq: f64) -> f64 {
    assert!(r > 1.0);
    let s = 2.0 * PI * (n.unsigned_abs().max(1) as f64);
    ((1.0 + s * zq * zq) / (1.0 + s * zp * zp)).powf(0.5 * r)
}

/// Unit eigenvectors of the frequency action B = A^{-T}: `expanding` has
/// eigenvalue lambda (the stable frequency axis, zp), `contracting` has
/// eigenvalue 1/lambda (zq).
pub fn frequency_frame(aut: &Automorphism) -> ([f64; 2], [f64; 2]) {
    // B = [[d, -c], [-b, a]]
    let (a, b, c, d) = (aut.a as f64, aut.b as f64, aut.c as f64, aut.d as f64);
    let solve = |mu: f64| -> [f64; 2] {
        // (B - mu) v = 0; pick the better-conditioned row
        let r1 = [d - mu, -c];
        let r2 = [-b, a - mu];
        let v = if r1[0].abs().max(r1[1].abs()) >= r2[0].abs().max(r2[1].abs()) {
            [-r1[1], r1[0]]
        } else {
            [-r2[1], r2[0]]
        };
        let norm = v[0].hypot(v[1]);
        [v[0] / norm, v[1] / norm]
    };
    (solve(aut.lambda), solve(1.0 / aut.lambda))
}

/// Coordinates (zp, zq) of a frequency vector in the frame above.
pub fn zeta_coords(aut: &Automorphism, nu: [f64; 2]) -> (f64, f64) {
    let (ep, eq) = frequency_frame(aut);
    let det = ep[0] * eq[1] - ep[1] * eq[0];
    (
        (nu[0] * eq[1] - nu[1] * eq[0]) / det,
        (ep[0] * nu[1] - ep[1] * nu[0]) / det,
    )
}

#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub entries: Mat<C64>,
    pub basis: TwistedBasis,
    pub r: f64,
    pub n: i32,
    pub e: u32,
    pub lambda: f64,
    pub grid: usize,
}

/// Matrix of W Fhat W^{-1} compressed onto the truncated twisted basis, where
/// Fhat b = lambda * b o A^{-1} on the degree-D bundle and W acts as the
/// escape weight at each atom's representative frequency (the atoms are
/// frequency-localized, so W b_i ~ w_i b_i and the weighted overlaps are
/// S^w_{ij} = (w_i / w_j) <b_i, Fhat b_j>). The weight must enter before the
/// Gram solve -- scaling the solved matrix instead is a similarity transform
/// of the finite truncation and leaves its spectrum untouched.
///
/// Gram G = <b_i, b_j> and S come from trapezoid sums on a grid at least 4x
/// the largest frequency present (including the pullback's chirp). The
/// shifted atoms form an overcomplete frame, so instead of G^{-1} S the
/// compression orthonormalizes through the spectral decomposition of G,
/// discarding directions below 1e-10 of its top eigenvalue.
pub fn transfer_matrix(
    aut: &Automorphism,
    n: i32,
    e: u32,
    basis: TwistedBasis,
    r: f64,
) -> Result<TransferMatrix, SpectralError> {
    if n == 0 {
        return Err(SpectralError::Invalid("N must be nonzero; see transfer_constant"));
    }
    if (aut.a * aut.b) % 2 != 0 || (aut.c * aut.d) % 2 != 0 {
        return Err(SpectralError::Parity);
    }
    let d = (e as i64 * n.unsigned_abs() as i64) as usize;
    if basis.d != d {
        return Err(SpectralError::Invalid("basis degree must equal E*|N|"));
    }
    let dim = basis.size();
    // frequency budget: basis content, its image under A^{-T}, and the
    // quadratic chirp from the bundle phase
    let fb = basis.max_frequency();
    let chirp = d as f64
        * (aut.a * aut.b)
            .abs()
            .max((aut.c * aut.d).abs())
            .max(2 * (aut.b * aut.c).abs()) as f64;
    let fmax = aut.lambda * fb + fb + chirp;
    let grid = (4.0 * fmax).ceil() as usize;
    if (grid as f64) < 4.0 * fmax {
        return Err(SpectralError::GridTooCoarse { grid, fmax });
    }
    let m = grid;
    let inv_m = 1.0 / m as f64;
    // A^{-1}
    let (ia, ib, ic, id) = (aut.d as f64, -(aut.b as f64), -(aut.c as f64), aut.a as f64);

    let row_block = |iy: usize| -> (Mat<C64>, Mat<C64>) {
        let y = iy as f64 * inv_m;
        let mut bv = Mat::<C64>::zeros(dim, m);
        let mut fv = Mat::<C64>::zeros(dim, m);
        for ix in 0..m {
            let x = ix as f64 * inv_m;
            let (xp, yp) = (ia * x + ib * y, ic * x + id * y);
            for idx in 0..dim {
                let (j, mm, s) = basis.label(idx);
                bv[(idx, ix)] = basis.eval_b(j, mm, s, x, y);
                fv[(idx, ix)] = aut.lambda * basis.eval_b(j, mm, s, xp, yp);
            }
        }
        (bv, fv)
    };

    let accumulate = |(mut g, mut s): (Mat<C64>, Mat<C64>), (bv, fv): (Mat<C64>, Mat<C64>)| {
        // g += bv bv^H, s += bv fv^H (quadrature over the row)
        g += &bv * bv.adjoint();
        s += &bv * fv.adjoint();
        (g, s)
    };
    let zero = || (Mat::<C64>::zeros(dim, dim), Mat::<C64>::zeros(dim, dim));
    #[cfg(feature = "parallel")]
    let (gram, smat) = {
        use rayon::prelude::*;
        (0..m)
            .into_par_iter()
            .fold(zero, |acc, iy| accumulate(acc, row_block(iy)))
            .reduce(zero, |(g1, s1), (g2, s2)| (g1 + g2, s1 + s2))
    };
    #[cfg(not(feature = "parallel"))]
    let (gram, smat) = (0..m).fold(zero(), |acc, iy| accumulate(acc, row_block(iy)));
    let scale = C64::new(inv_m * inv_m, 0.0);
    let gram = Mat::from_fn(dim, dim, |i, j| gram[(i, j)] * scale);
    let smat = Mat::from_fn(dim, dim, |i, j| smat[(i, j)] * scale);

    // weighted overlaps, then compression through the orthonormalized frame
    let weight: Vec<f64> = (0..dim)
        .map(|idx| {
            let nu = basis.rep_frequency(idx);
            let (zp, zq) = zeta_coords(aut, nu);
            escape_weight(r, n, zp, zq)
        })
        .collect();
    let sw = Mat::from_fn(dim, dim, |i, j| smat[(i, j)] * (weight[i] / weight[j]));
    let evd = gram
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| SpectralError::EigenFailure)?;
    let gs = evd.S();
    let gu = evd.U();
    let top = (0..dim).map(|i| gs[i].re).fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..dim).filter(|&i| gs[i].re > 1e-10 * top).collect();
    let rank = keep.len();
    // columns of V scaled by eigenvalue^{-1/2} form an orthonormal basis of
    // the frame span; the compression there is V^H S^w V with that scaling
    let vs = Mat::from_fn(dim, rank, |i, a| gu[(i, keep[a])] * gs[keep[a]].re.powf(-0.5));
    let entries = vs.adjoint() * sw * &vs;
    Ok(TransferMatrix {
        entries,
        basis,
        r,
        n,
        e,
        lambda: aut.lambda,
        grid: m,
    })
}

/// The N = 0 analogue on constant sections is one-dimensional: Fhat 1 = lambda.
pub fn transfer_constant(aut: &Automorphism) -> f64 {
    aut.lambda
}

/// Eigenvalues of the truncated matrix, classified against the band radii
/// lambda^{1/2-k}; eigenvalues outside every tolerance annulus stay
/// unassigned (truncation artifacts).
pub fn resonances_numeric(m: &TransferMatrix, band_tol: f64) -> Result<ResonanceSet, SpectralError> {
    if !(0.0..0.5).contains(&band_tol) || band_tol <= 0.0 {
        return Err(SpectralError::Invalid("band_tol must lie in (0, 0.5)"));
    }
    let evd = m.entries.eigen().map_err(|_| SpectralError::EigenFailure)?;
    let s = evd.S();
    let mut items = Vec::new();
    for i in 0..m.entries.nrows() {
        let v: C64 = s[i];
        let modulus = v.norm();
        let mut band = None;
        if modulus > 0.0 {
            // nearest k with |modulus - lambda^{1/2-k}| <= tol * lambda^{1/2-k}
            let kf = 0.5 - modulus.ln() / m.lambda.ln();
            for k in [kf.floor() as i32, kf.ceil() as i32] {
                if k >= 0 {
                    let radius = m.lambda.powf(0.5 - k as f64);
                    if (modulus - radius).abs() <= band_tol * radius {
                        band = Some(k);
                        break;
                    }
                }
            }
        }
        items.push(Resonance {
            re: v.re,
            im: v.im,
            modulus,
            phase: v.arg(),
            band,
            multiplicity: 1,
        });
    }
    sort_descending(&mut items);
    Ok(ResonanceSet {
        items,
        lambda: m.lambda,
        source: Source::Numeric,
    })
}

// ---------------------------------------------------------------------------
// spectral decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<C64>,
    pub projectors: Vec<Mat<C64>>,
    pub nilpotents: Vec<Mat<C64>>,
    pub remainder: Mat<C64>,
    pub eta: f64,
    pub nilpotent_ranks: Vec<usize>,
}

fn mat_norm(m: &Mat<C64>) -> f64 {
    // Frobenius norm; adequate for the bound checks here
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Partial-fraction decomposition of M above modulus eta: eigenvalues are
/// clustered at 1e-6 relative, each cluster gets a projector from
/// right/left eigenvector dyads, nilpotents come from (M - xi) P, and
/// P0 = I - sum P_j absorbs the rest.
pub fn spectral_decomposition(
    m: &Mat<C64>,
    eta: f64,
) -> Result<SpectralDecomposition, SpectralError> {
    let dim = m.nrows();
    let evd = m.eigen().map_err(|_| SpectralError::EigenFailure)?;
    let s = evd.S();
    let u = evd.U();
    let umat = Mat::from_fn(dim, dim, |i, j| u[(i, j)]);
    let lu = umat.partial_piv_lu();
    let uinv = lu.solve(&Mat::<C64>::identity(dim, dim));
    let cond = mat_norm(&umat) * mat_norm(&uinv);
    if cond > 1e10 {
        return Err(SpectralError::IllConditioned(cond));
    }
    for i in 0..dim {
        if (s[i].norm() - eta).abs() < 1e-6 {
            return Err(SpectralError::SplitCollision(eta));
        }
    }
    // cluster eigenvalues above eta
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s[b].norm().total_cmp(&s[a].norm()));
    let mut clusters: Vec<(C64, Vec<usize>)> = Vec::new();
    for &i in &order {
        let v: C64 = s[i];
        if v.norm() <= eta {
            continue;
        }
        match clusters
            .iter_mut()
            .find(|(c, _)| (*c - v).norm() <= 1e-6 * c.norm().max(1.0))
        {
            Some((_, ids)) => ids.push(i),
            None => clusters.push((v, vec![i])),
        }
    }
    let mut eigenvalues = Vec::new();
    let mut projectors = Vec::new();
    let mut nilpotents = Vec::new();
    let mut ranks = Vec::new();
    let mut sum_p = Mat::<C64>::zeros(dim, dim);
    for (val, ids) in &clusters {
        let mut p = Mat::<C64>::zeros(dim, dim);
        for &i in ids {
            for a in 0..dim {
                for b in 0..dim {
                    p[(a, b)] += umat[(a, i)] * uinv[(i, b)];
                }
            }
        }
        let q = (m - Mat::from_fn(dim, dim, |i, j| if i == j { *val } else { C64::new(0.0, 0.0) }))
            * &p;
        let rank = if mat_norm(&q) > 1e-8 { ids.len() - 1 } else { 0 };
        eigenvalues.push(*val);
        sum_p += &p;
        projectors.push(p);
        nilpotents.push(q);
        ranks.push(rank);
    }
    let remainder = Mat::<C64>::identity(dim, dim) - &sum_p;
    Ok(SpectralDecomposition {
        eigenvalues,
        projectors,
        nilpotents,
        remainder,
        eta,
        nilpotent_ranks: ranks,
    })
}

// ---------------------------------------------------------------------------
// Bargmann transform and the anisotropic norm (single chart, desk scale)
// ---------------------------------------------------------------------------

/// 1D Bargmann kernel value phi_{x,xi}(y) = (2N)^{1/4} e^{i pi N xi (2y - x) - pi N (y-x)^2}.
pub fn bargmann_kernel_1d(n: f64, x: f64, xi: f64, y: f64) -> C64 {
    let amp = (2.0 * n).powf(0.25) * (-PI * n * (y - x) * (y - x)).exp();
    amp * C64::from_polar(1.0, PI * n * xi * (2.0 * y - x))
}

/// 2D kernel: product of the 1D kernels per coordinate (sqrt(2N) overall).
pub fn bargmann_kernel(n: f64, x: [f64; 2], xi: [f64; 2], y: [f64; 2]) -> C64 {
    bargmann_kernel_1d(n, x[0], xi[0], y[0]) * bargmann_kernel_1d(n, x[1], xi[1], y[1])
}

/// <phi_{x,xi}, f> by trapezoid quadrature over the kernel's support.
pub fn bargmann_point(
    f: &(dyn Fn([f64; 2]) -> C64 + Sync),
    n: f64,
    x: [f64; 2],
    xi: [f64; 2],
    half_width: f64,
    step: f64,
) -> C64 {
    let k = (half_width / step).ceil() as i64;
    let mut acc = C64::new(0.0, 0.0);
    for i in -k..=k {
        let y0 = x[0] + i as f64 * step;
        for j in -k..=k {
            let y1 = x[1] + j as f64 * step;
            acc += bargmann_kernel(n, x, xi, [y0, y1]).conj() * f([y0, y1]);
        }
    }
    acc * step * step
}

/// Smooth chart cutoff supported in (0,1), identically 1 on the middle.
pub fn chart_window(t: f64) -> f64 {
    crate::ergodic::eta(8.0 * t) * crate::ergodic::eta(8.0 * (1.0 - t))
}

/// Single-chart anisotropic norm ||W^r_N B f||_{L^2(N^2 dx dxi)} of the
/// mode-N local representative f(y) = h_N(y, z=0), windowed to the chart.
pub struct NormGrid {
    pub x_points: usize,
    pub xi_points: usize,
    pub xi_max: f64,
    pub quad_step: f64,
}

impl Default for NormGrid {
    fn default() -> Self {
        Self {
            x_points: 10,
            xi_points: 13,
            xi_max: 1.8,
            quad_step: 0.06,
        }
    }
}

pub fn anisotropic_norm(
    h: &Observable,
    aut: &Automorphism,
    n: i32,
    r: f64,
    grid: &NormGrid,
) -> Result<f64, SpectralError> {
    if n == 0 {
        return Err(SpectralError::Invalid("anisotropic norm needs N != 0"));
    }
    let nf = n.unsigned_abs() as f64;
    if grid.quad_step > 0.5 / nf.sqrt() {
        return Err(SpectralError::GridTooCoarse {
            grid: (1.0 / grid.quad_step) as usize,
            fmax: nf.sqrt(),
        });
    }
    let hn = h.mode_project(n);
    // windowed local representative sampled once on a global y-grid
    let half_width = (32.3 / (PI * nf)).sqrt(); // kernel below 1e-14
    let step = grid.quad_step;
    let y_lo = -half_width;
    let ny = (((1.0 + half_width) - y_lo) / step).ceil() as usize;
    let ys: Vec<f64> = (0..ny).map(|i| y_lo + (i as f64 + 0.5) * step).collect();
    let samples: Vec<C64> = {
        let one = |&y0: &f64| -> Vec<C64> {
            ys.iter()
                .map(|&y1| {
                    let w = chart_window(y0) * chart_window(y1);
                    if w == 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        w * hn.eval(crate::heis::HeisPoint::new(y0, y1, 0.0))
                    }
                })
                .collect()
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<C64>> = {
            use rayon::prelude::*;
            ys.par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<C64>> = ys.iter().map(one).collect();
        rows.into_iter().flatten().collect()
    };
    // 1D phase-space cells and conjugated 1D kernels on the y-grid
    let dx = 1.0 / grid.x_points as f64;
    let dxi = 2.0 * grid.xi_max / (grid.xi_points - 1) as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for i in 0..grid.x_points {
        for p in 0..grid.xi_points {
            cells.push((
                (i as f64 + 0.5) * dx,
                -grid.xi_max + p as f64 * dxi,
            ));
        }
    }
    let nc = cells.len();
    let mut k1 = vec![C64::new(0.0, 0.0); nc * ny];
    for (c, &(x, xi)) in cells.iter().enumerate() {
        for (iy, &y) in ys.iter().enumerate() {
            if (y - x).abs() <= half_width {
                k1[c * ny + iy] = bargmann_kernel_1d(nf, x, xi, y).conj();
            }
        }
    }
    // separable double sum: B[(c0,c1)] = sum_{y0} k1[c0,y0] sum_{y1} k1[c1,y1] f[y0,y1]
    let mut t1 = vec![C64::new(0.0, 0.0); ny * nc]; // [y0, c1]
    for iy0 in 0..ny {
        for c1 in 0..nc {
            let mut acc = C64::new(0.0, 0.0);
            for iy1 in 0..ny {
                acc += k1[c1 * ny + iy1] * samples[iy0 * ny + iy1];
            }
            t1[iy0 * nc + c1] = acc;
        }
    }
    let mut total = 0.0;
    for (c0, &(_, xi0)) in cells.iter().enumerate() {
        for (c1, &(_, xi1)) in cells.iter().enumerate() {
            let mut b = C64::new(0.0, 0.0);
            for iy0 in 0..ny {
                b += k1[c0 * ny + iy0] * t1[iy0 * nc + c1];
            }
            let (zp, zq) = zeta_coords(aut, [xi0, xi1]);
            let w = escape_weight(r, n, zp, zq);
            total += w * w * b.norm_sqr() * (step * step) * (step * step);
        }
    }
    Ok((nf * nf * total * dx * dx * dxi * dxi).sqrt())
}

/// |int_0^1 phi(s) f(x0 + s (alpha,beta))| / (||h|| * ||phi||_{C^2}) along a
/// unit stable segment; reported, not pass/fail.
pub fn dual_pairing_bound(
    h: &Observable,
    aut: &Automorphism,
    n: i32,
    r: f64,
    x0: [f64; 2],
    phi: &dyn Fn(f64) -> f64,
    grid: &NormGrid,
) -> Result<f64, SpectralError> {
    let hn = h.mode_project(n);
    let f = |s: f64| -> C64 {
        let y = [x0[0] + s * aut.alpha, x0[1] + s * aut.beta];
        phi(s) * hn.eval(crate::heis::HeisPoint::new(y[0], y[1], 0.0))
    };
    // trapezoid over the unit segment
    let steps = 4000;
    let ds = 1.0 / steps as f64;
    let mut pairing = C64::new(0.0, 0.0);
    for i in 0..=steps {
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        pairing += w * f(i as f64 * ds);
    }
    pairing *= ds;
    // C^2 norm of phi by central differences
    let mut c2: f64 = 0.0;
    let h1 = 1e-4;
    for i in 0..=200 {
        let s = i as f64 / 200.0;
        let p0 = phi(s).abs();
        let p1 = ((phi(s + h1) - phi(s - h1)) / (2.0 * h1)).abs();
        let p2 = ((phi(s + h1) - 2.0 * phi(s) + phi(s - h1)) / (h1 * h1)).abs();
        c2 = c2.max(p0).max(p1).max(p2);
    }
    let norm = anisotropic_norm(h, aut, n, r, grid)?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(pairing.norm() / (norm * c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::Quad;
    use crate::heis::{stable_generator, LatticeSpec};
    use crate::observable::GaussAtom;
    use crate::rng::CounterRng;

    fn aut() -> Automorphism {
        stable_generator(2, 1, 3, 2).unwrap()
    }

    #[test]
    fn propagator_unitary_and_parity() {
        let a = aut();
        for d in 1..=8 {
            let u = quantum_propagator(&a, d).unwrap();
            assert_eq!(u.nrows(), d);
            // eigenvalues on the unit circle
            let evd = u.eigen().unwrap();
            for i in 0..d {
                assert!((evd.S()[i].norm() - 1.0).abs() < 1e-10);
            }
        }
        assert!((quantum_propagator(&a, 1).unwrap()[(0, 0)].norm() - 1.0).abs() < 1e-12);
        // parity violation: [[1,1],[1,2]] has ab = 1 odd
        let bad = stable_generator(1, 1, 1, 2);
        if let Ok(bad) = bad {
            assert!(matches!(
                quantum_propagator(&bad, 2),
                Err(SpectralError::Parity)
            ));
        }
    }

    #[test]
    fn exact_resonance_structure() {
        let a = aut();
        let rs = resonances_exact(&a, 3, 2, 3).unwrap();
        let d = 6;
        for k in 0..=3 {
            let band = rs.band(k);
            assert_eq!(band.len(), d);
            let radius = a.lambda.powf(0.5 - k as f64);
            for r in &band {
                assert!((r.modulus - radius).abs() < 1e-12);
            }
        }
        // identical phase multisets across bands
        let mut p0: Vec<f64> = rs.band(0).iter().map(|r| r.phase).collect();
        let mut p2: Vec<f64> = rs.band(2).iter().map(|r| r.phase).collect();
        p0.sort_by(f64::total_cmp);
        p2.sort_by(f64::total_cmp);
        for (a, b) in p0.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
        // band-0 modulus
        assert!((rs.band(0)[0].modulus - 1.9318517).abs() < 1e-6);
        // sorted by descending modulus
        for w in rs.items.windows(2) {
            assert!(w[0].modulus >= w[1].modulus);
        }
    }

    #[test]
    fn basis_quasi_periodicity() {
        let mut rng = CounterRng::new(5);
        for (d, cutoff) in [(1usize, 8), (2, 8), (4, 16)] {
            let basis = TwistedBasis::with_shifts(d, cutoff, 2, 2);
            for _ in 0..100 {
                let x = rng.uniform(-1.0, 2.0);
                let y = rng.uniform(-1.0, 2.0);
                let idx = (rng.next_u64() % basis.size() as u64) as usize;
                let (j, m, s) = basis.label(idx);
                let b = basis.eval_b(j, m, s, x, y);
                let bx = basis.eval_b(j, m, s, x + 1.0, y);
                let by = basis.eval_b(j, m, s, x, y + 1.0);
                let df = d as f64;
                assert!(
                    (bx - C64::from_polar(1.0, -PI * df * y) * b).norm() < 1e-10 * (1.0 + b.norm())
                );
                assert!(
                    (by - C64::from_polar(1.0, PI * df * x) * b).norm() < 1e-10 * (1.0 + b.norm())
                );
            }
        }
    }

    #[test]
    fn escape_weight_asymptotics() {
        assert_eq!(escape_weight(8.0, 1, 0.0, 0.0), 1.0);
        let r = 8.0;
        let (mut lo_p, mut hi_p) = (f64::INFINITY, 0.0f64);
        let (mut lo_q, mut hi_q) = (f64::INFINITY, 0.0f64);
        for i in 0..=40 {
            let z = 10.0 * 100f64.powf(i as f64 / 40.0);
            let v = escape_weight(r, 1, z, 0.0) * z.powf(r);
            lo_p = lo_p.min(v);
            hi_p = hi_p.max(v);
            let w = escape_weight(r, 1, 0.0, z) / z.powf(r);
            lo_q = lo_q.min(w);
            hi_q = hi_q.max(w);
        }
        assert!(hi_p / lo_p < 1.2, "not ~ |zp|^-r: spread {}", hi_p / lo_p);
        assert!(hi_q / lo_q < 1.2, "not ~ |zq|^r: spread {}", hi_q / lo_q);
    }

    #[test]
    fn frequency_frame_orientation() {
        let a = aut();
        let (ep, eq) = frequency_frame(&a);
        // B = A^{-T} expands ep by lambda, contracts eq
        let b = [[a.d as f64, -(a.c as f64)], [-(a.b as f64), a.a as f64]];
        let apply = |v: [f64; 2]| [b[0][0] * v[0] + b[0][1] * v[1], b[1][0] * v[0] + b[1][1] * v[1]];
        let bp = apply(ep);
        let bq = apply(eq);
        assert!((bp[0] - a.lambda * ep[0]).abs() < 1e-10);
        assert!((bp[1] - a.lambda * ep[1]).abs() < 1e-10);
        assert!((bq[0] - ep[0] * 0.0 - eq[0] / a.lambda).abs() < 1e-10);
        assert!((bq[1] - eq[1] / a.lambda).abs() < 1e-10);
        // round trip through zeta coordinates
        let (zp, zq) = zeta_coords(&a, [0.3, -0.7]);
        let back = [
            zp * ep[0] + zq * eq[0],
            zp * ep[1] + zq * eq[1],
        ];
        assert!((back[0] - 0.3).abs() < 1e-12 && (back[1] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn probe_spectrum_tmp() {
        let a = aut();
        let basis = TwistedBasis::with_shifts(1, 3, 2, 2);
        let dim = basis.size();
        let fb = basis.max_frequency();
        let chirp = ((a.a * a.b).abs().max((a.c * a.d).abs()).max(2 * (a.b * a.c).abs())) as f64;
        let grid = (4.0 * (a.lambda * fb + fb + chirp)).ceil() as usize;
        let m = grid;
        let inv_m = 1.0 / m as f64;
        let (ia, ib, ic, id) = (a.d as f64, -(a.b as f64), -(a.c as f64), a.a as f64);
        let mut g = Mat::<C64>::zeros(dim, dim);
        let mut smat = Mat::<C64>::zeros(dim, dim);
        for iy in 0..m {
            let y = iy as f64 * inv_m;
            let mut bv = Mat::<C64>::zeros(dim, m);
            let mut fv = Mat::<C64>::zeros(dim, m);
            for ix in 0..m {
                let x = ix as f64 * inv_m;
                let (xp, yp) = (ia * x + ib * y, ic * x + id * y);
                for idx in 0..dim {
                    let (j, mm, s) = basis.label(idx);
                    bv[(idx, ix)] = basis.eval_b(j, mm, s, x, y);
                    fv[(idx, ix)] = a.lambda * basis.eval_b(j, mm, s, xp, yp);
                }
            }
            g += &bv * bv.adjoint();
            smat += &bv * fv.adjoint();
        }
        let sc = C64::new(inv_m * inv_m, 0.0);
        let g = Mat::from_fn(dim, dim, |i, j| g[(i, j)] * sc);
        let smat = Mat::from_fn(dim, dim, |i, j| smat[(i, j)] * sc);
        // closed-form Gram
        let dd = basis.d as f64;
        let gan = Mat::from_fn(dim, dim, |i, jx| {
            let (j1, m1, s1) = basis.label(i);
            let (j2, m2, s2) = basis.label(jx);
            if j1 != j2 {
                return C64::new(0.0, 0.0);
            }
            let dm = (m1 - m2) as f64;
            let mu = 0.5 * (s1 + s2);
            let amp = (-PI * dd * (s1 - s2) * (s1 - s2) / 2.0 - PI * dm * dm / (2.0 * dd)).exp()
                / (2.0 * dd).sqrt();
            C64::from_polar(amp, 2.0 * PI * (-(m1 as f64 * s1 - m2 as f64 * s2) + dm * mu))
        });
        let mut gerr = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                gerr = gerr.max((g[(i, j)] - gan[(i, j)]).norm());
            }
        }
        eprintln!("dim {dim} grid {grid}: max |G_quad - G_analytic| = {gerr:.3e}");
        // orthonormalization sanity + compression norm
        let evd = g.self_adjoint_eigen(faer::Side::Lower).unwrap();
        let gs = evd.S();
        let gu = evd.U();
        let top = (0..dim).map(|i| gs[i].re).fold(0.0f64, f64::max);
        let bot = (0..dim).map(|i| gs[i].re).fold(f64::INFINITY, f64::min);
        eprintln!("gram eigs: top {top:.3e} bottom {bot:.3e}");
        for cut in [1e-10, 1e-8, 1e-6, 1e-4] {
            let keep: Vec<usize> = (0..dim).filter(|&i| gs[i].re > cut * top).collect();
            let rank = keep.len();
            let vs =
                Mat::from_fn(dim, rank, |i, a| gu[(i, keep[a])] * gs[keep[a]].re.powf(-0.5));
            let on = vs.adjoint() * &g * &vs;
            let mut onerr = 0.0f64;
            for i in 0..rank {
                for j in 0..rank {
                    let t = if i == j { 1.0 } else { 0.0 };
                    onerr = onerr.max((on[(i, j)] - C64::new(t, 0.0)).norm());
                }
            }
            let mm = vs.adjoint() * &smat * &vs;
            let eigs = mm.eigen().unwrap();
            let mut mods: Vec<(f64, f64)> =
                (0..rank).map(|i| (eigs.S()[i].norm(), eigs.S()[i].arg())).collect();
            mods.sort_by(|x, y| y.0.total_cmp(&x.0));
            let top8: Vec<String> =
                mods.iter().take(6).map(|(mo, ph)| format!("{mo:.4}@{ph:.3}")).collect();
            eprintln!("cut {cut:.0e} rank {rank} on-err {onerr:.3e} unweighted eigs {top8:?}");
        }
        // escape ratio along the frequency dynamics, column scaling only
        let bmat = [[a.d as f64, -(a.c as f64)], [-(a.b as f64), a.a as f64]];
        for r in [2.0f64, 4.0, 8.0] {
            let rho: Vec<f64> = (0..dim)
                .map(|idx| {
                    let nu = basis.rep_frequency(idx);
                    let bn = [
                        bmat[0][0] * nu[0] + bmat[0][1] * nu[1],
                        bmat[1][0] * nu[0] + bmat[1][1] * nu[1],
                    ];
                    let (zp, zq) = zeta_coords(&a, nu);
                    let (bzp, bzq) = zeta_coords(&a, bn);
                    escape_weight(r, 1, bzp, bzq) / escape_weight(r, 1, zp, zq)
                })
                .collect();
            let swc = Mat::from_fn(dim, dim, |i, j| smat[(i, j)] * rho[j]);
            let keep: Vec<usize> = (0..dim).filter(|&i| gs[i].re > 1e-8 * top).collect();
            let rank = keep.len();
            let vs =
                Mat::from_fn(dim, rank, |i, a| gu[(i, keep[a])] * gs[keep[a]].re.powf(-0.5));
            let mm = vs.adjoint() * &swc * &vs;
            let eigs = mm.eigen().unwrap();
            let mut mods: Vec<(f64, f64)> =
                (0..rank).map(|i| (eigs.S()[i].norm(), eigs.S()[i].arg())).collect();
            mods.sort_by(|x, y| y.0.total_cmp(&x.0));
            let top8: Vec<String> =
                mods.iter().take(8).map(|(mo, ph)| format!("{mo:.4}@{ph:.3}")).collect();
            eprintln!("r {r} rank {rank} column-ratio eigs {top8:?}");
        }
    }

    #[test]
    fn numeric_spectrum_band0_matches_oracle() {
        let a = aut();
        let basis = TwistedBasis::new(1, 12);
        let tm = transfer_matrix(&a, 1, 1, basis, 8.0).unwrap();
        assert_eq!(tm.entries.nrows(), basis.size());
        let rs = resonances_numeric(&tm, 0.15).unwrap();
        let band0 = rs.band(0);
        assert_eq!(band0.len(), 1, "{:?}", rs.items.iter().take(4).collect::<Vec<_>>());
        let exact = resonances_exact(&a, 1, 1, 0).unwrap();
        let ex = exact.band(0)[0];
        let nu = band0[0];
        assert!(
            (nu.modulus / ex.modulus - 1.0).abs() < 0.05,
            "modulus {} vs {}",
            nu.modulus,
            ex.modulus
        );
        let mut dphi = (nu.phase - ex.phase).rem_euclid(2.0 * PI);
        if dphi > PI {
            dphi -= 2.0 * PI;
        }
        assert!(dphi.abs() < 0.05, "phase {} vs {}", nu.phase, ex.phase);
        // spectral radius bound
        assert!(rs.items[0].modulus <= a.lambda * 1.15);
    }

    #[test]
    fn constants_eigenvalue() {
        assert!((transfer_constant(&aut()) - 3.7320508).abs() < 1e-7);
    }

    #[test]
    fn decomposition_identities() {
        let a = aut();
        let basis = TwistedBasis::new(1, 8);
        let tm = transfer_matrix(&a, 1, 1, basis, 8.0).unwrap();
        let eta = 0.3;
        let dec = spectral_decomposition(&tm.entries, eta).unwrap();
        let dim = tm.entries.nrows();
        // projector orthogonality and resolution of identity
        let mut sum = dec.remainder.clone();
        for p in &dec.projectors {
            sum += p;
        }
        assert!(mat_norm(&(sum - Mat::<C64>::identity(dim, dim))) < 1e-8);
        for (i, p) in dec.projectors.iter().enumerate() {
            for (j, q) in dec.projectors.iter().enumerate() {
                let prod = p * q;
                let target = if i == j { p.clone() } else { Mat::zeros(dim, dim) };
                assert!(mat_norm(&(prod - target)) < 1e-8, "P{i} P{j}");
            }
        }
        // remainder decays like eta^n
        let mut pw = dec.remainder.clone();
        let base = mat_norm(&pw);
        for n in 1..=10 {
            pw = &tm.entries * pw;
            let c = mat_norm(&pw) / eta.powi(n);
            assert!(c < 1e4 * base.max(1.0), "n={n}: C={c}");
        }
        // generic matrix: no nilpotents
        for q in &dec.nilpotents {
            assert!(mat_norm(q) < 1e-8);
        }
    }

    #[test]
    fn bargmann_reconstruction() {
        // B*B = id with N^2 dx dxi on a Gaussian test at N = 4
        let n = 4.0;
        let f = |y: [f64; 2]| -> C64 {
            C64::new((-PI * (y[0] * y[0] + y[1] * y[1])).exp(), 0.0)
        };
        // product structure: do each dimension in 1D
        let f1 = |y: f64| (-PI * y * y).exp();
        let (xr, xir, step) = (2.4f64, 2.4f64, 0.08f64);
        let nx = (2.0 * xr / step).round() as usize;
        let mut b1 = vec![C64::new(0.0, 0.0); nx * nx];
        for i in 0..nx {
            let x = -xr + (i as f64 + 0.5) * step;
            for j in 0..nx {
                let xi = -xir + (j as f64 + 0.5) * step;
                let mut acc = C64::new(0.0, 0.0);
                let (qh, qs) = (2.0, 0.02);
                let kq = (qh / qs) as i64;
                for q in -kq..=kq {
                    let y = x + q as f64 * qs;
                    acc += bargmann_kernel_1d(n, x, xi, y).conj() * f1(y);
                }
                b1[i * nx + j] = acc * qs;
            }
        }
        // reconstruct f1 at a few points: f1(y) = N sum phi(y) B1 dx dxi
        for &y0 in &[0.0, 0.3, -0.7] {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..nx {
                let x = -xr + (i as f64 + 0.5) * step;
                for j in 0..nx {
                    let xi = -xir + (j as f64 + 0.5) * step;
                    acc += bargmann_kernel_1d(n, x, xi, y0) * b1[i * nx + j];
                }
            }
            acc *= n * step * step;
            assert!(
                (acc - f1(y0)).norm() < 1e-6,
                "y0={y0}: {acc:?} vs {}",
                f1(y0)
            );
        }
        // 2D transform of the zero function and Gaussian decay in x
        let zero = |_: [f64; 2]| C64::new(0.0, 0.0);
        let b0 = bargmann_point(&zero, n, [0.2, 0.1], [0.3, 0.0], 1.5, 0.05);
        assert_eq!(b0.norm(), 0.0);
        let near = bargmann_point(&f, n, [0.0, 0.0], [0.0, 0.0], 2.0, 0.02).norm();
        let far = bargmann_point(&f, n, [2.0, 0.0], [0.0, 0.0], 2.0, 0.02).norm();
        assert!(far < 1e-3 * near, "far {far} near {near}");
    }

    #[test]
    fn norm_family_finite() {
        let a = aut();
        let e1 = LatticeSpec::new(1).unwrap();
        let grid = NormGrid::default();
        let mut prev = f64::INFINITY;
        for n in 1..=3 {
            // fiber modes of one fixed smooth bump in the z-direction:
            // coefficients decay like a Gaussian in N
            let coeff = C64::new((-0.35 * (n * n) as f64).exp(), 0.0);
            let h = Observable::atom(
                e1,
                n,
                GaussAtom::plain(coeff, [0.5, 0.5], Quad { a: 2.0, b: 0.0, c: 2.0 }),
            );
            let v = anisotropic_norm(&h, &a, n, 8.0, &grid).unwrap();
            assert!(v.is_finite() && v > 0.0);
            assert!(v < prev, "N={n}: {v} !< {prev}");
            prev = v;
        }
        let zero = Observable::zero(e1);
        assert_eq!(anisotropic_norm(&zero, &a, 1, 8.0, &grid).unwrap(), 0.0);
    }
}
