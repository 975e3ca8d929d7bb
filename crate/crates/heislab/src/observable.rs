//! Observables on the quotient Γ_E\N.
//!
//! A nonzero central frequency n is represented by sums of Gaussian theta
//! atoms: for f(x,y,z) = coeff * P(u - v0) exp(2 pi i D z) exp(-pi (u-v0)^T Q (u-v0))
//! with u = (x,y), D = E n and P a polynomial of degree <= 1, the observable
//! is the lattice average h(g) = sum_{p,q} f(gamma_{p,q}^{-1} g). The central
//! part of Γ_E acts trivially on f because exp(2 pi i D r / E) = 1, so h is
//! well defined on the quotient. The frequency-zero part is an ordinary
//! Fourier polynomial on the base torus.
//!
//! The family is closed under the renormalization transfer operator and
//! under differentiation along the flow (for constant P), with all
//! transformations exact on the atom data.

use crate::enumerate::{points_near, FQuad, Quad};
use crate::heis::{apply_aut_pow, reduce, Automorphism, HeisPoint, LatticeSpec};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Gaussian significance cutoff: translates with exp(-pi q(w)) below this
/// are dropped. The enumeration radius is sqrt(ln(1/eps)/pi).
pub const ATOM_EPS: f64 = 1e-18;

pub fn atom_radius() -> f64 {
    ((1.0 / ATOM_EPS).ln() / PI).sqrt()
}

/// One Gaussian theta atom: coeff * P(w) exp(-pi w^T Q w) with w = u - center
/// and the linear part of P given in frame coordinates of the factored
/// quadratic form: P(w) = poly[0] + poly[1] (Mw)_1 + poly[2] (Mw)_2. Frame
/// coordinates stay O(1) on the significant set of a squeezed atom and are
/// invariant under the transfer operator, so the polynomial never suffers
/// the lambda^k growth the plain w-coordinates would.
///
/// The full center is `center + center_int`. The integer part is kept
/// separate because repeated transfers move centers by lambda^k-sized
/// amounts: folding that into a single f64 would lose lambda^k ulps, which
/// the (equally large) frame of the squeezed quadratic form then amplifies
/// to lambda^{2k} ulps. With the split, displacements from the fractional
/// center stay exact and the model error grows only like lambda^k ulps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussAtom {
    pub coeff: C64,
    pub center: [f64; 2],
    #[serde(default)]
    pub center_int: [i64; 2],
    pub quad: FQuad,
    pub poly: [C64; 3],
}

impl GaussAtom {
    pub fn plain(coeff: C64, center: [f64; 2], quad: Quad) -> Self {
        Self {
            coeff,
            center,
            center_int: [0, 0],
            quad: FQuad::plain(quad),
            poly: [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        }
    }
}

/// All atoms sharing one nonzero central frequency n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralMode {
    pub n: i32,
    pub atoms: Vec<GaussAtom>,
}

/// Frequency-zero part: finitely many Fourier modes of the base torus.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TorusMode {
    pub coeffs: Vec<((i64, i64), C64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observable {
    pub lattice: LatticeSpec,
    pub torus: TorusMode,
    pub central: Vec<CentralMode>,
}

impl Observable {
    pub fn zero(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            torus: TorusMode::default(),
            central: Vec::new(),
        }
    }

    pub fn constant(lattice: LatticeSpec, c: C64) -> Self {
        let mut o = Self::zero(lattice);
        o.torus.coeffs.push(((0, 0), c));
        o
    }

    /// Single-atom observable at central frequency n.
    pub fn atom(lattice: LatticeSpec, n: i32, atom: GaussAtom) -> Self {
        assert!(n != 0, "central frequency must be nonzero; use torus modes");
        let mut o = Self::zero(lattice);
        o.central.push(CentralMode {
            n,
            atoms: vec![atom],
        });
        o
    }

    /// Space average over the nilmanifold: the nonzero central frequencies
    /// and nonzero torus modes integrate to zero.
    pub fn mean(&self) -> C64 {
        self.torus
            .coeffs
            .iter()
            .filter(|(m, _)| *m == (0, 0))
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn eval(&self, g: HeisPoint) -> C64 {
        let g = reduce(g, self.lattice).rep;
        let mut acc = C64::new(0.0, 0.0);
        for ((m1, m2), c) in &self.torus.coeffs {
            let ph = 2.0 * PI * (*m1 as f64 * g.x + *m2 as f64 * g.y);
            acc += c * C64::new(0.0, ph).exp();
        }
        let mut pts = Vec::new();
        for mode in &self.central {
            let d = self.lattice.e as i64 * mode.n as i64;
            for atom in &mode.atoms {
                points_near(
                    atom.quad,
                    (g.x - atom.center[0], g.y - atom.center[1]),
                    atom_radius(),
                    &mut pts,
                );
                for &(p, q) in &pts {
                    acc += atom_term(atom, d, g, p, q);
                }
            }
        }
        acc
    }

    /// The transfer operator of the renormalization, iterated k >= 0 times:
    /// (F_hat^k h)(g) = lambda^k h(F^{-k} g). Exact on the atom data.
    pub fn transfer(&self, aut: &Automorphism, k: i32) -> Observable {
        assert!(k >= 0);
        let minv = aut.power(-k); // A^{-k}
        let scale = aut.lambda.powi(k);
        let mut out = Observable::zero(self.lattice);
        for ((m1, m2), c) in &self.torus.coeffs {
            // exp(2 pi i m . A^{-k} u) = exp(2 pi i (A^{-k T} m) . u)
            let nm = (
                minv[0][0] * m1 + minv[1][0] * m2,
                minv[0][1] * m1 + minv[1][1] * m2,
            );
            out.torus.coeffs.push((nm, scale * c));
        }
        let amat = aut.power(1);
        for mode in &self.central {
            let atoms = mode
                .atoms
                .iter()
                .map(|a| {
                    // Walk the center through A one step at a time, keeping
                    // the fractional part small and the integer part exact.
                    // The walk runs in 2^-100 fixed point: A is expanding, so
                    // a per-step f64 rounding in the fractional part would
                    // grow to lambda^k ulps, which the frame amplifies to
                    // lambda^{2k}. In fixed point every step is exact.
                    const CBITS: i32 = 100;
                    let cs = 2f64.powi(CBITS);
                    let half: i128 = 1 << (CBITS - 1);
                    let mut cf = [(a.center[0] * cs) as i128, (a.center[1] * cs) as i128];
                    let mut ci = a.center_int;
                    for _ in 0..k {
                        let f = [
                            amat[0][0] as i128 * cf[0] + amat[0][1] as i128 * cf[1],
                            amat[1][0] as i128 * cf[0] + amat[1][1] as i128 * cf[1],
                        ];
                        let r = [
                            (f[0] + half).div_euclid(2 * half),
                            (f[1] + half).div_euclid(2 * half),
                        ];
                        ci = [
                            amat[0][0] * ci[0] + amat[0][1] * ci[1] + r[0] as i64,
                            amat[1][0] * ci[0] + amat[1][1] * ci[1] + r[1] as i64,
                        ];
                        cf = [f[0] - r[0] * 2 * half, f[1] - r[1] * 2 * half];
                    }
                    GaussAtom {
                        coeff: scale * a.coeff,
                        center: [cf[0] as f64 / cs, cf[1] as f64 / cs],
                        center_int: ci,
                        quad: a.quad.compose(minv),
                        // frame-coordinate coefficients are transfer-invariant
                        poly: a.poly,
                    }
                })
                .collect();
            out.central.push(CentralMode {
                n: mode.n,
                atoms,
            });
        }
        out
    }

    /// Exact derivative along the flow, W h = d/dt h(g exp(tW))|_{t=0}.
    /// Supported for atoms with constant polynomial part (the result then
    /// carries a degree-1 polynomial, which every other operation accepts).
    pub fn w_derivative(&self, aut: &Automorphism) -> Observable {
        let (al, be) = (aut.alpha, aut.beta);
        let mut out = Observable::zero(self.lattice);
        for ((m1, m2), c) in &self.torus.coeffs {
            let rate = 2.0 * PI * (*m1 as f64 * al + *m2 as f64 * be);
            out.torus
                .coeffs
                .push(((*m1, *m2), c * C64::new(0.0, rate)));
        }
        for mode in &self.central {
            let d = self.lattice.e as f64 * mode.n as f64;
            let atoms = mode
                .atoms
                .iter()
                .map(|a| {
                    assert!(
                        a.poly[1].norm() == 0.0 && a.poly[2].norm() == 0.0,
                        "w_derivative needs constant polynomial part"
                    );
                    // d/dt of the lattice term at t = 0, per translate:
                    //   phase rate  2 pi i D z'(t)' = pi i D (beta (w1+v1) - alpha (w2+v2))
                    //   gaussian    -2 pi w^T Q e
                    // both linear in w, independent of the translate.
                    let i2pid = C64::new(0.0, PI * d);
                    let cx = a.center[0] + a.center_int[0] as f64;
                    let cy = a.center[1] + a.center_int[1] as f64;
                    let c0 = a.poly[0] * (i2pid * (be * cx - al * cy));
                    let qe = a.quad.apply((al, be));
                    let w1 = a.poly[0] * (i2pid * be - 2.0 * PI * qe.0);
                    let w2 = a.poly[0] * (-i2pid * al - 2.0 * PI * qe.1);
                    // w-coordinate coefficients to frame coordinates: M^{-T}
                    let m = a.quad.frame;
                    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) as f64;
                    let c1 = (m[1][1] as f64 * w1 - m[1][0] as f64 * w2) / det;
                    let c2 = (m[0][0] as f64 * w2 - m[0][1] as f64 * w1) / det;
                    GaussAtom {
                        coeff: a.coeff,
                        center: a.center,
                        center_int: a.center_int,
                        quad: a.quad,
                        poly: [c0, c1, c2],
                    }
                })
                .collect();
            out.central.push(CentralMode {
                n: mode.n,
                atoms,
            });
        }
        out
    }

    /// Derivative along the flow by order-6 central differences (numeric
    /// cross-check of `w_derivative`).
    pub fn wgrad(&self, g: HeisPoint, aut: &Automorphism, step: f64) -> C64 {
        const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
        let mut acc = C64::new(0.0, 0.0);
        for (i, c) in C.iter().enumerate() {
            let t = (i + 1) as f64 * step;
            acc += c
                * (self.eval(crate::heis::flow(g, t, aut))
                    - self.eval(crate::heis::flow(g, -t, aut)));
        }
        acc / step
    }

    /// Restriction to a single central frequency (n = 0 gives the torus part).
    pub fn mode_project(&self, n: i32) -> Observable {
        let mut out = Observable::zero(self.lattice);
        if n == 0 {
            out.torus = self.torus.clone();
        } else {
            for mode in &self.central {
                if mode.n == n {
                    out.central.push(mode.clone());
                }
            }
        }
        out
    }

    /// Pointwise sum; lattices must agree.
    pub fn add(&self, other: &Observable) -> Observable {
        assert_eq!(self.lattice, other.lattice);
        let mut out = self.clone();
        out.torus.coeffs.extend(other.torus.coeffs.iter().cloned());
        for m in &other.central {
            if let Some(dst) = out.central.iter_mut().find(|d| d.n == m.n) {
                dst.atoms.extend(m.atoms.iter().cloned());
            } else {
                out.central.push(m.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Observable {
        let mut out = self.clone();
        for (_, v) in &mut out.torus.coeffs {
            *v *= c;
        }
        for m in &mut out.central {
            for a in &mut m.atoms {
                a.coeff *= c;
            }
        }
        out
    }

    /// Crude upper estimate of sup |h| from a deterministic sample sweep,
    /// inflated by a safety factor. Used for boundary bounds in integral
    /// decompositions, where only the order of magnitude matters.
    pub fn sup_estimate(&self) -> f64 {
        let mut best: f64 = 0.0;
        let n = 17;
        for i in 0..n {
            for j in 0..n {
                for l in 0..4 {
                    let g = HeisPoint::from_polar(
                        i as f64 / n as f64,
                        j as f64 / n as f64,
                        l as f64 / (4 * self.lattice.e) as f64,
                    );
                    best = best.max(self.eval(g).norm());
                }
            }
        }
        1.25 * best
    }
}

/// Value of one lattice translate of one atom at the (reduced) point g.
/// `p`, `q` index the translate relative to the fractional center, i.e. the
/// true lattice translate is (p, q) - center_int.
pub fn atom_term(atom: &GaussAtom, d: i64, g: HeisPoint, p: i64, q: i64) -> C64 {
    let u = (g.x - atom.center[0], g.y - atom.center[1]);
    let mw = atom.quad.frame_coords_split(u, (p, q));
    let quad = atom.quad.base.eval(mw);
    if quad > atom_radius() * atom_radius() + 1.0 {
        return C64::new(0.0, 0.0);
    }
    let v1 = p - atom.center_int[0];
    let v2 = q - atom.center_int[1];
    // z'(v,g) = z + v1 v2/2 + (v2 x - v1 y)/2; the half-integer part
    // contributes an exact sign (-1)^{D v1 v2}.
    let odd = (d as i128) * (v1 as i128) * (v2 as i128);
    let sign = if odd & 1 == 1 { -1.0 } else { 1.0 };
    let phase = 2.0 * PI * d as f64 * (g.z + 0.5 * (v2 as f64 * g.x - v1 as f64 * g.y));
    let poly = atom.poly[0] + atom.poly[1] * mw.0 + atom.poly[2] * mw.1;
    atom.coeff * sign * poly * C64::new(-PI * quad, phase).exp()
}

/// Number of degrees of freedom (torus modes + atoms); handy for reports.
pub fn term_count(h: &Observable) -> usize {
    h.torus.coeffs.len() + h.central.iter().map(|m| m.atoms.len()).sum::<usize>()
}
