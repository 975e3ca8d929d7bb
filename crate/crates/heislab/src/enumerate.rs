//! Enumeration of lattice points of Z^2 near a segment, measured in a
//! (possibly strongly squeezed) positive quadratic form.
//!
//! Transferred Gaussians carry forms M^T Q M with an integer matrix M whose
//! entries grow like lambda^k. Forming such a form in floating point loses
//! the determinant to cancellation, so the factorization is kept explicit:
//! `FQuad` stores the integer frame M and the well-conditioned base form Q,
//! and the Lagrange reduction below multiplies frames exactly in integers
//! before touching floating point. Z^2 always contains vectors of O(1)
//! norm in these forms (M is a power of a unimodular matrix), so after
//! reduction the Gram matrix is well conditioned and a band walk along the
//! segment touches only O(#hits) candidates.

use serde::{Deserialize, Serialize};

/// Symmetric positive definite 2x2 form with f64 entries.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Quad {
    pub a: f64, // (1,1)
    pub b: f64, // (1,2) = (2,1)
    pub c: f64, // (2,2)
}

impl Quad {
    pub fn eval(&self, v: (f64, f64)) -> f64 {
        self.a * v.0 * v.0 + 2.0 * self.b * v.0 * v.1 + self.c * v.1 * v.1
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_positive(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    /// Q v.
    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (self.a * v.0 + self.b * v.1, self.b * v.0 + self.c * v.1)
    }

    /// Congruence transform U^T Q U for an integer matrix U.
    pub fn congruence(&self, u: [[i64; 2]; 2]) -> Quad {
        let b1 = (u[0][0] as f64, u[1][0] as f64);
        let b2 = (u[0][1] as f64, u[1][1] as f64);
        let q = |x: (f64, f64), y: (f64, f64)| {
            self.a * x.0 * y.0 + self.b * (x.0 * y.1 + x.1 * y.0) + self.c * x.1 * y.1
        };
        Quad {
            a: q(b1, b1),
            b: q(b1, b2),
            c: q(b2, b2),
        }
    }
}

pub const IDENTITY_FRAME: [[i64; 2]; 2] = [[1, 0], [0, 1]];

/// Factored form M^T Q M (see module docs).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FQuad {
    pub frame: [[i64; 2]; 2],
    pub base: Quad,
}

fn imat_mul(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

impl FQuad {
    pub fn plain(base: Quad) -> Self {
        assert!(base.is_positive());
        Self {
            frame: IDENTITY_FRAME,
            base,
        }
    }

    /// The effective form applied to a real vector: Q(M v).
    pub fn eval(&self, v: (f64, f64)) -> f64 {
        let m = self.frame;
        let w = (
            m[0][0] as f64 * v.0 + m[0][1] as f64 * v.1,
            m[1][0] as f64 * v.0 + m[1][1] as f64 * v.1,
        );
        self.base.eval(w)
    }

    /// (M^T Q M) v.
    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        let m = self.frame;
        let w = (
            m[0][0] as f64 * v.0 + m[0][1] as f64 * v.1,
            m[1][0] as f64 * v.0 + m[1][1] as f64 * v.1,
        );
        let qw = self.base.apply(w);
        (
            m[0][0] as f64 * qw.0 + m[1][0] as f64 * qw.1,
            m[0][1] as f64 * qw.0 + m[1][1] as f64 * qw.1,
        )
    }

    pub fn det(&self) -> f64 {
        let d = (self.frame[0][0] * self.frame[1][1] - self.frame[0][1] * self.frame[1][0]) as f64;
        d * d * self.base.det()
    }

    /// The form of the composition v -> M' v first, i.e. (M M')^T Q (M M').
    pub fn compose(&self, mprime: [[i64; 2]; 2]) -> FQuad {
        FQuad {
            frame: imat_mul(self.frame, mprime),
            base: self.base,
        }
    }

    /// Frame coordinates M (u - n) with the integer part exact. For a
    /// squeezed frame (entries ~lambda^k) and a lattice-sized n, forming
    /// u - n in f64 first would lose |n| ulps which M amplifies to
    /// lambda^{2k} ulps; multiplying n by M in integers keeps the error at
    /// lambda^k ulps however far the translate sits.
    pub fn frame_coords_split(&self, u: (f64, f64), n: (i64, i64)) -> (f64, f64) {
        let m = self.frame;
        let ni = (
            m[0][0] as i128 * n.0 as i128 + m[0][1] as i128 * n.1 as i128,
            m[1][0] as i128 * n.0 as i128 + m[1][1] as i128 * n.1 as i128,
        );
        (
            m[0][0] as f64 * u.0 + m[0][1] as f64 * u.1 - ni.0 as f64,
            m[1][0] as f64 * u.0 + m[1][1] as f64 * u.1 - ni.1 as f64,
        )
    }
}

/// Lagrange (Gauss) reduction of a factored form: returns a unimodular U
/// with columns forming a reduced basis of Z^2 under the effective form,
/// plus the reduced Gram matrix G = (MU)^T Q (MU) with |G12| <= G11/2 and
/// G11 <= G22. Frame products are exact in i128; the Gram is formed from
/// the (small, fully cancelled) integer columns of MU, so no precision is
/// lost however squeezed the input frame is.
pub fn lagrange_reduce(fq: FQuad) -> ([[i64; 2]; 2], Quad) {
    assert!(fq.base.is_positive(), "form must be positive definite");
    let m = [
        [fq.frame[0][0] as i128, fq.frame[0][1] as i128],
        [fq.frame[1][0] as i128, fq.frame[1][1] as i128],
    ];
    let mut u = [[1i128, 0], [0, 1]];
    let gram = |u: &[[i128; 2]; 2]| -> Quad {
        // columns of MU, exact
        let w1 = (
            (m[0][0] * u[0][0] + m[0][1] * u[1][0]) as f64,
            (m[1][0] * u[0][0] + m[1][1] * u[1][0]) as f64,
        );
        let w2 = (
            (m[0][0] * u[0][1] + m[0][1] * u[1][1]) as f64,
            (m[1][0] * u[0][1] + m[1][1] * u[1][1]) as f64,
        );
        let q = &fq.base;
        let dot = |x: (f64, f64), y: (f64, f64)| {
            q.a * x.0 * y.0 + q.b * (x.0 * y.1 + x.1 * y.0) + q.c * x.1 * y.1
        };
        Quad {
            a: dot(w1, w1),
            b: dot(w1, w2),
            c: dot(w2, w2),
        }
    };
    let mut g = gram(&u);
    for _ in 0..128 {
        if g.a > g.c {
            u = [[u[0][1], -u[0][0]], [u[1][1], -u[1][0]]];
            g = Quad {
                a: g.c,
                b: -g.b,
                c: g.a,
            };
        }
        let r = (g.b / g.a).round();
        if r == 0.0 {
            break;
        }
        let ri = r as i128;
        u = [
            [u[0][0], u[0][1] - ri * u[0][0]],
            [u[1][0], u[1][1] - ri * u[1][0]],
        ];
        g = gram(&u);
    }
    debug_assert!(g.b.abs() <= 0.5 * g.a * (1.0 + 1e-9) && g.a <= g.c * (1.0 + 1e-9));
    (
        [
            [u[0][0] as i64, u[0][1] as i64],
            [u[1][0] as i64, u[1][1] as i64],
        ],
        g,
    )
}

/// All integer points u in Z^2 whose distance (in the effective form of
/// `fq`) to the segment p1 + s (p2 - p1), s in [0,1], is at most rho.
/// Matches are pushed to `out` (cleared first).
pub fn points_near_segment(
    fq: FQuad,
    p1: (f64, f64),
    p2: (f64, f64),
    rho: f64,
    out: &mut Vec<(i64, i64)>,
) {
    out.clear();
    let (u, g) = lagrange_reduce(fq);
    // inverse of U (det = +1)
    let ui = [[u[1][1], -u[0][1]], [-u[1][0], u[0][0]]];
    let to_v = |p: (f64, f64)| {
        (
            ui[0][0] as f64 * p.0 + ui[0][1] as f64 * p.1,
            ui[1][0] as f64 * p.0 + ui[1][1] as f64 * p.1,
        )
    };
    let c1 = to_v(p1);
    let c2 = to_v(p2);
    // extents of the g-ball of radius rho along the coordinate axes:
    // max v_i over g(v) <= rho^2 is rho * sqrt((g^{-1})_{ii}).
    let det = g.det();
    let margin1 = rho * (g.c / det).sqrt() + 1e-12;
    let margin2 = rho * (g.a / det).sqrt() + 1e-12;
    let d = (c2.0 - c1.0, c2.1 - c1.1);
    let rho2 = rho * rho;
    let dist2 = |v: (f64, f64)| -> f64 {
        // min over s in [0,1] of g(v - c1 - s d)
        let w = (v.0 - c1.0, v.1 - c1.1);
        let dd = g.eval(d);
        let s = if dd > 0.0 {
            ((g.a * d.0 * w.0 + g.b * (d.0 * w.1 + d.1 * w.0) + g.c * d.1 * w.1) / dd)
                .clamp(0.0, 1.0)
        } else {
            0.0
        };
        g.eval((w.0 - s * d.0, w.1 - s * d.1))
    };
    let mut push_range = |i: i64, lo: f64, hi: f64| {
        let jlo = (lo - margin2).floor() as i64;
        let jhi = (hi + margin2).ceil() as i64;
        for j in jlo..=jhi {
            if dist2((i as f64, j as f64)) <= rho2 {
                // back to the original basis: point = U v
                out.push((u[0][0] * i + u[0][1] * j, u[1][0] * i + u[1][1] * j));
            }
        }
    };
    // Walk the reduced coordinate along which the segment moves fastest;
    // within one unit strip of that coordinate the other coordinate of the
    // segment moves by at most the slope, which is <= 1 in the chosen
    // orientation. Candidates at v1 = i may be closest to segment points
    // with v1 anywhere in [i - margin1, i + margin1], so the transverse
    // window is taken over that whole strip.
    let seg_v2_window = |i: f64, c1: (f64, f64), d: (f64, f64), m: f64| -> (f64, f64) {
        let t_of = |x: f64| {
            if d.0 != 0.0 {
                ((x - c1.0) / d.0).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let a = c1.1 + t_of(i - m) * d.1;
        let b = c1.1 + t_of(i + m) * d.1;
        (a.min(b), a.max(b))
    };
    if d.0.abs() >= d.1.abs() {
        let ilo = (c1.0.min(c2.0) - margin1).floor() as i64;
        let ihi = (c1.0.max(c2.0) + margin1).ceil() as i64;
        for i in ilo..=ihi {
            let (lo, hi) = seg_v2_window(i as f64, c1, d, margin1);
            push_range(i, lo, hi);
        }
    } else {
        // same walk with the two reduced coordinates exchanged
        let c1s = (c1.1, c1.0);
        let ds = (d.1, d.0);
        let jlo = (c1.1.min(c2.1) - margin2).floor() as i64;
        let jhi = (c1.1.max(c2.1) + margin2).ceil() as i64;
        for j in jlo..=jhi {
            let (lo, hi) = seg_v2_window(j as f64, c1s, ds, margin2);
            let ilo = (lo - margin1).floor() as i64;
            let ihi = (hi + margin1).ceil() as i64;
            for i in ilo..=ihi {
                if dist2((i as f64, j as f64)) <= rho2 {
                    out.push((u[0][0] * i + u[0][1] * j, u[1][0] * i + u[1][1] * j));
                }
            }
        }
    }
}

/// Points within distance rho of a single point.
pub fn points_near(fq: FQuad, p: (f64, f64), rho: f64, out: &mut Vec<(i64, i64)>) {
    points_near_segment(fq, p, p, rho, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn brute(fq: FQuad, p1: (f64, f64), p2: (f64, f64), rho: f64, range: i64) -> Vec<(i64, i64)> {
        let d = (p2.0 - p1.0, p2.1 - p1.1);
        let mut v = Vec::new();
        for i in -range..=range {
            for j in -range..=range {
                // min over a fine s grid plus endpoint refinement is
                // avoidable: projection in the effective metric
                let w = (i as f64 - p1.0, j as f64 - p1.1);
                let qd = fq.apply(d);
                let dd = d.0 * qd.0 + d.1 * qd.1;
                let s = if dd > 0.0 {
                    ((w.0 * qd.0 + w.1 * qd.1) / dd).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                if fq.eval((w.0 - s * d.0, w.1 - s * d.1)) <= rho * rho {
                    v.push((i, j));
                }
            }
        }
        v
    }

    #[test]
    fn reduction_is_unimodular_and_reduced() {
        let mut rng = CounterRng::new(2);
        for _ in 0..200 {
            let a = rng.uniform(0.1, 5.0);
            let b = rng.uniform(-2.0, 2.0);
            let c = (b * b) / a + rng.uniform(0.05, 5.0);
            let q = FQuad::plain(Quad { a, b, c });
            let (u, g) = lagrange_reduce(q);
            assert_eq!(u[0][0] * u[1][1] - u[0][1] * u[1][0], 1);
            assert!((g.det() - q.base.det()).abs() < 1e-9 * q.base.det());
            assert!(g.b.abs() <= 0.5 * g.a + 1e-9);
            assert!(g.a <= g.c + 1e-9);
            let gg = q.base.congruence(u);
            assert!((gg.a - g.a).abs() < 1e-9 * g.a.max(1.0));
        }
    }

    #[test]
    fn squeezed_form_stays_short_and_exact() {
        // A^k-squeezed frames still admit an O(1)-reduced basis, and the
        // reduced Gram keeps the determinant exactly (no cancellation).
        let aut = crate::heis::stable_generator(2, 1, 3, 2).unwrap();
        let base = Quad {
            a: 1.0,
            b: 0.0,
            c: 1.0,
        };
        for k in [1, 4, 8, 12, 16] {
            let fq = FQuad::plain(base).compose(aut.power(-k));
            let (_, g) = lagrange_reduce(fq);
            assert!(g.a <= 4.0 && g.c <= 8.0, "k={k}: {g:?}");
            assert!((g.det() - 1.0).abs() < 1e-12, "k={k}: det {}", g.det());
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let mut rng = CounterRng::new(9);
        let mut out = Vec::new();
        for _ in 0..100 {
            let a = rng.uniform(0.2, 3.0);
            let b = rng.uniform(-1.0, 1.0);
            let c = (b * b) / a + rng.uniform(0.1, 3.0);
            let q = FQuad::plain(Quad { a, b, c });
            let p1 = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
            let p2 = (p1.0 + rng.uniform(-4.0, 4.0), p1.1 + rng.uniform(-4.0, 4.0));
            let rho = rng.uniform(0.3, 2.0);
            points_near_segment(q, p1, p2, rho, &mut out);
            let mut got = out.clone();
            got.sort_unstable();
            let mut want = brute(q, p1, p2, rho, 14);
            want.sort_unstable();
            assert_eq!(got, want, "q={q:?} p1={p1:?} p2={p2:?} rho={rho}");
        }
    }

    #[test]
    fn enumeration_squeezed_matches_brute_force() {
        let aut = crate::heis::stable_generator(2, 1, 3, 2).unwrap();
        let base = Quad {
            a: 2.0,
            b: 0.3,
            c: 1.0,
        };
        let mut out = Vec::new();
        for (k, range) in [(2, 40), (3, 130)] {
            let fq = FQuad::plain(base).compose(aut.power(-k));
            let p1 = (0.3, 0.45);
            let dir = (aut.alpha, aut.beta);
            let p2 = (p1.0 + 2.0 * dir.0, p1.1 + 2.0 * dir.1);
            points_near_segment(fq, p1, p2, 1.7, &mut out);
            let mut got = out.clone();
            got.sort_unstable();
            let mut want = brute(fq, p1, p2, 1.7, range);
            want.sort_unstable();
            assert_eq!(got, want, "k={k}");
        }
    }
}
