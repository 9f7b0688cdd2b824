//! Truncated Taylor expansions (jets) of order 3 in the three ambient
//! coordinates. Every analytic test function is evaluated as a jet, and all
//! horizontal derivatives up to third order are assembled from jets, so no
//! symbolic algebra and no finite differencing is involved on the analytic
//! side.
//!
//! Coefficients are Taylor coefficients c_α = ∂^α f(p)/α!, stored for all
//! multi-indices |α| ≤ 3 (20 entries). Differentiating a jet loses one order:
//! the top-degree coefficients of `partial` are unknown and set to zero, so
//! only quantities that survive three derivative applications at most may be
//! read off — which is exactly what the calculus module does.

pub const N_COEFFS: usize = 20;
const MAX_ORDER: usize = 3;

const fn build_tables() -> ([[[i8; 4]; 4]; 4], [(u8, u8, u8); N_COEFFS]) {
    let mut idx = [[[-1i8; 4]; 4]; 4];
    let mut exp = [(0u8, 0u8, 0u8); N_COEFFS];
    let mut k = 0usize;
    let mut d = 0usize;
    while d <= MAX_ORDER {
        let mut a = d as i64;
        while a >= 0 {
            let mut b = (d as i64) - a;
            while b >= 0 {
                let c = (d as i64) - a - b;
                if c >= 0 {
                    idx[a as usize][b as usize][c as usize] = k as i8;
                    exp[k] = (a as u8, b as u8, c as u8);
                    k += 1;
                }
                b -= 1;
            }
            a -= 1;
        }
        d += 1;
    }
    (idx, exp)
}

const TABLES: ([[[i8; 4]; 4]; 4], [(u8, u8, u8); N_COEFFS]) = build_tables();
const IDX: [[[i8; 4]; 4]; 4] = TABLES.0;
const EXP: [(u8, u8, u8); N_COEFFS] = TABLES.1;

#[inline]
fn index_of(a: usize, b: usize, c: usize) -> Option<usize> {
    if a + b + c > MAX_ORDER {
        return None;
    }
    let i = IDX[a][b][c];
    (i >= 0).then_some(i as usize)
}

/// Order-3 jet in three variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [f64; N_COEFFS],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N_COEFFS];
        c[0] = v;
        Jet { c }
    }

    /// The coordinate function ξ ↦ v + ξ_axis expanded at the point.
    pub fn variable(v: f64, axis: usize) -> Self {
        let mut j = Jet::constant(v);
        let i = match axis {
            0 => index_of(1, 0, 0),
            1 => index_of(0, 1, 0),
            2 => index_of(0, 0, 1),
            _ => panic!("axis {axis} out of range"),
        };
        j.c[i.unwrap()] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// First-order Taylor coefficient along `axis` (equals ∂f/∂ξ_axis).
    pub fn gradient(&self, axis: usize) -> f64 {
        debug_assert!(axis < 3);
        self.c[1 + axis]
    }

    pub fn add(&self, rhs: &Jet) -> Jet {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
        Jet { c }
    }

    pub fn sub(&self, rhs: &Jet) -> Jet {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
        Jet { c }
    }

    pub fn neg(&self) -> Jet {
        let mut c = self.c;
        for a in c.iter_mut() {
            *a = -*a;
        }
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut c = self.c;
        for a in c.iter_mut() {
            *a *= s;
        }
        Jet { c }
    }

    /// Truncated product; exact for the degrees both operands carry.
    pub fn mul(&self, rhs: &Jet) -> Jet {
        let mut out = [0.0; N_COEFFS];
        for (i, &ci) in self.c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let (a1, b1, c1) = EXP[i];
            for (j, &cj) in rhs.c.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                let (a2, b2, c2) = EXP[j];
                if let Some(k) = index_of(
                    (a1 + a2) as usize,
                    (b1 + b2) as usize,
                    (c1 + c2) as usize,
                ) {
                    out[k] += ci * cj;
                }
            }
        }
        Jet { c: out }
    }

    /// Taylor coefficients of ∂f/∂ξ_axis. The result is one order lower; its
    /// top-degree coefficients are unknown and zeroed.
    pub fn partial(&self, axis: usize) -> Jet {
        let mut out = [0.0; N_COEFFS];
        for (k, &(a, b, c)) in EXP.iter().enumerate() {
            let (a, b, c) = (a as usize, b as usize, c as usize);
            let shifted = match axis {
                0 => index_of(a + 1, b, c).map(|i| (i, (a + 1) as f64)),
                1 => index_of(a, b + 1, c).map(|i| (i, (b + 1) as f64)),
                2 => index_of(a, b, c + 1).map(|i| (i, (c + 1) as f64)),
                _ => panic!("axis {axis} out of range"),
            };
            if let Some((i, factor)) = shifted {
                out[k] = factor * self.c[i];
            }
        }
        Jet { c: out }
    }

    /// Compose with a univariate analytic function given by the array of its
    /// derivatives [F(a), F'(a), F''(a), F'''(a)] at a = f(p). Exact at this
    /// truncation order because f − a has no constant term.
    fn compose(&self, derivs: [f64; 4]) -> Jet {
        let g = {
            let mut g = *self;
            g.c[0] = 0.0;
            g
        };
        let g2 = g.mul(&g);
        let g3 = g2.mul(&g);
        let mut out = Jet::constant(derivs[0]);
        out = out.add(&g.scale(derivs[1]));
        out = out.add(&g2.scale(derivs[2] / 2.0));
        out = out.add(&g3.scale(derivs[3] / 6.0));
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        self.compose([e, e, e, e])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s])
    }

    /// 1/f; requires f(p) ≠ 0.
    pub fn recip(&self) -> Jet {
        let a = self.c[0];
        debug_assert!(a != 0.0, "recip of a jet with zero value");
        let inv = 1.0 / a;
        self.compose([inv, -inv * inv, 2.0 * inv.powi(3), -6.0 * inv.powi(4)])
    }

    /// √f; requires f(p) > 0.
    pub fn sqrt(&self) -> Jet {
        let a = self.c[0];
        debug_assert!(a > 0.0, "sqrt of a jet with nonpositive value");
        let r = a.sqrt();
        self.compose([
            r,
            0.5 / r,
            -0.25 / (r * a),
            0.375 / (r * a * a),
        ])
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut out = Jet::constant(1.0);
        let mut base = *self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                out = out.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        out
    }
}
