//! Analytic test functions. Each member is a closed-form expression evaluated
//! on order-3 jets, so horizontal derivatives up to third order come out
//! analytically — no finite differencing and no symbolic engine.

use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::{GridSpec, SampledFunction};
use crate::group::{Ball, CarnotGroup, GroupPoint};
use crate::jet::Jet;

type Expr = Arc<dyn Fn(&[Jet; 3]) -> Jet + Send + Sync>;

/// A closed-form scalar field with analytic evaluators for u, X_iu, X_iX_ju
/// and X_iX_jX_ku, plus optional compact support inside a gauge ball.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    expr: Expr,
    /// Gauge ball outside which the function vanishes identically.
    support: Option<Ball>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

fn coords_at(p: GroupPoint) -> [Jet; 3] {
    [
        Jet::variable(p.0[0], 0),
        Jet::variable(p.0[1], 1),
        Jet::variable(p.0[2], 2),
    ]
}

/// Apply the generator Xᵢ to a jet at the coordinates `coords`.
/// X₁ = ∂ₓ − (y/2)∂ₜ and X₂ = ∂_y + (x/2)∂ₜ; the polynomial coefficients are
/// themselves jets built from the coordinate jets, so repeated application
/// stays exact (each application costs one jet order).
pub fn horizontal_jet(i: usize, coords: &[Jet; 3], u: &Jet) -> Jet {
    match i {
        0 => u.partial(0).sub(&coords[1].scale(0.5).mul(&u.partial(2))),
        1 => u.partial(1).add(&coords[0].scale(0.5).mul(&u.partial(2))),
        _ => panic!("generator index {i} out of range"),
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, expr: Expr, support: Option<Ball>) -> Self {
        TestFunction {
            label: label.into(),
            expr,
            support,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Gauge ball containing the support, when the function is compactly
    /// supported.
    pub fn support(&self) -> Option<&Ball> {
        self.support.as_ref()
    }

    pub fn jet(&self, p: GroupPoint) -> Jet {
        (self.expr)(&coords_at(p))
    }

    pub fn value(&self, p: GroupPoint) -> f64 {
        self.jet(p).value()
    }

    /// Xᵢ u (p).
    pub fn x_first(&self, i: usize, p: GroupPoint) -> f64 {
        let coords = coords_at(p);
        horizontal_jet(i, &coords, &(self.expr)(&coords)).value()
    }

    /// XᵢXⱼ u (p).
    pub fn x_second(&self, i: usize, j: usize, p: GroupPoint) -> f64 {
        let coords = coords_at(p);
        let inner = horizontal_jet(j, &coords, &(self.expr)(&coords));
        horizontal_jet(i, &coords, &inner).value()
    }

    /// XᵢXⱼXₖ u (p).
    pub fn x_third(&self, i: usize, j: usize, k: usize, p: GroupPoint) -> f64 {
        let coords = coords_at(p);
        let inner = horizontal_jet(k, &coords, &(self.expr)(&coords));
        let mid = horizontal_jet(j, &coords, &inner);
        horizontal_jet(i, &coords, &mid).value()
    }

    /// Euclidean partial ∂_axis u (p); used for commutator checks.
    pub fn partial(&self, axis: usize, p: GroupPoint) -> f64 {
        self.jet(p).gradient(axis)
    }

    /// Xᵢu as a test function in its own right (one jet order consumed).
    pub fn x_field(&self, i: usize) -> TestFunction {
        let expr = self.expr.clone();
        TestFunction {
            label: format!("X{}({})", i + 1, self.label),
            expr: Arc::new(move |coords| horizontal_jet(i, coords, &expr(coords))),
            support: self.support,
        }
    }

    /// Σ wᵢ uᵢ. The support is the largest of the members' supports, or none
    /// if any member is not compactly supported.
    pub fn weighted_sum(label: impl Into<String>, terms: Vec<(f64, TestFunction)>) -> TestFunction {
        let support = terms
            .iter()
            .map(|(_, u)| u.support)
            .reduce(|acc, s| match (acc, s) {
                (Some(a), Some(b)) => Some(if a.radius >= b.radius { a } else { b }),
                _ => None,
            })
            .flatten();
        let exprs: Vec<(f64, Expr)> = terms.into_iter().map(|(w, u)| (w, u.expr)).collect();
        TestFunction {
            label: label.into(),
            expr: Arc::new(move |coords| {
                let mut acc = Jet::constant(0.0);
                for (w, e) in &exprs {
                    acc = acc.add(&e(coords).scale(*w));
                }
                acc
            }),
            support,
        }
    }

    /// u·v (pointwise product), e.g. potential × cutoff.
    pub fn product(label: impl Into<String>, u: &TestFunction, v: &TestFunction) -> TestFunction {
        let (eu, ev) = (u.expr.clone(), v.expr.clone());
        let support = match (u.support, v.support) {
            (Some(a), Some(b)) => Some(if a.radius <= b.radius { a } else { b }),
            (s, None) | (None, s) => s,
        };
        TestFunction {
            label: label.into(),
            expr: Arc::new(move |coords| eu(coords).mul(&ev(coords))),
            support,
        }
    }

    /// u∘D_λ. Support shrinks by 1/λ.
    pub fn dilated(&self, group: &CarnotGroup, lambda: f64) -> TestFunction {
        assert!(lambda > 0.0);
        let expr = self.expr.clone();
        let support = self.support.map(|b| Ball {
            center: group
                .dilate(1.0 / lambda, b.center)
                .expect("positive dilation"),
            radius: b.radius / lambda,
        });
        TestFunction {
            label: format!("{}∘D({lambda})", self.label),
            expr: Arc::new(move |coords| {
                let scaled = [
                    coords[0].scale(lambda),
                    coords[1].scale(lambda),
                    coords[2].scale(lambda * lambda),
                ];
                expr(&scaled)
            }),
            support,
        }
    }

    /// u∘L_z with L_z(x) = z∘x. Support center moves to z⁻¹∘c.
    pub fn left_translated(&self, group: &CarnotGroup, z: GroupPoint) -> TestFunction {
        let expr = self.expr.clone();
        let [z1, z2, z3] = z.0;
        let support = self.support.map(|b| Ball {
            center: group.compose(group.inverse(z), b.center),
            radius: b.radius,
        });
        TestFunction {
            label: format!("{}∘L({z})", self.label),
            expr: Arc::new(move |coords| {
                // z∘(p+ξ): the t component picks up the shear ½(z₁ξ₂ − z₂ξ₁).
                let x = coords[0].add(&Jet::constant(z1));
                let y = coords[1].add(&Jet::constant(z2));
                let shear = coords[1]
                    .scale(0.5 * z1)
                    .sub(&coords[0].scale(0.5 * z2));
                let t = coords[2].add(&Jet::constant(z3)).add(&shear);
                expr(&[x, y, t])
            }),
            support,
        }
    }

    /// Sample values on a grid (parallel, deterministic per node).
    pub fn sample(&self, grid: &GridSpec) -> SampledFunction {
        let expr = &self.expr;
        let mut values = vec![0.0; grid.len()];
        values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            *v = expr(&coords_at(grid.point(idx))).value();
        });
        SampledFunction {
            grid: grid.clone(),
            values,
        }
    }

    /// Sample XᵢXⱼu on a grid.
    pub fn sample_x_second(&self, i: usize, j: usize, grid: &GridSpec) -> SampledFunction {
        let mut values = vec![0.0; grid.len()];
        values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            *v = self.x_second(i, j, grid.point(idx));
        });
        SampledFunction {
            grid: grid.clone(),
            values,
        }
    }

    /// Sample Xᵢu on a grid.
    pub fn sample_x_first(&self, i: usize, grid: &GridSpec) -> SampledFunction {
        let mut values = vec![0.0; grid.len()];
        values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            *v = self.x_first(i, grid.point(idx));
        });
        SampledFunction {
            grid: grid.clone(),
            values,
        }
    }
}

/// ρ⁴ as a jet: (x²+y²)² + γ t².
fn gauge4(coords: &[Jet; 3], gamma: f64) -> Jet {
    let r2 = coords[0].mul(&coords[0]).add(&coords[1].mul(&coords[1]));
    r2.mul(&r2).add(&coords[2].mul(&coords[2]).scale(gamma))
}

/// Smooth compactly supported profile exp(−1/(1−s)) on s < 1, extended by 0.
/// The argument is a jet of s; the branch is taken on its value, which is
/// exact because every derivative vanishes at s = 1.
fn bump_profile(s: &Jet) -> Jet {
    if s.value() >= 1.0 - 1e-12 {
        return Jet::constant(0.0);
    }
    Jet::constant(1.0).sub(s).recip().neg().exp()
}

/// Gauge-radial bump supported in {((x²+y²)² + γt²)^{1/4} < r}, built on the
/// polynomial ρ⁴ so it is smooth across the group center. γ = 16 gives the
/// Korányi ball; other γ give bumps elongated or squeezed along t.
pub fn gauge_bump(r: f64, gamma: f64) -> TestFunction {
    assert!(r > 0.0 && gamma > 0.0);
    let scale = r.powi(4);
    // Bounding gauge ball: for γ < 16 the support bulges along t.
    let bound = r * (16.0 / gamma).powf(0.25).max(1.0);
    TestFunction::new(
        format!("bump(r={r},γ={gamma})"),
        Arc::new(move |coords| bump_profile(&gauge4(coords, gamma).scale(1.0 / scale))),
        Some(Ball::centered(bound).expect("positive radius")),
    )
}

/// Polynomial–bump product p(x,y,t)·bump.
pub fn poly_bump(r: f64) -> TestFunction {
    let bump = gauge_bump(r, 16.0);
    let expr = bump.expr.clone();
    TestFunction::new(
        format!("poly·bump(r={r})"),
        Arc::new(move |coords| {
            let poly = coords[0]
                .add(&coords[1].mul(&coords[1]).scale(0.5))
                .sub(&coords[2].scale(0.8));
            poly.mul(&expr(coords))
        }),
        bump.support,
    )
}

/// Oscillatory member sin(ωx)·bump.
pub fn oscillatory_bump(r: f64, omega: f64) -> TestFunction {
    let bump = gauge_bump(r, 16.0);
    let expr = bump.expr.clone();
    TestFunction::new(
        format!("sin({omega}x)·bump(r={r})"),
        Arc::new(move |coords| coords[0].scale(omega).sin().mul(&expr(coords))),
        bump.support,
    )
}

/// The affine coordinate function c₀ + c₁x + c₂y (+ c₃t).
pub fn affine(c0: f64, c1: f64, c2: f64, c3: f64) -> TestFunction {
    TestFunction::new(
        format!("affine({c0},{c1},{c2},{c3})"),
        Arc::new(move |coords| {
            Jet::constant(c0)
                .add(&coords[0].scale(c1))
                .add(&coords[1].scale(c2))
                .add(&coords[2].scale(c3))
        }),
        None,
    )
}

/// A non-compact smooth member decaying in all variables; boundary data for
/// harmonic replacement sweeps.
pub fn gaussian_like(sigma_xy: f64, sigma_t: f64) -> TestFunction {
    TestFunction::new(
        format!("gauss({sigma_xy},{sigma_t})"),
        Arc::new(move |coords| {
            let qx = coords[0].mul(&coords[0]).add(&coords[1].mul(&coords[1]));
            let qt = coords[2].mul(&coords[2]);
            qx.scale(-0.5 / (sigma_xy * sigma_xy))
                .add(&qt.scale(-0.5 / (sigma_t * sigma_t)))
                .exp()
        }),
        None,
    )
}

/// An L̄_ā-harmonic cubic with nonconstant second derivatives: the Euclidean
/// harmonic x³ − 3xy² pulled back through A⁻¹ (ā = AA^T), t-free so that
/// Σ ā_ij X_iX_j reduces to the plane Laplacian argument.
pub fn harmonic_cubic(a_inv: [[f64; 2]; 2]) -> TestFunction {
    TestFunction::new(
        "harmonic-cubic".to_owned(),
        Arc::new(move |coords| {
            let u = coords[0].scale(a_inv[0][0]).add(&coords[1].scale(a_inv[0][1]));
            let v = coords[0].scale(a_inv[1][0]).add(&coords[1].scale(a_inv[1][1]));
            u.powi(3).sub(&u.mul(&v.powi(2)).scale(3.0))
        }),
        None,
    )
}

/// The monomial x·y, harmonic for ā = I with constant nonzero X₁X₂.
pub fn xy_monomial() -> TestFunction {
    TestFunction::new(
        "xy".to_owned(),
        Arc::new(|coords| coords[0].mul(&coords[1])),
        None,
    )
}

/// Smooth cutoff φ_σ with φ = 1 on B_{σr}, support in B_{σ'r}, σ' = (1+σ)/2,
/// built by composing a smooth ramp with the polynomial gauge ρ⁴.
pub fn make_cutoff(sigma: f64, r: f64) -> crate::error::Result<TestFunction> {
    if !(sigma > 0.5 && sigma < 1.0) {
        return Err(crate::error::CarnotError::Domain(format!(
            "cutoff σ must lie in (1/2, 1), got {sigma}"
        )));
    }
    if !(r > 0.0) {
        return Err(crate::error::CarnotError::Domain(format!(
            "cutoff radius must be positive, got {r}"
        )));
    }
    let sigma_p = 0.5 * (1.0 + sigma);
    let a = (sigma * r).powi(4);
    let b = (sigma_p * r).powi(4);
    Ok(TestFunction::new(
        format!("cutoff(σ={sigma},r={r})"),
        Arc::new(move |coords| {
            // τ ∈ [0,1] parametrizes the transition shell in ρ⁴.
            let tau = gauge4(coords, 16.0)
                .sub(&Jet::constant(a))
                .scale(1.0 / (b - a));
            let tv = tau.value();
            if tv <= 1e-12 {
                return Jet::constant(1.0);
            }
            if tv >= 1.0 - 1e-12 {
                return Jet::constant(0.0);
            }
            // φ = S(1−τ)/(S(1−τ)+S(τ)) with S(v) = exp(−1/v).
            let s1 = Jet::constant(1.0).sub(&tau).recip().neg().exp();
            let s2 = tau.recip().neg().exp();
            s1.mul(&s1.add(&s2).recip())
        }),
        Some(Ball::centered(sigma_p * r).expect("positive radius")),
    ))
}

/// The default verification corpus: gauge bumps, polynomial and oscillatory
/// members, and an anisotropic bump, all supported in B_r.
pub fn standard_corpus(r: f64) -> Vec<TestFunction> {
    vec![
        gauge_bump(r, 16.0),
        poly_bump(r),
        oscillatory_bump(r, 2.0),
        oscillatory_bump(r, 4.0),
        oscillatory_bump(r, 8.0),
        gauge_bump(r, 64.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_derivatives_of_coordinates() {
        let u = affine(0.0, 1.0, 0.0, 0.0); // u = x
        let p = GroupPoint::new(0.4, -0.7, 0.2);
        assert_eq!(u.x_first(0, p), 1.0);
        assert_eq!(u.x_first(1, p), 0.0);

        let t = affine(0.0, 0.0, 0.0, 1.0); // u = t
        assert_eq!(t.x_first(0, p), 0.5 * 0.7); // X₁t = −y/2
        assert_eq!(t.x_first(1, p), 0.5 * 0.4); // X₂t = x/2
        assert_eq!(t.x_second(0, 1, p), 0.5); // X₁X₂t = 1/2
        assert_eq!(t.x_second(1, 0, p), -0.5); // X₂X₁t = −1/2
    }

    #[test]
    fn commutator_on_t_is_one() {
        let t = affine(0.0, 0.0, 0.0, 1.0);
        let p = GroupPoint::new(1.3, 2.1, -0.4);
        let comm = t.x_second(0, 1, p) - t.x_second(1, 0, p);
        assert_eq!(comm, 1.0); // = ∂ₜ t
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let u = gauge_bump(0.8, 16.0);
        let group = CarnotGroup::heisenberg();
        let outside = GroupPoint::new(0.81, 0.0, 0.0);
        assert!(group.gauge_norm(outside) > 0.8);
        assert_eq!(u.value(outside), 0.0);
        assert_eq!(u.x_second(0, 0, outside), 0.0);
        assert!(u.value(GroupPoint::origin()) > 0.0);
    }

    #[test]
    fn bump_is_smooth_at_center() {
        // The quartic-gauge profile is polynomial in (x,y,t) near the origin;
        // derivatives across the center must agree from both sides.
        let u = gauge_bump(1.0, 16.0);
        let h = 1e-4;
        let up = u.value(GroupPoint::new(0.0, 0.0, h));
        let um = u.value(GroupPoint::new(0.0, 0.0, -h));
        assert!((up - um).abs() < 1e-12);
        let d = u.x_first(0, GroupPoint::origin());
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn cutoff_shape() {
        let r = 1.0;
        let phi = make_cutoff(0.6, r).unwrap();
        let group = CarnotGroup::heisenberg();
        assert!((phi.value(GroupPoint::origin()) - 1.0).abs() < 1e-15);
        let inside = GroupPoint::new(0.59, 0.0, 0.0);
        assert!((phi.value(inside) - 1.0).abs() < 1e-15);
        let outside = GroupPoint::new(0.81, 0.0, 0.0);
        assert!(group.gauge_norm(outside) >= 0.8);
        assert_eq!(phi.value(outside), 0.0);
        let mid = GroupPoint::new(0.7, 0.0, 0.0);
        let v = phi.value(mid);
        assert!(v > 0.0 && v < 1.0);
        assert!(make_cutoff(0.4, r).is_err());
        assert!(make_cutoff(0.6, -1.0).is_err());
    }

    #[test]
    fn dilation_pullback_is_exact() {
        let group = CarnotGroup::heisenberg();
        let u = oscillatory_bump(1.0, 2.0);
        let lam = 2.0;
        let ud = u.dilated(&group, lam);
        let p = GroupPoint::new(0.11, -0.07, 0.02);
        let dp = group.dilate(lam, p).unwrap();
        assert!((ud.value(p) - u.value(dp)).abs() < 1e-14);
        // 1-homogeneity: X_i(u∘D_λ) = λ (X_iu)∘D_λ.
        for i in 0..2 {
            let lhs = ud.x_first(i, p);
            let rhs = lam * u.x_first(i, dp);
            assert!((lhs - rhs).abs() < 1e-12, "i = {i}: {lhs} vs {rhs}");
        }
        // Degree 2 picks up λ².
        let lhs = ud.x_second(0, 1, p);
        let rhs = lam * lam * u.x_second(0, 1, dp);
        assert!((lhs - rhs).abs() < 1e-11);
    }

    #[test]
    fn left_translation_commutes_with_fields() {
        let group = CarnotGroup::heisenberg();
        let u = poly_bump(1.2);
        let z = GroupPoint::new(0.3, -0.2, 0.15);
        let uz = u.left_translated(&group, z);
        let p = GroupPoint::new(0.05, 0.12, -0.03);
        let zp = group.compose(z, p);
        assert!((uz.value(p) - u.value(zp)).abs() < 1e-14);
        for i in 0..2 {
            let lhs = uz.x_first(i, p);
            let rhs = u.x_first(i, zp);
            assert!((lhs - rhs).abs() < 1e-10, "left invariance broke for X{i}");
        }
    }

    #[test]
    fn harmonic_cubic_is_annihilated() {
        let u = harmonic_cubic([[1.0, 0.0], [0.0, 1.0]]);
        for p in [
            GroupPoint::new(0.5, -0.3, 0.1),
            GroupPoint::new(-1.2, 0.8, -0.4),
        ] {
            let lap = u.x_second(0, 0, p) + u.x_second(1, 1, p);
            assert!(lap.abs() < 1e-12);
            // and D²u is nonconstant: X₁X₁u = 6x.
            assert!((u.x_second(0, 0, p) - 6.0 * p.0[0]).abs() < 1e-12);
        }
    }
}
