//! The constant-coefficient model operator L̄ = Σ ā_ij X_iX_j, the variable
//! coefficient operator L, the homogeneous fundamental solution Γ_ā on H¹,
//! and the Newtonian-potential convolution solver.
//!
//! For the sub-Laplacian (ā = I) the fundamental solution is a pure power of
//! the Korányi gauge, Γ = −c_Γ ρ^{−2}. The normalization c_Γ is not
//! hard-coded: it is computed once per process by a divergence-theorem flux
//! integral of the horizontal gradient of ρ^{−2} (the flux through any
//! surface enclosing the pole is the same because the field is divergence
//! free away from it) and then cross-validated by the mollified point-mass
//! test. For a general symmetric positive ā = AAᵀ, the horizontal GL(2)
//! automorphism φ_A(z, t) = (Az, det(A)·t) conjugates Σ ā_ij X_iX_j to the
//! sub-Laplacian, giving Γ_ā(p) = Γ_I(φ_A⁻¹(p)) / det(ā); the normalization
//! is enforced by the residual and point-mass invariants rather than assumed.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::calculus::{fd_apply_word, MultiIndex, TestFunction};
use crate::error::{CarnotError, Result};
use crate::grid::{GridSpec, SampledFunction};
use crate::group::{Ball, CarnotGroup, GroupPoint};

/// Constant symmetric matrix ā with ellipticity constant μ:
/// μ|ξ|² ≤ ξᵀāξ ≤ |ξ|²/μ.
#[derive(Debug, Clone, Copy)]
pub struct EllipticMatrix {
    a: [[f64; 2]; 2],
    mu: f64,
}

impl EllipticMatrix {
    pub fn new(a: [[f64; 2]; 2], mu: f64) -> Result<Self> {
        if a[0][1] != a[1][0] {
            return Err(CarnotError::Structural(
                "coefficient matrix must be exactly symmetric".into(),
            ));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(CarnotError::Domain(format!("ellipticity μ must lie in (0,1], got {mu}")));
        }
        let m = EllipticMatrix { a, mu };
        let (lo, hi) = m.eigenvalues();
        if lo < mu * (1.0 - 1e-12) || hi > (1.0 / mu) * (1.0 + 1e-12) {
            return Err(CarnotError::Domain(format!(
                "eigenvalues [{lo}, {hi}] violate the μ = {mu} ellipticity band"
            )));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        EllipticMatrix {
            a: [[1.0, 0.0], [0.0, 1.0]],
            mu: 1.0,
        }
    }

    /// Random matrix with eigenvalues uniform in [μ, 1/μ] and random
    /// orientation; exactly symmetric by construction.
    pub fn random_in_class(mu: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(CarnotError::Domain(format!("ellipticity μ must lie in (0,1], got {mu}")));
        }
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let l1: f64 = rng.gen_range(mu..=1.0 / mu);
        let l2: f64 = rng.gen_range(mu..=1.0 / mu);
        let a00 = c * c * l1 + s * s * l2;
        let a11 = s * s * l1 + c * c * l2;
        let a01 = s * c * (l1 - l2);
        EllipticMatrix::new([[a00, a01], [a01, a11]], mu)
    }

    pub fn entries(&self) -> &[[f64; 2]; 2] {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    /// Eigenvalues (min, max) of the 2×2 symmetric matrix.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * (self.a[0][0] + self.a[1][1]);
        let d = (0.25 * (self.a[0][0] - self.a[1][1]).powi(2) + self.a[0][1].powi(2)).sqrt();
        (m - d, m + d)
    }

    /// Symmetric square root A with A² = ā.
    pub fn sqrt(&self) -> [[f64; 2]; 2] {
        let (l1, l2) = self.eigenvalues();
        let phi = 0.5 * (2.0 * self.a[0][1]).atan2(self.a[0][0] - self.a[1][1]);
        let (s, c) = phi.sin_cos();
        // Eigenvector of the larger eigenvalue is (c, s).
        let (r1, r2) = (l2.sqrt(), l1.sqrt());
        [
            [c * c * r1 + s * s * r2, s * c * (r1 - r2)],
            [s * c * (r1 - r2), s * s * r1 + c * c * r2],
        ]
    }
}

fn inverse_2x2(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

/// Flux of Σᵢ (Xᵢ ρ^{−2}) bᵢ through a sphere enclosing the pole, by product
/// quadrature in spherical coordinates. Expected strictly negative.
fn gauge_flux(group: &CarnotGroup, n_theta: usize) -> f64 {
    let gc = 16.0;
    debug_assert_eq!(group.generators(), 2);
    let n_phi = 2 * n_theta;
    let dth = std::f64::consts::PI / n_theta as f64;
    let dph = std::f64::consts::TAU / n_phi as f64;
    let mut flux = 0.0;
    for i in 0..n_theta {
        let th = (i as f64 + 0.5) * dth;
        let (sth, cth) = th.sin_cos();
        for j in 0..n_phi {
            let ph = (j as f64 + 0.5) * dph;
            let (sph, cph) = ph.sin_cos();
            let (x, y, t) = (sth * cph, sth * sph, cth);
            let r2 = x * x + y * y;
            let w = r2 * r2 + gc * t * t;
            let w32 = w * w.sqrt();
            let x1u = -0.5 / w32 * (4.0 * r2 * x - gc * y * t);
            let x2u = -0.5 / w32 * (4.0 * r2 * y + gc * x * t);
            let f = [x1u, x2u, x1u * (-0.5 * y) + x2u * (0.5 * x)];
            let dot = f[0] * x + f[1] * y + f[2] * t;
            flux += dot * sth;
        }
    }
    flux * dth * dph
}

static C_GAMMA: OnceLock<f64> = OnceLock::new();

/// Normalization constant of Γ_I = −c_Γ ρ^{−2}, from the flux integral.
pub fn c_gamma(group: &CarnotGroup) -> f64 {
    *C_GAMMA.get_or_init(|| {
        let flux = gauge_flux(group, 512);
        debug_assert!(flux < 0.0);
        -1.0 / flux
    })
}

/// Homogeneous fundamental solution Γ_ā of L̄ = Σ ā_ij X_iX_j on H¹.
#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    abar: EllipticMatrix,
    c_gamma: f64,
    a_sqrt_inv: [[f64; 2]; 2],
    det_abar: f64,
}

impl FundamentalSolution {
    pub fn new(group: &CarnotGroup, abar: EllipticMatrix) -> Self {
        FundamentalSolution {
            abar,
            c_gamma: c_gamma(group),
            a_sqrt_inv: inverse_2x2(&abar.sqrt()),
            det_abar: abar.det(),
        }
    }

    pub fn matrix(&self) -> &EllipticMatrix {
        &self.abar
    }

    pub fn normalization(&self) -> f64 {
        self.c_gamma
    }

    /// φ_A⁻¹(p) = (A⁻¹z, t/det A) where A = ā^{1/2}.
    fn pull_back(&self, p: GroupPoint) -> GroupPoint {
        let [x, y, t] = p.0;
        let m = &self.a_sqrt_inv;
        GroupPoint([
            m[0][0] * x + m[0][1] * y,
            m[1][0] * x + m[1][1] * y,
            t / self.det_abar.sqrt(),
        ])
    }

    /// Γ_ā(p); the pole is a singularity error.
    pub fn eval(&self, group: &CarnotGroup, p: GroupPoint) -> Result<f64> {
        let q = self.pull_back(p);
        let rho = group.gauge_norm(q);
        if rho == 0.0 {
            return Err(CarnotError::Singular("Γ evaluated at its pole".into()));
        }
        Ok(-self.c_gamma / (rho * rho) / self.det_abar)
    }

    /// Γ_ā(y⁻¹∘x), vanishing-safe convolution kernel form.
    pub fn eval_kernel(&self, group: &CarnotGroup, x: GroupPoint, y: GroupPoint) -> Result<f64> {
        self.eval(group, group.compose(group.inverse(y), x))
    }
}

/// L̄u = Σ ā_ij X_iX_j u on a sampled field, by composed difference stencils.
pub fn model_apply(
    group: &CarnotGroup,
    abar: &EllipticMatrix,
    u: &SampledFunction,
) -> Result<SampledFunction> {
    let mut out = vec![0.0; u.values.len()];
    for i in 0..2 {
        for j in 0..2 {
            let w = abar.a[i][j];
            if w == 0.0 {
                continue;
            }
            let d2 = fd_apply_word(group, &MultiIndex(vec![i, j]), u)?;
            for (o, v) in out.iter_mut().zip(d2.values.iter()) {
                *o += w * v;
            }
        }
    }
    Ok(SampledFunction {
        grid: u.grid.clone(),
        values: out,
    })
}

/// L̄u for an analytic test function, again analytic.
pub fn model_apply_test(abar: &EllipticMatrix, u: &TestFunction) -> TestFunction {
    let mut terms = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let w = abar.a[i][j];
            if w != 0.0 {
                terms.push((w, u.x_field(j).x_field(i)));
            }
        }
    }
    TestFunction::weighted_sum(format!("L̄({})", u.label()), terms)
}

/// How the spatially varying coefficients were built; the tag records the
/// declared VMO class for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmoClass {
    Constant,
    Smooth,
    LogLog,
}

type CoeffFn = Arc<dyn Fn(GroupPoint) -> f64 + Send + Sync>;

/// Symmetric spatially varying coefficient matrix a_ij(x) with uniform
/// ellipticity μ and a declared VMO class.
#[derive(Clone)]
pub struct CoefficientField {
    /// Upper triangle [a11, a12, a22]; symmetry is structural.
    entries: [CoeffFn; 3],
    mu: f64,
    class: VmoClass,
    label: String,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("mu", &self.mu)
            .field("class", &self.class)
            .finish()
    }
}

impl CoefficientField {
    pub fn constant(abar: EllipticMatrix) -> Self {
        let a = *abar.entries();
        CoefficientField {
            entries: [
                Arc::new(move |_| a[0][0]),
                Arc::new(move |_| a[0][1]),
                Arc::new(move |_| a[1][1]),
            ],
            mu: abar.mu(),
            class: VmoClass::Constant,
            label: "constant".into(),
        }
    }

    /// a(x) = (1 + A·s(x))·I for a bounded scalar pattern |s| ≤ 1; uniformly
    /// elliptic with μ = 1 − A.
    pub fn scalar_perturbation(
        label: impl Into<String>,
        amplitude: f64,
        class: VmoClass,
        pattern: impl Fn(GroupPoint) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude < 1.0) {
            return Err(CarnotError::Domain(format!(
                "perturbation amplitude must lie in [0,1), got {amplitude}"
            )));
        }
        let pattern = Arc::new(pattern);
        let diag = {
            let pattern = pattern.clone();
            move |p: GroupPoint| 1.0 + amplitude * pattern(p).clamp(-1.0, 1.0)
        };
        Ok(CoefficientField {
            entries: [
                Arc::new(diag.clone()),
                Arc::new(|_| 0.0),
                Arc::new(diag),
            ],
            mu: 1.0 - amplitude,
            class,
            label: label.into(),
        })
    }

    /// The slowly oscillating VMO example: s(ρ) = sin(log(−log ρ)) frozen
    /// outside ρ ∈ (0, cap); the oscillation slows down toward the origin,
    /// so the VMO modulus decays as r → 0.
    pub fn log_log(group: &CarnotGroup, amplitude: f64, cap: f64) -> Result<Self> {
        CoefficientField::log_log_phased(group, amplitude, cap, 0.0)
    }

    /// Phase-shifted variant sin(log(−log ρ) + φ). The phase moves the sign
    /// changes of the oscillation into a chosen gauge annulus; the VMO
    /// modulus structure is unchanged.
    pub fn log_log_phased(
        group: &CarnotGroup,
        amplitude: f64,
        cap: f64,
        phase: f64,
    ) -> Result<Self> {
        let g = CarnotGroup::heisenberg();
        debug_assert_eq!(group.name(), g.name());
        let pattern = move |p: GroupPoint| {
            let rho = g.gauge_norm(p).clamp(1e-12, cap);
            ((-rho.ln()).ln() + phase).sin()
        };
        CoefficientField::scalar_perturbation(
            format!("log-log(A={amplitude},phase={phase})"),
            amplitude,
            VmoClass::LogLog,
            pattern,
        )
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn class(&self) -> VmoClass {
        self.class
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn entry(&self, i: usize, j: usize, p: GroupPoint) -> f64 {
        match (i, j) {
            (0, 0) => (self.entries[0])(p),
            (0, 1) | (1, 0) => (self.entries[1])(p),
            (1, 1) => (self.entries[2])(p),
            _ => panic!("coefficient index ({i},{j}) out of range"),
        }
    }

    pub fn matrix_at(&self, p: GroupPoint) -> [[f64; 2]; 2] {
        let (a, b, c) = ((self.entries[0])(p), (self.entries[1])(p), (self.entries[2])(p));
        [[a, b], [b, c]]
    }

    /// Pointwise ellipticity check on every grid node.
    pub fn validate_on(&self, grid: &GridSpec) -> Result<()> {
        for idx in 0..grid.len() {
            let m = self.matrix_at(grid.point(idx));
            let mean = 0.5 * (m[0][0] + m[1][1]);
            let d = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[0][1]).sqrt();
            if mean - d < self.mu * (1.0 - 1e-9) || mean + d > (1.0 / self.mu) * (1.0 + 1e-9) {
                return Err(CarnotError::Domain(format!(
                    "ellipticity violated at {}: eigenvalues [{}, {}] vs μ = {}",
                    grid.point(idx),
                    mean - d,
                    mean + d,
                    self.mu
                )));
            }
        }
        Ok(())
    }

    /// The q² entries sampled on a grid, row-major (a₁₁, a₁₂, a₂₁, a₂₂);
    /// input to the VMO modulus a♯.
    pub fn sampled_entries(&self, grid: &GridSpec) -> Vec<SampledFunction> {
        let mut out = Vec::with_capacity(4);
        for i in 0..2 {
            for j in 0..2 {
                out.push(SampledFunction::from_fn(grid.clone(), |p| self.entry(i, j, p)));
            }
        }
        out
    }

    /// Averages (a_ij)_B as an elliptic matrix (ball averages of the entries).
    pub fn ball_average_matrix(
        &self,
        group: &CarnotGroup,
        grid: &GridSpec,
        ball: &Ball,
    ) -> Result<EllipticMatrix> {
        let nodes = grid.nodes_in_ball(group, ball);
        if nodes.is_empty() {
            return Err(CarnotError::Domain("empty discrete ball for (a)_B".into()));
        }
        let mut m = [0.0f64; 3];
        for &idx in &nodes {
            let p = grid.point(idx);
            m[0] += (self.entries[0])(p);
            m[1] += (self.entries[1])(p);
            m[2] += (self.entries[2])(p);
        }
        let n = nodes.len() as f64;
        EllipticMatrix::new([[m[0] / n, m[1] / n], [m[1] / n, m[2] / n]], self.mu)
    }
}

/// Lu = Σ a_ij(x) X_iX_j u on a sampled field.
pub fn variable_apply(
    group: &CarnotGroup,
    a: &CoefficientField,
    u: &SampledFunction,
) -> Result<SampledFunction> {
    let mut out = vec![0.0; u.values.len()];
    for i in 0..2 {
        for j in 0..2 {
            let d2 = fd_apply_word(group, &MultiIndex(vec![i, j]), u)?;
            out.par_iter_mut().enumerate().for_each(|(idx, o)| {
                *o += a.entry(i, j, u.grid.point(idx)) * d2.values[idx];
            });
        }
    }
    Ok(SampledFunction {
        grid: u.grid.clone(),
        values: out,
    })
}

/// Lu for an analytic u, sampled on a grid (derivatives analytic, coefficient
/// values pointwise).
pub fn variable_apply_test(
    a: &CoefficientField,
    u: &TestFunction,
    grid: &GridSpec,
) -> SampledFunction {
    SampledFunction::from_fn(grid.clone(), |p| {
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                acc += a.entry(i, j, p) * u.x_second(i, j, p);
            }
        }
        acc
    })
}

/// Newtonian potential u(x) = ∫ Γ_ā(y⁻¹∘x) f(y) dy at arbitrary points, by
/// direct quadrature over the support of f. The source cell containing the
/// pole contributes the analytic integral of Γ over the gauge ball whose
/// volume matches the cell (∫_{B_s} ρ^{−2} = (π²/4)s² on H¹), which keeps
/// the kernel's integrable singularity from poisoning the sum.
pub fn newtonian_potential_at(
    group: &CarnotGroup,
    abar: &EllipticMatrix,
    f: &SampledFunction,
    points: &[GroupPoint],
) -> Vec<f64> {
    let gamma = FundamentalSolution::new(group, *abar);
    let cell = f.grid.cell_volume();
    // Radius of the gauge ball whose φ_A image has the cell's volume, and the
    // analytic integral ∫_{B_s} Γ_ā over that image: by the coarea formula
    // ∫_{B_s} ρ^{2−Q} = Q|B₁|s²/(Q−2) = 2|B₁|s² on H¹.
    let vol_unit = group.unit_ball_volume();
    let s_cell = (cell / gamma.det_abar / vol_unit).powf(0.25);
    let singular_integral = -gamma.c_gamma * 2.0 * vol_unit * s_cell * s_cell;
    let sources: Vec<(GroupPoint, f64)> = (0..f.grid.len())
        .filter(|&idx| f.values[idx] != 0.0)
        .map(|idx| (f.grid.point(idx), f.values[idx]))
        .collect();
    points
        .par_iter()
        .map(|&x| {
            // The source node nearest to the pole (in pulled-back gauge
            // distance) absorbs the analytic cell integral; every other node
            // keeps the raw kernel, which is integrable across the pole.
            let mut nearest: Option<(usize, f64)> = None;
            for (k, &(y, _)) in sources.iter().enumerate() {
                let q = gamma.pull_back(group.compose(group.inverse(y), x));
                let rho = group.gauge_norm(q);
                if nearest.map_or(true, |(_, best)| rho < best) {
                    nearest = Some((k, rho));
                }
            }
            let singular = match nearest {
                Some((k, rho)) if rho < s_cell => Some(k),
                _ => None,
            };
            let mut acc = 0.0;
            for (k, &(y, fy)) in sources.iter().enumerate() {
                if singular == Some(k) {
                    acc += fy * singular_integral / cell;
                } else {
                    acc += fy * gamma.eval_kernel(group, x, y).expect("off-pole kernel");
                }
            }
            acc * cell
        })
        .collect()
}

/// Newtonian potential sampled on the source grid itself, with singularity
/// subtraction: under a fixed-radius radial cutoff φ the group-Taylor
/// polynomial of f at the output point is subtracted from the integrand and
/// its kernel integral restored in closed form,
///
///   ∫ Γ_ā(w)·φ(ρ(φ_A⁻¹w)/r₀) dw = −(2/3)·c_Γ·|B₁|·r₀²,
///
/// with the linear Taylor terms integrating to zero by symmetry. The
/// remaining integrand is bounded across the pole, so the quadrature error
/// stays smooth enough to survive the finite-difference residual check.
pub fn newtonian_potential(
    group: &CarnotGroup,
    abar: &EllipticMatrix,
    f: &SampledFunction,
    out_grid: &GridSpec,
) -> Result<SampledFunction> {
    let g = &f.grid;
    // Support bounding box, expanded by the difference stencil.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for idx in 0..g.len() {
        if f.values[idx] != 0.0 {
            let (ix, iy, it) = g.unravel(idx);
            for (a, v) in [(0, ix), (1, iy), (2, it)] {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
    }
    if lo[0] == usize::MAX {
        return Ok(SampledFunction::zeros(out_grid.clone()));
    }
    for a in 0..3 {
        if lo[a] < 2 || hi[a] + 2 >= g.counts[a] {
            return Err(CarnotError::Domain(
                "source support touches the grid boundary".into(),
            ));
        }
    }
    if *out_grid != f.grid {
        // Cross-grid evaluation falls back to the raw kernel quadrature.
        let points: Vec<GroupPoint> = (0..out_grid.len()).map(|i| out_grid.point(i)).collect();
        let values = newtonian_potential_at(group, abar, f, &points);
        return SampledFunction::new(out_grid.clone(), values);
    }

    let gamma = FundamentalSolution::new(group, *abar);
    let cell = g.cell_volume();
    let vol_unit = group.unit_ball_volume();
    // Largest subtraction radius whose φ_A(B_{r₀}) patch around any support
    // node stays inside the grid.
    let (_, lam_max) = abar.eigenvalues();
    let a_norm = lam_max.sqrt();
    let det_a = gamma.det_abar.sqrt();
    let m_xy = (g.min[0] + (lo[0] as f64 - 2.0) * g.spacing(0) - g.min[0])
        .min(g.max[0] - (g.min[0] + (hi[0] + 2) as f64 * g.spacing(0)))
        .min(g.min[1] + (lo[1] as f64 - 2.0) * g.spacing(1) - g.min[1])
        .min(g.max[1] - (g.min[1] + (hi[1] + 2) as f64 * g.spacing(1)));
    let m_t = (g.min[2] + (lo[2] as f64 - 2.0) * g.spacing(2) - g.min[2])
        .min(g.max[2] - (g.min[2] + (hi[2] + 2) as f64 * g.spacing(2)));
    let r0 = (m_xy / a_norm).min(2.0 * (m_t / det_a).max(0.0).sqrt());
    if !(r0 > 0.0) {
        return Err(CarnotError::Domain(
            "no room for the singularity-subtraction patch around the support".into(),
        ));
    }
    let c_phi = -(2.0 / 3.0) * gamma.c_gamma * vol_unit * r0 * r0;

    let grad1 = crate::calculus::fd_apply_field(group, 0, f)?;
    let grad2 = crate::calculus::fd_apply_field(group, 1, f)?;
    let grad3 = crate::calculus::fd_partial(f, 2)?;
    let sources: Vec<(usize, GroupPoint, f64)> = (0..g.len())
        .filter(|&idx| f.values[idx] != 0.0)
        .map(|idx| (idx, g.point(idx), f.values[idx]))
        .collect();

    let mut values = vec![0.0; g.len()];
    values.par_iter_mut().enumerate().for_each(|(xi, out)| {
        let x = g.point(xi);
        let fx = f.values[xi];
        let gs = [grad1.values[xi], grad2.values[xi], grad3.values[xi]];
        let mut acc = 0.0;
        // Raw kernel sum over the support.
        for &(yi, y, fy) in &sources {
            if yi == xi {
                continue;
            }
            let v = gamma.pull_back(group.compose(group.inverse(y), x));
            let rho_v = group.gauge_norm(v);
            acc += fy * (-gamma.c_gamma / (rho_v * rho_v) / gamma.det_abar);
        }
        // Subtract kern·(Taylor of f at x)·φ over the local patch ρ_v < r₀
        // around x; the patch is a bounded index window, support or not.
        if fx != 0.0 || gs != [0.0, 0.0, 0.0] {
            let half_xy = a_norm * r0;
            let half_t =
                det_a * r0 * r0 / 4.0 + 0.5 * half_xy * (x.0[0].abs() + x.0[1].abs());
            let win = |a: usize, lo_v: f64, hi_v: f64| -> (usize, usize) {
                let l = (((lo_v - g.min[a]) / g.spacing(a)).floor().max(0.0)) as usize;
                let h = (((hi_v - g.min[a]) / g.spacing(a)).ceil() as usize)
                    .min(g.counts[a] - 1);
                (l, h)
            };
            let (x0, x1) = win(0, x.0[0] - half_xy, x.0[0] + half_xy);
            let (y0, y1) = win(1, x.0[1] - half_xy, x.0[1] + half_xy);
            let (t0, t1) = win(2, x.0[2] - half_t, x.0[2] + half_t);
            for ix in x0..=x1 {
                for iy in y0..=y1 {
                    for it in t0..=t1 {
                        let yi = g.index(ix, iy, it);
                        if yi == xi {
                            continue;
                        }
                        let y = g.node(ix, iy, it);
                        let w = group.compose(group.inverse(y), x);
                        let v = gamma.pull_back(w);
                        let rho_v = group.gauge_norm(v);
                        if rho_v >= r0 {
                            continue;
                        }
                        let kern = -gamma.c_gamma / (rho_v * rho_v) / gamma.det_abar;
                        let phi = (1.0 - (rho_v / r0).powi(2)).powi(2);
                        let taylor =
                            fx - w.0[0] * gs[0] - w.0[1] * gs[1] - w.0[2] * gs[2];
                        acc -= kern * taylor * phi;
                    }
                }
            }
        }
        *out = acc * cell + fx * c_phi;
    });
    SampledFunction::new(out_grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{affine, gauge_bump};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn group() -> CarnotGroup {
        CarnotGroup::heisenberg()
    }

    #[test]
    fn c_gamma_matches_closed_form() {
        // The flux of the horizontal gradient of ρ^{−2} through an enclosing
        // sphere reduces by the coarea formula to −2·6·∫_{ρ<1}(x²+y²) = −2π,
        // so c_Γ = 1/(2π).
        let g = group();
        let c = c_gamma(&g);
        let exact = 1.0 / std::f64::consts::TAU;
        assert!((c - exact).abs() / exact < 1e-6, "c_Γ = {c}, closed form {exact}");
    }

    #[test]
    fn gamma_identity_reference_values() {
        let g = group();
        let gamma = FundamentalSolution::new(&g, EllipticMatrix::identity());
        let p = GroupPoint::new(1.0, 0.0, 0.0);
        let v = gamma.eval(&g, p).unwrap();
        assert!((v + c_gamma(&g)).abs() < 1e-14); // ρ = 1 ⇒ Γ = −c_Γ
        assert!(gamma.eval(&g, GroupPoint::origin()).is_err());
    }

    #[test]
    fn gamma_homogeneity_sign_and_symmetry() {
        let g = group();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gid = FundamentalSolution::new(&g, EllipticMatrix::identity());
        for _ in 0..10_000 {
            let p = GroupPoint::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
            );
            if g.gauge_norm(p) < 1e-3 {
                continue;
            }
            let v = gid.eval(&g, p).unwrap();
            assert!(v <= 0.0);
            // Degree 2 − Q = −2.
            let v2 = gid.eval(&g, g.dilate(2.0, p).unwrap()).unwrap();
            assert!((v2 - 0.25 * v).abs() <= 1e-12 * v.abs());
            // Γ(p⁻¹) = Γ(p) for ā = I.
            let vi = gid.eval(&g, g.inverse(p)).unwrap();
            assert!((vi - v).abs() <= 1e-14 * v.abs());
        }
    }

    #[test]
    fn gamma_uniform_bound_in_mu_class() {
        let g = group();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q2 = g.homogeneous_dimension() as i32 - 2;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let abar = EllipticMatrix::random_in_class(0.5, &mut rng).unwrap();
            let gamma = FundamentalSolution::new(&g, abar);
            for _ in 0..500 {
                let p = GroupPoint::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-1.0..1.0),
                );
                let rho = g.gauge_norm(p);
                if rho < 1e-2 {
                    continue;
                }
                let v = gamma.eval(&g, p).unwrap();
                assert!(v <= 0.0, "Γ_ā must stay nonpositive");
                worst = worst.max(v.abs() * rho.powi(q2));
            }
        }
        // c(μ) for μ = 0.5; generous sanity ceiling.
        assert!(worst.is_finite() && worst < 10.0 * c_gamma(&g) / 0.25, "bound {worst}");
    }

    /// FD residual of L̄Γ_ā away from the pole drops ≈ 4× per halving of h,
    /// for the identity and for random matrices in the μ = 0.5 class.
    #[test]
    fn gamma_is_annihilated_by_model_operator() {
        let g = group();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut mats = vec![EllipticMatrix::identity()];
        for _ in 0..2 {
            mats.push(EllipticMatrix::random_in_class(0.5, &mut rng).unwrap());
        }
        for abar in mats {
            let gamma = FundamentalSolution::new(&g, abar);
            let p0 = GroupPoint::new(0.8, -0.4, 0.3);
            assert!(g.gauge_norm(p0) >= 0.5);
            let mut residuals = Vec::new();
            for h in [0.02, 0.01] {
                let grid = GridSpec::new(
                    [p0.0[0] - 4.0 * h, p0.0[1] - 4.0 * h, p0.0[2] - 4.0 * h],
                    [p0.0[0] + 4.0 * h, p0.0[1] + 4.0 * h, p0.0[2] + 4.0 * h],
                    [9, 9, 9],
                )
                .unwrap();
                let sampled =
                    SampledFunction::from_fn(grid, |p| gamma.eval(&g, p).unwrap());
                let lbar = model_apply(&g, &abar, &sampled).unwrap();
                residuals.push(lbar.at(4, 4, 4).abs());
            }
            let factor = residuals[0] / residuals[1];
            assert!(
                factor > 3.0 && factor < 5.0,
                "residuals {residuals:?}, factor {factor}"
            );
        }
    }

    #[test]
    fn model_apply_reference_values() {
        let g = group();
        let grid = GridSpec::symmetric([1.0, 1.0, 0.5], [17, 17, 17]).unwrap();
        // u = x² + y²: X₁²u = X₂²u = 2, cross terms 0 ⇒ L̄u = 4 for ā = I.
        let u = SampledFunction::from_fn(grid.clone(), |p| p.0[0] * p.0[0] + p.0[1] * p.0[1]);
        let lu = model_apply(&g, &EllipticMatrix::identity(), &u).unwrap();
        for v in &lu.values {
            assert!((v - 4.0).abs() < 1e-10);
        }
        // Affine functions are annihilated for any ā.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let abar = EllipticMatrix::random_in_class(0.5, &mut rng).unwrap();
        let aff = SampledFunction::from_fn(grid, |p| 3.0 * p.0[0] - 2.0 * p.0[1] + 0.7);
        let laff = model_apply(&g, &abar, &aff).unwrap();
        for v in &laff.values {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn model_apply_matches_analytic_on_bump() {
        // FD-composed L̄ against the analytic application: O(h²) agreement,
        // i.e. the interior max error falls ≈ 4× when h halves.
        let g = group();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let abar = EllipticMatrix::random_in_class(0.5, &mut rng).unwrap();
        let u = gauge_bump(0.9, 16.0);
        let analytic = model_apply_test(&abar, &u);
        let mut errs = Vec::new();
        for n in [25usize, 49] {
            let grid = GridSpec::symmetric([1.0, 1.0, 0.3], [n, n, n]).unwrap();
            let fd = model_apply(&g, &abar, &u.sample(&grid)).unwrap();
            let mut emax = 0.0f64;
            for idx in 0..grid.len() {
                let p = grid.point(idx);
                if g.gauge_norm(p) > 0.5 {
                    continue;
                }
                emax = emax.max((fd.values[idx] - analytic.value(p)).abs());
            }
            errs.push(emax);
        }
        assert!(errs[0] / errs[1] > 2.5, "errors {errs:?}");
    }

    #[test]
    fn variable_apply_consistency() {
        let g = group();
        let grid = GridSpec::symmetric([1.0, 1.0, 0.5], [21, 21, 21]).unwrap();
        let u = SampledFunction::from_fn(grid.clone(), |p| {
            p.0[0] * p.0[0] + p.0[1] * p.0[1]
        });
        // a ≡ I recovers the model operator exactly.
        let a = CoefficientField::constant(EllipticMatrix::identity());
        let lu = variable_apply(&g, &a, &u).unwrap();
        let lbu = model_apply(&g, &EllipticMatrix::identity(), &u).unwrap();
        for (x, y) in lu.values.iter().zip(lbu.values.iter()) {
            assert_eq!(x, y);
        }
        // Scalar field multiplies pointwise: a = (1 + s)·I on u with L̄u = 4.
        let s = CoefficientField::scalar_perturbation("test", 0.3, VmoClass::Smooth, |p| {
            (p.0[0]).sin()
        })
        .unwrap();
        let lsu = variable_apply(&g, &s, &u).unwrap();
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let expect = 4.0 * (1.0 + 0.3 * p.0[0].sin());
            assert!((lsu.values[idx] - expect).abs() < 1e-9);
        }
    }

    /// |Lu − L̄u| ≤ Σ |a_ij(x) − ā_ij|·|X_iX_ju| pointwise.
    #[test]
    fn freezing_error_pointwise_bound() {
        let u = gauge_bump(0.9, 16.0);
        let grid = GridSpec::symmetric([1.0, 1.0, 0.3], [25, 25, 25]).unwrap();
        let a = CoefficientField::scalar_perturbation("osc", 0.25, VmoClass::Smooth, |p| {
            (3.0 * p.0[1]).cos()
        })
        .unwrap();
        let abar = EllipticMatrix::identity();
        let lu = variable_apply_test(&a, &u, &grid);
        let lbu_test = model_apply_test(&abar, &u);
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let lhs = (lu.values[idx] - lbu_test.value(p)).abs();
            let mut rhs = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    rhs += (a.entry(i, j, p) - abar.entries()[i][j]).abs()
                        * u.x_second(i, j, p).abs();
                }
            }
            assert!(lhs <= rhs + 1e-12, "at {p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn log_log_field_is_elliptic() {
        let g = group();
        let a = CoefficientField::log_log(&g, 0.4, 0.9).unwrap();
        let grid = GridSpec::symmetric([1.0, 1.0, 0.3], [17, 17, 17]).unwrap();
        a.validate_on(&grid).unwrap();
        assert_eq!(a.class(), VmoClass::LogLog);
        assert!((a.mu() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn potential_of_zero_is_zero() {
        let g = group();
        let grid = GridSpec::symmetric([0.5, 0.5, 0.1], [9, 9, 9]).unwrap();
        let f = SampledFunction::zeros(grid.clone());
        let u = newtonian_potential(&g, &EllipticMatrix::identity(), &f, &grid).unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    /// Far field of a mollified point mass converges to Γ itself.
    #[test]
    fn potential_far_field_matches_gamma() {
        let g = group();
        let eps = 0.1;
        let bump = gauge_bump(eps, 16.0);
        let src_ball = Ball::centered(eps).unwrap();
        let src_grid = GridSpec::for_ball(&src_ball, 1.05, [21, 21, 21]).unwrap();
        let f = bump.sample(&src_grid);
        let mass = f.integral();
        assert!(mass > 0.0);
        let abar = EllipticMatrix::identity();
        let gamma = FundamentalSolution::new(&g, abar);
        for far in [
            GroupPoint::new(1.2, 0.5, 0.4),
            GroupPoint::new(0.8, 0.0, 0.0),
            GroupPoint::new(0.0, 0.0, 0.5),
        ] {
            let u = newtonian_potential_at(&g, &abar, &f, &[far])[0] / mass;
            let exact = gamma.eval(&g, far).unwrap();
            assert!(
                (u - exact).abs() / exact.abs() < 0.02,
                "far {far}: {u} vs {exact}"
            );
        }
    }

    /// ‖L̄u − f‖₂/‖f‖₂ over the support region shrinks as the grid refines.
    #[test]
    fn potential_residual_decreases_under_refinement() {
        let g = group();
        let abar = EllipticMatrix::identity();
        let bump = gauge_bump(0.5, 16.0);
        let mut residuals = Vec::new();
        for n in [13usize, 19, 27] {
            let grid = GridSpec::symmetric([0.8, 0.8, 0.2], [n, n, n]).unwrap();
            let f = bump.sample(&grid);
            let u = newtonian_potential(&g, &abar, &f, &grid).unwrap();
            let lu = model_apply(&g, &abar, &u).unwrap();
            let ball = Ball::centered(0.45).unwrap();
            let nodes = grid.nodes_in_ball(&g, &ball);
            let mut num = 0.0;
            let mut den = 0.0;
            for &i in &nodes {
                num += (lu.values[i] - f.values[i]).powi(2);
                den += f.values[i].powi(2);
            }
            residuals.push((num / den).sqrt());
        }
        assert!(
            residuals[0] > residuals[1] && residuals[1] > residuals[2],
            "residuals {residuals:?}"
        );
    }

    #[test]
    fn potential_linearity_and_sign() {
        let g = group();
        let abar = EllipticMatrix::identity();
        let grid = GridSpec::symmetric([0.7, 0.7, 0.2], [15, 15, 15]).unwrap();
        let f1 = gauge_bump(0.4, 16.0).sample(&grid);
        let f2 = {
            let b = gauge_bump(0.3, 16.0);
            let shifted = b.left_translated(&g, GroupPoint::new(-0.2, 0.1, 0.0));
            shifted.sample(&grid)
        };
        let sum = SampledFunction::new(
            grid.clone(),
            f1.values.iter().zip(&f2.values).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let pts: Vec<GroupPoint> = vec![
            GroupPoint::new(0.3, 0.2, 0.05),
            GroupPoint::new(-0.1, 0.4, -0.02),
        ];
        let u1 = newtonian_potential_at(&g, &abar, &f1, &pts);
        let u2 = newtonian_potential_at(&g, &abar, &f2, &pts);
        let usum = newtonian_potential_at(&g, &abar, &sum, &pts);
        for k in 0..pts.len() {
            assert!((usum[k] - u1[k] - u2[k]).abs() < 1e-10 * usum[k].abs().max(1.0));
            // f ≥ 0 ⇒ u ≤ 0 since Γ ≤ 0, exactly as computed.
            assert!(u1[k] <= 0.0 && u2[k] <= 0.0);
        }
    }

    #[test]
    fn elliptic_matrix_validation() {
        let _ = group();
        assert!(EllipticMatrix::new([[1.0, 0.1], [0.2, 1.0]], 0.5).is_err());
        assert!(EllipticMatrix::new([[3.0, 0.0], [0.0, 1.0]], 0.5).is_err());
        let m = EllipticMatrix::new([[1.2, 0.3], [0.3, 0.8]], 0.5).unwrap();
        let (lo, hi) = m.eigenvalues();
        assert!(lo >= 0.5 && hi <= 2.0);
        // sqrt(ā)² = ā.
        let s = m.sqrt();
        let back = [
            [
                s[0][0] * s[0][0] + s[0][1] * s[1][0],
                s[0][0] * s[0][1] + s[0][1] * s[1][1],
            ],
            [
                s[1][0] * s[0][0] + s[1][1] * s[1][0],
                s[1][0] * s[0][1] + s[1][1] * s[1][1],
            ],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[i][j] - m.entries()[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_test_function_annihilated_analytically() {
        let u = affine(0.5, 1.0, -2.0, 0.0);
        let abar = EllipticMatrix::new([[1.1, 0.2], [0.2, 0.9]], 0.5).unwrap();
        let lu = model_apply_test(&abar, &u);
        for p in [GroupPoint::origin(), GroupPoint::new(0.3, -0.8, 0.2)] {
            assert!(lu.value(p).abs() < 1e-14);
        }
    }
}
