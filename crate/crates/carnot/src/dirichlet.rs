//! Discrete weak solutions of L̄h = g on gauge balls: the harmonic
//! replacement used throughout the estimate chain, plus the maximum-principle
//! check.
//!
//! The discretization is the divergence-form energy
//!
//!   E(u) = ½ ∫ Σ ā_ij X_j u X_i u + ∫ g u,
//!
//! with the horizontal derivatives realized by one-sided differences
//! (forward and backward, averaged), the polynomial field coefficients
//! evaluated at the node. Minimizing E over the interior nodes of the
//! staircase ball with pinned exterior values is exactly the weak
//! formulation, the resulting operator is symmetric positive definite, and
//! one-sided differencing avoids the odd–even decoupling a centered stencil
//! would produce. The linear solve is Jacobi-preconditioned conjugate
//! gradients with a relative-residual stop; energy descent is tracked and
//! reported.

use rayon::prelude::*;

use crate::calculus::TestFunction;
use crate::error::{CarnotError, Result};
use crate::grid::{det_dot, GridSpec, SampledFunction};
use crate::group::{Ball, CarnotGroup};
use crate::model::EllipticMatrix;

/// Iteration controls for the energy minimization.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coarse-to-fine continuation depth: the problem is first solved on a
    /// 2×-coarser grid (grids have odd node counts, so coarse nodes are exact
    /// subsamples) and interpolated as the initial guess. 0 disables. The
    /// convergence criterion stays relative to the cold-start residual.
    pub nested_levels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 10_000,
            nested_levels: 2,
        }
    }
}

/// A Dirichlet problem on the staircase discretization of a gauge ball:
/// interior nodes are those with d(center, ·) < r; everything else is pinned
/// to the boundary data.
#[derive(Debug, Clone)]
pub struct DiscreteDirichletProblem {
    pub ball: Ball,
    pub abar: EllipticMatrix,
    /// Boundary data sampled on the full grid (values inside the ball are
    /// used only as the initial guess).
    pub boundary: SampledFunction,
    /// Right-hand side g; `None` means g ≡ 0.
    pub rhs: Option<SampledFunction>,
}

/// Solve outcome bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub energy_monotone: bool,
    pub interior_nodes: usize,
}

/// Matrix-free application of the energy Hessian on a fixed grid.
pub struct DirichletOperator<'a> {
    group: &'a CarnotGroup,
    grid: GridSpec,
    abar: [[f64; 2]; 2],
    mask: Vec<bool>,
    cell: f64,
    /// t-coefficients of the generators at every node: c₁ = −y/2, c₂ = x/2.
    coeff_t: [Vec<f64>; 2],
}

impl<'a> DirichletOperator<'a> {
    pub fn new(group: &'a CarnotGroup, grid: GridSpec, abar: &EllipticMatrix, ball: &Ball) -> Result<Self> {
        if !grid.contains_ball(ball) {
            return Err(CarnotError::Domain("ball not inside the grid box".into()));
        }
        // The smallest ball diameter must be resolved by ≥ 24 cells.
        let r = ball.radius;
        let extents = [2.0 * r, 2.0 * r, r * r / 2.0];
        for a in 0..3 {
            if extents[a] / grid.spacing(a) < 24.0 {
                return Err(CarnotError::Domain(format!(
                    "axis {a} resolves the ball with {:.1} cells; need ≥ 24",
                    extents[a] / grid.spacing(a)
                )));
            }
        }
        let mut mask = vec![false; grid.len()];
        for idx in grid.nodes_in_ball(group, ball) {
            mask[idx] = true;
        }
        // Interior nodes must keep the one-sided stencil inside the grid.
        let counts = grid.counts;
        for idx in 0..grid.len() {
            if mask[idx] {
                let (ix, iy, it) = grid.unravel(idx);
                if ix == 0
                    || iy == 0
                    || it == 0
                    || ix + 1 >= counts[0]
                    || iy + 1 >= counts[1]
                    || it + 1 >= counts[2]
                {
                    mask[idx] = false;
                }
            }
        }
        let cell = grid.cell_volume();
        let coeff = |i: usize| -> Vec<f64> {
            (0..grid.len())
                .map(|idx| group.field_coefficients(i, grid.point(idx))[2])
                .collect()
        };
        let coeff_t = [coeff(0), coeff(1)];
        Ok(DirichletOperator {
            group,
            grid,
            abar: *abar.entries(),
            mask,
            cell,
            coeff_t,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn interior(&self) -> &[bool] {
        &self.mask
    }

    /// Forward (+1) or backward (−1) horizontal difference field X_i u.
    /// Slab-parallel over the leading index; the t stride is 1 so the inner
    /// loop walks contiguous memory.
    fn difference(&self, u: &[f64], i: usize, dir: i64, out: &mut [f64]) {
        let g = &self.grid;
        let (hx, ht) = (g.spacing(i), g.spacing(2));
        let [nx, ny, nt] = g.counts;
        let stride_i = if i == 0 { ny * nt } else { nt };
        let coeff = &self.coeff_t[i];
        let slab = ny * nt;
        out.par_chunks_mut(slab).enumerate().for_each(|(ix, chunk)| {
            for iy in 0..ny {
                let row = iy * nt;
                let pos_i = if i == 0 { ix } else { iy };
                let n_i = if i == 0 { nx } else { ny };
                let ok_i = if dir > 0 { pos_i + 1 < n_i } else { pos_i > 0 };
                for it in 0..nt {
                    let local = row + it;
                    let idx = ix * slab + local;
                    let ok_t = if dir > 0 { it + 1 < nt } else { it > 0 };
                    chunk[local] = if ok_i && ok_t {
                        let (di, dt) = if dir > 0 {
                            (u[idx + stride_i] - u[idx], u[idx + 1] - u[idx])
                        } else {
                            (u[idx] - u[idx - stride_i], u[idx] - u[idx - 1])
                        };
                        di / hx + coeff[idx] * dt / ht
                    } else {
                        0.0
                    };
                }
            }
        });
    }

    /// Transpose of `difference` with the same direction:
    /// v(m) = Σ_n q(n) ∂w(n)/∂u(m), three stencil neighbors feeding m.
    fn difference_transpose(&self, q: &[f64], i: usize, dir: i64, out: &mut [f64]) {
        let g = &self.grid;
        let (hx, ht) = (g.spacing(i), g.spacing(2));
        let [nx, ny, nt] = g.counts;
        let stride_i = if i == 0 { ny * nt } else { nt };
        let coeff = &self.coeff_t[i];
        let slab = ny * nt;
        let dirf = dir as f64;
        out.par_chunks_mut(slab).enumerate().for_each(|(ix, chunk)| {
            for iy in 0..ny {
                let row = iy * nt;
                let pos_i = if i == 0 { ix } else { iy };
                let n_i = if i == 0 { nx } else { ny };
                // `defined` means the (forward/backward) stencil of a node
                // stays inside the grid on both involved axes.
                let def_i_here = if dir > 0 { pos_i + 1 < n_i } else { pos_i > 0 };
                // Shifted neighbor m ∓ e_i exists and is defined.
                let nb_i = if dir > 0 {
                    (pos_i > 0).then(|| pos_i - 1).map(|p| p + 1 < n_i)
                } else {
                    (pos_i + 1 < n_i).then(|| pos_i + 1).map(|p| p > 0)
                };
                let nb_i_ok = nb_i == Some(true);
                for it in 0..nt {
                    let local = row + it;
                    let idx = ix * slab + local;
                    let def_t_here = if dir > 0 { it + 1 < nt } else { it > 0 };
                    let mut acc = 0.0;
                    if def_i_here && def_t_here {
                        acc -= dirf * q[idx] * (1.0 / hx + coeff[idx] / ht);
                    }
                    if nb_i_ok && def_t_here {
                        let nidx = if dir > 0 { idx - stride_i } else { idx + stride_i };
                        acc += dirf * q[nidx] / hx;
                    }
                    // Neighbor m ∓ e_t: its own t-stencil must be defined.
                    let nb_t_ok = if dir > 0 {
                        it > 0 && it - 1 + 1 < nt
                    } else {
                        it + 1 < nt && it + 1 > 0
                    };
                    if nb_t_ok && def_i_here {
                        let nidx = if dir > 0 { idx - 1 } else { idx + 1 };
                        acc += dirf * q[nidx] * coeff[nidx] / ht;
                    }
                    chunk[local] = acc;
                }
            }
        });
    }

    /// A·u: gradient of the quadratic energy, masked to interior nodes.
    pub fn apply(&self, u: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for dir in [1i64, -1] {
            self.difference(u, 0, dir, &mut scratch.w1);
            self.difference(u, 1, dir, &mut scratch.w2);
            // Flux q_i = Σ_j ā_ij w_j.
            let a = self.abar;
            scratch
                .q1
                .par_iter_mut()
                .zip(scratch.q2.par_iter_mut())
                .zip(scratch.w1.par_iter().zip(scratch.w2.par_iter()))
                .for_each(|((q1, q2), (w1, w2))| {
                    *q1 = a[0][0] * w1 + a[0][1] * w2;
                    *q2 = a[1][0] * w1 + a[1][1] * w2;
                });
            self.difference_transpose(&scratch.q1, 0, dir, &mut scratch.t1);
            self.difference_transpose(&scratch.q2, 1, dir, &mut scratch.t2);
            out.par_iter_mut().enumerate().for_each(|(idx, v)| {
                *v += 0.5 * self.cell * (scratch.t1[idx] + scratch.t2[idx]);
            });
        }
        out.par_iter_mut().enumerate().for_each(|(idx, v)| {
            if !self.mask[idx] {
                *v = 0.0;
            }
        });
    }

    /// Diagonal of A for Jacobi preconditioning.
    pub fn jacobi_diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let counts = g.counts;
        let a = self.abar;
        let (hx, hy, ht) = (g.spacing(0), g.spacing(1), g.spacing(2));
        let quad = |d1: f64, d2: f64| a[0][0] * d1 * d1 + 2.0 * a[0][1] * d1 * d2 + a[1][1] * d2 * d2;
        (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if !self.mask[idx] {
                    return 1.0;
                }
                let (ix, iy, it) = g.unravel(idx);
                let mut diag = 0.0;
                for dir in [1i64, -1] {
                    let ok = |p: usize, axis: usize| {
                        if dir > 0 {
                            p + 1 < counts[axis]
                        } else {
                            p > 0
                        }
                    };
                    // n = m.
                    if ok(ix, 0) || true {
                        let p = g.point(idx);
                        let c1 = self.group.field_coefficients(0, p)[2];
                        let c2 = self.group.field_coefficients(1, p)[2];
                        let d1 = if ok(ix, 0) && ok(it, 2) { 1.0 / hx + c1 / ht } else { 0.0 };
                        let d2 = if ok(iy, 1) && ok(it, 2) { 1.0 / hy + c2 / ht } else { 0.0 };
                        diag += quad(d1, d2);
                    }
                    // n = m ∓ e_x and m ∓ e_y.
                    let shifted_ok = |p: usize, axis: usize| {
                        if dir > 0 {
                            p > 0
                        } else {
                            p + 1 < counts[axis]
                        }
                    };
                    if shifted_ok(ix, 0) && ok(it, 2) {
                        diag += quad(1.0 / hx, 0.0);
                    }
                    if shifted_ok(iy, 1) && ok(it, 2) {
                        diag += quad(0.0, 1.0 / hy);
                    }
                    // n = m ∓ e_t.
                    if shifted_ok(it, 2) {
                        let nt = if dir > 0 { it - 1 } else { it + 1 };
                        let p = g.node(ix, iy, nt);
                        let c1 = self.group.field_coefficients(0, p)[2];
                        let c2 = self.group.field_coefficients(1, p)[2];
                        diag += quad(c1 / ht, c2 / ht);
                    }
                }
                (0.5 * self.cell * diag).max(1e-300)
            })
            .collect()
    }

    /// ½ ∫ Σ ā_ij X_j u X_i u + ∫_{interior} g u, the discrete energy.
    pub fn energy(&self, u: &[f64], rhs: Option<&[f64]>) -> f64 {
        let n = self.grid.len();
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let mut quad = 0.0;
        for dir in [1i64, -1] {
            self.difference(u, 0, dir, &mut w1);
            self.difference(u, 1, dir, &mut w2);
            let a = self.abar;
            let mut s = 0.0;
            for idx in 0..n {
                s += a[0][0] * w1[idx] * w1[idx]
                    + 2.0 * a[0][1] * w1[idx] * w2[idx]
                    + a[1][1] * w2[idx] * w2[idx];
            }
            quad += 0.5 * 0.5 * self.cell * s;
        }
        let mut lin = 0.0;
        if let Some(g) = rhs {
            for idx in 0..n {
                if self.mask[idx] {
                    lin += g[idx] * u[idx];
                }
            }
            lin *= self.cell;
        }
        quad + lin
    }
}

/// Reusable buffers for `DirichletOperator::apply`.
pub struct Scratch {
    w1: Vec<f64>,
    w2: Vec<f64>,
    q1: Vec<f64>,
    q2: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Scratch {
            w1: vec![0.0; n],
            w2: vec![0.0; n],
            q1: vec![0.0; n],
            q2: vec![0.0; n],
            t1: vec![0.0; n],
            t2: vec![0.0; n],
        }
    }
}

/// Minimize the discrete energy: Jacobi-preconditioned conjugate gradients on
/// the interior unknowns, boundary data pinned, relative-residual stop.
pub fn solve_dirichlet(
    group: &CarnotGroup,
    prob: &DiscreteDirichletProblem,
    cfg: &SolverConfig,
) -> Result<(SampledFunction, SolveDiagnostics)> {
    let grid = prob.boundary.grid.clone();
    if let Some(rhs) = &prob.rhs {
        if rhs.grid != grid {
            return Err(CarnotError::Structural(
                "rhs and boundary data live on different grids".into(),
            ));
        }
    }
    let op = DirichletOperator::new(group, grid.clone(), &prob.abar, &prob.ball)?;
    let n = grid.len();
    let interior_nodes = op.mask.iter().filter(|m| **m).count();
    if interior_nodes == 0 {
        return Err(CarnotError::Domain("no interior nodes in the ball".into()));
    }

    // b = −cell·g − A·u_bc on the interior.
    let mut u = prob.boundary.values.clone();
    let mut scratch = Scratch::new(n);
    let mut b = vec![0.0; n];
    op.apply(&u, &mut b, &mut scratch);
    for v in b.iter_mut() {
        *v = -*v;
    }
    if let Some(rhs) = &prob.rhs {
        let cell = grid.cell_volume();
        for idx in 0..n {
            if op.mask[idx] {
                b[idx] -= cell * rhs.values[idx];
            }
        }
    }

    let diag = op.jacobi_diagonal();
    let mut x = vec![0.0; n]; // interior correction, zero at the boundary
    let mut r = b.clone();
    let mut ap = vec![0.0; n];
    let r0_norm = det_dot(&r, &r).sqrt();
    let rhs_values = prob.rhs.as_ref().map(|f| f.values.as_slice());
    let mut diagnostics = SolveDiagnostics {
        iterations: 0,
        residual: 0.0,
        energy: 0.0,
        energy_monotone: true,
        interior_nodes,
    };
    if r0_norm == 0.0 {
        // Boundary data already solves the discrete problem.
        diagnostics.energy = op.energy(&u, rhs_values);
        let sol = SampledFunction::new(grid, u)?;
        return Ok((sol, diagnostics));
    }

    // Coarse-to-fine continuation: interpolate a 2×-coarser solution as the
    // warm start. The stop criterion stays relative to the cold residual.
    if cfg.nested_levels > 0 {
        if let Some(coarse) = coarse_solution(group, prob, cfg)? {
            let warm = prolong(&coarse, &grid);
            x.par_iter_mut()
                .enumerate()
                .for_each(|(idx, xv)| {
                    if op.mask[idx] {
                        *xv = warm[idx] - u[idx];
                    }
                });
            op.apply(&x, &mut ap, &mut scratch);
            r.par_iter_mut()
                .zip(b.par_iter().zip(ap.par_iter()))
                .for_each(|(r, (b, ax))| *r = b - ax);
        }
    }

    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    mask_zero(&mut z, &op.mask);
    let mut p = z.clone();
    let mut rz = det_dot(&r, &z);
    let mut converged = false;
    for it in 0..cfg.max_iterations {
        op.apply(&p, &mut ap, &mut scratch);
        let pap = det_dot(&p, &ap);
        if pap <= 0.0 {
            return Err(CarnotError::NoConvergence {
                iterations: it,
                residual: det_dot(&r, &r).sqrt() / r0_norm,
            });
        }
        let alpha = rz / pap;
        x.par_iter_mut()
            .zip(r.par_iter_mut())
            .zip(p.par_iter().zip(ap.par_iter()))
            .for_each(|((x, r), (p, ap))| {
                *x += alpha * p;
                *r -= alpha * ap;
            });
        diagnostics.iterations = it + 1;
        let rel = det_dot(&r, &r).sqrt() / r0_norm;
        diagnostics.residual = rel;
        // Each step lowers the energy by exactly (r·z)²/(2 p·Ap); descent is
        // equivalent to positivity of the curvature term, checked above.
        diagnostics.energy_monotone &= pap > 0.0 && alpha.is_finite();
        if rel <= cfg.tolerance {
            converged = true;
            break;
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(diag.par_iter().zip(op.mask.par_iter())))
            .for_each(|(z, (r, (d, m)))| {
                *z = if *m { r / d } else { 0.0 };
            });
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| {
            *p = z + beta * *p;
        });
    }
    if !converged {
        return Err(CarnotError::NoConvergence {
            iterations: diagnostics.iterations,
            residual: diagnostics.residual,
        });
    }
    for idx in 0..n {
        u[idx] += x[idx];
    }
    diagnostics.energy = op.energy(&u, rhs_values);
    let sol = SampledFunction::new(grid, u)?;
    Ok((sol, diagnostics))
}

fn mask_zero(v: &mut [f64], mask: &[bool]) {
    for (x, m) in v.iter_mut().zip(mask) {
        if !m {
            *x = 0.0;
        }
    }
}

/// Harmonic replacement: solve L̄h = 0 in the ball with h = u on the
/// staircase boundary, u given analytically and sampled on a ball-fitted
/// grid with `counts` nodes per axis.
pub fn harmonic_replacement(
    group: &CarnotGroup,
    u: &TestFunction,
    ball: &Ball,
    abar: &EllipticMatrix,
    counts: [usize; 3],
    cfg: &SolverConfig,
) -> Result<(SampledFunction, SolveDiagnostics)> {
    let grid = GridSpec::for_ball(ball, 1.05, counts)?;
    let boundary = u.sample(&grid);
    let prob = DiscreteDirichletProblem {
        ball: *ball,
        abar: *abar,
        boundary,
        rhs: None,
    };
    solve_dirichlet(group, &prob, cfg)
}

/// Outcome of the discrete maximum-principle check for g = 0 solves.
#[derive(Debug, Clone, Copy)]
pub struct MaxPrincipleReport {
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub interior_min: f64,
    pub interior_max: f64,
    /// max(0, interior overshoot beyond the boundary range).
    pub violation: f64,
}

/// Check min_∂ ≤ h ≤ max_∂ on the interior, where the boundary is the active
/// ring of pinned nodes adjacent to the interior.
pub fn max_principle_check(
    group: &CarnotGroup,
    h: &SampledFunction,
    ball: &Ball,
    abar: &EllipticMatrix,
) -> Result<MaxPrincipleReport> {
    let op = DirichletOperator::new(group, h.grid.clone(), abar, ball)?;
    let g = &h.grid;
    let counts = g.counts;
    let mut bmin = f64::INFINITY;
    let mut bmax = f64::NEG_INFINITY;
    let mut imin = f64::INFINITY;
    let mut imax = f64::NEG_INFINITY;
    for idx in 0..g.len() {
        if op.mask[idx] {
            imin = imin.min(h.values[idx]);
            imax = imax.max(h.values[idx]);
        } else {
            // Active ring: a pinned node touching an interior one.
            let (ix, iy, it) = g.unravel(idx);
            let mut touches = false;
            'outer: for (axis, pos, count) in [(0usize, ix, counts[0]), (1, iy, counts[1]), (2, it, counts[2])] {
                let stride = match axis {
                    0 => counts[1] * counts[2],
                    1 => counts[2],
                    _ => 1,
                };
                if pos + 1 < count && op.mask[idx + stride] {
                    touches = true;
                    break 'outer;
                }
                if pos > 0 && op.mask[idx - stride] {
                    touches = true;
                    break 'outer;
                }
            }
            if touches {
                bmin = bmin.min(h.values[idx]);
                bmax = bmax.max(h.values[idx]);
            }
        }
    }
    if !imin.is_finite() || !bmin.is_finite() {
        return Err(CarnotError::Domain("ball has no interior or no boundary ring".into()));
    }
    Ok(MaxPrincipleReport {
        boundary_min: bmin,
        boundary_max: bmax,
        interior_min: imin,
        interior_max: imax,
        violation: (imax - bmax).max(bmin - imin).max(0.0),
    })
}

/// Convenience: the discrete energy of a sampled field under the problem's
/// quadratic form (Dirichlet-principle comparisons).
pub fn dirichlet_energy(
    group: &CarnotGroup,
    field: &SampledFunction,
    ball: &Ball,
    abar: &EllipticMatrix,
) -> Result<f64> {
    let op = DirichletOperator::new(group, field.grid.clone(), abar, ball)?;
    Ok(op.energy(&field.values, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::gauge_bump;
    use crate::group::GroupPoint;
    use crate::model::FundamentalSolution;

    fn group() -> CarnotGroup {
        CarnotGroup::heisenberg()
    }

    fn unit_problem(
        g: &CarnotGroup,
        data: impl Fn(GroupPoint) -> f64 + Sync,
        n: usize,
    ) -> DiscreteDirichletProblem {
        let ball = Ball::centered(1.0).unwrap();
        let grid = GridSpec::for_ball(&ball, 1.05, [n, n, n]).unwrap();
        let _ = g;
        DiscreteDirichletProblem {
            ball,
            abar: EllipticMatrix::identity(),
            boundary: SampledFunction::from_fn(grid, data),
            rhs: None,
        }
    }

    #[test]
    fn constant_data_reproduced_exactly() {
        let g = group();
        let prob = unit_problem(&g, |_| 5.0, 29);
        let (h, diag) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
        assert_eq!(diag.iterations, 0);
        assert!(h.values.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn affine_data_reproduced_to_tolerance() {
        let g = group();
        let prob = unit_problem(&g, |p| 2.0 * p.0[0] - 3.0 * p.0[1] + 0.5, 29);
        let (h, diag) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
        assert!(diag.residual <= 1e-8);
        for idx in 0..h.grid.len() {
            let p = h.grid.point(idx);
            let exact = 2.0 * p.0[0] - 3.0 * p.0[1] + 0.5;
            assert!(
                (h.values[idx] - exact).abs() < 1e-8,
                "node {p}: {} vs {exact}",
                h.values[idx]
            );
        }
    }

    #[test]
    fn gamma_boundary_data_interior_error_shrinks() {
        let g = group();
        let abar = EllipticMatrix::identity();
        let gamma = FundamentalSolution::new(&g, abar);
        let pole = GroupPoint::new(1.6, 0.4, 0.2);
        let data = |p: GroupPoint| {
            gamma
                .eval(&g, g.compose(g.inverse(pole), p))
                .expect("pole outside the ball")
        };
        let mut errs = Vec::new();
        for n in [29usize, 41, 57] {
            let prob = unit_problem(&g, data, n);
            let (h, _) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
            let inner = Ball::centered(0.6).unwrap();
            let nodes = h.grid.nodes_in_ball(&g, &inner);
            let mut emax = 0.0f64;
            for idx in nodes {
                emax = emax.max((h.values[idx] - data(h.grid.point(idx))).abs());
            }
            errs.push(emax);
        }
        assert!(
            errs[0] > errs[1] && errs[1] > errs[2],
            "interior errors {errs:?}"
        );
    }

    #[test]
    fn harmonic_data_is_fixed_point() {
        // u = xy is L̄-harmonic for ā = I; the replacement must return it up
        // to discretization error.
        let g = group();
        let u = crate::calculus::xy_monomial();
        let ball = Ball::centered(1.0).unwrap();
        let (h, _) = harmonic_replacement(
            &g,
            &u,
            &ball,
            &EllipticMatrix::identity(),
            [33, 33, 33],
            &SolverConfig::default(),
        )
        .unwrap();
        let mut emax = 0.0f64;
        for idx in 0..h.grid.len() {
            let p = h.grid.point(idx);
            emax = emax.max((h.values[idx] - u.value(p)).abs());
        }
        assert!(emax < 5e-3, "deviation from harmonic data {emax}");
    }

    #[test]
    fn zero_boundary_bump_inside_gives_zero() {
        // Boundary data is the restriction of a bump supported strictly
        // inside the ball: the trace vanishes, so h ≡ 0.
        let g = group();
        let bump = gauge_bump(0.5, 16.0);
        let ball = Ball::centered(1.0).unwrap();
        let grid = GridSpec::for_ball(&ball, 1.05, [29, 29, 29]).unwrap();
        let boundary = SampledFunction::from_fn(grid, |p| {
            // Only the exterior trace matters; zero it inside the ball to
            // mimic h = u|∂B with u supported inside.
            if g.gauge_norm(p) < 1.0 {
                0.0
            } else {
                bump.value(p)
            }
        });
        let prob = DiscreteDirichletProblem {
            ball,
            abar: EllipticMatrix::identity(),
            boundary,
            rhs: None,
        };
        let (h, _) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
        assert!(h.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn max_principle_on_affine_and_gamma_data() {
        let g = group();
        let abar = EllipticMatrix::identity();
        for n in [29usize, 41] {
            let prob = unit_problem(&g, |p| p.0[0], n);
            let (h, _) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
            let report = max_principle_check(&g, &h, &prob.ball, &abar).unwrap();
            assert!(report.violation <= 1e-8, "affine violation {report:?}");
        }
        let gamma = FundamentalSolution::new(&g, abar);
        let pole = GroupPoint::new(1.5, -0.5, 0.1);
        let prob = unit_problem(
            &g,
            |p| gamma.eval(&g, g.compose(g.inverse(pole), p)).unwrap(),
            33,
        );
        let (h, _) = solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap();
        let report = max_principle_check(&g, &h, &prob.ball, &abar).unwrap();
        assert!(report.violation <= 1e-6, "Γ-data violation {report:?}");
    }

    #[test]
    fn dirichlet_principle_energy_comparison() {
        // The replacement minimizes the energy among fields with the same
        // boundary values, so E(h) ≤ E(u).
        let g = group();
        let u = gauge_bump(1.3, 16.0);
        let ball = Ball::centered(1.0).unwrap();
        let abar = EllipticMatrix::identity();
        let (h, _) = harmonic_replacement(&g, &u, &ball, &abar, [33, 33, 33], &SolverConfig::default())
            .unwrap();
        let e_h = dirichlet_energy(&g, &h, &ball, &abar).unwrap();
        let e_u = dirichlet_energy(&g, &u.sample(&h.grid), &ball, &abar).unwrap();
        assert!(e_h <= e_u + 1e-12, "E(h) = {e_h} vs E(u) = {e_u}");
    }

    #[test]
    fn comparison_principle_for_ordered_sources() {
        // g₁ ≤ g₂ with equal boundary data ⇒ h₁ ≥ h₂ (L̄w = −f convention).
        let g = group();
        let ball = Ball::centered(1.0).unwrap();
        let grid = GridSpec::for_ball(&ball, 1.05, [29, 29, 29]).unwrap();
        let boundary = SampledFunction::zeros(grid.clone());
        let bump = gauge_bump(0.8, 16.0);
        let g1 = bump.sample(&grid);
        let g2 = SampledFunction::new(
            grid.clone(),
            g1.values.iter().map(|v| v + 0.2 * v.abs() + 0.01).collect(),
        )
        .unwrap();
        let solve = |rhs: SampledFunction| {
            let prob = DiscreteDirichletProblem {
                ball,
                abar: EllipticMatrix::identity(),
                boundary: boundary.clone(),
                rhs: Some(rhs),
            };
            solve_dirichlet(&g, &prob, &SolverConfig::default()).unwrap().0
        };
        let h1 = solve(g1);
        let h2 = solve(g2);
        for (a, b) in h1.values.iter().zip(h2.values.iter()) {
            assert!(*a >= b - 1e-9, "comparison failed: {a} < {b}");
        }
    }

    #[test]
    fn linearity_in_data_and_source() {
        let g = group();
        let ball = Ball::centered(1.0).unwrap();
        let grid = GridSpec::for_ball(&ball, 1.05, [29, 29, 29]).unwrap();
        let d1 = SampledFunction::from_fn(grid.clone(), |p| p.0[0]);
        let d2 = SampledFunction::from_fn(grid.clone(), |p| p.0[1] * p.0[1]);
        let s1 = gauge_bump(0.7, 16.0).sample(&grid);
        let solve = |boundary: SampledFunction, rhs: Option<SampledFunction>| {
            let prob = DiscreteDirichletProblem {
                ball,
                abar: EllipticMatrix::identity(),
                boundary,
                rhs,
            };
            solve_dirichlet(
                &g,
                &prob,
                &SolverConfig {
                    tolerance: 1e-11,
                    max_iterations: 20_000,
                },
            )
            .unwrap()
            .0
        };
        let h1 = solve(d1.clone(), Some(s1.clone()));
        let h2 = solve(d2.clone(), None);
        let combined = solve(
            SampledFunction::new(
                grid.clone(),
                d1.values
                    .iter()
                    .zip(&d2.values)
                    .map(|(a, b)| a + 2.0 * b)
                    .collect(),
            )
            .unwrap(),
            Some(s1.clone()),
        );
        let scale = h1
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for idx in 0..grid.len() {
            let expect = h1.values[idx] + 2.0 * h2.values[idx];
            assert!(
                (combined.values[idx] - expect).abs() < 1e-7 * scale,
                "linearity broke at {idx}"
            );
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = group();
        let prob = unit_problem(&g, |_| 0.0, 15);
        assert!(matches!(
            solve_dirichlet(&g, &prob, &SolverConfig::default()),
            Err(CarnotError::Domain(_))
        ));
    }
}
