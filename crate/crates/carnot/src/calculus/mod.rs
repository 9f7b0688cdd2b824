//! Horizontal derivatives X_I u, Sobolev seminorms and W_X^{k,p} norms, the
//! analytic test corpus, cutoffs, and the affine normalization used by the
//! harmonic-replacement estimates.

mod corpus;

pub use corpus::{
    affine, gauge_bump, gaussian_like, harmonic_cubic, horizontal_jet, make_cutoff,
    oscillatory_bump, poly_bump, standard_corpus, xy_monomial, TestFunction,
};

use rayon::prelude::*;

use crate::error::{CarnotError, Result};
use crate::grid::SampledFunction;
use crate::group::{Ball, CarnotGroup};

/// A word I = (i₁, …, i_k) over the generators; X_I u = X_{i₁}…X_{i_k} u.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.len()
    }
}

/// All words of the given order over {0, …, q−1}.
pub fn multi_indices(order: usize, q: usize) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex(Vec::new())];
    for _ in 0..order {
        let mut next = Vec::with_capacity(out.len() * q);
        for w in &out {
            for i in 0..q {
                let mut v = w.0.clone();
                v.push(i);
                next.push(MultiIndex(v));
            }
        }
        out = next;
    }
    out
}

/// Centered second-order partial along `axis`, one-sided (still second order)
/// on the box faces.
pub fn fd_partial(f: &SampledFunction, axis: usize) -> Result<SampledFunction> {
    let g = &f.grid;
    if g.counts[axis] < 3 {
        return Err(CarnotError::Domain(format!(
            "axis {axis} has {} nodes; the difference stencil needs ≥ 3",
            g.counts[axis]
        )));
    }
    let h = g.spacing(axis);
    let stride = match axis {
        0 => g.counts[1] * g.counts[2],
        1 => g.counts[2],
        2 => 1,
        _ => unreachable!(),
    };
    let n_axis = g.counts[axis];
    let values = &f.values;
    let mut out = vec![0.0; values.len()];
    out.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let (ix, iy, it) = g.unravel(idx);
        let pos = [ix, iy, it][axis];
        *v = if pos == 0 {
            (-3.0 * values[idx] + 4.0 * values[idx + stride] - values[idx + 2 * stride])
                / (2.0 * h)
        } else if pos == n_axis - 1 {
            (3.0 * values[idx] - 4.0 * values[idx - stride] + values[idx - 2 * stride])
                / (2.0 * h)
        } else {
            (values[idx + stride] - values[idx - stride]) / (2.0 * h)
        };
    });
    Ok(SampledFunction {
        grid: g.clone(),
        values: out,
    })
}

/// X_i on a sampled field: the Euclidean partials are differenced and then
/// combined with the polynomial coefficients evaluated at each node, which
/// keeps the first-order-operator structure of the field.
pub fn fd_apply_field(
    group: &CarnotGroup,
    i: usize,
    f: &SampledFunction,
) -> Result<SampledFunction> {
    if i >= group.generators() {
        return Err(CarnotError::Domain(format!(
            "generator index {i} out of range (q = {})",
            group.generators()
        )));
    }
    let planar = fd_partial(f, i)?;
    let dt = fd_partial(f, 2)?;
    let g = &f.grid;
    let mut values = planar.values;
    values.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let p = g.point(idx);
        let b = group.field_coefficients(i, p);
        *v += b[2] * dt.values[idx];
    });
    Ok(SampledFunction {
        grid: g.clone(),
        values,
    })
}

/// X_I u by repeated differencing, innermost letter first.
pub fn fd_apply_word(
    group: &CarnotGroup,
    word: &MultiIndex,
    f: &SampledFunction,
) -> Result<SampledFunction> {
    let mut cur = f.clone();
    for &i in word.0.iter().rev() {
        cur = fd_apply_field(group, i, &cur)?;
    }
    Ok(cur)
}

/// D^k u = Σ_{|I|=k} |X_I u| as a field (k = 0 gives |u|).
pub fn fd_dk_field(group: &CarnotGroup, k: usize, f: &SampledFunction) -> Result<SampledFunction> {
    let mut sum = vec![0.0; f.values.len()];
    for word in multi_indices(k, group.generators()) {
        let w = fd_apply_word(group, &word, f)?;
        for (s, v) in sum.iter_mut().zip(w.values.iter()) {
            *s += v.abs();
        }
    }
    Ok(SampledFunction {
        grid: f.grid.clone(),
        values: sum,
    })
}

/// ‖u‖_{W_X^{k,p}} = Σ_{h≤k} ‖D^h u‖_{L^p(region)}; `region = None` means the
/// whole box.
pub fn sobolev_norm(
    group: &CarnotGroup,
    f: &SampledFunction,
    k: usize,
    p: f64,
    region: Option<&Ball>,
) -> Result<f64> {
    if p < 1.0 {
        return Err(CarnotError::Domain(format!("L^p exponent must be ≥ 1, got {p}")));
    }
    if k > 3 {
        return Err(CarnotError::Domain(format!("derivative order {k} > 3 unsupported")));
    }
    let nodes: Option<Vec<usize>> = match region {
        Some(ball) => {
            if !f.grid.contains_ball(ball) {
                return Err(CarnotError::Domain("region ball not inside the grid box".into()));
            }
            Some(f.grid.nodes_in_ball(group, ball))
        }
        None => None,
    };
    let mut total = 0.0;
    for h in 0..=k {
        let dk = fd_dk_field(group, h, f)?;
        total += match &nodes {
            Some(nodes) => dk.lp_norm_over(p, nodes)?,
            None => dk.lp_norm(p)?,
        };
    }
    Ok(total)
}

/// Max deviation of (X_iX_j − X_jX_i)u from the bracket [X_i, X_j]u over the
/// grid nodes; on H¹ the only nonzero bracket is [X₁,X₂] = ∂ₜ.
pub fn commutator_check(
    group: &CarnotGroup,
    i: usize,
    j: usize,
    u: &TestFunction,
    grid: &crate::grid::GridSpec,
) -> f64 {
    debug_assert!(i < group.generators() && j < group.generators());
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.point(idx);
            let lhs = u.x_second(i, j, p) - u.x_second(j, i, p);
            let bracket = if i == j {
                0.0
            } else if i == 0 && j == 1 {
                u.partial(2, p)
            } else {
                -u.partial(2, p)
            };
            (lhs - bracket).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Result of the affine normalization ũ = u + c₀ + Σ cᵢxᵢ.
#[derive(Debug, Clone)]
pub struct AffineNormalization {
    pub field: SampledFunction,
    pub c0: f64,
    pub c: Vec<f64>,
}

/// Choose c so that ∫_{B₄} ũ = 0 and ∫_{B_{4Λ}} X_iũ = 0: cᵢ kills the
/// gradient average on B_{4Λ} and c₀ then kills the value average on B₄.
/// Second horizontal derivatives are untouched because the correction is
/// affine in the generator coordinates.
pub fn normalize_affine(
    group: &CarnotGroup,
    u: &SampledFunction,
    lambda: f64,
) -> Result<AffineNormalization> {
    if lambda <= 1.0 {
        return Err(CarnotError::Domain(format!(
            "Poincaré dilation factor must exceed 1, got {lambda}"
        )));
    }
    let b4 = Ball::centered(4.0)?;
    let b4l = Ball::centered(4.0 * lambda)?;
    if !u.grid.contains_ball(&b4l) {
        return Err(CarnotError::Domain(
            "normalize_affine needs B(0, 4Λ) inside the grid box".into(),
        ));
    }
    let nodes4 = u.grid.nodes_in_ball(group, &b4);
    let nodes4l = u.grid.nodes_in_ball(group, &b4l);
    let q = group.generators();
    let mut c = Vec::with_capacity(q);
    for i in 0..q {
        let xi_u = fd_apply_field(group, i, u)?;
        c.push(-xi_u.mean_over(&nodes4l)?);
    }
    // Discrete means of the coordinate functions over B₄ (they vanish only up
    // to quadrature asymmetry, so they are measured, not assumed).
    let mut c0 = -u.mean_over(&nodes4)?;
    for (i, ci) in c.iter().enumerate() {
        let mean_xi = nodes4
            .iter()
            .map(|&idx| u.grid.point(idx).0[i])
            .sum::<f64>()
            / nodes4.len() as f64;
        c0 -= ci * mean_xi;
    }
    let mut values = u.values.clone();
    values.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let p = u.grid.point(idx);
        let mut corr = c0;
        for (i, ci) in c.iter().enumerate() {
            corr += ci * p.0[i];
        }
        *v += corr;
    });
    Ok(AffineNormalization {
        field: SampledFunction {
            grid: u.grid.clone(),
            values,
        },
        c0,
        c,
    })
}
