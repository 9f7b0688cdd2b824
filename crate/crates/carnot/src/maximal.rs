//! Ball averages, the Hardy–Littlewood maximal operator, the local sharp
//! maximal operator over a domain chain, VMO moduli and the empirical local
//! Fefferman–Stein ratio.
//!
//! The supremum over "all d-balls" is discretized to a finite lattice of
//! centers (grid nodes at a fixed stride) and radii (a geometric sequence).
//! Lattice maximal values are therefore certified lower bounds of the true
//! suprema, monotone under lattice refinement. Balls whose bounding box
//! leaves the grid are rejected rather than clipped.

use rayon::prelude::*;

use crate::error::{CarnotError, Result};
use crate::grid::SampledFunction;
use crate::group::{Ball, CarnotGroup, GroupPoint};

/// Strictly increasing chain Ω₁ ⊂ Ω₂ ⊂ … of concentric gauge balls
/// Ω_m = B(0, r₀(1 + m/10)) with margins ε_m = r₀/40, so that the 2ε_m
/// enlargement of Ω_m stays inside Ω_{m+1} with room to spare.
#[derive(Debug, Clone)]
pub struct DomainChain {
    r0: f64,
    levels: usize,
}

impl DomainChain {
    pub fn new(r0: f64, levels: usize) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(CarnotError::Domain(format!("chain base radius {r0} must be positive")));
        }
        if levels < 2 {
            return Err(CarnotError::Domain("a chain needs at least two levels".into()));
        }
        Ok(DomainChain { r0, levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn omega(&self, m: usize) -> Result<Ball> {
        if m == 0 || m > self.levels {
            return Err(CarnotError::Domain(format!(
                "chain level {m} out of range 1..={}",
                self.levels
            )));
        }
        Ball::centered(self.r0 * (1.0 + m as f64 / 10.0))
    }

    pub fn epsilon(&self, _m: usize) -> f64 {
        self.r0 / 40.0
    }

    /// Check {x : d(x,y) < 2ε_m for some y ∈ Ω_m} ⊂ Ω_{m+1} by sampling
    /// points y on the boundary sphere of Ω_m and x on spheres of radius
    /// 2ε_m around them. Returns the worst margin ρ(Ω_{m+1}) − ρ(x): the
    /// nesting holds iff it stays positive.
    pub fn nesting_margin(&self, group: &CarnotGroup, m: usize, samples: usize) -> Result<f64> {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let om = self.omega(m)?;
        let om_next = self.omega(m + 1)?;
        let eps = self.epsilon(m);
        let mut rng = ChaCha8Rng::seed_from_u64(97 + m as u64);
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let y = random_gauge_sphere_point(group, &mut rng, om.radius);
            let dir = random_gauge_sphere_point(group, &mut rng, 2.0 * eps);
            let x = group.compose(y, dir);
            worst = worst.min(om_next.radius - group.gauge_norm(x));
        }
        Ok(worst)
    }
}

fn random_gauge_sphere_point(
    group: &CarnotGroup,
    rng: &mut impl rand::Rng,
    radius: f64,
) -> GroupPoint {
    loop {
        let p = GroupPoint::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-0.25..0.25),
        );
        let rho = group.gauge_norm(p);
        if rho > 1e-6 {
            return group
                .dilate(radius / rho, p)
                .expect("positive dilation factor");
        }
    }
}

/// Finite family of ball centers and radii standing in for "all d-balls".
#[derive(Debug, Clone)]
pub struct BallLattice {
    /// Center stride in grid nodes per axis.
    pub center_stride: usize,
    /// Radii, ascending.
    pub radii: Vec<f64>,
}

impl BallLattice {
    /// Geometric radius ladder r_min, r_min·ratio, … capped at r_max.
    pub fn geometric(r_min: f64, r_max: f64, ratio: f64, center_stride: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max >= r_min && ratio > 1.0) {
            return Err(CarnotError::Domain(format!(
                "bad lattice parameters: r_min {r_min}, r_max {r_max}, ratio {ratio}"
            )));
        }
        if center_stride == 0 {
            return Err(CarnotError::Domain("center stride must be ≥ 1".into()));
        }
        let mut radii = Vec::new();
        let mut r = r_min;
        while r < r_max * (1.0 + 1e-12) {
            radii.push(r.min(r_max));
            r *= ratio;
        }
        if *radii.last().unwrap() < r_max * (1.0 - 1e-9) {
            radii.push(r_max);
        }
        Ok(BallLattice {
            center_stride,
            radii,
        })
    }

    /// Halve the stride and interleave radii: a strictly larger family.
    pub fn refined(&self) -> BallLattice {
        let mut radii = Vec::with_capacity(self.radii.len() * 2);
        for w in self.radii.windows(2) {
            radii.push(w[0]);
            radii.push((w[0] * w[1]).sqrt());
        }
        radii.push(*self.radii.last().unwrap());
        BallLattice {
            center_stride: (self.center_stride / 2).max(1),
            radii,
        }
    }
}

/// Lattice, Fefferman–Stein dilation factor and default exponents.
#[derive(Debug, Clone)]
pub struct MaximalConfig {
    pub lattice: BallLattice,
    /// Dilation factor γ > 1 of the covering ball in the local
    /// Fefferman–Stein inequality.
    pub gamma: f64,
    pub p_values: Vec<f64>,
}

impl MaximalConfig {
    pub fn new(lattice: BallLattice, gamma: f64, p_values: Vec<f64>) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(CarnotError::Domain(format!("γ must exceed 1, got {gamma}")));
        }
        Ok(MaximalConfig {
            lattice,
            gamma,
            p_values,
        })
    }
}

/// Quadrature mean of f over a ball.
pub fn ball_average(group: &CarnotGroup, f: &SampledFunction, ball: &Ball) -> Result<f64> {
    if !f.grid.contains_ball(ball) {
        return Err(CarnotError::Domain("ball not inside the grid box".into()));
    }
    let nodes = f.grid.nodes_in_ball(group, ball);
    f.mean_over(&nodes)
}

/// Per-center statistics of all admissible lattice balls around one center.
/// `radii` ascending; `mean_abs`/`osc` aligned; the suffix arrays hold maxima
/// over radii ≥ index so that "max over balls containing x" is a binary
/// search away.
struct CenterEntry {
    center: GroupPoint,
    radii: Vec<f64>,
    mean_abs_suffix: Vec<f64>,
    osc_suffix: Vec<f64>,
    osc: Vec<f64>,
    max_radius: f64,
}

/// Precomputed sweep over a lattice-ball family on a fixed grid.
pub struct BallSweep {
    entries: Vec<CenterEntry>,
}

impl BallSweep {
    /// Build the family: centers are grid nodes at the lattice stride passing
    /// `center_pred`, radii are lattice radii ≤ `radius_cap` whose balls fit
    /// inside the grid.
    pub fn new(
        group: &CarnotGroup,
        f: &SampledFunction,
        lattice: &BallLattice,
        radius_cap: f64,
        center_pred: impl Fn(GroupPoint) -> bool + Sync,
    ) -> Self {
        let grid = &f.grid;
        let s = lattice.center_stride;
        // A planar stride of physical length L must pair with a t stride of
        // L²/4: gauge-wise, a t-offset Δt costs 2√Δt, and planar offsets
        // shear into t, so a coarser t lattice leaves points uncovered.
        let planar_len = s as f64 * grid.spacing(0).max(grid.spacing(1));
        let s_t = ((0.25 * planar_len * planar_len / grid.spacing(2)).floor() as usize)
            .clamp(1, s);
        let mut centers = Vec::new();
        for ix in (0..grid.counts[0]).step_by(s) {
            for iy in (0..grid.counts[1]).step_by(s) {
                for it in (0..grid.counts[2]).step_by(s_t) {
                    let p = grid.node(ix, iy, it);
                    if center_pred(p) {
                        centers.push(p);
                    }
                }
            }
        }
        let entries: Vec<CenterEntry> = centers
            .par_iter()
            .filter_map(|&center| {
                let mut radii = Vec::new();
                let mut mean_abs = Vec::new();
                let mut osc = Vec::new();
                for &r in &lattice.radii {
                    if r > radius_cap * (1.0 + 1e-12) {
                        break;
                    }
                    let ball = Ball { center, radius: r };
                    if !grid.contains_ball(&ball) {
                        continue;
                    }
                    let nodes = grid.nodes_in_ball(group, &ball);
                    if nodes.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / nodes.len() as f64;
                    let mut sum = 0.0;
                    let mut sum_abs = 0.0;
                    for &i in &nodes {
                        sum += f.values[i];
                        sum_abs += f.values[i].abs();
                    }
                    let mean = sum * inv;
                    let mut dev = 0.0;
                    for &i in &nodes {
                        dev += (f.values[i] - mean).abs();
                    }
                    radii.push(r);
                    mean_abs.push(sum_abs * inv);
                    osc.push(dev * inv);
                }
                if radii.is_empty() {
                    return None;
                }
                let suffix = |v: &[f64]| {
                    let mut out = v.to_vec();
                    for i in (0..out.len().saturating_sub(1)).rev() {
                        out[i] = out[i].max(out[i + 1]);
                    }
                    out
                };
                Some(CenterEntry {
                    center,
                    max_radius: *radii.last().unwrap(),
                    mean_abs_suffix: suffix(&mean_abs),
                    osc_suffix: suffix(&osc),
                    osc,
                    radii,
                })
            })
            .collect();
        BallSweep { entries }
    }

    fn max_at(&self, group: &CarnotGroup, x: GroupPoint, suffix: impl Fn(&CenterEntry) -> &[f64]) -> Option<f64> {
        let mut best: Option<f64> = None;
        for e in &self.entries {
            let d = group.quasi_distance(x, e.center);
            if d >= e.max_radius {
                continue;
            }
            // First radius strictly greater than d: that ball and all larger
            // ones contain x.
            let k = e.radii.partition_point(|&r| r <= d);
            if k < e.radii.len() {
                let v = suffix(e)[k];
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }

    /// Max over balls containing x of avg_B |f|.
    pub fn maximal_at(&self, group: &CarnotGroup, x: GroupPoint) -> Option<f64> {
        self.max_at(group, x, |e| &e.mean_abs_suffix)
    }

    /// Max over balls containing x of avg_B |f − f_B|.
    pub fn sharp_at(&self, group: &CarnotGroup, x: GroupPoint) -> Option<f64> {
        self.max_at(group, x, |e| &e.osc_suffix)
    }

    /// Largest mean oscillation over balls of radius ≤ r (no containment
    /// constraint); this is the VMO modulus sup.
    pub fn oscillation_sup(&self, r: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for e in &self.entries {
            for (k, &radius) in e.radii.iter().enumerate() {
                if radius <= r * (1.0 + 1e-12) {
                    let v = e.osc[k];
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        best
    }

    pub fn ball_count(&self) -> usize {
        self.entries.iter().map(|e| e.radii.len()).sum()
    }
}

/// Hardy–Littlewood maximal function Mf(x) over the lattice family.
pub fn hl_maximal(
    group: &CarnotGroup,
    f: &SampledFunction,
    x: GroupPoint,
    cfg: &MaximalConfig,
) -> Result<f64> {
    let sweep = BallSweep::new(group, f, &cfg.lattice, f64::INFINITY, |_| true);
    sweep
        .maximal_at(group, x)
        .ok_or_else(|| CarnotError::Domain(format!("no lattice ball contains {x}")))
}

/// Mf evaluated at a set of grid nodes (shared sweep, parallel over nodes).
pub fn maximal_field(
    group: &CarnotGroup,
    f: &SampledFunction,
    cfg: &MaximalConfig,
    eval_nodes: &[usize],
) -> Result<Vec<f64>> {
    let sweep = BallSweep::new(group, f, &cfg.lattice, f64::INFINITY, |_| true);
    eval_nodes
        .par_iter()
        .map(|&idx| {
            let x = f.grid.point(idx);
            sweep
                .maximal_at(group, x)
                .ok_or_else(|| CarnotError::Domain(format!("no lattice ball contains {x}")))
        })
        .collect()
}

/// Local sharp maximal function f♯_{Ω_m, Ω_{m+1}}(x): sup over lattice balls
/// with center in Ω_m, radius ≤ ε_m, containing x.
pub fn local_sharp_maximal(
    group: &CarnotGroup,
    f: &SampledFunction,
    x: GroupPoint,
    m: usize,
    chain: &DomainChain,
    cfg: &MaximalConfig,
) -> Result<f64> {
    let om = chain.omega(m)?;
    if group.quasi_distance(x, om.center) >= om.radius {
        return Err(CarnotError::Domain(format!("evaluation point {x} outside Ω_{m}")));
    }
    let sweep = sharp_sweep(group, f, m, chain, cfg)?;
    sweep
        .sharp_at(group, x)
        .ok_or_else(|| CarnotError::Domain(format!("no admissible sharp ball contains {x}")))
}

/// The sweep underlying the local sharp operator at level m.
pub fn sharp_sweep(
    group: &CarnotGroup,
    f: &SampledFunction,
    m: usize,
    chain: &DomainChain,
    cfg: &MaximalConfig,
) -> Result<BallSweep> {
    let om = chain.omega(m)?;
    let eps = chain.epsilon(m);
    Ok(BallSweep::new(group, f, &cfg.lattice, eps, |c| {
        group.quasi_distance(c, om.center) < om.radius
    }))
}

/// VMO modulus η_{m,f}(r): sup over centers in Ω_m and radii ≤ r ≤ ε_m of the
/// mean oscillation. Nondecreasing in r by construction.
pub fn vmo_modulus(
    group: &CarnotGroup,
    f: &SampledFunction,
    m: usize,
    r: f64,
    chain: &DomainChain,
    cfg: &MaximalConfig,
) -> Result<f64> {
    if r > chain.epsilon(m) * (1.0 + 1e-12) {
        return Err(CarnotError::Domain(format!(
            "VMO radius {r} exceeds ε_m = {}",
            chain.epsilon(m)
        )));
    }
    let sweep = sharp_sweep(group, f, m, chain, cfg)?;
    sweep.oscillation_sup(r).ok_or_else(|| {
        CarnotError::Domain("no admissible ball for the VMO modulus (grid too coarse)".into())
    })
}

/// a♯_{m,r} = Σ_{ij} η_{m,a_ij}(r) over the q² sampled coefficient entries.
pub fn a_sharp(
    group: &CarnotGroup,
    entries: &[SampledFunction],
    m: usize,
    r: f64,
    chain: &DomainChain,
    cfg: &MaximalConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for f in entries {
        total += vmo_modulus(group, f, m, r, chain, cfg)?;
    }
    Ok(total)
}

/// ‖f‖_{L^p(B_R)} / ‖f♯_{Ω_{m+2},Ω_{m+3}}‖_{L^p(B_{γR})} for mean-zero f
/// supported in B_R: the empirical constant of the local Fefferman–Stein
/// inequality.
pub fn fefferman_stein_ratio(
    group: &CarnotGroup,
    f: &SampledFunction,
    support_radius: f64,
    p: f64,
    cfg: &MaximalConfig,
    chain: &DomainChain,
    m: usize,
) -> Result<f64> {
    let scale = f.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(CarnotError::Degenerate("f ≡ 0 in the Fefferman–Stein ratio".into()));
    }
    let mean = f.integral();
    if mean.abs() > 1e-6 * scale {
        return Err(CarnotError::Domain(format!(
            "f must have zero mean; ∫f = {mean:.3e}"
        )));
    }
    let br = Ball::centered(support_radius)?;
    let bgr = Ball::centered(cfg.gamma * support_radius)?;
    let nodes_r = f.grid.nodes_in_ball(group, &br);
    let nodes_gr = f.grid.nodes_in_ball(group, &bgr);
    let num = f.lp_norm_over(p, &nodes_r)?;
    let sweep = sharp_sweep(group, f, m + 2, chain, cfg)?;
    let sharp_p: Vec<f64> = nodes_gr
        .par_iter()
        .map(|&idx| {
            let x = f.grid.point(idx);
            sweep.sharp_at(group, x).unwrap_or(0.0).powf(p)
        })
        .collect();
    let den = (sharp_p.iter().sum::<f64>() * f.grid.cell_volume()).powf(1.0 / p);
    if den == 0.0 {
        return Err(CarnotError::Degenerate(
            "sharp maximal function vanishes on the evaluation ball".into(),
        ));
    }
    Ok(num / den)
}
