//! Uniform grids over axis-aligned boxes and scalar fields sampled on them.
//! `SampledFunction` is the carrier of every integral, norm and maximal
//! computation in the crate.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{CarnotError, Result};
use crate::group::{Ball, CarnotGroup, GroupPoint, DIM};

/// Node-centered uniform grid: nodes include both box faces, spacing per axis
/// is (max − min)/(counts − 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: [f64; DIM],
    pub max: [f64; DIM],
    pub counts: [usize; DIM],
}

impl GridSpec {
    pub fn new(min: [f64; DIM], max: [f64; DIM], counts: [usize; DIM]) -> Result<Self> {
        for a in 0..DIM {
            if !(max[a] > min[a]) {
                return Err(CarnotError::Domain(format!(
                    "grid axis {a}: max must exceed min ({} vs {})",
                    max[a], min[a]
                )));
            }
            if counts[a] < 2 {
                return Err(CarnotError::Domain(format!(
                    "grid axis {a}: need at least 2 nodes, got {}",
                    counts[a]
                )));
            }
        }
        Ok(GridSpec { min, max, counts })
    }

    /// Box symmetric around the origin.
    pub fn symmetric(half: [f64; DIM], counts: [usize; DIM]) -> Result<Self> {
        GridSpec::new([-half[0], -half[1], -half[2]], half, counts)
    }

    /// Smallest symmetric box containing the gauge ball B(center, r) scaled
    /// by `margin`, with the t-extent following the parabolic scaling r²/4
    /// plus the shear from the center.
    pub fn for_ball(ball: &Ball, margin: f64, counts: [usize; DIM]) -> Result<Self> {
        let r = ball.radius * margin;
        let c = ball.center.0;
        let half_t = r * r / 4.0 + 0.5 * r * (c[0].abs() + c[1].abs());
        GridSpec::new(
            [c[0] - r, c[1] - r, c[2] - half_t],
            [c[0] + r, c[1] + r, c[2] + half_t],
            counts,
        )
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / (self.counts[axis] - 1) as f64
    }

    pub fn spacings(&self) -> [f64; DIM] {
        [self.spacing(0), self.spacing(1), self.spacing(2)]
    }

    /// Quadrature weight per node.
    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (ix * self.counts[1] + iy) * self.counts[2] + it
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let it = idx % self.counts[2];
        let rest = idx / self.counts[2];
        (rest / self.counts[1], rest % self.counts[1], it)
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize, it: usize) -> GroupPoint {
        GroupPoint([
            self.min[0] + ix as f64 * self.spacing(0),
            self.min[1] + iy as f64 * self.spacing(1),
            self.min[2] + it as f64 * self.spacing(2),
        ])
    }

    #[inline]
    pub fn point(&self, idx: usize) -> GroupPoint {
        let (ix, iy, it) = self.unravel(idx);
        self.node(ix, iy, it)
    }

    pub fn contains(&self, p: GroupPoint) -> bool {
        (0..DIM).all(|a| p.0[a] >= self.min[a] - 1e-12 && p.0[a] <= self.max[a] + 1e-12)
    }

    /// Whether the bounding box of the gauge ball sits inside this box.
    pub fn contains_ball(&self, ball: &Ball) -> bool {
        let r = ball.radius;
        let c = ball.center.0;
        let half_t = r * r / 4.0 + 0.5 * r * (c[0].abs() + c[1].abs());
        c[0] - r >= self.min[0] - 1e-12
            && c[0] + r <= self.max[0] + 1e-12
            && c[1] - r >= self.min[1] - 1e-12
            && c[1] + r <= self.max[1] + 1e-12
            && c[2] - half_t >= self.min[2] - 1e-12
            && c[2] + half_t <= self.max[2] + 1e-12
    }

    /// Indices of grid nodes strictly inside the gauge ball.
    pub fn nodes_in_ball(&self, group: &CarnotGroup, ball: &Ball) -> Vec<usize> {
        // Restrict the sweep to the ball's bounding box.
        let r = ball.radius;
        let c = ball.center.0;
        let half_t = r * r / 4.0 + 0.5 * r * (c[0].abs() + c[1].abs());
        let h = self.spacings();
        let lo = |a: usize, v: f64| (((v - self.min[a]) / h[a]).floor().max(0.0)) as usize;
        let hi = |a: usize, v: f64| {
            (((v - self.min[a]) / h[a]).ceil() as usize).min(self.counts[a] - 1)
        };
        let (x0, x1) = (lo(0, c[0] - r), hi(0, c[0] + r));
        let (y0, y1) = (lo(1, c[1] - r), hi(1, c[1] + r));
        let (t0, t1) = (lo(2, c[2] - half_t), hi(2, c[2] + half_t));
        let mut out = Vec::new();
        for ix in x0..=x1 {
            for iy in y0..=y1 {
                for it in t0..=t1 {
                    if group.quasi_distance(self.node(ix, iy, it), ball.center) < r {
                        out.push(self.index(ix, iy, it));
                    }
                }
            }
        }
        out
    }

    /// Halve the spacing on every axis (counts 2n−1), same box.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            min: self.min,
            max: self.max,
            counts: [
                self.counts[0] * 2 - 1,
                self.counts[1] * 2 - 1,
                self.counts[2] * 2 - 1,
            ],
        }
    }
}

/// Scalar field on a uniform grid, row-major with the t index innermost.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CarnotError::Structural(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CarnotError::Structural("non-finite sample value".into()));
        }
        Ok(SampledFunction { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        SampledFunction {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Sample a closure on every node (parallel over nodes; each entry is
    /// independent, so the result is deterministic).
    pub fn from_fn(grid: GridSpec, f: impl Fn(GroupPoint) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; grid.len()];
        values
            .par_iter_mut()
            .enumerate()
            .for_each(|(idx, v)| *v = f(grid.point(idx)));
        SampledFunction { grid, values }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, it: usize) -> f64 {
        self.values[self.grid.index(ix, iy, it)]
    }

    /// ∫ f over the whole box (node sum × cell volume, fixed order).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// ∫ f over the node set `nodes` (typically a ball).
    pub fn integral_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i]).sum::<f64>() * self.grid.cell_volume()
    }

    /// Mean of f over the node set; errors when the set is empty.
    pub fn mean_over(&self, nodes: &[usize]) -> Result<f64> {
        if nodes.is_empty() {
            return Err(CarnotError::Domain(
                "empty discrete ball: radius below grid resolution".into(),
            ));
        }
        Ok(nodes.iter().map(|&i| self.values[i]).sum::<f64>() / nodes.len() as f64)
    }

    /// (Σ |f|^p vol)^{1/p} over the node set.
    pub fn lp_norm_over(&self, p: f64, nodes: &[usize]) -> Result<f64> {
        if p < 1.0 {
            return Err(CarnotError::Domain(format!("L^p exponent must be ≥ 1, got {p}")));
        }
        let s: f64 = nodes.iter().map(|&i| self.values[i].abs().powf(p)).sum();
        Ok((s * self.grid.cell_volume()).powf(1.0 / p))
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p < 1.0 {
            return Err(CarnotError::Domain(format!("L^p exponent must be ≥ 1, got {p}")));
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        Ok((s * self.grid.cell_volume()).powf(1.0 / p))
    }

    /// Binary dump: text header (box, counts, spacing) then row-major
    /// little-endian 64-bit floats.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.values.len() * 8 + 256);
        let g = &self.grid;
        let header = format!(
            "carnot-grid 1\nmin {} {} {}\nmax {} {} {}\ncounts {} {} {}\nspacing {} {} {}\nend\n",
            g.min[0], g.min[1], g.min[2], g.max[0], g.max[1], g.max[2],
            g.counts[0], g.counts[1], g.counts[2],
            g.spacing(0), g.spacing(1), g.spacing(2),
        );
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut reader = std::io::BufReader::new(file);
        let mut min = [0.0; DIM];
        let mut max = [0.0; DIM];
        let mut counts = [0usize; DIM];
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(CarnotError::Structural("truncated grid header".into()));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.first().copied() {
                Some("carnot-grid") | Some("spacing") => {}
                Some("min") => {
                    for a in 0..DIM {
                        min[a] = fields[a + 1].parse().map_err(|_| {
                            CarnotError::Structural("bad min in grid header".into())
                        })?;
                    }
                }
                Some("max") => {
                    for a in 0..DIM {
                        max[a] = fields[a + 1].parse().map_err(|_| {
                            CarnotError::Structural("bad max in grid header".into())
                        })?;
                    }
                }
                Some("counts") => {
                    for a in 0..DIM {
                        counts[a] = fields[a + 1].parse().map_err(|_| {
                            CarnotError::Structural("bad counts in grid header".into())
                        })?;
                    }
                }
                Some("end") => break,
                other => {
                    return Err(CarnotError::Structural(format!(
                        "unexpected grid header field {other:?}"
                    )))
                }
            }
        }
        let grid = GridSpec::new(min, max, counts)?;
        let mut raw = Vec::new();
        reader.read_to_end(&mut raw)?;
        if raw.len() != grid.len() * 8 {
            return Err(CarnotError::Structural(format!(
                "grid payload holds {} bytes, expected {}",
                raw.len(),
                grid.len() * 8
            )));
        }
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        SampledFunction::new(grid, values)
    }

    /// CSV export of the t = const slice nearest to `t`, for plotting.
    pub fn export_slice_csv(&self, t: f64, writer: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        let it = (((t - g.min[2]) / g.spacing(2)).round() as i64)
            .clamp(0, g.counts[2] as i64 - 1) as usize;
        writeln!(writer, "x,y,t,value")?;
        for ix in 0..g.counts[0] {
            for iy in 0..g.counts[1] {
                let p = g.node(ix, iy, it);
                writeln!(writer, "{},{},{},{}", p.0[0], p.0[1], p.0[2], self.at(ix, iy, it))?;
            }
        }
        Ok(())
    }
}

/// Chunked dot product: parallel partials over fixed-size chunks folded in
/// index order, so the result is bitwise reproducible across runs and thread
/// counts.
pub fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const CHUNK: usize = 8192;
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::symmetric([1.0, 1.0, 0.5], [n, n, n]).unwrap()
    }

    #[test]
    fn indexing_round_trip() {
        let g = unit_grid(9);
        for idx in 0..g.len() {
            let (ix, iy, it) = g.unravel(idx);
            assert_eq!(g.index(ix, iy, it), idx);
        }
        assert_eq!(g.node(0, 0, 0).0, [-1.0, -1.0, -0.5]);
        assert_eq!(g.node(8, 8, 8).0, [1.0, 1.0, 0.5]);
    }

    #[test]
    fn constant_integral_is_box_volume() {
        let g = unit_grid(17);
        let f = SampledFunction::from_fn(g, |_| 1.0);
        // Node-sum quadrature of a constant overshoots the open box by the
        // half-cell rim; the relative error is O(h).
        let vol = 2.0 * 2.0 * 1.0;
        assert!((f.integral() - vol).abs() / vol < 0.2);
    }

    #[test]
    fn ball_nodes_and_mean() {
        let group = CarnotGroup::heisenberg();
        let g = unit_grid(33);
        let ball = Ball::centered(0.8).unwrap();
        let nodes = g.nodes_in_ball(&group, &ball);
        assert!(!nodes.is_empty());
        let f = SampledFunction::from_fn(g.clone(), |p| p.0[0]);
        // Odd symmetry: the mean of x over a centered ball vanishes.
        let m = f.mean_over(&nodes).unwrap();
        assert!(m.abs() < 1e-12, "mean = {m}");
        let c = SampledFunction::from_fn(g, |_| 3.5);
        assert_eq!(c.mean_over(&nodes).unwrap(), 3.5);
    }

    #[test]
    fn empty_ball_is_domain_error() {
        let group = CarnotGroup::heisenberg();
        let g = unit_grid(9);
        let tiny = Ball::new(GroupPoint::new(0.11, 0.07, 0.03), 1e-6).unwrap();
        let nodes = g.nodes_in_ball(&group, &tiny);
        let f = SampledFunction::from_fn(g, |_| 1.0);
        assert!(f.mean_over(&nodes).is_err());
    }

    #[test]
    fn lp_norm_of_indicator_region() {
        let g = unit_grid(33);
        let f = SampledFunction::from_fn(g.clone(), |_| 1.0);
        let group = CarnotGroup::heisenberg();
        let ball = Ball::centered(0.7).unwrap();
        let nodes = g.nodes_in_ball(&group, &ball);
        let m = nodes.len() as f64 * g.cell_volume();
        for p in [1.0, 2.0, 3.0] {
            let n = f.lp_norm_over(p, &nodes).unwrap();
            assert!((n - m.powf(1.0 / p)).abs() < 1e-12);
        }
        assert!(f.lp_norm_over(0.5, &nodes).is_err());
    }

    #[test]
    fn dump_load_round_trip() {
        let g = unit_grid(7);
        let f = SampledFunction::from_fn(g, |p| p.0[0] * p.0[1] + p.0[2]);
        let dir = std::env::temp_dir().join("carnot-grid-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.bin");
        f.dump(&path).unwrap();
        let back = SampledFunction::load(&path).unwrap();
        assert_eq!(back.grid, f.grid);
        assert_eq!(back.values, f.values);
    }

    #[test]
    fn det_dot_matches_serial() {
        let a: Vec<f64> = (0..100_000).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..100_000).map(|i| (i as f64 * 0.5).cos()).collect();
        let serial: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let par = det_dot(&a, &b);
        assert!((par - serial).abs() <= 1e-9 * serial.abs().max(1.0));
        assert_eq!(par, det_dot(&a, &b));
    }
}
