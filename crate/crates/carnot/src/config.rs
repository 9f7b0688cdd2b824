//! Run configuration: flat `key = value` text, typed parsing, unknown keys
//! rejected. Command-line flags override file values; the effective config
//! can be re-serialized so a run is reproducible from its artifacts.

use std::path::PathBuf;

use crate::error::{CarnotError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub group: String,
    /// Base nodes per axis for quadrature grids.
    pub resolution: usize,
    pub p_list: Vec<f64>,
    pub k_list: Vec<usize>,
    /// Support-ball radius R for the variable-coefficient checks.
    pub radius: f64,
    pub lattice_r_min: f64,
    pub lattice_r_max: f64,
    pub lattice_ratio: f64,
    pub lattice_stride: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: "heisenberg1".into(),
            resolution: 41,
            p_list: vec![1.5, 2.0, 3.0],
            k_list: vec![8, 16, 32, 64],
            radius: 0.35,
            lattice_r_min: 0.05,
            lattice_r_max: 0.5,
            lattice_ratio: 1.25,
            lattice_stride: 4,
            tolerance: 1e-8,
            max_iterations: 10_000,
            output_dir: PathBuf::from("carnot-out"),
            seed: 7,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CarnotError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_text(&text)
    }

    /// Apply one `key=value` override (flags beat file values).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "group" => self.group = value.to_owned(),
            "resolution" => self.resolution = parse(key, value)?,
            "p_list" => self.p_list = parse_list(key, value)?,
            "k_list" => self.k_list = parse_list(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "lattice_r_min" => self.lattice_r_min = parse(key, value)?,
            "lattice_r_max" => self.lattice_r_max = parse(key, value)?,
            "lattice_ratio" => self.lattice_ratio = parse(key, value)?,
            "lattice_stride" => self.lattice_stride = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            other => {
                return Err(CarnotError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.group != "heisenberg1" {
            return Err(CarnotError::Config(format!(
                "unsupported group {:?}: only heisenberg1 ships",
                self.group
            )));
        }
        if self.resolution < 9 {
            return Err(CarnotError::Config("resolution must be ≥ 9".into()));
        }
        if self.p_list.iter().any(|p| *p < 1.0) {
            return Err(CarnotError::Config("every p must be ≥ 1".into()));
        }
        if self.k_list.is_empty() {
            return Err(CarnotError::Config("k_list must be nonempty".into()));
        }
        if !(self.radius > 0.0) {
            return Err(CarnotError::Config("radius must be positive".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(CarnotError::Config("tolerance must lie in (0,1)".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "group = {}\nresolution = {}\np_list = {}\nk_list = {}\nradius = {}\n\
             lattice_r_min = {}\nlattice_r_max = {}\nlattice_ratio = {}\nlattice_stride = {}\n\
             tolerance = {}\nmax_iterations = {}\noutput_dir = {}\nseed = {}\nworkers = {}\n",
            self.group,
            self.resolution,
            join(&self.p_list),
            join(&self.k_list),
            self.radius,
            self.lattice_r_min,
            self.lattice_r_max,
            self.lattice_ratio,
            self.lattice_stride,
            self.tolerance,
            self.max_iterations,
            self.output_dir.display(),
            self.seed,
            self.workers,
        )
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| CarnotError::Config(format!("bad {key} = {value:?}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::default();
        let parsed = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::from_text("bogus = 1\n").is_err());
    }

    #[test]
    fn overrides_and_validation() {
        let mut cfg = RunConfig::from_text("resolution = 33\nseed = 42\n").unwrap();
        assert_eq!(cfg.resolution, 33);
        assert_eq!(cfg.seed, 42);
        cfg.set("p_list", "2,3").unwrap();
        assert_eq!(cfg.p_list, vec![2.0, 3.0]);
        assert!(RunConfig::from_text("tolerance = 7\n").is_err());
        assert!(RunConfig::from_text("group = free-step-3\n").is_err());
    }
}
