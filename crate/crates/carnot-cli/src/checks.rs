//! Check orchestration: every subcommand builds one or more
//! `VerificationReport`s from the library, writes them as deterministic JSON
//! plus a timing sidecar, prints a one-line verdict and folds the outcome
//! into the process exit status.

use std::process::ExitCode;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use carnot::calculus::{
    self, fd_apply_field, fd_apply_word, gauge_bump, gaussian_like, harmonic_cubic,
    oscillatory_bump, standard_corpus, MultiIndex,
};
use carnot::config::RunConfig;
use carnot::dirichlet::{
    max_principle_check, solve_dirichlet, DiscreteDirichletProblem, SolverConfig,
};
use carnot::grid::{GridSpec, SampledFunction};
use carnot::group::{Ball, CarnotGroup, GroupPoint};
use carnot::maximal::{
    hl_maximal, local_sharp_maximal, vmo_modulus, BallLattice, DomainChain,
    MaximalConfig,
};
use carnot::model::{
    c_gamma, model_apply, newtonian_potential_at, CoefficientField, EllipticMatrix,
    FundamentalSolution,
};
use carnot::verify::{
    estimate_poincare, lemma2_corpus, verify_interpolation, verify_lemma1, verify_lemma2,
    verify_lemma3, verify_lemma_bb1, verify_main, verify_thm36, Bb1Config, Lemma1Config,
    Lemma2Config, Lemma3Config, MainEstimateConfig, PoincareConfig, Thm36Config,
    VerificationReport,
};
use carnot::{CarnotError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteStatus {
    Pass,
    Inconclusive,
    Fail,
}

impl SuiteStatus {
    pub fn exit_code(self) -> ExitCode {
        match self {
            SuiteStatus::Pass => ExitCode::from(0),
            SuiteStatus::Inconclusive => ExitCode::from(2),
            SuiteStatus::Fail => ExitCode::from(1),
        }
    }

    fn merge(self, other: SuiteStatus) -> SuiteStatus {
        use SuiteStatus::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    fn of(report: &VerificationReport) -> SuiteStatus {
        if report.inconclusive {
            SuiteStatus::Inconclusive
        } else if report.pass {
            SuiteStatus::Pass
        } else {
            SuiteStatus::Fail
        }
    }
}

fn emit(cfg: &RunConfig, report: &VerificationReport, started: Instant) -> Result<SuiteStatus> {
    let path = cfg.output_dir.join(format!("{}.json", report.check));
    std::fs::write(&path, report.to_json())?;
    let timing = cfg
        .output_dir
        .join(format!("{}.timing.json", report.check));
    std::fs::write(
        &timing,
        format!("{{\"runtime_seconds\": {}}}\n", started.elapsed().as_secs_f64()),
    )?;
    let status = SuiteStatus::of(report);
    let verdict = match status {
        SuiteStatus::Pass => "PASS",
        SuiteStatus::Inconclusive => "INCONCLUSIVE",
        SuiteStatus::Fail => "FAIL",
    };
    let extras = [
        report.slope.map(|s| format!("slope={s:.3}")),
        report.r2.map(|r| format!("r2={r:.3}")),
        report.constant.map(|c| format!("c={c:.4}")),
    ]
    .into_iter()
    .flatten()
    .collect::<Vec<_>>()
    .join(" ");
    println!("{}: {} {}", report.check, verdict, extras);
    Ok(status)
}

fn random_point(rng: &mut impl Rng, scale: f64) -> GroupPoint {
    GroupPoint::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}

pub fn group_check(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let g = CarnotGroup::heisenberg();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = VerificationReport::new("group_axioms");
    report.param("samples", 10_000).param("seed", cfg.seed);

    let mut dev_assoc: f64 = 0.0;
    let mut dev_inv: f64 = 0.0;
    let mut dev_auto: f64 = 0.0;
    let mut dev_norm: f64 = 0.0;
    let mut quasi_k: f64 = 0.0;
    for _ in 0..10_000 {
        let (a, b, c) = (
            random_point(&mut rng, 10.0),
            random_point(&mut rng, 10.0),
            random_point(&mut rng, 10.0),
        );
        let lam = rng.gen_range(0.2..4.0);
        let lhs = g.compose(g.compose(a, b), c);
        let rhs = g.compose(a, g.compose(b, c));
        for i in 0..3 {
            let scale = lhs.coords()[i].abs().max(rhs.coords()[i].abs()).max(1.0);
            dev_assoc = dev_assoc.max((lhs.coords()[i] - rhs.coords()[i]).abs() / scale);
        }
        let e = g.compose(a, g.inverse(a));
        dev_inv = dev_inv.max(e.coords().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let da = g.dilate(lam, g.compose(a, b))?;
        let db = g.compose(g.dilate(lam, a)?, g.dilate(lam, b)?);
        for i in 0..3 {
            let scale = da.coords()[i].abs().max(1.0);
            dev_auto = dev_auto.max((da.coords()[i] - db.coords()[i]).abs() / scale);
        }
        let rho = g.gauge_norm(a);
        if rho > 0.0 {
            let ratio = g.gauge_norm(g.dilate(lam, a)?) / rho;
            dev_norm = dev_norm.max((ratio - lam).abs() / lam);
        }
        let denom = g.gauge_norm(a) + g.gauge_norm(b);
        if denom > 0.0 {
            quasi_k = quasi_k.max(g.gauge_norm(g.compose(a, b)) / denom);
        }
    }
    report.measure("associativity_dev", dev_assoc);
    report.measure("inverse_dev", dev_inv);
    report.measure("automorphism_dev", dev_auto);
    report.measure("norm_homogeneity_dev", dev_norm);
    report.measure("quasi_triangle_K", quasi_k);

    // Volume law |B(0,2r)| / |B(0,r)| = 2^Q at spacing ≤ r/64.
    let q = 2f64.powi(g.homogeneous_dimension() as i32);
    let mut vol_ok = true;
    for r in [0.5f64, 1.0] {
        let v1 = g.measure_ball_volume(&Ball::centered(r)?, r / 64.0);
        let v2 = g.measure_ball_volume(&Ball::centered(2.0 * r)?, r / 64.0);
        let ratio = v2 / v1;
        report.measure(format!("volume_ratio(r={r})"), ratio);
        vol_ok &= (ratio - q).abs() / q < 0.01;
    }
    let z = GroupPoint::new(0.6, -0.4, 0.2);
    let v0 = g.measure_ball_volume(&Ball::centered(1.0)?, 1.0 / 64.0);
    let vz = g.measure_ball_volume(&Ball::new(z, 1.0)?, 1.0 / 64.0);
    report.measure("volume_translation_gap", (vz - v0).abs() / v0);
    vol_ok &= (vz - v0).abs() / v0 < 0.01;

    report.pass = dev_assoc <= 1e-12
        && dev_inv <= 1e-12
        && dev_auto <= 1e-12
        && dev_norm <= 1e-12
        && vol_ok;
    emit(cfg, &report, started)
}

pub fn calculus_check(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let g = CarnotGroup::heisenberg();
    let mut report = VerificationReport::new("calculus");
    let grid = GridSpec::symmetric([1.0, 1.0, 0.5], [cfg.resolution, cfg.resolution, cfg.resolution])?;

    let mut comm_dev: f64 = 0.0;
    for u in standard_corpus(0.9) {
        comm_dev = comm_dev.max(calculus::commutator_check(&g, 0, 1, &u, &grid));
    }
    report.measure("commutator_dev", comm_dev);

    // Difference-operator convergence order on the smooth member.
    let u = gaussian_like(0.4, 0.3);
    let mut errs = Vec::new();
    for n in [17usize, 33, 65] {
        let gr = GridSpec::symmetric([1.0, 1.0, 0.5], [n, n, n])?;
        let fd = fd_apply_field(&g, 0, &u.sample(&gr))?;
        let mut emax = 0.0f64;
        for idx in 0..gr.len() {
            let (ix, iy, it) = gr.unravel(idx);
            if ix < 2 || iy < 2 || it < 2 || ix > n - 3 || iy > n - 3 || it > n - 3 {
                continue;
            }
            emax = emax.max((fd.values[idx] - u.x_first(0, gr.point(idx))).abs());
        }
        errs.push(emax);
    }
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    report.measure("fd_order_step1", order1);
    report.measure("fd_order_step2", order2);

    // Discrete mean-zero structure: the difference sum telescopes.
    let bump = gauge_bump(0.8, 16.0).sample(&grid);
    let mut defect: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let f = fd_apply_word(&g, &MultiIndex(vec![i, j]), &bump)?;
            let mass: f64 = f.values.iter().map(|v| v.abs()).sum();
            if mass > 0.0 {
                defect = defect.max(f.values.iter().sum::<f64>().abs() / mass);
            }
        }
    }
    report.measure("mean_zero_defect", defect);
    report.pass = comm_dev <= 1e-10 && order1 >= 1.9 && order2 >= 1.9 && defect <= 1e-10;
    emit(cfg, &report, started)
}

fn lattice(cfg: &RunConfig) -> Result<MaximalConfig> {
    MaximalConfig::new(
        BallLattice::geometric(
            cfg.lattice_r_min,
            cfg.lattice_r_max,
            cfg.lattice_ratio,
            cfg.lattice_stride,
        )?,
        2.0,
        cfg.p_list.clone(),
    )
}

pub fn maximal_check(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let g = CarnotGroup::heisenberg();
    let mut report = VerificationReport::new("maximal");
    let n = cfg.resolution;
    let grid = GridSpec::symmetric([1.3, 1.3, 0.6], [n, n, n])?;
    let chain = DomainChain::new(20.0, 6)?;
    let mcfg = lattice(cfg)?;
    let f = gauge_bump(0.9, 16.0).sample(&grid);

    // (x, Mf, f♯) CSV export on a strided sample of nodes.
    let mut csv = String::from("x,y,t,maximal,sharp\n");
    let inner = Ball::centered(0.6)?;
    for idx in grid.nodes_in_ball(&g, &inner).into_iter().step_by(37) {
        let p = grid.point(idx);
        let m = hl_maximal(&g, &f, p, &mcfg)?;
        let s = local_sharp_maximal(&g, &f, p, 1, &chain, &mcfg)?;
        csv.push_str(&format!(
            "{},{},{},{m},{s}\n",
            p.coords()[0],
            p.coords()[1],
            p.coords()[2]
        ));
    }
    std::fs::write(cfg.output_dir.join("maximal_field.csv"), csv)?;

    // Empirical L^p boundedness under lattice refinement.
    let mut stable = true;
    for &p in &cfg.p_list {
        let mut ratios = Vec::new();
        for refine in 0..2 {
            let mc = if refine == 0 {
                mcfg.clone()
            } else {
                MaximalConfig::new(mcfg.lattice.refined(), mcfg.gamma, mcfg.p_values.clone())?
            };
            // Face nodes sit in no admissible ball (balls are rejected, not
            // clipped); the norm runs over the lattice-covered interior.
            let nodes = grid.nodes_in_ball(&g, &Ball::centered(1.0)?);
            let mf = carnot::maximal::maximal_field(&g, &f, &mc, &nodes)?;
            let num = (mf.iter().map(|v| v.powf(p)).sum::<f64>() * grid.cell_volume())
                .powf(1.0 / p);
            let den = f.lp_norm(p)?;
            ratios.push(num / den);
        }
        report.measure(format!("maximal_lp_ratio(p={p})"), ratios[0]);
        report.measure(format!("maximal_lp_ratio_refined(p={p})"), ratios[1]);
        stable &= (ratios[1] - ratios[0]).abs() / ratios[0] <= 0.15;
    }

    // VMO modulus table for the slowly oscillating example.
    let loglog = SampledFunction::from_fn(grid.clone(), |p| {
        let rho = g.gauge_norm(p).clamp(1e-12, 0.9);
        ((-rho.ln()).ln()).sin()
    });
    let eps = chain.epsilon(1);
    let mut eta_csv = String::from("r,eta\n");
    let mut last = f64::NEG_INFINITY;
    let mut monotone = true;
    for step in 1..=6 {
        let r = eps * step as f64 / 6.0;
        let eta = vmo_modulus(&g, &loglog, 1, r, &chain, &mcfg)?;
        eta_csv.push_str(&format!("{r},{eta}\n"));
        report.measure(format!("eta(r={r:.3})"), eta);
        // η is a sup over a family growing with r: nondecreasing.
        if eta < last - 1e-12 {
            monotone = false;
        }
        last = eta;
    }
    std::fs::write(cfg.output_dir.join("vmo_modulus.csv"), eta_csv)?;
    report.pass = stable && monotone;
    report.note("eta table written to vmo_modulus.csv; maximal field to maximal_field.csv");
    emit(cfg, &report, started)
}

pub fn gamma_check(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let g = CarnotGroup::heisenberg();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut report = VerificationReport::new("gamma");
    report.measure("c_gamma", c_gamma(&g));

    let mut matrices = vec![EllipticMatrix::identity()];
    for _ in 0..3 {
        matrices.push(EllipticMatrix::random_in_class(0.5, &mut rng)?);
    }
    let mut hom_dev: f64 = 0.0;
    let mut sign_violations = 0usize;
    let mut bound: f64 = 0.0;
    let mut factors = Vec::new();
    for abar in &matrices {
        let gamma = FundamentalSolution::new(&g, *abar);
        for _ in 0..2_500 {
            let p = random_point(&mut rng, 2.0);
            if g.gauge_norm(p) < 1e-2 {
                continue;
            }
            let v = gamma.eval(&g, p)?;
            if v > 0.0 {
                sign_violations += 1;
            }
            let v2 = gamma.eval(&g, g.dilate(2.0, p)?)?;
            hom_dev = hom_dev.max((v2 - 0.25 * v).abs() / v.abs());
            bound = bound.max(v.abs() * g.gauge_norm(p).powi(2));
        }
        // Difference-operator annihilation residual, halved spacing. The max
        // over several off-pole points keeps a single near-cancellation of
        // the leading error term from skewing the factor.
        let probes = [
            GroupPoint::new(0.8, -0.4, 0.3),
            GroupPoint::new(0.6, 0.5, -0.2),
            GroupPoint::new(-0.9, 0.1, 0.15),
            GroupPoint::new(0.0, 0.9, -0.3),
            GroupPoint::new(0.5, 0.0, 0.25),
        ];
        let mut residuals = Vec::new();
        for h in [0.02, 0.01] {
            let mut worst: f64 = 0.0;
            for p0 in probes {
                debug_assert!(g.gauge_norm(p0) >= 0.5);
                let grid = GridSpec::new(
                    [
                        p0.coords()[0] - 4.0 * h,
                        p0.coords()[1] - 4.0 * h,
                        p0.coords()[2] - 4.0 * h,
                    ],
                    [
                        p0.coords()[0] + 4.0 * h,
                        p0.coords()[1] + 4.0 * h,
                        p0.coords()[2] + 4.0 * h,
                    ],
                    [9, 9, 9],
                )?;
                let sampled = SampledFunction::from_fn(grid, |p| gamma.eval(&g, p).unwrap());
                let lbar = model_apply(&g, abar, &sampled)?;
                worst = worst.max(lbar.at(4, 4, 4).abs());
            }
            residuals.push(worst);
        }
        factors.push(residuals[0] / residuals[1]);
    }
    report.measure("homogeneity_dev", hom_dev);
    report.measure("sign_violations", sign_violations as f64);
    report.measure("uniform_bound", bound);
    let mut factors_ok = true;
    for (i, f) in factors.iter().enumerate() {
        report.measure(format!("annihilation_factor_{i}"), *f);
        factors_ok &= (3.0..=5.0).contains(f);
    }

    // Far-field of a mollified point mass against Γ itself.
    let eps = 0.1;
    let bump = gauge_bump(eps, 16.0);
    let src_grid = GridSpec::for_ball(&Ball::centered(eps)?, 1.05, [21, 21, 21])?;
    let f = bump.sample(&src_grid);
    let mass = f.integral();
    let gamma_id = FundamentalSolution::new(&g, EllipticMatrix::identity());
    let mut far_dev: f64 = 0.0;
    for far in [
        GroupPoint::new(1.2, 0.5, 0.4),
        GroupPoint::new(0.8, 0.0, 0.0),
        GroupPoint::new(0.0, 0.0, 0.5),
    ] {
        let u = newtonian_potential_at(&g, &EllipticMatrix::identity(), &f, &[far])[0] / mass;
        let exact = gamma_id.eval(&g, far)?;
        far_dev = far_dev.max((u - exact).abs() / exact.abs());
    }
    report.measure("far_field_dev", far_dev);
    report.pass =
        hom_dev <= 1e-12 && sign_violations == 0 && factors_ok && far_dev <= 0.02;
    emit(cfg, &report, started)
}

pub fn solve_check(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let g = CarnotGroup::heisenberg();
    let mut report = VerificationReport::new("solve");
    let abar = EllipticMatrix::identity();
    let gamma = FundamentalSolution::new(&g, abar);
    let pole = GroupPoint::new(1.6, 0.4, 0.2);
    let ball = Ball::centered(1.0)?;
    let n = cfg.resolution.max(29);
    let grid = GridSpec::for_ball(&ball, 1.05, [n, n, n])?;
    let boundary = SampledFunction::from_fn(grid, |p| {
        gamma.eval(&g, g.compose(g.inverse(pole), p)).unwrap()
    });
    let prob = DiscreteDirichletProblem {
        ball,
        abar,
        boundary,
        rhs: None,
    };
    let solver = SolverConfig {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
    };
    let (h, diag) = solve_dirichlet(&g, &prob, &solver)?;
    report.measure("iterations", diag.iterations as f64);
    report.measure("residual", diag.residual);
    report.measure("energy", diag.energy);
    report.measure("interior_nodes", diag.interior_nodes as f64);
    let mp = max_principle_check(&g, &h, &ball, &abar)?;
    report.measure("max_principle_violation", mp.violation);
    h.dump(&cfg.output_dir.join("solution.bin"))?;
    let mut csv = Vec::new();
    h.export_slice_csv(0.0, &mut csv)?;
    std::fs::write(cfg.output_dir.join("solution_t0.csv"), csv)?;
    report.pass = diag.residual <= cfg.tolerance && mp.violation <= 1e-6;
    report.note("solution grid dumped to solution.bin, slice to solution_t0.csv");
    emit(cfg, &report, started)
}

pub fn corpus_dump(cfg: &RunConfig) -> Result<SuiteStatus> {
    let started = Instant::now();
    let mut report = VerificationReport::new("corpus");
    let n = cfg.resolution;
    let grid = GridSpec::symmetric([1.0, 1.0, 0.3], [n, n, n])?;
    for (i, u) in standard_corpus(0.9).iter().enumerate() {
        let sampled = u.sample(&grid);
        let path = cfg.output_dir.join(format!("corpus_{i}.bin"));
        sampled.dump(&path)?;
        let mut csv = Vec::new();
        sampled.export_slice_csv(0.0, &mut csv)?;
        std::fs::write(cfg.output_dir.join(format!("corpus_{i}_t0.csv")), csv)?;
        report.note(format!("{}: corpus_{i}.bin", u.label()));
    }
    report.pass = true;
    emit(cfg, &report, started)
}

fn solver_from(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
    }
}

pub fn verify(cfg: &RunConfig, which: &str) -> Result<SuiteStatus> {
    let g = CarnotGroup::heisenberg();
    match which {
        "poincare" => {
            let started = Instant::now();
            let corpus = standard_corpus(0.9);
            let (_, report) = estimate_poincare(
                &g,
                &corpus,
                cfg.p_list.first().copied().unwrap_or(2.0),
                &PoincareConfig {
                    counts: [cfg.resolution, cfg.resolution, cfg.resolution],
                    ..PoincareConfig::default()
                },
            )?;
            emit(cfg, &report, started)
        }
        "interpolation" => {
            let started = Instant::now();
            let report = verify_interpolation(
                &g,
                &standard_corpus(0.9),
                &cfg.p_list,
                &[0.1, 1.0, 10.0],
                [cfg.resolution, cfg.resolution, cfg.resolution],
            )?;
            emit(cfg, &report, started)
        }
        "lemma1" => {
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x11);
            let lcfg = Lemma1Config {
                solver: solver_from(cfg),
                ..Lemma1Config::default()
            };
            let mut merged = VerificationReport::new("lemma1");
            merged.param("radius", lcfg.radius).param("lambda", lcfg.lambda);
            let mut pass = true;
            let matrices = vec![
                EllipticMatrix::identity(),
                EllipticMatrix::random_in_class(0.5, &mut rng)?,
            ];
            for (mi, abar) in matrices.iter().enumerate() {
                for u in [harmonic_cubic([[1.0, 0.0], [0.0, 1.0]]), gaussian_like(3.0, 6.0)] {
                    let r = verify_lemma1(&g, abar, &u, &lcfg)?;
                    pass &= r.pass;
                    if !r.pass {
                        for n in &r.notes {
                            merged.note(format!("m{mi} {}: {n}", u.label()));
                        }
                    }
                    if let Some(c) = r.constant {
                        merged.measure(format!("ratio(m{mi},{})", u.label()), c);
                    }
                }
            }
            merged.pass = pass;
            emit(cfg, &merged, started)
        }
        "lemma2" => {
            let started = Instant::now();
            let abar = EllipticMatrix::identity();
            let corpus = lemma2_corpus(&abar);
            let report = verify_lemma2(
                &g,
                &abar,
                &corpus,
                &Lemma2Config {
                    k_list: cfg.k_list.clone(),
                    solver: solver_from(cfg),
                    ..Lemma2Config::default()
                },
            )?;
            emit(cfg, &report, started)
        }
        "bb1" => {
            let started = Instant::now();
            let report = verify_lemma_bb1(
                &g,
                &EllipticMatrix::identity(),
                &[gauge_bump(0.9, 16.0), carnot::calculus::poly_bump(0.9)],
                &Bb1Config {
                    r: 1.0,
                    k_list: cfg.k_list.clone(),
                    p: cfg.p_list.get(1).copied().unwrap_or(2.0),
                    counts: [cfg.resolution, cfg.resolution, cfg.resolution],
                    maximal: lattice(cfg)?,
                },
            )?;
            emit(cfg, &report, started)
        }
        "lemma3" => {
            let started = Instant::now();
            let abar = EllipticMatrix::identity();
            let corpus = vec![
                harmonic_cubic([[1.0, 0.0], [0.0, 1.0]]),
                gaussian_like(2.0, 4.0),
            ];
            let report = verify_lemma3(
                &g,
                &abar,
                &corpus,
                &Lemma3Config {
                    k_list: cfg.k_list.clone(),
                    p: cfg.p_list.get(1).copied().unwrap_or(2.0),
                    inner_counts: [cfg.resolution, cfg.resolution, cfg.resolution],
                    outer_counts: [cfg.resolution + 16, cfg.resolution + 16, cfg.resolution + 16],
                    ..Lemma3Config::default()
                },
            )?;
            emit(cfg, &report, started)
        }
        "thm36" => {
            let started = Instant::now();
            let r = cfg.radius;
            let tcfg = Thm36Config {
                p: 2.0,
                alpha: 2.0,
                k: cfg.k_list.first().copied().unwrap_or(8),
                support_radius: r,
                chain_base: 60.0 * r,
                chain_level: 1,
                counts: [cfg.resolution, cfg.resolution, cfg.resolution],
                maximal: lattice(cfg)?,
                sample_stride: 7,
            };
            let u = gauge_bump(0.9 * r, 16.0);
            let mut pass = true;
            let mut merged = VerificationReport::new("thm36");
            merged.param("R", r).param("k", tcfg.k);
            for coeffs in [
                CoefficientField::constant(EllipticMatrix::identity()),
                CoefficientField::log_log(&g, 0.2, 0.9)?,
            ] {
                let rep = verify_thm36(&g, &coeffs, &u, &tcfg)?;
                pass &= rep.pass;
                if !rep.pass {
                    for n in &rep.notes {
                        merged.note(format!("{}: {n}", coeffs.label()));
                    }
                }
                if let Some(c) = rep.constant {
                    merged.measure(format!("c_max({})", coeffs.label()), c);
                }
            }
            merged.pass = pass;
            emit(cfg, &merged, started)
        }
        "main" => {
            let started = Instant::now();
            let r = cfg.radius;
            let mcfg = MainEstimateConfig {
                p: cfg.p_list.get(1).copied().unwrap_or(2.0),
                support_radius: r,
                counts: [cfg.resolution, cfg.resolution, cfg.resolution],
            };
            // Support at 0.85R keeps three stencil cells of zero padding
            // inside the quadrature box, which the telescoping mean-zero
            // check needs.
            let corpus = vec![gauge_bump(0.85 * r, 16.0), oscillatory_bump(0.85 * r, 4.0)];
            let mut merged = VerificationReport::new("main_estimate");
            merged.param("R", r).param("p", mcfg.p);
            let mut pass = true;
            let mut last = 0.0;
            let mut monotone = true;
            for amp in [0.0, 0.1, 0.2, 0.4] {
                // Phase −1.6 puts the negative lobe of the oscillation over
                // the corpus support so growing amplitude genuinely lowers
                // the operator's pointwise ellipticity there.
                let coeffs = if amp == 0.0 {
                    CoefficientField::constant(EllipticMatrix::identity())
                } else {
                    CoefficientField::log_log_phased(&g, amp, 0.9, -1.6)?
                };
                let rep = verify_main(&g, &coeffs, &corpus, &mcfg)?;
                pass &= rep.pass;
                if !rep.pass {
                    for n in &rep.notes {
                        merged.note(format!("amplitude {amp}: {n}"));
                    }
                    merged.note(format!("amplitude {amp}: sub-check failed"));
                }
                let c = rep.constant.unwrap_or(f64::NAN);
                merged.measure(format!("c_emp(amplitude={amp})"), c);
                if c + 1e-12 < last {
                    monotone = false;
                }
                last = c;
            }
            merged.measure("monotone_in_amplitude", if monotone { 1.0 } else { 0.0 });
            merged.pass = pass && monotone;
            emit(cfg, &merged, started)
        }
        "all" => {
            let mut status = SuiteStatus::Pass;
            for name in [
                "poincare",
                "interpolation",
                "lemma1",
                "lemma2",
                "bb1",
                "lemma3",
                "thm36",
                "main",
            ] {
                status = status.merge(verify(cfg, name)?);
            }
            Ok(status)
        }
        other => Err(CarnotError::Config(format!(
            "unknown check {other:?}; expected poincare|interpolation|lemma1|lemma2|bb1|lemma3|thm36|main|all"
        ))),
    }
}

pub fn summarize(cfg: &RunConfig) -> Result<SuiteStatus> {
    let mut status = SuiteStatus::Pass;
    let mut rows = Vec::new();
    for entry in std::fs::read_dir(&cfg.output_dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !name.ends_with(".json") || name.ends_with(".timing.json") {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CarnotError::Config(format!("bad report {name}: {e}")))?;
        let check = value["check"].as_str().unwrap_or("?").to_owned();
        let pass = value["pass"].as_bool().unwrap_or(false);
        let inconclusive = value["inconclusive"].as_bool().unwrap_or(false);
        let verdict = if inconclusive {
            status = status.merge(SuiteStatus::Inconclusive);
            "INCONCLUSIVE"
        } else if pass {
            "PASS"
        } else {
            status = status.merge(SuiteStatus::Fail);
            "FAIL"
        };
        rows.push(format!("{check}: {verdict}"));
    }
    rows.sort();
    if rows.is_empty() {
        eprintln!("no reports found in {}", cfg.output_dir.display());
        return Ok(SuiteStatus::Inconclusive);
    }
    for row in rows {
        println!("{row}");
    }
    Ok(status)
}
