//! The interpolation inequality ‖Xu‖_p ≤ ε‖X²u‖_p + (2/ε)‖u‖_p for the
//! 1-homogeneous generators, checked for every corpus member, ε and p, plus
//! the dilation bookkeeping that maps the inequality to itself with ε → ε/λ.

use crate::calculus::TestFunction;
use crate::error::{CarnotError, Result};
use crate::grid::GridSpec;
use crate::group::CarnotGroup;
use crate::verify::VerificationReport;

/// Check the inequality over a compactly supported corpus. Norms are global
/// (the grid covers the supports with margin) and all derivatives analytic.
pub fn verify_interpolation(
    group: &CarnotGroup,
    corpus: &[TestFunction],
    p_values: &[f64],
    epsilons: &[f64],
    counts: [usize; 3],
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("interpolation");
    report
        .param(
            "epsilons",
            epsilons.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","),
        )
        .param(
            "p",
            p_values.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        );
    let mut tightest = f64::INFINITY;
    let mut all_hold = true;
    for u in corpus {
        let support = u.support().ok_or_else(|| {
            CarnotError::Domain(format!(
                "interpolation corpus must be compactly supported; {} is not",
                u.label()
            ))
        })?;
        let grid = GridSpec::for_ball(support, 1.1, counts)?;
        let cell = grid.cell_volume();
        for &p in p_values {
            for i in 0..group.generators() {
                // Global L^p norms of u, X_iu, X_i²u.
                let mut nu = 0.0;
                let mut nxu = 0.0;
                let mut nxxu = 0.0;
                for idx in 0..grid.len() {
                    let pt = grid.point(idx);
                    nu += u.value(pt).abs().powf(p);
                    nxu += u.x_first(i, pt).abs().powf(p);
                    nxxu += u.x_second(i, i, pt).abs().powf(p);
                }
                let nu = (nu * cell).powf(1.0 / p);
                let nxu = (nxu * cell).powf(1.0 / p);
                let nxxu = (nxxu * cell).powf(1.0 / p);
                for &eps in epsilons {
                    let rhs = eps * nxxu + 2.0 / eps * nu;
                    if nxu > rhs * (1.0 + 1e-9) {
                        all_hold = false;
                        report.note(format!(
                            "violated: {} X{} p={p} eps={eps}: {nxu} > {rhs}",
                            u.label(),
                            i + 1
                        ));
                    }
                    if nxu > 0.0 {
                        tightest = tightest.min(rhs / nxu);
                    }
                }
            }
        }
    }
    report.measure("tightest_rhs_over_lhs", tightest);
    report.constant = Some(tightest);
    report.pass = all_hold;
    Ok(report)
}

/// Dilation bookkeeping: replacing u by u∘D_λ maps the inequality to itself
/// with ε → ε/λ. Verified by measuring how each norm scales: ‖u∘D_λ‖_p =
/// λ^{−Q/p}‖u‖_p and each X adds one power of λ.
pub fn interpolation_scaling_identity(
    group: &CarnotGroup,
    u: &TestFunction,
    lambda: f64,
    p: f64,
    counts: [usize; 3],
) -> Result<f64> {
    let support = u
        .support()
        .ok_or_else(|| CarnotError::Domain("scaling check needs compact support".into()))?;
    let ud = u.dilated(group, lambda);
    let q = group.homogeneous_dimension() as f64;
    let norm = |f: &TestFunction, deriv: usize, sup_radius: f64| -> Result<f64> {
        let ball = crate::group::Ball::centered(sup_radius)?;
        let grid = GridSpec::for_ball(&ball, 1.1, counts)?;
        let cell = grid.cell_volume();
        let mut acc = 0.0;
        for idx in 0..grid.len() {
            let pt = grid.point(idx);
            let v = match deriv {
                0 => f.value(pt),
                1 => f.x_first(0, pt),
                _ => f.x_second(0, 0, pt),
            };
            acc += v.abs().powf(p);
        }
        Ok((acc * cell).powf(1.0 / p))
    };
    let r = support.radius;
    let mut worst: f64 = 0.0;
    for deriv in 0..3usize {
        let base = norm(u, deriv, r)?;
        let dil = norm(&ud, deriv, r / lambda)?;
        let predicted = lambda.powf(deriv as f64 - q / p) * base;
        if base > 0.0 {
            worst = worst.max((dil - predicted).abs() / predicted.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{gauge_bump, oscillatory_bump, standard_corpus};

    #[test]
    fn zero_function_holds_trivially() {
        let g = CarnotGroup::heisenberg();
        let zero = crate::calculus::TestFunction::weighted_sum(
            "zero",
            vec![(0.0, gauge_bump(0.5, 16.0))],
        );
        let report =
            verify_interpolation(&g, &[zero], &[2.0], &[0.1, 1.0, 10.0], [25, 25, 25]).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn holds_across_the_sweep() {
        let g = CarnotGroup::heisenberg();
        let corpus = standard_corpus(0.9);
        let report = verify_interpolation(
            &g,
            &corpus,
            &[1.5, 2.0, 3.0],
            &[0.1, 1.0, 10.0],
            [33, 33, 33],
        )
        .unwrap();
        assert!(report.pass, "{:?}", report.notes);
        assert!(report.constant.unwrap() >= 1.0);
    }

    #[test]
    fn scaling_maps_inequality_to_itself() {
        let g = CarnotGroup::heisenberg();
        let u = oscillatory_bump(0.9, 2.0);
        let worst = interpolation_scaling_identity(&g, &u, 2.0, 2.0, [41, 41, 41]).unwrap();
        assert!(worst < 0.02, "scaling mismatch {worst}");
    }
}
