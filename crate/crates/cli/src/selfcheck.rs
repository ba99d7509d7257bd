use std::fmt::Write as _;

use smoothcert::intervals::{clopper_pearson_lower, clopper_pearson_upper};
use smoothcert::lipschitz::{constraint_residual, solve_s0, verify_extremal};
use smoothcert::normal::std_normal_quantile;
use smoothcert::pub_bound::{spectral_norm_power_iteration, DMatrix, PowerIterationOptions};
use smoothcert::radii::{radius_mono, radius_mult};
use smoothcert::{BinomialObservation, RiskLevel, Sigma, TopTwoProbabilities};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{fmt_f64, CommonArgs};

pub const HEADER: &str = "check,error,tolerance,status";

struct Check {
    name: String,
    error: f64,
    tolerance: f64,
}

/// `P(lo <= X <= hi)` for `X ~ Bin(n, p)` by log-sum-exp over log-factorial sums.
fn direct_tail(n: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let mut ln_fact = vec![0.0; n as usize + 1];
    for i in 1..=n as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let terms: Vec<f64> = (lo..=hi)
        .map(|j| {
            let j_ = j as usize;
            ln_fact[n as usize] - ln_fact[j_] - ln_fact[n as usize - j_]
                + j as f64 * p.ln()
                + (n - j) as f64 * (-p).ln_1p()
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()
}

fn bisect(below: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn checks() -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for (p, expected) in
        [(0.975, 1.959_963_984_540_054), (1e-10, -6.361_340_902_404_056), (0.999, 3.090_232_306_167_813)]
    {
        let q = std_normal_quantile(p)?;
        out.push(Check {
            name: format!("quantile_{p:e}"),
            error: (q - expected).abs() / expected.abs(),
            tolerance: 1e-14,
        });
    }

    let alpha = 0.001;
    let risk = RiskLevel::new(alpha)?;
    let n = 200;
    let mut worst: f64 = 0.0;
    for k in (0..=n).step_by(10) {
        let obs = BinomialObservation::new(k, n)?;
        let lo = clopper_pearson_lower(obs, risk).value;
        let up = clopper_pearson_upper(obs, risk).value;
        let ref_lo = if k == 0 { 0.0 } else { bisect(|p| direct_tail(n, p, k, n) < alpha) };
        let ref_up = if k == n { 1.0 } else { bisect(|p| direct_tail(n, p, 0, k) > alpha) };
        worst = worst.max((lo - ref_lo).abs()).max((up - ref_up).abs());
    }
    out.push(Check { name: "clopper_pearson_vs_direct_sum_n200".into(), error: worst, tolerance: 1e-9 });

    let mut residual: f64 = 0.0;
    let mut identity: f64 = 0.0;
    for p in [0.05, 0.5, 0.9, 0.999] {
        for l in [0.5, 4.0, 100.0] {
            let sol = solve_s0(p, l)?;
            residual = residual.max(constraint_residual(p, sol.s0, l).abs());
            let report = verify_extremal(&sol, l, p);
            identity = identity.max(report.mass_residual).max(report.objective_residual);
        }
    }
    out.push(Check { name: "s0_constraint_residual".into(), error: residual, tolerance: 1e-12 });
    out.push(Check { name: "extremal_quadrature_identities".into(), error: identity, tolerance: 1e-8 });

    let m = DMatrix::from_diagonal(&vec![3.0, 1.0, 0.5].into());
    let est = spectral_norm_power_iteration(&m, PowerIterationOptions::default())?;
    out.push(Check { name: "power_iteration_diag_3_1_0.5".into(), error: (est.value - 3.0).abs(), tolerance: 1e-10 });

    let sigma = Sigma::new(0.7)?;
    let mut gap: f64 = 0.0;
    for p1 in [0.55, 0.8, 0.99] {
        let mult = radius_mult(TopTwoProbabilities::new(p1, 1.0 - p1)?, sigma).value_or_zero();
        gap = gap.max((mult - radius_mono(p1, sigma).value_or_zero()).abs());
    }
    out.push(Check { name: "mult_equals_mono_at_complement".into(), error: gap, tolerance: 1e-12 });
    Ok(out)
}

pub fn run(common: &CommonArgs) -> Result<String, CliError> {
    let manifest = RunManifest::new("selfcheck", common, common.sigma.unwrap_or(1.0), "oracle_equivalence");
    let mut out = manifest.header_line()?;
    out.push_str(HEADER);
    out.push('\n');
    let mut failed = 0;
    for c in checks()? {
        let pass = c.error <= c.tolerance;
        failed += usize::from(!pass);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.name,
            fmt_f64(c.error),
            fmt_f64(c.tolerance),
            if pass { "pass" } else { "fail" }
        );
    }
    if failed > 0 {
        return Err(CliError::Solver(format!("{failed} self checks failed\n{out}")));
    }
    Ok(out)
}
