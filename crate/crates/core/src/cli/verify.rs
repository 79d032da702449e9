//! Bundled invariant checks behind `verify --suite`.

use clap::ValueEnum;
use serde::Serialize;

use super::config::RunConfig;
use super::CliError;
use crate::dpp::{
    config_probability, correlation, enumerate_distribution, Configuration, DppSampler,
};
use crate::dynamics::{
    sector_connected, simulate, symmetric_factor, symmetry_check_detailed, RateKind, RateModel,
};
use crate::error::Result;
use crate::exact::{build_generator, check_reversibility, dirichlet_form, spectrum};
use crate::kernel::{ab_values, kernel_matrix, AdmissiblePair, KernelMatrix, Window};
use crate::rn::{apply_transposition, rn_moments, SwapPair};
use crate::rng::SeededRng;

/// Largest window the suites accept; every check enumerates the window.
pub const MAX_VERIFY_SITES: usize = 12;

const RANDOM_FORM_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Kernel,
    Dpp,
    Rn,
    Dynamics,
    Exact,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub failures: usize,
}

pub fn run_suite(suite: Suite, config: &RunConfig) -> std::result::Result<Report, CliError> {
    let w = config.window;
    if w.size() > MAX_VERIFY_SITES {
        return Err(CliError::Usage(format!(
            "--window {w}: verification enumerates the window, at most {MAX_VERIFY_SITES} sites"
        )));
    }
    let p = config.pair()?;
    let k = kernel_matrix(&p, &w)?;
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Kernel {
        checks.extend(kernel_checks(&p, &k)?);
    }
    if all || suite == Suite::Dpp {
        checks.extend(dpp_checks(&k, config)?);
    }
    if all || suite == Suite::Rn {
        checks.extend(rn_checks(&k)?);
    }
    if all || suite == Suite::Dynamics {
        checks.extend(dynamics_checks(&k, config)?);
    }
    if all || suite == Suite::Exact {
        checks.extend(exact_checks(&k, config)?);
    }
    let failures = checks.iter().filter(|c| !c.passed).count();
    Ok(Report {
        suite,
        checks,
        failures,
    })
}

fn kernel_checks(p: &AdmissiblePair, k: &KernelMatrix) -> Result<Vec<Check>> {
    let d = k.diagnostics()?;
    let mut ab: f64 = 0.0;
    for x in k.window().sites() {
        let (a, b) = ab_values(p, x)?;
        ab = ab.max((a * b - 1.0).norm());
    }
    let inside = d.diag_min.min(1.0 - d.diag_max);
    Ok(vec![
        Check::at_most("kernel_symmetry", d.max_asymmetry, 1e-12),
        Check {
            name: "kernel_diagonal_in_open_unit_interval".into(),
            passed: inside > 0.0,
            value: inside,
            tolerance: 0.0,
        },
        Check::at_most(
            "kernel_eigenvalues_in_unit_interval",
            (-d.eig_min).max(d.eig_max - 1.0),
            1e-9,
        ),
        Check::at_most(
            "kernel_trace_equals_eigenvalue_sum",
            (d.trace - d.eig_sum).abs(),
            1e-10,
        ),
        Check::at_most("ab_product_identity", ab, 1e-12),
    ])
}

fn dpp_checks(k: &KernelMatrix, config: &RunConfig) -> Result<Vec<Check>> {
    let pmf = enumerate_distribution(k)?;
    let sites: Vec<_> = k.window().sites().collect();
    let mut one: f64 = 0.0;
    let mut two: f64 = 0.0;
    for (i, &x) in sites.iter().enumerate() {
        one = one.max((pmf.marginal(&[x])? - k.get(x, x)).abs());
        for &y in &sites[i + 1..] {
            two = two.max((pmf.marginal(&[x, y])? - correlation(k, &[x, y])?).abs());
        }
    }

    let sampler = DppSampler::new(k)?;
    let base = SeededRng::new(config.seed);
    let n = config.n_samples;
    let counts: Vec<f64> = (0..n)
        .map(|i| sampler.sample(&mut base.stream(i as u64)).particle_count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var: f64 = sampler.eigenvalues().iter().map(|l| l * (1.0 - l)).sum();
    let z_score = if var > 0.0 {
        (mean - k.trace()).abs() / (var / n as f64).sqrt()
    } else {
        (mean - k.trace()).abs()
    };

    Ok(vec![
        Check::at_most("pmf_total", (pmf.total() - 1.0).abs(), 1e-9),
        Check::at_most("pmf_nonnegative", (-pmf.min()).max(0.0), 1e-12),
        Check::at_most("one_point_marginals", one, 1e-10),
        Check::at_most("two_point_marginals", two, 1e-10),
        Check::at_most("sampler_mean_count_sigmas", z_score, 4.0),
    ])
}

fn rn_checks(k: &KernelMatrix) -> Result<Vec<Check>> {
    let w = k.window();
    let mut pairs = vec![SwapPair::new(w.lo(), w.hi())];
    if w.size() > 2 {
        pairs.push(SwapPair::new(w.lo(), w.site(1)));
    }
    let mut inversion: f64 = 0.0;
    let mut mean: f64 = 0.0;
    for s in pairs.into_iter().filter_map(|s| s.ok()) {
        let m = rn_moments(k, s)?;
        inversion = inversion.max(m.max_inversion_residual);
        mean = mean.max((m.mean - 1.0).abs());
    }
    Ok(vec![
        Check::at_most("rn_inversion", inversion, 1e-9),
        Check::at_most("rn_mean_is_one", mean, 1e-9),
    ])
}

fn balance_and_factor(model: &RateModel, k: &KernelMatrix) -> Result<(f64, f64)> {
    let w = *k.window();
    let n = w.size();
    let mut balance: f64 = 0.0;
    let mut factor: f64 = 0.0;
    for m in 0..1u64 << n {
        let gamma = Configuration::from_bits(w, m);
        if config_probability(k, &gamma)? <= 0.0 {
            continue;
        }
        for i in 0..n {
            for j in i + 1..n {
                if (m >> i & 1) == (m >> j & 1) {
                    continue;
                }
                let s = SwapPair::new(w.site(i), w.site(j))?;
                balance = balance.max(symmetry_check_detailed(model, k, &gamma, s)?.relative());
                let a = symmetric_factor(model, k, &gamma, s)?;
                let b = symmetric_factor(model, k, &apply_transposition(&gamma, s)?, s)?;
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    factor = factor.max((a - b).abs() / scale);
                }
            }
        }
    }
    Ok((balance, factor))
}

fn dynamics_checks(k: &KernelMatrix, config: &RunConfig) -> Result<Vec<Check>> {
    let base = config.model();
    let mut checks = Vec::new();
    for kind in RateKind::ALL {
        let model = RateModel::new(kind, base.proximity);
        let (balance, factor) = balance_and_factor(&model, k)?;
        checks.push(Check::at_most(
            format!("detailed_balance_{kind}"),
            balance,
            1e-10,
        ));
        checks.push(Check::at_most(
            format!("symmetric_factor_{kind}"),
            factor,
            1e-10,
        ));
    }
    let n = k.window().size();
    let mut disconnected = 0;
    for count in 0..=n {
        if !sector_connected(&base, k, count)? {
            disconnected += 1;
        }
    }
    checks.push(Check::at_most(
        "sectors_connected",
        disconnected as f64,
        0.0,
    ));

    let initial = alternating(*k.window());
    let t_max = config.t_max.min(10.0);
    let run = |seed| simulate(&base, k, &initial, t_max, &mut SeededRng::new(seed));
    let first = run(config.seed)?;
    let drift = first
        .states()
        .map(|c| c.particle_count().abs_diff(initial.particle_count()))
        .max()
        .unwrap_or(0);
    checks.push(Check::at_most(
        "trajectory_conserves_particles",
        drift as f64,
        0.0,
    ));
    let second = run(config.seed)?;
    let same = first.events == second.events;
    checks.push(Check::at_most(
        "trajectory_seed_determinism",
        if same { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(checks)
}

fn exact_checks(k: &KernelMatrix, config: &RunConfig) -> Result<Vec<Check>> {
    let base = config.model();
    let sector = k.window().size() / 2;
    let mut rng = SeededRng::new(config.seed);
    let mut checks = Vec::new();
    for kind in RateKind::ALL {
        let g = build_generator(&RateModel::new(kind, base.proximity), k, Some(sector))?;
        let mut identity: f64 = 0.0;
        for _ in 0..RANDOM_FORM_PAIRS {
            let f: Vec<f64> = (0..g.len()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            let h: Vec<f64> = (0..g.len()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            identity =
                identity.max((dirichlet_form(&g, &f, &h)? - g.generator_form(&f, &h)?).abs());
        }
        let ones = vec![1.0; g.len()];
        let s = spectrum(&g)?;
        let top = s.eigenvalues.first().copied().unwrap_or(0.0);
        let max_eig = s
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut row_sum: f64 = 0.0;
        let mut min_entry: f64 = 0.0;
        for t in [0.1, 1.0, 10.0] {
            let e = g.semigroup(t)?;
            for i in 0..g.len() {
                row_sum = row_sum.max((e.row(i).iter().sum::<f64>() - 1.0).abs());
                min_entry = e.row(i).iter().copied().fold(min_entry, f64::min);
            }
        }
        checks.extend([
            Check::at_most(
                format!("conservativity_{kind}"),
                g.conservativity_residual(),
                1e-12,
            ),
            Check::at_most(
                format!("stationarity_{kind}"),
                g.stationarity_residual(),
                1e-10,
            ),
            Check::at_most(
                format!("reversibility_{kind}"),
                check_reversibility(&g),
                1e-10,
            ),
            Check::at_most(format!("dirichlet_form_identity_{kind}"), identity, 1e-10),
            Check::at_most(
                format!("dirichlet_form_constant_{kind}"),
                dirichlet_form(&g, &ones, &ones)?.abs(),
                1e-12,
            ),
            Check::at_most(format!("spectrum_nonpositive_{kind}"), max_eig, 1e-10),
            Check::at_most(format!("spectrum_zero_eigenvalue_{kind}"), top.abs(), 1e-10),
            Check::at_most(format!("semigroup_row_sums_{kind}"), row_sum, 1e-9),
            Check::at_most(format!("semigroup_nonnegative_{kind}"), -min_entry, 1e-9),
        ]);
    }
    Ok(checks)
}

/// `1010…` starting occupied at the left end.
pub fn alternating(w: Window) -> Configuration {
    let occupancy = (0..w.size()).map(|i| i % 2 == 0).collect();
    Configuration::new(w, occupancy).expect("length matches window")
}

#[cfg(test)]
mod tests {
    use super::super::config::Settings;
    use super::*;

    fn config(window: &str) -> RunConfig {
        RunConfig::resolve(
            Settings {
                window: Some(window.into()),
                n_samples: Some(200),
                ..Settings::default()
            },
            Settings::default(),
        )
        .unwrap()
    }

    #[test]
    fn all_suites_pass_on_small_window() {
        let r = run_suite(Suite::All, &config("-3..3")).unwrap();
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(r.failures, 0);
        assert!(r.checks.len() > 30);
    }

    #[test]
    fn single_suite_and_size_limit() {
        let r = run_suite(Suite::Kernel, &config("-2..2")).unwrap();
        assert_eq!(r.checks.len(), 5);
        assert!(matches!(
            run_suite(Suite::Dpp, &config("0..12")),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn report_schema() {
        let r = run_suite(Suite::Rn, &config("-2..2")).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["suite"], "rn");
        assert_eq!(v["failures"], 0);
        let c = &v["checks"][0];
        for key in ["name", "passed", "value", "tolerance"] {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
}
