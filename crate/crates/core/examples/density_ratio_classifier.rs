// Estimates the shifted-to-natural density ratio by classifying stacked
// natural and shifted feature rows, and compares it with the analytic ratio
// of the linear-Gaussian simulation.

use netshift::data::{summarize, SummarySpec};
use netshift::network::NetworkKind;
use netshift::nuisance::{design, fit_density_ratio, make_folds, FeatureConfig, LearnerSpec};
use netshift::policy::Policy;
use netshift::rng::SeedStream;
use netshift::sim::{simulate, true_nuisances, DgpSpec, LinearDgp};

pub fn run_example() -> netshift::Result<()> {
    let n = 2000;
    let net = NetworkKind::ErdosRenyi { mean_degree: 3.0 }.build(n, 11)?;
    let dgp = DgpSpec::Linear(LinearDgp {
        n_covariates: 4,
        coefficient: 0.3,
        exposure_intercept: 1.0,
        outcome_intercept: 0.0,
        ..LinearDgp::default()
    });
    let policy = Policy::additive(0.5)?;
    let frame = simulate(&dgp, &net, &mut SeedStream::new(11).rng("data", &[]))?;
    let sf = summarize(&frame, &net, &SummarySpec::neighbor_sum(), &policy)?;
    let features = FeatureConfig::default();
    let natural = design(&sf, &features, false);
    let shifted = design(&sf, &features, true);
    let plan = make_folds(n, 5, 11)?;
    let truth = true_nuisances(&dgp, &policy, &net, &frame)?;
    for spec in [LearnerSpec::Linear, LearnerSpec::boosted(100, 0.1, 2)] {
        let fit = fit_density_ratio(
            natural.view(),
            shifted.view(),
            std::slice::from_ref(&spec),
            &plan,
            (1e-3, 1e3),
        )?;
        let rel = fit
            .natural
            .iter()
            .zip(&truth.rho)
            .map(|(est, tru)| (est / tru - 1.0).abs())
            .sum::<f64>()
            / n as f64;
        let mean = fit.natural.iter().sum::<f64>() / n as f64;
        println!(
            "{:<24} mean ratio {mean:.3}  mean relative error {rel:.3}  clipped {}",
            spec.to_string(),
            fit.clip_count
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
