// The full estimation path on simulated data: summaries, cross-fitted
// nuisances chosen by a discrete super learner, then one-step and TMLE
// estimates with network-dependent intervals.

use netshift::data::{summarize, SummarySpec};
use netshift::estimate::{one_step, tmle, InferenceContext, TmleMode};
use netshift::network::NetworkKind;
use netshift::nuisance::{fit_nuisances, LearnerSpec, NuisanceConfig};
use netshift::policy::Policy;
use netshift::rng::SeedStream;
use netshift::sim::{exact_truth, simulate, DgpSpec};

pub fn run_example() -> netshift::Result<()> {
    let n = 1000;
    let net = NetworkKind::WattsStrogatz { k: 6, beta: 0.5 }.build(n, 3)?;
    let policy = Policy::additive(0.25)?;
    let frame = simulate(
        &DgpSpec::Synthetic,
        &net,
        &mut SeedStream::new(3).rng("data", &[]),
    )?;
    let sf = summarize(&frame, &net, &SummarySpec::neighbor_sum(), &policy)?;
    let cfg = NuisanceConfig {
        outcome_library: vec![
            LearnerSpec::MeanOnly,
            LearnerSpec::Linear,
            LearnerSpec::boosted(100, 0.1, 3),
        ],
        ratio_library: vec![
            LearnerSpec::Linear,
            LearnerSpec::boosted_linear(100, 0.1, 2),
        ],
        ..NuisanceConfig::default()
    };
    let nf = fit_nuisances(&sf, &policy, &cfg, 3)?;
    if let Some(sel) = &nf.outcome_selection {
        for c in &sel.risks {
            println!("outcome learner {:<28} cv risk {:.4}", c.learner, c.risk);
        }
        println!("selected {}", sel.selected);
    }
    let y = frame.outcome().expect("simulated data has an outcome");
    let degrees = net.degrees();
    let dep = net.dependency();
    let ctx = InferenceContext::new(&dep, &degrees);
    let truth = exact_truth(&DgpSpec::Synthetic, &policy, &net, None)?;
    for est in [
        one_step(&nf, y, &ctx)?,
        tmle(&nf, y, TmleMode::WeightedIntercept, &ctx)?,
    ] {
        let (lo, hi) = est.ci.expect("interval");
        println!(
            "{:<9} psi {:.4}  95% CI [{lo:.4}, {hi:.4}]",
            est.method.label(),
            est.psi
        );
    }
    println!("truth     {truth:.4}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
