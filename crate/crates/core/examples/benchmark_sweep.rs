// A small factorial benchmark comparing the network estimators with the
// network-blind comparators, written to a directory as JSONL, JSON and CSV.

use netshift::network::NetworkKind;
use netshift::nuisance::{LearnerSpec, NuisanceConfig};
use netshift::policy::Policy;
use netshift::sim::{run_benchmark, BenchMethod, BenchmarkConfig, DgpSpec, LinearDgp};

pub fn run_example() -> netshift::Result<()> {
    let cfg = BenchmarkConfig {
        networks: vec![
            NetworkKind::ErdosRenyi { mean_degree: 3.0 },
            NetworkKind::WattsStrogatz { k: 4, beta: 0.3 },
        ],
        n_grid: vec![300],
        reps: 8,
        methods: BenchMethod::ALL.to_vec(),
        dgp: DgpSpec::Linear(LinearDgp {
            n_covariates: 4,
            coefficient: 0.3,
            exposure_intercept: 1.0,
            outcome_intercept: 0.0,
            ..LinearDgp::default()
        }),
        policy: Policy::additive(0.5)?,
        nuisance: NuisanceConfig {
            outcome_library: vec![LearnerSpec::Linear],
            ratio_library: vec![LearnerSpec::Linear],
            ..NuisanceConfig::default()
        },
        seed: 9,
        ..BenchmarkConfig::default()
    };
    let result = run_benchmark(&cfg)?;
    for a in &result.aggregates {
        println!(
            "{:<15} {:<24} bias {:>7.2}%  coverage {:>5.1}%  ci width {:.3}",
            a.network,
            a.method.label(),
            a.bias_pct,
            a.coverage_pct,
            a.ci_width
        );
    }
    let dir = std::env::temp_dir().join("netshift-benchmark-example");
    result.write(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
