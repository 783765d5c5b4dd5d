// Contrasts the network-dependent variance of an influence-function average
// with the variance obtained by wrongly treating units as independent.

use netshift::data::{summarize, SummarySpec};
use netshift::estimate::{eif_components, variance};
use netshift::network::{DependencyStructure, NetworkKind};
use netshift::policy::Policy;
use netshift::rng::SeedStream;
use netshift::sim::{simulate, true_nuisances, DgpSpec, LinearDgp};

pub fn run_example() -> netshift::Result<()> {
    let n = 1500;
    let dgp = DgpSpec::Linear(LinearDgp {
        n_covariates: 4,
        coefficient: 0.5,
        exposure_intercept: 1.0,
        outcome_intercept: 0.0,
        ..LinearDgp::default()
    });
    let policy = Policy::additive(0.5)?;
    for mean_degree in [1.0, 3.0, 8.0] {
        let net = NetworkKind::ErdosRenyi { mean_degree }.build(n, 5)?;
        let frame = simulate(&dgp, &net, &mut SeedStream::new(5).rng("data", &[]))?;
        let sf = summarize(&frame, &net, &SummarySpec::neighbor_sum(), &policy)?;
        let nf = true_nuisances(&dgp, &policy, &net, &frame)?;
        let eif = eif_components(&nf, frame.outcome().expect("outcome"), &sf.degrees)?;
        let dependent = variance(&eif, &net.dependency());
        let independent = variance(&eif, &DependencyStructure::independent(n));
        println!(
            "mean degree {mean_degree:>3}: Var(psi) network {:.3e}  as-iid {:.3e}  ratio {:.2}",
            dependent.var_psi,
            independent.var_psi,
            dependent.var_psi / independent.var_psi
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
