// Computes the estimand three ways on one network: the exact oracle, the
// Monte Carlo average of counterfactual outcomes, and the efficiency bound.

use netshift::network::NetworkKind;
use netshift::policy::Policy;
use netshift::sim::{efficiency_bound, exact_truth, ground_truth, DgpSpec};

pub fn run_example() -> netshift::Result<()> {
    let n = 500;
    let net = NetworkKind::ErdosRenyi { mean_degree: 3.0 }.build(n, 21)?;
    let dgp = DgpSpec::Synthetic;
    for policy in [Policy::additive(0.25)?, Policy::multiplicative(1.1)?] {
        let exact = exact_truth(&dgp, &policy, &net, None)?;
        let mc = ground_truth(&dgp, &policy, &net, 200, 21)?;
        let bound = efficiency_bound(&dgp, &policy, &net, 50, 21)?;
        println!(
            "{:?} {}: exact {exact:.4}  monte carlo {:.4} (se {:.4})  bound on Var(psi) {:.3e}",
            policy.kind(),
            policy.delta(),
            mc.psi,
            mc.mc_se,
            bound.var_psi
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
