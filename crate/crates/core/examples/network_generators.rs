// Builds the three random graph families and reports their degree profile
// and the size of the dependency mask used by the variance estimator.

use netshift::network::NetworkKind;

pub fn run_example() -> netshift::Result<()> {
    let n = 2000;
    for kind in [
        NetworkKind::ErdosRenyi { mean_degree: 3.0 },
        NetworkKind::WattsStrogatz { k: 6, beta: 0.5 },
        NetworkKind::ScaleFree {
            lambda: 3.5,
            m: 2.0,
        },
    ] {
        let net = kind.build(n, 7)?;
        let isolated = net.degrees().iter().filter(|&&k| k == 0).count();
        let dep = net.dependency();
        println!(
            "{:<16} edges {:>5}  mean degree {:.2}  max degree {:>3}  isolated {:>4}  dependent pairs {}",
            kind.label(),
            net.edge_count(),
            net.mean_degree(),
            net.k_max(),
            isolated,
            dep.pair_count()
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
