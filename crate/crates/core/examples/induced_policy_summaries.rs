// Applies unit-level policies, pushes them through network summaries and
// prints the induced weights and the per-degree positivity check.

use netshift::data::{check_positivity, summarize, Column, Frame, SummaryKind, SummarySpec};
use netshift::network::Network;
use netshift::policy::{induced_weight, Policy};

pub fn run_example() -> netshift::Result<()> {
    // A path 0-1-2-3 plus an isolated unit 4.
    let net = Network::from_edges(5, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0)], false)?;
    let frame = Frame::new(
        vec![Column::new("age", vec![30.0, 41.0, 25.0, 52.0, 38.0])],
        vec![1.0, 2.0, 0.5, 3.0, 1.5],
        None,
    )?;
    for policy in [Policy::additive(0.5)?, Policy::multiplicative(1.2)?] {
        for kind in [
            SummaryKind::NeighborSum,
            SummaryKind::NeighborWeightedSum,
            SummaryKind::NeighborMean,
        ] {
            let spec = SummarySpec::new(kind);
            let sf = summarize(&frame, &net, &spec, &policy)?;
            let weights: Vec<f64> = (0..net.n())
                .map(|i| induced_weight(&policy, &spec, &net, i))
                .collect::<netshift::Result<_>>()?;
            println!("{:?} {:?}", policy.kind(), kind);
            println!("  A^s      {:?}", sf.a_s);
            println!("  s(d(A))  {:?}", sf.a_s_d);
            println!("  weight   {weights:?}");
        }
    }
    let sf = summarize(
        &frame,
        &net,
        &SummarySpec::neighbor_sum(),
        &Policy::additive(0.5)?,
    )?;
    for s in check_positivity(&sf, 0.05).strata {
        println!(
            "degree {} units {} outside {} flagged {}",
            s.degree, s.units, s.outside, s.flagged
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
