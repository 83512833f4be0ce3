use rand::Rng;

use crate::delay::PriceVector;
use crate::fixtures;
use crate::flow::{Class, PathFlow, PathSet};
use crate::network::Network;

pub(crate) fn example1() -> Network {
    Network::from_document(fixtures::EXAMPLE1).unwrap()
}

pub(crate) fn single_link() -> Network {
    Network::from_document(fixtures::SINGLE_LINK).unwrap()
}

pub(crate) fn parallel2() -> Network {
    Network::from_document(fixtures::PARALLEL2).unwrap()
}

pub(crate) fn random_feasible(net: &Network, paths: &PathSet, rng: &mut impl Rng) -> PathFlow {
    let mut f = PathFlow::zeros(paths.len());
    for (w, od) in net.od_pairs().iter().enumerate() {
        for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
            let r = paths.od_range(w);
            let draws: Vec<f64> = r.clone().map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = draws.iter().sum();
            for (p, d) in r.zip(draws) {
                f.class_mut(class)[p] = demand * d / sum;
            }
        }
    }
    f
}

pub(crate) fn random_prices(n: usize, rng: &mut impl Rng) -> PriceVector {
    PriceVector::new(
        (0..n).map(|_| rng.gen_range(0.0..5.0)).collect(),
        (0..n).map(|_| rng.gen_range(0.0..5.0)).collect(),
    )
    .unwrap()
}
