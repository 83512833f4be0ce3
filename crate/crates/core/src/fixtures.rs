//! Network documents shipped with the crate.

/// Three nodes, four links, O/D pairs A->B and A->C, homogeneous asymmetry 1/3.
pub const EXAMPLE1: &str = include_str!("../fixtures/example1.net");
/// [`EXAMPLE1`] with equal human and autonomous capacities.
pub const EXAMPLE1_MU1: &str = include_str!("../fixtures/example1_mu1.net");
pub const SINGLE_LINK: &str = include_str!("../fixtures/single_link.net");
/// Two parallel links, one nearly constant at delay 2 and one with delay equal to its flow.
pub const PIGOU2: &str = include_str!("../fixtures/pigou2.net");
/// Two identical parallel links carrying both classes.
pub const PARALLEL2: &str = include_str!("../fixtures/parallel2.net");
/// Two parallel links, one quadratic and one linear, carrying both classes.
pub const TWO_ROUTE_MIXED: &str = include_str!("../fixtures/two_route_mixed.net");

/// Every shipped fixture with its file name.
pub const ALL: [(&str, &str); 6] = [
    ("example1.net", EXAMPLE1),
    ("example1_mu1.net", EXAMPLE1_MU1),
    ("single_link.net", SINGLE_LINK),
    ("pigou2.net", PIGOU2),
    ("parallel2.net", PARALLEL2),
    ("two_route_mixed.net", TWO_ROUTE_MIXED),
];

/// Looks a shipped fixture up by file name.
pub fn by_name(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
