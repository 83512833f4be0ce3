#![no_main]

use libfuzzer_sys::fuzz_target;
use tollgrid::report::parse_prices;
use tollgrid::Network;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let net = Network::from_document(tollgrid::fixtures::EXAMPLE1).unwrap();
    if let Ok(tau) = parse_prices(text, &net) {
        assert!(tau.validate(net.num_links()).is_ok());
    }
});
