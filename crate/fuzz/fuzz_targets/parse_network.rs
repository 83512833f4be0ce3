#![no_main]

use libfuzzer_sys::fuzz_target;
use tollgrid::Network;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = Network::from_document(text) {
        // whatever loads must survive a round trip and path enumeration
        let again = Network::from_document(&net.to_document()).expect("round trip");
        assert_eq!(again.links(), net.links());
        let _ = tollgrid::enumerate_paths(&net, 1000);
    }
});
