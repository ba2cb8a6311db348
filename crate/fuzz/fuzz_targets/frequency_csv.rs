#![no_main]

use libfuzzer_sys::fuzz_target;
use phasekit::spectral::parse_frequency_csv;

// First byte picks the dimension, the rest is the CSV body.
fuzz_target!(|data: &[u8]| {
    let Some((&d, body)) = data.split_first() else { return };
    let d = usize::from(d % 8);
    if let Ok(omegas) = parse_frequency_csv(body, d) {
        assert!(d > 0);
        assert_eq!(omegas.len() % d, 0);
    }
});
