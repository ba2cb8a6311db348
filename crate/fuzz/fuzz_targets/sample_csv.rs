#![no_main]

use libfuzzer_sys::fuzz_target;
use phasekit::datagen::load_sample_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(bag) = load_sample_csv(data) {
        assert_eq!(bag.points().len(), bag.len() * bag.dim());
        assert!(bag.points().iter().all(|v| v.is_finite()));
    }
});
