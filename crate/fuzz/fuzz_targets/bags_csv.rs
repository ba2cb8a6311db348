#![no_main]

use libfuzzer_sys::fuzz_target;
use phasekit::datagen::load_bags_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(bags) = load_bags_csv(data) {
        for bag in &bags {
            assert!(bag.dim() > 0);
            assert_eq!(bag.points().len(), bag.len() * bag.dim());
            assert!(bag.points().iter().all(|v| v.is_finite()));
        }
    }
});
