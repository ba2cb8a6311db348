#![no_main]

use libfuzzer_sys::fuzz_target;
use phasekit::experiments::{AbcRunConfig, PairedDiffConfig, RegressShiftConfig, SweepConfig};
use phasekit::spectral::{FrequencyMeta, FrequencySet};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<SweepConfig>(data);
    let _ = serde_json::from_slice::<PairedDiffConfig>(data);
    let _ = serde_json::from_slice::<RegressShiftConfig>(data);
    let _ = serde_json::from_slice::<AbcRunConfig>(data);
    let _ = serde_json::from_slice::<FrequencyMeta>(data);
    if let Ok(set) = serde_json::from_slice::<FrequencySet>(data) {
        assert_eq!(set.as_slice().len(), set.m() * set.dim());
    }
});
