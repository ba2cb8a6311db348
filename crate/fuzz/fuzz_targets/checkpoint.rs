#![no_main]

use libfuzzer_sys::fuzz_target;
use phasekit::freqnet::parse_checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = parse_checkpoint(data) {
        assert_eq!(params.w.len(), params.p * params.m);
        let again = parse_checkpoint(params.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(again, params);
    }
});
