#![no_main]

use libfuzzer_sys::fuzz_target;
use minifair_core::ingest::{self, DatasetFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(xs) = ingest::read_ratings(data, DatasetFormat::Ml1m) {
        assert!(xs.iter().all(|x| (1.0..=5.0).contains(&x.rating)));
        let _ = ingest::k_core_filter(&xs, 2);
    }
});
