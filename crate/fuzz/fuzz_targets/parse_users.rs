#![no_main]

use libfuzzer_sys::fuzz_target;
use minifair_core::ingest::{self, DatasetFormat};

// The first byte picks the layout.
fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else {
        return;
    };
    let format = if which & 1 == 0 {
        DatasetFormat::Ml1m
    } else {
        DatasetFormat::Ml100k
    };
    let _ = ingest::read_users(rest, format);
});
