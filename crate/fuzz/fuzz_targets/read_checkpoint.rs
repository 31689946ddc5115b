#![no_main]

use libfuzzer_sys::fuzz_target;
use minifair_core::mf::MfModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = MfModel::read_checkpoint(data) {
        let mut a = Vec::new();
        model.write_checkpoint(&mut a).unwrap();
        let again = MfModel::read_checkpoint(a.as_slice()).expect("own output parses");
        let mut b = Vec::new();
        again.write_checkpoint(&mut b).unwrap();
        assert_eq!(a, b);
    }
});
