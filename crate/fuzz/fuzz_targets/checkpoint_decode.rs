#![no_main]

use histent_core::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(st) = decode(data) {
        decode(&encode(&st)).expect("re-encoded state decodes");
    }
});
