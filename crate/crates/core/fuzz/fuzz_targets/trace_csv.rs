#![no_main]

use libfuzzer_sys::fuzz_target;
use quadfem::executor::VirtualDeviceTrace;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = VirtualDeviceTrace::from_csv(text) {
        let again = VirtualDeviceTrace::from_csv(&trace.to_csv()).expect("csv output parses");
        assert_eq!(again.to_csv(), trace.to_csv());
    }
});
