#![no_main]

use libfuzzer_sys::fuzz_target;
use stratppi::io::{parse_csv, CsvOptions};

fuzz_target!(|data: &[u8]| {
    for binary in [false, true] {
        if let Ok(loaded) = parse_csv(data, CsvOptions { binary }) {
            assert_eq!(loaded.labeled + loaded.unlabeled, loaded.rows.len());
            for row in &loaded.rows {
                assert!(row.prediction.is_finite());
                if binary {
                    assert!((0.0..=1.0).contains(&row.prediction));
                }
            }
        }
    }
});
