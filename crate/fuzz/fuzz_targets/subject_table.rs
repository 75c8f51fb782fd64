#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::io::SubjectTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = SubjectTable::parse(data) {
        assert_eq!(table.names.len(), table.columns.len());
        for column in &table.columns {
            assert_eq!(column.len(), table.subject_ids.len());
            assert!(column.iter().all(|v| v.is_finite()));
        }
        let _ = table.phenotype();
    }
});
