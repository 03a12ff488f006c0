use std::path::Path;

use maxrom_core::snapshot::read_snapshots;

#[test]
fn independently_written_file_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/snapshot_fixture.bin");
    let set = read_snapshots(&path).unwrap();
    assert_eq!(set.num_components(), 3);
    assert_eq!(set.n_h(), 5);
    let plan = set.plan();
    assert_eq!(plan.times, vec![0.0, 0.25, 0.5, 0.75]);
    assert_eq!(plan.params, vec![vec![1.0, 0.0], vec![2.0, -1.0 / 3.0]]);
    for c in 0..3 {
        for j in 0..2 {
            for i in 0..4 {
                let col = set.column(c, i, j);
                for (row, v) in col.iter().enumerate() {
                    let expected = (c * 1000 + j * 100 + row) as f64 + i as f64 / 8.0;
                    assert_eq!(*v, expected);
                }
            }
        }
    }
    // and the writer reproduces the file byte for byte
    assert_eq!(set.encode(), std::fs::read(&path).unwrap());
}
