use tilesynth_nn::gradcheck::{corrupted_sentinel, op_suite, SUITE_OPS};

#[test]
fn every_op_within_tolerance() {
    let results = op_suite(2024, 10).unwrap();
    assert_eq!(results.len(), SUITE_OPS.len() * 10);
    for op in SUITE_OPS {
        let worst = results.iter().filter(|r| r.op == op).map(|r| r.error).fold(0.0, f64::max);
        println!("{op:18} worst relative error {worst:.3e}");
    }
    for r in &results {
        assert!(r.error <= 1e-3, "{} on {:?}: {:.3e}", r.op, r.input_shape, r.error);
    }
}

#[test]
fn other_seeds_also_pass() {
    for seed in [1, 77, 31337] {
        for r in op_suite(seed, 3).unwrap() {
            assert!(r.error <= 1e-3, "seed {seed} {} on {:?}: {:.3e}", r.op, r.input_shape, r.error);
        }
    }
}

#[test]
fn sentinel_is_flagged() {
    assert!(corrupted_sentinel(5).unwrap() > 0.1);
}
