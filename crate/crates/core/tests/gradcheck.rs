mod common;

#[test]
fn every_op_matches_central_differences() {
    for (name, worst) in common::gradient_suite(50, 11) {
        println!("{name:>28} {worst:.2e}");
        assert!(worst <= 1e-4, "{name}: worst relative error {worst:e}");
    }
}
