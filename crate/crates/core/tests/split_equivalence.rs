//! Gradients produced by the two endpoints equal those of co-located
//! backprop through encoder, channel, decoder and task.

mod common;

#[test]
fn ten_random_architectures_match_monolithic_backprop() {
    for seed in 0..10 {
        let case = common::split_case(seed);
        assert!(
            case.max_diff <= 1e-9,
            "seed {seed} ({}): max |split - monolithic| = {:e}",
            case.description,
            case.max_diff
        );
        assert!(case.param_count > 0 && case.grad_mass > 0.0, "seed {seed}: vacuous gradients");
    }
}

#[test]
fn further_architectures_match_too() {
    for seed in 100..140 {
        let case = common::split_case(seed);
        assert!(case.max_diff <= 1e-9, "seed {seed} ({}): {:e}", case.description, case.max_diff);
    }
}
