//! Library ops against loop-based references on randomized small instances.

mod common;

use common::checks::{self, worst, TRIALS};

fn assert_oracle(trial: fn(u64) -> f64, tol: f64) {
    let err = worst(trial);
    assert!(err <= tol, "max abs error {err:e} over {TRIALS} trials exceeds {tol:e}");
}

#[test]
fn channel_attention_matches_loops() {
    assert_oracle(checks::trial_channel_attention, 1e-9);
}

#[test]
fn gamma_matches_loops() {
    assert_oracle(checks::trial_gamma, 1e-9);
}

#[test]
fn cross_attention_matches_scaled_dot_product() {
    assert_oracle(checks::trial_cross_attention, 1e-9);
}

#[test]
fn hpp_matches_strip_pooling() {
    assert_oracle(checks::trial_hpp, 1e-9);
}

#[test]
fn triplet_matches_exhaustive_triples() {
    assert_oracle(checks::trial_triplet, 1e-9);
}

#[test]
fn cross_entropy_matches_per_sample_log_softmax() {
    assert_oracle(checks::trial_cross_entropy, 1e-9);
}

#[test]
fn retrieval_matches_full_sort() {
    assert_oracle(checks::trial_retrieval, 1e-9);
}

#[test]
fn projection_matches_pixel_scan() {
    assert_oracle(checks::trial_projection, 0.0);
}
