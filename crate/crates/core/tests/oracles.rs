//! Sanity checks on the reference implementations themselves.

mod common;

use common::*;
use glance_core::temporal_map::Moment;

fn mo(start: usize, end: usize) -> Moment {
    Moment { start, end }
}

#[test]
fn lone_positive_has_zero_loss() {
    assert_eq!(oracle_loss_from_scores(&[0.7], &[1.0], &[], 0.1), 0.0);
    let loss = oracle_loss(&[1.0, 2.0], &[vec![3.0, -1.0]], &[1.0], &[], 0.1);
    assert!(loss.abs() < 1e-15);
}

#[test]
fn two_key_case() {
    // cos = 0.5 for the positive, 0 for the negative; log(1 + e^-5).
    let q = [1.0, 0.0];
    let pos = vec![vec![0.5, 0.75f64.sqrt()]];
    let neg = vec![vec![0.0, 1.0]];
    let loss = oracle_loss(&q, &pos, &[1.0], &neg, 0.1);
    assert!((loss - 0.006715348489117967).abs() < 1e-12, "{loss}");
}

#[test]
fn recall_edge_cases() {
    let gts = [mo(0, 2), mo(3, 5)];
    let perfect = vec![vec![mo(0, 2)], vec![mo(3, 5)]];
    assert_eq!(oracle_recall(&perfect, &gts, 1, 0.7), 1.0);
    let far = vec![vec![mo(7, 9)], vec![mo(0, 0)]];
    assert_eq!(oracle_recall(&far, &gts, 5, 0.1), 0.0);
    let late = vec![vec![mo(7, 9), mo(0, 2)], vec![mo(0, 0), mo(3, 5)]];
    assert_eq!(oracle_recall(&late, &gts, 1, 0.5), 0.0);
    assert_eq!(oracle_recall(&late, &gts, 2, 0.5), 1.0);
}

#[test]
fn iou_by_counting() {
    assert_eq!(oracle_iou(mo(0, 3), mo(2, 5)), 2.0 / 6.0);
    assert_eq!(oracle_iou(mo(4, 4), mo(4, 4)), 1.0);
    assert_eq!(oracle_iou(mo(0, 1), mo(3, 4)), 0.0);
}

#[test]
fn nms_keeps_first_and_drops_overlaps() {
    let sorted = [mo(0, 3), mo(0, 2), mo(5, 7), mo(6, 7)];
    assert_eq!(oracle_nms(&sorted, 0.5), vec![mo(0, 3), mo(5, 7)]);
    assert_eq!(oracle_nms(&sorted, 1.0), sorted.to_vec());
}

#[test]
fn dga_single_center_is_scaled_gaussian() {
    let n = 9;
    let mut mask = vec![false; n];
    mask[3] = true;
    let r = vec![0.5; n];
    let g = oracle_gaussian(n, 3, 0.3);
    for per_clip in [true, false] {
        let out = oracle_dga(&r, &mask, n, 0.3, per_clip);
        for i in 0..n {
            assert!((out[i] - 0.5 * g[i]).abs() < 1e-15);
        }
    }
}

#[test]
fn dga_full_mask_with_uniform_relevance_is_symmetric() {
    let n = 10;
    let out = oracle_dga(&vec![1.0; n], &vec![true; n], n, 0.4, true);
    for i in 0..n {
        assert!((out[i] - out[n - 1 - i]).abs() < 1e-12);
    }
    assert!(out[n / 2] > out[0]);
}

#[test]
fn gaussian_reference_points() {
    let g = oracle_gaussian(11, 5, 0.3);
    assert_eq!(g[5], 1.0);
    assert!((g[6] - 0.800).abs() < 1e-3);
    assert!((g[7] - 0.409).abs() < 1e-3);
}
