//! Loss-layer checks: Sinkhorn reference equivalence, swapped-prediction
//! symmetry and entropy bound, finite-difference gradient verification, and
//! property tests over the probability invariants.

mod oracles;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rspin_core::auxiliary::{aux_loss, aux_loss_grad, PseudoLabelSeq};
use rspin_core::mat::l2_normalize_rows;
use rspin_core::spin::{
    code_probs, sinkhorn_smooth, spin_loss, spin_loss_grad, Codebook,
};

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.random_range(-scale..=scale);
    }
    m
}

fn random_unit_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = random_matrix(rows, cols, 1.0, rng);
    l2_normalize_rows(&mut m).unwrap();
    m
}

/// Random row-stochastic matrix (targets for the swapped-prediction loss).
fn random_prob_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for mut row in m.rows_mut() {
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = rng.random_range(0.01..1.0);
            sum += *v;
        }
        row.mapv_inplace(|v| v / sum);
    }
    m
}

// --- Sinkhorn ----------------------------------------------------------------

#[test]
fn sinkhorn_matches_reference_loop_on_fixture() {
    let logits = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    let q = sinkhorn_smooth(&logits, 0.05, 3).unwrap();
    let reference = oracles::sinkhorn_reference(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.05, 3);
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (q[[i, j]] - reference[i][j]).abs() < 1e-10,
                "[{i},{j}]: {} vs {}",
                q[[i, j]],
                reference[i][j]
            );
        }
    }
}

#[test]
fn sinkhorn_matches_reference_loop_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let b = rng.random_range(4..40);
        let k = rng.random_range(2..=8.min(b));
        let logits = random_matrix(b, k, 2.0, &mut rng);
        let q = sinkhorn_smooth(&logits, 0.1, 4).unwrap();
        let rows: Vec<Vec<f64>> = (0..b).map(|i| logits.row(i).to_vec()).collect();
        let reference = oracles::sinkhorn_reference(&rows, 0.1, 4);
        for i in 0..b {
            for j in 0..k {
                assert!((q[[i, j]] - reference[i][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn sinkhorn_marginals_within_tolerance_at_smoothing_scale() {
    // The 0.1% column tolerance after 3 iterations holds for score spreads
    // at the smoothing scale; larger spreads need more iterations.
    let eps = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let logits = random_matrix(64, 8, eps, &mut rng);
    let q = sinkhorn_smooth(&logits, eps, 3).unwrap();
    for row in q.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-6);
    }
    let target = 64.0 / 8.0;
    for j in 0..8 {
        let s: f64 = (0..64).map(|i| q[[i, j]]).sum();
        assert!(
            (s - target).abs() / target < 1e-3,
            "column {j} sum {s} vs {target}"
        );
    }
}

// --- swapped-prediction loss ---------------------------------------------------

#[test]
fn view_exchange_symmetry_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..20 {
        let b = rng.random_range(1..20);
        let k = rng.random_range(2..8);
        let p = random_prob_matrix(b, k, &mut rng);
        let pt = random_prob_matrix(b, k, &mut rng);
        let q = random_prob_matrix(b, k, &mut rng);
        let qt = random_prob_matrix(b, k, &mut rng);
        let a = spin_loss(&p, &pt, &q, &qt).unwrap();
        let bb = spin_loss(&pt, &p, &qt, &q).unwrap();
        assert_eq!(a.to_bits(), bb.to_bits(), "{a} vs {bb}");
    }
}

#[test]
fn cross_entropy_dominates_entropy_per_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..1000 {
        let k = rng.random_range(2..16);
        let q = random_prob_matrix(1, k, &mut rng);
        let p = random_prob_matrix(1, k, &mut rng);
        let ce: f64 = -(0..k).map(|j| q[[0, j]] * p[[0, j]].max(1e-30).ln()).sum::<f64>();
        let h: f64 = -(0..k).map(|j| q[[0, j]] * q[[0, j]].max(1e-30).ln()).sum::<f64>();
        assert!(ce >= h - 1e-9, "CE {ce} < H {h}");
    }
}

#[test]
fn loss_bounded_below_by_mean_target_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let b = 32;
    let k = 6;
    let p = random_prob_matrix(b, k, &mut rng);
    let pt = random_prob_matrix(b, k, &mut rng);
    let q = random_prob_matrix(b, k, &mut rng);
    let qt = random_prob_matrix(b, k, &mut rng);
    let loss = spin_loss(&p, &pt, &q, &qt).unwrap();
    let entropy = |m: &Array2<f64>| -> f64 {
        -m.iter().map(|&v| v * v.max(1e-30).ln()).sum::<f64>()
    };
    let bound = (entropy(&q) + entropy(&qt)) / (2.0 * b as f64);
    assert!(loss >= bound - 1e-9, "loss {loss} below entropy bound {bound}");
}

// --- finite-difference oracles --------------------------------------------------

/// Central difference of a scalar function at x, step h.
fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn spin_gradients_match_finite_differences() {
    let h_step = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    for instance in 0..20 {
        let b = rng.random_range(2..=6);
        let k = rng.random_range(2..=4);
        let d = rng.random_range(2..=5);
        let z = random_unit_rows(b, d, &mut rng);
        let zt = random_unit_rows(b, d, &mut rng);
        let cb = Codebook::new(random_unit_rows(k, d, &mut rng), 0.3).unwrap();
        let q = random_prob_matrix(b, k, &mut rng);
        let qt = random_prob_matrix(b, k, &mut rng);

        let grads = spin_loss_grad(&z, &zt, &cb, &q, &qt).unwrap();

        let loss_at = |z: &Array2<f64>, zt: &Array2<f64>, cb: &Codebook| -> f64 {
            let p = code_probs(z, cb).unwrap();
            let pt = code_probs(zt, cb).unwrap();
            spin_loss(&p, &pt, &q, &qt).unwrap()
        };

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in 0..b {
            for j in 0..d {
                analytic.push(grads.z[[i, j]]);
                numeric.push(central_diff(
                    |x| {
                        let mut zz = z.clone();
                        zz[[i, j]] = x;
                        loss_at(&zz, &zt, &cb)
                    },
                    z[[i, j]],
                    h_step,
                ));
                analytic.push(grads.z_tilde[[i, j]]);
                numeric.push(central_diff(
                    |x| {
                        let mut zz = zt.clone();
                        zz[[i, j]] = x;
                        loss_at(&z, &zz, &cb)
                    },
                    zt[[i, j]],
                    h_step,
                ));
            }
        }
        for i in 0..k {
            for j in 0..d {
                analytic.push(grads.codebook[[i, j]]);
                numeric.push(central_diff(
                    |x| {
                        let mut c2 = cb.clone();
                        c2.vectors[[i, j]] = x;
                        loss_at(&z, &zt, &c2)
                    },
                    cb.vectors[[i, j]],
                    h_step,
                ));
            }
        }
        let err = oracles::max_grad_rel_err(&analytic, &numeric, 1e-8);
        assert!(err <= 1e-4, "instance {instance}: max rel err {err:e}");
    }
}

#[test]
fn aux_gradients_match_finite_differences() {
    let h_step = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for instance in 0..20 {
        let b = rng.random_range(2..=6);
        let v = rng.random_range(2..=5);
        let logits = random_matrix(b, v, 2.0, &mut rng);
        let logits_t = random_matrix(b, v, 2.0, &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..v)).collect();
        let y = PseudoLabelSeq::new(labels, v).unwrap();

        let (g, gt) = aux_loss_grad(&logits, &logits_t, &y).unwrap();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in 0..b {
            for j in 0..v {
                analytic.push(g[[i, j]]);
                numeric.push(central_diff(
                    |x| {
                        let mut l2 = logits.clone();
                        l2[[i, j]] = x;
                        aux_loss(&l2, &logits_t, &y).unwrap()
                    },
                    logits[[i, j]],
                    h_step,
                ));
                analytic.push(gt[[i, j]]);
                numeric.push(central_diff(
                    |x| {
                        let mut l2 = logits_t.clone();
                        l2[[i, j]] = x;
                        aux_loss(&logits, &l2, &y).unwrap()
                    },
                    logits_t[[i, j]],
                    h_step,
                ));
            }
        }
        let err = oracles::max_grad_rel_err(&analytic, &numeric, 1e-8);
        assert!(err <= 1e-4, "instance {instance}: max rel err {err:e}");
    }
}

// --- property tests --------------------------------------------------------------

proptest! {
    #[test]
    fn code_probs_rows_always_sum_to_one(
        rows in 1usize..12,
        k in 2usize..8,
        d in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_unit_rows(rows, d, &mut rng);
        let cb = Codebook::new(random_unit_rows(k, d, &mut rng), 0.1).unwrap();
        let p = code_probs(&z, &cb).unwrap();
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sinkhorn_marginals_property(
        b in 8usize..64,
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        prop_assume!(b >= k);
        let eps = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_matrix(b, k, eps, &mut rng);
        let q = sinkhorn_smooth(&logits, eps, 3).unwrap();
        for row in q.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        let target = b as f64 / k as f64;
        for j in 0..k {
            let s: f64 = (0..b).map(|i| q[[i, j]]).sum();
            prop_assert!((s - target).abs() / target < 1e-3);
        }
    }

    #[test]
    fn project_normalize_output_rows_unit(
        rows in 1usize..10,
        din in 2usize..6,
        dout in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_matrix(rows, din, 3.0, &mut rng) + 0.1;
        let w = random_matrix(din, dout, 1.0, &mut rng);
        let bias = Array1::from_elem(dout, 0.05);
        if let Ok(z) = rspin_core::spin::project_normalize(&h, &w, &bias) {
            for row in z.rows() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
