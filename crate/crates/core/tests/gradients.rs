mod support;

use nextword::neural::{Matrix, NlmParams};
use support::*;

fn check(name: &str, error: impl Fn(u64) -> f64) {
    for seed in GRADIENT_SEEDS {
        let e = error(seed);
        assert!(e < FD_TOLERANCE, "{name} seed {seed}: max relative error {e:e}");
    }
}

#[test]
fn nlm_gradients_match_finite_differences() {
    check("nlm", nlm_gradient_error);
}

#[test]
fn cbow_gradients_match_finite_differences() {
    check("cbow", cbow_gradient_error);
}

#[test]
fn rnn_gradients_match_finite_differences() {
    check("rnn", rnn_gradient_error);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    check("lstm", lstm_gradient_error);
}

/// y = b + W·x + U·tanh(b_h + H·x) written out element by element.
fn reference_logits(p: &NlmParams, window: &[u32]) -> Vec<f64> {
    let x: Vec<f64> = window.iter().flat_map(|&w| p.c.row(w as usize).to_vec()).collect();
    let hidden: Vec<f64> = (0..p.h.rows())
        .map(|j| {
            let z: f64 = (0..x.len()).map(|i| p.h.get(j, i) * x[i]).sum();
            (p.b_h.get(0, j) + z).tanh()
        })
        .collect();
    (0..p.w.rows())
        .map(|k| {
            let direct: f64 = (0..x.len()).map(|i| p.w.get(k, i) * x[i]).sum();
            let through: f64 = (0..hidden.len()).map(|j| p.u.get(k, j) * hidden[j]).sum();
            p.b.get(0, k) + direct + through
        })
        .collect()
}

#[test]
fn nlm_forward_matches_reference_arithmetic() {
    // vocab 5, d=2, window 2, h=2, every entry set by hand
    let fill = |rows, cols, start: f64| {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|i| start + 0.1 * i as f64 - 0.3 * (i % 3) as f64).collect(),
        )
    };
    let p = NlmParams {
        c: fill(5, 2, -0.4),
        h: fill(2, 4, 0.2),
        b_h: fill(1, 2, 0.05),
        u: fill(5, 2, -0.1),
        w: fill(5, 4, 0.3),
        b: fill(1, 5, -0.2),
        window: 2,
    };
    let window = [3, 4];
    let logits = reference_logits(&p, &window);
    let recommendable = &logits[2..];
    let max = recommendable.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = recommendable.iter().map(|y| (y - max).exp()).sum();
    let probs = p.forward(&window).probs;
    for w in 2..5 {
        let expected = (logits[w] - max).exp() / z;
        assert!((probs.prob(w as u32) - expected).abs() < 1e-12);
    }
    assert_eq!(probs.prob(0), 0.0);
    assert_eq!(probs.prob(1), 0.0);
}

#[test]
fn checker_flags_a_corrupted_gradient() {
    use nextword::neural::Parameters;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let p = nextword::neural::RnnParams::init(8, 4, 0.5, &mut rng);
    let seqs = vec![vec![2, 5, 3, 7]];
    let (_, mut grads) = p.loss_and_grad(&seqs, 0.0);
    let i = grads.num_params() / 2;
    grads.flat_set(i, grads.flat_get(i) * 1.01 + 1e-3);
    let e = max_relative_error(&p, &grads, |q| q.loss_and_grad(&seqs, 0.0).0);
    assert!(e > FD_TOLERANCE);
}
