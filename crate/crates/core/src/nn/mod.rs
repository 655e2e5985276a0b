//! Minimal dense numeric kernel: 2-D tensors, a reverse-mode tape, the layers
//! the verdict heads are built from, AdamW, and finite-difference checking.

mod adamw;
mod checkpoint;
mod gradcheck;
mod layers;
mod param;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig, StepLr};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, grad_check_params};
pub use layers::{gcn_layer, linear, normalized_adjacency, scaled_dot_attention};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Reduces any tensor to a scalar with fixed random weights so every
    /// output entry contributes to the checked gradient.
    fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, crate::Error> {
        let shape = tape.value(y).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = tape.leaf(random(&mut rng, shape[1], 1));
        let col = tape.matmul(y, w)?;
        let ones = tape.leaf(Tensor::filled(1, shape[0], 1.0));
        tape.matmul(ones, col)
    }

    #[test]
    fn linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = [random(&mut rng, 4, 3), random(&mut rng, 3, 5), random(&mut rng, 1, 5)];
        let err = grad_check(&inputs, 1e-5, |t, v| {
            let y = linear(t, v[0], v[1], v[2])?;
            probe(t, y, 9)
        })
        .unwrap();
        assert!(err <= 1e-6, "linear grad error {err}");
    }

    #[test]
    fn linear_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 3, 4);
        let w = random(&mut rng, 4, 2);
        let b = random(&mut rng, 1, 2);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
        let y = linear(&mut tape, xv, wv, bv).unwrap();
        for r in 0..3 {
            let mut t2 = Tape::new();
            let xr = t2.leaf(Tensor::row(x.row_slice(r)).unwrap());
            let (w2, b2) = (t2.leaf(w.clone()), t2.leaf(b.clone()));
            let yr = linear(&mut t2, xr, w2, b2).unwrap();
            assert_eq!(t2.value(yr).data(), tape.value(y).row_slice(r));
        }
    }

    #[test]
    fn softmax_and_cross_entropy_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[0.0, 0.0]).unwrap());
        let p = tape.softmax(x);
        assert_eq!(tape.value(p).data(), &[0.5, 0.5]);
        let l = tape.cross_entropy(p, 0).unwrap();
        assert!((tape.value(l).as_scalar() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(tape.cross_entropy(p, 2).is_err());
    }

    #[test]
    fn softmax_ce_gradient_is_probs_minus_onehot() {
        let logits = Tensor::row(&[0.3, -1.1, 2.0]).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(logits.clone());
        let p = tape.softmax(x);
        let l = tape.cross_entropy(p, 1).unwrap();
        let g = tape.backward(l).unwrap();
        let probs = tape.value(p).clone();
        for c in 0..3 {
            let expected = probs.get(0, c) - if c == 1 { 1.0 } else { 0.0 };
            assert!((g.wrt(x).unwrap().get(0, c) - expected).abs() < 1e-14);
        }
        let err = grad_check(&[logits], 1e-5, |t, v| {
            let p = t.softmax(v[0]);
            t.cross_entropy(p, 1)
        })
        .unwrap();
        assert!(err <= 1e-6, "softmax+CE grad error {err}");
    }

    #[test]
    fn attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs = [random(&mut rng, 2, 4), random(&mut rng, 5, 4), random(&mut rng, 5, 3)];
        let err = grad_check(&inputs, 1e-5, |t, v| {
            let y = scaled_dot_attention(t, v[0], v[1], v[2], None)?;
            probe(t, y, 4)
        })
        .unwrap();
        assert!(err <= 1e-5, "attention grad error {err}");
        let mask = [true, false, true, true, false];
        let err = grad_check(&inputs, 1e-5, |t, v| {
            let y = scaled_dot_attention(t, v[0], v[1], v[2], Some(&mask))?;
            probe(t, y, 4)
        })
        .unwrap();
        assert!(err <= 1e-5, "masked attention grad error {err}");
    }

    #[test]
    fn gcn_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let adj = Tensor::from_rows(&[
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let inputs = [random(&mut rng, 4, 3), random(&mut rng, 3, 2)];
        let err = grad_check(&inputs, 1e-5, |t, v| {
            let y = gcn_layer(t, v[0], &adj, v[1])?;
            let y = t.relu(y);
            probe(t, y, 6)
        })
        .unwrap();
        assert!(err <= 1e-5, "gcn grad error {err}");
    }

    #[test]
    fn edgeless_gcn_is_per_node_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&mut rng, 5, 3);
        let w = random(&mut rng, 3, 4);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.leaf(x.clone()), tape.leaf(w.clone()));
        let y = gcn_layer(&mut tape, xv, &Tensor::zeros(5, 5), wv).unwrap();
        assert!(tape.value(y).max_abs_diff(&x.matmul(&w).unwrap()) < 1e-14);
    }

    #[test]
    fn param_grad_check_matches_leaf_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let w = store.add_glorot("w", 3, 2, &mut rng);
        let b = store.add_zeros("b", 1, 2);
        let x = random(&mut rng, 1, 3);
        let err = grad_check_params(&store, 1e-5, |t, s| {
            let xv = t.leaf(x.clone());
            let (wv, bv) = (t.param(s, w), t.param(s, b));
            let y = linear(t, xv, wv, bv)?;
            let p = t.softmax(y);
            t.cross_entropy(p, 0)
        })
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-30.0f64..30.0, 1..12), rows in 1usize..4) {
            let cols = vals.len();
            let data: Vec<f64> = (0..rows).flat_map(|r| vals.iter().map(move |v| v + r as f64)).collect();
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::new(rows, cols, data).unwrap());
            let p = tape.softmax(x);
            for r in 0..rows {
                let s: f64 = tape.value(p).row_slice(r).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn attention_output_in_value_hull(seed in 0u64..500, nk in 1usize..7, d in 1usize..5, dv in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random(&mut rng, nk, dv).scale(5.0);
            let mut tape = Tape::new();
            let q = tape.leaf(random(&mut rng, 2, d).scale(4.0));
            let k = tape.leaf(random(&mut rng, nk, d).scale(4.0));
            let vv = tape.leaf(v.clone());
            let out = scaled_dot_attention(&mut tape, q, k, vv, None).unwrap();
            for c in 0..dv {
                let col: Vec<f64> = (0..nk).map(|r| v.get(r, c)).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for r in 0..2 {
                    let o = tape.value(out).get(r, c);
                    prop_assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
                }
            }
        }
    }
}
