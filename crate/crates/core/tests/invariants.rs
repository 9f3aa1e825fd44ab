//! Property tests for invariants that must hold over the whole input space,
//! not just at hand-picked points.

use dawn_core::agent::{atom_support, combine};
use dawn_core::diffcore::{forward_mlp, forward_mlp_single, init_mlp, HiddenNorm, MlpSpec, Tape, Tensor};
use dawn_core::rng::{Rng, Stream};
use dawn_core::trainer::{project_categorical, tqc_pooled_targets};
use proptest::prelude::*;

fn finite_vec(len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hyperspherical_layers_ignore_input_magnitude(
        x in finite_vec(5, 3.0),
        scale in prop_oneof![Just(1e-4), Just(0.1), Just(10.0), Just(1e4)],
    ) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6);
        let spec = MlpSpec { input_dim: 5, hidden_dims: vec![8, 8], output_dim: 3, hidden_norm: HiddenNorm::Hyperspherical };
        let mut rng = Rng::seed_from(17, Stream::Init);
        let params = init_mlp(&spec, &mut rng);
        let y1 = forward_mlp_single(&spec, &params, &x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let y2 = forward_mlp_single(&spec, &params, &scaled).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b} at scale {scale}");
        }
    }

    #[test]
    fn batched_and_single_forward_agree_for_every_norm(
        rows in finite_vec(12, 2.0),
        norm_idx in 0usize..3,
    ) {
        let norm = [HiddenNorm::None, HiddenNorm::LayerNorm, HiddenNorm::Hyperspherical][norm_idx];
        let spec = MlpSpec { input_dim: 4, hidden_dims: vec![6], output_dim: 2, hidden_norm: norm };
        let mut rng = Rng::seed_from(23, Stream::Init);
        let params = init_mlp(&spec, &mut rng);
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape, false);
        let input = tape.leaf_tensor(&Tensor::new(3, 4, rows.clone()), false);
        let out = forward_mlp(&mut tape, &spec, &ids, input).unwrap();
        let batched = tape.values(out).to_vec();
        for r in 0..3 {
            let single = forward_mlp_single(&spec, &params, &rows[r * 4..(r + 1) * 4]).unwrap();
            for c in 0..2 {
                prop_assert!((batched[r * 2 + c] - single[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn categorical_projection_conserves_mass_and_support(
        raw in prop::collection::vec(0.01f64..1.0, 1..8),
        positions in prop::collection::vec(-30.0f64..10.0, 8),
        n_atoms in 2usize..12,
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let support = atom_support(n_atoms, -20.0, 0.0);
        let m = project_categorical(&probs, &positions[..probs.len()], &support);
        prop_assert_eq!(m.len(), n_atoms);
        let mass: f64 = m.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        prop_assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pooled_quantiles_are_sorted_lower_bounds(
        heads in prop::collection::vec(prop::collection::vec(-50.0f64..0.0, 6), 5),
        drop in 0usize..3,
    ) {
        let kept = tqc_pooled_targets(&heads, drop);
        prop_assert_eq!(kept.len(), 5 * (6 - drop));
        prop_assert!(kept.windows(2).all(|w| w[0] <= w[1]));
        // everything kept is no larger than anything discarded
        let mut all: Vec<f64> = heads.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(&max_kept) = kept.last() {
            prop_assert!(all[kept.len()..].iter().all(|&v| v >= max_kept));
        }
    }

    #[test]
    fn combined_actions_stay_in_bounds(
        a_base in finite_vec(3, 1.0),
        a_res in finite_vec(3, 1.0),
        lambda in 0.01f64..1.0,
    ) {
        let a = combine(&a_base, &a_res, lambda).unwrap();
        prop_assert!(a.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        // when no clipping happens, it is exactly the affine blend
        for i in 0..3 {
            let raw = a_base[i] + lambda * a_res[i];
            if (-1.0..=1.0).contains(&raw) {
                prop_assert!((a[i] - raw).abs() < 1e-15);
            }
        }
    }
}
