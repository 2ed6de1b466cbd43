//! The fully convolutional encoder–decoder.
//!
//! A [`ModelConfig`] lists layers part by part (input, encoder blocks,
//! representation, decoder blocks, output) together with skip and residual
//! links. Within a layer the order is: unpool, concatenate skip sources,
//! convolution, batch norm, activation, Gaussian noise (training only), add
//! residual sources, pool.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint,
    TrainMeta, FORMAT_VERSION, MAGIC,
};
pub use config::{Activation, LayerPlan, LayerSpec, ModelConfig, Part, PresetShape};
pub use network::{build_model, decide, glorot_limit, init_glorot, Gradients, Layer, Model};

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nncore::FeatureMap;

    fn input(batch: usize, len: usize, seed: u64) -> FeatureMap<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(batch, 1, len, |_, _, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        let a: Vec<f64> = init_glorot(1000, 3, 3, 9);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(a, init_glorot::<f64>(1000, 3, 3, 9));
        let n = 100_000;
        let b: Vec<f64> = init_glorot(n, 3, 3, 1);
        let mean = b.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (3.0 * n as f64).sqrt());
    }

    #[test]
    fn outputs_are_probabilities_of_input_length() {
        let cfg = ModelConfig::preset("tiny").unwrap();
        let mut m = build_model::<f64>(&cfg, 1).unwrap();
        let x = input(3, 32, 2);
        let y = m.infer(&x).unwrap();
        assert_eq!(y.shape(), (3, 1, 32));
        assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(y, m.infer(&x).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = m.forward_train(&x, &mut rng).unwrap();
        assert!(t.data().iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(m.infer(&input(1, 31, 0)).is_err());
    }

    #[test]
    fn backward_needs_forward_context() {
        let cfg = ModelConfig::preset("tiny").unwrap();
        let mut m = build_model::<f64>(&cfg, 1).unwrap();
        assert!(matches!(
            m.backward(&FeatureMap::zeros(1, 1, 32)),
            Err(crate::Error::State(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.forward_train(&input(2, 32, 5), &mut rng).unwrap();
        let g = m.backward(&FeatureMap::zeros(2, 1, 32)).unwrap();
        assert_eq!(g.params.len(), m.params().len());
        assert!(g.params.iter().flatten().all(|&v| v == 0.0));
        // the context is consumed
        assert!(m.backward(&FeatureMap::zeros(2, 1, 32)).is_err());
    }

    #[test]
    fn desk_parameter_count_matches_config() {
        let cfg = ModelConfig::preset("desk").unwrap();
        let m = build_model::<f32>(&cfg, 0).unwrap();
        assert_eq!(m.parameter_count(), cfg.parameter_count().unwrap());
        assert_eq!(m.param_names().len(), m.params().len());
    }

    #[test]
    fn decision_rule() {
        assert!(decide(0.6));
        assert!(!decide(0.4));
        assert!(decide(0.5));
        for i in 0..=1000 {
            let p = i as f64 / 1000.0;
            // argmax over {off: 1 - p, on: p}, off only when strictly larger
            assert_eq!(decide(p), !(1.0 - p > p));
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let cfg = ModelConfig::preset("tiny").unwrap();
        let mut m = build_model::<f32>(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.forward_train(&input(2, 32, 1).cast(), &mut rng).unwrap();
        m.scaler = crate::dataio::Standardizer::new(120.5, 33.25).unwrap();
        let mut ck = Checkpoint::new(m);
        ck.meta.train_loss = vec![0.7, 0.5];
        ck.meta.seed = 42;
        ck.extra.push(("optim.m.0".into(), vec![1.5, -2.0]));
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(back, ck);
        let x = input(4, 32, 9).cast::<f32>();
        assert_eq!(back.model.infer(&x).unwrap(), ck.model.infer(&x).unwrap());

        assert!(matches!(
            decode_checkpoint::<f32>(&bytes[..bytes.len() - 10]),
            Err(crate::Error::Integrity(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(decode_checkpoint::<f32>(&flipped).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        let err = decode_checkpoint::<f32>(&v2).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
