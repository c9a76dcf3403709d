//! Pretraining on a small synthetic set: the objective must fall and the
//! checkpoint must carry a usable trace.

use vars_core::signal::synth::{synth_generate, SynthSpec};
use vars_core::train::{pretrain, TrainConfig};

#[test]
fn pretraining_reduces_the_objective_on_synthetic_records() {
    let records = synth_generate(&SynthSpec::demo(3), 314).unwrap();
    let cfg = TrainConfig {
        num_heads: 2,
        hidden: 8,
        cond_dim: 8,
        batch_size: 3,
        epochs: 12,
        quantile: 0.6,
        seed: 314,
        ..TrainConfig::default()
    };
    let ckpt = pretrain(&records, &cfg).unwrap();
    assert_eq!(ckpt.loss_trace.len(), cfg.epochs);
    for (i, e) in ckpt.loss_trace.iter().enumerate() {
        assert_eq!(e.epoch, i + 1);
        for v in [e.l_rec, e.l_jse, e.l_cl, e.total] {
            assert!(v.is_finite());
        }
    }
    let first = ckpt.loss_trace.first().unwrap().total;
    let last = ckpt.loss_trace.last().unwrap().total;
    assert!(
        last < first,
        "objective did not improve: epoch 1 at {first:.4}, epoch {} at {last:.4}",
        cfg.epochs
    );
}
