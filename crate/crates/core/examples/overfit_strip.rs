//! Overfits one strip to show the optimiser can drive the loss to near zero.

use octflow::datapipe::{slice_strips, StripDims};
use octflow::nn::ops::BridgeKind;
use octflow::phantom::PhantomConfig;
use octflow::trainer::{phantom_corpus_member, train, TrainConfig, TrainingData};
use octflow::ModelSpec;

fn main() -> octflow::Result<()> {
    let (vol, _) = phantom_corpus_member(&PhantomConfig::compact(), 0)?;
    let strips = slice_strips(&vol.structure, &vol.flow, &vol.id, StripDims { height: 32, width: 32 }, None)?;
    let strip = strips
        .into_iter()
        .max_by(|a, b| a.flow.iter().sum::<f32>().total_cmp(&b.flow.iter().sum::<f32>()))
        .expect("volume yields strips");
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 1,
        max_iterations: 1000,
        validation_interval: Some(100),
        patience: usize::MAX,
        ..TrainConfig::default()
    };
    let ck = train(&ModelSpec::new(5, 5, BridgeKind::Concat), &TrainingData::single_strip(strip), &cfg)?;
    for (it, mse) in &ck.curve.validation {
        println!("iteration {it:>5}: mse {mse:.4e}");
    }
    Ok(())
}
