//! Trains every architecture variant briefly and ranks them by validation loss.

use octflow::datapipe::{split_corpus, SplitFractions, StripDims};
use octflow::phantom::PhantomConfig;
use octflow::trainer::{bakeoff, phantom_corpus, TrainConfig, TrainingData};
use octflow::ModelSpec;

fn main() -> octflow::Result<()> {
    let cfg = PhantomConfig {
        slices: 8,
        ..PhantomConfig::compact()
    };
    let corpus: Vec<_> = phantom_corpus(&cfg, 5)?.into_iter().map(|(v, _)| v).collect();
    let ids: Vec<String> = corpus.iter().map(|v| v.id.clone()).collect();
    let fractions = SplitFractions {
        train: 0.6,
        validation: 0.2,
        test: 0.2,
    };
    let data = TrainingData::from_corpus(
        &corpus,
        split_corpus(&ids, fractions, 0)?,
        StripDims { height: 32, width: 32 },
    )?;
    let train = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        max_iterations: 60,
        validation_interval: Some(20),
        ..TrainConfig::default()
    };
    let result = bakeoff(&ModelSpec::bakeoff_variants(), &data, &train)?;
    print!("{}", result.report());
    Ok(())
}
