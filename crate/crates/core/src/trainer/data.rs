//! Strip datasets assembled from a split corpus.

use crate::datapipe::{slice_strips, DatasetSplit, StripDims, StripPair, Subset, Volume};
use crate::error::{Error, Result};
use crate::phantom::{generate_phantom, retina_band, Phantom, PhantomConfig};
use crate::seeds;

/// One co-registered structure / flow pair.
#[derive(Clone, Debug)]
pub struct CorpusVolume {
    pub id: String,
    pub structure: Volume,
    pub flow: Volume,
}

/// `count` phantoms with per-volume seeds derived from `config.seed`.
pub fn phantom_corpus(config: &PhantomConfig, count: usize) -> Result<Vec<(CorpusVolume, Phantom)>> {
    (0..count).map(|i| phantom_corpus_member(config, i)).collect()
}

/// Member `index` of [`phantom_corpus`], generated on its own.
pub fn phantom_corpus_member(config: &PhantomConfig, index: usize) -> Result<(CorpusVolume, Phantom)> {
    let cfg = config.clone().with_seed(seeds::derive(config.seed, 0x5048, index as u64));
    let p = generate_phantom(&cfg)?;
    let vol = CorpusVolume {
        id: format!("phantom-{:03}", index),
        structure: p.structure.clone(),
        flow: p.flow_truth()?,
    };
    Ok((vol, p))
}

/// Training and validation strips; test volumes are held out entirely.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub split: DatasetSplit,
    pub strip: StripDims,
    pub train: Vec<StripPair>,
    pub validation: Vec<StripPair>,
}

impl TrainingData {
    /// Cuts strips from the train and validation volumes of `split`, anchored
    /// on each B-scan's detected retina band.
    pub fn from_corpus(corpus: &[CorpusVolume], split: DatasetSplit, strip: StripDims) -> Result<Self> {
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for v in corpus {
            let dst = match split.subset_of(&v.id) {
                Some(Subset::Train) => &mut train,
                Some(Subset::Validation) => &mut validation,
                Some(Subset::Test) => continue,
                None => return Err(Error::Input(format!("volume {} is not in the split", v.id))),
            };
            let mids = retina_band(&v.structure, (0.25, 0.75)).slice_midpoints();
            dst.extend(slice_strips(&v.structure, &v.flow, &v.id, strip, Some(&mids))?);
        }
        if train.is_empty() || validation.is_empty() {
            return Err(Error::Input("split yields no training or no validation strips".into()));
        }
        Ok(TrainingData {
            split,
            strip,
            train,
            validation,
        })
    }

    /// One strip used for both training and validation; its volume forms
    /// the whole training set.
    pub fn single_strip(pair: StripPair) -> Self {
        let split = DatasetSplit {
            train: [pair.origin.volume.clone()].into(),
            validation: Default::default(),
            test: Default::default(),
            seed: 0,
        };
        TrainingData {
            split,
            strip: pair.dims,
            train: vec![pair.clone()],
            validation: vec![pair],
        }
    }
}
