//! Volume I/O, strip slicing and dataset splitting.

pub mod pgm;
pub mod split;
pub mod strips;
pub mod volume;

pub use pgm::{encode_pgm, write_pgm, PgmDepth};
pub use split::{split_corpus, DatasetSplit, SplitFractions, Subset};
pub use strips::{anchor_row, assemble_bscan, slice_strips, StripDims, StripOrigin, StripPair};
pub use volume::{VolDims, Volume, VolumeKind};
