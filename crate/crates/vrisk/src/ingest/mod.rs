//! Dataset loaders, synthetic instance generation, and the
//! intent-probability noise protocol.
//!
//! Three on-disk formats are supported:
//! * the canonical JSON-lines format (one query object per line),
//! * TREC-style diversity qrels (`topic intent doc judgment`),
//! * MovieLens-style `ratings.csv` + `movies.csv`.
//!
//! Every loader returns fully validated instances in stable
//! (query-id-sorted) order. Duplicate judgments for the same
//! (query, intent, doc) merge by taking the maximum grade.

mod canonical;
mod movielens;
mod noise;
mod synth;
mod trec;

pub use canonical::{load_canonical, parse_canonical, write_canonical};
pub use movielens::{
    build_movielens, load_movielens, parse_movielens_movies, parse_movielens_ratings, MovieRow,
    MovieLensOptions, RatingRow,
};
pub use noise::{perturb_intents, perturbed_probs, NoiseConfig};
pub use synth::{synth_generate, SynthConfig};
pub use trec::{load_trec_diversity, parse_trec_qrels, parse_trec_topics};
