pub mod slm;
pub mod transition;

pub use slm::{walk_derivation, Slm, SlmCounts, Step};
pub use transition::{
    Derivation, Head, HeadStack, Hypothesis, Move, ParserAction, ParserMode, Phase, BOUNDARY,
};
