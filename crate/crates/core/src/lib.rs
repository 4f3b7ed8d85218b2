pub mod address;
pub mod clock;
pub mod codecs;
pub mod filter;
mod keyed;
pub mod output;
pub mod permutation;
pub mod probe;
pub mod rate;
pub mod validation;
pub mod transport;
pub mod sim;
pub mod engine;
