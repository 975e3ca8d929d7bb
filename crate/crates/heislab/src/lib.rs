pub mod cohomology;
pub mod enumerate;
pub mod ergodic;
pub mod heis;
pub mod lineint;
pub mod observable;
pub mod rng;
pub mod special;
pub mod spectral;
