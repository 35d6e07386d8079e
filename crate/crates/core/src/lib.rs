//! Coupled condensate / pair-excitation dynamics for weakly interacting
//! bosons on a periodic grid.
//!
//! The state is the triple `(phi, Lambda, Gamma)`: the condensate
//! wavefunction, the pair density `<a a>/N` and the one-body density
//! `<a* a>/N` of a displaced quasi-free state. Time is oriented so that
//! `(1/i) d/dt u - Delta u = F` is stepped as `du/dt = i (Delta u + F)`.

pub mod bogoliubov;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
mod fft;
pub mod grid;
pub mod potential;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Kernel, Spectrum, Symmetry};
