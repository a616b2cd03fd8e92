pub mod adiabatic;
pub mod cli;
pub mod hampath;
pub mod numkernel;
pub mod propagator;
pub mod quadrature;
pub mod spectral;
