pub mod cheb;
pub mod cli;
pub mod cloud;
pub mod exponents;
pub mod generator;
pub mod heat;
pub mod io;
pub mod lab;
pub mod linalg;
pub mod mild;
pub mod quadrature;
pub mod strip;
