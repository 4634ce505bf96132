pub mod archmodel;
pub mod rachpd;
pub mod runtime;
pub mod scheduler;
pub mod sdfgraph;
pub mod simcore;
