pub mod cv;
pub mod diagnose;
pub mod fit;
pub mod predict;
pub mod simulate;
