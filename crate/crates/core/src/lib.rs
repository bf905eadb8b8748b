pub mod autodiff;
pub mod data;
pub mod dsp;
pub mod model;
pub mod phoneme;
pub mod trainer;
