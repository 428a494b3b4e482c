pub mod calibration;
pub mod geometry;
pub mod image;
pub mod io;
pub mod optim;
pub mod pose;
pub mod sfm;
pub mod synthetic;
pub mod target;
