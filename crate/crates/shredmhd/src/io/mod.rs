//! On-disk formats: dmx matrices, manifests, VTK frames, model files.

pub mod dmx;
pub mod manifest;
pub mod model_file;
pub mod vtk;
