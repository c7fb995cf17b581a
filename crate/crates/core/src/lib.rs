pub mod bie2d;
pub mod geometry2d;
pub mod kernels2d;
pub mod kernels3d;
pub mod numerics;
pub mod verify3d;
