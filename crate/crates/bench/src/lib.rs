//! Shared fixtures for the kernel benchmarks: the 64×64 foam desk problem
//! with 60 angles and 1% noise.

use proxskip::phantoms::{foam_phantom, simulate_sinogram, FoamSpec, NoiseSpec};
use proxskip::tomo::operator_norm_sq;
use proxskip::{ImageGrid, ParallelGeometry, Projector, Sinogram};

pub const SIZE: usize = 64;
pub const ANGLES: usize = 60;
pub const BINS: usize = 95;

pub struct Desk {
    pub truth: ImageGrid,
    pub projector: Projector,
    pub sinogram: Sinogram,
    pub lipschitz: f64,
}

pub fn desk() -> Desk {
    let truth = foam_phantom(&FoamSpec::new(SIZE, 1)).expect("foam").image;
    let geometry = ParallelGeometry::uniform(ANGLES, BINS).expect("geometry");
    let projector = Projector::new(&geometry, SIZE, SIZE).expect("projector");
    let sinogram = simulate_sinogram(&truth, &geometry, &NoiseSpec::gaussian(0.01, 2)).expect("sinogram");
    let lipschitz = operator_norm_sq(&projector, 100, 0).expect("norm") * 1.01;
    Desk { truth, projector, sinogram, lipschitz }
}
