//! Shared fixtures for the benchmarks.

use convbf::scene::synthesize_scene;
use convbf::stats::{channel_mean_power, stack, StackLayout};
use convbf::{CMatrix, CVector, SceneSpec, SceneTruth};

/// One bin of a synthetic scene, stacked and ready for the solvers.
pub struct BinFixture {
    pub layout: StackLayout,
    pub stacked: CMatrix,
    pub lambda: Vec<f64>,
    pub rtf: CVector,
}

pub fn scene(channels: usize, frames: usize, seed: u64) -> SceneTruth {
    synthesize_scene(&SceneSpec::new(channels, 8, 4, frames, 20.0, seed)).expect("valid scene")
}

pub fn bin_fixture(channels: usize, taps: usize, frames: usize) -> BinFixture {
    let truth = scene(channels, frames, 1);
    let k = truth.observation.num_bins() / 2;
    let y = truth.observation.bin_frames(k);
    let layout = StackLayout::new(channels, 4, taps).expect("taps >= delay");
    BinFixture { layout, stacked: stack(&y, layout).expect("stackable"), lambda: channel_mean_power(&y), rtf: truth.rtf[k].clone() }
}
