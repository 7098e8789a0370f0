//! Fixtures shared by the benchmarks.

use infofilter::models::{attach_observations, simulate_jump_path};
use infofilter::{DiscreteMeasureSpace, ObservationMap, RateGenerator, RngConfig, SamplePath, StreamRole};
use nalgebra::DMatrix;

pub struct Chain {
    pub space: DiscreteMeasureSpace,
    pub gen: RateGenerator,
    pub h: ObservationMap,
}

/// Three-state chain with a scalar observation.
pub fn three_state() -> Chain {
    let rates = DMatrix::from_row_slice(3, 3, &[-1.5, 1.0, 0.5, 0.7, -1.2, 0.5, 0.4, 0.8, -1.2]);
    Chain {
        space: DiscreteMeasureSpace::uniform(3),
        gen: RateGenerator::from_transition_rates(rates).unwrap(),
        h: ObservationMap::scalar(vec![-1.0, 0.0, 1.5]).unwrap(),
    }
}

pub fn observed_path(chain: &Chain, t_end: f64, dt: f64, seed: u64) -> SamplePath<usize> {
    let cfg = RngConfig::new(seed, 0);
    let p0 = chain.space.unit_density();
    let path = simulate_jump_path(&chain.gen, &chain.space, &p0, t_end, dt, &mut cfg.stream(StreamRole::Signal)).unwrap();
    let h = &chain.h;
    attach_observations(path, |x| h.at(*x), h.dim(), &mut cfg.stream(StreamRole::ObservationNoise))
}
