//! Fixtures shared by the benchmarks.

use mlcppm::levels::{level_capacities, LevelRates};
use mlcppm::{Dmc, LogBase, RatePlan, Session, SessionConfig};

/// Degraded BSC(0.05)/BSC(0.1) session at `0.7·C_i` per level.
pub fn bsc_session(q: usize, ell: usize) -> Session {
    let bob = Dmc::bsc(0.05).expect("valid crossover");
    let willie = Dmc::bsc(0.1).expect("valid crossover");
    let c = level_capacities(&bob, q, LogBase::Bits).expect("capacities");
    let levels = c
        .iter()
        .enumerate()
        .map(|(k, &ci)| LevelRates { level: k + 1, i_y: ci, i_z: ci, r_u: 0.7 * ci, r_v: 0.0, r_k: 0.0 })
        .collect();
    let plan = RatePlan::custom(q, ell, 1, 1.0, levels).expect("plan");
    let cfg = SessionConfig { construction_trials: 500, seed: 1, ..Default::default() };
    Session::new(plan, bob, willie, &cfg).expect("session")
}
