use mlcppm::codec::{run_chain, simulate_reliability, Session, SessionConfig};
use mlcppm::levels::{level_capacities, msd_rate_plan, LevelRates, PlanConfig, RatePlan};
use mlcppm::{Dmc, LogBase};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn union_bound_at_1024() {
    let bob = Dmc::bsc(0.05).unwrap();
    let willie = Dmc::bsc(0.1).unwrap();
    let q = 4;
    let c = level_capacities(&bob, q, LogBase::Bits).unwrap();
    let levels = c
        .iter()
        .enumerate()
        .map(|(k, &ci)| LevelRates { level: k + 1, i_y: ci, i_z: ci, r_u: 0.7 * ci, r_v: 0.0, r_k: 0.0 })
        .collect();
    let plan = RatePlan::custom(q, 1024, 1, 1.0, levels).unwrap();
    let s = Session::new(plan, bob, willie, &SessionConfig { construction_trials: 2000, seed: 11, ..Default::default() }).unwrap();
    let rep = simulate_reliability(&s, 500, 12).unwrap();
    let n = rep.blocks as f64;
    let total = rep.block_error_rate();
    let sum: f64 = rep.isolated_rates().iter().sum();
    let sigma = (sum.min(1.0) * (1.0 - sum.min(1.0)) / n).sqrt();
    assert!(total <= sum + 3.0 * sigma, "total {total} vs Σ {sum}");
}

#[test]
fn asymmetric_pair_chains() {
    let bob = Dmc::bsc(0.2).unwrap();
    let willie = Dmc::bac(0.1, 0.4).unwrap();
    let cfg = PlanConfig { q: 10, ell_override: Some(256), ..Default::default() };
    let plan = msd_rate_plan(&bob, &willie, &cfg, LogBase::Bits).unwrap();
    assert!(plan.chaining_feasible());
    assert!(plan.sum_secret() > plan.sum_key());
    let noiseless = Dmc::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
    let s = Session::new(plan, noiseless, willie, &SessionConfig { construction_trials: 200, ..Default::default() }).unwrap();
    let rep = run_chain(&s, 4, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(rep.records.len(), 4);
    assert!(!rep.any_error);
}
