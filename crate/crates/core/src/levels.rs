//! Per-level equivalent channels of multilevel PPM, their capacities, and
//! multistage-decoding rate planning.
//!
//! Level `i` sees a block of `2^i` outputs selected by the decoded higher
//! levels; the first half of that block corresponds to `x_i = 0`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channels::{sample_index, DivergenceStats, Dmc, LogBase};
use crate::error::{Error, Result};
use crate::ppm::ppm_output_divergence;

/// Saturation for level log-likelihood ratios, in nats.
pub const DEFAULT_LLR_CAP: f64 = 40.0;

/// `D(P_PPM^{2^t} ‖ P_0^{⊗2^t})` for `t = 0..=q`.
pub fn divergence_ladder(dmc: &Dmc, q: usize, base: LogBase) -> Result<Vec<f64>> {
    (0..=q)
        .map(|t| ppm_output_divergence(dmc, 1 << t, base))
        .collect()
}

/// `C_i = D(P_PPM^{2^{i-1}}) − D(P_PPM^{2^i})`, the capacity of level `i`
/// regardless of how many levels sit above it.
pub fn level_capacity(dmc: &Dmc, i: usize, base: LogBase) -> Result<f64> {
    if i == 0 {
        return Err(Error::LevelOutOfRange { level: 0, max: usize::MAX });
    }
    let lo = ppm_output_divergence(dmc, 1 << (i - 1), base)?;
    let hi = ppm_output_divergence(dmc, 1 << i, base)?;
    Ok(lo - hi)
}

/// Capacities of levels `1..=q`.
///
/// Channels with a pulse-only output symbol have an infinite ladder; their
/// capacities come from [`level_capacity_by_posterior`] instead.
pub fn level_capacities(dmc: &Dmc, q: usize, base: LogBase) -> Result<Vec<f64>> {
    let d = divergence_ladder(dmc, q, base)?;
    if d.iter().any(|v| v.is_infinite()) {
        return (1..=q)
            .map(|i| level_capacity_by_posterior(dmc, i, base, POSTERIOR_BUDGET))
            .collect();
    }
    Ok(d.windows(2).map(|w| w[0] - w[1]).collect())
}

const POSTERIOR_BUDGET: u128 = 1 << 27;

/// `C_i = ln 2 − E[ln(1 + S_1/S_0)]` with `x_i = 0`, where `S_b` sums the
/// likelihood ratios over half `b` of a level-`i` subblock.
///
/// Exact over output types; finite even when `D(P1‖P0)` is not.
pub fn level_capacity_by_posterior(dmc: &Dmc, i: usize, base: LogBase, budget: u128) -> Result<f64> {
    if i == 0 {
        return Err(Error::LevelOutOfRange { level: 0, max: usize::MAX });
    }
    let h = 1usize << (i - 1);
    let support: Vec<(f64, f64)> = (0..dmc.alphabet_size())
        .filter(|&y| dmc.row0()[y] > 0.0)
        .map(|y| (dmc.row0()[y], dmc.likelihood_ratio(y)))
        .collect();
    let pulse: Vec<(f64, f64)> = (0..dmc.alphabet_size())
        .filter(|&y| dmc.row1()[y] > 0.0)
        .map(|y| (dmc.row1()[y], dmc.likelihood_ratio(y)))
        .collect();
    let full_count = innocent_type_count(h, support.len());
    let rest_count = innocent_type_count(h - 1, support.len());
    let needed = full_count
        .saturating_mul(rest_count)
        .saturating_mul(pulse.len() as u128);
    if needed > budget {
        return Err(Error::TypeBudgetExceeded { types: needed, budget });
    }
    let full = innocent_sums(&support, h);
    let rest = innocent_sums(&support, h - 1);
    let mut acc = 0.0;
    for &(pp, lp) in &pulse {
        for &(pr, sr) in &rest {
            let s0 = lp + sr;
            let w = pp * pr;
            for &(pf, s1) in &full {
                let term = if s0.is_infinite() { 0.0 } else { (s1 / s0).ln_1p() };
                acc += w * pf * term;
            }
        }
    }
    Ok(base.from_nats((std::f64::consts::LN_2 - acc).max(0.0)))
}

fn innocent_type_count(n: usize, k: usize) -> u128 {
    let mut c: u128 = 1;
    for j in 1..k as u128 {
        c = c.saturating_mul(n as u128 + j) / j;
    }
    c
}

// (probability, Σ λ) for every type of `n` draws from the innocent row.
fn innocent_sums(support: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let lnf = crate::ppm::ln_factorials(n);
    let mut out = Vec::new();
    let mut counts = vec![0usize; support.len()];
    fn rec(
        support: &[(f64, f64)],
        n: usize,
        idx: usize,
        remaining: usize,
        counts: &mut [usize],
        lnf: &[f64],
        out: &mut Vec<(f64, f64)>,
    ) {
        if idx + 1 == support.len() {
            counts[idx] = remaining;
            let mut lw = lnf[n];
            let mut s = 0.0;
            for (&c, &(p, l)) in counts.iter().zip(support) {
                lw += c as f64 * p.ln() - lnf[c];
                if c > 0 {
                    s += c as f64 * l;
                }
            }
            out.push((lw.exp(), s));
            return;
        }
        for c in 0..=remaining {
            counts[idx] = c;
            rec(support, n, idx + 1, remaining - c, counts, lnf, out);
        }
    }
    rec(support, n, 0, n, &mut counts, &lnf, &mut out);
    out
}

/// Three-term upper bound on `C_i` in nats from χ2, θ and ρ of `P1‖P0`.
pub fn level_capacity_bound(stats: &DivergenceStats, i: usize) -> f64 {
    let (chi2, theta, rho) = (stats.chi2, stats.theta, stats.rho);
    let i = i as i32;
    chi2 / 2f64.powi(i) - (theta - chi2 - 2.0 * chi2.powi(3)) / 2f64.powi(2 * i - 1)
        + (rho - 3.0 * chi2) / (3.0 * 2f64.powi(3 * (i - 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMi {
    pub level: usize,
    pub i_y: f64,
    pub i_z: f64,
    /// `i_z − i_y`
    pub diff: f64,
}

pub fn level_mi_table(bob: &Dmc, willie: &Dmc, q: usize, base: LogBase) -> Result<Vec<LevelMi>> {
    let cy = level_capacities(bob, q, base)?;
    let cz = level_capacities(willie, q, base)?;
    Ok(cy
        .iter()
        .zip(&cz)
        .enumerate()
        .map(|(k, (&i_y, &i_z))| LevelMi {
            level: k + 1,
            i_y,
            i_z,
            diff: i_z - i_y,
        })
        .collect())
}

/// How the highest reliability-coded level `u` is picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UPolicy {
    /// Smallest `u` whose tail `Σ_{i>u} C_i` is below this fraction of `Σ C_i`.
    CapacityShare(f64),
    /// Largest `u` with `R_{U,u}` at or above this floor.
    RateFloor(f64),
    Fixed(usize),
}

impl Default for UPolicy {
    fn default() -> Self {
        UPolicy::CapacityShare(0.01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub q: usize,
    pub delta: f64,
    pub blocks: usize,
    /// Total slack, split as `ε/q` per level. Same unit as the plan.
    pub epsilon: f64,
    pub degraded: bool,
    pub u_policy: UPolicy,
    /// Overrides the covertness-derived blocklength.
    pub ell_override: Option<usize>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            q: 4,
            delta: 1.0,
            blocks: 1,
            epsilon: 0.05,
            degraded: false,
            u_policy: UPolicy::default(),
            ell_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRates {
    pub level: usize,
    pub i_y: f64,
    pub i_z: f64,
    pub r_u: f64,
    pub r_v: f64,
    pub r_k: f64,
}

pub const PLAN_FORMAT_VERSION: u32 = 1;

/// Per-level rates are in `base` units per super-symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    pub version: u32,
    pub base: LogBase,
    pub q: usize,
    pub m: usize,
    pub ell: usize,
    pub blocks: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub u: usize,
    pub degraded: bool,
    pub levels: Vec<LevelRates>,
}

impl RatePlan {
    /// A plan with explicit rates; `u` defaults to `q`.
    pub fn custom(q: usize, ell: usize, blocks: usize, delta: f64, levels: Vec<LevelRates>) -> Result<Self> {
        if levels.len() != q {
            return Err(Error::SizeMismatch { what: "level rates", expected: q, got: levels.len() });
        }
        if ell == 0 {
            return Err(Error::BlocklengthZero);
        }
        if levels.iter().any(|l| l.r_u < 0.0 || l.r_v < 0.0 || l.r_k < 0.0) {
            return Err(Error::InvalidParameter("negative rate".into()));
        }
        Ok(Self {
            version: PLAN_FORMAT_VERSION,
            base: LogBase::Bits,
            q,
            m: 1 << q,
            ell,
            blocks,
            delta,
            epsilon: 0.0,
            u: q,
            degraded: levels.iter().all(|l| l.r_v == 0.0 && l.r_k == 0.0),
            levels,
        })
    }

    /// Levels carrying messages, `1..=u`.
    pub fn reliability_levels(&self) -> &[LevelRates] {
        &self.levels[..self.u]
    }

    pub fn sum_secret(&self) -> f64 {
        self.reliability_levels().iter().map(|l| l.r_v).sum()
    }

    pub fn sum_key(&self) -> f64 {
        self.reliability_levels().iter().map(|l| l.r_k).sum()
    }

    pub fn sum_message(&self) -> f64 {
        self.reliability_levels().iter().map(|l| l.r_u + l.r_v).sum()
    }

    pub fn chaining_feasible(&self) -> bool {
        self.sum_secret() >= self.sum_key()
    }

    pub fn keys_required(&self) -> bool {
        self.sum_key() > 0.0
    }

    /// Total channel uses `n = B·m·ℓ`.
    pub fn channel_uses(&self) -> usize {
        self.blocks * self.m * self.ell
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: RatePlan = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if plan.version != PLAN_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported plan version {}", plan.version)));
        }
        Ok(plan)
    }
}

/// `ℓ = ⌊2mδ / (B·χ2(Q1‖Q0))⌋`.
pub fn blocklength(m: usize, delta: f64, blocks: usize, chi2: f64) -> usize {
    if chi2 <= 0.0 {
        return usize::MAX;
    }
    let v = 2.0 * m as f64 * delta / (blocks as f64 * chi2);
    // absorb representation error when the ratio is an integer
    (v * (1.0 + 1e-12)).floor() as usize
}

pub fn msd_rate_plan(bob: &Dmc, willie: &Dmc, cfg: &PlanConfig, base: LogBase) -> Result<RatePlan> {
    if cfg.q == 0 {
        return Err(Error::InvalidParameter("q must be at least 1".into()));
    }
    if cfg.blocks == 0 {
        return Err(Error::InvalidParameter("block count must be positive".into()));
    }
    if !(cfg.epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {}", cfg.epsilon)));
    }
    let q = cfg.q;
    let m = 1usize << q;
    let chi2 = willie.stats(LogBase::Nats).finite().map(|s| s.chi2).unwrap_or(f64::INFINITY);
    let ell = match cfg.ell_override {
        Some(l) => l,
        None if cfg.delta > 0.0 => blocklength(m, cfg.delta, cfg.blocks, chi2),
        None => 0,
    };
    if ell == 0 {
        return Err(Error::BlocklengthZero);
    }
    let table = level_mi_table(bob, willie, q, base)?;
    let e = cfg.epsilon / q as f64;
    let levels: Vec<LevelRates> = table
        .iter()
        .map(|t| {
            let (r_u, r_v, r_k) = if cfg.degraded {
                ((t.i_y - e).max(0.0), 0.0, 0.0)
            } else {
                (
                    (t.i_y - e).min(t.i_z + e).max(0.0),
                    (t.i_y - t.i_z - 2.0 * e).max(0.0),
                    (t.i_z - t.i_y + 2.0 * e).max(0.0),
                )
            };
            LevelRates { level: t.level, i_y: t.i_y, i_z: t.i_z, r_u, r_v, r_k }
        })
        .collect();
    if levels.iter().all(|l| l.r_u == 0.0) {
        return Err(Error::AllRatesZero);
    }
    let u = choose_u(&levels, cfg.u_policy);
    Ok(RatePlan {
        version: PLAN_FORMAT_VERSION,
        base,
        q,
        m,
        ell,
        blocks: cfg.blocks,
        delta: cfg.delta,
        epsilon: cfg.epsilon,
        u,
        degraded: cfg.degraded,
        levels,
    })
}

fn choose_u(levels: &[LevelRates], policy: UPolicy) -> usize {
    let q = levels.len();
    let u = match policy {
        UPolicy::CapacityShare(frac) => {
            let total: f64 = levels.iter().map(|l| l.i_y).sum();
            (1..=q)
                .find(|&u| levels[u..].iter().map(|l| l.i_y).sum::<f64>() < frac * total)
                .unwrap_or(q)
        }
        UPolicy::RateFloor(floor) => levels.iter().rposition(|l| l.r_u >= floor).map_or(1, |p| p + 1),
        UPolicy::Fixed(u) => u,
    };
    u.clamp(1, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSummary {
    /// Message bits over `sqrt(n·δ)`.
    pub covert_throughput: f64,
    /// Key bits over `sqrt(n·δ)`, first-block key amortized over the chain.
    pub key_throughput: f64,
    pub covert_capacity: f64,
    /// Clamped at zero.
    pub key_capacity: f64,
    pub key_capacity_raw: f64,
    pub key_cost: f64,
    pub message_bits: f64,
    /// Set when Willie's χ2 vanishes and the capacity ratios are 0/0.
    pub degenerate: bool,
}

/// Throughputs of `plan` next to the asymptotic targets. The KL values in the
/// stats are converted to the plan's unit.
pub fn throughput_summary(
    plan: &RatePlan,
    bob_stats: &DivergenceStats,
    willie_stats: &DivergenceStats,
) -> Result<ThroughputSummary> {
    if plan.ell == 0 {
        return Err(Error::BlocklengthZero);
    }
    let b = plan.blocks as f64;
    let ell = plan.ell as f64;
    let norm = (plan.channel_uses() as f64 * plan.delta).sqrt();
    let message_bits = b * ell * plan.sum_message();
    let key_cost = ell * plan.sum_key() + (b - 1.0) * ell * (plan.sum_key() - plan.sum_secret()).max(0.0);
    let (covert_throughput, key_throughput) = if norm > 0.0 {
        (message_bits / norm, key_cost / norm)
    } else {
        (0.0, 0.0)
    };
    let to_plan = |s: &DivergenceStats| plan.base.from_nats(s.base.to_nats(s.kl));
    let chi2 = willie_stats.chi2;
    let degenerate = !(chi2 > 0.0);
    let (covert_capacity, key_capacity_raw) = if degenerate {
        (0.0, 0.0)
    } else {
        let s = (2.0 / chi2).sqrt();
        (s * to_plan(bob_stats), s * (to_plan(willie_stats) - to_plan(bob_stats)))
    };
    Ok(ThroughputSummary {
        covert_throughput,
        key_throughput,
        covert_capacity,
        key_capacity: key_capacity_raw.max(0.0),
        key_capacity_raw,
        key_cost,
        message_bits,
        degenerate,
    })
}

/// 0-based range of `A^q(x_{i+1:q})` inside a super-symbol, with
/// `high_bits[0] = x_{i+1}`. High levels are the most significant bits of
/// `d(·)`, so the set is contiguous.
pub fn subblock_range(q: usize, i: usize, high_bits: &[u8]) -> Range<usize> {
    debug_assert_eq!(high_bits.len(), q - i);
    let offset = high_bits
        .iter()
        .enumerate()
        .fold(0usize, |acc, (t, &b)| acc | (usize::from(b & 1) << (i + t)));
    offset..offset + (1 << i)
}

/// The `2^i` coordinates of `block` indexed by `A^q(x̂_{i+1:q})`, ascending.
pub fn select_positions<T: Copy>(block: &[T], i: usize, high_bits: &[u8]) -> Result<Vec<T>> {
    if !block.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(block.len()));
    }
    let q = block.len().trailing_zeros() as usize;
    if i == 0 || i > q {
        return Err(Error::LevelOutOfRange { level: i, max: q });
    }
    if high_bits.len() != q - i {
        return Err(Error::SizeMismatch { what: "decoded high bits", expected: q - i, got: high_bits.len() });
    }
    Ok(block[subblock_range(q, i, high_bits)].to_vec())
}

/// `ln(s0/s1)` saturated at `±cap`; two infinite halves carry no evidence.
pub fn llr_from_sums(s0: f64, s1: f64, cap: f64) -> Result<f64> {
    if s0 == 0.0 && s1 == 0.0 {
        return Err(Error::DegenerateLlr);
    }
    if s0.is_infinite() && s1.is_infinite() {
        return Ok(0.0);
    }
    Ok((s0 / s1).ln().clamp(-cap, cap))
}

/// LLR of `x_i = 0` against `x_i = 1` from the selected likelihood ratios.
pub fn level_llr(lambdas: &[f64]) -> Result<f64> {
    level_llr_capped(lambdas, DEFAULT_LLR_CAP)
}

pub fn level_llr_capped(lambdas: &[f64], cap: f64) -> Result<f64> {
    let n = lambdas.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let (a, b) = lambdas.split_at(n / 2);
    llr_from_sums(ordered_sum(a), ordered_sum(b), cap)
}

// Summing in sorted order makes the result independent of the order within a half.
fn ordered_sum(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

/// The equivalent channel `W^i` seen by level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelChannel {
    level: usize,
    dmc: Dmc,
    ratios: Vec<f64>,
    cap: f64,
}

impl LevelChannel {
    pub fn new(dmc: &Dmc, level: usize) -> Result<Self> {
        if level == 0 || level >= usize::BITS as usize {
            return Err(Error::LevelOutOfRange { level, max: usize::BITS as usize - 1 });
        }
        Ok(Self { level, dmc: dmc.clone(), ratios: dmc.ratios(), cap: DEFAULT_LLR_CAP })
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn half(&self) -> usize {
        1 << (self.level - 1)
    }

    pub fn dmc(&self) -> &Dmc {
        &self.dmc
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// LLR from per-half output histograms. Exactly invariant under any
    /// reordering within a half.
    pub fn llr_from_counts(&self, counts0: &[u64], counts1: &[u64]) -> Result<f64> {
        llr_from_sums(self.weighted(counts0), self.weighted(counts1), self.cap)
    }

    fn weighted(&self, counts: &[u64]) -> f64 {
        counts
            .iter()
            .zip(&self.ratios)
            .filter(|(&n, _)| n > 0)
            .map(|(&n, &l)| n as f64 * l)
            .sum()
    }

    /// LLR of a selected subblock of length `2^i`.
    pub fn llr_of_block(&self, sub: &[usize]) -> Result<f64> {
        if sub.len() != 2 * self.half() {
            return Err(Error::SizeMismatch { what: "level subblock", expected: 2 * self.half(), got: sub.len() });
        }
        let a = self.dmc.alphabet_size();
        let (mut c0, mut c1) = (vec![0u64; a], vec![0u64; a]);
        let (h0, h1) = sub.split_at(self.half());
        h0.iter().for_each(|&y| c0[y] += 1);
        h1.iter().for_each(|&y| c1[y] += 1);
        self.llr_from_counts(&c0, &c1)
    }

    /// Draws the per-half output histograms for input `x`, pulse placed
    /// uniformly in half `x`.
    pub fn sample_counts<R: Rng + ?Sized>(&self, x: u8, rng: &mut R) -> (Vec<u64>, Vec<u64>) {
        let h = self.half() as u64;
        let mut pulse = multinomial(h - 1, self.dmc.row0(), rng);
        pulse[sample_index(self.dmc.row1(), rng)] += 1;
        let quiet = multinomial(h, self.dmc.row0(), rng);
        if x == 0 {
            (pulse, quiet)
        } else {
            (quiet, pulse)
        }
    }

    pub fn sample_llr<R: Rng + ?Sized>(&self, x: u8, rng: &mut R) -> f64 {
        let (c0, c1) = self.sample_counts(x, rng);
        // the pulse half always holds a row1 draw, so the sums cannot both vanish
        self.llr_from_counts(&c0, &c1).unwrap_or(0.0)
    }

    /// `W^i(y | x)` for an explicit output block of length `2^i`.
    pub fn transition(&self, y: &[usize], x: u8) -> f64 {
        let h = self.half();
        let p0: Vec<f64> = y.iter().map(|&s| self.dmc.row0()[s]).collect();
        let half = &y[usize::from(x) * h..(usize::from(x) + 1) * h];
        let start = usize::from(x) * h;
        let sum: f64 = half
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let j = start + k;
                p0.iter()
                    .enumerate()
                    .map(|(t, &p)| if t == j { self.dmc.row1()[s] } else { p })
                    .product::<f64>()
            })
            .sum();
        sum / h as f64
    }
}

pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() || mass <= p {
            out[k] = left;
            break;
        }
        let c = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, c).expect("valid binomial").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// Exhaustive `I(X_S; Ỹ | X_C)` over the full super channel with `m = 2^q`
/// and uniform independent level bits. Levels are 1-based. Costs
/// `|Y|^m · m` operations, so only small `q` are practical.
pub fn brute_force_conditional_mi(
    dmc: &Dmc,
    q: usize,
    set: &[usize],
    cond: &[usize],
    base: LogBase,
    budget: u128,
) -> Result<f64> {
    let m = 1usize << q;
    let a = dmc.alphabet_size();
    let outputs = (a as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if outputs.saturating_mul(m as u128) > budget {
        return Err(Error::BudgetExceeded { needed: outputs.saturating_mul(m as u128), budget });
    }
    for &l in set.iter().chain(cond) {
        if l == 0 || l > q {
            return Err(Error::LevelOutOfRange { level: l, max: q });
        }
    }
    let mask = |levels: &[usize]| levels.iter().fold(0usize, |acc, &l| acc | (1 << (l - 1)));
    let (sm, cm) = (mask(set), mask(cond));
    if sm & cm != 0 {
        return Err(Error::InvalidParameter("conditioning set overlaps target set".into()));
    }
    let joint = sm | cm;
    let n_joint = 1usize << joint.count_ones();
    let joint_vals: Vec<usize> = (0..m).filter(|j| j & !joint == 0).collect();
    let cond_vals: Vec<usize> = (0..m).filter(|j| j & !cm == 0).collect();

    let mut y = vec![0usize; m];
    let mut p_pos = vec![0.0f64; m];
    let mut total = 0.0;
    for _ in 0..outputs as usize {
        for (pos, p) in p_pos.iter_mut().enumerate() {
            *p = y
                .iter()
                .enumerate()
                .map(|(k, &s)| if k == pos { dmc.row1()[s] } else { dmc.row0()[s] })
                .product();
        }
        let avg = |pattern: usize, msk: usize| {
            let hits: Vec<f64> = (0..m).filter(|j| j & msk == pattern).map(|j| p_pos[j]).collect();
            hits.iter().sum::<f64>() / hits.len() as f64
        };
        for &c in &cond_vals {
            let pc = avg(c, cm);
            for &v in joint_vals.iter().filter(|&&v| v & cm == c) {
                let pv = avg(v, joint);
                if pv > 0.0 {
                    total += pv * (pv / pc).ln();
                }
            }
        }
        // next output tuple
        for s in y.iter_mut() {
            *s += 1;
            if *s < a {
                break;
            }
            *s = 0;
        }
    }
    Ok(base.from_nats(total / n_joint as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BSC_LEVEL_CAPACITIES: [f64; 16] = [
        0.7421, 0.6387, 0.4918, 0.3214, 0.1749, 0.0853, 0.0413, 0.0203, 0.0101, 0.0050, 0.0025,
        0.0013, 0.0006, 0.0003, 0.0002, 0.0001,
    ];

    #[test]
    fn posterior_capacity_matches_ladder() {
        for d in [Dmc::bsc(0.1).unwrap(), Dmc::bac(0.2, 0.05).unwrap(), Dmc::new(vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]).unwrap()] {
            let c = level_capacities(&d, 5, LogBase::Nats).unwrap();
            for (k, &ci) in c.iter().enumerate() {
                let p = level_capacity_by_posterior(&d, k + 1, LogBase::Nats, 1 << 27).unwrap();
                assert_abs_diff_eq!(p, ci, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_levels_carry_one_bit() {
        let d = Dmc::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        for c in level_capacities(&d, 12, LogBase::Bits).unwrap() {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-12);
        }
        // Z-channel: the pulse survives with probability 0.7.
        let z = Dmc::new(vec![1.0, 0.0], vec![0.3, 0.7]).unwrap();
        let c = level_capacities(&z, 3, LogBase::Bits).unwrap();
        assert!(c.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn bsc_level_capacities_match_reference() {
        let d = Dmc::bsc(0.1).unwrap();
        assert_abs_diff_eq!(level_capacity(&d, 1, LogBase::Bits).unwrap(), BSC_LEVEL_CAPACITIES[0], epsilon = 5e-5);
        assert_abs_diff_eq!(level_capacity(&d, 5, LogBase::Bits).unwrap(), BSC_LEVEL_CAPACITIES[4], epsilon = 5e-5);
        let c = level_capacities(&d, 16, LogBase::Bits).unwrap();
        for (got, want) in c.iter().zip(BSC_LEVEL_CAPACITIES) {
            assert_abs_diff_eq!(*got, want, epsilon = 5e-5);
        }
    }

    #[test]
    fn identical_rows_have_zero_level_capacity() {
        let d = Dmc::new(vec![0.4, 0.6], vec![0.4, 0.6]).unwrap();
        for i in 1..=6 {
            assert_abs_diff_eq!(level_capacity(&d, i, LogBase::Bits).unwrap(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn capacity_sum_telescopes_to_kl() {
        let d = Dmc::bsc(0.1).unwrap();
        let s: f64 = level_capacities(&d, 16, LogBase::Bits).unwrap().iter().sum();
        assert_abs_diff_eq!(s, 2.5359, epsilon = 1e-3);
        assert_abs_diff_eq!(s, d.stats(LogBase::Bits).expect_finite().kl, epsilon = 1e-3);
    }

    #[test]
    fn bound_holds_on_high_levels() {
        let d = Dmc::bsc(0.1).unwrap();
        let st = d.stats(LogBase::Nats).expect_finite();
        let c = level_capacities(&d, 16, LogBase::Nats).unwrap();
        for i in 4..=16 {
            assert!(c[i - 1] <= level_capacity_bound(&st, i), "level {i}");
        }
        let r = level_capacity_bound(&st, 30) / (st.chi2 / 2f64.powi(30));
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bound_vanishes_for_identical_rows() {
        let d = Dmc::new(vec![0.4, 0.6], vec![0.4, 0.6]).unwrap();
        let st = d.stats(LogBase::Nats).expect_finite();
        for i in 1..8 {
            assert_eq!(level_capacity_bound(&st, i), 0.0);
        }
    }

    #[test]
    fn asymmetric_pair_differences() {
        let want = [-0.0905, -0.0452, -0.0084, 0.0077, 0.0084, 0.0052, 0.0028, 0.0014, 0.0007, 0.0004];
        let bob = Dmc::bsc(0.2).unwrap();
        let willie = Dmc::bac(0.1, 0.4).unwrap();
        let t = level_mi_table(&bob, &willie, 10, LogBase::Bits).unwrap();
        for (row, w) in t.iter().zip(want) {
            assert_abs_diff_eq!(row.diff, w, epsilon = 5e-5);
        }
        let same = level_mi_table(&bob, &bob, 6, LogBase::Bits).unwrap();
        assert!(same.iter().all(|r| r.diff == 0.0));
    }

    #[test]
    fn blocklength_example() {
        assert_eq!(blocklength(1024, 1.0, 1, 64.0 / 9.0), 288);
        let bsc = Dmc::bsc(0.1).unwrap();
        let chi2 = bsc.stats(LogBase::Nats).expect_finite().chi2;
        assert_eq!(blocklength(1024, 1.0, 1, chi2), 288);
    }

    #[test]
    fn degraded_plan_needs_no_keys() {
        let bob = Dmc::bsc(0.05).unwrap();
        let willie = Dmc::bsc(0.1).unwrap();
        for q in [2, 5, 10] {
            let cfg = PlanConfig { q, degraded: true, ..Default::default() };
            let p = msd_rate_plan(&bob, &willie, &cfg, LogBase::Bits).unwrap();
            assert!(p.levels.iter().all(|l| l.r_v == 0.0 && l.r_k == 0.0));
            assert!(!p.keys_required());
        }
    }

    #[test]
    fn non_degraded_plan_splits_secret_and_key_levels() {
        let bob = Dmc::bsc(0.2).unwrap();
        let willie = Dmc::bac(0.1, 0.4).unwrap();
        let cfg = PlanConfig { q: 10, epsilon: 1e-9, u_policy: UPolicy::Fixed(10), ..Default::default() };
        let p = msd_rate_plan(&bob, &willie, &cfg, LogBase::Bits).unwrap();
        for l in &p.levels {
            assert_eq!(l.r_v * l.r_k, 0.0);
            if l.level <= 3 {
                assert!(l.r_v > 0.0, "level {}", l.level);
            } else {
                assert!(l.r_k > 0.0, "level {}", l.level);
            }
        }
        assert!(p.sum_secret() > p.sum_key());
        assert!(p.chaining_feasible());
    }

    #[test]
    fn zero_delta_is_blocklength_zero() {
        let bob = Dmc::bsc(0.05).unwrap();
        let cfg = PlanConfig { delta: 0.0, ..Default::default() };
        assert_eq!(msd_rate_plan(&bob, &bob, &cfg, LogBase::Bits), Err(Error::BlocklengthZero));
    }

    #[test]
    fn u_capacity_share_rule() {
        let bob = Dmc::bsc(0.1).unwrap();
        let cfg = PlanConfig { q: 16, degraded: true, ..Default::default() };
        let p = msd_rate_plan(&bob, &bob, &cfg, LogBase::Bits).unwrap();
        let c: Vec<f64> = p.levels.iter().map(|l| l.i_y).collect();
        let total: f64 = c.iter().sum();
        assert!(c[p.u..].iter().sum::<f64>() < 0.01 * total);
        assert!(c[p.u - 1..].iter().sum::<f64>() >= 0.01 * total);
    }

    #[test]
    fn plan_json_round_trip() {
        let bob = Dmc::bsc(0.05).unwrap();
        let willie = Dmc::bsc(0.1).unwrap();
        let p = msd_rate_plan(&bob, &willie, &PlanConfig::default(), LogBase::Bits).unwrap();
        assert_eq!(RatePlan::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn throughput_approaches_capacity() {
        let bob = Dmc::bsc(0.1).unwrap();
        let willie = Dmc::bsc(0.15).unwrap();
        let bs = bob.stats(LogBase::Bits).expect_finite();
        let ws = willie.stats(LogBase::Nats).expect_finite();
        let mut last = 0.0;
        let mut summary = None;
        for q in 6..=12 {
            let cfg = PlanConfig { q, degraded: true, ..Default::default() };
            let p = msd_rate_plan(&bob, &willie, &cfg, LogBase::Bits).unwrap();
            let s = throughput_summary(&p, &bs, &ws).unwrap();
            assert!(s.covert_throughput > last, "q={q}");
            last = s.covert_throughput;
            summary = Some(s);
        }
        let s = summary.unwrap();
        assert!(s.covert_throughput < s.covert_capacity);
        assert!(s.covert_throughput > 0.95 * s.covert_capacity, "{s:?}");
    }

    #[test]
    fn throughput_degenerate_and_key_capacity() {
        let d = Dmc::bsc(0.1).unwrap();
        let st = d.stats(LogBase::Bits).expect_finite();
        let flat = Dmc::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let fst = flat.stats(LogBase::Bits).expect_finite();
        let plan = RatePlan::custom(
            2,
            4,
            1,
            1.0,
            vec![
                LevelRates { level: 1, i_y: 0.5, i_z: 0.0, r_u: 0.5, r_v: 0.0, r_k: 0.0 },
                LevelRates { level: 2, i_y: 0.5, i_z: 0.0, r_u: 0.5, r_v: 0.0, r_k: 0.0 },
            ],
        )
        .unwrap();
        let s = throughput_summary(&plan, &st, &fst).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.covert_capacity, 0.0);

        let bob = Dmc::bsc(0.2).unwrap().stats(LogBase::Bits).expect_finite();
        let willie = Dmc::bac(0.1, 0.4).unwrap().stats(LogBase::Bits).expect_finite();
        let s = throughput_summary(&plan, &bob, &willie).unwrap();
        assert!(s.key_capacity_raw < 0.0);
        assert_eq!(s.key_capacity, 0.0);
    }

    #[test]
    fn select_positions_examples() {
        let block: Vec<usize> = (1..=16).collect();
        assert_eq!(select_positions(&block, 3, &[0]).unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(select_positions(&block, 1, &[0, 0, 0]).unwrap(), vec![1, 2]);
        assert_eq!(select_positions(&block, 4, &[]).unwrap(), block);
        assert_eq!(select_positions(&block, 2, &[1, 0]).unwrap(), vec![5, 6, 7, 8]);
    }

    #[test]
    fn select_positions_matches_index_set() {
        let q = 5;
        let block: Vec<usize> = (1..=1 << q).collect();
        for i in 1..=q {
            for v in 0..1u32 << (q - i) {
                let high: Vec<u8> = (0..q - i).map(|t| ((v >> t) & 1) as u8).collect();
                let cons: Vec<(usize, u8)> = high.iter().enumerate().map(|(t, &b)| (i + 1 + t, b)).collect();
                let want = crate::ppm::index_set(q, &cons).unwrap();
                assert_eq!(select_positions(&block, i, &high).unwrap(), want);
            }
        }
    }

    #[test]
    fn llr_examples() {
        assert_eq!(level_llr(&[2.0; 8]).unwrap(), 0.0);
        assert_abs_diff_eq!(level_llr(&[9.0, 1.0 / 9.0]).unwrap(), 81f64.ln(), epsilon = 1e-12);
        let l = [3.0, 0.5, 0.1, 7.0];
        let sw = [0.1, 7.0, 3.0, 0.5];
        assert_eq!(level_llr(&l).unwrap(), -level_llr(&sw).unwrap());
        assert_eq!(level_llr(&[0.0, 0.0]), Err(Error::DegenerateLlr));
        assert_eq!(level_llr(&[f64::INFINITY, 1.0]).unwrap(), DEFAULT_LLR_CAP);
        assert_eq!(level_llr(&[0.0, 1.0]).unwrap(), -DEFAULT_LLR_CAP);
    }

    #[test]
    fn histogram_llr_matches_direct() {
        let d = Dmc::bac(0.1, 0.4).unwrap();
        let ch = LevelChannel::new(&d, 2).unwrap();
        let y = [1usize, 0, 0, 1];
        let lam = crate::ppm::likelihood_ratios(&d, &y);
        assert_abs_diff_eq!(ch.llr_of_block(&y).unwrap(), level_llr(&lam).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn transition_sums_to_one_and_matches_llr() {
        let d = Dmc::new(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]).unwrap();
        let ch = LevelChannel::new(&d, 2).unwrap();
        let mut tot = [0.0; 2];
        for v in 0..81usize {
            let y: Vec<usize> = (0..4).map(|k| (v / 3usize.pow(k)) % 3).collect();
            let (w0, w1) = (ch.transition(&y, 0), ch.transition(&y, 1));
            tot[0] += w0;
            tot[1] += w1;
            assert_abs_diff_eq!(ch.llr_of_block(&y).unwrap(), (w0 / w1).ln(), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(tot[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tot[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetry_swap_halves_flips_input() {
        let d = Dmc::bac(0.1, 0.4).unwrap();
        let ch = LevelChannel::new(&d, 2).unwrap();
        for v in 0..16usize {
            let y: Vec<usize> = (0..4).map(|k| (v >> k) & 1).collect();
            let sw: Vec<usize> = y[2..].iter().chain(&y[..2]).copied().collect();
            assert_abs_diff_eq!(ch.transition(&y, 0), ch.transition(&sw, 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn sampled_llr_mean_matches_exact_capacity_sign() {
        // E[LLR | x=0] is the KL between the level-channel rows: positive, and
        // the empirical information 1 − E[log2(1+e^{-L})] approximates C_i.
        let d = Dmc::bsc(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in [1usize, 3] {
            let ch = LevelChannel::new(&d, i).unwrap();
            let n = 200_000;
            let est: f64 = (0..n)
                .map(|_| 1.0 - (1.0 + (-ch.sample_llr(0, &mut rng)).exp()).log2())
                .sum::<f64>()
                / n as f64;
            let c = level_capacity(&d, i, LogBase::Bits).unwrap();
            assert_abs_diff_eq!(est, c, epsilon = 0.01);
        }
    }

    #[test]
    fn multinomial_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [0u64, 1, 17, 10_000] {
            let c = multinomial(n, &[0.2, 0.0, 0.5, 0.3], &mut rng);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn stationarity_small() {
        let d = Dmc::bsc(0.1).unwrap();
        for i in 1..=2usize {
            let c = level_capacity(&d, i, LogBase::Nats).unwrap();
            for q in i..=3 {
                let higher: Vec<usize> = (i + 1..=q).collect();
                let bf = brute_force_conditional_mi(&d, q, &[i], &higher, LogBase::Nats, 1 << 20).unwrap();
                assert_abs_diff_eq!(bf, c, epsilon = 1e-10);
            }
        }
    }
}
