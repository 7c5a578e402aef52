//! Pulse-position modulation: the bits-to-position mapper, index sets over
//! constrained levels, the m-fold super channel, and exact output divergences.
//!
//! Positions are 1-based: the bit vector `x_{1:q}` selects position
//! `d(x) + 1`, where `d` reads `x_1` as the least significant bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{sample_index, Dmc, LogBase};
use crate::error::{Error, Result};

/// Default cap on the number of output type classes the exact DP enumerates.
pub const DEFAULT_TYPE_BUDGET: u128 = 50_000_000;

/// `d(x_{1:q}) = Σ_t x_t 2^{t-1}`.
pub fn decimal_map(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (t, &b)| acc | (usize::from(b & 1) << t))
}

/// Inverse of [`decimal_map`] on `q` bits.
pub fn decimal_unmap(value: usize, q: usize) -> Vec<u8> {
    (0..q).map(|t| ((value >> t) & 1) as u8).collect()
}

/// `A^q(x_S)`: the 1-based positions whose bit pattern agrees with the
/// constrained levels. `constraints` holds `(level, bit)` pairs, levels 1-based.
pub fn index_set(q: usize, constraints: &[(usize, u8)]) -> Result<Vec<usize>> {
    let (mask, value) = constraint_mask(q, constraints)?;
    Ok((0..1usize << q)
        .filter(|j| j & mask == value)
        .map(|j| j + 1)
        .collect())
}

/// Complement of [`index_set`] in `1..=2^q`.
pub fn index_set_complement(q: usize, constraints: &[(usize, u8)]) -> Result<Vec<usize>> {
    let (mask, value) = constraint_mask(q, constraints)?;
    Ok((0..1usize << q)
        .filter(|j| j & mask != value)
        .map(|j| j + 1)
        .collect())
}

fn constraint_mask(q: usize, constraints: &[(usize, u8)]) -> Result<(usize, usize)> {
    let mut mask = 0usize;
    let mut value = 0usize;
    for &(level, bit) in constraints {
        if level == 0 || level > q {
            return Err(Error::LevelOutOfRange { level, max: q });
        }
        if bit > 1 {
            return Err(Error::InvalidParameter(format!("bit value {bit}")));
        }
        mask |= 1 << (level - 1);
        value |= usize::from(bit) << (level - 1);
    }
    Ok((mask, value))
}

/// A block of ℓ PPM symbols of order 2^q.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpmFrame {
    q: usize,
    positions: Vec<usize>,
}

impl PpmFrame {
    pub fn new(q: usize, positions: Vec<usize>) -> Result<Self> {
        let m = 1usize << q;
        if let Some(&bad) = positions.iter().find(|&&p| p == 0 || p > m) {
            return Err(Error::InvalidParameter(format!(
                "pulse position {bad} outside 1..={m}"
            )));
        }
        Ok(Self { q, positions })
    }

    /// Builds the frame from per-level bit sequences, `levels[i-1][j] = x_{i,j}`.
    pub fn from_levels(levels: &[Vec<u8>]) -> Result<Self> {
        let q = levels.len();
        let ell = levels.first().map(Vec::len).unwrap_or(0);
        for l in levels {
            if l.len() != ell {
                return Err(Error::SizeMismatch {
                    what: "level sequence",
                    expected: ell,
                    got: l.len(),
                });
            }
        }
        let positions = (0..ell)
            .map(|j| {
                levels
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (t, l)| acc | (usize::from(l[j] & 1) << t))
                    + 1
            })
            .collect();
        Ok(Self { q, positions })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn order(&self) -> usize {
        1 << self.q
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Recovers `x_{i,1:ℓ}` for level `i` (1-based).
    pub fn level_bits(&self, level: usize) -> Vec<u8> {
        self.positions
            .iter()
            .map(|p| (((p - 1) >> (level - 1)) & 1) as u8)
            .collect()
    }
}

/// Super-channel output: ℓ blocks of 2^q output symbols, stored flat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperOutput {
    q: usize,
    ell: usize,
    symbols: Vec<usize>,
}

impl SuperOutput {
    pub fn new(q: usize, symbols: Vec<usize>) -> Result<Self> {
        let m = 1usize << q;
        if symbols.len() % m != 0 {
            return Err(Error::SizeMismatch {
                what: "super output",
                expected: m * (symbols.len() / m + 1),
                got: symbols.len(),
            });
        }
        Ok(Self {
            q,
            ell: symbols.len() / m,
            symbols,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn order(&self) -> usize {
        1 << self.q
    }

    pub fn len(&self) -> usize {
        self.ell
    }

    pub fn is_empty(&self) -> bool {
        self.ell == 0
    }

    pub fn block(&self, j: usize) -> &[usize] {
        let m = self.order();
        &self.symbols[j * m..(j + 1) * m]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [usize] {
        let m = self.order();
        &mut self.symbols[j * m..(j + 1) * m]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> {
        self.symbols.chunks(self.order())
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }
}

/// Sends a frame through m independent channel uses per symbol.
pub fn transmit_super<R: Rng + ?Sized>(dmc: &Dmc, frame: &PpmFrame, rng: &mut R) -> SuperOutput {
    let m = frame.order();
    let mut symbols = Vec::with_capacity(m * frame.len());
    for &pos in frame.positions() {
        for k in 1..=m {
            let x = u8::from(k == pos);
            symbols.push(sample_index(dmc.row(x), rng));
        }
    }
    SuperOutput {
        q: frame.q(),
        ell: frame.len(),
        symbols,
    }
}

/// All-innocent output over m·ℓ channel uses, shaped like a super output.
pub fn transmit_innocent<R: Rng + ?Sized>(
    dmc: &Dmc,
    q: usize,
    ell: usize,
    rng: &mut R,
) -> SuperOutput {
    let symbols = (0..(ell << q))
        .map(|_| dmc.sample_output(0, rng))
        .collect();
    SuperOutput { q, ell, symbols }
}

/// λ_j = row1(y_j) / row0(y_j); `f64::INFINITY` marks outputs only a pulse can produce.
pub fn likelihood_ratios(dmc: &Dmc, block: &[usize]) -> Vec<f64> {
    block.iter().map(|&y| dmc.likelihood_ratio(y)).collect()
}

/// Natural-log factorials 0..=n.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// Exact D(P_PPM^m ‖ P_0^{⊗m}) in `base`, with the default type budget.
///
/// `P_PPM^m` is the output law of a uniformly placed pulse. The log-ratio
/// `ln((1/m) Σ_j λ(y_j))` only depends on the output histogram, so the sum runs
/// over type classes weighted by their P_0^{⊗m} probability.
pub fn ppm_output_divergence(dmc: &Dmc, m: usize, base: LogBase) -> Result<f64> {
    ppm_output_divergence_with_budget(dmc, m, base, DEFAULT_TYPE_BUDGET)
}

pub fn ppm_output_divergence_with_budget(
    dmc: &Dmc,
    m: usize,
    base: LogBase,
    budget: u128,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("PPM order must be positive".into()));
    }
    // Symbols reachable under P_0 with their (p0, λ); a pulse-only symbol makes D infinite.
    let mut support = Vec::new();
    for y in 0..dmc.alphabet_size() {
        let (p0, p1) = (dmc.row0()[y], dmc.row1()[y]);
        if p0 > 0.0 {
            support.push((p0, p1 / p0));
        } else if p1 > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let lnf = ln_factorials(m);
    let nats = match support.len() {
        1 => 0.0,
        2 => binary_type_sum(m, support[0], support[1], &lnf),
        k => {
            let types = type_count(m, k);
            if types > budget {
                return Err(Error::TypeBudgetExceeded { types, budget });
            }
            let mut acc = 0.0;
            let mut counts = vec![0usize; k];
            enumerate_types(&support, m, 0, m, &mut counts, &lnf, &mut acc);
            acc
        }
    };
    Ok(base.from_nats(nats.max(0.0)))
}

// f ln f − f + 1 ≥ 0; its P_0-expectation equals E[f ln f] because E[f] = 1.
fn excess(f: f64) -> f64 {
    if f <= 0.0 {
        1.0
    } else {
        f * f.ln() - f + 1.0
    }
}

fn binary_type_sum(m: usize, a: (f64, f64), b: (f64, f64), lnf: &[f64]) -> f64 {
    let (pa, la) = a;
    let (pb, lb) = b;
    let (lpa, lpb) = (pa.ln(), pb.ln());
    let mf = m as f64;
    (0..=m)
        .map(|k| {
            let lw = lnf[m] - lnf[k] - lnf[m - k] + k as f64 * lpa + (m - k) as f64 * lpb;
            let f = (k as f64 * la + (m - k) as f64 * lb) / mf;
            lw.exp() * excess(f)
        })
        .sum()
}

fn type_count(m: usize, k: usize) -> u128 {
    // C(m + k - 1, k - 1)
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c.saturating_mul(m as u128 + i) / i;
    }
    c
}

fn enumerate_types(
    support: &[(f64, f64)],
    m: usize,
    idx: usize,
    remaining: usize,
    counts: &mut [usize],
    lnf: &[f64],
    acc: &mut f64,
) {
    if idx == support.len() - 1 {
        counts[idx] = remaining;
        let mut lw = lnf[m];
        let mut f = 0.0;
        for (&n, &(p, l)) in counts.iter().zip(support) {
            lw += n as f64 * p.ln() - lnf[n];
            f += n as f64 * l;
        }
        *acc += lw.exp() * excess(f / m as f64);
        return;
    }
    for n in 0..=remaining {
        counts[idx] = n;
        enumerate_types(support, m, idx + 1, remaining - n, counts, lnf, acc);
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            std_err: (var / n.max(1) as f64).sqrt(),
            samples: n,
        }
    }
}

/// Sampling estimate of D(P_PPM^m ‖ P_0^{⊗m}) for alphabets too large to enumerate.
pub fn monte_carlo_divergence<R: Rng + ?Sized>(
    dmc: &Dmc,
    m: usize,
    samples: usize,
    base: LogBase,
    rng: &mut R,
) -> Estimate {
    let ratios = dmc.ratios();
    let est = Estimate::from_samples((0..samples).map(|_| {
        // pulse on coordinate 0 by symmetry
        let mut s = ratios[dmc.sample_output(1, rng)];
        for _ in 1..m {
            s += ratios[dmc.sample_output(0, rng)];
        }
        (s / m as f64).ln()
    }));
    Estimate {
        mean: base.from_nats(est.mean),
        std_err: base.from_nats(est.std_err),
        samples,
    }
}

/// Leading-order bound ℓ·χ2/(2m) on D((Q_PPM^m)^{⊗ℓ} ‖ Q_0^{⊗mℓ}), in nats.
///
/// Only the leading term; the exact value from [`ppm_output_divergence`] is
/// the reference.
pub fn ppm_divergence_bound(chi2: f64, m: usize, ell: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("PPM order {m} < 2")));
    }
    Ok(ell as f64 * chi2 / (2.0 * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decimal_map_examples() {
        assert_eq!(decimal_map(&[0, 0, 0, 0]), 0);
        assert_eq!(decimal_map(&[1, 0, 0, 0]), 1);
        assert_eq!(decimal_map(&[1, 1, 1, 1]), 15);
        assert_eq!(decimal_unmap(15, 4), vec![1, 1, 1, 1]);
    }

    #[test]
    fn decimal_round_trip_exhaustive() {
        for q in 1..=12 {
            for v in 0..1usize << q {
                assert_eq!(decimal_map(&decimal_unmap(v, q)), v);
            }
        }
    }

    #[test]
    fn index_set_examples() {
        assert_eq!(index_set(4, &[(4, 0)]).unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(
            index_set(4, &[(1, 1)]).unwrap(),
            vec![2, 4, 6, 8, 10, 12, 14, 16]
        );
        assert_eq!(index_set(3, &[]).unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(
            index_set_complement(4, &[(4, 0)]).unwrap(),
            (9..=16).collect::<Vec<_>>()
        );
        assert!(matches!(
            index_set(4, &[(5, 0)]),
            Err(Error::LevelOutOfRange { level: 5, max: 4 })
        ));
    }

    #[test]
    fn index_sets_partition_positions() {
        let q = 5;
        let levels = [2usize, 3, 5];
        let mut seen = vec![0u32; 1 << q];
        for a in 0..1u8 << levels.len() {
            let c: Vec<_> = levels
                .iter()
                .enumerate()
                .map(|(t, &l)| (l, (a >> t) & 1))
                .collect();
            let set = index_set(q, &c).unwrap();
            assert_eq!(set.len(), 1 << (q - levels.len()));
            for p in set {
                seen[p - 1] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn frame_from_levels_maps_lsb_first() {
        let f = PpmFrame::from_levels(&[vec![1, 1], vec![0, 1]]).unwrap();
        assert_eq!(f.positions(), &[2, 4]);
        assert_eq!(f.level_bits(2), vec![0, 1]);
        assert!(PpmFrame::new(2, vec![5]).is_err());
    }

    #[test]
    fn noiseless_super_channel() {
        let d = Dmc::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let f = PpmFrame::new(2, vec![3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = transmit_super(&d, &f, &mut rng);
        assert_eq!(out.block(0), &[0, 0, 1, 0]);
    }

    #[test]
    fn identical_rows_match_innocent_output() {
        let d = Dmc::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
        let f = PpmFrame::new(3, vec![5; 100]).unwrap();
        let a = transmit_super(&d, &f, &mut ChaCha8Rng::seed_from_u64(9));
        let b = transmit_innocent(&d, 3, 100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn bsc_pulse_coordinate_marginal() {
        let d = Dmc::bsc(0.1).unwrap();
        let n = 100_000;
        let f = PpmFrame::new(3, vec![1; n]).unwrap();
        let out = transmit_super(&d, &f, &mut ChaCha8Rng::seed_from_u64(4));
        let ones = out.blocks().filter(|b| b[0] == 1).count() as f64 / n as f64;
        assert!((ones - 0.9).abs() < 0.01);
        let others = out.blocks().filter(|b| b[5] == 1).count() as f64 / n as f64;
        assert!((others - 0.1).abs() < 0.01);
    }

    #[test]
    fn likelihood_ratio_examples() {
        let bsc = Dmc::bsc(0.1).unwrap();
        let l = likelihood_ratios(&bsc, &[1, 0]);
        assert_abs_diff_eq!(l[0], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 1.0 / 9.0, epsilon = 1e-12);
        let bac = Dmc::bac(0.1, 0.4).unwrap();
        let l = likelihood_ratios(&bac, &[1, 0]);
        assert_abs_diff_eq!(l[0], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 4.0 / 9.0, epsilon = 1e-12);
        let flat = Dmc::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert!(likelihood_ratios(&flat, &[0, 1, 1]).iter().all(|&x| x == 1.0));
        let erasure = Dmc::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert!(likelihood_ratios(&erasure, &[1])[0].is_infinite());
    }

    #[test]
    fn order_one_is_plain_divergence() {
        let d = Dmc::bsc(0.1).unwrap();
        let kl = d.stats(LogBase::Bits).expect_finite().kl;
        assert_abs_diff_eq!(
            ppm_output_divergence(&d, 1, LogBase::Bits).unwrap(),
            kl,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_rows_have_zero_divergence() {
        let d = Dmc::new(vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
        for m in [1, 2, 8, 64] {
            assert_abs_diff_eq!(
                ppm_output_divergence(&d, m, LogBase::Nats).unwrap(),
                0.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn order_two_matches_first_level_capacity() {
        let d = Dmc::bsc(0.1).unwrap();
        let kl = d.stats(LogBase::Bits).expect_finite().kl;
        let v2 = ppm_output_divergence(&d, 2, LogBase::Bits).unwrap();
        assert_abs_diff_eq!(kl - v2, 0.7421, epsilon = 5e-5);
    }

    #[test]
    fn pulse_only_symbol_gives_infinite_divergence() {
        let d = Dmc::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert!(ppm_output_divergence(&d, 4, LogBase::Nats)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let d = Dmc::new(vec![0.2; 5], vec![0.1, 0.1, 0.2, 0.3, 0.3]).unwrap();
        assert!(matches!(
            ppm_output_divergence_with_budget(&d, 1024, LogBase::Nats, 1000),
            Err(Error::TypeBudgetExceeded { .. })
        ));
    }

    #[test]
    fn bound_examples() {
        assert_abs_diff_eq!(
            ppm_divergence_bound(64.0 / 9.0, 1024, 288).unwrap(),
            1.0,
            epsilon = 1e-4
        );
        assert_eq!(ppm_divergence_bound(7.0, 16, 0).unwrap(), 0.0);
        assert!(ppm_divergence_bound(7.0, 1, 10).is_err());
    }

    #[test]
    fn exact_divergence_below_leading_bound() {
        let d = Dmc::bsc(0.1).unwrap();
        let chi2 = d.stats(LogBase::Nats).expect_finite().chi2;
        for m in [64, 128, 256] {
            let exact = ppm_output_divergence(&d, m, LogBase::Nats).unwrap();
            let bound = ppm_divergence_bound(chi2, m, 1).unwrap();
            // the O(1/m) correction: allow 1 + 8/m slack
            assert!(exact <= bound * (1.0 + 8.0 / m as f64), "m={m}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let d = Dmc::new(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]).unwrap();
        let exact = ppm_output_divergence(&d, 8, LogBase::Nats).unwrap();
        let mc =
            monte_carlo_divergence(&d, 8, 200_000, LogBase::Nats, &mut ChaCha8Rng::seed_from_u64(2));
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_err, "{mc:?} vs {exact}");
    }
}
