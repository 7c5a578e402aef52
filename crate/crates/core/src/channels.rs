//! Binary-input discrete memoryless channels and the divergence functionals
//! computed on their output distributions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input validation tolerance on row sums.
pub const VALIDATION_TOL: f64 = 1e-9;
/// Row sums of a constructed channel are exact to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Logarithm base for information quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Nats,
    #[default]
    Bits,
}

impl LogBase {
    /// Converts a quantity in nats to this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Nats => nats,
            LogBase::Bits => nats / std::f64::consts::LN_2,
        }
    }

    /// Converts a quantity in this base to nats.
    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            LogBase::Nats => value,
            LogBase::Bits => value * std::f64::consts::LN_2,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            LogBase::Nats => "nats",
            LogBase::Bits => "bits",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" | "nat" => Ok(LogBase::Nats),
            "bits" | "bit" => Ok(LogBase::Bits),
            other => Err(Error::Parse(format!("unknown log base '{other}'"))),
        }
    }
}

/// A binary-input DMC given by its two output distributions.
///
/// Input 0 is the innocent symbol. `row(0)` is the output law when nothing
/// is sent, `row(1)` the law of a pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    row0: Vec<f64>,
    row1: Vec<f64>,
}

fn validate_row(row: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in row.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > VALIDATION_TOL {
        return Err(Error::RowSum { sum });
    }
    Ok(row.iter().map(|p| p / sum).collect())
}

impl Dmc {
    /// Validates and renormalizes the two rows.
    pub fn new(row0: Vec<f64>, row1: Vec<f64>) -> Result<Self> {
        if row0.len() != row1.len() {
            return Err(Error::DimensionMismatch {
                expected: row0.len(),
                got: row1.len(),
            });
        }
        if row0.len() < 2 {
            return Err(Error::AlphabetTooSmall(row0.len()));
        }
        Ok(Self {
            row0: validate_row(&row0)?,
            row1: validate_row(&row1)?,
        })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p], vec![p, 1.0 - p])
    }

    /// Binary asymmetric channel: `flip0` = P(1|0), `flip1` = P(0|1).
    pub fn bac(flip0: f64, flip1: f64) -> Result<Self> {
        Self::new(vec![1.0 - flip0, flip0], vec![flip1, 1.0 - flip1])
    }

    pub fn alphabet_size(&self) -> usize {
        self.row0.len()
    }

    pub fn row0(&self) -> &[f64] {
        &self.row0
    }

    pub fn row1(&self) -> &[f64] {
        &self.row1
    }

    pub fn row(&self, x: u8) -> &[f64] {
        if x == 0 {
            &self.row0
        } else {
            &self.row1
        }
    }

    /// `row1(y) / row0(y)`; infinite where only the pulse can produce `y`.
    pub fn likelihood_ratio(&self, y: usize) -> f64 {
        let (p1, p0) = (self.row1[y], self.row0[y]);
        if p0 > 0.0 {
            p1 / p0
        } else if p1 > 0.0 {
            f64::INFINITY
        } else {
            // Unreachable output; it never occurs so any value is harmless.
            1.0
        }
    }

    /// Per-symbol likelihood ratios for the whole output alphabet.
    pub fn ratios(&self) -> Vec<f64> {
        (0..self.alphabet_size())
            .map(|y| self.likelihood_ratio(y))
            .collect()
    }

    /// Divergence functionals of the pulse law against the innocent law.
    pub fn stats(&self, base: LogBase) -> Divergence {
        divergence_stats(&self.row1, &self.row0, base).expect("rows have equal length")
    }

    /// Draws one output symbol for input `x`.
    pub fn sample_output<R: Rng + ?Sized>(&self, x: u8, rng: &mut R) -> usize {
        sample_index(self.row(x), rng)
    }

    /// Composition `self` followed by the stochastic matrix `next`.
    pub fn compose(&self, next: &[Vec<f64>]) -> Result<Dmc> {
        if next.len() != self.alphabet_size() {
            return Err(Error::DimensionMismatch {
                expected: self.alphabet_size(),
                got: next.len(),
            });
        }
        let out = next.first().map(Vec::len).unwrap_or(0);
        let mut rows = [vec![0.0; out], vec![0.0; out]];
        for (x, acc) in rows.iter_mut().enumerate() {
            for (y, w) in self.row(x as u8).iter().enumerate() {
                if next[y].len() != out {
                    return Err(Error::DimensionMismatch {
                        expected: out,
                        got: next[y].len(),
                    });
                }
                for (z, v) in next[y].iter().enumerate() {
                    acc[z] += w * v;
                }
            }
        }
        let [r0, r1] = rows;
        Dmc::new(r0, r1)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// All divergence functionals between two distributions, computed together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceStats {
    /// D(p‖q) in `base`.
    pub kl: f64,
    pub chi2: f64,
    pub chi3: f64,
    pub theta: f64,
    pub rho: f64,
    /// Total variation, half the L1 distance.
    pub tv: f64,
    /// Smallest nonzero entry of `q`.
    pub mu0: f64,
    /// Smallest nonzero entry of `p`.
    pub mu1: f64,
    pub base: LogBase,
}

/// Outcome of [`divergence_stats`]: finite, or `p` puts mass outside supp(q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Divergence {
    Finite(DivergenceStats),
    Infinite { tv: f64 },
}

impl Divergence {
    pub fn finite(&self) -> Option<&DivergenceStats> {
        match self {
            Divergence::Finite(s) => Some(s),
            Divergence::Infinite { .. } => None,
        }
    }

    pub fn tv(&self) -> f64 {
        match self {
            Divergence::Finite(s) => s.tv,
            Divergence::Infinite { tv } => *tv,
        }
    }

    /// Returns the stats or panics; for callers that have checked support.
    pub fn expect_finite(self) -> DivergenceStats {
        match self {
            Divergence::Finite(s) => s,
            Divergence::Infinite { .. } => panic!("divergence is infinite"),
        }
    }
}

/// Computes D, χ2, χ3, θ, ρ, TV of `p` against `q` in one pass.
///
/// χ_t(p‖q) = Σ (p−q)^t / q^{t−1}; θ = Σ p((p−q)/q)²; ρ = Σ p((p−q)/q)³.
/// Symbols with p = q = 0 contribute nothing.
pub fn divergence_stats(p: &[f64], q: &[f64], base: LogBase) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: p.len(),
        });
    }
    let mut kl = 0.0;
    let (mut chi2, mut chi3, mut theta, mut rho, mut l1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut mu0, mut mu1) = (f64::INFINITY, f64::INFINITY);
    let mut infinite = false;
    for (&pz, &qz) in p.iter().zip(q) {
        l1 += (pz - qz).abs();
        if pz > 0.0 {
            mu1 = mu1.min(pz);
        }
        if qz > 0.0 {
            mu0 = mu0.min(qz);
        } else {
            if pz > 0.0 {
                infinite = true;
            }
            continue;
        }
        if pz > 0.0 {
            kl += pz * (pz / qz).ln();
        }
        let r = (pz - qz) / qz;
        chi2 += qz * r * r;
        chi3 += qz * r * r * r;
        theta += pz * r * r;
        rho += pz * r * r * r;
    }
    let tv = 0.5 * l1;
    if infinite {
        return Ok(Divergence::Infinite { tv });
    }
    Ok(Divergence::Finite(DivergenceStats {
        kl: base.from_nats(kl.max(0.0)),
        chi2,
        chi3,
        theta,
        rho,
        tv,
        mu0,
        mu1,
        base,
    }))
}

/// Result of checking `willie = bob ∘ intermediate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationCheck {
    pub holds: bool,
    /// Largest absolute entry difference between the composition and `willie`.
    pub residual: f64,
}

/// Checks whether `willie` is `bob` followed by `intermediate` (|Y| × |Z| rows).
pub fn verify_degradation(
    bob: &Dmc,
    willie: &Dmc,
    intermediate: &[Vec<f64>],
) -> Result<DegradationCheck> {
    for row in intermediate {
        validate_row(row)?;
    }
    let composed = bob.compose(intermediate)?;
    if composed.alphabet_size() != willie.alphabet_size() {
        return Err(Error::DimensionMismatch {
            expected: willie.alphabet_size(),
            got: composed.alphabet_size(),
        });
    }
    let residual = composed
        .row0
        .iter()
        .zip(&willie.row0)
        .chain(composed.row1.iter().zip(&willie.row1))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DegradationCheck {
        holds: residual <= VALIDATION_TOL,
        residual,
    })
}

/// For binary outputs, the map `M` with `willie = bob ∘ M` if one exists:
/// `M = W_bob⁻¹ W_willie`, accepted when it is a stochastic matrix.
pub fn degrading_map(bob: &Dmc, willie: &Dmc) -> Option<Vec<Vec<f64>>> {
    if bob.alphabet_size() != 2 || willie.alphabet_size() != 2 {
        return None;
    }
    let (a, b) = (bob.row0[0], bob.row1[0]);
    let det = a - b;
    if det.abs() < 1e-12 {
        return None;
    }
    // inverse of [[a, 1−a], [b, 1−b]]
    let inv = [[(1.0 - b) / det, -(1.0 - a) / det], [-b / det, a / det]];
    let w = [&willie.row0, &willie.row1];
    let mut m = vec![vec![0.0; 2]; 2];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let x = inv[r][0] * w[0][c] + inv[r][1] * w[1][c];
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                return None;
            }
            *v = x.clamp(0.0, 1.0);
        }
    }
    verify_degradation(bob, willie, &m).ok().filter(|c| c.holds).map(|_| m)
}

/// Identity transition matrix on `n` symbols.
pub fn identity_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn construction_examples() {
        let bsc = Dmc::new(vec![0.9, 0.1], vec![0.1, 0.9]).unwrap();
        assert_eq!(bsc, Dmc::bsc(0.1).unwrap());
        let bac = Dmc::new(vec![0.9, 0.1], vec![0.4, 0.6]).unwrap();
        assert_eq!(bac, Dmc::bac(0.1, 0.4).unwrap());
        assert!(Dmc::new(vec![1.0, 0.0], vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Dmc::new(vec![0.5, 0.5], vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Dmc::new(vec![1.1, -0.1], vec![0.5, 0.5]),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
        assert!(matches!(
            Dmc::new(vec![0.5, 0.6], vec![0.5, 0.5]),
            Err(Error::RowSum { .. })
        ));
        assert!(matches!(
            Dmc::new(vec![1.0], vec![1.0]),
            Err(Error::AlphabetTooSmall(1))
        ));
    }

    #[test]
    fn rows_renormalized_exactly() {
        let d = Dmc::new(vec![0.3 + 1e-10, 0.7], vec![0.5, 0.5]).unwrap();
        assert!((d.row0().iter().sum::<f64>() - 1.0).abs() < ROW_SUM_TOL);
    }

    #[test]
    fn kl_examples_in_bits() {
        let s = divergence_stats(&[0.8, 0.2], &[0.2, 0.8], LogBase::Bits)
            .unwrap()
            .expect_finite();
        assert_abs_diff_eq!(s.kl, 1.2, epsilon = 1e-12);

        let s = divergence_stats(&[0.4, 0.6], &[0.9, 0.1], LogBase::Bits)
            .unwrap()
            .expect_finite();
        assert_abs_diff_eq!(s.kl, 1.083, epsilon = 5e-4);
    }

    #[test]
    fn identical_distributions_vanish() {
        let p = [0.25, 0.5, 0.25];
        let s = divergence_stats(&p, &p, LogBase::Nats)
            .unwrap()
            .expect_finite();
        assert_eq!((s.kl, s.chi2, s.chi3, s.tv), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn chi2_of_bsc_warden() {
        // (0.1-0.9)^2/0.9 + (0.9-0.1)^2/0.1 = 0.64/0.9 + 6.4
        let s = Dmc::bsc(0.1).unwrap().stats(LogBase::Nats).expect_finite();
        assert_abs_diff_eq!(s.chi2, 0.64 / 0.9 + 6.4, epsilon = 1e-12);
        assert_abs_diff_eq!(s.chi2, 7.1111, epsilon = 1e-4);
        assert_abs_diff_eq!(s.tv, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mu0, 0.1);
        assert_abs_diff_eq!(s.mu1, 0.1);
    }

    #[test]
    fn support_violation_is_infinite_not_error() {
        let d = divergence_stats(&[0.5, 0.5], &[1.0, 0.0], LogBase::Nats).unwrap();
        assert!(matches!(d, Divergence::Infinite { tv } if (tv - 0.5).abs() < 1e-15));
        // q = p = 0 contributes nothing
        let d = divergence_stats(&[1.0, 0.0], &[1.0, 0.0], LogBase::Nats).unwrap();
        assert_eq!(d.finite().unwrap().kl, 0.0);
    }

    #[test]
    fn kl_is_not_symmetric() {
        let bac = Dmc::bac(0.1, 0.4).unwrap();
        let a = divergence_stats(bac.row1(), bac.row0(), LogBase::Nats)
            .unwrap()
            .expect_finite();
        let b = divergence_stats(bac.row0(), bac.row1(), LogBase::Nats)
            .unwrap()
            .expect_finite();
        assert!((a.kl - b.kl).abs() > 1e-3);
    }

    #[test]
    fn degradation_examples() {
        let bob = Dmc::bsc(0.1).unwrap();
        let willie = Dmc::bsc(0.2).unwrap();
        let mid = vec![vec![7.0 / 8.0, 1.0 / 8.0], vec![1.0 / 8.0, 7.0 / 8.0]];
        let c = verify_degradation(&bob, &willie, &mid).unwrap();
        assert!(c.holds && c.residual < 1e-15);

        let c = verify_degradation(&bob, &bob, &identity_matrix(2)).unwrap();
        assert!(c.holds);

        // BSC(0.2) rows (0.8,0.2),(0.2,0.8) against (0.9,0.1),(0.4,0.6)
        let c = verify_degradation(
            &Dmc::bsc(0.2).unwrap(),
            &Dmc::bac(0.1, 0.4).unwrap(),
            &identity_matrix(2),
        )
        .unwrap();
        assert!(!c.holds);
        assert_abs_diff_eq!(c.residual, 0.2, epsilon = 1e-12);

        assert!(matches!(
            verify_degradation(&bob, &willie, &identity_matrix(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deterministic_channels_sample_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = Dmc::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let flip = Dmc::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(clean.sample_output(0, &mut rng), 0);
            assert_eq!(flip.sample_output(0, &mut rng), 1);
        }
    }

    #[test]
    fn bsc_sampling_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Dmc::bsc(0.1).unwrap();
        let n = 1_000_000;
        let ones = (0..n).filter(|_| d.sample_output(1, &mut rng) == 1).count();
        // binomial sd = sqrt(0.09/1e6) = 3e-4; 0.002 is > 6 sd
        assert!((ones as f64 / n as f64 - 0.9).abs() < 0.002);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let d = Dmc::bac(0.1, 0.4).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| d.sample_output(1, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn degrading_map_for_bsc_pair() {
        let m = degrading_map(&Dmc::bsc(0.05).unwrap(), &Dmc::bsc(0.1).unwrap()).unwrap();
        assert!((m[0][1] - 0.05 / 0.9).abs() < 1e-12);
        assert!(degrading_map(&Dmc::bsc(0.1).unwrap(), &Dmc::bsc(0.05).unwrap()).is_none());
        assert!(degrading_map(&Dmc::bsc(0.2).unwrap(), &Dmc::bac(0.1, 0.4).unwrap()).is_none());
    }
}
