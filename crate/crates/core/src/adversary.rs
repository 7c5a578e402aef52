//! Willie's side: the distinct-column detector against linear codes,
//! square-root-law limits, and covertness measurements of the PPM scheme.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{Dmc, LogBase};
use crate::codec::{encode_block, random_bits, subblock_llrs, Session};
use crate::error::{Error, Result};
use crate::levels::{subblock_range, LevelChannel};
use crate::polar::frozen_consistency;
use crate::ppm::{ln_factorials, ppm_output_divergence, transmit_innocent, transmit_super, Estimate, PpmFrame, SuperOutput};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearCode {
    n: usize,
    k: usize,
    rows: Vec<Vec<u8>>,
}

fn pack(bits: impl Iterator<Item = u8>, len: usize) -> Vec<u64> {
    let mut out = vec![0u64; len.div_ceil(64)];
    for (j, b) in bits.enumerate() {
        out[j / 64] |= u64::from(b & 1) << (j % 64);
    }
    out
}

fn gf2_rank(mut rows: Vec<Vec<u64>>, n: usize) -> usize {
    let mut rank = 0;
    for col in 0..n {
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else { continue };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

impl LinearCode {
    /// `rows` is the k×n generator; it must have full row rank.
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if k == 0 || n == 0 {
            return Err(Error::InvalidParameter("generator must be non-empty".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::SizeMismatch { what: "generator row", expected: n, got: r.len() });
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("generator entries must be 0 or 1".into()));
        }
        let rank = gf2_rank(rows.iter().map(|r| pack(r.iter().copied(), n)).collect(), n);
        if rank != k {
            return Err(Error::RankDeficient { rank, k });
        }
        Ok(Self { n, k, rows })
    }

    /// `G = (I_k 0)`.
    pub fn identity_prefix(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidParameter(format!("k={k} exceeds n={n}")));
        }
        Self::new((0..k).map(|r| (0..n).map(|c| u8::from(c == r)).collect()).collect())
    }

    /// Uniform generator, redrawn until it has full rank.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k > n || k == 0 {
            return Err(Error::InvalidParameter(format!("need 0 < k ≤ n, got k={k}, n={n}")));
        }
        loop {
            let rows = (0..k).map(|_| random_bits(rng, n)).collect();
            match Self::new(rows) {
                Err(Error::RankDeficient { .. }) => continue,
                other => return other,
            }
        }
    }

    /// One generator row per line, `0`/`1` characters with optional
    /// whitespace; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::Parse(format!("unexpected character {c:?} in generator"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    fn column(&self, j: usize) -> Vec<u64> {
        pack(self.rows.iter().map(|r| r[j]), self.k)
    }

    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return Err(Error::SizeMismatch { what: "message", expected: self.k, got: message.len() });
        }
        let mut c = vec![0u8; self.n];
        for (row, &m) in self.rows.iter().zip(message) {
            if m & 1 == 1 {
                c.iter_mut().zip(row).for_each(|(a, b)| *a ^= b);
            }
        }
        Ok(c)
    }
}

/// One 1-based index per distinct nonzero column, first occurrence kept.
pub fn distinct_column_set(code: &LinearCode) -> Vec<usize> {
    let mut seen = HashMap::new();
    let mut s = Vec::new();
    for j in 0..code.n {
        let col = code.column(j);
        if col.iter().all(|&w| w == 0) {
            continue;
        }
        seen.entry(col).or_insert_with(|| {
            s.push(j + 1);
        });
    }
    s
}

fn centered_ratios(willie: &Dmc) -> Vec<f64> {
    (0..willie.alphabet_size())
        .map(|y| {
            let (q0, q1) = (willie.row0()[y], willie.row1()[y]);
            if q0 > 0.0 {
                (q1 - q0) / q0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// `T(z) = (1/|S|) Σ_{j∈S} (Q1(z_j) − Q0(z_j)) / Q0(z_j)`, `S` 1-based.
/// An output with `Q0(z_j) = 0` gives `+∞`.
pub fn test_statistic(z: &[usize], s: &[usize], willie: &Dmc) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidParameter("empty index set".into()));
    }
    let g = centered_ratios(willie);
    let mut acc = 0.0;
    for &j in s {
        if j == 0 || j > z.len() {
            return Err(Error::InvalidParameter(format!("index {j} outside 1..={}", z.len())));
        }
        let y = z[j - 1];
        if y >= g.len() {
            return Err(Error::InvalidParameter(format!("output symbol {y} outside the alphabet")));
        }
        acc += g[y];
    }
    Ok(acc / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub n: usize,
    pub k: usize,
    pub s_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub chi2: f64,
    pub chi3: f64,
    /// `γ = χ2/4`
    pub gamma: f64,
    pub alpha_hat: f64,
    pub alpha_std_err: f64,
    pub beta_hat: f64,
    pub beta_std_err: f64,
    /// Bounds with `|S|` in place of `k`.
    pub alpha_bound: f64,
    pub beta_bound: f64,
    pub alpha_bound_k: f64,
    pub beta_bound_k: f64,
    /// Exact false-alarm probability, binary outputs only.
    pub alpha_exact: Option<f64>,
    pub mean_t_h0: Estimate,
    pub mean_t_h1: Estimate,
    pub var_t_h0: f64,
    pub var_t_h0_std_err: f64,
    /// `χ2/|S|`
    pub var_t_h0_expected: f64,
    pub undetectable: bool,
}

fn prop1_bounds(chi2: f64, chi3: f64, size: usize) -> (f64, f64) {
    if chi2 == 0.0 {
        return (1.0, 1.0);
    }
    let s = size as f64;
    (16.0 / (s * chi2), (16.0 / chi2 + 8.0 * chi3 / (chi2 * chi2) - 4.0) / s)
}

/// `P_{H0}(T > γ)` for binary outputs: `T` only depends on the number of ones.
fn exact_alpha_binary(g: &[f64], q0_one: f64, size: usize, gamma: f64) -> f64 {
    let lnf = ln_factorials(size);
    let s = size as f64;
    let terms: Vec<f64> = (0..=size)
        .filter(|&c| (c as f64 * g[1] + (size - c) as f64 * g[0]) / s > gamma)
        .map(|c| {
            let lp = |p: f64, n: usize| if n == 0 { 0.0 } else { n as f64 * p.ln() };
            lnf[size] - lnf[c] - lnf[size - c] + lp(q0_one, c) + lp(1.0 - q0_one, size - c)
        })
        .collect();
    let Some(mx) = terms.iter().copied().reduce(f64::max) else { return 0.0 };
    if mx == f64::NEG_INFINITY {
        return 0.0;
    }
    mx.exp() * terms.iter().map(|t| (t - mx).exp()).sum::<f64>()
}

fn sample_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2) / n).max(0.0).sqrt())
}

fn rate(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Monte-Carlo α̂ (all-zero input) and β̂ (a fresh uniform message per trial)
/// of the threshold test `T > χ2/4`, in parallel; chunk `c` draws from
/// ChaCha stream `c` of a seed taken from `rng`.
pub fn detect_linear_code<R: Rng + ?Sized>(
    code: &LinearCode,
    willie: &Dmc,
    trials: usize,
    rng: &mut R,
) -> Result<DetectionReport> {
    if trials < 2 {
        return Err(Error::InvalidParameter("need at least 2 trials".into()));
    }
    let stats = willie
        .stats(LogBase::Nats)
        .finite()
        .copied()
        .ok_or_else(|| Error::InvalidParameter("Willie has an output only a pulse can produce".into()))?;
    let seed: u64 = rng.random();
    let s = distinct_column_set(code);
    let cols: Vec<Vec<u64>> = s.iter().map(|&j| code.column(j - 1)).collect();
    let g = centered_ratios(willie);
    let gamma = stats.chi2 / 4.0;
    let words = code.k.div_ceil(64);
    let tail = if code.k % 64 == 0 { u64::MAX } else { (1u64 << (code.k % 64)) - 1 };
    let chunks = trials.div_ceil(CHUNK);
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            let mut h0 = Vec::with_capacity(n);
            let mut h1 = Vec::with_capacity(n);
            let mut msg = vec![0u64; words];
            for _ in 0..n {
                let t0: f64 = (0..s.len()).map(|_| g[willie.sample_output(0, &mut rng)]).sum();
                h0.push(t0 / s.len() as f64);
                msg.iter_mut().for_each(|w| *w = rng.random());
                msg[words - 1] &= tail;
                let t1: f64 = cols
                    .iter()
                    .map(|col| {
                        let x = col.iter().zip(&msg).map(|(a, b)| (a & b).count_ones()).sum::<u32>() & 1;
                        g[willie.sample_output(x as u8, &mut rng)]
                    })
                    .sum();
                h1.push(t1 / s.len() as f64);
            }
            (h0, h1)
        })
        .collect();
    let (h0, h1): (Vec<f64>, Vec<f64>) = per.into_iter().fold((vec![], vec![]), |(mut a, mut b), (x, y)| {
        a.extend(x);
        b.extend(y);
        (a, b)
    });
    let undetectable = stats.chi2 == 0.0;
    let (alpha_hat, alpha_std_err) = rate(h0.iter().filter(|&&t| t > gamma).count(), trials);
    let (beta_hat, beta_std_err) = rate(h1.iter().filter(|&&t| t <= gamma).count(), trials);
    let (alpha_bound, beta_bound) = prop1_bounds(stats.chi2, stats.chi3, s.len());
    let (alpha_bound_k, beta_bound_k) = prop1_bounds(stats.chi2, stats.chi3, code.k);
    let alpha_exact = (willie.alphabet_size() == 2).then(|| exact_alpha_binary(&g, willie.row0()[1], s.len(), gamma));
    let (var_t_h0, var_t_h0_std_err) = sample_variance(&h0);
    Ok(DetectionReport {
        n: code.n,
        k: code.k,
        s_size: s.len(),
        trials,
        seed,
        chi2: stats.chi2,
        chi3: stats.chi3,
        gamma,
        alpha_hat,
        alpha_std_err,
        beta_hat,
        beta_std_err,
        alpha_bound,
        beta_bound,
        alpha_bound_k,
        beta_bound_k,
        alpha_exact,
        mean_t_h0: Estimate::from_samples(h0.iter().copied()),
        mean_t_h1: Estimate::from_samples(h1.iter().copied()),
        var_t_h0,
        var_t_h0_std_err,
        var_t_h0_expected: stats.chi2 / s.len() as f64,
        undetectable,
    })
}

/// `(μ_max, m_max) = ((1/V)√(δ/n), (2/V)√(nδ))` with `V` the total variation
/// between `Q1` and `Q0`.
pub fn srl_bound(delta: f64, n: usize, tv: f64) -> Result<(f64, f64)> {
    if !(tv > 0.0) {
        return Err(Error::InvalidParameter("total variation must be positive".into()));
    }
    if n == 0 || !(delta >= 0.0) {
        return Err(Error::InvalidParameter("need n ≥ 1 and δ ≥ 0".into()));
    }
    let n = n as f64;
    Ok(((delta / n).sqrt() / tv, 2.0 * (n * delta).sqrt() / tv))
}

/// A uniformly weighted list of `q×ℓ` level-bit arrays (repeats act as
/// weights). Entry layout is level-major: bit `(i−1)·ℓ + j` is `x_{i,j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TinyCodebook {
    q: usize,
    ell: usize,
    entries: Vec<Vec<u8>>,
}

pub const TINY_MAX_ENTRIES: usize = 1 << 16;

impl TinyCodebook {
    pub fn new(q: usize, ell: usize, entries: Vec<Vec<u8>>) -> Result<Self> {
        if q == 0 || ell == 0 || entries.is_empty() {
            return Err(Error::InvalidParameter("need q ≥ 1, ℓ ≥ 1 and at least one entry".into()));
        }
        if entries.len() > TINY_MAX_ENTRIES {
            return Err(Error::BudgetExceeded { needed: entries.len() as u128, budget: TINY_MAX_ENTRIES as u128 });
        }
        if let Some(e) = entries.iter().find(|e| e.len() != q * ell) {
            return Err(Error::SizeMismatch { what: "codebook entry", expected: q * ell, got: e.len() });
        }
        Ok(Self { q, ell, entries })
    }

    /// Every level-bit array, i.e. uniform PPM symbols.
    pub fn uniform(q: usize, ell: usize) -> Result<Self> {
        let n = q * ell;
        if n >= 17 {
            return Err(Error::BudgetExceeded { needed: 1u128 << n, budget: TINY_MAX_ENTRIES as u128 });
        }
        Self::new(q, ell, (0..1usize << n).map(|v| (0..n).map(|b| ((v >> b) & 1) as u8).collect()).collect())
    }

    pub fn single(levels: &[Vec<u8>]) -> Result<Self> {
        let ell = levels.first().map_or(0, Vec::len);
        Self::new(levels.len(), ell, vec![levels.concat()])
    }

    /// Independent per-level codebooks; the entries are their product.
    pub fn product(per_level: &[Vec<Vec<u8>>]) -> Result<Self> {
        let q = per_level.len();
        let ell = per_level.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let total: u128 = per_level.iter().map(|c| c.len() as u128).product();
        if total > TINY_MAX_ENTRIES as u128 {
            return Err(Error::BudgetExceeded { needed: total, budget: TINY_MAX_ENTRIES as u128 });
        }
        let mut entries = vec![Vec::new()];
        for level in per_level {
            entries = entries
                .iter()
                .flat_map(|e| level.iter().map(move |w| [e.as_slice(), w].concat()))
                .collect();
        }
        Self::new(q, ell, entries)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn frame(&self, idx: usize) -> PpmFrame {
        let e = &self.entries[idx];
        let levels: Vec<Vec<u8>> = e.chunks(self.ell).map(<[u8]>::to_vec).collect();
        PpmFrame::from_levels(&levels).expect("validated codebook entry")
    }
}

/// Exact output laws of a tiny instance, indexed by the flat output sequence
/// read as a base-|Y| number (coordinate `t` of the `mℓ` is digit `t`).
struct Enumerated {
    /// `P^{(c)}` for `c = 0..=q`: levels `1..c` uniform, the rest as coded.
    p: Vec<Vec<f64>>,
    q0n: Vec<f64>,
    /// Per-symbol `Q_PPM^m` and `Q_0^{⊗m}`.
    qppm_sym: Vec<f64>,
    q0_sym: Vec<f64>,
    alphabet: usize,
}

pub const DEFAULT_ORACLE_BUDGET: u128 = 1 << 30;

fn kron(parts: &[&[f64]]) -> Vec<f64> {
    let mut v = vec![1.0];
    for f in parts {
        let mut next = Vec::with_capacity(v.len() * f.len());
        for &a in f.iter() {
            next.extend(v.iter().map(|&b| b * a));
        }
        v = next;
    }
    v
}

fn enumerate(cb: &TinyCodebook, willie: &Dmc, budget: u128) -> Result<Enumerated> {
    let (q, ell) = (cb.q, cb.ell);
    let m = 1usize << q;
    let a = willie.alphabet_size();
    let sym = (a as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    let outputs = sym.checked_pow(ell as u32).unwrap_or(u128::MAX);
    let patterns = (cb.entries.len() as u128).min(1u128 << (q * ell).min(100));
    let work = outputs.saturating_mul(patterns).saturating_mul(q as u128 + 1);
    if work > budget {
        return Err(Error::BudgetExceeded { needed: work, budget });
    }
    let sym = sym as usize;
    let digits = |z: usize| (0..m).scan(z, move |r, _| {
        let d = *r % a;
        *r /= a;
        Some(d)
    });
    let q0_sym: Vec<f64> = (0..sym).map(|z| digits(z).map(|y| willie.row0()[y]).product()).collect();
    // pulse[k][z]: pulse at coordinate k, quiet elsewhere
    let pulse: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            (0..sym)
                .map(|z| digits(z).enumerate().map(|(t, y)| willie.row(u8::from(t == k))[y]).product())
                .collect()
        })
        .collect();
    let mut p = Vec::with_capacity(q + 1);
    for c in 0..=q {
        // per-symbol law given the bits of levels c+1..q
        let table: Vec<Vec<f64>> = (0..1usize << (q - c))
            .map(|h| {
                let high: Vec<u8> = (0..q - c).map(|t| ((h >> t) & 1) as u8).collect();
                let r = subblock_range(q, c, &high);
                let w = 1.0 / r.len() as f64;
                (0..sym).map(|z| r.clone().map(|k| pulse[k][z]).sum::<f64>() * w).collect()
            })
            .collect();
        let mut weights: HashMap<Vec<usize>, usize> = HashMap::new();
        for e in &cb.entries {
            let key: Vec<usize> = (0..ell)
                .map(|j| (c..q).fold(0, |acc, i| acc | (usize::from(e[i * ell + j]) << (i - c))))
                .collect();
            *weights.entry(key).or_default() += 1;
        }
        let mut keys: Vec<_> = weights.into_iter().collect();
        keys.sort();
        let total = cb.entries.len() as f64;
        let mut acc = vec![0.0; sym.pow(ell as u32)];
        for (key, count) in keys {
            let parts: Vec<&[f64]> = key.iter().map(|&h| table[h].as_slice()).collect();
            let w = count as f64 / total;
            acc.iter_mut().zip(kron(&parts)).for_each(|(s, v)| *s += w * v);
        }
        p.push(acc);
    }
    let qppm_sym = (0..sym).map(|z| (0..m).map(|k| pulse[k][z]).sum::<f64>() / m as f64).collect();
    let q0n = kron(&vec![q0_sym.as_slice(); ell]);
    Ok(Enumerated { p, q0n, qppm_sym, q0_sym, alphabet: a })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| if b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exact quantities of a tiny instance, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlOracle {
    pub q: usize,
    pub m: usize,
    pub ell: usize,
    pub entries: usize,
    /// `D(P_Z̃ ‖ Q0^{⊗mℓ})`
    pub d_total: f64,
    /// `D(P_Z̃ ‖ (Q_PPM^m)^{⊗ℓ})`
    pub d_resolvability: f64,
    /// `V(P_Z̃, (Q_PPM^m)^{⊗ℓ})`, half the L1 distance.
    pub tv_ppm: f64,
    /// `V(P_Z̃, Q0^{⊗mℓ})`
    pub tv_innocent: f64,
    /// `max_z̃ |ln(Q_PPM^m(z̃) / Q0^{⊗m}(z̃))|` over the support.
    pub max_log_ratio: f64,
    /// `2·V·ℓ·max_log_ratio`
    pub cross_term: f64,
    /// `D((Q_PPM^m)^{⊗ℓ} ‖ Q0^{⊗mℓ})`
    pub d_ppm: f64,
    /// `d_resolvability + cross_term + d_ppm ≥ d_total`
    pub bound: f64,
    /// `ℓ·ln(1/min (Q_PPM^m)^{⊗ℓ})·V ≥ d_resolvability`
    pub resolvability_bound: f64,
    /// `V(P^{(j−1)}, P^{(j)})` for `j = 1..=q`.
    pub level_tv: Vec<f64>,
    pub telescoped: f64,
}

impl KlOracle {
    pub fn bound_holds(&self) -> bool {
        let tol = 1e-12 * (1.0 + self.bound.abs());
        self.d_total <= self.bound + tol && self.tv_ppm <= self.telescoped + 1e-12
    }
}

pub fn exact_kl_oracle(cb: &TinyCodebook, willie: &Dmc) -> Result<KlOracle> {
    exact_kl_oracle_with_budget(cb, willie, DEFAULT_ORACLE_BUDGET)
}

pub fn exact_kl_oracle_with_budget(cb: &TinyCodebook, willie: &Dmc, budget: u128) -> Result<KlOracle> {
    let e = enumerate(cb, willie, budget)?;
    let (q, ell) = (cb.q, cb.ell);
    let p = &e.p[0];
    let qp = &e.p[q];
    let tv_ppm = tv(p, qp);
    let max_log_ratio = e
        .qppm_sym
        .iter()
        .zip(&e.q0_sym)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| (a / b).ln().abs())
        .fold(0.0, f64::max);
    let cross_term = if tv_ppm > 0.0 { 2.0 * tv_ppm * ell as f64 * max_log_ratio } else { 0.0 };
    let d_resolvability = kl(p, qp);
    let d_ppm = kl(qp, &e.q0n);
    let min_sym = e.qppm_sym.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let resolvability_bound = if tv_ppm > 0.0 { ell as f64 * (ell as f64 * -min_sym.ln()) * tv_ppm } else { 0.0 };
    let level_tv: Vec<f64> = (1..=q).map(|j| tv(&e.p[j - 1], &e.p[j])).collect();
    Ok(KlOracle {
        q,
        m: 1 << q,
        ell,
        entries: cb.entries.len(),
        d_total: kl(p, &e.q0n),
        d_resolvability,
        tv_ppm,
        tv_innocent: tv(p, &e.q0n),
        max_log_ratio,
        cross_term,
        d_ppm,
        bound: d_resolvability + cross_term + d_ppm,
        resolvability_bound,
        telescoped: level_tv.iter().sum(),
        level_tv,
    })
}

fn output_index(out: &SuperOutput, alphabet: usize) -> usize {
    out.symbols().iter().rev().fold(0, |acc, &y| acc * alphabet + y)
}

/// Sampling estimate of `V(P_Z̃, (Q_PPM^m)^{⊗ℓ})` as `E_P[(1 − Q/P)^+]`.
pub fn tiny_monte_carlo_tv<R: Rng + ?Sized>(cb: &TinyCodebook, willie: &Dmc, samples: usize, rng: &mut R) -> Result<Estimate> {
    let e = enumerate(cb, willie, DEFAULT_ORACLE_BUDGET)?;
    let (p, qp) = (&e.p[0], &e.p[cb.q]);
    Ok(Estimate::from_samples((0..samples).map(|_| {
        let idx = rng.random_range(0..cb.entries.len());
        let z = output_index(&transmit_super(willie, &cb.frame(idx), rng), e.alphabet);
        (1.0 - qp[z] / p[z]).max(0.0)
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    /// `P̂_scheme(A) − P̂_innocent(A)` for the test's acceptance region `A`.
    pub advantage: f64,
    pub std_err: f64,
    /// Same statistic between two independent innocent samples.
    pub null_advantage: Option<f64>,
    /// 95% half-width from the DKW inequality, applied to both samples.
    pub ci_halfwidth: f64,
    pub samples: usize,
    pub statistic: String,
}

fn dkw_halfwidth(n: usize) -> f64 {
    2.0 * ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt()
}

/// Exact likelihood-ratio test `P_Z̃(z) > Q0^{⊗mℓ}(z)` on a tiny instance; its
/// expected advantage is exactly `V(P_Z̃, Q0^{⊗mℓ})`.
pub fn tiny_lrt_advantage<R: Rng + ?Sized>(cb: &TinyCodebook, willie: &Dmc, samples: usize, rng: &mut R) -> Result<Advantage> {
    let e = enumerate(cb, willie, DEFAULT_ORACLE_BUDGET)?;
    let p = &e.p[0];
    let accept = |z: usize| p[z] > e.q0n[z];
    let mut hits1 = 0;
    let mut hits0 = 0;
    for _ in 0..samples {
        let idx = rng.random_range(0..cb.entries.len());
        hits1 += usize::from(accept(output_index(&transmit_super(willie, &cb.frame(idx), rng), e.alphabet)));
        hits0 += usize::from(accept(output_index(&transmit_innocent(willie, cb.q, cb.ell, rng), e.alphabet)));
    }
    let (r1, s1) = rate(hits1, samples);
    let (r0, s0) = rate(hits0, samples);
    Ok(Advantage {
        advantage: r1 - r0,
        std_err: (s1 * s1 + s0 * s0).sqrt(),
        null_advantage: None,
        ci_halfwidth: dkw_halfwidth(samples),
        samples,
        statistic: "exact likelihood ratio".into(),
    })
}

/// TV between two samples on common bins at pooled quantiles.
pub fn two_sample_tv(a: &[f64], b: &[f64], bins: usize) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins.max(1)).map(|k| pooled[k * pooled.len() / bins]).collect();
    edges.dedup();
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; edges.len() + 1];
        for &x in xs {
            h[edges.partition_point(|&e| e <= x)] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    0.5 * ha
        .iter()
        .zip(&hb)
        .map(|(&x, &y)| (x as f64 / a.len() as f64 - y as f64 / b.len() as f64).abs())
        .sum::<f64>()
}

/// `sup_t (P̂_a(X > t) − P̂_b(X > t))`, floored at 0: the empirical advantage of
/// the best threshold test calling large values "a".
pub fn threshold_advantage(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let above = |s: &[f64], t: f64| (s.len() - s.partition_point(|&x| x <= t)) as f64 / s.len() as f64;
    sa.iter()
        .chain(&sb)
        .map(|&t| above(&sa, t) - above(&sb, t))
        .chain([above(&sa, f64::NEG_INFINITY) - above(&sb, f64::NEG_INFINITY)])
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovertnessConfig {
    pub blocks: usize,
    pub seed: u64,
    pub bins: usize,
    /// Replace every level by uniform bits (control run).
    pub uniform_control: bool,
}

impl Default for CovertnessConfig {
    fn default() -> Self {
        Self { blocks: 2000, seed: 0, bins: 16, uniform_control: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTv {
    pub level: usize,
    pub statistic: String,
    /// Two-sample TV between `P^{(j−1)}` and `P^{(j)}` on the statistic.
    pub tv: f64,
    /// Same estimator between two independent `P^{(j)}` samples.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovertnessReport {
    pub q: usize,
    pub m: usize,
    pub ell: usize,
    pub u: usize,
    pub blocks: usize,
    pub seed: u64,
    pub uniform_control: bool,
    pub genie_high_levels: bool,
    pub level_tv: Vec<LevelTv>,
    /// Plug-in `Σ_j V(P^{(j−1)}, P^{(j)})`; biased upward by sampling noise.
    pub tv_sum: f64,
    pub lrt: Advantage,
    /// `ℓ·D(Q_PPM^m ‖ Q0^{⊗m})` in nats, when the type sum fits the budget.
    pub d_ppm: Option<f64>,
    pub max_log_ratio: f64,
    /// `2·tv_sum·ℓ·max_log_ratio`
    pub cross_term_bound: f64,
}

struct BlockStats {
    level: Vec<[f64; 3]>,
    scheme: f64,
    innocent: [f64; 2],
}

fn mixture_statistic(out: &SuperOutput, ratios: &[f64]) -> f64 {
    let m = out.order() as f64;
    out.blocks().map(|b| (b.iter().map(|&y| ratios[y]).sum::<f64>() / m).ln()).sum()
}

/// Per-level TV of the level statistic between neighbouring hybrids
/// `P^{(j−1)}` and `P^{(j)}`, and the advantage of a per-symbol mixture
/// likelihood-ratio test (a suboptimal baseline) against innocent output.
///
/// The level statistic is the frozen-bit consistency of Willie's level LLRs
/// on coded levels and the LLR sum elsewhere.
pub fn covertness_estimate(session: &Session, cfg: &CovertnessConfig) -> Result<CovertnessReport> {
    if cfg.blocks < 2 {
        return Err(Error::InvalidParameter("need at least 2 blocks".into()));
    }
    let (q, u, ell) = (session.q(), session.u(), session.ell());
    let willie = session.willie();
    let channels: Vec<LevelChannel> = (1..=q).map(|i| LevelChannel::new(willie, i)).collect::<Result<_>>()?;
    let ratios = willie.ratios();
    let stat = |i: usize, out: &SuperOutput, bits: &[Vec<u8>]| -> Result<f64> {
        let llrs = subblock_llrs(&channels[i - 1], out, bits, i);
        if i <= u {
            frozen_consistency(&llrs, &session.layouts()[i - 1].code)
        } else {
            Ok(llrs.iter().sum())
        }
    };
    let per: Vec<BlockStats> = (0..cfg.blocks)
        .into_par_iter()
        .map(|b| -> Result<BlockStats> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let keys: Vec<Vec<u8>> = session.key_sizes().iter().map(|&n| random_bits(&mut rng, n)).collect();
            let msgs: Vec<Vec<u8>> = session.message_sizes().iter().map(|&n| random_bits(&mut rng, n)).collect();
            let mut bits = encode_block(session, &msgs, &keys, &mut rng)?.level_bits;
            if cfg.uniform_control {
                bits.iter_mut().for_each(|l| *l = random_bits(&mut rng, ell));
            }
            let hybrid = |c: usize, rng: &mut ChaCha8Rng| -> Result<(SuperOutput, Vec<Vec<u8>>)> {
                let mut h = bits.clone();
                h[..c].iter_mut().for_each(|l| *l = random_bits(rng, ell));
                let out = transmit_super(willie, &PpmFrame::from_levels(&h)?, rng);
                Ok((out, h))
            };
            let mut level = Vec::with_capacity(q);
            for i in 1..=q {
                let mut row = [0.0; 3];
                for (slot, c) in row.iter_mut().zip([i - 1, i, i]) {
                    let (out, h) = hybrid(c, &mut rng)?;
                    *slot = stat(i, &out, &h)?;
                }
                level.push(row);
            }
            let (scheme_out, _) = hybrid(0, &mut rng)?;
            let scheme = mixture_statistic(&scheme_out, &ratios);
            let innocent = [0, 1].map(|_| mixture_statistic(&transmit_innocent(willie, q, ell, &mut rng), &ratios));
            Ok(BlockStats { level, scheme, innocent })
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&BlockStats) -> f64| per.iter().map(f).collect::<Vec<f64>>();
    let level_tv: Vec<LevelTv> = (1..=q)
        .map(|i| {
            let a = col(&|s| s.level[i - 1][0]);
            let b = col(&|s| s.level[i - 1][1]);
            let c = col(&|s| s.level[i - 1][2]);
            LevelTv {
                level: i,
                statistic: if i <= u { "frozen-bit consistency" } else { "level LLR sum" }.into(),
                tv: two_sample_tv(&a, &b, cfg.bins),
                noise_floor: two_sample_tv(&b, &c, cfg.bins),
            }
        })
        .collect();
    let tv_sum = level_tv.iter().map(|l| l.tv).sum();
    let scheme = col(&|s| s.scheme);
    let inn0 = col(&|s| s.innocent[0]);
    let inn1 = col(&|s| s.innocent[1]);
    let adv = threshold_advantage(&scheme, &inn0);
    let lrt = Advantage {
        advantage: adv,
        std_err: (adv.max(1e-300) * (1.0 - adv) / cfg.blocks as f64).sqrt(),
        null_advantage: Some(threshold_advantage(&inn1, &inn0)),
        ci_halfwidth: dkw_halfwidth(cfg.blocks),
        samples: cfg.blocks,
        statistic: "per-symbol mixture likelihood ratio (suboptimal)".into(),
    };
    let finite: Vec<f64> = ratios
        .iter()
        .enumerate()
        .filter(|&(y, _)| willie.row0()[y] > 0.0)
        .map(|(_, &l)| l)
        .collect();
    let max_log_ratio = finite.iter().filter(|&&l| l > 0.0).map(|l| l.ln().abs()).fold(0.0, f64::max);
    let d_ppm = ppm_output_divergence(willie, session.m(), LogBase::Nats).ok().map(|d| d * ell as f64);
    Ok(CovertnessReport {
        q,
        m: session.m(),
        ell,
        u,
        blocks: cfg.blocks,
        seed: cfg.seed,
        uniform_control: cfg.uniform_control,
        genie_high_levels: session.genie_high_levels(),
        level_tv,
        tv_sum,
        lrt,
        d_ppm,
        max_log_ratio,
        cross_term_bound: 2.0 * tv_sum * ell as f64 * max_log_ratio,
    })
}
