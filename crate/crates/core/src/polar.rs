//! Polar codes for the level channels: the `F^{⊗n}` transform, successive
//! cancellation decoding, genie-aided Monte-Carlo construction, and codes with
//! randomized indices for resolvability.
//!
//! Bit indices are 0-based here. LLRs are natural-log `ln P(0)/P(1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::LevelChannel;

/// `x = u·G_ℓ` in place, `G_ℓ = F^{⊗n}` with `F = [[1,0],[1,1]]`.
pub fn polar_transform_in_place(x: &mut [u8]) -> Result<()> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for j in start..start + h {
                x[j] ^= x[j + h];
            }
        }
        h *= 2;
    }
    Ok(())
}

pub fn polar_transform(u: &[u8]) -> Result<Vec<u8>> {
    let mut x = u.to_vec();
    polar_transform_in_place(&mut x)?;
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeMode {
    Reliability,
    Resolvability,
}

/// A polar code for one level. Every index is exactly one of: information
/// (message), randomized (private randomness), or frozen to a fixed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarLevelCode {
    pub ell: usize,
    pub level: usize,
    pub mode: CodeMode,
    /// Ascending.
    pub info: Vec<usize>,
    /// Ascending.
    pub randomized: Vec<usize>,
    /// Ascending.
    pub frozen: Vec<usize>,
    pub frozen_values: Vec<u8>,
}

impl PolarLevelCode {
    /// Reliability code with the given information indices, remaining indices frozen to 0.
    pub fn reliability(ell: usize, level: usize, info: &[usize]) -> Result<Self> {
        Self::build(ell, level, CodeMode::Reliability, info, &[])
    }

    pub fn resolvability(ell: usize, level: usize, info: &[usize], randomized: &[usize]) -> Result<Self> {
        Self::build(ell, level, CodeMode::Resolvability, info, randomized)
    }

    fn build(ell: usize, level: usize, mode: CodeMode, info: &[usize], randomized: &[usize]) -> Result<Self> {
        if !ell.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(ell));
        }
        let mut role = vec![0u8; ell];
        for (&idx, tag) in info.iter().map(|i| (i, 1u8)).chain(randomized.iter().map(|i| (i, 2u8))) {
            if idx >= ell {
                return Err(Error::TooManyInfoBits { requested: idx + 1, ell });
            }
            if role[idx] != 0 {
                return Err(Error::InvalidParameter(format!("index {idx} assigned twice")));
            }
            role[idx] = tag;
        }
        let pick = |t: u8| (0..ell).filter(|&j| role[j] == t).collect::<Vec<_>>();
        let frozen = pick(0);
        Ok(Self {
            ell,
            level,
            mode,
            info: pick(1),
            randomized: pick(2),
            frozen_values: vec![0; frozen.len()],
            frozen,
        })
    }

    pub fn info_count(&self) -> usize {
        self.info.len()
    }

    pub fn random_count(&self) -> usize {
        self.randomized.len()
    }

    /// Places message and random bits, then transforms.
    pub fn encode(&self, message: &[u8], random: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.info.len() {
            return Err(Error::SizeMismatch { what: "message bits", expected: self.info.len(), got: message.len() });
        }
        if random.len() != self.randomized.len() {
            return Err(Error::SizeMismatch { what: "random bits", expected: self.randomized.len(), got: random.len() });
        }
        let mut u = vec![0u8; self.ell];
        for (&j, &v) in self.frozen.iter().zip(&self.frozen_values) {
            u[j] = v;
        }
        for (&j, &b) in self.info.iter().zip(message) {
            u[j] = b & 1;
        }
        for (&j, &b) in self.randomized.iter().zip(random) {
            u[j] = b & 1;
        }
        polar_transform_in_place(&mut u)?;
        Ok(u)
    }

    /// Per-index constraint for the decoder: frozen values fixed, and the
    /// randomized bits fixed too when supplied.
    pub fn known_mask(&self, random: Option<&[u8]>) -> Vec<Option<u8>> {
        let mut k = vec![None; self.ell];
        for (&j, &v) in self.frozen.iter().zip(&self.frozen_values) {
            k[j] = Some(v);
        }
        if let Some(r) = random {
            for (&j, &b) in self.randomized.iter().zip(r) {
                k[j] = Some(b & 1);
            }
        }
        k
    }
}

/// `resolvability_encode`: zeros on frozen indices, then transform.
pub fn resolvability_encode(code: &PolarLevelCode, message: &[u8], random: &[u8]) -> Result<Vec<u8>> {
    code.encode(message, random)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScOutput {
    /// Decided `û`.
    pub u: Vec<u8>,
    /// Re-encoded codeword `x̂ = û·G_ℓ`.
    pub x: Vec<u8>,
    pub info: Vec<u8>,
}

/// Exact check-node combination `2·atanh(tanh(a/2)·tanh(b/2))`.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = a.abs().min(b.abs());
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * s + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Successive cancellation with indices fixed by `known`; the callback sees
/// each leaf as `(index, llr, decided bit)`.
pub fn sc_decode_with<F: FnMut(usize, f64, u8)>(
    llrs: &[f64],
    known: &[Option<u8>],
    mut leaf: F,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let n = llrs.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if known.len() != n {
        return Err(Error::SizeMismatch { what: "known mask", expected: n, got: known.len() });
    }
    let mut u = vec![0u8; n];
    let mut x = vec![0u8; n];
    let mut scratch = vec![0.0; n];
    sc_rec(llrs, known, 0, &mut u, &mut x, &mut scratch, &mut leaf);
    Ok((u, x))
}

fn sc_rec<F: FnMut(usize, f64, u8)>(
    llr: &[f64],
    known: &[Option<u8>],
    base: usize,
    u: &mut [u8],
    x: &mut [u8],
    scratch: &mut [f64],
    leaf: &mut F,
) {
    let n = llr.len();
    if n == 1 {
        let v = known[0].unwrap_or(u8::from(llr[0] < 0.0));
        u[0] = v;
        x[0] = v;
        leaf(base, llr[0], v);
        return;
    }
    let h = n / 2;
    let (child, rest) = scratch.split_at_mut(h);
    let (la, lb) = llr.split_at(h);
    for j in 0..h {
        child[j] = boxplus(la[j], lb[j]);
    }
    let (ua, ub) = u.split_at_mut(h);
    let (xa, xb) = x.split_at_mut(h);
    sc_rec(child, &known[..h], base, ua, xa, rest, leaf);
    for j in 0..h {
        child[j] = if xa[j] == 0 { lb[j] + la[j] } else { lb[j] - la[j] };
    }
    sc_rec(child, &known[h..], base + h, ub, xb, rest, leaf);
    for j in 0..h {
        xa[j] ^= xb[j];
    }
}

/// Decodes with frozen indices fixed; randomized indices are decided like
/// information bits.
pub fn sc_decode(llrs: &[f64], code: &PolarLevelCode) -> Result<ScOutput> {
    sc_decode_known(llrs, code, None)
}

/// As [`sc_decode`], with the randomized bits supplied when the receiver knows them.
pub fn sc_decode_known(llrs: &[f64], code: &PolarLevelCode, random: Option<&[u8]>) -> Result<ScOutput> {
    if llrs.len() != code.ell {
        return Err(Error::SizeMismatch { what: "channel LLRs", expected: code.ell, got: llrs.len() });
    }
    let (u, x) = sc_decode_with(llrs, &code.known_mask(random), |_, _, _| {})?;
    let info = code.info.iter().map(|&j| u[j]).collect();
    Ok(ScOutput { u, x, info })
}

/// Estimated error probabilities of the synthetic channels, from genie-aided
/// SC over all-zero transmissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub ell: usize,
    pub trials: usize,
    /// Mean of `1/(1+e^{|L|})` per index: the MAP error probability for
    /// consistent LLRs, with far less variance than counting errors.
    pub pe: Vec<f64>,
    /// Indices sorted from most to least reliable.
    pub order: Vec<usize>,
}

impl Reliability {
    /// Reliability code on the `k` most reliable indices.
    pub fn code(&self, level: usize, k: usize) -> Result<PolarLevelCode> {
        if k > self.ell {
            return Err(Error::TooManyInfoBits { requested: k, ell: self.ell });
        }
        PolarLevelCode::reliability(self.ell, level, &self.order[..k])
    }

    /// Randomizes the `n_random` most reliable indices and carries no message.
    pub fn resolvability_code(&self, level: usize, n_random: usize) -> Result<PolarLevelCode> {
        if n_random > self.ell {
            return Err(Error::TooManyInfoBits { requested: n_random, ell: self.ell });
        }
        PolarLevelCode::resolvability(self.ell, level, &[], &self.order[..n_random])
    }

    /// Union bound `Σ_{j ∈ info} pe_j` for a code.
    pub fn union_bound(&self, code: &PolarLevelCode) -> f64 {
        code.info.iter().map(|&j| self.pe[j]).sum()
    }
}

const CONSTRUCTION_CHUNK: usize = 256;

/// Genie-aided Monte-Carlo estimate of synthetic channel reliabilities.
/// `sampler` returns the channel LLR of one transmitted zero. Chunks run in
/// parallel, each on its own ChaCha stream, so the result does not depend on
/// the thread count.
pub fn estimate_reliability<S>(sampler: &S, ell: usize, trials: usize, seed: u64) -> Result<Reliability>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if !ell.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(ell));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("construction needs at least one trial".into()));
    }
    let known = vec![Some(0u8); ell];
    let chunks = trials.div_ceil(CONSTRUCTION_CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CONSTRUCTION_CHUNK.min(trials - c * CONSTRUCTION_CHUNK);
            let mut acc = vec![0.0; ell];
            let mut llrs = vec![0.0; ell];
            for _ in 0..n {
                llrs.iter_mut().for_each(|l| *l = sampler(&mut rng));
                sc_decode_with(&llrs, &known, |j, l, _| acc[j] += 1.0 / (1.0 + l.abs().exp()))
                    .expect("power-of-two length");
            }
            acc
        })
        .collect();
    let mut pe = vec![0.0; ell];
    for p in &partial {
        for (a, b) in pe.iter_mut().zip(p) {
            *a += b;
        }
    }
    pe.iter_mut().for_each(|p| *p /= trials as f64);
    let mut order: Vec<usize> = (0..ell).collect();
    order.sort_by(|&a, &b| pe[a].total_cmp(&pe[b]).then(a.cmp(&b)));
    Ok(Reliability { ell, trials, pe, order })
}

/// `construct_code`: the `target_info` most reliable indices carry information.
pub fn construct_code<S, R>(
    sampler: &S,
    level: usize,
    ell: usize,
    target_info: usize,
    trials: usize,
    rng: &mut R,
) -> Result<PolarLevelCode>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if target_info > ell {
        return Err(Error::TooManyInfoBits { requested: target_info, ell });
    }
    estimate_reliability(sampler, ell, trials, rng.random())?.code(level, target_info)
}

/// Reliability of the synthetic channels built on a level channel.
pub fn level_reliability(channel: &LevelChannel, ell: usize, trials: usize, seed: u64) -> Result<Reliability> {
    estimate_reliability(&|rng: &mut ChaCha8Rng| channel.sample_llr(0, rng), ell, trials, seed)
}

/// `Σ_{j frozen} ln P(u_j = 0 | y, û_{<j})` under SC with frozen bits
/// forced: how well the observation agrees with the frozen constraints.
pub fn frozen_consistency(llrs: &[f64], code: &PolarLevelCode) -> Result<f64> {
    let known = code.known_mask(None);
    let mut acc = 0.0;
    sc_decode_with(llrs, &known, |j, l, _| {
        if known[j].is_some() {
            // ln σ(l) = −ln(1 + e^{−l})
            acc -= if l > 0.0 { (-l).exp().ln_1p() } else { -l + l.exp().ln_1p() };
        }
    })?;
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{Dmc, LogBase};
    use crate::levels::level_capacity;
    use rand::seq::SliceRandom;

    fn rand_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn kernel_by_hand() {
        assert_eq!(polar_transform(&[1, 0]).unwrap(), vec![1, 0]);
        assert_eq!(polar_transform(&[0, 1]).unwrap(), vec![1, 1]);
        assert_eq!(polar_transform(&[1, 1]).unwrap(), vec![0, 1]);
        assert_eq!(polar_transform(&[0; 8]).unwrap(), vec![0; 8]);
        assert_eq!(polar_transform(&[0; 6]), Err(Error::NotPowerOfTwo(6)));
    }

    #[test]
    fn transform_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in (1..=12).map(|t| 1usize << t) {
            let u = rand_bits(&mut rng, n);
            assert_eq!(polar_transform(&polar_transform(&u).unwrap()).unwrap(), u);
        }
    }

    #[test]
    fn transform_matches_kronecker_matrix() {
        // G_4 = F⊗F rows: 1000, 1100, 1010, 1111
        let g = [[1, 0, 0, 0], [1, 1, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1]];
        for v in 0..16u8 {
            let u: Vec<u8> = (0..4).map(|k| (v >> k) & 1).collect();
            let want: Vec<u8> = (0..4).map(|c| (0..4).map(|r| u[r] & g[r][c]).fold(0, |a, b| a ^ b)).collect();
            assert_eq!(polar_transform(&u).unwrap(), want);
        }
    }

    #[test]
    fn boxplus_matches_tanh_rule() {
        for (a, b) in [(1.0, 2.0), (-3.0, 0.5), (0.0, 4.0), (7.0, -7.0), (-0.2, -0.3)] {
            let want = 2.0 * ((a / 2.0f64).tanh() * (b / 2.0f64).tanh()).atanh();
            assert!((boxplus(a, b) - want).abs() < 1e-12, "{a} {b}");
        }
        assert!((boxplus(40.0, 40.0) - 40.0 + 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn all_frozen_returns_frozen_values() {
        let code = PolarLevelCode::reliability(8, 1, &[]).unwrap();
        let llrs = [-5.0, 3.0, -1.0, 2.0, -7.0, 0.5, -0.1, 9.0];
        let out = sc_decode(&llrs, &code).unwrap();
        assert_eq!(out.u, vec![0; 8]);
        assert!(out.info.is_empty());
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for ell in [2usize, 16, 256, 4096] {
            let mut idx: Vec<usize> = (0..ell).collect();
            idx.shuffle(&mut rng);
            let code = PolarLevelCode::reliability(ell, 1, &idx[..ell / 2]).unwrap();
            let msg = rand_bits(&mut rng, code.info_count());
            let x = code.encode(&msg, &[]).unwrap();
            let llrs: Vec<f64> = x.iter().map(|&b| if b == 0 { 40.0 } else { -40.0 }).collect();
            let out = sc_decode(&llrs, &code).unwrap();
            assert_eq!(out.info, msg);
            assert_eq!(out.x, x);
        }
    }

    #[test]
    fn construction_extremes() {
        let d = Dmc::bsc(0.1).unwrap();
        let ch = LevelChannel::new(&d, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = |r: &mut ChaCha8Rng| ch.sample_llr(0, r);
        let c0 = construct_code(&s, 1, 64, 0, 500, &mut rng).unwrap();
        assert_eq!(c0.frozen.len(), 64);
        let c1 = construct_code(&s, 1, 64, 64, 500, &mut rng).unwrap();
        assert!(c1.frozen.is_empty());
        assert!(construct_code(&s, 1, 64, 65, 500, &mut rng).is_err());
    }

    #[test]
    fn construction_is_thread_count_independent() {
        let d = Dmc::bsc(0.1).unwrap();
        let ch = LevelChannel::new(&d, 2).unwrap();
        let a = level_reliability(&ch, 128, 2000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| level_reliability(&ch, 128, 2000, 42).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn half_capacity_code_is_reliable() {
        let d = Dmc::bsc(0.1).unwrap();
        let ch = LevelChannel::new(&d, 1).unwrap();
        let c1 = level_capacity(&d, 1, LogBase::Bits).unwrap();
        let ell = 1024;
        let k = (0.5 * c1 * ell as f64) as usize;
        let rel = level_reliability(&ch, ell, 4000, 1).unwrap();
        let code = rel.code(1, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let blocks = 1000;
        let mut errors = 0;
        for _ in 0..blocks {
            let msg = rand_bits(&mut rng, k);
            let x = code.encode(&msg, &[]).unwrap();
            let llrs: Vec<f64> = x.iter().map(|&b| ch.sample_llr(b, &mut rng)).collect();
            if sc_decode(&llrs, &code).unwrap().info != msg {
                errors += 1;
            }
        }
        assert!((errors as f64) < 0.01 * blocks as f64, "{errors} block errors");
    }

    #[test]
    fn construction_is_stable_across_seeds() {
        let d = Dmc::bsc(0.1).unwrap();
        let ch = LevelChannel::new(&d, 1).unwrap();
        let ell = 1024;
        let a = level_reliability(&ch, ell, 20_000, 1).unwrap();
        let b = level_reliability(&ch, ell, 20_000, 2).unwrap();
        let k = ell / 2;
        let fa: std::collections::HashSet<_> = a.order[k..].iter().collect();
        let overlap = b.order[k..].iter().filter(|j| fa.contains(j)).count();
        assert!(overlap as f64 >= 0.9 * (ell - k) as f64, "overlap {overlap}");
    }

    #[test]
    fn fully_randomized_code_is_uniform() {
        let code = PolarLevelCode::resolvability(8, 2, &[], &(0..8).collect::<Vec<_>>()).unwrap();
        let mut seen = vec![0u32; 256];
        for r in 0..256u32 {
            let bits: Vec<u8> = (0..8).map(|k| ((r >> k) & 1) as u8).collect();
            let x = code.encode(&[], &bits).unwrap();
            let v = x.iter().enumerate().fold(0usize, |a, (k, &b)| a | (usize::from(b) << k));
            seen[v] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        let empty = PolarLevelCode::resolvability(8, 2, &[], &[]).unwrap();
        assert_eq!(empty.encode(&[], &[]).unwrap(), vec![0; 8]);
        assert!(matches!(code.encode(&[], &[0; 3]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn overlapping_roles_rejected() {
        assert!(PolarLevelCode::resolvability(8, 1, &[1, 2], &[2]).is_err());
        assert!(PolarLevelCode::reliability(8, 1, &[8]).is_err());
    }

    #[test]
    fn known_random_bits_are_honoured() {
        let code = PolarLevelCode::resolvability(8, 1, &[7], &[5, 6]).unwrap();
        let x = code.encode(&[1], &[1, 0]).unwrap();
        let llrs: Vec<f64> = x.iter().map(|&b| if b == 0 { 3.0 } else { -3.0 }).collect();
        let out = sc_decode_known(&llrs, &code, Some(&[1, 0])).unwrap();
        assert_eq!(out.info, vec![1]);
        assert_eq!(out.x, x);
    }
}
