//! End-to-end multilevel PPM: per-level polar encoding, the PPM mapper,
//! multistage decoding from level `q` down to 1, and key chaining over blocks.
//!
//! Each reliability level's information indices hold, in ascending order,
//! the key bits `K`, then the public payload `U`, then the secret payload `V`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{Dmc, LogBase};
use crate::error::{Error, Result};
use crate::extractor::{self, BinaryField, Elem, ExtractorConfig};
use crate::levels::{subblock_range, LevelChannel, RatePlan, DEFAULT_LLR_CAP};
use crate::polar::{level_reliability, sc_decode_with, PolarLevelCode};
use crate::ppm::{transmit_super, PpmFrame, SuperOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResolvabilityMode {
    /// Levels above `u` get independent uniform bits. The receiver is handed
    /// them (genie), which is reported.
    FullUniform,
    /// Levels above `u` are `Inv(s, 0, r)` over GF(2^{(q−u)ℓ}) with
    /// `k = ⌈ℓ(Σ_{i>u} I_Z,i + margin)⌉` random bits `r` shared with the receiver.
    Extractor { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub construction_trials: usize,
    pub seed: u64,
    pub resolvability: ResolvabilityMode,
    pub llr_cap: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            construction_trials: 2000,
            seed: 0,
            resolvability: ResolvabilityMode::FullUniform,
            llr_cap: DEFAULT_LLR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvabilitySource {
    FullUniform,
    Extractor { cfg: ExtractorConfig, seed: Elem },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLayout {
    pub level: usize,
    pub code: PolarLevelCode,
    pub key_idx: Vec<usize>,
    pub u_idx: Vec<usize>,
    pub v_idx: Vec<usize>,
    /// Sum of estimated synthetic-channel error probabilities over the payload.
    pub union_bound: f64,
}

impl LevelLayout {
    pub fn payload_len(&self) -> usize {
        self.u_idx.len() + self.v_idx.len()
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    plan: RatePlan,
    bob: Dmc,
    willie: Dmc,
    ell: usize,
    effective_delta: f64,
    layouts: Vec<LevelLayout>,
    channels: Vec<LevelChannel>,
    source: ResolvabilitySource,
}

fn floor_pow2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

impl Session {
    /// Builds per-level codes for levels `1..=u`. A non-power-of-two `ℓ` is
    /// rounded down and the covertness budget recomputed for it.
    pub fn new(plan: RatePlan, bob: Dmc, willie: Dmc, cfg: &SessionConfig) -> Result<Self> {
        let ell = floor_pow2(plan.ell);
        if ell == 0 {
            return Err(Error::BlocklengthZero);
        }
        let chi2 = willie.stats(LogBase::Nats).finite().map_or(f64::INFINITY, |s| s.chi2);
        let effective_delta = ell as f64 * plan.blocks as f64 * chi2 / (2.0 * plan.m as f64);
        let to_bits = |r: f64| LogBase::Bits.from_nats(plan.base.to_nats(r));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut layouts = Vec::with_capacity(plan.u);
        let mut channels = Vec::with_capacity(plan.u);
        let mut counts: Vec<[usize; 3]> = plan
            .reliability_levels()
            .iter()
            .map(|lr| {
                [
                    (ell as f64 * to_bits(lr.r_u)).floor() as usize,
                    (ell as f64 * to_bits(lr.r_v)).floor() as usize,
                    (ell as f64 * to_bits(lr.r_k)).ceil() as usize,
                ]
            })
            .collect();
        // rounding can leave Σ n_V a few bits short of Σ n_K on a feasible plan;
        // relabel that many public bits as secret, top level first
        if plan.chaining_feasible() {
            let mut deficit = counts.iter().map(|c| c[2]).sum::<usize>().saturating_sub(counts.iter().map(|c| c[1]).sum());
            for c in counts.iter_mut().rev() {
                let t = deficit.min(c[0]);
                c[0] -= t;
                c[1] += t;
                deficit -= t;
            }
        }
        for (lr, &[n_u, n_v, n_k]) in plan.reliability_levels().iter().zip(&counts) {
            let ch = LevelChannel::new(&bob, lr.level)?.with_cap(cfg.llr_cap);
            let total = n_u + n_v + n_k;
            if total > ell {
                return Err(Error::TooManyInfoBits { requested: total, ell });
            }
            let rel = level_reliability(&ch, ell, cfg.construction_trials, rng.random())?;
            let code = rel.code(lr.level, total)?;
            let info = code.info.clone();
            let key_idx = info[..n_k].to_vec();
            let u_idx = info[n_k..n_k + n_u].to_vec();
            let v_idx = info[n_k + n_u..].to_vec();
            let union_bound = u_idx.iter().chain(&v_idx).map(|&j| rel.pe[j]).sum();
            layouts.push(LevelLayout { level: lr.level, code, key_idx, u_idx, v_idx, union_bound });
            channels.push(ch);
        }
        let high = plan.q - plan.u;
        let source = match cfg.resolvability {
            ResolvabilityMode::FullUniform => ResolvabilitySource::FullUniform,
            ResolvabilityMode::Extractor { .. } if high == 0 => ResolvabilitySource::FullUniform,
            ResolvabilityMode::Extractor { margin } => {
                let w = high * ell;
                let i_z: f64 = plan.levels[plan.u..].iter().map(|l| to_bits(l.i_z)).sum();
                let k = ((ell as f64 * (i_z + margin)).ceil() as usize).min(w);
                let field = BinaryField::for_width(w)?;
                let seed = field.random_nonzero(&mut rng);
                ResolvabilitySource::Extractor { cfg: ExtractorConfig::new(field, k)?, seed }
            }
        };
        Ok(Self { plan, bob, willie, ell, effective_delta, layouts, channels, source })
    }

    pub fn plan(&self) -> &RatePlan {
        &self.plan
    }

    pub fn bob(&self) -> &Dmc {
        &self.bob
    }

    pub fn willie(&self) -> &Dmc {
        &self.willie
    }

    pub fn q(&self) -> usize {
        self.plan.q
    }

    pub fn m(&self) -> usize {
        self.plan.m
    }

    pub fn u(&self) -> usize {
        self.plan.u
    }

    /// Polar blocklength actually used.
    pub fn ell(&self) -> usize {
        self.ell
    }

    /// `δ` implied by the polar blocklength, `ℓ·B·χ2/(2m)` in nats.
    pub fn effective_delta(&self) -> f64 {
        self.effective_delta
    }

    pub fn layouts(&self) -> &[LevelLayout] {
        &self.layouts
    }

    pub fn source(&self) -> &ResolvabilitySource {
        &self.source
    }

    /// The receiver is handed the resolvability levels rather than
    /// reconstructing them from shared randomness.
    pub fn genie_high_levels(&self) -> bool {
        self.plan.q > self.plan.u && matches!(self.source, ResolvabilitySource::FullUniform)
    }

    pub fn message_sizes(&self) -> Vec<usize> {
        self.layouts.iter().map(LevelLayout::payload_len).collect()
    }

    pub fn key_sizes(&self) -> Vec<usize> {
        self.layouts.iter().map(|l| l.key_idx.len()).collect()
    }

    pub fn total_key_bits(&self) -> usize {
        self.key_sizes().iter().sum()
    }

    pub fn total_secret_bits(&self) -> usize {
        self.layouts.iter().map(|l| l.v_idx.len()).sum()
    }

    /// Bits of resolvability randomness per block.
    pub fn random_bits_per_block(&self) -> usize {
        match &self.source {
            ResolvabilitySource::FullUniform => (self.plan.q - self.plan.u) * self.ell,
            ResolvabilitySource::Extractor { cfg, .. } => cfg.k,
        }
    }

    fn high_levels_from(&self, random: &[u8]) -> Result<Vec<Vec<u8>>> {
        let bits = match &self.source {
            ResolvabilitySource::FullUniform => random.to_vec(),
            ResolvabilitySource::Extractor { cfg, seed } => {
                let b = vec![0u8; cfg.out_width()];
                cfg.field.to_bits(&extractor::inv(cfg, seed, &b, random)?)
            }
        };
        let high = self.plan.q - self.plan.u;
        if bits.len() != high * self.ell {
            return Err(Error::SizeMismatch { what: "resolvability bits", expected: high * self.ell, got: bits.len() });
        }
        Ok(bits.chunks(self.ell).map(<[u8]>::to_vec).collect())
    }
}

pub(crate) fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBlock {
    pub frame: PpmFrame,
    /// `x_{i,1:ℓ}` for every level `i = 1..=q`.
    pub level_bits: Vec<Vec<u8>>,
    /// What the receiver needs for levels above `u`: the bits themselves in
    /// full-uniform mode, `r` in extractor mode.
    pub random: Vec<u8>,
}

/// `messages[i]` is the `U ‖ V` payload of level `i+1`; `keys[i]` its key bits.
pub fn encode_block<R: Rng + ?Sized>(
    session: &Session,
    messages: &[Vec<u8>],
    keys: &[Vec<u8>],
    rng: &mut R,
) -> Result<EncodedBlock> {
    let u = session.u();
    if messages.len() != u {
        return Err(Error::SizeMismatch { what: "message levels", expected: u, got: messages.len() });
    }
    if keys.len() != u {
        return Err(Error::SizeMismatch { what: "key levels", expected: u, got: keys.len() });
    }
    let mut level_bits = Vec::with_capacity(session.q());
    for ((lay, msg), key) in session.layouts.iter().zip(messages).zip(keys) {
        if msg.len() != lay.payload_len() {
            return Err(Error::SizeMismatch { what: "level payload", expected: lay.payload_len(), got: msg.len() });
        }
        if key.len() < lay.key_idx.len() {
            return Err(Error::InsufficientKey { needed: lay.key_idx.len(), available: key.len() });
        }
        let mut info = key[..lay.key_idx.len()].to_vec();
        info.extend_from_slice(msg);
        level_bits.push(lay.code.encode(&info, &[])?);
    }
    let random = random_bits(rng, session.random_bits_per_block());
    level_bits.extend(session.high_levels_from(&random)?);
    let frame = PpmFrame::from_levels(&level_bits)?;
    Ok(EncodedBlock { frame, level_bits, random })
}

#[derive(Debug, Clone, Default)]
pub struct DecodeOptions<'a> {
    /// True level bits; when given, every reliability level is also decoded
    /// with the true higher levels (isolated, genie-conditioned errors).
    pub truth: Option<&'a [Vec<u8>]>,
    pub record_llrs: bool,
    /// Flips every decision of this level before lower levels use it.
    pub corrupt_level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// `U ‖ V` payload per reliability level.
    pub payload: Vec<Vec<u8>>,
    /// `x̂_{i,1:ℓ}` for all levels.
    pub level_bits: Vec<Vec<u8>>,
    /// Isolated payloads, decoded with the true higher levels.
    pub isolated: Option<Vec<Vec<u8>>>,
    pub llrs: Option<Vec<Vec<f64>>>,
    pub genie_high_levels: bool,
}

/// Multistage decoding from level `q` down to 1.
pub fn decode_block(
    session: &Session,
    received: &SuperOutput,
    keys: &[Vec<u8>],
    random: &[u8],
    opts: &DecodeOptions,
) -> Result<Decoded> {
    let (q, u, ell) = (session.q(), session.u(), session.ell);
    if received.q() != q || received.len() != ell {
        return Err(Error::SizeMismatch { what: "super output blocks", expected: ell, got: received.len() });
    }
    let mut xhat: Vec<Vec<u8>> = vec![Vec::new(); q];
    for (k, bits) in session.high_levels_from(random)?.into_iter().enumerate() {
        xhat[u + k] = bits;
    }
    if let Some(c) = opts.corrupt_level.filter(|&c| c > u && c <= q) {
        xhat[c - 1].iter_mut().for_each(|b| *b ^= 1);
    }
    let mut payload = vec![Vec::new(); u];
    let mut isolated = opts.truth.map(|_| vec![Vec::new(); u]);
    let mut llrs = opts.record_llrs.then(|| vec![Vec::new(); u]);
    for i in (1..=u).rev() {
        let lay = &session.layouts[i - 1];
        let ch = &session.channels[i - 1];
        let key = keys.get(i - 1).map(Vec::as_slice).unwrap_or(&[]);
        if key.len() < lay.key_idx.len() {
            return Err(Error::InsufficientKey { needed: lay.key_idx.len(), available: key.len() });
        }
        let mut known = lay.code.known_mask(None);
        for (&j, &b) in lay.key_idx.iter().zip(key) {
            known[j] = Some(b & 1);
        }
        let level_llrs = subblock_llrs(ch, received, &xhat, i);
        let (uh, xh) = sc_decode_with(&level_llrs, &known, |_, _, _| {})?;
        payload[i - 1] = lay.u_idx.iter().chain(&lay.v_idx).map(|&j| uh[j]).collect();
        xhat[i - 1] = xh;
        if opts.corrupt_level == Some(i) {
            xhat[i - 1].iter_mut().for_each(|b| *b ^= 1);
        }
        if let (Some(truth), Some(iso)) = (opts.truth, isolated.as_mut()) {
            let l = subblock_llrs(ch, received, truth, i);
            let (ut, _) = sc_decode_with(&l, &known, |_, _, _| {})?;
            iso[i - 1] = lay.u_idx.iter().chain(&lay.v_idx).map(|&j| ut[j]).collect();
        }
        if let Some(r) = llrs.as_mut() {
            r[i - 1] = level_llrs;
        }
    }
    Ok(Decoded { payload, level_bits: xhat, isolated, llrs, genie_high_levels: session.genie_high_levels() })
}

/// Per-symbol LLRs of level `i` on the subblocks selected by `bits` (levels
/// above `i`). A subblock that cannot hold the pulse under either input
/// carries no information and gets LLR 0.
pub fn subblock_llrs(ch: &LevelChannel, received: &SuperOutput, bits: &[Vec<u8>], i: usize) -> Vec<f64> {
    let q = received.q();
    let a = ch.dmc().alphabet_size();
    let half = 1usize << (i - 1);
    let mut high = vec![0u8; q - i];
    let (mut c0, mut c1) = (vec![0u64; a], vec![0u64; a]);
    (0..received.len())
        .map(|j| {
            for (t, h) in high.iter_mut().enumerate() {
                *h = bits[i + t][j];
            }
            let sub = &received.block(j)[subblock_range(q, i, &high)];
            c0.iter_mut().for_each(|c| *c = 0);
            c1.iter_mut().for_each(|c| *c = 0);
            sub[..half].iter().for_each(|&y| c0[y] += 1);
            sub[half..].iter().for_each(|&y| c1[y] += 1);
            ch.llr_from_counts(&c0, &c1).unwrap_or(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub sent: Vec<Vec<u8>>,
    pub decoded: Vec<Vec<u8>>,
    pub level_errors: Vec<bool>,
    pub isolated_errors: Option<Vec<bool>>,
    pub willie_output: Option<SuperOutput>,
    pub genie_high_levels: bool,
}

impl BlockResult {
    pub fn error(&self) -> bool {
        self.level_errors.iter().any(|&e| e)
    }
}

/// One block end to end: random payloads, encode, Bob's channel, MSD.
pub fn run_block<R: Rng + ?Sized>(
    session: &Session,
    keys: &[Vec<u8>],
    isolated: bool,
    willie_tap: bool,
    rng: &mut R,
) -> Result<BlockResult> {
    let sent: Vec<Vec<u8>> = session.message_sizes().iter().map(|&n| random_bits(rng, n)).collect();
    run_block_with(session, &sent, keys, keys, isolated, willie_tap, rng)
}

fn run_block_with<R: Rng + ?Sized>(
    session: &Session,
    sent: &[Vec<u8>],
    tx_keys: &[Vec<u8>],
    rx_keys: &[Vec<u8>],
    isolated: bool,
    willie_tap: bool,
    rng: &mut R,
) -> Result<BlockResult> {
    let enc = encode_block(session, sent, tx_keys, rng)?;
    let out = transmit_super(&session.bob, &enc.frame, rng);
    let willie_output = willie_tap.then(|| transmit_super(&session.willie, &enc.frame, rng));
    let opts = DecodeOptions { truth: isolated.then_some(enc.level_bits.as_slice()), ..Default::default() };
    let dec = decode_block(session, &out, rx_keys, &enc.random, &opts)?;
    let level_errors = sent.iter().zip(&dec.payload).map(|(s, d)| s != d).collect();
    let isolated_errors = dec.isolated.as_ref().map(|iso| sent.iter().zip(iso).map(|(s, d)| s != d).collect());
    Ok(BlockResult {
        sent: sent.to_vec(),
        decoded: dec.payload,
        level_errors,
        isolated_errors,
        willie_output,
        genie_high_levels: dec.genie_high_levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    pub level_errors: Vec<bool>,
    pub error: bool,
    /// `E^{(1:j)}`: this block or an earlier one failed.
    pub cumulative_error: bool,
    pub message_bits: usize,
    pub key_bits: usize,
    pub secret_bits: usize,
    #[serde(skip)]
    pub keys: Vec<u8>,
    #[serde(skip)]
    pub secret: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub blocks: usize,
    pub q: usize,
    pub u: usize,
    pub ell: usize,
    pub effective_delta: f64,
    pub channel_uses: usize,
    pub message_bits: usize,
    /// `log M_K + (B−1)(log M_K − log M_V)^+`
    pub key_cost_bits: usize,
    pub random_bits_per_block: usize,
    pub covert_throughput: f64,
    pub key_throughput: f64,
    pub any_error: bool,
    pub genie_high_levels: bool,
    pub records: Vec<BlockRecord>,
}

fn split_keys(bits: &[u8], sizes: &[usize]) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &n in sizes {
        out.push(bits[at..at + n].to_vec());
        at += n;
    }
    out
}

fn secret_of(session: &Session, payload: &[Vec<u8>]) -> Vec<u8> {
    session
        .layouts
        .iter()
        .zip(payload)
        .flat_map(|(l, p)| p[l.u_idx.len()..].iter().copied())
        .collect()
}

/// Runs `B` blocks, feeding the secret bits of block `j` (concatenated
/// level-ascending) as the keys of block `j+1`.
pub fn run_chain<R: Rng + ?Sized>(session: &Session, blocks: usize, willie_tap: bool, rng: &mut R) -> Result<ChainReport> {
    let sizes = session.key_sizes();
    let total_k = session.total_key_bits();
    let total_v = session.total_secret_bits();
    if blocks > 1 && total_v < total_k {
        return Err(Error::ChainingInfeasible { secret: total_v, key: total_k });
    }
    let mut tx = random_bits(rng, total_k);
    let mut rx = tx.clone();
    let mut cumulative = false;
    let mut records = Vec::with_capacity(blocks);
    let mut message_bits = 0;
    for b in 1..=blocks {
        let sent: Vec<Vec<u8>> = session.message_sizes().iter().map(|&n| random_bits(rng, n)).collect();
        let res = run_block_with(session, &sent, &split_keys(&tx, &sizes), &split_keys(&rx, &sizes), false, willie_tap, rng)?;
        let error = res.error();
        cumulative |= error;
        let secret = secret_of(session, &res.sent);
        let secret_rx = secret_of(session, &res.decoded);
        let msg: usize = res.sent.iter().map(Vec::len).sum();
        message_bits += msg;
        records.push(BlockRecord {
            block: b,
            level_errors: res.level_errors,
            error,
            cumulative_error: cumulative,
            message_bits: msg,
            key_bits: total_k,
            secret_bits: secret.len(),
            keys: tx.clone(),
            secret: secret.clone(),
        });
        tx = secret[..total_k.min(secret.len())].to_vec();
        rx = secret_rx[..total_k.min(secret_rx.len())].to_vec();
    }
    let key_cost_bits = total_k + (blocks.saturating_sub(1)) * total_k.saturating_sub(total_v);
    let channel_uses = blocks * session.m() * session.ell;
    let norm = (channel_uses as f64 * session.effective_delta).sqrt();
    let per = |bits: usize| if norm > 0.0 && norm.is_finite() { bits as f64 / norm } else { 0.0 };
    Ok(ChainReport {
        blocks,
        q: session.q(),
        u: session.u(),
        ell: session.ell,
        effective_delta: session.effective_delta,
        channel_uses,
        message_bits,
        key_cost_bits,
        random_bits_per_block: session.random_bits_per_block(),
        covert_throughput: per(message_bits),
        key_throughput: per(key_cost_bits),
        any_error: cumulative,
        genie_high_levels: session.genie_high_levels(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub blocks: usize,
    pub block_errors: usize,
    pub level_errors: Vec<usize>,
    pub isolated_errors: Vec<usize>,
    pub union_bounds: Vec<f64>,
}

impl ReliabilityReport {
    pub fn block_error_rate(&self) -> f64 {
        self.block_errors as f64 / self.blocks as f64
    }

    pub fn isolated_rates(&self) -> Vec<f64> {
        self.isolated_errors.iter().map(|&e| e as f64 / self.blocks as f64).collect()
    }
}

/// Independent blocks with fresh keys, in parallel; block `b` uses ChaCha
/// stream `b` of `seed`.
pub fn simulate_reliability(session: &Session, blocks: usize, seed: u64) -> Result<ReliabilityReport> {
    let sizes = session.key_sizes();
    let results: Vec<BlockResult> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let keys: Vec<Vec<u8>> = sizes.iter().map(|&n| random_bits(&mut rng, n)).collect();
            run_block(session, &keys, true, false, &mut rng)
        })
        .collect::<Result<_>>()?;
    let u = session.u();
    let mut rep = ReliabilityReport {
        blocks,
        block_errors: 0,
        level_errors: vec![0; u],
        isolated_errors: vec![0; u],
        union_bounds: session.layouts.iter().map(|l| l.union_bound).collect(),
    };
    for r in &results {
        rep.block_errors += usize::from(r.error());
        for (k, &e) in r.level_errors.iter().enumerate() {
            rep.level_errors[k] += usize::from(e);
        }
        for (k, &e) in r.isolated_errors.as_ref().unwrap().iter().enumerate() {
            rep.isolated_errors[k] += usize::from(e);
        }
    }
    Ok(rep)
}
