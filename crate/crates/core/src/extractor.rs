//! Invertible two-universal extractor over GF(2^w): `Ext(s, x)` keeps the low
//! `w − k` bits of `s⁻¹·x`, and `Inv(s, b, r) = s·(b ‖ r)` with `b` in the
//! low-order bits.
//!
//! Field elements are little-endian `u64` limbs; bit 0 is the constant
//! coefficient, which is also bit 1 in the LSB-first convention of `d(·)`.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULI: &str = include_str!("../assets/moduli.txt");

/// An element of GF(2^w), always `⌈w/64⌉` limbs with the unused high bits clear.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Elem(Vec<u64>);

impl Elem {
    pub fn limbs(&self) -> &[u64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&l| l == 0)
    }

    pub fn bit(&self, i: usize) -> u8 {
        ((self.0[i / 64] >> (i % 64)) & 1) as u8
    }

    /// Low 64 bits.
    pub fn low_u64(&self) -> u64 {
        self.0.first().copied().unwrap_or(0)
    }

    pub fn xor(&self, other: &Elem) -> Elem {
        Elem(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }
}

/// GF(2^w) modulo `x^w + Σ_{t ∈ taps} x^t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryField {
    w: usize,
    /// Exponents below `w` with coefficient 1, ascending; always contains 0.
    taps: Vec<usize>,
    limbs: usize,
    chunk: usize,
}

impl BinaryField {
    /// Builds the field. Irreducibility is checked by exhaustive trial
    /// division for `w ≤ 32` and by Rabin's test above that.
    pub fn new(w: usize, taps: Vec<usize>) -> Result<Self> {
        let f = Self::unchecked(w, taps)?;
        let ok = if w <= 32 { f.trial_division_irreducible() } else { f.rabin_irreducible() };
        if ok {
            Ok(f)
        } else {
            Err(Error::Reducible(w))
        }
    }

    fn unchecked(w: usize, mut taps: Vec<usize>) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidParameter("field width must be positive".into()));
        }
        taps.sort_unstable();
        taps.dedup();
        if taps.first() != Some(&0) || taps.iter().any(|&t| t >= w) {
            return Err(Error::InvalidParameter(format!("bad modulus taps {taps:?} for width {w}")));
        }
        let tmax = *taps.last().unwrap();
        Ok(Self { w, limbs: w.div_ceil(64), chunk: (w - tmax).min(64), taps })
    }

    /// Parses a hex modulus including the `x^w` term.
    pub fn from_hex(w: usize, hex: &str) -> Result<Self> {
        let f = Self::unchecked(w, taps_from_hex(w, hex)?)?;
        Ok(f)
    }

    /// The bundled modulus for `w`, or a sparse one found at runtime.
    pub fn for_width(w: usize) -> Result<Self> {
        if let Some(hex) = bundled_moduli().get(&w) {
            return Self::from_hex(w, hex);
        }
        find_sparse_modulus(w).map(|taps| Self::unchecked(w, taps).expect("search yields valid taps"))
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn modulus_hex(&self) -> String {
        let mut p = vec![0u64; (self.w + 1).div_ceil(64)];
        set_bit(&mut p, self.w);
        for &t in &self.taps {
            set_bit(&mut p, t);
        }
        poly_to_hex(&p)
    }

    pub fn zero(&self) -> Elem {
        Elem(vec![0; self.limbs])
    }

    pub fn one(&self) -> Elem {
        self.from_u64(1)
    }

    /// Truncated to `w` bits.
    pub fn from_u64(&self, v: u64) -> Elem {
        let mut e = self.zero();
        e.0[0] = v;
        self.mask(&mut e.0);
        e
    }

    /// LSB-first bits; missing high bits are zero.
    pub fn from_bits(&self, bits: &[u8]) -> Result<Elem> {
        if bits.len() > self.w {
            return Err(Error::SizeMismatch { what: "field element bits", expected: self.w, got: bits.len() });
        }
        let mut e = self.zero();
        for (i, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                set_bit(&mut e.0, i);
            }
        }
        Ok(e)
    }

    pub fn to_bits(&self, e: &Elem) -> Vec<u8> {
        (0..self.w).map(|i| e.bit(i)).collect()
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        let mut e = Elem((0..self.limbs).map(|_| rng.random()).collect());
        self.mask(&mut e.0);
        e
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        loop {
            let e = self.random(rng);
            if !e.is_zero() {
                return e;
            }
        }
    }

    fn mask(&self, p: &mut [u64]) {
        let r = self.w % 64;
        if r != 0 {
            p[self.limbs - 1] &= (1u64 << r) - 1;
        }
    }

    pub fn add(&self, a: &Elem, b: &Elem) -> Elem {
        a.xor(b)
    }

    pub fn mul(&self, a: &Elem, b: &Elem) -> Elem {
        let mut p = vec![0u64; 2 * self.limbs];
        for (i, &limb) in a.0.iter().enumerate() {
            let mut l = limb;
            while l != 0 {
                let t = l.trailing_zeros() as usize;
                xor_shifted(&mut p, &b.0, i * 64 + t);
                l &= l - 1;
            }
        }
        self.reduce(p)
    }

    pub fn square(&self, a: &Elem) -> Elem {
        self.reduce(poly_square(&a.0))
    }

    /// Inverse by the extended Euclidean algorithm over GF(2)[x].
    pub fn inv(&self, a: &Elem) -> Result<Elem> {
        if a.is_zero() {
            return Err(Error::ZeroInverse);
        }
        let mut u = a.0.clone();
        let mut v = self.modulus_poly();
        let mut g1 = vec![1u64];
        let mut g2 = vec![0u64];
        loop {
            let du = match degree(&u) {
                Some(d) => d,
                None => return Err(Error::Reducible(self.w)),
            };
            if du == 0 {
                break;
            }
            let dv = degree(&v).expect("v stays nonzero");
            if du < dv {
                std::mem::swap(&mut u, &mut v);
                std::mem::swap(&mut g1, &mut g2);
            }
            let j = degree(&u).unwrap() - degree(&v).unwrap();
            xor_shifted_grow(&mut u, &v, j);
            xor_shifted_grow(&mut g1, &g2, j);
        }
        Ok(self.reduce(g1))
    }

    fn modulus_poly(&self) -> Vec<u64> {
        let mut p = vec![0u64; (self.w + 1).div_ceil(64)];
        set_bit(&mut p, self.w);
        for &t in &self.taps {
            set_bit(&mut p, t);
        }
        p
    }

    /// Reduces an arbitrary polynomial modulo the field polynomial.
    fn reduce(&self, mut p: Vec<u64>) -> Elem {
        let mut hi = degree(&p).map_or(0, |d| d + 1);
        while hi > self.w {
            let c = self.chunk.min(hi - self.w);
            let lo = hi - c;
            let v = get_bits(&p, lo, c);
            if v != 0 {
                xor_bits(&mut p, lo, v, c);
                for &t in &self.taps {
                    xor_bits(&mut p, lo - self.w + t, v, c);
                }
            }
            hi = lo;
        }
        p.resize(self.limbs, 0);
        self.mask(&mut p);
        Elem(p)
    }

    fn trial_division_irreducible(&self) -> bool {
        let f = self.modulus_poly()[0] as u128;
        (1..=self.w / 2).all(|d| {
            (1u128 << d..1u128 << (d + 1)).all(|g| poly_mod_u128(f, g) != 0)
        })
    }

    /// Rabin: `x^{2^w} ≡ x` and `gcd(x^{2^{w/p}} − x, f) = 1` for primes `p | w`.
    fn rabin_irreducible(&self) -> bool {
        let f = self.modulus_poly();
        let x = self.from_u64(2);
        // Ben-Or style early exit on small factors
        let mut h = x.clone();
        let sieve = (self.w / 2).min(16);
        for _ in 1..=sieve {
            h = self.square(&h);
            if !is_one(&poly_gcd(f.clone(), h.xor(&x).0)) {
                return false;
            }
        }
        let mut h = x.clone();
        for i in 1..=self.w {
            h = self.square(&h);
            if i < self.w && self.w % i == 0 && is_prime(self.w / i) && !is_one(&poly_gcd(f.clone(), h.xor(&x).0)) {
                return false;
            }
        }
        h == x
    }
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn is_one(p: &[u64]) -> bool {
    degree(p) == Some(0)
}

fn degree(p: &[u64]) -> Option<usize> {
    p.iter().rposition(|&l| l != 0).map(|i| i * 64 + 63 - p[i].leading_zeros() as usize)
}

fn set_bit(p: &mut [u64], i: usize) {
    p[i / 64] |= 1 << (i % 64);
}

fn get_bits(p: &[u64], pos: usize, len: usize) -> u64 {
    let (w, o) = (pos / 64, pos % 64);
    let mut v = p.get(w).copied().unwrap_or(0) >> o;
    if o > 0 {
        v |= p.get(w + 1).copied().unwrap_or(0) << (64 - o);
    }
    if len < 64 {
        v &= (1u64 << len) - 1;
    }
    v
}

fn xor_bits(p: &mut [u64], pos: usize, v: u64, len: usize) {
    let (w, o) = (pos / 64, pos % 64);
    p[w] ^= v << o;
    if o > 0 && o + len > 64 {
        p[w + 1] ^= v >> (64 - o);
    }
}

/// `dst ^= src << shift`; `dst` must be long enough.
fn xor_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let (w, o) = (shift / 64, shift % 64);
    for (i, &s) in src.iter().enumerate() {
        if s == 0 {
            continue;
        }
        dst[i + w] ^= s << o;
        if o > 0 {
            dst[i + w + 1] ^= s >> (64 - o);
        }
    }
}

fn xor_shifted_grow(dst: &mut Vec<u64>, src: &[u64], shift: usize) {
    let need = src.len() + shift / 64 + 1;
    if dst.len() < need {
        dst.resize(need, 0);
    }
    xor_shifted(dst, src, shift);
}

fn spread(b: u32) -> u64 {
    let mut x = b as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    (x | (x << 1)) & 0x5555_5555_5555_5555
}

fn poly_square(a: &[u64]) -> Vec<u64> {
    a.iter().flat_map(|&l| [spread(l as u32), spread((l >> 32) as u32)]).collect()
}

fn poly_mod(mut a: Vec<u64>, b: &[u64]) -> Vec<u64> {
    let db = degree(b).expect("nonzero divisor");
    while let Some(da) = degree(&a) {
        if da < db {
            break;
        }
        xor_shifted_grow(&mut a, b, da - db);
    }
    a
}

fn poly_gcd(mut a: Vec<u64>, mut b: Vec<u64>) -> Vec<u64> {
    while degree(&b).is_some() {
        let r = poly_mod(a, &b);
        a = b;
        b = r;
    }
    a
}

fn poly_mod_u128(mut a: u128, b: u128) -> u128 {
    let db = 127 - b.leading_zeros();
    while a != 0 && 127 - a.leading_zeros() >= db {
        a ^= b << (127 - a.leading_zeros() - db);
    }
    a
}

fn poly_to_hex(p: &[u64]) -> String {
    let d = degree(p).unwrap_or(0);
    let digits = d / 4 + 1;
    (0..digits)
        .rev()
        .map(|i| {
            let v = get_bits(p, i * 4, 4);
            char::from_digit(v as u32, 16).unwrap()
        })
        .collect()
}

fn taps_from_hex(w: usize, hex: &str) -> Result<Vec<usize>> {
    let hex = hex.trim().trim_start_matches("0x");
    let mut p = vec![0u64; hex.len().div_ceil(16) + 1];
    for (i, c) in hex.chars().rev().enumerate() {
        let v = c.to_digit(16).ok_or_else(|| Error::Parse(format!("bad hex digit {c:?}")))?;
        xor_bits(&mut p, i * 4, v as u64, 4);
    }
    if degree(&p) != Some(w) {
        return Err(Error::Parse(format!("modulus {hex} does not have degree {w}")));
    }
    Ok((0..w).filter(|&i| get_bits(&p, i, 1) == 1).collect())
}

fn bundled_moduli() -> &'static HashMap<usize, String> {
    static TABLE: OnceLock<HashMap<usize, String>> = OnceLock::new();
    TABLE.get_or_init(|| parse_moduli(MODULI).expect("bundled moduli parse"))
}

/// Parses `w: hex` lines; `#` starts a comment.
pub fn parse_moduli(text: &str) -> Result<HashMap<usize, String>> {
    let mut out = HashMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (w, hex) = line.split_once(':').ok_or_else(|| Error::Parse(format!("bad modulus line {line:?}")))?;
        let w: usize = w.trim().parse().map_err(|_| Error::Parse(format!("bad width in {line:?}")))?;
        out.insert(w, hex.trim().to_string());
    }
    Ok(out)
}

/// Widths present in the bundled table, ascending.
pub fn bundled_widths() -> Vec<usize> {
    let mut w: Vec<usize> = bundled_moduli().keys().copied().collect();
    w.sort_unstable();
    w
}

/// Lexicographically first irreducible trinomial `x^w + x^a + 1`, else
/// pentanomial `x^w + x^a + x^b + x^c + 1`.
pub fn find_sparse_modulus(w: usize) -> Result<Vec<usize>> {
    if w == 1 {
        return Ok(vec![0]);
    }
    let ok = |taps: Vec<usize>| {
        let f = BinaryField::unchecked(w, taps.clone()).ok()?;
        let irreducible = if w <= 32 { f.trial_division_irreducible() } else { f.rabin_irreducible() };
        irreducible.then_some(taps)
    };
    for a in 1..w {
        if let Some(t) = ok(vec![0, a]) {
            return Ok(t);
        }
    }
    for a in 3..w {
        for b in 2..a {
            for c in 1..b {
                if let Some(t) = ok(vec![0, c, b, a]) {
                    return Ok(t);
                }
            }
        }
    }
    Err(Error::NoModulus(w))
}

pub fn gf_mul(field: &BinaryField, a: &Elem, b: &Elem) -> Elem {
    field.mul(a, b)
}

pub fn gf_inv(field: &BinaryField, a: &Elem) -> Result<Elem> {
    field.inv(a)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub field: BinaryField,
    /// Width of the random part `r`.
    pub k: usize,
}

impl ExtractorConfig {
    pub fn new(field: BinaryField, k: usize) -> Result<Self> {
        if k > field.width() {
            return Err(Error::InvalidParameter(format!("k = {k} exceeds field width {}", field.width())));
        }
        Ok(Self { field, k })
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    /// Width of the extracted part `b`.
    pub fn out_width(&self) -> usize {
        self.field.width() - self.k
    }
}

/// `b = (s⁻¹·x)` restricted to its low `w − k` bits.
pub fn ext(cfg: &ExtractorConfig, s: &Elem, x: &Elem) -> Result<Vec<u8>> {
    Ok(split(cfg, s, x)?.0)
}

/// `(b, r)` with `s⁻¹·x = b ‖ r`.
pub fn split(cfg: &ExtractorConfig, s: &Elem, x: &Elem) -> Result<(Vec<u8>, Vec<u8>)> {
    if s.is_zero() {
        return Err(Error::ZeroSeed);
    }
    let y = cfg.field.mul(&cfg.field.inv(s)?, x);
    let bits = cfg.field.to_bits(&y);
    let (b, r) = bits.split_at(cfg.out_width());
    Ok((b.to_vec(), r.to_vec()))
}

/// `x = s·(b ‖ r)`.
pub fn inv(cfg: &ExtractorConfig, s: &Elem, b: &[u8], r: &[u8]) -> Result<Elem> {
    if s.is_zero() {
        return Err(Error::ZeroSeed);
    }
    if b.len() != cfg.out_width() {
        return Err(Error::SizeMismatch { what: "extractor output b", expected: cfg.out_width(), got: b.len() });
    }
    if r.len() != cfg.k {
        return Err(Error::SizeMismatch { what: "extractor randomness r", expected: cfg.k, got: r.len() });
    }
    let mut bits = b.to_vec();
    bits.extend_from_slice(r);
    Ok(cfg.field.mul(s, &cfg.field.from_bits(&bits)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub pairs: usize,
    pub seeds_per_pair: usize,
    pub collisions: u64,
    pub rate: f64,
    /// `2^{−(w−k)}`
    pub bound: f64,
    pub sigma: f64,
    pub within_bound: bool,
}

/// Collision rate of `Ext(S, x)` vs `Ext(S, x')` over random distinct pairs.
/// Seeds are enumerated exhaustively for `w ≤ 16`, otherwise `seeds` are drawn.
pub fn two_universal_check<R: Rng + ?Sized>(
    cfg: &ExtractorConfig,
    pairs: usize,
    seeds: usize,
    rng: &mut R,
) -> Result<UniversalityReport> {
    let f = &cfg.field;
    let exhaustive = f.width() <= 16;
    let seed_list: Vec<Elem> = if exhaustive {
        (1..1u64 << f.width()).map(|v| f.from_u64(v)).collect()
    } else {
        (0..seeds).map(|_| f.random_nonzero(rng)).collect()
    };
    let inverses: Vec<Elem> = seed_list.iter().map(|s| f.inv(s)).collect::<Result<_>>()?;
    let out = cfg.out_width();
    let mut collisions = 0u64;
    for _ in 0..pairs {
        let x = f.random(rng);
        let x2 = loop {
            let c = f.random(rng);
            if c != x {
                break c;
            }
        };
        // s⁻¹x and s⁻¹x' agree on the low bits iff s⁻¹(x ⊕ x') does
        let d = x.xor(&x2);
        for si in &inverses {
            let y = f.mul(si, &d);
            if (0..out).all(|i| y.bit(i) == 0) {
                collisions += 1;
            }
        }
    }
    let n = (pairs * seed_list.len()) as f64;
    let bound = 2f64.powi(-(out as i32));
    let rate = collisions as f64 / n;
    let sigma = (bound * (1.0 - bound) / n).sqrt();
    Ok(UniversalityReport {
        pairs,
        seeds_per_pair: seed_list.len(),
        collisions,
        rate,
        bound,
        sigma,
        within_bound: rate <= bound + 3.0 * sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn aes() -> BinaryField {
        BinaryField::new(8, vec![0, 1, 3, 4]).unwrap()
    }

    #[test]
    fn aes_inverse_pair() {
        let f = aes();
        assert_eq!(f.modulus_hex(), "11b");
        let p = f.mul(&f.from_u64(0x53), &f.from_u64(0xCA));
        assert_eq!(p, f.one());
        assert_eq!(f.inv(&f.from_u64(0x53)).unwrap(), f.from_u64(0xCA));
    }

    #[test]
    fn identity_and_zero() {
        let f = BinaryField::for_width(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = f.random(&mut rng);
        assert_eq!(f.mul(&a, &f.one()), a);
        assert_eq!(f.inv(&f.zero()), Err(Error::ZeroInverse));
    }

    #[test]
    fn inverse_involution_w16() {
        let f = BinaryField::for_width(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = f.random_nonzero(&mut rng);
            let ai = f.inv(&a).unwrap();
            assert_eq!(f.mul(&a, &ai), f.one());
            assert_eq!(f.inv(&ai).unwrap(), a);
        }
    }

    #[test]
    fn field_axioms_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for w in [8usize, 16, 32, 64, 127, 256, 1000] {
            let f = BinaryField::for_width(w).unwrap();
            for _ in 0..50 {
                let (a, b, c) = (f.random(&mut rng), f.random(&mut rng), f.random(&mut rng));
                assert_eq!(f.mul(&f.mul(&a, &b), &c), f.mul(&a, &f.mul(&b, &c)), "w={w}");
                assert_eq!(f.mul(&a, &b), f.mul(&b, &a));
                assert_eq!(f.mul(&a, &f.add(&b, &c)), f.add(&f.mul(&a, &b), &f.mul(&a, &c)));
                assert_eq!(f.square(&a), f.mul(&a, &a));
                if !a.is_zero() {
                    assert_eq!(f.mul(&a, &f.inv(&a).unwrap()), f.one());
                }
            }
        }
    }

    #[test]
    fn reducible_modulus_rejected() {
        // x^8 + 1 = (x + 1)^8
        assert_eq!(BinaryField::new(8, vec![0]), Err(Error::Reducible(8)));
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert_eq!(BinaryField::new(4, vec![0, 2]), Err(Error::Reducible(4)));
        // x^64 + 1 is reducible; exercises the Rabin path
        assert_eq!(BinaryField::new(64, vec![0]), Err(Error::Reducible(64)));
        assert!(BinaryField::new(64, vec![0, 1, 3, 4]).is_ok());
    }

    #[test]
    fn search_matches_known_trinomials() {
        assert_eq!(find_sparse_modulus(6).unwrap(), vec![0, 1]);
        assert_eq!(find_sparse_modulus(7).unwrap(), vec![0, 1]);
        // no irreducible trinomial of degree 8
        assert_eq!(find_sparse_modulus(8).unwrap().len(), 4);
        assert_eq!(find_sparse_modulus(127).unwrap(), vec![0, 1]);
    }

    #[test]
    fn bundled_moduli_are_irreducible() {
        for w in bundled_widths().into_iter().filter(|&w| w <= 600) {
            let f = BinaryField::for_width(w).unwrap();
            assert!(BinaryField::new(w, f.taps().to_vec()).is_ok(), "w={w}");
        }
    }

    #[test]
    fn hex_round_trip() {
        let f = BinaryField::for_width(200).unwrap();
        let g = BinaryField::from_hex(200, &f.modulus_hex()).unwrap();
        assert_eq!(f, g);
        assert!(BinaryField::from_hex(8, "1b").is_err());
    }

    #[test]
    fn ext_inv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (w, k) in [(8usize, 3usize), (16, 5), (24, 12), (300, 100)] {
            let cfg = ExtractorConfig::new(BinaryField::for_width(w).unwrap(), k).unwrap();
            for _ in 0..200 {
                let s = cfg.field.random_nonzero(&mut rng);
                let b: Vec<u8> = (0..w - k).map(|_| rng.random_range(0..2)).collect();
                let r: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
                let x = inv(&cfg, &s, &b, &r).unwrap();
                assert_eq!(split(&cfg, &s, &x).unwrap(), (b, r));
            }
        }
    }

    #[test]
    fn ext_examples() {
        let cfg = ExtractorConfig::new(aes(), 3).unwrap();
        let s = cfg.field.from_u64(0x57);
        let x = inv(&cfg, &s, &[0; 5], &[1, 0, 1]).unwrap();
        assert_eq!(ext(&cfg, &s, &x).unwrap(), vec![0; 5]);
        let full = ExtractorConfig::new(aes(), 8).unwrap();
        assert!(ext(&full, &s, &x).unwrap().is_empty());
        assert_eq!(ext(&cfg, &cfg.field.zero(), &x), Err(Error::ZeroSeed));
        let one = cfg.field.one();
        let v = inv(&cfg, &one, &[1, 1, 0, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(cfg.field.to_bits(&v), vec![1, 1, 0, 0, 1, 0, 1, 1]);
        assert!(matches!(inv(&cfg, &one, &[1], &[0, 1, 1]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn regularity_exhaustive_w8() {
        let cfg = ExtractorConfig::new(aes(), 3).unwrap();
        for sv in 1..256u64 {
            let s = cfg.field.from_u64(sv);
            let mut bins = [0u32; 32];
            for xv in 0..256u64 {
                let b = ext(&cfg, &s, &cfg.field.from_u64(xv)).unwrap();
                bins[b.iter().enumerate().map(|(i, &v)| (v as usize) << i).sum::<usize>()] += 1;
            }
            assert!(bins.iter().all(|&c| c == 8), "s={sv}");
        }
    }

    #[test]
    fn zero_b_codebook_is_injective() {
        let cfg = ExtractorConfig::new(BinaryField::for_width(12).unwrap(), 6).unwrap();
        let s = cfg.field.from_u64(0x9a5);
        let book: HashSet<Elem> = (0..64u32)
            .map(|r| inv(&cfg, &s, &[0; 6], &(0..6).map(|i| ((r >> i) & 1) as u8).collect::<Vec<_>>()).unwrap())
            .collect();
        assert_eq!(book.len(), 64);
    }

    #[test]
    fn codebooks_for_different_b_are_translates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ExtractorConfig::new(BinaryField::for_width(40).unwrap(), 15).unwrap();
        let s = cfg.field.random_nonzero(&mut rng);
        let b: Vec<u8> = (0..25).map(|_| rng.random_range(0..2)).collect();
        let b2: Vec<u8> = (0..25).map(|_| rng.random_range(0..2)).collect();
        let db: Vec<u8> = b.iter().zip(&b2).map(|(x, y)| x ^ y).collect();
        let shift = inv(&cfg, &s, &db, &[0; 15]).unwrap();
        for _ in 0..100 {
            let r: Vec<u8> = (0..15).map(|_| rng.random_range(0..2)).collect();
            let x = inv(&cfg, &s, &b, &r).unwrap();
            let x2 = inv(&cfg, &s, &b2, &r).unwrap();
            assert_eq!(x2, x.xor(&shift));
        }
    }

    #[test]
    fn two_universal_w8() {
        let cfg = ExtractorConfig::new(aes(), 3).unwrap();
        let rep = two_universal_check(&cfg, 200, 0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(rep.seeds_per_pair, 255);
        // exact rate is (2^k − 1)/(2^w − 1) for every pair
        assert!((rep.rate - 7.0 / 255.0).abs() < 1e-12);
        assert!(rep.rate <= 2f64.powi(-5));
        assert!(rep.within_bound);
        let full = ExtractorConfig::new(aes(), 8).unwrap();
        let rep = two_universal_check(&full, 10, 0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(rep.rate, 1.0);
    }
}
