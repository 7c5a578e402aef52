//! Regenerates `assets/moduli.txt`: `cargo run --release -p mlcppm --example gen_moduli > crates/core/assets/moduli.txt`

use mlcppm::extractor::{find_sparse_modulus, BinaryField};
use rayon::prelude::*;

fn main() {
    let mut widths: Vec<usize> = (2..=64).collect();
    for c in 1..=16usize {
        let mut w = c;
        while w <= 8192 {
            widths.push(w);
            w *= 2;
        }
    }
    widths.sort_unstable();
    widths.dedup();
    widths.retain(|&w| w >= 2);
    let found: Vec<(usize, String)> = widths
        .par_iter()
        .map(|&w| {
            let taps = find_sparse_modulus(w).expect("modulus exists");
            let f = BinaryField::new(w, taps).expect("irreducible");
            (w, f.modulus_hex())
        })
        .collect();
    println!("# Irreducible moduli over GF(2), one per width, \"w: hex\" with the x^w term included.");
    println!("# Lexicographically first trinomial x^w + x^a + 1, else first pentanomial,");
    println!("# found by Rabin's irreducibility test (exhaustive trial division for w <= 32).");
    println!("# Regenerate with: cargo run --release -p mlcppm --example gen_moduli");
    for (w, hex) in found {
        println!("{w}: {hex}");
    }
}
