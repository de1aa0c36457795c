use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const SUPPORTED_ORDERS: [usize; 5] = [4, 16, 64, 256, 1024];

/// Square Gray-coded QAM with unit average energy.
///
/// Bits are grouped MSB first; the first half of each group selects the
/// in-phase level and the second half the quadrature level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QamConstellation {
    order: usize,
    bits_per_axis: usize,
    levels: usize,
    scale: f64,
    points: Vec<Complex64>,
}

fn gray_encode(b: usize) -> usize {
    b ^ (b >> 1)
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        if !SUPPORTED_ORDERS.contains(&order) {
            return Err(Error::param("qam.order", format!("{order} not in {SUPPORTED_ORDERS:?}")));
        }
        let bits_per_axis = order.trailing_zeros() as usize / 2;
        let levels = 1usize << bits_per_axis;
        let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mut c = Self {
            order,
            bits_per_axis,
            levels,
            scale,
            points: Vec::with_capacity(order),
        };
        c.points = (0..order).map(|word| c.point_of_word(word)).collect();
        Ok(c)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Points indexed by their bit word.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    fn level(&self, gray: usize) -> f64 {
        (2 * gray_decode(gray)) as f64 - (self.levels - 1) as f64
    }

    fn point_of_word(&self, word: usize) -> Complex64 {
        let mask = self.levels - 1;
        let gi = (word >> self.bits_per_axis) & mask;
        let gq = word & mask;
        Complex64::new(self.level(gi), self.level(gq)) * self.scale
    }

    fn slice_axis(&self, x: f64) -> usize {
        let idx = ((x / self.scale + (self.levels - 1) as f64) / 2.0).round();
        let idx = idx.clamp(0.0, (self.levels - 1) as f64) as usize;
        gray_encode(idx)
    }

    /// Nearest-point word for a received symbol.
    pub fn decide(&self, s: Complex64) -> usize {
        (self.slice_axis(s.re) << self.bits_per_axis) | self.slice_axis(s.im)
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(Error::param(
                "bits",
                format!("length {} is not a multiple of {k}", bits.len()),
            ));
        }
        Ok(bits
            .chunks_exact(k)
            .map(|chunk| {
                let word = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.points[word]
            })
            .collect())
    }

    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(symbols.len() * k);
        for &s in symbols {
            let word = self.decide(s);
            bits.extend((0..k).rev().map(|i| ((word >> i) & 1) as u8));
        }
        bits
    }

    /// Hard-decision symbols (the constellation points nearest to `symbols`).
    pub fn hard_decision(&self, symbols: &[Complex64]) -> Vec<Complex64> {
        symbols.iter().map(|&s| self.points[self.decide(s)]).collect()
    }
}

pub fn random_bits(count: usize, rng: &mut impl Rng) -> Vec<u8> {
    (0..count).map(|_| rng.random::<bool>() as u8).collect()
}

/// `qam_map` for a given order.
pub fn qam_map(bits: &[u8], order: usize) -> Result<Vec<Complex64>> {
    QamConstellation::new(order)?.map(bits)
}

pub fn qam_demap(symbols: &[Complex64], order: usize) -> Result<Vec<u8>> {
    Ok(QamConstellation::new(order)?.demap(symbols))
}
