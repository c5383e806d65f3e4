//! Constant-composition distribution matching (CCDM).
//!
//! Uniform bits are mapped to fixed-composition symbol sequences through
//! exact multiset rank/unrank with big-integer arithmetic, so every block
//! matches its composition with zero deviation and encode/decode round-trip
//! exactly.

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::Constellation;

#[derive(Debug, Error, PartialEq)]
pub enum ShapingError {
    #[error("invalid block length 0")]
    InvalidLength,
    #[error("probabilities sum to {0}, expected 1")]
    InvalidDistribution(f64),
    #[error("bit length {got} does not match composition capacity {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("composition carries no information but {0} bits were supplied")]
    Capacity(usize),
    #[error("sequence does not match the composition")]
    InvalidSequence,
    #[error("sequence rank lies outside the image of encode")]
    OutOfRangeRank,
    #[error("bit source exhausted")]
    BitsExhausted,
}

/// Fixed per-level symbol counts for one CCDM block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    counts: Vec<u64>,
}

impl Composition {
    pub fn new(counts: Vec<u64>) -> Self {
        Composition { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct sequences: multinomial(n; counts).
    pub fn multinomial(&self) -> BigUint {
        let mut result = BigUint::from(1u32);
        let mut rem = self.len();
        for &c in &self.counts {
            result *= binomial(rem, c);
            rem -= c;
        }
        result
    }

    /// Bits carried per block: floor(log2 multinomial).
    pub fn bit_capacity(&self) -> usize {
        let m = self.multinomial();
        (m.bits() - 1) as usize
    }
}

fn binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k.min(n));
    let mut r = BigUint::from(1u32);
    for i in 0..k {
        r *= BigUint::from(n - i);
        r /= BigUint::from(i + 1);
    }
    r
}

/// Largest-remainder rounding of n·p_a to integer counts, ties broken
/// toward lower levels.
pub fn composition_for(distribution: &[f64], n: u64) -> Result<Composition, ShapingError> {
    if n == 0 {
        return Err(ShapingError::InvalidLength);
    }
    let total: f64 = distribution.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ShapingError::InvalidDistribution(total));
    }
    let ideal: Vec<f64> = distribution.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..distribution.len()).collect();
    // sort by remainder descending; stable sort keeps lower levels first on ties
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for &i in order.iter().take((n - assigned) as usize) {
        counts[i] += 1;
    }
    Ok(Composition { counts })
}

/// Map `bits` (exactly `comp.bit_capacity()` of them, MSB first) to the
/// sequence of level indices with that rank in lexicographic order.
pub fn ccdm_encode(bits: &[bool], comp: &Composition) -> Result<Vec<usize>, ShapingError> {
    let k = comp.bit_capacity();
    if k == 0 && !bits.is_empty() {
        return Err(ShapingError::Capacity(bits.len()));
    }
    if bits.len() != k {
        return Err(ShapingError::LengthMismatch {
            got: bits.len(),
            want: k,
        });
    }
    let mut rank = BigUint::from(0u32);
    for &b in bits {
        rank <<= 1;
        if b {
            rank += 1u32;
        }
    }
    let mut counts = comp.counts.clone();
    let mut remaining = comp.len();
    let mut n_seq = comp.multinomial();
    let mut out = Vec::with_capacity(remaining as usize);
    while remaining > 0 {
        for a in 0..counts.len() {
            if counts[a] == 0 {
                continue;
            }
            // sequences starting with level a under the current prefix
            let count_a = &n_seq * counts[a] / remaining;
            if rank < count_a {
                out.push(a);
                n_seq = count_a;
                counts[a] -= 1;
                remaining -= 1;
                break;
            }
            rank -= count_a;
        }
    }
    Ok(out)
}

/// Inverse of [`ccdm_encode`]: recover the bit string from a sequence with
/// composition exactly `comp`.
pub fn ccdm_decode(symbols: &[usize], comp: &Composition) -> Result<Vec<bool>, ShapingError> {
    let mut check = vec![0u64; comp.counts.len()];
    for &s in symbols {
        if s >= check.len() {
            return Err(ShapingError::InvalidSequence);
        }
        check[s] += 1;
    }
    if check != comp.counts {
        return Err(ShapingError::InvalidSequence);
    }
    let k = comp.bit_capacity();
    let mut counts = comp.counts.clone();
    let mut remaining = comp.len();
    let mut n_seq = comp.multinomial();
    let mut rank = BigUint::from(0u32);
    for &s in symbols {
        for a in 0..s {
            if counts[a] > 0 {
                rank += &n_seq * counts[a] / remaining;
            }
        }
        n_seq = &n_seq * counts[s] / remaining;
        counts[s] -= 1;
        remaining -= 1;
    }
    if rank.bits() as usize > k {
        return Err(ShapingError::OutOfRangeRank);
    }
    let mut bits = vec![false; k];
    for (i, bit) in bits.iter_mut().rev().enumerate() {
        *bit = rank.bit(i as u64);
    }
    Ok(bits)
}

/// Bit source over a seeded RNG.
pub fn rng_bits<R: Rng>(rng: R) -> impl Iterator<Item = bool> {
    let mut rng = rng;
    std::iter::from_fn(move || Some(rng.random::<bool>()))
}

fn take_bits(
    bits: &mut impl Iterator<Item = bool>,
    k: usize,
) -> Result<Vec<bool>, ShapingError> {
    let v: Vec<bool> = bits.take(k).collect();
    if v.len() != k {
        return Err(ShapingError::BitsExhausted);
    }
    Ok(v)
}

/// One shaped block: x and p amplitudes each come from an independent 1D
/// CCDM over the factorized per-quadrature distribution; signs are raw
/// uniform bits. Returned points carry the constellation gain.
pub fn shape_block(
    c: &Constellation,
    n: usize,
    bits: &mut impl Iterator<Item = bool>,
) -> Result<Vec<Complex64>, ShapingError> {
    if n == 0 {
        return Err(ShapingError::InvalidLength);
    }
    let (levels, p1) = c.amplitude_distribution();
    let comp = composition_for(&p1, n as u64)?;
    let k = comp.bit_capacity();
    let amp_x = ccdm_encode(&take_bits(bits, k)?, &comp)?;
    let amp_p = ccdm_encode(&take_bits(bits, k)?, &comp)?;
    let sign_x = take_bits(bits, n)?;
    let sign_p = take_bits(bits, n)?;
    let g = c.gain();
    Ok((0..n)
        .map(|i| {
            let x = levels[amp_x[i]] as f64 * if sign_x[i] { 1.0 } else { -1.0 };
            let p = levels[amp_p[i]] as f64 * if sign_p[i] { 1.0 } else { -1.0 };
            Complex64::new(g * x, g * p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_mb_constellation;
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn composition_exact_splits() {
        assert_eq!(
            composition_for(&[0.5, 0.5], 4).unwrap().counts(),
            &[2, 2]
        );
        assert_eq!(
            composition_for(&[0.7, 0.3], 10).unwrap().counts(),
            &[7, 3]
        );
        assert_eq!(
            composition_for(&[0.5, 0.5], 0).unwrap_err(),
            ShapingError::InvalidLength
        );
    }

    #[test]
    fn composition_matches_largest_remainder_oracle() {
        // oracle: recompute the rounding rule from Eq.-style factorization
        let c = build_mb_constellation(64, 0.07).unwrap();
        let (_, p1) = c.amplitude_distribution();
        let n = 1000u64;
        let comp = composition_for(&p1, n).unwrap();

        let ideal: Vec<f64> = p1.iter().map(|p| p * n as f64).collect();
        let mut expect: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
        let missing = n - expect.iter().sum::<u64>();
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&a, &b| {
            (ideal[b] - ideal[b].floor())
                .partial_cmp(&(ideal[a] - ideal[a].floor()))
                .unwrap()
        });
        for &i in idx.iter().take(missing as usize) {
            expect[i] += 1;
        }
        assert_eq!(comp.counts(), expect.as_slice());
        assert_eq!(comp.len(), n);
    }

    #[test]
    fn single_sequence_composition() {
        let comp = Composition::new(vec![4, 0]);
        assert_eq!(comp.bit_capacity(), 0);
        assert_eq!(ccdm_encode(&[], &comp).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(ccdm_decode(&[0, 0, 0, 0], &comp).unwrap(), Vec::<bool>::new());
        assert_eq!(
            ccdm_encode(&[true], &comp).unwrap_err(),
            ShapingError::Capacity(1)
        );
    }

    #[test]
    fn two_two_composition_enumeration_oracle() {
        // all 6 arrangements of aabb in lexicographic order
        let all = [
            [0, 0, 1, 1],
            [0, 1, 0, 1],
            [0, 1, 1, 0],
            [1, 0, 0, 1],
            [1, 0, 1, 0],
            [1, 1, 0, 0],
        ];
        let comp = Composition::new(vec![2, 2]);
        assert_eq!(comp.multinomial(), BigUint::from(6u32));
        assert_eq!(comp.bit_capacity(), 2);
        // encode(00) is the lexicographically smallest sequence
        assert_eq!(ccdm_encode(&[false, false], &comp).unwrap(), all[0]);
        for (rank, seq) in all.iter().enumerate().take(4) {
            let bits = [rank & 2 != 0, rank & 1 != 0];
            assert_eq!(&ccdm_encode(&bits, &comp).unwrap(), seq);
            assert_eq!(ccdm_decode(seq, &comp).unwrap(), bits);
        }
        // ranks 4 and 5 are outside the 2^k image
        assert_eq!(
            ccdm_decode(&all[4], &comp).unwrap_err(),
            ShapingError::OutOfRangeRank
        );
    }

    #[test]
    fn one_one_composition() {
        let comp = Composition::new(vec![1, 1]);
        assert_eq!(comp.bit_capacity(), 1);
        let a = ccdm_encode(&[false], &comp).unwrap();
        let b = ccdm_encode(&[true], &comp).unwrap();
        assert_eq!(a, vec![0, 1]);
        assert_eq!(b, vec![1, 0]);
    }

    #[test]
    fn decode_rejects_wrong_composition() {
        let comp = Composition::new(vec![2, 2]);
        assert_eq!(
            ccdm_decode(&[0, 0, 0, 1], &comp).unwrap_err(),
            ShapingError::InvalidSequence
        );
    }

    #[test]
    fn dg64_block_round_trips() {
        let c = build_mb_constellation(64, 0.07).unwrap();
        let (_, p1) = c.amplitude_distribution();
        let comp = composition_for(&p1, 64).unwrap();
        let k = comp.bit_capacity();
        let mut bits = rng_bits(seed::rng(7, "ccdm-test", 0));
        let payload: Vec<bool> = (&mut bits).take(k).collect();
        let sym = ccdm_encode(&payload, &comp).unwrap();
        assert_eq!(ccdm_decode(&sym, &comp).unwrap(), payload);
    }

    #[test]
    fn shape_block_uniform_bit_accounting() {
        // ν = 0: multinomial(4; 1,1,1,1) = 24, k = floor(log2 24) = 4
        let c = build_mb_constellation(64, 0.0).unwrap();
        let (_, p1) = c.amplitude_distribution();
        let comp = composition_for(&p1, 4).unwrap();
        assert_eq!(comp.counts(), &[1, 1, 1, 1]);
        assert_eq!(comp.bit_capacity(), 4);

        let mut count = 0usize;
        let mut bits = rng_bits(seed::rng(7, "ccdm-test", 1)).inspect(|_| count += 1);
        let block = shape_block(&c, 4, &mut bits).unwrap();
        assert_eq!(block.len(), 4);
        // 4 amplitude bits per quadrature plus 4 sign bits per quadrature
        assert_eq!(count, 4 + 4 + 4 + 4);
    }

    #[test]
    fn shaped_block_composition_is_exact() {
        let c = build_mb_constellation(64, 0.07)
            .unwrap()
            .scale_to_variance(7.6)
            .unwrap();
        let n = 100_000;
        let mut bits = rng_bits(seed::rng(11, "ccdm-test", 2));
        let block = shape_block(&c, n, &mut bits).unwrap();

        let (levels, p1) = c.amplitude_distribution();
        let comp = composition_for(&p1, n as u64).unwrap();
        let mut hist_x = vec![0u64; levels.len()];
        let mut hist_p = vec![0u64; levels.len()];
        for s in &block {
            let lx = (s.re.abs() / c.gain()).round() as u64;
            let lp = (s.im.abs() / c.gain()).round() as u64;
            hist_x[levels.iter().position(|&l| l == lx).unwrap()] += 1;
            hist_p[levels.iter().position(|&l| l == lp).unwrap()] += 1;
        }
        assert_eq!(hist_x, comp.counts());
        assert_eq!(hist_p, comp.counts());

        // sign symmetry keeps the mean near zero: |mean| < 5σ/√n
        let mean_re = block.iter().map(|s| s.re).sum::<f64>() / n as f64;
        let mean_im = block.iter().map(|s| s.im).sum::<f64>() / n as f64;
        let sigma = (c.modulation_variance() / 2.0).sqrt();
        let bound = 5.0 * sigma / (n as f64).sqrt();
        assert!(mean_re.abs() < bound && mean_im.abs() < bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_random_compositions(counts in prop::collection::vec(0u64..6, 2..5),
                                          seed_idx in 0u64..64) {
            let n: u64 = counts.iter().sum();
            prop_assume!(n >= 1 && n <= 16);
            let comp = Composition::new(counts);
            let k = comp.bit_capacity();
            prop_assume!(k <= 16);
            let bits: Vec<bool> = rng_bits(seed::rng(seed_idx, "prop", 0)).take(k).collect();
            let sym = ccdm_encode(&bits, &comp).unwrap();
            prop_assert_eq!(sym.len() as u64, comp.len());
            prop_assert_eq!(ccdm_decode(&sym, &comp).unwrap(), bits);

            // floor loses less than one bit of log2(multinomial)
            let m = comp.multinomial();
            prop_assert!(m.bits() as usize - 1 == k);
        }
    }
}
