//! Uniform i.i.d. symbol generation.

use num_complex::Complex64;
use rand::Rng;

use super::constellation::ModulationScheme;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SymbolStream {
    /// Integers in `0..M`.
    pub indices: Vec<u32>,
    /// Mapped constellation points.
    pub symbols: Vec<Complex64>,
}

impl SymbolStream {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Draw `count` uniform symbols from the scheme with a seeded generator.
pub fn generate_symbols(scheme: &ModulationScheme, count: usize, seed: u64) -> Result<SymbolStream> {
    if count == 0 {
        return Err(Error::EmptyStream);
    }
    let mut rng = crate::seed::rng(seed);
    let m = scheme.order;
    let mut indices = Vec::with_capacity(count);
    let mut symbols = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = rng.random_range(0..m);
        indices.push(idx as u32);
        symbols.push(scheme.points[idx]);
    }
    Ok(SymbolStream { indices, symbols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::constellation::{make_constellation, SchemeKind};

    #[test]
    fn indices_map_directly_to_points() {
        let scheme = make_constellation(SchemeKind::Bpsk);
        let s = generate_symbols(&scheme, 64, 42).unwrap();
        for (&i, &d) in s.indices.iter().zip(&s.symbols) {
            assert_eq!(d, scheme.points[i as usize]);
        }
    }

    #[test]
    fn zero_count_is_an_error() {
        let scheme = make_constellation(SchemeKind::Qpsk);
        assert!(matches!(
            generate_symbols(&scheme, 0, 1),
            Err(Error::EmptyStream)
        ));
    }

    #[test]
    fn same_seed_reproduces_stream() {
        let scheme = make_constellation(SchemeKind::Qam16);
        let a = generate_symbols(&scheme, 1000, 7).unwrap();
        let b = generate_symbols(&scheme, 1000, 7).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    // Chi-square goodness of fit over M=16 at significance 0.001
    // (critical value for 15 degrees of freedom: 37.697).
    #[test]
    fn uniformity_chi_square() {
        let scheme = make_constellation(SchemeKind::Qam16);
        let n = 100_000usize;
        let s = generate_symbols(&scheme, n, 314).unwrap();
        let mut counts = [0usize; 16];
        for &i in &s.indices {
            counts[i as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 37.697, "chi2 = {chi2}");
    }
}
