//! Gray-coded constellations for the four supported schemes, normalized to
//! unit average power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "UPPERCASE")]
pub enum SchemeKind {
    Bpsk,
    Qpsk,
    Apsk8,
    Qam16,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Bpsk,
        SchemeKind::Qpsk,
        SchemeKind::Apsk8,
        SchemeKind::Qam16,
    ];

    pub fn order(self) -> usize {
        match self {
            SchemeKind::Bpsk => 2,
            SchemeKind::Qpsk => 4,
            SchemeKind::Apsk8 => 8,
            SchemeKind::Qam16 => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Bpsk => "BPSK",
            SchemeKind::Qpsk => "QPSK",
            SchemeKind::Apsk8 => "8APSK",
            SchemeKind::Qam16 => "16QAM",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModulationScheme {
    pub kind: SchemeKind,
    pub order: usize,
    pub points: Vec<Complex64>,
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

fn gray_decode(g: usize) -> usize {
    let mut n = g;
    let mut mask = n >> 1;
    while mask != 0 {
        n ^= mask;
        mask >>= 1;
    }
    n
}

/// Build the Gray-coded, unit-average-power constellation for a scheme.
pub fn make_constellation(kind: SchemeKind) -> ModulationScheme {
    let order = kind.order();
    let mut points = vec![Complex64::new(0.0, 0.0); order];
    match kind {
        SchemeKind::Bpsk => {
            points[0] = Complex64::new(1.0, 0.0);
            points[1] = Complex64::new(-1.0, 0.0);
        }
        SchemeKind::Qpsk => {
            let a = 1.0 / 2f64.sqrt();
            for (m, p) in points.iter_mut().enumerate() {
                let g = gray(m);
                let re = if g & 1 == 0 { a } else { -a };
                let im = if g & 2 == 0 { a } else { -a };
                *p = Complex64::new(re, im);
            }
        }
        SchemeKind::Apsk8 => {
            // Two rings of four: inner on the axes, outer (radius ratio 2)
            // rotated 45 degrees; Gray bit 2 selects the ring.
            let r1 = (0.4f64).sqrt();
            let r2 = 2.0 * r1;
            for (m, p) in points.iter_mut().enumerate() {
                let g = gray(m);
                let ring_outer = g & 4 != 0;
                let pos = gray_decode(g & 3);
                let angle = std::f64::consts::FRAC_PI_2 * pos as f64
                    + if ring_outer { std::f64::consts::FRAC_PI_4 } else { 0.0 };
                let r = if ring_outer { r2 } else { r1 };
                *p = Complex64::from_polar(r, angle);
            }
        }
        SchemeKind::Qam16 => {
            // Per-axis Gray levels {-3,-1,+1,+3}/sqrt(10).
            let s = 1.0 / 10f64.sqrt();
            let level = |code: usize| (-3.0 + 2.0 * gray_decode(code) as f64) * s;
            for (m, p) in points.iter_mut().enumerate() {
                *p = Complex64::new(level((m >> 2) & 3), level(m & 3));
            }
        }
    }
    let scheme = ModulationScheme { kind, order, points };
    debug_assert!(scheme.validate().is_ok());
    scheme
}

impl ModulationScheme {
    pub fn avg_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.order {
            return Err(Error::config(format!(
                "{}: {} points for order {}",
                self.kind.name(),
                self.points.len(),
                self.order
            )));
        }
        if (self.avg_power() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "{}: average power {} not 1",
                self.kind.name(),
                self.avg_power()
            )));
        }
        for (i, a) in self.points.iter().enumerate() {
            for b in self.points.iter().skip(i + 1) {
                if (a - b).norm() < 1e-9 {
                    return Err(Error::config(format!(
                        "{}: duplicate constellation points",
                        self.kind.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_is_antipodal() {
        let c = make_constellation(SchemeKind::Bpsk);
        assert_eq!(c.points[0], Complex64::new(1.0, 0.0));
        assert_eq!(c.points[1], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn qpsk_m0_is_first_quadrant() {
        let c = make_constellation(SchemeKind::Qpsk);
        let want = Complex64::new(1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        assert!((c.points[0] - want).norm() < 1e-12);
    }

    #[test]
    fn all_schemes_unit_power_and_distinct() {
        for kind in SchemeKind::ALL {
            let c = make_constellation(kind);
            c.validate().unwrap();
            assert!((c.avg_power() - 1.0).abs() <= 1e-9, "{}", kind.name());
        }
    }

    #[test]
    fn apsk8_ring_ratio_is_two() {
        let c = make_constellation(SchemeKind::Apsk8);
        let mut radii: Vec<f64> = c.points.iter().map(|p| p.norm()).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((radii[7] / radii[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn qam16_gray_neighbors_differ_in_one_bit() {
        let c = make_constellation(SchemeKind::Qam16);
        let s = 1.0 / 10f64.sqrt();
        // Horizontally adjacent points must differ in exactly one bit.
        for m1 in 0..16usize {
            for m2 in 0..16usize {
                let d = c.points[m1] - c.points[m2];
                if (d.re.abs() - 2.0 * s).abs() < 1e-9 && d.im.abs() < 1e-9 {
                    assert_eq!((m1 ^ m2).count_ones(), 1, "m1={m1} m2={m2}");
                }
            }
        }
    }
}
