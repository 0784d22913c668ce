//! Scalar quantization index modulation over a ternary alphabet.
//!
//! A symbol `p` selects the lattice coset `Δ·(k + (p+1)/3)`. Embedding moves a
//! sample to the nearest point of that coset; extraction reads back which of
//! the three cosets a sample is closest to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QimParams {
    pub delta: f64,
}

impl QimParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("quantization step must be > 0, got {delta}")));
        }
        Ok(QimParams { delta })
    }
}

impl Default for QimParams {
    fn default() -> Self {
        QimParams {
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Neg = -1,
    Zero = 0,
    Pos = 1,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::Neg, Symbol::Zero, Symbol::Pos];

    #[inline]
    pub fn value(self) -> i8 {
        self as i8
    }

    #[inline]
    pub(crate) fn from_residue(r: i64) -> Symbol {
        match r {
            0 => Symbol::Neg,
            1 => Symbol::Zero,
            _ => Symbol::Pos,
        }
    }
}

impl TryFrom<i32> for Symbol {
    type Error = Error;

    fn try_from(v: i32) -> Result<Symbol> {
        match v {
            -1 => Ok(Symbol::Neg),
            0 => Ok(Symbol::Zero),
            1 => Ok(Symbol::Pos),
            _ => Err(Error::Domain(format!("symbol {v} is not in {{-1, 0, +1}}"))),
        }
    }
}

/// Quantizes `u` onto the coset selected by `p`.
///
/// No clamping happens here; callers writing into 8-bit planes clamp afterwards.
#[inline]
pub fn embed_symbol(u: f64, p: Symbol, params: QimParams) -> f64 {
    let offset = (p.value() as f64 + 1.0) / 3.0;
    params.delta * ((u / params.delta - offset + 0.5).floor() + offset)
}

#[inline]
pub fn extract_symbol(u: f64, params: QimParams) -> Symbol {
    let bin = (3.0 * u / params.delta + 0.5).floor() as i64;
    Symbol::from_residue(bin.rem_euclid(3))
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: QimParams = QimParams { delta: 9.0 };

    #[test]
    fn embed_examples() {
        assert!((embed_symbol(100.0, Symbol::Zero, P) - 102.0).abs() < 1e-9);
        assert!((embed_symbol(100.0, Symbol::Neg, P) - 99.0).abs() < 1e-9);
        assert!((embed_symbol(100.0, Symbol::Pos, P) - 96.0).abs() < 1e-9);
    }

    #[test]
    fn extract_examples() {
        assert_eq!(extract_symbol(102.0, P), Symbol::Zero);
        assert_eq!(extract_symbol(99.0, P), Symbol::Neg);
        assert_eq!(extract_symbol(96.0, P), Symbol::Pos);
        // gray 128 decodes to the zero symbol
        assert_eq!(extract_symbol(128.0, P), Symbol::Zero);
    }

    #[test]
    fn negative_samples_decode_with_euclidean_residue() {
        for p in Symbol::ALL {
            let u = embed_symbol(-20.0, p, P);
            assert!(u < 0.0);
            assert_eq!(extract_symbol(u, P), p);
        }
    }

    #[test]
    fn saturated_sample_can_leave_range() {
        assert!((embed_symbol(255.0, Symbol::Pos, P) - 258.0).abs() < 1e-9);
    }

    #[test]
    fn symbol_domain() {
        assert!(Symbol::try_from(2).is_err());
        assert!(Symbol::try_from(-2).is_err());
        assert_eq!(Symbol::try_from(-1).unwrap(), Symbol::Neg);
        assert!(QimParams::new(0.0).is_err());
        assert!(QimParams::new(f64::NAN).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn symbol() -> impl Strategy<Value = Symbol> {
            prop::sample::select(Symbol::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn round_trip(u in 9.0f64..246.0, p in symbol()) {
                prop_assert_eq!(extract_symbol(embed_symbol(u, p, P), P), p);
            }

            #[test]
            fn distortion_bounded(u in -50.0f64..300.0, p in symbol(), delta in 1.0f64..20.0) {
                let q = QimParams { delta };
                prop_assert!((embed_symbol(u, p, q) - u).abs() <= delta);
            }

            #[test]
            fn idempotent(u in 0.0f64..255.0, p in symbol()) {
                let once = embed_symbol(u, p, P);
                prop_assert!((embed_symbol(once, p, P) - once).abs() < 1e-9);
            }
        }
    }
}
