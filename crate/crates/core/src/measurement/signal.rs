use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum distance to the worker's other proposals below which the custom
/// criteria are treated as copy-pasted.
pub const COPY_PASTE_THRESHOLD: f64 = 0.04;

/// Ternary grades: five job-specific criteria and four generic ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaVector {
    pub custom: [u8; 5],
    pub generic: [u8; 4],
}

impl CriteriaVector {
    pub fn new(custom: [u8; 5], generic: [u8; 4]) -> Result<Self> {
        if custom.iter().chain(generic.iter()).any(|&v| v > 2) {
            return Err(Error::input(format!(
                "criteria must be in {{0,1,2}}: {custom:?} {generic:?}"
            )));
        }
        Ok(Self { custom, generic })
    }
}

/// Weighted score on [0, 18]; custom criteria count double and are zeroed
/// for copy-pasted proposals.
pub fn aggregate_signal(criteria: &CriteriaVector, d_edit: f64) -> f64 {
    let custom: u32 = criteria.custom.iter().map(|&v| u32::from(v)).sum();
    let generic: u32 = criteria.generic.iter().map(|&v| u32::from(v)).sum();
    let keep = if d_edit >= COPY_PASTE_THRESHOLD { 1 } else { 0 };
    18.0 / 28.0 * f64::from(2 * custom * keep + generic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let twos = CriteriaVector::new([2; 5], [2; 4]).unwrap();
        assert_eq!(aggregate_signal(&twos, 1.0), 18.0);
        assert!((aggregate_signal(&twos, 0.02) - 18.0 / 28.0 * 8.0).abs() < 1e-15);
        assert_eq!(aggregate_signal(&CriteriaVector::new([0; 5], [0; 4]).unwrap(), 1.0), 0.0);
        assert_eq!(aggregate_signal(&twos, 0.04), 18.0);
        assert!(CriteriaVector::new([3, 0, 0, 0, 0], [0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_every_entry(c in prop::array::uniform5(0u8..3), g in prop::array::uniform4(0u8..3), idx in 0usize..9, d in 0.0f64..1.0) {
            let base = CriteriaVector::new(c, g).unwrap();
            let s0 = aggregate_signal(&base, d);
            let mut up = base;
            if idx < 5 { up.custom[idx] = (up.custom[idx] + 1).min(2) } else { up.generic[idx - 5] = (up.generic[idx - 5] + 1).min(2) }
            prop_assert!(aggregate_signal(&up, d) >= s0);
            prop_assert!(aggregate_signal(&base, 1.0) >= aggregate_signal(&base, 0.0));
            prop_assert!((0.0..=18.0).contains(&s0));
        }
    }
}
