use serde::{Deserialize, Serialize};

const MIN_MS: i64 = 4_000;
const MAX_MS: i64 = 12 * 60_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffortRejection {
    Negative,
    Missing,
    TooLong,
    TooShort,
}

/// Minutes between first view and submission, if inside the validity window
/// of four seconds to twelve minutes (both inclusive).
pub fn validate_effort(first_view_ms: Option<i64>, submitted_ms: i64) -> Result<f64, EffortRejection> {
    let Some(start) = first_view_ms else {
        return Err(EffortRejection::Missing);
    };
    let dt = submitted_ms - start;
    if dt < 0 {
        Err(EffortRejection::Negative)
    } else if dt < MIN_MS {
        Err(EffortRejection::TooShort)
    } else if dt > MAX_MS {
        Err(EffortRejection::TooLong)
    } else {
        Ok(dt as f64 / 60_000.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(validate_effort(Some(0), 300_000), Ok(5.0));
        assert_eq!(validate_effort(Some(10_000), 0), Err(EffortRejection::Negative));
        assert_eq!(validate_effort(Some(0), 13 * 60_000), Err(EffortRejection::TooLong));
        assert_eq!(validate_effort(Some(0), 3_999), Err(EffortRejection::TooShort));
        assert_eq!(validate_effort(None, 5), Err(EffortRejection::Missing));
        assert_eq!(validate_effort(Some(0), 4_000), Ok(4.0 / 60.0));
        assert_eq!(validate_effort(Some(0), 720_000), Ok(12.0));
    }
}
