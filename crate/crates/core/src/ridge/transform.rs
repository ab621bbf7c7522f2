use crate::error::{Error, Result};

/// Transform applied to labels before fitting; predictions are mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelTransform {
    #[default]
    Identity,
    /// `ln(1 + y)`, for nonnegative labels with zeros.
    Log1p,
    /// `ln(y)`, for strictly positive labels.
    Log,
}

impl LabelTransform {
    pub fn code(self) -> u8 {
        match self {
            LabelTransform::Identity => 0,
            LabelTransform::Log1p => 1,
            LabelTransform::Log => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LabelTransform::Identity),
            1 => Some(LabelTransform::Log1p),
            2 => Some(LabelTransform::Log),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelTransform::Identity => "identity",
            LabelTransform::Log1p => "log1p",
            LabelTransform::Log => "log",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" | "none" => Some(LabelTransform::Identity),
            "log1p" => Some(LabelTransform::Log1p),
            "log" => Some(LabelTransform::Log),
            _ => None,
        }
    }

    pub fn forward(self, y: &[f64]) -> Result<Vec<f64>> {
        y.iter()
            .enumerate()
            .map(|(row, &v)| {
                if !v.is_finite() {
                    return Err(Error::LabelDomain { row, msg: format!("non-finite label {v}") });
                }
                match self {
                    LabelTransform::Identity => Ok(v),
                    LabelTransform::Log1p if v >= 0.0 => Ok(v.ln_1p()),
                    LabelTransform::Log1p => Err(Error::LabelDomain {
                        row,
                        msg: format!("log1p needs y >= 0, got {v}"),
                    }),
                    LabelTransform::Log if v > 0.0 => Ok(v.ln()),
                    LabelTransform::Log => Err(Error::LabelDomain {
                        row,
                        msg: format!("log needs y > 0, got {v}"),
                    }),
                }
            })
            .collect()
    }

    pub fn inverse_one(self, t: f64) -> f64 {
        match self {
            LabelTransform::Identity => t,
            LabelTransform::Log1p => t.exp_m1(),
            LabelTransform::Log => t.exp(),
        }
    }

    pub fn inverse(self, t: &[f64]) -> Vec<f64> {
        t.iter().map(|&v| self.inverse_one(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log1p_of_zero_and_domains() {
        assert_eq!(LabelTransform::Log1p.forward(&[0.0]).unwrap(), vec![0.0]);
        match LabelTransform::Log1p.forward(&[1.0, -0.5]) {
            Err(Error::LabelDomain { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
        assert!(LabelTransform::Log.forward(&[2.0, 0.0]).is_err());
        // strictly positive prices use a plain log
        let t = LabelTransform::Log.forward(&[std::f64::consts::E]).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(ys in proptest::collection::vec(1e-6f64..1e4, 1..20)) {
            for t in [LabelTransform::Identity, LabelTransform::Log1p, LabelTransform::Log] {
                let back = t.inverse(&t.forward(&ys).unwrap());
                for (a, b) in ys.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
            }
        }
    }
}
