//! Bounded search spaces mapped to the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct HyperParam {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
    /// Rounded to the nearest integer when evaluated.
    #[serde(default)]
    pub integer: bool,
}

impl HyperParam {
    pub fn new(name: &str, lo: f64, hi: f64, scale: Scale, integer: bool) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            scale,
            integer,
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => self.lo * (self.hi / self.lo).powf(u),
        };
        if self.integer {
            v.round().clamp(self.lo.ceil(), self.hi.floor())
        } else {
            v
        }
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v / self.lo).ln() / (self.hi / self.lo).ln(),
        };
        u.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct HyperSpace {
    pub params: Vec<HyperParam>,
}

impl HyperSpace {
    pub fn new(params: Vec<HyperParam>) -> Result<Self> {
        let s = Self { params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::InvalidParameter("empty search space".into()));
        }
        for p in &self.params {
            let ok = p.lo < p.hi && p.lo.is_finite() && p.hi.is_finite() && (p.scale == Scale::Linear || p.lo > 0.0);
            if !ok {
                return Err(Error::InvalidParameter(format!("bounds of {}", p.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.params.iter().zip(u).map(|(p, x)| p.from_unit(*x)).collect()
    }

    pub fn to_unit(&self, v: &[f64]) -> Vec<f64> {
        self.params.iter().zip(v).map(|(p, x)| p.to_unit(*x)).collect()
    }

    /// Autoencoder widths and the stage-I learning rate.
    pub fn cae() -> Self {
        Self {
            params: vec![
                HyperParam::new("encoder_width_1", 128.0, 1024.0, Scale::Log, true),
                HyperParam::new("encoder_width_2", 32.0, 256.0, Scale::Log, true),
                HyperParam::new("lr_stage1", 1e-5, 1e-2, Scale::Log, false),
            ],
        }
    }

    /// Head depth, first and last head widths and the latent size.
    pub fn mlp() -> Self {
        Self {
            params: vec![
                HyperParam::new("head_layers", 3.0, 6.0, Scale::Linear, true),
                HyperParam::new("head_first", 124.0, 256.0, Scale::Linear, true),
                HyperParam::new("head_last", 12.0, 124.0, Scale::Linear, true),
                HyperParam::new("latent", 12.0, 256.0, Scale::Log, true),
            ],
        }
    }

    /// Loss weights, both learning rates and the batch size.
    pub fn joint() -> Self {
        Self {
            params: vec![
                HyperParam::new("lambda_coords", 1e-4, 1.0, Scale::Log, false),
                HyperParam::new("lambda_force", 1e-4, 1.0, Scale::Log, false),
                HyperParam::new("lambda_sparse", 1e-4, 1.0, Scale::Log, false),
                HyperParam::new("lr_stage1", 1e-5, 1e-2, Scale::Log, false),
                HyperParam::new("lr_stage2", 1e-5, 1e-2, Scale::Log, false),
                HyperParam::new("batch_size", 15.0, 100.0, Scale::Linear, true),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn presets_are_valid() {
        for s in [HyperSpace::cae(), HyperSpace::mlp(), HyperSpace::joint()] {
            s.validate().unwrap();
        }
        assert!(HyperSpace::new(vec![HyperParam::new("x", 0.0, 1.0, Scale::Log, false)]).is_err());
    }

    #[test]
    fn log_midpoint_and_rounding() {
        let p = HyperParam::new("lr", 1e-5, 1e-1, Scale::Log, false);
        assert!((p.from_unit(0.5) - 1e-3).abs() < 1e-15);
        let b = HyperParam::new("b", 15.0, 100.0, Scale::Linear, true);
        assert_eq!(b.from_unit(0.0), 15.0);
        assert_eq!(b.from_unit(1.0), 100.0);
        assert_eq!(b.from_unit(0.5), 58.0);
    }

    proptest! {
        #[test]
        fn unit_round_trip(u in 0.0..1.0f64) {
            let p = HyperParam::new("w", 1e-4, 1.0, Scale::Log, false);
            prop_assert!((p.to_unit(p.from_unit(u)) - u).abs() < 1e-12);
            let s = HyperSpace::joint();
            let v = s.from_unit(&vec![u; s.dim()]);
            for (x, q) in v.iter().zip(&s.params) {
                prop_assert!(*x >= q.lo && *x <= q.hi);
            }
        }
    }
}
