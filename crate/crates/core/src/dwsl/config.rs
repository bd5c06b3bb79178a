use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyper-parameters, serialized as a flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_bce: f64,
    pub lambda_dice: f64,
    pub f_floor: f64,
    pub f_ceil: f64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub seed: u64,
    pub augment: bool,
    /// Linear crop scale range for augmentation.
    pub crop_scale: (f64, f64),
    pub gen_hidden: usize,
    pub disc_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_bce: 1.0,
            lambda_dice: 1.0,
            f_floor: 0.1,
            f_ceil: 1.0,
            lr: 1e-3,
            betas: (0.9, 0.95),
            eps: 1e-8,
            weight_decay: 0.0,
            batch_size: 32,
            stage1_steps: 2000,
            stage2_steps: 8000,
            seed: 0,
            augment: false,
            crop_scale: (0.8, 1.0),
            gen_hidden: 64,
            disc_hidden: 64,
        }
    }
}

impl TrainConfig {
    /// Pretraining values of the original large-model recipe. The learning
    /// rate is far too small for the toy networks.
    pub fn large_model() -> Self {
        Self {
            lr: 1e-5,
            augment: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_bce >= 0.0 && self.lambda_dice >= 0.0) {
            return bad("lambda_bce and lambda_dice must be >= 0".into());
        }
        if !(0.0 <= self.f_floor && self.f_floor <= self.f_ceil) {
            return bad(format!(
                "need 0 <= f_floor <= f_ceil, got {} and {}",
                self.f_floor, self.f_ceil
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2".into());
        }
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("crop_scale must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"));
        }
        if self.gen_hidden == 0 || self.disc_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_recipe() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda_bce, c.lambda_dice), (1.0, 1.0));
        assert_eq!((c.f_floor, c.f_ceil), (0.1, 1.0));
        assert_eq!(c.betas, (0.9, 0.95));
        assert_eq!(c.weight_decay, 0.0);
        assert_eq!(c.batch_size, 32);
        assert_eq!(TrainConfig::large_model().lr, 1e-5);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial() {
        let c = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        let p = TrainConfig::from_toml_str("lr = 0.01\nstage1_steps = 0\n").unwrap();
        assert_eq!(p.lr, 0.01);
        assert_eq!(p.stage1_steps, 0);
        assert_eq!(p.stage2_steps, 8000);
    }

    #[test]
    fn rejects_invalid() {
        assert!(TrainConfig::from_toml_str("lr = 0.0").is_err());
        assert!(TrainConfig::from_toml_str("f_floor = 2.0").is_err());
        assert!(TrainConfig::from_toml_str("betas = [1.0, 0.5]").is_err());
        assert!(TrainConfig::from_toml_str("bogus = 1").is_err());
    }
}
