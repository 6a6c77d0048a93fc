//! Numerical tolerances shared by every module.

use std::str::FromStr;

/// One record for every numerical threshold in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Algebraic identities (reconstructions, Hermiticity of inputs).
    pub algebraic: f64,
    /// Unit norm of states and unit trace of density operators.
    pub normalization: f64,
    /// Smallest admissible |pre/post overlap| before a weak value is undefined.
    pub overlap: f64,
    /// Eigenvalues closer than this are merged into one eigenspace.
    pub eigen_cluster: f64,
    /// Most negative eigenvalue still accepted for a density operator.
    pub psd: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        algebraic: 1e-10,
        normalization: 1e-12,
        overlap: 1e-9,
        eigen_cluster: 1e-9,
        psd: 1e-10,
    };

    /// Applies an override string of the form `1e-9` (algebraic only) or
    /// `algebraic=1e-9,overlap=1e-8`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, String> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Ok(self);
        }
        if let Ok(v) = f64::from_str(spec) {
            self.algebraic = positive(v, "algebraic")?;
            return Ok(self);
        }
        for part in spec.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("tolerance override `{part}` is not key=value"))?;
            let key = key.trim();
            let value =
                f64::from_str(value.trim()).map_err(|e| format!("tolerance `{key}`: {e}"))?;
            let value = positive(value, key)?;
            match key {
                "algebraic" => self.algebraic = value,
                "normalization" => self.normalization = value,
                "overlap" => self.overlap = value,
                "eigen_cluster" => self.eigen_cluster = value,
                "psd" => self.psd = value,
                other => return Err(format!("unknown tolerance key `{other}`")),
            }
        }
        Ok(self)
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

fn positive(v: f64, key: &str) -> Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!(
            "tolerance `{key}` must be a positive finite number"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_number_overrides_algebraic() {
        let t = Tolerances::DEFAULT.with_overrides("1e-6").unwrap();
        assert_eq!(t.algebraic, 1e-6);
        assert_eq!(t.overlap, Tolerances::DEFAULT.overlap);
    }

    #[test]
    fn keyed_overrides() {
        let t = Tolerances::DEFAULT
            .with_overrides("overlap=1e-7, psd=1e-9")
            .unwrap();
        assert_eq!(t.overlap, 1e-7);
        assert_eq!(t.psd, 1e-9);
        assert!(Tolerances::DEFAULT.with_overrides("bogus=1").is_err());
        assert!(Tolerances::DEFAULT.with_overrides("-1").is_err());
    }
}
