use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{invalid, Result};

/// One support point of the joint law of `(sqrt(p) θ*_j, λ_j^(+1), λ_j^(-1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub t: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    pub prob: f64,
}

impl Atom {
    pub fn new(t: f64, l_pos: f64, l_neg: f64, prob: f64) -> Self {
        Self {
            t,
            l_pos,
            l_neg,
            prob,
        }
    }

    pub fn eigenvalue(&self, class: Class) -> f64 {
        match class {
            Class::Pos => self.l_pos,
            Class::Neg => self.l_neg,
        }
    }
}

/// Finite-atom limit distribution of signal and class spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct JointSpectrumDistribution {
    atoms: Vec<Atom>,
}

impl JointSpectrumDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("distribution needs at least one atom");
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.t.is_finite() && a.l_pos.is_finite() && a.l_neg.is_finite()) {
                return invalid(format!("atom {i} has non-finite entries"));
            }
            if a.l_pos <= 0.0 || a.l_neg <= 0.0 {
                return invalid(format!("atom {i} has a non-positive eigenvalue"));
            }
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                return invalid(format!("atom {i} probability {} outside (0, 1]", a.prob));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("atom probabilities sum to {total}, not 1"));
        }
        let dist = Self { atoms };
        if dist.signal_norm_sq() <= 0.0 {
            return invalid("target signal is identically zero");
        }
        Ok(dist)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `ζ_y^2 = E[T^2 / L_y]`.
    pub fn zeta_sq(&self, class: Class) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * a.t * a.t / a.eigenvalue(class))
            .sum()
    }

    /// `C^2 = E[T^2]`.
    pub fn signal_norm_sq(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.t * a.t).sum()
    }

    /// The same law with the two class spectra exchanged.
    pub fn swapped(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.t, a.l_neg, a.l_pos, a.prob))
            .collect();
        Self { atoms }
    }
}

impl TryFrom<Vec<Atom>> for JointSpectrumDistribution {
    type Error = crate::error::Error;

    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<JointSpectrumDistribution> for Vec<Atom> {
    fn from(d: JointSpectrumDistribution) -> Self {
        d.atoms
    }
}

/// The three canonical imbalance families, written as `A`, `B` and `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SettingKind {
    /// Class +1 spectrum is class -1 scaled by `s >= 1`.
    Scaling,
    /// Class +1 has a fraction `q` of large eigenvalues.
    Decay,
    /// Misaligned covariances with the signal boosted by `a >= 1`.
    Alignment,
}

impl SettingKind {
    pub fn letter(self) -> &'static str {
        match self {
            SettingKind::Scaling => "A",
            SettingKind::Decay => "B",
            SettingKind::Alignment => "C",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" | "SCALING" => Some(SettingKind::Scaling),
            "B" | "DECAY" => Some(SettingKind::Decay),
            "C" | "ALIGNMENT" => Some(SettingKind::Alignment),
            _ => None,
        }
    }

    pub fn distribution(self, param: f64) -> Result<JointSpectrumDistribution> {
        match self {
            SettingKind::Scaling => setting_a(param),
            SettingKind::Decay => setting_b(param),
            SettingKind::Alignment => setting_c(param),
        }
    }
}

impl TryFrom<String> for SettingKind {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Self::parse(&s).ok_or_else(|| format!("unknown setting {s:?}, expected A, B or C"))
    }
}

impl From<SettingKind> for String {
    fn from(k: SettingKind) -> Self {
        k.letter().to_string()
    }
}

pub fn setting_a(s: f64) -> Result<JointSpectrumDistribution> {
    if !(s >= 1.0 && s.is_finite()) {
        return invalid(format!("setting A needs s >= 1, got {s}"));
    }
    JointSpectrumDistribution::new(vec![
        Atom::new(1.0, 2.0 * s, 2.0, 0.5),
        Atom::new(1.0, 0.5 * s, 0.5, 0.5),
    ])
}

/// Atoms of zero mass (q = 0 or q = 1) are dropped.
pub fn setting_b(q: f64) -> Result<JointSpectrumDistribution> {
    if !(0.0..=1.0).contains(&q) {
        return invalid(format!("setting B needs q in [0, 1], got {q}"));
    }
    let atoms = [
        Atom::new(1.0, 2.0, 2.0, 0.5 * q),
        Atom::new(1.0, 2.0, 0.5, 0.5 * q),
        Atom::new(1.0, 0.5, 2.0, 0.5 * (1.0 - q)),
        Atom::new(1.0, 0.5, 0.5, 0.5 * (1.0 - q)),
    ];
    JointSpectrumDistribution::new(atoms.into_iter().filter(|a| a.prob > 0.0).collect())
}

pub fn setting_c(a: f64) -> Result<JointSpectrumDistribution> {
    if !(a >= 1.0 && a.is_finite()) {
        return invalid(format!("setting C needs a >= 1, got {a}"));
    }
    JointSpectrumDistribution::new(vec![
        Atom::new(1.0, 2.0, 0.5, 0.5),
        Atom::new(a, 0.5, 2.0, 0.5),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_a_table() {
        let d = setting_a(2.0).unwrap();
        assert_eq!(
            d.atoms(),
            &[Atom::new(1.0, 4.0, 2.0, 0.5), Atom::new(1.0, 1.0, 0.5, 0.5)]
        );
    }

    #[test]
    fn setting_b_half_is_balanced() {
        let d = setting_b(0.5).unwrap();
        let large = |c: Class| {
            d.atoms()
                .iter()
                .filter(|a| a.eigenvalue(c) == 2.0)
                .map(|a| a.prob)
                .sum::<f64>()
        };
        assert_eq!(large(Class::Pos), 0.5);
        assert_eq!(large(Class::Neg), 0.5);
        assert_eq!(setting_b(0.0).unwrap().atoms().len(), 2);
    }

    #[test]
    fn setting_c_zetas() {
        let d = setting_c(1.0).unwrap();
        assert!((d.zeta_sq(Class::Pos) - 1.25).abs() < 1e-15);
        assert!((d.zeta_sq(Class::Neg) - 1.25).abs() < 1e-15);
        assert_eq!(d.signal_norm_sq(), 1.0);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(setting_a(0.5).is_err());
        assert!(setting_b(1.5).is_err());
        assert!(setting_c(0.0).is_err());
        assert!(JointSpectrumDistribution::new(vec![Atom::new(1.0, 1.0, 1.0, 0.7)]).is_err());
        assert!(JointSpectrumDistribution::new(vec![Atom::new(1.0, 0.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn json_atoms_validate() {
        let d: JointSpectrumDistribution =
            serde_json::from_str(r#"[{"t":1,"l_pos":2,"l_neg":2,"prob":1}]"#).unwrap();
        assert_eq!(d.atoms().len(), 1);
        let bad = serde_json::from_str::<JointSpectrumDistribution>(
            r#"[{"t":1,"l_pos":2,"l_neg":2,"prob":0.4}]"#,
        );
        assert!(bad.is_err());
    }
}
