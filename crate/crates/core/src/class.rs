use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the two mixture components, labelled +1 and -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    Pos,
    Neg,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Pos, Class::Neg];

    pub fn sign(self) -> f64 {
        match self {
            Class::Pos => 1.0,
            Class::Neg => -1.0,
        }
    }

    /// 0 for the positive class, 1 for the negative class.
    pub fn index(self) -> usize {
        match self {
            Class::Pos => 0,
            Class::Neg => 1,
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::Pos => Class::Neg,
            Class::Neg => Class::Pos,
        }
    }

    pub fn from_sign(y: i8) -> Option<Class> {
        match y {
            1 => Some(Class::Pos),
            -1 => Some(Class::Neg),
            _ => None,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Class::Pos => f.write_str("+1"),
            Class::Neg => f.write_str("-1"),
        }
    }
}
