//! On-disk JSON description of an iterated function system.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "maps": [
//!     { "ratio": 0.4, "angle": 0.0, "translation": [0.0, 0.0] },
//!     { "ratio": 0.4, "rotation": [[1.0, 0.0], [0.0, 1.0]], "translation": [0.6, 0.0] }
//!   ],
//!   "box": { "lo": [0.0, 0.0], "hi": [1.0, 0.9] }
//! }
//! ```
//!
//! The rotation may be given as a full matrix (`rotation`), an angle in
//! radians (`angle`, 2-D only), or a sign (`sign`, 1-D only); omitting all
//! three selects the identity. Numbers are stored as `f64` and converted
//! into the working scalar type on load.

use crate::error::{Error, Result};
use crate::ifs::{AmbientBox, Ifs};
use crate::linalg::{identity, rotation_2d};
use crate::scalar::{cst, Scalar};
use crate::similitude::Similitude;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IfsFile {
    pub dim: usize,
    pub maps: Vec<MapSpec>,
    #[serde(rename = "box")]
    pub ambient_box: BoxSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,
    pub translation: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IfsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parameter(format!("ifs json: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ifs file serialization")
    }

    /// Builds the validated system in the requested scalar type.
    pub fn build<T: Scalar>(&self) -> Result<Ifs<T>> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::InvalidIfs("dim must be positive".into()));
        }
        let mut maps = Vec::with_capacity(self.maps.len());
        for (i, m) in self.maps.iter().enumerate() {
            let provided = [m.rotation.is_some(), m.angle.is_some(), m.sign.is_some()]
                .iter()
                .filter(|&&p| p)
                .count();
            if provided > 1 {
                return Err(Error::InvalidIfs(format!(
                    "map {}: give at most one of rotation / angle / sign",
                    i + 1
                )));
            }
            let rotation: Vec<T> = if let Some(rows) = &m.rotation {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidIfs(format!(
                        "map {}: rotation must be {d}x{d}",
                        i + 1
                    )));
                }
                rows.iter().flatten().map(|&v| cst::<T>(v)).collect()
            } else if let Some(angle) = m.angle {
                if d != 2 {
                    return Err(Error::InvalidIfs(format!(
                        "map {}: angle form requires dim 2",
                        i + 1
                    )));
                }
                rotation_2d(cst::<T>(angle))
            } else if let Some(sign) = m.sign {
                if d != 1 {
                    return Err(Error::InvalidIfs(format!(
                        "map {}: sign form requires dim 1",
                        i + 1
                    )));
                }
                if sign != 1.0 && sign != -1.0 {
                    return Err(Error::InvalidIfs(format!(
                        "map {}: sign must be +1 or -1",
                        i + 1
                    )));
                }
                vec![cst::<T>(sign)]
            } else {
                identity(d)
            };
            if m.translation.len() != d {
                return Err(Error::InvalidIfs(format!(
                    "map {}: translation has {} entries, expected {d}",
                    i + 1,
                    m.translation.len()
                )));
            }
            let translation = m.translation.iter().map(|&v| cst::<T>(v)).collect();
            maps.push(Similitude::new(cst::<T>(m.ratio), rotation, translation)?);
        }
        let bx = AmbientBox::new(
            self.ambient_box.lo.iter().map(|&v| cst::<T>(v)).collect(),
            self.ambient_box.hi.iter().map(|&v| cst::<T>(v)).collect(),
        )?;
        Ifs::new(maps, bx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANTOR: &str = r#"{
        "dim": 1,
        "maps": [
            { "ratio": 0.3333333333333333, "translation": [0.0] },
            { "ratio": 0.3333333333333333, "translation": [0.6666666666666666] }
        ],
        "box": { "lo": [0.0], "hi": [1.0] }
    }"#;

    #[test]
    fn parses_minimal_line_system() {
        let file = IfsFile::from_json(CANTOR).unwrap();
        let ifs = file.build::<f64>().unwrap();
        assert_eq!(ifs.n_maps(), 2);
        assert_eq!(ifs.dim(), 1);
    }

    #[test]
    fn angle_and_sign_are_dimension_guarded() {
        let bad = r#"{
            "dim": 1,
            "maps": [
                { "ratio": 0.4, "angle": 0.3, "translation": [0.0] },
                { "ratio": 0.4, "translation": [0.6] }
            ],
            "box": { "lo": [0.0], "hi": [1.0] }
        }"#;
        let err = IfsFile::from_json(bad).unwrap().build::<f64>().unwrap_err();
        assert!(err.to_string().contains("angle"));
    }

    #[test]
    fn sign_flip_round_trips() {
        let flipped = r#"{
            "dim": 1,
            "maps": [
                { "ratio": 0.3, "sign": -1.0, "translation": [0.3] },
                { "ratio": 0.3, "translation": [0.7] }
            ],
            "box": { "lo": [0.0], "hi": [1.0] }
        }"#;
        let file = IfsFile::from_json(flipped).unwrap();
        let ifs = file.build::<f64>().unwrap();
        // f_1(x) = -0.3 x + 0.3 maps [0,1] to [0, 0.3].
        assert_eq!(ifs.maps()[0].apply(&[1.0]), vec![0.0]);
        let text = file.to_json();
        let again = IfsFile::from_json(&text).unwrap().build::<f64>().unwrap();
        assert_eq!(again.maps()[0].apply(&[1.0]), vec![0.0]);
    }

    #[test]
    fn malformed_json_is_a_parameter_error() {
        assert!(matches!(
            IfsFile::from_json("{ not json"),
            Err(Error::Parameter(_))
        ));
    }
}
