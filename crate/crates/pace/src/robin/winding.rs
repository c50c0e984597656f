//! Winding-order invariants for 2D-3D compatibility testing.
//!
//! The plane through a keypoint triplet splits space in two; a camera in the
//! positive half-space (along the triplet normal) sees the projected points
//! counterclockwise, a camera in the negative half-space sees them
//! clockwise. Restricting cameras to the covisibility region of the triplet
//! therefore pins down the observable winding orders per shape, which is
//! precomputed into a dictionary and used as a 3-measurement compatibility
//! test.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::optkernels::{lp_feasible, LpFeasibility};
use crate::{Error, Result};

/// Strict-inequality replacement margin for the covisibility LPs.
pub const LP_MARGIN: f64 = 1e-3;

/// Subset of {+1, -1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SignSet(u8);

impl SignSet {
    pub const EMPTY: SignSet = SignSet(0);
    pub const PLUS: SignSet = SignSet(1);
    pub const MINUS: SignSet = SignSet(2);
    pub const BOTH: SignSet = SignSet(3);

    pub fn contains(&self, sign: i8) -> bool {
        match sign {
            1 => self.0 & 1 != 0,
            -1 => self.0 & 2 != 0,
            _ => false,
        }
    }

    pub fn insert(&mut self, sign: i8) {
        match sign {
            1 => self.0 |= 1,
            -1 => self.0 |= 2,
            _ => {}
        }
    }

    pub fn union(self, other: SignSet) -> SignSet {
        SignSet(self.0 | other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(&self, other: &SignSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn signs(&self) -> Vec<i8> {
        let mut v = Vec::new();
        if self.0 & 1 != 0 {
            v.push(1);
        }
        if self.0 & 2 != 0 {
            v.push(-1);
        }
        v
    }
}

/// Feasible winding orders per keypoint triplet of one shape.
///
/// An entry holds half-space signs: `+1` means some covisible camera lies in
/// the positive half-space of the triplet plane (counterclockwise
/// projection), `-1` the negative half-space (clockwise). Keys cover exactly
/// the `i < j < m` triplets of `0..num_keypoints`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindingDictionary {
    num_keypoints: usize,
    table: BTreeMap<(usize, usize, usize), SignSet>,
}

impl WindingDictionary {
    /// Dictionary with every triplet mapped to the conservative `{+1, -1}`.
    pub fn conservative(num_keypoints: usize) -> Self {
        let mut table = BTreeMap::new();
        for i in 0..num_keypoints {
            for j in (i + 1)..num_keypoints {
                for m in (j + 1)..num_keypoints {
                    table.insert((i, j, m), SignSet::BOTH);
                }
            }
        }
        WindingDictionary {
            num_keypoints,
            table,
        }
    }

    pub fn num_keypoints(&self) -> usize {
        self.num_keypoints
    }

    pub fn get(&self, i: usize, j: usize, m: usize) -> SignSet {
        debug_assert!(i < j && j < m);
        self.table.get(&(i, j, m)).copied().unwrap_or(SignSet::BOTH)
    }

    pub fn set(&mut self, i: usize, j: usize, m: usize, s: SignSet) {
        debug_assert!(i < j && j < m);
        self.table.insert((i, j, m), s);
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, usize), &SignSet)> {
        self.table.iter()
    }
}

impl Serialize for WindingDictionary {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = ser.serialize_map(Some(self.table.len()))?;
        for ((i, j, m), s) in &self.table {
            map.serialize_entry(&format!("{i},{j},{m}"), &s.signs())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for WindingDictionary {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw: BTreeMap<String, Vec<i8>> = BTreeMap::deserialize(de)?;
        let mut table = BTreeMap::new();
        let mut max_idx = 0usize;
        for (key, signs) in raw {
            let parts: Vec<&str> = key.split(',').collect();
            if parts.len() != 3 {
                return Err(D::Error::custom(format!("bad triplet key `{key}`")));
            }
            let idx: Vec<usize> = parts
                .iter()
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| D::Error::custom(format!("bad triplet key `{key}`: {e}")))?;
            if !(idx[0] < idx[1] && idx[1] < idx[2]) {
                return Err(D::Error::custom(format!(
                    "triplet key `{key}` not strictly increasing"
                )));
            }
            let mut s = SignSet::EMPTY;
            for v in signs {
                if v != 1 && v != -1 {
                    return Err(D::Error::custom(format!("bad sign {v} for `{key}`")));
                }
                s.insert(v);
            }
            max_idx = max_idx.max(idx[2]);
            table.insert((idx[0], idx[1], idx[2]), s);
        }
        Ok(WindingDictionary {
            num_keypoints: max_idx + 1,
            table,
        })
    }
}

/// Convex polyhedral shape with per-keypoint face assignment, for LP-based
/// covisibility reasoning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexShapeModel {
    /// Face planes `n . o + b = 0` with outward unit normals.
    pub faces: Vec<(Vector3<f64>, f64)>,
    /// Face index of each keypoint.
    pub keypoint_face: Vec<usize>,
}

impl ConvexShapeModel {
    pub fn new(faces: Vec<(Vector3<f64>, f64)>, keypoint_face: Vec<usize>) -> Result<Self> {
        for (n, _) in &faces {
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("face normal not unit length".into()));
            }
        }
        if keypoint_face.iter().any(|&f| f >= faces.len()) {
            return Err(Error::InvalidInput("keypoint face index out of range".into()));
        }
        Ok(ConvexShapeModel {
            faces,
            keypoint_face,
        })
    }

    /// Checks each keypoint lies on its face plane and strictly inside every
    /// other face half-space, i.e. in the relative interior of its face.
    pub fn validate_keypoints(&self, keypoints: &[Vector3<f64>]) -> Result<()> {
        if keypoints.len() != self.keypoint_face.len() {
            return Err(Error::InvalidInput("keypoint count mismatch".into()));
        }
        for (i, p) in keypoints.iter().enumerate() {
            let own = self.keypoint_face[i];
            for (l, (n, b)) in self.faces.iter().enumerate() {
                let v = n.dot(p) + b;
                if l == own {
                    if v.abs() > 1e-6 {
                        return Err(Error::InvalidInput(format!(
                            "keypoint {i} off its face plane by {v:.2e}"
                        )));
                    }
                } else if v > -1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "keypoint {i} not strictly interior to face {own}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sign of `det [zj - zi, zm - zi]`: +1 is clockwise, -1 counterclockwise
/// (image y-axis pointing down), 0 collinear.
pub fn winding_order_2d(zi: &Vector2<f64>, zj: &Vector2<f64>, zm: &Vector2<f64>) -> i8 {
    let a = zj - zi;
    let b = zm - zi;
    let det = a.x * b.y - a.y * b.x;
    if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    }
}

/// Builds the feasible winding order dictionary of a convex shape by solving
/// two covisibility feasibility LPs per triplet (one per half-space). A
/// degenerate triplet normal yields the conservative `{+1, -1}` entry.
pub fn build_winding_dictionary_lp(
    shape: &ConvexShapeModel,
    keypoints: &[Vector3<f64>],
) -> Result<WindingDictionary> {
    shape.validate_keypoints(keypoints)?;
    let n = keypoints.len();
    let mut dict = WindingDictionary::conservative(n);
    for i in 0..n {
        for j in (i + 1)..n {
            for m in (j + 1)..n {
                let normal = (keypoints[j] - keypoints[i]).cross(&(keypoints[m] - keypoints[i]));
                let norm = normal.norm();
                if norm < 1e-9 {
                    // Undefined entry, kept conservative.
                    dict.set(i, j, m, SignSet::BOTH);
                    continue;
                }
                let nh = normal / norm;

                // Covisibility rows: the camera must be outside each
                // keypoint's face.
                let mut base = Vec::new();
                let mut seen = Vec::new();
                for &kp in &[i, j, m] {
                    let f = shape.keypoint_face[kp];
                    if !seen.contains(&f) {
                        seen.push(f);
                        let (fnorm, foff) = shape.faces[f];
                        base.push(([fnorm.x, fnorm.y, fnorm.z], foff));
                    }
                }

                let mut s = SignSet::EMPTY;
                // Positive half-space: (o - p_i) . n >= margin.
                let mut rows = base.clone();
                rows.push(([nh.x, nh.y, nh.z], -keypoints[i].dot(&nh)));
                let (ccw, _) = lp_feasible(&LpFeasibility::new(rows, LP_MARGIN)?);
                if ccw {
                    s.insert(1);
                }
                // Negative half-space: -(o - p_i) . n >= margin.
                let mut rows = base.clone();
                rows.push(([-nh.x, -nh.y, -nh.z], keypoints[i].dot(&nh)));
                let (cw, _) = lp_feasible(&LpFeasibility::new(rows, LP_MARGIN)?);
                if cw {
                    s.insert(-1);
                }
                dict.set(i, j, m, s);
            }
        }
    }
    Ok(dict)
}

/// Builds a dictionary from observed 2D annotations: the union of winding
/// orders seen per triplet, with unseen triplets conservatively `{+1, -1}`.
/// Observations are determinant signs as returned by [`winding_order_2d`];
/// they are stored as half-space signs (the negation) so lookups compose
/// with LP-built dictionaries.
pub fn learn_winding_dictionary(
    num_keypoints: usize,
    annotated: &[((usize, usize, usize), i8)],
) -> WindingDictionary {
    let mut dict = WindingDictionary::conservative(num_keypoints);
    let mut seen: BTreeMap<(usize, usize, usize), SignSet> = BTreeMap::new();
    for &((i, j, m), det_sign) in annotated {
        if det_sign == 0 || i >= j || j >= m || m >= num_keypoints {
            continue;
        }
        seen.entry((i, j, m)).or_default().insert(-det_sign);
    }
    for (k, s) in seen {
        dict.set(k.0, k.1, k.2, s);
    }
    dict
}

/// Triplet compatibility test: the observed winding order must be feasible
/// for at least one shape. The observed half-space sign is the negated
/// determinant sign; collinear observations pass whenever any shape can see
/// the triplet at all.
pub fn test_triplet_2d(
    (i, j, m): (usize, usize, usize),
    zi: &Vector2<f64>,
    zj: &Vector2<f64>,
    zm: &Vector2<f64>,
    dicts: &[WindingDictionary],
) -> bool {
    debug_assert!(i < j && j < m, "caller must order the triplet");
    let mut union = SignSet::EMPTY;
    for d in dicts {
        union = union.union(d.get(i, j, m));
    }
    match winding_order_2d(zi, zj, zm) {
        0 => !union.is_empty(),
        det => union.contains(-det),
    }
}
