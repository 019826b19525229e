use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descending order statistics of a named state vector together with the
/// permutation that produced them.
///
/// Ties are broken by the lowest named index, so an all-equal vector maps to
/// the identity permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct RankView {
    /// Values sorted non-increasing.
    pub ranked: Vec<f64>,
    /// `to_rank[i]` is the rank position occupied by named particle `i`.
    pub to_rank: Vec<usize>,
    /// `from_rank[j]` is the named particle occupying rank `j`.
    pub from_rank: Vec<usize>,
    /// Adjacent gaps `ranked[j] - ranked[j+1]`, all non-negative.
    pub gaps: Vec<f64>,
}

impl RankView {
    pub fn n(&self) -> usize {
        self.ranked.len()
    }

    /// True when at least one adjacent gap is exactly zero.
    pub fn has_tie(&self) -> bool {
        self.gaps.iter().any(|g| *g == 0.0)
    }
}

/// Ranks a named state. Sorting is descending by value with ties resolved
/// toward the lowest named index.
pub fn rank_state(x: &[f64]) -> Result<RankView> {
    if x.is_empty() {
        return Err(Error::validation("cannot rank an empty state"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("state entries must be finite"));
    }
    let n = x.len();
    let mut from_rank: Vec<usize> = (0..n).collect();
    from_rank.sort_unstable_by(|&a, &b| {
        x[b].partial_cmp(&x[a])
            .expect("finite values compare")
            .then(a.cmp(&b))
    });
    let mut to_rank = vec![0usize; n];
    for (j, &i) in from_rank.iter().enumerate() {
        to_rank[i] = j;
    }
    let ranked: Vec<f64> = from_rank.iter().map(|&i| x[i]).collect();
    let gaps: Vec<f64> = ranked.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(RankView {
        ranked,
        to_rank,
        from_rank,
        gaps,
    })
}

/// Pushes a named vector `z` into ranked coordinates: entry `j` of the result
/// is the `z` of whichever particle occupies rank `j`. Bijective with
/// [`ranked_to_named_z`]; the multiset of entries (hence the sum) is
/// preserved.
pub fn named_to_ranked_z(z: &[f64], view: &RankView) -> Result<Vec<f64>> {
    if z.len() != view.n() {
        return Err(Error::validation("z length does not match rank view"));
    }
    Ok(view.from_rank.iter().map(|&i| z[i]).collect())
}

/// Inverse of [`named_to_ranked_z`]. At a tie step the assignment follows the
/// lowest-index rule rather than any intrinsic labelling, so callers should
/// consult [`RankView::has_tie`] before interpreting per-name entries.
pub fn ranked_to_named_z(zbar: &[f64], view: &RankView) -> Result<Vec<f64>> {
    if zbar.len() != view.n() {
        return Err(Error::validation("zbar length does not match rank view"));
    }
    Ok(view.to_rank.iter().map(|&j| zbar[j]).collect())
}

/// A point of the closed ordered domain: coordinates non-increasing with at
/// most one adjacent equality. Points with two or more simultaneous
/// equalities fall outside the admissible closure and are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    coords: Vec<f64>,
    face: Option<usize>,
}

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::validation("point needs at least one coordinate"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("coordinates must be finite"));
        }
        let mut face = None;
        for (i, w) in coords.windows(2).enumerate() {
            if w[0] < w[1] {
                return Err(Error::validation(format!(
                    "coordinates must be non-increasing; violated at positions {} and {}",
                    i + 1,
                    i + 2
                )));
            }
            if w[0] == w[1] {
                if face.is_some() {
                    return Err(Error::validation(
                        "at most one adjacent equality is admissible",
                    ));
                }
                face = Some(i);
            }
        }
        Ok(SimplexPoint { coords, face })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// True when all inequalities are strict.
    pub fn is_interior(&self) -> bool {
        self.face.is_none()
    }

    /// Zero-based index `i` of the face `x_{i+1} = x_{i+2}`, when on one.
    pub fn face_index(&self) -> Option<usize> {
        self.face
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Vec<f64> {
        p.coords
    }
}
