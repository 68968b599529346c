//! Core domain types: survey points, fingerprints, multi-set fingerprint maps
//! and the normalization scaler shared by every model.
//!
//! A [`FingerprintMap`] is a multi-set: the same point may carry several
//! sampled fingerprints. Maps are immutable after construction, so they can
//! be read concurrently without locking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// dBm value standing in for "AP not detected". Every fingerprint entry is
/// kept within `[RSS_FLOOR_DBM, 0]`.
pub const RSS_FLOOR_DBM: f64 = -100.0;

/// A 2D survey location in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Total order on (x, y); used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// True when `p` lies strictly inside (boundary excluded).
    pub fn contains_strict(&self, p: &Point) -> bool {
        p.x > self.min_x && p.x < self.max_x && p.y > self.min_y && p.y < self.max_y
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

/// One RSS observation across all APs, in dBm. Undetected APs carry the
/// configured floor value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rss: Vec<f64>,
}

impl Fingerprint {
    pub fn new(rss: Vec<f64>) -> Self {
        Fingerprint { rss }
    }

    pub fn len(&self) -> usize {
        self.rss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rss.is_empty()
    }
}

/// A distinct surveyed location together with the indices of its samples in
/// the entry list.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistinctPoint {
    point: Point,
    sample_indices: Vec<usize>,
}

/// Multi-set of `(Point, Fingerprint)` survey samples over a field.
///
/// Duplicate points are allowed and each carries its own sample; the
/// distinct-point index is built once at construction and entries are
/// immutable afterwards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FingerprintMap {
    n_aps: usize,
    entries: Vec<(Point, Fingerprint)>,
    bbox: Rect,
    distinct: Vec<DistinctPoint>,
}

/// One neighbor returned by [`FingerprintMap::nearest_neighbors`]: a distinct
/// surveyed point, its distance to the query, and all of its samples.
#[derive(Debug)]
pub struct Neighbor<'a> {
    pub point: Point,
    pub distance: f64,
    pub samples: Vec<&'a Fingerprint>,
}

impl FingerprintMap {
    /// Builds a map, validating every entry against the AP count and the
    /// `[RSS_FLOOR_DBM, 0]` range.
    pub fn new(n_aps: usize, entries: Vec<(Point, Fingerprint)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyMap);
        }
        for (i, (p, f)) in entries.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::BadPoint { x: p.x, y: p.y });
            }
            if f.len() != n_aps {
                return Err(Error::FingerprintLength {
                    expected: n_aps,
                    got: f.len(),
                });
            }
            for &v in &f.rss {
                if !v.is_finite() || v < RSS_FLOOR_DBM - 1e-9 || v > 1e-9 {
                    return Err(Error::RssOutOfRange {
                        value: v,
                        floor: RSS_FLOOR_DBM,
                        index: i,
                    });
                }
            }
        }

        let mut bbox = Rect::new(
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for (p, _) in &entries {
            bbox.min_x = bbox.min_x.min(p.x);
            bbox.min_y = bbox.min_y.min(p.y);
            bbox.max_x = bbox.max_x.max(p.x);
            bbox.max_y = bbox.max_y.max(p.y);
        }

        // Distinct points sorted by (x, y) so downstream results never depend
        // on entry insertion order.
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| entries[a].0.lex_cmp(&entries[b].0));
        let mut distinct: Vec<DistinctPoint> = Vec::new();
        for idx in order {
            let p = entries[idx].0;
            match distinct.last_mut() {
                Some(d) if d.point == p => d.sample_indices.push(idx),
                _ => distinct.push(DistinctPoint {
                    point: p,
                    sample_indices: vec![idx],
                }),
            }
        }

        Ok(FingerprintMap {
            n_aps,
            entries,
            bbox,
            distinct,
        })
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    /// Number of samples (multi-set cardinality).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn entries(&self) -> &[(Point, Fingerprint)] {
        &self.entries
    }

    /// Number of distinct surveyed locations.
    pub fn distinct_len(&self) -> usize {
        self.distinct.len()
    }

    /// Distinct surveyed locations in (x, y) order.
    pub fn distinct_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.distinct.iter().map(|d| d.point)
    }

    /// All samples collected at `p`, or `None` when `p` was never surveyed.
    pub fn samples_at(&self, p: &Point) -> Option<Vec<&Fingerprint>> {
        self.find_distinct(p).map(|d| {
            d.sample_indices
                .iter()
                .map(|&i| &self.entries[i].1)
                .collect()
        })
    }

    fn find_distinct(&self, p: &Point) -> Option<&DistinctPoint> {
        self.distinct
            .binary_search_by(|d| d.point.lex_cmp(p))
            .ok()
            .map(|i| &self.distinct[i])
    }

    /// The `k` distinct points closest to `q` in Euclidean distance, sorted
    /// ascending; ties broken lexicographically on (x, y). Multiple samples
    /// at the same location count once.
    pub fn nearest_neighbors(&self, q: &Point, k: usize) -> Result<Vec<Neighbor<'_>>> {
        self.nearest_neighbors_excluding(q, k, None)
    }

    /// Same as [`nearest_neighbors`](Self::nearest_neighbors) but skipping
    /// `exclude` (used for self-exclusion during training).
    pub fn nearest_neighbors_excluding(
        &self,
        q: &Point,
        k: usize,
        exclude: Option<&Point>,
    ) -> Result<Vec<Neighbor<'_>>> {
        if k == 0 {
            return Err(Error::InvalidConfig("neighbor count k must be >= 1".into()));
        }
        let available = self
            .distinct
            .iter()
            .filter(|d| exclude.is_none_or(|e| d.point != *e))
            .count();
        if k > available {
            return Err(Error::NotEnoughNeighbors {
                requested: k,
                available,
            });
        }

        let mut ranked: Vec<(f64, &DistinctPoint)> = self
            .distinct
            .iter()
            .filter(|d| exclude.is_none_or(|e| d.point != *e))
            .map(|d| (d.point.distance(q), d))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.point.lex_cmp(&b.1.point)));
        ranked.truncate(k);

        Ok(ranked
            .into_iter()
            .map(|(distance, d)| Neighbor {
                point: d.point,
                distance,
                samples: d
                    .sample_indices
                    .iter()
                    .map(|&i| &self.entries[i].1)
                    .collect(),
            })
            .collect())
    }

    /// Draws one of `p`'s samples uniformly at random.
    pub fn sample_fingerprint<R: Rng + ?Sized>(
        &self,
        p: &Point,
        rng: &mut R,
    ) -> Result<&Fingerprint> {
        let d = self
            .find_distinct(p)
            .ok_or(Error::PointNotFound { x: p.x, y: p.y })?;
        let idx = d.sample_indices[rng.gen_range(0..d.sample_indices.len())];
        Ok(&self.entries[idx].1)
    }

    /// Per-AP mean fingerprint over all samples at `p`.
    pub fn mean_fingerprint(&self, p: &Point) -> Option<Fingerprint> {
        let d = self.find_distinct(p)?;
        let mut mean = vec![0.0; self.n_aps];
        for &i in &d.sample_indices {
            for (m, v) in mean.iter_mut().zip(&self.entries[i].1.rss) {
                *m += v;
            }
        }
        let n = d.sample_indices.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(Fingerprint::new(mean))
    }

    /// Union of two maps over the same AP set.
    pub fn merged(&self, other: &FingerprintMap) -> Result<FingerprintMap> {
        if other.n_aps != self.n_aps {
            return Err(Error::FingerprintLength {
                expected: self.n_aps,
                got: other.n_aps,
            });
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        FingerprintMap::new(self.n_aps, entries)
    }
}

/// Linear normalization of RSS to `[0, 1]` and coordinates to the unit box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub rss_floor: f64,
    pub rss_ceiling: f64,
    pub bbox: Rect,
}

impl Scaler {
    /// Fits a scaler over the map's bounding box.
    ///
    /// Rejects empty maps and degenerate boxes (all points collinear on an
    /// axis), since those cannot anchor a 2D coordinate scale.
    pub fn fit(map: &FingerprintMap, rss_floor: f64, rss_ceiling: f64) -> Result<Scaler> {
        if map.is_empty() {
            return Err(Error::EmptyMap);
        }
        if rss_floor >= rss_ceiling {
            return Err(Error::InvalidConfig(format!(
                "rss_floor {rss_floor} must be below rss_ceiling {rss_ceiling}"
            )));
        }
        let bbox = map.bbox();
        if bbox.width() <= 0.0 || bbox.height() <= 0.0 {
            return Err(Error::DegenerateBbox {
                width: bbox.width(),
                height: bbox.height(),
            });
        }
        Ok(Scaler {
            rss_floor,
            rss_ceiling,
            bbox,
        })
    }

    pub fn norm_rss(&self, dbm: f64) -> f64 {
        (dbm - self.rss_floor) / (self.rss_ceiling - self.rss_floor)
    }

    pub fn denorm_rss(&self, unit: f64) -> f64 {
        self.rss_floor + unit * (self.rss_ceiling - self.rss_floor)
    }

    pub fn norm_fingerprint(&self, f: &Fingerprint) -> Vec<f64> {
        f.rss.iter().map(|&v| self.norm_rss(v)).collect()
    }

    pub fn denorm_fingerprint(&self, unit: &[f64]) -> Fingerprint {
        Fingerprint::new(unit.iter().map(|&v| self.denorm_rss(v)).collect())
    }

    pub fn norm_point(&self, p: &Point) -> [f64; 2] {
        [
            (p.x - self.bbox.min_x) / self.bbox.width(),
            (p.y - self.bbox.min_y) / self.bbox.height(),
        ]
    }

    pub fn denorm_point(&self, unit: &[f64; 2]) -> Point {
        Point::new(
            self.bbox.min_x + unit[0] * self.bbox.width(),
            self.bbox.min_y + unit[1] * self.bbox.height(),
        )
    }
}
