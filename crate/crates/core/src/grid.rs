//! Hexagonal discretization of region x time horizon x bands.
//!
//! Regions are pointy-top hexagons laid out as an odd-row-offset block: row
//! `j` sits at `y = 1.5 s j`, column `i` at `x = sqrt(3) s i`, and odd rows
//! are shifted right by half a column. The block is anchored with a centroid
//! on the region origin and has `ceil(W / (sqrt(3) s)) + 1` columns and
//! `ceil(H / (1.5 s)) + 1` rows, which covers the whole rectangle. Every
//! region weighs one unit regardless of how much of it is clipped.
//!
//! Cells are indexed region-major, then time quantum, then band.

use serde::{Deserialize, Serialize};

use crate::error::{MuseError, Result};
use crate::model::{Point, SystemParams};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    /// Path-loss exponent override for this band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            center_hz: 600e6,
            bandwidth_hz: 6e6,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SamplePointPolicy {
    #[default]
    Centroid,
    /// Fixed offset from the centroid, meters. Must stay inside the hexagon.
    Offset { dx: f64, dy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: f64,
    pub height: f64,
    pub hex_side: f64,
    pub time_quantum_s: f64,
    /// Number of time quanta.
    pub horizon: usize,
    pub bands: Vec<BandSpec>,
    pub sample_point_policy: SamplePointPolicy,
    /// Move every transceiver to the point of its hexagon farthest from the
    /// sample point before evaluation.
    pub worst_case_placement: bool,
}

impl GridSpec {
    /// One band, one 10 s quantum, centroid sampling.
    pub fn rectangle(width: f64, height: f64, hex_side: f64) -> Self {
        Self {
            width,
            height,
            hex_side,
            time_quantum_s: 10.0,
            horizon: 1,
            bands: vec![BandSpec::default()],
            sample_point_policy: SamplePointPolicy::Centroid,
            worst_case_placement: false,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_bands(mut self, n: usize) -> Self {
        self.bands = (0..n)
            .map(|k| BandSpec {
                center_hz: 600e6 + 6e6 * k as f64,
                ..BandSpec::default()
            })
            .collect();
        self
    }
}

/// One unit-spectrum-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub region: usize,
    pub time: usize,
    pub band: usize,
    pub sample_point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexGrid {
    width: f64,
    height: f64,
    side: f64,
    cols: usize,
    rows: usize,
    horizon: usize,
    bands: usize,
    policy: SamplePointPolicy,
}

pub fn tessellate(spec: &GridSpec) -> Result<HexGrid> {
    let s = spec.hex_side;
    if !(s.is_finite() && s > 0.0) {
        return Err(MuseError::DegenerateGrid(format!("hex side must be positive, got {s}")));
    }
    if spec.horizon == 0 || spec.bands.is_empty() {
        return Err(MuseError::DegenerateGrid("need at least one time quantum and one band".into()));
    }
    if !(spec.width >= SQRT3 * s && spec.height >= 2.0 * s) {
        return Err(MuseError::DegenerateGrid(format!(
            "{} m x {} m region is smaller than one hexagon of side {s} m",
            spec.width, spec.height
        )));
    }
    let cols = (spec.width / (SQRT3 * s)).ceil() as usize + 1;
    let rows = (spec.height / (1.5 * s)).ceil() as usize + 1;
    let grid = HexGrid {
        width: spec.width,
        height: spec.height,
        side: s,
        cols,
        rows,
        horizon: spec.horizon,
        bands: spec.bands.len(),
        policy: spec.sample_point_policy,
    };
    if let SamplePointPolicy::Offset { dx, dy } = spec.sample_point_policy {
        if !grid.offset_within_hexagon(dx, dy) {
            return Err(MuseError::DegenerateGrid(format!(
                "sample offset ({dx}, {dy}) leaves the hexagon"
            )));
        }
    }
    Ok(grid)
}

/// `p_cmax` times the number of cells, each region weighing one unit.
pub fn total_spectrum_space(spec: &GridSpec, params: &SystemParams) -> Result<f64> {
    let grid = tessellate(spec)?;
    Ok(params.p_cmax() * grid.cell_count() as f64)
}

impl HexGrid {
    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn band_count(&self) -> usize {
        self.bands
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn region_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn slice_count(&self) -> usize {
        self.horizon * self.bands
    }

    pub fn cell_count(&self) -> usize {
        self.region_count() * self.slice_count()
    }

    /// Physical area of one hexagon, m^2.
    pub fn hex_area(&self) -> f64 {
        1.5 * SQRT3 * self.side * self.side
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    /// `(col, row)` of a region.
    pub fn region_coords(&self, region: usize) -> (usize, usize) {
        (region % self.cols, region / self.cols)
    }

    fn lattice_centroid(&self, col: i64, row: i64) -> Point {
        let shift = if row.rem_euclid(2) == 1 { 0.5 } else { 0.0 };
        Point::new(
            (col as f64 + shift) * SQRT3 * self.side,
            row as f64 * 1.5 * self.side,
        )
    }

    pub fn centroid(&self, region: usize) -> Point {
        let (c, r) = self.region_coords(region);
        self.lattice_centroid(c as i64, r as i64)
    }

    pub fn sample_point(&self, region: usize) -> Point {
        let c = self.centroid(region);
        match self.policy {
            SamplePointPolicy::Centroid => c,
            SamplePointPolicy::Offset { dx, dy } => Point::new(c.x + dx, c.y + dy),
        }
    }

    pub fn cell_index(&self, region: usize, time: usize, band: usize) -> usize {
        (region * self.horizon + time) * self.bands + band
    }

    pub fn cell(&self, index: usize) -> Cell {
        let band = index % self.bands;
        let time = (index / self.bands) % self.horizon;
        let region = index / self.slice_count();
        Cell {
            index,
            region,
            time,
            band,
            sample_point: self.sample_point(region),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|i| self.cell(i))
    }

    /// Pointy-top vertices, counter-clockwise from 30 degrees.
    pub fn vertices(&self, region: usize) -> [Point; 6] {
        let c = self.centroid(region);
        std::array::from_fn(|k| {
            let a = (30.0 + 60.0 * k as f64).to_radians();
            Point::new(c.x + self.side * a.cos(), c.y + self.side * a.sin())
        })
    }

    fn offset_within_hexagon(&self, dx: f64, dy: f64) -> bool {
        let s = self.side * (1.0 + 1e-12);
        dx.abs() <= SQRT3 / 2.0 * s && dy.abs() <= s - dx.abs() / SQRT3
    }

    /// Region whose hexagon contains `p`, or `None` outside the block.
    /// Points on a shared edge prefer a hexagon inside the block.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let row0 = (p.y / (1.5 * self.side)).round() as i64;
        let mut candidates = Vec::with_capacity(9);
        for row in row0 - 1..=row0 + 1 {
            let shift = if row.rem_euclid(2) == 1 { 0.5 } else { 0.0 };
            let col0 = (p.x / (SQRT3 * self.side) - shift).round() as i64;
            for col in col0 - 1..=col0 + 1 {
                candidates.push((self.lattice_centroid(col, row).distance(p), row, col));
            }
        }
        let nearest = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        // points on a shared edge go to an in-block hexagon first, then to the lowest (row, col)
        let in_block = |&(_, row, col): &(f64, i64, i64)| {
            col >= 0 && row >= 0 && (col as usize) < self.cols && (row as usize) < self.rows
        };
        candidates
            .into_iter()
            .filter(|c| c.0 <= nearest + 1e-9 * self.side)
            .min_by_key(|c| (!in_block(c), c.1, c.2))
            .filter(in_block)
            .map(|(_, row, col)| row as usize * self.cols + col as usize)
    }

    /// Regions sharing an edge with `region`, in E, NE, NW, W, SW, SE order.
    pub fn neighbors(&self, region: usize) -> Vec<usize> {
        let (c, r) = self.region_coords(region);
        let (c, r) = (c as i64, r as i64);
        let odd = r % 2 == 1;
        let (up_right, up_left) = if odd { (c + 1, c) } else { (c, c - 1) };
        let candidates = [
            (c + 1, r),
            (up_right, r + 1),
            (up_left, r + 1),
            (c - 1, r),
            (up_left, r - 1),
            (up_right, r - 1),
        ];
        candidates
            .into_iter()
            .filter(|&(cc, rr)| cc >= 0 && rr >= 0 && (cc as usize) < self.cols && (rr as usize) < self.rows)
            .map(|(cc, rr)| rr as usize * self.cols + cc as usize)
            .collect()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).contains(&b)
    }

    /// Point of the hexagon containing `p` farthest from its sample point.
    ///
    /// Several vertices can tie; among those, the one farthest from
    /// `partner` wins, then the lowest vertex index.
    pub fn worst_case_position(&self, p: Point, partner: Option<Point>) -> Point {
        let Some(region) = self.locate(p) else {
            return p;
        };
        let sample = self.sample_point(region);
        let verts = self.vertices(region);
        let far = verts.iter().map(|v| v.distance(sample)).fold(0.0, f64::max);
        let tol = 1e-9 * self.side;
        let mut best = None::<(Point, f64)>;
        for v in verts.iter().filter(|v| v.distance(sample) >= far - tol) {
            let score = partner.map_or(0.0, |q| v.distance(q));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((*v, score));
            }
        }
        best.map_or(p, |(v, _)| v)
    }
}
