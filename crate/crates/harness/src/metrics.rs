//! Product metrics: piece geometry, trim accuracy and consistency.

use carvebot_core::geometry::{area, interior_point, partition_polygon, polyline_length, Bounds, CutSide, Side};
use carvebot_core::Point2;
use serde::{Deserialize, Serialize};

use crate::runlog::RunLog;

/// One product piece in board centimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    /// Chop the piece came from; `None` for slices.
    pub chop: Option<usize>,
    /// Meat polygons followed by fat polygons.
    pub polygons: Vec<Vec<Point2>>,
    pub area_cm2: f64,
    pub fat_area_cm2: f64,
    pub thickness_cm: f64,
    /// Extent along `y`.
    pub length_cm: f64,
    /// Extent along `x`.
    pub width_cm: f64,
    pub weight_g: f64,
}

pub fn bounds_of(polys: &[Vec<Point2>]) -> Option<Bounds> {
    polys.iter().filter_map(|p| Bounds::of(p)).reduce(Bounds::union)
}

pub fn total_area(polys: &[Vec<Point2>]) -> f64 {
    // an empty f64 sum is -0.0
    polys.iter().map(|p| area(p)).sum::<f64>() + 0.0
}

impl Piece {
    fn build(chop: Option<usize>, meat: Vec<Vec<Point2>>, fat: Vec<Vec<Point2>>, depth_cm: f64, density: f64) -> Piece {
        let fat_area = total_area(&fat);
        let mut polygons = meat;
        polygons.extend(fat);
        let a = total_area(&polygons);
        let b = bounds_of(&polygons).expect("piece has geometry");
        Piece {
            chop,
            area_cm2: a,
            fat_area_cm2: fat_area,
            thickness_cm: depth_cm,
            length_cm: b.height(),
            width_cm: b.width(),
            weight_g: a * depth_cm * density,
            polygons,
        }
    }

    /// A slice of a slab `slab_cm` high. Its thickness is the mean width,
    /// area over length.
    pub fn slice(meat: Vec<Vec<Point2>>, fat: Vec<Vec<Point2>>, slab_cm: f64, density: f64) -> Piece {
        let mut p = Piece::build(None, meat, fat, slab_cm, density);
        p.thickness_cm = if p.length_cm > 0.0 { p.area_cm2 / p.length_cm } else { 0.0 };
        p
    }

    /// A piece of a chop `depth_cm` deep.
    pub fn from_chop(chop: usize, meat: Vec<Vec<Point2>>, fat: Vec<Vec<Point2>>, depth_cm: f64, density: f64) -> Piece {
        Piece::build(Some(chop), meat, fat, depth_cm, density)
    }

    pub fn meat_area_cm2(&self) -> f64 {
        self.area_cm2 - self.fat_area_cm2
    }
}

/// Faces of every polygon after cutting along `cuts`. A polygon the cuts
/// do not touch comes back whole.
pub fn cut_faces(polys: &[Vec<Point2>], cuts: &[Vec<Point2>]) -> Vec<Vec<Point2>> {
    let mut out = Vec::new();
    for p in polys {
        let faces = partition_polygon(p, cuts);
        if faces.is_empty() {
            if area(p) > 0.0 {
                out.push(p.clone());
            }
        } else {
            out.extend(faces);
        }
    }
    out
}

/// Meat and fat separated by one cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSplit {
    pub kept_meat: Vec<Vec<Point2>>,
    pub removed_meat: Vec<Vec<Point2>>,
    pub kept_fat: Vec<Vec<Point2>>,
    pub removed_fat: Vec<Vec<Point2>>,
}

/// Cuts meat and fat along `path` and discards the side whose area is the
/// larger share fat.
pub fn split_off_fat(meat: &[Vec<Point2>], fat: &[Vec<Point2>], path: &[Point2]) -> CutSplit {
    let cuts = vec![path.to_vec()];
    let meat_faces = cut_faces(meat, &cuts);
    let fat_faces = cut_faces(fat, &cuts);
    let extent = bounds_of(&meat_faces)
        .into_iter()
        .chain(bounds_of(&fat_faces))
        .chain(Bounds::of(path))
        .reduce(Bounds::union);
    let Some(side) = extent.and_then(|e| CutSide::new(path, e)) else {
        return CutSplit { kept_meat: meat_faces, removed_meat: Vec::new(), kept_fat: fat_faces, removed_fat: Vec::new() };
    };
    let of = |f: &Vec<Point2>| side.side(interior_point(f));
    let on = |faces: &[Vec<Point2>], s: Side| faces.iter().filter(|f| of(f) == s).map(|f| area(f)).sum::<f64>();
    let share = |s: Side| {
        let (m, f) = (on(&meat_faces, s), on(&fat_faces, s));
        if m + f > 0.0 { f / (m + f) } else { 0.0 }
    };
    let discard = if share(Side::Left) >= share(Side::Right) { Side::Left } else { Side::Right };
    let (removed_meat, kept_meat) = meat_faces.into_iter().partition(|f| of(f) == discard);
    let (removed_fat, kept_fat) = fat_faces.into_iter().partition(|f| of(f) == discard);
    CutSplit { kept_meat, removed_meat, kept_fat, removed_fat }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    /// Autonomous trim along the detected interface.
    Trim,
    /// Straight cut between two markers.
    PointToPoint,
    /// No fat removal.
    Skip,
}

/// What one de-fatting cut removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimRecord {
    pub chop: usize,
    pub mode: TrimMode,
    pub interface_length_cm: f64,
    pub fat_area_cm2: f64,
    pub fat_removed_cm2: f64,
    pub meat_removed_cm2: f64,
    /// Removed area over interface length.
    pub fat_thickness_removed_cm: f64,
    pub meat_thickness_removed_cm: f64,
    pub fat_weight_removed_g: f64,
    pub meat_weight_removed_g: f64,
}

impl TrimRecord {
    pub fn from_split(chop: usize, mode: TrimMode, split: &CutSplit, interface: &[Point2], depth_cm: f64, density: f64) -> Self {
        let len = polyline_length(interface);
        let fat_removed = total_area(&split.removed_fat);
        let meat_removed = total_area(&split.removed_meat);
        let per_len = |a: f64| if len > 0.0 { a / len } else { 0.0 };
        TrimRecord {
            chop,
            mode,
            interface_length_cm: len,
            fat_area_cm2: fat_removed + total_area(&split.kept_fat),
            fat_removed_cm2: fat_removed,
            meat_removed_cm2: meat_removed,
            fat_thickness_removed_cm: per_len(fat_removed),
            meat_thickness_removed_cm: per_len(meat_removed),
            fat_weight_removed_g: fat_removed * depth_cm * density,
            meat_weight_removed_g: meat_removed * depth_cm * density,
        }
    }
}

/// Population statistics of one metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            count: values.len(),
            mean,
            variance,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bands {
    pub cube_side_cm: (f64, f64),
    pub slice_weight_g: (f64, f64),
}

impl Default for Bands {
    fn default() -> Self {
        Self { cube_side_cm: (2.5, 3.5), slice_weight_g: (150.0, 300.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub slice_thickness_cm: Summary,
    pub slice_weight_g: Summary,
    /// Both planar sides of every cube pooled.
    pub cube_side_cm: Summary,
    pub cube_weight_g: Summary,
    /// Cubes with both planar sides inside the band.
    pub cube_fraction_in_band: f64,
    pub slice_fraction_in_weight_band: f64,
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

pub fn consistency_report(log: &RunLog, bands: &Bands) -> ConsistencyReport {
    let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    let slice_w: Vec<f64> = log.slices.iter().map(|p| p.weight_g).collect();
    let sides: Vec<f64> = log.cubes.iter().flat_map(|p| [p.width_cm, p.length_cm]).collect();
    ConsistencyReport {
        slice_thickness_cm: Summary::of(&log.slices.iter().map(|p| p.thickness_cm).collect::<Vec<_>>()),
        slice_weight_g: Summary::of(&slice_w),
        cube_side_cm: Summary::of(&sides),
        cube_weight_g: Summary::of(&log.cubes.iter().map(|p| p.weight_g).collect::<Vec<_>>()),
        cube_fraction_in_band: fraction(
            log.cubes.iter().filter(|p| within(p.width_cm, bands.cube_side_cm) && within(p.length_cm, bands.cube_side_cm)).count(),
            log.cubes.len(),
        ),
        slice_fraction_in_weight_band: fraction(slice_w.iter().filter(|&&w| within(w, bands.slice_weight_g)).count(), slice_w.len()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimAccuracy {
    pub cuts: Vec<TrimRecord>,
    pub fat_thickness_removed_cm: Summary,
    pub meat_thickness_removed_cm: Summary,
    pub meat_weight_removed_g: Summary,
}

pub fn trim_accuracy(log: &RunLog) -> TrimAccuracy {
    let cuts = log.trims.clone();
    let pick = |f: fn(&TrimRecord) -> f64| Summary::of(&cuts.iter().map(f).collect::<Vec<_>>());
    TrimAccuracy {
        fat_thickness_removed_cm: pick(|r| r.fat_thickness_removed_cm),
        meat_thickness_removed_cm: pick(|r| r.meat_thickness_removed_cm),
        meat_weight_removed_g: pick(|r| r.meat_weight_removed_g),
        cuts,
    }
}
