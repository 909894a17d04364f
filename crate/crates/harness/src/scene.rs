//! Synthetic cutting-board scenes: a meat outline with an optional fat band,
//! rasterized at a fixed pixel pitch, with the exact polygons kept as ground
//! truth.
//!
//! Board coordinates are centimeters with `x` to the right and `y` down, the
//! same orientation as the image. Camera pixel `(i, j)` has its center at
//! board point `((i + 0.5) / ppc, (j + 0.5) / ppc)`.

use std::f64::consts::TAU;

use carvebot_core::geometry::{area, horizontal_crossings, Bounds};
use carvebot_core::vision::{Rect, Rgb, Scene, VisionError};
use carvebot_core::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BOARD_RGB: Rgb = [16, 16, 20];
const MEAT_RGB: Rgb = [190, 45, 50];
const FAT_RGB: Rgb = [236, 232, 224];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid meat spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Vision(#[from] VisionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Board {
    pub width_cm: f64,
    pub height_cm: f64,
    pub px_per_cm: f64,
}

impl Default for Board {
    fn default() -> Self {
        Self { width_cm: 40.0, height_cm: 30.0, px_per_cm: 10.0 }
    }
}

impl Board {
    pub fn width_px(&self) -> u32 {
        (self.width_cm * self.px_per_cm).round() as u32
    }

    pub fn height_px(&self) -> u32 {
        (self.height_cm * self.px_per_cm).round() as u32
    }

    pub fn cm_to_px(&self, p: Point2) -> Point2 {
        Point2::new(p.x * self.px_per_cm - 0.5, p.y * self.px_per_cm - 0.5)
    }

    pub fn px_to_cm(&self, p: Point2) -> Point2 {
        Point2::new((p.x + 0.5) / self.px_per_cm, (p.y + 0.5) / self.px_per_cm)
    }

    pub fn contains_cm(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width_cm && p.y <= self.height_cm
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * self.width_cm, 0.5 * self.height_cm)
    }
}

/// Relative radial perturbation `amplitude * cos(order * theta + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outline {
    /// Ellipse whose radius is scaled by `1 + sum of harmonics`.
    Blob { semi_axes_cm: (f64, f64), harmonics: Vec<Harmonic> },
    Rectangle { width_cm: f64, height_cm: f64 },
}

/// Fat attached outside the meat between two polar angles, measured from
/// the meat center in board orientation (270 degrees points up the image).
/// Thickness is radial and interpolated linearly between the listed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatBand {
    pub start_deg: f64,
    pub end_deg: f64,
    pub thickness_cm: Vec<f64>,
}

impl FatBand {
    fn thickness_at(&self, u: f64) -> f64 {
        let t = &self.thickness_cm;
        if t.len() == 1 {
            return t[0];
        }
        let s = u.clamp(0.0, 1.0) * (t.len() - 1) as f64;
        let i = (s.floor() as usize).min(t.len() - 2);
        t[i] + (t[i + 1] - t[i]) * (s - i as f64)
    }

    fn is_empty(&self) -> bool {
        self.thickness_cm.iter().all(|&t| t == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeatSpec {
    pub outline: Outline,
    pub center_cm: Point2,
    #[serde(default)]
    pub fat_band: Option<FatBand>,
    /// Slab height used for weights, cm.
    pub thickness_cm: f64,
    /// g/cm^3.
    pub density: f64,
    /// Seeds the pixel colour texture.
    pub seed: u64,
}

impl Default for MeatSpec {
    fn default() -> Self {
        Self::loin()
    }
}

const BLOB_STEPS: usize = 720;

impl MeatSpec {
    /// A loin-sized blob with a fat cap along its upper edge.
    pub fn loin() -> Self {
        Self {
            outline: Outline::Blob {
                semi_axes_cm: (14.0, 6.0),
                harmonics: vec![
                    Harmonic { order: 2, amplitude: 0.03, phase: 0.4 },
                    Harmonic { order: 3, amplitude: 0.02, phase: 1.1 },
                ],
            },
            center_cm: Board::default().center(),
            fat_band: Some(FatBand { start_deg: 200.0, end_deg: 340.0, thickness_cm: vec![0.8, 1.3, 1.6, 1.3, 0.8] }),
            thickness_cm: 7.0,
            density: 1.05,
            seed: 1,
        }
    }

    /// A chop face with a curved fat edge on top.
    pub fn chop() -> Self {
        Self {
            outline: Outline::Blob {
                semi_axes_cm: (6.0, 3.5),
                harmonics: vec![Harmonic { order: 3, amplitude: 0.03, phase: 0.7 }],
            },
            center_cm: Board::default().center(),
            fat_band: Some(FatBand { start_deg: 230.0, end_deg: 310.0, thickness_cm: vec![0.6, 1.0, 1.0, 0.6] }),
            thickness_cm: 3.0,
            density: 1.05,
            seed: 2,
        }
    }

    pub fn rectangle(width_cm: f64, height_cm: f64) -> Self {
        Self { outline: Outline::Rectangle { width_cm, height_cm }, fat_band: None, ..Self::loin() }
    }

    /// Loin with randomized size, shape and fat profile.
    pub fn random_loin(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(12.0..15.0);
        let b = rng.random_range(5.0..7.0);
        let harmonics = (2..=4).map(|k| Harmonic { order: k, amplitude: rng.random_range(0.0..0.03), phase: rng.random_range(0.0..TAU) }).collect();
        let start = rng.random_range(195.0..215.0);
        let end = rng.random_range(325.0..345.0);
        let thickness_cm = (0..5).map(|i| {
            let peak = if i == 0 || i == 4 { 0.7 } else { 1.3 };
            peak * rng.random_range(0.7..1.3)
        }).collect();
        Self {
            outline: Outline::Blob { semi_axes_cm: (a, b), harmonics },
            fat_band: Some(FatBand { start_deg: start, end_deg: end, thickness_cm }),
            thickness_cm: rng.random_range(6.0..8.0),
            seed,
            ..Self::loin()
        }
    }

    /// Chop face with a randomized, clearly curved fat edge.
    pub fn random_chop(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(5.0..7.0);
        let b = rng.random_range(3.0..4.0);
        let harmonics = vec![Harmonic { order: 3, amplitude: rng.random_range(0.0..0.04), phase: rng.random_range(0.0..TAU) }];
        let half = rng.random_range(35.0..50.0);
        let mid = 270.0 + rng.random_range(-5.0..5.0);
        let f = rng.random_range(0.6..1.4);
        Self {
            outline: Outline::Blob { semi_axes_cm: (a, b), harmonics },
            fat_band: Some(FatBand { start_deg: mid - half, end_deg: mid + half, thickness_cm: vec![0.6 * f, f, f, 0.6 * f] }),
            thickness_cm: rng.random_range(2.5..3.5),
            seed,
            ..Self::chop()
        }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        match &self.outline {
            Outline::Blob { semi_axes_cm: (a, b), harmonics } => {
                let (s, c) = theta.sin_cos();
                let base = a * b / ((b * c).powi(2) + (a * s).powi(2)).sqrt();
                let h: f64 = harmonics.iter().map(|h| h.amplitude * (h.order as f64 * theta + h.phase).cos()).sum();
                base * (1.0 + h)
            }
            Outline::Rectangle { width_cm, height_cm } => {
                let (s, c) = theta.sin_cos();
                let rx = if c == 0.0 { f64::INFINITY } else { 0.5 * width_cm / c.abs() };
                let ry = if s == 0.0 { f64::INFINITY } else { 0.5 * height_cm / s.abs() };
                rx.min(ry)
            }
        }
    }

    fn point_at(&self, theta: f64, extra: f64) -> Point2 {
        let r = self.radius(theta) + extra;
        Point2::new(self.center_cm.x + r * theta.cos(), self.center_cm.y + r * theta.sin())
    }

    fn corner_angles(&self) -> Vec<f64> {
        match &self.outline {
            Outline::Rectangle { width_cm, height_cm } => {
                let t = height_cm.atan2(*width_cm);
                vec![t, std::f64::consts::PI - t, std::f64::consts::PI + t, TAU - t]
            }
            Outline::Blob { .. } => Vec::new(),
        }
    }

    fn band(&self) -> Option<&FatBand> {
        self.fat_band.as_ref().filter(|b| !b.is_empty())
    }

    pub fn validate(&self, board: &Board) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::Spec(m.into()));
        match &self.outline {
            Outline::Blob { semi_axes_cm: (a, b), harmonics } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return bad("semi-axes must be positive");
                }
                if harmonics.iter().map(|h| h.amplitude.abs()).sum::<f64>() >= 0.9 {
                    return bad("harmonic amplitudes must sum below 0.9");
                }
            }
            Outline::Rectangle { width_cm, height_cm } => {
                if !(*width_cm > 0.0 && *height_cm > 0.0) {
                    return bad("rectangle sides must be positive");
                }
            }
        }
        if !(self.thickness_cm > 0.0 && self.density > 0.0) {
            return bad("thickness and density must be positive");
        }
        if let Some(b) = &self.fat_band {
            if b.thickness_cm.is_empty() || b.thickness_cm.iter().any(|t| !(*t >= 0.0)) {
                return bad("fat thickness profile must be non-empty and >= 0");
            }
            let span = b.end_deg - b.start_deg;
            if !(span > 0.0 && span < 360.0) {
                return bad("fat band must span between 0 and 360 degrees");
            }
        }
        let truth = self.truth_unchecked();
        let outside = truth.meat.iter().chain(truth.fat.iter().flatten()).any(|p| !board.contains_cm(*p) || !p.is_finite());
        if outside {
            return bad("meat or fat extends past the board");
        }
        Ok(())
    }

    fn truth_unchecked(&self) -> SceneTruth {
        let step = TAU / BLOB_STEPS as f64;
        let corners = self.corner_angles();
        let is_rect = !corners.is_empty();
        // angles in [lo, hi), with rectangle corners spliced in
        let fill = |lo: f64, hi: f64, include_lo: bool| -> Vec<f64> {
            let mut out = Vec::new();
            if !is_rect {
                let n = ((hi - lo) / step).ceil().max(1.0) as usize;
                out.extend((0..n).map(|k| lo + (hi - lo) * k as f64 / n as f64));
            } else {
                out.push(lo);
                for c in &corners {
                    for wrap in [-TAU, 0.0, TAU, 2.0 * TAU] {
                        let a = c + wrap;
                        if a > lo && a < hi {
                            out.push(a);
                        }
                    }
                }
                out.sort_by(f64::total_cmp);
            }
            if !include_lo {
                out.remove(0);
            }
            out
        };
        match self.band() {
            None => {
                let lo = corners.first().copied().unwrap_or(0.0);
                let meat = fill(lo, lo + TAU, true).into_iter().map(|t| self.point_at(t, 0.0)).collect();
                SceneTruth { meat, fat: None, interface: None }
            }
            Some(b) => {
                let s = b.start_deg.to_radians();
                let e = b.end_deg.to_radians();
                let n = ((e - s) / step).ceil().max(1.0) as usize;
                let mut band: Vec<f64> = (0..=n).map(|k| s + (e - s) * k as f64 / n as f64).collect();
                if is_rect {
                    band = fill(s, e, true);
                    band.push(e);
                }
                let rest = fill(e, s + TAU, false);
                let interface: Vec<Point2> = band.iter().map(|&t| self.point_at(t, 0.0)).collect();
                let mut meat = interface.clone();
                meat.extend(rest.iter().map(|&t| self.point_at(t, 0.0)));
                let mut fat = interface.clone();
                for &t in band.iter().rev() {
                    let q = self.point_at(t, b.thickness_at((t - s) / (e - s)));
                    if fat.last() != Some(&q) && fat.first() != Some(&q) {
                        fat.push(q);
                    }
                }
                SceneTruth { meat, fat: Some(fat), interface: Some(interface) }
            }
        }
    }

    /// Exact outline polygons in board centimeters.
    pub fn ground_truth(&self, board: &Board) -> Result<SceneTruth, SceneError> {
        self.validate(board)?;
        Ok(self.truth_unchecked())
    }
}

/// Exact geometry behind a generated raster, board centimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub meat: Vec<Point2>,
    pub fat: Option<Vec<Point2>>,
    /// Shared meat/fat boundary, ordered along the band.
    pub interface: Option<Vec<Point2>>,
}

impl SceneTruth {
    pub fn meat_area_cm2(&self) -> f64 {
        area(&self.meat)
    }

    pub fn fat_area_cm2(&self) -> f64 {
        self.fat.as_deref().map_or(0.0, area)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub truth: SceneTruth,
    pub board: Board,
}

/// Rasterizes polygon sets; fat is painted over meat.
pub fn render(board: &Board, meat: &[Vec<Point2>], fat: &[Vec<Point2>], seed: u64) -> Result<Scene, SceneError> {
    let (w, h) = (board.width_px(), board.height_px());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class = vec![0u8; w as usize * h as usize];
    for (layer, polys) in [(1u8, meat), (2u8, fat)] {
        for poly in polys {
            let Some(b) = Bounds::of(poly) else { continue };
            let j0 = ((b.min.y * board.px_per_cm - 0.5).floor().max(0.0)) as u32;
            let j1 = ((b.max.y * board.px_per_cm).ceil() as u32).min(h);
            for j in j0..j1 {
                let y = (j as f64 + 0.5) / board.px_per_cm;
                for pair in horizontal_crossings(poly, y).chunks_exact(2) {
                    let i0 = (pair[0] * board.px_per_cm - 0.5).ceil().max(0.0) as u32;
                    let i1 = ((pair[1] * board.px_per_cm - 0.5).ceil().max(0.0) as u32).min(w);
                    for i in i0..i1 {
                        class[(j * w + i) as usize] = layer;
                    }
                }
            }
        }
    }
    let pixels = class
        .iter()
        .map(|&c| {
            let (base, amp) = match c {
                1 => (MEAT_RGB, 15i16),
                2 => (FAT_RGB, 8),
                _ => (BOARD_RGB, 8),
            };
            let mut px = base;
            for ch in px.iter_mut() {
                *ch = (*ch as i16 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
            }
            px
        })
        .collect();
    Ok(Scene::new(w, h, pixels, Rect { x: 0, y: 0, width: w, height: h })?)
}

pub fn generate_scene(spec: &MeatSpec, board: &Board) -> Result<GeneratedScene, SceneError> {
    let truth = spec.ground_truth(board)?;
    let fat: Vec<Vec<Point2>> = truth.fat.iter().cloned().collect();
    let scene = render(board, std::slice::from_ref(&truth.meat), &fat, spec.seed)?;
    Ok(GeneratedScene { scene, truth, board: *board })
}

#[cfg(test)]
mod tests {
    use super::*;
    use carvebot_core::vision::{segment_scene, ColorRanges, SegmentOptions};

    fn circle(r: f64) -> MeatSpec {
        MeatSpec {
            outline: Outline::Blob { semi_axes_cm: (r, r), harmonics: Vec::new() },
            fat_band: None,
            ..MeatSpec::loin()
        }
    }

    #[test]
    fn circle_area_matches_analytic() {
        let g = generate_scene(&circle(10.0), &Board::default()).unwrap();
        let seg = segment_scene(&g.scene, &ColorRanges::default(), &SegmentOptions::default()).unwrap();
        let expected = std::f64::consts::PI * 100.0 * 100.0;
        assert!((seg.meat_area as f64 - expected).abs() / expected < 0.01, "{}", seg.meat_area);
        assert_eq!(seg.fat_area, 0);
    }

    #[test]
    fn zero_band_has_no_fat() {
        let mut s = MeatSpec::loin();
        s.fat_band.as_mut().unwrap().thickness_cm = vec![0.0, 0.0];
        let g = generate_scene(&s, &Board::default()).unwrap();
        assert!(g.truth.fat.is_none());
        assert!(g.scene.pixels.iter().all(|p| !ColorRanges::default().fat.matches(*p)));
    }

    #[test]
    fn seed_fixes_raster() {
        let a = generate_scene(&MeatSpec::loin(), &Board::default()).unwrap();
        let b = generate_scene(&MeatSpec::loin(), &Board::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&MeatSpec { seed: 9, ..MeatSpec::loin() }, &Board::default()).unwrap();
        assert_ne!(a.scene, c.scene);
        assert_eq!(a.truth, c.truth);
    }

    #[test]
    fn oversized_blob_rejected() {
        assert!(matches!(generate_scene(&circle(16.0), &Board::default()), Err(SceneError::Spec(_))));
    }

    #[test]
    fn rectangle_is_exact() {
        let t = MeatSpec::rectangle(20.0, 8.0).ground_truth(&Board::default()).unwrap();
        assert_eq!(t.meat.len(), 4);
        assert!((t.meat_area_cm2() - 160.0).abs() < 1e-9);
    }

    #[test]
    fn fat_shares_the_interface() {
        let t = MeatSpec::loin().ground_truth(&Board::default()).unwrap();
        let iface = t.interface.unwrap();
        let fat = t.fat.unwrap();
        assert_eq!(&fat[..iface.len()], &iface[..]);
        assert!(iface.iter().all(|p| t.meat.contains(p)));
    }
}
