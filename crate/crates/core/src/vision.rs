//! Colour segmentation of the cutting-board image.
//!
//! Foreground components are 8-connected (background is implicitly
//! 4-connected). Contours are pixel-centre polylines traced with the Moore
//! neighbourhood, counter-clockwise as displayed (image `y` grows downward),
//! starting from the first component pixel in row-major order.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub type Rgb = [u8; 3];

/// Pixel rectangle, `x`/`y` of the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }

    pub fn contains_point(&self, p: Point2) -> bool {
        p.x >= self.x as f64
            && p.y >= self.y as f64
            && p.x <= (self.x + self.width) as f64 - 1.0
            && p.y <= (self.y + self.height) as f64 - 1.0
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB.
    pub pixels: Vec<Rgb>,
    pub board: Rect,
}

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("no meat-coloured region on the board")]
    NoMeat,
    #[error("found {0} markers, at most 2 are allowed")]
    AmbiguousMarkers(usize),
    #[error("segmentation has no fat contour")]
    MissingFat,
    #[error("fat and meat contours are never within {tol} px")]
    NoInterface { tol: f64 },
    #[error("ppm: {0}")]
    Ppm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Scene {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>, board: Rect) -> Result<Self, VisionError> {
        let s = Self { width, height, pixels, board };
        s.validate()?;
        Ok(s)
    }

    pub fn filled(width: u32, height: u32, color: Rgb, board: Rect) -> Result<Self, VisionError> {
        Self::new(width, height, vec![color; width as usize * height as usize], board)
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        if self.pixels.len() != self.width as usize * self.height as usize {
            return Err(VisionError::InvalidScene(format!(
                "{}x{} image has {} pixels",
                self.width,
                self.height,
                self.pixels.len()
            )));
        }
        let b = self.board;
        if b.x + b.width > self.width || b.y + b.height > self.height {
            return Err(VisionError::InvalidScene("board region exceeds the image".into()));
        }
        Ok(())
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y * self.width + x) as usize;
        self.pixels[i] = c;
    }

    /// Binary PPM (P6). The board rectangle travels in a header comment.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        let b = self.board;
        write!(w, "P6\n# board {} {} {} {}\n{} {}\n255\n", b.x, b.y, b.width, b.height, self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            bytes.extend_from_slice(p);
        }
        w.write_all(&bytes)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_ppm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a P6 image. Without a `# board` comment the whole image is the
    /// board.
    pub fn read_ppm<R: BufRead>(mut r: R) -> Result<Self, VisionError> {
        let mut tokens: Vec<String> = Vec::new();
        let mut board: Option<Rect> = None;
        while tokens.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(VisionError::Ppm("truncated header".into()));
            }
            let (content, comment) = match line.split_once('#') {
                Some((c, m)) => (c, Some(m)),
                None => (line.as_str(), None),
            };
            tokens.extend(content.split_whitespace().map(str::to_owned));
            if let Some(m) = comment {
                let parts: Vec<&str> = m.split_whitespace().collect();
                if parts.len() == 5 && parts[0] == "board" {
                    let v: Result<Vec<u32>, _> = parts[1..].iter().map(|t| t.parse()).collect();
                    let v = v.map_err(|_| VisionError::Ppm("bad board comment".into()))?;
                    board = Some(Rect { x: v[0], y: v[1], width: v[2], height: v[3] });
                }
            }
        }
        if tokens[0] != "P6" {
            return Err(VisionError::Ppm(format!("unsupported magic `{}`", tokens[0])));
        }
        let parse = |t: &str| t.parse::<u32>().map_err(|_| VisionError::Ppm(format!("bad header value `{t}`")));
        let width = parse(&tokens[1])?;
        let height = parse(&tokens[2])?;
        if parse(&tokens[3])? != 255 {
            return Err(VisionError::Ppm("only 8-bit images are supported".into()));
        }
        let mut bytes = vec![0u8; width as usize * height as usize * 3];
        r.read_exact(&mut bytes)?;
        let pixels = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let board = board.unwrap_or(Rect { x: 0, y: 0, width, height });
        Scene::new(width, height, pixels, board)
    }
}

/// Inclusive per-channel colour range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorRange {
    pub lo: Rgb,
    pub hi: Rgb,
}

impl ColorRange {
    pub const fn new(lo: Rgb, hi: Rgb) -> Self {
        Self { lo, hi }
    }

    pub fn matches(&self, c: Rgb) -> bool {
        (0..3).all(|i| self.lo[i] <= c[i] && c[i] <= self.hi[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.lo[i] <= self.hi[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorRanges {
    pub meat: ColorRange,
    pub fat: ColorRange,
    pub marker: ColorRange,
}

impl Default for ColorRanges {
    fn default() -> Self {
        Self {
            meat: ColorRange::new([120, 0, 0], [255, 100, 100]),
            fat: ColorRange::new([180, 180, 180], [255, 255, 255]),
            marker: ColorRange::new([100, 0, 100], [200, 90, 220]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptions {
    /// Purple components smaller than this are treated as noise.
    pub marker_min_area: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { marker_min_area: 9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSegmentation {
    pub meat_contour: Vec<Point2>,
    pub fat_contour: Option<Vec<Point2>>,
    pub markers: Vec<Point2>,
    pub meat_area: usize,
    pub fat_area: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.bits[(y as u32 * self.width + x as u32) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = (y * self.width + x) as usize;
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// An 8-connected set of pixels, stored in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<(u32, u32)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x as f64, ay + y as f64));
        Point2::new(sx / n, sy / n)
    }

    pub fn to_mask(&self) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for &(x, y) in &self.pixels {
            m.set(x, y, true);
        }
        m
    }
}

const NEIGHBORS_8: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// All 8-connected components, ordered by their first pixel in row-major
/// order.
pub fn label_components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut seen = vec![false; mask.bits.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            pixels.push((x as u32, y as u32));
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        out.push(Component { width: mask.width, height: mask.height, pixels });
    }
    out
}

/// Largest 8-connected component; ties go to the component whose first
/// row-major pixel comes first. `None` for an empty mask.
pub fn largest_component(mask: &Mask) -> Option<Component> {
    let mut best: Option<Component> = None;
    for c in label_components(mask) {
        if best.as_ref().is_none_or(|b| c.area() > b.area()) {
            best = Some(c);
        }
    }
    best
}

/// Moore-neighbourhood boundary trace of a non-empty component.
pub fn trace_contour(component: &Component) -> Vec<Point2> {
    let Some(&(sx, sy)) = component.pixels.first() else {
        return Vec::new();
    };
    let mask = component.to_mask();
    let start = (sx as i64, sy as i64);
    let dir_index = |d: (i64, i64)| NEIGHBORS_8.iter().position(|&n| n == d).expect("unit neighbour");

    // returns (next pixel, new backtrack) scanning counter-clockwise from b
    let step = |p: (i64, i64), b: (i64, i64)| -> Option<((i64, i64), (i64, i64))> {
        let k0 = dir_index((b.0 - p.0, b.1 - p.1));
        let mut prev = b;
        for k in 1..8 {
            let d = NEIGHBORS_8[(k0 + k) % 8];
            let q = (p.0 + d.0, p.1 + d.1);
            if mask.get(q.0, q.1) {
                return Some((q, prev));
            }
            prev = q;
        }
        None
    };

    let b0 = (start.0 - 1, start.1);
    let Some((first, mut b)) = step(start, b0) else {
        return vec![Point2::new(sx as f64, sy as f64)];
    };
    let mut contour = vec![Point2::new(start.0 as f64, start.1 as f64)];
    let mut p = first;
    let limit = 8 * component.area() + 8;
    while contour.len() <= limit {
        let (next, nb) = step(p, b).expect("connected pixel has a neighbour");
        if p == start && next == first {
            break;
        }
        contour.push(Point2::new(p.0 as f64, p.1 as f64));
        p = next;
        b = nb;
    }
    contour
}

/// Splits the board into meat, fat and marker regions by colour.
pub fn segment_scene(
    scene: &Scene,
    ranges: &ColorRanges,
    opts: &SegmentOptions,
) -> Result<SceneSegmentation, VisionError> {
    scene.validate()?;
    if scene.board.is_empty() {
        return Err(VisionError::InvalidScene("board region is empty".into()));
    }
    let board = scene.board;
    let mask_for = |range: &ColorRange| {
        Mask::from_fn(scene.width, scene.height, |x, y| board.contains(x, y) && range.matches(scene.get(x, y)))
    };

    let meat = largest_component(&mask_for(&ranges.meat)).ok_or(VisionError::NoMeat)?;
    let fat = largest_component(&mask_for(&ranges.fat));
    let markers: Vec<Point2> = label_components(&mask_for(&ranges.marker))
        .into_iter()
        .filter(|c| c.area() >= opts.marker_min_area)
        .map(|c| c.centroid())
        .collect();
    if markers.len() > 2 {
        return Err(VisionError::AmbiguousMarkers(markers.len()));
    }

    Ok(SceneSegmentation {
        meat_contour: trace_contour(&meat),
        meat_area: meat.area(),
        fat_area: fat.as_ref().map_or(0, Component::area),
        fat_contour: fat.as_ref().map(trace_contour),
        markers,
    })
}

/// Meat-contour points within `tol` pixels of the fat contour, in contour
/// order. Each point appears once; the sequence starts at the beginning of a
/// contiguous run so that an interface wrapping past the contour start stays
/// in one piece.
pub fn fat_meat_interface(seg: &SceneSegmentation, tol: f64) -> Result<Vec<Point2>, VisionError> {
    let fat = seg.fat_contour.as_ref().ok_or(VisionError::MissingFat)?;
    let mut unique: Vec<Point2> = Vec::with_capacity(seg.meat_contour.len());
    for p in &seg.meat_contour {
        if !unique.contains(p) {
            unique.push(*p);
        }
    }
    let tol2 = tol * tol;
    let near: Vec<bool> = unique
        .iter()
        .map(|p| fat.iter().any(|f| {
            let d = *f - *p;
            d.dot(d) <= tol2
        }))
        .collect();
    if !near.iter().any(|&b| b) {
        return Err(VisionError::NoInterface { tol });
    }
    let n = unique.len();
    let start = (0..n).find(|&i| near[i] && !near[(i + n - 1) % n]).unwrap_or(0);
    Ok((0..n).map(|k| (start + k) % n).filter(|&i| near[i]).map(|i| unique[i]).collect())
}
