use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use lanegraph::fusion::{accumulate_world, WorldSpec};
use lanegraph::geom::read_graph;
use lanegraph::raster::Raster;
use lanegraph::scene_io::{read_scene, SCENE_FILE};
use lanegraph::{Graph, Point};

const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
];
const FRAME: Rgb<u8> = Rgb([128, 128, 128]);
const TRUTH: Rgb<u8> = Rgb([200, 200, 200]);

#[derive(Debug, Clone)]
pub enum Input {
    Scene(PathBuf),
    Graph(PathBuf),
    Heatmap(PathBuf),
}

pub fn classify(p: &Path) -> Result<Input> {
    if p.is_dir() && p.join(SCENE_FILE).exists() {
        return Ok(Input::Scene(p.to_path_buf()));
    }
    match p.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(Input::Graph(p.to_path_buf())),
        Some("pfm") => Ok(Input::Heatmap(p.to_path_buf())),
        _ => bail!("unknown input format: {} (expected a scene directory, .json graph or .pfm heatmap)", p.display()),
    }
}

pub struct Canvas {
    pub img: RgbImage,
    map: Box<dyn Fn(Point) -> Point>,
}

impl Canvas {
    fn blank(w: u32, h: u32, map: Box<dyn Fn(Point) -> Point>) -> Self {
        let mut c = Self { img: RgbImage::new(w.max(1), h.max(1)), map };
        c.frame();
        c
    }

    fn frame(&mut self) {
        let (w, h) = self.img.dimensions();
        for x in 0..w {
            self.img.put_pixel(x, 0, FRAME);
            self.img.put_pixel(x, h - 1, FRAME);
        }
        for y in 0..h {
            self.img.put_pixel(0, y, FRAME);
            self.img.put_pixel(w - 1, y, FRAME);
        }
    }

    fn underlay(&mut self, r: &Raster) {
        let (w, h) = self.img.dimensions();
        for row in 0..r.height().min(h as usize) {
            for col in 0..r.width().min(w as usize) {
                let v = (r.get(row, col).clamp(0.0, 1.0) * 160.0) as u8;
                self.img.put_pixel(col as u32, row as u32, Rgb([v / 2, v / 2, v]));
            }
        }
        self.frame();
    }

    fn dot(&mut self, p: Point, rad: i64, c: Rgb<u8>) {
        let (w, h) = self.img.dimensions();
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for y in cy - rad..=cy + rad {
            for x in cx - rad..=cx + rad {
                if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                    self.img.put_pixel(x as u32, y as u32, c);
                }
            }
        }
    }

    fn line(&mut self, a: Point, b: Point, rad: i64, c: Rgb<u8>) {
        let n = (a.dist(b) * 2.0).ceil().max(1.0) as usize;
        for k in 0..=n {
            self.dot(a.lerp(b, k as f64 / n as f64), rad, c);
        }
    }

    /// Draws `g`; `color` of `None` colours each connected component.
    pub fn graph(&mut self, g: &Graph, width: i64, color: Option<Rgb<u8>>) {
        let comp = g.components();
        let pick = |v: usize| color.unwrap_or(Rgb(PALETTE[comp[v] % PALETTE.len()]));
        for &(a, b) in g.edges() {
            let (pa, pb) = ((self.map)(g.vertex(a)), (self.map)(g.vertex(b)));
            self.line(pa, pb, width, pick(a));
        }
        for v in 0..g.len() {
            let p = (self.map)(g.vertex(v));
            self.dot(p, width + 1, pick(v));
        }
    }
}

/// Composes all inputs into one image. Scenes give the world frame and a
/// fused heatmap underlay with G*; a heatmap alone gives its pixel frame;
/// graphs alone are fitted at `px_per_m`.
pub fn render(inputs: &[Input], px_per_m: f64) -> Result<RgbImage> {
    let mut graphs = Vec::new();
    let mut heat: Option<Raster> = None;
    let mut scene = None;
    for i in inputs {
        match i {
            Input::Graph(p) => graphs.push(read_graph(p).with_context(|| format!("reading {}", p.display()))?),
            Input::Heatmap(p) => {
                let r = Raster::read_pfm(p)?;
                heat = Some(match heat {
                    None => r,
                    Some(h) if h.dims() == r.dims() => {
                        let mut m = h.clone();
                        for (a, b) in m.data_mut().iter_mut().zip(r.data()) {
                            *a = a.max(*b);
                        }
                        m
                    }
                    Some(h) => bail!("heatmap {} is {:?}, earlier heatmaps are {:?}", p.display(), r.dims(), h.dims()),
                });
            }
            Input::Scene(p) => {
                if scene.is_some() {
                    bail!("render takes at most one scene directory");
                }
                scene = Some(read_scene(p)?);
            }
        }
    }
    let mut canvas = if let Some(s) = &scene {
        let world = WorldSpec::covering(&s.frames, 1.0).context("scene has no frames")?;
        let mut c = Canvas::blank(world.width as u32, world.height as u32, Box::new(move |p| world.world_to_px(p)));
        c.underlay(&accumulate_world(&s.frames, &world, 0).0);
        if let Some(g) = &s.graph {
            c.graph(g, 1, Some(TRUTH));
        }
        c
    } else if let Some(h) = &heat {
        let mut c = Canvas::blank(h.width() as u32, h.height() as u32, Box::new(|p| p));
        c.underlay(h);
        c
    } else {
        let pts: Vec<Point> = graphs.iter().flat_map(|g| g.vertices().iter().copied()).collect();
        if pts.is_empty() {
            Canvas::blank(64, 64, Box::new(|p| p))
        } else {
            let lo = pts.iter().fold(Point::new(f64::INFINITY, f64::INFINITY), |a, p| Point::new(a.x.min(p.x), a.y.min(p.y)));
            let hi = pts.iter().fold(Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| Point::new(a.x.max(p.x), a.y.max(p.y)));
            let margin = 8.0;
            let w = ((hi.x - lo.x) * px_per_m + 2.0 * margin).ceil() as u32 + 1;
            let h = ((hi.y - lo.y) * px_per_m + 2.0 * margin).ceil() as u32 + 1;
            Canvas::blank(w, h, Box::new(move |p| Point::new((p.x - lo.x) * px_per_m + margin, (p.y - lo.y) * px_per_m + margin)))
        }
    };
    for g in &graphs {
        canvas.graph(g, 0, None);
    }
    Ok(canvas.img)
}
