//! `plot`: SVG figure with one column per run and four panels per column:
//! held-out data, inferred codes over prior contours, reconstructions joined
//! to their inputs, and model samples over the mixture components.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ali_lab_core::GaussianMixture;

use crate::config::ModelKind;
use crate::data;
use crate::error::{CliError, CliResult};
use crate::evaluate::{artifact_path, PLOT_ROWS};
use crate::fsutil;
use crate::manifest::Manifest;

pub const FIGURE_FILE: &str = "figure.svg";

const PANEL: f64 = 200.0;
const GAP: f64 = 24.0;
const HEADER: f64 = 28.0;
const TITLE: f64 = 16.0;

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Points { points: Vec<Point>, color: &'static str },
    /// Centre, semi-axes and rotation in radians.
    Ellipses { ellipses: Vec<(Point, f64, f64, f64)>, color: &'static str },
    Segments { segments: Vec<(Point, Point)>, color: &'static str },
}

impl Layer {
    fn is_empty(&self) -> bool {
        match self {
            Layer::Points { points, .. } => points.is_empty(),
            Layer::Ellipses { ellipses, .. } => ellipses.is_empty(),
            Layer::Segments { segments, .. } => segments.is_empty(),
        }
    }
}

/// A square plotting window over `[lo, hi]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub lo: f64,
    pub hi: f64,
    pub layers: Vec<Layer>,
    /// Shown instead of the plot content when there is nothing to draw.
    pub empty_caption: String,
}

impl Panel {
    pub fn new(title: &str, lo: f64, hi: f64) -> Self {
        Panel {
            title: title.to_string(),
            lo,
            hi,
            layers: Vec::new(),
            empty_caption: "no data".to_string(),
        }
    }

    pub fn with(mut self, layer: Layer) -> Self {
        self.layers.push(layer);
        self
    }

    fn has_data(&self) -> bool {
        self.layers.iter().any(|l| !matches!(l, Layer::Ellipses { .. }) && !l.is_empty())
    }
}

pub struct Column {
    pub label: String,
    pub panels: Vec<Panel>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders columns of panels. Output depends only on the inputs.
pub fn render(columns: &[Column]) -> String {
    let rows = columns.iter().map(|c| c.panels.len()).max().unwrap_or(0);
    let width = GAP + columns.len().max(1) as f64 * (PANEL + GAP);
    let height = HEADER + rows as f64 * (PANEL + TITLE + GAP) + GAP;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if columns.is_empty() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no runs</text>"#, width / 2.0, height / 2.0);
    }
    for (ci, col) in columns.iter().enumerate() {
        let x0 = GAP + ci as f64 * (PANEL + GAP);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="18" text-anchor="middle" font-weight="bold" font-size="13">{}</text>"#,
            x0 + PANEL / 2.0,
            esc(&col.label)
        );
        for (ri, panel) in col.panels.iter().enumerate() {
            let y0 = HEADER + ri as f64 * (PANEL + TITLE + GAP) + TITLE;
            render_panel(&mut s, panel, x0, y0, &format!("c{ci}r{ri}"));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, p: &Panel, x0: f64, y0: f64, id: &str) {
    let span = (p.hi - p.lo).max(f64::MIN_POSITIVE);
    let k = PANEL / span;
    let px = |v: Point| -> (f64, f64) { (x0 + (v[0] - p.lo) * k, y0 + PANEL - (v[1] - p.lo) * k) };
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + PANEL / 2.0, y0 - 4.0, esc(&p.title));
    let _ = writeln!(s, r#"<clipPath id="{id}"><rect x="{x0:.1}" y="{y0:.1}" width="{PANEL:.0}" height="{PANEL:.0}"/></clipPath>"#);
    let _ = writeln!(s, r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL:.0}" height="{PANEL:.0}" fill="none" stroke="#444"/>"##);
    let _ = writeln!(s, r#"<g clip-path="url(#{id})">"#);
    for layer in &p.layers {
        match layer {
            Layer::Points { points, color } => {
                for &pt in points.iter().filter(|q| q[0].is_finite() && q[1].is_finite()) {
                    let (x, y) = px(pt);
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="{color}" fill-opacity="0.6"/>"#);
                }
            }
            Layer::Ellipses { ellipses, color } => {
                for &(c, a, b, angle) in ellipses {
                    let (x, y) = px(c);
                    let _ = writeln!(
                        s,
                        r#"<ellipse cx="{x:.2}" cy="{y:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.2} {x:.2} {y:.2})" fill="none" stroke="{color}" stroke-width="0.8"/>"#,
                        a * k,
                        b * k,
                        -angle.to_degrees()
                    );
                }
            }
            Layer::Segments { segments, color } => {
                for &(a, b) in segments {
                    let ((x1, y1), (x2, y2)) = (px(a), px(b));
                    let _ = writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="0.5" stroke-opacity="0.6"/>"#);
                }
            }
        }
    }
    s.push_str("</g>\n");
    if !p.has_data() {
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#777">{}</text>"##,
            x0 + PANEL / 2.0,
            y0 + PANEL / 2.0,
            esc(&p.empty_caption)
        );
    }
}

/// Semi-axes and rotation of the `n_sigma` contour of a 2x2 covariance.
pub fn covariance_ellipse(c: [[f64; 2]; 2], n_sigma: f64) -> (f64, f64, f64) {
    let (a, b, d) = (c[0][0], 0.5 * (c[0][1] + c[1][0]), c[1][1]);
    let mid = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let (l1, l2) = ((mid + r).max(0.0), (mid - r).max(0.0));
    let angle = 0.5 * (2.0 * b).atan2(a - d);
    (n_sigma * l1.sqrt(), n_sigma * l2.sqrt(), angle)
}

fn mixture_ellipses(mix: &GaussianMixture) -> Layer {
    Layer::Ellipses {
        ellipses: mix
            .centroids()
            .iter()
            .zip(mix.covariances())
            .map(|(&c, &cov)| {
                let (a, b, t) = covariance_ellipse(cov, 2.0);
                (c, a, b, t)
            })
            .collect(),
        color: "#999",
    }
}

/// Square window around the mixture with room for its spread.
fn data_window(mix: &GaussianMixture) -> (f64, f64) {
    let coords = mix.centroids().iter().flatten();
    let lo = coords.clone().fold(f64::INFINITY, |a, &v| a.min(v));
    let hi = coords.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let pad = (0.15 * (hi - lo)).max(0.5);
    (lo - pad, hi + pad)
}

fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|_| CliError::missing(path, "run `ali-lab eval` first"))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

fn points(rows: &[Vec<f64>], at: usize) -> Vec<Point> {
    rows.iter().filter(|r| r.len() >= at + 2).map(|r| [r[at], r[at + 1]]).collect()
}

fn has_encoder(kind: ModelKind) -> bool {
    !matches!(kind, ModelKind::Gan | ModelKind::CondAli)
}

struct RunArtifacts {
    label: String,
    kind: ModelKind,
    samples: PathBuf,
    latent: PathBuf,
    recon: PathBuf,
    mix: GaussianMixture,
    data: Vec<Point>,
    extent: f64,
}

fn locate(dir: &Path, step: Option<u64>, missing: &mut Vec<String>) -> CliResult<RunArtifacts> {
    let m = Manifest::read(dir)?;
    let flag = step.map(|s| format!(" --steps {s}")).unwrap_or_default();
    let step = match step {
        Some(s) => s,
        None => m.checkpoints.last().map(|c| c.step).ok_or_else(|| CliError::missing(dir, "the run has no checkpoint"))?,
    };
    let a = |name: &str| artifact_path(dir, &m.run_id, step, name);
    let art = RunArtifacts {
        label: format!("{} ({})", m.run_id, m.model_kind),
        kind: m.model_kind,
        samples: a("samples.csv"),
        latent: a("latent_points.csv"),
        recon: a("recon_pairs.csv"),
        mix: data::read_mixture(&dir.join(data::MIXTURE_FILE))?,
        data: {
            let held = data::generate(&m.config.data)?.2;
            (0..held.x.rows().min(PLOT_ROWS)).map(|i| [held.x.at(i, 0), held.x.at(i, 1)]).collect()
        },
        extent: m.config.eval.histogram_extent,
    };
    let d = dir.display();
    if !art.samples.exists() {
        missing.push(format!("ali-lab eval {d} --which coverage{flag}"));
    }
    if has_encoder(art.kind) {
        if !art.latent.exists() {
            missing.push(format!("ali-lab eval {d} --which latent{flag}"));
        }
        if !art.recon.exists() {
            missing.push(format!("ali-lab eval {d} --which recon{flag}"));
        }
    }
    Ok(art)
}

fn column(a: &RunArtifacts) -> CliResult<Column> {
    let (lo, hi) = data_window(&a.mix);
    let blue = "#1f77b4";
    let red = "#d62728";
    let data = Panel::new("data", lo, hi).with(Layer::Points {
        points: a.data.clone(),
        color: blue,
    });
    let prior = Layer::Ellipses {
        ellipses: [1.0, 2.0, 3.0].iter().map(|&r| ([0.0, 0.0], r, r, 0.0)).collect(),
        color: "#999",
    };
    let mut latent = Panel::new("codes vs prior", -a.extent, a.extent).with(prior);
    let mut recon = Panel::new("reconstructions", lo, hi);
    if has_encoder(a.kind) {
        latent = latent.with(Layer::Points {
            points: points(&read_rows(&a.latent)?, 0),
            color: blue,
        });
        let rows = read_rows(&a.recon)?;
        let (x, xh) = (points(&rows, 0), points(&rows, 2));
        recon = recon
            .with(Layer::Segments {
                segments: x.iter().copied().zip(xh.iter().copied()).collect(),
                color: "#888",
            })
            .with(Layer::Points { points: x, color: blue })
            .with(Layer::Points { points: xh, color: red });
    } else {
        latent.empty_caption = "no encoder".into();
        recon.empty_caption = "no encoder".into();
    }
    let samples = Panel::new("samples", lo, hi).with(mixture_ellipses(&a.mix)).with(Layer::Points {
        points: points(&read_rows(&a.samples)?, 0),
        color: red,
    });
    Ok(Column {
        label: a.label.clone(),
        panels: vec![data, latent, recon, samples],
    })
}

/// Writes `figure.svg` into `out` (default: the first run directory).
pub fn cmd_plot(dirs: &[PathBuf], out: Option<&Path>, step: Option<u64>) -> CliResult<PathBuf> {
    if dirs.is_empty() {
        return Err(CliError::Config("plot needs at least one run directory".into()));
    }
    let mut missing = Vec::new();
    let arts = dirs.iter().map(|d| locate(d, step, &mut missing)).collect::<CliResult<Vec<_>>>()?;
    if !missing.is_empty() {
        return Err(CliError::missing(&dirs[0], format!("evaluation artifacts missing; run first:\n  {}", missing.join("\n  "))));
    }
    let columns = arts.iter().map(column).collect::<CliResult<Vec<_>>>()?;
    let out = out.unwrap_or(&dirs[0]);
    fsutil::create_dir(out)?;
    let path = out.join(FIGURE_FILE);
    fsutil::write_atomic(&path, render(&columns).as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_columns(n: usize) -> Vec<Column> {
        (0..n)
            .map(|i| Column {
                label: format!("run {i}"),
                panels: vec![Panel::new("p", -1.0, 1.0).with(Layer::Points {
                    points: vec![[0.0, 0.0], [0.5, -0.5]],
                    color: "red",
                })],
            })
            .collect()
    }

    #[test]
    fn empty_panel_is_valid_svg_with_caption() {
        let cols = vec![Column {
            label: "empty".into(),
            panels: vec![Panel::new("samples", -1.0, 1.0).with(Layer::Points { points: vec![], color: "red" })],
        }];
        let svg = render(&cols);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(">no data</text>"));
        assert!(!svg.contains("<circle"));
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(render(&sample_columns(3)), render(&sample_columns(3)));
    }

    #[test]
    fn five_runs_make_five_columns() {
        let svg = render(&sample_columns(5));
        assert_eq!(svg.matches("font-weight=\"bold\"").count(), 5);
        assert!(svg.contains(&format!("width=\"{:.0}\"", GAP + 5.0 * (PANEL + GAP))));
    }

    #[test]
    fn labels_are_escaped() {
        let mut cols = sample_columns(1);
        cols[0].label = "a<b&c".into();
        assert!(render(&cols).contains("a&lt;b&amp;c"));
    }

    #[test]
    fn ellipse_of_isotropic_covariance_is_a_circle() {
        let (a, b, _) = covariance_ellipse([[0.04, 0.0], [0.0, 0.04]], 2.0);
        assert!((a - 0.4).abs() < 1e-12 && (b - 0.4).abs() < 1e-12);
        let (a, b, t) = covariance_ellipse([[1.0, 0.0], [0.0, 0.25]], 1.0);
        assert!((a - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12 && t.abs() < 1e-12);
    }

    #[test]
    fn points_outside_the_window_are_clipped_not_dropped() {
        let cols = vec![Column {
            label: "x".into(),
            panels: vec![Panel::new("p", 0.0, 1.0).with(Layer::Points {
                points: vec![[5.0, 5.0], [f64::NAN, 0.0]],
                color: "red",
            })],
        }];
        let svg = render(&cols);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("clip-path"));
    }
}
