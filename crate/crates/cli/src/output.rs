//! Artifact writing: CSV tables, minimal SVG plots and the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Stage, StageError};

pub const MANIFEST: &str = "manifest.txt";

/// Collects artifacts under one directory and records their hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, StageError> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .map_err(|e| StageError::new(Stage::Output, format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root, entries: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, StageError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| StageError::new(Stage::Output, format!("cannot write {}: {e}", path.display())))?;
        self.entries.push((name.to_string(), hex::encode(Sha256::digest(contents.as_bytes()))));
        Ok(path)
    }

    /// Writes `manifest.txt` (`<sha256>  <file>` per line) and returns its path.
    pub fn finish(self) -> Result<PathBuf, StageError> {
        let mut text = String::new();
        for (name, digest) in &self.entries {
            let _ = writeln!(text, "{digest}  {name}");
        }
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text)
            .map_err(|e| StageError::new(Stage::Output, format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Prepends `config_hash,seed` to every row of a CSV body.
///
/// The first line of `body` is taken as the header.
pub fn tag_csv(body: &str, config_hash: &str, seed: u64) -> String {
    let mut out = String::with_capacity(body.len() + 64);
    for (i, line) in body.lines().enumerate() {
        if i == 0 {
            let _ = writeln!(out, "config_hash,seed,{line}");
        } else {
            let _ = writeln!(out, "{config_hash},{seed},{line}");
        }
    }
    out
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Vertical bars, one per label, baseline at zero when it is in range.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut svg = svg_open(title);
    let (lo, hi) = span(values.iter().copied().chain([0.0]));
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let n = values.len().max(1) as f64;
    let slot = (W - 2.0 * PAD) / n;
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        if !v.is_finite() {
            continue;
        }
        let x = PAD + i as f64 * slot + slot * 0.15;
        let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>",
            slot * 0.7,
            (bottom - top).max(0.5)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">{}</text>",
            x + slot * 0.35,
            H - PAD + 12.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Scatter points plus an optional straight line `y = a + b x`.
pub fn scatter_with_line(title: &str, points: &[(f64, f64)], line: Option<(f64, f64)>) -> String {
    let mut svg = svg_open(title);
    let (x0, x1) = span(points.iter().map(|p| p.0));
    let (y0, y1) = span(points.iter().map(|p| p.1));
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    for &(x, y) in points {
        if x.is_finite() && y.is_finite() {
            let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>", px(x), py(y));
        }
    }
    if let Some((a, b)) = line {
        let _ = writeln!(
            svg,
            "<polyline points=\"{:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"firebrick\"/>",
            px(x0),
            py(a + b * x0),
            px(x1),
            py(a + b * x1)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Histogram of `values` over `bins` equal-width bins.
pub fn histogram(title: &str, values: &[f64], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = span(values.iter().copied());
    let mut counts = vec![0.0; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[i.min(bins - 1)] += 1.0;
    }
    let labels: Vec<String> =
        (0..bins).map(|i| format!("{:.3}", lo + (i as f64 + 0.5) * (hi - lo) / bins as f64)).collect();
    bar_chart(title, &labels, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_every_row() {
        assert_eq!(tag_csv("a,b\n1,2\n", "h", 3), "config_hash,seed,a,b\nh,3,1,2\n");
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = histogram("t<1>", &[0.0, 0.0, 1.0], 4);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("t&lt;1&gt;"));
        let s = scatter_with_line("x", &[(0.0, 1.0), (1.0, 0.5)], Some((1.0, -0.5)));
        assert!(s.contains("<polyline"));
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("o")).unwrap();
        out.write("a.csv", "x\n").unwrap();
        let manifest = std::fs::read_to_string(out.finish().unwrap()).unwrap();
        let expected = hex::encode(Sha256::digest(b"x\n"));
        assert_eq!(manifest, format!("{expected}  a.csv\n"));
    }
}
