//! Hand-written SVG figures: exploitability curves and top-down rollouts.

use std::fmt::Write;

use stlgame_core::dynamics::Side;
use stlgame_core::rollout::Episode;
use stlgame_core::scenarios::{Game, Region, ScenarioId};

const PALETTE: [&str; 6] = ["#4daf4a", "#377eb8", "#e41a1c", "#984ea3", "#ff7f00", "#a65628"];
const EGO: &str = "#1f4e9c";
const OPP: &str = "#c0392b";

pub struct CurvePoint {
    pub iteration: f64,
    pub value: f64,
    /// Mean plus/minus std over initial conditions, drawn as a band.
    pub band: Option<(f64, f64)>,
}

/// Affine map from a data box to a pixel box, y pointing up.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = self.x0 + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * self.w;
        let sy = self.y0 + self.h - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * self.h;
        (sx, sy)
    }

    fn scale_x(&self) -> f64 {
        self.w / (self.hi[0] - self.lo[0])
    }
}

fn widen(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    let span = (hi - lo).max(1e-9);
    (lo - pad * span, hi + pad * span)
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(out, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"##);
    let _ = writeln!(out, r##"<rect width="{w}" height="{h}" fill="white"/>"##);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(out, r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##, f.x0, f.y0, f.w, f.h);
    for (v, anchor) in [(f.lo[0], "start"), (f.hi[0], "end")] {
        let (x, _) = f.px(v, f.lo[1]);
        let _ = writeln!(out, r##"<text x="{x:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"##, f.y0 + f.h + 14.0, tick(v));
    }
    for v in [f.lo[1], f.hi[1]] {
        let (_, y) = f.px(f.lo[0], v);
        let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##, f.x0 - 4.0, y + 4.0, tick(v));
    }
    let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"##, f.x0 + f.w / 2.0, f.y0 + f.h + 30.0);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{ylabel}</text>"##,
        f.x0 - 40.0,
        f.y0 + f.h / 2.0,
        f.x0 - 40.0,
        f.y0 + f.h / 2.0
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline_d(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.into_iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
    }
    d.trim_end().to_string()
}

/// Exploitability against iteration with an optional per-initial-condition band.
pub fn exploitability_curve(points: &[CurvePoint]) -> String {
    let (w, h) = (640.0, 400.0);
    let mut out = String::new();
    header(&mut out, w, h);
    let xs: Vec<f64> = points.iter().map(|p| p.iteration).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.value).filter(|v| v.is_finite()).collect();
    ys.extend(points.iter().filter_map(|p| p.band).flat_map(|(a, b)| [a, b]).filter(|v| v.is_finite()));
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(xmin + 1.0);
    let ymax = ys.iter().cloned().fold(0.0, f64::max);
    let (ylo, yhi) = widen(0.0f64.min(ys.iter().cloned().fold(0.0, f64::min)), ymax.max(1e-9), 0.05);
    let f = Frame { x0: 70.0, y0: 20.0, w: w - 90.0, h: h - 70.0, lo: [xmin, ylo], hi: [xmax, yhi] };
    axes(&mut out, &f, "iteration", "exploitability");
    let band: Vec<(f64, (f64, f64))> = points.iter().filter_map(|p| p.band.map(|b| (p.iteration, b))).collect();
    if band.len() >= 2 {
        let upper = band.iter().map(|(x, (_, hi))| f.px(*x, *hi));
        let lower = band.iter().rev().map(|(x, (lo, _))| f.px(*x, *lo));
        let d = polyline_d(upper.chain(lower));
        let _ = writeln!(out, r##"<path d="{d} Z" fill="{EGO}" fill-opacity="0.15" stroke="none"/>"##);
    }
    let line: Vec<(f64, f64)> = points.iter().filter(|p| p.value.is_finite()).map(|p| f.px(p.iteration, p.value)).collect();
    if !line.is_empty() {
        let _ = writeln!(out, r##"<path d="{}" fill="none" stroke="{EGO}" stroke-width="2"/>"##, polyline_d(line.iter().cloned()));
        for (x, y) in line {
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{EGO}"/>"##);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Sutherland-Hodgman clip of a convex polygon to `n . p >= c`.
fn clip_halfplane(poly: &[(f64, f64)], n: (f64, f64), c: f64) -> Vec<(f64, f64)> {
    let inside = |p: (f64, f64)| n.0 * p.0 + n.1 * p.1 - c;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (inside(a), inside(b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

fn region_bounds(region: &Region) -> Option<([f64; 2], [f64; 2])> {
    match region {
        Region::Disc { center, radius } | Region::Column { center, radius } => {
            Some(([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]))
        }
        Region::Box { min, max } if min.len() >= 2 => Some(([min[0], min[1]], [max[0], max[1]])),
        _ => None,
    }
}

fn region_path(region: &Region, f: &Frame) -> String {
    let view = [(f.lo[0], f.lo[1]), (f.hi[0], f.lo[1]), (f.hi[0], f.hi[1]), (f.lo[0], f.hi[1])];
    let poly = |pts: &[(f64, f64)]| format!("{} Z", polyline_d(pts.iter().map(|&(x, y)| f.px(x, y))));
    match region {
        Region::Disc { center, radius } | Region::Column { center, radius } => {
            let (cx, cy) = f.px(center[0], center[1]);
            let r = radius * f.scale_x();
            format!("M{:.2},{cy:.2} A{r:.2},{r:.2} 0 1 0 {:.2},{cy:.2} A{r:.2},{r:.2} 0 1 0 {:.2},{cy:.2} Z", cx + r, cx - r, cx + r)
        }
        Region::Box { min, max } => {
            let (ylo, yhi) = if min.len() >= 2 { (min[1], max[1]) } else { (f.lo[1], f.hi[1]) };
            poly(&[(min[0], ylo), (max[0], ylo), (max[0], yhi), (min[0], yhi)])
        }
        Region::HalfSpace { normal, offset } => {
            let n = (normal[0], normal.get(1).copied().unwrap_or(0.0));
            if n == (0.0, 0.0) {
                poly(&view)
            } else {
                let clipped = clip_halfplane(&view, n, *offset);
                if clipped.is_empty() {
                    // outside the view: an empty path keeps one element per region
                    String::from("M0,0")
                } else {
                    poly(&clipped)
                }
            }
        }
    }
}

/// Top-down view of both agents with one `<path>` per region and per agent.
/// Drone traces add an altitude panel drawn with polylines.
pub fn rollout(game: &Game, episode: &Episode) -> String {
    let pos = game.dynamics.position_indices();
    let track = |side: Side| -> Vec<[f64; 2]> {
        let off = game.layout.slice(side).start;
        episode.trace.states().iter().map(|s| [s[off + pos[0]], s[off + pos[1]]]).collect()
    };
    let ego = track(Side::Ego);
    let opp = track(Side::Opponent);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: [f64; 2]| {
        for d in 0..2 {
            if p[d].is_finite() {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
    };
    ego.iter().chain(&opp).for_each(|&p| grow(p));
    for r in game.config.regions.values() {
        if let Some((a, b)) = region_bounds(r) {
            grow(a);
            grow(b);
        }
    }
    // equal scale on both axes
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6) * 1.1;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let drone = game.config.scenario.id == ScenarioId::Drones;
    let side = 440.0;
    let (w, h) = (if drone { side + 460.0 } else { side + 90.0 }, side + 70.0);
    let f = Frame { x0: 60.0, y0: 20.0, w: side, h: side, lo: [mid[0] - span / 2.0, mid[1] - span / 2.0], hi: [mid[0] + span / 2.0, mid[1] + span / 2.0] };
    let mut out = String::new();
    header(&mut out, w, h);
    axes(&mut out, &f, "x", "y");
    for (i, (name, region)) in game.config.regions.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r##"<path d="{}" fill="{color}" fill-opacity="0.2" stroke="{color}"><title>{name}</title></path>"##,
            region_path(region, &f)
        );
    }
    for (track, color, name) in [(&ego, EGO, "ego"), (&opp, OPP, "opponent")] {
        let d = polyline_d(track.iter().map(|p| f.px(p[0], p[1])));
        let _ = writeln!(out, r##"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"><title>{name}</title></path>"##);
        if let Some(p) = track.first() {
            let (x, y) = f.px(p[0], p[1]);
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"##);
        }
    }
    if drone {
        let alt = |side: Side| -> Vec<f64> {
            let off = game.layout.slice(side).start;
            episode.trace.states().iter().map(|s| s[off + pos[2]]).collect()
        };
        let (ze, zo) = (alt(Side::Ego), alt(Side::Opponent));
        let zs = ze.iter().chain(&zo).cloned().filter(|v| v.is_finite());
        let (zlo, zhi) = zs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (zlo, zhi) = if zlo.is_finite() { widen(zlo, zhi, 0.05) } else { (0.0, 1.0) };
        let tmax = (ze.len().max(2) - 1) as f64;
        let g = Frame { x0: side + 140.0, y0: 20.0, w: 300.0, h: side, lo: [0.0, zlo], hi: [tmax, zhi] };
        axes(&mut out, &g, "step", "z");
        for (z, color) in [(&ze, EGO), (&zo, OPP)] {
            let pts: String = z.iter().enumerate().map(|(t, v)| {
                let (x, y) = g.px(t as f64, *v);
                format!("{x:.2},{y:.2} ")
            }).collect();
            let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"##, pts.trim_end());
        }
    }
    out.push_str("</svg>\n");
    out
}
