//! Procedural desk-scale catchments.
//!
//! The real catchment DEMs are not distributable, so experiments run on
//! synthetic stand-ins with the same qualitative structure: an irregular
//! catchment outline (elevation exactly 0 marks out-of-catchment), a valley
//! that funnels runoff toward a low axis, smooth bumps, and a handful of
//! deep pits where water ponds to more than a meter. Two families are
//! provided so the cross-catchment protocol has a genuinely different test
//! terrain.

use rand::Rng;

use crate::raster::{Raster, RasterError, Units};
use crate::seed::stream_rng;

/// Which synthetic catchment family to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainKind {
    /// Elongated single valley, like the larger study catchment.
    Like709,
    /// Steeper twin-lobed basin, like the smaller transfer catchment.
    Like744,
}

impl TerrainKind {
    fn tag(self) -> &'static str {
        match self {
            TerrainKind::Like709 => "terrain/709",
            TerrainKind::Like744 => "terrain/744",
        }
    }
}

struct Gaussian {
    row: f64,
    col: f64,
    amplitude: f64,
    radius: f64,
}

impl Gaussian {
    fn eval(&self, r: f64, c: f64) -> f64 {
        let dr = r - self.row;
        let dc = c - self.col;
        let d2 = dr * dr + dc * dc;
        self.amplitude * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

/// Generate a synthetic DEM. Inside cells are strictly positive elevations;
/// cells outside the catchment ellipse are exactly zero.
pub fn synthetic_dem(
    kind: TerrainKind,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Raster, RasterError> {
    let mut rng = stream_rng(seed, kind.tag());
    let fr = rows as f64;
    let fc = cols as f64;
    let scale = fr.min(fc);

    // Smooth bumps give the slopes texture; pits are narrow negative wells
    // deep enough that ponded water exceeds a meter in storm conditions.
    let n_bumps = 24;
    let n_pits = 6;
    let mut bumps = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        bumps.push(Gaussian {
            row: rng.gen_range(0.0..fr),
            col: rng.gen_range(0.0..fc),
            amplitude: rng.gen_range(-0.7..0.7),
            radius: scale * rng.gen_range(0.06..0.14),
        });
    }
    // Pits sit near the valley axis so they actually receive runoff.
    let mut pits = Vec::with_capacity(n_pits);
    for _ in 0..n_pits {
        let along = rng.gen_range(0.15..0.85);
        let (row, col) = match kind {
            TerrainKind::Like709 => (fr * along, fc * (0.5 + rng.gen_range(-0.08..0.08))),
            TerrainKind::Like744 => {
                let lobe = if rng.gen_bool(0.5) { 0.33 } else { 0.67 };
                (fr * (lobe + rng.gen_range(-0.06..0.06)), fc * along)
            }
        };
        pits.push(Gaussian {
            row,
            col,
            amplitude: -rng.gen_range(1.5..3.0),
            radius: (scale * 0.035).max(1.5),
        });
    }

    let center_r = (fr - 1.0) / 2.0;
    let center_c = (fc - 1.0) / 2.0;
    let semi_r = fr * 0.47;
    let semi_c = fc * 0.47;

    Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        let x = ((r as f64 - center_r) / semi_r).powi(2) + ((c as f64 - center_c) / semi_c).powi(2);
        if x > 1.0 {
            return 0.0; // outside the catchment
        }
        let rn = r as f64 / fr.max(1.0);
        let cn = c as f64 / fc.max(1.0);
        let base = match kind {
            TerrainKind::Like709 => {
                // Parabolic cross-valley profile draining down-row.
                let cross = (cn - 0.5).powi(2) * 4.0; // 0 at axis, 1 at edges
                4.0 + 5.0 * cross + 3.0 * (1.0 - rn)
            }
            TerrainKind::Like744 => {
                // Two lobes separated by a ridge at mid-row, draining down-col.
                let lobe = ((rn - 0.33).abs().min((rn - 0.67).abs())) * 6.0;
                4.0 + 6.0 * lobe.min(1.0) + 4.0 * (1.0 - cn)
            }
        };
        let mut e = base;
        for g in &bumps {
            e += g.eval(r as f64, c as f64);
        }
        for g in &pits {
            e += g.eval(r as f64, c as f64);
        }
        // Keep inside cells strictly positive; exact zero is reserved for
        // out-of-catchment.
        e.max(0.5)
    })
}

/// Paraboloid bowl: rim `rim_height` meters above the center. Every cell is
/// inside the catchment.
pub fn bowl_dem(rows: usize, cols: usize, rim_height: f64) -> Result<Raster, RasterError> {
    let center_r = (rows as f64 - 1.0) / 2.0;
    let center_c = (cols as f64 - 1.0) / 2.0;
    let max_d2 = center_r * center_r + center_c * center_c;
    Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        let d2 = (r as f64 - center_r).powi(2) + (c as f64 - center_c).powi(2);
        1.0 + rim_height * d2 / max_d2.max(1.0)
    })
}

/// The canonical single-pit fixture: a 3x3 grid whose center sits one meter
/// below a flat ring.
pub fn pit3x3() -> Raster {
    Raster::new(
        3,
        3,
        vec![2.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 2.0, 2.0],
        Units::Meters,
    )
    .expect("static fixture is valid")
}
