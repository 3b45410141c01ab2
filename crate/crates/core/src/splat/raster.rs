//! Tile-based front-to-back alpha compositing and its adjoint.

use rayon::prelude::*;

use super::gaussian::{GaussianCloud, GradientBuffer};
use super::project::{project_backward, project_gaussian, Projected, ScreenGrad, DEFAULT_NEAR, FOOTPRINT_SIGMAS};
use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::image::{ImageRgb, RenderedImage};

pub const MAX_ALPHA: f64 = 0.99;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const MASK_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub tile_size: usize,
    pub background: [f64; 3],
    /// Gaussians at camera depth `<= near` are culled.
    pub near: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            tile_size: 8,
            background: [0.0; 3],
            near: DEFAULT_NEAR,
        }
    }
}

/// Per-Gaussian screen data copied into each tile for locality.
#[derive(Clone, Copy)]
struct Splat {
    mx: f64,
    my: f64,
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    depth: f64,
    decay: f64,
}

impl Splat {
    fn new(p: &Projected) -> Self {
        Splat {
            mx: p.mean2d[0],
            my: p.mean2d[1],
            conic: p.conic,
            opacity: p.opacity,
            color: p.color,
            depth: p.depth,
            decay: (-p.conic[0]).exp(),
        }
    }

    /// `exp(power)` at the pixel centers `px0, px0 + 1, …` of one row.
    ///
    /// The power is quadratic along the row, so consecutive values differ by
    /// a factor that itself changes by the constant `exp(-conic[0])`. Rows
    /// whose exponents could leave the normal range fall back to `exp`.
    #[inline]
    fn row_kernel(&self, px0: f64, py: f64, out: &mut [f64]) {
        let a = -0.5 * self.conic[0];
        let dx = px0 - self.mx;
        let dy = py - self.my;
        let b = -self.conic[1] * dy;
        let c = -0.5 * self.conic[2] * dy * dy;
        let p0 = (a * dx + b) * dx + c;
        let last = dx + (out.len() - 1) as f64;
        let p1 = (a * last + b) * last + c;
        let slope = 2.0 * a * dx + a + b;
        if p0 > -300.0 && p1 > -300.0 && slope.abs() < 300.0 && (2.0 * a * out.len() as f64).abs() < 300.0 {
            let mut g = p0.exp();
            let mut q = slope.exp();
            for o in out {
                *o = g;
                g *= q;
                q *= self.decay;
            }
        } else {
            for (k, o) in out.iter_mut().enumerate() {
                let d = dx + k as f64;
                *o = ((a * d + b) * d + c).exp();
            }
        }
    }
}

/// Whether some point of `rect = [x_lo, x_hi, y_lo, y_hi]` lies within the
/// footprint ellipse (Mahalanobis distance `FOOTPRINT_SIGMAS`) of `p`.
fn footprint_touches(p: &Projected, rect: [f64; 4]) -> bool {
    let [xl, xh, yl, yh] = rect;
    let (mx, my) = (p.mean2d[0], p.mean2d[1]);
    if (xl..=xh).contains(&mx) && (yl..=yh).contains(&my) {
        return true;
    }
    let [a, b, c] = p.conic;
    let d2 = |dx: f64, dy: f64| a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    let limit = FOOTPRINT_SIGMAS * FOOTPRINT_SIGMAS;
    // The minimum over the rectangle lies on an edge: minimize the quadratic
    // along each edge and clamp to the edge's extent.
    let vertical = [xl, xh].into_iter().any(|x| {
        let dx = x - mx;
        let y = (my - b * dx / c).clamp(yl, yh);
        d2(dx, y - my) <= limit
    });
    vertical
        || [yl, yh].into_iter().any(|y| {
            let dy = y - my;
            let x = (mx - b * dy / a).clamp(xl, xh);
            d2(x - mx, dy) <= limit
        })
}

struct Tile {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Gaussian indices, front to back.
    ids: Vec<u32>,
    splats: Vec<Splat>,
    /// Entries composited at each pixel before the transmittance cutoff.
    n_contrib: Vec<u32>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardContext {
    projected: Vec<Option<Projected>>,
    tiles: Vec<Tile>,
    width: usize,
    height: usize,
    tile_size: usize,
    tiles_x: usize,
    background: [f64; 3],
}

/// Compositing record for one pixel: `(gaussian index, alpha, transmittance before it)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelTrace {
    pub entries: Vec<(usize, f64, f64)>,
    pub final_transmittance: f64,
}

pub fn rasterize(cloud: &GaussianCloud, pose: &CameraPose, config: &RasterConfig) -> Result<RenderedImage> {
    rasterize_forward(cloud, pose, config).map(|(img, _)| img)
}

pub fn rasterize_forward(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    config: &RasterConfig,
) -> Result<(RenderedImage, ForwardContext)> {
    if config.tile_size == 0 {
        return Err(Error::InvalidInput("tile_size must be >= 1".into()));
    }
    if !(config.near.is_finite() && config.near >= 0.0) {
        return Err(Error::InvalidInput("near must be finite and >= 0".into()));
    }
    let k = pose.intrinsics();
    let (width, height) = (k.width as usize, k.height as usize);
    let ts = config.tile_size;
    let tiles_x = width.div_ceil(ts);
    let tiles_y = height.div_ceil(ts);
    let degree = cloud.sh_degree();

    let projected: Vec<Option<Projected>> = cloud
        .gaussians()
        .par_iter()
        .map(|g| project_gaussian(g, degree, pose, config.near))
        .collect();

    let mut order: Vec<u32> = (0..projected.len() as u32)
        .filter(|&i| projected[i as usize].is_some())
        .collect();
    order.sort_by(|&a, &b| {
        let da = projected[a as usize].as_ref().map_or(0.0, |p| p.depth);
        let db = projected[b as usize].as_ref().map_or(0.0, |p| p.depth);
        da.total_cmp(&db).then(a.cmp(&b))
    });

    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &i in &order {
        let p = projected[i as usize].as_ref().expect("filtered");
        let span = |c: f64, n: usize| {
            let lo = ((c - p.radius) / ts as f64).floor().max(0.0) as usize;
            let hi = (((c + p.radius) / ts as f64).floor().max(0.0) as usize).min(n - 1);
            (lo, hi)
        };
        let (tx0, tx1) = span(p.mean2d[0], tiles_x);
        let (ty0, ty1) = span(p.mean2d[1], tiles_y);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let (x0, y0) = (tx * ts, ty * ts);
                let rect = [
                    x0 as f64 + 0.5,
                    ((x0 + ts).min(width) - 1) as f64 + 0.5,
                    y0 as f64 + 0.5,
                    ((y0 + ts).min(height) - 1) as f64 + 0.5,
                ];
                if footprint_touches(p, rect) {
                    bins[ty * tiles_x + tx].push(i);
                }
            }
        }
    }

    let bg = config.background;
    let results: Vec<(Tile, Vec<[f64; 5]>)> = bins
        .into_par_iter()
        .enumerate()
        .map(|(t, ids)| {
            let x0 = (t % tiles_x) * ts;
            let y0 = (t / tiles_x) * ts;
            let w = ts.min(width - x0);
            let h = ts.min(height - y0);
            let splats: Vec<Splat> = ids
                .iter()
                .map(|&i| Splat::new(projected[i as usize].as_ref().expect("binned")))
                .collect();
            let n = splats.len();
            let mut n_contrib = vec![0u32; w * h];
            // [r, g, b, transmittance, weighted depth]
            let mut out = vec![[0.0; 5]; w * h];
            let px0 = x0 as f64 + 0.5;
            let mut kbuf = vec![0.0; w];
            let mut trs = vec![1.0; w];
            let mut accs = vec![[0.0; 4]; w];
            // 1.0 while a pixel is still compositing, 0.0 after its cutoff.
            let mut live = vec![1.0; w];
            for ly in 0..h {
                let py = (y0 + ly) as f64 + 0.5;
                trs.fill(1.0);
                accs.fill([0.0; 4]);
                live.fill(1.0);
                let row = &mut n_contrib[ly * w..(ly + 1) * w];
                row.fill(n as u32);
                let mut alive = w;
                for (e, s) in splats.iter().enumerate() {
                    s.row_kernel(px0, py, &mut kbuf);
                    for lx in 0..w {
                        let alpha = (s.opacity * kbuf[lx]).min(MAX_ALPHA) * live[lx];
                        let wgt = alpha * trs[lx];
                        let acc = &mut accs[lx];
                        acc[0] += s.color[0] * wgt;
                        acc[1] += s.color[1] * wgt;
                        acc[2] += s.color[2] * wgt;
                        acc[3] += s.depth * wgt;
                        trs[lx] *= 1.0 - alpha;
                    }
                    for lx in 0..w {
                        if live[lx] == 1.0 && trs[lx] < MIN_TRANSMITTANCE {
                            live[lx] = 0.0;
                            row[lx] = (e + 1) as u32;
                            alive -= 1;
                        }
                    }
                    if alive == 0 {
                        break;
                    }
                }
                for lx in 0..w {
                    let (tr, acc) = (trs[lx], accs[lx]);
                    // The sum is a convex combination; the clamp only absorbs rounding.
                    let mix = |c: usize| (acc[c] + tr * bg[c]).clamp(0.0, 1.0);
                    out[ly * w + lx] = [
                        mix(0),
                        mix(1),
                        mix(2),
                        tr,
                        acc[3],
                    ];
                }
            }
            (
                Tile {
                    x0,
                    y0,
                    w,
                    h,
                    ids,
                    splats,
                    n_contrib,
                },
                out,
            )
        })
        .collect();

    let mut rgb = ImageRgb::new(width, height);
    let mut depth = vec![f64::INFINITY; width * height];
    let mut mask = vec![false; width * height];
    let mut tiles = Vec::with_capacity(results.len());
    {
        let data = rgb.as_mut_slice();
        for (tile, out) in results {
            for ly in 0..tile.h {
                for lx in 0..tile.w {
                    let o = out[ly * tile.w + lx];
                    let i = (tile.y0 + ly) * width + tile.x0 + lx;
                    data[i * 3..i * 3 + 3].copy_from_slice(&o[..3]);
                    let cover = 1.0 - o[3];
                    if cover > MASK_THRESHOLD {
                        mask[i] = true;
                        depth[i] = o[4] / cover;
                    }
                }
            }
            tiles.push(tile);
        }
    }
    let ctx = ForwardContext {
        projected,
        tiles,
        width,
        height,
        tile_size: ts,
        tiles_x,
        background: bg,
    };
    Ok((RenderedImage { rgb, depth, mask }, ctx))
}

/// Gradient of a scalar loss with respect to every Gaussian parameter, given
/// `upstream = dLoss/dPixel` for the image produced by `rasterize_forward`.
pub fn rasterize_backward(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    ctx: &ForwardContext,
    upstream: &ImageRgb,
) -> Result<GradientBuffer> {
    if upstream.width() != ctx.width || upstream.height() != ctx.height {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient is {}x{}, render is {}x{}",
            upstream.width(),
            upstream.height(),
            ctx.width,
            ctx.height
        )));
    }
    if ctx.projected.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "context holds {} Gaussians, cloud has {}",
            ctx.projected.len(),
            cloud.len()
        )));
    }
    let up = upstream.as_slice();
    let bg = ctx.background;
    let width = ctx.width;

    let per_tile: Vec<Vec<ScreenGrad>> = ctx
        .tiles
        .par_iter()
        .map(|tile| {
            let n = tile.ids.len();
            let mut local = vec![ScreenGrad::default(); n];
            if n == 0 {
                return local;
            }
            let w = tile.w;
            let mut kall = vec![0.0; n * w];
            let mut tbuf = vec![0.0; n * w];
            let mut tr = vec![1.0; w];
            let mut rest = vec![bg; w];
            let mut grow = vec![[0.0; 3]; w];
            let px0 = tile.x0 as f64 + 0.5;
            for ly in 0..tile.h {
                let py = (tile.y0 + ly) as f64 + 0.5;
                let used = &tile.n_contrib[ly * w..(ly + 1) * w];
                for (lx, g) in grow.iter_mut().enumerate() {
                    let gi = ((tile.y0 + ly) * width + tile.x0 + lx) * 3;
                    *g = [up[gi], up[gi + 1], up[gi + 2]];
                }
                let row_used = (0..w)
                    .filter(|&lx| grow[lx] != [0.0; 3])
                    .map(|lx| used[lx])
                    .max()
                    .unwrap_or(0) as usize;
                if row_used == 0 {
                    continue;
                }
                // Transmittance in front of every entry, swept across the row.
                tr.fill(1.0);
                for (e, s) in tile.splats[..row_used].iter().enumerate() {
                    let k = &mut kall[e * w..(e + 1) * w];
                    s.row_kernel(px0, py, k);
                    let t = &mut tbuf[e * w..(e + 1) * w];
                    for ((t, tr), k) in t.iter_mut().zip(tr.iter_mut()).zip(k.iter()) {
                        *t = *tr;
                        *tr *= 1.0 - (s.opacity * k).min(MAX_ALPHA);
                    }
                }
                // `rest` is the color of everything behind the current entry,
                // normalized by its transmittance.
                rest.fill(bg);
                let dy = py;
                for e in (0..row_used).rev() {
                    let s = &tile.splats[e];
                    let k = &kall[e * w..(e + 1) * w];
                    let t = &tbuf[e * w..(e + 1) * w];
                    let [mut c0, mut c1, mut c2, mut op, mut p0, mut p1, mut p2] = [0.0; 7];
                    for lx in 0..w {
                        if e >= used[lx] as usize {
                            continue;
                        }
                        let g = grow[lx];
                        let r = &mut rest[lx];
                        let gk = k[lx];
                        let raw = s.opacity * gk;
                        let alpha = raw.min(MAX_ALPHA);
                        let d_alpha =
                            t[lx] * (g[0] * (s.color[0] - r[0]) + g[1] * (s.color[1] - r[1]) + g[2] * (s.color[2] - r[2]));
                        let wgt = alpha * t[lx];
                        c0 += g[0] * wgt;
                        c1 += g[1] * wgt;
                        c2 += g[2] * wgt;
                        for (r, sc) in r.iter_mut().zip(s.color) {
                            *r = sc * alpha + (1.0 - alpha) * *r;
                        }
                        if raw < MAX_ALPHA {
                            op += d_alpha * gk;
                            let dp = d_alpha * alpha;
                            let dx = px0 + lx as f64 - s.mx;
                            p0 += dp;
                            p1 += dp * dx;
                            p2 += dp * dx * dx;
                        }
                    }
                    let dy = dy - s.my;
                    let acc = &mut local[e];
                    acc.color[0] += c0;
                    acc.color[1] += c1;
                    acc.color[2] += c2;
                    acc.opacity += op;
                    acc.mean2d[0] += s.conic[0] * p1 + s.conic[1] * dy * p0;
                    acc.mean2d[1] += s.conic[1] * p1 + s.conic[2] * dy * p0;
                    acc.conic[0] += -0.5 * p2;
                    acc.conic[1] += -dy * p1;
                    acc.conic[2] += -0.5 * dy * dy * p0;
                }
            }
            local
        })
        .collect();

    // Fixed tile order keeps the sum independent of scheduling.
    let mut screen = vec![ScreenGrad::default(); cloud.len()];
    for (tile, local) in ctx.tiles.iter().zip(&per_tile) {
        for (&id, g) in tile.ids.iter().zip(local) {
            screen[id as usize].add(g);
        }
    }

    let degree = cloud.sh_degree();
    let rows: Vec<[f64; super::gaussian::N_PARAMS]> = cloud
        .gaussians()
        .par_iter()
        .zip(ctx.projected.par_iter())
        .zip(screen.par_iter())
        .map(|((g, p), sg)| match p {
            Some(p) => project_backward(g, degree, pose, p, sg),
            None => [0.0; super::gaussian::N_PARAMS],
        })
        .collect();
    let mut out = GradientBuffer::zeros(cloud.len());
    for (i, r) in rows.into_iter().enumerate() {
        *out.get_mut(i) = r;
    }
    Ok(out)
}

impl ForwardContext {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of Gaussians that survived culling.
    pub fn visible_count(&self) -> usize {
        self.projected.iter().filter(|p| p.is_some()).count()
    }

    pub fn projected(&self, index: usize) -> Option<&Projected> {
        self.projected.get(index).and_then(Option::as_ref)
    }

    /// The compositing sequence at pixel `(x, y)`.
    pub fn trace_pixel(&self, x: usize, y: usize) -> PixelTrace {
        let tile = &self.tiles[(y / self.tile_size) * self.tiles_x + x / self.tile_size];
        let pix = (y - tile.y0) * tile.w + (x - tile.x0);
        let used = tile.n_contrib[pix] as usize;
        let py = y as f64 + 0.5;
        let mut row = vec![0.0; tile.w];
        let mut tr = 1.0;
        let mut entries = Vec::with_capacity(used);
        for e in 0..used {
            let s = &tile.splats[e];
            s.row_kernel(tile.x0 as f64 + 0.5, py, &mut row);
            let alpha = (s.opacity * row[x - tile.x0]).min(MAX_ALPHA);
            entries.push((tile.ids[e] as usize, alpha, tr));
            tr *= 1.0 - alpha;
        }
        PixelTrace {
            entries,
            final_transmittance: tr,
        }
    }
}
