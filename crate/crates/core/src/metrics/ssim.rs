//! Windowed SSIM over "valid" window positions and its gradient.

use crate::error::{Error, Result};
use crate::image::ImageRgb;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const C1: f64 = K1 * K1;
pub const C2: f64 = K2 * K2;

pub fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Single-channel plane with its dimensions.
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

fn channel(img: &ImageRgb, ch: usize) -> Plane {
    Plane {
        w: img.width(),
        h: img.height(),
        v: img.as_slice().iter().skip(ch).step_by(3).copied().collect(),
    }
}

/// Separable "valid" correlation with `k` along both axes.
fn filter_valid(p: &Plane, k: &[f64; WINDOW]) -> Plane {
    let ow = p.w + 1 - WINDOW;
    let oh = p.h + 1 - WINDOW;
    let mut tmp = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.v[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * row[x + i];
            }
            tmp[y * ow + x] = s;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (i, kv) in k.iter().enumerate() {
            let src = &tmp[(y + i) * ow..(y + i + 1) * ow];
            let dst = &mut out[y * ow..(y + 1) * ow];
            for x in 0..ow {
                dst[x] += kv * src[x];
            }
        }
    }
    Plane { w: ow, h: oh, v: out }
}

/// Adjoint of `filter_valid`: scatters a valid-sized map back to `w × h`.
fn filter_transpose(p: &Plane, k: &[f64; WINDOW], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; p.w * h];
    for y in 0..p.h {
        for (i, kv) in k.iter().enumerate() {
            let dst = &mut tmp[(y + i) * p.w..(y + i + 1) * p.w];
            let src = &p.v[y * p.w..(y + 1) * p.w];
            for x in 0..p.w {
                dst[x] += kv * src[x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let src = &tmp[y * p.w..(y + 1) * p.w];
        let dst = &mut out[y * w..(y + 1) * w];
        for x in 0..p.w {
            for (i, kv) in k.iter().enumerate() {
                dst[x + i] += kv * src[x];
            }
        }
    }
    out
}

fn check(x: &ImageRgb, y: &ImageRgb) -> Result<()> {
    x.same_dims(y)?;
    if x.width() < WINDOW || x.height() < WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs images of at least {WINDOW}x{WINDOW}, got {}x{}",
            x.width(),
            x.height()
        )));
    }
    Ok(())
}

struct Stats {
    mx: Plane,
    my: Plane,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

fn stats(x: &Plane, y: &Plane, k: &[f64; WINDOW]) -> Stats {
    let sq = |p: &Plane, q: &Plane| Plane {
        w: p.w,
        h: p.h,
        v: p.v.iter().zip(&q.v).map(|(a, b)| a * b).collect(),
    };
    let mx = filter_valid(x, k);
    let my = filter_valid(y, k);
    let exx = filter_valid(&sq(x, x), k);
    let eyy = filter_valid(&sq(y, y), k);
    let exy = filter_valid(&sq(x, y), k);
    let n = mx.v.len();
    let mut sxx = vec![0.0; n];
    let mut syy = vec![0.0; n];
    let mut sxy = vec![0.0; n];
    for i in 0..n {
        sxx[i] = exx.v[i] - mx.v[i] * mx.v[i];
        syy[i] = eyy.v[i] - my.v[i] * my.v[i];
        sxy[i] = exy.v[i] - mx.v[i] * my.v[i];
    }
    Stats { mx, my, sxx, syy, sxy }
}

/// Mean SSIM over valid window positions and the three channels.
pub fn ssim(x: &ImageRgb, y: &ImageRgb) -> Result<f64> {
    check(x, y)?;
    let k = gaussian_window();
    let mut total = 0.0;
    let mut count = 0;
    for ch in 0..3 {
        let s = stats(&channel(x, ch), &channel(y, ch), &k);
        for i in 0..s.mx.v.len() {
            let (mx, my) = (s.mx.v[i], s.my.v[i]);
            total += (2.0 * mx * my + C1) * (2.0 * s.sxy[i] + C2)
                / ((mx * mx + my * my + C1) * (s.sxx[i] + s.syy[i] + C2));
        }
        count += s.mx.v.len();
    }
    Ok(total / count as f64)
}

pub fn d_ssim(x: &ImageRgb, y: &ImageRgb) -> Result<f64> {
    Ok(1.0 - ssim(x, y)?)
}

/// SSIM and its gradient with respect to `y`.
pub fn ssim_and_grad(x: &ImageRgb, y: &ImageRgb) -> Result<(f64, ImageRgb)> {
    check(x, y)?;
    let (w, h) = (x.width(), x.height());
    let k = gaussian_window();
    let mut grad = vec![0.0; w * h * 3];
    let mut total = 0.0;
    let mut count = 0;
    let mut planes = Vec::with_capacity(3);
    for ch in 0..3 {
        let (xp, yp) = (channel(x, ch), channel(y, ch));
        let s = stats(&xp, &yp, &k);
        let n = s.mx.v.len();
        let (ow, oh) = (s.mx.w, s.mx.h);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        for i in 0..n {
            let (mx, my) = (s.mx.v[i], s.my.v[i]);
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * s.sxy[i] + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = s.sxx[i] + s.syy[i] + C2;
            total += a1 * a2 / (b1 * b2);
            let d_mu = 2.0 * mx * a2 / (b1 * b2) - a1 * a2 * 2.0 * my / (b1 * b1 * b2);
            let d_var = -a1 * a2 / (b1 * b2 * b2);
            let d_cov = 2.0 * a1 / (b1 * b2);
            a[i] = d_mu - 2.0 * my * d_var - mx * d_cov;
            b[i] = d_var;
            c[i] = d_cov;
        }
        count += n;
        let pa = filter_transpose(&Plane { w: ow, h: oh, v: a }, &k, w, h);
        let pb = filter_transpose(&Plane { w: ow, h: oh, v: b }, &k, w, h);
        let pc = filter_transpose(&Plane { w: ow, h: oh, v: c }, &k, w, h);
        planes.push((pa, pb, pc, xp, yp));
    }
    let inv = 1.0 / count as f64;
    for (ch, (pa, pb, pc, xp, yp)) in planes.into_iter().enumerate() {
        for i in 0..w * h {
            grad[i * 3 + ch] = (pa[i] + 2.0 * yp.v[i] * pb[i] + xp.v[i] * pc[i]) * inv;
        }
    }
    Ok((total * inv, ImageRgb::from_vec(w, h, grad)?))
}
