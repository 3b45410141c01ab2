use crate::error::Result;
use crate::image::ImageRgb;

/// A structural image distance used as the perceptual loss term.
///
/// Implementations must return 0 for identical inputs. `distance_and_grad`
/// differentiates with respect to the first argument.
pub trait PerceptualMetric: Send + Sync {
    /// `"proxy"` for the built-in metric, `"external"` for anything else.
    fn kind(&self) -> &'static str;
    fn distance(&self, rendered: &ImageRgb, target: &ImageRgb) -> Result<f64>;
    fn distance_and_grad(&self, rendered: &ImageRgb, target: &ImageRgb) -> Result<(f64, ImageRgb)>;
}

/// Mean absolute difference of finite-difference image gradients over a
/// dyadic pyramid (2×2 box downsampling). Values lie in `[0, 2]`.
///
/// Only image structure is compared: two constant images are at distance 0
/// whatever their colors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientPyramid {
    pub levels: usize,
}

impl Default for GradientPyramid {
    fn default() -> Self {
        GradientPyramid { levels: 3 }
    }
}

#[derive(Clone)]
struct Level {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

fn downsample(l: &Level) -> Level {
    let (w, h) = (l.w / 2, l.h / 2);
    let mut v = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let at = |xx: usize, yy: usize| l.v[(yy * l.w + xx) * 3 + c];
                v[(y * w + x) * 3 + c] =
                    0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
            }
        }
    }
    Level { w, h, v }
}

fn upsample_grad(g: &Level, w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h * 3];
    for y in 0..g.h {
        for x in 0..g.w {
            for c in 0..3 {
                let v = 0.25 * g.v[(y * g.w + x) * 3 + c];
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    out[((2 * y + dy) * w + 2 * x + dx) * 3 + c] += v;
                }
            }
        }
    }
    out
}

impl GradientPyramid {
    fn pyramid(&self, img: &ImageRgb) -> Vec<Level> {
        let mut levels = vec![Level {
            w: img.width(),
            h: img.height(),
            v: img.as_slice().to_vec(),
        }];
        while levels.len() < self.levels.max(1) {
            let last = levels.last().expect("non-empty");
            if last.w < 4 || last.h < 4 {
                break;
            }
            levels.push(downsample(last));
        }
        levels
    }

    /// Value of one level and, optionally, its gradient with respect to `a`.
    fn level(a: &Level, b: &Level, grad: Option<&mut Vec<f64>>) -> f64 {
        let (w, h) = (a.w, a.h);
        let n = (w.saturating_sub(1) * h + w * h.saturating_sub(1)) * 3;
        if n == 0 {
            return 0.0;
        }
        let inv = 1.0 / n as f64;
        let mut sum = 0.0;
        let mut g = grad;
        let mut term = |i0: usize, i1: usize, g: &mut Option<&mut Vec<f64>>| {
            let d = (a.v[i1] - a.v[i0]) - (b.v[i1] - b.v[i0]);
            sum += d.abs();
            if let Some(g) = g.as_deref_mut() {
                let s = if d > 0.0 {
                    inv
                } else if d < 0.0 {
                    -inv
                } else {
                    0.0
                };
                g[i1] += s;
                g[i0] -= s;
            }
        };
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let i = (y * w + x) * 3 + c;
                    if x + 1 < w {
                        term(i, i + 3, &mut g);
                    }
                    if y + 1 < h {
                        term(i, i + 3 * w, &mut g);
                    }
                }
            }
        }
        sum * inv
    }
}

impl PerceptualMetric for GradientPyramid {
    fn kind(&self) -> &'static str {
        "proxy"
    }

    fn distance(&self, rendered: &ImageRgb, target: &ImageRgb) -> Result<f64> {
        rendered.same_dims(target)?;
        let (pa, pb) = (self.pyramid(rendered), self.pyramid(target));
        let total: f64 = pa.iter().zip(&pb).map(|(a, b)| Self::level(a, b, None)).sum();
        Ok(total / pa.len() as f64)
    }

    fn distance_and_grad(&self, rendered: &ImageRgb, target: &ImageRgb) -> Result<(f64, ImageRgb)> {
        rendered.same_dims(target)?;
        let (pa, pb) = (self.pyramid(rendered), self.pyramid(target));
        let nl = pa.len() as f64;
        let mut total = 0.0;
        let mut carried: Option<Vec<f64>> = None;
        // Walk coarse to fine, pushing each level's gradient down one level.
        for l in (0..pa.len()).rev() {
            let mut g = match carried.take() {
                Some(c) => c,
                None => vec![0.0; pa[l].v.len()],
            };
            let mut own = vec![0.0; pa[l].v.len()];
            total += Self::level(&pa[l], &pb[l], Some(&mut own));
            for (gv, ov) in g.iter_mut().zip(&own) {
                *gv += ov / nl;
            }
            if l > 0 {
                let coarse = Level { w: pa[l].w, h: pa[l].h, v: g };
                carried = Some(upsample_grad(&coarse, pa[l - 1].w, pa[l - 1].h));
            } else {
                carried = Some(g);
            }
        }
        let grad = carried.expect("at least one level");
        Ok((total / nl, ImageRgb::from_vec(rendered.width(), rendered.height(), grad)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(seed: u64, w: usize, h: usize) -> ImageRgb {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageRgb::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn identical_is_zero() {
        let x = random(1, 13, 9);
        assert_eq!(GradientPyramid::default().distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn constant_images_are_indistinguishable() {
        let a = ImageRgb::filled(8, 8, [0.1; 3]);
        let b = ImageRgb::filled(8, 8, [0.9, 0.5, 0.2]);
        assert_eq!(GradientPyramid::default().distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn edge_versus_blur_is_positive() {
        let edge = ImageRgb::from_fn(8, 8, |x, _| [if x < 4 { 0.0 } else { 1.0 }; 3]);
        let blur = ImageRgb::from_fn(8, 8, |x, _| {
            let v = match x {
                0..=2 => 0.0,
                3 => 1.0 / 3.0,
                4 => 2.0 / 3.0,
                _ => 1.0,
            };
            [v; 3]
        });
        let d = GradientPyramid::default().distance(&edge, &blur).unwrap();
        assert!(d > 0.0);
        // Level 0 alone: per row the x-gradients differ by 1/3, 2/3 and 1/3.
        let level0 = (8.0 * (1.0 / 3.0 + 2.0 / 3.0 + 1.0 / 3.0) * 3.0) / ((7 * 8 + 8 * 7) * 3) as f64;
        assert!(d > level0 / 3.0 - 1e-12);
    }

    #[test]
    fn bounded_by_two() {
        let a = ImageRgb::from_fn(16, 16, |x, y| [((x + y) % 2) as f64; 3]);
        let b = ImageRgb::from_fn(16, 16, |x, y| [((x + y + 1) % 2) as f64; 3]);
        let d = GradientPyramid::default().distance(&a, &b).unwrap();
        assert!(d <= 2.0 && d > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = (random(3, 12, 10), random(4, 12, 10));
        let m = GradientPyramid::default();
        let (_, g) = m.distance_and_grad(&x, &y).unwrap();
        let h = 1e-7;
        for idx in [0, 5, 33, 101, 200, 359] {
            let mut xp = x.clone();
            xp.as_mut_slice()[idx] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[idx] -= h;
            let num = (m.distance(&xp, &y).unwrap() - m.distance(&xm, &y).unwrap()) / (2.0 * h);
            assert!((num - g.as_slice()[idx]).abs() < 1e-6, "{idx}: {num} vs {}", g.as_slice()[idx]);
        }
    }
}
