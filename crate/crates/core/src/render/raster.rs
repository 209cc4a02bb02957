//! Tile-based front-to-back alpha compositing with an exact backward pass.
//!
//! The screen is cut into 16x16 tiles. Every splat is binned into each tile
//! its alpha-support box overlaps, each tile list is sorted by depth (ties by
//! source index) and pixels blend independently:
//!
//! ```text
//! C = Σ cᵢ αᵢ Tᵢ + T_N · background,    Tᵢ = Π_{j<i} (1 − αⱼ)
//! ```
//!
//! Tiles are processed in parallel and results are gathered in tile order,
//! so output does not depend on the worker count.

use rayon::prelude::*;

use crate::render::project::{Splat2D, SplatGrad};

pub const TILE_SIZE: usize = 16;
pub const ALPHA_MAX: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

/// Per-tile sorted splat lists.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBins {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// `[start, end)` into `entries` per tile, row-major over tiles.
    pub ranges: Vec<[u32; 2]>,
    /// Splat indices.
    pub entries: Vec<u32>,
}

impl TileBins {
    pub fn tile(&self, t: usize) -> &[u32] {
        let [a, b] = self.ranges[t];
        &self.entries[a as usize..b as usize]
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }
}

/// What the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendRecords {
    pub width: usize,
    pub height: usize,
    pub bins: TileBins,
    /// Per pixel: number of tile-list entries scanned up to and including
    /// the last one that was blended.
    pub contributors: Vec<u32>,
    /// Per pixel transmittance after the last blended splat.
    pub transmittance: Vec<f64>,
}

/// Alpha of splat `s` at pixel center `(px, py)` together with the unclamped
/// Gaussian falloff, or `None` when below [`MIN_ALPHA`].
#[inline]
pub(crate) fn pixel_alpha(s: &Splat2D, px: f64, py: f64) -> Option<(f64, f64, f64, f64)> {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let power = 0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) + s.conic[1] * dx * dy;
    if power < 0.0 {
        return None;
    }
    let falloff = (-power).exp();
    let alpha = (s.alpha_base * falloff).min(ALPHA_MAX);
    if alpha < MIN_ALPHA {
        return None;
    }
    Some((alpha, falloff, dx, dy))
}

fn tile_rect(s: &Splat2D, width: usize, height: usize) -> Option<[usize; 4]> {
    // Pixel centers sit at i + 0.5; pad one pixel.
    let x0 = (s.mean[0] - s.extent[0] - 1.5).floor().max(0.0);
    let x1 = (s.mean[0] + s.extent[0] + 0.5).ceil().min(width as f64 - 1.0);
    let y0 = (s.mean[1] - s.extent[1] - 1.5).floor().max(0.0);
    let y1 = (s.mean[1] + s.extent[1] + 0.5).ceil().min(height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some([
        x0 as usize / TILE_SIZE,
        x1 as usize / TILE_SIZE,
        y0 as usize / TILE_SIZE,
        y1 as usize / TILE_SIZE,
    ])
}

pub fn bin_splats(splats: &[Splat2D], width: usize, height: usize) -> TileBins {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let rects: Vec<Option<[usize; 4]>> =
        splats.par_iter().map(|s| tile_rect(s, width, height)).collect();

    let mut counts = vec![0u32; tiles_x * tiles_y];
    for r in rects.iter().flatten() {
        for ty in r[2]..=r[3] {
            for tx in r[0]..=r[1] {
                counts[ty * tiles_x + tx] += 1;
            }
        }
    }
    let mut ranges = Vec::with_capacity(counts.len());
    let mut start = 0u32;
    for &c in &counts {
        ranges.push([start, start + c]);
        start += c;
    }
    let mut cursor: Vec<u32> = ranges.iter().map(|r| r[0]).collect();
    let mut entries = vec![0u32; start as usize];
    for (i, r) in rects.iter().enumerate() {
        if let Some(r) = r {
            for ty in r[2]..=r[3] {
                for tx in r[0]..=r[1] {
                    let t = ty * tiles_x + tx;
                    entries[cursor[t] as usize] = i as u32;
                    cursor[t] += 1;
                }
            }
        }
    }

    // Sort every tile list by (depth, source index, splat index).
    let mut slices: Vec<&mut [u32]> = Vec::with_capacity(ranges.len());
    let mut rest: &mut [u32] = &mut entries;
    for r in &ranges {
        let (head, tail) = rest.split_at_mut((r[1] - r[0]) as usize);
        slices.push(head);
        rest = tail;
    }
    slices.into_par_iter().for_each(|list| {
        list.sort_unstable_by(|&a, &b| {
            let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
            sa.depth
                .total_cmp(&sb.depth)
                .then(sa.source_index.cmp(&sb.source_index))
                .then(a.cmp(&b))
        })
    });

    TileBins { tiles_x, tiles_y, ranges, entries }
}

fn tile_pixels(t: usize, bins: &TileBins, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let tx = t % bins.tiles_x;
    let ty = t / bins.tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    (x0, (x0 + TILE_SIZE).min(width), y0, (y0 + TILE_SIZE).min(height))
}

struct TileOutput<const C: usize> {
    values: Vec<[f64; C]>,
    contributors: Vec<u32>,
    transmittance: Vec<f64>,
}

/// Blends `features[i]` (color or flow) of every splat over `background`.
/// Returns the interleaved image buffer and the records for the backward pass.
pub fn rasterize<const C: usize>(
    splats: &[Splat2D],
    features: &[[f64; C]],
    background: [f64; C],
    width: usize,
    height: usize,
) -> (Vec<f64>, BlendRecords) {
    assert_eq!(splats.len(), features.len());
    let bins = bin_splats(splats, width, height);
    let outputs: Vec<TileOutput<C>> = (0..bins.tile_count())
        .into_par_iter()
        .map(|t| {
            let (x0, x1, y0, y1) = tile_pixels(t, &bins, width, height);
            let list = bins.tile(t);
            let n = (x1 - x0) * (y1 - y0);
            let mut out = TileOutput {
                values: Vec::with_capacity(n),
                contributors: Vec::with_capacity(n),
                transmittance: Vec::with_capacity(n),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut acc = [0.0; C];
                    let mut trans = 1.0;
                    let mut last = 0u32;
                    for (k, &si) in list.iter().enumerate() {
                        let s = &splats[si as usize];
                        let Some((alpha, ..)) = pixel_alpha(s, px, py) else {
                            continue;
                        };
                        let next = trans * (1.0 - alpha);
                        if next < MIN_TRANSMITTANCE {
                            break;
                        }
                        let w = alpha * trans;
                        let f = &features[si as usize];
                        for ch in 0..C {
                            acc[ch] += f[ch] * w;
                        }
                        trans = next;
                        last = k as u32 + 1;
                    }
                    for ch in 0..C {
                        acc[ch] += trans * background[ch];
                    }
                    out.values.push(acc);
                    out.contributors.push(last);
                    out.transmittance.push(trans);
                }
            }
            out
        })
        .collect();

    let mut data = vec![0.0; width * height * C];
    let mut contributors = vec![0u32; width * height];
    let mut transmittance = vec![0.0; width * height];
    for (t, out) in outputs.iter().enumerate() {
        let (x0, x1, y0, y1) = tile_pixels(t, &bins, width, height);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = y * width + x;
                data[p * C..p * C + C].copy_from_slice(&out.values[k]);
                contributors[p] = out.contributors[k];
                transmittance[p] = out.transmittance[k];
                k += 1;
            }
        }
    }
    let records = BlendRecords { width, height, bins, contributors, transmittance };
    (data, records)
}

/// Replays every pixel back to front and returns per-splat gradients of a
/// scalar loss given its gradient with respect to the RGB image.
pub fn rasterize_backward(
    splats: &[Splat2D],
    records: &BlendRecords,
    background: [f64; 3],
    d_image: &[f64],
) -> Vec<SplatGrad> {
    let (width, height) = (records.width, records.height);
    assert_eq!(d_image.len(), width * height * 3);
    let bins = &records.bins;
    let partials: Vec<Vec<SplatGrad>> = (0..bins.tile_count())
        .into_par_iter()
        .map(|t| {
            let (x0, x1, y0, y1) = tile_pixels(t, bins, width, height);
            let list = bins.tile(t);
            let mut grads = vec![SplatGrad::default(); list.len()];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * width + x;
                    let d_pix = [d_image[3 * p], d_image[3 * p + 1], d_image[3 * p + 2]];
                    if d_pix == [0.0; 3] {
                        continue;
                    }
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut trans = records.transmittance[p];
                    let mut behind = background;
                    for k in (0..records.contributors[p] as usize).rev() {
                        let s = &splats[list[k] as usize];
                        let Some((alpha, falloff, dx, dy)) = pixel_alpha(s, px, py) else {
                            continue;
                        };
                        trans /= 1.0 - alpha;
                        let g = &mut grads[k];
                        let w = alpha * trans;
                        let mut d_alpha = 0.0;
                        for ch in 0..3 {
                            g.color[ch] += w * d_pix[ch];
                            d_alpha += (s.color[ch] - behind[ch]) * d_pix[ch];
                            behind[ch] = alpha * s.color[ch] + (1.0 - alpha) * behind[ch];
                        }
                        d_alpha *= trans;
                        if s.alpha_base * falloff >= ALPHA_MAX {
                            continue;
                        }
                        g.alpha_base += falloff * d_alpha;
                        let d_power = -s.alpha_base * falloff * d_alpha;
                        g.conic[0] += d_power * 0.5 * dx * dx;
                        g.conic[1] += d_power * dx * dy;
                        g.conic[2] += d_power * 0.5 * dy * dy;
                        let d_dx = d_power * (s.conic[0] * dx + s.conic[1] * dy);
                        let d_dy = d_power * (s.conic[1] * dx + s.conic[2] * dy);
                        g.mean[0] -= d_dx;
                        g.mean[1] -= d_dy;
                    }
                }
            }
            grads
        })
        .collect();

    let mut out = vec![SplatGrad::default(); splats.len()];
    for (t, grads) in partials.iter().enumerate() {
        for (k, &si) in bins.tile(t).iter().enumerate() {
            out[si as usize].add(&grads[k]);
        }
    }
    out
}

/// Blend weights `αᵢ Tᵢ` at one pixel as `(splat index, weight)`, plus the
/// transmittance left for the background.
pub fn pixel_weights(
    splats: &[Splat2D],
    records: &BlendRecords,
    x: usize,
    y: usize,
) -> (Vec<(usize, f64)>, f64) {
    let bins = &records.bins;
    let t = (y / TILE_SIZE) * bins.tiles_x + x / TILE_SIZE;
    let list = bins.tile(t);
    let p = y * records.width + x;
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut trans = 1.0;
    let mut out = Vec::new();
    for &si in &list[..records.contributors[p] as usize] {
        if let Some((alpha, ..)) = pixel_alpha(&splats[si as usize], px, py) {
            out.push((si as usize, alpha * trans));
            trans *= 1.0 - alpha;
        }
    }
    (out, trans)
}

/// Single-loop renderer over all splats, without tiles. Slow; used to check
/// the tiled path.
pub fn rasterize_reference<const C: usize>(
    splats: &[Splat2D],
    features: &[[f64; C]],
    background: [f64; C],
    width: usize,
    height: usize,
) -> Vec<f64> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then(splats[a].source_index.cmp(&splats[b].source_index))
            .then(a.cmp(&b))
    });
    let mut data = vec![0.0; width * height * C];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut trans = 1.0;
            let mut acc = [0.0; C];
            for &i in &order {
                let s = &splats[i];
                let dx = px - s.mean[0];
                let dy = py - s.mean[1];
                let power =
                    0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) + s.conic[1] * dx * dy;
                if power < 0.0 {
                    continue;
                }
                let alpha = (s.alpha_base * (-power).exp()).min(ALPHA_MAX);
                if alpha < MIN_ALPHA {
                    continue;
                }
                if trans * (1.0 - alpha) < MIN_TRANSMITTANCE {
                    break;
                }
                for ch in 0..C {
                    acc[ch] += features[i][ch] * alpha * trans;
                }
                trans *= 1.0 - alpha;
            }
            let p = (y * width + x) * C;
            for ch in 0..C {
                data[p + ch] = acc[ch] + trans * background[ch];
            }
        }
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splat(mean: [f64; 2], sigma: f64, alpha: f64, depth: f64, color: [f64; 3], idx: usize) -> Splat2D {
        let inv = 1.0 / (sigma * sigma);
        let reach = (2.0 * (alpha / MIN_ALPHA).ln().max(0.0)).sqrt();
        Splat2D {
            mean,
            conic: [inv, 0.0, inv],
            depth,
            color,
            alpha_base: alpha,
            flow: [0.0; 2],
            source_index: idx,
            extent: [reach * sigma, reach * sigma],
        }
    }

    fn render(splats: &[Splat2D], bg: [f64; 3], w: usize, h: usize) -> Vec<f64> {
        let colors: Vec<[f64; 3]> = splats.iter().map(|s| s.color).collect();
        rasterize(splats, &colors, bg, w, h).0
    }

    #[test]
    fn empty_scene_is_background() {
        let img = render(&[], [0.1, 0.2, 0.3], 20, 17);
        for px in img.chunks(3) {
            assert_eq!(px, [0.1, 0.2, 0.3]);
        }
    }

    #[test]
    fn single_clamped_splat() {
        let s = splat([4.5, 4.5], 1.0, 0.999, 1.0, [1.0, 0.5, 0.0], 0);
        let img = render(&[s], [0.0, 0.0, 1.0], 9, 9);
        let p = &img[(4 * 9 + 4) * 3..(4 * 9 + 4) * 3 + 3];
        assert!((p[0] - 0.99).abs() < 1e-12);
        assert!((p[1] - 0.495).abs() < 1e-12);
        assert!((p[2] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn two_coincident_half_splats() {
        let front = splat([2.5, 2.5], 1e3, 0.5, 1.0, [1.0, 0.0, 0.0], 0);
        let back = splat([2.5, 2.5], 1e3, 0.5, 2.0, [0.0, 1.0, 0.0], 1);
        // Submission order must not matter.
        let img = render(&[back, front], [0.0, 0.0, 1.0], 5, 5);
        let p = &img[(2 * 5 + 2) * 3..(2 * 5 + 2) * 3 + 3];
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((p[1] - 0.25).abs() < 1e-9);
        assert!((p[2] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn tiled_matches_reference_across_tiles() {
        let splats: Vec<Splat2D> = (0..30)
            .map(|i| {
                let f = i as f64;
                splat(
                    [(f * 7.3) % 40.0, (f * 3.1) % 35.0],
                    1.0 + (f % 5.0),
                    0.2 + 0.7 * ((f * 0.37) % 1.0),
                    1.0 + (f * 0.61) % 3.0,
                    [(f * 0.1) % 1.0, 0.5, 1.0 - (f * 0.07) % 1.0],
                    i,
                )
            })
            .collect();
        let colors: Vec<[f64; 3]> = splats.iter().map(|s| s.color).collect();
        let tiled = rasterize(&splats, &colors, [0.2; 3], 40, 35).0;
        let reference = rasterize_reference(&splats, &colors, [0.2; 3], 40, 35);
        for (a, b) in tiled.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transparent_splat_gets_no_gradient() {
        let mut s = splat([4.5, 4.5], 2.0, 0.5, 1.0, [1.0, 0.0, 0.0], 0);
        let colors = vec![s.color];
        s.alpha_base = 0.0;
        let (_, rec) = rasterize(&[s.clone()], &colors, [0.0; 3], 9, 9);
        let grads = rasterize_backward(&[s], &rec, [0.0; 3], &vec![1.0; 9 * 9 * 3]);
        assert_eq!(grads[0], SplatGrad::default());
    }
}
