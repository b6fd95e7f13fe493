//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use ghostkit::gilm::{LatentMode, ModelSpec};
use ghostkit::metrics::{SSIM_C1, SSIM_C2};
use ghostkit::{Image2D, PatternStack};

pub fn reference_sum(terms: &[f64], lo: usize, hi: usize) -> f64 {
    if hi - lo <= 8 {
        let mut s = 0.0;
        for t in &terms[lo..hi] {
            s += t;
        }
        s
    } else {
        let mid = lo + (hi - lo) / 2;
        reference_sum(terms, lo, mid) + reference_sum(terms, mid, hi)
    }
}

/// Triple loop over (pattern, row, column) forming the products, then the
/// mandated summation order.
pub fn naive_measure(object: &Image2D, patterns: &PatternStack) -> Vec<f64> {
    let (w, h) = (object.width(), object.height());
    let mut out = Vec::with_capacity(patterns.count());
    for i in 0..patterns.count() {
        let p = patterns.pattern(i);
        let mut terms = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                terms.push(p[y * w + x] * object.get(x, y));
            }
        }
        out.push(reference_sum(&terms, 0, terms.len()));
    }
    out
}

pub fn psnr_oracle(x: &Image2D, r: &Image2D) -> f64 {
    let mut s = 0.0;
    for y in 0..x.height() {
        for xx in 0..x.width() {
            s += (x.get(xx, y) - r.get(xx, y)).powi(2);
        }
    }
    -10.0 * (s / x.len() as f64).log10()
}

/// Windowed SSIM with two-pass (centred) local moments.
pub fn ssim_oracle(x: &Image2D, r: &Image2D) -> f64 {
    let k = 11usize;
    let sigma = 1.5f64;
    let mut g = [[0.0f64; 11]; 11];
    let mut z = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            z += *v;
        }
    }
    let (w, h) = (x.width(), x.height());
    let mut total = 0.0;
    let mut n = 0;
    for oy in 0..=h - k {
        for ox in 0..=w - k {
            let at = |img: &Image2D, i: usize, j: usize| img.get(ox + j, oy + i);
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    mx += g[i][j] / z * at(x, i, j);
                    my += g[i][j] / z * at(r, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (a, b) = (at(x, i, j) - mx, at(r, i, j) - my);
                    vx += g[i][j] / z * a * a;
                    vy += g[i][j] / z * b * b;
                    cxy += g[i][j] / z * a * b;
                }
            }
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            n += 1;
        }
    }
    total / n as f64
}

// Closed-form parameter counts.

pub fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

pub fn norm(c: usize) -> usize {
    2 * c
}

pub fn resnet(cin: usize, cout: usize) -> usize {
    norm(cin) + conv(cin, cout, 3) + norm(cout) + conv(cout, cout, 3) + if cin != cout { conv(cin, cout, 1) } else { 0 }
}

pub fn attention(c: usize, heads: usize) -> usize {
    let d = c / heads;
    // query and value with bias, key without, then the output map.
    heads * ((d * d + d) + d * d + (d * d + d)) + c * c + c
}

pub fn transformer(c: usize, heads: usize) -> usize {
    norm(c) + conv(c, c, 1) + attention(c, heads) + (c * 2 * c + 2 * c) + (2 * c * c + c) + conv(c, c, 1)
}

/// Per-layer sum for the encoder/bottleneck/decoder topology.
pub fn unet_audit(spec: &ModelSpec) -> usize {
    let w = &spec.widths;
    let heads = |l: usize| spec.attention_heads.get(l).copied().unwrap_or(0);
    let out_ch = match &spec.latent {
        LatentMode::Pixel => 1,
        LatentMode::Latent { channels, .. } => *channels,
    };
    let mut total = conv(spec.input_channels, w[0], 3);
    let mut ch = w[0];
    for l in 0..w.len() {
        for _ in 0..spec.blocks[l] {
            total += resnet(ch, w[l]);
            ch = w[l];
        }
        if heads(l) > 0 {
            total += transformer(w[l], heads(l));
        }
        if l + 1 < w.len() {
            total += conv(w[l], w[l], 3);
        }
    }
    let deep = *w.last().unwrap();
    total += resnet(deep, deep);
    if spec.mid_attention_heads > 0 {
        total += transformer(deep, spec.mid_attention_heads) + resnet(deep, deep);
    }
    let mut ch = deep;
    for l in (0..w.len()).rev() {
        if l + 1 < w.len() {
            total += conv(ch, w[l], 3);
            ch = w[l];
        }
        let mut cin = ch + w[l];
        for _ in 0..spec.blocks[l].max(1) {
            total += resnet(cin, w[l]);
            cin = w[l];
        }
        ch = w[l];
        if heads(l) > 0 {
            total += transformer(w[l], heads(l));
        }
    }
    total += norm(w[0]) + conv(w[0], out_ch, 3);
    if let LatentMode::Latent { channels, decoder_widths, .. } = &spec.latent {
        let mut prev = *channels;
        for &dw in decoder_widths {
            total += conv(prev, dw, 3);
            prev = dw;
        }
        total += conv(prev, 1, 3);
    }
    total
}
