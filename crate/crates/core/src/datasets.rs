//! Image datasets as measures: augmentation and instance selection
//! operators, plus a scan harness that measures how each intervention
//! moves the sample-cloud spectral gap.
//!
//! Images are `(n, channels, height, width)` tensors with intensities
//! in `[0, 1]`. Every augmentation draws one strength per item from
//! `U[0, lambda]`, so `lambda` caps the distortion; `lambda = 0` is a
//! bit-exact identity for every kind. Instance selection ranks items
//! by Gaussian likelihood in a feature space and keeps the most
//! typical fraction.

use ndarray::{Array2, Array4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::SampleSet;
use crate::poincare::{estimate_graph, GraphEstimatorConfig};
use crate::seeds;

/// A stack of same-shape images with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensorSet {
    data: Array4<f32>,
}

impl ImageTensorSet {
    pub fn new(data: Array4<f32>) -> Result<Self> {
        let (n, c, h, w) = data.dim();
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("image stack has an empty dimension"));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid(
                "image intensities must be finite and within [0, 1]",
            ));
        }
        Ok(ImageTensorSet { data })
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.dim().0
    }

    pub fn shape4(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    /// Gather a subset of items, preserving the given order.
    pub fn select(&self, idx: &[usize]) -> Result<ImageTensorSet> {
        let (n, c, h, w) = self.data.dim();
        if idx.is_empty() {
            return Err(Error::invalid("selection keeps no items"));
        }
        let mut out = Array4::<f32>::zeros((idx.len(), c, h, w));
        for (row, &i) in idx.iter().enumerate() {
            if i >= n {
                return Err(Error::invalid(format!("index {i} out of range")));
            }
            out.index_axis_mut(ndarray::Axis(0), row)
                .assign(&self.data.index_axis(ndarray::Axis(0), i));
        }
        Ok(ImageTensorSet { data: out })
    }

    /// Flattened pixel coordinates as a sample cloud, one point per
    /// image.
    pub fn flatten_features(&self) -> SampleSet {
        let (n, c, h, w) = self.data.dim();
        let d = c * h * w;
        let mut pts = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let mut col = 0usize;
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        pts[(i, col)] = self.data[(i, ch, y, x)] as f64;
                        col += 1;
                    }
                }
            }
        }
        SampleSet::new(pts).expect("validated tensor flattens to finite points")
    }
}

/// The augmentation families the scan knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationKind {
    Translation,
    ZoomIn,
    ZoomOut,
    Cutout,
    Brightness,
    ColorShift,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 6] = [
        AugmentationKind::Translation,
        AugmentationKind::ZoomIn,
        AugmentationKind::ZoomOut,
        AugmentationKind::Cutout,
        AugmentationKind::Brightness,
        AugmentationKind::ColorShift,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentationKind::Translation => "translation",
            AugmentationKind::ZoomIn => "zoomin",
            AugmentationKind::ZoomOut => "zoomout",
            AugmentationKind::Cutout => "cutout",
            AugmentationKind::Brightness => "brightness",
            AugmentationKind::ColorShift => "colorshift",
        }
    }
}

impl std::fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AugmentationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "translation" => Ok(AugmentationKind::Translation),
            "zoomin" => Ok(AugmentationKind::ZoomIn),
            "zoomout" => Ok(AugmentationKind::ZoomOut),
            "cutout" => Ok(AugmentationKind::Cutout),
            "brightness" => Ok(AugmentationKind::Brightness),
            "colorshift" => Ok(AugmentationKind::ColorShift),
            _ => Err(Error::UnknownKind { name: s.into() }),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AugmentationConfig {
    pub kind: AugmentationKind,
    /// Strength cap in `[0, 1]`; per-item strengths are uniform on
    /// `[0, lambda]`.
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InstanceSelectionConfig {
    /// Discarded fraction in `[0, 1)`; the `ceil(n (1 - psi))` most
    /// typical items survive.
    pub psi: f64,
    /// Echoed into reports; selection itself is deterministic.
    pub seed: u64,
}

fn check_unit(value: f64, what: &str) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!(
            "{what} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}

/// Apply one augmentation family with per-item random strengths.
pub fn augment(images: &ImageTensorSet, config: &AugmentationConfig) -> Result<ImageTensorSet> {
    check_unit(config.lambda, "lambda")?;
    if config.lambda == 0.0 {
        return Ok(images.clone());
    }
    transform(images, config.kind, config.seed, |rng| {
        rng.gen::<f64>() * config.lambda
    })
}

/// Apply one augmentation family at an exact strength for every item.
pub fn augment_forced(
    images: &ImageTensorSet,
    kind: AugmentationKind,
    strength: f64,
    seed: u64,
) -> Result<ImageTensorSet> {
    check_unit(strength, "strength")?;
    transform(images, kind, seed, move |_| strength)
}

fn transform(
    images: &ImageTensorSet,
    kind: AugmentationKind,
    seed: u64,
    mut strength: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> f64,
) -> Result<ImageTensorSet> {
    let (n, c, h, w) = images.shape4();
    let mut out = images.data().clone();
    for i in 0..n {
        let mut rng = seeds::rng(seed, i as u64);
        let s = strength(&mut rng);
        if s == 0.0 {
            continue;
        }
        match kind {
            AugmentationKind::Translation => {
                let m = (s * (h.min(w) as f64) / 2.0).floor() as i64;
                let dy = rng.gen_range(-m..=m);
                let dx = rng.gen_range(-m..=m);
                if dy == 0 && dx == 0 {
                    continue;
                }
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            let sy = y as i64 - dy;
                            let sx = x as i64 - dx;
                            out[(i, ch, y, x)] = if sy >= 0
                                && sy < h as i64
                                && sx >= 0
                                && sx < w as i64
                            {
                                images.data()[(i, ch, sy as usize, sx as usize)]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
            AugmentationKind::ZoomIn => {
                let ch_h = (((1.0 - s) * h as f64).round() as usize).clamp(1, h);
                let ch_w = (((1.0 - s) * w as f64).round() as usize).clamp(1, w);
                if ch_h == h && ch_w == w {
                    continue;
                }
                let oy = rng.gen_range(0..=(h - ch_h));
                let ox = rng.gen_range(0..=(w - ch_w));
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            let v = (y as f64 + 0.5) * ch_h as f64 / h as f64 - 0.5;
                            let u = (x as f64 + 0.5) * ch_w as f64 / w as f64 - 0.5;
                            out[(i, ch, y, x)] = bilinear(
                                images.data(),
                                i,
                                ch,
                                oy,
                                ox,
                                ch_h,
                                ch_w,
                                v,
                                u,
                            );
                        }
                    }
                }
            }
            AugmentationKind::ZoomOut => {
                let th = (((1.0 - s) * h as f64).round() as usize).clamp(1, h);
                let tw = (((1.0 - s) * w as f64).round() as usize).clamp(1, w);
                if th == h && tw == w {
                    continue;
                }
                let offy = (h - th) / 2;
                let offx = (w - tw) / 2;
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            out[(i, ch, y, x)] = 0.0;
                        }
                    }
                    for ty in 0..th {
                        for tx in 0..tw {
                            let v = (ty as f64 + 0.5) * h as f64 / th as f64 - 0.5;
                            let u = (tx as f64 + 0.5) * w as f64 / tw as f64 - 0.5;
                            out[(i, ch, offy + ty, offx + tx)] =
                                bilinear(images.data(), i, ch, 0, 0, h, w, v, u);
                        }
                    }
                }
            }
            AugmentationKind::Cutout => {
                let side = (s * h.min(w) as f64).round() as usize;
                if side == 0 {
                    continue;
                }
                let side = side.min(h).min(w);
                let oy = rng.gen_range(0..=(h - side));
                let ox = rng.gen_range(0..=(w - side));
                for ch in 0..c {
                    for y in oy..oy + side {
                        for x in ox..ox + side {
                            out[(i, ch, y, x)] = 0.0;
                        }
                    }
                }
            }
            AugmentationKind::Brightness => {
                let delta = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let shift = (s * delta) as f32;
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            out[(i, ch, y, x)] =
                                (images.data()[(i, ch, y, x)] + shift).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            AugmentationKind::ColorShift => {
                for ch in 0..c {
                    let shift = (rng.gen::<f64>() * 2.0 - 1.0) * s;
                    let shift = shift as f32;
                    for y in 0..h {
                        for x in 0..w {
                            out[(i, ch, y, x)] =
                                (images.data()[(i, ch, y, x)] + shift).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(ImageTensorSet { data: out })
}

/// Bilinear sample at crop coordinates `(v, u)` inside the window of
/// size `ch_h x ch_w` anchored at `(oy, ox)`; edge clamped.
#[allow(clippy::too_many_arguments)]
fn bilinear(
    img: &Array4<f32>,
    i: usize,
    ch: usize,
    oy: usize,
    ox: usize,
    ch_h: usize,
    ch_w: usize,
    v: f64,
    u: f64,
) -> f32 {
    let v = v.clamp(0.0, ch_h as f64 - 1.0);
    let u = u.clamp(0.0, ch_w as f64 - 1.0);
    let y0 = v.floor() as usize;
    let x0 = u.floor() as usize;
    let y1 = (y0 + 1).min(ch_h - 1);
    let x1 = (x0 + 1).min(ch_w - 1);
    let fy = (v - y0 as f64) as f32;
    let fx = (u - x0 as f64) as f32;
    let p00 = img[(i, ch, oy + y0, ox + x0)];
    let p01 = img[(i, ch, oy + y0, ox + x1)];
    let p10 = img[(i, ch, oy + y1, ox + x0)];
    let p11 = img[(i, ch, oy + y1, ox + x1)];
    let top = p00 + fx * (p01 - p00);
    let bot = p10 + fx * (p11 - p10);
    (top + fy * (bot - top)).clamp(0.0, 1.0)
}

/// Indices of the `ceil(n (1 - psi))` highest-likelihood rows under a
/// single Gaussian fitted to the features, ascending.
pub fn select_indices(features: &Array2<f64>, psi: f64) -> Result<Vec<usize>> {
    if !psi.is_finite() || !(0.0..1.0).contains(&psi) {
        return Err(Error::invalid(format!(
            "discard fraction must lie in [0, 1), got {psi}"
        )));
    }
    let n = features.nrows();
    let d = features.ncols();
    if n == 0 || d == 0 {
        return Err(Error::invalid("feature matrix is empty"));
    }
    let keep = ((n as f64) * (1.0 - psi)).ceil() as usize;
    let keep = keep.clamp(1, n);
    if keep == n {
        return Ok((0..n).collect());
    }

    let mut mean = vec![0.0f64; d];
    for row in features.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0f64; d * d];
    for row in features.rows() {
        for j in 0..d {
            let xj = row[j] - mean[j];
            for k in j..d {
                cov[j * d + k] += xj * (row[k] - mean[k]);
            }
        }
    }
    for j in 0..d {
        for k in j..d {
            let v = cov[j * d + k] / n as f64;
            cov[j * d + k] = v;
            cov[k * d + j] = v;
        }
    }
    let trace: f64 = (0..d).map(|j| cov[j * d + j]).sum();
    if !(trace > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let load = 1e-6 * trace / d as f64;
    for j in 0..d {
        cov[j * d + j] += load;
    }
    let chol = cholesky(&cov, d).ok_or(Error::SingularCovariance)?;

    // Mahalanobis ranking; the normalizing constant is shared
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut z = vec![0.0f64; d];
    for (i, row) in features.rows().into_iter().enumerate() {
        for (j, v) in z.iter_mut().enumerate() {
            *v = row[j] - mean[j];
        }
        for j in 0..d {
            let mut s = z[j];
            for k in 0..j {
                s -= chol[j * d + k] * z[k];
            }
            z[j] = s / chol[j * d + j];
        }
        let m2: f64 = z.iter().map(|v| v * v).sum();
        scored.push((m2, i));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = scored[..keep].iter().map(|(_, i)| *i).collect();
    kept.sort_unstable();
    Ok(kept)
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Keep the most typical items as ranked by `select_indices` over the
/// given features.
pub fn instance_select(
    features: &Array2<f64>,
    images: &ImageTensorSet,
    config: &InstanceSelectionConfig,
) -> Result<(ImageTensorSet, Vec<usize>)> {
    if features.nrows() != images.n() {
        return Err(Error::invalid("one feature row per image required"));
    }
    let idx = select_indices(features, config.psi)?;
    if idx.len() == images.n() {
        return Ok((images.clone(), idx));
    }
    Ok((images.select(&idx)?, idx))
}

/// One intervention in a connectivity scan.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScanItem {
    Augmentation { kind: AugmentationKind, lambda: f64 },
    InstanceSelection { psi: f64 },
}

impl ScanItem {
    pub fn label(&self) -> String {
        match self {
            ScanItem::Augmentation { kind, .. } => kind.as_str().to_string(),
            ScanItem::InstanceSelection { .. } => "instance_selection".to_string(),
        }
    }

    pub fn param(&self) -> f64 {
        match self {
            ScanItem::Augmentation { lambda, .. } => *lambda,
            ScanItem::InstanceSelection { psi } => *psi,
        }
    }
}

/// One row of a scan report.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScanRow {
    pub label: String,
    pub param: f64,
    pub xi_hat: Option<f64>,
    /// Gap relative to the untouched baseline.
    pub xi_norm: Option<f64>,
    pub error: Option<String>,
}

/// Gap response of a dataset to a list of interventions.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScanReport {
    pub baseline_xi: f64,
    pub rows: Vec<ScanRow>,
    /// Rank correlation against external scores, when attached.
    pub spearman: Option<f64>,
}

/// Estimate the gap of the raw dataset and of every transformed
/// variant. Per-row estimator failures are recorded, not fatal; a
/// failing baseline is.
pub fn connectivity_scan(
    images: &ImageTensorSet,
    plan: &[ScanItem],
    graph: &GraphEstimatorConfig,
    seed: u64,
) -> Result<ScanReport> {
    let baseline = estimate_graph(&images.flatten_features(), graph)?;
    let baseline_xi = baseline.xi_hat;
    let mut rows = Vec::with_capacity(plan.len());
    for (row_idx, item) in plan.iter().enumerate() {
        let xi = apply_and_estimate(images, item, graph, seeds::split(seed, row_idx as u64));
        let row = match xi {
            Ok(xi_hat) => ScanRow {
                label: item.label(),
                param: item.param(),
                xi_hat: Some(xi_hat),
                xi_norm: Some(xi_hat / baseline_xi),
                error: None,
            },
            Err(e) => ScanRow {
                label: item.label(),
                param: item.param(),
                xi_hat: None,
                xi_norm: None,
                error: Some(format!("{}: {e}", e.kind())),
            },
        };
        rows.push(row);
    }
    Ok(ScanReport {
        baseline_xi,
        rows,
        spearman: None,
    })
}

fn apply_and_estimate(
    images: &ImageTensorSet,
    item: &ScanItem,
    graph: &GraphEstimatorConfig,
    seed: u64,
) -> Result<f64> {
    let feats = match item {
        ScanItem::Augmentation { kind, lambda } => {
            let cfg = AugmentationConfig {
                kind: *kind,
                lambda: *lambda,
                seed,
            };
            augment(images, &cfg)?.flatten_features()
        }
        ScanItem::InstanceSelection { psi } => {
            let cfg = InstanceSelectionConfig { psi: *psi, seed };
            let feats = images.flatten_features();
            let (subset, _) = instance_select(feats.points(), images, &cfg)?;
            subset.flatten_features()
        }
    };
    Ok(estimate_graph(&feats, graph)?.xi_hat)
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(
            "rank correlation needs two equally long lists",
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::invalid("rank correlation of a constant list"));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Attach a rank correlation between per-row gaps and external scores
/// (for example distances between generated and real statistics).
pub fn correlate_scores(report: &mut ScanReport, scores: &[f64]) -> Result<f64> {
    if scores.len() != report.rows.len() {
        return Err(Error::invalid("one score per scan row required"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, s) in report.rows.iter().zip(scores) {
        if let Some(xi) = row.xi_hat {
            xs.push(xi);
            ys.push(*s);
        }
    }
    let rho = spearman(&xs, &ys)?;
    report.spearman = Some(rho);
    Ok(rho)
}

/// Deterministic synthetic image stack: a smooth base pattern plus
/// iid Gaussian pixel noise, clamped to the unit range.
pub fn synthetic_images(
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    noise: f64,
    seed: u64,
) -> Result<ImageTensorSet> {
    if n == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::invalid("image stack has an empty dimension"));
    }
    if !(0.0..=0.5).contains(&noise) {
        return Err(Error::invalid("noise level must lie in [0, 0.5]"));
    }
    use rand_distr::{Distribution, StandardNormal};
    let mut data = Array4::<f32>::zeros((n, c, h, w));
    for i in 0..n {
        let mut rng = seeds::rng(seed, i as u64);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let base = 0.5
                        + 0.2
                            * ((x as f64 + 1.0) / w as f64 * std::f64::consts::TAU).sin()
                            * ((y as f64 + 1.0) / h as f64 * std::f64::consts::TAU).cos()
                        + 0.1 * ((ch + 1) as f64 / (c + 1) as f64 - 0.5);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data[(i, ch, y, x)] = (base + noise * z).clamp(0.0, 1.0) as f32;
                }
            }
        }
    }
    ImageTensorSet::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_images(n: usize) -> ImageTensorSet {
        synthetic_images(n, 1, 8, 8, 0.1, 99).unwrap()
    }

    #[test]
    fn zero_lambda_is_a_bit_exact_identity_for_every_kind() {
        let imgs = probe_images(6);
        for kind in AugmentationKind::ALL {
            let out = augment(
                &imgs,
                &AugmentationConfig {
                    kind,
                    lambda: 0.0,
                    seed: 5,
                },
            )
            .unwrap();
            assert_eq!(out.data(), imgs.data(), "{kind} moved pixels at zero strength");
        }
    }

    #[test]
    fn full_strength_cutout_blanks_square_images() {
        let imgs = probe_images(4);
        let out = augment_forced(&imgs, AugmentationKind::Cutout, 1.0, 3).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn translation_moves_a_delta_within_bounds() {
        let mut data = Array4::<f32>::zeros((20, 1, 9, 9));
        for i in 0..20 {
            data[(i, 0, 4, 4)] = 1.0;
        }
        let imgs = ImageTensorSet::new(data).unwrap();
        let out = augment_forced(&imgs, AugmentationKind::Translation, 0.5, 7).unwrap();
        // m = floor(0.5 * 9 / 2) = 2
        let mut saw_motion = false;
        for i in 0..20 {
            let mut hits = Vec::new();
            for y in 0..9 {
                for x in 0..9 {
                    if out.data()[(i, 0, y, x)] != 0.0 {
                        hits.push((y as i64, x as i64));
                    }
                }
            }
            assert_eq!(hits.len(), 1, "item {i} lost or duplicated the pixel");
            let (y, x) = hits[0];
            assert!((y - 4).abs() <= 2 && (x - 4).abs() <= 2, "item {i} jumped to ({y}, {x})");
            if (y, x) != (4, 4) {
                saw_motion = true;
            }
        }
        assert!(saw_motion);
    }

    #[test]
    fn tiny_zoom_strengths_round_to_the_identity() {
        let imgs = probe_images(5);
        let a = augment_forced(&imgs, AugmentationKind::ZoomIn, 0.02, 11).unwrap();
        assert_eq!(a.data(), imgs.data());
        let b = augment_forced(&imgs, AugmentationKind::ZoomOut, 0.02, 11).unwrap();
        assert_eq!(b.data(), imgs.data());
    }

    #[test]
    fn zoom_out_pads_the_border_with_zeros() {
        let mut data = Array4::<f32>::zeros((3, 1, 10, 10));
        data.fill(1.0);
        let imgs = ImageTensorSet::new(data).unwrap();
        let out = augment_forced(&imgs, AugmentationKind::ZoomOut, 0.4, 13).unwrap();
        // target is 6x6 centered, so the 2-pixel frame is zero
        for i in 0..3 {
            for y in 0..10 {
                for x in 0..10 {
                    let inside = (2..8).contains(&y) && (2..8).contains(&x);
                    let v = out.data()[(i, 0, y, x)];
                    if inside {
                        assert!(v > 0.9, "interior pixel ({y}, {x}) lost mass: {v}");
                    } else {
                        assert_eq!(v, 0.0, "border pixel ({y}, {x}) not padded");
                    }
                }
            }
        }
    }

    #[test]
    fn brightness_shifts_saturate_at_the_range_ends() {
        let imgs = probe_images(8);
        let out = augment_forced(&imgs, AugmentationKind::Brightness, 1.0, 17).unwrap();
        for i in 0..8 {
            let before: f64 = (0..8)
                .flat_map(|y| (0..8).map(move |x| (y, x)))
                .map(|(y, x)| imgs.data()[(i, 0, y, x)] as f64)
                .sum();
            let after: f64 = (0..8)
                .flat_map(|y| (0..8).map(move |x| (y, x)))
                .map(|(y, x)| out.data()[(i, 0, y, x)] as f64)
                .sum();
            // full-strength shift saturates every pixel at one end
            assert!(
                after == 0.0 || after == 64.0,
                "item {i}: sum {after} (was {before})"
            );
        }
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn color_shift_is_constant_within_each_channel() {
        let imgs = synthetic_images(4, 3, 6, 6, 0.05, 23).unwrap();
        let out = augment_forced(&imgs, AugmentationKind::ColorShift, 0.2, 29).unwrap();
        for i in 0..4 {
            for ch in 0..3 {
                let mut shifts = Vec::new();
                for y in 0..6 {
                    for x in 0..6 {
                        let a = imgs.data()[(i, ch, y, x)];
                        let b = out.data()[(i, ch, y, x)];
                        // clamped pixels hide the shift, skip them
                        if b > 0.0 && b < 1.0 {
                            shifts.push(b - a);
                        }
                    }
                }
                assert!(!shifts.is_empty());
                let first = shifts[0];
                assert!(first.abs() <= 0.2 + 1e-6);
                assert!(shifts.iter().all(|s| (s - first).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn zero_psi_keeps_everything_in_order() {
        let imgs = probe_images(10);
        let feats = imgs.flatten_features();
        let cfg = InstanceSelectionConfig { psi: 0.0, seed: 1 };
        let (kept, idx) = instance_select(feats.points(), &imgs, &cfg).unwrap();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert_eq!(kept.data(), imgs.data());
    }

    #[test]
    fn half_psi_keeps_exactly_the_ceiling() {
        let imgs = probe_images(10);
        let feats = imgs.flatten_features();
        let idx = select_indices(feats.points(), 0.45).unwrap();
        // ceil(10 * 0.55) = 6
        assert_eq!(idx.len(), 6);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        // rejected fractions outside the unit interval
        assert!(select_indices(feats.points(), 1.0).is_err());
        assert!(select_indices(feats.points(), -0.1).is_err());
    }

    #[test]
    fn selection_drops_the_far_outliers_first() {
        let mut feats = Array2::<f64>::zeros((40, 2));
        let mut rng = crate::seeds::rng(7, 0);
        for i in 0..40 {
            feats[(i, 0)] = rng.gen::<f64>() - 0.5;
            feats[(i, 1)] = rng.gen::<f64>() - 0.5;
        }
        // plant four obvious outliers
        for (slot, i) in [3usize, 11, 27, 35].iter().enumerate() {
            feats[(*i, 0)] = 50.0 + slot as f64;
            feats[(*i, 1)] = -40.0;
        }
        let idx = select_indices(&feats, 0.1).unwrap();
        assert_eq!(idx.len(), 36);
        for bad in [3usize, 11, 27, 35] {
            assert!(!idx.contains(&bad), "outlier {bad} survived");
        }
    }

    #[test]
    fn identity_scan_row_normalizes_to_exactly_one() {
        let imgs = probe_images(220);
        let graph = GraphEstimatorConfig {
            k_neighbors: 16,
            ..Default::default()
        };
        let plan = vec![
            ScanItem::Augmentation {
                kind: AugmentationKind::Translation,
                lambda: 0.0,
            },
            ScanItem::InstanceSelection { psi: 0.0 },
        ];
        let report = connectivity_scan(&imgs, &plan, &graph, 31).unwrap();
        assert!(report.baseline_xi > 0.0);
        for row in &report.rows {
            assert_eq!(row.error, None);
            assert_eq!(row.xi_norm, Some(1.0), "row {} drifted", row.label);
        }
    }

    #[test]
    fn spearman_handles_monotone_data_and_ties() {
        let up = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0, 9.0, 12.0, 40.0]).unwrap();
        assert!((up - 1.0).abs() < 1e-12);
        let down = spearman(&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 2.0]).unwrap();
        assert!((down + 1.0).abs() < 1e-12);
        let tied = spearman(&[1.0, 1.0, 2.0], &[3.0, 3.0, 5.0]).unwrap();
        assert!((tied - 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn scores_attach_a_rank_correlation_to_the_report() {
        let imgs = probe_images(220);
        let graph = GraphEstimatorConfig {
            k_neighbors: 16,
            ..Default::default()
        };
        let plan: Vec<ScanItem> = [0.0, 0.3, 0.6]
            .iter()
            .map(|l| ScanItem::Augmentation {
                kind: AugmentationKind::Brightness,
                lambda: *l,
            })
            .collect();
        let mut report = connectivity_scan(&imgs, &plan, &graph, 37).unwrap();
        let xis: Vec<f64> = report.rows.iter().map(|r| r.xi_hat.unwrap()).collect();
        // a score list that mirrors the gap ordering correlates fully
        let rho = correlate_scores(&mut report, &xis).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        assert_eq!(report.spearman, Some(rho));
    }
}
