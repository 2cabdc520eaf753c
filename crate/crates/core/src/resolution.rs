//! Two-point resolution test on dot-pair phase patterns.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::calibration::{apply_calibration, AffineCalibration};
use crate::error::{Error, Result};
use crate::field::Image;
use crate::net::{check_params, infer_with, NetworkParams};
use crate::optics::ForwardModel;
use crate::spectral::{apply_filter, SpectralFilter};

pub const DEFAULT_DIP_THRESHOLD: f64 = 0.8;

/// Horizontal pairs of single-pixel dots on a zero background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DotPatternSpec {
    /// Center-to-center distance of the two dots of a pair.
    pub spacing: usize,
    pub amplitude: f64,
    /// Gap between neighboring pairs, both along and across rows.
    pub margin: usize,
    pub size: usize,
}

impl DotPatternSpec {
    /// Amplitude 1 and a margin of four spacings.
    pub fn new(spacing: usize, size: usize) -> Self {
        DotPatternSpec {
            spacing,
            amplitude: 1.0,
            margin: 4 * spacing,
            size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing < 2 {
            return Err(Error::param("spacing", format!("{} < 2", self.spacing)));
        }
        if 4 * self.spacing >= self.size {
            return Err(Error::param("spacing", format!("{} is not below N/4 = {}", self.spacing, self.size as f64 / 4.0)));
        }
        if !(0.0..=1.0).contains(&self.amplitude) || self.amplitude == 0.0 {
            return Err(Error::param("amplitude", format!("{} outside (0, 1]", self.amplitude)));
        }
        if self.margin < self.spacing {
            return Err(Error::param("margin", format!("{} is smaller than the spacing", self.margin)));
        }
        Ok(())
    }

    /// Pair locations, row-major, each the `(row, col)` of its left dot.
    ///
    /// Pairs stay at least one spacing away from the border so every
    /// cross-section window lies inside the grid.
    pub fn layout(&self) -> Result<Vec<PairLocation>> {
        self.validate()?;
        let (d, n) = (self.spacing, self.size);
        let usable = n - 2 * d;
        let nx = (usable - (d + 1)) / (d + self.margin) + 1;
        let ny = (usable - 1) / self.margin + 1;
        let width = (nx - 1) * (d + self.margin) + d + 1;
        let height = (ny - 1) * self.margin + 1;
        let (col0, row0) = ((n - width) / 2, (n - height) / 2);
        let mut pairs = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                pairs.push(PairLocation {
                    row: row0 + j * self.margin,
                    col: col0 + i * (d + self.margin),
                    spacing: d,
                });
            }
        }
        Ok(pairs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairLocation {
    pub row: usize,
    pub col: usize,
    pub spacing: usize,
}

pub fn generate_dot_pattern(spec: &DotPatternSpec) -> Result<(Image, Vec<PairLocation>)> {
    let layout = spec.layout()?;
    let n = spec.size;
    let mut data = vec![0.0; n * n];
    for p in &layout {
        data[p.row * n + p.col] = spec.amplitude;
        data[p.row * n + p.col + p.spacing] = spec.amplitude;
    }
    Ok((Image::new(n, n, None, data)?, layout))
}

/// Row through both dots, from one spacing left of the first dot to one
/// spacing right of the second (`3D + 1` samples).
pub fn cross_section(image: &Image, pair: &PairLocation) -> Result<Vec<f64>> {
    let d = pair.spacing;
    if pair.row >= image.height() || pair.col < d || pair.col + 2 * d >= image.width() {
        return Err(Error::OutOfRange {
            index: pair.row * image.width() + pair.col,
            value: d as f64,
        });
    }
    Ok(image.row(pair.row)[pair.col - d..=pair.col + 2 * d].to_vec())
}

/// Diagnostics of one two-point decision; heights are baseline-subtracted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDecision {
    pub resolved: bool,
    pub peaks: Option<(usize, usize)>,
    pub peak_heights: Option<(f64, f64)>,
    /// Lowest sample between the peaks over the smaller peak.
    pub dip_ratio: Option<f64>,
}

fn local_max_near(p: &[f64], center: usize) -> Option<usize> {
    let lo = center.saturating_sub(1).max(1);
    let hi = (center + 1).min(p.len() - 2);
    (lo..=hi)
        .filter(|&i| p[i] >= p[i - 1] && p[i] >= p[i + 1])
        .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
}

/// Two dots `spacing` apart, centered in `profile`, count as resolved when
/// each has a local maximum within one sample of its position and the lowest
/// sample between the maxima is below `threshold` times the smaller maximum,
/// all measured above the profile minimum.
pub fn is_resolved(profile: &[f64], spacing: usize, threshold: f64) -> PairDecision {
    let unresolved = PairDecision {
        resolved: false,
        peaks: None,
        peak_heights: None,
        dip_ratio: None,
    };
    if profile.len() < spacing + 3 || spacing == 0 || profile.iter().any(|v| !v.is_finite()) {
        return unresolved;
    }
    let base = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let p: Vec<f64> = profile.iter().map(|v| v - base).collect();
    let left = (p.len() - 1 - spacing) / 2;
    let (Some(i1), Some(i2)) = (local_max_near(&p, left), local_max_near(&p, left + spacing)) else {
        return unresolved;
    };
    if i2 < i1 + 2 {
        return PairDecision {
            peaks: Some((i1, i2)),
            peak_heights: Some((p[i1], p[i2])),
            ..unresolved
        };
    }
    let smaller = p[i1].min(p[i2]);
    let dip = p[i1 + 1..i2].iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if smaller > 0.0 { Some(dip / smaller) } else { None };
    PairDecision {
        resolved: ratio.is_some_and(|r| r < threshold),
        peaks: Some((i1, i2)),
        peak_heights: Some((p[i1], p[i2])),
        dip_ratio: ratio,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionRow {
    pub spacing: usize,
    pub resolved: bool,
    pub pairs: usize,
    pub resolved_pairs: usize,
    /// Means over the pairs where the quantity exists.
    pub dip_ratio: Option<f64>,
    pub peak1: Option<f64>,
    pub peak2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionReport {
    pub label: String,
    pub threshold: f64,
    pub rows: Vec<ResolutionRow>,
    /// Smallest spacing from which every larger spacing is also resolved.
    pub limit: Option<usize>,
    /// Some spacing below the limit was resolved.
    pub non_monotone: bool,
    pub reconstructions: Vec<Image>,
    pub cross_sections: Vec<Vec<Vec<f64>>>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"))
}

impl ResolutionReport {
    /// Tabulates per-spacing decisions and finds the monotone frontier.
    pub fn from_rows(label: &str, threshold: f64, rows: Vec<ResolutionRow>) -> Self {
        let mut limit = None;
        for row in rows.iter().rev() {
            if !row.resolved {
                break;
            }
            limit = Some(row.spacing);
        }
        let non_monotone = rows.iter().any(|r| r.resolved && limit.is_none_or(|l| r.spacing < l));
        ResolutionReport {
            label: label.to_string(),
            threshold,
            rows,
            limit,
            non_monotone,
            reconstructions: Vec::new(),
            cross_sections: Vec::new(),
        }
    }

    /// Limit with "unresolved everywhere" mapped past the sweep, for ordering.
    pub fn limit_or_beyond(&self) -> usize {
        self.limit
            .unwrap_or_else(|| self.rows.iter().map(|r| r.spacing).max().unwrap_or(0) + 1)
    }

    pub fn limit_text(&self) -> String {
        match self.limit {
            Some(d) => d.to_string(),
            None => "unresolved at all D".to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("D,resolved,dip_ratio,peak1,peak2\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.spacing,
                r.resolved,
                fmt_opt(r.dip_ratio),
                fmt_opt(r.peak1),
                fmt_opt(r.peak2)
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: limit={} threshold={} non_monotone={}",
            self.label,
            self.limit_text(),
            self.threshold,
            self.non_monotone
        )
    }
}

/// Settings for [`measure_resolution_limit`].
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions<'a> {
    pub spacings: &'a RangeInclusive<usize>,
    pub threshold: f64,
    pub post_filter: Option<&'a SpectralFilter>,
}

/// Runs every spacing's pattern through measurement, inference, calibration
/// and the optional output filter, then majority-votes the pair decisions.
pub fn measure_resolution_limit(
    label: &str,
    params: &NetworkParams,
    cal: &AffineCalibration,
    model: &ForwardModel,
    options: SweepOptions,
) -> Result<ResolutionReport> {
    let arch = check_params(params)?;
    let n = params.config.input_size;
    if model.grid_size() != n {
        return Err(Error::param("grid_size", format!("optics grid {} vs network input {n}", model.grid_size())));
    }
    let background = model.background()?;
    let mut rows = Vec::new();
    let mut reconstructions = Vec::new();
    let mut cross_sections = Vec::new();
    for d in options.spacings.clone() {
        let (pattern, layout) = generate_dot_pattern(&DotPatternSpec::new(d, n))?;
        let intensity = model.measure(&pattern, &background)?.normalized()?.raw;
        let estimate = apply_calibration(&infer_with(params, &arch, &intensity)?, cal)?;
        let estimate = match options.post_filter {
            Some(filter) => apply_filter(&estimate, filter)?,
            None => estimate,
        };
        let profiles = layout.iter().map(|p| cross_section(&estimate, p)).collect::<Result<Vec<_>>>()?;
        let decisions: Vec<PairDecision> = profiles.iter().map(|p| is_resolved(p, d, options.threshold)).collect();
        let resolved_pairs = decisions.iter().filter(|x| x.resolved).count();
        rows.push(ResolutionRow {
            spacing: d,
            resolved: 2 * resolved_pairs > decisions.len(),
            pairs: decisions.len(),
            resolved_pairs,
            dip_ratio: mean(decisions.iter().filter_map(|x| x.dip_ratio)),
            peak1: mean(decisions.iter().filter_map(|x| x.peak_heights.map(|h| h.0))),
            peak2: mean(decisions.iter().filter_map(|x| x.peak_heights.map(|h| h.1))),
        });
        reconstructions.push(estimate);
        cross_sections.push(profiles);
    }
    let mut report = ResolutionReport::from_rows(label, options.threshold, rows);
    report.reconstructions = reconstructions;
    report.cross_sections = cross_sections;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_two_layout() {
        let (img, layout) = generate_dot_pattern(&DotPatternSpec::new(2, 64)).unwrap();
        assert!(!layout.is_empty());
        for p in &layout {
            let row = img.row(p.row);
            assert_eq!(&row[p.col..p.col + 3], &[1.0, 0.0, 1.0]);
            assert_eq!(row[p.col - 1], 0.0);
            assert_eq!(row[p.col + 3], 0.0);
        }
        assert_eq!(img.sum(), 2.0 * layout.len() as f64);
    }

    #[test]
    fn layouts_are_centered_and_separated() {
        for d in 2..16 {
            let spec = DotPatternSpec::new(d, 64);
            let (img, layout) = generate_dot_pattern(&spec).unwrap();
            assert_eq!(img.sum(), 2.0 * layout.len() as f64);
            let first = layout[0];
            let last = layout[layout.len() - 1];
            let (left, right) = (first.col, 63 - (last.col + d));
            assert!(left.abs_diff(right) <= 1, "D={d}: {left} vs {right}");
            assert!(first.col >= d && last.col + 2 * d < 64);
            for w in layout.windows(2) {
                if w[0].row == w[1].row {
                    assert_eq!(w[1].col - (w[0].col + d), spec.margin);
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(DotPatternSpec::new(21, 64).validate().is_err());
        assert!(DotPatternSpec::new(16, 64).validate().is_err());
        assert!(DotPatternSpec::new(1, 64).validate().is_err());
        assert!(DotPatternSpec::new(15, 64).validate().is_ok());
    }

    #[test]
    fn ground_truth_cross_sections() {
        for d in 2..16 {
            let (img, layout) = generate_dot_pattern(&DotPatternSpec::new(d, 64)).unwrap();
            for p in &layout {
                let prof = cross_section(&img, p).unwrap();
                assert_eq!(prof.len(), 3 * d + 1);
                for (i, &v) in prof.iter().enumerate() {
                    assert_eq!(v, if i == d || i == 2 * d { 1.0 } else { 0.0 });
                }
                assert!(is_resolved(&prof, d, DEFAULT_DIP_THRESHOLD).resolved);
            }
        }
        let img = Image::zeros(64, 64, None).unwrap();
        let bad = PairLocation { row: 3, col: 60, spacing: 4 };
        assert!(cross_section(&img, &bad).is_err());
    }

    #[test]
    fn decision_examples() {
        let r = is_resolved(&[0.0, 1.0, 0.0, 1.0, 0.0], 2, 0.8);
        assert!(r.resolved);
        assert_eq!(r.dip_ratio, Some(0.0));
        assert!(!is_resolved(&[0.0, 1.0, 1.0, 1.0, 0.0], 2, 0.8).resolved);
        assert!(!is_resolved(&[0.0, 1.0, 0.0], 2, 0.8).resolved);
        assert!(!is_resolved(&[0.0; 7], 2, 0.8).resolved);
        assert!(!is_resolved(&[0.0, f64::NAN, 0.0, 1.0, 0.0], 2, 0.8).resolved);
    }

    #[test]
    fn frontier() {
        let row = |d: usize, resolved: bool| ResolutionRow {
            spacing: d,
            resolved,
            pairs: 1,
            resolved_pairs: resolved as usize,
            dip_ratio: None,
            peak1: None,
            peak2: None,
        };
        let r = ResolutionReport::from_rows("x", 0.8, vec![row(2, false), row(3, true), row(4, true)]);
        assert_eq!((r.limit, r.non_monotone), (Some(3), false));
        let r = ResolutionReport::from_rows("x", 0.8, vec![row(2, true), row(3, false), row(4, true)]);
        assert_eq!((r.limit, r.non_monotone), (Some(4), true));
        let r = ResolutionReport::from_rows("x", 0.8, vec![row(2, true), row(3, false)]);
        assert_eq!((r.limit, r.non_monotone), (None, true));
        assert_eq!(r.limit_or_beyond(), 4);
        assert_eq!(r.limit_text(), "unresolved at all D");
        assert!(r.to_csv().starts_with("D,resolved,dip_ratio,peak1,peak2\n2,true,nan,nan,nan\n"));
    }
}
