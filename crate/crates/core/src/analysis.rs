//! Data reduction: stress-strain curves from raw traces, elastic modulus,
//! offset yield stress, relaxation drops and Hall-Petch regression.
//!
//! All quantities are engineering stress and strain. Compliance correction
//! subtracts the machine's share of the actuator stroke:
//!
//! ```text
//! σ = F / (w·t)        ε = (u − F·C_m) / L0
//! ```

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loadtrain::SpecimenGeometry;
use crate::profile::SegmentKind;
use crate::trace::Trace;

/// Default offset strain for yield determination.
pub const DEFAULT_YIELD_OFFSET: f64 = 0.002;
/// Fits below this R² are flagged as low confidence.
pub const LOW_CONFIDENCE_R2: f64 = 0.9;
/// R² values closer than this count as equal when ranking windows.
const R2_TIE: f64 = 1e-9;
const ROUNDOFF_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub strain: f64,
    pub stress: f64,
    pub time: f64,
    pub segment: usize,
    pub kind: SegmentKind,
    pub cycle: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StressStrainCurve {
    pub points: Vec<CurvePoint>,
}

impl StressStrainCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// SHA-256 over the strain/stress bit patterns.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.points {
            hasher.update(p.strain.to_le_bytes());
            hasher.update(p.stress.to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Indices of the first loading ramp, including its starting point.
    pub fn first_loading(&self) -> Vec<usize> {
        let Some(first) = self
            .points
            .iter()
            .find(|p| p.kind == SegmentKind::RampToStrain)
            .map(|p| p.segment)
        else {
            return Vec::new();
        };
        let mut idx: Vec<usize> = (0..self.points.len())
            .filter(|&i| self.points[i].segment == first)
            .collect();
        if let Some(&start) = idx.first() {
            if start > 0 {
                idx.insert(0, start - 1);
            }
        }
        idx
    }
}

/// Converts measured force and displacement into engineering stress and
/// compliance-corrected strain.
pub fn reduce_trace(trace: &Trace, geometry: &SpecimenGeometry, machine_compliance: f64) -> Result<StressStrainCurve> {
    let area = geometry.area();
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::Input(format!(
            "specimen cross-section must be > 0, got {area} m^2"
        )));
    }
    if !(geometry.gauge_length > 0.0 && geometry.gauge_length.is_finite()) {
        return Err(Error::Input("gauge length must be > 0".into()));
    }
    if !(machine_compliance >= 0.0 && machine_compliance.is_finite()) {
        return Err(Error::Input(format!(
            "machine compliance must be >= 0, got {machine_compliance} m/N"
        )));
    }
    let points = trace
        .samples
        .iter()
        .map(|s| {
            let (kind, cycle) = trace
                .segments
                .get(s.segment)
                .map(|span| (span.kind, span.cycle))
                .unwrap_or((SegmentKind::RampToStrain, 0));
            CurvePoint {
                strain: (s.measured_u - s.measured_force * machine_compliance) / geometry.gauge_length,
                stress: s.measured_force / area,
                time: s.time,
                segment: s.segment,
                kind,
                cycle,
            }
        })
        .collect();
    Ok(StressStrainCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rms_residual: f64,
}

/// Ordinary least squares `y = slope·x + intercept`, two-pass.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        rms_residual: (sse / nf).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FitStrategy {
    /// Scan contiguous windows of the first loading ramp for the best line.
    #[default]
    Auto,
    /// Fit the first-loading points whose strain lies in `[strain_lo, strain_hi]`.
    Window { strain_lo: f64, strain_hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusFit {
    pub modulus: f64,
    pub intercept: f64,
    pub strain_lo: f64,
    pub strain_hi: f64,
    pub r_squared: f64,
    pub point_count: usize,
    /// Segment the fitted points belong to.
    pub segment: usize,
    pub warnings: Vec<String>,
}

/// Elastic modulus from the first loading ramp.
///
/// `Auto` scans every contiguous window of at least `max(5, 10%)` loading
/// points, keeps windows with positive slope, and picks the highest R²
/// (ties within 1e-9 go to the widest strain span, then the earliest window).
pub fn fit_modulus(curve: &StressStrainCurve, strategy: &FitStrategy) -> Result<ModulusFit> {
    let loading = curve.first_loading();
    let segment = loading.last().map(|&i| curve.points[i].segment).unwrap_or_default();
    let xs: Vec<f64> = loading.iter().map(|&i| curve.points[i].strain).collect();
    let ys: Vec<f64> = loading.iter().map(|&i| curve.points[i].stress).collect();
    if xs.len() < 5 {
        return Err(Error::Analysis(format!(
            "modulus fit needs at least 5 loading points, found {}",
            xs.len()
        )));
    }

    let (lo, hi) = match *strategy {
        FitStrategy::Auto => best_window(&xs, &ys)
            .ok_or_else(|| Error::Analysis("no loading window with a positive, well-defined slope".into()))?,
        FitStrategy::Window { strain_lo, strain_hi } => {
            let picked: Vec<usize> = (0..xs.len())
                .filter(|&i| xs[i] >= strain_lo && xs[i] <= strain_hi)
                .collect();
            if picked.len() < 5 {
                return Err(Error::Analysis(format!(
                    "window [{strain_lo:e}, {strain_hi:e}] holds {} loading points; at least 5 are needed",
                    picked.len()
                )));
            }
            let wx: Vec<f64> = picked.iter().map(|&i| xs[i]).collect();
            let wy: Vec<f64> = picked.iter().map(|&i| ys[i]).collect();
            return finish_fit(&wx, &wy, segment);
        }
    };
    finish_fit(&xs[lo..=hi], &ys[lo..=hi], segment)
}

fn finish_fit(xs: &[f64], ys: &[f64], segment: usize) -> Result<ModulusFit> {
    let line = least_squares(xs, ys).ok_or_else(|| Error::Analysis("fit window has no strain spread".into()))?;
    let mut warnings = Vec::new();
    if line.r_squared < LOW_CONFIDENCE_R2 {
        warnings.push(format!(
            "low-confidence modulus fit: R^2 = {:.4} < {LOW_CONFIDENCE_R2}",
            line.r_squared
        ));
    }
    let (strain_lo, strain_hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(ModulusFit {
        modulus: line.slope,
        intercept: line.intercept,
        strain_lo,
        strain_hi,
        r_squared: line.r_squared,
        point_count: xs.len(),
        segment,
        warnings,
    })
}

/// Returns the inclusive index range of the selected window.
fn best_window(xs: &[f64], ys: &[f64]) -> Option<(usize, usize)> {
    let n = xs.len();
    let min_len = 5usize.max((0.1 * n as f64).ceil() as usize).min(n);
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;

    // Prefix sums of centered data.
    let mut acc = vec![[0.0f64; 5]; n + 1];
    for i in 0..n {
        let x = xs[i] - mx;
        let y = ys[i] - my;
        let prev = acc[i];
        acc[i + 1] = [
            prev[0] + x,
            prev[1] + y,
            prev[2] + x * x,
            prev[3] + x * y,
            prev[4] + y * y,
        ];
    }
    let score = |i: usize, j: usize| -> Option<f64> {
        let m = (j - i + 1) as f64;
        let s: Vec<f64> = (0..5).map(|k| acc[j + 1][k] - acc[i][k]).collect();
        let sxx = s[2] - s[0] * s[0] / m;
        let sxy = s[3] - s[0] * s[1] / m;
        let syy = s[4] - s[1] * s[1] / m;
        // Spreads below the prefix-sum round-off floor are flat windows.
        if sxx <= ROUNDOFF_FLOOR * s[2] || syy <= ROUNDOFF_FLOOR * s[4] || sxy <= 0.0 {
            return None;
        }
        Some((sxy * sxy / (sxx * syy)).min(1.0))
    };

    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + min_len - 1)..n {
            if let Some(r2) = score(i, j) {
                best = best.max(r2);
            }
        }
    }
    if !best.is_finite() {
        return None;
    }
    let mut chosen: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (i + min_len - 1)..n {
            match score(i, j) {
                Some(r2) if r2 >= best - R2_TIE => {
                    let span = xs[j] - xs[i];
                    if chosen.is_none_or(|(_, _, s)| span > s) {
                        chosen = Some((i, j, span));
                    }
                }
                _ => {}
            }
        }
    }
    chosen.map(|(i, j, _)| (i, j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetYield {
    pub stress: f64,
    pub strain: f64,
    pub offset: f64,
    pub segment: usize,
}

/// Stress where the first loading curve meets `σ = E·(ε − offset)`.
///
/// Returns `Ok(None)` when the curve never crosses the offset line.
pub fn offset_yield(curve: &StressStrainCurve, modulus: f64, offset: f64) -> Result<Option<OffsetYield>> {
    if !(modulus > 0.0 && modulus.is_finite()) {
        return Err(Error::Input(format!("modulus must be > 0, got {modulus} Pa")));
    }
    if !(offset >= 0.0 && offset.is_finite()) {
        return Err(Error::Input(format!("offset strain must be >= 0, got {offset}")));
    }
    let loading = curve.first_loading();
    let gap = |i: usize| {
        let p = &curve.points[i];
        p.stress - modulus * (p.strain - offset)
    };
    for w in loading.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ga, gb) = (gap(a), gap(b));
        if ga > 0.0 && gb <= 0.0 {
            let f = ga / (ga - gb);
            let (pa, pb) = (&curve.points[a], &curve.points[b]);
            return Ok(Some(OffsetYield {
                stress: pa.stress + f * (pb.stress - pa.stress),
                strain: pa.strain + f * (pb.strain - pa.strain),
                offset,
                segment: pb.segment,
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HallPetchFit {
    pub friction_stress: f64,
    pub coefficient: f64,
    pub rms_residual: f64,
    pub point_count: usize,
}

/// Least squares of yield stress against `D^(-1/2)` for `(grain_size m, yield Pa)` points.
pub fn fit_hall_petch(points: &[(f64, f64)]) -> Result<HallPetchFit> {
    for &(d, s) in points {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Input(format!("grain size must be > 0, got {d} m")));
        }
        if !s.is_finite() {
            return Err(Error::Input(format!("yield stress must be finite, got {s} Pa")));
        }
    }
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::Input(format!(
            "degenerate Hall-Petch input: need at least 2 distinct grain sizes, found {}",
            sizes.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0.sqrt()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let line = least_squares(&xs, &ys).ok_or_else(|| Error::Input("degenerate Hall-Petch input".into()))?;
    Ok(HallPetchFit {
        friction_stress: line.intercept,
        coefficient: line.slope,
        rms_residual: line.rms_residual,
        point_count: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationMetrics {
    pub segment: usize,
    pub cycle: u32,
    pub stress_start: f64,
    pub stress_end: f64,
    /// `stress_start − stress_end`.
    pub drop: f64,
    /// `drop / stress_start`; `None` when the hold starts unloaded.
    pub relative_drop: Option<f64>,
    pub duration: f64,
}

/// Stress drop over every displacement hold in the trace.
pub fn relaxation_metrics(trace: &Trace, curve: &StressStrainCurve) -> Vec<RelaxationMetrics> {
    trace
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::HoldDisplacement && !s.samples.is_empty())
        .filter(|s| s.samples.end <= curve.points.len())
        .map(|span| {
            let start = span.samples.start.saturating_sub(1);
            let end = span.samples.end - 1;
            let (a, b) = (&curve.points[start], &curve.points[end]);
            let drop = a.stress - b.stress;
            RelaxationMetrics {
                segment: span.index,
                cycle: span.cycle,
                stress_start: a.stress,
                stress_end: b.stress,
                drop,
                relative_drop: (a.stress != 0.0).then(|| drop / a.stress),
                duration: b.time - a.time,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub strategy: FitStrategy,
    pub offset: f64,
    /// Reference bulk modulus (Pa) for the film/bulk ratio.
    pub bulk_modulus: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            strategy: FitStrategy::Auto,
            offset: DEFAULT_YIELD_OFFSET,
            bulk_modulus: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkComparison {
    pub bulk_modulus: f64,
    /// Film modulus over bulk modulus.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub geometry: SpecimenGeometry,
    pub machine_compliance: f64,
    pub curve_points: usize,
    pub curve_digest: String,
    pub modulus: ModulusFit,
    pub offset: f64,
    pub offset_yield: Option<OffsetYield>,
    pub relaxation: Vec<RelaxationMetrics>,
    pub bulk: Option<BulkComparison>,
    pub warnings: Vec<String>,
}

/// Full reduction of one trace.
pub fn analyze(
    trace: &Trace,
    geometry: &SpecimenGeometry,
    machine_compliance: f64,
    options: &AnalysisOptions,
) -> Result<AnalysisReport> {
    trace.validate()?;
    let curve = reduce_trace(trace, geometry, machine_compliance)?;
    let modulus = fit_modulus(&curve, &options.strategy)?;
    let yield_point = offset_yield(&curve, modulus.modulus, options.offset)?;
    let relaxation = relaxation_metrics(trace, &curve);

    let mut warnings = geometry.warnings();
    warnings.extend(modulus.warnings.iter().cloned());
    if yield_point.is_none() {
        warnings.push(format!(
            "no yield observed: first loading never crosses the {}% offset line",
            options.offset * 100.0
        ));
    }
    let bulk = match options.bulk_modulus {
        Some(b) if b > 0.0 && b.is_finite() => Some(BulkComparison {
            bulk_modulus: b,
            ratio: modulus.modulus / b,
        }),
        Some(b) => return Err(Error::Input(format!("bulk modulus must be > 0, got {b} Pa"))),
        None => None,
    };

    Ok(AnalysisReport {
        geometry: *geometry,
        machine_compliance,
        curve_points: curve.len(),
        curve_digest: curve.digest(),
        modulus,
        offset: options.offset,
        offset_yield: yield_point,
        relaxation,
        bulk,
        warnings,
    })
}
