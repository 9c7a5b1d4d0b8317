//! Uniform grids, sampled complex envelopes, canonical pulse shapes and scalar
//! pulse diagnostics.
//!
//! Every grid is cell-centred: sample `k` sits at `start + k·step` and stands for
//! the cell `[start + (k - ½)·step, start + (k + ½)·step]`. Norms are the matching
//! midpoint quadrature `Σ|s_k|²·step`. Times are in nanoseconds and frequencies in
//! GHz (ordinary, not angular); space is the cell length normalised to one.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing grid coordinates.
const GRID_TOL: f64 = 1e-9;

/// Intensity half-width of the Gaussian support, in units of its FWHM.
const GAUSSIAN_SUPPORT_FWHM: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    start: f64,
    step: f64,
    n_points: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    start: f64,
    step: f64,
    n_points: usize,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        Grid::new(raw.start, raw.step, raw.n_points)
    }
}

impl Grid {
    pub fn new(start: f64, step: f64, n_points: usize) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::InvalidGrid(format!("start must be finite, got {start}")));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n_points}")));
        }
        Ok(Self { start, step, n_points })
    }

    /// `n` cells tiling `[lo, hi]`, sampled at the cell centres.
    pub fn cell_centered(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!("empty interval [{lo}, {hi}]")));
        }
        let step = (hi - lo) / n.max(1) as f64;
        Self::new(lo + 0.5 * step, step, n)
    }

    /// Space grid over the normalised cell `[0, 1]`.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::cell_centered(0.0, 1.0, n)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |k| self.coord(k))
    }

    /// Outer cell edges `(lo, hi)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.start - 0.5 * self.step,
            self.start + (self.n_points as f64 - 0.5) * self.step,
        )
    }

    /// Total covered length `n·step`.
    pub fn span(&self) -> f64 {
        self.n_points as f64 * self.step
    }

    pub fn dilated(&self, factor: f64) -> Result<Self> {
        Self::new(self.start * factor, self.step * factor, self.n_points)
    }

    pub fn is_compatible(&self, other: &Grid) -> bool {
        self.n_points == other.n_points
            && (self.step - other.step).abs() <= GRID_TOL * self.step
            && (self.start - other.start).abs() <= GRID_TOL * self.step.max(self.start.abs())
    }

    pub(crate) fn ensure_compatible(&self, other: &Grid, what: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// A complex amplitude sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvelope")]
pub struct ComplexEnvelope {
    grid: Grid,
    samples: Vec<Complex64>,
}

#[derive(Deserialize)]
struct RawEnvelope {
    grid: Grid,
    samples: Vec<Complex64>,
}

impl TryFrom<RawEnvelope> for ComplexEnvelope {
    type Error = Error;

    fn try_from(raw: RawEnvelope) -> Result<Self> {
        ComplexEnvelope::new(raw.grid, raw.samples)
    }
}

impl ComplexEnvelope {
    pub fn new(grid: Grid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {}-point grid",
                samples.len(),
                grid.len()
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::param("samples", "non-finite sample"));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let samples = grid.coords().map(&mut f).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `Σ|s_k|²·step`.
    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.step
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.norm_sqr() == 0.0)
    }

    pub fn max_intensity(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|s| s * factor).collect(),
        }
    }

    /// `⟨self, other⟩ = Σ conj(a_k)·b_k·step`.
    pub fn inner(&self, other: &ComplexEnvelope) -> Result<Complex64> {
        self.grid.ensure_compatible(&other.grid, "inner product")?;
        let acc: Complex64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum();
        Ok(acc * self.grid.step)
    }

    /// Unit-norm copy.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroInput);
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    /// Shift by whole samples; positive `steps` moves the content later.
    /// Vacated samples are zero.
    pub fn shifted_by_steps(&self, steps: isize) -> Self {
        let n = self.len() as isize;
        let samples = (0..n)
            .map(|i| {
                let src = i - steps;
                if (0..n).contains(&src) {
                    self.samples[src as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Self {
            grid: self.grid,
            samples,
        }
    }

    /// Same samples on a grid stretched by `factor` about the origin.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        Ok(Self {
            grid: self.grid.dilated(factor)?,
            samples: self.samples.clone(),
        })
    }

    /// Write `coordinate,re,im` rows, preceded by `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut writer: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(writer, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["coordinate", "re", "im"])?;
        for (t, s) in self.grid.coords().zip(&self.samples) {
            w.write_record([fmt_f64(t), fmt_f64(s.re), fmt_f64(s.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the CSV layout written by [`ComplexEnvelope::write_csv`]. The grid is
    /// recovered from the coordinate column, which must be uniform.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut coords = Vec::new();
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() < 3 {
                return Err(Error::Parse(format!(
                    "expected 3 columns (coordinate, re, im), got {}",
                    record.len()
                )));
            }
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("column {i}: {e}")))
            };
            coords.push(parse(0)?);
            samples.push(Complex64::new(parse(1)?, parse(2)?));
        }
        if coords.len() < 2 {
            return Err(Error::Parse("envelope needs at least 2 rows".into()));
        }
        let n = coords.len();
        let step = (coords[n - 1] - coords[0]) / (n - 1) as f64;
        for (k, c) in coords.iter().enumerate() {
            let expect = coords[0] + k as f64 * step;
            if (c - expect).abs() > 1e-6 * step.abs().max(1e-300) {
                return Err(Error::Parse(format!(
                    "non-uniform coordinate at row {k}: {c} (expected {expect})"
                )));
            }
        }
        Self::new(Grid::new(coords[0], step, n)?, samples)
    }
}

/// Shortest round-trip representation of a float.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum PulseKind {
    /// Flat-top pulse. Edges are raised-cosine ramps in intensity centred on
    /// the nominal edges; `None` means two grid steps, `Some(0.0)` a hard box.
    Square { rise_time: Option<f64> },
    /// Gaussian whose intensity FWHM equals `duration`, centred at
    /// `delay + duration / 2`.
    Gaussian,
    /// Explicit samples; length must match the grid.
    Custom { samples: Vec<Complex64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PulseShapeJson", into = "PulseShapeJson")]
pub struct PulseShapeSpec {
    pub kind: PulseKind,
    pub duration: f64,
    pub amplitude: Complex64,
    pub delay: f64,
}

/// Flat JSON form: `{"kind": "square", "duration", "amplitude", "delay",
/// "rise_time"?}` with `samples` only for custom pulses.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseShapeJson {
    kind: String,
    duration: f64,
    amplitude: Complex64,
    #[serde(default)]
    delay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rise_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<Complex64>>,
}

impl TryFrom<PulseShapeJson> for PulseShapeSpec {
    type Error = String;

    fn try_from(j: PulseShapeJson) -> std::result::Result<Self, String> {
        let kind = match (j.kind.as_str(), j.rise_time, j.samples) {
            ("square", rise_time, None) => PulseKind::Square { rise_time },
            ("gaussian", None, None) => PulseKind::Gaussian,
            ("custom", None, Some(samples)) => PulseKind::Custom { samples },
            ("square" | "gaussian" | "custom", ..) => {
                return Err(format!(
                    "pulse kind `{}`: rise_time is only for square pulses, samples only (and always) for custom",
                    j.kind
                ))
            }
            (other, ..) => {
                return Err(format!(
                    "unknown pulse kind `{other}`, expected square, gaussian or custom"
                ))
            }
        };
        Ok(Self {
            kind,
            duration: j.duration,
            amplitude: j.amplitude,
            delay: j.delay,
        })
    }
}

impl From<PulseShapeSpec> for PulseShapeJson {
    fn from(s: PulseShapeSpec) -> Self {
        let (kind, rise_time, samples) = match s.kind {
            PulseKind::Square { rise_time } => ("square", rise_time, None),
            PulseKind::Gaussian => ("gaussian", None, None),
            PulseKind::Custom { samples } => ("custom", None, Some(samples)),
        };
        Self {
            kind: kind.to_string(),
            duration: s.duration,
            amplitude: s.amplitude,
            delay: s.delay,
            rise_time,
            samples,
        }
    }
}

impl PulseShapeSpec {
    pub fn square(duration: f64, amplitude: f64, delay: f64) -> Self {
        Self {
            kind: PulseKind::Square { rise_time: None },
            duration,
            amplitude: Complex64::new(amplitude, 0.0),
            delay,
        }
    }

    pub fn gaussian(fwhm: f64, amplitude: f64, delay: f64) -> Self {
        Self {
            kind: PulseKind::Gaussian,
            duration: fwhm,
            amplitude: Complex64::new(amplitude, 0.0),
            delay,
        }
    }

    pub fn with_rise_time(mut self, rise: f64) -> Self {
        if let PulseKind::Square { rise_time } = &mut self.kind {
            *rise_time = Some(rise);
        }
        self
    }

    pub fn with_amplitude(mut self, amplitude: Complex64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::param("duration", format!("must be > 0, got {}", self.duration)));
        }
        if !self.delay.is_finite() {
            return Err(Error::param("delay", "must be finite"));
        }
        if let PulseKind::Square { rise_time: Some(r) } = self.kind {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::param("rise_time", format!("must be >= 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Time interval outside which the pulse is (numerically) zero.
    pub fn support(&self, grid: &Grid) -> (f64, f64) {
        match &self.kind {
            PulseKind::Square { rise_time } => {
                let r = rise_time.unwrap_or(2.0 * grid.step());
                (self.delay - 0.5 * r, self.delay + self.duration + 0.5 * r)
            }
            PulseKind::Gaussian => {
                let c = self.delay + 0.5 * self.duration;
                let half = GAUSSIAN_SUPPORT_FWHM * self.duration;
                (c - half, c + half)
            }
            PulseKind::Custom { .. } => grid.extent(),
        }
    }
}

/// Sample a pulse shape on `grid`.
pub fn make_pulse(spec: &PulseShapeSpec, grid: &Grid) -> Result<ComplexEnvelope> {
    spec.validate()?;
    if let PulseKind::Custom { samples } = &spec.kind {
        let scaled = samples.iter().map(|s| s * spec.amplitude).collect();
        return ComplexEnvelope::new(*grid, scaled);
    }
    let (lo, hi) = spec.support(grid);
    let (grid_lo, grid_hi) = grid.extent();
    let slack = GRID_TOL * grid.step();
    if lo < grid_lo - slack || hi > grid_hi + slack {
        return Err(Error::PulseTruncated {
            lo,
            hi,
            grid_lo,
            grid_hi,
        });
    }
    let amp = spec.amplitude;
    let env = match spec.kind {
        PulseKind::Square { rise_time } => {
            let rise = rise_time.unwrap_or(2.0 * grid.step());
            let (t0, t1) = (spec.delay, spec.delay + spec.duration);
            ComplexEnvelope::from_fn(*grid, |t| {
                if rise == 0.0 {
                    if t >= t0 && t < t1 {
                        amp
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                } else {
                    let inside = (t - lo).min(hi - t);
                    if inside <= 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else if inside >= rise {
                        amp
                    } else {
                        amp * (0.5 * PI * inside / rise).sin()
                    }
                }
            })
        }
        PulseKind::Gaussian => {
            let centre = spec.delay + 0.5 * spec.duration;
            let fwhm = spec.duration;
            // field exp(-2 ln2 τ²/F²) has intensity FWHM F
            let k = 2.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
            ComplexEnvelope::from_fn(*grid, |t| {
                let tau = t - centre;
                amp * (-k * tau * tau).exp()
            })
        }
        PulseKind::Custom { .. } => unreachable!(),
    };
    Ok(env)
}

/// `∫|env|²`; for a control field this is the drive area `h(0, t_W)`.
pub fn energy(env: &ComplexEnvelope) -> f64 {
    env.norm_sqr()
}

/// Full width at half maximum of `|env|²`, using the outermost half-maximum
/// crossings and linear interpolation between bracketing samples.
pub fn fwhm(env: &ComplexEnvelope) -> Result<f64> {
    let intensity: Vec<f64> = env.samples().iter().map(|s| s.norm_sqr()).collect();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::NoPeak);
    }
    let half = 0.5 * peak;
    let grid = env.grid();
    let first = intensity.iter().position(|&v| v >= half).unwrap();
    let last = intensity.iter().rposition(|&v| v >= half).unwrap();

    let crossing = |below: usize, above: usize| -> f64 {
        let (ib, ia) = (intensity[below], intensity[above]);
        let frac = (half - ib) / (ia - ib);
        grid.coord(below) + frac * (grid.coord(above) - grid.coord(below))
    };
    let left = if first == 0 {
        grid.coord(0)
    } else {
        crossing(first - 1, first)
    };
    let right = if last + 1 == intensity.len() {
        grid.coord(last)
    } else {
        crossing(last + 1, last)
    };
    Ok(right - left)
}

/// FWHM of the power spectrum `|Σ_k s_k e^{-2πi f t_k}|²`, in inverse time
/// units. The spectrum is scanned on a fine grid and the peak and outermost
/// half-maximum crossings are then refined on the continuous transform.
pub fn bandwidth_estimate(env: &ComplexEnvelope) -> Result<f64> {
    if env.is_zero() {
        return Err(Error::NoPeak);
    }
    let dt = env.grid().step();
    let samples = env.samples();
    let power = |f: f64| -> f64 {
        let w = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
        let mut phasor = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in samples {
            acc += s * phasor;
            phasor *= w;
        }
        acc.norm_sqr()
    };

    let nyquist = 0.5 / dt;
    let n_scan = (16 * samples.len()).max(2048);
    let df = 2.0 * nyquist / n_scan as f64;
    let freqs: Vec<f64> = (0..=n_scan).map(|i| -nyquist + i as f64 * df).collect();
    let spectrum: Vec<f64> = freqs.iter().map(|&f| power(f)).collect();

    let (imax, _) = spectrum
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
    let lo = freqs[imax.saturating_sub(1)];
    let hi = freqs[(imax + 1).min(n_scan)];
    let f_peak = golden_max(&power, lo, hi);
    let peak = power(f_peak).max(spectrum[imax]);
    let half = 0.5 * peak;

    let first = spectrum.iter().position(|&p| p >= half).unwrap_or(imax);
    let last = spectrum.iter().rposition(|&p| p >= half).unwrap_or(imax);
    let left = if first == 0 {
        freqs[0]
    } else {
        bisect_crossing(&power, half, freqs[first - 1], freqs[first])
    };
    let right = if last == n_scan {
        freqs[n_scan]
    } else {
        bisect_crossing(&power, half, freqs[last + 1], freqs[last])
    };
    Ok(right - left)
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisect for `f(x) = level` given `f(below) < level <= f(above)`.
fn bisect_crossing(f: &impl Fn(f64) -> f64, level: f64, mut below: f64, mut above: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (below + above);
        if f(mid) >= level {
            above = mid;
        } else {
            below = mid;
        }
    }
    0.5 * (below + above)
}
