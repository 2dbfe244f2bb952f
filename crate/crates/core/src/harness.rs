//! Experiment grids over feature-subset and kernel schemes, metrics, report
//! tables and plot data.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Subset, N_FEATURES};
use crate::kbstore::{self, KnowledgeBase, Split};
use crate::kernels::KernelChoice;
use crate::simulator::SwingCurves;
use crate::vbpmkl::{self, SpaceSpec, TrainedModel, VbConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Gaussian,
    Polynomial,
}

impl KernelKind {
    pub fn choice(self) -> KernelChoice {
        match self {
            KernelKind::Gaussian => KernelChoice::gaussian(),
            KernelKind::Polynomial => KernelChoice::polynomial(),
        }
    }

    fn letter(self) -> char {
        match self {
            KernelKind::Gaussian => 'g',
            KernelKind::Polynomial => 'p',
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g" | "kg" | "gaussian" => Some(KernelKind::Gaussian),
            "p" | "kp" | "polynomial" => Some(KernelKind::Polynomial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    Clean,
    /// Train on clean features, test on noisy ones.
    TestNoisy,
    TrainAndTestNoisy,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::Clean => "clean",
            NoiseMode::TestNoisy => "test-noisy",
            NoiseMode::TrainAndTestNoisy => "train-and-test-noisy",
        }
    }

    pub fn needs_noisy_kb(self) -> bool {
        self != NoiseMode::Clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Subset(Subset),
    /// All 23 features as a single space.
    Union,
}

/// Feature spaces with their kernels plus a noise mode.
///
/// Text form: `F1:g,F3:p`, `union:g`, optionally followed by
/// `/test-noisy` or `/train-and-test-noisy`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub spaces: Vec<(Selection, KernelKind)>,
    pub noise: NoiseMode,
}

impl SchemeSpec {
    pub fn subsets(items: &[(Subset, KernelKind)]) -> Self {
        Self { spaces: items.iter().map(|&(s, k)| (Selection::Subset(s), k)).collect(), noise: NoiseMode::Clean }
    }

    pub fn union(kernel: KernelKind) -> Self {
        Self { spaces: vec![(Selection::Union, kernel)], noise: NoiseMode::Clean }
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.spaces.is_empty() {
            return Err(Error::invalid("a scheme needs at least one feature space"));
        }
        let has_union = self.spaces.iter().any(|(s, _)| *s == Selection::Union);
        if has_union && self.spaces.len() != 1 {
            return Err(Error::invalid("union uses exactly one kernel over all features"));
        }
        for (i, a) in self.spaces.iter().enumerate() {
            if self.spaces[..i].iter().any(|b| b.0 == a.0) {
                return Err(Error::invalid("a feature subset may appear only once"));
            }
        }
        Ok(())
    }

    pub fn space_specs(&self) -> Vec<SpaceSpec> {
        self.spaces
            .iter()
            .map(|&(sel, k)| match sel {
                Selection::Subset(s) => {
                    SpaceSpec { name: s.name().to_string(), columns: s.columns().collect(), kernel: k.choice() }
                }
                Selection::Union => {
                    SpaceSpec { name: "union".to_string(), columns: (0..N_FEATURES).collect(), kernel: k.choice() }
                }
            })
            .collect()
    }

    /// Human-readable combination, e.g. `F1(Kg) F2(Kp)`.
    pub fn description(&self) -> String {
        let mut parts: Vec<String> = self
            .spaces
            .iter()
            .map(|&(sel, k)| {
                let name = match sel {
                    Selection::Subset(s) => s.name(),
                    Selection::Union => "All features",
                };
                format!("{name}(K{})", k.letter())
            })
            .collect();
        if self.noise != NoiseMode::Clean {
            parts.push(format!("[{}]", self.noise.name()));
        }
        parts.join(" ")
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self
            .spaces
            .iter()
            .map(|&(sel, k)| {
                let name = match sel {
                    Selection::Subset(s) => s.name(),
                    Selection::Union => "union",
                };
                format!("{name}:{}", k.letter())
            })
            .collect();
        write!(f, "{}", body.join(","))?;
        if self.noise != NoiseMode::Clean {
            write!(f, "/{}", self.noise.name())?;
        }
        Ok(())
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, noise) = match s.split_once('/') {
            Some((b, n)) => {
                let mode = match n.trim() {
                    "clean" => NoiseMode::Clean,
                    "test-noisy" => NoiseMode::TestNoisy,
                    "train-and-test-noisy" => NoiseMode::TrainAndTestNoisy,
                    other => return Err(Error::invalid(format!("unknown noise mode '{other}'"))),
                };
                (b, mode)
            }
            None => (s, NoiseMode::Clean),
        };
        let mut spaces = Vec::new();
        for item in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, kernel) = item.split_once(':').unwrap_or((item, "g"));
            let kernel = KernelKind::parse(kernel.trim())
                .ok_or_else(|| Error::invalid(format!("unknown kernel '{kernel}' in scheme '{s}'")))?;
            let sel = if name.trim().eq_ignore_ascii_case("union") {
                Selection::Union
            } else {
                Selection::Subset(
                    Subset::parse(name.trim())
                        .ok_or_else(|| Error::invalid(format!("unknown feature subset '{name}' in scheme '{s}'")))?,
                )
            };
            spaces.push((sel, kernel));
        }
        let spec = SchemeSpec { spaces, noise };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedScheme {
    pub id: String,
    pub spec: SchemeSpec,
}

fn named(id: impl Into<String>, spec: SchemeSpec) -> NamedScheme {
    NamedScheme { id: id.into(), spec }
}

/// Subset-combination grid, all Gaussian: ids 1–8.
pub fn table4() -> Vec<NamedScheme> {
    use KernelKind::Gaussian as G;
    use Subset::*;
    let combos: [&[Subset]; 7] = [&[F1], &[F2], &[F3], &[F1, F2], &[F1, F3], &[F2, F3], &[F1, F2, F3]];
    let mut out: Vec<NamedScheme> = combos[..3]
        .iter()
        .enumerate()
        .map(|(i, c)| named((i + 1).to_string(), SchemeSpec::subsets(&c.iter().map(|&s| (s, G)).collect::<Vec<_>>())))
        .collect();
    out.push(named("4", SchemeSpec::union(G)));
    for (i, c) in combos[3..].iter().enumerate() {
        out.push(named((i + 5).to_string(), SchemeSpec::subsets(&c.iter().map(|&s| (s, G)).collect::<Vec<_>>())));
    }
    out
}

/// Kernel grid over F1, F2, F3: ids 9–16, F1 most significant, Kp before Kg.
pub fn table5() -> Vec<NamedScheme> {
    (0..8)
        .map(|bits| {
            let kind = |b: usize| if bits >> b & 1 == 1 { KernelKind::Gaussian } else { KernelKind::Polynomial };
            let spec = SchemeSpec::subsets(&[(Subset::F1, kind(2)), (Subset::F2, kind(1)), (Subset::F3, kind(0))]);
            named((9 + bits).to_string(), spec)
        })
        .collect()
}

fn all_gaussian() -> SchemeSpec {
    use KernelKind::Gaussian as G;
    SchemeSpec::subsets(&[(Subset::F1, G), (Subset::F2, G), (Subset::F3, G)])
}

/// Measurement-noise pair: ids 17 (clean training) and 18 (noisy training).
pub fn table6() -> Vec<NamedScheme> {
    vec![
        named("17", all_gaussian().with_noise(NoiseMode::TestNoisy)),
        named("18", all_gaussian().with_noise(NoiseMode::TrainAndTestNoisy)),
    ]
}

/// Both readings of the large-system kernel combination.
pub fn hebei() -> Vec<NamedScheme> {
    use KernelKind::*;
    vec![
        named("hebei-ggg", all_gaussian()),
        named(
            "hebei-gpp",
            SchemeSpec::subsets(&[(Subset::F1, Gaussian), (Subset::F2, Polynomial), (Subset::F3, Polynomial)]),
        ),
    ]
}

/// A table name (`table4`, `table5`, `table6`, `hebei`) or a `;`-separated
/// list of scheme strings.
pub fn scheme_set(name: &str) -> Result<Vec<NamedScheme>> {
    match name {
        "table4" => Ok(table4()),
        "table5" => Ok(table5()),
        "table6" => Ok(table6()),
        "hebei" => Ok(hebei()),
        custom => {
            let list: Vec<NamedScheme> = custom
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| Ok(named(s.trim().to_string(), s.parse()?)))
                .collect::<Result<_>>()?;
            if list.is_empty() {
                return Err(Error::invalid("empty scheme list"));
            }
            Ok(list)
        }
    }
}

/// Counts keyed (true, predicted); stable is +1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub stable_as_stable: usize,
    pub stable_as_unstable: usize,
    pub unstable_as_stable: usize,
    pub unstable_as_unstable: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.stable_as_stable + self.stable_as_unstable + self.unstable_as_stable + self.unstable_as_unstable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub confusion: Confusion,
}

pub fn metrics(predictions: &[i32], labels: &[i32]) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut c = Confusion::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        if !matches!(t, 1 | -1) || !matches!(p, 1 | -1) {
            return Err(Error::invalid(format!("labels must be ±1, got prediction {p} for label {t}")));
        }
        match (t, p) {
            (1, 1) => c.stable_as_stable += 1,
            (1, _) => c.stable_as_unstable += 1,
            (_, 1) => c.unstable_as_stable += 1,
            _ => c.unstable_as_unstable += 1,
        }
    }
    let correct = c.stable_as_stable + c.unstable_as_unstable;
    Ok(Metrics { accuracy: correct as f64 / c.total() as f64, confusion: c })
}

/// Predicts every sample and scores it against the stored labels.
pub fn evaluate(model: &TrainedModel, samples: &[FeatureVector]) -> Result<Metrics> {
    let preds: Vec<i32> = samples.par_iter().map(|s| model.classify(&s.to_array())).collect::<Result<_>>()?;
    let labels: Vec<i32> = samples.iter().map(|s| s.label as i32).collect();
    metrics(&preds, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub metrics: Metrics,
    pub iterations: usize,
    pub converged: bool,
    pub beta: Vec<f64>,
}

/// Trains on `train` and scores on `test` with the scheme's spaces.
pub fn run_on(
    train: &[FeatureVector],
    test: &[FeatureVector],
    scheme: &SchemeSpec,
    config: &VbConfig,
    seed: u64,
) -> Result<(TrainedModel, SchemeResult)> {
    scheme.validate()?;
    let model = vbpmkl::train_tsa(train, &scheme.space_specs(), config, seed)?;
    let m = evaluate(&model, test)?;
    let result =
        SchemeResult { metrics: m, iterations: model.iterations, converged: model.converged, beta: model.beta.clone() };
    Ok((model, result))
}

/// One cell: picks train/test sides from the clean or noisy KB according to
/// the scheme's noise mode. Errors carry the scheme string.
pub fn run_scheme(
    kb: &KnowledgeBase,
    noisy: Option<&KnowledgeBase>,
    split: &Split,
    scheme: &SchemeSpec,
    config: &VbConfig,
    seed: u64,
) -> Result<SchemeResult> {
    let wrap = |e: Error| Error::Scheme { scheme: scheme.to_string(), source: Box::new(e) };
    let (train_kb, test_kb) = match scheme.noise {
        NoiseMode::Clean => (kb, kb),
        mode => {
            let noisy =
                noisy.ok_or_else(|| wrap(Error::invalid(format!("noise mode {} needs a noisy KB", mode.name()))))?;
            check_aligned(kb, noisy).map_err(wrap)?;
            if mode == NoiseMode::TestNoisy {
                (kb, noisy)
            } else {
                (noisy, noisy)
            }
        }
    };
    let in_range = |idx: &[usize]| idx.iter().all(|&i| i < kb.len());
    if !in_range(&split.train) || !in_range(&split.test) {
        return Err(wrap(Error::invalid("split indices exceed the KB size")));
    }
    run_on(&train_kb.subset(&split.train), &test_kb.subset(&split.test), scheme, config, seed)
        .map(|(_, r)| r)
        .map_err(wrap)
}

/// The noisy KB must describe the same scenarios, in order, with the same labels.
pub fn check_aligned(clean: &KnowledgeBase, noisy: &KnowledgeBase) -> Result<()> {
    if clean.len() != noisy.len()
        || clean.samples.iter().zip(&noisy.samples).any(|(a, b)| a.scenario_id != b.scenario_id || a.label != b.label)
    {
        return Err(Error::invalid("clean and noisy KBs do not describe the same scenarios"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Training-set sizes; one report column each.
    pub train_sizes: Vec<usize>,
    /// Repetition seeds; each drives both the split and training.
    pub seeds: Vec<u64>,
    pub config: VbConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scheme_id: String,
    pub scheme: String,
    pub n_train: usize,
    pub seed: u64,
    pub outcome: std::result::Result<SchemeResult, String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub kb_hash: String,
    pub noisy_kb_hash: Option<String>,
    pub options: SweepOptions,
    pub schemes: Vec<(String, String)>,
    pub cells: Vec<CellReport>,
}

/// Runs every (scheme × train size × seed) cell in parallel. Cell failures
/// are recorded and the sweep continues.
pub fn sweep(
    kb: &KnowledgeBase,
    noisy: Option<&KnowledgeBase>,
    schemes: &[NamedScheme],
    options: &SweepOptions,
    kb_hash: String,
    noisy_kb_hash: Option<String>,
) -> Result<SchemeReport> {
    if schemes.is_empty() {
        return Err(Error::invalid("sweep needs at least one scheme"));
    }
    if options.train_sizes.is_empty() || options.seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one split size and one seed"));
    }
    options.config.validate()?;
    for &n in &options.train_sizes {
        if n == 0 || n >= kb.len() {
            return Err(Error::invalid(format!("split size {n} must lie in (0, {})", kb.len())));
        }
    }
    let jobs: Vec<(&NamedScheme, usize, u64)> = schemes
        .iter()
        .flat_map(|s| {
            options.train_sizes.iter().flat_map(move |&n| options.seeds.iter().map(move |&seed| (s, n, seed)))
        })
        .collect();
    let cells: Vec<CellReport> = jobs
        .par_iter()
        .map(|&(s, n, seed)| {
            let start = Instant::now();
            let outcome = kbstore::split(kb.len(), n, seed)
                .and_then(|sp| run_scheme(kb, noisy, &sp, &s.spec, &options.config, seed))
                .map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("cell {} n={n} seed={seed} failed: {e}", s.id);
            }
            CellReport {
                scheme_id: s.id.clone(),
                scheme: s.spec.to_string(),
                n_train: n,
                seed,
                outcome,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    Ok(SchemeReport {
        kb_hash,
        noisy_kb_hash,
        options: options.clone(),
        schemes: schemes.iter().map(|s| (s.id.clone(), s.spec.description())).collect(),
        cells,
    })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

impl SchemeReport {
    /// Median accuracy over seeds of the successful cells, or `None` when
    /// every cell failed.
    pub fn median_accuracy(&self, scheme_id: &str, n_train: usize) -> Option<f64> {
        let mut acc: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.scheme_id == scheme_id && c.n_train == n_train)
            .filter_map(|c| c.outcome.as_ref().ok().map(|r| r.metrics.accuracy))
            .collect();
        median(&mut acc)
    }

    fn write_metadata(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# kb_sha256={}", self.kb_hash)?;
        if let Some(h) = &self.noisy_kb_hash {
            writeln!(w, "# noisy_kb_sha256={h}")?;
        }
        let seeds: Vec<String> = self.options.seeds.iter().map(u64::to_string).collect();
        writeln!(w, "# seeds={}", seeds.join(" "))?;
        writeln!(w, "# config={}", serde_json::to_string(&self.options.config).expect("config serializes"))
    }

    /// One row per scheme, one median-accuracy column per split size.
    pub fn write_table(&self, mut w: impl Write) -> std::io::Result<()> {
        self.write_metadata(&mut w)?;
        let cols: Vec<String> = self.options.train_sizes.iter().map(|n| format!("accuracy_train{n}")).collect();
        writeln!(w, "scheme_id,combination,{}", cols.join(","))?;
        for (id, desc) in &self.schemes {
            let vals: Vec<String> = self
                .options
                .train_sizes
                .iter()
                .map(|&n| self.median_accuracy(id, n).map_or("failed".to_string(), |a| format!("{a:.6}")))
                .collect();
            writeln!(w, "{id},\"{desc}\",{}", vals.join(","))?;
        }
        Ok(())
    }

    /// Every cell with its confusion counts. Wall time only when asked, so
    /// reports stay byte-identical across reruns by default.
    pub fn write_cells(&self, mut w: impl Write, with_timing: bool) -> std::io::Result<()> {
        self.write_metadata(&mut w)?;
        write!(
            w,
            "scheme_id,scheme,n_train,seed,status,accuracy,stable_as_stable,stable_as_unstable,unstable_as_stable,unstable_as_unstable,iterations,converged,beta"
        )?;
        writeln!(w, "{}", if with_timing { ",wall_ms" } else { "" })?;
        for c in &self.cells {
            write!(w, "{},\"{}\",{},{},", c.scheme_id, c.scheme, c.n_train, c.seed)?;
            match &c.outcome {
                Ok(r) => {
                    let cf = r.metrics.confusion;
                    let beta: Vec<String> = r.beta.iter().map(|b| format!("{b:.6}")).collect();
                    write!(
                        w,
                        "ok,{:.6},{},{},{},{},{},{},{}",
                        r.metrics.accuracy,
                        cf.stable_as_stable,
                        cf.stable_as_unstable,
                        cf.unstable_as_stable,
                        cf.unstable_as_unstable,
                        r.iterations,
                        r.converged,
                        beta.join(" ")
                    )?;
                }
                Err(e) => write!(w, "\"failed: {}\",,,,,,,,", e.replace('"', "'"))?,
            }
            if with_timing {
                write!(w, ",{:.1}", c.wall_ms)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub enum PlotSource<'a> {
    LowerBound(&'a [f64]),
    Swing(&'a SwingCurves),
}

/// Writes the CSV at `csv_path` and, when given, an SVG line chart.
pub fn emit_plot_data(source: &PlotSource<'_>, csv_path: &Path, svg_path: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    let series: Vec<(String, Vec<(f64, f64)>)>;
    let (xlabel, ylabel);
    match source {
        PlotSource::LowerBound(trace) => {
            writeln!(buf, "iteration,lower_bound").unwrap();
            for (i, v) in trace.iter().enumerate() {
                writeln!(buf, "{i},{v}").unwrap();
            }
            series = vec![("lower bound".into(), trace.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect())];
            (xlabel, ylabel) = ("iteration", "lower bound");
        }
        PlotSource::Swing(curves) => {
            writeln!(buf, "t_s,gen,delta_deg").unwrap();
            for (k, t) in curves.time.iter().enumerate() {
                for (g, d) in curves.delta.iter().enumerate() {
                    writeln!(buf, "{t},{},{}", g + 1, d[k].to_degrees()).unwrap();
                }
            }
            series = curves
                .delta
                .iter()
                .enumerate()
                .map(|(g, d)| {
                    let pts = d.iter().zip(&curves.time).map(|(v, t)| (*t, v.to_degrees())).collect();
                    (format!("G{}", g + 1), pts)
                })
                .collect();
            (xlabel, ylabel) = ("t (s)", "rotor angle (deg)");
        }
    }
    std::fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
    if let Some(p) = svg_path {
        std::fs::write(p, svg_chart(&series, xlabel, ylabel)).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn svg_chart(series: &[(String, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * m,
        h - 2.0 * m
    );
    s += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{ylabel}</text>\n",
        w / 2.0,
        h - 15.0,
        h / 2.0,
        h / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", m, h - m + 16.0),
        (x1, "end", w - m, h - m + 16.0),
        (y0, "end", m - 4.0, h - m),
        (y1, "end", m - 4.0, m + 4.0),
    ] {
        s += &format!("<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{v:.3}</text>\n");
    }
    for (i, (name, data)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = data
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        );
        s += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            w - m + 6.0,
            m + 14.0 * (i as f64 + 1.0)
        );
    }
    s += "</svg>\n";
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_trivial_cases() {
        assert_eq!(metrics(&[1, -1, 1], &[1, -1, 1]).unwrap().accuracy, 1.0);
        assert_eq!(metrics(&[-1, 1], &[1, -1]).unwrap().accuracy, 0.0);
        let m = metrics(&[1, 1, -1, -1], &[1, -1, 1, -1]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion.total(), 4);
        assert_eq!(m.confusion.unstable_as_stable, 1);
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1], &[1, 1]).is_err());
        assert!(metrics(&[1], &[0]).is_err());
    }

    #[test]
    fn table_shapes() {
        let t4 = table4();
        assert_eq!(t4.len(), 8);
        assert_eq!(t4[0].spec.to_string(), "F1:g");
        assert_eq!(t4[3].spec.to_string(), "union:g");
        assert_eq!(t4[7].spec.to_string(), "F1:g,F2:g,F3:g");
        let t5 = table5();
        assert_eq!(t5.len(), 8);
        assert_eq!(t5[0].id, "9");
        assert_eq!(t5[0].spec.to_string(), "F1:p,F2:p,F3:p");
        assert_eq!(t5[1].spec.to_string(), "F1:p,F2:p,F3:g");
        assert_eq!(t5[4].spec.to_string(), "F1:g,F2:p,F3:p");
        assert_eq!(t5[7].spec.to_string(), "F1:g,F2:g,F3:g");
        assert_eq!(table6()[1].spec.noise, NoiseMode::TrainAndTestNoisy);
        assert_eq!(hebei().len(), 2);
    }

    #[test]
    fn scheme_strings_round_trip() {
        for s in ["F1:g", "union:p", "F2:p,F3:g/test-noisy", "F1:g,F2:g,F3:g/train-and-test-noisy"] {
            assert_eq!(s.parse::<SchemeSpec>().unwrap().to_string(), s);
        }
        assert_eq!("f1".parse::<SchemeSpec>().unwrap().to_string(), "F1:g");
    }

    #[test]
    fn bad_schemes_rejected() {
        for s in ["", "F4:g", "F1:x", "union:g,F1:g", "F1:g,F1:p", "F1:g/loud"] {
            assert!(s.parse::<SchemeSpec>().is_err(), "{s}");
        }
        assert_eq!(scheme_set("F1:g;F2:g").unwrap().len(), 2);
        assert!(scheme_set(";").is_err());
    }

    #[test]
    fn union_space_covers_all_columns() {
        let sp = SchemeSpec::union(KernelKind::Gaussian).space_specs();
        assert_eq!(sp.len(), 1);
        assert_eq!(sp[0].columns, (0..N_FEATURES).collect::<Vec<_>>());
        let sp = "F2:g,F3:p".parse::<SchemeSpec>().unwrap().space_specs();
        assert_eq!(sp[0].columns, (7..14).collect::<Vec<_>>());
        assert_eq!(sp[1].columns, (14..23).collect::<Vec<_>>());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn lower_bound_plot_has_one_row_per_entry() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("lb.csv");
        let svg = dir.path().join("lb.svg");
        emit_plot_data(&PlotSource::LowerBound(&[-5.0, -3.0, -2.5]), &csv, Some(&svg)).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    }

    #[test]
    fn plot_io_error_names_path() {
        let bad = Path::new("/nonexistent-dir/x.csv");
        match emit_plot_data(&PlotSource::LowerBound(&[1.0]), bad, None) {
            Err(Error::Io { path, .. }) => assert_eq!(path, bad),
            other => panic!("{other:?}"),
        }
    }
}
