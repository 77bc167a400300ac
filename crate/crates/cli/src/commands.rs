use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gergm::base_measure::BaseMeasure;
use gergm::cut::{cut_distance_d, cut_distance_delta, CutMode, CutOptions};
use gergm::estimation::{fit_exact_gaussian, fit_mcmle, init_moment_match, FitConfig, FitOptions, InitMode};
use gergm::gaussian_exact::{log_psi_exact, moments_exact, psi_limit, GaussianTwoStarParams};
use gergm::graph::{common_refinement, embed, WeightedGraph};
use gergm::homomorphism::{Convention, Family, Motif, MotifSpec};
use gergm::model::ModelSpec;
use gergm::sampler::{autocorr_time, concentration_check, estimate_psi_mc, run_chain, ChainConfig, ChainKernel};
use gergm::validation::{run_criterion, suite};
use gergm::variational::{axis_values, phase_scan, refine_boundary, solve, ScanOptions};
use serde_json::{json, Value};

use crate::manifest::{config_hash, RunManifest};
use crate::*;

#[derive(Debug)]
pub enum CliError {
    Core(gergm::Error),
    /// A core error while reading a named input file.
    Input(PathBuf, gergm::Error),
    Usage(String),
    Validation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Usage(m) | CliError::Validation(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) | CliError::Input(_, e) => {
                if e.is_config() {
                    2
                } else {
                    3
                }
            }
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 4,
        }
    }
}

impl From<gergm::Error> for CliError {
    fn from(e: gergm::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Res<T> = Result<T, CliError>;

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Res<()> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Res<()> {
        let mut text = serde_json::to_string_pretty(v).map_err(gergm::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn read_model(path: &Path) -> Res<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(path.into(), e.into()))?;
    ModelSpec::from_json_str(&text).map_err(|e| CliError::Input(path.into(), e))
}

fn read_graph(path: &Path) -> Res<WeightedGraph> {
    WeightedGraph::load(path).map_err(|e| CliError::Input(path.into(), e))
}

fn base_of(m: &ModelArgs) -> BaseMeasure {
    match m.base {
        BaseKind::Gaussian => BaseMeasure::standard_gaussian(),
        BaseKind::Quartic => BaseMeasure::Quartic,
        BaseKind::Bernoulli => BaseMeasure::Bernoulli { p: m.p },
        BaseKind::Poisson => BaseMeasure::Poisson { rate: m.rate },
    }
}

fn convention_of(c: ConventionArg) -> Convention {
    match c {
        ConventionArg::AllMaps => Convention::AllMaps,
        ConventionArg::DistinctIndices => Convention::DistinctIndices,
    }
}

fn build_model(m: &ModelArgs) -> Res<ModelSpec> {
    if let Some(p) = &m.config {
        return read_model(p);
    }
    let base = base_of(m);
    let mut spec = match m.model {
        ModelKind::EdgeTwoStar => ModelSpec::edge_two_star(base, m.beta1, m.beta2),
        ModelKind::EdgeTriangle => ModelSpec::edge_triangle(base, m.beta1, m.beta2),
    };
    spec.convention = convention_of(m.convention);
    spec.validate()?;
    Ok(spec)
}

fn model_inputs(m: &ModelArgs) -> Vec<&Path> {
    m.config.iter().map(PathBuf::as_path).collect()
}

/// `(β₁, β₂)` when the model is the standard-Gaussian all-maps edge-two-star.
fn gaussian_two_star(spec: &ModelSpec) -> Option<(f64, f64)> {
    let ok = spec.base == BaseMeasure::standard_gaussian()
        && spec.convention == Convention::AllMaps
        && spec.dim() == 2
        && spec.terms[0].motif.family() == Family::Edge
        && spec.terms[1].motif.star_leaves() == Some(2)
        && spec.terms.iter().all(|t| t.motif.is_edge_unweighted() && t.motif.is_node_unweighted());
    ok.then(|| (spec.terms[0].beta, spec.terms[1].beta))
}

/// Stdout is a convenience copy of the files written; a closed pipe is not an error.
fn say(text: &str) {
    let mut o = std::io::stdout().lock();
    let _ = writeln!(o, "{text}").and_then(|_| o.flush());
}

fn print_json(v: &Value) {
    say(&serde_json::to_string_pretty(v).unwrap_or_default());
}

pub fn run(command: &Command, out_dir: &Path) -> Res<()> {
    let start = Instant::now();
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: Vec::new() };
    let (name, seed, hash) = match command {
        Command::Partition(a) => ("partition", a.seed, partition(a, &mut out)?),
        Command::Sample(a) => ("sample", a.seed, sample(a, &mut out)?),
        Command::Scan(a) => ("scan", 0, scan(a, &mut out)?),
        Command::Fit(a) => ("fit", a.seed, fit(a, &mut out)?),
        Command::Homdensity(a) => ("homdensity", 0, homdensity(a, &mut out)?),
        Command::Cutdist(a) => ("cutdist", a.seed, cutdist(a, &mut out)?),
        Command::Validate(a) => return validate(a, &mut out, start),
    };
    write_manifest(&mut out, name, seed, hash, start)
}

fn write_manifest(out: &mut Outputs, name: &str, seed: u64, hash: String, start: Instant) -> Res<()> {
    let manifest = RunManifest {
        command: name.to_string(),
        config_hash: hash,
        seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: out.files.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    let v = serde_json::to_value(&manifest).map_err(gergm::Error::from)?;
    out.json(&format!("{name}.manifest.json"), &v)
}

fn partition(a: &PartitionArgs, out: &mut Outputs) -> Res<String> {
    let hash = config_hash(a, &model_inputs(&a.model))?;
    let spec = build_model(&a.model)?;
    let need_n = || a.n.ok_or_else(|| CliError::Usage("--n is required for this method".into()));
    let v = match a.method {
        PartitionMethod::ExactGaussian => {
            let (b1, b2) = gaussian_two_star(&spec).ok_or_else(|| {
                CliError::Usage("exact-gaussian needs the standard-Gaussian all-maps edge-two-star model".into())
            })?;
            let n = need_n()?;
            let p = GaussianTwoStarParams::new(n, b1, b2)?;
            let log_psi = log_psi_exact(&p)?;
            let (m1, m2) = moments_exact(&p)?;
            json!({
                "method": "exact-gaussian",
                "n": n,
                "beta": [b1, b2],
                "log_psi": log_psi,
                "value": log_psi / (n * n) as f64,
                "limit": psi_limit(b1, b2).ok(),
                "moments": [m1, m2],
            })
        }
        PartitionMethod::Variational => {
            let sol = solve(&spec)?;
            json!({
                "method": "variational",
                "beta": spec.betas(),
                "value": sol.psi,
                "maximizers": sol.maximizers,
                "g_values": sol.g_values,
                "degenerate": sol.degenerate,
                "path": sol.path,
            })
        }
        PartitionMethod::Mc => {
            let n = need_n()?;
            let est = estimate_psi_mc(&spec, n, a.draws, a.seed)?;
            json!({
                "method": "mc",
                "n": n,
                "beta": spec.betas(),
                "value": est.psi_hat,
                "stderr": est.stderr,
                "ess": est.ess,
                "draws": est.draws,
                "seed": a.seed,
            })
        }
    };
    out.json("partition.json", &v)?;
    print_json(&v);
    Ok(hash)
}

fn kernel_of(k: KernelArg, spec: &ModelSpec) -> ChainKernel {
    match k {
        KernelArg::Auto => ChainKernel::default_for(spec),
        KernelArg::ExactGibbs => ChainKernel::ExactGibbsGaussian,
        KernelArg::Mh => ChainKernel::MhWithinGibbs,
    }
}

fn sample(a: &SampleArgs, out: &mut Outputs) -> Res<String> {
    let hash = config_hash(a, &model_inputs(&a.model))?;
    let spec = build_model(&a.model)?;
    let cfg = ChainConfig {
        spec: spec.clone(),
        n: a.n,
        seed: a.seed,
        sweeps: a.sweeps,
        burn_in: a.burn_in,
        proposal_sd: a.proposal_sd,
        thin: a.thin,
        kernel: kernel_of(a.kernel, &spec),
        init: None,
    };
    let trace = run_chain(&cfg)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    out.write("trace.csv", &csv)?;
    out.write("final_state.json", trace.final_state.to_json_string()?.as_bytes())?;
    let kept = trace.edge_mean.len();
    let concentration = solve(&spec).ok().map(|sol| concentration_check(&trace, &sol, Default::default()));
    let v = json!({
        "n": a.n,
        "kernel": cfg.kernel,
        "kept": kept,
        "acceptance_rate": trace.acceptance_rate,
        "proposal_sd": trace.proposal_sd,
        "edge_mean": if kept > 0 { trace.edge_mean.iter().sum::<f64>() / kept as f64 } else { f64::NAN },
        "statistic_means": (0..spec.dim()).map(|k| trace.stat_mean(k)).collect::<Vec<_>>(),
        "edge_mean_autocorr_time": if kept > 1 { Some(autocorr_time(&trace.edge_mean)) } else { None },
        "max_cache_drift": trace.max_cache_drift,
        "concentration": concentration,
    });
    out.json("sample.json", &v)?;
    print_json(&v);
    Ok(hash)
}

fn parse_axis(s: &str, dim: usize) -> Res<(usize, Vec<f64>)> {
    let bad = || CliError::Usage(format!("grid axis '{s}' is not NAME=START:STOP:STEP"));
    let (name, range) = s.split_once('=').ok_or_else(bad)?;
    let idx: usize = name.trim().strip_prefix("beta").and_then(|k| k.parse().ok()).ok_or_else(bad)?;
    if idx == 0 || idx > dim {
        return Err(CliError::Usage(format!("grid axis '{name}': model has beta1..beta{dim}")));
    }
    let parts: Vec<f64> = range.split(':').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    Ok((idx - 1, axis_values(start, stop, step)?))
}

fn scan(a: &ScanArgs, out: &mut Outputs) -> Res<String> {
    let hash = config_hash(a, &model_inputs(&a.model))?;
    let template = build_model(&a.model)?;
    let mut axes: Vec<Vec<f64>> = template.betas().into_iter().map(|b| vec![b]).collect();
    let mut seen = vec![false; axes.len()];
    for g in &a.grid {
        let (k, values) = parse_axis(g, axes.len())?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(CliError::Usage(format!("axis beta{} given twice", k + 1)));
        }
        axes[k] = values;
    }
    let grid = gergm::variational::cartesian_grid(&axes);
    let opts = ScanOptions { jump_ratio: a.jump_ratio, ..Default::default() };
    let report = phase_scan(&template, &grid, &opts)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("scan.csv", &csv)?;
    let boundaries = if a.refine {
        report
            .jumps
            .iter()
            .map(|s| refine_boundary(&template, &s.beta_from, &s.beta_to, &opts.solve))
            .collect::<gergm::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let failed = report.points.iter().filter(|p| p.error.is_some()).count();
    let v = json!({
        "points": report.points.len(),
        "failed_points": failed,
        "flags": report.flag_count(),
        "jumps": report.jumps,
        "degenerate_points": report.degenerate_points,
        "boundaries": boundaries,
    });
    out.json("scan.json", &v)?;
    say(&format!(
        "points={} jumps={} degenerate={} failed={}",
        report.points.len(),
        report.jumps.len(),
        report.degenerate_points.len(),
        failed
    ));
    Ok(hash)
}

fn fit(a: &FitArgs, out: &mut Outputs) -> Res<String> {
    let mut inputs = model_inputs(&a.model);
    inputs.push(&a.graph);
    let hash = config_hash(a, &inputs)?;
    let template = build_model(&a.model)?;
    let observed = read_graph(&a.graph)?;
    let (init, init_warnings) = match &a.init {
        Some(s) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("--init '{s}' is not a comma-separated list of numbers")))?;
            (v, Vec::new())
        }
        None => {
            let mode = match a.init_mode {
                InitArg::MatchTwoStar if gaussian_two_star(&template).is_some() || is_edge_two_star(&template) => {
                    InitMode::MatchTwoStar
                }
                _ => InitMode::Pinned,
            };
            let r = init_moment_match(&observed, &template, mode)?;
            (r.beta, r.warnings)
        }
    };
    if init.len() != template.dim() {
        return Err(CliError::Usage(format!("--init has {} values, model has {}", init.len(), template.dim())));
    }
    let result = match a.method {
        FitMethod::ExactGaussian => {
            gaussian_two_star(&template).ok_or_else(|| {
                CliError::Usage("exact-gaussian needs the standard-Gaussian all-maps edge-two-star model".into())
            })?;
            fit_exact_gaussian(&observed, [init[0], init[1]])?
        }
        FitMethod::Mcmle => fit_mcmle(&FitConfig {
            observed,
            spec_template: template,
            init: init.clone(),
            options: FitOptions {
                max_outer_iters: a.iters,
                samples_per_iter: a.samples,
                chains: a.chains,
                ess_floor: a.ess_floor,
                seed: a.seed,
                ..Default::default()
            },
        })?,
    };
    for w in init_warnings.iter().chain(&result.warnings) {
        eprintln!("warning: {w}");
    }
    let mut csv = Vec::new();
    result.write_trajectory_csv(&mut csv)?;
    out.write("trajectory.csv", &csv)?;
    let v = json!({
        "method": a.method,
        "init": init,
        "init_warnings": init_warnings,
        "beta_hat": result.beta_hat,
        "stderr": result.stderr,
        "mc_stderr": result.mc_stderr,
        "converged": result.converged,
        "grad_norm": result.grad_norm,
        "iterations": result.trajectory.len(),
        "warnings": result.warnings,
    });
    out.json("fit.json", &v)?;
    print_json(&v);
    Ok(hash)
}

fn is_edge_two_star(spec: &ModelSpec) -> bool {
    spec.dim() == 2
        && spec.terms.iter().any(|t| t.motif.family() == Family::Edge)
        && spec.terms.iter().any(|t| t.motif.star_leaves() == Some(2))
}

fn parse_motif(s: &str) -> Res<Motif> {
    let t = s.trim();
    let spec: MotifSpec = if t.starts_with('{') {
        serde_json::from_str(t).map_err(|e| CliError::Usage(format!("--motif: {e}")))?
    } else if let Some(j) = t.strip_prefix("j_star:") {
        MotifSpec::JStar { j: j.parse().map_err(|_| CliError::Usage(format!("--motif: bad star size '{j}'")))? }
    } else {
        serde_json::from_value(json!({ "family": t })).map_err(|_| {
            CliError::Usage(format!("--motif '{t}': expected edge, two_star, triangle, j_star:J or a JSON motif"))
        })?
    };
    Ok(Motif::from_spec(&spec)?)
}

fn homdensity(a: &HomArgs, out: &mut Outputs) -> Res<String> {
    let hash = config_hash(a, &[a.graph.as_path()])?;
    let motif = parse_motif(&a.motif)?;
    let convention = convention_of(a.convention);
    let plain = motif.is_edge_unweighted() && motif.is_node_unweighted();
    if convention == Convention::DistinctIndices
        && !(plain && (motif.star_leaves().is_some() || motif.family() == Family::Triangle))
    {
        return Err(CliError::Usage("distinct_indices is defined for unweighted edges, stars and triangles".into()));
    }
    let g = read_graph(&a.graph)?;
    let spec = ModelSpec::new(vec![(motif.clone(), 1.0)], BaseMeasure::standard_gaussian(), convention)?;
    let density = spec.statistics(&g)?[0];
    let v = json!({ "motif": motif.to_spec(), "convention": convention, "n": g.n(), "density": density });
    out.json("homdensity.json", &v)?;
    print_json(&v);
    Ok(hash)
}

fn cutdist(a: &CutArgs, out: &mut Outputs) -> Res<String> {
    let hash = config_hash(a, &[a.a.as_path(), a.b.as_path()])?;
    let (ka, kb) = common_refinement(&embed(&read_graph(&a.a)?), &embed(&read_graph(&a.b)?));
    let mode = match a.mode {
        ModeArg::Exact => CutMode::Exact,
        ModeArg::Heuristic => CutMode::Heuristic,
        ModeArg::Auto => CutMode::Auto,
    };
    let opts = CutOptions { restarts: a.restarts, seed: a.seed, ..Default::default() };
    let d = match a.metric {
        Metric::D | Metric::Both => Some(cut_distance_d(&ka, &kb, mode, &opts)?),
        Metric::Delta => None,
    };
    let delta = match a.metric {
        Metric::Delta | Metric::Both => Some(cut_distance_delta(&ka, &kb, mode, &opts)?),
        Metric::D => None,
    };
    let v = json!({ "resolution": ka.resolution(), "mode": mode, "d": d, "delta": delta });
    out.json("cutdist.json", &v)?;
    print_json(&v);
    Ok(hash)
}

fn validate(a: &ValidateArgs, out: &mut Outputs, start: Instant) -> Res<()> {
    let hash = config_hash(a, &[])?;
    let ids: Vec<u8> = match &a.criteria {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("--criteria '{s}' is not a comma-separated list of ids")))?,
        None => suite(&a.suite)?,
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id)?;
        say(&r.line());
        reports.push(r);
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    let v = json!({ "suite": a.suite, "passed": reports.len() - failed, "failed": failed, "criteria": reports });
    out.json("validation.json", &v)?;
    write_manifest(out, "validate", 0, hash, start)?;
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {} criteria failed", reports.len())));
    }
    Ok(())
}
