//! One function per subcommand.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use clap::Parser;
use ndarray::{Array2, Axis};
use serde::Serialize;

use lsmi_sinkhorn::benchmark::{loglog_slope, scaling_sweep, SweepConfig};
use lsmi_sinkhorn::data::{
    generate, make_semi_supervised, read_index_pairs, read_table, split_features, SyntheticKind, SyntheticSpec,
    TabularSource,
};
use lsmi_sinkhorn::matching::{grid_summarize, plan_to_assignment, topk_accuracy, GridSpec, RoundingMethod};
use lsmi_sinkhorn::model_selection::{cross_validate, CvGrid, CvReport};
use lsmi_sinkhorn::{smi_estimate_paired, EstimatorConfig, FitResult, Problem, SampleSet};

use crate::args::{
    BenchmarkArgs, Cli, Command, EstimateArgs, GenerateArgs, MatchArgs, ModelArgs, ReplayArgs, SummarizeArgs,
};
use crate::error::CliError;
use crate::manifest::{join_floats, read_manifest, sha256_file, Record, Run};

/// Dispatch a parsed command line. `argv` excludes the program name and is
/// stored in the manifest for replay.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => estimate(a, argv),
        Command::Match(a) => match_tables(a, argv),
        Command::Summarize(a) => summarize(a, argv),
        Command::Generate(a) => generate_data(a, argv),
        Command::Benchmark(a) => benchmark(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn load_table(run: &mut Run, path: &Path) -> Result<Array2<f64>, CliError> {
    let source = TabularSource::detect(path)?;
    let table = read_table(&source)?;
    run.input(path)?;
    Ok(table)
}

fn load_pairs(run: &mut Run, path: &Path) -> Result<Vec<(usize, usize)>, CliError> {
    let pairs = read_index_pairs(path)?;
    run.input(path)?;
    Ok(pairs)
}

/// Split `x`, `y` by a list of known pairs: every row not named in a pair
/// goes to its unpaired pool. Returns the data and the original row indices
/// of both pools.
fn split_by_pairs(
    x: &Array2<f64>,
    y: &Array2<f64>,
    pairs: &[(usize, usize)],
) -> Result<(SampleSet, Vec<usize>, Vec<usize>), CliError> {
    let (mut seen_x, mut seen_y) = (HashSet::new(), HashSet::new());
    for &(i, j) in pairs {
        if i >= x.nrows() || j >= y.nrows() {
            return Err(input_err(format!(
                "pair ({i}, {j}) out of range for {} x rows and {} y rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if !seen_x.insert(i) || !seen_y.insert(j) {
            return Err(input_err(format!("pair ({i}, {j}) reuses a row")));
        }
    }
    let px: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let py: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let ux: Vec<usize> = (0..x.nrows()).filter(|i| !seen_x.contains(i)).collect();
    let uy: Vec<usize> = (0..y.nrows()).filter(|j| !seen_y.contains(j)).collect();
    let data = SampleSet::new(
        x.select(Axis(0), &px),
        y.select(Axis(0), &py),
        x.select(Axis(0), &ux),
        y.select(Axis(0), &uy),
    )?;
    Ok((data, ux, uy))
}

fn base_config(model: &ModelArgs, seed: u64) -> EstimatorConfig {
    let d = EstimatorConfig::default();
    EstimatorConfig {
        b: model.b,
        epsilon: model.epsilon,
        lambda: model.lambda.unwrap_or(d.lambda),
        beta: model.beta.unwrap_or(d.beta),
        max_iters: model.max_iters,
        seed,
        ..d
    }
}

/// Resolve `(lambda, beta)`: cross-validate unless both were given. A flag
/// given alone pins that axis of the grid.
fn resolve_config(
    run: &mut Run,
    model: &ModelArgs,
    data: &SampleSet,
    seed: u64,
) -> Result<(EstimatorConfig, Option<CvReport>), CliError> {
    let config = base_config(model, seed);
    config.validate()?;
    let explicit = model.lambda.is_some() && model.beta.is_some();
    if explicit && !model.cv {
        return Ok((config, None));
    }
    if data.n() < 4 && !model.cv {
        log::warn!(
            "{} paired samples are too few to cross-validate; using lambda = {}, beta = {}",
            data.n(),
            config.lambda,
            config.beta
        );
        return Ok((config, None));
    }
    let d = CvGrid::default();
    let grid = CvGrid {
        lambdas: model.lambda.map_or(d.lambdas, |l| vec![l]),
        betas: model.beta.map_or(d.betas, |b| vec![b]),
        seed,
        ..CvGrid::default()
    };
    let report = run.timed("cross_validation", || cross_validate(data, &config, &grid))?;
    let config = EstimatorConfig {
        lambda: report.best_lambda,
        beta: report.best_beta,
        ..config
    };
    Ok((config, Some(report)))
}

fn cv_table(report: &CvReport) -> String {
    let mut s = String::from("lambda,beta,score\n");
    for c in &report.scores {
        s.push_str(&format!("{},{},{}\n", c.lambda, c.beta, c.score));
    }
    s
}

fn put_fit(rec: &mut Record, config: &EstimatorConfig, fit: &FitResult) {
    rec.put("lambda", config.lambda)
        .put("beta", config.beta)
        .put("epsilon", config.epsilon)
        .put("b", config.b)
        .put("iterations", fit.iterations_run)
        .put("converged", fit.converged)
        .put("sinkhorn_converged", fit.sinkhorn_converged)
        .put("max_marginal_violation", format!("{:e}", fit.plan.max_marginal_violation()))
        .put("objective_trace", join_floats(&fit.objective_trace));
}

#[derive(Serialize)]
struct ResolvedRun<'a, T: Serialize> {
    estimator: &'a EstimatorConfig,
    #[serde(flatten)]
    extra: T,
}

fn estimate(a: EstimateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let seed = a.common.seed;
    let mut run = Run::new(&a.common.out, "estimate", argv, seed)?;
    let s = &a.synthetic;
    let mut source = String::new();
    let data = if let Some(kind) = s.synthetic {
        let spec = SyntheticSpec {
            dim: s.dim,
            noise_sd: s.noise_sd,
            ..SyntheticSpec::new(
                kind.into(),
                s.n.unwrap_or(50),
                s.nx.unwrap_or(500),
                s.ny.unwrap_or(500),
                seed,
            )
        };
        source.push_str(&format!("synthetic {}", spec.kind));
        generate(&spec)?
    } else {
        if s.dim.is_some() || s.noise_sd.is_some() {
            return Err(input_err("--dim and --noise-sd need --synthetic"));
        }
        let (x, y) = if let Some(table) = &a.table {
            let t = load_table(&mut run, table)?;
            let dx = a.dx.unwrap_or(t.ncols() / 2);
            source.push_str(&format!("table {} split into {dx} x columns", table.display()));
            split_features(t.view(), dx)?
        } else {
            match (&a.x, &a.y) {
                (Some(xp), Some(yp)) => {
                    source.push_str("x and y tables");
                    (load_table(&mut run, xp)?, load_table(&mut run, yp)?)
                }
                _ => return Err(input_err("give --synthetic, --table, or both --x and --y")),
            }
        };
        if let Some(paired) = &a.paired {
            if s.n.is_some() || s.nx.is_some() || s.ny.is_some() {
                return Err(input_err("--n/--nx/--ny do not apply with --paired"));
            }
            let pairs = load_pairs(&mut run, paired)?;
            split_by_pairs(&x, &y, &pairs)?.0
        } else {
            if x.nrows() != y.nrows() {
                return Err(input_err(format!(
                    "without --paired the tables must be row-aligned; x has {} rows, y has {}",
                    x.nrows(),
                    y.nrows()
                )));
            }
            let n = s.n.ok_or_else(|| input_err("row-aligned input needs --n"))?;
            let rest = x.nrows().saturating_sub(n);
            make_semi_supervised(x.view(), y.view(), n, s.nx.unwrap_or(rest), s.ny.unwrap_or(rest), seed)?
        }
    };

    let (config, report) = resolve_config(&mut run, &a.model, &data, seed)?;
    let problem = run.timed("prepare", || Problem::prepare(&data, config.b, config.seed))?;
    let fit = run.timed("fit", || problem.fit(&config))?;
    let smi = problem.smi(fit.model.alpha.view());
    let smi_paired = if config.beta > 0.0 && data.n() == 0 {
        f64::NAN
    } else {
        smi_estimate_paired(&fit.model, &fit.plan, &data, config.beta)?
    };
    run.set_config(&ResolvedRun {
        estimator: &config,
        extra: serde_json::json!({ "source": source, "cv": report.is_some() }),
    });

    let mut rec = Record::default();
    rec.put("command", "estimate")
        .put("source", &source)
        .put("seed", seed)
        .put("n", data.n())
        .put("nx", data.nx())
        .put("ny", data.ny())
        .put("smi", smi)
        .put("smi_paired", smi_paired);
    put_fit(&mut rec, &config, &fit);
    if let Some(r) = &report {
        rec.put("cv_score", r.best_score);
        run.write_text("cv.csv", &cv_table(r))?;
    }
    if a.save_plan {
        run.write_matrix("plan.csv", fit.plan.matrix())?;
    }
    finish(run, rec)
}

fn finish(mut run: Run, rec: Record) -> Result<(), CliError> {
    let text = rec.render();
    run.write_text("result.txt", &text)?;
    print!("{text}");
    run.finish()?;
    Ok(())
}

fn read_labels(run: &mut Run, path: &Path, rows: usize) -> Result<Vec<f64>, CliError> {
    let t = load_table(run, path)?;
    if t.ncols() != 1 || t.nrows() != rows {
        return Err(input_err(format!(
            "{}: expected {rows} labels in one column, found {}x{}",
            path.display(),
            t.nrows(),
            t.ncols()
        )));
    }
    Ok(t.column(0).to_vec())
}

fn match_tables(a: MatchArgs, argv: Vec<String>) -> Result<(), CliError> {
    let seed = a.common.seed;
    let mut run = Run::new(&a.common.out, "match", argv, seed)?;
    let x = load_table(&mut run, &a.x)?;
    let y = load_table(&mut run, &a.y)?;
    let pairs = match &a.paired {
        Some(p) => load_pairs(&mut run, p)?,
        None => Vec::new(),
    };
    let (data, ux, uy) = split_by_pairs(&x, &y, &pairs)?;
    if data.nx() == 0 || data.ny() == 0 {
        return Err(input_err("nothing left to match: every row of x or y is paired"));
    }
    let mut model = a.model.clone();
    if data.n() == 0 {
        log::info!("no known pairs: using beta = 0");
        model.beta = Some(0.0);
        model.lambda.get_or_insert(EstimatorConfig::default().lambda);
        model.cv = false;
    }
    let (config, report) = resolve_config(&mut run, &model, &data, seed)?;
    let problem = run.timed("prepare", || Problem::prepare(&data, config.b, config.seed))?;
    let fit = run.timed("fit", || problem.fit(&config))?;
    let method: RoundingMethod = a.method.into();
    let assignment = run.timed("rounding", || plan_to_assignment(&fit.plan, method));
    run.set_config(&ResolvedRun {
        estimator: &config,
        extra: serde_json::json!({ "method": format!("{method:?}"), "cv": report.is_some() }),
    });

    let mut rows: Vec<(usize, usize, bool)> = pairs.iter().map(|&(i, j)| (i, j, true)).collect();
    rows.extend(assignment.pairs.iter().map(|&(i, j)| (ux[i], uy[j], false)));
    rows.sort();
    let mut csv = String::from("x,y,given\n");
    for (i, j, g) in &rows {
        csv.push_str(&format!("{i},{j},{}\n", u8::from(*g)));
    }
    run.write_text("assignment.csv", &csv)?;

    let mut rec = Record::default();
    rec.put("command", "match")
        .put("seed", seed)
        .put("n", data.n())
        .put("nx", data.nx())
        .put("ny", data.ny())
        .put("smi", problem.smi(fit.model.alpha.view()))
        .put("matched", assignment.len());
    put_fit(&mut rec, &config, &fit);
    if let Some(r) = &report {
        rec.put("cv_score", r.best_score);
        run.write_text("cv.csv", &cv_table(r))?;
    }

    match &a.truth {
        Some(t) if !t.exists() => log::warn!("truth file {} not found; accuracies omitted", t.display()),
        Some(t) => {
            let truth = load_pairs(&mut run, t)?;
            let xi: HashMap<usize, usize> = ux.iter().enumerate().map(|(k, &r)| (r, k)).collect();
            let yi: HashMap<usize, usize> = uy.iter().enumerate().map(|(k, &r)| (r, k)).collect();
            let local: Vec<(usize, usize)> = truth
                .iter()
                .filter_map(|(i, j)| Some((*xi.get(i)?, *yi.get(j)?)))
                .collect();
            if local.len() < truth.len() {
                log::warn!("{} truth pairs involve given or missing rows; scored on the rest", truth.len() - local.len());
            }
            if local.is_empty() {
                log::warn!("no truth pairs fall in the unpaired pools; accuracies omitted");
            } else {
                let assigned: HashSet<(usize, usize)> = assignment.pairs.iter().copied().collect();
                let hits = local.iter().filter(|p| assigned.contains(p)).count();
                rec.put("truth_pairs", local.len())
                    .put("top1", topk_accuracy(&fit.plan, &local, 1)?)
                    .put("top2", topk_accuracy(&fit.plan, &local, 2)?)
                    .put("assignment_accuracy", hits as f64 / local.len() as f64);
            }
        }
        None => {}
    }
    if let (Some(lx), Some(ly)) = (&a.labels_x, &a.labels_y) {
        let lx = read_labels(&mut run, lx, x.nrows())?;
        let ly = read_labels(&mut run, ly, y.nrows())?;
        let same = rows.iter().filter(|(i, j, g)| !g && lx[*i] == ly[*j]).count();
        if !assignment.is_empty() {
            rec.put("class_accuracy", same as f64 / assignment.len() as f64);
        }
    }
    if a.save_plan {
        run.write_matrix("plan.csv", fit.plan.matrix())?;
    }
    finish(run, rec)
}

fn summarize(a: SummarizeArgs, argv: Vec<String>) -> Result<(), CliError> {
    let seed = a.common.seed;
    let mut run = Run::new(&a.common.out, "summarize", argv, seed)?;
    let features = load_table(&mut run, &a.features)?;
    let grid = match (&a.grid, &a.grid_file) {
        (Some(dims), None) => {
            let (r, c) = GridSpec::parse_dims(dims)?;
            GridSpec::rectangular(r, c)
        }
        (None, Some(path)) => {
            let g = GridSpec::from_file(path)?;
            run.input(path)?;
            g
        }
        _ => return Err(input_err("give exactly one of --grid or --grid-file")),
    };
    let anchors = match &a.anchors {
        Some(p) => load_pairs(&mut run, p)?,
        None => Vec::new(),
    };
    let grid = grid.with_anchors(anchors)?;
    if a.model.cv {
        log::warn!("--cv is not supported for summarize; using the given or default lambda and beta");
    }
    let config = base_config(&a.model, seed);
    config.validate()?;
    let layout = run.timed("fit", || grid_summarize(features.view(), &grid, &config))?;
    run.set_config(&ResolvedRun {
        estimator: &config,
        extra: serde_json::json!({ "positions": grid.len(), "anchors": grid.anchors.len() }),
    });

    let mut csv = String::from("position,item,row,col\n");
    for &(item, pos) in &layout.placements {
        let p = grid.positions.row(pos);
        csv.push_str(&format!("{pos},{item},{},{}\n", p[0], p[1]));
    }
    run.write_text("placements.csv", &csv)?;
    let mut unplaced = String::from("item\n");
    for i in &layout.unplaced {
        unplaced.push_str(&format!("{i}\n"));
    }
    run.write_text("unplaced.csv", &unplaced)?;

    let mut rec = Record::default();
    rec.put("command", "summarize")
        .put("seed", seed)
        .put("items", features.nrows())
        .put("positions", grid.len())
        .put("anchors", grid.anchors.len())
        .put("placements", layout.placements.len())
        .put("unplaced", layout.unplaced.len());
    if let Some(fit) = &layout.fit {
        let used = EstimatorConfig {
            beta: fit.beta,
            ..config
        };
        put_fit(&mut rec, &used, fit);
    }
    finish(run, rec)
}

fn generate_data(a: GenerateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let seed = a.common.seed;
    let mut run = Run::new(&a.common.out, "generate", argv, seed)?;
    let kind: SyntheticKind = a.synthetic.into();
    let spec = SyntheticSpec {
        dim: a.dim,
        noise_sd: a.noise_sd,
        ..SyntheticSpec::new(kind, a.n, a.nx, a.ny, seed)
    };
    let data = run.timed("generate", || generate(&spec))?;
    run.set_config(&spec);
    let x = ndarray::concatenate(Axis(0), &[data.paired_x.view(), data.unpaired_x.view()]).expect("same dim");
    let y = ndarray::concatenate(Axis(0), &[data.paired_y.view(), data.unpaired_y.view()]).expect("same dim");
    run.write_matrix("x.csv", x.view())?;
    run.write_matrix("y.csv", y.view())?;
    let pairs = Array2::from_shape_fn((data.n(), 2), |(i, _)| i as f64);
    run.write_matrix("paired.csv", pairs.view())?;
    let mut rec = Record::default();
    rec.put("command", "generate")
        .put("kind", kind)
        .put("seed", seed)
        .put("n", data.n())
        .put("nx", data.nx())
        .put("ny", data.ny())
        .put("dim_x", data.dim_x())
        .put("dim_y", data.dim_y())
        .put("noise_sd", spec.noise_sd());
    finish(run, rec)
}

fn benchmark(a: BenchmarkArgs, argv: Vec<String>) -> Result<(), CliError> {
    let seed = a.common.seed;
    let mut run = Run::new(&a.common.out, "benchmark", argv, seed)?;
    let sweep = SweepConfig {
        sizes: a.sizes.clone(),
        n: a.n,
        dim: a.dim,
        repeats: a.repeats,
        estimator: EstimatorConfig {
            b: a.b,
            seed,
            ..EstimatorConfig::default()
        },
    };
    run.set_config(&sweep);
    let rows = run.timed("sweep", || scaling_sweep(&sweep))?;
    let mut csv = String::from(
        "size,iterations,prepare_seconds,fit_seconds,per_iteration_seconds,cost_matrix_seconds,sinkhorn_seconds\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.size,
            r.iterations,
            r.prepare_seconds,
            r.fit_seconds,
            r.per_iteration_seconds,
            r.cost_matrix_seconds,
            r.sinkhorn_seconds
        ));
    }
    run.write_text("benchmark.csv", &csv)?;

    let mut rec = Record::default();
    rec.put("command", "benchmark")
        .put("seed", seed)
        .put("n", a.n)
        .put("b", a.b)
        .put("sizes", a.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
        let slope = |f: fn(&lsmi_sinkhorn::benchmark::BenchmarkRow) -> f64| {
            loglog_slope(&xs, &rows.iter().map(f).collect::<Vec<_>>())
        };
        rec.put("per_iteration_slope", slope(|r| r.per_iteration_seconds)?)
            .put("cost_matrix_slope", slope(|r| r.cost_matrix_seconds)?)
            .put("sinkhorn_slope", slope(|r| r.sinkhorn_seconds)?);
    }
    finish(run, rec)
}

/// Outputs whose contents depend on wall-clock time and so cannot be compared.
fn timing_dependent(command: &str, file: &str) -> bool {
    command == "benchmark" && (file == "benchmark.csv" || file == "result.txt")
}

/// Swap the `--out` value in a recorded argument list.
fn replace_out(argv: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut res = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--out" {
            it.next();
            res.extend(["--out".to_string(), out.clone()]);
            replaced = true;
        } else if arg.starts_with("--out=") {
            res.push(format!("--out={out}"));
            replaced = true;
        } else {
            res.push(arg.clone());
        }
    }
    if !replaced {
        res.extend(["--out".to_string(), out]);
    }
    res
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = read_manifest(&a.manifest)?;
    if manifest.command == "replay" {
        return Err(input_err("cannot replay a replay"));
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
    let out: PathBuf = cwd.join(&a.out);
    let original_out = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    if !manifest.working_dir.is_empty() {
        let wd = Path::new(&manifest.working_dir);
        std::env::set_current_dir(wd).map_err(|e| CliError::io(wd, e))?;
    }
    for input in &manifest.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(input_err(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let argv = replace_out(&manifest.argv, &out);
    let cli = Cli::try_parse_from(std::iter::once("lsmi".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| input_err(format!("recorded arguments no longer parse: {e}")))?;
    run(cli, argv)?;

    let mut checked = 0;
    for o in &manifest.outputs {
        if timing_dependent(&manifest.command, &o.path) {
            log::info!("{} depends on timings; not compared", o.path);
            continue;
        }
        let now = sha256_file(&out.join(&o.path))?;
        if now != o.sha256 {
            return Err(CliError::Mismatch(format!(
                "{} differs from {}",
                out.join(&o.path).display(),
                cwd.join(&original_out).join(&o.path).display()
            )));
        }
        checked += 1;
    }
    println!("replay: {checked} outputs reproduced bit-exactly");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn replace_out_forms() {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let p = Path::new("/new");
        assert_eq!(replace_out(&v(&["estimate", "--out", "old", "--n", "3"]), p), v(&["estimate", "--out", "/new", "--n", "3"]));
        assert_eq!(replace_out(&v(&["estimate", "--out=old"]), p), v(&["estimate", "--out=/new"]));
        assert_eq!(replace_out(&v(&["estimate"]), p), v(&["estimate", "--out", "/new"]));
    }

    #[test]
    fn split_by_pairs_routes_rows() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![[10.0], [11.0], [12.0]];
        let (data, ux, uy) = split_by_pairs(&x, &y, &[(2, 0)]).unwrap();
        assert_eq!(data.paired_x, array![[2.0]]);
        assert_eq!(data.paired_y, array![[10.0]]);
        assert_eq!(ux, vec![0, 1, 3]);
        assert_eq!(uy, vec![1, 2]);
        assert!(split_by_pairs(&x, &y, &[(4, 0)]).is_err());
        assert!(split_by_pairs(&x, &y, &[(0, 0), (1, 0)]).is_err());
    }

    #[test]
    fn timing_outputs_are_only_skipped_for_benchmark() {
        assert!(timing_dependent("benchmark", "benchmark.csv"));
        assert!(!timing_dependent("estimate", "result.txt"));
    }
}
