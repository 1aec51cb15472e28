use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gridsparse::baselines::{greedy_kcover, selected_per_keyframe};
use gridsparse::eval::{compression_report, csv_rows, csv_string, load_queries, queries_to_json};
use gridsparse::problem::{check_solution, SparsificationProblem};
use gridsparse::solver::export_lp as write_lp;
use gridsparse::visibility::{Grid3DConfig, DEFAULT_CELL_CAP};
use gridsparse::{
    build_problem, generate_map, generate_queries, load_map, save_map, solve_bnb, solve_heuristic,
    Evaluator, Map, MethodParams, QueryView, SceneSpec, Solution, SolveLimits, VisibilityMargins,
};
use serde_json::json;

use crate::config::{Method, Mode, RunConfig};
use crate::Failure;

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::usage(format!("{flag} is required")))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn read_spec(path: &Path) -> Result<SceneSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read scene {}: {e}", path.display())))?;
    let spec: SceneSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("scene {}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Failure::input(format!("scene {}: {e}", path.display())))?
    };
    Ok(spec)
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("run config serializes")
}

fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let kb: f64 = status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()?;
    Some(kb / 1024.0)
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let out = required(&cfg.paths.out, "--out")?;
    let mut spec = match cfg.paths.spec.first() {
        Some(p) => read_spec(p)?,
        None => SceneSpec::default(),
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let map = generate_map(&spec)?;
    let mut meta = map.metadata().clone();
    meta.insert("run_config".into(), cfg.to_json());
    let map = map.with_metadata(meta);
    save_map(&map, out)?;
    eprintln!(
        "wrote {} ({} landmarks, {} keyframes, {} observations, seed {})",
        out.display(),
        map.n_landmarks(),
        map.n_keyframes(),
        map.observations().len(),
        spec.seed
    );

    if let Some(qpath) = &cfg.paths.queries {
        let queries: Vec<QueryView> = cfg
            .eval
            .strata
            .iter()
            .flat_map(|&l| generate_queries(&map, l, cfg.eval.queries_per_stratum, spec.seed))
            .collect();
        let doc = json!({
            "run_config": config_value(cfg),
            "seed": spec.seed,
            "queries": queries_to_json(&queries),
        });
        write_text(qpath, &doc.to_string())?;
        eprintln!("wrote {} ({} queries)", qpath.display(), queries.len());
    }
    Ok(())
}

struct MethodRun {
    problem: SparsificationProblem,
    solution: Solution,
    build: Duration,
    solve: Duration,
}

fn run_method(
    map: &Map,
    method: Method,
    params: &MethodParams,
    limits: &SolveLimits,
    mode: Mode,
) -> Result<MethodRun, Failure> {
    let start = Instant::now();
    let problem = build_problem(map, params)?;
    let build = start.elapsed();
    let start = Instant::now();
    let solution = match (method, mode) {
        (Method::Greedy, _) => greedy_kcover(map, params)?,
        (_, Mode::Heuristic) => solve_heuristic(&problem, limits)?,
        (_, Mode::Exact) => solve_bnb(&problem, limits)?,
    };
    Ok(MethodRun {
        problem,
        solution,
        build,
        solve: start.elapsed(),
    })
}

pub fn sparsify(cfg: &RunConfig) -> Result<(), Failure> {
    let map_path = required(&cfg.paths.map, "--map")?;
    let out = required(&cfg.paths.out, "--out")?;
    let params = cfg.method_params(cfg.method)?;
    let limits = cfg.solve_limits()?;
    let start = Instant::now();
    let map = load_map(map_path)?;

    let run = run_method(&map, cfg.method, &params, &limits, cfg.mode)?;
    let s = &run.solution;
    let check = check_solution(&run.problem, s)?;
    if !check.ok {
        return Err(Failure {
            code: crate::EXIT_SOLVER,
            message: format!(
                "reported objective {} disagrees with the recomputed {}",
                s.objective, check.objective
            ),
        });
    }
    if let Some(lp) = &cfg.paths.export_lp {
        write_lp(&run.problem, &[format!("run_config: {}", cfg.to_json())], lp)?;
    }

    let mut meta: BTreeMap<String, String> = map.metadata().clone();
    meta.insert("run_config".into(), cfg.to_json());
    meta.insert("method".into(), cfg.method.name().into());
    meta.insert("status".into(), s.status.to_string());
    meta.insert("objective".into(), s.objective.to_string());
    let compact = map.subset(&s.x).with_metadata(meta);
    save_map(&compact, out)?;

    let blocks: Vec<serde_json::Value> = run
        .problem
        .blocks
        .iter()
        .zip(&check.blocks)
        .map(|(b, c)| {
            json!({
                "kind": b.kind,
                "rows": b.n_rows(),
                "nnz": b.matrix.nnz(),
                "penalty": b.penalty,
                "slack_total": c.slack_total,
                "violated_rows": c.violated_rows,
                "penalty_cost": c.penalty_cost,
            })
        })
        .collect();
    let short_fraction = (cfg.method == Method::Di).then(|| {
        let per_kf = selected_per_keyframe(&map, &s.x);
        let short = per_kf
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c < params.k1.min(map.keyframe_observations(i).len() as u32))
            .count();
        short as f64 / map.n_keyframes().max(1) as f64
    });
    let compression = compression_report(&s.x);
    let log = json!({
        "run_config": config_value(cfg),
        "method": cfg.method.name(),
        "mode": cfg.mode,
        "n_landmarks": map.n_landmarks(),
        "n_keyframes": map.n_keyframes(),
        "n_observations": map.observations().len(),
        "selected": compression.selected,
        "compression_ratio": compression.ratio,
        "rows": run.problem.n_rows(),
        "blocks": blocks,
        "objective": s.objective,
        "bound": s.bound,
        "gap": s.gap,
        "status": s.status,
        "nodes": s.nodes,
        "short_fraction": short_fraction,
        "build_seconds": run.build.as_secs_f64(),
        "solve_seconds": run.solve.as_secs_f64(),
        "wall_seconds": start.elapsed().as_secs_f64(),
        "peak_rss_mb": peak_rss_mb(),
    });
    let log_path = cfg
        .paths
        .log
        .clone()
        .unwrap_or_else(|| out.with_extension("log.json"));
    write_text(&log_path, &serde_json::to_string_pretty(&log).expect("log serializes"))?;
    println!(
        "{}: {} of {} landmarks, objective {}, bound {}, gap {:.3e}, status {}, {:.2?}",
        cfg.method.name(),
        compression.selected,
        compression.total,
        s.objective,
        s.bound,
        s.gap,
        s.status,
        start.elapsed()
    );
    Ok(())
}

fn same_cameras(a: &Map, b: &Map) -> bool {
    a.cameras().len() == b.cameras().len()
        && a.cameras().iter().zip(b.cameras()).all(|(x, y)| x.id == y.id && x.model == y.model)
}

pub fn eval(cfg: &RunConfig) -> Result<(), Failure> {
    let map_path = required(&cfg.paths.map, "--map")?;
    if cfg.paths.compact.is_empty() {
        return Err(Failure::usage("at least one --compact map is required".into()));
    }
    let map = load_map(map_path)?;
    let seed = cfg.seed.unwrap_or(0);
    let queries = match &cfg.paths.queries {
        Some(p) => load_queries(p)?,
        None => cfg
            .eval
            .strata
            .iter()
            .flat_map(|&l| generate_queries(&map, l, cfg.eval.queries_per_stratum, seed))
            .collect(),
    };
    let evaluator = Evaluator::new(&map, &VisibilityMargins::default());
    let grid = match cfg.params.grid3d_res {
        Some(res) => Some(Grid3DConfig::for_map(
            &map,
            evaluator.regions(),
            res,
            cfg.params.bounds,
            DEFAULT_CELL_CAP,
        )?),
        None => None,
    };

    let mut rows = Vec::new();
    for path in &cfg.paths.compact {
        let compact = load_map(path)?;
        if !same_cameras(&map, &compact) {
            return Err(Failure::input(format!(
                "{} has different cameras than {}",
                path.display(),
                map_path.display()
            )));
        }
        let selected = map.selection_of(&compact)?;
        let label = compact.metadata().get("method").cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let report = evaluator.localization_rate(&selected, &queries, cfg.eval.inliers)?;
        let compression = compression_report(&selected);
        let valid = grid.map(|g| evaluator.count_valid_cells(&selected, &g, cfg.params.k2));
        for s in &report.strata {
            println!(
                "{label} {}: rate {:.4} ({}/{}), {} landmarks, ratio {:.4}",
                s.label, s.rate, s.localized, s.total, compression.selected, compression.ratio
            );
        }
        rows.extend(csv_rows(&label, &report, &compression, valid));
    }
    let comments = [format!("run_config: {}", cfg.to_json()), format!("seed: {seed}")];
    let csv = csv_string(&rows, &comments);
    match &cfg.paths.report {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub const BENCH_HEADER: &str = "scene,method,n_landmarks,n_keyframes,observations,rows,nnz,selected,\
objective,status,build_seconds,solve_seconds,wall_seconds,peak_rss_mb";

pub fn bench(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.paths.spec.is_empty() {
        return Err(Failure::usage("at least one --scene is required".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Failure::usage("at least one method is required".into()));
    }
    let limits = cfg.solve_limits()?;
    let params: Vec<MethodParams> = cfg
        .methods
        .iter()
        .map(|&m| cfg.method_params(m))
        .collect::<Result<_, _>>()?;

    let mut body = String::new();
    let mut ratios = Vec::new();
    for path in &cfg.paths.spec {
        let mut spec = read_spec(path)?;
        if let Some(seed) = cfg.seed {
            spec.seed = seed;
        }
        let scene = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let map = generate_map(&spec)?;
        let mut wall = BTreeMap::new();
        for (&method, p) in cfg.methods.iter().zip(&params) {
            let run = run_method(&map, method, p, &limits, cfg.mode)?;
            let total = run.build + run.solve;
            wall.insert(method.name(), total.as_secs_f64());
            let nnz: usize = run.problem.blocks.iter().map(|b| b.matrix.nnz()).sum();
            let _ = writeln!(
                body,
                "{scene},{},{},{},{},{},{nnz},{},{},{},{},{},{},{}",
                method.name(),
                map.n_landmarks(),
                map.n_keyframes(),
                map.observations().len(),
                run.problem.n_rows(),
                run.solution.n_selected(),
                run.solution.objective,
                run.solution.status,
                run.build.as_secs_f64(),
                run.solve.as_secs_f64(),
                total.as_secs_f64(),
                peak_rss_mb().map(|m| format!("{m:.1}")).unwrap_or_default(),
            );
            eprintln!("{scene} {}: {:.2?}", method.name(), total);
        }
        if let (Some(t3), Some(t2)) = (wall.get("ours3d"), wall.get("ours2d")) {
            let line = format!("{scene}: ours3d/ours2d wall-time ratio {:.3}", t3 / t2);
            println!("{line}");
            ratios.push(line);
        }
    }

    let mut csv = String::new();
    for c in [format!("run_config: {}", cfg.to_json())].iter().chain(&ratios) {
        let _ = writeln!(csv, "# {c}");
    }
    csv.push_str(BENCH_HEADER);
    csv.push('\n');
    csv.push_str(&body);
    match &cfg.paths.out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn export_lp(cfg: &RunConfig) -> Result<(), Failure> {
    let map_path = required(&cfg.paths.map, "--map")?;
    let out = required(&cfg.paths.out, "--out")?;
    let params = cfg.method_params(cfg.method)?;
    let map = load_map(map_path)?;
    let problem = build_problem(&map, &params)?;
    write_lp(&problem, &[format!("run_config: {}", cfg.to_json())], out)?;
    eprintln!(
        "wrote {} ({} variables, {} rows)",
        out.display(),
        problem.n_landmarks(),
        problem.n_rows()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridsparse::map::map_to_json;

    #[test]
    fn map_json_is_stable_for_compact_maps() {
        let spec = SceneSpec {
            n_landmarks: 300,
            n_keyframes: 6,
            room: [8.0, 5.0, 3.0],
            ..SceneSpec::default()
        };
        let map = generate_map(&spec).unwrap();
        let x: Vec<bool> = (0..map.n_landmarks()).map(|j| j % 3 == 0).collect();
        assert_eq!(map_to_json(&map.subset(&x)), map_to_json(&map.subset(&x)));
    }
}
