use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use onp_core::bench::{run_benchmark, summarize, write_csv, BenchConfig};
use onp_core::problem::generators::seed_offset;
use onp_core::problem::{
    sample_scenarios, sha256_hex, CostSpec, DemandSpec, GeneratorSpec, InstanceManifest, PairSelection,
    ProblemInstance, ScenarioSet,
};
use onp_core::solver::{solve, SolverConfig, SolverState};
use onp_core::verify::{verify, PointSource, VerifyConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BenchmarkArgs, GenerateArgs, GenerateKind, ProblemArgs, SolveArgs, VerifyArgs};
use crate::run::{ensure_dir, write_json, InstanceRef, RunManifest};

pub const INSTANCE_FILE: &str = "instance.json";
pub const ROUTES_FILE: &str = "routes.csv";
pub const RESULT_FILE: &str = "result.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const VERIFY_FILE: &str = "verify.json";
pub const BENCH_CSV: &str = "benchmark.csv";
pub const BENCH_RUNS: &str = "benchmark_runs.json";
pub const RESULT_SCHEMA: u32 = 1;

/// Final objectives of the two paths must agree to this on every repeat.
pub const BENCH_PARITY_TOL: f64 = 1e-8;

/// How a command ended when it did not hit an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ToleranceFailure,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::ToleranceFailure => 1,
            Self::NotConverged => 3,
        }
    }
}

/// Written by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub schema: u32,
    pub instance: InstanceRef,
    pub routes: usize,
    pub edges: usize,
    pub commodities: usize,
    pub samples: usize,
    pub seed: u64,
    pub config: SolverConfig,
    pub state: SolverState,
}

pub fn generate(args: &GenerateArgs, argv: &[String]) -> Result<Outcome> {
    let generator = match &args.kind {
        GenerateKind::Toy4 => InstanceManifest::toy4().generator,
        GenerateKind::Random {
            routes,
            edges,
            commodities,
            seed,
            regime,
        } => GeneratorSpec::Random {
            routes: *routes,
            edges: *edges,
            commodities: *commodities,
            seed: *seed,
            params: regime.params(),
            cost: CostSpec::default(),
            demand: DemandSpec::RouteFraction(regime.demand_fraction()),
        },
        GenerateKind::Tntp {
            net,
            pairs,
            max_per_pair,
            max_length,
            commodities,
            seed,
            regime,
        } => {
            let network = std::fs::canonicalize(net).with_context(|| format!("reading {}", net.display()))?;
            let bytes = std::fs::read(&network)?;
            GeneratorSpec::Tntp {
                network,
                network_sha256: Some(sha256_hex(&bytes)),
                pairs: pairs.map_or(PairSelection::All, |count| PairSelection::Prefix { count }),
                max_per_pair: *max_per_pair,
                max_length: *max_length,
                commodities: commodities.clone(),
                seed: *seed,
                params: regime.params(),
                cost: CostSpec::FreeFlow {
                    coe_scale: 0.01,
                    offset_scale: 0.1,
                },
                demand: DemandSpec::RouteFraction(regime.demand_fraction()),
            }
        }
    };
    let manifest = InstanceManifest::new(generator);
    let inst = manifest.build()?;
    ensure_dir(&args.out)?;
    let instance_path = args.out.join(INSTANCE_FILE);
    std::fs::write(&instance_path, manifest.to_json()? + "\n")?;
    write_routes(&inst, &args.out.join(ROUTES_FILE))?;

    let mut run = RunManifest::new("generate", argv);
    run.instance = Some(InstanceRef {
        path: instance_path.clone(),
        digest: manifest.digest()?,
    });
    run.config = serde_json::to_value(&manifest)?;
    run.outputs = vec![INSTANCE_FILE.into(), ROUTES_FILE.into()];
    run.write(&args.out)?;
    println!(
        "{} routes, {} edges, {} commodities -> {}",
        inst.route_count(),
        inst.edge_count(),
        inst.commodity_count(),
        instance_path.display()
    );
    Ok(Outcome::Success)
}

fn write_routes(inst: &ProblemInstance, path: &Path) -> Result<()> {
    let labels = inst.network().node_labels();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["route", "origin", "destination", "edges", "nodes"])?;
    for (r, route) in inst.routes().routes().iter().enumerate() {
        let nodes = inst.routes().node_path(inst.network(), r);
        let (s, t) = inst.routes().source_sink()[r];
        let path: Vec<String> = nodes.iter().map(|&v| labels[v].to_string()).collect();
        w.write_record([
            r.to_string(),
            labels[s].to_string(),
            labels[t].to_string(),
            route.len().to_string(),
            path.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Loaded {
    inst: ProblemInstance,
    scen: ScenarioSet,
    reference: InstanceRef,
}

fn load_problem(args: &ProblemArgs) -> Result<Loaded> {
    let manifest = InstanceManifest::load(&args.instance)
        .with_context(|| format!("loading instance {}", args.instance.display()))?;
    let base = args.instance.parent().unwrap_or(Path::new("."));
    let inst = manifest.build_in(base)?;
    let scen = sample_scenarios(
        inst.elasticity(),
        args.samples,
        args.seed.wrapping_add(seed_offset::SCENARIOS),
    )?;
    Ok(Loaded {
        inst,
        scen,
        reference: InstanceRef {
            path: args.instance.clone(),
            digest: manifest.digest()?,
        },
    })
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // A bare array, or the final iterate of a solve result.
    let p = match &value {
        serde_json::Value::Array(_) => &value,
        _ => value
            .pointer("/state/p")
            .with_context(|| format!("{} holds neither a price array nor a solve result", path.display()))?,
    };
    Ok(serde_json::from_value(p.clone())?)
}

pub fn solve_cmd(args: &SolveArgs, argv: &[String]) -> Result<Outcome> {
    let loaded = load_problem(&args.problem)?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SolverConfig::default(),
    };
    cfg.path = args.path;
    if let Some(t) = args.tol {
        cfg.tol_kkt = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    if let Some(h) = args.hessian_mode {
        cfg.hessian_mode = h;
    }
    let p0 = match &args.p0 {
        Some(path) => Some(DVector::from_vec(read_vector(path)?)),
        None => None,
    };
    let state = solve(&loaded.inst, &loaded.scen, &cfg, p0.as_ref())?;

    let out = &args.problem.out;
    ensure_dir(out)?;
    let mut w = csv::Writer::from_path(out.join(TRACE_FILE))?;
    for rec in &state.trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    let result = SolveResult {
        schema: RESULT_SCHEMA,
        instance: loaded.reference.clone(),
        routes: loaded.inst.route_count(),
        edges: loaded.inst.edge_count(),
        commodities: loaded.inst.commodity_count(),
        samples: loaded.scen.count(),
        seed: args.problem.seed,
        config: cfg.clone(),
        state,
    };
    write_json(&out.join(RESULT_FILE), &result)?;

    let mut run = RunManifest::new("solve", argv);
    run.instance = Some(loaded.reference);
    run.seed = Some(args.problem.seed);
    run.config = serde_json::to_value(&cfg)?;
    run.outputs = vec![RESULT_FILE.into(), TRACE_FILE.into()];
    run.write(out)?;

    let st = &result.state;
    println!(
        "{} after {} iterations: objective {:.12e}, violation {:.3e}, kkt {:.3e}, {:.3} s",
        st.status,
        st.iter,
        st.objective,
        st.violation(),
        st.kkt.residual(),
        st.wall_time
    );
    Ok(if st.converged() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

pub fn verify_cmd(args: &VerifyArgs, argv: &[String]) -> Result<Outcome> {
    let loaded = load_problem(&args.problem)?;
    let point = match args.point.as_str() {
        "random" => PointSource::Random {
            seed: args.problem.seed,
            max_tries: 200,
        },
        "midpoint" => PointSource::Midpoint,
        file => PointSource::Given {
            p: read_vector(&PathBuf::from(file))?,
        },
    };
    if let PointSource::Given { p } = &point {
        if p.len() != loaded.inst.route_count() {
            bail!("price vector has {} entries, instance has {} routes", p.len(), loaded.inst.route_count());
        }
    }
    let cfg = VerifyConfig {
        point,
        gradient_step: args.gradient_step,
        hessian_step: args.hessian_step,
        ..Default::default()
    };
    let report = verify(&loaded.inst, &loaded.scen, &cfg)?;

    let out = &args.problem.out;
    ensure_dir(out)?;
    write_json(&out.join(VERIFY_FILE), &report)?;
    let mut run = RunManifest::new("verify", argv);
    run.instance = Some(loaded.reference);
    run.seed = Some(args.problem.seed);
    run.config = serde_json::to_value(&cfg)?;
    run.outputs = vec![VERIFY_FILE.into()];
    run.write(out)?;

    if report.boundary_distance < report.safe_distance {
        println!(
            "point is {:.3e} from a kink (needs {:.3e}); finite-difference checks are reported but not counted",
            report.boundary_distance, report.safe_distance
        );
    }
    for c in &report.checks {
        let verdict = match (c.counted, c.pass) {
            (false, _) => "skip",
            (true, true) => "ok",
            (true, false) => "FAIL",
        };
        println!("{verdict:>4}  {:<26} {:.3e} (tol {:.0e})", c.name, c.value, c.tol);
    }
    Ok(if report.pass {
        Outcome::Success
    } else {
        Outcome::ToleranceFailure
    })
}

pub fn benchmark_cmd(args: &BenchmarkArgs, argv: &[String]) -> Result<Outcome> {
    let mut cfg = BenchConfig {
        routes: args.routes.clone(),
        repeats: args.repeats,
        samples: args.samples,
        seed: args.seed,
        route_edge_ratio: args.route_edge_ratio,
        commodities: args.commodities,
        params: args.regime.params(),
        demand: DemandSpec::RouteFraction(args.regime.demand_fraction()),
        ..Default::default()
    };
    if let Some(m) = args.max_iter {
        cfg.solver.max_iter = m;
    }
    let runs = run_benchmark(&cfg)?;
    let rows = summarize(&runs);

    ensure_dir(&args.out)?;
    write_csv(&rows, std::fs::File::create(args.out.join(BENCH_CSV))?)?;
    write_json(&args.out.join(BENCH_RUNS), &runs)?;
    let mut run = RunManifest::new("benchmark", argv);
    run.seed = Some(args.seed);
    run.config = serde_json::to_value(&cfg)?;
    run.outputs = vec![BENCH_CSV.into(), BENCH_RUNS.into()];
    run.write(&args.out)?;

    write_csv(&rows, std::io::stdout().lock())?;
    let worst = rows.iter().map(|r| r.max_objective_gap).fold(0.0f64, f64::max);
    if worst > BENCH_PARITY_TOL {
        eprintln!("dense and sparse final objectives differ by {worst:.3e}");
        return Ok(Outcome::ToleranceFailure);
    }
    Ok(Outcome::Success)
}
