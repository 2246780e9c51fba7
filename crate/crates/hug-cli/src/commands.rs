use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use hug::config::{Preset, RunConfig};
use hug::data::{
    denormalize, generate_synthetic, load_csv, load_matrix_csv, relative_error_table, write_csv,
    NormalizationSpec, RawDataset,
};
use hug::inference::{
    cluster_mass_check, component_count, contact_probability_grid, cumulative_means, kmeans,
    level_set, match_sources, sequential_kmeans, ward_dendrogram, ClusterResult, GridSpec,
    MatchingStrategy, PlaneOrder,
};
use hug::model::{PlaneIndex, PlaneTable};
use hug::sampler::simulated_annealing;
use hug::trace::ChainTrace;
use hug::HugError;

use crate::{ClusterArgs, DetectArgs, EvaluateArgs, SynthArgs};

pub(crate) fn synth(args: SynthArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let mut spec = config
        .input
        .synthetic
        .clone()
        .ok_or_else(|| HugError::Config("config has no [input.synthetic] table".into()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let dataset = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_matrix(&args.out.join("data.csv"), &dataset.names, &dataset.samples)?;
    write_matrix(&args.out.join("truth.csv"), &dataset.names, &spec.sources)?;
    eprintln!(
        "wrote {} samples x {} parameters to {}",
        dataset.samples.len(),
        dataset.names.len(),
        args.out.display()
    );
    Ok(())
}

pub(crate) fn detect(args: DetectArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &args.preset {
        let preset: Preset = name.parse()?;
        preset.apply(&mut config);
    }
    apply_overrides(&mut config, &args);
    if let Some(path) = &args.data {
        config.input.csv = Some(path.clone());
        config.input.synthetic = None;
    }
    let warnings = config.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let (raw, truth): (RawDataset, Option<Vec<Vec<f64>>>) =
        if let Some(path) = &config.input.csv {
            (load_csv(path)?, None)
        } else if let Some(spec) = &config.input.synthetic {
            (generate_synthetic(spec)?, Some(spec.sources.clone()))
        } else {
            return Err(anyhow!(HugError::Config(
                "no input: pass --data or set input.csv / input.synthetic in the config".into()
            )));
        };
    let dataset = raw.normalize(config.normalization.deltas.as_deref())?;
    let table = PlaneTable::new(&dataset)?;
    let active = table.active_planes();
    if active.is_empty() {
        return Err(anyhow!(HugError::Domain(
            "every projection plane has a degenerate data hull".into()
        )));
    }
    for plane in (0..table.plane_count()).map(PlaneIndex::from_zero_based) {
        if !table.is_active(plane) {
            let (a, b) = table.pair(plane);
            eprintln!(
                "warning: dropping plane {} ({}, {}): projected data hull has zero area",
                plane.one_based(),
                dataset.names[a],
                dataset.names[b]
            );
        }
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("effective_config.toml"), config.to_toml()?)?;
    write_normalization(&args.out.join("normalization.json"), &dataset.names, &dataset.spec)?;
    if config.input.csv.is_none() {
        // Synthetic input: persist the generated data for reproduction.
        write_matrix(&args.out.join("data.csv"), &dataset.names, &dataset.raw)?;
        if let Some(truth) = &truth {
            write_matrix(&args.out.join("truth.csv"), &dataset.names, truth)?;
        }
    }

    if args.chains <= 1 {
        run_chain(&args.out, &config, &table, config.seed)?;
    } else {
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..args.chains)
                .map(|i| {
                    let dir = args.out.join(format!("chain_{i}"));
                    let config = &config;
                    let table = &table;
                    scope.spawn(move || {
                        run_chain(&dir, config, table, config.seed.wrapping_add(i as u64))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        });
        for r in results {
            r?;
        }
    }
    eprintln!("run written to {}", args.out.display());
    Ok(())
}

fn apply_overrides(config: &mut RunConfig, args: &DetectArgs) {
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.r {
        config.model.interaction_radius = v;
    }
    if let Some(v) = args.n {
        config.schedule.iterations = v;
    }
    if let Some(v) = args.g {
        config.schedule.gibbs_per_iteration = Some(v);
    }
    if let Some(v) = args.m {
        config.sampler.mh_steps = v;
    }
    if let Some(v) = args.t1 {
        config.schedule.initial_temperature = v;
    }
    if let Some(v) = args.c {
        config.schedule.cooling = v;
    }
    if let Some(v) = args.t_min {
        config.schedule.min_temperature = v;
    }
    if let Some(v) = args.p_b {
        config.sampler.p_birth = v;
    }
    if let Some(v) = args.p_d {
        config.sampler.p_death = v;
    }
    if let Some(v) = args.p_c {
        config.sampler.p_change = v;
    }
    if let Some(v) = args.r_c {
        config.sampler.change_radius = v;
    }
    if let Some(v) = &args.delta {
        config.normalization.deltas = Some(v.clone());
    }
    if let Some(v) = args.save_every {
        config.schedule.save_every = v;
    }
    if let Some(v) = args.keep_last {
        config.schedule.keep_last = v;
    }
    if let Some(v) = args.cell_length {
        config.grid.cell_length = v;
    }
}

fn run_chain(dir: &Path, config: &RunConfig, table: &PlaneTable, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace = simulated_annealing(
        table,
        config.model.prior(),
        config.model.interaction_radius,
        config.sampler,
        config.schedule,
        seed,
    )?;
    trace.write_path(&dir.join("trace.jsonl"))?;
    write_plane_reports(dir, &trace, table, config.grid.cell_length)?;
    write_summary(dir, &trace, table, config)?;
    Ok(())
}

fn write_plane_reports(
    dir: &Path,
    trace: &ChainTrace,
    table: &PlaneTable,
    cell_length: f64,
) -> Result<()> {
    for plane in table.active_planes() {
        let spec = GridSpec::new(cell_length, plane)?;
        let grid = contact_probability_grid(trace.kept(), &spec, table.dims())?;
        let path = dir.join(format!("levelset_plane{}.csv", plane.one_based()));
        let mut out = BufWriter::new(fs::File::create(&path)?);
        grid.write_csv(&mut out)?;

        let means = cumulative_means(trace.kept(), plane)?;
        let path = dir.join(format!("cummeans_plane{}.csv", plane.one_based()));
        let mut text = String::from("iter,g,n_e,n,n_r\n");
        for (record, m) in trace.kept().iter().zip(&means) {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                record.iter, m.g, m.n_e, m.n, m.n_r
            ));
        }
        fs::write(path, text)?;
    }
    Ok(())
}

fn write_summary(
    dir: &Path,
    trace: &ChainTrace,
    table: &PlaneTable,
    config: &RunConfig,
) -> Result<()> {
    let kept = trace.kept();
    let mut text = String::new();
    text.push_str(&format!(
        "samples: {}\ndimensions: {} ({})\n",
        table.sample_count(),
        table.dims(),
        table.names().join(", ")
    ));
    text.push_str(&format!(
        "planes: {} active of {}\n",
        table.active_planes().len(),
        table.plane_count()
    ));
    for plane in (0..table.plane_count()).map(PlaneIndex::from_zero_based) {
        let (a, b) = table.pair(plane);
        match table.data_hull_area(plane) {
            Ok(area) => text.push_str(&format!(
                "  plane {} ({}, {}): data hull area {:.6}\n",
                plane.one_based(),
                table.names()[a],
                table.names()[b],
                area
            )),
            Err(_) => text.push_str(&format!(
                "  plane {} ({}, {}): degenerate, dropped\n",
                plane.one_based(),
                table.names()[a],
                table.names()[b]
            )),
        }
    }
    let s = &config.schedule;
    text.push_str(&format!(
        "schedule: N={} c={} T1={} T_min={} save_every={} keep_last={}\n",
        s.iterations, s.cooling, s.initial_temperature, s.min_temperature, s.save_every,
        s.keep_last
    ));
    text.push_str(&format!(
        "records: {} saved, {} kept for inference\n",
        trace.records.len(),
        kept.len()
    ));
    let mean_n: f64 =
        kept.iter().map(|r| r.sources.len() as f64).sum::<f64>() / kept.len() as f64;
    text.push_str(&format!(
        "mean source count over kept records: {:.3} (suggested cluster count: {})\n",
        mean_n,
        mean_n.round() as i64
    ));
    let mut theta_mean = [0.0f64; 4];
    for r in kept {
        for (acc, v) in theta_mean.iter_mut().zip(&r.theta) {
            *acc += v;
        }
    }
    for acc in theta_mean.iter_mut() {
        *acc /= kept.len() as f64;
    }
    text.push_str(&format!(
        "mean weights over kept records: theta1={:.4} theta2={:.4} theta3={:.4} theta4={:.4}\n",
        theta_mean[0], theta_mean[1], theta_mean[2], theta_mean[3]
    ));
    text.push_str("level-set components with contact probability > 0.5:\n");
    for plane in table.active_planes() {
        let spec = GridSpec::new(config.grid.cell_length, plane)?;
        let grid = contact_probability_grid(kept, &spec, table.dims())?;
        let components = component_count(&level_set(&grid, 0.5));
        text.push_str(&format!(
            "  plane {}: {}\n",
            plane.one_based(),
            components
        ));
    }
    let last = trace.records.last().expect("trace has records");
    text.push_str(&format!(
        "final pattern: {} sources at temperature {:.3e}\n",
        last.sources.len(),
        last.temperature
    ));
    fs::write(dir.join("summary.txt"), text)?;
    Ok(())
}

pub(crate) fn cluster(args: ClusterArgs) -> Result<()> {
    let trace = ChainTrace::read_path(&args.run.join("trace.jsonl"))?;
    let (names, spec) = read_normalization(&args.run.join("normalization.json"))?;
    let dims = trace.header.dims;
    let kept = trace.kept();
    let pooled: Vec<Vec<f64>> = kept
        .iter()
        .flat_map(|r| r.sources.iter().cloned())
        .collect();
    if pooled.is_empty() {
        return Err(anyhow!(HugError::Domain(
            "kept records hold no sources to cluster".into()
        )));
    }
    let seed = args.seed.unwrap_or(trace.header.seed);
    let mean_n = pooled.len() as f64 / kept.len() as f64;
    eprintln!(
        "{} kept records, {} pooled sources, mean source count {:.3}",
        kept.len(),
        pooled.len(),
        mean_n
    );

    // Sequential per-plane k-means.
    let planes = hug::model::plane_count(dims);
    let sequential = match &args.k_per_plane {
        Some(ks) => {
            let k_per_plane: Vec<usize> = if ks.len() == 1 {
                vec![ks[0]; planes]
            } else if ks.len() == planes {
                ks.clone()
            } else {
                return Err(anyhow!(HugError::Config(format!(
                    "--k-per-plane needs 1 or {planes} values, got {}",
                    ks.len()
                ))));
            };
            let order = if args.fixed_order {
                PlaneOrder::Fixed
            } else {
                PlaneOrder::Random
            };
            let collapsed = sequential_kmeans(&pooled, &k_per_plane, dims, seed, order)?;
            let sources_norm: Vec<Vec<f64>> =
                collapsed.iter().map(|(p, _)| p.clone()).collect();
            let sources_raw = denormalize(&sources_norm, &spec);
            write_matrix(&args.run.join("sequential_sources.csv"), &names, &sources_raw)?;
            eprintln!(
                "sequential k-means ({:?}) collapsed {} sources onto {} distinct vectors",
                k_per_plane,
                pooled.len(),
                collapsed.len()
            );
            Some((k_per_plane, collapsed, sources_raw))
        }
        None => None,
    };

    // Global k-means with median points.
    let global = kmeans(&pooled, args.k_global, seed)?;
    let medians_raw = denormalize(&global.medians, &spec);
    let centers_raw = denormalize(&global.centers, &spec);
    write_matrix(&args.run.join("proposed_sources.csv"), &names, &medians_raw)?;

    // Dendrogram over the pooled sources (subsampled when very large).
    let stride = pooled.len().div_ceil(4000);
    let dendro_points: Vec<Vec<f64>> = pooled.iter().step_by(stride).cloned().collect();
    if stride > 1 {
        eprintln!(
            "dendrogram subsampled every {stride}th source ({} points)",
            dendro_points.len()
        );
    }
    let dendrogram = ward_dendrogram(&dendro_points)?;
    {
        let mut out = BufWriter::new(fs::File::create(args.run.join("dendrogram.csv"))?);
        dendrogram.write_csv(&mut out)?;
    }

    // Cluster-mass report.
    let top = args.mass_top.unwrap_or(args.k_global);
    let candidates: Vec<usize> = match &args.mass_range {
        Some(range) => parse_range(range)?,
        None => (args.k_global + 1..=args.k_global + 5).collect(),
    };
    let masses = cluster_mass_check(&pooled, &candidates, top, seed)?;
    {
        let mut text = String::from("k,proportion\n");
        for (k, p) in &masses {
            text.push_str(&format!("{k},{p}\n"));
        }
        fs::write(args.run.join("cluster_mass.csv"), text)?;
    }

    write_clusters_json(
        &args.run.join("clusters.json"),
        &names,
        &spec,
        mean_n,
        seed,
        &global,
        &pooled,
        &medians_raw,
        &centers_raw,
        sequential.as_ref(),
        &masses,
        top,
    )?;
    eprintln!(
        "global k-means (k={}) sizes {:?}; outputs in {}",
        args.k_global,
        global.sizes,
        args.run.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_clusters_json(
    path: &Path,
    names: &[String],
    spec: &NormalizationSpec,
    mean_n: f64,
    seed: u64,
    global: &ClusterResult,
    pooled: &[Vec<f64>],
    medians_raw: &[Vec<f64>],
    centers_raw: &[Vec<f64>],
    sequential: Option<&(Vec<usize>, Vec<(Vec<f64>, usize)>, Vec<Vec<f64>>)>,
    masses: &[(usize, f64)],
    mass_top: usize,
) -> Result<()> {
    let k = global.centers.len();
    let dims = names.len();
    // Per-cluster per-coordinate mean and standard deviation in raw units.
    let mut cluster_stats = Vec::with_capacity(k);
    for c in 0..k {
        let members_raw: Vec<Vec<f64>> = denormalize(
            &pooled
                .iter()
                .zip(&global.assignments)
                .filter(|&(_, &a)| a == c)
                .map(|(p, _)| p.clone())
                .collect::<Vec<_>>(),
            spec,
        );
        let n = members_raw.len().max(1) as f64;
        let mean: Vec<f64> = (0..dims)
            .map(|d| members_raw.iter().map(|p| p[d]).sum::<f64>() / n)
            .collect();
        let sd: Vec<f64> = (0..dims)
            .map(|d| {
                (members_raw
                    .iter()
                    .map(|p| (p[d] - mean[d]).powi(2))
                    .sum::<f64>()
                    / n)
                    .sqrt()
            })
            .collect();
        cluster_stats.push(serde_json::json!({
            "size": global.sizes[c],
            "median": medians_raw[c],
            "mean": mean,
            "sd": sd,
            "center": centers_raw[c],
        }));
    }
    let sequential_json = sequential.map(|(k_per_plane, collapsed, raw)| {
        serde_json::json!({
            "k_per_plane": k_per_plane,
            "sources": raw,
            "multiplicities": collapsed.iter().map(|(_, m)| *m).collect::<Vec<_>>(),
        })
    });
    let doc = serde_json::json!({
        "names": names,
        "seed": seed,
        "mean_source_count": mean_n,
        "suggested_cluster_count": mean_n.round() as i64,
        "global": {
            "k": k,
            "inertia": global.inertia,
            "clusters": cluster_stats,
        },
        "sequential": sequential_json,
        "cluster_mass": {
            "top": mass_top,
            "proportions": masses.iter().map(|(k, p)| serde_json::json!({"k": k, "proportion": p})).collect::<Vec<_>>(),
        },
    });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub(crate) fn evaluate(args: EvaluateArgs) -> Result<()> {
    let sources_path = args
        .sources
        .clone()
        .unwrap_or_else(|| args.run.join("proposed_sources.csv"));
    let (_, proposed) = load_matrix_csv(&sources_path)?;
    let (_, truth) = load_matrix_csv(&args.truth)?;
    let (truth_names, _) = load_matrix_csv(&args.truth)?;
    if proposed.is_empty() || truth.is_empty() {
        return Err(anyhow!(HugError::Data(
            "source tables must hold at least one row".into()
        )));
    }
    if proposed[0].len() != truth[0].len() {
        return Err(anyhow!(HugError::Data(format!(
            "proposed sources have {} columns, truth has {}",
            proposed[0].len(),
            truth[0].len()
        ))));
    }
    let strategy = match args.matching.as_str() {
        "optimal" => MatchingStrategy::Optimal,
        "greedy" => MatchingStrategy::Greedy,
        other => {
            return Err(anyhow!(HugError::Config(format!(
                "unknown matching strategy '{other}' (expected optimal or greedy)"
            ))))
        }
    };
    let matching = match_sources(&proposed, &truth, strategy)?;
    for &p in &matching.unmatched_proposed {
        eprintln!("warning: proposed source {} is unmatched", p + 1);
    }
    for &t in &matching.unmatched_truth {
        eprintln!("warning: true source {} is unmatched", t + 1);
    }
    let table = relative_error_table(&proposed, &truth, &matching.pairs)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &truth_names)?;
    fs::write(args.run.join("errors.csv"), &buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    if let Some(mean) = table.global_mean {
        eprintln!("global mean relative error: {mean:.2}%");
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = text.split('-').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| anyhow!(HugError::Config(format!("bad cluster range '{text}'"))))
    };
    match parts.as_slice() {
        [single] => Ok(vec![parse(single)?]),
        [lo, hi] => {
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(anyhow!(HugError::Config(format!(
                    "bad cluster range '{text}'"
                ))));
            }
            Ok((lo..=hi).collect())
        }
        _ => Err(anyhow!(HugError::Config(format!(
            "bad cluster range '{text}'"
        )))),
    }
}

fn write_matrix(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, names, rows)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_normalization(path: &Path, names: &[String], spec: &NormalizationSpec) -> Result<()> {
    let doc = serde_json::json!({ "names": names, "spec": spec });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn read_normalization(path: &Path) -> Result<(Vec<String>, NormalizationSpec)> {
    let text = fs::read_to_string(path)
        .map_err(|e| HugError::Data(format!("cannot read {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| HugError::Data(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = serde_json::from_value(doc["names"].clone())
        .map_err(|e| HugError::Data(format!("{}: names: {e}", path.display())))?;
    let spec: NormalizationSpec = serde_json::from_value(doc["spec"].clone())
        .map_err(|e| HugError::Data(format!("{}: spec: {e}", path.display())))?;
    Ok((names, spec))
}
