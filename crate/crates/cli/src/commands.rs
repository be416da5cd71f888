use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use adaptive_survey_core::planted::{PlantedConfig, PlantedWorld};
use adaptive_survey_core::simulation::{
    compare_conditions, replacement_study, sweep_k, ConditionCurves, InitCondition, SimulationConfig, SyntheticBundle,
};
use adaptive_survey_core::survey::{
    load_party_results, load_questionnaire, load_responses, party_means, save_party_results, save_questionnaire,
    save_responses, Questionnaire, RespondentKind, ResponseMatrix,
};
use adaptive_survey_core::synthetic::{
    generate_dataset, gpt_means, matrix_to_samples, party_vertices, read_fixtures, sample_gpt_voters, samples_to_matrix,
    temperature_report, vertices_to_matrix, write_fixtures, HttpTransport, LlmConfig, MockTransport, ReplayTransport,
    Transport, VoterSynthesisConfig, DEFAULT_REPS_PER_TEMPERATURE, DEFAULT_TEMPERATURES,
};
use adaptive_survey_core::Error as CoreError;
use adaptive_survey_service::{Engine, ServiceConfig};

use crate::args::*;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = required(out, "out")?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Environment(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn questionnaire(path: &Option<PathBuf>, manifest: &mut RunManifest) -> Result<Questionnaire> {
    let path = required(path, "questions")?;
    let q = load_questionnaire(&path)?;
    manifest.input(&path)?;
    Ok(q)
}

fn responses(path: &Path, qn: &Questionnaire, kind: RespondentKind, manifest: &mut RunManifest) -> Result<ResponseMatrix> {
    let m = load_responses(path, qn, kind)?;
    manifest.input(path)?;
    Ok(m)
}

fn write_text(path: &Path, text: &str, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, text)?;
    manifest.output(path)
}

fn parse_condition(s: &str) -> Result<InitCondition> {
    s.parse().map_err(|e: CoreError| CliError::Usage(e.to_string()))
}

fn parse_parties(arg: &str) -> Result<Vec<String>> {
    let text = if Path::new(arg).is_file() { std::fs::read_to_string(arg)? } else { arg.replace(',', "\n") };
    let parties: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if parties.is_empty() {
        return Err(CliError::Usage("--parties names no party".into()));
    }
    Ok(parties)
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("generate", serde_json::to_value(&args)?);
    let qn = questionnaire(&args.questions, &mut manifest)?;
    let parties = parse_parties(&required(&args.parties, "parties")?)?;
    let out = out_dir(&args.out)?;
    let seed = args.seed.unwrap_or(0);
    manifest.seeds.push(seed);
    let defaults = LlmConfig::default();
    let base = LlmConfig {
        endpoint_url: args.endpoint.clone().unwrap_or(defaults.endpoint_url),
        model_name: args.model.clone().unwrap_or(defaults.model_name),
        api_key_env: args.api_key_env.clone().unwrap_or(defaults.api_key_env),
        timeout: args.timeout_secs.map(Duration::from_secs).unwrap_or(defaults.timeout),
        concurrency: args.concurrency.unwrap_or(defaults.concurrency),
        ..defaults
    };
    let transport: Box<dyn Transport> = match args.transport.as_deref().unwrap_or("live") {
        "live" => Box::new(HttpTransport::from_env(&base.endpoint_url, &base.api_key_env, base.timeout)?),
        "mock" => {
            let path = required(&args.mock_profiles, "mock-profiles")?;
            let profiles = party_means(&responses(&path, &qn, RespondentKind::Candidate, &mut manifest)?)?;
            Box::new(MockTransport::new(&profiles, args.mock_noise.unwrap_or(0.1), seed)?)
        }
        "replay" => {
            let path = required(&args.fixtures, "fixtures")?;
            manifest.input(&path)?;
            Box::new(ReplayTransport::new(read_fixtures(&path)?))
        }
        other => return Err(CliError::Usage(format!("unknown transport {other:?}; expected live, mock or replay"))),
    };
    let temperatures = args.temperatures.clone().unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
    let reps = args.reps.unwrap_or(DEFAULT_REPS_PER_TEMPERATURE);
    let data = generate_dataset(&base, &parties, &qn, reps, &temperatures, transport.as_ref())?;
    if data.failed_cells > 0 {
        log::warn!("{} cells failed after retries and are left missing", data.failed_cells);
    }

    let matrix = samples_to_matrix(&data.samples, qn.len())?;
    let gpt = out.join("gpt.csv");
    save_responses(&gpt, &matrix, &qn)?;
    manifest.output(&gpt)?;
    let fixtures = out.join("fixtures.jsonl");
    write_fixtures(&fixtures, &data.fixtures)?;
    manifest.output(&fixtures)?;
    let mut report = String::from("temperature,n_samples,mean_distance,response_std,missing,missing_pct\n");
    for r in temperature_report(&data.samples, &party_means(&matrix)?) {
        let std = if r.std_undefined { String::new() } else { r.response_std.to_string() };
        writeln!(report, "{},{},{},{std},{},{}", r.temperature, r.n_samples, r.mean_distance, r.missing, r.missing_pct).unwrap();
    }
    write_text(&out.join("temperatures.csv"), &report, &mut manifest)?;
    println!("wrote {} samples ({} failed cells) to {}", data.samples.len(), data.failed_cells, gpt.display());
    manifest.finish(&out)?;
    Ok(())
}

pub fn derive(args: DeriveArgs) -> Result<()> {
    let mut manifest = RunManifest::new("derive", serde_json::to_value(&args)?);
    let qn = questionnaire(&args.questions, &mut manifest)?;
    let input = required(&args.input, "in")?;
    let what = required(&args.what, "what")?;
    if what == "voters" && args.alpha.is_none() {
        return Err(CliError::Usage("--what voters needs --alpha <party_results.csv>".into()));
    }
    let out = out_dir(&args.out)?;
    let samples = matrix_to_samples(&responses(&input, &qn, RespondentKind::Synthetic, &mut manifest)?)?;
    let (name, derived) = match what.as_str() {
        "means" => ("gpt_means.csv", gpt_means(&samples)?),
        "vertices" => ("vertices.csv", vertices_to_matrix(&party_vertices(&party_means(&samples_to_matrix(&samples, qn.len())?)?)?)?),
        "voters" => {
            let alpha_path = required(&args.alpha, "alpha")?;
            let alpha = load_party_results(&alpha_path)?;
            manifest.input(&alpha_path)?;
            let seed = args.seed.unwrap_or(0);
            manifest.seeds.push(seed);
            let vertices = party_vertices(&party_means(&samples_to_matrix(&samples, qn.len())?)?)?;
            let cfg = VoterSynthesisConfig::new(alpha, args.n.unwrap_or(1200), seed);
            ("gpt_voters.csv", sample_gpt_voters(&vertices, &cfg)?)
        }
        other => return Err(CliError::Usage(format!("unknown --what {other:?}; expected means, vertices or voters"))),
    };
    let path = out.join(name);
    save_responses(&path, &derived, &qn)?;
    manifest.output(&path)?;
    println!("wrote {} rows to {}", derived.n_rows(), path.display());
    manifest.finish(&out)?;
    Ok(())
}

/// Inputs and settings shared by the simulation commands.
struct SimInputs {
    qn: Questionnaire,
    voters: ResponseMatrix,
    candidates: ResponseMatrix,
    config: SimulationConfig,
    out: PathBuf,
}

fn sim_inputs(sim: &SimArgs, manifest: &mut RunManifest) -> Result<SimInputs> {
    let qn = questionnaire(&sim.questions, manifest)?;
    let voters = responses(&required(&sim.voters, "voters")?, &qn, RespondentKind::Voter, manifest)?;
    let candidates = responses(&required(&sim.candidates, "candidates")?, &qn, RespondentKind::Candidate, manifest)?;
    let d = SimulationConfig::default();
    let config = SimulationConfig {
        k: sim.k.unwrap_or(d.k),
        u: sim.u.unwrap_or(d.u),
        gamma: sim.gamma.unwrap_or(d.gamma),
        n_users: sim.users.unwrap_or(d.n_users),
        repetitions: sim.reps.unwrap_or(d.repetitions),
        seed: sim.seed.unwrap_or(d.seed),
        grid_resolution: sim.grid_resolution.unwrap_or(d.grid_resolution),
        k_neighbours: sim.k_neighbours.unwrap_or(d.k_neighbours),
        ..d
    };
    config.validate()?;
    manifest.seeds.push(config.seed);
    if let Some(jobs) = sim.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Only the first configuration wins; later calls in the same process are harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let out = out_dir(&sim.out)?;
    Ok(SimInputs { qn, voters, candidates, config, out })
}

fn load_init(path: &Option<PathBuf>, condition: InitCondition, inputs: &SimInputs, manifest: &mut RunManifest) -> Result<SyntheticBundle> {
    let mut bundle = SyntheticBundle::default();
    let slot = match condition {
        InitCondition::Coldstart | InitCondition::Candidates => {
            if path.is_some() {
                return Err(CliError::Usage(format!("the {condition} condition takes no --init-data")));
            }
            return Ok(bundle);
        }
        InitCondition::Gpt => &mut bundle.gpt,
        InitCondition::GptMeans => &mut bundle.gpt_means,
        InitCondition::GptVoters => &mut bundle.gpt_voters,
    };
    let path = path.as_ref().ok_or_else(|| CliError::Usage(format!("the {condition} condition needs --init-data")))?;
    *slot = Some(responses(path, &inputs.qn, RespondentKind::Synthetic, manifest)?);
    Ok(bundle)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format `series,user_index,rmse,cra`, 1-based user indices.
fn curves_csv<'a>(series: impl IntoIterator<Item = (String, &'a ConditionCurves)>) -> String {
    let mut s = String::from("series,user_index,rmse,cra\n");
    for (name, c) in series {
        for (i, (r, cra)) in c.mean_rmse.iter().zip(&c.mean_cra).enumerate() {
            writeln!(s, "{name},{},{},{cra}", i + 1, fmt_opt(*r)).unwrap();
        }
    }
    s
}

fn record_seeds(manifest: &mut RunManifest, curves: &ConditionCurves) {
    for s in &curves.seeds {
        if !manifest.seeds.contains(s) {
            manifest.seeds.push(*s);
        }
    }
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("simulate", serde_json::to_value(&args)?);
    let inputs = sim_inputs(&args.sim, &mut manifest)?;
    let condition = parse_condition(args.init.as_deref().unwrap_or("coldstart"))?;
    let bundle = load_init(&args.init_data, condition, &inputs, &mut manifest)?;
    let report = compare_conditions(&inputs.config, &[condition], &inputs.voters, &inputs.candidates, &bundle, &inputs.qn)?;
    let curves = &report.conditions[0];
    record_seeds(&mut manifest, curves);
    let out = &inputs.out;

    write_text(&out.join("curves.csv"), &curves_csv([(condition.to_string(), curves)]), &mut manifest)?;
    let mut log = String::from("repetition,user_index,voter,question_id,value\n");
    for (rep, run) in curves.runs.iter().enumerate() {
        for rec in &run.interaction_log {
            writeln!(log, "{rep},{},{},{},{}", rec.user_index + 1, run.user_order[rec.user_index], rec.question_id, rec.value).unwrap();
        }
        write_text(&out.join(format!("curve_rep{rep}.csv")), &run.curve_csv()?, &mut manifest)?;
    }
    write_text(&out.join("interactions.csv"), &log, &mut manifest)?;
    let summary = serde_json::json!({
        "config": inputs.config,
        "condition": condition,
        "seeds": curves.seeds,
        "refit_count": curves.runs.first().map(|r| r.refit_count),
        "stopped_early": curves.runs.iter().map(|r| r.stopped_early).collect::<Vec<_>>(),
        "mean_rmse_first_50": curves.rmse_between(0, 50),
        "mean_rmse_last_50": curves.rmse_between(inputs.config.n_users.saturating_sub(50), inputs.config.n_users),
    });
    write_text(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?, &mut manifest)?;
    println!("simulated {} users x {} repetitions ({condition}) into {}", inputs.config.n_users, inputs.config.repetitions, out.display());
    manifest.finish(out)?;
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let mut manifest = RunManifest::new("compare", serde_json::to_value(&args)?);
    let inputs = sim_inputs(&args.sim, &mut manifest)?;
    let conditions: Vec<InitCondition> = match &args.conditions {
        Some(list) => list.iter().map(|s| parse_condition(s)).collect::<Result<_>>()?,
        None => InitCondition::ALL.to_vec(),
    };
    let mut bundle = SyntheticBundle::default();
    for (flag, path, slot) in [
        ("gpt", &args.gpt, &mut bundle.gpt),
        ("gpt-means", &args.gpt_means, &mut bundle.gpt_means),
        ("gpt-voters", &args.gpt_voters, &mut bundle.gpt_voters),
    ] {
        let needed = conditions.iter().any(|c| c.name() == flag);
        match path {
            Some(p) if needed => *slot = Some(responses(p, &inputs.qn, RespondentKind::Synthetic, &mut manifest)?),
            None if needed => return Err(CliError::Usage(format!("the {flag} condition needs --{flag}"))),
            _ => {}
        }
    }
    let report = compare_conditions(&inputs.config, &conditions, &inputs.voters, &inputs.candidates, &bundle, &inputs.qn)?;
    let out = &inputs.out;
    record_seeds(&mut manifest, &report.conditions[0]);
    write_text(&out.join("curves.csv"), &curves_csv(report.conditions.iter().map(|c| (c.condition.to_string(), c))), &mut manifest)?;
    let mut table = String::from("condition,n_rmse,n_cra\n");
    for be in &report.break_even {
        writeln!(table, "{},{},{}", be.condition, fmt_opt(be.rmse.as_ref().and_then(|r| r.n)), fmt_opt(be.cra.n)).unwrap();
    }
    write_text(&out.join("break_even.csv"), &table, &mut manifest)?;
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(&report)?, &mut manifest)?;
    print!("{table}");
    manifest.finish(out)?;
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sweep", serde_json::to_value(&args)?);
    let inputs = sim_inputs(&args.sim, &mut manifest)?;
    let pretrained = parse_condition(args.init.as_deref().unwrap_or("gpt"))?;
    if pretrained == InitCondition::Coldstart {
        return Err(CliError::Usage("--init must name a pre-trained condition".into()));
    }
    let bundle = load_init(&args.init_data, pretrained, &inputs, &mut manifest)?;
    let ks = args.k_list.clone().unwrap_or_else(|| (1..=9).map(|i| 5 * i).collect());
    let rows = sweep_k(&inputs.config, &ks, pretrained, &inputs.voters, &inputs.candidates, &bundle, &inputs.qn)?;
    let mut table = String::from("k,n_rmse,n_cra\n");
    for r in &rows {
        writeln!(table, "{},{},{}", r.k, fmt_opt(r.n_rmse), fmt_opt(r.n_cra)).unwrap();
    }
    write_text(&inputs.out.join("break_even.csv"), &table, &mut manifest)?;
    print!("{table}");
    manifest.finish(&inputs.out)?;
    Ok(())
}

pub fn replacement(args: ReplacementArgs) -> Result<()> {
    let mut manifest = RunManifest::new("replacement", serde_json::to_value(&args)?);
    let inputs = sim_inputs(&args.sim, &mut manifest)?;
    let path = args.init_data.as_ref().ok_or_else(|| CliError::Usage("replacement needs --init-data (GPT rows)".into()))?;
    let gpt = responses(path, &inputs.qn, RespondentKind::Synthetic, &mut manifest)?;
    let gammas = args.gamma_list.clone().unwrap_or_else(|| vec![0.4, 0.8, 1.2, 2.0, 4.0, 8.0]);
    let report = replacement_study(&inputs.config, &gammas, &inputs.voters, &inputs.candidates, &gpt, &inputs.qn)?;
    let out = &inputs.out;
    record_seeds(&mut manifest, &report.coldstart);
    let series = std::iter::once(("coldstart".to_string(), &report.coldstart))
        .chain(report.rows.iter().map(|r| (format!("gamma={}", r.gamma), &r.curves)));
    write_text(&out.join("curves.csv"), &curves_csv(series), &mut manifest)?;
    let mut table = String::from("gamma,replaced_after_users,expected_replacement_users,overlap_all,overlap_after_replacement\n");
    for r in &report.rows {
        writeln!(
            table,
            "{},{},{},{},{}",
            r.gamma,
            fmt_opt(r.replaced_after_users),
            fmt_opt(r.expected_replacement_users),
            r.overlap_all,
            fmt_opt(r.overlap_after_replacement)
        )
        .unwrap();
    }
    write_text(&out.join("overlap.csv"), &table, &mut manifest)?;
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(&report)?, &mut manifest)?;
    print!("{table}");
    manifest.finish(out)?;
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let questions = required(&args.questions, "questions")?;
    let qn = load_questionnaire(&questions)?;
    let raw = std::fs::read_to_string(&questions).map_err(|e| CliError::Usage(format!("{}: {e}", questions.display())))?;
    let candidates = load_responses(required(&args.candidates, "candidates")?, &qn, RespondentKind::Candidate)?;
    let init = args
        .init_data
        .as_ref()
        .map(|p| load_responses(p, &qn, RespondentKind::Synthetic))
        .transpose()?;
    let d = ServiceConfig::default();
    let config = ServiceConfig {
        session_k: args.k.unwrap_or(d.session_k),
        u: args.u.unwrap_or(d.u),
        gamma: args.gamma.unwrap_or(d.gamma),
        abandon_after_secs: args.abandon_after_secs.unwrap_or(d.abandon_after_secs),
        staleness_budget_secs: args.staleness_budget_secs.unwrap_or(d.staleness_budget_secs),
        preview: args.preview.unwrap_or(d.preview),
        k_neighbours: args.k_neighbours.unwrap_or(d.k_neighbours),
        seed: args.seed.unwrap_or(d.seed),
        cors_origin: args.cors_origin.clone(),
        state_dir: args.state_dir.clone(),
        ..d
    };
    let host = args.host.clone().unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.unwrap_or(8080);

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::Environment(format!("cannot listen on {host}:{port}: {e}")))?;
        let engine = Engine::start(config, qn, raw, candidates, init)?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        use std::io::Write;
        std::io::stdout().flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        adaptive_survey_service::serve(engine, listener, shutdown).await?;
        Ok(())
    })
}

pub fn demo_data(args: DemoArgs) -> Result<()> {
    let mut manifest = RunManifest::new("demo-data", serde_json::to_value(&args)?);
    let out = out_dir(&args.out)?;
    let d = PlantedConfig::default();
    let cfg = PlantedConfig {
        n_questions: args.n_questions.unwrap_or(d.n_questions),
        n_parties: args.n_parties.unwrap_or(d.n_parties),
        candidates_per_party: args.candidates_per_party.unwrap_or(d.candidates_per_party),
        n_voters: args.n_voters.unwrap_or(d.n_voters),
        seed: args.seed.unwrap_or(d.seed),
        ..d
    };
    manifest.seeds.push(cfg.seed);
    let world = PlantedWorld::generate(&cfg)?;
    let paths = ["questionnaire.json", "candidates.csv", "voters.csv", "party_results.csv"].map(|f| out.join(f));
    save_questionnaire(&paths[0], &world.questionnaire)?;
    save_responses(&paths[1], &world.candidates, &world.questionnaire)?;
    save_responses(&paths[2], &world.voters, &world.questionnaire)?;
    save_party_results(&paths[3], &world.vote_shares)?;
    for p in &paths {
        manifest.output(p)?;
    }
    println!("wrote planted dataset to {}", out.display());
    manifest.finish(&out)?;
    Ok(())
}
