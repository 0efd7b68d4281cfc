use std::path::PathBuf;
use std::sync::Arc;

use seekersim_core::domain::SeekerProfile;
use seekersim_core::memory::MemoryStore;
use seekersim_core::orchestrator::{open_session, persist, run_simulation, Engine, StopRule};
use seekersim_core::Error;

use crate::{CliError, SimulateArgs, EXIT_INCOMPLETE};

fn pick<'a>(all: impl Iterator<Item = &'a String>, wanted: &[String], what: &str) -> Result<Vec<String>, CliError> {
    let all: Vec<String> = all.cloned().collect();
    if wanted.is_empty() {
        return Ok(all);
    }
    for w in wanted {
        if !all.contains(w) {
            return Err(CliError::config(format!("config: unknown {what} `{w}`")));
        }
    }
    Ok(wanted.to_vec())
}

pub async fn run(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = args.overrides.load()?;
    if args.rounds == 0 || args.sessions == 0 {
        return Err(CliError::config("config: --rounds and --sessions must be at least 1"));
    }
    let out: PathBuf = args
        .out
        .clone()
        .or_else(|| cfg.paths.archive.clone())
        .ok_or_else(|| CliError::config("config: no output directory (pass --out or set paths.archive)"))?;
    let dir = cfg
        .paths
        .seekers
        .clone()
        .ok_or_else(|| CliError::config("config: paths.seekers is not set"))?;
    let profiles = SeekerProfile::load_dir(&dir).map_err(|e| CliError::from(e.in_stage("seekers")))?;
    let ids: Vec<String> = profiles.iter().map(|p| p.id.clone()).collect();
    let seekers = pick(ids.iter(), &args.seekers, "seeker")?;
    if seekers.is_empty() {
        return Err(CliError::config(format!("config: no seeker profiles in {}", dir.display())));
    }
    let counselors = pick(cfg.counselors.keys(), &args.counselors, "counselor")?;
    if counselors.is_empty() {
        return Err(CliError::config("config: no counselor backends configured"));
    }
    let stop = if args.no_end_token {
        StopRule::MaxRoundsOnly
    } else {
        StopRule::EndToken(cfg.end_token.clone())
    };

    let mut incomplete = 0;
    for name in &counselors {
        // a fresh engine per counselor keeps each counselor's run reproducible on its own
        let engine = Arc::new(Engine::from_config(cfg.clone()).map_err(|e| CliError::from(e.in_stage("engine")))?);
        let counselor = engine.counselor(name)?;
        let root = out.join(name);
        for id in &seekers {
            let profile = profiles.iter().find(|p| &p.id == id).expect("picked from profiles");
            let mut memory = MemoryStore::load(&root, id).map_err(|e| CliError::from(e.in_stage("archive")))?;
            for _ in 0..args.sessions {
                let rt = open_session(engine.clone(), profile, memory)
                    .await
                    .map_err(|e| CliError::from(Error::in_stage(e, "open")))?;
                let outcome = run_simulation(counselor.as_ref(), rt, args.rounds, &stop).await?;
                persist(&root, &outcome.transcript).map_err(|e| CliError::from(e.in_stage("write")))?;
                let status = match &outcome.failure {
                    None => "ok".to_string(),
                    Some(f) => {
                        incomplete += 1;
                        format!("incomplete: {f}")
                    }
                };
                println!(
                    "{name}/{id} {} rounds={} {status}",
                    outcome.transcript.session_id(),
                    outcome.rounds
                );
                memory = outcome.memory;
            }
        }
    }
    if incomplete > 0 {
        return Err(CliError::new(
            EXIT_INCOMPLETE,
            format!("simulate: {incomplete} session(s) ended early; transcripts are flagged incomplete"),
        ));
    }
    Ok(())
}
