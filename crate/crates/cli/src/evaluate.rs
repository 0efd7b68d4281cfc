use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use seekersim_core::backend::{BackendRole, HttpEmbeddingBackend};
use seekersim_core::config::RuntimeConfig;
use seekersim_core::domain::{SeekerProfile, SessionTranscript};
use seekersim_core::eval::{
    anthropomorphism, load_references, load_transcript_groups, ltm_ablation, personality_fidelity, rsd,
    seeker_texts, AnthropomorphismReport, EmbeddingCosine, EvalReport, ExactMatch, JudgeScore, LexicalOverlap,
    LtmArms, Provenance, QuestionBank, RsdReport, SimilarityProvider, TranscriptGroup,
};
use seekersim_core::memory::MemoryStore;
use seekersim_core::orchestrator::{open_session, Engine};
use seekersim_core::Error;

use crate::{CliError, EvalArgs, Metric, Provider};

fn provider(args: &EvalArgs) -> Result<Box<dyn SimilarityProvider>, CliError> {
    Ok(match args.provider {
        Provider::Exact => Box::new(ExactMatch),
        Provider::Lexical => Box::new(LexicalOverlap),
        Provider::Embedding => {
            let (Some(url), Some(model)) = (&args.embedding_url, &args.embedding_model) else {
                return Err(CliError::config(
                    "config: --provider embedding needs --embedding-url and --embedding-model",
                ));
            };
            let key = match &args.embedding_key_env {
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| CliError::config(format!("config: environment variable {var} is not set")))?,
                ),
                None => None,
            };
            let backend = HttpEmbeddingBackend::new(url.clone(), model.clone(), key, Duration::from_secs(60))?;
            Box::new(EmbeddingCosine::new(Arc::new(backend)))
        }
    })
}

async fn score_groups(
    args: &EvalArgs,
    groups: &[TranscriptGroup],
    provider: &dyn SimilarityProvider,
    report: &mut EvalReport,
) -> Result<(), CliError> {
    let path = args
        .references
        .as_ref()
        .ok_or_else(|| CliError::config("config: anthropomorphism needs --references"))?;
    let references = load_references(path).map_err(|e| CliError::from(e.in_stage("references")))?;
    if references.is_empty() {
        return Err(Error::EmptyCorpus(format!("no reference utterances in {}", path.display())).into());
    }
    let all = seeker_texts(groups.iter().flat_map(|g| g.transcripts.iter()));
    let overall = anthropomorphism(&all, &references, provider, args.sample_rate, args.seed)
        .await
        .map_err(|e| CliError::from(e.in_stage("anthropomorphism")))?;
    let mut per_group = BTreeMap::new();
    if groups.len() > 1 {
        for g in groups {
            let texts = seeker_texts(&g.transcripts);
            if texts.is_empty() {
                report.provenance.notes.push(format!("group `{}` has no seeker utterances", g.name));
                continue;
            }
            let s = anthropomorphism(&texts, &references, provider, args.sample_rate, args.seed)
                .await
                .map_err(|e| CliError::from(e.in_stage("anthropomorphism")))?;
            per_group.insert(g.name.clone(), s);
        }
    }
    report.anthropomorphism = Some(AnthropomorphismReport {
        overall,
        groups: per_group,
        candidates: all.len(),
        references: references.len(),
    });
    Ok(())
}

fn group_rsd(report: &mut EvalReport) {
    let Some(a) = &report.anthropomorphism else {
        report
            .provenance
            .notes
            .push("rsd needs per-group anthropomorphism scores; skipped".into());
        return;
    };
    if a.groups.len() < 2 {
        report
            .provenance
            .notes
            .push("rsd needs at least two transcript groups; skipped".into());
        return;
    }
    let values: Vec<f64> = a.groups.values().map(|p| p.f1).collect();
    match rsd(&values) {
        Ok(percent) => {
            report.rsd = Some(RsdReport {
                metric: "anthropomorphism_f1".into(),
                groups: a.groups.keys().cloned().collect(),
                percent,
            })
        }
        Err(e) => report.provenance.notes.push(format!("rsd skipped: {e}")),
    }
}

fn load_profiles(cfg: &RuntimeConfig, wanted: &[String]) -> Result<Vec<SeekerProfile>, CliError> {
    let dir = cfg
        .paths
        .seekers
        .clone()
        .ok_or_else(|| CliError::config("config: paths.seekers is not set"))?;
    let all = SeekerProfile::load_dir(&dir).map_err(|e| CliError::from(e.in_stage("seekers")))?;
    let picked: Vec<_> = all
        .into_iter()
        .filter(|p| wanted.is_empty() || wanted.contains(&p.id))
        .collect();
    if picked.is_empty() {
        return Err(CliError::config("config: no matching seeker profiles"));
    }
    Ok(picked)
}

async fn fidelity(cfg: &RuntimeConfig, profiles: &[SeekerProfile]) -> Result<Option<JudgeScore>, CliError> {
    let bank = QuestionBank::personality();
    let mut scores = Vec::new();
    for p in profiles {
        let engine = Arc::new(Engine::from_config(cfg.clone()).map_err(|e| CliError::from(e.in_stage("engine")))?);
        let mut rt = open_session(engine.clone(), p, MemoryStore::new(p.id.clone()))
            .await
            .map_err(|e| CliError::from(e.in_stage("open")))?;
        let s = personality_fidelity(&mut rt, &bank, engine.backends().get(BackendRole::Judge))
            .await
            .map_err(|e| CliError::from(e.in_stage("fidelity")))?;
        scores.push(s);
    }
    Ok(JudgeScore::merge(scores))
}

async fn memory_probe(
    cfg: &RuntimeConfig,
    profiles: &[SeekerProfile],
    groups: &[TranscriptGroup],
    notes: &mut Vec<String>,
) -> Result<LtmArms, CliError> {
    let bank = QuestionBank::long_term();
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for g in groups {
        for p in profiles {
            let archive: Vec<SessionTranscript> = g
                .transcripts
                .iter()
                .filter(|t| t.seeker_id() == p.id && !t.is_open())
                .cloned()
                .collect();
            if archive.is_empty() {
                notes.push(format!("ltm: no closed session of `{}` in group `{}`", p.id, g.name));
                continue;
            }
            let arms = ltm_ablation(|| Ok(Arc::new(Engine::from_config(cfg.clone())?)), p, &archive, &bank)
                .await
                .map_err(|e| CliError::from(e.in_stage("ltm")))?;
            with.extend(arms.with_memory);
            without.extend(arms.without_memory);
        }
    }
    if with.is_empty() {
        return Err(Error::EmptyCorpus("no archived sessions to probe".into()).into());
    }
    Ok(LtmArms {
        with_memory: JudgeScore::merge(with),
        without_memory: JudgeScore::merge(without),
    })
}

pub async fn run(args: EvalArgs) -> Result<(), CliError> {
    if !(args.sample_rate > 0.0 && args.sample_rate <= 1.0) {
        return Err(CliError::config("config: --sample-rate must be in (0, 1]"));
    }
    let groups = load_transcript_groups(&args.transcripts).map_err(|e| CliError::config(e.in_stage("transcripts")))?;
    if groups.iter().all(|g| g.transcripts.is_empty()) {
        return Err(Error::EmptyCorpus(format!("no transcripts under {}", args.transcripts.display())).into());
    }
    let provider = provider(&args)?;
    let mut report = EvalReport::new(Provenance {
        similarity_provider: provider.id().to_string(),
        judge_backend: None,
        sample_seed: args.seed,
        pair_sample_rate: args.sample_rate,
        notes: Vec::new(),
    });
    let wants = |m: Metric| args.metrics.contains(&m);
    if wants(Metric::Anthropomorphism) || wants(Metric::Rsd) {
        score_groups(&args, &groups, provider.as_ref(), &mut report).await?;
    }
    if wants(Metric::Rsd) {
        group_rsd(&mut report);
    }
    if wants(Metric::Fidelity) || wants(Metric::Ltm) {
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| CliError::config("config: judge metrics need --config"))?;
        let cfg = RuntimeConfig::load(path).map_err(|e| CliError::config(e.in_stage("config")))?;
        let profiles = load_profiles(&cfg, &args.seekers)?;
        let judge = Engine::from_config(cfg.clone()).map_err(|e| CliError::from(e.in_stage("engine")))?;
        report.provenance.judge_backend = judge.backends().ids().get(BackendRole::Judge.as_str()).cloned();
        if wants(Metric::Fidelity) {
            report.personality_fidelity = fidelity(&cfg, &profiles).await?;
        }
        if wants(Metric::Ltm) {
            let mut notes = Vec::new();
            report.ltm_accuracy = Some(memory_probe(&cfg, &profiles, &groups, &mut notes).await?);
            report.provenance.notes.extend(notes);
        }
    }
    report.validate()?;
    eprint!("{}", report.render_table());
    match &args.out {
        Some(path) => std::fs::write(path, report.to_json())
            .map_err(|e| CliError::new(crate::EXIT_FAILURE, format!("write {}: {e}", path.display())))?,
        None => print!("{}", report.to_json()),
    }
    Ok(())
}
