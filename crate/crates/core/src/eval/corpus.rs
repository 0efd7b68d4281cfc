use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::domain::{sorted_entries, SessionTranscript, Speaker};
use crate::error::{Error, Result};

/// Transcripts that share a top-level directory, e.g. one counselor's runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptGroup {
    pub name: String,
    pub transcripts: Vec<SessionTranscript>,
}

fn session_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = sorted_entries(dir)?;
    if entries
        .iter()
        .any(|p| p.to_string_lossy().ends_with(".meta.json"))
    {
        out.push(dir.to_path_buf());
    }
    for p in entries {
        if p.is_dir() {
            session_dirs(&p, out)?;
        }
    }
    Ok(())
}

/// Loads every transcript under `root`. Layouts `<root>/<seeker>/` form one
/// group named `all`; `<root>/<group>/<seeker>/` group by the first level.
pub fn load_transcript_groups(root: &Path) -> Result<Vec<TranscriptGroup>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "transcript directory not found"),
        ));
    }
    let mut dirs = Vec::new();
    session_dirs(root, &mut dirs)?;
    let mut groups: BTreeMap<String, Vec<SessionTranscript>> = BTreeMap::new();
    for d in dirs {
        let rel = d.strip_prefix(root).unwrap_or(&d);
        let parts: Vec<_> = rel.components().collect();
        let name = if parts.len() >= 2 {
            parts[0].as_os_str().to_string_lossy().into_owned()
        } else {
            "all".to_string()
        };
        groups.entry(name).or_default().extend(SessionTranscript::load_dir(&d)?);
    }
    Ok(groups
        .into_iter()
        .map(|(name, transcripts)| TranscriptGroup { name, transcripts })
        .collect())
}

/// Seeker utterance texts, in transcript order.
pub fn seeker_texts<'a>(transcripts: impl IntoIterator<Item = &'a SessionTranscript>) -> Vec<String> {
    transcripts
        .into_iter()
        .flat_map(|t| t.utterances.iter())
        .filter(|u| u.speaker == Speaker::Seeker)
        .map(|u| u.text.clone())
        .collect()
}

#[derive(Deserialize)]
struct ReferenceLine {
    text: String,
    #[serde(default)]
    speaker: Option<String>,
}

/// Real-seeker reference utterances. Accepts a transcript directory, a
/// `.jsonl` file of `{"text": ..., "speaker": ...}` records (lines whose
/// speaker is not the seeker/client/patient are skipped), or plain text with
/// one utterance per line.
pub fn load_references(path: &Path) -> Result<Vec<String>> {
    if path.is_dir() {
        let groups = load_transcript_groups(path)?;
        return Ok(seeker_texts(groups.iter().flat_map(|g| g.transcripts.iter())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if is_jsonl {
            let r: ReferenceLine =
                serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            let keep = match r.speaker.as_deref().map(str::to_lowercase).as_deref() {
                None | Some("seeker") | Some("client") | Some("patient") | Some("participant") => true,
                Some(_) => false,
            };
            if keep && !r.text.trim().is_empty() {
                out.push(r.text.trim().to_string());
            }
        } else {
            out.push(line.to_string());
        }
    }
    Ok(out)
}
