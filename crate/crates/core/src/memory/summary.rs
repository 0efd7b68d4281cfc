use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage};
use crate::domain::SeekerConfiguration;
use crate::error::Result;
use crate::prompt::TemplateSet;

use super::event::EventRecord;
use super::scale::ScaleRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Worsening,
    Improving,
    Stable,
}

impl Trend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Trend::Worsening => "worsening",
            Trend::Improving => "improving",
            Trend::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDelta {
    pub scale_id: String,
    pub previous: f64,
    pub current: f64,
    pub delta: f64,
    pub trend: Trend,
}

/// Change in total per scale, for scales present in both sets. When a scale
/// appears more than once in `prior`, the last record counts.
pub fn scale_deltas(current: &[ScaleRecord], prior: &[ScaleRecord]) -> Vec<ScaleDelta> {
    current
        .iter()
        .filter_map(|cur| {
            let prev = prior.iter().rev().find(|p| p.scale_id == cur.scale_id)?;
            let delta = cur.total - prev.total;
            let trend = if delta == 0.0 {
                Trend::Stable
            } else if (delta > 0.0) == cur.higher_is_worse {
                Trend::Worsening
            } else {
                Trend::Improving
            };
            Some(ScaleDelta {
                scale_id: cur.scale_id.clone(),
                previous: prev.total,
                current: cur.total,
                delta,
                trend,
            })
        })
        .collect()
}

/// One line per current scale: the total, and the change since the prior
/// session when there is one.
pub fn scale_digest(current: &[ScaleRecord], prior: &[ScaleRecord]) -> String {
    let deltas = scale_deltas(current, prior);
    current
        .iter()
        .map(|r| match deltas.iter().find(|d| d.scale_id == r.scale_id) {
            Some(d) => format!(
                "{}: total {} (previous {}, change {:+}, {})",
                r.scale_id,
                d.current,
                d.previous,
                d.delta,
                d.trend.as_str()
            ),
            None => format!("{}: total {} (first assessment)", r.scale_id, r.total),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Produces the `status` and `situation` slot texts. The status always ends
/// with the deterministic scale digest; the situation always contains the
/// event description.
pub async fn summarize_short_term(
    cfg: &SeekerConfiguration,
    scales: &[ScaleRecord],
    prior_scales: &[ScaleRecord],
    event: &EventRecord,
    templates: &TemplateSet,
    summarizer: &dyn ChatBackend,
) -> Result<(String, String)> {
    let digest = if scales.is_empty() {
        "no self-report scales administered".to_string()
    } else {
        scale_digest(scales, prior_scales)
    };
    let mut slots: HashMap<&str, String> = HashMap::new();
    slots.insert("profile", cfg.profile().render());
    slots.insert("scale_digest", digest.clone());
    slots.insert("event", event.description.clone());

    let prompt = templates.status_summary.render_with(&slots)?;
    let summary = summarizer.complete(&[ChatMessage::user(prompt.rendered)]).await?;
    let summary = summary.trim();
    let status = if summary.is_empty() {
        format!("Self-report results:\n{digest}")
    } else {
        format!("{summary}\nSelf-report results:\n{digest}")
    };

    let prompt = templates.situation_summary.render_with(&slots)?;
    let situation = summarizer.complete(&[ChatMessage::user(prompt.rendered)]).await?;
    let situation = situation.trim();
    let situation = if situation.is_empty() {
        format!("Recently: {}", event.description)
    } else if situation.contains(event.description.as_str()) {
        situation.to_string()
    } else {
        format!("{situation}\nRecently: {}", event.description)
    };
    Ok((status, situation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::domain::{Clock, Gender, LogicalClock, Profile, RelationshipStatus};
    use crate::memory::{Aggregation, Applicability};

    fn record(id: &str, total: f64) -> ScaleRecord {
        ScaleRecord {
            scale_id: id.into(),
            items: Vec::new(),
            total,
            aggregation: Aggregation::Sum,
            higher_is_worse: true,
            administered_at: LogicalClock::default().now(),
            session_id: "s".into(),
        }
    }

    fn cfg() -> SeekerConfiguration {
        SeekerConfiguration::new(Profile {
            age: 21,
            gender: Gender::Female,
            job: "student".into(),
            relationship_status: RelationshipStatus::Single,
            background: String::new(),
        })
    }

    fn event() -> EventRecord {
        EventRecord {
            event_id: "e".into(),
            description: "failed an exam".into(),
            applicability: Applicability::any(),
        }
    }

    #[test]
    fn delta_computation() {
        let d = scale_deltas(&[record("mood", 18.0)], &[record("mood", 12.0)]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].delta, 6.0);
        assert_eq!(d[0].trend, Trend::Worsening);

        let mut better = record("mood", 10.0);
        better.higher_is_worse = true;
        assert_eq!(scale_deltas(&[better], &[record("mood", 12.0)])[0].trend, Trend::Improving);
        assert_eq!(scale_deltas(&[record("mood", 12.0)], &[record("mood", 12.0)])[0].trend, Trend::Stable);
        assert!(scale_deltas(&[record("mood", 12.0)], &[record("other", 1.0)]).is_empty());
        let reversed = ScaleRecord {
            higher_is_worse: false,
            ..record("wellbeing", 20.0)
        };
        assert_eq!(scale_deltas(&[reversed], &[record("wellbeing", 10.0)])[0].trend, Trend::Improving);
    }

    #[tokio::test]
    async fn first_session_uses_baseline_phrasing() {
        let b = MockBackend::cycling(["You sleep badly.", "You are a student."]);
        let (status, _) = summarize_short_term(&cfg(), &[record("mood", 12.0)], &[], &event(), &TemplateSet::default(), &b)
            .await
            .unwrap();
        assert!(status.contains("first assessment"));
        assert!(!status.contains("change"));
        assert!(b.calls()[0][0].content.contains("mood: total 12 (first assessment)"));
    }

    #[tokio::test]
    async fn worsening_delta_reaches_prompt_and_status() {
        let b = MockBackend::cycling(["You sleep badly.", "You are a student."]);
        let (status, _) = summarize_short_term(
            &cfg(),
            &[record("mood", 18.0)],
            &[record("mood", 12.0)],
            &event(),
            &TemplateSet::default(),
            &b,
        )
        .await
        .unwrap();
        let prompt = &b.calls()[0][0].content;
        assert!(prompt.contains("change +6, worsening"), "{prompt}");
        assert!(status.contains("change +6, worsening"));
        assert!(status.starts_with("You sleep badly."));
    }

    #[tokio::test]
    async fn situation_includes_event() {
        let b = MockBackend::cycling(["You sleep badly.", "You live on campus."]);
        let (_, situation) = summarize_short_term(&cfg(), &[], &[], &event(), &TemplateSet::default(), &b)
            .await
            .unwrap();
        assert!(situation.contains("failed an exam"));
        assert!(situation.starts_with("You live on campus."));

        let b = MockBackend::cycling([""]);
        let (status, situation) = summarize_short_term(&cfg(), &[], &[], &event(), &TemplateSet::default(), &b)
            .await
            .unwrap();
        assert!(!status.trim().is_empty());
        assert_eq!(situation, "Recently: failed an exam");
    }
}
