//! Enrichment of the target review into symptom, triggers and categories.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use revperf_core::{classify_review, IssueCategory, KeywordMap, Review};
use revperf_reasoner::{complete, Conversation, Message, Reasoner};

use crate::{AugmentError, EnrichedReview, EssentialContext};

pub const ENRICH_CHANNEL: &str = "enrich";

const SYSTEM: &str = "You turn an app review about a performance problem into a reproduction brief. \
Answer with labeled sections, each header on its own line:\n\
SYMPTOM: one sentence naming the observable performance symptom\n\
TRIGGERS: a bullet list of actions, screens, settings or device states that provoke it\n\
CATEGORIES: comma-separated subset of SlowInteraction, FreezeUnresponsive, ExcessiveResource\n\
ANALYSIS: free-form notes that help reproduce the issue";

/// Sections read from an enrichment reply. `categories` is `None` when the
/// section is missing or names no known category.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Enrichment {
    pub symptom: String,
    pub triggers: Vec<String>,
    pub categories: Option<BTreeSet<IssueCategory>>,
    pub analysis: String,
}

const SECTIONS: [&str; 4] = ["SYMPTOM", "TRIGGERS", "CATEGORIES", "ANALYSIS"];

/// Splits a header line into (section, inline remainder).
fn header(line: &str) -> Option<(&'static str, &str)> {
    let l = line.trim().trim_start_matches('#').trim().trim_start_matches("**");
    SECTIONS.iter().find_map(|name| {
        let rest = l.get(..name.len()).filter(|p| p.eq_ignore_ascii_case(name)).map(|_| &l[name.len()..])?;
        let rest = rest.trim_start_matches("**");
        rest.strip_prefix(':')
            .map(|r| r.trim_start_matches("**").trim())
            .or_else(|| rest.trim().is_empty().then_some(""))
            .map(|r| (*name, r))
    })
}

pub fn parse_enrichment(reply: &str) -> Result<Enrichment, String> {
    let mut bodies: Vec<(&'static str, Vec<&str>)> = Vec::new();
    for line in reply.lines() {
        if let Some((name, inline)) = header(line) {
            bodies.push((name, if inline.is_empty() { vec![] } else { vec![inline] }));
        } else if let Some((_, body)) = bodies.last_mut() {
            body.push(line);
        }
    }
    let section = |name: &str| bodies.iter().find(|(n, _)| *n == name).map(|(_, b)| b.join("\n").trim().to_string());

    let symptom = section("SYMPTOM").filter(|s| !s.is_empty()).ok_or("missing SYMPTOM section")?;
    let triggers = section("TRIGGERS")
        .map(|t| {
            t.lines()
                .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim())
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let categories = section("CATEGORIES").and_then(|c| {
        let set: BTreeSet<IssueCategory> =
            c.split([',', '\n', ';']).filter_map(|t| t.trim().trim_start_matches('-').trim().parse().ok()).collect();
        (!set.is_empty()).then_some(set)
    });
    Ok(Enrichment { symptom, triggers, categories, analysis: section("ANALYSIS").unwrap_or_default() })
}

fn prompt(target: &Review, relevant: &[Review], context: &EssentialContext) -> String {
    let mut out = format!(
        "Target review ({} v{}, {} stars):\n{}\n",
        target.app_id,
        target.app_version,
        target.rating,
        target.text.trim()
    );
    if relevant.is_empty() {
        out.push_str("\nNo related reviews.\n");
    } else {
        out.push_str("\nRelated reviews from the same version:\n");
        for r in relevant {
            let _ = writeln!(out, "- [{}] {}", r.id, r.text.trim());
        }
    }
    let _ = write!(out, "\nApp context:\n{}", context.render());
    out
}

/// Builds the enriched review. Expected categories fall back to the keyword
/// classifier over the target text when the reply does not provide them.
pub fn enrich_review(
    target: &Review,
    relevant: &[Review],
    context: &EssentialContext,
    reasoner: &dyn Reasoner,
    keywords: &KeywordMap,
    budget: usize,
) -> Result<EnrichedReview, AugmentError> {
    let mut conv = Conversation::with_channel(ENRICH_CHANNEL);
    conv.push_pinned(Message::system(SYSTEM));
    conv.push(Message::user(prompt(target, relevant, context)));
    let reply = complete(&conv, budget, reasoner)?;
    let parsed = match parse_enrichment(&reply) {
        Ok(p) => p,
        Err(e) => {
            conv.push(Message::assistant(reply));
            conv.push(Message::user(format!("{e}. Answer again using the SYMPTOM/TRIGGERS/CATEGORIES/ANALYSIS headers.")));
            let retry = complete(&conv, budget, reasoner)?;
            parse_enrichment(&retry).map_err(|e| AugmentError::MalformedReasonerOutput(format!("{e} after reprompt")))?
        }
    };
    Ok(EnrichedReview {
        original: target.clone(),
        related: relevant.to_vec(),
        symptom_summary: parsed.symptom,
        triggers: parsed.triggers,
        expected_categories: parsed.categories.unwrap_or_else(|| classify_review(&target.text, keywords)),
        context: context.clone(),
        analysis: parsed.analysis,
    })
}
