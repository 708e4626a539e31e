//! Reasoner-judged relevance of retrieved reviews.

use revperf_core::Review;
use revperf_reasoner::{complete, Conversation, Message, Reasoner};

use crate::AugmentError;

pub const RELEVANCE_CHANNEL: &str = "relevance";

const SYSTEM: &str = "You judge whether a related app review helps reproduce a performance problem \
described in a target review. Keep the related review only if all three hold: \
(1) it describes the same issue topic, (2) its content overlaps with the target review, \
(3) it adds information the target review lacks (steps, settings, screens, device state). \
Explain briefly, then finish with a final line that is exactly KEEP or DROP.";

fn prompt(target: &Review, candidate: &Review) -> String {
    format!(
        "Target review ({} v{}):\n{}\n\nRelated review {}:\n{}\n\nVerdict line: KEEP or DROP.",
        target.app_id,
        target.app_version,
        target.text.trim(),
        candidate.id,
        candidate.text.trim()
    )
}

/// Reads the last verdict line. `VERDICT:` prefixes, markdown emphasis and a
/// trailing full stop are tolerated; anything else on the line is not.
pub fn parse_relevance(reply: &str) -> Option<bool> {
    reply.lines().rev().map(str::trim).filter(|l| !l.is_empty()).find_map(|line| {
        let mut l = line.trim_matches(|c| c == '*' || c == '`' || c == '.').trim();
        if let Some(rest) = l.strip_prefix("VERDICT:").or_else(|| l.strip_prefix("Verdict:")) {
            l = rest.trim_matches(|c: char| c == '*' || c == '`' || c == '.' || c.is_whitespace());
        }
        match l {
            "KEEP" => Some(true),
            "DROP" => Some(false),
            _ => None,
        }
    })
}

/// Asks about each candidate in turn and keeps the ones judged KEEP, in order.
pub fn filter_relevant(
    target: &Review,
    candidates: &[Review],
    reasoner: &dyn Reasoner,
    budget: usize,
) -> Result<Vec<Review>, AugmentError> {
    let mut kept = Vec::new();
    for candidate in candidates {
        let mut conv = Conversation::with_channel(RELEVANCE_CHANNEL);
        conv.push_pinned(Message::system(SYSTEM));
        conv.push(Message::user(prompt(target, candidate)));
        let reply = complete(&conv, budget, reasoner)?;
        let verdict = match parse_relevance(&reply) {
            Some(v) => v,
            None => {
                conv.push(Message::assistant(reply));
                conv.push(Message::user("Your answer had no verdict line. Reply with exactly KEEP or DROP."));
                let retry = complete(&conv, budget, reasoner)?;
                parse_relevance(&retry).ok_or_else(|| {
                    AugmentError::MalformedReasonerOutput(format!(
                        "no KEEP/DROP verdict for review {} after reprompt",
                        candidate.id
                    ))
                })?
            }
        };
        if verdict {
            kept.push(candidate.clone());
        }
    }
    Ok(kept)
}
