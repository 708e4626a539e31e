use std::collections::BTreeSet;

use crate::{complete, estimate_tokens, message_tokens, Conversation, Message, Reasoner, ReasonerError, Role};

/// Number of most recent user/assistant exchanges kept verbatim.
pub const RECENT_EXCHANGES_KEPT: usize = 3;

const DIGEST_HEADER: &str = "[history digest] Earlier steps, oldest first:";
const DIGEST_LINE_CHARS: usize = 160;

/// Shrinks a conversation to fit `budget`.
///
/// Pinned messages and the most recent exchanges survive verbatim; older
/// unpinned messages collapse into one digest message placed where the first
/// of them stood. The digest lists each folded exchange as
/// `observation => reply`, and is cut from the front until the result fits.
/// When even that is not enough, fewer recent exchanges are kept.
pub fn compress_history(
    conv: &Conversation,
    budget: usize,
    adapter: Option<&dyn Reasoner>,
) -> Result<Conversation, ReasonerError> {
    if estimate_tokens(conv) <= budget {
        return Ok(conv.clone());
    }
    let pinned_tokens: usize = conv.pinned().iter().map(|&i| message_tokens(&conv.messages()[i])).sum();
    if pinned_tokens > budget {
        return Err(ReasonerError::CannotCompress { pinned: pinned_tokens, budget });
    }

    let groups = exchange_groups(conv);
    for keep in (0..=RECENT_EXCHANGES_KEPT.min(groups.len())).rev() {
        let (folded, kept) = groups.split_at(groups.len() - keep);
        let folded_idx: Vec<usize> = folded.iter().flatten().copied().collect();
        let kept_idx: BTreeSet<usize> = kept.iter().flatten().copied().collect();

        let mut lines = digest_lines(conv, folded);
        if let Some(adapter) = adapter {
            if let Some(refined) = refine(adapter, &lines, budget) {
                lines = refined;
            }
        }

        loop {
            let digest = (!folded_idx.is_empty()).then(|| render_digest(&lines));
            let candidate = assemble(conv, &kept_idx, folded_idx.first().copied(), digest);
            if estimate_tokens(&candidate) <= budget {
                return Ok(candidate);
            }
            if lines.is_empty() {
                break;
            }
            lines.remove(0);
        }
        // digest dropped entirely
        let candidate = assemble(conv, &kept_idx, None, None);
        if estimate_tokens(&candidate) <= budget {
            return Ok(candidate);
        }
    }
    Err(ReasonerError::CannotCompress { pinned: pinned_tokens, budget })
}

/// Groups unpinned message indices into exchanges; each user message opens one.
fn exchange_groups(conv: &Conversation) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut open = false;
    for (i, m) in conv.messages().iter().enumerate() {
        if conv.is_pinned(i) {
            continue;
        }
        match m.role {
            Role::User => {
                groups.push(vec![i]);
                open = true;
            }
            _ if open => groups.last_mut().unwrap_or_else(|| unreachable!()).push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn first_line(s: &str) -> String {
    let line = s.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if line.chars().count() > DIGEST_LINE_CHARS {
        let cut: String = line.chars().take(DIGEST_LINE_CHARS).collect();
        format!("{cut}...")
    } else {
        line.to_string()
    }
}

fn digest_lines(conv: &Conversation, folded: &[Vec<usize>]) -> Vec<String> {
    folded
        .iter()
        .map(|group| {
            let parts: Vec<String> = group
                .iter()
                .map(|&i| {
                    let m = &conv.messages()[i];
                    first_line(&m.content)
                })
                .collect();
            format!("- {}", parts.join(" => "))
        })
        .collect()
}

fn render_digest(lines: &[String]) -> String {
    let mut out = String::from(DIGEST_HEADER);
    for l in lines {
        out.push('\n');
        out.push_str(l);
    }
    out
}

fn refine(adapter: &dyn Reasoner, lines: &[String], budget: usize) -> Option<Vec<String>> {
    let mut ask = Conversation::with_channel("compress");
    ask.push(Message::system(
        "Condense the following step history into a short ordered list of actions and their outcomes. \
         One line per item, each starting with '- '.",
    ));
    ask.push(Message::user(lines.join("\n")));
    let reply = complete(&ask, budget, adapter).ok()?;
    let refined: Vec<String> =
        reply.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    (!refined.is_empty()).then_some(refined)
}

fn assemble(
    conv: &Conversation,
    kept: &BTreeSet<usize>,
    digest_at: Option<usize>,
    digest: Option<String>,
) -> Conversation {
    let mut messages = Vec::new();
    let mut pinned = BTreeSet::new();
    for (i, m) in conv.messages().iter().enumerate() {
        if Some(i) == digest_at {
            if let Some(d) = &digest {
                messages.push(Message::user(d.clone()));
            }
        }
        if conv.is_pinned(i) {
            pinned.insert(messages.len());
            messages.push(m.clone());
        } else if kept.contains(&i) {
            messages.push(m.clone());
        }
    }
    Conversation::from_parts(messages, pinned, conv.channel().to_string())
}
