//! Recovering label choices from free-text replies.
//!
//! Replies and label surfaces are compared as lowercase alphanumeric word
//! sequences, so `Top-Up Failed`, `top_up_failed` and `"top up failed."` all
//! match the same label. Where two labels overlap (`top_up` inside
//! `pending_top_up`), the longest match starting at a given word wins.

use crate::catalog::LabelId;

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Matcher<'a> {
    candidates: &'a [LabelId],
    patterns: Vec<Vec<String>>,
}

impl<'a> Matcher<'a> {
    fn new(candidates: &'a [LabelId]) -> Self {
        Matcher {
            candidates,
            patterns: candidates.iter().map(|c| words(c.as_str())).collect(),
        }
    }

    /// `(word offset, candidate index)` of every non-overlapping mention,
    /// scanning left to right.
    fn mentions(&self, text: &str) -> Vec<(usize, usize)> {
        let ws = words(text);
        let mut found = Vec::new();
        let mut i = 0;
        while i < ws.len() {
            let mut best: Option<(usize, usize)> = None;
            for (c, pat) in self.patterns.iter().enumerate() {
                let n = pat.len();
                if n == 0 || i + n > ws.len() || best.is_some_and(|(_, len)| len >= n) {
                    continue;
                }
                if ws[i..i + n] == pat[..] {
                    best = Some((c, n));
                }
            }
            match best {
                Some((c, n)) => {
                    found.push((i, c));
                    i += n;
                }
                None => i += 1,
            }
        }
        found
    }
}

/// Labels named in `reply`, in first-mention order, without duplicates and
/// truncated to `k`. Returns an empty list when nothing matches.
pub fn parse_topk_reply(reply: &str, candidates: &[LabelId], k: usize) -> Vec<LabelId> {
    let m = Matcher::new(candidates);
    let mut out: Vec<LabelId> = Vec::new();
    for (_, c) in m.mentions(reply) {
        let label = &m.candidates[c];
        if !out.contains(label) {
            out.push(label.clone());
            if out.len() == k {
                break;
            }
        }
    }
    out
}

/// The single label chosen in `reply`.
///
/// The first label after the last `LABEL:` marker wins; without a usable
/// marker the last label mentioned anywhere wins. `None` when no candidate is
/// mentioned.
pub fn parse_label_choice(reply: &str, candidates: &[LabelId]) -> Option<LabelId> {
    let m = Matcher::new(candidates);
    let lower = reply.to_lowercase();
    if let Some(at) = lower.rfind("label:") {
        // Lowercasing can shift byte offsets for some scripts; fall back to
        // the whole reply when the offset is not a boundary of the original.
        if let Some(tail) = reply.get(at + "label:".len()..) {
            if let Some(&(_, c)) = m.mentions(tail).first() {
                return Some(candidates[c].clone());
            }
        }
    }
    m.mentions(reply).last().map(|&(_, c)| candidates[c].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<LabelId> {
        v.iter().map(LabelId::new).collect()
    }

    #[test]
    fn choice_list_in_reply_order() {
        let c = ids(&["pending_top_up", "top_up_failed", "card_arrival"]);
        assert_eq!(
            parse_topk_reply("CHOICE: top_up_failed, pending_top_up", &c, 5),
            ids(&["top_up_failed", "pending_top_up"])
        );
    }

    #[test]
    fn longest_match_wins() {
        let c = ids(&["top_up", "pending_top_up"]);
        assert_eq!(
            parse_topk_reply("probably pending_top_up", &c, 5),
            ids(&["pending_top_up"])
        );
        assert_eq!(parse_topk_reply("a top-up issue", &c, 5), ids(&["top_up"]));
    }

    #[test]
    fn no_match_is_empty() {
        assert!(parse_topk_reply("I cannot decide.", &ids(&["a_b", "c_d"]), 5).is_empty());
    }

    #[test]
    fn duplicates_and_truncation() {
        let c = ids(&["a", "b", "c"]);
        assert_eq!(parse_topk_reply("b, b, a, c", &c, 2), ids(&["b", "a"]));
    }

    #[test]
    fn case_and_punctuation_tolerant() {
        let c = ids(&["Sci/Tech", "World"]);
        assert_eq!(parse_topk_reply("CHOICE: sci tech; WORLD.", &c, 2), ids(&["Sci/Tech", "World"]));
    }

    #[test]
    fn label_marker_wins() {
        let c = ids(&["pending_top_up", "top_up_failed"]);
        let reply = "Both top_up_failed and pending_top_up fit.\nLABEL: pending_top_up";
        assert_eq!(parse_label_choice(reply, &c), Some("pending_top_up".into()));
    }

    #[test]
    fn last_mention_without_marker() {
        let c = ids(&["pending_top_up", "top_up_failed"]);
        let reply = "It is not top_up_failed; it would be pending_top_up.";
        assert_eq!(parse_label_choice(reply, &c), Some("pending_top_up".into()));
    }

    #[test]
    fn marker_without_candidate_falls_back() {
        let c = ids(&["x_ray", "yak"]);
        assert_eq!(parse_label_choice("yak, I think. LABEL: unsure", &c), Some("yak".into()));
        assert_eq!(parse_label_choice("I refuse.", &c), None);
    }

    #[test]
    fn uses_last_marker() {
        let c = ids(&["a", "b"]);
        assert_eq!(parse_label_choice("LABEL: a\n...on reflection LABEL: b", &c), Some("b".into()));
    }
}
