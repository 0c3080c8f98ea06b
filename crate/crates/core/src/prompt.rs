//! Prompt templates and rendering.
//!
//! Each template is frozen as plain text; the golden files under
//! `tests/fixtures/golden/` are the byte-exact reference. Options render as a
//! `", "`-separated list in query order. Few-shot demonstrations render as
//! `SENTENCE:`/`LABEL:` blocks (with `EXPLANATION:` for chain-of-thought
//! variants) separated by blank lines.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::LabelId;
use crate::demos::{DemonstrationStore, Exemplar};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::query::{ModelQuery, QueryKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ReduceStandard,
    Zs,
    ZsCot,
    Fs,
    FsCot,
    FsCotExplainGen,
    PairZs,
    PairZsCot,
    PairFs,
    PairFsCot,
    PccInstruction,
    PccSimilarity,
    PccDifference,
    PccDecide,
}

impl TemplateId {
    pub const ALL: [TemplateId; 14] = [
        TemplateId::ReduceStandard,
        TemplateId::Zs,
        TemplateId::ZsCot,
        TemplateId::Fs,
        TemplateId::FsCot,
        TemplateId::FsCotExplainGen,
        TemplateId::PairZs,
        TemplateId::PairZsCot,
        TemplateId::PairFs,
        TemplateId::PairFsCot,
        TemplateId::PccInstruction,
        TemplateId::PccSimilarity,
        TemplateId::PccDifference,
        TemplateId::PccDecide,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::ReduceStandard => "reduce_standard",
            TemplateId::Zs => "zs",
            TemplateId::ZsCot => "zs_cot",
            TemplateId::Fs => "fs",
            TemplateId::FsCot => "fs_cot",
            TemplateId::FsCotExplainGen => "fs_cot_explain_gen",
            TemplateId::PairZs => "pair_zs",
            TemplateId::PairZsCot => "pair_zs_cot",
            TemplateId::PairFs => "pair_fs",
            TemplateId::PairFsCot => "pair_fs_cot",
            TemplateId::PccInstruction => "pcc_instruction",
            TemplateId::PccSimilarity => "pcc_similarity",
            TemplateId::PccDifference => "pcc_difference",
            TemplateId::PccDecide => "pcc_decide",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const REDUCE_STANDARD: &str = "Consider the sentence: \"{text}\"\n\
Please select {top_k} most possible topic from following OPTIONS: {options} .\n\
CHOICE:";

const ZS: &str = "Given the sentence: \"{text}\"\n\
Please select the most possible topic from the following OPTIONS: {options}\n\
CHOICE: ";

const ZS_COT: &str = "Given the sentence: \"{text}\"\n\
Please select the most possible topic from the following OPTIONS: {options}\n\
Let's think step by step and give your explanation to verify your answer: ";

const FS_HEADER: &str =
    "Below is a text classification problem, Note that you can only select the label in {options}";

const FS_COT_HEADER: &str = "Below is a text classification problem, Note that you can only select the label in {options}. \
Let's think step by step and give your explanation to verify the answer.";

const EXPLAIN_GEN_HEADER: &str = "Below is a text classification problem. \
Let's think step by step and give your explanation to verify the SENTENCE label:\n\
SENTENCE: Fears for T N pension after talks Unions representing workers at Turner Newall say they are 'disappointed' after talks with stricken parent firm Federal Mogul.\n\
LABEL: Business \n\
EXPLANATION: The statement discusses talks between unions and a parent firm, which relates to business-related negotiations and concerns regarding pensions. ";

const PAIR_ZS: &str =
    "Which term is more likely to represent the topic of \"{text}\" - \"{label1}\" or \"{label2}\"? ";

// The double space after "of" is part of the published template.
const PAIR_ZS_COT: &str = "Which term is more likely to represent the topic of  \"{text}\" - \"{label1}\" or \"{label2}\"? \n\
Let's think step by step and give your explanation to verify your answer: ";

const PAIR_FS_HEADER: &str =
    "Below is a text classification problem, please complete the sentence by \"{label1}\" or \"{label2}\":";

const PAIR_FS_COT_HEADER: &str = "Below is a text classification problem. \
Let's think step by step and give your explanation to verify which term is more likely to represent the label of the sentence - \"{label1}\" or \"{label2}\":";

const PCC_INSTRUCTION_HEADER: &str = "Below is a text classification problem:";

const PCC_SIMILARITY: &str = "The phrases can often be mistaken for \"{label1}\" and \"{label2}\", \
due to certain shared characteristics.\n\
SHARED ASPECTS: ";

const PCC_DIFFERENCE: &str = "Next, diligently contrast the deviations between these two topics, \
putting aside the mentioned shared characteristics. \
Concisely explain, what is the key element that sets them apart? \n\
CONTRASTING POINTS: ";

const PCC_DECIDE: &str = "After scrutinizing the presented SHARED ASPECTS and CONTRASTING POINTS, \
which term - \"{label1}\" or \"{label2}\" - would be a more accurate representation for the label of {text}? \
Provide the final label in the format \"LABEL: a\". ";

const DEMO_BLOCK: &str = "SENTENCE: {text}\nLABEL: {label1}";
const DEMO_BLOCK_COT: &str = "SENTENCE: {text}\nEXPLANATION: {explain}\nLABEL: {label1}";
const QUERY_BLOCK: &str = "SENTENCE: {text}\nLABEL:";
const QUERY_BLOCK_COT: &str = "SENTENCE: {text}\nEXPLANATION:";
const QUERY_BLOCK_EXPLAIN: &str = "SENTENCE: {text}\nLABEL: {label1}\nEXPLANATION:";

/// Values available to a template. Unused fields are ignored; a placeholder
/// whose value is absent fails the render.
#[derive(Debug, Clone, Default)]
pub struct TemplateInput<'a> {
    pub text: Option<&'a str>,
    pub options: Option<&'a [LabelId]>,
    pub top_k: Option<usize>,
    pub label1: Option<&'a str>,
    pub label2: Option<&'a str>,
    pub explain: Option<&'a str>,
    pub demonstrations: &'a [Exemplar],
}

impl<'a> TemplateInput<'a> {
    fn lookup(&self, name: &str) -> Result<Option<String>> {
        let missing = |n: &'static str| Error::MissingPlaceholder(n);
        Ok(Some(match name {
            "text" => self.text.ok_or(missing("text"))?.to_string(),
            "options" => join_options(self.options.ok_or(missing("options"))?),
            "top_k" => self.top_k.ok_or(missing("top_k"))?.to_string(),
            "label1" => self.label1.ok_or(missing("label1"))?.to_string(),
            "label2" => self.label2.ok_or(missing("label2"))?.to_string(),
            "explain" => self.explain.ok_or(missing("explain"))?.to_string(),
            _ => return Ok(None),
        }))
    }
}

pub fn join_options(options: &[LabelId]) -> String {
    options
        .iter()
        .map(LabelId::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Single-pass `{name}` substitution; substituted values are never rescanned,
/// so braces inside user text survive untouched.
fn fill(template: &str, input: &TemplateInput<'_>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match input.lookup(name)? {
                    Some(v) => out.push_str(&v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn demo_block(e: &Exemplar, cot: bool) -> Result<String> {
    let input = TemplateInput {
        text: Some(&e.text),
        label1: Some(e.label.as_str()),
        explain: e.explanation.as_deref(),
        ..Default::default()
    };
    fill(if cot { DEMO_BLOCK_COT } else { DEMO_BLOCK }, &input)
}

fn few_shot(header: String, demos: &[Exemplar], cot: bool, query_block: String) -> Result<String> {
    let mut blocks = demos
        .iter()
        .map(|d| demo_block(d, cot))
        .collect::<Result<Vec<_>>>()?;
    blocks.push(query_block);
    Ok(format!("{header}\n{}", blocks.join("\n\n")))
}

/// Renders one template in isolation.
pub fn render_template(id: TemplateId, input: &TemplateInput<'_>) -> Result<String> {
    let demos = input.demonstrations;
    match id {
        TemplateId::ReduceStandard => fill(REDUCE_STANDARD, input),
        TemplateId::Zs => fill(ZS, input),
        TemplateId::ZsCot => fill(ZS_COT, input),
        TemplateId::Fs => few_shot(fill(FS_HEADER, input)?, demos, false, fill(QUERY_BLOCK, input)?),
        TemplateId::FsCot => few_shot(
            fill(FS_COT_HEADER, input)?,
            demos,
            true,
            fill(QUERY_BLOCK_COT, input)?,
        ),
        TemplateId::FsCotExplainGen => Ok(format!(
            "{EXPLAIN_GEN_HEADER}\n\n{}",
            fill(QUERY_BLOCK_EXPLAIN, input)?
        )),
        TemplateId::PairZs => fill(PAIR_ZS, input),
        TemplateId::PairZsCot => fill(PAIR_ZS_COT, input),
        TemplateId::PairFs => few_shot(
            fill(PAIR_FS_HEADER, input)?,
            demos,
            false,
            fill(QUERY_BLOCK, input)?,
        ),
        TemplateId::PairFsCot => few_shot(
            fill(PAIR_FS_COT_HEADER, input)?,
            demos,
            true,
            fill(QUERY_BLOCK_COT, input)?,
        ),
        TemplateId::PccInstruction => {
            let mut lines = vec![PCC_INSTRUCTION_HEADER.to_string()];
            for d in demos {
                lines.push(demo_block(d, false)?);
            }
            Ok(lines.join("\n"))
        }
        TemplateId::PccSimilarity => fill(PCC_SIMILARITY, input),
        TemplateId::PccDifference => fill(PCC_DIFFERENCE, input),
        TemplateId::PccDecide => fill(PCC_DECIDE, input),
    }
}

/// The template that produces the final user turn of `query`.
pub fn template_for(query: &ModelQuery) -> TemplateId {
    let few = query.demonstrations.is_some();
    match (query.kind, few, query.cot) {
        (QueryKind::ReduceTopk, _, _) => TemplateId::ReduceStandard,
        (QueryKind::FullChoice, false, false) => TemplateId::Zs,
        (QueryKind::FullChoice, false, true) => TemplateId::ZsCot,
        (QueryKind::FullChoice, true, false) => TemplateId::Fs,
        (QueryKind::FullChoice, true, true) => TemplateId::FsCot,
        (QueryKind::PairwiseChoice, false, false) => TemplateId::PairZs,
        (QueryKind::PairwiseChoice, false, true) => TemplateId::PairZsCot,
        (QueryKind::PairwiseChoice, true, false) => TemplateId::PairFs,
        (QueryKind::PairwiseChoice, true, true) => TemplateId::PairFsCot,
        (QueryKind::SimilarityAnalysis, _, _) => TemplateId::PccSimilarity,
        (QueryKind::DifferenceAnalysis, _, _) => TemplateId::PccDifference,
        (QueryKind::PairwiseDecide, _, _) => TemplateId::PccDecide,
        (QueryKind::ExplanationGen, _, _) => TemplateId::FsCotExplainGen,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    fn user(content: String) -> Self {
        ChatMessage {
            role: Role::User,
            content,
        }
    }

    fn assistant(content: String) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content,
        }
    }
}

/// Rendered chat transcript. Single-turn templates yield one user message;
/// the contrastive comparison builds up a user/assistant alternation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<ChatMessage>,
}

impl Conversation {
    /// Plain-text view: messages separated by a blank line.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Rough token estimate (four characters per token).
    pub fn approx_tokens(&self) -> usize {
        self.messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum::<usize>()
            .div_ceil(4)
    }
}

/// Renders `query` into the conversation sent to a chat backend.
pub fn render(query: &ModelQuery) -> Result<Conversation> {
    query.validate()?;
    let demos = query.demonstrations.as_deref().unwrap_or(&[]);
    let (label1, label2) = match query.options.as_slice() {
        [a, b] => (Some(a.as_str()), Some(b.as_str())),
        [a] => (Some(a.as_str()), None),
        _ => (None, None),
    };
    let input = TemplateInput {
        text: Some(&query.text),
        options: Some(&query.options),
        top_k: query.top_k,
        label1,
        label2,
        explain: None,
        demonstrations: demos,
    };
    let id = template_for(query);
    let messages = match query.kind {
        QueryKind::SimilarityAnalysis | QueryKind::DifferenceAnalysis | QueryKind::PairwiseDecide => {
            let opening = format!(
                "{}\n{}",
                render_template(TemplateId::PccInstruction, &input)?,
                render_template(TemplateId::PccSimilarity, &input)?
            );
            let mut messages = vec![ChatMessage::user(opening)];
            if query.kind != QueryKind::SimilarityAnalysis {
                messages.push(ChatMessage::assistant(query.thoughts[0].clone()));
                messages.push(ChatMessage::user(render_template(
                    TemplateId::PccDifference,
                    &input,
                )?));
            }
            if query.kind == QueryKind::PairwiseDecide {
                messages.push(ChatMessage::assistant(query.thoughts[1].clone()));
                messages.push(ChatMessage::user(render_template(TemplateId::PccDecide, &input)?));
            }
            messages
        }
        _ => vec![ChatMessage::user(render_template(id, &input)?)],
    };
    Ok(Conversation { messages })
}

/// Drops whole demonstrations, most recently added first, until the rendered
/// prompt plus the reply budget fits in `context_tokens`.
pub fn fit_demonstrations(mut query: ModelQuery, context_tokens: usize) -> Result<ModelQuery> {
    let reply = query.decoding.max_tokens as usize;
    // Coarse pass with per-exemplar overestimates, so it never drops more
    // than needed; the exact loop below settles the rest.
    let mut excess = (render(&query)?.approx_tokens() + reply).saturating_sub(context_tokens) as isize;
    if let Some(demos) = query.demonstrations.as_mut() {
        while excess > 0 && demos.len() > 1 {
            let last = demos.pop().expect("non-empty");
            let chars = last.text.chars().count()
                + last.label.as_str().chars().count()
                + last.explanation.as_deref().map_or(0, |e| e.chars().count());
            excess -= ((chars + 40) / 4 + 1) as isize;
        }
    }
    loop {
        let used = render(&query)?.approx_tokens() + reply;
        let demos = match query.demonstrations.as_mut() {
            Some(d) if used > context_tokens && !d.is_empty() => d,
            _ => return Ok(query),
        };
        demos.pop();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub annotated: usize,
    pub already_present: usize,
    /// `(label, text, error)` for exemplars left unannotated.
    pub failed: Vec<(LabelId, String, String)>,
}

/// Annotates every exemplar lacking an explanation with one generated by the
/// model from the explanation-generation template. Already annotated
/// exemplars cost no calls.
pub fn generate_explanations(
    store: &mut DemonstrationStore,
    gateway: &Gateway,
) -> ExplanationReport {
    let mut report = ExplanationReport::default();
    for ex in store.iter_mut() {
        if ex.explanation.is_some() {
            report.already_present += 1;
            continue;
        }
        let q = ModelQuery::explanation(&ex.text, ex.label.clone());
        match gateway.complete(&q) {
            Ok(reply) => {
                ex.explanation = Some(reply.text.trim().to_string());
                report.annotated += 1;
            }
            Err(e) => {
                tracing::warn!(label = %ex.label, "explanation generation failed: {e}");
                report
                    .failed
                    .push((ex.label.clone(), ex.text.clone(), e.to_string()));
            }
        }
    }
    report
}
