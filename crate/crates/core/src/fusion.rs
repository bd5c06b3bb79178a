//! Ensemble label fusion: combine grounding proposals from several expert
//! models into one candidate label heatmap.

use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, ImageBuffer};

/// Prompt used to expand a short grounding phrase into richer instructions.
/// The first `%s` is the image description.
pub const INSTRUCTION_GENERATION_PROMPT: &str = "[Image Description]\n%s\n\n[System]\nYou are an AI visual assistant, and you are seeing a single image. What you see are part of the image and are provided with a simple phrase.  Please generate any instructions that can be executed based on the content of the picture described, including simple queries about the content of the picture, such as the object types, counting the objects, object actions, relative positions between objects, etc. Also consider more complex questions that require reasoning. For example, you can ask what time it is now for a clock and what can I use to clean the room for a broom. Ensure that the questions you ask can be clearly answered only based on what you see. Please generate as many five questions as possible and return them in a single line separated by ';' and avoid any other output.";

/// Prompt used to reduce an instruction to the objects it depends on.
/// Placeholders: image caption, then instruction.
pub const INSTRUCTION_SIMPLIFICATION_PROMPT: &str = "[Image Caption] %s\n\n[Instruction] %s\n\n[System] \nYou are an helpful AI assistant. I need to reply to the previous instruction based on an image, and I have a simple caption for the image. Please note that there may be objects in the image that I did not detect. Since you cannot view the image, please list any potential objects that might influence my responses, separated by semicolons, in a single line without any additional output. If you believe that the number of objects could be too extensive and might hinder my judgment, print 'None'.";

/// Substitute `%s` placeholders in order.
pub fn render_prompt(template: &str, args: &[&str]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut parts = template.split("%s");
    if let Some(first) = parts.next() {
        out.push_str(first);
    }
    for (i, part) in parts.enumerate() {
        out.push_str(args.get(i).copied().unwrap_or(""));
        out.push_str(part);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertProposal {
    pub expert_id: String,
    pub heatmap: Heatmap,
    pub confidence: Option<f64>,
}

impl ExpertProposal {
    pub fn new(expert_id: impl Into<String>, heatmap: Heatmap) -> Self {
        Self {
            expert_id: expert_id.into(),
            heatmap,
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidValue(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        self.confidence = Some(confidence);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FusionMethod {
    #[default]
    Mean,
    /// Confidence-weighted mean; a missing confidence counts as 1.
    WeightedMean,
    /// 1.0 where strictly more than half of the proposals exceed `tau`.
    MajorityVote(f64),
    Max,
}

fn common_dims(proposals: &[ExpertProposal]) -> Result<(usize, usize)> {
    let first = proposals.first().ok_or(Error::EmptyProposalSet)?;
    let dims = first.heatmap.dims();
    for p in &proposals[1..] {
        if p.heatmap.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: p.heatmap.dims(),
            });
        }
    }
    Ok(dims)
}

/// Fuse proposals pixelwise. Per-pixel values are sorted before reduction so
/// the result does not depend on proposal order, bit for bit.
pub fn fuse(proposals: &[ExpertProposal], method: FusionMethod) -> Result<Heatmap> {
    let (w, h) = common_dims(proposals)?;
    let n = proposals.len();
    if let FusionMethod::MajorityVote(tau) = method {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::InvalidValue(format!("vote tau {tau} not in [0, 1)")));
        }
    }
    for p in proposals {
        if let Some(c) = p.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidValue(format!(
                    "confidence {c} of `{}` outside [0, 1]",
                    p.expert_id
                )));
            }
        }
    }
    let mut column: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(w * h);
    for i in 0..w * h {
        column.clear();
        column.extend(
            proposals
                .iter()
                .map(|p| (p.heatmap.values()[i], p.confidence.unwrap_or(1.0))),
        );
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let v = match method {
            FusionMethod::Mean => column.iter().map(|c| c.0).sum::<f64>() / n as f64,
            FusionMethod::WeightedMean => {
                let wsum: f64 = column.iter().map(|c| c.1).sum();
                if wsum > 0.0 {
                    column.iter().map(|c| c.0 * c.1).sum::<f64>() / wsum
                } else {
                    0.0
                }
            }
            FusionMethod::MajorityVote(tau) => {
                let votes = column.iter().filter(|c| c.0 > tau).count();
                if 2 * votes > n {
                    1.0
                } else {
                    0.0
                }
            }
            FusionMethod::Max => column.last().map_or(0.0, |c| c.0),
        };
        out.push(v);
    }
    Heatmap::from_clamped(w, h, out)
}

/// Mean pairwise IoU of the `tau = 0` thresholded proposals.
pub fn agreement(proposals: &[ExpertProposal]) -> Result<f64> {
    if proposals.len() < 2 {
        return Err(Error::TooFewProposals(proposals.len()));
    }
    common_dims(proposals)?;
    let masks: Vec<_> = proposals.iter().map(|p| p.heatmap.threshold(0.0)).collect();
    let mut ious = Vec::with_capacity(masks.len() * (masks.len() - 1) / 2);
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            ious.push(masks[i].iou(&masks[j])?);
        }
    }
    ious.sort_by(f64::total_cmp);
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// A grounding model: (image, phrase) -> relevance heatmap.
pub trait Expert {
    fn id(&self) -> &str;
    fn ground(&self, image: &ImageBuffer, phrase: &str) -> std::result::Result<Heatmap, String>;
}

/// Adapter turning a closure into an [`Expert`].
pub struct FnExpert<F> {
    id: String,
    f: F,
}

impl<F> FnExpert<F>
where
    F: Fn(&ImageBuffer, &str) -> std::result::Result<Heatmap, String>,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> Expert for FnExpert<F>
where
    F: Fn(&ImageBuffer, &str) -> std::result::Result<Heatmap, String>,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn ground(&self, image: &ImageBuffer, phrase: &str) -> std::result::Result<Heatmap, String> {
        (self.f)(image, phrase)
    }
}

/// Maps an instruction (and optional caption) to target phrases.
pub trait InstructionSimplifier {
    fn simplify(&self, instruction: &str, caption: Option<&str>) -> Vec<String>;
}

/// Deterministic stand-in for an LLM simplifier: splits on conjunctions and
/// punctuation, then strips stop words, verbs of request and articles.
#[derive(Debug, Clone, Default)]
pub struct RuleSimplifier;

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "pick", "grab", "take", "find", "show", "me", "point", "to", "at", "please",
    "locate", "where", "is", "are", "what", "which", "of", "up", "this", "that", "there", "it",
    "can", "you", "i", "my", "in", "on", "image", "picture", "color", "select", "get",
];

impl InstructionSimplifier for RuleSimplifier {
    fn simplify(&self, instruction: &str, _caption: Option<&str>) -> Vec<String> {
        let lowered = instruction.to_lowercase();
        let mut phrases = Vec::new();
        for chunk in lowered.split(|c: char| matches!(c, ',' | ';' | '.' | '?' | '!')) {
            for part in chunk.split(" and ") {
                let words: Vec<&str> = part
                    .split_whitespace()
                    .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                    .filter(|w| !w.is_empty() && !STOP_WORDS.contains(w))
                    .collect();
                if !words.is_empty() {
                    let phrase = words.join(" ");
                    if !phrases.contains(&phrase) {
                        phrases.push(phrase);
                    }
                }
            }
        }
        if phrases.is_empty() {
            let trimmed = instruction.trim();
            if !trimmed.is_empty() {
                phrases.push(trimmed.to_lowercase());
            }
        }
        phrases
    }
}

/// Machine-generated label assembled from expert proposals.
#[derive(Debug)]
pub struct CandidateLabel {
    pub instruction: String,
    pub phrases: Vec<String>,
    pub heatmap: Heatmap,
    /// Always `machine:ensemble`.
    pub source: String,
    /// Experts that contributed, in id order.
    pub expert_ids: Vec<String>,
    /// Experts that failed; each is an [`Error::ExpertError`].
    pub failures: Vec<Error>,
}

pub const ENSEMBLE_SOURCE: &str = "machine:ensemble";

/// Run every expert on every simplified phrase, max-combine per expert across
/// phrases, then fuse across experts in expert-id order.
pub fn build_candidate_label(
    image: &ImageBuffer,
    instruction: &str,
    experts: &[&dyn Expert],
    simplifier: &dyn InstructionSimplifier,
    method: FusionMethod,
) -> Result<CandidateLabel> {
    if experts.is_empty() {
        return Err(Error::EmptyProposalSet);
    }
    let phrases = simplifier.simplify(instruction, None);
    let mut ordered: Vec<&dyn Expert> = experts.to_vec();
    ordered.sort_by(|a, b| a.id().cmp(b.id()));

    let mut proposals = Vec::new();
    let mut failures = Vec::new();
    'experts: for expert in ordered {
        let mut per_phrase = Vec::with_capacity(phrases.len());
        for phrase in &phrases {
            match expert.ground(image, phrase) {
                Ok(h) if h.dims() == image.dims() => {
                    per_phrase.push(ExpertProposal::new(expert.id(), h))
                }
                Ok(h) => {
                    failures.push(Error::ExpertError {
                        expert_id: expert.id().to_string(),
                        message: format!(
                            "heatmap {:?} does not match image {:?}",
                            h.dims(),
                            image.dims()
                        ),
                    });
                    continue 'experts;
                }
                Err(message) => {
                    failures.push(Error::ExpertError {
                        expert_id: expert.id().to_string(),
                        message,
                    });
                    continue 'experts;
                }
            }
        }
        if per_phrase.is_empty() {
            continue;
        }
        let combined = fuse(&per_phrase, FusionMethod::Max)?;
        proposals.push(ExpertProposal::new(expert.id(), combined));
    }
    if proposals.is_empty() {
        return Err(Error::AnnotationFailed);
    }
    let heatmap = fuse(&proposals, method)?;
    Ok(CandidateLabel {
        instruction: instruction.to_string(),
        phrases,
        heatmap,
        source: ENSEMBLE_SOURCE.to_string(),
        expert_ids: proposals.into_iter().map(|p| p.expert_id).collect(),
        failures,
    })
}
