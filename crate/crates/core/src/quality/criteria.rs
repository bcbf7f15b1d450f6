//! The nine item-quality criteria, stored verbatim because the same text is
//! sent to generators, revisers and evaluators.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CriterionId(u8);

impl CriterionId {
    pub const ALL: [CriterionId; 9] = [
        CriterionId(1),
        CriterionId(2),
        CriterionId(3),
        CriterionId(4),
        CriterionId(5),
        CriterionId(6),
        CriterionId(7),
        CriterionId(8),
        CriterionId(9),
    ];

    pub fn new(n: u8) -> Option<Self> {
        (1..=9).contains(&n).then_some(CriterionId(n))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn text(self) -> &'static str {
        CRITERIA[self.0 as usize - 1]
    }

    /// Criterion 2 is fully machine decidable; criterion 9 is split into a
    /// deterministic lexical half and an evaluator-judged semantic half.
    pub fn machine_decidable(self) -> bool {
        self.0 == 2
    }
}

impl TryFrom<u8> for CriterionId {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        CriterionId::new(n).ok_or_else(|| format!("criterion id {n} is outside 1-9"))
    }
}

impl From<CriterionId> for u8 {
    fn from(c: CriterionId) -> u8 {
        c.0
    }
}

impl std::fmt::Display for CriterionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "C{}", self.0)
    }
}

pub const CRITERIA: [&str; 9] = [
    "All information presented in the MCQ — including the stem, correct answer, and distractors — must be fully scientifically accurate (every phrase separately and entire text) and can be supported by references, such as scientific articles, books, or textbooks, It is unambiguous, and free from misleading simplifications, assumptions, or comparative claims that could distort understanding.
This includes:
- Avoiding oversimplified generalizations (e.g., implying that only one group possesses a function that is actually shared).
- Ensuring that comparative or superlative terms (e.g., “better,” “more,” “only”) are used only when clearly supported by evidence and contextually valid.
- Verifying that the correct answer is not just more correct than the others, but entirely correct on its own merits and in alignment with scientific consensus.",
    "The MCQ must have:
- a long stem containing at least 3 sentences,
- 5 short answer options each containing no more than 7 words.",
    "The stem of the MCQ presents a realistic, context-rich scenario that exemplifies a specific, plausible instance of a broader scientific principle or pattern (for example, subject-matter pattern: ‘bacteriophages can selectively kill bacteria’, real-world scenario: a case of phage therapy of a certain bacterial infection, with necessary realistic details). Scenario must describe a plausible situation that could realistically occur in the relevant scientific or professional context. All actions, settings, and roles must be scientifically appropriate and consistent with how such work is typically conducted in real life or clearly framed as a model or simulation if not.",
    "The entire text of the MCQ must provide a complete and self-contained set of information that allows students of a defined speciality and level of education to make a conscious decision about the correct answer. All concepts, terms, and procedures referenced in the stem must be clearly stated and should align with the expected knowledge base of the target learners (for example, the MCQ for an introductory biology course can be based on a medical-related scenario, but it shouldn't refer to specific medical knowledge). The question should not rely on inference, unstated assumptions, or ambiguous phrasing that could confuse students or require knowledge beyond the course scope.",
    "There must be a clear and necessary logical connection between the stem and the question. The stem must provide specific information—such as data, context, or observations—that is essential for selecting the correct answer. It should be impossible to answer the question correctly using prior knowledge alone, without analyzing the details provided in the stem. The stem shouldn't merely introduce a topic, it must contribute necessary information to the reasoning process.",
    "MCQ requires high-order thinking to select the correct answer, not just recall some fact. (Not like in this example: 'In the context of antibiotic resistance, if a hospital-acquired infection presents with a mutation arising through non-replicative transposition of a transposon, what key feature distinguishes this mechanism from replicative transposition?'
- A) The transposon remains in the original location after the process (correct answer)
- B) The process involves the replication of DNA at the insertion site.
- C) There is an integration of mobile genetic elements without any DNA breakage.
- D) It creates a copy of the transposon at a new site without altering the original.
- E) The transposase enzyme is not involved in the mechanism.')",
    "Only one answer option must be clearly and definitively correct based on the information provided in the stem. The stem must include sufficient detail to rule out all other options as incorrect, incomplete, or less appropriate. If more than one option could reasonably apply without additional clarification, the criterion is not met.",
    "All distractors must be conceptually related to the same domain or framework as the correct answer and be plausible responses based on the scenario. They should require a comparable level of reasoning and appear equally relevant or attractive to a student who does not yet know the correct answer. There should be no distractors that are clearly irrelevant, implausible, or based on concepts not supported or implied by the information in the stem.",
    "The stem and the correct answer should not share exact or closely related key terms—especially those central to the question's logic—unless those terms are also represented in one or more distractors. A term is considered \"closely related\" if:
- Exact word matches, including abbreviations, acronyms, and sharing the same root or meaning (e.g., \"adhesins\" vs \"adhesion factors\"),
- Synonyms or paraphrases that provide semantic and conceptual overlap, even if wording differ (e.g., \"biofilm formation\" vs \"quorum sensing-dependent attachment\"),
- It would be recognized by a test-wise student as semantically linked based on the context provided in the stem.
Shared general terms (e.g., \"cell,\" \"bacteria\") are acceptable, but repetition of unique terminology or context-specific words (e.g., \"nutrient,\" \"porin,\" \"mutation,\" \"resistance\") should be avoided if it makes the correct answer more salient than the others.",
];

/// Numbered block of the given criteria, as embedded in prompts.
pub fn criteria_block(ids: &[CriterionId]) -> String {
    ids.iter()
        .map(|c| format!("{}. {}", c.get(), c.text()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn full_criteria_block() -> String {
    criteria_block(&CriterionId::ALL)
}
