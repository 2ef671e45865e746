//! Prompt templates for every LLM task, plus helpers for reading slot
//! values back out of a rendered prompt.

pub const GLOSS_HEADINGS: [&str; 8] = [
    "Definition and Scope",
    "Domains of Use",
    "Subfields and Disciplines",
    "Key Concepts and Mechanisms",
    "Real-World Applications",
    "Case Studies and Examples",
    "Related and Overlapping Terms",
    "Current Research and Trends",
];

pub fn gloss_system() -> String {
    let mut s = String::from(
        "You are a subject-matter expert in a scientific field. Your task is to provide detailed, thorough, \
         and academically structured explanations about terms provided by the user. Each term should be \
         explained exhaustively using the following structure:\n\n",
    );
    let hints = [
        "Provide a precise, scientific definition of the term and outline its general scope.",
        "Identify the scientific, technical, or professional domains where this term plays a key role.",
        "Break the term down into its major subfields, branches, or areas of study.",
        "Describe the most important ideas, mechanisms, or processes associated with this term.",
        "Discuss the major practical applications of this concept.",
        "Provide specific case studies or examples of the term in action.",
        "Identify related or similar terms and clarify how they are connected.",
        "Briefly cover current research directions, innovations, and debates.",
    ];
    for (i, (h, hint)) in GLOSS_HEADINGS.iter().zip(hints).enumerate() {
        s.push_str(&format!("{}. {h} – {hint}\n", i + 1));
    }
    s.push_str(
        "\nYour explanation should be clear, well-organized, scientifically accurate, and educational. \
         Assume that the user is unfamiliar with the term.",
    );
    s
}

pub const CONTEXT_OPEN: &str = "--- Wikipedia Context ---";
pub const CONTEXT_CLOSE: &str = "--- End Wikipedia Context ---";

pub fn gloss_user(term: &str, context: Option<&str>, parent: Option<&str>) -> String {
    let mut s = format!(
        "Now, please apply the structured explanation approach defined in the system prompt to explain the term: \"{term}\".\n"
    );
    if let Some(ctx) = context {
        s.push_str(&format!(
            "\nUse the following Wikipedia context as the primary source for your explanation, structuring your \
             response according to the system prompt guidelines:\n\n{CONTEXT_OPEN}\n{ctx}\n{CONTEXT_CLOSE}\n"
        ));
    }
    if let Some(p) = parent {
        s.push_str(&format!("\nAlso consider its relationship to the parent term \"{p}\".\n"));
    }
    s
}

pub fn title_check_system() -> String {
    "You are performing a relevance classification task to evaluate whether a Wikipedia page title is an \
     appropriate definition source for a given term within a specific context.\n\
     You are expected to act as a domain-specific semantic filter.\n\
     Answer \"Yes\" only if the title refers directly to the term and aligns with the context.\n\
     If the title is ambiguous, only tangentially related, or contextually irrelevant, answer \"No\".\n\
     Respond with only one word: \"Yes\" or \"No\"."
        .to_string()
}

pub fn title_check_user(term: &str, title: &str, context_hint: &str) -> String {
    format!(
        "Context: Information related to \"{context_hint}\".\n\
         Term to define: \"{term}\".\n\
         Candidate Wikipedia Page Title: \"{title}\".\n\
         Evaluate relevance and respond with only 'Yes' or 'No'."
    )
}

const TRIPLES_FEW_SHOT: &str = "Text: Marie Curie was a physicist who discovered polonium and radium.\n\
Good: {\"head\": \"Marie Curie\", \"relation\": \"discovered\", \"tail\": \"polonium\"}\n\
Good: {\"head\": \"Marie Curie\", \"relation\": \"occupation\", \"tail\": \"physicist\"}\n\
Bad: {\"head\": \"she\", \"relation\": \"was\", \"tail\": \"a person\"} (pronoun head, generic tail)\n\
Bad: {\"head\": \"Marie Curie\", \"relation\": \"Discovered Element\", \"tail\": \"radium\"} (relation not lowercase_underscore)";

pub fn triples_system() -> String {
    format!(
        "You are an information-extraction specialist.\n\
         Extract only the most significant and meaningful subject-predicate-object triplets from any text you receive.\n\n\
         Here are the guidelines you should follow:\n\
         - Focus on important entities: names, places, concepts, achievements.\n\
         - Include defining characteristics and significant relationships.\n\
         - Capture major influences, contributions, and key life events.\n\
         - Skip generic pronouns, articles, and common words.\n\
         - Write relations in clear lowercase and with underscores.\n\n\
         IMPORTANT: The generated output must follow this format.\n\
         {{\n  \"triplets\": [\n    {{\"head\": \"specific_entity\", \"relation\": \"significant_relation\", \"tail\": \"important_concept\"}}\n  ]\n}}\n\n\
         Below are some good and bad examples:\n--- Few-Shot ---\n{TRIPLES_FEW_SHOT}\n--- End Few-Shot ---"
    )
}

pub const TEXT_OPEN: &str = "--- Start of the text input ---";
pub const TEXT_CLOSE: &str = "--- End of the text input ---";

pub fn triples_user(text: &str) -> String {
    format!(
        "Follow the instructions in the system prompt to extract subject-predicate-object triplets from the text below.\n\n\
         {TEXT_OPEN}\n{text}\n{TEXT_CLOSE}"
    )
}

/// Slot values shared by the generation and validation prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSlots {
    pub path_representation: String,
    pub start_node: String,
    pub start_desc: String,
    pub end_node: String,
    pub end_desc: String,
}

pub fn mcq_forward_system() -> String {
    "You are a structured question generation system. Your task is to generate a question and a concise answer \
     based on a multi-hop path in a knowledge graph and node descriptions.\n\
     The question must reflect reasoning over the multi-step relationships in the path.\n\
     The answer should be clearly implied by the path and descriptions, often referring to a specific node."
        .to_string()
}

pub fn mcq_reverse_system() -> String {
    "You are a reasoning assistant generating reverse questions from knowledge graph paths.\n\
     Your task is to generate a question that can be answered explicitly by the start node of a multi-hop path.\n\
     Use the end node's perspective when possible to guide the reasoning backward."
        .to_string()
}

const FORWARD_FEW_SHOT: &str = "Path: \"Volcano\" -[PRODUCES]-> \"Lava\" -[COOLS_INTO]-> \"Basalt\"\n\
Start Node: \"Volcano\"\nEnd Node: \"Basalt\"\n\
Question: Which rock forms when the molten material produced by a volcano cools?\n\
A) Granite\nB) Basalt\nC) Marble\nD) Shale\nCorrect Answer: B";

const REVERSE_FEW_SHOT: &str = "Path: \"Volcano\" -[PRODUCES]-> \"Lava\" -[COOLS_INTO]-> \"Basalt\"\n\
Start Node: \"Volcano\"\nEnd Node: \"Basalt\"\n\
Question: Basalt forms from cooled lava; which landform produces that lava?\n\
A) Glacier\nB) Delta\nC) Volcano\nD) Canyon\nCorrect Answer: C";

const OUTPUT_BLOCK_FORWARD: &str = "Question: [Your generated question reflecting the multi-step path]\n\
A) [Option A]\nB) [Option B]\nC) [Option C]\nD) [Option D]\nCorrect Answer: [A, B, C, or D]";

fn variant_line(variant: u32) -> String {
    if variant == 0 {
        String::new()
    } else {
        format!("Variation: {variant}. Phrase this question differently from other variations of the same path.\n\n")
    }
}

fn slot_block(slots: &PathSlots) -> String {
    format!(
        "Path: {}\nStart Node: \"{}\"\nDescription: \"{}\"\nEnd Node: \"{}\"\nDescription: \"{}\"",
        slots.path_representation, slots.start_node, slots.start_desc, slots.end_node, slots.end_desc
    )
}

pub fn mcq_forward_user(slots: &PathSlots, topic: &str, variant: u32) -> String {
    format!(
        "Follow the instructions in the system prompt to generate a multiple-choice question based on the provided path and node descriptions.\n\
         --- Few-Shot ---\n{FORWARD_FEW_SHOT}\n--- End Few-Shot ---\n\n\
         IMPORTANT: The generated Question and Options MUST be relevant to the overall topic: \"{topic}\".\n\n\
         Now, generate for the following:\n{}\n\n{}\
         IMPORTANT: You MUST generate exactly four options (A, B, C, D) and indicate the single correct answer key. \
         Adhere strictly to the output format below.\n\nOutput:\n{OUTPUT_BLOCK_FORWARD}",
        slot_block(slots),
        variant_line(variant)
    )
}

pub fn mcq_reverse_user(slots: &PathSlots, topic: &str, variant: u32) -> String {
    let start = &slots.start_node;
    format!(
        "Follow the instructions in the system prompt to generate a multiple-choice question where the start node (\"{start}\") is the correct answer.\n\
         --- Few-Shot ---\n{REVERSE_FEW_SHOT}\n--- End Few-Shot ---\n\n\
         IMPORTANT: The generated Question and Options MUST be relevant to the overall topic: \"{topic}\".\n\n\
         Now, generate for the following:\n{}\n\n{}\
         IMPORTANT: You MUST generate exactly four options (A, B, C, D) and indicate the single correct answer key \
         (which MUST correspond to the option containing the Start Node name \"{start}\"). \
         Adhere strictly to the output format below.\n\nOutput:\n\
         Question: [Generated question targeting the start node]\nA) [Option A]\nB) [Option B]\nC) [Option C]\nD) [Option D]\n\
         Correct Answer: [Letter corresponding to the option containing the exact text \"{start}\"]",
        slot_block(slots),
        variant_line(variant)
    )
}

pub fn baseline_system() -> String {
    "You are a question-writing assistant. Write one four-option multiple-choice question that tests knowledge \
     of the given topic. Exactly one option must be correct."
        .to_string()
}

pub fn baseline_user(topic: &str, context: Option<&str>, variant: u32) -> String {
    let ctx = match context {
        Some(c) => format!("Use the following Wikipedia context as the source:\n{CONTEXT_OPEN}\n{c}\n{CONTEXT_CLOSE}\n\n"),
        None => String::new(),
    };
    format!(
        "Topic: \"{topic}\"\n\n{ctx}{}\
         IMPORTANT: You MUST generate exactly four options (A, B, C, D) and indicate the single correct answer key. \
         Adhere strictly to the output format below.\n\nOutput:\n{OUTPUT_BLOCK_FORWARD}",
        variant_line(variant)
    )
}

const VALIDATION_LABELS: [&str; 5] = [
    "Grammar_Fluency",
    "Single_Correct_Key",
    "Option_Uniqueness",
    "Answerable_From_Source",
    "Topic_Relevant",
];

pub fn validation_labels() -> [&'static str; 5] {
    VALIDATION_LABELS
}

pub fn validate_system() -> String {
    "You are an MCQ-validation assistant. Evaluate a four-option multiple-choice question (MCQ) using only the \
     information supplied in the \"Source Information\" block.\n\
     Answer with five [YES/NO] (or N/A) tags in the exact order and casing shown below.\n\n\
     Checklist\n\
     1. GRAMMAR_FLUENCY\nIs the Question spelled and phrased correctly and clearly?\n\
     2. SINGLE_CORRECT_KEY\nIs exactly one option marked as correct?\n\
     3. OPTION_UNIQUENESS\nAre all four options distinct (no duplicates or near-duplicates)?\n\
     4. ANSWERABLE_FROM_SOURCE\nDoes the indicated correct option follow solely from the Source (path, node excerpts) without outside knowledge?\n\
     5. TOPIC_RELEVANCE\nIf a Topic is provided, is the MCQ clearly about that topic?"
        .to_string()
}

const VALIDATION_FEW_SHOT: &str = "Question: \"Which rock forms when the molten material produced by a volcano cools?\"\n\
A) Granite\nB) Basalt\nC) Marble\nD) Shale\nCorrect Answer: \"B\"\nTopic (optional): \"Geology\"\n\
Grammar_Fluency: YES\nSingle_Correct_Key: YES\nOption_Uniqueness: YES\nAnswerable_From_Source: YES\nTopic_Relevant: YES";

pub const SOURCE_HEADER: &str = "Source Information";

pub fn validate_user(
    question: &str,
    options: &[(char, &str)],
    key: char,
    topic: &str,
    source_context: &str,
) -> String {
    let mut opts = String::new();
    for (letter, text) in options {
        opts.push_str(&format!("{letter}) {text}\n"));
    }
    let mut out = String::from("Output:\n");
    for (i, label) in VALIDATION_LABELS.iter().enumerate() {
        let tag = if i == 4 { "[YES/NO or N/A]" } else { "[YES/NO]" };
        out.push_str(&format!("{label}: {tag}\n"));
    }
    format!(
        "Follow the instructions in the system prompt to evaluate the following MCQ based only on the Source Information.\n\
         --- Few-Shot ---\n{VALIDATION_FEW_SHOT}\n--- End Few-Shot ---\n\n\
         Now, evaluate the following question:\n\
         Question: \"{question}\"\n{opts}Correct Answer: \"{key}\"\nTopic (optional): \"{topic}\"\n\n\
         {SOURCE_HEADER}\n{source_context}\n\n\
         IMPORTANT: You MUST generate exactly 5 responses for each criterion based on the provided output below.\n\n{out}"
    )
}

/// Value of the first line starting with `label` after the few-shot block,
/// with surrounding quotes and a trailing period removed.
pub fn slot_value<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    let body = after_few_shot(prompt);
    body.lines().find_map(|line| {
        let rest = line.trim_start().strip_prefix(label)?;
        let v = rest.trim();
        let v = v.strip_suffix('.').unwrap_or(v);
        Some(
            v.strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .filter(|s| !s.contains('"'))
                .unwrap_or(v),
        )
    })
}

/// Text between two marker lines.
pub fn between<'a>(prompt: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = prompt.find(open)? + open.len();
    let end = start + prompt[start..].find(close)?;
    Some(prompt[start..end].trim_matches('\n'))
}

fn after_few_shot(prompt: &str) -> &str {
    const END: &str = "--- End Few-Shot ---";
    match prompt.find(END) {
        Some(i) => &prompt[i + END.len()..],
        None => prompt,
    }
}
