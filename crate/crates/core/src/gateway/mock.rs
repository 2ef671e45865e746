//! Deterministic table-driven chat backend. Each task reads its slots back
//! out of the rendered prompt and answers from the fixture tables, so a
//! mock run exercises the same prompt and parsing code as a network run.

use std::collections::{BTreeMap, BTreeSet};

use super::{BackendError, ChatRequest, ChatResponse, LlmBackend, TaskTag};
use crate::adapters::mock::question_key;
use crate::fixtures::{McqTable, MockTables, TripleEntry};
use crate::model::normalize_name;
use crate::prompts::{self, GLOSS_HEADINGS};
use crate::text::{content_tokens, sentences, stable_hash, unit_fraction, word_count, words_lower};

pub struct MockLlm {
    seed: u64,
    titles: BTreeMap<String, String>,
    triples: BTreeMap<String, TripleEntry>,
    glosses: BTreeMap<String, String>,
    mcq: McqTable,
    pools: BTreeMap<String, Vec<String>>,
    mcq_overrides: BTreeMap<String, String>,
    validator_overrides: BTreeMap<String, String>,
    off_topic: BTreeMap<String, Vec<String>>,
}

impl MockLlm {
    pub fn new(tables: &MockTables, seed: u64) -> Self {
        let norm_keys = |m: &BTreeMap<String, String>| -> BTreeMap<String, String> {
            m.iter().map(|(k, v)| (normalize_name(k), v.clone())).collect()
        };
        // Keys shaped "<name>|<suffix>" normalize only the name part.
        let split_keys = |m: &BTreeMap<String, String>| -> BTreeMap<String, String> {
            m.iter()
                .map(|(k, v)| match k.split_once('|') {
                    Some((a, b)) => (format!("{}|{}", normalize_name(a), b), v.clone()),
                    None => (normalize_name(k), v.clone()),
                })
                .collect()
        };
        MockLlm {
            seed,
            titles: split_keys(&tables.titles),
            triples: tables.triples.iter().map(|(k, v)| (normalize_name(k), v.clone())).collect(),
            glosses: norm_keys(&tables.glosses),
            pools: tables.mcq.pools.iter().map(|(k, v)| (normalize_name(k), v.clone())).collect(),
            mcq_overrides: split_keys(&tables.mcq.overrides),
            mcq: tables.mcq.clone(),
            validator_overrides: tables.validator.overrides.iter().map(|(k, v)| (question_key(k), v.clone())).collect(),
            off_topic: tables.validator.off_topic.iter().map(|(k, v)| (normalize_name(k), v.clone())).collect(),
        }
    }

    fn hash(&self, parts: &[&str]) -> u64 {
        let seed = self.seed.to_string();
        stable_hash(std::iter::once(seed.as_str()).chain(parts.iter().copied()))
    }

    fn gloss(&self, user: &str) -> String {
        let term = quoted_after(user, "explain the term: ").unwrap_or_default();
        if let Some(text) = self.glosses.get(&normalize_name(term)) {
            return text.clone();
        }
        let context = prompts::between(user, prompts::CONTEXT_OPEN, prompts::CONTEXT_CLOSE);
        let parent = quoted_after(user, "the parent term ");
        let sents: Vec<String> = match context {
            // Sentences in passage order, so the top passage dominates.
            Some(ctx) => ctx
                .split("\n\n")
                .flat_map(sentences)
                .filter(|s| word_count(s) >= 3)
                .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
                .collect(),
            None => Vec::new(),
        };
        let mut out = format!("Term: {term}\n");
        for (i, heading) in GLOSS_HEADINGS.iter().enumerate() {
            let body = if sents.is_empty() {
                parametric_line(term, parent, i)
            } else {
                sents[i % sents.len()].clone()
            };
            out.push_str(&format!("{}. {heading}: {body}\n", i + 1));
        }
        out.trim_end().to_string()
    }

    fn triples(&self, user: &str) -> String {
        let text = prompts::between(user, prompts::TEXT_OPEN, prompts::TEXT_CLOSE).unwrap_or(user);
        let term = text.lines().find_map(|l| l.trim().strip_prefix("Term:")).map(str::trim).unwrap_or("");
        match self.triples.get(&normalize_name(term)) {
            Some(TripleEntry::Raw { raw }) => raw.clone(),
            Some(TripleEntry::Triples(list)) => {
                let items: Vec<serde_json::Value> = list
                    .iter()
                    .map(|[h, r, t]| serde_json::json!({"head": h, "relation": r, "tail": t}))
                    .collect();
                let body = serde_json::to_string_pretty(&serde_json::json!({ "triplets": items })).expect("json");
                if self.hash(&["triples-wrap", term]) % 3 == 0 {
                    format!("Here are the extracted triplets:\n{body}")
                } else {
                    body
                }
            }
            None => "{\"triplets\": []}".to_string(),
        }
    }

    fn title_check(&self, user: &str) -> String {
        let term = quoted_after(user, "Term to define: ").unwrap_or_default();
        let title = quoted_after(user, "Candidate Wikipedia Page Title: ").unwrap_or_default();
        let key = normalize_name(term);
        if let Some(answer) = self.titles.get(&format!("{key}|{title}")) {
            return answer.clone();
        }
        if !key.is_empty() && normalize_name(title).contains(&key) { "Yes" } else { "No" }.to_string()
    }

    fn mcq(&self, tag: TaskTag, user: &str) -> String {
        if user.starts_with("Topic: ") {
            return self.baseline(user);
        }
        let path_line = prompts::slot_value(user, "Path:").unwrap_or("");
        let nodes: Vec<&str> = path_line.split('"').skip(1).step_by(2).collect();
        let relations: Vec<String> = path_line
            .split("-[")
            .skip(1)
            .filter_map(|s| s.split_once("]->").map(|(r, _)| r.to_lowercase().replace('_', " ")))
            .collect();
        let start = prompts::slot_value(user, "Start Node:").unwrap_or("");
        let end = prompts::slot_value(user, "End Node:").unwrap_or("");
        let topic = quoted_after(user, "the overall topic: ").unwrap_or("");
        let variant = variant_of(user);
        let reverse = tag == TaskTag::McqReverse;
        let (answer, anchor, orientation) = if reverse { (start, end, "reverse") } else { (end, start, "forward") };
        if let Some(text) = self.mcq_overrides.get(&format!("{}|{orientation}", normalize_name(answer))) {
            return text.clone();
        }
        let h = self.hash(&[tag.as_str(), user]);
        let chain = relations.join(", then ");
        let template = (self.hash(&[tag.as_str(), path_line, topic]) as u32).wrapping_add(variant) % 4;
        let question = if reverse {
            match template {
                0 => format!("Which concept leads to {anchor} through the chain {chain}?"),
                1 => format!("Tracing back from {anchor} along {chain}, which starting concept is reached?"),
                2 => format!("Which concept connects to {anchor} via {chain}?"),
                _ => format!("Which concept is the origin of a {chain} chain that ends at {anchor}?"),
            }
        } else {
            match template {
                0 => format!("Starting from {anchor} and following {chain}, which concept is reached?"),
                1 => format!("Which concept is linked to {anchor} through the chain {chain}?"),
                2 => format!("What does {anchor} lead to via {chain}?"),
                _ => format!("Following {chain} from {anchor}, which concept comes last?"),
            }
        };
        let mut taken: BTreeSet<String> = BTreeSet::from([normalize_name(answer)]);
        let mut distractors: Vec<String> = Vec::new();
        for n in nodes.iter().rev() {
            if distractors.len() < 3 && taken.insert(normalize_name(n)) {
                distractors.push(n.to_string());
            }
        }
        self.fill_from_pool(&mut distractors, &mut taken, topic, h);
        self.render(question, answer, distractors, h, &[tag.as_str(), user])
    }

    fn baseline(&self, user: &str) -> String {
        let topic = quoted_after(user, "Topic: ").unwrap_or("");
        let context = prompts::between(user, prompts::CONTEXT_OPEN, prompts::CONTEXT_CLOSE);
        let h = self.hash(&["baseline", user]);
        let topic_key = normalize_name(topic);
        let mut taken = BTreeSet::from([topic_key.clone()]);
        let variant = variant_of(user) as usize;
        let (question, answer) = match context {
            Some(ctx) => {
                // Describe the topic with one of its own sentences, name masked.
                let sents: Vec<&str> = sentences(ctx).into_iter().filter(|s| word_count(s) >= 4).collect();
                let picked = sents.get(variant % sents.len().max(1)).copied().unwrap_or("");
                let masked = mask_words(picked, topic);
                (format!("Which subject is described as follows: {masked}?"), topic.to_string())
            }
            None => {
                let pool = self.pool(&topic_key);
                let base = self.hash(&["baseline-answer", &topic_key]) as usize;
                let answer = pool[(base + variant) % pool.len()].clone();
                taken.insert(normalize_name(&answer));
                let initial: String = answer.chars().take(2).collect();
                let letters = answer.chars().filter(|c| c.is_alphabetic()).count();
                (
                    format!("Which central idea in {topic} is a {letters}-letter term beginning with \"{initial}\"?"),
                    answer,
                )
            }
        };
        let mut distractors = Vec::new();
        if context.is_some() {
            self.fill_from_pool(&mut distractors, &mut taken, "*", h);
        } else {
            self.fill_from_pool(&mut distractors, &mut taken, "*", h >> 7);
        }
        self.render(question, &answer, distractors, h, &["baseline", user])
    }

    fn pool(&self, topic_key: &str) -> &[String] {
        self.pools.get(topic_key).or_else(|| self.pools.get("*")).map(Vec::as_slice).unwrap_or(&[])
    }

    fn fill_from_pool(&self, out: &mut Vec<String>, taken: &mut BTreeSet<String>, topic: &str, h: u64) {
        for pool in [self.pool(&normalize_name(topic)), self.pool("*")] {
            if pool.is_empty() {
                continue;
            }
            let offset = (h % pool.len() as u64) as usize;
            for i in 0..pool.len() {
                let cand = &pool[(offset + i) % pool.len()];
                if out.len() < 3 && taken.insert(normalize_name(cand)) {
                    out.push(cand.clone());
                }
            }
        }
        let mut n = 1;
        while out.len() < 3 {
            out.push(format!("None of these ({n})"));
            n += 1;
        }
    }

    /// Places the answer at a hashed letter and applies the configured fault
    /// rates: a wrong key, a missing option line, or a doubled word.
    fn render(&self, mut question: String, answer: &str, distractors: Vec<String>, h: u64, salt: &[&str]) -> String {
        let key = (h % 4) as usize;
        let mut options = distractors;
        options.truncate(3);
        options.insert(key, answer.to_string());
        let mut parts = vec!["fault"];
        parts.extend_from_slice(salt);
        let fault = unit_fraction(self.hash(&parts));
        let m = &self.mcq;
        let mut key_letter = (b'A' + key as u8) as char;
        let mut drop_d = false;
        if fault < m.wrong_key_rate {
            key_letter = (b'A' + ((key + 1) % 4) as u8) as char;
        } else if fault < m.wrong_key_rate + m.malformed_rate {
            drop_d = true;
        } else if fault < m.wrong_key_rate + m.malformed_rate + m.typo_rate {
            if let Some(first) = question.split_whitespace().next().map(str::to_string) {
                question = format!("{first} {question}");
            }
        }
        let mut out = String::new();
        if h % 5 == 0 {
            out.push_str("Here is a question based on the path.\n\n");
        }
        out.push_str(&format!("Question: {question}\n"));
        for (i, opt) in options.iter().enumerate() {
            if drop_d && i == 3 {
                continue;
            }
            out.push_str(&format!("{}) {opt}\n", (b'A' + i as u8) as char));
        }
        out.push_str(&format!("Correct Answer: {key_letter}"));
        out
    }

    fn validate(&self, user: &str) -> String {
        let body = after(user, "Now, evaluate the following question:").unwrap_or(user);
        let question = quoted_after(body, "Question: ").unwrap_or("");
        if let Some(text) = self.validator_overrides.get(&question_key(question)) {
            return text.clone();
        }
        let mut options: BTreeMap<char, String> = BTreeMap::new();
        for line in body.lines() {
            let mut chars = line.chars();
            if let (Some(l @ 'A'..='D'), Some(')')) = (chars.next(), chars.next()) {
                options.entry(l).or_insert_with(|| chars.as_str().trim().to_string());
            }
        }
        let key = quoted_after(body, "Correct Answer: ").and_then(|k| k.chars().next()).unwrap_or('?');
        let topic = quoted_after(body, "Topic (optional): ").unwrap_or("");
        let source = after(body, prompts::SOURCE_HEADER)
            .map(|s| s.split("IMPORTANT: You MUST generate exactly 5").next().unwrap_or(s))
            .unwrap_or("")
            .to_lowercase();

        let words = words_lower(question);
        let grammar = !words.windows(2).any(|w| w[0] == w[1]) && question.trim_end().ends_with('?');
        let single = options.contains_key(&key);
        let opts: Vec<&String> = options.values().collect();
        let unique = opts.len() == 4
            && (0..opts.len()).all(|i| {
                (i + 1..opts.len()).all(|j| !(same_option(opts[i], opts[j]) || abbreviates(opts[i], opts[j])))
            });
        let answerable = options.get(&key).is_some_and(|k| !k.is_empty() && source.contains(&k.to_lowercase()));
        let topic_flag = if topic.trim().is_empty() {
            "N/A"
        } else {
            let q = question.to_lowercase();
            let off = self
                .off_topic
                .get(&normalize_name(topic))
                .is_some_and(|terms| terms.iter().any(|t| q.contains(&t.to_lowercase())));
            if off { "NO" } else { "YES" }
        };
        let yn = |b: bool| if b { "YES" } else { "NO" };
        let labels = prompts::validation_labels();
        let values = [yn(grammar), yn(single), yn(unique), yn(answerable), topic_flag];
        labels.iter().zip(values).map(|(l, v)| format!("{l}: {v}")).collect::<Vec<_>>().join("\n")
    }
}

impl LlmBackend for MockLlm {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let user = request.user_prompt.as_str();
        let text = match request.task_tag {
            TaskTag::Gloss => self.gloss(user),
            TaskTag::Triples => self.triples(user),
            TaskTag::TitleCheck => self.title_check(user),
            TaskTag::McqForward | TaskTag::McqReverse => self.mcq(request.task_tag, user),
            TaskTag::Validate => self.validate(user),
        };
        Ok(ChatResponse {
            prompt_tokens: (word_count(&request.system_prompt) + word_count(user)) as u64,
            completion_tokens: word_count(&text) as u64,
            text,
        })
    }
}

fn after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|i| &text[i + marker.len()..])
}

/// The double-quoted value following `marker`.
fn quoted_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let rest = after(text, marker)?.strip_prefix('"')?;
    rest.find('"').map(|end| &rest[..end])
}

fn parametric_line(term: &str, parent: Option<&str>, section: usize) -> String {
    let scope = parent.map_or_else(|| "general scholarship".to_string(), |p| format!("the study of {p}"));
    match section {
        0 => format!("{term} is a concept discussed in {scope}."),
        1 => format!("{term} appears in textbooks and reference works on {scope}."),
        2 => format!("Specialists divide {term} into several narrower topics."),
        3 => format!("The central ideas of {term} concern its structure and function."),
        4 => format!("{term} informs teaching and applied work."),
        5 => format!("Standard examples of {term} appear in introductory courses."),
        6 => format!("{term} is closely related to neighbouring ideas in {scope}."),
        _ => format!("Research on {term} continues to refine its definition."),
    }
}

fn variant_of(user: &str) -> u32 {
    user.lines()
        .find_map(|l| l.strip_prefix("Variation: "))
        .and_then(|v| v.split('.').next())
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn mask_words(sentence: &str, topic: &str) -> String {
    let hide = content_tokens(topic);
    sentence
        .trim_end_matches('.')
        .split_whitespace()
        .map(|w| {
            let bare: String = w.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
            if hide.contains(&bare) || hide.iter().any(|h| bare.starts_with(h.as_str()) && bare.len() <= h.len() + 2) {
                "this subject"
            } else {
                w
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn same_option(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// "NYC" abbreviates "New York City".
fn abbreviates(a: &str, b: &str) -> bool {
    let initials = |s: &str| s.split_whitespace().filter_map(|w| w.chars().next()).collect::<String>().to_uppercase();
    let compact = |s: &str| s.trim().to_uppercase();
    let (a_words, b_words) = (a.split_whitespace().count(), b.split_whitespace().count());
    (a_words == 1 && b_words > 1 && compact(a) == initials(b)) || (b_words == 1 && a_words > 1 && compact(b) == initials(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::fixtures::Fixtures;
    use crate::prompts::PathSlots;

    fn mock() -> MockLlm {
        MockLlm::new(&Fixtures::builtin().tables, 7)
    }

    fn ask(m: &MockLlm, tag: TaskTag, user: String) -> String {
        let req = ChatRequest::for_task(tag, &PipelineConfig::default(), String::new(), user);
        m.complete(&req).unwrap().text
    }

    #[test]
    fn deterministic() {
        let m = mock();
        let u = prompts::gloss_user("Biology", Some("Biology is the study of life. It has many branches."), None);
        assert_eq!(ask(&m, TaskTag::Gloss, u.clone()), ask(&m, TaskTag::Gloss, u));
    }

    #[test]
    fn gloss_has_all_headings() {
        let m = mock();
        let g = ask(&m, TaskTag::Gloss, prompts::gloss_user("Biology", Some("Biology is the study of life."), None));
        assert!(g.starts_with("Term: Biology\n"));
        for h in GLOSS_HEADINGS {
            assert!(g.contains(h), "{h}");
        }
        let p = ask(&m, TaskTag::Gloss, prompts::gloss_user("Pharmacology", None, Some("medicine")));
        assert!(p.contains("the study of medicine"));
    }

    #[test]
    fn triples_from_table() {
        let m = mock();
        let t = ask(&m, TaskTag::Triples, prompts::triples_user("Term: Hafez\n1. Definition and Scope: born in Shiraz."));
        assert!(t.contains("\"born_in\"") && t.contains("\"Shiraz\""));
        assert!(ask(&m, TaskTag::Triples, prompts::triples_user("no term line")).contains("[]"));
    }

    #[test]
    fn title_checks() {
        let m = mock();
        let ask_title = |term: &str, title: &str| ask(&m, TaskTag::TitleCheck, prompts::title_check_user(term, title, "Biology"));
        assert_eq!(ask_title("Cell", "Cell (biology)"), "Yes");
        assert_eq!(ask_title("Cell", "Cell phone"), "No");
        assert_eq!(ask_title("Algebra", "Algebra"), "Maybe");
        assert_eq!(ask_title("Biology", "Mathematics"), "No");
    }

    fn slots(nodes: &[&str], rels: &[&str]) -> PathSlots {
        let mut path = format!("\"{}\"", nodes[0]);
        for (r, n) in rels.iter().zip(&nodes[1..]) {
            path.push_str(&format!(" -[{}]-> \"{n}\"", r.to_uppercase()));
        }
        PathSlots {
            path_representation: path,
            start_node: nodes[0].into(),
            start_desc: "d".into(),
            end_node: nodes[nodes.len() - 1].into(),
            end_desc: "d".into(),
        }
    }

    #[test]
    fn mcq_contains_answer_and_four_options() {
        let m = mock();
        let s = slots(&["Biology", "Cell", "Mitochondrion"], &["studies", "contains"]);
        let out = ask(&m, TaskTag::McqForward, prompts::mcq_forward_user(&s, "Biology", 0));
        assert!(out.contains("Mitochondrion") && out.contains("Question: "));
        let out = ask(&m, TaskTag::McqReverse, prompts::mcq_reverse_user(&s, "Biology", 0));
        assert!(out.contains(") Biology"));
        let p = slots(&["Pharmacology", "Drug"], &["studies"]);
        let out = ask(&m, TaskTag::McqReverse, prompts::mcq_reverse_user(&p, "Biology", 0));
        assert!(out.ends_with("Correct Answer: B") && out.contains("A) Pharmacology"));
    }

    #[test]
    fn validator_rules() {
        let m = mock();
        let v = |q: &str, opts: &[(char, &str)], key: char, topic: &str, src: &str| {
            ask(&m, TaskTag::Validate, prompts::validate_user(q, opts, key, topic, src))
        };
        let opts = [('A', "Cell"), ('B', "Osmosis"), ('C', "Gene"), ('D', "Enzyme")];
        let ok = v("What does biology study?", &opts, 'A', "Biology", "Path: \"Biology\" -[STUDIES]-> \"Cell\"");
        assert_eq!(ok, "Grammar_Fluency: YES\nSingle_Correct_Key: YES\nOption_Uniqueness: YES\nAnswerable_From_Source: YES\nTopic_Relevant: YES");
        let bad = v("What what does biology study", &opts, 'B', "", "Path: \"Biology\" -[STUDIES]-> \"Cell\"");
        assert_eq!(bad, "Grammar_Fluency: NO\nSingle_Correct_Key: YES\nOption_Uniqueness: YES\nAnswerable_From_Source: NO\nTopic_Relevant: N/A");
        let cities = [('A', "NYC"), ('B', "New York City"), ('C', "Los Angeles"), ('D', "Chicago")];
        assert!(v("Which city?", &cities, 'A', "", "NYC").contains("Option_Uniqueness: NO"));
        let off = v("Which war ended the empire?", &opts, 'A', "Biology", "Cell");
        assert!(off.ends_with("Topic_Relevant: NO"));
    }

    #[test]
    fn abbreviation_detection() {
        assert!(abbreviates("NYC", "New York City"));
        assert!(!abbreviates("LA", "Chicago"));
    }
}
