use serde::{Deserialize, Serialize};

use super::{
    normalize, split_call, EnvError, EnvKind, EnvMetrics, Environment, Payload, StepResult,
    TaskInstance,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    /// Paragraphs separated by blank lines.
    pub text: String,
}

impl Article {
    pub fn first_paragraph(&self) -> &str {
        self.text
            .split("\n\n")
            .map(str::trim)
            .find(|p| !p.is_empty())
            .unwrap_or("")
    }

    pub fn sentences(&self) -> Vec<String> {
        split_sentences(&self.text)
    }
}

const ABBREVIATIONS: [&str; 9] = ["mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "etc"];

/// A period that ends `word` closes a sentence unless the word looks abbreviated
/// (`U.S.`, `J.`, `Dr.`).
fn closes_sentence(word: &str) -> bool {
    let Some(stem) = word.strip_suffix('.') else {
        return true;
    };
    let stem = stem.trim_start_matches(|c: char| !c.is_alphanumeric());
    !(stem.contains('.')
        || (stem.chars().count() == 1 && stem.chars().all(char::is_uppercase))
        || ABBREVIATIONS.contains(&stem.to_lowercase().as_str()))
}

pub(crate) fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for paragraph in text.split("\n\n") {
        let chars: Vec<char> = paragraph.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            current.push(c);
            let at_boundary = matches!(c, '.' | '!' | '?')
                && chars.get(i + 1).is_none_or(|n| n.is_whitespace())
                && (c != '.' || closes_sentence(current.split_whitespace().last().unwrap_or("")));
            if at_boundary {
                let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
                if !s.is_empty() {
                    out.push(s);
                }
                current.clear();
            }
        }
        let s = current.split_whitespace().collect::<Vec<_>>().join(" ");
        if !s.is_empty() {
            out.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPayload {
    pub articles: Vec<Article>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LookupCursor {
    keyword: String,
    next: usize,
}

/// Search / Lookup / Finish over a fixed article store.
#[derive(Debug, Clone, Default)]
pub struct MockWiki {
    articles: Vec<Article>,
    loaded: bool,
    active: Option<usize>,
    cursor: Option<LookupCursor>,
    done: bool,
    answer: Option<String>,
}

const MAX_SIMILAR: usize = 5;

impl MockWiki {
    fn search(&mut self, keyword: &str) -> String {
        self.cursor = None;
        let key = normalize(keyword);
        if let Some(idx) = self.articles.iter().position(|a| normalize(&a.title) == key) {
            self.active = Some(idx);
            return self.articles[idx].first_paragraph().to_string();
        }
        self.active = None;
        let mut similar: Vec<&str> = self
            .articles
            .iter()
            .map(|a| a.title.as_str())
            .filter(|t| {
                let title = normalize(t);
                !key.is_empty() && (title.contains(&key) || key.contains(&title))
            })
            .collect();
        similar.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        similar.truncate(MAX_SIMILAR);
        let listed: Vec<String> = similar.iter().map(|t| format!("'{t}'")).collect();
        format!("Could not find [{keyword}]. Similar: [{}].", listed.join(", "))
    }

    fn lookup(&mut self, keyword: &str) -> String {
        let Some(active) = self.active else {
            return "No page is active. Search for a page first.".to_string();
        };
        let key = normalize(keyword);
        let matches: Vec<String> = self.articles[active]
            .sentences()
            .into_iter()
            .filter(|s| !key.is_empty() && s.to_lowercase().contains(&key))
            .collect();
        if matches.is_empty() {
            return format!("No results for keyword [{keyword}].");
        }
        let cursor = match &mut self.cursor {
            Some(c) if c.keyword == key => c,
            slot => slot.insert(LookupCursor {
                keyword: key,
                next: 0,
            }),
        };
        if cursor.next >= matches.len() {
            return "No more results.".to_string();
        }
        let i = cursor.next;
        cursor.next += 1;
        format!("(Result {} / {}) {}", i + 1, matches.len(), matches[i])
    }
}

impl Environment for MockWiki {
    fn kind(&self) -> EnvKind {
        EnvKind::MockWiki
    }

    fn reset(&mut self, task: &TaskInstance) -> Result<String, EnvError> {
        let Payload::MockWiki(payload) = &task.payload else {
            return Err(EnvError::PayloadMismatch {
                task: task.id.clone(),
                expected: EnvKind::MockWiki.as_str(),
                found: task.payload.kind().as_str(),
            });
        };
        *self = MockWiki {
            articles: payload.articles.clone(),
            loaded: true,
            ..MockWiki::default()
        };
        Ok(format!("Question: {}", task.query))
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        if !self.loaded {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let observation = match split_call(action) {
            Some(("Search", arg)) => self.search(arg.trim()),
            Some(("Lookup", arg)) => self.lookup(arg.trim()),
            Some(("Finish", arg)) => {
                self.done = true;
                self.answer = Some(arg.trim().to_string());
                format!("Episode finished. Answer: {}", arg.trim())
            }
            _ => format!(
                "Invalid action: {}. Valid actions are Search[<keyword>], Lookup[<keyword>] and Finish[<answer>].",
                action.trim()
            ),
        };
        Ok(StepResult {
            observation,
            reward_delta: None,
            done: self.done,
        })
    }

    fn admissible_commands(&self) -> Vec<String> {
        vec![
            "Search[<keyword>]: search the wiki; returns the first paragraph of an exactly matching page, or a list of similar entities".into(),
            "Lookup[<keyword>]: return the next sentence containing the keyword in the most recently searched page".into(),
            "Finish[<answer>]: end the episode with the final answer".into(),
        ]
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn metrics(&self) -> EnvMetrics {
        EnvMetrics {
            done: self.done,
            delivered: self.answer.is_some(),
            reward: None,
            answer: self.answer.clone(),
            plan: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Gold;

    const PEORIA_SENTENCES: [&str; 5] = [
        "Peoria is a city in Illinois.",
        "It is the county seat of Peoria County.",
        "The city lies on the Illinois River.",
        "Peoria was named after the Peoria tribe.",
        "Its largest employer makes construction machinery in the city!",
    ];

    fn task() -> TaskInstance {
        let text = format!(
            "{} {}\n\n{} {} {}",
            PEORIA_SENTENCES[0],
            PEORIA_SENTENCES[1],
            PEORIA_SENTENCES[2],
            PEORIA_SENTENCES[3],
            PEORIA_SENTENCES[4]
        );
        TaskInstance {
            version: 1,
            id: "wiki".into(),
            query: "Which state is Peoria in?".into(),
            gold: Gold::default(),
            payload: Payload::MockWiki(WikiPayload {
                articles: vec![
                    Article {
                        title: "Peoria".into(),
                        text,
                    },
                    Article {
                        title: "Peoria County".into(),
                        text: "Peoria County is a county in Illinois.".into(),
                    },
                    Article {
                        title: "Chicago".into(),
                        text: "Chicago is the largest city in Illinois.".into(),
                    },
                ],
            }),
        }
    }

    fn env() -> MockWiki {
        let mut env = MockWiki::default();
        env.reset(&task()).unwrap();
        env
    }

    #[test]
    fn exact_search_returns_first_paragraph() {
        let mut env = env();
        let obs = env.step("Search[Peoria]").unwrap().observation;
        assert_eq!(obs, format!("{} {}", PEORIA_SENTENCES[0], PEORIA_SENTENCES[1]));
    }

    #[test]
    fn near_miss_lists_similar_entities() {
        let mut env = env();
        let obs = env.step("Search[Peori]").unwrap().observation;
        assert_eq!(obs, "Could not find [Peori]. Similar: ['Peoria', 'Peoria County'].");
    }

    #[test]
    fn lookup_cycles_in_document_order_then_exhausts() {
        let mut env = env();
        env.step("Search[Peoria]").unwrap();
        // linear-scan oracle over the known sentences
        let expected: Vec<&str> = PEORIA_SENTENCES
            .iter()
            .copied()
            .filter(|s| s.to_lowercase().contains("city"))
            .collect();
        assert_eq!(expected.len(), 3);
        for (i, sentence) in expected.iter().enumerate() {
            let obs = env.step("Lookup[city]").unwrap().observation;
            assert_eq!(obs, format!("(Result {} / {}) {}", i + 1, expected.len(), sentence));
        }
        assert_eq!(env.step("Lookup[city]").unwrap().observation, "No more results.");
        assert_eq!(env.step("Lookup[city]").unwrap().observation, "No more results.");
        // a different keyword restarts the cursor
        assert!(env.step("Lookup[river]").unwrap().observation.starts_with("(Result 1 / 1)"));
    }

    #[test]
    fn lookup_edge_cases() {
        let mut env = env();
        assert_eq!(
            env.step("Lookup[city]").unwrap().observation,
            "No page is active. Search for a page first."
        );
        env.step("Search[Chicago]").unwrap();
        assert_eq!(
            env.step("Lookup[volcano]").unwrap().observation,
            "No results for keyword [volcano]."
        );
        // page stays active after a miss
        assert!(env.step("Lookup[largest]").unwrap().observation.starts_with("(Result 1 / 1)"));
    }

    #[test]
    fn finish_records_answer_and_blocks_further_steps() {
        let mut env = env();
        let result = env.step("Finish[Illinois]").unwrap();
        assert!(result.done);
        assert_eq!(env.metrics().answer.as_deref(), Some("Illinois"));
        assert!(env.metrics().delivered);
        assert_eq!(env.step("Search[Peoria]"), Err(EnvError::AlreadyDone));
    }

    #[test]
    fn invalid_action_observation() {
        let mut env = env();
        let result = env.step("Jump[high]").unwrap();
        assert!(result.observation.starts_with("Invalid action"));
        assert!(!result.done);
    }

    #[test]
    fn reset_clears_state() {
        let mut env = env();
        env.step("Finish[x]").unwrap();
        env.reset(&task()).unwrap();
        assert!(!env.is_done());
        assert_eq!(env.metrics().answer, None);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let s = split_sentences("Peoria is in the U.S. state of Illinois. Dr. Smith lives there. It is near J. Doe Park.");
        assert_eq!(
            s,
            vec![
                "Peoria is in the U.S. state of Illinois.",
                "Dr. Smith lives there.",
                "It is near J. Doe Park."
            ]
        );
    }
}
