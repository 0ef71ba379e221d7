//! The twelve synthetic-data tasks and their per-task prompt strings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The value substituted for `{language}` in generation instructions.
pub const GENERATION_LANGUAGE: &str = "English";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Biology,
    EarthScience,
    Economics,
    Psychology,
    Robotics,
    StackOverflow,
    SustainableLiving,
    LeetCode,
    Pony,
    Aops,
    TheoremQaQuestions,
    TheoremQaTheorems,
}

/// Query type, document type and relevance definition used by the annotation prompts.
#[derive(Debug, Clone, Copy)]
pub struct RelevanceSpec {
    pub query_type: &'static str,
    pub doc_type: &'static str,
    pub definition: &'static str,
}

impl Task {
    pub const ALL: [Task; 12] = [
        Task::Biology,
        Task::EarthScience,
        Task::Economics,
        Task::Psychology,
        Task::Robotics,
        Task::StackOverflow,
        Task::SustainableLiving,
        Task::LeetCode,
        Task::Pony,
        Task::Aops,
        Task::TheoremQaQuestions,
        Task::TheoremQaTheorems,
    ];

    /// Short display name, e.g. `"Bio."` or `"TheoT."`.
    pub fn short_name(self) -> &'static str {
        match self {
            Task::Biology => "Bio.",
            Task::EarthScience => "Earth.",
            Task::Economics => "Econ.",
            Task::Psychology => "Psy.",
            Task::Robotics => "Rob.",
            Task::StackOverflow => "Stack.",
            Task::SustainableLiving => "Sus.",
            Task::LeetCode => "Leet.",
            Task::Pony => "Pony",
            Task::Aops => "AoPS",
            Task::TheoremQaQuestions => "TheoQ.",
            Task::TheoremQaTheorems => "TheoT.",
        }
    }

    /// Dataset identifier, e.g. `"biology"` or `"theoremqa_theorems"`.
    pub fn dataset_name(self) -> &'static str {
        match self {
            Task::Biology => "biology",
            Task::EarthScience => "earth_science",
            Task::Economics => "economics",
            Task::Psychology => "psychology",
            Task::Robotics => "robotics",
            Task::StackOverflow => "stackoverflow",
            Task::SustainableLiving => "sustainable_living",
            Task::LeetCode => "leetcode",
            Task::Pony => "pony",
            Task::Aops => "aops",
            Task::TheoremQaQuestions => "theoremqa_questions",
            Task::TheoremQaTheorems => "theoremqa_theorems",
        }
    }

    /// `{Domain}` value for the corpus-filter prompt.
    pub fn filter_domain(self) -> &'static str {
        match self {
            Task::Biology => "Biology",
            Task::EarthScience => "Earth Science",
            Task::Economics => "Economics",
            Task::Psychology => "Psychology",
            Task::Robotics => "Robotics",
            Task::SustainableLiving => "Sustainable Living",
            Task::StackOverflow | Task::LeetCode | Task::Pony => "Coding",
            Task::Aops | Task::TheoremQaQuestions | Task::TheoremQaTheorems => "Math",
        }
    }

    /// Retrieval instruction used when formatting queries for encoding.
    pub fn task_instruction(self) -> &'static str {
        match self {
            Task::Biology => "Given a Biology post, retrieve relevant passages that help answer the post.",
            Task::EarthScience => "Given an Earth Science post, retrieve relevant passages that help answer the post.",
            Task::Economics => "Given an Economics post, retrieve relevant passages that help answer the post.",
            Task::Psychology => "Given a Psychology post, retrieve relevant passages that help answer the post.",
            Task::Robotics => "Given a Robotics post, retrieve relevant passages that help answer the post.",
            Task::StackOverflow => "Given a Stack Overflow post, retrieve relevant passages that help answer the post.",
            Task::SustainableLiving => {
                "Given a Sustainable Living post, retrieve relevant passages that help answer the post."
            }
            Task::LeetCode => "Given a Coding problem, retrieve relevant examples that help answer the problem.",
            Task::Pony => "Given a Pony question, retrieve relevant passages that help answer the question.",
            Task::Aops | Task::TheoremQaQuestions => {
                "Given a Math problem, retrieve relevant examples that help answer the problem."
            }
            Task::TheoremQaTheorems => "Given a Math problem, retrieve relevant theorems that help answer the problem.",
        }
    }

    /// Generation instruction with `{language}` still unresolved.
    fn generation_instruction_template(self) -> &'static str {
        match self {
            // Earth Science intentionally shares the Biology wording.
            Task::Biology | Task::EarthScience => "Given a Biology-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::Economics => "Given an Economics-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::Psychology => "Given a Psychology-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::Robotics => "Given a Robotics-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::StackOverflow => "Given a Coding-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::SustainableLiving => "Given a Sustainable Living-related passage in {language}, generate a StackExchange post in {language} for which the critical concepts or theories discussed in the passage can serve as references for domain experts to draft an answer.",
            Task::LeetCode => "Given a solved LeetCode problem (with solutions) in {language}, generate a new LeetCode problem in {language} that the underlying algorithms or data structures from the original problem can help solve.",
            Task::Pony => "Given a Pony documentation passage in {language}, generate a Pony coding instruction in {language} that the Pony syntax described in the passage can help implement.",
            Task::Aops => "Given a Math problem solution in {language}, generate a new Math problem in {language} that the problem-solving skills used in the original problem can help solve.",
            Task::TheoremQaQuestions => "Given a Math problem solution in {language}, generate a new Math problem in {language} that the theorems used in the original problem can help solve.",
            Task::TheoremQaTheorems => "Given a Math theorem in {language}, generate a Math problem in {language} that the theorem can help solve.",
        }
    }

    fn output_content_template(self) -> &'static str {
        match self {
            Task::LeetCode => "the generated LeetCode problem in {language}",
            Task::Pony => "the generated Pony coding instruction in {language}",
            Task::Aops | Task::TheoremQaQuestions | Task::TheoremQaTheorems => {
                "the generated Math problem in {language}"
            }
            _ => "the generated StackExchange post in {language}",
        }
    }

    pub fn generation_instruction(self) -> String {
        self.generation_instruction_template()
            .replace("{language}", GENERATION_LANGUAGE)
    }

    pub fn output_content(self) -> String {
        self.output_content_template()
            .replace("{language}", GENERATION_LANGUAGE)
    }

    pub fn relevance(self) -> RelevanceSpec {
        let (query_type, doc_type, definition) = match self {
            Task::Biology => ("biology post", "passage", "Given a query (biology post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::EarthScience => ("earth science post", "passage", "Given a query (earth science post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::Economics => ("economics post", "passage", "Given a query (economics post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::Psychology => ("psychology post", "passage", "Given a query (psychology post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::Robotics => ("robotics post", "passage", "Given a query (robotics post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::StackOverflow => ("Stack Overflow post", "passage", "Given a query (Stack Overflow post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::SustainableLiving => ("sustainable living post", "passage", "Given a query (sustainable living post) and a document (passage), the document is relevant to the query if the critical concepts or theories discussed in the document can provide references for domain experts to draft an answer to the query."),
            Task::LeetCode => ("LeetCode problem", "coding problem solution", "Given a query (LeetCode problem) and a document (coding problem solution), the document is relevant to the query if the underlying algorithms or data structures used in the document can provide helpful insights for solving the problem in the query."),
            Task::Pony => ("Pony coding instruction", "Pony documentation passage", "Given a query (Pony coding instruction) and a document (Pony documentation passage), the document is relevant to the query if the Pony syntax described in the document is necessary for beginners with no prior knowledge of Pony to complete the coding instruction in the query."),
            Task::Aops | Task::TheoremQaQuestions => ("math problem", "math problem solution", "Given a query (math problem) and a document (math problem solution), the document is relevant to the query if the theorems used in the document can provide helpful insights for solving the problem in the query."),
            Task::TheoremQaTheorems => ("math problem", "math-related passage", "Given a query (math problem) and a document (math-related passage), the document is relevant to the query if the theorem described in the document can help solve the problem in the query."),
        };
        RelevanceSpec {
            query_type,
            doc_type,
            definition,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Accepts short names (`"Bio."`), dataset names (`"biology"`) and a few
    /// spelled-out variants, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .trim_end_matches('.')
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        let task = match key.as_str() {
            "bio" | "biology" => Task::Biology,
            "earth" | "earthscience" => Task::EarthScience,
            "econ" | "economics" => Task::Economics,
            "psy" | "psychology" => Task::Psychology,
            "rob" | "robotics" => Task::Robotics,
            "stack" | "stackoverflow" => Task::StackOverflow,
            "sus" | "sustainableliving" => Task::SustainableLiving,
            "leet" | "leetcode" => Task::LeetCode,
            "pony" => Task::Pony,
            "aops" => Task::Aops,
            "theoq" | "theoremqaquestions" => Task::TheoremQaQuestions,
            "theot" | "theoremqatheorems" => Task::TheoremQaTheorems,
            _ => return Err(Error::UnknownTask(s.to_string())),
        };
        Ok(task)
    }
}

/// Retrieval instruction for a task name, covering the twelve synthetic tasks
/// plus the medical benchmark tasks used at evaluation time.
pub fn instruction_for(task: &str) -> Option<&'static str> {
    if let Ok(t) = task.parse::<Task>() {
        return Some(t.task_instruction());
    }
    let key: String = task
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    let instr = match key.as_str() {
        "bioin" | "bioinformatics" => {
            "Given a Bioinformatics post, retrieve relevant passages that help answer the post."
        }
        "meds" | "medicalsciences" | "medicalscience" => {
            "Given a Medical Science post, retrieve relevant passages that help answer the post."
        }
        "mede" | "medxpertqaexam" | "medd" | "medqadiag" => {
            "Given a Medical Exam, retrieve relevant passages that help answer the exam."
        }
        "pmct" | "pmctreatment" => "Given a Clinical Case, retrieve relevant passages that help answer the case.",
        "pmcc" | "pmcclinical" | "iiyic" | "iiyiclinical" => {
            "Given a Clinical Case, retrieve similar cases that help diagnose the case."
        }
        _ => return None,
    };
    Some(instr)
}
