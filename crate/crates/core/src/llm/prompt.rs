//! Prompt templates for every LLM-driven stage and a strict placeholder renderer.
//!
//! Placeholders are written `{Name}` where the name consists of ASCII
//! letters, digits, spaces and underscores. Rendering substitutes values
//! byte-for-byte in a single pass over the template, so braces inside slot
//! values are never re-interpreted.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    CorpusFilter,
    QueryGen,
    AnnotateReasoning,
    AnnotateDirect,
    QueryReasoning,
    Custom,
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemplateName::CorpusFilter => "corpus_filter",
            TemplateName::QueryGen => "query_gen",
            TemplateName::AnnotateReasoning => "annotate_reasoning",
            TemplateName::AnnotateDirect => "annotate_direct",
            TemplateName::QueryReasoning => "query_reasoning",
            TemplateName::Custom => "custom",
        };
        f.write_str(s)
    }
}

pub const CORPUS_FILTER: &str = "\
Given a passage, determine whether it belongs to the domain: {Domain}

The given passage:
[Begin of Passage]
{Doc}
[End of Passage]

Note:
- Your output must always be \"Yes\" or \"No\".

Remember do not explain your output or output anything else. Your output:";

pub const QUERY_GEN: &str = "\
{Generation Instruction}

The given content:
[Begin of Content]
{Input Content}
[End of Content]

Note:
- Your output must always be a string, only containing {Output Content}.
- Your output should be independent of the given content, which means that it should not containing the pronouns such as \"it\", \"this\", \"that\", \"the given\", \"the provided\", etc.
- Your output ({Output Content}) should be about {Length}.
- Your output ({Output Content}) should require {Difficulty} level education to understand.

Remember do not explain your output or output anything else. Your output:";

pub const QUERY_REASONING: &str = "\
Given a question, your mission is to follow the instructions below:
1. Identify the essential problem.
2. Think step by step to reason and describe what information could be relevant and helpful to address the questions in detail.
3. Draft an answer with as many thoughts as you have.

The given question:
[Begin of Question]
{Original Query}
[End of Question]";

const ANNOTATE_HEAD: &str = "\
Here is the relevance definition in a retrieval task: {Relevance Definition}

Now given a query ({Query Type}) and a document ({Doc Type}) in this retrieval task, your mission is to perform the following steps to determine the relevance between the query and the document.

1. Query Analysis: Think to reason and describe what information would be most helpful in answering the query.
2. Document Analysis: Discuss how the information provided by the document fulfills or fails to fulfill the requirements implied by the query.
3. Relevance Annotation: Based on the relevance definition and the insights from the previous two steps, clearly justify your final relevance annotation result and annotate an integer score from a scale of 1 to 5. Please use the following guide:
    - 5 (Highly Relevant): The document is directly and fully responsive to the query, providing comprehensive, accurate, and specific information that completely addresses all aspects of the query.
    - 4 (Relevant): The document is largely relevant and provides most of the information needed, but may have minor omissions, slight inaccuracies, or not be perfectly aligned with the query's intent.
    - 3 (Moderately Relevant): The document has some relevance and offers partial information, but it may be incomplete, vague, or include some irrelevant content. It provides a basic connection but lacks depth or precision.
    - 2 (Slightly Relevant): The document has minimal relevance, with only a small portion of content tangentially related to the query. The majority of the document is off-topic or provides little value.
    - 1 (Irrelevant): The document is completely unrelated to the query and provides no useful information. There is no discernible connection or value for answering the query.

";

const ANNOTATE_TAIL: &str = "

Query ({Query Type}):
[Begin of Query]
{Query}
[End of Query]

Document ({Doc Type}):
[Begin of Document]
{Doc}
[End of Document]";

const REASONING_FORMAT: &str = "\
After providing your detailed analysis and justification for all the steps above, conclude your entire response with the final relevance score. The score must be placed strictly between the <score> tags. There should be no other text or explanation inside the tags:
<score>
[From a scale of 1 to 5, annotate the degree of relevance between the query and the document.]
</score>

Note: The whole response should be as concise as possible while covering all the necessary details, and not exceeding 512 words in total.";

const DIRECT_FORMAT: &str = "\
Directly output the final relevance score without any explanation or reasoning steps. The score must be placed strictly between the <score> tags. There should be no other text or explanation inside the tags:
<score>
[From a scale of 1 to 5, annotate the degree of relevance between the query and the document.]
</score>

Note: The response should ONLY contain the score enclosed within the <score> tags, with no additional text or commentary. Example of correct format: <score>4</score>.";

/// Markers the mock backend uses to recognise which template produced a prompt.
pub(crate) mod markers {
    pub const FILTER: &str = "determine whether it belongs to the domain:";
    pub const CONTENT_BEGIN: &str = "[Begin of Content]\n";
    pub const CONTENT_END: &str = "\n[End of Content]";
    pub const QUESTION_BEGIN: &str = "[Begin of Question]\n";
    pub const QUESTION_END: &str = "\n[End of Question]";
    pub const QUERY_BEGIN: &str = "[Begin of Query]\n";
    pub const QUERY_END: &str = "\n[End of Query]";
    pub const DOC_BEGIN: &str = "[Begin of Document]\n";
    pub const DOC_END: &str = "\n[End of Document]";
    pub const DIRECT: &str = "without any explanation or reasoning steps";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: Cow<'static, str>,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<Cow<'static, str>>) -> Self {
        Self {
            name,
            body: body.into(),
        }
    }

    /// The built-in template for `name`. Panics on [`TemplateName::Custom`],
    /// which has no built-in body.
    pub fn builtin(name: TemplateName) -> Self {
        let body: Cow<'static, str> = match name {
            TemplateName::CorpusFilter => CORPUS_FILTER.into(),
            TemplateName::QueryGen => QUERY_GEN.into(),
            TemplateName::QueryReasoning => QUERY_REASONING.into(),
            TemplateName::AnnotateReasoning => format!("{ANNOTATE_HEAD}{REASONING_FORMAT}{ANNOTATE_TAIL}").into(),
            TemplateName::AnnotateDirect => format!("{ANNOTATE_HEAD}{DIRECT_FORMAT}{ANNOTATE_TAIL}").into(),
            TemplateName::Custom => panic!("custom templates have no built-in body"),
        };
        Self { name, body }
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for seg in segments(&self.body) {
            if let Segment::Slot(name) = seg {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }

    pub fn render(&self, slots: &HashMap<&str, &str>) -> Result<String> {
        render(self, slots)
    }
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == ' ' || c == '_'
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        match close {
            Some(close)
                if close > 0 && after[..close].chars().all(is_name_char) && !after[..close].starts_with(' ') =>
            {
                out.push(Segment::Text(&rest[..open]));
                out.push(Segment::Slot(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Segment::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    out.push(Segment::Text(rest));
    out
}

/// Substitutes every placeholder with its slot value. Extra slots are ignored;
/// a missing one is an error naming it.
pub fn render(template: &PromptTemplate, slots: &HashMap<&str, &str>) -> Result<String> {
    let mut out = String::with_capacity(template.body.len());
    for seg in segments(&template.body) {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => match slots.get(name) {
                Some(value) => out.push_str(value),
                None => return Err(Error::UnresolvedPlaceholder(name.to_string())),
            },
        }
    }
    Ok(out)
}
