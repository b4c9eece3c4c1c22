use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{tokenize, MCItem, Token, BOS};

/// How a multiple-choice item becomes a conditioning prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PromptTemplate {
    /// `Question: {q}\nChoices: A) c0 B) c1 ...\nAnswer: `
    #[default]
    QuestionChoicesAnswer,
    /// `{q} ` with the choice continuing the question text.
    Bare,
}

impl PromptTemplate {
    pub fn id(self) -> &'static str {
        match self {
            PromptTemplate::QuestionChoicesAnswer => "qca-v1",
            PromptTemplate::Bare => "bare-v1",
        }
    }

    pub fn render(self, item: &MCItem) -> String {
        match self {
            PromptTemplate::QuestionChoicesAnswer => {
                let choices: Vec<String> =
                    item.choices.iter().enumerate().map(|(i, c)| format!("{}) {c}", choice_label(i))).collect();
                format!("Question: {}\nChoices: {}\nAnswer: ", item.question, choices.join(" "))
            }
            PromptTemplate::Bare => format!("{} ", item.question),
        }
    }

    /// BOS-prefixed prompt tokens.
    pub fn prompt_tokens(self, item: &MCItem) -> Vec<Token> {
        tokenize(self.render(item).as_bytes(), true, false)
    }
}

fn choice_label(i: usize) -> String {
    if i < 26 {
        String::from((b'A' + i as u8) as char)
    } else {
        format!("{}", i + 1)
    }
}

/// Shortens a (prompt, continuation) pair to fit a context window.
///
/// The continuation is kept whole when it fits next to a lone BOS, otherwise
/// its head is kept. The prompt keeps its leading BOS and loses its oldest
/// tokens first.
pub fn fit_to_context(prompt: &[Token], continuation: &[Token], context_length: usize) -> (Vec<Token>, Vec<Token>) {
    let cont: Vec<Token> = continuation.iter().take(context_length.saturating_sub(1)).copied().collect();
    let room = context_length - cont.len();
    if prompt.len() <= room {
        return (prompt.to_vec(), cont);
    }
    let mut p = Vec::with_capacity(room);
    let body = if prompt.first() == Some(&BOS) {
        p.push(BOS);
        &prompt[1..]
    } else {
        prompt
    };
    let keep = room - p.len();
    p.extend_from_slice(&body[body.len() - keep..]);
    (p, cont)
}
