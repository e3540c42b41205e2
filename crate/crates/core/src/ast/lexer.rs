use std::fmt;

use super::{LexError, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntegerLiteral,
    BooleanLiteral,
    Operator,
    Punctuation,
    /// Only legal inside `note` blocks; anywhere else the parser reports it
    /// as an unsupported feature.
    StringLiteral,
    /// Never legal; lexed so the parser can name the construct.
    RealLiteral,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }

    /// Keyword comparison is case-insensitive, as in Eiffel.
    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text.eq_ignore_ascii_case(kw)
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Operator && self.text == op
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuation && self.text == p
    }

    pub fn is_ident(&self, name: &str) -> bool {
        self.kind == TokenKind::Identifier && self.text.eq_ignore_ascii_case(name)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`", self.text)
    }
}

pub const KEYWORDS: &[&str] = &[
    "class", "create", "feature", "do", "end", "local", "require", "ensure", "if", "then", "else",
    "from", "until", "loop", "separate", "Current", "Result", "Void", "True", "False", "not",
    "and", "or", "note", "invariant",
];

fn keyword_kind(word: &str) -> Option<TokenKind> {
    if word.eq_ignore_ascii_case("True") || word.eq_ignore_ascii_case("False") {
        return Some(TokenKind::BooleanLiteral);
    }
    KEYWORDS
        .iter()
        .any(|kw| kw.eq_ignore_ascii_case(word))
        .then_some(TokenKind::Keyword)
}

const TWO_CHAR_OPS: &[&str] = &[":=", "/=", "<=", ">=", "//", "\\\\"];
const ONE_CHAR_OPS: &[char] = &['+', '-', '*', '/', '<', '>', '=', '~'];
const PUNCTUATION: &[char] = &['(', ')', ',', ';', ':', '.', '{', '}', '[', ']'];

/// Splits `source` into tokens. Comments (`--` to end of line) and
/// whitespace are dropped; every other character lands in exactly one token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! advance {
        ($n:expr) => {{
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance!(1);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance!(1);
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let start = i;

        let kind = if c.is_ascii_alphabetic() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            advance!(j - i);
            keyword_kind(&word).unwrap_or(TokenKind::Identifier)
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '_') {
                j += 1;
            }
            let is_real = chars.get(j) == Some(&'.')
                && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit());
            if is_real {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                advance!(j - i);
                TokenKind::RealLiteral
            } else {
                let digits: String = chars[i..j].iter().filter(|d| **d != '_').collect();
                if digits.parse::<i64>().is_err() {
                    return Err(LexError {
                        line: start_line,
                        column: start_col,
                        snippet: chars[i..j].iter().collect(),
                        message: "integer literal does not fit in 64 bits".into(),
                    });
                }
                advance!(j - i);
                TokenKind::IntegerLiteral
            }
        } else if c == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                if chars[j] == '%' {
                    j += 1;
                }
                j += 1;
            }
            if chars.get(j) != Some(&'"') {
                return Err(LexError {
                    line: start_line,
                    column: start_col,
                    snippet: chars[i..j.min(chars.len())].iter().collect(),
                    message: "unterminated string literal".into(),
                });
            }
            advance!(j + 1 - i);
            TokenKind::StringLiteral
        } else if i + 1 < chars.len()
            && TWO_CHAR_OPS
                .iter()
                .any(|op| op.starts_with(c) && op.chars().nth(1) == Some(chars[i + 1]))
        {
            advance!(2);
            TokenKind::Operator
        } else if ONE_CHAR_OPS.contains(&c) {
            advance!(1);
            TokenKind::Operator
        } else if PUNCTUATION.contains(&c) {
            advance!(1);
            TokenKind::Punctuation
        } else {
            let snippet: String = chars[i..].iter().take_while(|c| !c.is_whitespace()).take(16).collect();
            return Err(LexError {
                line,
                column: col,
                snippet,
                message: format!("illegal character {c:?}"),
            });
        };

        tokens.push(Token {
            kind,
            text: chars[start..i].iter().collect(),
            line: start_line,
            column: start_col,
        });
    }
    Ok(tokens)
}
