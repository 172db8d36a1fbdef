use std::fmt;

use thiserror::Error;

/// Terminal classes of the grammar. Identifier and literal tokens carry their
/// text separately in [`Token`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Terminal {
    Model,
    Data,
    Prior,
    Likelihood,
    Real,
    Int,
    Vector,
    IntVector,
    Func1,
    Pow,
    Ident,
    IntLit,
    FloatLit,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Tilde,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
}

impl Terminal {
    pub const COUNT: usize = 28;

    pub const ALL: [Terminal; Terminal::COUNT] = [
        Terminal::Model,
        Terminal::Data,
        Terminal::Prior,
        Terminal::Likelihood,
        Terminal::Real,
        Terminal::Int,
        Terminal::Vector,
        Terminal::IntVector,
        Terminal::Func1,
        Terminal::Pow,
        Terminal::Ident,
        Terminal::IntLit,
        Terminal::FloatLit,
        Terminal::LBrace,
        Terminal::RBrace,
        Terminal::LBracket,
        Terminal::RBracket,
        Terminal::LParen,
        Terminal::RParen,
        Terminal::Colon,
        Terminal::Semi,
        Terminal::Comma,
        Terminal::Tilde,
        Terminal::Assign,
        Terminal::Plus,
        Terminal::Minus,
        Terminal::Star,
        Terminal::Slash,
    ];

    pub fn bit(self) -> u32 {
        1 << self as u8
    }

    /// Fixed spelling, for terminals that have one.
    pub fn spelling(self) -> Option<&'static str> {
        Some(match self {
            Terminal::Model => "model",
            Terminal::Data => "data",
            Terminal::Prior => "prior",
            Terminal::Likelihood => "likelihood",
            Terminal::Real => "real",
            Terminal::Int => "int",
            Terminal::Vector => "vector",
            Terminal::IntVector => "intvector",
            Terminal::Pow => "pow",
            Terminal::LBrace => "{",
            Terminal::RBrace => "}",
            Terminal::LBracket => "[",
            Terminal::RBracket => "]",
            Terminal::LParen => "(",
            Terminal::RParen => ")",
            Terminal::Colon => ":",
            Terminal::Semi => ";",
            Terminal::Comma => ",",
            Terminal::Tilde => "~",
            Terminal::Assign => "=",
            Terminal::Plus => "+",
            Terminal::Minus => "-",
            Terminal::Star => "*",
            Terminal::Slash => "/",
            Terminal::Func1 | Terminal::Ident | Terminal::IntLit | Terminal::FloatLit => return None,
        })
    }

    fn keyword(word: &str) -> Option<Terminal> {
        Some(match word {
            "model" => Terminal::Model,
            "data" => Terminal::Data,
            "prior" => Terminal::Prior,
            "likelihood" => Terminal::Likelihood,
            "real" => Terminal::Real,
            "int" => Terminal::Int,
            "vector" => Terminal::Vector,
            "intvector" => Terminal::IntVector,
            "exp" | "log" | "sqrt" | "logit" | "invlogit" => Terminal::Func1,
            "pow" => Terminal::Pow,
            _ => return None,
        })
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spelling() {
            Some(s) => write!(f, "`{s}`"),
            None => f.write_str(match self {
                Terminal::Func1 => "function name",
                Terminal::Ident => "identifier",
                Terminal::IntLit => "integer literal",
                _ => "number",
            }),
        }
    }
}

/// Whether `word` is reserved and cannot be used as an identifier.
pub fn is_keyword(word: &str) -> bool {
    Terminal::keyword(word).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: Terminal,
    pub text: String,
    /// Byte range in the source.
    pub start: usize,
    pub end: usize,
}

impl Token {
    /// A token detached from any source text.
    pub fn synthetic(kind: Terminal, text: impl Into<String>) -> Token {
        Token { kind, text: text.into(), start: 0, end: 0 }
    }

    pub fn fixed(kind: Terminal) -> Token {
        Token::synthetic(kind, kind.spelling().expect("terminal has no fixed spelling"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unexpected character {ch:?} at byte {offset}")]
pub struct LexError {
    pub offset: usize,
    pub ch: char,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Terminal::keyword(&src[start..i]).unwrap_or(Terminal::Ident)
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            lex_number(bytes, &mut i)
        } else {
            i += 1;
            match c {
                b'{' => Terminal::LBrace,
                b'}' => Terminal::RBrace,
                b'[' => Terminal::LBracket,
                b']' => Terminal::RBracket,
                b'(' => Terminal::LParen,
                b')' => Terminal::RParen,
                b':' => Terminal::Colon,
                b';' => Terminal::Semi,
                b',' => Terminal::Comma,
                b'~' => Terminal::Tilde,
                b'=' => Terminal::Assign,
                b'+' => Terminal::Plus,
                b'-' => Terminal::Minus,
                b'*' => Terminal::Star,
                b'/' => Terminal::Slash,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('\0');
                    return Err(LexError { offset: start, ch });
                }
            }
        };
        out.push(Token { kind, text: src[start..i].to_string(), start, end: i });
    }
    Ok(out)
}

fn lex_number(b: &[u8], i: &mut usize) -> Terminal {
    let digits = |i: &mut usize| {
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
    };
    let mut float = false;
    digits(i);
    if *i < b.len() && b[*i] == b'.' {
        float = true;
        *i += 1;
        digits(i);
    }
    if *i < b.len() && (b[*i] == b'e' || b[*i] == b'E') {
        let mut j = *i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            float = true;
            *i = j;
            digits(i);
        }
    }
    if float {
        Terminal::FloatLit
    } else {
        Terminal::IntLit
    }
}
