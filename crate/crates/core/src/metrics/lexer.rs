//! Tokenizer for the subset of Python needed by the complexity metrics.
//!
//! The lexer groups tokens into logical lines (newlines inside brackets and
//! backslash continuations are joined) and tracks indentation the way the
//! CPython tokenizer does, so the structural scanner can recover block nesting
//! without a full grammar.

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Name,
    Number,
    Str,
    Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based line where the token starts.
    pub line: usize,
    /// 1-based line where the token ends (differs for multi-line strings).
    pub end_line: usize,
    /// 1-based column of the first character.
    pub col: usize,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == kw
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }
}

/// A logical line: one or more physical lines forming a single statement line.
#[derive(Debug, Clone)]
pub struct LogicalLine {
    /// Indentation level (0 for the outermost block).
    pub level: usize,
    pub tokens: Vec<Token>,
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

// Longest first so that greedy matching picks `**=` over `**` over `*`.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "!=", "%=", "&=", "**", "*=", "+=", "-=", "->", "//", "/=",
    ":=", "<<", "<=", "==", ">=", ">>", "@=", "^=", "|=", "!", "%", "&", "(", ")", "*", "+", ",",
    "-", ".", "/", ":", ";", "<", "=", ">", "@", "[", "]", "^", "{", "|", "}", "~",
];

const STRING_PREFIXES: &[&str] = &["r", "u", "b", "f", "br", "rb", "fr", "rf"];

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line: 1, col: 1, _src: src }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.col, message: message.into() }
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Splits `source` into logical lines with indentation levels.
pub fn tokenize(source: &str) -> Result<Vec<LogicalLine>, ParseError> {
    let mut cur = Cursor::new(source);
    let mut lines = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut brackets: Vec<(char, usize, usize)> = Vec::new();
    let mut indent_stack: Vec<usize> = vec![0];
    let mut level = 0usize;
    let mut at_line_start = true;

    loop {
        if at_line_start {
            // Measure indentation; skip blank and comment-only lines entirely.
            let mut width = 0usize;
            while let Some(c) = cur.peek() {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                cur.bump();
            }
            match cur.peek() {
                None => break,
                Some('\n') | Some('\r') => {
                    cur.bump();
                    continue;
                }
                Some('#') => {
                    while !matches!(cur.peek(), None | Some('\n')) {
                        cur.bump();
                    }
                    continue;
                }
                _ => {}
            }
            let top = *indent_stack.last().unwrap_or(&0);
            if width > top {
                indent_stack.push(width);
            } else if width < top {
                while indent_stack.last().is_some_and(|&w| w > width) {
                    indent_stack.pop();
                }
                if indent_stack.last() != Some(&width) {
                    return Err(cur.err("unindent does not match any outer indentation level"));
                }
            }
            level = indent_stack.len() - 1;
            at_line_start = false;
        }

        let Some(c) = cur.peek() else { break };
        match c {
            ' ' | '\t' | '\x0c' | '\r' => {
                cur.bump();
            }
            '\\' if matches!(cur.peek_at(1), Some('\n')) => {
                cur.bump();
                cur.bump();
            }
            '\\' if cur.peek_at(1) == Some('\r') && cur.peek_at(2) == Some('\n') => {
                cur.bump();
                cur.bump();
                cur.bump();
            }
            '\n' => {
                cur.bump();
                if brackets.is_empty() {
                    if !tokens.is_empty() {
                        lines.push(LogicalLine { level, tokens: std::mem::take(&mut tokens) });
                    }
                    at_line_start = true;
                }
            }
            '#' => {
                while !matches!(cur.peek(), None | Some('\n')) {
                    cur.bump();
                }
            }
            '"' | '\'' => tokens.push(lex_string(&mut cur, 0)?),
            c if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                tokens.push(lex_number(&mut cur));
            }
            c if is_ident_start(c) => {
                let prefix_len = string_prefix_len(&cur);
                if prefix_len > 0 {
                    tokens.push(lex_string(&mut cur, prefix_len)?);
                } else {
                    tokens.push(lex_name(&mut cur));
                }
            }
            _ => {
                let Some(op) = OPERATORS.iter().find(|op| cur.starts_with(op)) else {
                    return Err(cur.err(format!("unexpected character {c:?}")));
                };
                let (line, col) = (cur.line, cur.col);
                match *op {
                    "(" | "[" | "{" => brackets.push((c, line, col)),
                    ")" | "]" | "}" => {
                        let want = match c {
                            ')' => '(',
                            ']' => '[',
                            _ => '{',
                        };
                        match brackets.pop() {
                            Some((open, _, _)) if open == want => {}
                            Some((open, _, _)) => {
                                return Err(cur.err(format!("closing {c:?} does not match {open:?}")));
                            }
                            None => return Err(cur.err(format!("unmatched {c:?}"))),
                        }
                    }
                    _ => {}
                }
                for _ in 0..op.chars().count() {
                    cur.bump();
                }
                tokens.push(Token { kind: TokenKind::Op, text: (*op).to_string(), line, end_line: line, col });
            }
        }
    }

    if let Some((open, line, col)) = brackets.pop() {
        return Err(ParseError { line, column: col, message: format!("{open:?} was never closed") });
    }
    if !tokens.is_empty() {
        lines.push(LogicalLine { level, tokens });
    }
    Ok(lines)
}

fn string_prefix_len(cur: &Cursor<'_>) -> usize {
    for len in [2usize, 1] {
        let candidate: String = (0..len).filter_map(|i| cur.peek_at(i)).collect();
        if candidate.chars().count() != len {
            continue;
        }
        let lower = candidate.to_ascii_lowercase();
        if STRING_PREFIXES.contains(&lower.as_str()) && matches!(cur.peek_at(len), Some('"') | Some('\'')) {
            return len;
        }
    }
    0
}

fn lex_string(cur: &mut Cursor<'_>, prefix_len: usize) -> Result<Token, ParseError> {
    let (line, col) = (cur.line, cur.col);
    let mut text = String::new();
    for _ in 0..prefix_len {
        text.extend(cur.bump());
    }
    let quote = cur.peek().expect("caller checked quote");
    let triple = cur.peek_at(1) == Some(quote) && cur.peek_at(2) == Some(quote);
    let qlen = if triple { 3 } else { 1 };
    for _ in 0..qlen {
        text.extend(cur.bump());
    }
    loop {
        match cur.peek() {
            None => {
                return Err(ParseError {
                    line,
                    column: col,
                    message: if triple {
                        "unterminated triple-quoted string literal".into()
                    } else {
                        "unterminated string literal".into()
                    },
                });
            }
            Some('\\') => {
                text.extend(cur.bump());
                text.extend(cur.bump());
            }
            Some('\n') if !triple => {
                return Err(ParseError { line, column: col, message: "unterminated string literal".into() });
            }
            Some(c) if c == quote => {
                if !triple {
                    text.extend(cur.bump());
                    break;
                }
                if cur.peek_at(1) == Some(quote) && cur.peek_at(2) == Some(quote) {
                    for _ in 0..3 {
                        text.extend(cur.bump());
                    }
                    break;
                }
                text.extend(cur.bump());
            }
            Some(_) => text.extend(cur.bump()),
        }
    }
    let end_line = if text.ends_with('\n') { cur.line - 1 } else { cur.line };
    Ok(Token { kind: TokenKind::Str, text, line, end_line, col })
}

fn lex_number(cur: &mut Cursor<'_>) -> Token {
    let (line, col) = (cur.line, cur.col);
    let mut text = String::new();
    let hex = cur.peek() == Some('0') && matches!(cur.peek_at(1), Some('x') | Some('X'));
    while let Some(c) = cur.peek() {
        let exp_sign = !hex
            && matches!(c, '+' | '-')
            && text.ends_with(['e', 'E'])
            && text.chars().next().is_some_and(|f| f.is_ascii_digit() || f == '.');
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exp_sign {
            text.extend(cur.bump());
        } else {
            break;
        }
    }
    Token { kind: TokenKind::Number, text, line, end_line: line, col }
}

fn lex_name(cur: &mut Cursor<'_>) -> Token {
    let (line, col) = (cur.line, cur.col);
    let mut text = String::new();
    while let Some(c) = cur.peek() {
        if is_ident_continue(c) {
            text.extend(cur.bump());
        } else {
            break;
        }
    }
    let kind = if KEYWORDS.contains(&text.as_str()) { TokenKind::Keyword } else { TokenKind::Name };
    Token { kind, text, line, end_line: line, col }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(line: &LogicalLine) -> Vec<&str> {
        line.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn joins_bracketed_lines() {
        let lines = tokenize("x = [1,\n  2]\ny = 3\n").unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(texts(&lines[0]), vec!["x", "=", "[", "1", ",", "2", "]"]);
    }

    #[test]
    fn tracks_indent_levels() {
        let lines = tokenize("def f():\n    if x:\n        pass\n    return 1\n").unwrap();
        let levels: Vec<usize> = lines.iter().map(|l| l.level).collect();
        assert_eq!(levels, vec![0, 1, 2, 1]);
    }

    #[test]
    fn strings_with_prefixes_and_triple_quotes() {
        let lines = tokenize("s = rb'a\\'b'\nd = \"\"\"x\ny\"\"\"\n").unwrap();
        assert_eq!(lines[0].tokens[2].kind, TokenKind::Str);
        assert_eq!(lines[0].tokens[2].text, "rb'a\\'b'");
        let doc = &lines[1].tokens[2];
        assert_eq!((doc.line, doc.end_line), (2, 3));
    }

    #[test]
    fn comments_and_continuations() {
        let lines = tokenize("a = 1 + \\\n    2  # trailing\n# full\n\nb = 2").unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(texts(&lines[0]), vec!["a", "=", "1", "+", "2"]);
    }

    #[test]
    fn greedy_operators_and_numbers() {
        let lines = tokenize("x **= 1.5e-3 // 0x1F").unwrap();
        assert_eq!(texts(&lines[0]), vec!["x", "**=", "1.5e-3", "//", "0x1F"]);
    }

    #[test]
    fn errors_carry_positions() {
        let err = tokenize("x = 'abc\n").unwrap_err();
        assert_eq!((err.line, err.column), (1, 5));
        let err = tokenize("x = (1,\n 2").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(tokenize("x = 1)").is_err());
        assert!(tokenize("x = $").is_err());
        assert!(tokenize("if x:\n    a\n  b\n").is_err());
    }
}
