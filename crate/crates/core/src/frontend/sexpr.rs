//! Tokenizer and s-expression reader for the text format.

use std::fmt;

use super::error::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String, Pos),
    Str(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::Str(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a, _) => Some(a),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            _ => None,
        }
    }

    /// The leading keyword of a list, e.g. `func` for `(func ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|items| items.first()).and_then(SExpr::as_atom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Atom(String),
    Str(String),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.chars().peekable(), line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn syntax(&self, pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError::new(ParseErrorKind::Syntax, pos, msg)
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.chars.peek().copied() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    let start = self.pos();
                    self.bump();
                    if self.chars.peek() != Some(&';') {
                        return Err(self.syntax(start, "stray ';'"));
                    }
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('(') => {
                    // block comments `(; ... ;)` nest
                    let mut look = self.chars.clone();
                    look.next();
                    if look.peek() != Some(&';') {
                        return Ok(());
                    }
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    let mut depth = 1;
                    while depth > 0 {
                        match self.bump() {
                            None => return Err(self.syntax(start, "unterminated block comment")),
                            Some(';') if self.chars.peek() == Some(&')') => {
                                self.bump();
                                depth -= 1;
                            }
                            Some('(') if self.chars.peek() == Some(&';') => {
                                self.bump();
                                depth += 1;
                            }
                            Some(_) => {}
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<(Token, Pos)>, ParseError> {
        self.skip_trivia()?;
        let pos = self.pos();
        let Some(c) = self.chars.peek().copied() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.bump();
                Token::Open
            }
            ')' => {
                self.bump();
                Token::Close
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.syntax(pos, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('\\') => s.push('\\'),
                            Some('"') => s.push('"'),
                            Some('\'') => s.push('\''),
                            other => return Err(self.syntax(pos, format!("unsupported string escape {other:?}"))),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                Token::Str(s)
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = self.chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' || ch == ';' {
                        break;
                    }
                    s.push(ch);
                    self.bump();
                }
                Token::Atom(s)
            }
        };
        Ok(Some((tok, pos)))
    }
}

/// Reads every top-level s-expression in `src`.
pub fn read_all(src: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut lexer = Lexer::new(src);
    let mut stack: Vec<(Vec<SExpr>, Pos)> = Vec::new();
    let mut top = Vec::new();
    while let Some((tok, pos)) = lexer.next_token()? {
        let item = match tok {
            Token::Open => {
                stack.push((Vec::new(), pos));
                continue;
            }
            Token::Close => match stack.pop() {
                Some((items, open)) => SExpr::List(items, open),
                None => return Err(lexer.syntax(pos, "unbalanced ')'")),
            },
            Token::Atom(a) => SExpr::Atom(a, pos),
            Token::Str(s) => SExpr::Str(s, pos),
        };
        match stack.last_mut() {
            Some((items, _)) => items.push(item),
            None => top.push(item),
        }
    }
    if let Some((_, open)) = stack.pop() {
        return Err(lexer.syntax(open, "unclosed '('"));
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_and_comments() {
        let src = "(module ;; line\n (; block (; nested ;) ;) (func $f))";
        let top = read_all(src).unwrap();
        assert_eq!(top.len(), 1);
        let items = top[0].as_list().unwrap();
        assert_eq!(items[0].as_atom(), Some("module"));
        assert_eq!(items[1].head(), Some("func"));
        assert_eq!(items[1].pos(), Pos { line: 2, col: 27 });
    }

    #[test]
    fn unbalanced() {
        assert!(read_all("(module").is_err());
        assert!(read_all("module)").is_err());
    }

    #[test]
    fn strings() {
        let top = read_all(r#"("a\"b")"#).unwrap();
        assert_eq!(top[0].as_list().unwrap()[0], SExpr::Str("a\"b".into(), Pos { line: 1, col: 2 }));
    }
}
