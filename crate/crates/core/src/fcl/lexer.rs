use super::FclError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Colon,
    Assign,
    Semi,
    Comma,
    LParen,
    RParen,
    DotDot,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Colon => "`:`".into(),
            Tok::Assign => "`:=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FclError {
    FclError::SyntaxError {
        line,
        column,
        message: message.into(),
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, FclError> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let (line, column) = (cur.line, cur.column);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek2() == Some('/') {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '(' && cur.peek2() == Some('*') {
            cur.bump();
            cur.bump();
            loop {
                match cur.bump() {
                    Some('*') if cur.peek() == Some(')') => {
                        cur.bump();
                        break;
                    }
                    Some(_) => {}
                    None => return Err(syntax(line, column, "unterminated comment")),
                }
            }
            continue;
        }
        let is_number_start = c.is_ascii_digit()
            || (c == '-' || c == '+' || c == '.') && cur.peek2().is_some_and(|d| d.is_ascii_digit());
        if is_number_start {
            let mut text = String::new();
            if c == '-' || c == '+' {
                text.push(c);
                cur.bump();
            }
            while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                text.push(d);
                cur.bump();
            }
            if cur.peek() == Some('.') && cur.peek2().is_some_and(|d| d.is_ascii_digit()) {
                text.push('.');
                cur.bump();
                while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                    text.push(d);
                    cur.bump();
                }
            }
            if matches!(cur.peek(), Some('e' | 'E')) {
                let mut probe = cur.chars.clone();
                probe.next();
                let next = probe.next();
                let after = probe.next();
                let exp_ok = next.is_some_and(|d| d.is_ascii_digit())
                    || (matches!(next, Some('+' | '-')) && after.is_some_and(|d| d.is_ascii_digit()));
                if exp_ok {
                    text.push('e');
                    cur.bump();
                    if let Some(sign @ ('+' | '-')) = cur.peek() {
                        text.push(sign);
                        cur.bump();
                    }
                    while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
                        text.push(d);
                        cur.bump();
                    }
                }
            }
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(line, column, format!("bad number `{text}`")))?;
            if !value.is_finite() {
                return Err(syntax(line, column, format!("number `{text}` out of range")));
            }
            out.push(Spanned {
                tok: Tok::Number(value),
                line,
                column,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(d) = cur.peek().filter(|d| d.is_ascii_alphanumeric() || *d == '_') {
                ident.push(d);
                cur.bump();
            }
            out.push(Spanned {
                tok: Tok::Ident(ident),
                line,
                column,
            });
            continue;
        }
        cur.bump();
        let tok = match c {
            ':' if cur.peek() == Some('=') => {
                cur.bump();
                Tok::Assign
            }
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '.' if cur.peek() == Some('.') => {
                cur.bump();
                Tok::DotDot
            }
            other => return Err(syntax(line, column, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned { tok, line, column });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line: cur.line,
        column: cur.column,
    });
    Ok(out)
}
