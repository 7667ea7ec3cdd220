//! Tokenizer for the Cypher subset.

use super::{Diagnostic, Pos};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    /// `quoted` identifiers (backticks) never act as keywords.
    Ident { name: String, quoted: bool },
    Int(i64),
    Float(f64),
    Str(String),
    Param(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const SYMBOLS: [&str; 23] = [
    "<>", "!=", "<=", ">=", "..", "(", ")", "[", "]", "{", "}", ":", ",", ".", "-", ">", "<", "=", "+", "*", "/", "%", "|",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() || c == ';' && chars[i + 1..].iter().all(|c| c.is_whitespace()) {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let Some(end) = (i + 2..chars.len().saturating_sub(1)).find(|&j| chars[j] == '*' && chars[j + 1] == '/') else {
                return Err(Diagnostic::at(pos, "unterminated comment"));
            };
            let n = end + 2 - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let mut float = false;
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                float = true;
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    float = true;
                    j = k;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let text: String = chars[start..j].iter().collect();
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| Diagnostic::at(pos, format!("bad number {text}")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| Diagnostic::at(pos, format!("integer {text} out of range")))?)
            };
            out.push(Token { tok, pos });
            advance(&mut i, &mut line, &mut col, j - start);
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push(Token { tok: Tok::Ident { name: chars[start..j].iter().collect(), quoted: false }, pos });
            advance(&mut i, &mut line, &mut col, j - start);
            continue;
        }
        if c == '`' {
            let Some(end) = (i + 1..chars.len()).find(|&j| chars[j] == '`') else {
                return Err(Diagnostic::at(pos, "unterminated quoted identifier"));
            };
            out.push(Token { tok: Tok::Ident { name: chars[i + 1..end].iter().collect(), quoted: true }, pos });
            let n = end + 1 - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        if c == '$' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            if j == i + 1 {
                return Err(Diagnostic::at(pos, "expected parameter name after '$'"));
            }
            out.push(Token { tok: Tok::Param(chars[i + 1..j].iter().collect()), pos });
            let n = j - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        if c == '"' || c == '\'' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None => return Err(Diagnostic::at(pos, "unterminated string literal")),
                    Some(&q) if q == c => break,
                    Some('\\') => {
                        let esc = chars.get(j + 1).ok_or_else(|| Diagnostic::at(pos, "unterminated string literal"))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => *other,
                        });
                        j += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        j += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            let n = j + 1 - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                out.push(Token { tok: Tok::Sym(sym), pos });
                advance(&mut i, &mut line, &mut col, sym.len());
            }
            None => return Err(Diagnostic::at(pos, format!("unexpected character '{c}'"))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("MATCH (a)-[:T*1..3]->(b)\n  WHERE a.x <> 2.5 /* c */ RETURN $p").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(kinds.contains(&&Tok::Int(1)));
        assert!(kinds.contains(&&Tok::Sym("..")));
        assert!(kinds.contains(&&Tok::Float(2.5)));
        assert!(kinds.contains(&&Tok::Param("p".into())));
        let where_tok = toks.iter().find(|t| matches!(&t.tok, Tok::Ident { name, .. } if name == "WHERE")).unwrap();
        assert_eq!(where_tok.pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn bad_input() {
        assert_eq!(tokenize("RETURN 'abc").unwrap_err().col, 8);
        assert_eq!(tokenize("RETURN #").unwrap_err().message, "unexpected character '#'");
    }
}
