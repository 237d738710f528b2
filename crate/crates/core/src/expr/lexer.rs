use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Number,
    Identifier,
    Operator,
    LeftParen,
    RightParen,
    Comma,
}

/// A lexical token borrowing its text from the source string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    /// Byte offset of the first character in the source.
    pub position: usize,
}

impl Token<'_> {
    /// Numeric value of a number token.
    pub fn number(&self) -> Option<f64> {
        match self.kind {
            TokenKind::Number => self.text.parse().ok(),
            _ => None,
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token<'_>>, ExprError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i).ok_or(ExprError::Lex {
                    position: start,
                    found: src[start..].chars().next().unwrap_or('?'),
                })?;
                TokenKind::Number
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Identifier
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Operator
            }
            b'(' => {
                i += 1;
                TokenKind::LeftParen
            }
            b')' => {
                i += 1;
                TokenKind::RightParen
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            _ => {
                return Err(ExprError::Lex {
                    position: start,
                    found: src[start..].chars().next().unwrap_or('?'),
                })
            }
        };
        let text = &src[start..i];
        if kind == TokenKind::Number && !text.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
            return Err(ExprError::BadNumber {
                position: start,
                text: text.to_string(),
            });
        }
        tokens.push(Token {
            kind,
            text,
            position: start,
        });
    }
    Ok(tokens)
}

/// Scans `digits [. digits] [(e|E) [+|-] digits]`, returning the end offset.
fn scan_number(bytes: &[u8], mut i: usize) -> Option<usize> {
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - s
    };
    let mut mantissa = digits(&mut i);
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        mantissa += digits(&mut i);
    }
    if mantissa == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if digits(&mut j) > 0 {
            i = j;
        }
    }
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<(TokenKind, &str)> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn lexes_coefficient() {
        use TokenKind::*;
        assert_eq!(
            texts("1 + 0.2*sin(u)"),
            vec![
                (Number, "1"),
                (Operator, "+"),
                (Number, "0.2"),
                (Operator, "*"),
                (Identifier, "sin"),
                (LeftParen, "("),
                (Identifier, "u"),
                (RightParen, ")"),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("   \t\n").unwrap().is_empty());
    }

    #[test]
    fn scientific_literal() {
        use TokenKind::*;
        let toks = tokenize("2e-3*x").unwrap();
        assert_eq!(
            toks.iter().map(|t| (t.kind, t.text)).collect::<Vec<_>>(),
            vec![(Number, "2e-3"), (Operator, "*"), (Identifier, "x")]
        );
        assert_eq!(toks[0].number(), Some(2e-3));
    }

    #[test]
    fn exponent_without_digits_is_not_consumed() {
        // "2e" lexes as number 2 followed by identifier e
        use TokenKind::*;
        assert_eq!(texts("2e"), vec![(Number, "2"), (Identifier, "e")]);
    }

    #[test]
    fn unrecognized_character_reports_offset() {
        match tokenize("1 + $x") {
            Err(ExprError::Lex { position, found }) => {
                assert_eq!(position, 4);
                assert_eq!(found, '$');
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(tokenize("."), Err(ExprError::Lex { position: 0, .. })));
    }

    #[test]
    fn overflowing_literal_rejected() {
        assert!(matches!(tokenize("1e999"), Err(ExprError::BadNumber { .. })));
    }

    #[test]
    fn positions_increase_and_texts_cover_source() {
        let src = " min( x ,y)^ 2 - 3.5e+2/cos (t) ";
        let toks = tokenize(src).unwrap();
        for w in toks.windows(2) {
            assert!(w[0].position < w[1].position);
        }
        let joined: String = toks.iter().map(|t| t.text).collect();
        let stripped: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined, stripped);
    }
}
