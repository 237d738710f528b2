//! Pratt parser over the token stream.

use super::{BinOp, Expr, ExprError, Func, Token, TokenKind, Var};

const UNARY_MINUS_BP: u8 = 30;

fn infix_binding_power(op: &str) -> Option<(BinOp, u8, u8)> {
    Some(match op {
        "+" => (BinOp::Add, 10, 11),
        "-" => (BinOp::Sub, 10, 11),
        "*" => (BinOp::Mul, 20, 21),
        "/" => (BinOp::Div, 20, 21),
        "^" => (BinOp::Pow, 40, 39),
        _ => return None,
    })
}

struct Parser<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    src_len: usize,
}

impl<'a> Parser<'_, 'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.src_len, |t| t.position)
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: self.here(),
            message: message.into(),
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token<'a>, ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => Ok(self.next().unwrap()),
            Some(t) => Err(self.syntax(format!("expected {what}, found '{}'", t.text))),
            None => Err(self.syntax(format!("expected {what}, found end of input"))),
        }
    }

    fn expression(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let Some(tok) = self.peek() else { break };
            if tok.kind != TokenKind::Operator {
                break;
            }
            let (op, lbp, rbp) = infix_binding_power(tok.text).expect("lexer emits known operators");
            if lbp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expression(rbp)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.next() else {
            self.pos -= 1;
            return Err(self.syntax("unexpected end of input"));
        };
        match tok.kind {
            TokenKind::Number => Ok(Expr::Const(tok.number().expect("lexer validated literal"))),
            TokenKind::Operator if tok.text == "-" => {
                let operand = self.expression(UNARY_MINUS_BP)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            TokenKind::LeftParen => {
                let inner = self.expression(0)?;
                self.expect(TokenKind::RightParen, "')'")?;
                Ok(inner)
            }
            TokenKind::Identifier => {
                if matches!(self.peek(), Some(t) if t.kind == TokenKind::LeftParen) {
                    self.call(tok)
                } else {
                    Var::from_name(tok.text).map(Expr::Var).ok_or_else(|| {
                        ExprError::UnknownVariable {
                            name: tok.text.to_string(),
                            position: tok.position,
                        }
                    })
                }
            }
            _ => {
                self.pos -= 1;
                Err(self.syntax(format!("unexpected '{}'", tok.text)))
            }
        }
    }

    fn call(&mut self, name: Token<'a>) -> Result<Expr, ExprError> {
        let func = Func::from_name(name.text).ok_or_else(|| ExprError::UnknownFunction {
            name: name.text.to_string(),
            position: name.position,
        })?;
        self.expect(TokenKind::LeftParen, "'('")?;
        let mut args = vec![self.expression(0)?];
        while matches!(self.peek(), Some(t) if t.kind == TokenKind::Comma) {
            self.next();
            args.push(self.expression(0)?);
        }
        self.expect(TokenKind::RightParen, "')' or ','")?;
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                name: name.text.to_string(),
                position: name.position,
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses a complete token stream. `src_len` locates end-of-input errors.
pub fn parse_tokens(tokens: &[Token<'_>], src_len: usize) -> Result<Expr, ExprError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        src_len,
    };
    let e = p.expression(0)?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            position: t.position,
            message: format!("unexpected trailing '{}'", t.text),
        });
    }
    Ok(e)
}
