//! Coefficient expression language.
//!
//! ```text
//! expr := term (('+' | '-') term)*
//! term := unary (('*' | '/') unary)*
//! unary := '-' unary | atom
//! atom := number | 'x' | 't' | '(' expr ')'
//!       | 'ind' '(' expr cmp expr ')'
//!       | ('sin' | 'cos' | 'tanh' | 'abs') '(' expr ')'
//! cmp  := '>' | '>=' | '==' | '<' | '<='
//! ```
//!
//! `x` is the left limit `X_{t-}` of the solution and `t` the current time,
//! so every expression is a predictable coefficient by construction.
//! A minus sign in front of a literal folds into the literal; in front of
//! anything else it becomes `0 - e`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Gt,
    Ge,
    Eq,
    Lt,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    T,
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Ind(CmpOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        Ok(match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a / b
            }
        })
    }
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
        }
    }
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
            Func::Abs => v.abs(),
        }
    }
}

// ---------------------------------------------------------------------------
// printing

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f, 0, false)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>, min_prec: u8, right: bool) -> fmt::Result {
    match e {
        Expr::Num(v) => {
            if v.is_sign_negative() && min_prec > 0 {
                write!(f, "({v})")
            } else {
                write!(f, "{v}")
            }
        }
        Expr::X => f.write_str("x"),
        Expr::T => f.write_str("t"),
        Expr::Bin(op, a, b) => {
            let p = op.precedence();
            let paren = p < min_prec || (p == min_prec && right);
            if paren {
                f.write_str("(")?;
            }
            write_expr(a, f, p, false)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, f, p, true)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::Ind(op, a, b) => {
            f.write_str("ind(")?;
            write_expr(a, f, 0, false)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, f, 0, false)?;
            f.write_str(")")
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, f, 0, false)?;
            f.write_str(")")
        }
    }
}

// ---------------------------------------------------------------------------
// lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(BinOp),
    Cmp(CmpOp),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = |tok| Token { tok, column };
        match c {
            '+' => out.push(single(Tok::Op(BinOp::Add))),
            '-' => out.push(single(Tok::Op(BinOp::Sub))),
            '*' => out.push(single(Tok::Op(BinOp::Mul))),
            '/' => out.push(single(Tok::Op(BinOp::Div))),
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            '>' | '<' | '=' => {
                let eq = chars.get(i + 1) == Some(&'=');
                let op = match (c, eq) {
                    ('>', true) => CmpOp::Ge,
                    ('>', false) => CmpOp::Gt,
                    ('<', true) => CmpOp::Le,
                    ('<', false) => CmpOp::Lt,
                    ('=', true) => CmpOp::Eq,
                    _ => {
                        return Err(ParseError { column, message: "expected '=='".into() });
                    }
                };
                out.push(single(Tok::Cmp(op)));
                if eq {
                    i += 1;
                }
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<f64>().map_err(|_| ParseError {
                    column,
                    message: format!("invalid number '{text}'"),
                })?;
                out.push(Token { tok: Tok::Num(v), column });
                continue;
            }
            _ if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), column });
                continue;
            }
            _ => {
                return Err(ParseError { column, message: format!("unexpected character '{c}'") });
            }
        }
        i += 1;
    }
    out.push(Token { tok: Tok::End, column: chars.len() + 1 });
    Ok(out)
}

// ---------------------------------------------------------------------------
// parsing

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: self.peek().column, message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ (BinOp::Add | BinOp::Sub)) = self.peek().tok {
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ (BinOp::Mul | BinOp::Div)) = self.peek().tok {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Op(BinOp::Sub) {
            self.bump();
            if let Tok::Num(v) = self.peek().tok {
                self.bump();
                return Ok(Expr::Num(-v));
            }
            let inner = self.unary()?;
            return Ok(Expr::Bin(BinOp::Sub, Box::new(Expr::Num(0.0)), Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "x" => Ok(Expr::X),
                    "t" => Ok(Expr::T),
                    "ind" => {
                        self.expect(Tok::LParen, "'(' after ind")?;
                        let a = self.expr()?;
                        let op = match self.peek().tok {
                            Tok::Cmp(op) => op,
                            _ => return self.fail("expected comparison operator"),
                        };
                        self.bump();
                        let b = self.expr()?;
                        self.expect(Tok::RParen, "')'")?;
                        Ok(Expr::Ind(op, Box::new(a), Box::new(b)))
                    }
                    "sin" | "cos" | "tanh" | "abs" => {
                        let func = match name.as_str() {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            "tanh" => Func::Tanh,
                            _ => Func::Abs,
                        };
                        self.expect(Tok::LParen, &format!("'(' after {name}"))?;
                        let a = self.expr()?;
                        self.expect(Tok::RParen, "')'")?;
                        Ok(Expr::Call(func, Box::new(a)))
                    }
                    _ => Err(ParseError {
                        column: tok.column,
                        message: format!("unknown identifier '{name}'"),
                    }),
                }
            }
            Tok::End => self.fail("unexpected end of input, expected expression"),
            _ => self.fail("expected expression"),
        }
    }
}

pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        return p.fail("unexpected trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// compiled evaluation

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Push(f64),
    X,
    T,
    Bin(BinOp),
    Cmp(CmpOp),
    Call(Func),
}

const STACK: usize = 32;

/// An expression compiled to postfix form for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
    source: Expr,
}

impl Program {
    pub fn compile(expr: &Expr) -> Self {
        let mut ops = Vec::new();
        emit(expr, &mut ops);
        let mut d: usize = 0;
        let mut depth = 0;
        for op in &ops {
            match op {
                Op::Push(_) | Op::X | Op::T => d += 1,
                Op::Bin(_) | Op::Cmp(_) => d -= 1,
                Op::Call(_) => {}
            }
            depth = depth.max(d);
        }
        Self { ops, depth, source: expr.clone() }
    }

    pub fn expr(&self) -> &Expr {
        &self.source
    }

    /// Value when the program reads neither `x` nor `t`.
    pub fn constant_value(&self) -> Option<f64> {
        if self.ops.iter().any(|o| matches!(o, Op::X | Op::T)) {
            return None;
        }
        self.eval(0.0, 0.0).ok()
    }

    pub fn reads_time(&self) -> bool {
        self.ops.iter().any(|o| matches!(o, Op::T))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        if self.depth <= STACK {
            let mut stack = [0.0f64; STACK];
            run(&self.ops, &mut stack, x, t)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            run(&self.ops, &mut stack, x, t)
        }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Num(v) => ops.push(Op::Push(*v)),
        Expr::X => ops.push(Op::X),
        Expr::T => ops.push(Op::T),
        Expr::Bin(op, a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Bin(*op));
        }
        Expr::Ind(op, a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Cmp(*op));
        }
        Expr::Call(f, a) => {
            emit(a, ops);
            ops.push(Op::Call(*f));
        }
    }
}

fn run(ops: &[Op], stack: &mut [f64], x: f64, t: f64) -> Result<f64, EvalError> {
    let mut sp = 0;
    for op in ops {
        match *op {
            Op::Push(v) => {
                stack[sp] = v;
                sp += 1;
            }
            Op::X => {
                stack[sp] = x;
                sp += 1;
            }
            Op::T => {
                stack[sp] = t;
                sp += 1;
            }
            Op::Bin(b) => {
                sp -= 1;
                stack[sp - 1] = b.apply(stack[sp - 1], stack[sp])?;
            }
            Op::Cmp(c) => {
                sp -= 1;
                stack[sp - 1] = if c.holds(stack[sp - 1], stack[sp]) { 1.0 } else { 0.0 };
            }
            Op::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1]),
        }
    }
    let v = stack[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    #[test]
    fn literals_and_vars() {
        assert_eq!(parse_expression("1").unwrap(), Expr::Num(1.0));
        assert_eq!(parse_expression("-2.5e-1").unwrap(), Expr::Num(-0.25));
        assert_eq!(parse_expression(" x ").unwrap(), Expr::X);
    }

    #[test]
    fn indicator_sigma() {
        assert_eq!(
            parse_expression("ind(x > 0)").unwrap(),
            Expr::Ind(CmpOp::Gt, Box::new(Expr::X), num(0.0))
        );
    }

    #[test]
    fn precedence_and_indicator() {
        let e = parse_expression("2*x + ind(x == 0)").unwrap();
        let expect = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Bin(BinOp::Mul, num(2.0), Box::new(Expr::X))),
            Box::new(Expr::Ind(CmpOp::Eq, Box::new(Expr::X), num(0.0))),
        );
        assert_eq!(e, expect);
    }

    #[test]
    fn left_associative() {
        let e = parse_expression("1 - 2 - 3").unwrap();
        assert_eq!(
            e,
            Expr::Bin(BinOp::Sub, Box::new(Expr::Bin(BinOp::Sub, num(1.0), num(2.0))), num(3.0))
        );
        assert_eq!(Program::compile(&e).eval(0.0, 0.0).unwrap(), -4.0);
        let e = parse_expression("8 / 4 / 2").unwrap();
        assert_eq!(Program::compile(&e).eval(0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn syntax_error_column() {
        let err = parse_expression("ind(x >)").unwrap_err();
        assert_eq!(err.column, 8, "{err}");
        assert!(parse_expression("2 +").is_err());
        assert!(parse_expression("foo(1)").is_err());
        assert_eq!(parse_expression("x = 1").unwrap_err().column, 3);
        assert!(parse_expression("(x").is_err());
        assert!(parse_expression("x x").is_err());
    }

    #[test]
    fn division_by_zero_is_runtime() {
        let p = Program::compile(&parse_expression("1 / x").unwrap());
        assert_eq!(p.eval(0.0, 0.0), Err(EvalError::DivisionByZero));
        assert_eq!(p.eval(2.0, 0.0), Ok(0.5));
    }

    #[test]
    fn functions() {
        let p = Program::compile(&parse_expression("abs(sin(x)) + tanh(t) * cos(0)").unwrap());
        let v = p.eval(-1.0, 0.5).unwrap();
        assert!((v - (1.0f64.sin() + 0.5f64.tanh())).abs() < 1e-15);
        assert_eq!(Program::compile(&parse_expression("3 * 2").unwrap()).constant_value(), Some(6.0));
        assert_eq!(Program::compile(&Expr::X).constant_value(), None);
    }

    #[test]
    fn printing() {
        for src in ["1 - (2 - 3)", "(1 + x) * t", "ind(x >= -1) / (2 * x)", "sin(x - -1)", "0 - x"] {
            let e = parse_expression(src).unwrap();
            assert_eq!(parse_expression(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
        assert_eq!(parse_expression("1-(2-3)").unwrap().to_string(), "1 - (2 - 3)");
    }

    /// Direct recursive evaluation, independent of the compiled form.
    fn walk(e: &Expr, x: f64, t: f64) -> Result<f64, EvalError> {
        match e {
            Expr::Num(v) => Ok(*v),
            Expr::X => Ok(x),
            Expr::T => Ok(t),
            Expr::Bin(op, a, b) => {
                let (a, b) = (walk(a, x, t)?, walk(b, x, t)?);
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div if b == 0.0 => Err(EvalError::DivisionByZero),
                    BinOp::Div => Ok(a / b),
                }
            }
            Expr::Ind(op, a, b) => {
                let (a, b) = (walk(a, x, t)?, walk(b, x, t)?);
                let holds = match op {
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq => a == b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                };
                Ok(holds as u8 as f64)
            }
            Expr::Call(f, a) => {
                let v = walk(a, x, t)?;
                Ok(match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tanh => v.tanh(),
                    Func::Abs => v.abs(),
                })
            }
        }
    }

    pub(crate) fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0..5.0f64).prop_map(Expr::Num),
            (0u8..4).prop_map(|k| Expr::Num(k as f64)),
            Just(Expr::X),
            Just(Expr::T),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let bin = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
            let cmp = prop_oneof![
                Just(CmpOp::Gt),
                Just(CmpOp::Ge),
                Just(CmpOp::Eq),
                Just(CmpOp::Lt),
                Just(CmpOp::Le)
            ];
            let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Tanh), Just(Func::Abs)];
            prop_oneof![
                (bin, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Bin(o, Box::new(a), Box::new(b))),
                (cmp, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Ind(o, Box::new(a), Box::new(b))),
                (func, inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse_expression(&printed).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn compiled_matches_tree_walk(e in arb_expr(), x in -3.0..3.0f64, t in 0.0..2.0f64) {
            let expected = walk(&e, x, t).and_then(|v| if v.is_finite() { Ok(v) } else { Err(EvalError::NonFinite) });
            let got = Program::compile(&e).eval(x, t);
            match (expected, got) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }
}
