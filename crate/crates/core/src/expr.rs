//! Analytic expression catalog.
//!
//! Callable fields in problem files are written as expression strings over a
//! fixed set of variables: `x1..xd`, `z1..zd`, `a1..ad` (and the bare names
//! `x`, `z`, `a` when `d = 1`). Supported syntax:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | constant | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Constants: `pi`, `e`. Functions: `sin cos tan sinh cosh tanh sech exp ln log
//! sqrt abs atan sign` (one argument) and `min max pow` (two arguments).
//! Exponentiation is right-associative and binds tighter than unary minus,
//! so `-x^2` is `-(x^2)`.

use std::fmt;

/// Which variable groups an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSet {
    pub x: bool,
    pub z: bool,
    pub a: bool,
}

impl VarSet {
    pub const X: VarSet = VarSet { x: true, z: false, a: false };
    pub const XZ: VarSet = VarSet { x: true, z: true, a: false };
    pub const XA: VarSet = VarSet { x: true, z: false, a: true };
    pub const A: VarSet = VarSet { x: false, z: false, a: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sech,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Atan,
    Sign,
}

impl Func1 {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func1::Sin => v.sin(),
            Func1::Cos => v.cos(),
            Func1::Tan => v.tan(),
            Func1::Sinh => v.sinh(),
            Func1::Cosh => v.cosh(),
            Func1::Tanh => v.tanh(),
            Func1::Sech => 1.0 / v.cosh(),
            Func1::Exp => v.exp(),
            Func1::Ln => v.ln(),
            Func1::Sqrt => v.sqrt(),
            Func1::Abs => v.abs(),
            Func1::Atan => v.atan(),
            Func1::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func2 {
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Powi(Box<Node>, i32),
    Powf(Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, frame: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => frame[*i],
            Node::Neg(a) => -a.eval(frame),
            Node::Add(a, b) => a.eval(frame) + b.eval(frame),
            Node::Sub(a, b) => a.eval(frame) - b.eval(frame),
            Node::Mul(a, b) => a.eval(frame) * b.eval(frame),
            Node::Div(a, b) => a.eval(frame) / b.eval(frame),
            Node::Powi(a, n) => a.eval(frame).powi(*n),
            Node::Powf(a, b) => a.eval(frame).powf(b.eval(frame)),
            Node::Call1(f, a) => f.apply(a.eval(frame)),
            Node::Call2(f, a, b) => {
                let (u, v) = (a.eval(frame), b.eval(frame));
                match f {
                    Func2::Min => u.min(v),
                    Func2::Max => u.max(v),
                    Func2::Pow => u.powf(v),
                }
            }
        }
    }

    fn is_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at column {})", self.message, self.position + 1)
    }
}

impl std::error::Error for ExprError {}

/// A compiled expression. Evaluation reads variables from a frame laid out as
/// `[x1..xd, z1..zd, a1..ad]`.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    dim: usize,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str, dim: usize, vars: VarSet) -> Result<Expr, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            dim,
            vars,
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(ExprError {
                position: tok.pos,
                message: format!("unexpected trailing input `{}`", tok.kind),
            });
        }
        Ok(Expr {
            source: source.to_string(),
            dim,
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates with an explicit variable frame of length `3 * dim`.
    pub fn eval_frame(&self, frame: &[f64]) -> f64 {
        self.root.eval(frame)
    }

    /// Evaluates at `(x, z, a)`; absent groups may be empty slices.
    pub fn eval(&self, x: &[f64], z: &[f64], a: &[f64]) -> f64 {
        let d = self.dim;
        let mut frame = [0.0f64; 24];
        if 3 * d <= frame.len() {
            frame[..x.len()].copy_from_slice(x);
            frame[d..d + z.len()].copy_from_slice(z);
            frame[2 * d..2 * d + a.len()].copy_from_slice(a);
            self.root.eval(&frame[..3 * d])
        } else {
            let mut frame = vec![0.0; 3 * d];
            frame[..x.len()].copy_from_slice(x);
            frame[d..d + z.len()].copy_from_slice(z);
            frame[2 * d..2 * d + a.len()].copy_from_slice(a);
            self.root.eval(&frame)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(v) => write!(f, "{v}"),
            TokKind::Ident(s) => write!(f, "{s}"),
            TokKind::Op(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ExprError {
                position: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(value),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token {
                kind: TokKind::Op(c),
                pos: i,
            });
            i += 1;
        } else {
            return Err(ExprError {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    vars: VarSet,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: TokKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.pos)
            .or_else(|| self.tokens.last().map(|t| t.pos + 1))
            .unwrap_or(0)
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError {
                position: self.here(),
                message: format!("expected `{op}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = fold(if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            });
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = fold(if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            });
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(fold(Node::Neg(Box::new(self.unary()?))))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            if let Some(e) = exponent.is_const() {
                if e.fract() == 0.0 && e.abs() <= 64.0 {
                    return Ok(fold(Node::Powi(Box::new(base), e as i32)));
                }
            }
            return Ok(fold(Node::Powf(Box::new(base), Box::new(exponent))));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| ExprError {
            position: self.here(),
            message: "unexpected end of expression".into(),
        })?;
        self.pos += 1;
        match tok.kind {
            TokKind::Num(v) => Ok(Node::Const(v)),
            TokKind::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            TokKind::Op(c) => Err(ExprError {
                position: tok.pos,
                message: format!("unexpected `{c}`"),
            }),
            TokKind::Ident(name) => {
                if self.peek_op() == Some('(') {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    return self.call(&name, args, tok.pos);
                }
                self.variable(&name, tok.pos)
            }
        }
    }

    fn call(&self, name: &str, mut args: Vec<Node>, pos: usize) -> Result<Node, ExprError> {
        let f1 = match name {
            "sin" => Some(Func1::Sin),
            "cos" => Some(Func1::Cos),
            "tan" => Some(Func1::Tan),
            "sinh" => Some(Func1::Sinh),
            "cosh" => Some(Func1::Cosh),
            "tanh" => Some(Func1::Tanh),
            "sech" => Some(Func1::Sech),
            "exp" => Some(Func1::Exp),
            "ln" | "log" => Some(Func1::Ln),
            "sqrt" => Some(Func1::Sqrt),
            "abs" => Some(Func1::Abs),
            "atan" => Some(Func1::Atan),
            "sign" => Some(Func1::Sign),
            _ => None,
        };
        if let Some(f) = f1 {
            if args.len() != 1 {
                return Err(ExprError {
                    position: pos,
                    message: format!("`{name}` takes one argument, got {}", args.len()),
                });
            }
            return Ok(fold(Node::Call1(f, Box::new(args.pop().unwrap()))));
        }
        let f2 = match name {
            "min" => Func2::Min,
            "max" => Func2::Max,
            "pow" => Func2::Pow,
            _ => {
                return Err(ExprError {
                    position: pos,
                    message: format!("unknown function `{name}`"),
                })
            }
        };
        if args.len() != 2 {
            return Err(ExprError {
                position: pos,
                message: format!("`{name}` takes two arguments, got {}", args.len()),
            });
        }
        let b = args.pop().unwrap();
        let a = args.pop().unwrap();
        Ok(fold(Node::Call2(f2, Box::new(a), Box::new(b))))
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Node, ExprError> {
        match name {
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            "e" => return Ok(Node::Const(std::f64::consts::E)),
            _ => {}
        }
        let (group, rest) = name.split_at(1);
        let (offset, allowed) = match group {
            "x" => (0, self.vars.x),
            "z" => (self.dim, self.vars.z),
            "a" => (2 * self.dim, self.vars.a),
            _ => {
                return Err(ExprError {
                    position: pos,
                    message: format!("unknown identifier `{name}`"),
                })
            }
        };
        let component = if rest.is_empty() {
            if self.dim != 1 {
                return Err(ExprError {
                    position: pos,
                    message: format!("bare `{name}` is only allowed when dim = 1; use `{name}1`..`{name}{}`", self.dim),
                });
            }
            0
        } else {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 && k <= self.dim => k - 1,
                _ => {
                    return Err(ExprError {
                        position: pos,
                        message: format!("unknown identifier `{name}` (dim = {})", self.dim),
                    })
                }
            }
        };
        if !allowed {
            return Err(ExprError {
                position: pos,
                message: format!("variable `{name}` is not available in this expression"),
            });
        }
        Ok(Node::Var(offset + component))
    }
}

/// Constant folding for subtrees with no variables.
fn fold(node: Node) -> Node {
    let all_const = match &node {
        Node::Neg(a) | Node::Powi(a, _) | Node::Call1(_, a) => a.is_const().is_some(),
        Node::Add(a, b)
        | Node::Sub(a, b)
        | Node::Mul(a, b)
        | Node::Div(a, b)
        | Node::Powf(a, b)
        | Node::Call2(_, a, b) => a.is_const().is_some() && b.is_const().is_some(),
        Node::Const(_) | Node::Var(_) => false,
    };
    if all_const {
        Node::Const(node.eval(&[]))
    } else {
        node
    }
}
