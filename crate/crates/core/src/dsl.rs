//! Expression DSL used by state-chart guards and auxiliary-reward conditions.
//!
//! Expressions are parsed from plain text, validated against a function
//! catalog before anything runs, and then evaluated with no possibility of a
//! runtime fault: every operator is total (division by zero yields 0) and
//! every callable name is checked up front.
//!
//! # Grammar
//!
//! ```text
//! expr     := or
//! or       := and ( "or" and )*
//! and      := unary ( "and" unary )*
//! unary    := "not" unary | cmp
//! cmp      := sum ( ("<" | "<=" | ">" | ">=" | "==" | "=" | "!=") sum )?
//! sum      := term ( ("+" | "-") term )*
//! term     := factor ( ("*" | "/") factor )*
//! factor   := "-" factor | primary
//! primary  := NUMBER | "true" | "false"
//!           | IDENT "(" args? ")"          # query / builtin call
//!           | IDENT                        # bare state name (predicate arg only)
//!           | "(" expr ")"
//! args     := expr ( "," expr )*
//! ```
//!
//! Callables come in three groups:
//! * scene queries, all nullary (`speed()`, `on_ramp()`, ...), supplied by the
//!   simulator catalog for the scene kind being validated against;
//! * numeric builtins `round(x)`, `abs(x)`, `min(a,b)`, `max(a,b)`;
//! * history predicates `in_state(q)`, `visited(q)`, `visits(q)`, `cycles(q)`
//!   plus the nullary `action()`, available only where the validation context
//!   provides them (auxiliary-reward conditions, not guards).

use std::fmt;

use thiserror::Error;

/// Value type of an expression or callable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Num => write!(f, "num"),
            Ty::Bool => write!(f, "bool"),
        }
    }
}

/// Runtime value. Queries and literals produce these; evaluation never fails
/// on a validated expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn ty(&self) -> Ty {
        match self {
            Value::Num(_) => Ty::Num,
            Value::Bool(_) => Ty::Bool,
        }
    }

    /// Numeric view; `Bool` maps to 0/1 (only reachable through `==`/`!=`,
    /// which the type checker restricts to same-type operands).
    pub fn num(&self) -> f64 {
        match self {
            Value::Num(x) => *x,
            Value::Bool(b) => {
                if *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn boolean(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Num(x) => *x != 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    /// Bare identifier; legal only as the argument of a history predicate.
    Sym(String),
    Call { name: String, args: Vec<Expr> },
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

/// A single validation defect. Validation reports every defect it finds, not
/// just the first one, so synthesis retries can show the model the full list.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Defect {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("query `{0}` is not defined for this scene kind")]
    QueryUnavailable(String),
    #[error("history predicate `{0}` is not allowed in this context")]
    PredicateUnavailable(String),
    #[error("unknown state `{state}` referenced by `{func}`")]
    UnknownState { func: String, state: String },
    #[error("`{func}` expects {expected} argument(s), got {got}")]
    Arity {
        func: String,
        expected: usize,
        got: usize,
    },
    #[error("`{func}` argument {index} must be {expected}")]
    ArgType {
        func: String,
        index: usize,
        expected: Ty,
    },
    #[error("operator `{op}` expects {expected} operands")]
    OperandType { op: String, expected: Ty },
    #[error("`==`/`!=` operands must have matching types")]
    MixedEquality,
    #[error("bare identifier `{0}` is only valid as a history-predicate argument")]
    StrayIdentifier(String),
    #[error("expression must evaluate to {expected}, found {found}")]
    ResultType { expected: Ty, found: Ty },
}

/// Validation failure: the full defect list for one expression.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid expression: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
pub struct DefectList(pub Vec<Defect>);

/// Signature of a nullary scene query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuerySig {
    pub name: &'static str,
    pub ret: Ty,
}

/// What an expression is allowed to call during validation.
pub struct ValidationCtx<'a> {
    /// Scene queries visible to this expression.
    pub queries: &'a [QuerySig],
    /// Abstract-state names; `None` forbids history predicates entirely.
    pub states: Option<&'a [String]>,
    /// Whether the nullary `action()` is visible (auxiliary conditions only).
    pub allow_action: bool,
}

const HISTORY_PREDICATES: [(&str, Ty); 4] = [
    ("in_state", Ty::Bool),
    ("visited", Ty::Bool),
    ("visits", Ty::Num),
    ("cycles", Ty::Num),
];

fn history_predicate(name: &str) -> Option<Ty> {
    HISTORY_PREDICATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
}

/// Hosts answer validated query calls. Implemented by the simulator.
pub trait QueryHost {
    fn query(&self, name: &str) -> Value;
}

/// Hosts answer validated history-predicate calls.
pub trait HistoryHost {
    fn predicate(&self, name: &str, state: &str) -> Value;
}

/// Evaluation context. `history`/`action` are present only where the
/// validation context allowed the corresponding callables.
pub struct EvalCtx<'a> {
    pub queries: &'a dyn QueryHost,
    pub history: Option<&'a dyn HistoryHost>,
    pub action: Option<f64>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    And,
    Or,
    Not,
    True,
    False,
}

fn lex(src: &str) -> Result<Vec<Tok>, Defect> {
    let mut toks = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::Le);
                    i += 2;
                } else {
                    toks.push(Tok::Lt);
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::Ge);
                    i += 2;
                } else {
                    toks.push(Tok::Gt);
                    i += 1;
                }
            }
            '=' => {
                // `=` and `==` both mean equality.
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::EqEq);
                    i += 2;
                } else {
                    toks.push(Tok::EqEq);
                    i += 1;
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    toks.push(Tok::Ne);
                    i += 2;
                } else {
                    return Err(Defect::Parse("stray `!`; use `not`".into()));
                }
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
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
                let value: f64 = text
                    .parse()
                    .map_err(|_| Defect::Parse(format!("bad number `{text}`")))?;
                toks.push(Tok::Num(value));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &src[start..i];
                toks.push(match word {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                });
            }
            other => {
                return Err(Defect::Parse(format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), Defect> {
        match self.bump() {
            Some(t) if &t == tok => Ok(()),
            Some(t) => Err(Defect::Parse(format!("expected {what}, found {t:?}"))),
            None => Err(Defect::Parse(format!("expected {what}, found end of input"))),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, Defect> {
        let mut lhs = self.and_expr()?;
        while matches!(self.peek(), Some(Tok::Or)) {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::Bin {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, Defect> {
        let mut lhs = self.not_expr()?;
        while matches!(self.peek(), Some(Tok::And)) {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::Bin {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, Defect> {
        if matches!(self.peek(), Some(Tok::Not)) {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, Defect> {
        let lhs = self.sum_expr()?;
        let op = match self.peek() {
            Some(Tok::Lt) => Some(BinOp::Lt),
            Some(Tok::Le) => Some(BinOp::Le),
            Some(Tok::Gt) => Some(BinOp::Gt),
            Some(Tok::Ge) => Some(BinOp::Ge),
            Some(Tok::EqEq) => Some(BinOp::Eq),
            Some(Tok::Ne) => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let rhs = self.sum_expr()?;
            return Ok(Expr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        Ok(lhs)
    }

    fn sum_expr(&mut self) -> Result<Expr, Defect> {
        let mut lhs = self.term_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term_expr()?;
            lhs = Expr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn term_expr(&mut self) -> Result<Expr, Defect> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, Defect> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, Defect> {
        match self.bump() {
            Some(Tok::Num(x)) => Ok(Expr::Num(x)),
            Some(Tok::True) => Ok(Expr::Bool(true)),
            Some(Tok::False) => Ok(Expr::Bool(false)),
            Some(Tok::LParen) => {
                let inner = self.or_expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.bump();
                    let mut args = Vec::new();
                    if !matches!(self.peek(), Some(Tok::RParen)) {
                        loop {
                            args.push(self.or_expr()?);
                            if matches!(self.peek(), Some(Tok::Comma)) {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    Ok(Expr::Call { name, args })
                } else {
                    Ok(Expr::Sym(name))
                }
            }
            Some(t) => Err(Defect::Parse(format!("unexpected token {t:?}"))),
            None => Err(Defect::Parse("unexpected end of input".into())),
        }
    }
}

/// Parse source text into an expression tree (no validation beyond syntax).
pub fn parse(src: &str) -> Result<Expr, Defect> {
    let toks = lex(src)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.or_expr()?;
    if parser.pos != parser.toks.len() {
        return Err(Defect::Parse(format!(
            "trailing input after expression (token {:?})",
            parser.toks[parser.pos]
        )));
    }
    Ok(expr)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Type-check `expr` against the context, collecting every defect found.
/// Returns the expression's result type when it is coherent enough to have
/// one.
fn check(expr: &Expr, ctx: &ValidationCtx<'_>, defects: &mut Vec<Defect>) -> Option<Ty> {
    match expr {
        Expr::Num(_) => Some(Ty::Num),
        Expr::Bool(_) => Some(Ty::Bool),
        Expr::Sym(name) => {
            defects.push(Defect::StrayIdentifier(name.clone()));
            None
        }
        Expr::Neg(inner) => {
            if let Some(ty) = check(inner, ctx, defects) {
                if ty != Ty::Num {
                    defects.push(Defect::OperandType {
                        op: "-".into(),
                        expected: Ty::Num,
                    });
                }
            }
            Some(Ty::Num)
        }
        Expr::Not(inner) => {
            if let Some(ty) = check(inner, ctx, defects) {
                if ty != Ty::Bool {
                    defects.push(Defect::OperandType {
                        op: "not".into(),
                        expected: Ty::Bool,
                    });
                }
            }
            Some(Ty::Bool)
        }
        Expr::Bin { op, lhs, rhs } => {
            let lt = check(lhs, ctx, defects);
            let rt = check(rhs, ctx, defects);
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    for ty in [lt, rt].into_iter().flatten() {
                        if ty != Ty::Num {
                            defects.push(Defect::OperandType {
                                op: op.symbol().into(),
                                expected: Ty::Num,
                            });
                        }
                    }
                    Some(Ty::Num)
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    for ty in [lt, rt].into_iter().flatten() {
                        if ty != Ty::Num {
                            defects.push(Defect::OperandType {
                                op: op.symbol().into(),
                                expected: Ty::Num,
                            });
                        }
                    }
                    Some(Ty::Bool)
                }
                BinOp::Eq | BinOp::Ne => {
                    if let (Some(a), Some(b)) = (lt, rt) {
                        if a != b {
                            defects.push(Defect::MixedEquality);
                        }
                    }
                    Some(Ty::Bool)
                }
                BinOp::And | BinOp::Or => {
                    for ty in [lt, rt].into_iter().flatten() {
                        if ty != Ty::Bool {
                            defects.push(Defect::OperandType {
                                op: op.symbol().into(),
                                expected: Ty::Bool,
                            });
                        }
                    }
                    Some(Ty::Bool)
                }
            }
        }
        Expr::Call { name, args } => check_call(name, args, ctx, defects),
    }
}

fn check_call(
    name: &str,
    args: &[Expr],
    ctx: &ValidationCtx<'_>,
    defects: &mut Vec<Defect>,
) -> Option<Ty> {
    // Numeric builtins.
    let builtin: Option<(usize, Ty)> = match name {
        "round" | "abs" => Some((1, Ty::Num)),
        "min" | "max" => Some((2, Ty::Num)),
        _ => None,
    };
    if let Some((arity, ret)) = builtin {
        if args.len() != arity {
            defects.push(Defect::Arity {
                func: name.into(),
                expected: arity,
                got: args.len(),
            });
        }
        for (i, arg) in args.iter().enumerate() {
            if let Some(ty) = check(arg, ctx, defects) {
                if ty != Ty::Num {
                    defects.push(Defect::ArgType {
                        func: name.into(),
                        index: i,
                        expected: Ty::Num,
                    });
                }
            }
        }
        return Some(ret);
    }

    // History predicates: single bare-state argument.
    if let Some(ret) = history_predicate(name) {
        match ctx.states {
            None => defects.push(Defect::PredicateUnavailable(name.into())),
            Some(states) => {
                if args.len() != 1 {
                    defects.push(Defect::Arity {
                        func: name.into(),
                        expected: 1,
                        got: args.len(),
                    });
                } else if let Expr::Sym(state) = &args[0] {
                    if !states.iter().any(|s| s == state) {
                        defects.push(Defect::UnknownState {
                            func: name.into(),
                            state: state.clone(),
                        });
                    }
                } else {
                    defects.push(Defect::ArgType {
                        func: name.into(),
                        index: 0,
                        expected: Ty::Bool,
                    });
                }
            }
        }
        return Some(ret);
    }

    if name == "action" {
        if !ctx.allow_action {
            defects.push(Defect::PredicateUnavailable(name.into()));
        }
        if !args.is_empty() {
            defects.push(Defect::Arity {
                func: name.into(),
                expected: 0,
                got: args.len(),
            });
        }
        return Some(Ty::Num);
    }

    // Scene queries (all nullary).
    if let Some(sig) = ctx.queries.iter().find(|q| q.name == name) {
        if !args.is_empty() {
            defects.push(Defect::Arity {
                func: name.into(),
                expected: 0,
                got: args.len(),
            });
        }
        return Some(sig.ret);
    }

    // Distinguish "exists for some other scene" from "never heard of it" so
    // error text points at the actual mistake.
    if crate::sim::query::catalog_all()
        .iter()
        .any(|q| q.name == name)
    {
        defects.push(Defect::QueryUnavailable(name.into()));
        return Some(
            crate::sim::query::catalog_all()
                .iter()
                .find(|q| q.name == name)
                .map(|q| q.ret)
                .unwrap_or(Ty::Bool),
        );
    }

    defects.push(Defect::UnknownFunction(name.into()));
    None
}

/// Parse and validate, requiring the given result type. Returns the tree or
/// every defect found.
pub fn compile(src: &str, ctx: &ValidationCtx<'_>, expected: Ty) -> Result<Expr, DefectList> {
    let expr = match parse(src) {
        Ok(e) => e,
        Err(d) => return Err(DefectList(vec![d])),
    };
    let mut defects = Vec::new();
    if let Some(found) = check(&expr, ctx, &mut defects) {
        if defects.is_empty() && found != expected {
            defects.push(Defect::ResultType { expected, found });
        }
    }
    if defects.is_empty() {
        Ok(expr)
    } else {
        Err(DefectList(defects))
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluate a validated expression. Total: never panics or errors on
/// expressions accepted by [`compile`] with a context whose hosts cover the
/// validated callables.
pub fn eval(expr: &Expr, ctx: &EvalCtx<'_>) -> Value {
    match expr {
        Expr::Num(x) => Value::Num(*x),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Sym(_) => Value::Bool(false),
        Expr::Neg(inner) => Value::Num(-eval(inner, ctx).num()),
        Expr::Not(inner) => Value::Bool(!eval(inner, ctx).boolean()),
        Expr::Bin { op, lhs, rhs } => {
            let a = eval(lhs, ctx);
            let b = eval(rhs, ctx);
            match op {
                BinOp::Add => Value::Num(a.num() + b.num()),
                BinOp::Sub => Value::Num(a.num() - b.num()),
                BinOp::Mul => Value::Num(a.num() * b.num()),
                BinOp::Div => {
                    // Total division: x / 0 = 0.
                    let d = b.num();
                    Value::Num(if d == 0.0 { 0.0 } else { a.num() / d })
                }
                BinOp::Lt => Value::Bool(a.num() < b.num()),
                BinOp::Le => Value::Bool(a.num() <= b.num()),
                BinOp::Gt => Value::Bool(a.num() > b.num()),
                BinOp::Ge => Value::Bool(a.num() >= b.num()),
                BinOp::Eq => Value::Bool(match (a, b) {
                    (Value::Bool(x), Value::Bool(y)) => x == y,
                    (x, y) => x.num() == y.num(),
                }),
                BinOp::Ne => Value::Bool(match (a, b) {
                    (Value::Bool(x), Value::Bool(y)) => x != y,
                    (x, y) => x.num() != y.num(),
                }),
                BinOp::And => Value::Bool(a.boolean() && b.boolean()),
                BinOp::Or => Value::Bool(a.boolean() || b.boolean()),
            }
        }
        Expr::Call { name, args } => match name.as_str() {
            "round" => Value::Num(eval(&args[0], ctx).num().round()),
            "abs" => Value::Num(eval(&args[0], ctx).num().abs()),
            "min" => Value::Num(eval(&args[0], ctx).num().min(eval(&args[1], ctx).num())),
            "max" => Value::Num(eval(&args[0], ctx).num().max(eval(&args[1], ctx).num())),
            "action" => Value::Num(ctx.action.unwrap_or(0.0)),
            _ => {
                if history_predicate(name).is_some() {
                    let state = match &args[0] {
                        Expr::Sym(s) => s.as_str(),
                        _ => "",
                    };
                    match ctx.history {
                        Some(h) => h.predicate(name, state),
                        None => Value::Bool(false),
                    }
                } else {
                    ctx.queries.query(name)
                }
            }
        },
    }
}
