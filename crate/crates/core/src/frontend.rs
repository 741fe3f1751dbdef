//! A small loop language for piecewise affine programs.
//!
//! ```text
//! x in [-9, 9];
//! y in [-9, 9];
//! while (true) {
//!   ox = x;  oy = y;
//!   u = input(-3, 3);
//!   if (-9*ox + 7*oy + 6*u < 5) { x = 0.5*ox; y = oy - 1; }
//!   else { x = ox; y = 0.25*oy + u; }
//! }
//! ```
//!
//! Declarations `v in [lo, hi];` introduce state variables and their initial
//! box. `v = input(lo, hi);` (top level of the loop body only) introduces an
//! input ranging over `[lo, hi]`. Any other assignment to an undeclared name
//! binds a local alias, substituted at parse time. Right-hand sides and
//! guards must be affine and may only read previous-iteration state values,
//! so every leaf of the guard tree is one affine law.
//!
//! Guards accept `<`, `<=`, `>`, `>=` and are normalized so that the
//! then-branch adds `e < c` (strict) or `e <= c` (weak) and the else-branch
//! adds the exact complement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{AffineLaw, Polyhedron, PwaSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontendError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: unknown identifier `{name}`")]
    UnknownIdentifier { pos: Pos, name: String },
    #[error("{pos}: non-affine expression")]
    NonAffine { pos: Pos },
    #[error("{pos}: `{name}` is read after being assigned in this iteration")]
    ReadAfterWrite { pos: Pos, name: String },
    #[error("{pos}: state variable `{name}` assigned twice on one path")]
    DoubleAssignment { pos: Pos, name: String },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
    #[error("state variable `{name}` is not assigned on every path of the loop body")]
    Unassigned { name: String },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const SYMBOLS: [&str; 16] = [
    "<=", ">=", "(", ")", "{", "}", "[", "]", ",", ";", "=", "+", "-", "*", "/", "<",
];

struct Cursor {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.i + ahead).copied()
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn advance(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0).filter(|&c| f(c)) {
            s.push(c);
            self.advance();
        }
        s
    }
}

fn lex(text: &str) -> Result<Vec<Token>, FrontendError> {
    let mut cur = Cursor {
        chars: text.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek(0) {
        let pos = cur.pos();
        if c.is_whitespace() {
            cur.advance();
        } else if c == '/' && cur.peek(1) == Some('/') {
            cur.take_while(|c| c != '\n');
        } else if c == '/' && cur.peek(1) == Some('*') {
            cur.advance();
            cur.advance();
            loop {
                match (cur.peek(0), cur.peek(1)) {
                    (None, _) => {
                        return Err(FrontendError::Syntax {
                            pos,
                            msg: "unterminated comment".into(),
                        })
                    }
                    (Some('*'), Some('/')) => {
                        cur.advance();
                        cur.advance();
                        break;
                    }
                    _ => {
                        cur.advance();
                    }
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let name = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            out.push(Token {
                tok: Tok::Ident(name),
                pos,
            });
        } else if c.is_ascii_digit() || c == '.' {
            let mut s = cur.take_while(|c| c.is_ascii_digit() || c == '.');
            if matches!(cur.peek(0), Some('e' | 'E')) {
                s.extend(cur.advance());
                if matches!(cur.peek(0), Some('+' | '-')) {
                    s.extend(cur.advance());
                }
                s.push_str(&cur.take_while(|c| c.is_ascii_digit()));
            }
            let v = s.parse::<f64>().map_err(|_| FrontendError::Syntax {
                pos,
                msg: format!("bad number `{s}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                pos,
            });
        } else {
            let rest: String = [Some(c), cur.peek(1)].into_iter().flatten().collect();
            let sym = SYMBOLS
                .iter()
                .chain([">"].iter())
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| FrontendError::Syntax {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                })?;
            for _ in 0..sym.len() {
                cur.advance();
            }
            out.push(Token {
                tok: Tok::Sym(sym),
                pos,
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: cur.pos(),
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

/// Affine expression `coeffs . (x, u) + constant` over previous-iteration
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub coeffs: DVector<f64>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        self.coeffs.dot(z) + self.constant
    }
}

/// Then-branch condition `coeffs . (x, u) < rhs` (or `<=` when not strict).
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
    pub strict: bool,
}

impl Guard {
    pub fn holds(&self, z: &DVector<f64>) -> bool {
        let lhs = self.coeffs.dot(z);
        if self.strict {
            lhs < self.rhs
        } else {
            lhs <= self.rhs
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign {
        target: usize,
        expr: AffineExpr,
    },
    If {
        guard: Guard,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputVar {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopProgram {
    pub state_vars: Vec<String>,
    pub init_box: Vec<(f64, f64)>,
    pub input_vars: Vec<InputVar>,
    pub body: Vec<Stmt>,
}

impl LoopProgram {
    pub fn state_dim(&self) -> usize {
        self.state_vars.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_vars.len()
    }

    /// Number of leaves of the guard tree.
    pub fn leaf_count(&self) -> usize {
        let mut paths = Vec::new();
        collect_paths(&[&self.body[..]], PathAcc::default(), &mut paths);
        paths.len()
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Var {
    State(usize),
    Input(usize),
}

/// Affine form keyed by variable, built before the input count is known.
#[derive(Debug, Clone, Default, PartialEq)]
struct Lin {
    terms: BTreeMap<Var, f64>,
    constant: f64,
}

impl Lin {
    fn constant(v: f64) -> Self {
        Lin {
            terms: BTreeMap::new(),
            constant: v,
        }
    }

    fn var(v: Var) -> Self {
        Lin {
            terms: BTreeMap::from([(v, 1.0)]),
            constant: 0.0,
        }
    }

    fn is_constant(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    fn scale(mut self, k: f64) -> Self {
        self.terms.values_mut().for_each(|c| *c *= k);
        self.constant *= k;
        self
    }

    fn add(mut self, other: &Lin, sign: f64) -> Self {
        for (v, c) in &other.terms {
            *self.terms.entry(*v).or_insert(0.0) += sign * c;
        }
        self.constant += sign * other.constant;
        self
    }

    fn to_vector(&self, d: usize, m: usize) -> DVector<f64> {
        let mut out = DVector::zeros(d + m);
        for (v, c) in &self.terms {
            match v {
                Var::State(k) => out[*k] += c,
                Var::Input(k) => out[d + k] += c,
            }
        }
        out
    }
}

/// Statement with unresolved input count.
enum RawStmt {
    Assign {
        target: usize,
        expr: Lin,
    },
    If {
        cond: Lin,
        strict: bool,
        then_branch: Vec<RawStmt>,
        else_branch: Vec<RawStmt>,
    },
}

#[derive(Clone, Default)]
struct Scope {
    locals: HashMap<String, Lin>,
    assigned: HashSet<usize>,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    state: Vec<String>,
    init_box: Vec<(f64, f64)>,
    inputs: Vec<InputVar>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        Err(FrontendError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(t) if *t == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), FrontendError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.syntax(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), FrontendError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, pos))
            }
            other => self.syntax(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn signed_num(&mut self) -> Result<f64, FrontendError> {
        let neg = if self.eat_sym("-") {
            true
        } else {
            self.eat_sym("+");
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => self.syntax(format!("expected number, found {}", describe(&other))),
        }
    }

    fn interval(&mut self, open: &str, close: &str) -> Result<(f64, f64), FrontendError> {
        let pos = self.pos();
        self.expect_sym(open)?;
        let lo = self.signed_num()?;
        self.expect_sym(",")?;
        let hi = self.signed_num()?;
        self.expect_sym(close)?;
        if lo > hi {
            return Err(FrontendError::Invalid {
                pos,
                msg: format!("empty interval [{lo}, {hi}]"),
            });
        }
        Ok((lo, hi))
    }

    fn program(&mut self) -> Result<Vec<RawStmt>, FrontendError> {
        while !self.is_keyword("while") {
            let (name, pos) = self.ident()?;
            if self.state.contains(&name) {
                return Err(FrontendError::Invalid {
                    pos,
                    msg: format!("`{name}` declared twice"),
                });
            }
            self.expect_keyword("in")?;
            let range = self.interval("[", "]")?;
            self.expect_sym(";")?;
            self.state.push(name);
            self.init_box.push(range);
        }
        self.expect_keyword("while")?;
        self.expect_sym("(")?;
        self.expect_keyword("true")?;
        self.expect_sym(")")?;
        let mut scope = Scope::default();
        let body = self.block(&mut scope, true)?;
        if self.peek() != &Tok::Eof {
            return self.syntax("trailing input after loop body");
        }
        Ok(body)
    }

    fn block(&mut self, scope: &mut Scope, top: bool) -> Result<Vec<RawStmt>, FrontendError> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.eat_sym("}") {
            if self.peek() == &Tok::Eof {
                return self.syntax("unexpected end of input, missing `}`");
            }
            if let Some(s) = self.stmt(scope, top)? {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn stmt(&mut self, scope: &mut Scope, top: bool) -> Result<Option<RawStmt>, FrontendError> {
        if self.is_keyword("if") {
            return self.if_stmt(scope).map(Some);
        }
        let (name, pos) = self.ident()?;
        self.expect_sym("=")?;
        if self.is_keyword("input") {
            self.bump();
            if !top {
                return Err(FrontendError::Invalid {
                    pos,
                    msg: "inputs must be read at the top level of the loop body".into(),
                });
            }
            if self.state.contains(&name)
                || self.inputs.iter().any(|v| v.name == name)
                || scope.locals.contains_key(&name)
            {
                return Err(FrontendError::Invalid {
                    pos,
                    msg: format!("`{name}` is already defined"),
                });
            }
            let (lo, hi) = self.interval("(", ")")?;
            self.expect_sym(";")?;
            self.inputs.push(InputVar { name, lo, hi });
            return Ok(None);
        }
        let expr = self.expr(scope)?;
        self.expect_sym(";")?;
        if let Some(k) = self.state.iter().position(|s| *s == name) {
            if !scope.assigned.insert(k) {
                return Err(FrontendError::DoubleAssignment { pos, name });
            }
            Ok(Some(RawStmt::Assign { target: k, expr }))
        } else if self.inputs.iter().any(|v| v.name == name) {
            Err(FrontendError::Invalid {
                pos,
                msg: format!("cannot assign to input `{name}`"),
            })
        } else {
            scope.locals.insert(name, expr);
            Ok(None)
        }
    }

    fn if_stmt(&mut self, scope: &mut Scope) -> Result<RawStmt, FrontendError> {
        self.expect_keyword("if")?;
        self.expect_sym("(")?;
        let lhs = self.expr(scope)?;
        let op_pos = self.pos();
        let op = match self.bump().tok {
            Tok::Sym(s @ ("<" | "<=" | ">" | ">=")) => s,
            other => {
                return Err(FrontendError::Syntax {
                    pos: op_pos,
                    msg: format!("expected comparison, found {}", describe(&other)),
                })
            }
        };
        let rhs = self.expr(scope)?;
        self.expect_sym(")")?;
        // diff = lhs - rhs; the then-branch is `diff op 0`.
        let diff = lhs.add(&rhs, -1.0);
        let (cond, strict) = match op {
            "<" => (diff, true),
            "<=" => (diff, false),
            ">" => (diff.scale(-1.0), true),
            _ => (diff.scale(-1.0), false),
        };

        let mut then_scope = scope.clone();
        let then_branch = self.block(&mut then_scope, false)?;
        let mut else_scope = scope.clone();
        let else_branch = if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                vec![self.if_stmt(&mut else_scope)?]
            } else {
                self.block(&mut else_scope, false)?
            }
        } else {
            Vec::new()
        };
        // Conservative join: anything assigned on either side counts as
        // updated for the statements that follow.
        scope.assigned.extend(then_scope.assigned);
        scope.assigned.extend(else_scope.assigned);
        Ok(RawStmt::If {
            cond,
            strict,
            then_branch,
            else_branch,
        })
    }

    fn expr(&mut self, scope: &Scope) -> Result<Lin, FrontendError> {
        let mut acc = self.term(scope)?;
        loop {
            if self.eat_sym("+") {
                acc = acc.add(&self.term(scope)?, 1.0);
            } else if self.eat_sym("-") {
                acc = acc.add(&self.term(scope)?, -1.0);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self, scope: &Scope) -> Result<Lin, FrontendError> {
        let mut acc = self.unary(scope)?;
        loop {
            let pos = self.pos();
            if self.eat_sym("*") {
                let rhs = self.unary(scope)?;
                acc = if rhs.is_constant() {
                    acc.scale(rhs.constant)
                } else if acc.is_constant() {
                    rhs.scale(acc.constant)
                } else {
                    return Err(FrontendError::NonAffine { pos });
                };
            } else if self.eat_sym("/") {
                let rhs = self.unary(scope)?;
                if !rhs.is_constant() {
                    return Err(FrontendError::NonAffine { pos });
                }
                if rhs.constant == 0.0 {
                    return Err(FrontendError::Invalid {
                        pos,
                        msg: "division by zero".into(),
                    });
                }
                acc = acc.scale(1.0 / rhs.constant);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self, scope: &Scope) -> Result<Lin, FrontendError> {
        if self.eat_sym("-") {
            return Ok(self.unary(scope)?.scale(-1.0));
        }
        if self.eat_sym("+") {
            return self.unary(scope);
        }
        self.atom(scope)
    }

    fn atom(&mut self, scope: &Scope) -> Result<Lin, FrontendError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Lin::constant(v))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr(scope)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(l) = scope.locals.get(&name) {
                    Ok(l.clone())
                } else if let Some(k) = self.state.iter().position(|s| *s == name) {
                    if scope.assigned.contains(&k) {
                        return Err(FrontendError::ReadAfterWrite { pos, name });
                    }
                    Ok(Lin::var(Var::State(k)))
                } else if let Some(k) = self.inputs.iter().position(|v| v.name == name) {
                    Ok(Lin::var(Var::Input(k)))
                } else {
                    Err(FrontendError::UnknownIdentifier { pos, name })
                }
            }
            other => self.syntax(format!("expected expression, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn resolve(raw: Vec<RawStmt>, d: usize, m: usize) -> Vec<Stmt> {
    raw.into_iter()
        .map(|s| match s {
            RawStmt::Assign { target, expr } => Stmt::Assign {
                target,
                expr: AffineExpr {
                    coeffs: expr.to_vector(d, m),
                    constant: expr.constant,
                },
            },
            RawStmt::If {
                cond,
                strict,
                then_branch,
                else_branch,
            } => Stmt::If {
                guard: Guard {
                    coeffs: cond.to_vector(d, m),
                    rhs: -cond.constant,
                    strict,
                },
                then_branch: resolve(then_branch, d, m),
                else_branch: resolve(else_branch, d, m),
            },
        })
        .collect()
}

pub fn parse(text: &str) -> Result<LoopProgram, FrontendError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        state: Vec::new(),
        init_box: Vec::new(),
        inputs: Vec::new(),
    };
    let raw = p.program()?;
    let (d, m) = (p.state.len(), p.inputs.len());
    let program = LoopProgram {
        body: resolve(raw, d, m),
        state_vars: p.state,
        init_box: p.init_box,
        input_vars: p.inputs,
    };
    let mut paths = Vec::new();
    collect_paths(&[&program.body[..]], PathAcc::default(), &mut paths);
    for path in &paths {
        for (k, name) in program.state_vars.iter().enumerate() {
            if !path.assignments.iter().any(|(t, _)| *t == k) {
                return Err(FrontendError::Unassigned { name: name.clone() });
            }
        }
    }
    Ok(program)
}

// ---------------------------------------------------------------------------
// Translation and interpretation
// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
struct PathAcc<'a> {
    strict: Vec<(DVector<f64>, f64)>,
    weak: Vec<(DVector<f64>, f64)>,
    assignments: Vec<(usize, &'a AffineExpr)>,
}

/// Enumerates guard-tree leaves; `pending` is a stack of statement slices
/// still to execute (innermost last).
fn collect_paths<'a>(pending: &[&'a [Stmt]], mut acc: PathAcc<'a>, out: &mut Vec<PathAcc<'a>>) {
    let Some((&current, outer)) = pending.split_last() else {
        out.push(acc);
        return;
    };
    let Some((first, rest)) = current.split_first() else {
        collect_paths(outer, acc, out);
        return;
    };
    let mut stack: Vec<&'a [Stmt]> = outer.to_vec();
    stack.push(rest);
    match first {
        Stmt::Assign { target, expr } => {
            acc.assignments.push((*target, expr));
            collect_paths(&stack, acc, out);
        }
        Stmt::If {
            guard,
            then_branch,
            else_branch,
        } => {
            let negated = (-&guard.coeffs, -guard.rhs);
            let mut then_acc = acc.clone();
            let mut else_acc = acc;
            if guard.strict {
                then_acc.strict.push((guard.coeffs.clone(), guard.rhs));
                else_acc.weak.push(negated);
            } else {
                then_acc.weak.push((guard.coeffs.clone(), guard.rhs));
                else_acc.strict.push(negated);
            }
            let mut then_stack = stack.clone();
            then_stack.push(then_branch);
            collect_paths(&then_stack, then_acc, out);
            let mut else_stack = stack;
            else_stack.push(else_branch);
            collect_paths(&else_stack, else_acc, out);
        }
    }
}

fn rows_to_block(rows: &[(DVector<f64>, f64)], dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let t = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    (t, c)
}

/// One cell per leaf (then-branches first). Each cell gets its guard rows
/// in path order followed by the input range rows; the initial set is the
/// declared box crossed with the input ranges.
pub fn to_pwa(program: &LoopProgram) -> PwaSystem {
    let (d, m) = (program.state_dim(), program.input_dim());
    let dim = d + m;
    let input_ranges: Vec<(f64, f64)> = program.input_vars.iter().map(|v| (v.lo, v.hi)).collect();
    let input_rows: Vec<(DVector<f64>, f64)> = input_ranges
        .iter()
        .enumerate()
        .flat_map(|(k, &(lo, hi))| {
            let mut up = DVector::zeros(dim);
            up[d + k] = 1.0;
            let down = -&up;
            [(up, hi), (down, -lo)]
        })
        .collect();

    let mut paths = Vec::new();
    collect_paths(&[&program.body[..]], PathAcc::default(), &mut paths);
    let mut cells = Vec::with_capacity(paths.len());
    let mut laws = Vec::with_capacity(paths.len());
    for path in paths {
        let (ts, cs) = rows_to_block(&path.strict, dim);
        let weak: Vec<_> = path
            .weak
            .iter()
            .cloned()
            .chain(input_rows.iter().cloned())
            .collect();
        let (tw, cw) = rows_to_block(&weak, dim);
        cells.push(Polyhedron::new(ts, cs, tw, cw).expect("rows built with a common width"));

        let mut a = DMatrix::zeros(d, d);
        let mut b_in = DMatrix::zeros(d, m);
        let mut offset = DVector::zeros(d);
        for (target, expr) in path.assignments {
            a.row_mut(target)
                .copy_from(&expr.coeffs.rows(0, d).transpose());
            b_in.row_mut(target)
                .copy_from(&expr.coeffs.rows(d, m).transpose());
            offset[target] = expr.constant;
        }
        laws.push(AffineLaw::new(a, b_in, offset).expect("law shapes follow the program"));
    }

    let mut init_box = program.init_box.clone();
    init_box.extend(input_ranges.iter().copied());
    PwaSystem::new(
        d,
        m,
        cells,
        laws,
        Polyhedron::boxed(&input_ranges),
        Polyhedron::boxed(&init_box),
    )
    .expect("translated system is dimensionally consistent")
}

/// Executes one loop iteration directly on the AST.
pub fn interpret(program: &LoopProgram, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    fn run(stmts: &[Stmt], z: &DVector<f64>, next: &mut DVector<f64>) {
        for s in stmts {
            match s {
                Stmt::Assign { target, expr } => next[*target] = expr.eval(z),
                Stmt::If {
                    guard,
                    then_branch,
                    else_branch,
                } => {
                    if guard.holds(z) {
                        run(then_branch, z, next)
                    } else {
                        run(else_branch, z, next)
                    }
                }
            }
        }
    }
    let z = crate::model::join_state_input(x, u);
    let mut next = x.clone();
    run(&program.body, &z, &mut next);
    next
}

pub fn compile(text: &str) -> Result<PwaSystem, FrontendError> {
    Ok(to_pwa(&parse(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const RUNNING: &str = include_str!("../examples/running.pwq");

    #[test]
    fn running_example_shape() {
        let p = parse(RUNNING).unwrap();
        assert_eq!(p.state_vars, vec!["x", "y"]);
        assert_eq!(
            p.input_vars,
            vec![InputVar {
                name: "u".into(),
                lo: -3.0,
                hi: 3.0
            }]
        );
        assert_eq!(p.init_box, vec![(-9.0, 9.0), (-9.0, 9.0)]);
        assert_eq!(p.leaf_count(), 4);
    }

    #[test]
    fn running_example_cells() {
        let sys = compile(RUNNING).unwrap();
        let c1 = &sys.cells()[0];
        assert_eq!(
            c1.strict_matrix(),
            &DMatrix::from_row_slice(2, 3, &[-9.0, 7.0, 6.0, -4.0, 8.0, -8.0])
        );
        assert_eq!(c1.strict_rhs().as_slice(), &[5.0, 4.0]);
        assert_eq!(
            c1.weak_matrix(),
            &DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
        );
        assert_eq!(c1.weak_rhs().as_slice(), &[3.0, 3.0]);
        let c4 = &sys.cells()[3];
        assert_eq!(c4.n_strict(), 0);
        assert_eq!(
            c4.weak_matrix(),
            &DMatrix::from_row_slice(
                4,
                3,
                &[9.0, -7.0, -6.0, 4.0, -8.0, 8.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0]
            )
        );
        assert_eq!(c4.weak_rhs().as_slice(), &[-5.0, -4.0, 3.0, 3.0]);
    }

    #[test]
    fn identity_program() {
        let p = parse("x in [0,0]; while(true) { x = x; }").unwrap();
        assert_eq!(p.leaf_count(), 1);
        let sys = to_pwa(&p);
        assert_eq!(sys.laws()[0].a(), &DMatrix::identity(1, 1));
        assert_eq!(sys.cells()[0].n_strict() + sys.cells()[0].n_weak(), 0);
    }

    #[test]
    fn single_leaf_cell_has_only_input_rows() {
        let sys = compile("x in [-1,1]; while(true) { u = input(-2, 2); x = 0.5*x + u; }").unwrap();
        let c = &sys.cells()[0];
        assert_eq!(c.n_strict(), 0);
        assert_eq!(
            c.weak_matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0])
        );
        assert_eq!(c.weak_rhs().as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn rejects_non_affine_guard() {
        let err = parse("x in [0,1]; while(true) { if (x*x < 1) { x = x; } else { x = 0; } }")
            .unwrap_err();
        assert!(matches!(err, FrontendError::NonAffine { pos } if pos.line == 1));
    }

    #[test]
    fn reports_positions_and_unknowns() {
        let err = parse("x in [0,1];\nwhile(true) {\n  x = z + 1;\n}").unwrap_err();
        assert_eq!(
            err,
            FrontendError::UnknownIdentifier {
                pos: Pos { line: 3, col: 7 },
                name: "z".into()
            }
        );
        let err = parse("x in [0,1]; while(true) { x = 1 }").unwrap_err();
        assert!(matches!(err, FrontendError::Syntax { .. }));
    }

    #[test]
    fn rejects_missing_assignment() {
        let err = parse(
            "x in [0,1]; y in [0,1]; while(true) { if (x < 0) { x = 1; y = 2; } else { x = 0; } }",
        )
        .unwrap_err();
        assert_eq!(err, FrontendError::Unassigned { name: "y".into() });
    }

    #[test]
    fn rejects_read_after_write_and_double_assignment() {
        let err = parse("x in [0,1]; y in [0,1]; while(true) { x = 1; y = x; }").unwrap_err();
        assert!(matches!(err, FrontendError::ReadAfterWrite { .. }));
        let err = parse("x in [0,1]; while(true) { x = 1; x = 2; }").unwrap_err();
        assert!(matches!(err, FrontendError::DoubleAssignment { .. }));
    }

    #[test]
    fn comparison_normalization() {
        // `x >= 1` then-branch is weak -x <= -1, else-branch strict x < 1.
        let sys =
            compile("x in [0,2]; while(true) { if (x >= 1) { x = 0; } else { x = 1; } }").unwrap();
        let then_cell = &sys.cells()[0];
        assert_eq!(then_cell.n_strict(), 0);
        assert_eq!(then_cell.weak_matrix()[(0, 0)], -1.0);
        assert_eq!(then_cell.weak_rhs()[0], -1.0);
        let else_cell = &sys.cells()[1];
        assert_eq!(else_cell.strict_matrix()[(0, 0)], 1.0);
        assert_eq!(else_cell.strict_rhs()[0], 1.0);

        let sys =
            compile("x in [0,2]; while(true) { if (2 > x) { x = 0; } else { x = 1; } }").unwrap();
        assert_eq!(sys.cells()[0].strict_matrix()[(0, 0)], 1.0);
        assert_eq!(sys.cells()[0].strict_rhs()[0], 2.0);
    }

    #[test]
    fn aliases_and_else_if_chains() {
        let text = "x in [0,1]; while(true) { u = input(0, 1); t = 2*x - u;
            if (t < 0) { x = t; } else if (t < 1) { x = 0.5*t; } else { x = 0; } }";
        let p = parse(text).unwrap();
        assert_eq!(p.leaf_count(), 3);
        let next = interpret(
            &p,
            &DVector::from_element(1, 0.75),
            &DVector::from_element(1, 1.0),
        );
        assert_eq!(next[0], 0.25);
    }

    #[test]
    fn interpretation_matches_step_on_grid() {
        let p = parse(RUNNING).unwrap();
        let sys = to_pwa(&p);
        for xi in -4..=4 {
            for yi in -4..=4 {
                for ui in -3..=3 {
                    let x = DVector::from_vec(vec![2.25 * xi as f64, 2.25 * yi as f64]);
                    let u = DVector::from_element(1, ui as f64);
                    let i = sys
                        .cell_of(&x, &u)
                        .unwrap()
                        .expect("partition covers the box");
                    let a = interpret(&p, &x, &u);
                    let b = sys.step(i, &x, &u).unwrap();
                    assert!((a - b).amax() <= 1e-12);
                }
            }
        }
    }
}
