//! Scalar expressions over parameter variables x1..xn and decision variables
//! y1..ym: parsing, evaluation, exact symbolic differentiation, and a printer
//! whose output reparses to a structurally equal tree.
//!
//! The grammar is polynomial-plus-division on purpose. It is closed under
//! exact differentiation, so every gradient the rest of the toolkit consumes
//! is symbolic, not finite-difference.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Which variable family a reference points into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
        }
    }
}

/// Expression tree. Variable indices are 1-based; `Pow` exponents are the
/// integers accepted by the grammar, [-9, 9].
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Axis, usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
}

/// An expression together with the dimensions it was declared over.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    n: usize,
    m: usize,
    root: Node,
}

pub const MAX_EXPONENT: i32 = 9;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("variable {name} at byte {pos} is out of range: axis {axis} has {dim} variable(s), indices are 1-based")]
    Index {
        pos: usize,
        name: String,
        axis: char,
        dim: usize,
    },
    #[error("exponent at byte {pos} must be an integer literal in [-9, 9]")]
    Exponent { pos: usize },
}

impl ParseError {
    /// Byte offset the error points at.
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::Index { pos, .. }
            | ParseError::Exponent { pos } => *pos,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero while evaluating `{context}`")]
    DivisionByZero { context: String },
    #[error("point has dimensions ({got_n}, {got_m}), expression declared over ({n}, {m})")]
    Dimension {
        n: usize,
        m: usize,
        got_n: usize,
        got_m: usize,
    },
}

/// Parses `text` against the grammar, checking every variable index against
/// the declared dimensions (x-axis: n, y-axis: m).
pub fn parse_expr(text: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        n,
        m,
    };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(ParseError::Syntax {
            pos: p.pos,
            expected: "operator or end of input".into(),
        });
    }
    Ok(Expr { n, m, root })
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Node::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Node::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Node::Mul(Box::new(acc), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Node::Div(Box::new(acc), Box::new(self.factor()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let mut minuses = 0usize;
        while self.peek() == Some(b'-') {
            self.pos += 1;
            minuses += 1;
        }
        let inner = self.power()?;
        if minuses % 2 == 0 {
            return Ok(inner);
        }
        // fold the sign into literals so printed constants reparse to the
        // same tree
        Ok(match inner {
            Node::Const(c) => Node::Const(norm_zero(-c)),
            other => Node::Neg(Box::new(other)),
        })
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let k = self.exponent()?;
        if self.peek() == Some(b'^') {
            return Err(ParseError::Syntax {
                pos: self.pos,
                expected: "no second '^' (chained powers need parentheses)".into(),
            });
        }
        Ok(Node::Pow(Box::new(base), k))
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let negative = if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let digits_start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(ParseError::Syntax {
                pos: self.pos,
                expected: "integer exponent".into(),
            });
        }
        // a fraction or exponent part means the literal is not an integer
        if matches!(self.bytes.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E')) {
            return Err(ParseError::Exponent { pos: start });
        }
        let text = std::str::from_utf8(&self.bytes[digits_start..self.pos]).unwrap();
        let magnitude: i32 = text
            .parse()
            .map_err(|_| ParseError::Exponent { pos: start })?;
        if magnitude > MAX_EXPONENT {
            return Err(ParseError::Exponent { pos: start });
        }
        Ok(if negative { -magnitude } else { magnitude })
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ParseError::Syntax {
                        pos: self.pos,
                        expected: "')'".into(),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c @ (b'x' | b'y')) => {
                let axis = if c == b'x' { Axis::X } else { Axis::Y };
                let start = self.pos;
                self.pos += 1;
                let digits_start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos == digits_start {
                    return Err(ParseError::Syntax {
                        pos: self.pos,
                        expected: "variable index".into(),
                    });
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                let index: usize = text[1..].parse().map_err(|_| ParseError::Index {
                    pos: start,
                    name: text.to_string(),
                    axis: axis.letter(),
                    dim: self.axis_dim(axis),
                })?;
                let dim = self.axis_dim(axis);
                if index == 0 || index > dim {
                    return Err(ParseError::Index {
                        pos: start,
                        name: text.to_string(),
                        axis: axis.letter(),
                        dim,
                    });
                }
                Ok(Node::Var(axis, index))
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            _ => Err(ParseError::Syntax {
                pos: self.pos,
                expected: "number, variable, or '('".into(),
            }),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let frac_start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return Err(ParseError::Syntax {
                    pos: self.pos,
                    expected: "digits after decimal point".into(),
                });
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == exp_start {
                // "2e" was the start of something else, e.g. a malformed
                // variable; report at the 'e'
                return Err(ParseError::Syntax {
                    pos: mark,
                    expected: "exponent digits".into(),
                });
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            pos: start,
            expected: "numeric literal".into(),
        })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax {
                pos: start,
                expected: "numeric literal within double range".into(),
            });
        }
        Ok(Node::Const(norm_zero(value)))
    }

    fn axis_dim(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.n,
            Axis::Y => self.m,
        }
    }
}

fn norm_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Integer power by repeated squaring. The caller rejects `base == 0` with
/// negative `k`; `0^0` is 1.
fn pow_int(base: f64, k: i32) -> f64 {
    let mut e = k.unsigned_abs();
    let mut acc = 1.0;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

impl Expr {
    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Builds a constant expression over the given dimensions.
    pub fn constant(value: f64, n: usize, m: usize) -> Expr {
        Expr {
            n,
            m,
            root: Node::Const(norm_zero(value)),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        if x.len() != self.n || y.len() != self.m {
            return Err(EvalError::Dimension {
                n: self.n,
                m: self.m,
                got_n: x.len(),
                got_m: y.len(),
            });
        }
        eval_node(&self.root, x, y)
    }

    /// Exact partial derivatives along every variable of `axis`, in index
    /// order. Simplification is limited to constant folding and the unit
    /// rules 0*a, 1*a, a+0, a-0, 0-a, a/1, a^0, a^1.
    pub fn grad(&self, axis: Axis) -> Vec<Expr> {
        let dim = match axis {
            Axis::X => self.n,
            Axis::Y => self.m,
        };
        (1..=dim)
            .map(|j| Expr {
                n: self.n,
                m: self.m,
                root: diff(&self.root, axis, j),
            })
            .collect()
    }

    /// The same unit rules applied bottom-up to the tree itself.
    pub fn simplified(&self) -> Expr {
        Expr {
            n: self.n,
            m: self.m,
            root: simplify_node(&self.root),
        }
    }

    /// True when any division node is present; reports flag these because
    /// Lipschitz-style claims near poles are unreliable.
    pub fn contains_division(&self) -> bool {
        fn walk(node: &Node) -> bool {
            match node {
                Node::Const(_) | Node::Var(..) => false,
                Node::Neg(a) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => walk(a) || walk(b),
                Node::Div(..) => true,
                Node::Pow(a, k) => *k < 0 || walk(a),
            }
        }
        walk(&self.root)
    }
}

fn eval_node(node: &Node, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var(Axis::X, i) => Ok(x[*i - 1]),
        Node::Var(Axis::Y, i) => Ok(y[*i - 1]),
        Node::Neg(a) => Ok(-eval_node(a, x, y)?),
        Node::Add(a, b) => Ok(eval_node(a, x, y)? + eval_node(b, x, y)?),
        Node::Sub(a, b) => Ok(eval_node(a, x, y)? - eval_node(b, x, y)?),
        Node::Mul(a, b) => Ok(eval_node(a, x, y)? * eval_node(b, x, y)?),
        Node::Div(a, b) => {
            let num = eval_node(a, x, y)?;
            let den = eval_node(b, x, y)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero {
                    context: print_expr(node),
                });
            }
            Ok(num / den)
        }
        Node::Pow(a, k) => {
            let base = eval_node(a, x, y)?;
            if base == 0.0 && *k < 0 {
                return Err(EvalError::DivisionByZero {
                    context: print_expr(node),
                });
            }
            Ok(pow_int(base, *k))
        }
    }
}

// Constructors used by differentiation and simplification. Folding is
// skipped when it would produce a non-finite constant.

fn cconst(v: f64) -> Node {
    Node::Const(norm_zero(v))
}

fn is_const(node: &Node, v: f64) -> bool {
    matches!(node, Node::Const(c) if *c == v)
}

fn mk_neg(a: Node) -> Node {
    match a {
        Node::Const(c) => cconst(-c),
        other => Node::Neg(Box::new(other)),
    }
}

fn mk_add(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) {
        return b;
    }
    if is_const(&b, 0.0) {
        return a;
    }
    if let (Node::Const(ca), Node::Const(cb)) = (&a, &b) {
        let v = ca + cb;
        if v.is_finite() {
            return cconst(v);
        }
    }
    Node::Add(Box::new(a), Box::new(b))
}

fn mk_sub(a: Node, b: Node) -> Node {
    if is_const(&b, 0.0) {
        return a;
    }
    if is_const(&a, 0.0) {
        return mk_neg(b);
    }
    if let (Node::Const(ca), Node::Const(cb)) = (&a, &b) {
        let v = ca - cb;
        if v.is_finite() {
            return cconst(v);
        }
    }
    Node::Sub(Box::new(a), Box::new(b))
}

fn mk_mul(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        return cconst(0.0);
    }
    if is_const(&a, 1.0) {
        return b;
    }
    if is_const(&b, 1.0) {
        return a;
    }
    if let (Node::Const(ca), Node::Const(cb)) = (&a, &b) {
        let v = ca * cb;
        if v.is_finite() {
            return cconst(v);
        }
    }
    Node::Mul(Box::new(a), Box::new(b))
}

fn mk_div(a: Node, b: Node) -> Node {
    if is_const(&b, 1.0) {
        return a;
    }
    if let (Node::Const(ca), Node::Const(cb)) = (&a, &b) {
        if *cb != 0.0 {
            let v = ca / cb;
            if v.is_finite() {
                return cconst(v);
            }
        }
    }
    Node::Div(Box::new(a), Box::new(b))
}

fn mk_pow(a: Node, k: i32) -> Node {
    if k == 0 {
        return cconst(1.0);
    }
    if k == 1 {
        return a;
    }
    if let Node::Const(c) = &a {
        if !(*c == 0.0 && k < 0) {
            let v = pow_int(*c, k);
            if v.is_finite() {
                return cconst(v);
            }
        }
    }
    Node::Pow(Box::new(a), k)
}

fn diff(node: &Node, axis: Axis, j: usize) -> Node {
    match node {
        Node::Const(_) => cconst(0.0),
        Node::Var(a, i) => cconst(if *a == axis && *i == j { 1.0 } else { 0.0 }),
        Node::Neg(a) => mk_neg(diff(a, axis, j)),
        Node::Add(a, b) => mk_add(diff(a, axis, j), diff(b, axis, j)),
        Node::Sub(a, b) => mk_sub(diff(a, axis, j), diff(b, axis, j)),
        Node::Mul(a, b) => mk_add(
            mk_mul(diff(a, axis, j), (**b).clone()),
            mk_mul((**a).clone(), diff(b, axis, j)),
        ),
        Node::Div(a, b) => mk_div(
            mk_sub(
                mk_mul(diff(a, axis, j), (**b).clone()),
                mk_mul((**a).clone(), diff(b, axis, j)),
            ),
            mk_pow((**b).clone(), 2),
        ),
        Node::Pow(a, k) => {
            // k a^(k-1) a'; k = -9 would need exponent -10, outside the
            // grammar, so spell a^(-10) as 1/(a^9 * a)
            let power = if *k - 1 >= -MAX_EXPONENT {
                mk_pow((**a).clone(), *k - 1)
            } else {
                mk_div(
                    cconst(1.0),
                    mk_mul(mk_pow((**a).clone(), MAX_EXPONENT), (**a).clone()),
                )
            };
            mk_mul(mk_mul(cconst(*k as f64), power), diff(a, axis, j))
        }
    }
}

fn simplify_node(node: &Node) -> Node {
    match node {
        Node::Const(c) => cconst(*c),
        Node::Var(a, i) => Node::Var(*a, *i),
        Node::Neg(a) => mk_neg(simplify_node(a)),
        Node::Add(a, b) => mk_add(simplify_node(a), simplify_node(b)),
        Node::Sub(a, b) => mk_sub(simplify_node(a), simplify_node(b)),
        Node::Mul(a, b) => mk_mul(simplify_node(a), simplify_node(b)),
        Node::Div(a, b) => mk_div(simplify_node(a), simplify_node(b)),
        Node::Pow(a, k) => mk_pow(simplify_node(a), *k),
    }
}

// Printer. Each level parenthesizes exactly the right operands that would
// otherwise rebind under the left-associative grammar, so parse(print(e))
// is structurally equal to e.

fn print_expr(node: &Node) -> String {
    match node {
        Node::Add(a, b) => format!("{} + {}", print_expr(a), print_term(b)),
        Node::Sub(a, b) => format!("{} - {}", print_expr(a), print_term(b)),
        other => print_term(other),
    }
}

fn print_term(node: &Node) -> String {
    match node {
        Node::Mul(a, b) => format!("{}*{}", print_term(a), print_factor(b)),
        Node::Div(a, b) => format!("{}/{}", print_term(a), print_factor(b)),
        other => print_factor(other),
    }
}

fn print_factor(node: &Node) -> String {
    match node {
        Node::Neg(a) => format!("-{}", print_tight(a)),
        Node::Const(c) if *c < 0.0 => format!("-{}", print_const(-c)),
        other => print_power(other),
    }
}

fn print_power(node: &Node) -> String {
    match node {
        Node::Pow(a, k) => format!("{}^{}", print_tight(a), k),
        other => print_atom(other),
    }
}

// Operand that must bind tighter than unary minus or '^': variables and
// nonnegative constants stand alone, everything else gets parentheses.
fn print_tight(node: &Node) -> String {
    match node {
        Node::Var(..) => print_atom(node),
        Node::Const(c) if *c >= 0.0 => print_atom(node),
        other => format!("({})", print_expr(other)),
    }
}

fn print_atom(node: &Node) -> String {
    match node {
        Node::Const(c) => print_const(*c),
        Node::Var(axis, i) => format!("{}{}", axis.letter(), i),
        other => format!("({})", print_expr(other)),
    }
}

fn print_const(c: f64) -> String {
    debug_assert!(c >= 0.0 && c.is_finite());
    // f64 Display is shortest-round-trip decimal, always in plain notation
    format!("{}", c)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(&self.root))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, n: usize, m: usize) -> Expr {
        parse_expr(text, n, m).unwrap()
    }

    fn var(axis: Axis, i: usize) -> Node {
        Node::Var(axis, i)
    }

    #[test]
    fn parses_difference_of_variables() {
        let e = p("x1 - y1", 1, 1);
        assert_eq!(
            *e.root(),
            Node::Sub(Box::new(var(Axis::X, 1)), Box::new(var(Axis::Y, 1)))
        );
    }

    #[test]
    fn parses_power_with_precedence_over_minus() {
        let e = p("y1 - y1^2", 1, 1);
        assert_eq!(
            *e.root(),
            Node::Sub(
                Box::new(var(Axis::Y, 1)),
                Box::new(Node::Pow(Box::new(var(Axis::Y, 1)), 2))
            )
        );
    }

    #[test]
    fn parses_parenthesized_square() {
        let e = p("(x1 + y1 - 2)^2", 1, 1);
        let inner = Node::Sub(
            Box::new(Node::Add(Box::new(var(Axis::X, 1)), Box::new(var(Axis::Y, 1)))),
            Box::new(Node::Const(2.0)),
        );
        assert_eq!(*e.root(), Node::Pow(Box::new(inner), 2));
    }

    #[test]
    fn unary_minus_applies_to_the_power_not_the_atom() {
        let e = p("-2^2", 0, 0);
        assert_eq!(e.eval(&[], &[]).unwrap(), -4.0);
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(p("y1 - y1^2", 1, 1).eval(&[0.0], &[0.5]).unwrap(), 0.25);
        assert_eq!(p("x1 - y1", 1, 1).eval(&[0.0], &[1.0]).unwrap(), -1.0);
        assert_eq!(
            p("(x1 + y1 - 2)^2", 1, 1).eval(&[0.25], &[0.5]).unwrap(),
            1.5625
        );
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        assert_eq!(p("y1^0", 1, 1).eval(&[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn gradient_matches_hand_results() {
        let g = p("y1 - y1^2", 1, 1).grad(Axis::Y);
        assert_eq!(g[0].to_string(), "1 - 2*y1");

        let g = p("x1 - y1", 1, 1).grad(Axis::Y);
        assert_eq!(g[0].to_string(), "-1");

        let g = p("(y1+1)^2 + (y2 - x1)^2", 1, 2).grad(Axis::Y);
        assert_eq!(g[0].to_string(), "2*(y1 + 1)");
        assert_eq!(g[1].to_string(), "2*(y2 - x1)");
    }

    #[test]
    fn gradient_along_x_sees_only_x() {
        let g = p("(y2 - x1)^2", 2, 2).grad(Axis::X);
        assert_eq!(g[0].to_string(), "2*(y2 - x1)*-1");
        assert_eq!(g[1].to_string(), "0");
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_expr("x1 + * y1", 1, 1).unwrap_err();
        assert_eq!(err.position(), 5);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn out_of_range_and_zero_indices_are_rejected() {
        assert!(matches!(
            parse_expr("y3", 1, 2).unwrap_err(),
            ParseError::Index { dim: 2, .. }
        ));
        assert!(matches!(
            parse_expr("x0", 1, 1).unwrap_err(),
            ParseError::Index { .. }
        ));
    }

    #[test]
    fn non_integer_and_oversized_exponents_are_rejected() {
        assert!(matches!(
            parse_expr("y1^2.5", 1, 1).unwrap_err(),
            ParseError::Exponent { .. }
        ));
        assert!(matches!(
            parse_expr("y1^10", 1, 1).unwrap_err(),
            ParseError::Exponent { .. }
        ));
        assert!(matches!(
            parse_expr("y1^-10", 1, 1).unwrap_err(),
            ParseError::Exponent { .. }
        ));
        assert!(parse_expr("y1^-9", 1, 1).is_ok());
    }

    #[test]
    fn chained_power_requires_parentheses() {
        let err = parse_expr("y1^2^3", 1, 1).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert!(parse_expr("(y1^2)^3", 1, 1).is_ok());
    }

    #[test]
    fn division_by_zero_points_at_the_node() {
        let err = p("x1 / y1", 1, 1).eval(&[1.0], &[0.0]).unwrap_err();
        assert_eq!(
            err,
            EvalError::DivisionByZero {
                context: "x1/y1".into()
            }
        );
        let err = p("y1^-1", 1, 1).eval(&[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero { .. }));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = p("x1 + y1", 1, 1).eval(&[1.0, 2.0], &[0.0]).unwrap_err();
        assert!(matches!(err, EvalError::Dimension { .. }));
    }

    #[test]
    fn print_parse_round_trips_structurally() {
        let cases = [
            "x1 - y1",
            "y1 - y1^2",
            "(x1 + y1 - 2)^2",
            "-y1",
            "x1*y1 - y2",
            "1 - 2*y1",
            "x1/(y1 - 1)",
            "(y1 + 1)^2 + (y2 - x1)^2",
            "2*(y2 - x1)*-1",
            "-(y1*y1)",
            "x1 - -y1",
            "0.5*y1^-3",
            "y2^2*x1 - (x2 - 1)/(y1 + 3)",
        ];
        for text in cases {
            let e = p(text, 2, 2);
            let printed = e.to_string();
            let reparsed = p(&printed, 2, 2);
            assert_eq!(e, reparsed, "{text} -> {printed}");
        }
    }

    #[test]
    fn negative_constants_round_trip() {
        let e = p("-2", 0, 0);
        assert_eq!(*e.root(), Node::Const(-2.0));
        assert_eq!(e.to_string(), "-2");
        assert_eq!(p("-2", 0, 0), p(&e.to_string(), 0, 0));
        // even chains cancel, odd chains fold
        assert_eq!(*p("--x1", 1, 0).root(), var(Axis::X, 1));
        assert_eq!(*p("---2", 0, 0).root(), Node::Const(-2.0));
    }

    #[test]
    fn simplify_preserves_values() {
        let e = p("0*y1 + 1*x1 + (y1 - 0) + 0 - 0*x1 + y1^1 + 2*3", 1, 1);
        let s = e.simplified();
        for (xv, yv) in [(0.3, -1.2), (2.0, 5.0), (-0.7, 0.0)] {
            let a = e.eval(&[xv], &[yv]).unwrap();
            let b = s.eval(&[xv], &[yv]).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn division_detection_includes_negative_powers() {
        assert!(p("x1/y1", 1, 1).contains_division());
        assert!(p("y1^-2", 1, 1).contains_division());
        assert!(!p("y1^2 + x1", 1, 1).contains_division());
    }

    #[test]
    fn repeated_squaring_matches_naive_powers() {
        for k in -9i32..=9 {
            for base in [0.5, -1.5, 2.0, -3.0] {
                let naive = (0..k.abs()).fold(1.0, |acc: f64, _| acc * base);
                let naive = if k < 0 { 1.0 / naive } else { naive };
                assert!((pow_int(base, k) - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            }
        }
    }

    #[test]
    fn deep_negative_power_differentiates_within_the_grammar() {
        let e = p("y1^-9", 1, 1);
        let g = &e.grad(Axis::Y)[0];
        // value check at y = 2: d/dy y^-9 = -9 y^-10
        let want = -9.0 * pow_int(2.0, -10);
        let got = g.eval(&[0.0], &[2.0]).unwrap();
        assert!((got - want).abs() <= 1e-15);
        // and the printed form must reparse
        let reparsed = p(&g.to_string(), 1, 1);
        assert_eq!(*g, reparsed);
    }
}
