//! Indentation-driven structural scan over the token stream.
//!
//! This is not a Python grammar. Block headers are recognised by their leading
//! keyword and the first top-level colon; expressions are scanned for
//! conditional expressions, comprehension clauses, lambdas and boolean
//! operators. Anything unrecognised is still tokenized and counted, with a
//! warning recorded on the tree.

use serde::Serialize;

use super::lexer::{tokenize, LogicalLine, Token, TokenKind};
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    If,
    Elif,
    Else,
    For,
    While,
    Except,
    With,
    Ternary,
    /// `for` clause of a comprehension or generator expression.
    Comprehension,
    /// `if` filter of a comprehension.
    ComprehensionIf,
}

impl BranchKind {
    /// Whether this construct is a decision point for cyclomatic complexity.
    pub fn is_decision(self) -> bool {
        matches!(
            self,
            BranchKind::If
                | BranchKind::Elif
                | BranchKind::For
                | BranchKind::While
                | BranchKind::Except
                | BranchKind::Ternary
                | BranchKind::ComprehensionIf
        )
    }

    /// Cognitive increment for this construct at the given nesting depth.
    pub fn cognitive_increment(self, depth: usize) -> usize {
        match self {
            BranchKind::If | BranchKind::For | BranchKind::While | BranchKind::Except | BranchKind::Ternary => {
                1 + depth
            }
            BranchKind::Elif | BranchKind::Else => 1,
            BranchKind::With | BranchKind::Comprehension | BranchKind::ComprehensionIf => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchNode {
    pub kind: BranchKind,
    /// Cognitive nesting depth at which the construct appears.
    pub depth: usize,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolOp {
    And,
    Or,
}

/// The boolean operators of one expression, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoolSequence {
    pub ops: Vec<BoolOp>,
    pub line: usize,
}

impl BoolSequence {
    /// Number of maximal runs of the same operator (`a and b or c` has two).
    pub fn runs(&self) -> usize {
        if self.ops.is_empty() {
            return 0;
        }
        1 + self.ops.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Operator,
    Operand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassifiedToken {
    pub class: TokenClass,
    pub lexeme: String,
}

/// Statements, branches, boolean sequences and tokens belonging to one scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScopeNode {
    pub statements: usize,
    pub branches: Vec<BranchNode>,
    pub bool_sequences: Vec<BoolSequence>,
    pub tokens: Vec<ClassifiedToken>,
}

impl ScopeNode {
    pub fn decision_points(&self) -> usize {
        let branches = self.branches.iter().filter(|b| b.kind.is_decision()).count();
        let bools: usize = self.bool_sequences.iter().map(|s| s.ops.len()).sum();
        branches + bools
    }

    pub fn cognitive(&self) -> usize {
        let branches: usize = self.branches.iter().map(|b| b.kind.cognitive_increment(b.depth)).sum();
        let bools: usize = self.bool_sequences.iter().map(BoolSequence::runs).sum();
        branches + bools
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionNode {
    pub name: String,
    pub line: usize,
    pub scope: ScopeNode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StructuralTree {
    pub functions: Vec<FunctionNode>,
    pub module: ScopeNode,
    /// Physical lines covered by at least one token.
    pub code_lines: usize,
    pub warnings: Vec<String>,
}

impl StructuralTree {
    pub fn scopes(&self) -> impl Iterator<Item = &ScopeNode> {
        std::iter::once(&self.module).chain(self.functions.iter().map(|f| &f.scope))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &ClassifiedToken> {
        self.scopes().flat_map(|s| s.tokens.iter())
    }

    pub fn branches(&self) -> impl Iterator<Item = &BranchNode> {
        self.scopes().flat_map(|s| s.branches.iter())
    }

    pub fn bool_sequences(&self) -> impl Iterator<Item = &BoolSequence> {
        self.scopes().flat_map(|s| s.bool_sequences.iter())
    }

    pub fn statements(&self) -> usize {
        self.scopes().map(|s| s.statements).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.code_lines == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Function(usize),
    Nesting,
    Plain,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    level: usize,
    kind: BlockKind,
}

const COMPOUND: &[&str] = &["if", "elif", "else", "for", "while", "try", "except", "finally", "with", "def", "class"];

pub fn parse_structure(source: &str) -> Result<StructuralTree, ParseError> {
    let lines = tokenize(source)?;
    let mut tree = StructuralTree { code_lines: count_code_lines(&lines), ..Default::default() };
    let mut stack: Vec<Block> = Vec::new();

    for line in &lines {
        while stack.last().is_some_and(|b| b.level >= line.level) {
            stack.pop();
        }
        let func = stack.iter().rev().find_map(|b| match b.kind {
            BlockKind::Function(i) => Some(i),
            _ => None,
        });
        let depth = stack
            .iter()
            .rev()
            .take_while(|b| !matches!(b.kind, BlockKind::Function(_)))
            .filter(|b| b.kind == BlockKind::Nesting)
            .count();
        scan_line(&mut tree, &mut stack, line, func, depth);
    }
    Ok(tree)
}

fn count_code_lines(lines: &[LogicalLine]) -> usize {
    let mut covered = std::collections::BTreeSet::new();
    for tok in lines.iter().flat_map(|l| l.tokens.iter()) {
        covered.extend(tok.line..=tok.end_line);
    }
    covered.len()
}

fn scope_mut(tree: &mut StructuralTree, func: Option<usize>) -> &mut ScopeNode {
    match func {
        Some(i) => &mut tree.functions[i].scope,
        None => &mut tree.module,
    }
}

fn scan_line(tree: &mut StructuralTree, stack: &mut Vec<Block>, line: &LogicalLine, func: Option<usize>, depth: usize) {
    let toks = &line.tokens;
    let lead = usize::from(toks[0].is_keyword("async") && toks.len() > 1);
    let head = &toks[lead];
    let keyword = (head.kind == TokenKind::Keyword && COMPOUND.contains(&head.text.as_str())).then_some(head.text.as_str());
    let colon = header_colon(toks);

    // Unknown block headers (`match`, `case`, ...) keep their nesting structure.
    let generic_header = keyword.is_none() && colon.is_some_and(|c| c == toks.len() - 1) && looks_like_soft_header(toks);

    let Some(colon) = colon.filter(|_| keyword.is_some() || generic_header) else {
        let scope = scope_mut(tree, func);
        classify_into(scope, toks);
        scan_simple_statements(scope, toks, depth);
        return;
    };

    let header = &toks[..=colon];
    let body = &toks[colon + 1..];

    if let Some("def") = keyword {
        let name = toks.get(lead + 1).map(|t| t.text.clone()).unwrap_or_default();
        scope_mut(tree, func).statements += 1;
        tree.functions.push(FunctionNode { name, line: head.line, scope: ScopeNode::default() });
        let idx = tree.functions.len() - 1;
        let scope = &mut tree.functions[idx].scope;
        classify_into(scope, header);
        scan_expression(scope, &header[lead + 1..header.len() - 1], 0);
        stack.push(Block { level: line.level, kind: BlockKind::Function(idx) });
        if !body.is_empty() {
            classify_into(scope, body);
            scan_simple_statements(scope, body, 0);
        }
        return;
    }

    let scope = scope_mut(tree, func);
    scope.statements += 1;
    classify_into(scope, header);
    let branch = match keyword {
        Some("if") => Some(BranchKind::If),
        Some("elif") => Some(BranchKind::Elif),
        Some("else") => Some(BranchKind::Else),
        Some("for") => Some(BranchKind::For),
        Some("while") => Some(BranchKind::While),
        Some("except") => Some(BranchKind::Except),
        Some("with") => Some(BranchKind::With),
        _ => None,
    };
    if let Some(kind) = branch {
        scope.branches.push(BranchNode { kind, depth, line: head.line });
    }
    let expr_start = if keyword.is_some() { lead + 1 } else { lead };
    scan_expression(scope, &header[expr_start..header.len() - 1], depth);

    let nests = matches!(keyword, Some("if" | "elif" | "else" | "for" | "while" | "except"));
    let block = Block { level: line.level, kind: if nests { BlockKind::Nesting } else { BlockKind::Plain } };
    if generic_header {
        tree.warnings.push(format!("line {}: unrecognised block header `{}`", head.line, head.text));
    }
    stack.push(block);
    if !body.is_empty() {
        let scope = scope_mut(tree, func);
        classify_into(scope, body);
        scan_simple_statements(scope, body, depth + usize::from(nests));
    }
}

fn looks_like_soft_header(toks: &[Token]) -> bool {
    toks[0].kind == TokenKind::Name && toks.len() >= 2 && !toks[1].is_op("=") && !toks[1].is_op(":")
}

/// Index of the colon terminating a block header: the first colon outside
/// brackets that is not claimed by a preceding top-level `lambda`.
fn header_colon(toks: &[Token]) -> Option<usize> {
    let mut depth = 0usize;
    let mut lambdas = 0usize;
    for (i, t) in toks.iter().enumerate() {
        match (t.kind, t.text.as_str()) {
            (TokenKind::Op, "(" | "[" | "{") => depth += 1,
            (TokenKind::Op, ")" | "]" | "}") => depth = depth.saturating_sub(1),
            (TokenKind::Keyword, "lambda") if depth == 0 => lambdas += 1,
            (TokenKind::Op, ":") if depth == 0 => {
                if lambdas > 0 {
                    lambdas -= 1;
                } else {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn scan_simple_statements(scope: &mut ScopeNode, toks: &[Token], depth: usize) {
    let mut bracket = 0usize;
    let mut start = 0usize;
    for (i, t) in toks.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" if t.kind == TokenKind::Op => bracket += 1,
            ")" | "]" | "}" if t.kind == TokenKind::Op => bracket = bracket.saturating_sub(1),
            ";" if t.kind == TokenKind::Op && bracket == 0 => {
                if i > start {
                    scope.statements += 1;
                    scan_expression(scope, &toks[start..i], depth);
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < toks.len() {
        scope.statements += 1;
        scan_expression(scope, &toks[start..], depth);
    }
}

#[derive(Debug, Clone, Copy)]
struct Group {
    comprehension: bool,
    seen_for: bool,
}

/// Records conditional expressions, comprehension clauses and boolean
/// operators found in an expression token run.
fn scan_expression(scope: &mut ScopeNode, toks: &[Token], base_depth: usize) {
    if toks.is_empty() {
        return;
    }
    let comprehension_groups = find_comprehension_groups(toks);
    let mut groups: Vec<Group> = Vec::new();
    let mut lambdas: Vec<usize> = Vec::new();
    let mut ops = Vec::new();
    let first_line = toks[0].line;

    for (i, t) in toks.iter().enumerate() {
        let extra = groups.iter().filter(|g| g.comprehension).count() + lambdas.len();
        match (t.kind, t.text.as_str()) {
            (TokenKind::Op, "(" | "[" | "{") => {
                groups.push(Group { comprehension: comprehension_groups.contains(&i), seen_for: false })
            }
            (TokenKind::Op, ")" | "]" | "}") => {
                groups.pop();
                lambdas.retain(|&lvl| lvl <= groups.len());
            }
            (TokenKind::Op, ",") => lambdas.retain(|&lvl| lvl < groups.len()),
            (TokenKind::Keyword, "lambda") => lambdas.push(groups.len()),
            (TokenKind::Keyword, "and") => ops.push(BoolOp::And),
            (TokenKind::Keyword, "or") => ops.push(BoolOp::Or),
            (TokenKind::Keyword, "for") if !groups.is_empty() => {
                if let Some(g) = groups.last_mut() {
                    g.seen_for = true;
                }
                scope.branches.push(BranchNode { kind: BranchKind::Comprehension, depth: base_depth + extra, line: t.line });
            }
            (TokenKind::Keyword, "if") => {
                let in_filter = groups.last().is_some_and(|g| g.comprehension && g.seen_for);
                let kind = if in_filter { BranchKind::ComprehensionIf } else { BranchKind::Ternary };
                scope.branches.push(BranchNode { kind, depth: base_depth + extra, line: t.line });
            }
            _ => {}
        }
    }
    if !ops.is_empty() {
        scope.bool_sequences.push(BoolSequence { ops, line: first_line });
    }
}

/// Opening-bracket indices whose own level contains a `for` keyword.
fn find_comprehension_groups(toks: &[Token]) -> std::collections::HashSet<usize> {
    let mut open: Vec<usize> = Vec::new();
    let mut found = std::collections::HashSet::new();
    for (i, t) in toks.iter().enumerate() {
        match (t.kind, t.text.as_str()) {
            (TokenKind::Op, "(" | "[" | "{") => open.push(i),
            (TokenKind::Op, ")" | "]" | "}") => {
                open.pop();
            }
            (TokenKind::Keyword, "for") => {
                if let Some(&o) = open.last() {
                    found.insert(o);
                }
            }
            _ => {}
        }
    }
    found
}

/// Keywords and punctuation are operators; identifiers and literals are
/// operands. A bracket pair is a single operator recorded at its opener.
fn classify_into(scope: &mut ScopeNode, toks: &[Token]) {
    for t in toks {
        let classified = match t.kind {
            TokenKind::Name | TokenKind::Number | TokenKind::Str => {
                ClassifiedToken { class: TokenClass::Operand, lexeme: t.text.clone() }
            }
            TokenKind::Keyword if matches!(t.text.as_str(), "True" | "False" | "None") => {
                ClassifiedToken { class: TokenClass::Operand, lexeme: t.text.clone() }
            }
            TokenKind::Keyword => ClassifiedToken { class: TokenClass::Operator, lexeme: t.text.clone() },
            TokenKind::Op => match t.text.as_str() {
                ")" | "]" | "}" => continue,
                "(" => ClassifiedToken { class: TokenClass::Operator, lexeme: "()".into() },
                "[" => ClassifiedToken { class: TokenClass::Operator, lexeme: "[]".into() },
                "{" => ClassifiedToken { class: TokenClass::Operator, lexeme: "{}".into() },
                _ => ClassifiedToken { class: TokenClass::Operator, lexeme: t.text.clone() },
            },
        };
        scope.tokens.push(classified);
    }
}
