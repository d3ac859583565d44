//! Code complexity metrics for Python snippets.
//!
//! Five metrics are computed from a [`StructuralTree`]: physical lines of code,
//! cyclomatic complexity, Halstead volume, cognitive complexity and the
//! maintainability index. Their weighted sum is the combined complexity score
//! used to split queries into easy and hard sets.

pub mod lexer;
pub mod structure;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use structure::{
    parse_structure, BoolOp, BoolSequence, BranchKind, BranchNode, ClassifiedToken, FunctionNode, ScopeNode,
    StructuralTree, TokenClass,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub loc: usize,
    pub cyclomatic: usize,
    pub halstead_volume: f64,
    pub cognitive: usize,
    pub maintainability: f64,
    pub combined: f64,
}

impl ComplexityReport {
    /// Metric values in weight order: loc, cyclomatic, volume, cognitive, MI.
    pub fn values(&self) -> [f64; 5] {
        [self.loc as f64, self.cyclomatic as f64, self.halstead_volume, self.cognitive as f64, self.maintainability]
    }

    /// Recomputes `combined` under new weights.
    pub fn reweight(&mut self, weights: &MetricWeights) {
        self.combined = combined(self, weights);
    }
}

/// Per-metric weights of the combined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct MetricWeights {
    pub loc: f64,
    pub cyclomatic: f64,
    pub halstead_volume: f64,
    pub cognitive: f64,
    pub maintainability: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl MetricWeights {
    pub fn uniform(w: f64) -> Self {
        Self { loc: w, cyclomatic: w, halstead_volume: w, cognitive: w, maintainability: w }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.loc, self.cyclomatic, self.halstead_volume, self.cognitive, self.maintainability]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid metric weights: {0}")]
pub struct WeightsError(String);

impl TryFrom<[f64; 5]> for MetricWeights {
    type Error = WeightsError;

    fn try_from(w: [f64; 5]) -> Result<Self, Self::Error> {
        if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(WeightsError(format!("weights must be finite and nonnegative, got {bad}")));
        }
        Ok(Self { loc: w[0], cyclomatic: w[1], halstead_volume: w[2], cognitive: w[3], maintainability: w[4] })
    }
}

impl From<MetricWeights> for [f64; 5] {
    fn from(w: MetricWeights) -> Self {
        w.as_array()
    }
}

impl FromStr for MetricWeights {
    type Err = WeightsError;

    /// Parses `w1,w2,w3,w4,w5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| WeightsError(format!("{p:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        let arr: [f64; 5] =
            parts.try_into().map_err(|v: Vec<f64>| WeightsError(format!("expected 5 weights, got {}", v.len())))?;
        Self::try_from(arr)
    }
}

impl fmt::Display for MetricWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d, e] = self.as_array();
        write!(f, "{a},{b},{c},{d},{e}")
    }
}

/// Physical lines containing at least one non-comment, non-whitespace token.
///
/// Falls back to a line-by-line scan when the source cannot be tokenized.
pub fn loc(source: &str) -> usize {
    match lexer::tokenize(source) {
        Ok(lines) => {
            let mut covered = std::collections::BTreeSet::new();
            for t in lines.iter().flat_map(|l| l.tokens.iter()) {
                covered.extend(t.line..=t.end_line);
            }
            covered.len()
        }
        Err(_) => source
            .lines()
            .filter(|l| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .count(),
    }
}

/// One plus the decision points of each function, plus module-scope decision
/// points. Code without functions is treated as a single module-level unit.
pub fn cyclomatic(tree: &StructuralTree) -> usize {
    if tree.is_empty() {
        return 0;
    }
    let module = tree.module.decision_points();
    if tree.functions.is_empty() {
        return 1 + module;
    }
    tree.functions.iter().map(|f| 1 + f.scope.decision_points()).sum::<usize>() + module
}

/// Counts (distinct operators, distinct operands, total operators, total operands).
pub fn halstead_counts(tree: &StructuralTree) -> (usize, usize, usize, usize) {
    let mut ops = HashSet::new();
    let mut operands = HashSet::new();
    let (mut n1, mut n2) = (0, 0);
    for t in tree.tokens() {
        match t.class {
            TokenClass::Operator => {
                ops.insert(t.lexeme.as_str());
                n1 += 1;
            }
            TokenClass::Operand => {
                operands.insert(t.lexeme.as_str());
                n2 += 1;
            }
        }
    }
    (ops.len(), operands.len(), n1, n2)
}

/// Halstead volume `N * log2(h)`; zero when the vocabulary has fewer than two entries.
pub fn halstead_volume(tree: &StructuralTree) -> f64 {
    let (h1, h2, n1, n2) = halstead_counts(tree);
    let vocabulary = h1 + h2;
    if vocabulary < 2 {
        return 0.0;
    }
    (n1 + n2) as f64 * (vocabulary as f64).log2()
}

pub fn cognitive(tree: &StructuralTree) -> usize {
    tree.scopes().map(ScopeNode::cognitive).sum()
}

/// Classic maintainability index rescaled to [0, 100].
pub fn maintainability(loc: usize, cyclomatic: usize, volume: f64) -> f64 {
    let raw = 171.0 - 5.2 * volume.max(1.0).ln() - 0.23 * cyclomatic as f64 - 16.2 * (loc.max(1) as f64).ln();
    (100.0 * raw / 171.0).clamp(0.0, 100.0)
}

pub fn combined(report: &ComplexityReport, weights: &MetricWeights) -> f64 {
    report.values().iter().zip(weights.as_array()).map(|(v, w)| v * w).sum()
}

/// Full pipeline: parse, compute every metric and the weighted combination.
pub fn analyze(source: &str, weights: &MetricWeights) -> Result<ComplexityReport, ParseError> {
    let tree = parse_structure(source)?;
    for w in &tree.warnings {
        log::warn!("{w}");
    }
    Ok(report_for(&tree, weights))
}

pub fn report_for(tree: &StructuralTree, weights: &MetricWeights) -> ComplexityReport {
    let loc = tree.code_lines;
    let cyclomatic = cyclomatic(tree);
    let halstead_volume = halstead_volume(tree);
    let mut report = ComplexityReport {
        loc,
        cyclomatic,
        halstead_volume,
        cognitive: cognitive(tree),
        maintainability: maintainability(loc, cyclomatic, halstead_volume),
        combined: 0.0,
    };
    report.reweight(weights);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(src: &str) -> StructuralTree {
        parse_structure(src).unwrap()
    }

    #[test]
    fn loc_examples() {
        assert_eq!(loc(""), 0);
        assert_eq!(loc("x=1\n# note\n\ny=2"), 2);
        assert_eq!(loc("def f():\n  return 0"), 2);
        // Unterminated string falls back to the line scan.
        assert_eq!(loc("x = '\n# c\ny"), 2);
    }

    #[test]
    fn cyclomatic_examples() {
        assert_eq!(cyclomatic(&tree("def f():\n  return 0")), 1);
        assert_eq!(cyclomatic(&tree("for x in y:\n  if x:\n    pass")), 3);
        assert_eq!(cyclomatic(&tree("if a and b:\n  pass")), 3);
        assert_eq!(cyclomatic(&tree("")), 0);
    }

    #[test]
    fn cyclomatic_sums_functions_and_module() {
        let src = "def f(x):\n  if x:\n    return 1\n  return 0\ndef g():\n  pass\nif z:\n  f(1)\n";
        assert_eq!(cyclomatic(&tree(src)), 2 + 1 + 1);
    }

    #[test]
    fn halstead_examples() {
        assert!((halstead_volume(&tree("a = b + c")) - 5.0 * 5f64.log2()).abs() < 1e-12);
        assert_eq!(halstead_volume(&tree("x")), 0.0);
        assert!((halstead_volume(&tree("a = a + a")) - 5.0 * 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn cognitive_examples() {
        assert_eq!(cognitive(&tree("if x:\n  pass")), 1);
        assert_eq!(cognitive(&tree("for x in y:\n  if x:\n    pass")), 3);
        assert_eq!(cognitive(&tree("if a and b or c:\n  pass")), 3);
    }

    #[test]
    fn maintainability_examples() {
        let mi = maintainability(1, 1, 11.6096);
        assert!((mi - 92.41).abs() < 0.01, "{mi}");
        assert_eq!(maintainability(0, 0, 0.0), 100.0);
        assert_eq!(maintainability(100_000, 10_000, 1e12), 0.0);
    }

    #[test]
    fn combined_examples() {
        let r = ComplexityReport {
            loc: 2,
            cyclomatic: 1,
            halstead_volume: 11.6096,
            cognitive: 0,
            maintainability: 92.41,
            combined: 0.0,
        };
        assert_eq!(combined(&r, &MetricWeights::uniform(0.0)), 0.0);
        assert!((combined(&r, &MetricWeights::default()) - 107.0196).abs() < 1e-9);
    }

    #[test]
    fn weights_parse() {
        let w: MetricWeights = "1,0.5,0,2,1".parse().unwrap();
        assert_eq!(w.as_array(), [1.0, 0.5, 0.0, 2.0, 1.0]);
        assert!("1,2".parse::<MetricWeights>().is_err());
        assert!("1,2,3,4,-1".parse::<MetricWeights>().is_err());
    }
}
