use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::embedding::PageRef;
use crate::error::{Error, Result};

/// Query categories of the benchmark, each with a two-letter id prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Visual,
    Textual,
    MultiModal,
    Tabular,
    Numerical,
    MultiPage,
    Conceptual,
}

/// Category sizes of the standard 75-query benchmark.
pub const STANDARD_CATEGORY_COUNTS: [(Category, usize); 7] = [
    (Category::Visual, 9),
    (Category::Textual, 14),
    (Category::MultiModal, 10),
    (Category::Tabular, 7),
    (Category::Numerical, 8),
    (Category::MultiPage, 14),
    (Category::Conceptual, 13),
];

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Visual,
        Category::Textual,
        Category::MultiModal,
        Category::Tabular,
        Category::Numerical,
        Category::MultiPage,
        Category::Conceptual,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Category::Visual => "VI",
            Category::Textual => "TX",
            Category::MultiModal => "MM",
            Category::Tabular => "TB",
            Category::Numerical => "NU",
            Category::MultiPage => "MP",
            Category::Conceptual => "CP",
        }
    }

    /// Name used in benchmark files.
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Visual => "Visual",
            Category::Textual => "Textual",
            Category::MultiModal => "MultiModal",
            Category::Tabular => "Tabular",
            Category::Numerical => "Numerical",
            Category::MultiPage => "MultiPage",
            Category::Conceptual => "Conceptual",
        }
    }

    /// Human label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Category::MultiModal => "Multi-Modal",
            Category::MultiPage => "Multi-Page",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    /// Accepts the file name, the table label or the id prefix, ignoring
    /// case, spaces, `-` and `_`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().to_lowercase() == key || c.prefix().to_lowercase() == key)
            .ok_or_else(|| Error::InvalidQuery(alloc::format!("unknown category `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkQuery {
    pub id: String,
    pub category: Category,
    pub text: String,
}

impl BenchmarkQuery {
    pub fn new(id: impl Into<String>, category: Category, text: impl Into<String>) -> Result<Self> {
        let (id, text) = (id.into(), text.into());
        if id.trim().is_empty() {
            return Err(Error::InvalidQuery("query id is empty".into()));
        }
        if text.trim().is_empty() {
            return Err(Error::InvalidQuery(alloc::format!("query {id} has empty text")));
        }
        Ok(Self { id, category, text })
    }

    /// Whether the id carries its category prefix, e.g. `MP-14`.
    pub fn prefix_matches(&self) -> bool {
        self.id
            .split_once('-')
            .is_some_and(|(prefix, n)| prefix == self.category.prefix() && !n.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub query_id: String,
    pub page: PageRef,
    pub relevant: bool,
}

/// Binary relevance judgments, kept in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    entries: Vec<GroundTruthEntry>,
}

impl GroundTruth {
    pub fn new(entries: Vec<GroundTruthEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[GroundTruthEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: GroundTruthEntry) {
        self.entries.push(entry);
    }

    /// Pages judged relevant for `query_id`.
    pub fn relevant_pages(&self, query_id: &str) -> BTreeSet<PageRef> {
        self.entries
            .iter()
            .filter(|e| e.relevant && e.query_id == query_id)
            .map(|e| e.page.clone())
            .collect()
    }

    /// Relevant sets for every query id in one pass.
    pub fn relevant_by_query(&self) -> BTreeMap<&str, BTreeSet<PageRef>> {
        let mut out: BTreeMap<&str, BTreeSet<PageRef>> = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.relevant) {
            out.entry(e.query_id.as_str()).or_default().insert(e.page.clone());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationIssue {
    /// No relevant page is recorded for the query.
    Unanswerable { query_id: String },
    /// A judgment references a query id that is not in the benchmark.
    Dangling { query_id: String },
    DuplicateQueryId { query_id: String },
    DuplicateJudgment { query_id: String, page: PageRef },
    PrefixMismatch { query_id: String, category: Category },
    CountMismatch { category: Category, expected: usize, found: usize },
}

impl ValidationIssue {
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationIssue::Unanswerable { .. } => "unanswerable",
            ValidationIssue::Dangling { .. } => "dangling",
            ValidationIssue::DuplicateQueryId { .. } => "duplicate-id",
            ValidationIssue::DuplicateJudgment { .. } => "duplicate-judgment",
            ValidationIssue::PrefixMismatch { .. } => "prefix-mismatch",
            ValidationIssue::CountMismatch { .. } => "count-mismatch",
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = self.kind();
        match self {
            ValidationIssue::Unanswerable { query_id } => {
                write!(f, "{kind}: {query_id} has no relevant ground-truth page")
            }
            ValidationIssue::Dangling { query_id } => {
                write!(f, "{kind}: ground truth references unknown query {query_id}")
            }
            ValidationIssue::DuplicateQueryId { query_id } => write!(f, "{kind}: {query_id} appears more than once"),
            ValidationIssue::DuplicateJudgment { query_id, page } => {
                write!(f, "{kind}: {query_id} judges {page} more than once")
            }
            ValidationIssue::PrefixMismatch { query_id, category } => {
                write!(f, "{kind}: {query_id} is {category} but lacks prefix {}-", category.prefix())
            }
            ValidationIssue::CountMismatch { category, expected, found } => {
                write!(f, "{kind}: {category} has {found} queries, expected {expected}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub category_counts: BTreeMap<Category, usize>,
    pub total_queries: usize,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, kind: &str) -> usize {
        self.issues.iter().filter(|i| i.kind() == kind).count()
    }
}

/// Checks the benchmark against its ground truth. Never fails; every
/// problem is listed in the returned report.
pub fn validate_benchmark(
    queries: &[BenchmarkQuery],
    ground_truth: &GroundTruth,
    expected_counts: Option<&[(Category, usize)]>,
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut ids = BTreeSet::new();
    let mut category_counts = BTreeMap::new();
    for q in queries {
        if !ids.insert(q.id.as_str()) {
            issues.push(ValidationIssue::DuplicateQueryId { query_id: q.id.clone() });
        }
        if !q.prefix_matches() {
            issues.push(ValidationIssue::PrefixMismatch { query_id: q.id.clone(), category: q.category });
        }
        *category_counts.entry(q.category).or_insert(0usize) += 1;
    }

    let mut judged = BTreeSet::new();
    let mut dangling = BTreeSet::new();
    for e in ground_truth.entries() {
        if !judged.insert((e.query_id.as_str(), &e.page)) {
            issues.push(ValidationIssue::DuplicateJudgment { query_id: e.query_id.clone(), page: e.page.clone() });
        }
        if !ids.contains(e.query_id.as_str()) && dangling.insert(e.query_id.as_str()) {
            issues.push(ValidationIssue::Dangling { query_id: e.query_id.clone() });
        }
    }

    let relevant = ground_truth.relevant_by_query();
    let mut reported = BTreeSet::new();
    for q in queries {
        if !relevant.contains_key(q.id.as_str()) && reported.insert(q.id.as_str()) {
            issues.push(ValidationIssue::Unanswerable { query_id: q.id.clone() });
        }
    }

    if let Some(expected) = expected_counts {
        for &(category, want) in expected {
            let found = category_counts.get(&category).copied().unwrap_or(0);
            if found != want {
                issues.push(ValidationIssue::CountMismatch { category, expected: want, found });
            }
        }
    }

    ValidationReport { issues, category_counts, total_queries: queries.len() }
}
