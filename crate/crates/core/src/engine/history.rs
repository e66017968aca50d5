use std::fmt::Write as _;

/// Column layout of `history.csv`.
pub const HISTORY_HEADER: &str = "iter,loss_A,loss_B,valid_P@1_A,valid_P@1_B,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss_a: f64,
    pub loss_b: f64,
    /// Validation P@1 of A and B, present every `eval_every` iterations.
    pub valid_p_at_1: Option<(f64, f64)>,
    pub wall_ms: Option<u64>,
}

/// Append-only per-iteration log of a co-teaching run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    records: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if `record.iter` does not increase.
    pub fn push(&mut self, record: IterationRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iter > last.iter, "history iterations must increase");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(iter, P@1 of A, P@1 of B)` for every evaluated iteration.
    pub fn validation_curve(&self) -> Vec<(usize, f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.valid_p_at_1.map(|(a, b)| (r.iter, a, b)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},", r.iter, r.loss_a, r.loss_b);
            if let Some((a, b)) = r.valid_p_at_1 {
                let _ = write!(out, "{a},{b},");
            } else {
                out.push_str(",,");
            }
            if let Some(ms) = r.wall_ms {
                let _ = write!(out, "{ms}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HISTORY_HEADER => {}
            _ => return Err(format!("line 1: expected header {HISTORY_HEADER:?}")),
        }
        let mut history = RunHistory::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(format!("line {lineno}: expected 6 columns, found {}", cols.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {lineno}: invalid number {s:?}"));
            let iter = cols[0]
                .parse::<usize>()
                .map_err(|_| format!("line {lineno}: invalid iteration {:?}", cols[0]))?;
            if history.records.last().is_some_and(|r| r.iter >= iter) {
                return Err(format!("line {lineno}: iterations must increase"));
            }
            let valid = match (cols[3], cols[4]) {
                ("", "") => None,
                (a, b) => Some((num(a)?, num(b)?)),
            };
            let wall_ms = match cols[5] {
                "" => None,
                s => Some(s.parse().map_err(|_| format!("line {lineno}: invalid wall_ms {s:?}"))?),
            };
            history.push(IterationRecord {
                iter,
                loss_a: num(cols[1])?,
                loss_b: num(cols[2])?,
                valid_p_at_1: valid,
                wall_ms,
            });
        }
        Ok(history)
    }
}
