//! Comparison cost rows as linear forms in the network size `N`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CostLedger, MetricsError, CK_BYTES, F_BYTES, INT_BYTES};

/// `base + per_n * N`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lin {
    pub base: u64,
    pub per_n: u64,
}

impl Lin {
    pub fn eval(self, n: u64) -> u64 {
        self.base + self.per_n * n
    }
}

/// A sum of `coefficient * symbol` terms, e.g. `(4+N)E+1H` or `(2N+3)int`.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearForm {
    pub terms: Vec<(Lin, String)>,
}

impl LinearForm {
    pub fn coefficient(&self, symbol: &str) -> Lin {
        self.terms
            .iter()
            .filter(|(_, s)| s == symbol)
            .fold(Lin::default(), |acc, (c, _)| Lin { base: acc.base + c.base, per_n: acc.per_n + c.per_n })
    }

    fn symbols(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(_, s)| s.as_str())
    }
}

fn parse_coefficient(s: &str) -> Result<Lin, String> {
    if s.is_empty() {
        return Ok(Lin { base: 1, per_n: 0 });
    }
    let inner = match s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        Some(i) => i,
        None => return s.parse().map(|base| Lin { base, per_n: 0 }).map_err(|_| format!("bad coefficient `{s}`")),
    };
    let mut lin = Lin::default();
    for part in inner.split('+') {
        match part.strip_suffix('N') {
            Some("") => lin.per_n += 1,
            Some(k) => lin.per_n += k.parse::<u64>().map_err(|_| format!("bad coefficient `{s}`"))?,
            None => lin.base += part.parse::<u64>().map_err(|_| format!("bad coefficient `{s}`"))?,
        }
    }
    Ok(lin)
}

impl FromStr for LinearForm {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, MetricsError> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s == "-" || s.eq_ignore_ascii_case("optional") {
            return Ok(Self::default());
        }
        let mut terms = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        let bytes = s.as_bytes();
        let mut pieces = Vec::new();
        for (i, &b) in bytes.iter().enumerate() {
            match b {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b'+' if depth == 0 => {
                    pieces.push(&s[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        pieces.push(&s[start..]);
        for p in pieces {
            let split = p.rfind(|c: char| c.is_ascii_digit() || c == ')').map(|i| i + 1).unwrap_or(0);
            let (coef, sym) = p.split_at(split);
            if sym.is_empty() {
                return Err(MetricsError::BadForm(format!("term `{p}` has no symbol")));
            }
            terms.push((parse_coefficient(coef).map_err(MetricsError::BadForm)?, sym.to_string()));
        }
        Ok(Self { terms })
    }
}

impl fmt::Display for LinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("-");
        }
        for (i, (c, sym)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            match (c.base, c.per_n) {
                (b, 0) => write!(f, "{b}{sym}")?,
                (0, 1) => write!(f, "N{sym}")?,
                (0, n) => write!(f, "{n}N{sym}")?,
                (b, 1) => write!(f, "({b}+N){sym}")?,
                (b, n) => write!(f, "({n}N+{b}){sym}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowPhase {
    Registration,
    LoginAuth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCostRow {
    pub scheme: String,
    pub phase: RowPhase,
    pub complexity: LinearForm,
    pub messages: LinearForm,
    pub bytes: LinearForm,
    pub time_sync: LinearForm,
}

const COMPLEXITY: [&str; 6] = ["E", "H", "X", "M", "Ex", "T"];
const MESSAGES: [&str; 2] = ["UC", "BC"];
const SIZES: [&str; 3] = ["CK", "int", "f"];

impl SchemeCostRow {
    pub fn parse(
        scheme: &str,
        phase: RowPhase,
        complexity: &str,
        messages: &str,
        bytes: &str,
        time_sync: &str,
    ) -> Result<Self, MetricsError> {
        let row = Self {
            scheme: scheme.to_string(),
            phase,
            complexity: complexity.parse()?,
            messages: messages.parse()?,
            bytes: bytes.parse()?,
            time_sync: time_sync.parse()?,
        };
        let check = |form: &LinearForm, allowed: &[&str]| -> Result<(), MetricsError> {
            match form.symbols().find(|s| !allowed.contains(s)) {
                Some(s) => Err(MetricsError::BadForm(format!("{scheme}: unexpected symbol `{s}`"))),
                None => Ok(()),
            }
        };
        check(&row.complexity, &COMPLEXITY)?;
        check(&row.messages, &MESSAGES)?;
        check(&row.bytes, &SIZES)?;
        check(&row.time_sync, &["T"])?;
        Ok(row)
    }
}

/// Pure evaluation of a row's linear forms at network size `n`. Time
/// synchronization contributes to `t` only; it has no byte cost.
pub fn eval_cost_model(row: &SchemeCostRow, n: u64) -> CostLedger {
    let c = |sym: &str| row.complexity.coefficient(sym).eval(n);
    CostLedger {
        e: c("E"),
        h: c("H"),
        x: c("X"),
        m: c("M"),
        ex: c("Ex"),
        t: c("T") + row.time_sync.coefficient("T").eval(n),
        retrieval_h: 0,
        unicast: row.messages.coefficient("UC").eval(n),
        broadcast: row.messages.coefficient("BC").eval(n),
        bytes: row.bytes.coefficient("CK").eval(n) * CK_BYTES
            + row.bytes.coefficient("int").eval(n) * INT_BYTES
            + row.bytes.coefficient("f").eval(n) * F_BYTES,
    }
}

/// Messages on air when a broadcast reaches `n` nodes.
pub fn message_total(ledger: &CostLedger, n: u64) -> u64 {
    ledger.unicast + ledger.broadcast * n
}

pub const SMSN_USER_SINK: &str = "SMSN (User-Sink)";
pub const SMSN_USER_SENSOR: &str = "SMSN (User-Sensor)";
pub const TSENG: &str = "H. Tseng";
pub const YOO: &str = "Yoo et al.";

/// `(scheme, phase, complexity, messages, bytes, time sync)`.
const ROWS: [(&str, RowPhase, &str, &str, &str, &str); 16] = [
    (TSENG, RowPhase::Registration, "(4+N)E+1H", "2UC+1BC", "(2N+3)int", "-"),
    (TSENG, RowPhase::LoginAuth, "6H+1X", "4UC", "2CK+7int", "1T"),
    (YOO, RowPhase::Registration, "(4+N)E+5H+2X", "2UC+1BC", "(5+N)CK+1int", "-"),
    (YOO, RowPhase::LoginAuth, "19H+2X", "6UC", "5CK+8int", "1T"),
    ("Kumar et al.", RowPhase::Registration, "4H+3X", "2UC", "5CK+3int", "-"),
    ("Kumar et al.", RowPhase::LoginAuth, "14H+2X", "3UC", "6CK+11int", "2T"),
    ("Quan et al.", RowPhase::Registration, "12E+9H+1X+7M", "4UC", "4CK+9int+4f", "4T"),
    ("Quan et al.", RowPhase::LoginAuth, "18H+2X", "4UC", "8CK+16int", "4T"),
    ("Farash et al.", RowPhase::Registration, "4E+6H+2X", "2UC", "4CK+1int", "2T"),
    ("Farash et al.", RowPhase::LoginAuth, "30H+16X", "4UC", "17CK+5int", "4T"),
    ("Y. Lu et al.", RowPhase::Registration, "4E+10H+2X", "2UC", "4CK+1int", "-"),
    ("Y. Lu et al.", RowPhase::LoginAuth, "8E+17H+15X", "4UC", "4CK+18int", "3T"),
    (SMSN_USER_SINK, RowPhase::Registration, "8E+5H", "3UC", "3CK+10int", "-"),
    (SMSN_USER_SINK, RowPhase::LoginAuth, "8E+2H", "3UC", "3CK+8int", "Optional"),
    (SMSN_USER_SENSOR, RowPhase::Registration, "8E+5H", "3UC", "3CK+10int", "-"),
    (SMSN_USER_SENSOR, RowPhase::LoginAuth, "9E+2H", "4UC", "5CK+12int", "Optional"),
];

/// All comparison rows.
pub fn cost_rows() -> Vec<SchemeCostRow> {
    ROWS.iter().map(|(s, p, c, m, b, t)| SchemeCostRow::parse(s, *p, c, m, b, t).expect("built-in rows parse")).collect()
}

/// Scheme names in table order, without duplicates.
pub fn schemes(rows: &[SchemeCostRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.scheme) {
            out.push(r.scheme.clone());
        }
    }
    out
}

pub fn row<'a>(rows: &'a [SchemeCostRow], scheme: &str, phase: RowPhase) -> Option<&'a SchemeCostRow> {
    rows.iter().find(|r| r.scheme == scheme && r.phase == phase)
}
