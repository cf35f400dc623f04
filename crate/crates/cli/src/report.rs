use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// One pass/fail check: `value op limit`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub op: Op,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    pub fn new(name: impl Into<String>, value: f64, op: Op, limit: f64) -> Self {
        let pass = match op {
            Op::Lt => value < limit,
            Op::Le => value <= limit,
            Op::Gt => value > limit,
            Op::Ge => value >= limit,
        };
        Self { name: name.into(), value, op, limit, pass }
    }
    pub fn lt(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Op::Lt, limit)
    }
    pub fn le(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Op::Le, limit)
    }
    pub fn gt(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Op::Gt, limit)
    }
    pub fn ge(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Op::Ge, limit)
    }
    /// A yes/no condition as `value ≥ 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Op::Ge, 1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub command: String,
    /// Every resolved flag of the run.
    pub config: Value,
    /// Seconds since the Unix epoch; excluded from run comparisons.
    pub timestamp: u64,
    pub gates: Vec<Gate>,
    pub passed: bool,
    pub body: Value,
}

impl Report {
    pub fn new(command: &str, config: &impl Serialize, gates: Vec<Gate>, body: Value) -> Self {
        let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let passed = gates.iter().all(|g| g.pass);
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
            timestamp,
            gates,
            passed,
            body,
        }
    }
}

/// Rows of serializable structs as CSV with a header from the first row's keys.
pub fn table_csv<T: Serialize>(rows: &[T]) -> Result<String, crate::CliError> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header_done = false;
    for r in rows {
        let Value::Object(m) = serde_json::to_value(r).expect("rows serialize") else {
            return crate::usage("CSV rows must be records");
        };
        if !header_done {
            wr.write_record(m.keys()).map_err(|e| crate::CliError::Usage(e.to_string()))?;
            header_done = true;
        }
        let fields: Vec<String> = m.values().map(|v| v.to_string()).collect();
        wr.write_record(&fields).map_err(|e| crate::CliError::Usage(e.to_string()))?;
    }
    let bytes = wr.into_inner().map_err(|e| crate::CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
