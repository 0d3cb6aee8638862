//! Output formats: canonical JSON, CSV, a minimal XLSX workbook and an SQL
//! script.

mod xlsx;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde_json::{Map, Value};

use crate::model::{
    money_parse, CanonicalField, Currency, ExtractedInvoice, FieldKind, InvoiceStatus, LineItem, NormalizedValue,
};

pub use xlsx::{to_xlsx, to_xlsx_bytes};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Field(CanonicalField),
    Status,
    OverallConfidence,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::Field(f) => f.as_str(),
            Column::Status => "status",
            Column::OverallConfidence => "overall_confidence",
        }
    }
}

impl FromStr for Column {
    type Err = ExportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "status" => Ok(Column::Status),
            "overall_confidence" => Ok(Column::OverallConfidence),
            _ => CanonicalField::from_str(s)
                .map(Column::Field)
                .map_err(|_| ExportError::UnknownColumn(s.to_string())),
        }
    }
}

pub const DEFAULT_COLUMNS: [Column; 11] = [
    Column::Field(CanonicalField::InvoiceNumber),
    Column::Field(CanonicalField::InvoiceDate),
    Column::Field(CanonicalField::DueDate),
    Column::Field(CanonicalField::VendorName),
    Column::Field(CanonicalField::Currency),
    Column::Field(CanonicalField::Subtotal),
    Column::Field(CanonicalField::TaxAmount),
    Column::Field(CanonicalField::TotalAmount),
    Column::Field(CanonicalField::WeightKg),
    Column::Status,
    Column::OverallConfidence,
];

/// Tabular column layout. With a rename map, only the mapped columns are
/// written, in the map's order, under the new headers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExportSchema {
    pub rename: Option<Vec<(Column, String)>>,
}

impl ExportSchema {
    pub fn columns(&self) -> Vec<(Column, String)> {
        match &self.rename {
            Some(r) => r.clone(),
            None => DEFAULT_COLUMNS.iter().map(|c| (*c, c.name().to_string())).collect(),
        }
    }
}

/// One spreadsheet cell. Numbers keep their exact decimal text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Text(String),
    Number(Decimal),
    /// Money: numeric with two fraction digits.
    Money(Decimal),
}

impl Cell {
    /// Text used in CSV and SQL.
    pub fn text(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Number(d) => d.normalize().to_string(),
            Cell::Money(d) => format!("{:.2}", d),
        }
    }
}

fn confidence_decimal(c: f64) -> Decimal {
    Decimal::try_from(c).unwrap_or_default().round_dp(4).normalize()
}

fn cell(inv: &ExtractedInvoice, column: Column) -> Cell {
    match column {
        Column::Status => Cell::Text(inv.status.as_str().to_string()),
        Column::OverallConfidence => Cell::Number(confidence_decimal(inv.overall_confidence)),
        Column::Field(CanonicalField::Currency) => inv
            .currency()
            .map_or(Cell::Empty, |c| Cell::Text(c.as_str().to_string())),
        Column::Field(f) => match inv.get(f).map(|v| &v.normalized) {
            None => Cell::Empty,
            Some(NormalizedValue::Money(m)) => Cell::Money(m.to_decimal()),
            Some(NormalizedValue::Decimal(d)) => Cell::Number(*d),
            Some(v) => Cell::Text(v.display()),
        },
    }
}

/// Header row followed by one row per invoice.
pub fn to_grid(invoices: &[ExtractedInvoice], schema: &ExportSchema) -> Vec<Vec<Cell>> {
    let cols = schema.columns();
    let mut grid = vec![cols.iter().map(|(_, h)| Cell::Text(h.clone())).collect()];
    for inv in invoices {
        grid.push(cols.iter().map(|(c, _)| cell(inv, *c)).collect());
    }
    grid
}

/// Flattened, format-independent view of an exported invoice.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRecord {
    pub fields: BTreeMap<CanonicalField, NormalizedValue>,
    pub line_items: Vec<LineItem>,
    pub status: InvoiceStatus,
    pub overall_confidence: f64,
}

impl CanonicalRecord {
    /// The currency field is filled from the amounts when absent.
    pub fn from_invoice(inv: &ExtractedInvoice) -> Self {
        let mut fields: BTreeMap<_, _> = inv.fields.iter().map(|(k, v)| (*k, v.normalized.clone())).collect();
        if let Some(c) = inv.currency() {
            fields
                .entry(CanonicalField::Currency)
                .or_insert_with(|| NormalizedValue::Text(c.as_str().to_string()));
        }
        CanonicalRecord {
            fields,
            line_items: inv.line_items.clone(),
            status: inv.status,
            overall_confidence: inv.overall_confidence,
        }
    }
}

/// Schema columns first, then the remaining canonical fields, then line items.
fn json_key_order() -> Vec<&'static str> {
    let mut keys: Vec<&str> = DEFAULT_COLUMNS.iter().map(|c| c.name()).collect();
    for f in CanonicalField::ALL {
        if !keys.contains(&f.as_str()) {
            keys.push(f.as_str());
        }
    }
    keys.push("line_items");
    keys
}

fn value_json(v: Option<&NormalizedValue>) -> Value {
    match v {
        None => Value::Null,
        Some(v) => Value::String(v.display()),
    }
}

pub fn record_to_json(r: &CanonicalRecord) -> String {
    let mut obj = Map::new();
    for key in json_key_order() {
        let v = match key {
            "status" => Value::String(r.status.as_str().into()),
            "overall_confidence" => serde_json::json!(r.overall_confidence),
            "line_items" => Value::Array(
                r.line_items
                    .iter()
                    .map(|l| {
                        serde_json::json!({
                            "description": l.description,
                            "quantity": l.quantity.normalize().to_string(),
                            "unit_price": l.unit_price.to_decimal_string(),
                            "amount": l.amount.to_decimal_string(),
                        })
                    })
                    .collect(),
            ),
            k => value_json(r.fields.get(&CanonicalField::from_str(k).expect("canonical key"))),
        };
        obj.insert(key.to_string(), v);
    }
    serde_json::to_string(&Value::Object(obj)).expect("json value serializes")
}

/// Stable JSON for one invoice: schema key order, nulls for absent fields,
/// money as two-digit decimal strings.
pub fn to_canonical_json(inv: &ExtractedInvoice) -> String {
    record_to_json(&CanonicalRecord::from_invoice(inv))
}

fn parse_status(s: &str) -> Option<InvoiceStatus> {
    serde_json::from_value(Value::String(s.to_string())).ok()
}

/// Inverse of [`record_to_json`].
pub fn record_from_json(text: &str) -> Result<CanonicalRecord, ExportError> {
    let bad = |m: &str| ExportError::Malformed(m.to_string());
    let v: Value = serde_json::from_str(text).map_err(|e| ExportError::Malformed(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
    let currency_text = obj.get("currency").and_then(Value::as_str);
    let currency = currency_text
        .and_then(|c| Currency::new(c).ok())
        .unwrap_or(Currency::USD);
    let money = |s: &str| money_parse(s, currency).map_err(|e| ExportError::Malformed(e.to_string()));
    let decimal = |s: &str| Decimal::from_str(s).map_err(|e| ExportError::Malformed(e.to_string()));

    let mut fields = BTreeMap::new();
    for f in CanonicalField::ALL {
        let Some(s) = obj.get(f.as_str()).and_then(Value::as_str) else {
            continue;
        };
        let value = match f.kind() {
            FieldKind::Text | FieldKind::CurrencyCode => NormalizedValue::Text(s.to_string()),
            FieldKind::Date => NormalizedValue::Date(
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| ExportError::Malformed(e.to_string()))?,
            ),
            FieldKind::Money => NormalizedValue::Money(money(s)?),
            FieldKind::Rate | FieldKind::Weight => NormalizedValue::Decimal(decimal(s)?),
        };
        fields.insert(f, value);
    }
    let mut line_items = Vec::new();
    for l in obj.get("line_items").and_then(Value::as_array).into_iter().flatten() {
        let s = |k: &str| l.get(k).and_then(Value::as_str).ok_or_else(|| bad(k));
        line_items.push(LineItem {
            description: s("description")?.to_string(),
            quantity: decimal(s("quantity")?)?,
            unit_price: money(s("unit_price")?)?,
            amount: money(s("amount")?)?,
        });
    }
    Ok(CanonicalRecord {
        fields,
        line_items,
        status: obj
            .get("status")
            .and_then(Value::as_str)
            .and_then(parse_status)
            .ok_or_else(|| bad("status"))?,
        overall_confidence: obj
            .get("overall_confidence")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("overall_confidence"))?,
    })
}

/// JSON array of canonical invoice objects.
pub fn to_json_array(invoices: &[ExtractedInvoice]) -> String {
    let parts: Vec<String> = invoices.iter().map(to_canonical_json).collect();
    format!("[{}]", parts.join(","))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn grid_to_csv(grid: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    for row in grid {
        let line: Vec<String> = row.iter().map(|c| csv_field(&c.text())).collect();
        out.push_str(&line.join(","));
        out.push_str("\r\n");
    }
    out
}

/// RFC 4180 text: header row, CRLF line ends, quoting where needed.
pub fn to_csv(invoices: &[ExtractedInvoice], schema: &ExportSchema) -> String {
    grid_to_csv(&to_grid(invoices, schema))
}

fn sql_ident(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn sql_type(c: Column) -> &'static str {
    match c {
        Column::Status => "VARCHAR(32)",
        Column::OverallConfidence => "DECIMAL(6,4)",
        Column::Field(f) => match f.kind() {
            FieldKind::Date => "DATE",
            FieldKind::Money => "DECIMAL(18,2)",
            FieldKind::Rate | FieldKind::Weight => "DECIMAL(18,6)",
            FieldKind::CurrencyCode => "CHAR(3)",
            FieldKind::Text => "VARCHAR(1024)",
        },
    }
}

/// `CREATE TABLE invoices` plus one INSERT per invoice, ANSI quoting.
pub fn to_sql(invoices: &[ExtractedInvoice], schema: &ExportSchema) -> String {
    let cols = schema.columns();
    let mut out = String::from("CREATE TABLE invoices (\n");
    let defs: Vec<String> = cols
        .iter()
        .map(|(c, h)| format!("  {} {}", sql_ident(h), sql_type(*c)))
        .collect();
    out.push_str(&defs.join(",\n"));
    out.push_str("\n);\n");
    let names: Vec<String> = cols.iter().map(|(_, h)| sql_ident(h)).collect();
    for inv in invoices {
        let values: Vec<String> = cols
            .iter()
            .map(|(c, _)| match cell(inv, *c) {
                Cell::Empty => "NULL".to_string(),
                Cell::Number(_) | Cell::Money(_) => cell(inv, *c).text(),
                Cell::Text(s) if matches!(c, Column::Field(f) if f.kind() == FieldKind::Date) => {
                    format!("DATE '{s}'")
                }
                Cell::Text(s) => format!("'{}'", s.replace('\'', "''")),
            })
            .collect();
        out.push_str(&format!(
            "INSERT INTO invoices ({}) VALUES ({});\n",
            names.join(", "),
            values.join(", ")
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Xlsx,
    Csv,
    Json,
    Sql,
}

impl OutputFormat {
    /// From the file extension; xlsx when there is none.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            None | Some("xlsx") => Some(OutputFormat::Xlsx),
            Some("csv") => Some(OutputFormat::Csv),
            Some("json") => Some(OutputFormat::Json),
            Some("sql") => Some(OutputFormat::Sql),
            _ => None,
        }
    }

    pub fn render(self, invoices: &[ExtractedInvoice], schema: &ExportSchema) -> Vec<u8> {
        match self {
            OutputFormat::Xlsx => to_xlsx_bytes(invoices, schema),
            OutputFormat::Csv => to_csv(invoices, schema).into_bytes(),
            OutputFormat::Json => to_json_array(invoices).into_bytes(),
            OutputFormat::Sql => to_sql(invoices, schema).into_bytes(),
        }
    }
}

/// Write to `path` in the format its extension names, via a temporary file
/// renamed into place.
pub fn write_output(path: &Path, invoices: &[ExtractedInvoice], schema: &ExportSchema) -> Result<(), ExportError> {
    let format = OutputFormat::from_path(path).ok_or_else(|| {
        ExportError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("unsupported output extension: {}", path.display()),
        ))
    })?;
    let bytes = format.render(invoices, schema);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, &bytes)?;
    tmp.persist(path).map_err(|e| ExportError::Io(e.error))?;
    Ok(())
}
