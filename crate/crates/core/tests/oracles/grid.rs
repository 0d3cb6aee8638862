//! Exported CSV and XLSX read back with independent parsers.

use std::io::{Cursor, Read};

use chrono::NaiveDate;
use invoice_core::export::{grid_to_csv, to_grid, to_xlsx_bytes, Cell, ExportSchema};
use invoice_core::model::{CanonicalField as F, Currency, ExtractedInvoice, InvoiceStatus, Money, NormalizedValue};
use proptest::prelude::*;
use quick_xml::events::Event;
use rust_decimal::Decimal;

use super::fv;

pub fn invoice(number: &str, vendor: &str, total: i64, weight: Option<i64>, conf: f64) -> ExtractedInvoice {
    let mut fields = vec![
        fv(F::InvoiceNumber, NormalizedValue::Text(number.into())),
        fv(
            F::InvoiceDate,
            NormalizedValue::Date(NaiveDate::from_ymd_opt(2024, 1, 31).unwrap()),
        ),
        fv(F::VendorName, NormalizedValue::Text(vendor.into())),
        fv(F::TotalAmount, NormalizedValue::Money(Money::new(total, Currency::EUR))),
    ];
    if let Some(w) = weight {
        fields.push(fv(F::WeightKg, NormalizedValue::Decimal(Decimal::new(w, 1))));
    }
    let mut inv = ExtractedInvoice::new(fields.into_iter().collect(), vec![]);
    inv.status = InvoiceStatus::NeedsReview;
    inv.overall_confidence = conf;
    inv
}

pub fn csv_grid(text: &str) -> Vec<Vec<String>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[derive(Debug, PartialEq)]
pub enum XCell {
    Str(String),
    Num(Decimal, Option<String>),
}

/// Cell grid of sheet1, checking the package parts on the way.
pub fn xlsx_grid(bytes: &[u8]) -> Vec<Vec<Option<XCell>>> {
    let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).expect("valid zip");
    for part in [
        "[Content_Types].xml",
        "_rels/.rels",
        "xl/workbook.xml",
        "xl/_rels/workbook.xml.rels",
        "xl/worksheets/sheet1.xml",
    ] {
        assert!(zip.by_name(part).is_ok(), "missing {part}");
    }
    let mut workbook = String::new();
    zip.by_name("xl/workbook.xml").unwrap().read_to_string(&mut workbook).unwrap();
    assert!(workbook.contains(r#"<sheet name="Invoices""#));
    let mut sheet = String::new();
    zip.by_name("xl/worksheets/sheet1.xml").unwrap().read_to_string(&mut sheet).unwrap();

    let mut reader = quick_xml::Reader::from_str(&sheet);
    let mut rows: Vec<Vec<Option<XCell>>> = Vec::new();
    let mut col = 0usize;
    let mut style: Option<String> = None;
    let mut kind = String::new();
    let mut text = String::new();
    let mut in_value = false;
    loop {
        match reader.read_event().unwrap() {
            Event::Start(e) => match e.name().as_ref() {
                "row" => rows.push(Vec::new()),
                "c" => {
                    let attr = |k: &str| {
                        e.try_get_attribute(k)
                            .unwrap()
                            .map(|a| a.value.into_owned())
                    };
                    let r = attr("r").unwrap();
                    let letters: String = r.chars().take_while(char::is_ascii_uppercase).collect();
                    col = letters.bytes().fold(0, |acc, b| acc * 26 + (b - b'A' + 1) as usize) - 1;
                    style = attr("s");
                    kind = attr("t").unwrap_or_default();
                    text.clear();
                }
                "t" | "v" => in_value = true,
                _ => {}
            },
            Event::Text(t) if in_value => text.push_str(&t.xml10_content()),
            Event::GeneralRef(r) if in_value => {
                let c = r.resolve_char_ref().unwrap().unwrap_or_else(|| {
                    match r.into_inner().as_ref() {
                        "amp" => '&',
                        "lt" => '<',
                        "gt" => '>',
                        "quot" => '"',
                        "apos" => '\'',
                        other => panic!("entity {other}"),
                    }
                });
                text.push(c);
            }
            Event::End(e) => match e.name().as_ref() {
                "t" | "v" => in_value = false,
                "c" => {
                    let row = rows.last_mut().unwrap();
                    row.resize_with(row.len().max(col + 1), || None);
                    row[col] = Some(if kind == "inlineStr" {
                        XCell::Str(text.clone())
                    } else {
                        XCell::Num(text.parse().unwrap(), style.clone())
                    });
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    rows
}

pub fn expected_xlsx(grid: &[Vec<Cell>]) -> Vec<Vec<Option<XCell>>> {
    grid.iter()
        .map(|row| {
            let mut out: Vec<Option<XCell>> = row
                .iter()
                .map(|c| match c {
                    Cell::Empty => None,
                    Cell::Text(s) => Some(XCell::Str(s.clone())),
                    Cell::Number(d) => Some(XCell::Num(*d, None)),
                    Cell::Money(d) => Some(XCell::Num(*d, Some("1".into()))),
                })
                .collect();
            while matches!(out.last(), Some(None)) {
                out.pop();
            }
            out
        })
        .collect()
}

/// (invoice number, vendor, total minor, weight tenths, confidence)
pub type Row = (String, String, i64, Option<i64>, f64);

pub fn field_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,24}",
        "[a-z ,\"\r\n\t]{0,16}",
        "[\\PC]{0,12}",
    ]
}

pub fn csv_rows() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(
        (field_text(), field_text(), -10i64.pow(12)..10i64.pow(12), prop::option::of(0i64..10_000_000), 0.0f64..1.0),
        0..6,
    )
}

pub fn xlsx_rows() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(
        (
            "[ -~\n\r\t]{0,24}",
            "[\\PC]{0,12}",
            -10i64.pow(12)..10i64.pow(12),
            prop::option::of(0i64..10_000_000),
            0.0f64..1.0,
        ),
        0..6,
    )
}

fn invoices(rows: &[Row]) -> Vec<ExtractedInvoice> {
    rows.iter().map(|(n, v, t, w, c)| invoice(n, v, *t, *w, *c)).collect()
}

pub fn csv_reparses(rows: Vec<Row>) -> Result<(), TestCaseError> {
    let grid = to_grid(&invoices(&rows), &ExportSchema::default());
    let text: Vec<Vec<String>> = grid.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
    prop_assert_eq!(csv_grid(&grid_to_csv(&grid)), text);
    Ok(())
}

pub fn xlsx_reparses(rows: Vec<Row>) -> Result<(), TestCaseError> {
    let invoices = invoices(&rows);
    let schema = ExportSchema::default();
    let grid = to_grid(&invoices, &schema);
    prop_assert_eq!(xlsx_grid(&to_xlsx_bytes(&invoices, &schema)), expected_xlsx(&grid));
    Ok(())
}
