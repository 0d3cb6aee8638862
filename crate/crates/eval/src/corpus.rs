//! Seeded invoice content, page layouts and the on-disk corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use invoice_core::ingest::BBox;
use invoice_core::llm::{build_prompt, prompt_hash};
use invoice_core::model::{CanonicalField, LlmSettings};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::render::{self, Run, DPI};
use crate::replay::{self, ReplayKind};

const VENDORS: &[(&str, &str, Cur)] = &[
    ("Northwind Traders Ltd", "12 Harbour Road, Leeds LS1 4AB", Cur::Gbp),
    ("Acme Industrial Supply", "400 Foundry Lane, Dayton OH 45402", Cur::Usd),
    ("Bluebell Office Goods", "7 Station Parade, Bath BA1 1SU", Cur::Gbp),
    ("Kestrel Logistics GmbH", "Hafenstrasse 18, 20457 Hamburg", Cur::Eur),
    ("Orchard Lane Bakery", "55 Orchard Lane, Portland OR 97201", Cur::Usd),
    ("Meridian Paper Co", "1200 Mill Street, Appleton WI 54911", Cur::Usd),
    ("Granite Peak Hardware", "88 Summit Ave, Denver CO 80202", Cur::Usd),
    ("Silverline Electronics", "3 Quay Street, Dublin D02 X285", Cur::Eur),
    ("Harbourside Seafoods", "2 Fish Quay, Aberdeen AB11 5NL", Cur::Gbp),
    ("Tern & Finch Stationers", "19 Market Hill, Cambridge CB2 3NJ", Cur::Gbp),
    ("Copperleaf Printing", "650 Press Road, Austin TX 78701", Cur::Usd),
    ("Vantage Tools BV", "Kanaalweg 5, 3526 KL Utrecht", Cur::Eur),
    ("Riverbend Farms Co-op", "Route 9, Hudson NY 12534", Cur::Usd),
    ("Pinecrest Building Supplies", "22 Timber Way, Spokane WA 99201", Cur::Usd),
    ("Albatross Marine Parts", "Dock 4, Southampton SO14 3TJ", Cur::Gbp),
    ("Summit Coffee Roasters", "301 Bean Street, Seattle WA 98101", Cur::Usd),
    ("Lindqvist Textiles AB", "Vastra Hamngatan 9, 411 17 Goteborg", Cur::Eur),
    ("Cobalt Chemicals Ltd", "Unit 6 Riverside Park, Runcorn WA7 4QX", Cur::Gbp),
    ("Juniper Health Supplies", "90 Clinic Road, Raleigh NC 27601", Cur::Usd),
    ("Foxglove Garden Centre", "Meadow Lane, Ludlow SY8 1EE", Cur::Gbp),
];

const CUSTOMERS: &[(&str, &str)] = &[
    ("Harbor Foods Inc", "5 Main Street, Springfield IL 62701"),
    ("Greenfield Primary School", "Church Road, Otley LS21 3AE"),
    ("Delta Freight Services", "77 Airport Blvd, Memphis TN 38118"),
    ("Oakridge Dental Clinic", "14 Elm Court, Reading RG1 2PQ"),
    ("Brightwater Hotels", "Seafront 1, Brighton BN1 2FU"),
    ("Maple Street Cafe", "210 Maple Street, Burlington VT 05401"),
    ("Nordic Retail Group", "Storgatan 3, 111 51 Stockholm"),
    ("Castle Print Works", "8 Castle Wynd, Edinburgh EH1 2NG"),
    ("Westfield Auto Repair", "930 West Ave, Fresno CA 93706"),
    ("Lumen Architects", "Keizersgracht 12, 1015 CR Amsterdam"),
    ("Hillside Veterinary", "3 Hill Top, Kendal LA9 4DQ"),
    ("Redwood Data Systems", "500 Redwood Pkwy, San Jose CA 95110"),
];

const ITEMS: &[&str] = &[
    "A4 copier paper, 5 reams",
    "Ballpoint pens, box of 50",
    "Steel shelving unit",
    "Pallet wrap film",
    "Consulting services (hours)",
    "Delivery charge",
    "Arabica beans 1kg",
    "Hydraulic hose 3m",
    "LED panel light 600x600",
    "Cotton fabric roll",
    "Safety gloves, pair",
    "Printer toner cartridge",
    "Garden compost 50L",
    "Marine grade rope 20m",
    "Laboratory reagent kit",
    "Oak timber plank",
    "Network switch 24-port",
    "Cleaning solution 5L",
    "Frozen cod fillets",
    "Installation labour",
    "Bubble wrap roll",
    "Wholemeal flour 25kg",
    "Cordless drill kit",
    "First aid kit refill",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cur {
    Usd,
    Gbp,
    Eur,
}

impl Cur {
    fn code(self) -> &'static str {
        match self {
            Cur::Usd => "USD",
            Cur::Gbp => "GBP",
            Cur::Eur => "EUR",
        }
    }

    fn separators(self) -> (char, char) {
        match self {
            Cur::Eur => ('.', ','),
            _ => (',', '.'),
        }
    }

    /// Amount as printed in tables and subtotals.
    fn plain(self, minor: i64) -> String {
        let (group, dec) = self.separators();
        let sign = if minor < 0 { "-" } else { "" };
        let abs = minor.unsigned_abs();
        let digits = (abs / 100).to_string();
        let mut grouped = String::new();
        for (i, c) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i) % 3 == 0 {
                grouped.push(group);
            }
            grouped.push(c);
        }
        format!("{sign}{grouped}{dec}{:02}", abs % 100)
    }

    /// Amount with its currency marker, as printed on the total line.
    fn marked(self, minor: i64) -> String {
        match self {
            Cur::Usd => format!("${}", self.plain(minor)),
            Cur::Gbp => format!("GBP {}", self.plain(minor)),
            Cur::Eur => format!("{} EUR", self.plain(minor)),
        }
    }

    fn quantity(self, hundredths: i64) -> String {
        let mut s = decimal(hundredths, 2);
        if self == Cur::Eur {
            s = s.replace('.', ",");
        }
        s
    }
}

/// Fixed-point value with trailing zeros (and a bare point) removed.
fn decimal(value: i64, scale: u32) -> String {
    let p = 10i64.pow(scale);
    let sign = if value < 0 { "-" } else { "" };
    let (whole, frac) = (value.abs() / p, value.abs() % p);
    if frac == 0 {
        return format!("{sign}{whole}");
    }
    let f = format!("{frac:0width$}", width = scale as usize);
    format!("{sign}{whole}.{}", f.trim_end_matches('0'))
}

/// Minor units in the export form, "1234.50".
fn money_display(minor: i64) -> String {
    let sign = if minor < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", minor.abs() / 100, minor.abs() % 100)
}

/// Exact `num / den` rounded half away from zero.
fn div_round(num: i64, den: i64) -> i64 {
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den.abs() {
        q + num.signum() * den.signum()
    } else {
        q
    }
}

const DATE_FORMATS: &[&str] = &["%d/%m/%Y", "%Y-%m-%d", "%-d %B %Y", "%B %-d, %Y", "%d.%m.%Y"];

#[derive(Debug, Clone)]
struct Item {
    description: &'static str,
    qty_hundredths: i64,
    unit_minor: i64,
    amount_minor: i64,
}

#[derive(Debug, Clone)]
struct Content {
    vendor: (&'static str, &'static str),
    customer: (&'static str, &'static str),
    ship_to: Option<(&'static str, &'static str)>,
    cur: Cur,
    number: String,
    date: NaiveDate,
    due: Option<NaiveDate>,
    date_format: &'static str,
    items: Vec<Item>,
    subtotal: i64,
    tax_bp: i64,
    tax: i64,
    discount: Option<i64>,
    total: i64,
    /// (printed, kilograms)
    weight: Option<(String, String)>,
}

fn initials(name: &str) -> String {
    name.split_whitespace()
        .take(2)
        .filter_map(|w| w.chars().next())
        .filter(char::is_ascii_alphabetic)
        .collect::<String>()
        .to_uppercase()
}

fn draw_content(rng: &mut ChaCha8Rng) -> Content {
    let &(vname, vaddr, cur) = VENDORS.choose(rng).expect("vendor pool");
    let &customer = CUSTOMERS.choose(rng).expect("customer pool");
    let ship_to = if rng.random_bool(0.3) {
        Some(*CUSTOMERS.choose(rng).expect("customer pool"))
    } else {
        None
    };
    let date = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date") + Days::new(rng.random_range(0..1000));
    let due = rng
        .random_bool(0.85)
        .then(|| date + Days::new(*[7u64, 14, 30, 45, 60].choose(rng).expect("terms")));
    let year = date.format("%Y").to_string();
    let seq: u32 = rng.random_range(1..10_000);
    let number = match rng.random_range(0..4) {
        0 => format!("INV-{year}-{seq:04}"),
        1 => format!("{}-{:05}", initials(vname), seq * 7 % 100_000),
        2 => format!("{:06}", 100_000 + seq * 13),
        _ => format!("INV{}{seq:04}", &year[2..]),
    };

    let n_items = rng.random_range(1..=5);
    let mut items = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let qty_hundredths = if rng.random_bool(0.7) {
            rng.random_range(1..=24) * 100
        } else {
            rng.random_range(1..=25) * 50
        };
        let unit_minor = rng.random_range(150..=250_000);
        items.push(Item {
            description: ITEMS.choose(rng).expect("item pool"),
            qty_hundredths,
            unit_minor,
            amount_minor: div_round(qty_hundredths * unit_minor, 100),
        });
    }
    let subtotal: i64 = items.iter().map(|i| i.amount_minor).sum();
    let tax_bp = *[0i64, 500, 750, 1000, 2000].choose(rng).expect("rates");
    let tax = div_round(subtotal * tax_bp, 10_000);
    let discount = rng.random_bool(0.25).then(|| match rng.random_range(0..3) {
        0 => div_round(subtotal * 5, 100),
        1 => div_round(subtotal, 10),
        _ => 1000.min(subtotal / 2),
    });
    let total = subtotal + tax - discount.unwrap_or(0);
    let weight = rng.random_bool(0.35).then(|| match rng.random_range(0..3) {
        0 => {
            let halves = rng.random_range(2..=40i64);
            (format!("{} qtl", decimal(halves * 5, 1)), decimal(halves * 50, 0))
        }
        1 => {
            let halves = rng.random_range(1..=20i64);
            (format!("{} ton", decimal(halves * 5, 1)), decimal(halves * 500, 0))
        }
        _ => {
            let tenths = rng.random_range(100..=9_999i64);
            (format!("{} kg", decimal(tenths, 1)), decimal(tenths, 1))
        }
    });

    Content {
        vendor: (vname, vaddr),
        customer,
        ship_to,
        cur,
        number,
        date,
        due,
        date_format: DATE_FORMATS.choose(rng).expect("formats"),
        items,
        subtotal,
        tax_bp,
        tax,
        discount,
        total,
        weight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Classic,
    Modern,
    Compact,
}

struct Link {
    field: CanonicalField,
    label_run: usize,
    label_tokens: usize,
    value_runs: Vec<usize>,
}

/// Runs grouped into blocks, with label links, for one page.
#[derive(Default)]
struct Sheet {
    runs: Vec<(Run, usize)>,
    block_kinds: Vec<&'static str>,
    links: Vec<Link>,
}

impl Sheet {
    fn block(&mut self, kind: &'static str) -> usize {
        self.block_kinds.push(kind);
        self.block_kinds.len() - 1
    }

    fn put(&mut self, block: usize, row: u32, col: u32, text: &str) -> usize {
        debug_assert!(col as usize + text.chars().count() <= render::COLUMNS as usize, "{text}");
        self.runs.push((Run { row, col, text: text.to_string() }, block));
        self.runs.len() - 1
    }

    fn put_right(&mut self, block: usize, row: u32, right: u32, text: &str) -> usize {
        self.put(block, row, right - text.chars().count() as u32, text)
    }

    /// "Label: value" in one run.
    fn pair(&mut self, block: usize, row: u32, col: u32, label: &str, value: &str, field: CanonicalField) {
        let run = self.put(block, row, col, &format!("{label} {value}"));
        self.links.push(Link {
            field,
            label_run: run,
            label_tokens: label.split_whitespace().count(),
            value_runs: vec![],
        });
    }

    /// Label at `col`, value right-aligned at `right`, as separate runs.
    fn pair_right(&mut self, block: usize, row: u32, col: u32, label: &str, right: u32, value: &str, field: CanonicalField) {
        let label_run = self.put(block, row, col, label);
        let value_run = self.put_right(block, row, right, value);
        self.links.push(Link {
            field,
            label_run,
            label_tokens: label.split_whitespace().count(),
            value_runs: vec![value_run],
        });
    }

    /// Label on its own line with the value lines below it.
    fn label_above(&mut self, block: usize, row: u32, col: u32, label: &str, lines: &[&str], field: CanonicalField) {
        let label_run = self.put(block, row, col, label);
        let value_runs = lines
            .iter()
            .enumerate()
            .map(|(i, l)| self.put(block, row + 1 + i as u32, col, l))
            .collect();
        self.links.push(Link {
            field,
            label_run,
            label_tokens: label.split_whitespace().count(),
            value_runs,
        });
    }
}

const QTY_RIGHT: u32 = 44;
const UNIT_RIGHT: u32 = 60;
const AMOUNT_RIGHT: u32 = 76;
const TOTALS_COL: u32 = 48;

fn table(sheet: &mut Sheet, c: &Content, row: u32) -> u32 {
    let b = sheet.block("table");
    sheet.put(b, row, 0, "Description");
    sheet.put_right(b, row, QTY_RIGHT, "Qty");
    sheet.put_right(b, row, UNIT_RIGHT, "Unit Price");
    sheet.put_right(b, row, AMOUNT_RIGHT, "Amount");
    for (i, it) in c.items.iter().enumerate() {
        let r = row + 1 + i as u32;
        sheet.put(b, r, 0, it.description);
        sheet.put_right(b, r, QTY_RIGHT, &c.cur.quantity(it.qty_hundredths));
        sheet.put_right(b, r, UNIT_RIGHT, &c.cur.plain(it.unit_minor));
        sheet.put_right(b, r, AMOUNT_RIGHT, &c.cur.plain(it.amount_minor));
    }
    row + 1 + c.items.len() as u32
}

fn totals(sheet: &mut Sheet, c: &Content, row: u32, labels: [&str; 5]) -> u32 {
    let b = sheet.block("totals");
    let [sub, rate, tax, disc, total] = labels;
    let mut r = row;
    let mut line = |sheet: &mut Sheet, label: &str, value: String, field| {
        sheet.pair_right(b, r, TOTALS_COL, label, AMOUNT_RIGHT, &value, field);
        r += 1;
    };
    line(sheet, sub, c.cur.plain(c.subtotal), CanonicalField::Subtotal);
    line(sheet, rate, format!("{}%", decimal(c.tax_bp, 2)), CanonicalField::TaxRate);
    line(sheet, tax, c.cur.plain(c.tax), CanonicalField::TaxAmount);
    if let Some(d) = c.discount {
        line(sheet, disc, c.cur.plain(d), CanonicalField::DiscountAmount);
    }
    line(sheet, total, c.cur.marked(c.total), CanonicalField::TotalAmount);
    r
}

fn fmt_date(c: &Content, d: NaiveDate) -> String {
    d.format(c.date_format).to_string()
}

fn lay_out(template: Template, c: &Content) -> Sheet {
    let mut s = Sheet::default();
    let date = fmt_date(c, c.date);
    let due = c.due.map(|d| fmt_date(c, d));
    match template {
        Template::Classic => {
            let v = s.block("vendor");
            s.put(v, 0, 0, c.vendor.0);
            s.put(v, 1, 0, c.vendor.1);
            let t = s.block("title");
            s.put_right(t, 0, AMOUNT_RIGHT, "INVOICE");
            let m = s.block("meta");
            s.pair(m, 3, 0, "Invoice No:", &c.number, CanonicalField::InvoiceNumber);
            s.pair(m, 4, 0, "Invoice Date:", &date, CanonicalField::InvoiceDate);
            if let Some(d) = &due {
                s.pair(m, 5, 0, "Due Date:", d, CanonicalField::DueDate);
            }
            let p = s.block("bill_to");
            s.label_above(p, 3, 44, "Bill To:", &[c.customer.0, c.customer.1], CanonicalField::BillingAddress);
            let r = table(&mut s, c, 8);
            let r = totals(&mut s, c, r + 1, ["Subtotal:", "Tax Rate:", "Tax:", "Discount:", "TOTAL:"]);
            if let Some((w, _)) = &c.weight {
                let f = s.block("weight");
                s.pair(f, r + 1, 0, "Net Weight:", w, CanonicalField::WeightKg);
            }
        }
        Template::Modern => {
            let v = s.block("vendor");
            s.put(v, 0, 0, c.vendor.0);
            s.put(v, 1, 0, c.vendor.1);
            let m = s.block("meta");
            s.put(m, 0, 50, "INVOICE");
            s.pair(m, 2, 50, "Invoice #:", &c.number, CanonicalField::InvoiceNumber);
            s.pair(m, 3, 50, "Date:", &date, CanonicalField::InvoiceDate);
            if let Some(d) = &due {
                s.pair(m, 4, 50, "Payment Due:", d, CanonicalField::DueDate);
            }
            let p = s.block("bill_to");
            s.label_above(p, 6, 0, "Billed To:", &[c.customer.0, c.customer.1], CanonicalField::BillingAddress);
            if let Some(ship) = c.ship_to {
                let sb = s.block("ship_to");
                s.label_above(sb, 6, 44, "Ship To:", &[ship.0, ship.1], CanonicalField::ShippingAddress);
            }
            let r = table(&mut s, c, 10);
            let r = totals(&mut s, c, r + 1, ["Sub Total:", "VAT Rate:", "VAT:", "Discount:", "Amount Due:"]);
            let f = s.block("footer");
            s.pair(f, r + 1, 0, "Currency:", c.cur.code(), CanonicalField::Currency);
            if let Some((w, _)) = &c.weight {
                s.pair(f, r + 2, 0, "Gross Weight:", w, CanonicalField::WeightKg);
            }
        }
        Template::Compact => {
            let t = s.block("title");
            s.put(t, 0, 0, "INVOICE");
            let v = s.block("vendor");
            s.pair(v, 2, 0, "Sold By:", c.vendor.0, CanonicalField::VendorName);
            s.pair(v, 3, 0, "Vendor Address:", c.vendor.1, CanonicalField::VendorAddress);
            let m = s.block("meta");
            s.pair(m, 5, 0, "Invoice Number:", &c.number, CanonicalField::InvoiceNumber);
            let d = s.block("dates");
            s.pair(d, 5, 44, "Issue Date:", &date, CanonicalField::InvoiceDate);
            if let Some(due) = &due {
                s.pair(d, 6, 44, "Due By:", due, CanonicalField::DueDate);
            }
            let p = s.block("bill_to");
            s.label_above(p, 8, 0, "Bill To:", &[c.customer.0, c.customer.1], CanonicalField::BillingAddress);
            let r = table(&mut s, c, 12);
            let r = totals(&mut s, c, r + 1, ["Net Amount:", "GST Rate:", "GST:", "Discount:", "Grand Total:"]);
            if let Some((w, _)) = &c.weight {
                let f = s.block("weight");
                s.pair(f, r + 1, 0, "Weight:", w, CanonicalField::WeightKg);
            }
        }
    }
    s
}

/// Field values as printed, which is also what a faithful extractor copies.
fn printed_fields(c: &Content) -> BTreeMap<CanonicalField, String> {
    use CanonicalField as F;
    let mut m = BTreeMap::new();
    m.insert(F::InvoiceNumber, c.number.clone());
    m.insert(F::InvoiceDate, fmt_date(c, c.date));
    if let Some(d) = c.due {
        m.insert(F::DueDate, fmt_date(c, d));
    }
    m.insert(F::VendorName, c.vendor.0.to_string());
    m.insert(F::VendorAddress, c.vendor.1.to_string());
    m.insert(F::BillingAddress, format!("{}, {}", c.customer.0, c.customer.1));
    if let Some(s) = c.ship_to {
        m.insert(F::ShippingAddress, format!("{}, {}", s.0, s.1));
    }
    m.insert(F::Currency, c.cur.code().to_string());
    m.insert(F::Subtotal, c.cur.plain(c.subtotal));
    m.insert(F::TaxRate, format!("{}%", decimal(c.tax_bp, 2)));
    m.insert(F::TaxAmount, c.cur.plain(c.tax));
    if let Some(d) = c.discount {
        m.insert(F::DiscountAmount, c.cur.plain(d));
    }
    m.insert(F::TotalAmount, c.cur.marked(c.total));
    if let Some((w, _)) = &c.weight {
        m.insert(F::WeightKg, w.clone());
    }
    m
}

/// Normalized values, computed from the generator's own numbers.
fn normalized_fields(c: &Content, template: Template) -> BTreeMap<CanonicalField, String> {
    use CanonicalField as F;
    let money = money_display;
    let mut m = BTreeMap::new();
    m.insert(F::InvoiceNumber, c.number.clone());
    m.insert(F::InvoiceDate, c.date.format("%Y-%m-%d").to_string());
    if let Some(d) = c.due {
        m.insert(F::DueDate, d.format("%Y-%m-%d").to_string());
    }
    m.insert(F::VendorName, c.vendor.0.to_string());
    m.insert(F::VendorAddress, c.vendor.1.to_string());
    m.insert(F::BillingAddress, format!("{}, {}", c.customer.0, c.customer.1));
    if let (Some(s), Template::Modern) = (c.ship_to, template) {
        m.insert(F::ShippingAddress, format!("{}, {}", s.0, s.1));
    }
    m.insert(F::Currency, c.cur.code().to_string());
    m.insert(F::Subtotal, money(c.subtotal));
    m.insert(F::TaxRate, decimal(c.tax_bp, 4));
    m.insert(F::TaxAmount, money(c.tax));
    if let Some(d) = c.discount {
        m.insert(F::DiscountAmount, money(d));
    }
    m.insert(F::TotalAmount, money(c.total));
    if let Some((_, kg)) = &c.weight {
        m.insert(F::WeightKg, kg.clone());
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthToken {
    pub text: String,
    pub bbox: BBox,
    pub page: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBlock {
    pub kind: String,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLink {
    pub field: CanonicalField,
    pub label: Vec<u32>,
    pub value: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLineItem {
    pub description: String,
    pub quantity: String,
    pub unit_price: String,
    pub amount: String,
}

/// Everything known about one generated invoice. Also the sidecar the mock
/// OCR engines read (`tokens`, `token_dpi`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub seed: u64,
    pub index: usize,
    pub template: Template,
    pub skew: f64,
    pub noise: f64,
    /// Normalized values in their export form.
    pub fields: BTreeMap<CanonicalField, String>,
    pub printed: BTreeMap<CanonicalField, String>,
    pub line_items: Vec<TruthLineItem>,
    /// Page text: tokens joined by spaces, lines by newlines.
    pub text: String,
    pub token_dpi: u32,
    pub page_width: u32,
    pub page_height: u32,
    pub tokens: Vec<TruthToken>,
    pub blocks: Vec<TruthBlock>,
    pub links: Vec<TruthLink>,
    pub replay: ReplayKind,
}

impl GroundTruth {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    #[default]
    None,
    Skew {
        degrees: f64,
    },
    Noise {
        p: f64,
    },
    Both {
        degrees: f64,
        p: f64,
    },
}

impl Degradation {
    pub fn skew(self) -> f64 {
        match self {
            Degradation::Skew { degrees } | Degradation::Both { degrees, .. } => degrees,
            _ => 0.0,
        }
    }

    pub fn noise(self) -> f64 {
        match self {
            Degradation::Noise { p } | Degradation::Both { p, .. } => p,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Degradation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degradation::None => write!(f, "none"),
            Degradation::Skew { degrees } => write!(f, "skew:{degrees}"),
            Degradation::Noise { p } => write!(f, "noise:{p}"),
            Degradation::Both { degrees, p } => write!(f, "both:{degrees}:{p}"),
        }
    }
}

impl FromStr for Degradation {
    type Err = String;

    /// `none`, `skew:<deg>`, `noise:<p>` or `both:<deg>:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?} in {s:?}"));
        let p = |v: &str| {
            let p = num(v)?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(format!("noise fraction {p} outside [0, 1]"))
            }
        };
        match parts.as_slice() {
            ["none"] => Ok(Degradation::None),
            ["skew", d] => Ok(Degradation::Skew { degrees: num(d)? }),
            ["noise", v] => Ok(Degradation::Noise { p: p(v)? }),
            ["both", d, v] => Ok(Degradation::Both { degrees: num(d)?, p: p(v)? }),
            _ => Err(format!("unknown degradation {s:?}")),
        }
    }
}

/// One generated invoice, before it is written out.
pub struct Generated {
    pub truth: GroundTruth,
    pub pdf: Vec<u8>,
    pub png: Vec<u8>,
    /// (prompt hash, response text) for the replay client.
    pub replay: (String, String),
}

fn invoice_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mix = (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

pub fn invoice_id(index: usize) -> String {
    format!("inv-{:04}", index + 1)
}

/// How replay responses are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplayMix {
    /// Mostly clean, about 10% wrapped or malformed, about 5% wrong.
    #[default]
    Realistic,
    /// Clean everywhere except the listed invoice indices, whose invoice
    /// number is truncated.
    Faithful { corrupt: Vec<usize> },
}

impl ReplayMix {
    fn forced(&self, index: usize) -> Option<ReplayKind> {
        match self {
            ReplayMix::Realistic => None,
            ReplayMix::Faithful { corrupt } if corrupt.contains(&index) => Some(ReplayKind::TruncatedNumber),
            ReplayMix::Faithful { .. } => Some(ReplayKind::Clean),
        }
    }
}

/// Build invoice `index` of the corpus for `seed`. Pure: the same inputs
/// give the same bytes.
pub fn generate(seed: u64, index: usize, degradation: Degradation) -> Generated {
    generate_with(seed, index, degradation, &ReplayMix::Realistic)
}

pub fn generate_with(seed: u64, index: usize, degradation: Degradation, mix: &ReplayMix) -> Generated {
    let mut rng = invoice_rng(seed, index, 0);
    let content = draw_content(&mut rng);
    let template = *[Template::Classic, Template::Modern, Template::Compact]
        .choose(&mut rng)
        .expect("templates");
    let sheet = lay_out(template, &content);
    let id = invoice_id(index);

    // tokens in reading order, with their run of origin
    let mut tokens: Vec<(u32, u32, String, usize)> = Vec::new();
    for (ri, (run, _)) in sheet.runs.iter().enumerate() {
        let mut offset = 0u32;
        for piece in run.text.split(' ') {
            if !piece.is_empty() {
                tokens.push((run.row, run.col + offset, piece.to_string(), ri));
            }
            offset += piece.chars().count() as u32 + 1;
        }
    }
    tokens.sort_by_key(|t| (t.0, t.1));
    let mut run_tokens: Vec<Vec<u32>> = vec![Vec::new(); sheet.runs.len()];
    for (i, t) in tokens.iter().enumerate() {
        run_tokens[t.3].push(i as u32);
    }
    let truth_tokens: Vec<TruthToken> = tokens
        .iter()
        .map(|(row, col, text, _)| TruthToken {
            text: text.clone(),
            bbox: render::cell_bbox(*row, *col, text.chars().count(), DPI),
            page: 0,
        })
        .collect();
    let mut text = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(if tokens[i - 1].0 == t.0 { ' ' } else { '\n' });
        }
        text.push_str(&t.2);
    }
    let blocks = sheet
        .block_kinds
        .iter()
        .enumerate()
        .map(|(b, kind)| TruthBlock {
            kind: kind.to_string(),
            tokens: {
                let mut ids: Vec<u32> = sheet
                    .runs
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, rb))| *rb == b)
                    .flat_map(|(ri, _)| run_tokens[ri].iter().copied())
                    .collect();
                ids.sort_unstable();
                ids
            },
        })
        .collect();
    let links = sheet
        .links
        .iter()
        .map(|l| {
            let own = &run_tokens[l.label_run];
            let mut value: Vec<u32> = own[l.label_tokens..].to_vec();
            value.extend(l.value_runs.iter().flat_map(|r| run_tokens[*r].iter().copied()));
            TruthLink {
                field: l.field,
                label: own[..l.label_tokens].to_vec(),
                value,
            }
        })
        .collect();

    let mut printed = printed_fields(&content);
    if template != Template::Modern {
        printed.remove(&CanonicalField::ShippingAddress);
    }
    let line_items = content
        .items
        .iter()
        .map(|it| TruthLineItem {
            description: it.description.to_string(),
            quantity: decimal(it.qty_hundredths, 2),
            unit_price: money_display(it.unit_minor),
            amount: money_display(it.amount_minor),
        })
        .collect();
    let printed_items: Vec<[String; 4]> = content
        .items
        .iter()
        .map(|it| {
            [
                it.description.to_string(),
                content.cur.quantity(it.qty_hundredths),
                content.cur.plain(it.unit_minor),
                content.cur.plain(it.amount_minor),
            ]
        })
        .collect();

    let runs: Vec<Run> = sheet.runs.iter().map(|(r, _)| r.clone()).collect();
    let pdf = render::text_pdf(&runs, &id);
    let mut page = render::rasterize_runs(&runs);
    let skew = degradation.skew();
    let noise = degradation.noise();
    if skew != 0.0 {
        page = render::skew(&page, skew);
    }
    if noise > 0.0 {
        render::salt_and_pepper(&mut page, noise, &mut invoice_rng(seed, index, 1));
    }
    let png = render::encode_png(&page, Some(&id));

    let mut replay_rng = invoice_rng(seed, index, 2);
    let (kind, response) = replay::response(
        &printed,
        &printed_items,
        &content_dates(&content),
        mix.forced(index),
        &mut replay_rng,
    );
    let prompt = build_prompt(&text, &CanonicalField::ALL, LlmSettings::default().max_prompt_chars);

    let truth = GroundTruth {
        id,
        seed,
        index,
        template,
        skew,
        noise,
        fields: normalized_fields(&content, template),
        printed,
        line_items,
        text,
        token_dpi: DPI,
        page_width: page.width,
        page_height: page.height,
        tokens: truth_tokens,
        blocks,
        links,
        replay: kind,
    };
    Generated {
        truth,
        pdf,
        png,
        replay: (prompt_hash(&prompt), response),
    }
}

fn content_dates(c: &Content) -> replay::Dates {
    replay::Dates {
        shifted: fmt_date(c, c.date + Days::new(1)),
    }
}

/// Corpus-level description written to `corpus.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub n: usize,
    pub degradation: Degradation,
    #[serde(default)]
    pub replay: ReplayMix,
    pub ids: Vec<String>,
}

/// An on-disk corpus: `<root>/<id>/{truth.json, invoice.pdf, page.png}`
/// plus replay fixtures under `<root>/replay/`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(root: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(root.join("corpus.json"))?;
        Ok(Corpus {
            root: root.to_path_buf(),
            manifest: serde_json::from_str(&text).map_err(std::io::Error::other)?,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.manifest.ids
    }

    pub fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn replay_dir(&self) -> PathBuf {
        self.root.join("replay")
    }

    pub fn truth(&self, id: &str) -> std::io::Result<GroundTruth> {
        GroundTruth::load(&self.dir(id).join("truth.json"))
    }
}

/// Generate `n` invoices into `dir`. Regenerating with the same arguments
/// rewrites identical bytes.
pub fn gen_corpus(dir: &Path, seed: u64, n: usize, degradation: Degradation) -> std::io::Result<Corpus> {
    gen_corpus_with(dir, seed, n, degradation, ReplayMix::Realistic)
}

pub fn gen_corpus_with(
    dir: &Path,
    seed: u64,
    n: usize,
    degradation: Degradation,
    replay: ReplayMix,
) -> std::io::Result<Corpus> {
    assert!(n >= 1, "a corpus needs at least one invoice");
    std::fs::create_dir_all(dir.join("replay"))?;
    let ids: Vec<String> = (0..n).map(invoice_id).collect();
    (0..n).into_par_iter().try_for_each(|i| -> std::io::Result<()> {
        let g = generate_with(seed, i, degradation, &replay);
        let d = dir.join(&g.truth.id);
        std::fs::create_dir_all(&d)?;
        let mut truth = serde_json::to_string_pretty(&g.truth).map_err(std::io::Error::other)?;
        truth.push('\n');
        std::fs::write(d.join("truth.json"), truth)?;
        std::fs::write(d.join("invoice.pdf"), &g.pdf)?;
        std::fs::write(d.join("page.png"), &g.png)?;
        std::fs::write(dir.join("replay").join(format!("{}.txt", g.replay.0)), &g.replay.1)?;
        Ok(())
    })?;
    let manifest = CorpusManifest {
        seed,
        n,
        degradation,
        replay,
        ids,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join("corpus.json"), text)?;
    Ok(Corpus {
        root: dir.to_path_buf(),
        manifest,
    })
}
