//! Parser for the circuit deck and its mapping onto `CircuitConfig`.
//!
//! Only the card subset of the reference deck is accepted: resistors,
//! capacitors, NPN transistors, voltage and current sources, `.model`
//! cards and a `.control` block holding `tran`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::blocks::TransistorModel;
use crate::circuit::{nodes, CircuitConfig};
use crate::error::{Error, Result};

pub const REFERENCE_DECK: &str = "\
* this is complete.cir file
* voltage resources
vcc  5 0 dc 5V
* non monotone
q1  2  3  4 2n2222bis
rC1  5  2 16k
rB1  3  1 100k
rE1  4  0 10k
Ra1  6  1 100k
Ra2  6  2 33k
Rs   6  0 220k
* non monotone modulation
q2  7  8  9 2n2222bis
q3 10 11  9 2n2222bis
rC2  7  5 4.7k
rC3 10  5 4.7k
rB2  8  6 1k
rB3 12 11 1.2k
rE2  9  0 470
* hysteresis
q4  13 14 15 2n2222bis
q5  16 17 15 2n2222bis
rC4 13  5 820
rC5 16  5 240
rB4 14  7 2.4k
rB5 17 13 6k
rE4 15  0 240
* vy-vx feedback loop
ri1 13  1 15k
ri2  1  0 47k
* Set ri2 to 34.5k for tonic spiking
ciF  1  0 22n
* vz-vx feedback loop
q6  12 18 19 2n2222bis
ro1 16 18 4.7k
ro2 18  0 4.7k
coF 18  0 4.7u
rC6 12  5 200
rE6 19  0 20
rbi 19  5 150
* model for a 2n2222 transistor
.model 2n2222bis npn (is=14.34f bf=255.9
+ vaf=74.03 ikf=.2847 ise=14.34f ne=1.307
+ br=6.092 ikr=0 isc=0 nc=2 rb=10 rc=1
+ cje=22.01p tf=411.1p cjc=7.306p tr=46.91n
+ xtb=1.5 Xti=3 Eg=1.11 Mjc=.3416 Vjc=.75
+ Fc=.5 Mje=.377 Vje=.75 Itf=.6 Vtf=1.7
+ Xtf=3 )
.control
 tran 1us 40ms
 plot v(16) ylimit 0 5
.endc
.end
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Resistor,
    Capacitor,
    Npn,
    VSource,
    ISource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementValue {
    Value(f64),
    Model(String),
    /// DC level of a source.
    Dc(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub name: String,
    pub nodes: Vec<usize>,
    pub value: ElementValue,
}

/// Retained fields of a `.model` card.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelCard {
    pub bf: Option<f64>,
    /// Saturation current, used to place the turn-on voltage.
    pub is: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Tran { step: f64, stop: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Deck {
    pub elements: Vec<Element>,
    pub models: BTreeMap<String, ModelCard>,
    pub controls: Vec<Control>,
}

impl Deck {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    /// Replaces the value of a resistor or capacitor.
    pub fn set_value(&mut self, name: &str, v: f64) -> Result<()> {
        match self.element_mut(name) {
            Some(e @ Element { kind: ElementKind::Resistor | ElementKind::Capacitor, .. }) => {
                e.value = ElementValue::Value(v);
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("no resistor or capacitor named {name}"))),
        }
    }

    pub fn tran(&self) -> Option<(f64, f64)> {
        self.controls.iter().map(|c| match c {
            Control::Tran { step, stop } => (*step, *stop),
        }).next()
    }

    /// Canonical text form; parsing it gives back an identical deck.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            let nodes: Vec<String> = e.nodes.iter().map(|n| n.to_string()).collect();
            let value = match &e.value {
                ElementValue::Value(v) => format!("{v:e}"),
                ElementValue::Model(m) => m.clone(),
                ElementValue::Dc(v) => format!("dc {v:e}"),
            };
            let _ = writeln!(out, "{} {} {}", e.name, nodes.join(" "), value);
        }
        for (name, m) in &self.models {
            let mut fields = Vec::new();
            if let Some(is) = m.is {
                fields.push(format!("is={is:e}"));
            }
            if let Some(bf) = m.bf {
                fields.push(format!("bf={bf:e}"));
            }
            let _ = writeln!(out, ".model {name} npn ({})", fields.join(" "));
        }
        if !self.controls.is_empty() {
            out.push_str(".control\n");
            for c in &self.controls {
                match c {
                    Control::Tran { step, stop } => {
                        let _ = writeln!(out, "tran {step:e} {stop:e}");
                    }
                }
            }
            out.push_str(".endc\n");
        }
        out.push_str(".end\n");
        out
    }
}

/// Parses a number with an optional SI scale suffix and unit.
pub fn parse_value(token: &str, line: usize) -> Result<f64> {
    let t = token.to_ascii_lowercase();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            c.is_ascii_alphabetic() && !(c == 'e' && t[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+'))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, rest) = t.split_at(split);
    let base: f64 = num.parse().map_err(|_| Error::Parse { line, reason: format!("invalid number '{token}'") })?;
    let (scale, unit): (f64, &str) = if let Some(u) = rest.strip_prefix("meg") {
        (1e6, u)
    } else {
        match rest.chars().next() {
            Some('t') => (1e12, &rest[1..]),
            Some('g') => (1e9, &rest[1..]),
            Some('k') => (1e3, &rest[1..]),
            Some('m') => (1e-3, &rest[1..]),
            Some('u') => (1e-6, &rest[1..]),
            Some('n') => (1e-9, &rest[1..]),
            Some('p') => (1e-12, &rest[1..]),
            Some('f') => (1e-15, &rest[1..]),
            _ => (1.0, rest),
        }
    };
    if !matches!(unit, "" | "v" | "a" | "s" | "ohm" | "hz" | "f") {
        return Err(Error::UnknownSuffix { line, token: token.to_string() });
    }
    // Dividing by the reciprocal keeps sub-unit scales exact to the last bit.
    Ok(if scale < 1.0 { base / (1.0 / scale).round() } else { base * scale })
}

fn parse_node(token: &str, line: usize) -> Result<usize> {
    token.parse().map_err(|_| Error::Parse { line, reason: format!("node '{token}' is not a non-negative integer") })
}

struct Card {
    line: usize,
    text: String,
}

/// Joins continuation lines and drops comments and blank lines.
fn cards(text: &str) -> Result<Vec<Card>> {
    let mut out: Vec<Card> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('*') {
            continue;
        }
        if let Some(rest) = l.strip_prefix('+') {
            let Some(last) = out.last_mut() else {
                return Err(Error::Parse { line, reason: "continuation line without a card".into() });
            };
            last.text.push(' ');
            last.text.push_str(rest.trim());
            continue;
        }
        out.push(Card { line, text: l.to_string() });
    }
    Ok(out)
}

fn parse_model(card: &Card, deck: &mut Deck) -> Result<()> {
    let line = card.line;
    let cleaned = card.text.replace(['(', ')'], " ");
    let mut tokens = cleaned.split_whitespace().skip(1);
    let name = tokens.next().ok_or(Error::Parse { line, reason: ".model without a name".into() })?;
    let kind = tokens.next().ok_or(Error::Parse { line, reason: ".model without a type".into() })?;
    if !kind.eq_ignore_ascii_case("npn") {
        return Err(Error::Parse { line, reason: format!("unsupported model type '{kind}'") });
    }
    let rest: Vec<&str> = tokens.collect();
    let joined = rest.join(" ").replace(" =", "=").replace("= ", "=");
    let mut m = ModelCard::default();
    let mut ignored = Vec::new();
    for field in joined.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or(Error::Parse { line, reason: format!("model field '{field}' is not key=value") })?;
        match k.to_ascii_lowercase().as_str() {
            "bf" => m.bf = Some(parse_value(v, line)?),
            "is" => m.is = Some(parse_value(v, line)?),
            _ => ignored.push(k.to_string()),
        }
    }
    if !ignored.is_empty() {
        log::warn!("line {line}: model {name} ignores fields {}", ignored.join(", "));
    }
    deck.models.insert(name.to_ascii_lowercase(), m);
    Ok(())
}

fn parse_element(card: &Card) -> Result<Element> {
    let line = card.line;
    let t: Vec<&str> = card.text.split_whitespace().collect();
    let name = t[0].to_string();
    let kind = match name.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('r') => ElementKind::Resistor,
        Some('c') => ElementKind::Capacitor,
        Some('q') => ElementKind::Npn,
        Some('v') => ElementKind::VSource,
        Some('i') => ElementKind::ISource,
        _ => return Err(Error::Parse { line, reason: format!("unsupported card '{name}'") }),
    };
    let n_nodes = if kind == ElementKind::Npn { 3 } else { 2 };
    let expect = |n: usize| {
        if t.len() != n {
            Err(Error::Parse { line, reason: format!("'{name}' needs {} fields, found {}", n, t.len()) })
        } else {
            Ok(())
        }
    };
    let nodes = |k: usize| -> Result<Vec<usize>> {
        t.get(1..1 + k)
            .ok_or(Error::Parse { line, reason: format!("'{name}' needs {k} nodes") })?
            .iter()
            .map(|s| parse_node(s, line))
            .collect()
    };
    let value = match kind {
        ElementKind::Resistor | ElementKind::Capacitor => {
            expect(4)?;
            let v = parse_value(t[3], line)?;
            if !(v > 0.0) {
                return Err(Error::Parse { line, reason: format!("'{name}' must be positive") });
            }
            ElementValue::Value(v)
        }
        ElementKind::Npn => {
            expect(5)?;
            ElementValue::Model(t[4].to_ascii_lowercase())
        }
        ElementKind::VSource | ElementKind::ISource => match t.len() {
            4 => ElementValue::Dc(parse_value(t[3], line)?),
            5 if t[3].eq_ignore_ascii_case("dc") => ElementValue::Dc(parse_value(t[4], line)?),
            _ => return Err(Error::Parse { line, reason: format!("'{name}' must be 'name n+ n- [dc] value'") }),
        },
    };
    let nodes = nodes(n_nodes)?;
    Ok(Element { kind, name, nodes, value })
}

pub fn parse_deck(text: &str) -> Result<Deck> {
    let mut deck = Deck::default();
    let mut in_control = false;
    let mut npn_lines = Vec::new();
    for card in cards(text)? {
        let line = card.line;
        let lower = card.text.to_ascii_lowercase();
        let head = lower.split_whitespace().next().unwrap_or("");
        if in_control {
            match head {
                ".endc" => in_control = false,
                "tran" => {
                    let t: Vec<&str> = card.text.split_whitespace().collect();
                    if t.len() < 3 {
                        return Err(Error::Parse { line, reason: "tran needs a step and a stop time".into() });
                    }
                    let step = parse_value(t[1], line)?;
                    let stop = parse_value(t[2], line)?;
                    deck.controls.push(Control::Tran { step, stop });
                }
                "plot" => log::info!("line {line}: plot directive ignored"),
                _ => return Err(Error::Parse { line, reason: format!("unsupported control '{head}'") }),
            }
            continue;
        }
        match head {
            ".end" => break,
            ".model" => parse_model(&card, &mut deck)?,
            ".control" => in_control = true,
            ".endc" => return Err(Error::Parse { line, reason: ".endc without .control".into() }),
            h if h.starts_with('.') => return Err(Error::Parse { line, reason: format!("unsupported card '{h}'") }),
            _ => {
                let e = parse_element(&card)?;
                if deck.element(&e.name).is_some() {
                    return Err(Error::Parse { line, reason: format!("duplicate element '{}'", e.name) });
                }
                if e.kind == ElementKind::Npn {
                    npn_lines.push((line, deck.elements.len()));
                }
                deck.elements.push(e);
            }
        }
    }
    if in_control {
        return Err(Error::Parse { line: text.lines().count(), reason: ".control without .endc".into() });
    }
    for (line, i) in npn_lines {
        if let ElementValue::Model(m) = &deck.elements[i].value {
            if !deck.models.contains_key(m) {
                return Err(Error::UndeclaredModel { line, model: m.clone() });
            }
        }
    }
    let supplies = deck.elements.iter().filter(|e| e.kind == ElementKind::VSource).count();
    if supplies != 1 {
        return Err(Error::Parse { line: 0, reason: format!("expected exactly one supply source, found {supplies}") });
    }
    if !deck.elements.iter().any(|e| e.nodes.contains(&0)) {
        return Err(Error::Parse { line: 0, reason: "no element is connected to ground (node 0)".into() });
    }
    Ok(deck)
}

/// How the transistor model is derived from the deck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeckOptions {
    /// Use the `bf` field of the model card instead of the analysis gain.
    pub beta_from_model: bool,
}

impl Default for DeckOptions {
    fn default() -> Self {
        Self { beta_from_model: false }
    }
}

pub const ANALYSIS_BETA: f64 = 100.0;

/// Element roles of the circuit template as (name, nodes).
const RESISTOR_ROLES: [(&str, [usize; 2]); 23] = [
    ("rC1", [5, 2]),
    ("rB1", [3, 1]),
    ("rE1", [4, 0]),
    ("Ra1", [6, 1]),
    ("Ra2", [6, 2]),
    ("Rs", [6, 0]),
    ("rC2", [7, 5]),
    ("rC3", [10, 5]),
    ("rB2", [8, 6]),
    ("rB3", [12, 11]),
    ("rE2", [9, 0]),
    ("rC4", [13, 5]),
    ("rC5", [16, 5]),
    ("rB4", [14, 7]),
    ("rB5", [17, 13]),
    ("rE4", [15, 0]),
    ("ri1", [13, 1]),
    ("ri2", [1, 0]),
    ("ro1", [16, 18]),
    ("ro2", [18, 0]),
    ("rC6", [12, 5]),
    ("rE6", [19, 0]),
    ("rbi", [19, 5]),
];
const CAPACITOR_ROLES: [(&str, [usize; 2]); 2] = [("ciF", [1, 0]), ("coF", [18, 0])];
const NPN_ROLES: [(&str, [usize; 3]); 6] = [
    ("q1", [2, 3, 4]),
    ("q2", [7, 8, 9]),
    ("q3", [10, 11, 9]),
    ("q4", [13, 14, 15]),
    ("q5", [16, 17, 15]),
    ("q6", [12, 18, 19]),
];

fn same_pair(a: &[usize], b: [usize; 2]) -> bool {
    a.len() == 2 && ((a[0] == b[0] && a[1] == b[1]) || (a[0] == b[1] && a[1] == b[0]))
}

/// Maps a deck matching the circuit template onto a configuration.
pub fn deck_to_config(d: &Deck, opts: DeckOptions) -> Result<CircuitConfig> {
    let mut missing = Vec::new();
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    let mut matched = vec![false; d.elements.len()];
    let mut find = |name: &str, kind: ElementKind, ok: &dyn Fn(&Element) -> bool| -> Option<usize> {
        let i = d.elements.iter().position(|e| e.kind == kind && e.name.eq_ignore_ascii_case(name) && ok(e))?;
        matched[i] = true;
        Some(i)
    };
    for (name, n) in RESISTOR_ROLES {
        match find(name, ElementKind::Resistor, &|e| same_pair(&e.nodes, n)) {
            Some(i) => {
                if let ElementValue::Value(v) = d.elements[i].value {
                    values.insert(name, v);
                }
            }
            None => missing.push(name.to_string()),
        }
    }
    for (name, n) in CAPACITOR_ROLES {
        match find(name, ElementKind::Capacitor, &|e| same_pair(&e.nodes, n)) {
            Some(i) => {
                if let ElementValue::Value(v) = d.elements[i].value {
                    values.insert(name, v);
                }
            }
            None => missing.push(name.to_string()),
        }
    }
    let mut model_name = None;
    for (name, n) in NPN_ROLES {
        match find(name, ElementKind::Npn, &|e| e.nodes == n) {
            Some(i) => {
                if let ElementValue::Model(m) = &d.elements[i].value {
                    model_name.get_or_insert(m.clone());
                }
            }
            None => missing.push(name.to_string()),
        }
    }
    let mut v_cc = None;
    let mut i_app = 0.0;
    for (i, e) in d.elements.iter().enumerate() {
        match (e.kind, &e.value) {
            (ElementKind::VSource, ElementValue::Dc(v)) if same_pair(&e.nodes, [nodes::VCC, 0]) => {
                v_cc = Some(if e.nodes[0] == nodes::VCC { *v } else { -*v });
                matched[i] = true;
            }
            // Current flows out of the first node through the source into the second.
            (ElementKind::ISource, ElementValue::Dc(v)) if same_pair(&e.nodes, [nodes::V_O, 0]) => {
                i_app += if e.nodes[1] == nodes::V_O { *v } else { -*v };
                matched[i] = true;
            }
            _ => {}
        }
    }
    if v_cc.is_none() {
        missing.push("vcc".into());
    }
    for (e, m) in d.elements.iter().zip(&matched) {
        if !m && !missing.iter().any(|n| n.eq_ignore_ascii_case(&e.name)) {
            missing.push(e.name.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::TopologyMismatch(missing));
    }
    let card = model_name.and_then(|m| d.models.get(&m)).cloned().unwrap_or_default();
    let beta = if opts.beta_from_model { card.bf.unwrap_or(ANALYSIS_BETA) } else { ANALYSIS_BETA };
    let model = match card.is {
        Some(is) => TransistorModel::from_saturation_current(beta, is),
        None => TransistorModel::with_beta(beta),
    };

    let v = |k: &str| values[k];
    let mut c = CircuitConfig::reference(model);
    let v_cc = v_cc.unwrap_or(5.0);
    {
        let nm = &mut c.cascade.nonmonotone;
        nm.sat.r_c = v("rC1");
        nm.sat.r_b = v("rB1");
        nm.sat.r_e = v("rE1");
        nm.sat.v_cc = v_cc;
        nm.r_a1 = v("Ra1");
        nm.r_a2 = v("Ra2");
        nm.r_s = v("Rs");
        let da = &mut c.cascade.diffamp;
        da.r_c2 = v("rC2");
        da.r_c3 = v("rC3");
        da.r_b2 = v("rB2");
        da.r_b3 = v("rB3");
        da.r_e_shared = v("rE2");
        da.v_cc = v_cc;
        let hy = &mut c.cascade.hysteresis;
        hy.r_c4 = v("rC4");
        hy.r_c5 = v("rC5");
        hy.r_b4 = v("rB4");
        hy.r_b5 = v("rB5");
        hy.r_e = v("rE4");
        hy.v_cc = v_cc;
    }
    c.r_i1 = v("ri1");
    c.r_i2 = v("ri2");
    c.c_i = v("ciF");
    c.r_o1 = v("ro1");
    c.r_o2 = v("ro2");
    c.c_o = v("coF");
    c.conditioner.r_c = v("rC6");
    c.conditioner.r_e = v("rE6");
    c.conditioner.r_bias = Some(v("rbi"));
    c.conditioner.v_cc = v_cc;
    c.stimulus.baseline = i_app;
    c.validate()?;
    Ok(c)
}
