//! Line-oriented netlist parser.
//!
//! The parser is total: any input produces either a [`Circuit`] or a
//! positioned [`Diagnostic`]; it never panics (fuzzed in the acceptance
//! suite).

use std::collections::BTreeSet;

use crate::devmodel::{MosBias, MosGeometry};

use super::{Circuit, Diagnostic, Directive, ElementKind, Polarity};

/// Parse a numeric token with optional engineering suffix
/// (`f p n u m k meg g`, case-insensitive).
pub fn parse_value(token: &str) -> Result<f64, String> {
    let token = token.trim();
    if token.is_empty() {
        return Err("empty value".to_string());
    }
    let bytes = token.as_bytes();
    let mut idx = 0;
    if bytes[idx] == b'+' || bytes[idx] == b'-' {
        idx += 1;
    }
    let digits_start = idx;
    while idx < bytes.len() && (bytes[idx].is_ascii_digit() || bytes[idx] == b'.') {
        idx += 1;
    }
    if idx == digits_start {
        return Err(format!("'{token}' is not a number"));
    }
    // Exponent part: 'e'/'E' followed by an optionally signed integer.
    if idx < bytes.len() && (bytes[idx] == b'e' || bytes[idx] == b'E') {
        let mut look = idx + 1;
        if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
            look += 1;
        }
        let exp_digits = look;
        while look < bytes.len() && bytes[look].is_ascii_digit() {
            look += 1;
        }
        if look > exp_digits {
            idx = look;
        }
    }
    let (num_part, suffix) = token.split_at(idx);
    let power: i32 = match suffix.to_ascii_lowercase().as_str() {
        "" => 0,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" => -6,
        "m" => -3,
        "k" => 3,
        "meg" => 6,
        "g" => 9,
        other => return Err(format!("unknown engineering suffix '{other}'")),
    };
    // Fold the suffix into the decimal exponent so the result is the
    // correctly rounded double of the denoted decimal value.
    let rescaled;
    let to_parse = if power == 0 {
        num_part
    } else {
        match num_part.split_once(['e', 'E']) {
            Some((mantissa, exp)) => {
                let exp: i64 = exp
                    .parse()
                    .map_err(|_| format!("'{num_part}' is not a number"))?;
                rescaled = format!("{mantissa}e{}", exp + power as i64);
                &rescaled
            }
            None => {
                rescaled = format!("{num_part}e{power}");
                &rescaled
            }
        }
    };
    let value: f64 = to_parse
        .parse()
        .map_err(|_| format!("'{num_part}' is not a number"))?;
    if !value.is_finite() {
        return Err(format!("'{token}' overflows"));
    }
    Ok(value)
}

struct Token<'a> {
    text: &'a str,
    /// 1-based column of the token start.
    col: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..i],
                    col: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            col: s + 1,
        });
    }
    tokens
}

/// `key=value` tokens collected from an element card tail.
struct KeyValues<'a> {
    pairs: Vec<(String, &'a str, usize)>,
    flags: Vec<(String, usize)>,
}

fn split_card_tail<'a>(tokens: &[Token<'a>]) -> KeyValues<'a> {
    let mut pairs = Vec::new();
    let mut flags = Vec::new();
    for t in tokens {
        match t.text.split_once('=') {
            Some((k, v)) => pairs.push((k.to_ascii_uppercase(), v, t.col)),
            None => flags.push((t.text.to_ascii_uppercase(), t.col)),
        }
    }
    KeyValues { pairs, flags }
}

struct LineParser<'a> {
    circuit: Circuit,
    labels: BTreeSet<String>,
    line_no: usize,
    line: &'a str,
}

impl<'a> LineParser<'a> {
    fn err(&self, col: usize, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(self.line_no, col, msg)
    }

    fn value(&self, tok: &Token<'_>) -> Result<f64, Diagnostic> {
        parse_value(tok.text).map_err(|e| self.err(tok.col, e))
    }

    fn expect_terminals(
        &mut self,
        tokens: &[Token<'_>],
        count: usize,
    ) -> Result<Vec<String>, Diagnostic> {
        if tokens.len() < count {
            return Err(self.err(
                self.line.len() + 1,
                format!("expected {count} node names, found {}", tokens.len()),
            ));
        }
        Ok(tokens[..count].iter().map(|t| t.text.to_string()).collect())
    }

    fn register_label(&mut self, label: &str) -> Result<String, Diagnostic> {
        let canon = label.to_ascii_uppercase();
        if canon.len() < 2 {
            return Err(self.err(
                1,
                format!("element label '{label}' needs a name after the type letter"),
            ));
        }
        if !self.labels.insert(canon.clone()) {
            return Err(self.err(1, format!("duplicate element label '{canon}'")));
        }
        Ok(canon)
    }

    fn push(&mut self, label: String, kind: ElementKind, terminals: &[String]) {
        let refs: Vec<&str> = terminals.iter().map(|s| s.as_str()).collect();
        self.circuit.add_element(&label, kind, &refs);
    }

    fn parse_two_terminal_value(
        &mut self,
        label: String,
        tokens: &[Token<'_>],
        build: fn(f64) -> ElementKind,
        what: &str,
    ) -> Result<(), Diagnostic> {
        let terminals = self.expect_terminals(tokens, 2)?;
        let Some(value_tok) = tokens.get(2) else {
            return Err(self.err(self.line.len() + 1, format!("missing {what} value")));
        };
        if let Some(extra) = tokens.get(3) {
            return Err(self.err(extra.col, format!("unexpected token '{}'", extra.text)));
        }
        let value = self.value(value_tok)?;
        if !value.is_finite() || value <= 0.0 {
            return Err(self.err(value_tok.col, format!("{what} must be > 0, got {value}")));
        }
        self.push(label, build(value), &terminals);
        Ok(())
    }

    fn parse_mosfet(&mut self, label: String, tokens: &[Token<'_>]) -> Result<(), Diagnostic> {
        let terminals = self.expect_terminals(tokens, 4)?;
        let kv = split_card_tail(&tokens[4..]);
        let mut width = None;
        let mut length = None;
        let mut id = None;
        let mut stack = 1u32;
        let mut vsb = 0.0;
        let mut vds = 0.0;
        let mut gds = 0.0;
        let mut model = None;
        for (key, value, col) in &kv.pairs {
            match key.as_str() {
                "W" => width = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "L" => length = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "ID" => id = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "STACK" => {
                    stack = value.parse().map_err(|_| {
                        self.err(*col, format!("STACK needs an integer ≥ 1, got '{value}'"))
                    })?;
                    if stack < 1 {
                        return Err(self.err(*col, "STACK must be ≥ 1"));
                    }
                }
                "VSB" => vsb = parse_value(value).map_err(|e| self.err(*col, e))?,
                "VDS" => vds = parse_value(value).map_err(|e| self.err(*col, e))?,
                "GDS" => gds = parse_value(value).map_err(|e| self.err(*col, e))?,
                "MODEL" => model = Some(value.to_ascii_lowercase()),
                other => return Err(self.err(*col, format!("unknown MOSFET parameter '{other}'"))),
            }
        }
        let mut polarity = Polarity::Nmos;
        let mut dtmos = false;
        for (flag, col) in &kv.flags {
            match flag.as_str() {
                "P" => polarity = Polarity::Pmos,
                "DTMOS" => dtmos = true,
                other => return Err(self.err(*col, format!("unknown MOSFET flag '{other}'"))),
            }
        }
        let width = width.ok_or_else(|| self.err(1, "MOSFET requires W="))?;
        let length = length.ok_or_else(|| self.err(1, "MOSFET requires L="))?;
        let id = id.ok_or_else(|| self.err(1, "MOSFET requires ID="))?;
        if dtmos && !terminals[3].eq_ignore_ascii_case(&terminals[1]) {
            return Err(self.err(
                tokens[3].col,
                format!(
                    "DTMOS device '{label}' must tie bulk to gate (bulk '{}', gate '{}')",
                    terminals[3], terminals[1]
                ),
            ));
        }
        let kind = ElementKind::Mosfet {
            geometry: MosGeometry::with_stack(width, length, stack),
            bias: MosBias { id, vsb, vds },
            polarity,
            dtmos,
            gds,
            model,
        };
        self.push(label, kind, &terminals);
        Ok(())
    }

    fn parse_macro_amp(&mut self, label: String, tokens: &[Token<'_>]) -> Result<(), Diagnostic> {
        let terminals = self.expect_terminals(tokens, 4)?;
        let kv = split_card_tail(&tokens[4..]);
        if let Some((flag, col)) = kv.flags.first() {
            return Err(self.err(*col, format!("unexpected token '{flag}'")));
        }
        let mut gain = None;
        let mut pole = None;
        let mut vnoise = 0.0;
        for (key, value, col) in &kv.pairs {
            match key.as_str() {
                "GAIN" => gain = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "POLE" => pole = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "VNOISE" => vnoise = parse_value(value).map_err(|e| self.err(*col, e))?,
                other => {
                    return Err(self.err(*col, format!("unknown amplifier parameter '{other}'")))
                }
            }
        }
        let gain = gain.ok_or_else(|| self.err(1, "macro amplifier requires GAIN="))?;
        self.push(
            label,
            ElementKind::MacroAmp {
                dc_gain: gain,
                pole_hz: pole,
                input_noise_psd: vnoise,
            },
            &terminals,
        );
        Ok(())
    }

    fn parse_source(
        &mut self,
        label: String,
        tokens: &[Token<'_>],
        voltage: bool,
    ) -> Result<(), Diagnostic> {
        let terminals = self.expect_terminals(tokens, 2)?;
        let kv = split_card_tail(&tokens[2..]);
        if let Some((flag, col)) = kv.flags.first() {
            return Err(self.err(*col, format!("unexpected token '{flag}'")));
        }
        let mut dc = None;
        let mut ac = 0.0;
        for (key, value, col) in &kv.pairs {
            match key.as_str() {
                "DC" => dc = Some(parse_value(value).map_err(|e| self.err(*col, e))?),
                "AC" => ac = parse_value(value).map_err(|e| self.err(*col, e))?,
                other => return Err(self.err(*col, format!("unknown source parameter '{other}'"))),
            }
        }
        let dc = dc.ok_or_else(|| self.err(1, "source requires DC="))?;
        let kind = if voltage {
            ElementKind::VSource { dc, ac_mag: ac }
        } else {
            ElementKind::ISource { dc, ac_mag: ac }
        };
        self.push(label, kind, &terminals);
        Ok(())
    }

    fn parse_directive(&mut self, tokens: &[Token<'_>]) -> Result<bool, Diagnostic> {
        let head = tokens[0].text.to_ascii_lowercase();
        match head.as_str() {
            ".end" => Ok(true),
            ".loopgain" => {
                let Some(target) = tokens.get(1) else {
                    return Err(
                        self.err(self.line.len() + 1, ".loopgain requires an element label")
                    );
                };
                if let Some(extra) = tokens.get(2) {
                    return Err(self.err(extra.col, format!("unexpected token '{}'", extra.text)));
                }
                self.circuit.directives.push(Directive::LoopGain {
                    amp: target.text.to_ascii_uppercase(),
                });
                Ok(false)
            }
            ".noise" => {
                let mut out = None;
                let mut input = None;
                let mut exclude = Vec::new();
                for t in &tokens[1..] {
                    let Some((k, v)) = t.text.split_once('=') else {
                        return Err(
                            self.err(t.col, format!("expected key=value, found '{}'", t.text))
                        );
                    };
                    match k.to_ascii_lowercase().as_str() {
                        "out" => out = Some(v.to_ascii_lowercase()),
                        "in" => input = Some(v.to_ascii_uppercase()),
                        "exclude" => {
                            exclude = v
                                .split(',')
                                .filter(|s| !s.is_empty())
                                .map(|s| s.to_ascii_uppercase())
                                .collect();
                        }
                        other => {
                            return Err(self.err(t.col, format!("unknown .noise key '{other}'")))
                        }
                    }
                }
                let out = out.ok_or_else(|| self.err(1, ".noise requires out=<node>"))?;
                let input = input.ok_or_else(|| self.err(1, ".noise requires in=<source>"))?;
                self.circuit.directives.push(Directive::Noise {
                    out,
                    input,
                    exclude,
                });
                Ok(false)
            }
            other => Err(self.err(1, format!("unknown directive '{other}'"))),
        }
    }
}

/// Parse netlist text into a [`Circuit`].
///
/// Grammar errors return the first positioned diagnostic. Structural
/// soundness beyond the grammar (floating nodes, missing ground) is the
/// job of [`Circuit::validate`].
pub fn parse_netlist(text: &str) -> Result<Circuit, Diagnostic> {
    let mut lines = text.lines();
    let title = lines.next().unwrap_or("").to_string();
    let mut parser = LineParser {
        circuit: Circuit::new(title),
        labels: BTreeSet::new(),
        line_no: 1,
        line: "",
    };
    for (idx, raw) in lines.enumerate() {
        parser.line_no = idx + 2;
        parser.line = raw;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('*') {
            continue;
        }
        let tokens = tokenize(line);
        let head = &tokens[0];
        if head.text.starts_with('.') {
            if parser.parse_directive(&tokens)? {
                break;
            }
            continue;
        }
        let type_letter = head.text.chars().next().unwrap().to_ascii_uppercase();
        let label = parser.register_label(head.text)?;
        let rest = &tokens[1..];
        match type_letter {
            'R' => parser.parse_two_terminal_value(
                label,
                rest,
                |v| ElementKind::Resistor { ohms: v },
                "resistance",
            )?,
            'C' => parser.parse_two_terminal_value(
                label,
                rest,
                |v| ElementKind::Capacitor { farads: v },
                "capacitance",
            )?,
            'M' => parser.parse_mosfet(label, rest)?,
            'E' => parser.parse_macro_amp(label, rest)?,
            'V' => parser.parse_source(label, rest, true)?,
            'I' => parser.parse_source(label, rest, false)?,
            other => {
                return Err(Diagnostic::error(
                    parser.line_no,
                    head.col,
                    format!("unknown element type '{other}'"),
                ))
            }
        }
    }
    Ok(parser.circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn parse_value_engineering_suffixes() {
        assert_eq!(parse_value("4k").unwrap(), 4.0e3);
        assert_eq!(parse_value("1.5meg").unwrap(), 1.5e6);
        assert_eq!(parse_value("750f").unwrap(), 750.0e-15);
        assert_eq!(parse_value("20u").unwrap(), 20.0e-6);
        assert_eq!(parse_value("3n").unwrap(), 3.0e-9);
        assert_eq!(parse_value("2.5p").unwrap(), 2.5e-12);
        assert_eq!(parse_value("-3m").unwrap(), -3.0e-3);
        assert_eq!(parse_value("2G").unwrap(), 2.0e9);
        assert_eq!(parse_value("1e-6").unwrap(), 1.0e-6);
        assert_eq!(parse_value("1E3").unwrap(), 1.0e3);
        assert!(parse_value("4q").is_err());
        assert!(parse_value("k").is_err());
        assert!(parse_value("").is_err());
        assert!(parse_value("1e").is_err());
    }

    #[test]
    fn parse_resistor_line() {
        let c = parse_netlist("t\nR1 in out 4k\n.end\n").unwrap();
        let e = c.element("r1").unwrap();
        match e.kind {
            ElementKind::Resistor { ohms } => assert_eq!(ohms, 4000.0),
            _ => panic!("not a resistor"),
        }
        assert_eq!(c.node_name(e.terminals[0]), "in");
        assert_eq!(c.node_name(e.terminals[1]), "out");
    }

    #[test]
    fn parse_mirror_device() {
        let c = parse_netlist("t\nM3 d g s s W=20u L=1u ID=1u STACK=1\n.end\n").unwrap();
        let e = c.element("M3").unwrap();
        match &e.kind {
            ElementKind::Mosfet {
                geometry,
                bias,
                polarity,
                dtmos,
                ..
            } => {
                assert_relative_eq!(geometry.width, 20.0e-6);
                assert_relative_eq!(geometry.length, 1.0e-6);
                assert_eq!(geometry.series_stack, 1);
                assert_relative_eq!(bias.id, 1.0e-6);
                assert_eq!(*polarity, Polarity::Nmos);
                assert!(!dtmos);
            }
            _ => panic!("not a mosfet"),
        }
    }

    #[test]
    fn parse_dtmos_input_device() {
        let c = parse_netlist("t\nM1 d g s g W=500u L=0.25u ID=1u P DTMOS\n.end\n").unwrap();
        let e = c.element("M1").unwrap();
        match &e.kind {
            ElementKind::Mosfet {
                polarity, dtmos, ..
            } => {
                assert_eq!(*polarity, Polarity::Pmos);
                assert!(dtmos);
            }
            _ => panic!("not a mosfet"),
        }
        assert_eq!(e.terminals[1], e.terminals[3]);
    }

    #[test]
    fn dtmos_with_separate_bulk_is_an_error() {
        let err = parse_netlist("t\nM1 d g s b W=1u L=1u ID=1u DTMOS\n.end\n").unwrap_err();
        assert!(err.message.contains("DTMOS"));
        assert_eq!(err.line, 2);
    }

    #[test]
    fn duplicate_label_is_an_error() {
        let err = parse_netlist("t\nR1 a 0 1k\nR1 b 0 2k\n.end\n").unwrap_err();
        assert!(err.message.contains("duplicate"));
        assert_eq!(err.line, 3);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let err = parse_netlist("title\nR1 a 0 4q\n.end\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.col, 8);
        assert!(err.message.contains("suffix"));
    }

    #[test]
    fn directives_parse() {
        let text = "t\nE1 o 0 a b GAIN=100 POLE=1k VNOISE=1e-16\nR1 o 0 1k\nV1 a 0 DC=0 AC=1\nR2 a b 1k\nR3 b 0 1k\n.loopgain E1\n.noise out=o in=V1 exclude=R1,R2\n.end\n";
        let c = parse_netlist(text).unwrap();
        assert_eq!(c.loopgain_directive(), Some("E1"));
        let (out, input, exclude) = c.noise_directive().unwrap();
        assert_eq!(out, "o");
        assert_eq!(input, "V1");
        assert_eq!(exclude, ["R1".to_string(), "R2".to_string()]);
    }

    #[test]
    fn comment_and_blank_lines_skipped() {
        let c = parse_netlist("t\n* comment\n\nR1 a 0 1k\n.end\n").unwrap();
        assert_eq!(c.elements.len(), 1);
    }

    #[test]
    fn content_after_end_is_ignored() {
        let c = parse_netlist("t\nR1 a 0 1k\n.end\ngarbage !!!\n").unwrap();
        assert_eq!(c.elements.len(), 1);
    }

    #[test]
    fn title_preserved_byte_exactly() {
        let title = "  My Circuit (v2) * not a comment  ";
        let c = parse_netlist(&format!("{title}\nR1 a 0 1k\n.end\n")).unwrap();
        assert_eq!(c.title, title);
        assert!(c.serialize().starts_with(title));
    }

    fn arb_value() -> impl Strategy<Value = f64> {
        // Positive, representable magnitudes typical of circuit values.
        (1.0e-15..1.0e9f64).prop_map(|v| v)
    }

    fn arb_circuit() -> impl Strategy<Value = Circuit> {
        let node_names = prop::sample::select(vec!["a", "b", "c", "out", "in", "x1"]);
        let element =
            (0u8..4, node_names.clone(), node_names, arb_value()).prop_map(|(kind, n1, n2, v)| {
                match kind {
                    0 => (ElementKind::Resistor { ohms: v }, n1, n2),
                    1 => (ElementKind::Capacitor { farads: v }, n1, n2),
                    2 => (ElementKind::VSource { dc: v, ac_mag: 1.0 }, n1, n2),
                    _ => (ElementKind::ISource { dc: v, ac_mag: 0.0 }, n1, n2),
                }
            });
        prop::collection::vec(element, 1..8).prop_map(|elems| {
            let mut c = Circuit::new("prop circuit");
            for (i, (kind, n1, n2)) in elems.into_iter().enumerate() {
                let label = format!("{}{}", kind.type_letter(), i);
                c.add_element(&label, kind, &[n1, "0"]);
                let _ = n2;
            }
            c
        })
    }

    proptest! {
        #[test]
        fn prop_round_trip(c in arb_circuit()) {
            let text = c.serialize();
            let parsed = parse_netlist(&text).unwrap();
            prop_assert_eq!(&parsed, &c);
            prop_assert_eq!(parsed.serialize(), text);
        }

        #[test]
        fn prop_parser_total_on_ascii(s in "[ -~\n]{0,200}") {
            // Any outcome is fine; reaching here means no panic.
            let _ = parse_netlist(&s);
        }

        #[test]
        fn prop_value_round_trip(v in arb_value()) {
            let shown = format!("{v:e}");
            let parsed = parse_value(&shown).unwrap();
            prop_assert_eq!(parsed, v);
        }
    }
}
