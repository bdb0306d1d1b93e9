//! Text to [`IrModule`].
//!
//! ```text
//! // comment
//! global @g[8] = "0700000000000000"
//! fn @main(%x: i64) -> i64 {
//! entry:
//!   %a = load i64 @g
//!   %r = mul i64 %a, %x
//!   ret %r
//! }
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use super::validate::{validate_module, Violation};
use super::{
    BasicBlock, BinOp, Function, Global, Instruction, IrModule, Opcode, Operand, OriginTag, Param,
    Pass, Pred, ReportKind, Ty,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownOpcode(String),
    UnknownType(String),
    ConstantOutOfRange { value: String, ty: Ty },
    /// The text parsed but the module violates a type, SSA or CFG rule.
    Invalid(Vec<Violation>),
}

impl ParseErrorKind {
    /// Rule id of the first violation, for `Invalid` errors.
    pub fn rule(&self) -> Option<&str> {
        match self {
            ParseErrorKind::Invalid(v) => v.first().map(|v| v.rule),
            _ => None,
        }
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownOpcode(op) => write!(f, "unknown opcode `{op}`"),
            ParseErrorKind::UnknownType(t) => write!(f, "unknown type `{t}`"),
            ParseErrorKind::ConstantOutOfRange { value, ty } => {
                write!(f, "constant {value} does not fit in {ty}")
            }
            ParseErrorKind::Invalid(vs) => {
                let mut first = true;
                for v in vs {
                    if !first {
                        f.write_str("; ")?;
                    }
                    first = false;
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Local(String),
    Global(String),
    Int { neg: bool, mag: u64, text: String },
    Str(String),
    Punct(char),
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Local(s) => write!(f, "`%{s}`"),
            Tok::Global(s) => write!(f, "`@{s}`"),
            Tok::Int { text, .. } => write!(f, "`{text}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Punct(c) => write!(f, "`{c}`"),
            Tok::Arrow => f.write_str("`->`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, m: String| ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(m),
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let bump = |i: &mut usize, col: &mut usize| {
            *i += 1;
            *col += 1;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            bump(&mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump(&mut i, &mut col);
            }
            continue;
        }
        let read_word = |i: &mut usize, col: &mut usize| {
            let start = *i;
            while *i < chars.len() && is_ident_char(chars[*i]) {
                *i += 1;
                *col += 1;
            }
            chars[start..*i].iter().collect::<String>()
        };
        let tok = match c {
            '%' | '@' => {
                bump(&mut i, &mut col);
                let w = read_word(&mut i, &mut col);
                if w.is_empty() {
                    return Err(err(tl, tc, format!("expected a name after `{c}`")));
                }
                if c == '%' {
                    Tok::Local(w)
                } else {
                    Tok::Global(w)
                }
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 2;
                col += 2;
                Tok::Arrow
            }
            '-' | '0'..='9' => {
                let neg = c == '-';
                if neg {
                    bump(&mut i, &mut col);
                }
                let w = read_word(&mut i, &mut col);
                let mag = if let Some(hex) = w.strip_prefix("0x").or_else(|| w.strip_prefix("0X")) {
                    u64::from_str_radix(hex, 16)
                } else {
                    w.parse::<u64>()
                }
                .map_err(|_| err(tl, tc, format!("malformed integer `{w}`")))?;
                let text = if neg { format!("-{w}") } else { w };
                Tok::Int { neg, mag, text }
            }
            '"' => {
                bump(&mut i, &mut col);
                let start = i;
                while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                    bump(&mut i, &mut col);
                }
                if chars.get(i) != Some(&'"') {
                    return Err(err(tl, tc, "unterminated string".into()));
                }
                let s = chars[start..i].iter().collect();
                bump(&mut i, &mut col);
                Tok::Str(s)
            }
            '(' | ')' | '{' | '}' | '[' | ']' | ':' | ',' | '=' | '#' => {
                bump(&mut i, &mut col);
                Tok::Punct(c)
            }
            c if c.is_ascii_alphabetic() || c == '_' => Tok::Ident(read_word(&mut i, &mut col)),
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: tl,
            col: tc,
        });
    }
    Ok(out)
}

/// Source position of each instruction, keyed by (function, block, index).
type SpanTable = HashMap<(usize, usize, usize), (usize, usize)>;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    spans: SpanTable,
    block_spans: HashMap<(usize, usize), (usize, usize)>,
    fn_spans: Vec<(usize, usize)>,
    end: (usize, usize),
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or(self.end)
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, kind }
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        self.error(ParseErrorKind::Syntax(msg.into()))
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.syntax(format!("expected {wanted}, found {t}")),
            None => self.syntax(format!("expected {wanted}, found end of input")),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn global_name(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Global(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a global name `@...`")),
        }
    }

    fn local_name(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Local(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a value name `%...`")),
        }
    }

    fn ty(&mut self) -> PResult<Ty> {
        match self.peek() {
            Some(Tok::Ident(s)) => match Ty::from_name(s) {
                Some(t) => {
                    self.pos += 1;
                    Ok(t)
                }
                None => Err(self.error(ParseErrorKind::UnknownType(s.clone()))),
            },
            _ => Err(self.unexpected("a type")),
        }
    }

    fn uint(&mut self) -> PResult<u64> {
        match self.peek() {
            Some(Tok::Int { neg: false, mag, .. }) => {
                let v = *mag;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.unexpected("a non-negative integer")),
        }
    }

    /// A value operand of type `ty`: `%v`, `@g` or an integer constant.
    fn operand(&mut self, ty: Ty) -> PResult<Operand> {
        match self.peek().cloned() {
            Some(Tok::Local(s)) => {
                self.pos += 1;
                Ok(Operand::Value(s))
            }
            Some(Tok::Global(s)) => {
                self.pos += 1;
                Ok(Operand::Global(s))
            }
            Some(Tok::Int { neg, mag, text }) => {
                let bits = ty.bits();
                let fits = if neg {
                    bits == 64 && mag <= 1u64 << 63 || bits < 64 && mag <= 1u64 << (bits - 1)
                } else {
                    mag <= ty.mask()
                };
                if !fits {
                    return Err(self.error(ParseErrorKind::ConstantOutOfRange { value: text, ty }));
                }
                self.pos += 1;
                let v = if neg { mag.wrapping_neg() } else { mag };
                Ok(Operand::Const(v & ty.mask()))
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    fn label(&mut self) -> PResult<Operand> {
        Ok(Operand::Label(self.ident("a block label")?))
    }

    fn comma(&mut self) -> PResult<()> {
        self.expect_punct(',')
    }

    fn module(&mut self) -> PResult<IrModule> {
        let mut m = IrModule {
            globals: Vec::new(),
            functions: Vec::new(),
            entry: "main".to_string(),
            instrumented: BTreeSet::new(),
        };
        while let Some(tok) = self.peek().cloned() {
            match tok {
                Tok::Ident(kw) if kw == "global" => {
                    self.pos += 1;
                    m.globals.push(self.global()?);
                }
                Tok::Ident(kw) if kw == "fn" => {
                    self.fn_spans.push(self.here());
                    self.pos += 1;
                    let fi = m.functions.len();
                    let f = self.function(fi)?;
                    m.functions.push(f);
                }
                Tok::Ident(kw) if kw == "entry" => {
                    self.pos += 1;
                    m.entry = self.global_name()?;
                }
                Tok::Ident(kw) if kw == "instrumented" => {
                    self.pos += 1;
                    loop {
                        let name = self.ident("a pass name")?;
                        let pass = Pass::from_name(&name)
                            .ok_or_else(|| self.syntax(format!("unknown pass `{name}`")))?;
                        m.instrumented.insert(pass);
                        if !self.eat_punct(',') {
                            break;
                        }
                    }
                }
                _ => return Err(self.unexpected("`global`, `fn`, `entry` or `instrumented`")),
            }
        }
        Ok(m)
    }

    fn global(&mut self) -> PResult<Global> {
        let name = self.global_name()?;
        self.expect_punct('[')?;
        let size = self.uint()? as usize;
        self.expect_punct(']')?;
        let mut init = vec![0u8; size];
        if self.eat_punct('=') {
            match self.peek().cloned() {
                Some(Tok::Ident(z)) if z == "zero" => self.pos += 1,
                Some(Tok::Str(hex)) => {
                    init = decode_hex(&hex).ok_or_else(|| self.syntax("malformed hex string"))?;
                    self.pos += 1;
                }
                _ => return Err(self.unexpected("`zero` or a hex string")),
            }
        }
        Ok(Global { name, size, init })
    }

    fn function(&mut self, fi: usize) -> PResult<Function> {
        let name = self.global_name()?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let pname = self.local_name()?;
                self.expect_punct(':')?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if self.eat_punct(')') {
                    break;
                }
                self.comma()?;
            }
        }
        if self.next() != Some(Tok::Arrow) {
            self.pos -= 1;
            return Err(self.unexpected("`->`"));
        }
        let ret_ty = self.ty()?;
        self.expect_punct('{')?;
        let mut blocks: Vec<BasicBlock> = Vec::new();
        loop {
            if self.eat_punct('}') {
                break;
            }
            match (self.peek(), self.peek_at(1)) {
                (Some(Tok::Ident(l)), Some(Tok::Punct(':'))) => {
                    let l = l.clone();
                    self.block_spans.insert((fi, blocks.len()), self.here());
                    self.pos += 2;
                    blocks.push(BasicBlock::new(l));
                }
                (None, _) => return Err(self.unexpected("`}`")),
                _ => {
                    if blocks.is_empty() {
                        return Err(self.unexpected("a block label"));
                    }
                    let at = self.here();
                    let bi = blocks.len() - 1;
                    let ii = blocks[bi].instrs.len();
                    let ins = self.instruction(ret_ty)?;
                    blocks[bi].instrs.push(ins);
                    self.spans.insert((fi, bi, ii), at);
                }
            }
        }
        Ok(Function {
            name,
            params,
            ret_ty,
            blocks,
        })
    }

    fn instruction(&mut self, ret_ty: Ty) -> PResult<Instruction> {
        let result = if let (Some(Tok::Local(_)), Some(Tok::Punct('='))) = (self.peek(), self.peek_at(1)) {
            let r = self.local_name()?;
            self.pos += 1;
            Some(r)
        } else {
            None
        };
        let op_at = self.pos;
        let op = self.ident("an opcode")?;
        let bin = BinOp::ALL.into_iter().find(|b| b.name() == op);
        let (opcode, ty, operands) = if let Some(b) = bin {
            let ty = self.ty()?;
            let a = self.operand(ty)?;
            self.comma()?;
            let c = self.operand(ty)?;
            (Opcode::Bin(b), ty, vec![a, c])
        } else {
            match op.as_str() {
                "icmp" => {
                    let p = self.ident("a predicate")?;
                    let pred = Pred::from_name(&p)
                        .ok_or_else(|| self.syntax(format!("unknown predicate `{p}`")))?;
                    let ty = self.ty()?;
                    let a = self.operand(ty)?;
                    self.comma()?;
                    let b = self.operand(ty)?;
                    (Opcode::Icmp(pred), ty, vec![a, b])
                }
                "select" => {
                    let ty = self.ty()?;
                    let c = self.operand(Ty::I1)?;
                    self.comma()?;
                    let a = self.operand(ty)?;
                    self.comma()?;
                    let b = self.operand(ty)?;
                    (Opcode::Select, ty, vec![c, a, b])
                }
                "trunc" | "zext" => {
                    let from = self.ty()?;
                    let a = self.operand(from)?;
                    self.expect_keyword("to")?;
                    let to = self.ty()?;
                    let opc = if op == "trunc" {
                        Opcode::Trunc { from }
                    } else {
                        Opcode::Zext { from }
                    };
                    (opc, to, vec![a])
                }
                "ptradd" => {
                    let a = self.operand(Ty::Ptr)?;
                    self.comma()?;
                    let b = self.operand(Ty::I64)?;
                    (Opcode::PtrAdd, Ty::Ptr, vec![a, b])
                }
                "load" => {
                    let ty = self.ty()?;
                    let a = self.operand(Ty::Ptr)?;
                    (Opcode::Load, ty, vec![a])
                }
                "store" => {
                    let ty = self.ty()?;
                    let v = self.operand(ty)?;
                    self.comma()?;
                    let a = self.operand(Ty::Ptr)?;
                    (Opcode::Store, ty, vec![v, a])
                }
                "br" => (Opcode::Br, Ty::I1, vec![self.label()?]),
                "condbr" => {
                    let c = self.operand(Ty::I1)?;
                    self.comma()?;
                    let t = self.label()?;
                    self.comma()?;
                    let e = self.label()?;
                    (Opcode::CondBr, Ty::I1, vec![c, t, e])
                }
                "ret" => (Opcode::Ret, ret_ty, vec![self.operand(ret_ty)?]),
                "mfence" => (Opcode::MFence, Ty::I1, vec![]),
                "clflush" => (Opcode::ClFlush, Ty::Ptr, vec![self.operand(Ty::Ptr)?]),
                "report_error" => {
                    let k = self.ident("a report kind")?;
                    let kind = ReportKind::from_name(&k)
                        .ok_or_else(|| self.syntax(format!("unknown report kind `{k}`")))?;
                    let ty = self.ty()?;
                    let site = self.operand(Ty::I64)?;
                    self.comma()?;
                    let ok = self.operand(Ty::I1)?;
                    self.comma()?;
                    let mut ops = vec![site, ok, self.operand(ty)?];
                    while self.eat_punct(',') {
                        ops.push(self.operand(ty)?);
                    }
                    (Opcode::ReportError(kind), ty, ops)
                }
                _ => {
                    self.pos = op_at;
                    return Err(self.error(ParseErrorKind::UnknownOpcode(op)));
                }
            }
        };
        let tag = if self.eat_punct('#') {
            let t = self.ident("an origin tag")?;
            OriginTag::from_suffix(&t).ok_or_else(|| self.syntax(format!("unknown origin tag `{t}`")))?
        } else {
            OriginTag::Original
        };
        Ok(Instruction {
            result,
            opcode,
            ty,
            operands,
            tag,
        })
    }
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Parse and validate a module.
pub fn parse_module(text: &str) -> Result<IrModule, ParseError> {
    let toks = lex(text)?;
    let end = toks
        .last()
        .map(|t| (t.line, t.col + 1))
        .unwrap_or((1, 1));
    let mut p = Parser {
        toks,
        pos: 0,
        spans: HashMap::new(),
        block_spans: HashMap::new(),
        fn_spans: Vec::new(),
        end,
    };
    let module = p.module()?;
    let violations = validate_module(&module);
    if violations.is_empty() {
        return Ok(module);
    }
    let (line, col) = locate(&module, &violations[0], &p);
    Err(ParseError {
        line,
        col,
        kind: ParseErrorKind::Invalid(violations),
    })
}

fn locate(m: &IrModule, v: &Violation, p: &Parser) -> (usize, usize) {
    let fi = v
        .function
        .as_deref()
        .and_then(|f| m.functions.iter().position(|x| x.name == f));
    let Some(fi) = fi else { return (1, 1) };
    let bi = v
        .block
        .as_deref()
        .and_then(|b| m.functions[fi].block_index(b));
    match (bi, v.index) {
        (Some(bi), Some(ii)) => p
            .spans
            .get(&(fi, bi, ii))
            .or_else(|| p.block_spans.get(&(fi, bi)))
            .copied()
            .unwrap_or((1, 1)),
        (Some(bi), None) => p.block_spans.get(&(fi, bi)).copied().unwrap_or((1, 1)),
        _ => p.fn_spans.get(fi).copied().unwrap_or((1, 1)),
    }
}
