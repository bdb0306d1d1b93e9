//! Store buffer, direct-mapped write-back L1 and flat main memory.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::Global;

/// Where the bytes of an access came from. Ordered by depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemLevel {
    StoreBuffer,
    L1,
    Main,
}

pub const LINE_BYTES: u64 = 64;
/// Address of the first global.
pub const BASE_ADDRESS: u64 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub store_buffer_entries: usize,
    pub l1_sets: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            store_buffer_entries: 8,
            l1_sets: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("out-of-bounds access of {width} bytes at {address:#x}")]
pub struct OutOfBounds {
    pub address: u64,
    pub width: u64,
}

/// Placement of globals in the address space: declaration order from
/// [`BASE_ADDRESS`], each 8-byte aligned.
#[derive(Debug, Clone)]
pub struct Layout {
    regions: Vec<(String, u64, u64)>,
    end: u64,
}

impl Layout {
    pub fn new(globals: &[Global]) -> Self {
        let mut at = BASE_ADDRESS;
        let mut regions = Vec::with_capacity(globals.len());
        for g in globals {
            regions.push((g.name.clone(), at, g.size as u64));
            at = (at + g.size as u64).next_multiple_of(8);
        }
        Layout { regions, end: at }
    }

    pub fn address_of(&self, name: &str) -> Option<u64> {
        self.regions.iter().find(|r| r.0 == name).map(|r| r.1)
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, u64, u64)> {
        self.regions.iter().map(|(n, a, s)| (n.as_str(), *a, *s))
    }

    /// An access is in bounds when it lies entirely inside one global.
    pub fn check(&self, address: u64, width: u64) -> Result<(), OutOfBounds> {
        let i = self.regions.partition_point(|r| r.1 <= address);
        let ok = i > 0 && {
            let (_, start, size) = &self.regions[i - 1];
            address.checked_add(width).is_some_and(|e| e <= start + size)
        };
        if ok {
            Ok(())
        } else {
            Err(OutOfBounds { address, width })
        }
    }

    /// Initial image of main memory, covering whole lines.
    pub fn image(&self, globals: &[Global]) -> Vec<u8> {
        let len = (self.end - BASE_ADDRESS).next_multiple_of(LINE_BYTES) as usize;
        let mut img = vec![0u8; len];
        for ((_, at, _), g) in self.regions.iter().zip(globals) {
            let off = (at - BASE_ADDRESS) as usize;
            let n = g.init.len().min(g.size);
            img[off..off + n].copy_from_slice(&g.init[..n]);
        }
        img
    }
}

#[derive(Debug, Clone)]
struct SbEntry {
    address: u64,
    bytes: [u8; 8],
    len: u8,
}

impl SbEntry {
    fn byte(&self, a: u64) -> Option<usize> {
        (a >= self.address && a < self.address + self.len as u64).then(|| (a - self.address) as usize)
    }
}

#[derive(Debug, Clone)]
struct Line {
    tag: u64,
    data: [u8; LINE_BYTES as usize],
    dirty: bool,
}

/// Result of a read: the little-endian value, the deepest level any byte
/// came from, and the level of each byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub value: u64,
    pub level: MemLevel,
    pub sources: [MemLevel; 8],
}

#[derive(Debug, Clone)]
pub struct MemoryHierarchy {
    layout: Layout,
    cfg: MemoryConfig,
    main: Vec<u8>,
    sb: VecDeque<SbEntry>,
    l1: Vec<Option<Line>>,
}

impl MemoryHierarchy {
    pub fn new(layout: Layout, main: Vec<u8>, cfg: MemoryConfig) -> Self {
        MemoryHierarchy {
            layout,
            cfg,
            main,
            sb: VecDeque::with_capacity(cfg.store_buffer_entries + 1),
            l1: vec![None; cfg.l1_sets.max(1)],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn main_index(&self, a: u64) -> usize {
        (a - BASE_ADDRESS) as usize
    }

    /// Make the line holding `a` resident; returns its set and whether it
    /// was filled from main memory.
    fn ensure_line(&mut self, a: u64) -> (usize, bool) {
        let tag = a / LINE_BYTES;
        let set = (tag % self.l1.len() as u64) as usize;
        if self.l1[set].as_ref().is_some_and(|l| l.tag == tag) {
            return (set, false);
        }
        if let Some(old) = self.l1[set].take() {
            if old.dirty {
                let at = self.main_index(old.tag * LINE_BYTES);
                self.main[at..at + LINE_BYTES as usize].copy_from_slice(&old.data);
            }
        }
        let at = self.main_index(tag * LINE_BYTES);
        let mut data = [0u8; LINE_BYTES as usize];
        data.copy_from_slice(&self.main[at..at + LINE_BYTES as usize]);
        self.l1[set] = Some(Line {
            tag,
            data,
            dirty: false,
        });
        (set, true)
    }

    fn line_byte(&mut self, set: usize, a: u64) -> &mut u8 {
        let line = self.l1[set].as_mut().expect("resident line");
        &mut line.data[(a % LINE_BYTES) as usize]
    }

    /// Read `width` bytes. Store-buffer bytes win (youngest entry first),
    /// then L1, then main memory through a line fill.
    pub fn read(&mut self, address: u64, width: u64) -> Result<Access, OutOfBounds> {
        self.layout.check(address, width)?;
        let mut value = 0u64;
        let mut sources = [MemLevel::StoreBuffer; 8];
        let mut filled_tag = None;
        for k in 0..width {
            let a = address + k;
            let from_sb = self
                .sb
                .iter()
                .rev()
                .find_map(|e| e.byte(a).map(|i| e.bytes[i]));
            let (byte, level) = match from_sb {
                Some(b) => (b, MemLevel::StoreBuffer),
                None => {
                    let (set, filled) = self.ensure_line(a);
                    if filled {
                        filled_tag = Some(a / LINE_BYTES);
                    }
                    let level = if filled_tag == Some(a / LINE_BYTES) {
                        MemLevel::Main
                    } else {
                        MemLevel::L1
                    };
                    (*self.line_byte(set, a), level)
                }
            };
            value |= (byte as u64) << (8 * k);
            sources[k as usize] = level;
        }
        let level = sources[..width as usize].iter().copied().max().unwrap_or(MemLevel::L1);
        Ok(Access {
            value,
            level,
            sources,
        })
    }

    /// Overwrite the bytes of a previous [`read`](Self::read) where they
    /// were found: store-buffer bytes in their entry, other bytes in the
    /// resident L1 line. Main memory is not touched.
    pub fn overwrite(&mut self, address: u64, width: u64, value: u64, sources: &[MemLevel; 8]) {
        for k in 0..width {
            let a = address + k;
            let b = (value >> (8 * k)) as u8;
            if sources[k as usize] == MemLevel::StoreBuffer {
                if let Some(e) = self.sb.iter_mut().rev().find(|e| e.byte(a).is_some()) {
                    let i = e.byte(a).unwrap();
                    e.bytes[i] = b;
                    continue;
                }
            }
            let (set, _) = self.ensure_line(a);
            *self.line_byte(set, a) = b;
        }
    }

    pub fn write(&mut self, address: u64, width: u64, value: u64) -> Result<(), OutOfBounds> {
        self.layout.check(address, width)?;
        self.sb.push_back(SbEntry {
            address,
            bytes: value.to_le_bytes(),
            len: width as u8,
        });
        while self.sb.len() > self.cfg.store_buffer_entries {
            self.drain_one();
        }
        Ok(())
    }

    fn drain_one(&mut self) {
        let Some(e) = self.sb.pop_front() else { return };
        for i in 0..e.len as u64 {
            let a = e.address + i;
            let (set, _) = self.ensure_line(a);
            *self.line_byte(set, a) = e.bytes[i as usize];
            self.l1[set].as_mut().unwrap().dirty = true;
        }
    }

    /// Drain the store buffer into L1.
    pub fn fence(&mut self) {
        while !self.sb.is_empty() {
            self.drain_one();
        }
    }

    /// Write back and invalidate the line containing `address`.
    pub fn flush_line(&mut self, address: u64) -> Result<(), OutOfBounds> {
        self.layout.check(address, 1)?;
        let tag = address / LINE_BYTES;
        let set = (tag % self.l1.len() as u64) as usize;
        if self.l1[set].as_ref().is_some_and(|l| l.tag == tag) {
            let line = self.l1[set].take().unwrap();
            if line.dirty {
                let at = self.main_index(tag * LINE_BYTES);
                self.main[at..at + LINE_BYTES as usize].copy_from_slice(&line.data);
            }
        }
        Ok(())
    }

    /// Architectural value of one byte, without changing any state.
    pub fn peek(&self, a: u64) -> u8 {
        if let Some(b) = self.sb.iter().rev().find_map(|e| e.byte(a).map(|i| e.bytes[i])) {
            return b;
        }
        let tag = a / LINE_BYTES;
        let set = (tag % self.l1.len() as u64) as usize;
        match &self.l1[set] {
            Some(l) if l.tag == tag => l.data[(a % LINE_BYTES) as usize],
            _ => self.main[self.main_index(a)],
        }
    }

    /// Architectural contents of `size` bytes at `address`.
    pub fn snapshot(&self, address: u64, size: u64) -> Vec<u8> {
        (address..address + size).map(|a| self.peek(a)).collect()
    }
}

/// Read `width` bytes through the hierarchy; returns the value and the
/// deepest level it resolved at.
pub fn memory_read(
    h: &mut MemoryHierarchy,
    address: u64,
    width: u64,
) -> Result<(u64, MemLevel), OutOfBounds> {
    h.read(address, width).map(|a| (a.value, a.level))
}
