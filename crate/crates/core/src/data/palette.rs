use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Background colors, one per bias class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

/// Ten fixed RGB colors: red, green, blue, yellow, magenta, cyan, orange,
/// pink, violet, gray.
pub const DEFAULT_COLORS: [[u8; 3]; 10] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [225, 225, 0],
    [225, 0, 225],
    [0, 255, 255],
    [255, 128, 0],
    [255, 0, 128],
    [128, 0, 255],
    [128, 128, 128],
];

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: DEFAULT_COLORS.to_vec(),
        }
    }
}

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::Spec("palette needs at least one color".into()));
        }
        Ok(Self { colors })
    }

    /// Parses one `R G B` line (0-255 each) per color; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut colors = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<Vec<u8>> = parts.iter().map(|p| p.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 3 => colors.push([v[0], v[1], v[2]]),
                _ => {
                    return Err(Error::Spec(format!(
                        "palette line {}: expected three integers in 0..=255, got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        Self::new(colors)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Truncates to the first `n` colors.
    pub fn take(&self, n: usize) -> Result<Self> {
        if n > self.colors.len() {
            return Err(Error::Spec(format!(
                "palette has {} colors, {n} requested",
                self.colors.len()
            )));
        }
        Self::new(self.colors[..n].to_vec())
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Color `b` scaled to `[0, 1]`.
    pub fn color(&self, b: usize) -> [f32; 3] {
        self.colors[b].map(|c| c as f32 / 255.0)
    }
}
