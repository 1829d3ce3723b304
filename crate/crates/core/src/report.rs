//! Provenance stamped into every output file.

use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Provenance {
            tool: "entropic".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
        }
    }

    /// `# tool version config=hash` comment line.
    pub fn write_comment<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# {} {} config={}", self.tool, self.version, self.config_hash)?;
        Ok(())
    }

    /// Structured-text header block.
    pub fn write_block<W: Write>(&self, w: &mut W, kind: &str) -> Result<()> {
        writeln!(w, "[{kind}]")?;
        writeln!(w, "tool = {}", self.tool)?;
        writeln!(w, "version = {}", self.version)?;
        writeln!(w, "config_hash = {}", self.config_hash)?;
        Ok(())
    }
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance::new("none")
    }
}
