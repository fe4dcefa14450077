use crate::error::FormatError;

pub(crate) const VERSION: u32 = 1;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn magic(&mut self, magic: &[u8; 4]) -> &mut Self {
        self.buf.extend_from_slice(magic);
        self.u32(VERSION)
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn len(&mut self, v: usize) -> &mut Self {
        self.u32(u32::try_from(v).expect("length fits in u32"))
    }

    pub fn f32s(&mut self, vs: &[f64]) -> &mut Self {
        for &v in vs {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::new(self.pos, message)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            ))),
        }
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<(), FormatError> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(FormatError::new(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let at = self.pos;
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(FormatError::new(at, format!("unsupported version {version}")));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn len(&mut self, what: &str) -> Result<usize, FormatError> {
        Ok(self.u32(what)? as usize)
    }

    pub fn flag(&mut self, what: &str) -> Result<bool, FormatError> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(FormatError::new(at, format!("{what} must be 0 or 1, found {v}"))),
        }
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| self.err(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    pub fn end(&self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
