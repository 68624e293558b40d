//! Little-endian cursor that reports the byte offset of short reads.

use byteorder::{ByteOrder, LittleEndian as LE, WriteBytesExt};

use crate::error::{MrcError, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = self.buf.len() - self.pos;
        if n > rest {
            return Err(MrcError::Truncated { what: self.what, offset: self.pos, needed: n });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn fail<T>(&self, at: usize, reason: impl Into<String>) -> Result<T> {
        Err(MrcError::Format { what: self.what, offset: at, reason: reason.into() })
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return self.fail(self.pos, format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn i8(&mut self) -> Result<i8> {
        Ok(self.take(1)?[0] as i8)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(LE::read_u16(self.take(2)?))
    }

    pub fn i16(&mut self) -> Result<i16> {
        Ok(LE::read_i16(self.take(2)?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(LE::read_u32(self.take(4)?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(LE::read_i32(self.take(4)?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(LE::read_f32(self.take(4)?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(LE::read_f64(self.take(8)?))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.saturating_mul(4))?;
        let mut out = vec![0.0; n];
        LE::read_f32_into(raw, &mut out);
        Ok(out)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8))?;
        let mut out = vec![0.0; n];
        LE::read_f64_into(raw, &mut out);
        Ok(out)
    }
}

/// Writes into a `Vec<u8>` never fail.
pub(crate) trait Put {
    fn put_u8(&mut self, v: u8);
    fn put_i8(&mut self, v: i8);
    fn put_u16(&mut self, v: u16);
    fn put_i16(&mut self, v: i16);
    fn put_u32(&mut self, v: u32);
    fn put_i32(&mut self, v: i32);
    fn put_f32(&mut self, v: f32);
    fn put_f64(&mut self, v: f64);
}

impl Put for Vec<u8> {
    fn put_u8(&mut self, v: u8) {
        self.push(v);
    }
    fn put_i8(&mut self, v: i8) {
        self.push(v as u8);
    }
    fn put_u16(&mut self, v: u16) {
        self.write_u16::<LE>(v).unwrap();
    }
    fn put_i16(&mut self, v: i16) {
        self.write_i16::<LE>(v).unwrap();
    }
    fn put_u32(&mut self, v: u32) {
        self.write_u32::<LE>(v).unwrap();
    }
    fn put_i32(&mut self, v: i32) {
        self.write_i32::<LE>(v).unwrap();
    }
    fn put_f32(&mut self, v: f32) {
        self.write_f32::<LE>(v).unwrap();
    }
    fn put_f64(&mut self, v: f64) {
        self.write_f64::<LE>(v).unwrap();
    }
}
