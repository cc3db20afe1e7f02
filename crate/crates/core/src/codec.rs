//! Little-endian binary encoding shared by checkpoints and segmenter files.

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::networks::ParamSet;

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.bytes(&x.to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn tensor(&mut self, t: &Tensor<f32>) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        self.f32s(t.data());
    }

    pub fn tensors(&mut self, ts: &[Tensor<f32>]) {
        self.u32(ts.len() as u32);
        for t in ts {
            self.tensor(t);
        }
    }

    pub fn params(&mut self, p: &ParamSet) {
        self.u32(p.len() as u32);
        for (name, t) in p.names().iter().zip(p.tensors()) {
            self.str(name);
            self.tensor(t);
        }
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::Format(format!("implausible length {n} at byte {}", self.pos)));
        }
        Ok(n)
    }

    pub fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len()?;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn tensor(&mut self) -> Result<Tensor<f32>> {
        let nd = self.u32()? as usize;
        if nd > 8 {
            return Err(Error::Format(format!("tensor rank {nd}")));
        }
        let shape = (0..nd).map(|_| self.len()).collect::<Result<Vec<_>>>()?;
        let data = self.f32s()?;
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!("tensor shape {shape:?} vs {} values", data.len())));
        }
        Ok(Tensor::new(shape, data))
    }

    pub fn tensors(&mut self) -> Result<Vec<Tensor<f32>>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.tensor()).collect()
    }

    /// Read a parameter set and copy it into `into`, which fixes the expected
    /// names and shapes.
    pub fn params_into(&mut self, into: &mut ParamSet) -> Result<()> {
        let n = self.u32()? as usize;
        if n != into.len() {
            return Err(Error::Format(format!("{n} parameter tensors, expected {}", into.len())));
        }
        for i in 0..n {
            let name = self.str()?;
            let t = self.tensor()?;
            if name != into.names()[i] || t.shape() != into.get(i).shape() {
                return Err(Error::Format(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    t.shape(),
                    into.names()[i],
                    into.get(i).shape()
                )));
            }
            into.tensors_mut()[i] = t;
        }
        Ok(())
    }
}
