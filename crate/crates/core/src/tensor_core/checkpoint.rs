//! Binary parameter container.
//!
//! Layout (little endian): version byte, magic `ARLP`, a length-prefixed
//! UTF-8 header, then named entries. Each entry stores its layer sizes, a
//! flag byte and a list of tensors (rank, dims, flat f64 values).

use std::path::Path;

use super::mlp::NetBundle;
use super::policy::{HeadKind, PolicyHead};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"ARLP";

const FLAG_LAYER_NORM: u8 = 1;
const FLAG_CATEGORICAL: u8 = 2;
const FLAG_POLICY: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub layer_sizes: Vec<usize>,
    pub flags: u8,
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    /// Free-form header, typically JSON describing the owner.
    pub header: String,
    pub entries: Vec<Entry>,
}

impl Entry {
    pub fn from_net(name: &str, net: &NetBundle) -> Self {
        let mut tensors = net.online.clone();
        tensors.extend(net.target.iter().cloned());
        Self {
            name: name.to_string(),
            layer_sizes: net.layer_sizes().to_vec(),
            flags: if net.uses_layer_norm() { FLAG_LAYER_NORM } else { 0 },
            tensors,
        }
    }

    pub fn from_policy(name: &str, head: &PolicyHead) -> Self {
        let mut e = Self::from_net(name, &head.net);
        e.flags |= FLAG_POLICY;
        if head.kind() == HeadKind::Categorical {
            e.flags |= FLAG_CATEGORICAL;
        }
        e.tensors.push(head.log_std.clone());
        e
    }

    fn split_net(&self, tensors: &[Tensor]) -> Result<NetBundle> {
        if tensors.len() % 2 != 0 {
            return Err(Error::shape(format!("entry {} has an odd tensor count", self.name)));
        }
        let half = tensors.len() / 2;
        NetBundle::from_parts(
            self.layer_sizes.clone(),
            self.flags & FLAG_LAYER_NORM != 0,
            tensors[..half].to_vec(),
            tensors[half..].to_vec(),
        )
    }

    pub fn to_net(&self) -> Result<NetBundle> {
        if self.flags & FLAG_POLICY != 0 {
            return Err(Error::shape(format!("entry {} is a policy", self.name)));
        }
        self.split_net(&self.tensors)
    }

    pub fn to_policy(&self) -> Result<PolicyHead> {
        if self.flags & FLAG_POLICY == 0 || self.tensors.is_empty() {
            return Err(Error::shape(format!("entry {} is not a policy", self.name)));
        }
        let (log_std, rest) = self.tensors.split_last().expect("non-empty");
        let net = self.split_net(rest)?;
        let kind = if self.flags & FLAG_CATEGORICAL != 0 {
            HeadKind::Categorical
        } else {
            HeadKind::Gaussian
        };
        PolicyHead::from_parts(net, log_std.clone(), kind)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::format(self.path, "size overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(self.path, "invalid UTF-8"))
    }
}

impl Container {
    pub fn entry(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format("<checkpoint>", format!("missing entry {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![CHECKPOINT_VERSION];
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.header.len());
        out.extend_from_slice(self.header.as_bytes());
        put_u32(&mut out, self.entries.len());
        for e in &self.entries {
            put_u32(&mut out, e.name.len());
            out.extend_from_slice(e.name.as_bytes());
            put_u32(&mut out, e.layer_sizes.len());
            for &s in &e.layer_sizes {
                put_u64(&mut out, s);
            }
            out.push(e.flags);
            put_u32(&mut out, e.tensors.len());
            for t in &e.tensors {
                put_u32(&mut out, t.shape().len());
                for &d in t.shape() {
                    put_u64(&mut out, d);
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let version = r.u8()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        if r.take(4)? != MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let header = r.string()?;
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let n_layers = r.u32()?;
            let layer_sizes = (0..n_layers).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let flags = r.u8()?;
            let n_tensors = r.u32()?;
            let mut tensors = Vec::with_capacity(n_tensors);
            for _ in 0..n_tensors {
                let rank = r.u32()?;
                let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
                let len: usize = shape.iter().product();
                if len.saturating_mul(8) > bytes.len() {
                    return Err(Error::format(path, "tensor larger than file"));
                }
                let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                tensors.push(Tensor::new(shape, data)?);
            }
            entries.push(Entry {
                name,
                layer_sizes,
                flags,
                tensors,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes"));
        }
        Ok(Self { header, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor_core::mlp::FinalInit;

    #[test]
    fn round_trip() {
        let mut rng = stream(9, 1);
        let mut net = NetBundle::new(&[3, 4, 2], true, FinalInit::Orthogonal, &mut rng).unwrap();
        net.online[0].data_mut()[0] = 0.125;
        let head = PolicyHead::new(3, &[4], 2, HeadKind::Gaussian, true, &mut rng).unwrap();
        let c = Container {
            header: "{\"x\":1}".into(),
            entries: vec![Entry::from_net("v", &net), Entry::from_policy("pi", &head)],
        };
        let bytes = c.to_bytes();
        assert_eq!(bytes[0], CHECKPOINT_VERSION);
        let back = Container::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.entry("v").unwrap().to_net().unwrap(), net);
        assert_eq!(back.entry("pi").unwrap().to_policy().unwrap(), head);
    }

    #[test]
    fn truncation_and_version_are_rejected() {
        let c = Container::default();
        let mut bytes = c.to_bytes();
        assert!(Container::from_bytes(&bytes[..3], Path::new("m")).is_err());
        bytes[0] = 99;
        assert!(matches!(
            Container::from_bytes(&bytes, Path::new("m")),
            Err(Error::Format { .. })
        ));
    }
}
