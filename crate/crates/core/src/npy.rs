//! NPY (v1/v2, C-order, little-endian) reader and v1 `<f8` writer.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::tensor::{ActivationTensor, Heatmap, ImageTensor};

const MAGIC: &[u8] = b"\x93NUMPY";
const MAX_RANK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
    I1,
    I2,
    I4,
    I8,
    U1,
    U2,
    U4,
    U8,
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self> {
        let (order, kind) = descr.split_at(1.min(descr.len()));
        // single-byte types are written with '|'
        let little = match order {
            "<" => true,
            "|" => kind.ends_with('1'),
            _ => false,
        };
        if !little {
            return Err(Error::Dtype(format!("'{descr}' (only little-endian is supported)")));
        }
        Ok(match kind {
            "f4" => Dtype::F4,
            "f8" => Dtype::F8,
            "i1" => Dtype::I1,
            "i2" => Dtype::I2,
            "i4" => Dtype::I4,
            "i8" => Dtype::I8,
            "u1" => Dtype::U1,
            "u2" => Dtype::U2,
            "u4" => Dtype::U4,
            "u8" => Dtype::U8,
            _ => return Err(Error::Dtype(format!("'{descr}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Dtype::I1 | Dtype::U1 => 1,
            Dtype::I2 | Dtype::U2 => 2,
            Dtype::F4 | Dtype::I4 | Dtype::U4 => 4,
            Dtype::F8 | Dtype::I8 | Dtype::U8 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        macro_rules! le {
            ($t:ty) => {
                <$t>::from_le_bytes(b.try_into().expect("element width")) as f64
            };
        }
        match self {
            Dtype::F4 => le!(f32),
            Dtype::F8 => le!(f64),
            Dtype::I1 => le!(i8),
            Dtype::I2 => le!(i16),
            Dtype::I4 => le!(i32),
            Dtype::I8 => le!(i64),
            Dtype::U1 => le!(u8),
            Dtype::U2 => le!(u16),
            Dtype::U4 => le!(u32),
            Dtype::U8 => le!(u64),
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Returns the raw text following `'key':` in a Python dict literal.
fn dict_entry<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}'");
    let start = dict
        .find(&needle)
        .ok_or_else(|| Error::Format(format!("header is missing '{key}'")))?;
    let rest = dict[start + needle.len()..].trim_start();
    rest.strip_prefix(':')
        .map(str::trim_start)
        .ok_or_else(|| Error::Format(format!("expected ':' after '{key}'")))
}

fn parse_header(text: &str) -> Result<Header> {
    let dict = text.trim();
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err(Error::Format(format!("header is not a dict: {dict:?}")));
    }

    let descr = dict_entry(dict, "descr")?;
    let quote = descr
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format("descr is not a string".into()))?;
    let descr = &descr[1..];
    let end = descr
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated descr".into()))?;
    let dtype = Dtype::parse(&descr[..end])?;

    let fortran = dict_entry(dict, "fortran_order")?;
    let fortran_order = if fortran.starts_with("True") {
        true
    } else if fortran.starts_with("False") {
        false
    } else {
        return Err(Error::Format("fortran_order is not a bool".into()));
    };

    let shape = dict_entry(dict, "shape")?;
    let shape = shape
        .strip_prefix('(')
        .and_then(|s| s.find(')').map(|e| &s[..e]))
        .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
    let shape = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        dtype,
        fortran_order,
        shape,
    })
}

/// Decodes an in-memory NPY file.
pub fn decode_npy(bytes: &[u8]) -> Result<ArrayD<f64>> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated v2 preamble".into()));
            }
            let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
            (len as usize, 12)
        }
        v => return Err(Error::Format(format!("unsupported format version {v}"))),
    };
    let header_end = header_start + header_len;
    if bytes.len() < header_end {
        return Err(Error::Format("truncated header".into()));
    }
    let text = std::str::from_utf8(&bytes[header_start..header_end])
        .map_err(|_| Error::Format("header is not text".into()))?;
    let header = parse_header(text)?;

    if header.fortran_order {
        return Err(Error::UnsupportedLayout("fortran_order is True".into()));
    }
    if header.shape.len() > MAX_RANK {
        return Err(Error::Format(format!(
            "rank {} exceeds the supported maximum of {MAX_RANK}",
            header.shape.len()
        )));
    }

    let count: usize = header.shape.iter().product();
    let width = header.dtype.size();
    let payload = &bytes[header_end..];
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width
        )));
    }
    let data = payload
        .chunks_exact(width)
        .map(|chunk| header.dtype.decode(chunk))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&header.shape), data)
        .map_err(|e| Error::Format(format!("shape/data mismatch: {e}")))
}

/// Encodes an array as NPY v1 with `<f8` elements in C order.
pub fn encode_npy(array: &ArrayD<f64>) -> Result<Vec<u8>> {
    if array.ndim() > MAX_RANK {
        return Err(Error::Input(format!("rank {} is not supported", array.ndim())));
    }
    let shape = match array.shape() {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape}, }}");
    // magic + version + u16 length + header + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + array.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    // iter() walks logical (C) order regardless of memory layout
    for v in array.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn load_npy(path: impl AsRef<Path>) -> Result<ArrayD<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_npy(&bytes)
}

pub fn save_npy(array: &ArrayD<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_npy(array)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn into_rank<D: ndarray::Dimension>(array: ArrayD<f64>, what: &str) -> Result<ndarray::Array<f64, D>> {
    let shape = array.shape().to_vec();
    array
        .into_dimensionality::<D>()
        .map_err(|_| Error::Input(format!("{what}: unexpected shape {shape:?}")))
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    ActivationTensor::new(into_rank(load_npy(path)?, "activations")?)
}

pub fn load_heatmap(path: impl AsRef<Path>) -> Result<Heatmap> {
    Heatmap::new(into_rank(load_npy(path)?, "heatmap")?)
}

/// Loads a C×H×W image; `value_range` defaults to the observed min/max.
pub fn load_image(path: impl AsRef<Path>, value_range: Option<(f64, f64)>) -> Result<ImageTensor> {
    let data: Array3<f64> = into_rank(load_npy(path)?, "image")?;
    match value_range {
        Some(range) => ImageTensor::new(data, range),
        None => ImageTensor::with_observed_range(data),
    }
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let v: ndarray::Array1<f64> = into_rank(load_npy(path)?, "vector")?;
    Ok(v.to_vec())
}

pub fn save_heatmap(map: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    save_npy(&map.view().to_owned().into_dyn(), path)
}

pub fn save_matrix(m: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    save_npy(&m.clone().into_dyn(), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn v1_file(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn reads_two_by_two_integers() {
        let payload: Vec<u8> = [1i64, 2, 3, 4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = v1_file(
            "{'descr': '<i8', 'fortran_order': False, 'shape': (2, 2), }\n",
            &payload,
        );
        let a = decode_npy(&bytes).unwrap();
        assert_eq!(a, array![[1.0, 2.0], [3.0, 4.0]].into_dyn());
    }

    #[test]
    fn reads_f32_and_u8() {
        let payload: Vec<u8> = [0.5f32, -1.25].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = v1_file("{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }", &payload);
        assert_eq!(decode_npy(&bytes).unwrap(), array![0.5, -1.25].into_dyn());

        let bytes = v1_file("{'descr': '|u1', 'fortran_order': False, 'shape': (3,), }", &[0, 7, 255]);
        assert_eq!(decode_npy(&bytes).unwrap(), array![0.0, 7.0, 255.0].into_dyn());
    }

    #[test]
    fn reads_v2_header() {
        let header = "{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[2, 0]);
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend_from_slice(&3.5f64.to_le_bytes());
        assert_eq!(decode_npy(&bytes).unwrap(), array![3.5].into_dyn());
    }

    #[test]
    fn rejects_fortran_order() {
        let payload = [0u8; 32];
        let bytes = v1_file("{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }", &payload);
        assert!(matches!(decode_npy(&bytes), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn rejects_bad_magic_and_dtypes() {
        assert!(matches!(decode_npy(b"NUMPY\x01\x00\x00\x00"), Err(Error::Format(_))));
        let bytes = v1_file("{'descr': '<c16', 'fortran_order': False, 'shape': (1,), }", &[0; 16]);
        assert!(matches!(decode_npy(&bytes), Err(Error::Dtype(_))));
        let bytes = v1_file("{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }", &[0; 8]);
        assert!(matches!(decode_npy(&bytes), Err(Error::Dtype(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let bytes = v1_file("{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }", &[0; 8]);
        assert!(matches!(decode_npy(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn header_is_64_byte_aligned() {
        for shape in [vec![], vec![1], vec![196, 196], vec![3, 4, 5]] {
            let a = ArrayD::<f64>::zeros(IxDyn(&shape));
            let bytes = encode_npy(&a).unwrap();
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((10 + header_len) % 64, 0);
            assert_eq!(bytes[10 + header_len - 1], b'\n');
        }
    }

    #[test]
    fn single_element_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.npy");
        save_npy(&array![7.5].into_dyn(), &path).unwrap();
        assert_eq!(load_npy(&path).unwrap(), array![7.5].into_dyn());
    }

    #[test]
    fn empty_path_is_write_error() {
        let err = save_npy(&array![1.0].into_dyn(), "").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn transposed_view_is_written_in_logical_order() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let t = a.t().to_owned().into_dyn();
        let back = decode_npy(&encode_npy(&t).unwrap()).unwrap();
        assert_eq!(back, array![[1.0, 3.0], [2.0, 4.0]].into_dyn());
    }

    fn any_tensor() -> impl Strategy<Value = ArrayD<f64>> {
        proptest::collection::vec(1usize..6, 0..=3).prop_flat_map(|shape| {
            let n: usize = shape.iter().product();
            proptest::collection::vec(any::<f64>(), n)
                .prop_map(move |v| ArrayD::from_shape_vec(IxDyn(&shape), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(a in any_tensor()) {
            let back = decode_npy(&encode_npy(&a).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), a.shape());
            for (x, y) in back.iter().zip(a.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
