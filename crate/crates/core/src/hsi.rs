//! Hyperspectral cubes, the HSIB container, band selection, slicing and
//! train/val split bookkeeping.
//!
//! HSIB layout (all integers little-endian):
//!
//! ```text
//! offset 0   "HSIB" 0x01
//! offset 5   u32 header length H
//! offset 9   H bytes of UTF-8 JSON:
//!            {height, width, bands, wavelengths_nm, scale, layout, dtype, name}
//! offset 9+H height*width*bands f32, band-major, row-major within band
//! ```

use std::path::Path;

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GiscError, Result};
use crate::io_util::write_atomic;

pub const HSIB_MAGIC: &[u8; 5] = b"HSIB\x01";
const PREAMBLE_LEN: usize = 9;
const LAYOUT: &str = "band-major";
const DTYPE: &str = "f32le";

/// Wavelength recorded for single-band detector images that integrate over
/// the whole spectrum.
pub const PANCHROMATIC_NM: f64 = 0.0;

/// A hyperspectral volume stored as `(bands, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub data: Array3<f32>,
    pub wavelengths_nm: Vec<f64>,
    pub name: String,
    /// Factor that maps stored values back to the source units.
    pub scale: f64,
}

impl HsiCube {
    pub fn new(data: Array3<f32>, wavelengths_nm: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if data.dim().0 != wavelengths_nm.len() {
            return Err(GiscError::Shape(format!(
                "cube has {} bands but {} wavelengths",
                data.dim().0,
                wavelengths_nm.len()
            )));
        }
        check_ascending(&wavelengths_nm).map_err(GiscError::InvalidParameter)?;
        Ok(Self {
            data,
            wavelengths_nm,
            name: name.into(),
            scale: 1.0,
        })
    }

    /// Builds a cube from a flat band-major vector.
    pub fn from_flat(
        values: Vec<f32>,
        (height, width): (usize, usize),
        wavelengths_nm: Vec<f64>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let bands = wavelengths_nm.len();
        let data = Array3::from_shape_vec((bands, height, width), values)
            .map_err(|e| GiscError::Shape(e.to_string()))?;
        Self::new(data, wavelengths_nm, name)
    }

    pub fn zeros(height: usize, width: usize, wavelengths_nm: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        let data = Array3::zeros((wavelengths_nm.len(), height, width));
        Self::new(data, wavelengths_nm, name)
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn bands(&self) -> usize {
        self.data.dim().0
    }

    /// Band-major, row-major values widened to `f64` (the `x` vector of the
    /// forward model).
    pub fn to_vec_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn band(&self, b: usize) -> Array2<f32> {
        self.data.slice(s![b, .., ..]).to_owned()
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Divides by the maximum when it exceeds 1, folding the factor into
    /// `scale`. Cubes already within range are left untouched.
    pub fn normalize(&mut self) {
        let max = self.max_value();
        if max > 1.0 && max.is_finite() {
            let inv = 1.0 / max;
            self.data.mapv_inplace(|v| v * inv);
            self.scale *= max as f64;
        }
    }
}

fn check_ascending(wavelengths: &[f64]) -> std::result::Result<(), String> {
    if let Some(w) = wavelengths.iter().find(|w| !w.is_finite()) {
        return Err(format!("wavelength {w} is not finite"));
    }
    if let Some(i) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
        return Err(format!(
            "wavelengths are not strictly ascending at index {}: {} then {}",
            i + 1,
            wavelengths[i],
            wavelengths[i + 1]
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsibHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub wavelengths_nm: Vec<f64>,
    pub scale: f64,
    pub layout: String,
    pub dtype: String,
    pub name: String,
}

/// Raw HSIB contents, without range normalisation. Used directly for
/// detector images and speckle patterns, whose values are not bounded by 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HsibImage {
    pub header: HsibHeader,
    pub payload: Vec<f32>,
}

impl HsibImage {
    pub fn from_cube(cube: &HsiCube) -> Self {
        Self {
            header: HsibHeader {
                height: cube.height(),
                width: cube.width(),
                bands: cube.bands(),
                wavelengths_nm: cube.wavelengths_nm.clone(),
                scale: cube.scale,
                layout: LAYOUT.into(),
                dtype: DTYPE.into(),
                name: cube.name.clone(),
            },
            payload: cube.data.iter().copied().collect(),
        }
    }

    /// Single-band image from a 2D `f64` array.
    pub fn single_band(image: &Array2<f64>, wavelength_nm: f64, name: impl Into<String>) -> Self {
        let (height, width) = image.dim();
        Self {
            header: HsibHeader {
                height,
                width,
                bands: 1,
                wavelengths_nm: vec![wavelength_nm],
                scale: 1.0,
                layout: LAYOUT.into(),
                dtype: DTYPE.into(),
                name: name.into(),
            },
            payload: image.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn into_cube(self) -> Result<HsiCube> {
        let h = self.header;
        let data = Array3::from_shape_vec((h.bands, h.height, h.width), self.payload)
            .map_err(|e| GiscError::Shape(e.to_string()))?;
        Ok(HsiCube {
            data,
            wavelengths_nm: h.wavelengths_nm,
            name: h.name,
            scale: h.scale,
        })
    }

    /// One band widened to `f64`.
    pub fn band_f64(&self, band: usize) -> Array2<f64> {
        let (h, w) = (self.header.height, self.header.width);
        let start = band * h * w;
        Array2::from_shape_fn((h, w), |(r, c)| self.payload[start + r * w + c] as f64)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)
            .map_err(|e| GiscError::format(PREAMBLE_LEN, e.to_string()))?;
        let header_len = u32::try_from(json.len())
            .map_err(|_| GiscError::format(5, "header longer than 4 GiB"))?;
        let mut out = Vec::with_capacity(PREAMBLE_LEN + json.len() + 4 * self.payload.len());
        out.extend_from_slice(HSIB_MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HSIB_MAGIC.len() || &bytes[..4] != b"HSIB" {
            return Err(GiscError::format(0, "bad magic, expected \"HSIB\""));
        }
        if bytes[4] != HSIB_MAGIC[4] {
            return Err(GiscError::format(4, format!("unsupported version byte {:#04x}", bytes[4])));
        }
        if bytes.len() < PREAMBLE_LEN {
            return Err(GiscError::format(
                bytes.len(),
                "file ends inside the header length field",
            ));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let header_end = PREAMBLE_LEN + header_len;
        if bytes.len() < header_end {
            return Err(GiscError::format(
                bytes.len(),
                format!(
                    "header declares {header_len} bytes but only {} remain",
                    bytes.len() - PREAMBLE_LEN
                ),
            ));
        }
        let header: HsibHeader = serde_json::from_slice(&bytes[PREAMBLE_LEN..header_end])
            .map_err(|e| GiscError::format(PREAMBLE_LEN, format!("invalid header JSON: {e}")))?;
        if header.layout != LAYOUT {
            return Err(GiscError::format(PREAMBLE_LEN, format!("unsupported layout {:?}", header.layout)));
        }
        if header.dtype != DTYPE {
            return Err(GiscError::format(PREAMBLE_LEN, format!("unsupported dtype {:?}", header.dtype)));
        }
        if header.bands != header.wavelengths_nm.len() {
            return Err(GiscError::format(
                PREAMBLE_LEN,
                format!(
                    "header lists {} bands but {} wavelengths",
                    header.bands,
                    header.wavelengths_nm.len()
                ),
            ));
        }
        check_ascending(&header.wavelengths_nm).map_err(|m| GiscError::format(PREAMBLE_LEN, m))?;

        let count = header
            .height
            .checked_mul(header.width)
            .and_then(|v| v.checked_mul(header.bands))
            .ok_or_else(|| GiscError::format(PREAMBLE_LEN, "cube dimensions overflow"))?;
        let expected = count * 4;
        let actual = bytes.len() - header_end;
        if actual != expected {
            return Err(GiscError::format(
                header_end,
                format!("payload length mismatch: expected {expected} bytes, found {actual}"),
            ));
        }
        let payload = bytes[header_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { header, payload })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| GiscError::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode()?)
    }
}

/// Reads a cube, normalising it into `[0, 1]` when its maximum exceeds 1.
pub fn load_hsib(path: impl AsRef<Path>) -> Result<HsiCube> {
    let mut cube = HsibImage::read(path)?.into_cube()?;
    cube.normalize();
    Ok(cube)
}

pub fn store_hsib(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    HsibImage::from_cube(cube).write(path)
}

/// Keeps bands with `lo_nm <= λ <= hi_nm`, preserving order.
pub fn select_bands(cube: &HsiCube, lo_nm: f64, hi_nm: f64) -> Result<HsiCube> {
    const EPS: f64 = 1e-9;
    let keep: Vec<usize> = cube
        .wavelengths_nm
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= lo_nm - EPS && w <= hi_nm + EPS)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(GiscError::InvalidParameter(format!(
            "no bands of {:?} fall within [{lo_nm}, {hi_nm}] nm",
            cube.name
        )));
    }
    let mut data = Array3::zeros((keep.len(), cube.height(), cube.width()));
    for (dst, &src) in keep.iter().enumerate() {
        data.slice_mut(s![dst, .., ..]).assign(&cube.data.slice(s![src, .., ..]));
    }
    Ok(HsiCube {
        data,
        wavelengths_nm: keep.iter().map(|&i| cube.wavelengths_nm[i]).collect(),
        name: cube.name.clone(),
        scale: cube.scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub size: usize,
    pub stride: usize,
}

impl Default for SliceSpec {
    fn default() -> Self {
        Self { size: 144, stride: 144 }
    }
}

impl SliceSpec {
    /// Number of slices along each axis for an `height x width` cube.
    pub fn grid(&self, height: usize, width: usize) -> (usize, usize) {
        let along = |len: usize| {
            if len < self.size {
                0
            } else {
                (len - self.size) / self.stride + 1
            }
        };
        (along(height), along(width))
    }
}

/// Cuts top-left anchored `size x size` tiles in row-major order, dropping
/// borders that do not fit. Slices are named `<name>_r<row>_c<col>`.
pub fn slice(cube: &HsiCube, spec: SliceSpec) -> Result<Vec<HsiCube>> {
    if spec.size == 0 || spec.stride == 0 {
        return Err(GiscError::InvalidParameter(format!(
            "slice size and stride must be at least 1, got {spec:?}"
        )));
    }
    let (rows, cols) = spec.grid(cube.height(), cube.width());
    if rows == 0 || cols == 0 {
        log::warn!(
            "cube {:?} ({}x{}) is smaller than the {}-px slice size; no slices produced",
            cube.name,
            cube.height(),
            cube.width(),
            spec.size
        );
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (r0, c0) = (i * spec.stride, j * spec.stride);
            let data = cube
                .data
                .slice(s![.., r0..r0 + spec.size, c0..c0 + spec.size])
                .to_owned();
            out.push(HsiCube {
                data,
                wavelengths_nm: cube.wavelengths_nm.clone(),
                name: format!("{}_r{i}_c{j}", cube.name),
                scale: cube.scale,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the slice file, relative to the manifest's directory.
    pub cube: String,
    pub role: Role,
    /// Row-major index of the slice within its source cube.
    pub slice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub split_fraction: f64,
}

impl DatasetManifest {
    pub fn count(&self, role: Role) -> usize {
        self.entries.iter().filter(|e| e.role == role).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| GiscError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| GiscError::format(0, format!("invalid manifest: {e}")))
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self).map_err(|e| GiscError::format(0, e.to_string()))?;
        json.push(b'\n');
        write_atomic(path.as_ref(), &json)
    }
}

/// Shuffles all non-test entries with `seed` and assigns the first
/// `ceil(fraction · N)` to training and the rest to validation. Entries keep
/// their original order in the returned manifest.
pub fn split(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GiscError::InvalidParameter(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut pool: Vec<usize> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.role != Role::Test)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    // the epsilon absorbs products like 0.9 * 10 landing just above an integer
    let n_train = ((fraction * pool.len() as f64) - 1e-9).ceil().max(0.0) as usize;

    let mut entries = manifest.entries.clone();
    for (rank, &idx) in pool.iter().enumerate() {
        entries[idx].role = if rank < n_train { Role::Train } else { Role::Val };
    }
    Ok(DatasetManifest {
        entries,
        seed,
        split_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_cube(h: usize, w: usize, wl: Vec<f64>, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = wl.len();
        HsiCube::from_flat((0..h * w * b).map(|_| rng.random::<f32>()).collect(), (h, w), wl, "rand").unwrap()
    }

    fn cave_like(h: usize, w: usize) -> HsiCube {
        let wl: Vec<f64> = (0..31).map(|i| 400.0 + 10.0 * i as f64).collect();
        let data = Array3::from_shape_fn((31, h, w), |(b, r, c)| ((b * 31 + r * 7 + c) % 97) as f32 / 97.0);
        HsiCube::new(data, wl, "scene").unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hsib");
        let cube = random_cube(8, 8, vec![500.0, 510.0, 520.0], 3);
        store_hsib(&cube, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = load_hsib(&path).unwrap();
        assert_eq!(back, cube);
        store_hsib(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let cube = random_cube(4, 4, vec![500.0, 510.0], 1);
        let bytes = HsibImage::from_cube(&cube).encode().unwrap();
        let err = HsibImage::decode(&bytes[..bytes.len() - 6]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 128 bytes, found 122"), "{msg}");
        assert!(matches!(err, GiscError::Format { .. }));
    }

    #[test]
    fn bad_magic_is_rejected_at_offset_zero() {
        let err = HsibImage::decode(b"HSIX\x01\0\0\0\0").unwrap_err();
        assert!(matches!(err, GiscError::Format { offset: 0, .. }));
    }

    #[test]
    fn header_length_overrun_is_rejected() {
        let mut bytes = HSIB_MAGIC.to_vec();
        bytes.extend_from_slice(&100u32.to_le_bytes());
        bytes.extend_from_slice(b"{}");
        assert!(matches!(
            HsibImage::decode(&bytes),
            Err(GiscError::Format { offset: 11, .. })
        ));
    }

    #[test]
    fn non_ascending_wavelengths_are_a_format_error() {
        let cube = random_cube(2, 2, vec![500.0, 510.0], 1);
        let mut img = HsibImage::from_cube(&cube);
        img.header.wavelengths_nm = vec![510.0, 500.0];
        let bytes = img.encode().unwrap();
        let err = HsibImage::decode(&bytes).unwrap_err();
        assert!(matches!(err, GiscError::Format { offset: 9, .. }), "{err}");
    }

    #[test]
    fn load_normalizes_out_of_range_cubes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hsib");
        let mut cube = random_cube(4, 4, vec![600.0], 9);
        cube.data[[0, 1, 2]] = 2.0;
        store_hsib(&cube, &path).unwrap();
        let loaded = load_hsib(&path).unwrap();
        assert_eq!(loaded.scale, 2.0);
        assert!(loaded.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(loaded.data[[0, 1, 2]], 1.0);
        store_hsib(&loaded, &path).unwrap();
        assert_eq!(HsibImage::read(&path).unwrap().header.scale, 2.0);
    }

    #[test]
    fn select_icvl_band_range() {
        let cube = cave_like(4, 4);
        let sel = select_bands(&cube, 560.0, 700.0).unwrap();
        assert_eq!(sel.bands(), 15);
        assert_eq!(sel.wavelengths_nm.first(), Some(&560.0));
        assert_eq!(sel.band(0), cube.band(16));
        assert_eq!(sel.band(14), cube.band(30));

        assert_eq!(select_bands(&cube, 400.0, 700.0).unwrap(), cube);

        let inner = select_bands(&cube, 561.0, 699.0).unwrap();
        assert_eq!(inner.bands(), 13);
        assert_eq!(inner.wavelengths_nm[0], 570.0);
        assert_eq!(inner.wavelengths_nm[12], 690.0);

        assert!(select_bands(&cube, 800.0, 900.0).is_err());
    }

    #[test]
    fn slice_counts() {
        let spec = SliceSpec::default();
        assert_eq!(spec.grid(512, 512), (3, 3));
        assert_eq!(spec.grid(144, 144), (1, 1));
        assert_eq!(spec.grid(300, 300), (2, 2));
        assert_eq!(spec.grid(1024, 1392), (7, 9));
        assert_eq!(spec.grid(100, 300), (0, 2));

        let cube = cave_like(300, 300);
        let tiles = slice(&cube, spec).unwrap();
        assert_eq!(tiles.len(), 4);
        assert_eq!(tiles[1].name, "scene_r0_c1");
        assert_eq!(
            tiles[3].data,
            cube.data.slice(s![.., 144..288, 144..288]).to_owned()
        );
    }

    #[test]
    fn small_cube_yields_no_slices() {
        let cube = cave_like(100, 100);
        assert!(slice(&cube, SliceSpec::default()).unwrap().is_empty());
        assert!(slice(&cube, SliceSpec { size: 0, stride: 1 }).is_err());
    }

    fn pool(n: usize, tests: usize) -> DatasetManifest {
        let mut entries: Vec<ManifestEntry> = (0..n)
            .map(|i| ManifestEntry {
                cube: format!("s{i}.hsib"),
                role: Role::Train,
                slice: i,
            })
            .collect();
        entries.extend((0..tests).map(|i| ManifestEntry {
            cube: format!("t{i}.hsib"),
            role: Role::Test,
            slice: i,
        }));
        DatasetManifest {
            entries,
            seed: 0,
            split_fraction: 0.0,
        }
    }

    #[test]
    fn split_ninety_ten() {
        let m = split(&pool(10, 3), 0.9, 42).unwrap();
        assert_eq!(m.count(Role::Train), 9);
        assert_eq!(m.count(Role::Val), 1);
        assert_eq!(m.count(Role::Test), 3);
        assert_eq!(m, split(&pool(10, 3), 0.9, 42).unwrap());
        assert!(m.entries[10..].iter().all(|e| e.role == Role::Test));
        assert!(split(&pool(10, 0), 1.0, 1).is_err());
        assert!(split(&pool(10, 0), 0.0, 1).is_err());
    }

    #[test]
    fn manifest_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = split(&pool(25, 4), 0.9, 7).unwrap();
        m.store(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);
    }

    proptest::proptest! {
        #[test]
        fn split_partitions_the_pool(n in 1usize..200, frac in 0.01f64..0.99, seed: u64) {
            let base = pool(n, 2);
            let m = split(&base, frac, seed).unwrap();
            let train = m.count(Role::Train);
            let val = m.count(Role::Val);
            proptest::prop_assert_eq!(train + val, n);
            proptest::prop_assert_eq!(train, ((frac * n as f64) - 1e-9).ceil() as usize);
            for (a, b) in base.entries.iter().zip(&m.entries) {
                proptest::prop_assert_eq!(&a.cube, &b.cube);
            }
        }

        #[test]
        fn hsib_encode_decode(h in 1usize..6, w in 1usize..6, b in 1usize..4, seed: u64) {
            let wl: Vec<f64> = (0..b).map(|i| 400.0 + 7.5 * i as f64).collect();
            let cube = random_cube(h, w, wl, seed);
            let img = HsibImage::from_cube(&cube);
            let back = HsibImage::decode(&img.encode().unwrap()).unwrap();
            proptest::prop_assert_eq!(back, img);
        }
    }
}
