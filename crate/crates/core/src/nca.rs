//! Deterministic neural-cellular-automaton inference.
//!
//! A generator is a fixed stack of three 3x3 convolutions
//! (`conv -> ReLU -> conv -> ReLU -> conv -> sigmoid`) applied iteratively to
//! a one-hot encoded grid. After every iteration each cell is discretized to
//! its argmax channel (ties go to the lowest channel) and re-encoded, and
//! frozen warehouse cells are restored to their template values.
//!
//! # Parameter layout
//!
//! `theta` is layer-major. Within a layer the weights come first, indexed
//! `[out_channel][in_channel][kernel_row][kernel_col]`, followed by one bias
//! per output channel. The layout is stable across versions.

use serde::{Deserialize, Serialize};

use crate::env::{Domain, Environment, TileType, WAREHOUSE_BORDER_COLS};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
pub const DEFAULT_HIDDEN: usize = 32;
/// Code for cells that hold no generatable tile (frozen workstations).
pub const NO_CHANNEL: u8 = u8::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Zero,
    /// Wrap-around borders; used to check translation equivariance.
    Toroidal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NcaArchitecture {
    pub in_channels: usize,
    pub hidden_channels: usize,
    #[serde(default)]
    pub padding: Padding,
}

impl NcaArchitecture {
    pub fn new(in_channels: usize, hidden_channels: usize) -> Self {
        NcaArchitecture {
            in_channels,
            hidden_channels,
            padding: Padding::Zero,
        }
    }

    pub fn for_domain(domain: Domain, hidden_channels: usize) -> Self {
        Self::new(domain.generatable().len(), hidden_channels)
    }

    /// `(in, out)` channel counts of the three layers.
    pub fn layers(&self) -> [(usize, usize); 3] {
        let (c, h) = (self.in_channels, self.hidden_channels);
        [(c, h), (h, h), (h, c)]
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    fn check(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.in_channels >= NO_CHANNEL as usize {
            return Err(Error::Config("too many channels".into()));
        }
        Ok(())
    }
}

/// Total weights and biases: sum over layers of `in * out * 9 + out`.
pub fn param_count(arch: &NcaArchitecture) -> usize {
    arch.layers()
        .iter()
        .map(|&(i, o)| i * o * KERNEL * KERNEL + o)
        .sum()
}

/// A discretized grid: one channel code per cell plus the frozen overlay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotGrid {
    domain: Domain,
    width: usize,
    height: usize,
    channels: usize,
    codes: Vec<u8>,
    /// `Some(code)` for cells restored after every step.
    frozen: Vec<Option<u8>>,
}

impl OneHotGrid {
    pub fn encode(env: &Environment) -> Result<Self> {
        let domain = env.domain();
        let gen = domain.generatable();
        let code_of = |t: TileType| -> u8 {
            gen.iter()
                .position(|g| *g == t)
                .map(|p| p as u8)
                .unwrap_or(NO_CHANNEL)
        };
        let mut codes = Vec::with_capacity(env.len());
        let mut frozen = Vec::with_capacity(env.len());
        for i in 0..env.len() {
            let code = code_of(env.tile(i));
            if code == NO_CHANNEL && !env.is_frozen(i) {
                return Err(Error::InvalidEnvironment(format!(
                    "tile {:?} at {} cannot be generated",
                    env.tile(i),
                    env.coord(i)
                )));
            }
            codes.push(code);
            frozen.push(env.template_tile(i).map(code_of));
        }
        Ok(OneHotGrid {
            domain,
            width: env.width(),
            height: env.height(),
            channels: gen.len(),
            codes,
            frozen,
        })
    }

    pub fn decode(&self) -> Environment {
        let gen = self.domain.generatable();
        let tiles = self
            .codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == NO_CHANNEL {
                    // Only frozen cells carry no channel.
                    let x = i % self.width;
                    let y = i / self.width;
                    crate::env::warehouse_template(x, y, self.width).unwrap_or(TileType::Empty)
                } else {
                    gen[c as usize]
                }
            })
            .collect();
        Environment::new(self.domain, self.width, self.height, tiles)
            .expect("decoded grid keeps the encoded shape")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// Dense `H x W x C` tensor (channel-last).
    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.codes.len() * self.channels];
        self.fill_dense(&mut out);
        out
    }

    fn fill_dense(&self, out: &mut [f32]) {
        out.fill(0.0);
        for (i, &c) in self.codes.iter().enumerate() {
            if c != NO_CHANNEL {
                out[i * self.channels + c as usize] = 1.0;
            }
        }
    }

    /// Reinterprets the grid with a different channel count, for error paths.
    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }
}

#[derive(Clone, Debug)]
struct PackedLayer {
    cin: usize,
    cout: usize,
    /// `[ky][kx][cin][cout]`
    weights: Vec<f32>,
    bias: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct NcaGenerator {
    domain: Domain,
    arch: NcaArchitecture,
    theta: Vec<f32>,
    layers: [PackedLayer; 3],
}

impl PartialEq for NcaGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.arch == other.arch
            && self.theta.len() == other.theta.len()
            && self
                .theta
                .iter()
                .zip(&other.theta)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl NcaGenerator {
    pub fn new(domain: Domain, arch: NcaArchitecture, theta: Vec<f32>) -> Result<Self> {
        arch.check()?;
        if arch.in_channels != domain.generatable().len() {
            return Err(Error::ChannelMismatch {
                expected: domain.generatable().len(),
                actual: arch.in_channels,
            });
        }
        let expected = param_count(&arch);
        if theta.len() != expected {
            return Err(Error::ParamCount {
                expected,
                actual: theta.len(),
            });
        }
        let layers = pack(&arch, &theta);
        Ok(NcaGenerator {
            domain,
            arch,
            theta,
            layers,
        })
    }

    /// Builds a generator from an optimizer's `f64` parameter vector.
    pub fn from_f64(domain: Domain, arch: NcaArchitecture, theta: &[f64]) -> Result<Self> {
        Self::new(domain, arch, theta.iter().map(|&v| v as f32).collect())
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn arch(&self) -> &NcaArchitecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f32] {
        &self.theta
    }

    /// One NCA iteration on a discretized grid.
    pub fn forward_step(&self, grid: &OneHotGrid) -> Result<OneHotGrid> {
        let mut scratch = Scratch::new(&self.arch, grid.width, grid.height);
        let mut out = grid.clone();
        self.step_in_place(&mut out, &mut scratch)?;
        Ok(out)
    }

    fn step_in_place(&self, grid: &mut OneHotGrid, s: &mut Scratch) -> Result<()> {
        if grid.channels != self.arch.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.arch.in_channels,
                actual: grid.channels,
            });
        }
        let (w, h) = (grid.width, grid.height);
        let wrap = self.arch.padding == Padding::Toroidal;
        grid.fill_dense(&mut s.input);
        conv3x3(&s.input, w, h, &self.layers[0], wrap, &mut s.hidden_a);
        relu(&mut s.hidden_a);
        conv3x3(&s.hidden_a, w, h, &self.layers[1], wrap, &mut s.hidden_b);
        relu(&mut s.hidden_b);
        conv3x3(&s.hidden_b, w, h, &self.layers[2], wrap, &mut s.output);
        let c = self.arch.in_channels;
        for (i, code) in grid.codes.iter_mut().enumerate() {
            let logits = &s.output[i * c..(i + 1) * c];
            let mut best = 0usize;
            let mut best_v = sigmoid(logits[0]);
            for (k, &l) in logits.iter().enumerate().skip(1) {
                let v = sigmoid(l);
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            *code = best as u8;
        }
        for (code, frozen) in grid.codes.iter_mut().zip(&grid.frozen) {
            if let Some(f) = frozen {
                *code = *f;
            }
        }
        Ok(())
    }

    /// Runs `iterations` steps from a seed and decodes the result.
    pub fn generate(&self, seed: &Environment, iterations: usize) -> Result<Environment> {
        if seed.domain() != self.domain
            && !(seed.domain().is_warehouse() && self.domain.is_warehouse())
        {
            return Err(Error::WrongDomain {
                op: "generate",
                domain: seed.domain(),
            });
        }
        let mut grid = OneHotGrid::encode(seed)?;
        if iterations == 0 {
            return Ok(seed.clone());
        }
        let mut scratch = Scratch::new(&self.arch, grid.width, grid.height);
        for _ in 0..iterations {
            self.step_in_place(&mut grid, &mut scratch)?;
        }
        Ok(grid.decode())
    }

    pub fn to_record(&self) -> GeneratorRecord {
        let mut bytes = Vec::with_capacity(self.theta.len() * 4);
        for v in &self.theta {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        GeneratorRecord {
            format: GENERATOR_FORMAT.to_string(),
            version: GENERATOR_VERSION,
            domain: self.domain,
            arch: self.arch,
            theta_f32_le_hex: hex::encode(bytes),
        }
    }

    pub fn from_record(record: &GeneratorRecord) -> Result<Self> {
        if record.format != GENERATOR_FORMAT || record.version != GENERATOR_VERSION {
            return Err(Error::Config(format!(
                "unsupported generator record {} v{}",
                record.format, record.version
            )));
        }
        let bytes = hex::decode(&record.theta_f32_le_hex)
            .map_err(|e| Error::Config(format!("bad theta encoding: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Config("theta byte length is not a multiple of 4".into()));
        }
        let theta = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        NcaGenerator::new(record.domain, record.arch, theta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: GeneratorRecord = serde_json::from_str(text)?;
        Self::from_record(&record)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub const GENERATOR_FORMAT: &str = "envgen-nca";
pub const GENERATOR_VERSION: u32 = 1;

/// Portable on-disk form of a generator; `theta` is stored bit-exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub format: String,
    pub version: u32,
    pub domain: Domain,
    pub arch: NcaArchitecture,
    pub theta_f32_le_hex: String,
}

struct Scratch {
    input: Vec<f32>,
    hidden_a: Vec<f32>,
    hidden_b: Vec<f32>,
    output: Vec<f32>,
}

impl Scratch {
    fn new(arch: &NcaArchitecture, w: usize, h: usize) -> Self {
        let n = w * h;
        Scratch {
            input: vec![0.0; n * arch.in_channels],
            hidden_a: vec![0.0; n * arch.hidden_channels],
            hidden_b: vec![0.0; n * arch.hidden_channels],
            output: vec![0.0; n * arch.in_channels],
        }
    }
}

fn pack(arch: &NcaArchitecture, theta: &[f32]) -> [PackedLayer; 3] {
    let mut offset = 0;
    arch.layers().map(|(cin, cout)| {
        let n_w = cin * cout * KERNEL * KERNEL;
        let raw = &theta[offset..offset + n_w];
        let bias = theta[offset + n_w..offset + n_w + cout].to_vec();
        offset += n_w + cout;
        let mut weights = vec![0.0f32; n_w];
        for o in 0..cout {
            for i in 0..cin {
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let src = ((o * cin + i) * KERNEL + ky) * KERNEL + kx;
                        let dst = ((ky * KERNEL + kx) * cin + i) * cout + o;
                        weights[dst] = raw[src];
                    }
                }
            }
        }
        PackedLayer {
            cin,
            cout,
            weights,
            bias,
        }
    })
}

/// 3x3 convolution, stride 1, padding 1, channel-last layout. Each output is
/// accumulated as `bias + sum over (ky, kx, cin)` in that fixed order;
/// zero inputs are skipped.
fn conv3x3(input: &[f32], w: usize, h: usize, layer: &PackedLayer, wrap: bool, out: &mut [f32]) {
    let (cin, cout) = (layer.cin, layer.cout);
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            acc.copy_from_slice(&layer.bias);
            for ky in 0..KERNEL {
                let sy = match offset(y, ky, h, wrap) {
                    Some(v) => v,
                    None => continue,
                };
                for kx in 0..KERNEL {
                    let sx = match offset(x, kx, w, wrap) {
                        Some(v) => v,
                        None => continue,
                    };
                    let inp = &input[(sy * w + sx) * cin..(sy * w + sx + 1) * cin];
                    let base = (ky * KERNEL + kx) * cin * cout;
                    for (ci, &v) in inp.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[base + ci * cout..base + (ci + 1) * cout];
                        for (a, &wt) in acc.iter_mut().zip(row) {
                            *a += v * wt;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn offset(pos: usize, k: usize, len: usize, wrap: bool) -> Option<usize> {
    let p = pos as isize + k as isize - 1;
    if p >= 0 && (p as usize) < len {
        Some(p as usize)
    } else if wrap {
        Some(p.rem_euclid(len as isize) as usize)
    } else {
        None
    }
}

fn relu(v: &mut [f32]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Logistic function built from IEEE basic operations only, so that its
/// result is identical on every platform.
pub fn sigmoid(x: f32) -> f32 {
    let e = det_exp(-(x as f64));
    (1.0 / (1.0 + e)) as f32
}

/// `exp` via range reduction and a degree-13 Taylor polynomial.
fn det_exp(x: f64) -> f64 {
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    const LN2: f64 = std::f64::consts::LN_2;
    let k = (x / LN2).round();
    let r = x - k * LN2;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=13 {
        term = term * r / i as f64;
        sum += term;
    }
    // Scale by 2^k in two halves to stay within the exponent range.
    let k = k as i32;
    let half = k / 2;
    sum * pow2(half) * pow2(k - half)
}

fn pow2(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Deterministic initial environment: a central 2x2 block of the domain's
/// seed tile surrounded by empty tiles, with the warehouse template stamped
/// over the frozen border.
pub fn make_seed(domain: Domain, width: usize, height: usize) -> Result<Environment> {
    let min_w = if domain.is_warehouse() {
        2 * WAREHOUSE_BORDER_COLS + 2
    } else {
        2
    };
    if width < min_w || height < 2 {
        return Err(Error::DimensionTooSmall {
            width,
            height,
            reason: "seed block does not fit",
        });
    }
    let mut env = Environment::filled(domain, width, height, TileType::Empty)?;
    let (x0, y0) = ((width - 2) / 2, (height - 2) / 2);
    for dy in 0..2 {
        for dx in 0..2 {
            env.set_xy(x0 + dx, y0 + dy, domain.seed_tile());
        }
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&NcaArchitecture::new(4, 8)), 1172);
        assert_eq!(param_count(&NcaArchitecture::new(1, 1)), 30);
        assert_eq!(param_count(&NcaArchitecture::new(3, 32)), 11011);
    }

    #[test]
    fn det_exp_matches_std() {
        for i in -400..400 {
            let x = i as f64 * 0.173;
            let rel = (det_exp(x) - x.exp()).abs() / x.exp();
            assert!(rel < 1e-14, "x={x} rel={rel}");
        }
    }

    #[test]
    fn zero_theta_collapses_to_channel_zero() {
        let arch = NcaArchitecture::for_domain(Domain::WarehouseEven, 4);
        let gen = NcaGenerator::new(Domain::WarehouseEven, arch, vec![0.0; arch.param_count()])
            .unwrap();
        let seed = make_seed(Domain::WarehouseEven, 10, 6).unwrap();
        let out = gen.generate(&seed, 1).unwrap();
        let expected = Environment::filled(Domain::WarehouseEven, 10, 6, TileType::Empty).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let arch = NcaArchitecture::for_domain(Domain::Maze, 3);
        let gen = NcaGenerator::new(Domain::Maze, arch, vec![0.3; arch.param_count()]).unwrap();
        let seed = make_seed(Domain::Maze, 5, 5).unwrap();
        assert_eq!(gen.generate(&seed, 0).unwrap(), seed);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let arch = NcaArchitecture::for_domain(Domain::Maze, 3);
        let gen = NcaGenerator::new(Domain::Maze, arch, vec![0.1; arch.param_count()]).unwrap();
        let grid = OneHotGrid::encode(&make_seed(Domain::Maze, 4, 4).unwrap())
            .unwrap()
            .with_channels(3);
        assert!(matches!(
            gen.forward_step(&grid),
            Err(Error::ChannelMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(
            NcaGenerator::new(Domain::Maze, arch, vec![0.0; 5]),
            Err(Error::ParamCount { .. })
        ));
    }

    #[test]
    fn seeds() {
        let maze = make_seed(Domain::Maze, 18, 18).unwrap();
        assert_eq!(maze.count(TileType::Wall), 4);
        assert_eq!(maze.get(8, 8), TileType::Wall);
        assert_eq!(maze.get(9, 9), TileType::Wall);
        assert_eq!(maze, make_seed(Domain::Maze, 18, 18).unwrap());
        let wh = make_seed(Domain::WarehouseEven, 16, 12).unwrap();
        assert_eq!(wh.count(TileType::Shelf), 4);
        assert_eq!(wh.get(7, 5), TileType::Shelf);
        assert_eq!(wh.count(TileType::Workstation), 8);
        assert!(make_seed(Domain::WarehouseEven, 5, 5).is_err());
        assert!(make_seed(Domain::Maze, 1, 5).is_err());
    }

    #[test]
    fn record_round_trip_is_bit_exact() {
        let arch = NcaArchitecture::for_domain(Domain::Manufacturing, 2);
        let theta: Vec<f32> = (0..arch.param_count())
            .map(|i| f32::from_bits(0x3e00_0000 + i as u32 * 7919))
            .collect();
        let gen = NcaGenerator::new(Domain::Manufacturing, arch, theta).unwrap();
        let back = NcaGenerator::from_json(&gen.to_json().unwrap()).unwrap();
        assert_eq!(back, gen);
    }
}
