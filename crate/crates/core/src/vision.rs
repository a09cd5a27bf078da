//! Convolutional feature extractor.
//!
//! A stack of five stride-2 3×3 convolutions takes the image to stride 32,
//! whose output is the peripheral map `P^l`. A lateral branch taps the
//! stride-4 activation and runs two 1×1 convolutions to give the foveal map
//! `P^h`. Because the lateral convolutions are pointwise, `P^h` at a set of
//! fixation blocks can be computed from the gathered stride-4 activations
//! alone, which is what the training path does.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gaze::{Fixation, GazeSession};
use crate::model::params::{init_linear, linear, uniform, Binding, ParamStore};
use crate::model::{ModelError, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Stride of the foveal map.
pub const FOVEA_STRIDE: usize = 4;
/// Stride of the peripheral map.
pub const PERIPHERAL_STRIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub height: usize,
    pub width: usize,
    /// Output channels `C` of both maps.
    pub channels: usize,
    /// Widths of the first four trunk convolutions; the fifth outputs `C`.
    pub trunk_widths: [usize; 4],
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            height: 256,
            width: 256,
            channels: 64,
            trunk_widths: [4, 8, 16, 32],
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0
            || self.width == 0
            || self.height % PERIPHERAL_STRIDE != 0
            || self.width % PERIPHERAL_STRIDE != 0
        {
            return Err(ModelError::Config(format!(
                "image size {}x{} must be a positive multiple of 32; resize the input",
                self.height, self.width
            )));
        }
        if self.channels == 0 || self.trunk_widths.contains(&0) {
            return Err(ModelError::Config("backbone widths must be positive".into()));
        }
        Ok(())
    }

    /// Foveal grid `(rows, cols)`.
    pub fn fovea_grid(&self) -> (usize, usize) {
        (self.height / FOVEA_STRIDE, self.width / FOVEA_STRIDE)
    }

    /// Peripheral grid `(rows, cols)`.
    pub fn peripheral_grid(&self) -> (usize, usize) {
        (self.height / PERIPHERAL_STRIDE, self.width / PERIPHERAL_STRIDE)
    }

    pub fn n_peripheral(&self) -> usize {
        let (h, w) = self.peripheral_grid();
        h * w
    }

    fn conv_channels(&self) -> [(usize, usize); 5] {
        let w = self.trunk_widths;
        [(1, w[0]), (w[0], w[1]), (w[1], w[2]), (w[2], w[3]), (w[3], self.channels)]
    }
}

/// Adds `backbone.*` parameters to the store.
pub fn init_backbone<R: Rng>(cfg: &BackboneConfig, store: &mut ParamStore, rng: &mut R) {
    for (i, (cin, cout)) in cfg.conv_channels().into_iter().enumerate() {
        let bound = 1.0 / ((cin * 9) as f64).sqrt();
        store.insert(format!("backbone.conv{}.w", i + 1), uniform(rng, &[cout, cin, 3, 3], bound));
        store.insert(format!("backbone.conv{}.b", i + 1), uniform(rng, &[cout], bound));
    }
    init_linear(store, rng, "backbone.lat1", cfg.trunk_widths[1], cfg.channels);
    init_linear(store, rng, "backbone.lat2", cfg.channels, cfg.channels);
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    /// `[C, H/32, W/32]`
    pub p_low: Tensor,
    /// `[C, H/4, W/4]`
    pub p_high: Tensor,
}

impl FeaturePyramid {
    pub fn channels(&self) -> usize {
        self.p_low.shape()[0]
    }

    pub fn n_peripheral(&self) -> usize {
        self.p_low.shape()[1] * self.p_low.shape()[2]
    }
}

/// Image as a `[1, H, W]` tensor scaled to `[0, 1]`, resized to the configured size.
pub fn prepare_image(session: &GazeSession, cfg: &BackboneConfig) -> Result<Tensor> {
    cfg.validate()?;
    let img = session
        .image
        .as_ref()
        .ok_or_else(|| ModelError::Input(format!("session {}: no image loaded", session.session_id)))?;
    let img = img.resize_nearest(cfg.height, cfg.width);
    let data = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Tensor::new(vec![1, cfg.height, cfg.width], data)?)
}

/// Fixations rescaled from the session's image size to the model's input size.
pub fn scale_fixations(session: &GazeSession, cfg: &BackboneConfig) -> Vec<Fixation> {
    let (h0, w0) = session.image_size;
    session
        .fixations
        .iter()
        .map(|f| Fixation {
            x: ((f.x as usize * cfg.width / w0.max(1)).min(cfg.width - 1)) as u32,
            y: ((f.y as usize * cfg.height / h0.max(1)).min(cfg.height - 1)) as u32,
            ..*f
        })
        .collect()
}

/// Foveal block `(row, col)` of a fixation in model pixel coordinates.
pub fn fovea_block(f: &Fixation) -> (usize, usize) {
    (f.y as usize / FOVEA_STRIDE, f.x as usize / FOVEA_STRIDE)
}

/// Row-major block indices into the foveal grid; errors on out-of-bounds fixations.
pub fn fovea_indices(fixations: &[Fixation], grid: (usize, usize)) -> Result<Vec<usize>> {
    fixations
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (r, c) = fovea_block(f);
            if r >= grid.0 || c >= grid.1 {
                Err(ModelError::Input(format!(
                    "fixation {i} at ({}, {}) falls outside the {}x{} foveal grid",
                    f.x, f.y, grid.0, grid.1
                )))
            } else {
                Ok(r * grid.1 + c)
            }
        })
        .collect()
}

/// Trunk on the graph, run through `depth` convolutions (2 or 5). Returns
/// the stride-4 activation `[w2, H/4, W/4]` and, at full depth, `P^l`.
fn trunk(g: &mut Graph, p: &Binding, image: Var, depth: usize) -> Result<(Var, Option<Var>)> {
    let mut x = image;
    let mut tap = None;
    for i in 1..=depth {
        let w = p.var(&format!("backbone.conv{i}.w"))?;
        let b = p.var(&format!("backbone.conv{i}.b"))?;
        x = g.conv2d(x, w, b, 2, 1)?;
        if i < 5 {
            x = g.gelu(x);
        }
        if i == 2 {
            tap = Some(x);
        }
    }
    Ok((tap.expect("depth >= 2"), (depth == 5).then_some(x)))
}

/// `[C, h, w]` map to `[h*w, C]` rows.
fn to_rows(g: &mut Graph, map: Var) -> Result<Var> {
    let s = g.shape(map).to_vec();
    let flat = g.reshape(map, &[s[0], s[1] * s[2]])?;
    Ok(g.transpose(flat)?)
}

fn lateral(g: &mut Graph, p: &Binding, rows: Var) -> Result<Var> {
    let h = linear(g, p, "backbone.lat1", rows)?;
    let h = g.gelu(h);
    linear(g, p, "backbone.lat2", h)
}

/// Graph version used in training: peripheral tokens `[N_p, C]` (when
/// `peripheral` is set) and foveal features `[T, C]` at the given row-major
/// foveal block indices (when `blocks` is given).
pub fn backbone_features(
    g: &mut Graph,
    p: &Binding,
    image: Var,
    blocks: Option<&[usize]>,
    peripheral: bool,
) -> Result<(Option<Var>, Option<Var>)> {
    let (tap, p_low) = trunk(g, p, image, if peripheral { 5 } else { 2 })?;
    let periph = match p_low {
        Some(m) => Some(to_rows(g, m)?),
        None => None,
    };
    let fovea = match blocks {
        Some(idx) => {
            let tap_rows = to_rows(g, tap)?;
            let picked = g.gather_rows(tap_rows, idx)?;
            Some(lateral(g, p, picked)?)
        }
        None => None,
    };
    Ok((periph, fovea))
}

/// Full pyramid for a `[1, H, W]` image.
pub fn extract_pyramid(image: &Tensor, params: &ParamStore, cfg: &BackboneConfig) -> Result<FeaturePyramid> {
    cfg.validate()?;
    if image.shape() != [1, cfg.height, cfg.width] {
        return Err(ModelError::Config(format!(
            "image shape {:?} does not match configured 1x{}x{}; resize the input",
            image.shape(),
            cfg.height,
            cfg.width
        )));
    }
    let mut g = Graph::new();
    let p = params.bind(&mut g, |_| false);
    let x = g.constant(image.clone());
    let (tap, p_low) = trunk(&mut g, &p, x, 5)?;
    let p_low = p_low.expect("full depth");
    let rows = to_rows(&mut g, tap)?;
    let high_rows = lateral(&mut g, &p, rows)?;
    let (fh, fw) = cfg.fovea_grid();
    let high = g.transpose(high_rows)?;
    let p_high = g.value(high).reshape(&[cfg.channels, fh, fw])?;
    Ok(FeaturePyramid {
        p_low: g.value(p_low).clone(),
        p_high,
    })
}

/// Foveal features `[T, C]`: row `i` is `p_high[:, y_i/4, x_i/4]`.
pub fn fovea_map(pyr: &FeaturePyramid, fixations: &[Fixation]) -> Result<Tensor> {
    let (c, h, w) = pyr.p_high.dims3("fovea_map")?;
    let idx = fovea_indices(fixations, (h, w))?;
    let mut data = Vec::with_capacity(idx.len() * c);
    for &j in &idx {
        data.extend((0..c).map(|ch| pyr.p_high.data()[ch * h * w + j]));
    }
    Ok(Tensor::new(vec![idx.len(), c], data)?)
}

/// Peripheral tokens `[N_p, C]` in row-major grid order, with their `(row, col)`.
pub fn flatten_peripheral(pyr: &FeaturePyramid) -> (Tensor, Vec<(usize, usize)>) {
    let s = pyr.p_low.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let n = h * w;
    let mut data = Vec::with_capacity(n * c);
    for j in 0..n {
        data.extend((0..c).map(|ch| pyr.p_low.data()[ch * n + j]));
    }
    let coords = (0..n).map(|j| (j / w, j % w)).collect();
    (Tensor::new(vec![n, c], data).expect("shape"), coords)
}

/// Inverse of [`flatten_peripheral`].
pub fn unflatten_peripheral(tokens: &Tensor, grid: (usize, usize)) -> Result<Tensor> {
    let (n, c) = tokens.dims2("unflatten_peripheral")?;
    if n != grid.0 * grid.1 {
        return Err(ModelError::Input(format!("{n} tokens do not fill a {}x{} grid", grid.0, grid.1)));
    }
    let mut data = vec![0.0; n * c];
    for j in 0..n {
        for ch in 0..c {
            data[ch * n + j] = tokens.data()[j * c + ch];
        }
    }
    Ok(Tensor::new(vec![c, grid.0, grid.1], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fx(x: u32, y: u32) -> Fixation {
        Fixation {
            x,
            y,
            duration_ms: 200.0,
            timestamp_s: 0.0,
        }
    }

    fn setup(h: usize, w: usize) -> (BackboneConfig, ParamStore) {
        let cfg = BackboneConfig {
            height: h,
            width: w,
            ..BackboneConfig::default()
        };
        let mut store = ParamStore::new();
        init_backbone(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(3));
        (cfg, store)
    }

    fn noise(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![1, h, w], (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn pyramid_shapes() {
        let (cfg, store) = setup(256, 256);
        let pyr = extract_pyramid(&noise(256, 256, 1), &store, &cfg).unwrap();
        assert_eq!(pyr.p_low.shape(), &[64, 8, 8]);
        assert_eq!(pyr.p_high.shape(), &[64, 64, 64]);
        assert_eq!(pyr.n_peripheral(), 256 * 256 / 1024);

        let (cfg, store) = setup(64, 64);
        let pyr = extract_pyramid(&noise(64, 64, 1), &store, &cfg).unwrap();
        assert_eq!(pyr.p_low.shape(), &[64, 2, 2]);
        assert_eq!(pyr.p_high.shape(), &[64, 16, 16]);
    }

    #[test]
    fn indivisible_size_rejected() {
        let cfg = BackboneConfig {
            height: 100,
            ..BackboneConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("resize"), "{err}");
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_maps() {
        let (cfg, mut store) = setup(64, 64);
        let names: Vec<String> = store.names().filter(|n| n.ends_with(".b")).cloned().collect();
        for n in names {
            store.get_mut(&n).unwrap().data_mut().fill(0.0);
        }
        let pyr = extract_pyramid(&Tensor::zeros(&[1, 64, 64]), &store, &cfg).unwrap();
        assert!(pyr.p_low.data().iter().all(|&v| v == 0.0));
        assert!(pyr.p_high.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fovea_blocks() {
        assert_eq!(fovea_block(&fx(100, 43)), (10, 25));
        assert_eq!(fovea_block(&fx(0, 0)), (0, 0));
        let (cfg, store) = setup(64, 64);
        let pyr = extract_pyramid(&noise(64, 64, 2), &store, &cfg).unwrap();
        let m = fovea_map(&pyr, &[fx(0, 0), fx(3, 3), fx(40, 9)]).unwrap();
        assert_eq!(m.row(0), m.row(1));
        for ch in 0..64 {
            assert_eq!(m.at2(2, ch), pyr.p_high.at3(ch, 2, 10));
        }
        assert!(fovea_map(&pyr, &[fx(64, 0)]).is_err());
    }

    #[test]
    fn flatten_roundtrip() {
        let (cfg, store) = setup(256, 256);
        let pyr = extract_pyramid(&noise(256, 256, 4), &store, &cfg).unwrap();
        let (tokens, coords) = flatten_peripheral(&pyr);
        assert_eq!(tokens.shape(), &[64, 64]);
        assert_eq!(coords.first(), Some(&(0, 0)));
        assert_eq!(coords.last(), Some(&(7, 7)));
        for j in [0, 9, 63] {
            for ch in 0..64 {
                assert_eq!(tokens.at2(j, ch), pyr.p_low.at3(ch, j / 8, j % 8));
            }
        }
        assert_eq!(unflatten_peripheral(&tokens, (8, 8)).unwrap(), pyr.p_low);
    }

    #[test]
    fn gather_first_matches_full_map() {
        let (cfg, store) = setup(64, 64);
        let img = noise(64, 64, 5);
        let fixes = [fx(5, 7), fx(63, 63), fx(30, 2)];
        let pyr = extract_pyramid(&img, &store, &cfg).unwrap();
        let full = fovea_map(&pyr, &fixes).unwrap();
        let (periph_full, _) = flatten_peripheral(&pyr);

        let mut g = Graph::new();
        let p = store.bind(&mut g, |_| true);
        let x = g.constant(img);
        let idx = fovea_indices(&fixes, cfg.fovea_grid()).unwrap();
        let (periph, fovea) = backbone_features(&mut g, &p, x, Some(&idx), true).unwrap();
        let (periph, fovea) = (periph.unwrap(), fovea.unwrap());
        assert!(g.value(fovea).max_abs_diff(&full) < 1e-12);
        assert_eq!(g.value(periph), &periph_full);
    }
}
