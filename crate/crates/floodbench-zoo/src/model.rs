//! The eight model families behind one uniform interface.
//!
//! Every family consumes the full assembled feature stack `(C,H,W)` with
//! `C = 3T+H+3` channels and produces a one-channel depth *change* for its
//! configured horizon. Families that conceptually predict something else
//! (the AR baselines emit the next absolute depth) convert on the tape, so
//! training and evaluation treat all models identically. Non-parametric
//! baselines are expressed through the same entry point with empty
//! parameter sets.

use std::path::Path;

use crate::error::ZooError;
use crate::spec::{Family, ModelSpec};
use floodbench_core::features::{channel_layout, ChannelLayout};
use floodbench_core::seed::stream_rng;
use floodbench_nn::checkpoint::{load_checkpoint, save_checkpoint};
use floodbench_nn::{AdamState, Param, ParamSet, Tape, Var};
use rand_chacha::ChaCha8Rng;

pub struct Model {
    spec: ModelSpec,
    pub params: ParamSet,
}

/// Per-group factors that bring the raw feature stack to order one before
/// the learned families consume it. Rainfall channels carry mm/h
/// intensities (design storms here run ~10–250) while the depth channels
/// are metres (~0–2), so an unscaled stack lets rain dominate every
/// first-layer preactivation and the optimizer responds by suppressing the
/// rain weights entirely. Elevation spans tens of metres and frame-to-frame
/// depth increments are centimetres; these factors put each group at
/// roughly unit magnitude. They are fixed constants of the architecture,
/// not fitted statistics, so checkpoints stay portable across events.
const DEM_SCALE: f64 = 0.1;
const RAIN_SCALE: f64 = 0.01;
const DELTA_WD_SCALE: f64 = 10.0;

fn conv_pair(
    set: &mut ParamSet,
    name: &str,
    o: usize,
    i: usize,
    kh: usize,
    kw: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), ZooError> {
    set.push(Param::kaiming(
        format!("{name}.w"),
        vec![o, i, kh, kw],
        i * kh * kw,
        rng,
    )?)?;
    set.push(Param::zeros(format!("{name}.b"), vec![o]))?;
    Ok(())
}

/// Transposed-conv kernel `(I,O,2,2)`; with stride 2 each output cell sees
/// every input channel exactly once, so the fan-in is `I`.
fn tconv_pair(
    set: &mut ParamSet,
    name: &str,
    i: usize,
    o: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), ZooError> {
    set.push(Param::kaiming(format!("{name}.w"), vec![i, o, 2, 2], i, rng)?)?;
    set.push(Param::zeros(format!("{name}.b"), vec![o]))?;
    Ok(())
}

impl Model {
    /// Build a model with Kaiming-uniform weights drawn from the seed
    /// stream `model/<family>`.
    pub fn init(spec: ModelSpec) -> Result<Model, ZooError> {
        spec.validate()?;
        let mut rng = stream_rng(spec.seed, &format!("model/{}", spec.family.tag()));
        let c_in = channel_layout(&spec.feature_spec(1)).total;
        let widths = spec.widths_or_default();
        let mut params = ParamSet::new();
        match spec.family {
            Family::NoChange | Family::LinearExtrap => {}
            Family::Ar1x1 | Family::Ar5x5 => {
                let ks = if spec.family == Family::Ar1x1 { 1 } else { 5 };
                conv_pair(&mut params, "ar", 1, spec.t_steps, ks, ks, &mut rng)?;
            }
            Family::Fcn => {
                let (w1, w2) = (widths[0], widths[1]);
                conv_pair(&mut params, "c1", w1, c_in, 5, 5, &mut rng)?;
                conv_pair(&mut params, "c2", w2, w1, 5, 5, &mut rng)?;
                conv_pair(&mut params, "c3", 1, w2, 5, 5, &mut rng)?;
            }
            Family::Autoencoder => {
                let (w1, w2, w3) = (widths[0], widths[1], widths[2]);
                conv_pair(&mut params, "e1", w1, c_in, 5, 5, &mut rng)?;
                conv_pair(&mut params, "e2", w2, w1, 5, 5, &mut rng)?;
                conv_pair(&mut params, "e3", w3, w2, 5, 5, &mut rng)?;
                tconv_pair(&mut params, "t1", w3, w2, &mut rng)?;
                tconv_pair(&mut params, "t2", w2, w1, &mut rng)?;
                tconv_pair(&mut params, "t3", w1, 1, &mut rng)?;
            }
            Family::Unet => {
                let (w1, w2, w3) = (widths[0], widths[1], widths[2]);
                let skip = spec.unet_skips;
                conv_pair(&mut params, "e1", w1, c_in, 3, 3, &mut rng)?;
                conv_pair(&mut params, "e2", w2, w1, 3, 3, &mut rng)?;
                conv_pair(&mut params, "e3", w3, w2, 3, 3, &mut rng)?;
                conv_pair(&mut params, "bottom", w3, w3, 3, 3, &mut rng)?;
                let d3_in = if skip { w3 + w3 } else { w3 };
                let d2_in = if skip { w3 + w2 } else { w3 };
                let d1_in = if skip { w2 + w1 } else { w2 };
                conv_pair(&mut params, "d3", w3, d3_in, 3, 3, &mut rng)?;
                conv_pair(&mut params, "d2", w2, d2_in, 3, 3, &mut rng)?;
                conv_pair(&mut params, "d1", w1, d1_in, 3, 3, &mut rng)?;
                conv_pair(&mut params, "out", 1, w1, 3, 3, &mut rng)?;
            }
            Family::Graph => {
                let (we, wn) = (widths[0], widths[1]);
                conv_pair(&mut params, "edge1", we, 1, 1, 1, &mut rng)?;
                conv_pair(&mut params, "edge2", we, we, 1, 1, &mut rng)?;
                conv_pair(&mut params, "node1", wn, 4 * we + c_in, 1, 1, &mut rng)?;
                conv_pair(&mut params, "node2", wn, wn, 1, 1, &mut rng)?;
                conv_pair(&mut params, "node3", 5, wn, 1, 1, &mut rng)?;
            }
        }
        Ok(Model { spec, params })
    }

    /// AR model whose kernel copies the newest depth channel: its rollout
    /// reproduces `no_change` exactly.
    pub fn ar_identity(spec: ModelSpec) -> Result<Model, ZooError> {
        if !spec.family.is_autoregressive() {
            return Err(ZooError::Config(
                "ar_identity applies to the AR families only".into(),
            ));
        }
        let mut model = Model::init(spec)?;
        let t = model.spec.t_steps;
        let ks = model.params.get(0).dims[2];
        let center = ks / 2;
        let w = &mut model.params.get_mut(0).values;
        w.fill(0.0);
        w[((t - 1) * ks + center) * ks + center] = 1.0;
        model.params.get_mut(1).values.fill(0.0);
        Ok(model)
    }

    /// Rebuild from checkpointed parts, validating shapes against the
    /// architecture.
    pub fn from_parts(spec: ModelSpec, params: ParamSet) -> Result<Model, ZooError> {
        let skeleton = Model::init(spec.clone())?;
        if params.len() != skeleton.params.len() {
            return Err(ZooError::Model {
                model: spec.family.tag().into(),
                detail: format!(
                    "expected {} parameter tensors, checkpoint has {}",
                    skeleton.params.len(),
                    params.len()
                ),
            });
        }
        for i in 0..params.len() {
            let (got, want) = (params.get(i), skeleton.params.get(i));
            if got.name != want.name || got.dims != want.dims {
                return Err(ZooError::Model {
                    model: spec.family.tag().into(),
                    detail: format!(
                        "parameter {} is {:?} {:?}, expected {:?} {:?}",
                        i, got.name, got.dims, want.name, want.dims
                    ),
                });
            }
        }
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Channel layout of the full input stack this model consumes.
    pub fn layout(&self) -> ChannelLayout {
        channel_layout(&self.spec.feature_spec(1))
    }

    pub fn input_channels(&self) -> usize {
        self.layout().total
    }

    /// Bind all parameters as gradient-tracked tape leaves.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, ZooError> {
        Ok(self.params.bind(tape)?)
    }

    pub fn save(&self, base: &Path, adam: Option<&AdamState>) -> Result<(), ZooError> {
        let arch = serde_json::to_value(&self.spec)?;
        save_checkpoint(base, &arch, &self.params, adam)?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<(Model, Option<AdamState>), ZooError> {
        let (arch, params, adam) = load_checkpoint(base)?;
        let spec: ModelSpec = serde_json::from_value(arch)?;
        let model = Model::from_parts(spec, params)?;
        Ok((model, adam))
    }

    fn model_err(&self, detail: String) -> ZooError {
        ZooError::Model {
            model: self.spec.family.tag().into(),
            detail,
        }
    }

    /// The feature stack with each channel group rescaled to unit
    /// magnitude; layout and channel order are unchanged. Only the learned
    /// families route through this — the baselines read physical values.
    fn normalized_input(
        &self,
        tape: &mut Tape,
        x: Var,
        layout: &ChannelLayout,
    ) -> Result<Var, ZooError> {
        let mut parts = Vec::with_capacity(5);
        for (range, factor) in [
            (layout.dem.clone(), DEM_SCALE),
            (layout.delta_dem.clone(), 1.0),
            (layout.rain.clone(), RAIN_SCALE),
            (layout.wd.clone(), 1.0),
            (layout.delta_wd.clone(), DELTA_WD_SCALE),
        ] {
            if range.is_empty() {
                continue;
            }
            let mut part = tape.slice_channels(x, range.start, range.len())?;
            if factor != 1.0 {
                part = tape.scale(part, factor)?;
            }
            parts.push(part);
        }
        Ok(tape.concat_channels(&parts)?)
    }

    /// Predicted depth change over the model's horizon, one channel.
    ///
    /// `x` is the full feature stack; `bound` comes from [`Model::bind`] on
    /// the same tape.
    pub fn forward_delta(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ZooError> {
        let layout = self.layout();
        let (c, h, w) = match *tape.dims(x) {
            [c, h, w] => (c, h, w),
            ref other => {
                return Err(self.model_err(format!("input must be (C,H,W), got {other:?}")))
            }
        };
        if c != layout.total {
            return Err(self.model_err(format!(
                "input has {c} channels, the T={} H={} stack has {}",
                self.spec.t_steps, self.spec.horizon, layout.total
            )));
        }
        if bound.len() != self.params.len() {
            return Err(self.model_err("bound parameter count mismatch".into()));
        }
        match self.spec.family {
            Family::NoChange => Ok(tape.constant(&[1, h, w], vec![0.0; h * w])?),
            Family::LinearExtrap => {
                let w_t = tape.slice_channels(x, layout.wd.end - 1, 1)?;
                let w_prev = tape.slice_channels(x, layout.wd.end - 2, 1)?;
                Ok(tape.sub(w_t, w_prev)?)
            }
            Family::Ar1x1 | Family::Ar5x5 => {
                let window = tape.slice_channels(x, layout.wd.start, layout.wd.len())?;
                let pad = self.params.get(0).dims[2] / 2;
                let absolute = tape.conv2d(window, bound[0], bound[1], [pad; 4])?;
                let w_t = tape.slice_channels(x, layout.wd.end - 1, 1)?;
                Ok(tape.sub(absolute, w_t)?)
            }
            Family::Fcn => {
                let x = self.normalized_input(tape, x, &layout)?;
                let c1 = tape.conv2d(x, bound[0], bound[1], [2; 4])?;
                let r1 = tape.relu(c1)?;
                let c2 = tape.conv2d(r1, bound[2], bound[3], [2; 4])?;
                let r2 = tape.relu(c2)?;
                Ok(tape.conv2d(r2, bound[4], bound[5], [2; 4])?)
            }
            Family::Autoencoder => {
                if h % 8 != 0 || w % 8 != 0 {
                    return Err(self.model_err(format!(
                        "autoencoder needs dims divisible by 8, got {h}x{w}"
                    )));
                }
                let mut cur = self.normalized_input(tape, x, &layout)?;
                for stage in 0..3 {
                    let conv = tape.conv2d(cur, bound[2 * stage], bound[2 * stage + 1], [2; 4])?;
                    let act = tape.relu(conv)?;
                    cur = tape.pool2x2(act)?;
                }
                let t1 = tape.transposed_conv2x2(cur, bound[6], bound[7])?;
                let r1 = tape.relu(t1)?;
                let t2 = tape.transposed_conv2x2(r1, bound[8], bound[9])?;
                let r2 = tape.relu(t2)?;
                Ok(tape.transposed_conv2x2(r2, bound[10], bound[11])?)
            }
            Family::Unet => {
                if h % 8 != 0 || w % 8 != 0 {
                    return Err(
                        self.model_err(format!("unet needs dims divisible by 8, got {h}x{w}"))
                    );
                }
                let skip = self.spec.unet_skips;
                let x = self.normalized_input(tape, x, &layout)?;
                let c1 = tape.conv2d(x, bound[0], bound[1], [1; 4])?;
                let e1 = tape.relu(c1)?;
                let p1 = tape.pool2x2(e1)?;
                let c2 = tape.conv2d(p1, bound[2], bound[3], [1; 4])?;
                let e2 = tape.relu(c2)?;
                let p2 = tape.pool2x2(e2)?;
                let c3 = tape.conv2d(p2, bound[4], bound[5], [1; 4])?;
                let e3 = tape.relu(c3)?;
                let p3 = tape.pool2x2(e3)?;
                let cb = tape.conv2d(p3, bound[6], bound[7], [1; 4])?;
                let bottom = tape.relu(cb)?;

                let mut up = tape.upsample_bilinear2x(bottom)?;
                let d3_in = if skip {
                    tape.concat_channels(&[up, e3])?
                } else {
                    up
                };
                let cd3 = tape.conv2d(d3_in, bound[8], bound[9], [1; 4])?;
                let d3 = tape.relu(cd3)?;
                up = tape.upsample_bilinear2x(d3)?;
                let d2_in = if skip {
                    tape.concat_channels(&[up, e2])?
                } else {
                    up
                };
                let cd2 = tape.conv2d(d2_in, bound[10], bound[11], [1; 4])?;
                let d2 = tape.relu(cd2)?;
                up = tape.upsample_bilinear2x(d2)?;
                let d1_in = if skip {
                    tape.concat_channels(&[up, e1])?
                } else {
                    up
                };
                let cd1 = tape.conv2d(d1_in, bound[12], bound[13], [1; 4])?;
                let d1 = tape.relu(cd1)?;
                Ok(tape.conv2d(d1, bound[14], bound[15], [1; 4])?)
            }
            Family::Graph => {
                let xn = self.normalized_input(tape, x, &layout)?;
                // Edge block: a shared per-direction MLP over the elevation
                // difference toward that neighbor.
                let dd = layout.delta_dem.clone();
                let mut edge_feats = Vec::with_capacity(4);
                for dir in 0..4 {
                    let diff = tape.slice_channels(xn, dd.start + dir, 1)?;
                    let a1 = tape.conv2d(diff, bound[0], bound[1], [0; 4])?;
                    let r1 = tape.relu(a1)?;
                    let a2 = tape.conv2d(r1, bound[2], bound[3], [0; 4])?;
                    edge_feats.push(tape.relu(a2)?);
                }
                // Node block sees its four edge features plus the full
                // sample and emits four outgoing flows and retained water.
                let mut node_in = edge_feats.clone();
                node_in.push(xn);
                let stacked = tape.concat_channels(&node_in)?;
                let n1 = tape.conv2d(stacked, bound[4], bound[5], [0; 4])?;
                let rn1 = tape.relu(n1)?;
                let n2 = tape.conv2d(rn1, bound[6], bound[7], [0; 4])?;
                let rn2 = tape.relu(n2)?;
                let out = tape.conv2d(rn2, bound[8], bound[9], [0; 4])?;

                let f_left = tape.slice_channels(out, 0, 1)?;
                let f_right = tape.slice_channels(out, 1, 1)?;
                let f_down = tape.slice_channels(out, 2, 1)?;
                let f_up = tape.slice_channels(out, 3, 1)?;
                let retained = tape.slice_channels(out, 4, 1)?;

                // Incoming water is each neighbor's flow toward this cell;
                // shifts zero-fill, so nothing crosses the raster border.
                let in_from_left = tape.shift(f_right, 0, 1)?;
                let in_from_right = tape.shift(f_left, 0, -1)?;
                let in_from_down = tape.shift(f_up, 1, 0)?;
                let in_from_up = tape.shift(f_down, -1, 0)?;
                let horiz = tape.add(in_from_left, in_from_right)?;
                let vert = tape.add(in_from_down, in_from_up)?;
                let incoming = tape.add(horiz, vert)?;
                let new_water = tape.add(retained, incoming)?;
                let w_t = tape.slice_channels(x, layout.wd.end - 1, 1)?;
                Ok(tape.sub(new_water, w_t)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Family, ModelSpec};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn stack_dims(t: usize, h: usize) -> usize {
        3 * t + h + 3
    }

    /// Random full stack with non-negative depth channels.
    fn random_stack(t: usize, h: usize, rows: usize, cols: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..stack_dims(t, h) * rows * cols)
            .map(|_| rng.gen_range(0.0..0.5))
            .collect()
    }

    fn forward_values(model: &Model, flat: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape).unwrap();
        let x = tape
            .leaf(&[model.input_channels(), rows, cols], flat.to_vec(), false)
            .unwrap();
        let delta = model.forward_delta(&mut tape, &bound, x).unwrap();
        tape.values(delta).to_vec()
    }

    #[test]
    fn input_channels_match_identity() {
        for (t, h) in [(1, 1), (2, 6), (5, 12), (6, 1)] {
            let m = Model::init(ModelSpec::new(Family::Fcn, t, h, 0).with_widths(vec![3, 3]))
                .unwrap();
            assert_eq!(m.input_channels(), 3 * t + h + 3);
        }
    }

    #[test]
    fn no_change_predicts_zero_delta() {
        let m = Model::init(ModelSpec::new(Family::NoChange, 2, 1, 0)).unwrap();
        let flat = random_stack(2, 1, 6, 6, 1);
        assert!(forward_values(&m, &flat, 6, 6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_extrap_is_last_depth_difference() {
        let t = 3;
        let m = Model::init(ModelSpec::new(Family::LinearExtrap, t, 1, 0)).unwrap();
        let rows = 4;
        let cols = 4;
        let flat = random_stack(t, 1, rows, cols, 2);
        let layout = m.layout();
        let hw = rows * cols;
        let out = forward_values(&m, &flat, rows, cols);
        for i in 0..hw {
            let w_t = flat[(layout.wd.end - 1) * hw + i];
            let w_prev = flat[(layout.wd.end - 2) * hw + i];
            assert_eq!(out[i], w_t - w_prev);
        }
    }

    #[test]
    fn identity_ar_has_exactly_zero_delta() {
        for family in [Family::Ar1x1, Family::Ar5x5] {
            let m = Model::ar_identity(ModelSpec::new(family, 3, 1, 9)).unwrap();
            let flat = random_stack(3, 1, 8, 8, 3);
            let out = forward_values(&m, &flat, 8, 8);
            assert!(
                out.iter().all(|&v| v == 0.0),
                "{:?} identity delta nonzero",
                family
            );
        }
    }

    #[test]
    fn deep_families_run_and_are_deterministic() {
        for (family, widths) in [
            (Family::Fcn, vec![4, 4]),
            (Family::Autoencoder, vec![3, 4, 5]),
            (Family::Unet, vec![3, 4, 5]),
            (Family::Graph, vec![3, 5]),
        ] {
            let spec = ModelSpec::new(family, 2, 1, 11).with_widths(widths);
            let m1 = Model::init(spec.clone()).unwrap();
            let m2 = Model::init(spec).unwrap();
            let flat = random_stack(2, 1, 8, 8, 4);
            let a = forward_values(&m1, &flat, 8, 8);
            let b = forward_values(&m2, &flat, 8, 8);
            assert_eq!(a.len(), 64);
            assert_eq!(a, b, "{family:?} not deterministic");
            assert!(a.iter().any(|&v| v != 0.0), "{family:?} output all zero");
        }
    }

    #[test]
    fn pooling_families_reject_indivisible_dims() {
        for family in [Family::Autoencoder, Family::Unet] {
            let m = Model::init(ModelSpec::new(family, 2, 1, 0).with_widths(vec![2, 2, 2]))
                .unwrap();
            let mut tape = Tape::new();
            let bound = m.bind(&mut tape).unwrap();
            let flat = random_stack(2, 1, 12, 12, 5);
            let x = tape
                .leaf(&[m.input_channels(), 12, 12], flat, false)
                .unwrap();
            assert!(m.forward_delta(&mut tape, &bound, x).is_err());
        }
    }

    #[test]
    fn unet_skip_ablation_changes_output() {
        let mut spec = ModelSpec::new(Family::Unet, 2, 1, 13).with_widths(vec![3, 4, 5]);
        let with = Model::init(spec.clone()).unwrap();
        spec.unet_skips = false;
        let without = Model::init(spec).unwrap();
        let flat = random_stack(2, 1, 8, 8, 6);
        let a = forward_values(&with, &flat, 8, 8);
        let b = forward_values(&without, &flat, 8, 8);
        assert_ne!(a, b);
    }

    #[test]
    fn graph_zero_final_layer_and_dry_input_gives_zero_delta() {
        let mut m =
            Model::init(ModelSpec::new(Family::Graph, 2, 1, 17).with_widths(vec![3, 4])).unwrap();
        let n = m.params.len();
        m.params.get_mut(n - 2).values.fill(0.0);
        m.params.get_mut(n - 1).values.fill(0.0);
        // Terrain channels vary; every water and rain channel is zero.
        let layout = m.layout();
        let hw = 36;
        let mut flat = vec![0.0; layout.total * hw];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for v in flat[..layout.delta_dem.end * hw].iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let out = forward_values(&m, &flat, 6, 6);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn graph_depth_perturbation_stays_local() {
        let m =
            Model::init(ModelSpec::new(Family::Graph, 2, 1, 23).with_widths(vec![3, 4])).unwrap();
        let rows = 9;
        let cols = 9;
        let base = random_stack(2, 1, rows, cols, 8);
        let layout = m.layout();
        let mut poked = base.clone();
        let (pr, pc) = (4, 4);
        poked[(layout.wd.end - 1) * rows * cols + pr * cols + pc] += 0.3;
        let a = forward_values(&m, &base, rows, cols);
        let b = forward_values(&m, &poked, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let dist = r.abs_diff(pr) + c.abs_diff(pc);
                if a[r * cols + c] != b[r * cols + c] {
                    assert!(dist <= 2, "output changed at distance {dist}");
                }
            }
        }
        assert_ne!(a[pr * cols + pc], b[pr * cols + pc]);
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ckpt");
        let spec = ModelSpec::new(Family::Graph, 2, 1, 31).with_widths(vec![3, 4]);
        let m = Model::init(spec).unwrap();
        m.save(&base, None).unwrap();
        let (back, adam) = Model::load(&base).unwrap();
        assert!(adam.is_none());
        assert_eq!(back.spec().family, Family::Graph);
        for i in 0..m.params.len() {
            assert_eq!(m.params.get(i).values, back.params.get(i).values);
        }
        let flat = random_stack(2, 1, 8, 8, 9);
        assert_eq!(
            forward_values(&m, &flat, 8, 8),
            forward_values(&back, &flat, 8, 8)
        );
    }

    #[test]
    fn wrong_channel_count_is_a_model_error() {
        let m = Model::init(ModelSpec::new(Family::Fcn, 2, 1, 0).with_widths(vec![2, 2])).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape).unwrap();
        let x = tape.leaf(&[3, 4, 4], vec![0.1; 48], false).unwrap();
        assert!(m.forward_delta(&mut tape, &bound, x).is_err());
    }
}
