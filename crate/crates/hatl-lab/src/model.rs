//! The desk-scale sign-to-text model.
//!
//! Architecture: an ordered backbone of n affine+tanh layers with learned
//! causal temporal mixing (L_1 closest to the input), a 3-block
//! self-attention encoder emitting per-frame gloss logits and contextual
//! states, and a 1-block autoregressive attention decoder emitting text
//! logits. Frame classification heads sit on top of the backbone (grouped
//! with L_n) and the encoder, feeding the auxiliary losses.
//!
//! Every parameter belongs to exactly one group: `Backbone(m)` for L_m, or
//! `Encoder`/`Decoder` which together form the translation head t. Freezing
//! is expressed with [`TrainableSet`]; the optimizer consults it and never
//! touches parameters outside the set.
//!
//! Forward passes build a [`Tape`] so the identical code path serves
//! training (with `backward`) and inference (values only).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

/// Parameter group: backbone layer L_m (1-based, L_1 nearest the input) or
/// one of the two translation-head subgroups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Backbone(usize),
    Encoder,
    Decoder,
}

impl Group {
    pub fn is_head(self) -> bool {
        matches!(self, Group::Encoder | Group::Decoder)
    }

    pub fn label(self) -> String {
        match self {
            Group::Backbone(m) => format!("L{m}"),
            Group::Encoder => "t.encoder".into(),
            Group::Decoder => "t.decoder".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Mat,
}

/// The set U of currently trainable groups. The translation head counts as
/// one unit; backbone layers are released individually and monotonically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainableSet {
    backbone: Vec<bool>,
    head: bool,
}

impl TrainableSet {
    /// U_0 = {t}: the classical fine-tuning starting point.
    pub fn head_only(n_backbone: usize) -> Self {
        TrainableSet {
            backbone: vec![false; n_backbone],
            head: true,
        }
    }

    /// Everything trainable: the full fine-tuning baseline.
    pub fn full(n_backbone: usize) -> Self {
        TrainableSet {
            backbone: vec![true; n_backbone],
            head: true,
        }
    }

    /// Backbone-only training for the source-domain pretraining phase;
    /// not a valid fine-tuning set (no head).
    pub fn backbone_pretrain(n_backbone: usize) -> Self {
        TrainableSet {
            backbone: vec![true; n_backbone],
            head: false,
        }
    }

    pub fn n_backbone(&self) -> usize {
        self.backbone.len()
    }

    pub fn includes_head(&self) -> bool {
        self.head
    }

    pub fn contains(&self, g: Group) -> bool {
        match g {
            Group::Backbone(m) => m >= 1 && m <= self.backbone.len() && self.backbone[m - 1],
            Group::Encoder | Group::Decoder => self.head,
        }
    }

    /// Marks L_m trainable. Growth is monotone: nothing is ever removed.
    pub fn release(&mut self, m: usize) -> Result<()> {
        if m < 1 || m > self.backbone.len() {
            return Err(Error::Config(format!(
                "release of L{m} out of range 1..={}",
                self.backbone.len()
            )));
        }
        self.backbone[m - 1] = true;
        Ok(())
    }

    pub fn released_layers(&self) -> usize {
        self.backbone.iter().filter(|&&b| b).count()
    }

    /// Highest-index backbone layer still frozen; releases proceed top-down
    /// from L_n toward L_1.
    pub fn next_release_top_down(&self) -> Option<usize> {
        (1..=self.backbone.len()).rev().find(|&m| !self.backbone[m - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Input feature width per frame.
    pub d_in: usize,
    /// Hidden width everywhere else.
    pub d_model: usize,
    /// Backbone depth n (>= 2).
    pub n_backbone: usize,
    /// Encoder blocks.
    pub n_encoder: usize,
    /// Decoder blocks.
    pub n_decoder: usize,
    /// Gloss vocabulary size, excluding blank.
    pub v_gloss: usize,
    /// Text vocabulary size, including pad/start/end specials.
    pub v_text: usize,
    /// Positional table size; upper bound on decoded text length.
    pub max_text_len: usize,
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.n_backbone < 2 {
            return Err(Error::Config(format!(
                "backbone needs at least 2 layers, got {}",
                self.n_backbone
            )));
        }
        let dims = [
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("n_encoder", self.n_encoder),
            ("n_decoder", self.n_decoder),
            ("v_gloss", self.v_gloss),
            ("max_text_len", self.max_text_len),
        ];
        for (name, v) in dims {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.v_text < 3 {
            return Err(Error::Config(
                "text vocabulary needs pad/start/end at minimum".into(),
            ));
        }
        Ok(())
    }
}

/// Full copy of all parameter values, tagged with where it came from.
#[derive(Debug, Clone)]
pub struct ParamSnapshot {
    pub epoch: usize,
    pub dev_metric: f64,
    values: Vec<Mat>,
}

impl ParamSnapshot {
    /// Reassembles a snapshot (e.g. from a checkpoint file); shape checks
    /// happen at [`Model::restore`].
    pub fn from_values(epoch: usize, dev_metric: f64, values: Vec<Mat>) -> Self {
        ParamSnapshot {
            epoch,
            dev_metric,
            values,
        }
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    params: Vec<Param>,
    index: HashMap<String, usize>,
    trainable: TrainableSet,
}

/// One recorded forward pass: the tape plus the node ids of everything the
/// losses and decoders need.
pub struct ForwardPass {
    pub tape: Tape,
    param_nodes: Vec<NodeId>,
    /// G x d backbone output.
    pub backbone_states: NodeId,
    /// G x (v_gloss+1) frame logits from the backbone head.
    pub bb_frame_logits: NodeId,
    /// G x d contextual encoder states.
    pub enc_states: NodeId,
    /// G x (v_gloss+1) gloss logits from the encoder head.
    pub enc_gloss_logits: NodeId,
}

impl ForwardPass {
    pub fn param_node(&self, param_idx: usize) -> NodeId {
        self.param_nodes[param_idx]
    }
}

fn causal_mask(s: usize) -> Mat {
    Mat::from_fn(s, s, |i, j| if j > i { f64::NEG_INFINITY } else { 0.0 })
}

impl Model {
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let mut rng = Rng::seed_from(seed);
        let mut params: Vec<Param> = Vec::new();
        let d = cfg.d_model;
        let vg1 = cfg.v_gloss + 1;

        let push = |params: &mut Vec<Param>, name: String, group: Group, value: Mat| {
            params.push(Param { name, group, value });
        };

        // Backbone L_1..L_n. Temporal mixing taps start at zero so an
        // untrained stack maps equal frames to equal states.
        for m in 1..=cfg.n_backbone {
            let d_prev = if m == 1 { cfg.d_in } else { d };
            let std = 1.0 / (d_prev as f64).sqrt();
            push(
                &mut params,
                format!("bb{m}.w"),
                Group::Backbone(m),
                Mat::randn(d_prev, d, std, &mut rng),
            );
            push(
                &mut params,
                format!("bb{m}.b"),
                Group::Backbone(m),
                Mat::zeros(1, d),
            );
            push(
                &mut params,
                format!("bb{m}.tap"),
                Group::Backbone(m),
                Mat::zeros(1, 1),
            );
        }
        // Frame classifier on the backbone output; grouped with L_n so it
        // is trained whenever the topmost layer is.
        let std = 1.0 / (d as f64).sqrt();
        push(
            &mut params,
            "bb_head.w".into(),
            Group::Backbone(cfg.n_backbone),
            Mat::randn(d, vg1, std, &mut rng),
        );
        push(
            &mut params,
            "bb_head.b".into(),
            Group::Backbone(cfg.n_backbone),
            Mat::zeros(1, vg1),
        );

        // Encoder blocks: causal self-attention + gated temporal tanh unit.
        for i in 1..=cfg.n_encoder {
            for w in ["wq", "wk", "wv", "wf"] {
                push(
                    &mut params,
                    format!("enc{i}.{w}"),
                    Group::Encoder,
                    Mat::randn(d, d, std, &mut rng),
                );
            }
            push(
                &mut params,
                format!("enc{i}.bf"),
                Group::Encoder,
                Mat::zeros(1, d),
            );
            push(
                &mut params,
                format!("enc{i}.tap"),
                Group::Encoder,
                Mat::zeros(1, 1),
            );
        }
        push(
            &mut params,
            "gloss_head.w".into(),
            Group::Encoder,
            Mat::randn(d, vg1, std, &mut rng),
        );
        push(
            &mut params,
            "gloss_head.b".into(),
            Group::Encoder,
            Mat::zeros(1, vg1),
        );

        // Decoder: embeddings, per-block self/cross attention + tanh FFN,
        // output projection.
        push(
            &mut params,
            "dec.embed".into(),
            Group::Decoder,
            Mat::randn(cfg.v_text, d, 0.3, &mut rng),
        );
        push(
            &mut params,
            "dec.pos".into(),
            Group::Decoder,
            Mat::randn(cfg.max_text_len, d, 0.1, &mut rng),
        );
        for j in 1..=cfg.n_decoder {
            for w in ["wq", "wk", "wv", "cq", "ck", "cv", "wf"] {
                push(
                    &mut params,
                    format!("dec{j}.{w}"),
                    Group::Decoder,
                    Mat::randn(d, d, std, &mut rng),
                );
            }
            push(
                &mut params,
                format!("dec{j}.bf"),
                Group::Decoder,
                Mat::zeros(1, d),
            );
        }
        push(
            &mut params,
            "dec_out.w".into(),
            Group::Decoder,
            Mat::randn(d, cfg.v_text, std, &mut rng),
        );
        push(
            &mut params,
            "dec_out.b".into(),
            Group::Decoder,
            Mat::zeros(1, cfg.v_text),
        );

        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        let trainable = TrainableSet::head_only(cfg.n_backbone);
        Ok(Model {
            cfg,
            params,
            index,
            trainable,
        })
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn n_backbone(&self) -> usize {
        self.cfg.n_backbone
    }

    /// Number of parameter tensors.
    pub fn num_tensors(&self) -> usize {
        self.params.len()
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn trainable(&self) -> &TrainableSet {
        &self.trainable
    }

    /// Installs U. The translation head must be in every fine-tuning set.
    pub fn set_trainable(&mut self, u: TrainableSet) -> Result<()> {
        if !u.includes_head() {
            return Err(Error::Config(
                "trainable set must include the translation head".into(),
            ));
        }
        if u.n_backbone() != self.cfg.n_backbone {
            return Err(Error::Config(format!(
                "trainable set sized for {} backbone layers, model has {}",
                u.n_backbone(),
                self.cfg.n_backbone
            )));
        }
        self.trainable = u;
        Ok(())
    }

    pub fn snapshot(&self, epoch: usize, dev_metric: f64) -> ParamSnapshot {
        ParamSnapshot {
            epoch,
            dev_metric,
            values: self.params.iter().map(|p| p.value.clone()).collect(),
        }
    }

    /// Restores parameter values bit-for-bit. Optimizer state is untouched
    /// by design; releases rebuild the optimizer separately.
    pub fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        if snap.values.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "snapshot has {} tensors, model has {}",
                snap.values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(&snap.values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Checkpoint(format!(
                    "snapshot shape mismatch for {}: {:?} vs {:?}",
                    p.name,
                    v.shape(),
                    p.value.shape()
                )));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Records backbone + encoder on a fresh tape. Decoder calls append to
    /// the same pass, sharing the encoded states.
    pub fn encode(&self, frames: &Mat) -> Result<ForwardPass> {
        if frames.rows() == 0 {
            return Err(Error::Argument("empty frame sequence".into()));
        }
        if frames.cols() != self.cfg.d_in {
            return Err(Error::Argument(format!(
                "frame width {} does not match d_in {}",
                frames.cols(),
                self.cfg.d_in
            )));
        }
        let mut tape = Tape::new();
        let param_nodes: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect();
        let id = |name: &str| param_nodes[self.index[name]];

        let g = frames.rows();
        let mut h = tape.leaf(frames.clone());
        for m in 1..=self.cfg.n_backbone {
            let a = tape.matmul(h, id(&format!("bb{m}.w")));
            let a = tape.add_row_broadcast(a, id(&format!("bb{m}.b")));
            let a = tape.tanh(a);
            let sh = tape.shift_rows_down(a);
            let mixed = tape.scalar_mul(sh, id(&format!("bb{m}.tap")));
            h = tape.add(a, mixed);
        }
        let backbone_states = h;
        let bb_logits = tape.matmul(backbone_states, id("bb_head.w"));
        let bb_frame_logits = tape.add_row_broadcast(bb_logits, id("bb_head.b"));

        let scale = 1.0 / (self.cfg.d_model as f64).sqrt();
        let mask = causal_mask(g);
        let mut e = backbone_states;
        for i in 1..=self.cfg.n_encoder {
            let q = tape.matmul(e, id(&format!("enc{i}.wq")));
            let k = tape.matmul(e, id(&format!("enc{i}.wk")));
            let v = tape.matmul(e, id(&format!("enc{i}.wv")));
            let scores = tape.matmul_nt(q, k);
            let scores = tape.scale(scores, scale);
            let scores = tape.add_const(scores, &mask);
            let att = tape.softmax_rows(scores);
            let ctx = tape.matmul(att, v);
            e = tape.add(e, ctx);
            let a = tape.matmul(e, id(&format!("enc{i}.wf")));
            let a = tape.add_row_broadcast(a, id(&format!("enc{i}.bf")));
            let a = tape.tanh(a);
            let sh = tape.shift_rows_down(a);
            let mixed = tape.scalar_mul(sh, id(&format!("enc{i}.tap")));
            let unit = tape.add(a, mixed);
            e = tape.add(e, unit);
        }
        let enc_states = e;
        let gl = tape.matmul(enc_states, id("gloss_head.w"));
        let enc_gloss_logits = tape.add_row_broadcast(gl, id("gloss_head.b"));

        Ok(ForwardPass {
            tape,
            param_nodes,
            backbone_states,
            bb_frame_logits,
            enc_states,
            enc_gloss_logits,
        })
    }

    /// Appends a decoder run over `prefix` (start token first) to an
    /// existing pass and returns the S x v_text logits node: row s scores
    /// the token following prefix position s.
    pub fn decode_text(&self, fp: &mut ForwardPass, prefix: &[usize]) -> Result<NodeId> {
        if prefix.is_empty() {
            return Err(Error::Argument("empty decoder prefix".into()));
        }
        if prefix.len() > self.cfg.max_text_len {
            return Err(Error::Argument(format!(
                "prefix length {} exceeds max_text_len {}",
                prefix.len(),
                self.cfg.max_text_len
            )));
        }
        if let Some(&bad) = prefix.iter().find(|&&t| t >= self.cfg.v_text) {
            return Err(Error::Argument(format!(
                "token id {bad} out of vocabulary ({})",
                self.cfg.v_text
            )));
        }
        let tape = &mut fp.tape;
        let id = |name: &str| fp.param_nodes[self.index[name]];
        let s = prefix.len();

        let emb = tape.gather_rows(id("dec.embed"), prefix);
        let positions: Vec<usize> = (0..s).collect();
        let pos = tape.gather_rows(id("dec.pos"), &positions);
        let mut x = tape.add(emb, pos);

        let scale = 1.0 / (self.cfg.d_model as f64).sqrt();
        let mask = causal_mask(s);
        for j in 1..=self.cfg.n_decoder {
            let q = tape.matmul(x, id(&format!("dec{j}.wq")));
            let k = tape.matmul(x, id(&format!("dec{j}.wk")));
            let v = tape.matmul(x, id(&format!("dec{j}.wv")));
            let scores = tape.matmul_nt(q, k);
            let scores = tape.scale(scores, scale);
            let scores = tape.add_const(scores, &mask);
            let att = tape.softmax_rows(scores);
            let ctx = tape.matmul(att, v);
            x = tape.add(x, ctx);

            let cq = tape.matmul(x, id(&format!("dec{j}.cq")));
            let ck = tape.matmul(fp.enc_states, id(&format!("dec{j}.ck")));
            let cv = tape.matmul(fp.enc_states, id(&format!("dec{j}.cv")));
            let cscores = tape.matmul_nt(cq, ck);
            let cscores = tape.scale(cscores, scale);
            let catt = tape.softmax_rows(cscores);
            let cctx = tape.matmul(catt, cv);
            x = tape.add(x, cctx);

            let a = tape.matmul(x, id(&format!("dec{j}.wf")));
            let a = tape.add_row_broadcast(a, id(&format!("dec{j}.bf")));
            let a = tape.tanh(a);
            x = tape.add(x, a);
        }
        let out = tape.matmul(x, id("dec_out.w"));
        Ok(tape.add_row_broadcast(out, id("dec_out.b")))
    }

    /// One-call forward producing all three heads (spec order: backbone
    /// frame logits, encoder gloss logits, text logits).
    pub fn forward(&self, frames: &Mat, text_prefix: &[usize]) -> Result<(ForwardPass, NodeId)> {
        let mut fp = self.encode(frames)?;
        let text_logits = self.decode_text(&mut fp, text_prefix)?;
        Ok((fp, text_logits))
    }
}
