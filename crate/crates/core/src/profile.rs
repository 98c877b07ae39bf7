//! Dataset signal profiles and the structures derived from them: per-layer
//! significance thresholds, class hypergraphs, the semantic-hierarchy poset,
//! and exemplar ranking.
//!
//! The signal of a receptive field v in the direction of right singular
//! vector v_i is s_i * <v, v_i>. A signal vector averages those over all
//! receptive-field columns of one image's latent input to a layer, one entry
//! per nonzero singular value. Significance is strict (`sigma[i] > q`) and
//! class membership is inclusive (at least p% of the class's images).

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{DdpError, Result};
use crate::io::fmt_g17;
use crate::model::{forward, ModelSpec};
use crate::spectral::LayerSvd;
use crate::tensor::{DenseTensor, ReceptiveFieldMatrix};

/// Per-layer bookkeeping carried next to the raw signal rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMeta {
    pub layer_id: String,
    /// Numerical rank r of the layer; signal vectors have this length.
    pub rank: usize,
    /// Receptive-field positions n^2 (1 for fc layers).
    pub positions: usize,
}

/// Signals of one image across all profiled layers (profile layer order).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSignals {
    pub image_id: String,
    pub class_label: String,
    pub signals: Vec<Vec<f64>>,
}

/// All signal vectors of a dataset against one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalProfile {
    pub layers: Vec<LayerMeta>,
    pub images: Vec<ImageSignals>,
}

impl SignalProfile {
    pub fn layer_index(&self, layer_id: &str) -> Option<usize> {
        self.layers.iter().position(|m| m.layer_id == layer_id)
    }

    fn require_layer(&self, layer_id: &str) -> Result<usize> {
        self.layer_index(layer_id).ok_or_else(|| {
            DdpError::InvalidInput(format!(
                "profile has no layer '{layer_id}'; available: {}",
                self.layers
                    .iter()
                    .map(|m| m.layer_id.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
    }

    /// All signal entries of one layer pooled over an optional image subset.
    pub fn pooled_signals(&self, layer_id: &str, subset: Option<&BTreeSet<usize>>) -> Result<Vec<f64>> {
        let li = self.require_layer(layer_id)?;
        let mut out = Vec::new();
        for (idx, img) in self.images.iter().enumerate() {
            if let Some(s) = subset {
                if !s.contains(&idx) {
                    continue;
                }
            }
            out.extend_from_slice(&img.signals[li]);
        }
        Ok(out)
    }

    /// Profile rows as the canonical CSV: one row per signal entry, images
    /// sorted by id, layers in profile order, indices ascending.
    pub fn to_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.sort_by(|&a, &b| self.images[a].image_id.cmp(&self.images[b].image_id));
        let mut out = String::from("image_id,class_label,layer_id,vector_index,signal\n");
        for &idx in &order {
            let img = &self.images[idx];
            for (li, meta) in self.layers.iter().enumerate() {
                for (vi, &sig) in img.signals[li].iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        img.image_id,
                        img.class_label,
                        meta.layer_id,
                        vi,
                        fmt_g17(sig)
                    ));
                }
            }
        }
        out
    }

    /// Side table describing the layers of a profile.
    pub fn layers_csv(&self) -> String {
        let mut out = String::from("layer_id,rank,positions\n");
        for m in &self.layers {
            out.push_str(&format!("{},{},{}\n", m.layer_id, m.rank, m.positions));
        }
        out
    }

    /// Rebuild a profile from the canonical CSV plus the layer side table.
    pub fn from_csv(profile_csv: &str, layers_csv: &str) -> Result<SignalProfile> {
        let mut layers = Vec::new();
        let mut lines = layers_csv.lines();
        match lines.next() {
            Some("layer_id,rank,positions") => {}
            other => {
                return Err(DdpError::InvalidInput(format!(
                    "bad layer table header: {other:?}"
                )))
            }
        }
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(DdpError::InvalidInput(format!(
                    "bad layer table row '{line}'"
                )));
            }
            let rank = parts[1]
                .parse()
                .map_err(|_| DdpError::InvalidInput(format!("bad rank in '{line}'")))?;
            let positions = parts[2]
                .parse()
                .map_err(|_| DdpError::InvalidInput(format!("bad positions in '{line}'")))?;
            layers.push(LayerMeta {
                layer_id: parts[0].to_string(),
                rank,
                positions,
            });
        }
        if layers.is_empty() {
            return Err(DdpError::InvalidInput("empty layer table".into()));
        }
        let layer_index: BTreeMap<&str, usize> = layers
            .iter()
            .enumerate()
            .map(|(i, m)| (m.layer_id.as_str(), i))
            .collect();

        let mut lines = profile_csv.lines();
        match lines.next() {
            Some("image_id,class_label,layer_id,vector_index,signal") => {}
            other => {
                return Err(DdpError::InvalidInput(format!(
                    "bad profile header: {other:?}"
                )))
            }
        }
        let mut images: Vec<ImageSignals> = Vec::new();
        let mut current: BTreeMap<String, usize> = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(DdpError::InvalidInput(format!("bad profile row '{line}'")));
            }
            let (image_id, class_label, layer_id) = (parts[0], parts[1], parts[2]);
            let vi: usize = parts[3]
                .parse()
                .map_err(|_| DdpError::InvalidInput(format!("bad index in '{line}'")))?;
            let signal: f64 = parts[4]
                .parse()
                .map_err(|_| DdpError::InvalidInput(format!("bad signal in '{line}'")))?;
            let &li = layer_index.get(layer_id).ok_or_else(|| {
                DdpError::InvalidInput(format!("profile row references unknown layer '{layer_id}'"))
            })?;
            let img_idx = *current.entry(image_id.to_string()).or_insert_with(|| {
                images.push(ImageSignals {
                    image_id: image_id.to_string(),
                    class_label: class_label.to_string(),
                    signals: layers.iter().map(|m| Vec::with_capacity(m.rank)).collect(),
                });
                images.len() - 1
            });
            let img = &mut images[img_idx];
            if img.class_label != class_label {
                return Err(DdpError::InvalidInput(format!(
                    "image '{image_id}' has conflicting class labels"
                )));
            }
            if vi != img.signals[li].len() {
                return Err(DdpError::InvalidInput(format!(
                    "out-of-order vector index {vi} for image '{image_id}' layer '{layer_id}'"
                )));
            }
            img.signals[li].push(signal);
        }
        if images.is_empty() {
            return Err(DdpError::InvalidInput("profile has no rows".into()));
        }
        for img in &images {
            for (li, meta) in layers.iter().enumerate() {
                if img.signals[li].len() != meta.rank {
                    return Err(DdpError::InvalidInput(format!(
                        "image '{}' layer '{}' has {} signals, expected rank {}",
                        img.image_id,
                        meta.layer_id,
                        img.signals[li].len(),
                        meta.rank
                    )));
                }
            }
        }
        Ok(SignalProfile { layers, images })
    }
}

/// Signal vector of one latent input against one layer's SVD: entry i is
/// s_i * mean_j <psi_col_j, v_i> over i < rank. Column order and the inner
/// accumulation are fixed and sequential.
pub fn signal_vector(svd: &LayerSvd, psi: &ReceptiveFieldMatrix) -> Result<Vec<f64>> {
    let window_len = psi.geometry().window_len();
    if window_len != svd.cols() {
        return Err(DdpError::ShapeMismatch(format!(
            "receptive fields have window length {window_len} but the layer expects {}",
            svd.cols()
        )));
    }
    let rank = svd.nonzero_count();
    let cols = psi.geometry().position_count();
    let rows = window_len;
    let psi_data = psi.matrix().data();
    let v = svd.v.data();
    let n = svd.cols();
    let mut sigma = Vec::with_capacity(rank);
    for i in 0..rank {
        let mut total = 0.0f64;
        for j in 0..cols {
            let mut dot = 0.0f64;
            for r in 0..rows {
                dot += psi_data[r * cols + j] * v[r * n + i];
            }
            total += dot;
        }
        sigma.push(svd.s[i] * (total / cols as f64));
    }
    Ok(sigma)
}

/// Signal vectors of one image for the selected linear layers, in order.
pub fn image_signals(
    model: &ModelSpec,
    svds: &BTreeMap<String, LayerSvd>,
    layer_ids: &[String],
    x: &DenseTensor,
) -> Result<Vec<Vec<f64>>> {
    let trace = forward(model, x)?;
    let mut out = Vec::new();
    for id in layer_ids {
        let view = model.linear_view(id)?;
        let svd = svds
            .get(id)
            .ok_or_else(|| DdpError::InvalidInput(format!("missing SVD for layer '{id}'")))?;
        let x_latent = trace
            .input_of(id)
            .expect("linear_view verified the layer exists");
        let psi = view.receptive_fields(x_latent)?;
        out.push(signal_vector(svd, &psi)?);
    }
    Ok(out)
}

/// Profile a whole labeled dataset sequentially.
pub fn compute_profile(
    model: &ModelSpec,
    svds: &BTreeMap<String, LayerSvd>,
    layer_ids: &[String],
    images: &[(String, String, DenseTensor)],
) -> Result<SignalProfile> {
    let layers = profile_layer_meta(model, svds, layer_ids)?;
    let mut out = Vec::with_capacity(images.len());
    for (image_id, class_label, x) in images {
        out.push(ImageSignals {
            image_id: image_id.clone(),
            class_label: class_label.clone(),
            signals: image_signals(model, svds, layer_ids, x)?,
        });
    }
    Ok(SignalProfile {
        layers,
        images: out,
    })
}

/// Layer metadata for a profile of the selected layers.
pub fn profile_layer_meta(
    model: &ModelSpec,
    svds: &BTreeMap<String, LayerSvd>,
    layer_ids: &[String],
) -> Result<Vec<LayerMeta>> {
    let mut layers = Vec::new();
    for id in layer_ids {
        let view = model.linear_view(id)?;
        let svd = svds
            .get(id)
            .ok_or_else(|| DdpError::InvalidInput(format!("missing SVD for layer '{id}'")))?;
        layers.push(LayerMeta {
            layer_id: id.clone(),
            rank: svd.nonzero_count(),
            positions: view.position_count(),
        });
    }
    Ok(layers)
}

/// Nearest-rank (lower side) quantile of a pooled sample.
pub fn quantile_threshold(samples: &[f64], quantile: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(DdpError::InvalidInput("no samples for quantile".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(DdpError::InvalidParameter(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = (quantile * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Indices whose signal strictly exceeds the threshold.
pub fn significant_for_image(sigma: &[f64], q: f64) -> BTreeSet<usize> {
    sigma
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > q)
        .map(|(i, _)| i)
        .collect()
}

/// Incidence of target classes (hyperedges) over significant singular-vector
/// indices (nodes) for one layer at parameters (q, p).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHypergraph {
    pub layer_id: String,
    /// Signal threshold.
    pub q: f64,
    /// Class percentage in (50, 100].
    pub p: f64,
    /// Class label -> node indices. Empty hyperedges are discarded.
    pub hyperedges: BTreeMap<String, BTreeSet<usize>>,
}

impl ClassHypergraph {
    /// Union of all hyperedges; orphan indices never appear.
    pub fn nodes(&self) -> BTreeSet<usize> {
        self.hyperedges.values().flatten().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperedges.is_empty()
    }

    /// JSON document with deterministic key order.
    pub fn to_json_string(&self, quantile: Option<f64>) -> String {
        let edges: serde_json::Map<String, serde_json::Value> = self
            .hyperedges
            .iter()
            .map(|(class, nodes)| {
                (
                    class.clone(),
                    serde_json::Value::from(nodes.iter().copied().collect::<Vec<usize>>()),
                )
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("layer".into(), self.layer_id.clone().into());
        doc.insert("q".into(), self.q.into());
        if let Some(f) = quantile {
            doc.insert("quantile".into(), f.into());
        }
        doc.insert("p".into(), self.p.into());
        doc.insert("empty".into(), self.is_empty().into());
        doc.insert("hyperedges".into(), serde_json::Value::Object(edges));
        serde_json::to_string_pretty(&serde_json::Value::Object(doc))
            .expect("plain map serializes")
    }
}

/// Build one layer's class hypergraph: node i joins hyperedge C when at
/// least p% of class C's images have sigma[i] > q.
pub fn build_hypergraph(
    profile: &SignalProfile,
    layer_id: &str,
    q: f64,
    p: f64,
) -> Result<ClassHypergraph> {
    if !(p > 50.0 && p <= 100.0) {
        return Err(DdpError::InvalidParameter(format!(
            "class percentage must lie in (50, 100], got {p}"
        )));
    }
    if q.is_nan() || q <= 0.0 {
        return Err(DdpError::InvalidParameter(format!(
            "significance threshold must be positive (only positive signals drive significance), got {q}"
        )));
    }
    let li = profile.require_layer(layer_id)?;
    let rank = profile.layers[li].rank;

    let mut by_class: BTreeMap<&str, Vec<&ImageSignals>> = BTreeMap::new();
    for img in &profile.images {
        by_class.entry(&img.class_label).or_default().push(img);
    }

    let mut hyperedges = BTreeMap::new();
    for (class, members) in &by_class {
        let required = ((p / 100.0) * members.len() as f64).ceil() as usize;
        let mut edge = BTreeSet::new();
        for i in 0..rank {
            let hits = members
                .iter()
                .filter(|img| img.signals[li][i] > q)
                .count();
            if hits >= required {
                edge.insert(i);
            }
        }
        if !edge.is_empty() {
            hyperedges.insert(class.to_string(), edge);
        }
    }
    Ok(ClassHypergraph {
        layer_id: layer_id.to_string(),
        q,
        p,
        hyperedges,
    })
}

/// One hypergraph per (q, p) pair, in the given order (q outer).
pub fn hypergraph_family(
    profile: &SignalProfile,
    layer_id: &str,
    qs: &[f64],
    ps: &[f64],
) -> Result<Vec<ClassHypergraph>> {
    if qs.is_empty() || ps.is_empty() {
        return Err(DdpError::InvalidParameter(
            "threshold and percentage lists must be nonempty".into(),
        ));
    }
    let mut out = Vec::with_capacity(qs.len() * ps.len());
    for &q in qs {
        for &p in ps {
            out.push(build_hypergraph(profile, layer_id, q, p)?);
        }
    }
    Ok(out)
}

/// Nodes grouped by identical hyperedge membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceClass {
    /// Singular-vector indices in the class.
    pub members: BTreeSet<usize>,
    /// The common hyperedge set of every member.
    pub hyperedges: BTreeSet<String>,
}

impl EquivalenceClass {
    /// Lowest member index, used as the class representative.
    pub fn representative(&self) -> usize {
        *self.members.iter().next().expect("classes are nonempty")
    }
}

/// Partition of hypergraph nodes plus the Hasse diagram of the strict
/// superset order on their hyperedge sets (edges point general -> specific).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticHierarchy {
    pub classes: Vec<EquivalenceClass>,
    /// Pairs of indices into `classes`.
    pub hasse_edges: Vec<(usize, usize)>,
}

pub fn semantic_hierarchy(h: &ClassHypergraph) -> SemanticHierarchy {
    let mut membership: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (class, nodes) in &h.hyperedges {
        for &n in nodes {
            membership.entry(n).or_default().insert(class.clone());
        }
    }
    let mut grouped: BTreeMap<BTreeSet<String>, BTreeSet<usize>> = BTreeMap::new();
    for (node, edges) in membership {
        grouped.entry(edges).or_default().insert(node);
    }
    let mut classes: Vec<EquivalenceClass> = grouped
        .into_iter()
        .map(|(hyperedges, members)| EquivalenceClass {
            members,
            hyperedges,
        })
        .collect();
    classes.sort_by_key(EquivalenceClass::representative);

    let strictly_above = |a: &EquivalenceClass, b: &EquivalenceClass| {
        a.hyperedges.len() > b.hyperedges.len() && a.hyperedges.is_superset(&b.hyperedges)
    };
    let mut hasse_edges = Vec::new();
    for (ai, a) in classes.iter().enumerate() {
        for (bi, b) in classes.iter().enumerate() {
            if ai == bi || !strictly_above(a, b) {
                continue;
            }
            let shortcut = classes.iter().enumerate().any(|(ci, c)| {
                ci != ai && ci != bi && strictly_above(a, c) && strictly_above(c, b)
            });
            if !shortcut {
                hasse_edges.push((ai, bi));
            }
        }
    }
    SemanticHierarchy {
        classes,
        hasse_edges,
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl SemanticHierarchy {
    /// DOT digraph: one node per equivalence class, edges general -> specific.
    pub fn to_dot(&self, graph_name: &str) -> String {
        let mut out = format!("digraph \"{}\" {{\n", dot_escape(graph_name));
        for c in &self.classes {
            let classes: Vec<String> = c.hyperedges.iter().map(|s| dot_escape(s)).collect();
            out.push_str(&format!(
                "  eq{} [label=\"rep=v{}, size={}, classes=[{}]\"];\n",
                c.representative(),
                c.representative(),
                c.members.len(),
                classes.join(", ")
            ));
        }
        for &(a, b) in &self.hasse_edges {
            out.push_str(&format!(
                "  eq{} -> eq{};\n",
                self.classes[a].representative(),
                self.classes[b].representative()
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Rank images by the weighted sum of selected signals, scaled by the
/// layer's position count (sum over spatial positions rather than the mean).
/// Ties break toward the lexicographically smaller image id.
pub fn exemplars(
    profile: &SignalProfile,
    layer_id: &str,
    weights: &BTreeMap<usize, f64>,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(DdpError::InvalidParameter("k must be >= 1".into()));
    }
    if weights.is_empty() {
        return Err(DdpError::InvalidParameter(
            "at least one weighted vector index is required".into(),
        ));
    }
    let li = profile.require_layer(layer_id)?;
    let meta = &profile.layers[li];
    for &i in weights.keys() {
        if i >= meta.rank {
            return Err(DdpError::InvalidInput(format!(
                "vector index {i} out of range; layer '{layer_id}' has rank {}",
                meta.rank
            )));
        }
    }
    let scale = meta.positions as f64;
    let mut scored: Vec<(String, f64)> = profile
        .images
        .iter()
        .map(|img| {
            let mut score = 0.0f64;
            for (&i, &w) in weights {
                score += w * img.signals[li][i];
            }
            (img.image_id.clone(), score * scale)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    Ok(scored)
}
