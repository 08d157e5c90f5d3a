//! Versioned JSON persistence for trained models.
//!
//! Trees serialize as nested nodes (feature index, threshold, default
//! direction, children or leaf value) so the format stays readable and
//! independent of the in-memory flat layout.

use serde::{Deserialize, Serialize};

use crate::error::{PrestoError, Result};
use crate::gbdt::{BoostedForest, Node, Tree};
use crate::presto::{CoarseClassifier, PrestoConfig, PrestoModel};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: Box<NodeJson>,
        right: Box<NodeJson>,
    },
    Leaf {
        leaf: f64,
    },
}

#[derive(Serialize, Deserialize)]
struct ClassifierJson {
    edges: Vec<f64>,
    base_scores: Vec<f64>,
    rounds: Vec<Vec<NodeJson>>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    schema_version: u32,
    n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_schema: Option<crate::presto::DataSchema>,
    config: PrestoConfig,
    classifiers: Vec<ClassifierJson>,
}

fn tree_to_json(tree: &Tree, index: usize) -> NodeJson {
    match &tree.nodes[index] {
        Node::Leaf { value } => NodeJson::Leaf { leaf: *value },
        Node::Split {
            feature,
            threshold,
            default_left,
            left,
            right,
        } => NodeJson::Split {
            feature: *feature,
            threshold: *threshold,
            default_left: *default_left,
            left: Box::new(tree_to_json(tree, *left as usize)),
            right: Box::new(tree_to_json(tree, *right as usize)),
        },
    }
}

fn tree_from_json(node: &NodeJson, n_features: usize, nodes: &mut Vec<Node>) -> Result<u32> {
    let index = nodes.len() as u32;
    match node {
        NodeJson::Leaf { leaf } => {
            if !leaf.is_finite() {
                return Err(PrestoError::BadModel(format!("non-finite leaf {leaf}")));
            }
            nodes.push(Node::Leaf { value: *leaf });
        }
        NodeJson::Split {
            feature,
            threshold,
            default_left,
            left,
            right,
        } => {
            if *feature as usize >= n_features {
                return Err(PrestoError::BadModel(format!(
                    "split references feature {feature} of {n_features}"
                )));
            }
            if !threshold.is_finite() {
                return Err(PrestoError::BadModel(format!(
                    "non-finite threshold {threshold}"
                )));
            }
            nodes.push(Node::Leaf { value: 0.0 }); // placeholder
            let left_index = tree_from_json(left, n_features, nodes)?;
            let right_index = tree_from_json(right, n_features, nodes)?;
            nodes[index as usize] = Node::Split {
                feature: *feature,
                threshold: *threshold,
                default_left: *default_left,
                left: left_index,
                right: right_index,
            };
        }
    }
    Ok(index)
}

/// Serialize a model to its versioned JSON document.
pub fn model_to_json(model: &PrestoModel) -> Result<String> {
    let classifiers = model
        .classifiers()
        .iter()
        .map(|c| ClassifierJson {
            edges: c.partition().edges().to_vec(),
            base_scores: c.forest().base_scores().to_vec(),
            rounds: c
                .forest()
                .rounds()
                .iter()
                .map(|round| round.iter().map(|t| tree_to_json(t, 0)).collect())
                .collect(),
        })
        .collect();
    let doc = ModelJson {
        schema_version: MODEL_SCHEMA_VERSION,
        n_features: model.n_features(),
        data_schema: model.schema().cloned(),
        config: model.config().clone(),
        classifiers,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| PrestoError::BadModel(e.to_string()))
}

/// Load a model from its JSON document, validating schema and shape.
pub fn model_from_json(json: &str) -> Result<PrestoModel> {
    let doc: ModelJson =
        serde_json::from_str(json).map_err(|e| PrestoError::BadModel(e.to_string()))?;
    if doc.schema_version != MODEL_SCHEMA_VERSION {
        return Err(PrestoError::BadModel(format!(
            "unsupported schema version {} (expected {MODEL_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    let mut classifiers = Vec::with_capacity(doc.classifiers.len());
    for stored in &doc.classifiers {
        let partition = crate::density::BinPartition::new(stored.edges.clone())?;
        let rounds: Vec<Vec<Tree>> = stored
            .rounds
            .iter()
            .map(|round| {
                round
                    .iter()
                    .map(|root| {
                        let mut nodes = Vec::new();
                        tree_from_json(root, doc.n_features, &mut nodes)?;
                        Ok(Tree { nodes })
                    })
                    .collect::<Result<Vec<Tree>>>()
            })
            .collect::<Result<_>>()?;
        let forest = BoostedForest::from_parts(
            partition.num_bins(),
            doc.n_features,
            stored.base_scores.clone(),
            rounds,
        )?;
        classifiers.push(CoarseClassifier::new(partition, forest)?);
    }
    let model = PrestoModel::from_parts(doc.config, doc.n_features, classifiers)?;
    Ok(match doc.data_schema {
        Some(schema) => model.with_schema(schema),
        None => model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::GbdtParams;
    use crate::intervals::IntervalMethod;
    use crate::loss::LossConfig;

    fn trained_model() -> PrestoModel {
        let features: Vec<f64> = (0..60).flat_map(|i| [i as f64, (i % 5) as f64]).collect();
        let targets: Vec<f64> = (0..60).map(|i| (i as f64).sqrt()).collect();
        let config = PrestoConfig {
            num_classifiers: 2,
            interval: IntervalMethod::RandQuantile {
                num_quantiles: 4,
                extend: None,
            },
            gbdt: GbdtParams {
                max_trees: 8,
                early_stopping_rounds: None,
                min_samples_leaf: 2,
                ..GbdtParams::default()
            },
            loss: LossConfig::StandardCe,
            seed: 17,
        };
        PrestoModel::fit(&features, 2, &targets, None, &config).unwrap()
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let model = trained_model();
        let json = model_to_json(&model).unwrap();
        let loaded = model_from_json(&json).unwrap();
        let probe: Vec<f64> = (0..20).flat_map(|i| [i as f64 * 3.0, 1.0]).collect();
        let a = model.predict_density(&probe, 2).unwrap();
        let b = loaded.predict_density(&probe, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.partition().edges(), y.partition().edges());
            assert_eq!(x.heights(), y.heights());
        }
        // Serialization is canonical: dumping again yields identical bytes.
        assert_eq!(json, model_to_json(&loaded).unwrap());
    }

    #[test]
    fn rejects_wrong_schema_and_shapes() {
        let model = trained_model();
        let json = model_to_json(&model).unwrap();
        let bumped = json.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(matches!(
            model_from_json(&bumped),
            Err(PrestoError::BadModel(_))
        ));
        assert!(model_from_json("{}").is_err());
        let broken = json.replace("\"feature\": 0", "\"feature\": 42");
        assert!(model_from_json(&broken).is_err());
    }
}
