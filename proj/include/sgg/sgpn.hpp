#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgg/autodiff.hpp"
#include "sgg/error.hpp"
#include "sgg/geometry.hpp"
#include "sgg/graph.hpp"
#include "sgg/graph_io.hpp"
#include "sgg/metrics.hpp"
#include "sgg/rng.hpp"
#include "sgg/scores.hpp"

namespace sgg::sgpn {

enum class ClassifyFrom : std::uint8_t { pointnet, gcn };

struct ModelConfig {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  std::vector<std::size_t> point_widths{64, 128, 256};  // shared per-point layers
  std::size_t feature_width = 256;
  std::size_t gcn_layers = 5;
  std::size_t head_hidden = 256;
  std::size_t points_per_set = 256;
  bool use_gcn = true;  // false: PointNet features go straight to the heads
  ClassifyFrom classify_from = ClassifyFrom::pointnet;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lambda_obj = 0.1;
  double gamma = 2.0;
  double alpha_pred = 0.25;
  double learning_rate = 1e-4;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t val_predicate_k = 3;
  std::size_t val_object_k = 5;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"classes", c.classes},
          {"predicates", c.predicates},
          {"point_widths", c.point_widths},
          {"feature_width", c.feature_width},
          {"gcn_layers", c.gcn_layers},
          {"head_hidden", c.head_hidden},
          {"points_per_set", c.points_per_set},
          {"use_gcn", c.use_gcn},
          {"classify_from", c.classify_from == ClassifyFrom::gcn ? "gcn" : "pointnet"},
          {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_obj", c.lambda_obj}, {"gamma", c.gamma},   {"alpha_pred", c.alpha_pred},       {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},         {"seed", c.seed},     {"val_predicate_k", c.val_predicate_k}, {"val_object_k", c.val_object_k}};
}

namespace detail {

template <class V>
void read_field(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(where + "." + key + ": " + ex.what());
  }
}

}  // namespace detail

/// Missing keys keep their defaults; wrong types and invalid values raise
/// ConfigError naming the field.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  detail::read_field(j, "classes", c.classes, "model");
  detail::read_field(j, "predicates", c.predicates, "model");
  detail::read_field(j, "point_widths", c.point_widths, "model");
  detail::read_field(j, "feature_width", c.feature_width, "model");
  detail::read_field(j, "gcn_layers", c.gcn_layers, "model");
  detail::read_field(j, "head_hidden", c.head_hidden, "model");
  detail::read_field(j, "points_per_set", c.points_per_set, "model");
  detail::read_field(j, "use_gcn", c.use_gcn, "model");
  detail::read_field(j, "seed", c.seed, "model");
  std::string from = c.classify_from == ClassifyFrom::gcn ? "gcn" : "pointnet";
  detail::read_field(j, "classify_from", from, "model");
  if (from == "gcn")
    c.classify_from = ClassifyFrom::gcn;
  else if (from == "pointnet")
    c.classify_from = ClassifyFrom::pointnet;
  else
    throw ConfigError("model.classify_from: expected 'gcn' or 'pointnet'");
  if (c.point_widths.empty()) throw ConfigError("model.point_widths: need at least one layer");
  for (auto w : c.point_widths)
    if (w == 0) throw ConfigError("model.point_widths: widths must be positive");
  if (c.feature_width == 0) throw ConfigError("model.feature_width: must be positive");
  if (c.head_hidden == 0) throw ConfigError("model.head_hidden: must be positive");
  if (c.points_per_set == 0) throw ConfigError("model.points_per_set: must be positive");
  return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  detail::read_field(j, "lambda_obj", c.lambda_obj, "train");
  detail::read_field(j, "gamma", c.gamma, "train");
  detail::read_field(j, "alpha_pred", c.alpha_pred, "train");
  detail::read_field(j, "learning_rate", c.learning_rate, "train");
  detail::read_field(j, "epochs", c.epochs, "train");
  detail::read_field(j, "seed", c.seed, "train");
  detail::read_field(j, "val_predicate_k", c.val_predicate_k, "train");
  detail::read_field(j, "val_object_k", c.val_object_k, "train");
  if (c.lambda_obj < 0) throw ConfigError("train.lambda_obj: must be >= 0");
  if (c.gamma < 0) throw ConfigError("train.gamma: must be >= 0");
  if (!(c.alpha_pred > 0 && c.alpha_pred < 1)) throw ConfigError("train.alpha_pred: must be in (0, 1)");
  if (!(c.learning_rate > 0)) throw ConfigError("train.learning_rate: must be > 0");
  return c;
}

/// Weights and layout of the prediction network.
template <class T>
class Model {
 public:
  using Mat = ad::Matrix<T>;

  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.classes.empty()) throw VocabularyError("model needs at least one object class");
    if (cfg_.predicates.empty()) throw VocabularyError("model needs at least one predicate");
    Rng rng(Rng::mix(cfg_.seed, 0x5e11));
    const std::size_t f = cfg_.feature_width;
    auto encoder = [&](const std::string& prefix, std::size_t in) {
      for (std::size_t k = 0; k < cfg_.point_widths.size(); ++k) {
        add_linear(prefix + "." + std::to_string(k), in, cfg_.point_widths[k], rng);
        in = cfg_.point_widths[k];
      }
      add_linear(prefix + ".proj", in, f, rng);
    };
    encoder("node_enc", 3);
    encoder("edge_enc", 4);
    if (cfg_.use_gcn) {
      for (std::size_t l = 0; l < cfg_.gcn_layers; ++l) {
        add_linear("gcn." + std::to_string(l) + ".g1", 3 * f, 3 * f, rng);
        add_linear("gcn." + std::to_string(l) + ".g2", f, f, rng);
      }
    }
    for (const std::string head : {"obj_head", "pred_head"}) {
      for (std::size_t k = 0; k < 2; ++k) {
        const std::string layer = head + "." + std::to_string(k);
        add_linear(layer + ".fc", k == 0 ? f : cfg_.head_hidden, cfg_.head_hidden, rng);
        add_param(layer + ".ln.gain", Mat::Ones(1, static_cast<Eigen::Index>(cfg_.head_hidden)));
        add_param(layer + ".ln.bias", Mat::Zero(1, static_cast<Eigen::Index>(cfg_.head_hidden)));
      }
      add_linear(head + ".out", cfg_.head_hidden, head == "obj_head" ? cfg_.classes.size() : cfg_.predicates.size(), rng);
    }
  }

  Model(const Model& o) : cfg_(o.cfg_), params_(o.params_) { reindex(); }
  Model& operator=(const Model& o) {
    cfg_ = o.cfg_;
    params_ = o.params_;
    reindex();
    return *this;
  }
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::vector<ad::Parameter<T>>& parameters() { return params_; }
  const std::vector<ad::Parameter<T>>& parameters() const { return params_; }

  std::vector<ad::Parameter<T>*> parameter_ptrs() {
    std::vector<ad::Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.data.size());
    return n;
  }

  ad::Parameter<T>& parameter(const std::string& name) { return params_[index_at(name)]; }
  const ad::Parameter<T>& parameter(const std::string& name) const { return params_[index_at(name)]; }
  bool has_parameter(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  std::size_t index_at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("model has no parameter '" + name + "'");
    return it->second;
  }

  void add_param(const std::string& name, Mat value) {
    index_[name] = params_.size();
    params_.push_back({name, ad::TensorValue<T>(std::move(value)), {}, {}});
  }

  /// Uniform init in +-sqrt(1 / fan_in) for weights and biases.
  void add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    // He-uniform weights keep activation variance constant through ReLU stacks;
    // nonzero biases keep an all-zero input row off the ReLU kink
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    const double bias_bound = std::sqrt(1.0 / static_cast<double>(in));
    Mat w(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    Mat b(1, static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<T>(rng.uniform(-bias_bound, bias_bound));
    add_param(name + ".w", std::move(w));
    add_param(name + ".b", std::move(b));
  }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
  }

  ModelConfig cfg_;
  std::vector<ad::Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Network input for one scene: `points_per_set` sampled rows per node (x, y,
/// z centered on the instance) and per ordered pair (x, y, z centered on the
/// pair context, plus the channel value 0/1/2).
template <class T>
struct SceneInput {
  std::vector<NodeId> nodes;
  std::vector<EdgeKey> pairs;
  std::vector<std::size_t> subject_index;
  std::vector<std::size_t> object_index;
  std::size_t points_per_set = 0;
  ad::Matrix<T> node_points;
  ad::Matrix<T> edge_points;
};

/// Indices of a uniform sample of size k from n items: without replacement
/// when n >= k, otherwise every item once plus k - n draws with replacement.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  if (n == 0) throw EmptyPointSet("cannot sample from an empty point set");
  std::vector<std::size_t> out;
  out.reserve(k);
  if (n >= k) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(n - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    while (out.size() < k) out.push_back(rng.index(n));
  }
  return out;
}

template <class T>
SceneInput<T> prepare_input(const Scene& scene, std::size_t points_per_set, Rng& rng) {
  SceneInput<T> in;
  for (NodeId id : scene.instance_ids())
    if (!scene.indices(id).empty()) in.nodes.push_back(id);
  if (in.nodes.size() < 2) throw TooFewInstances("scene '" + scene.scene_id() + "' has fewer than 2 instances with points");
  const std::size_t n = in.nodes.size();
  const std::size_t s = points_per_set;
  in.points_per_set = s;
  in.node_points.resize(static_cast<Eigen::Index>(n * s), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const PointSet pts = instance_points(scene, in.nodes[i]);
    const Vec3 c = centroid(pts);
    const auto idx = sample_indices(pts.size(), s, rng);
    for (std::size_t k = 0; k < s; ++k) {
      const Vec3 p = pts[idx[k]] - c;
      in.node_points.row(static_cast<Eigen::Index>(i * s + k)) << static_cast<T>(p.x()), static_cast<T>(p.y()), static_cast<T>(p.z());
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        in.pairs.push_back({in.nodes[i], in.nodes[j]});
        in.subject_index.push_back(i);
        in.object_index.push_back(j);
      }
  in.edge_points.resize(static_cast<Eigen::Index>(in.pairs.size() * s), 4);
  for (std::size_t e = 0; e < in.pairs.size(); ++e) {
    const PairPoints pp = pair_points(scene, in.pairs[e].first, in.pairs[e].second);
    const Vec3 c = centroid(pp.points);
    const auto idx = sample_indices(pp.points.size(), s, rng);
    for (std::size_t k = 0; k < s; ++k) {
      const Vec3 p = pp.points[idx[k]] - c;
      in.edge_points.row(static_cast<Eigen::Index>(e * s + k)) << static_cast<T>(p.x()), static_cast<T>(p.y()), static_cast<T>(p.z()),
          static_cast<T>(pp.channel[idx[k]]);
    }
  }
  return in;
}

template <class T>
using Var = typename ad::Tape<T>::Var;

template <class T>
Var<T> apply_linear(ad::Tape<T>& tape, Model<T>& m, const std::string& name, Var<T> x) {
  return tape.linear(x, tape.param(m.parameter(name + ".w")), tape.param(m.parameter(name + ".b")));
}

/// Shared per-point layers with ReLU, max-pool over each block of `block`
/// rows, then a linear projection to the feature width.
template <class T>
Var<T> point_encoder(ad::Tape<T>& tape, Model<T>& m, const std::string& prefix, Var<T> points, Eigen::Index block) {
  Var<T> h = points;
  for (std::size_t k = 0; k < m.config().point_widths.size(); ++k) h = tape.relu(apply_linear(tape, m, prefix + "." + std::to_string(k), h));
  return apply_linear(tape, m, prefix + ".proj", tape.segment_max(h, block));
}

/// Two (linear, layer norm, ReLU) blocks, then a linear layer: logits per row.
template <class T>
Var<T> head(ad::Tape<T>& tape, Model<T>& m, const std::string& prefix, Var<T> x) {
  Var<T> h = x;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::string layer = prefix + "." + std::to_string(k);
    h = apply_linear(tape, m, layer + ".fc", h);
    h = tape.relu(tape.layer_norm(h, tape.param(m.parameter(layer + ".ln.gain")), tape.param(m.parameter(layer + ".ln.bias"))));
  }
  return apply_linear(tape, m, prefix + ".out", h);
}

template <class T>
struct GcnLayerOutput {
  Var<T> nodes;  // phi^(l+1)
  Var<T> edges;  // phi_p^(l+1)
  Var<T> rho;    // aggregated node messages
};

/// One triplet message-passing layer: g1 maps [phi_s, phi_p, phi_o] to
/// [psi_s, phi_p', psi_o]; rho averages psi over every triplet a node takes
/// part in (zero for isolated nodes); phi' = phi + g2(rho).
template <class T>
GcnLayerOutput<T> gcn_layer(ad::Tape<T>& tape, Model<T>& m, std::size_t layer, Var<T> nodes, Var<T> edges,
                            const std::vector<std::size_t>& subj, const std::vector<std::size_t>& obj) {
  const auto f = static_cast<Eigen::Index>(m.config().feature_width);
  const std::string name = "gcn." + std::to_string(layer);
  const Var<T> triplet = tape.concat_cols({tape.gather_rows(nodes, subj), edges, tape.gather_rows(nodes, obj)});
  const Var<T> out = tape.relu(apply_linear(tape, m, name + ".g1", triplet));
  const Var<T> psi_s = tape.slice_cols(out, 0, f);
  const Var<T> new_edges = tape.slice_cols(out, f, f);
  const Var<T> psi_o = tape.slice_cols(out, 2 * f, f);
  const auto n = static_cast<std::size_t>(tape.value(nodes).rows());
  const Var<T> rho = tape.mean_aggregate(psi_s, psi_o, subj, obj, n);
  const Var<T> update = tape.relu(apply_linear(tape, m, name + ".g2", rho));
  return {tape.add(nodes, update), new_edges, rho};
}

template <class T>
struct ForwardVars {
  Var<T> node_features;  // PointNet phi_n
  Var<T> edge_features;  // PointNet phi_r
  Var<T> node_out;
  Var<T> edge_out;
  Var<T> object_logits;
  Var<T> predicate_logits;
};

template <class T>
ForwardVars<T> forward_vars(ad::Tape<T>& tape, Model<T>& m, const SceneInput<T>& in) {
  const auto block = static_cast<Eigen::Index>(in.points_per_set);
  ForwardVars<T> v;
  v.node_features = point_encoder(tape, m, "node_enc", tape.constant(in.node_points), block);
  v.edge_features = point_encoder(tape, m, "edge_enc", tape.constant(in.edge_points), block);
  v.node_out = v.node_features;
  v.edge_out = v.edge_features;
  if (m.config().use_gcn) {
    for (std::size_t l = 0; l < m.config().gcn_layers; ++l) {
      auto o = gcn_layer(tape, m, l, v.node_out, v.edge_out, in.subject_index, in.object_index);
      v.node_out = o.nodes;
      v.edge_out = o.edges;
    }
  }
  const bool from_gcn = m.config().use_gcn && m.config().classify_from == ClassifyFrom::gcn;
  v.object_logits = head(tape, m, "obj_head", from_gcn ? v.node_out : v.node_features);
  v.predicate_logits = head(tape, m, "pred_head", v.edge_out);
  return v;
}

template <class T>
PredictionScores scores_from_logits(const ModelConfig& cfg, const SceneInput<T>& in, const ad::Matrix<T>& obj, const ad::Matrix<T>& pred) {
  PredictionScores s;
  s.classes = cfg.classes;
  s.predicates = cfg.predicates;
  s.nodes = in.nodes;
  s.pairs = in.pairs;
  s.object_probs.resize(obj.rows(), obj.cols());
  for (Eigen::Index r = 0; r < obj.rows(); ++r) {
    const Eigen::RowVectorXd z = obj.row(r).template cast<double>();
    const Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
    s.object_probs.row(r) = e / e.sum();
  }
  s.predicate_probs.resize(pred.rows(), pred.cols());
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) s.predicate_probs(r, c) = ad::Tape<double>::sigmoid(static_cast<double>(pred(r, c)));
  return s;
}

template <class T>
PredictionScores forward(Model<T>& m, const SceneInput<T>& in) {
  ad::Tape<T> tape;
  const auto v = forward_vars(tape, m, in);
  return scores_from_logits(m.config(), in, tape.value(v.object_logits), tape.value(v.predicate_logits));
}

/// Deterministic inference: point sampling uses a fixed stream of the model seed.
template <class T>
PredictionScores forward(Model<T>& m, const Scene& scene) {
  Rng rng(Rng::mix(m.config().seed, 0x1f3e));
  return forward(m, prepare_input<T>(scene, m.config().points_per_set, rng));
}

/// Feature vector of one centered point set (all rows, no sampling).
template <class T>
ad::Matrix<T> encode_node(Model<T>& m, const PointSet& centered) {
  if (centered.empty()) throw EmptyPointSet("node encoder needs at least one point");
  ad::Matrix<T> x(static_cast<Eigen::Index>(centered.size()), 3);
  for (std::size_t k = 0; k < centered.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = centered[k].cast<T>().transpose();
  ad::Tape<T> tape;
  return tape.value(point_encoder(tape, m, "node_enc", tape.constant(x), x.rows()));
}

template <class T>
ad::Matrix<T> encode_edge(Model<T>& m, const PointSet& centered, const std::vector<int>& channel) {
  if (centered.empty()) throw EmptyPointSet("edge encoder needs at least one point");
  if (channel.size() != centered.size()) throw ShapeMismatch("edge encoder: one channel value per point");
  ad::Matrix<T> x(static_cast<Eigen::Index>(centered.size()), 4);
  for (std::size_t k = 0; k < centered.size(); ++k)
    x.row(static_cast<Eigen::Index>(k)) << static_cast<T>(centered[k].x()), static_cast<T>(centered[k].y()), static_cast<T>(centered[k].z()),
        static_cast<T>(channel[k]);
  ad::Tape<T> tape;
  return tape.value(point_encoder(tape, m, "edge_enc", tape.constant(x), x.rows()));
}

/// Training targets aligned with a SceneInput.
struct GroundTruth {
  std::vector<std::size_t> labels;     // class index per node
  Eigen::MatrixXd predicate_targets;   // pairs x predicates, 0/1
};

inline GroundTruth ground_truth(const ModelConfig& cfg, const std::vector<NodeId>& nodes, const std::vector<EdgeKey>& pairs, const SceneGraph& gt) {
  GroundTruth out;
  for (NodeId id : nodes) {
    if (!gt.contains(id)) throw ShapeMismatch("ground truth has no node " + std::to_string(id));
    const auto& label = gt.node(id).label();
    auto it = std::find(cfg.classes.begin(), cfg.classes.end(), label);
    if (it == cfg.classes.end()) throw VocabularyError("class '" + label + "' is not in the model vocabulary");
    out.labels.push_back(static_cast<std::size_t>(it - cfg.classes.begin()));
  }
  if (gt.nodes().size() != nodes.size()) throw ShapeMismatch("ground truth and scores cover different nodes");
  out.predicate_targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(cfg.predicates.size()));
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const Edge* edge = gt.find_edge(pairs[e].first, pairs[e].second);
    if (!edge) continue;
    for (std::size_t p = 0; p < cfg.predicates.size(); ++p)
      if (edge->predicates.count(cfg.predicates[p])) out.predicate_targets(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(p)) = 1.0;
  }
  return out;
}

/// Normalized inverse class frequency: alpha_c proportional to 1 / (n_c + 1),
/// scaled to mean 1 over the vocabulary.
inline std::vector<double> inverse_frequency_alpha(const std::vector<std::string>& classes, const std::vector<const SceneGraph*>& graphs) {
  std::vector<double> count(classes.size(), 0.0);
  for (const SceneGraph* g : graphs)
    for (const auto& [id, node] : g->nodes()) {
      auto it = std::find(classes.begin(), classes.end(), node.label());
      if (it != classes.end()) count[static_cast<std::size_t>(it - classes.begin())] += 1.0;
    }
  std::vector<double> alpha(classes.size());
  double sum = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) sum += alpha[c] = 1.0 / (count[c] + 1.0);
  for (auto& a : alpha) a *= static_cast<double>(classes.size()) / sum;
  return alpha;
}

inline constexpr double kProbabilityClamp = 1e-12;

/// lambda_obj * L_obj + L_pred evaluated on probabilities. L_obj is the mean
/// multiclass focal loss over nodes with per-class alpha; L_pred sums the
/// binary focal loss over predicates and averages over ordered pairs, with
/// alpha for positives and 1 - alpha for negatives. Probabilities are
/// clamped to [1e-12, 1].
inline double total_loss(const PredictionScores& s, const SceneGraph& gt, const std::vector<double>& class_alpha, const TrainConfig& cfg) {
  if (static_cast<Eigen::Index>(s.nodes.size()) != s.object_probs.rows() || static_cast<Eigen::Index>(s.pairs.size()) != s.predicate_probs.rows())
    throw ShapeMismatch("scores: row counts do not match node/pair lists");
  if (class_alpha.size() != s.classes.size()) throw ShapeMismatch("one alpha per class required");
  ModelConfig vocab;
  vocab.classes = s.classes;
  vocab.predicates = s.predicates;
  const GroundTruth truth = ground_truth(vocab, s.nodes, s.pairs, gt);
  auto clamp = [](double p) { return std::clamp(p, kProbabilityClamp, 1.0); };
  double l_obj = 0;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const std::size_t y = truth.labels[i];
    l_obj += focal_loss(clamp(s.object_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y))), class_alpha[y], cfg.gamma);
  }
  l_obj /= static_cast<double>(std::max<std::size_t>(s.nodes.size(), 1));
  double l_pred = 0;
  for (Eigen::Index e = 0; e < s.predicate_probs.rows(); ++e)
    for (Eigen::Index p = 0; p < s.predicate_probs.cols(); ++p) {
      const bool pos = truth.predicate_targets(e, p) > 0.5;
      const double q = s.predicate_probs(e, p);
      l_pred += focal_loss(clamp(pos ? q : 1.0 - q), pos ? cfg.alpha_pred : 1.0 - cfg.alpha_pred, cfg.gamma);
    }
  l_pred /= static_cast<double>(std::max<Eigen::Index>(s.predicate_probs.rows(), 1));
  return cfg.lambda_obj * l_obj + l_pred;
}

/// The same loss recorded on a tape, from logits.
template <class T>
Var<T> loss_var(ad::Tape<T>& tape, const ForwardVars<T>& v, const GroundTruth& truth, const std::vector<double>& class_alpha, const TrainConfig& cfg) {
  std::vector<T> alpha(class_alpha.begin(), class_alpha.end());
  const Var<T> l_obj = tape.softmax_focal(v.object_logits, truth.labels, alpha, static_cast<T>(cfg.gamma));
  const Var<T> l_pred =
      tape.sigmoid_focal(v.predicate_logits, truth.predicate_targets.cast<T>(), static_cast<T>(cfg.alpha_pred), static_cast<T>(cfg.gamma));
  return tape.add(tape.scale(l_obj, static_cast<T>(cfg.lambda_obj)), l_pred);
}

/// Forward, loss and backward for one scene; gradients accumulate into the
/// model parameters. Returns the loss value.
template <class T>
double accumulate_gradients(Model<T>& m, const SceneInput<T>& in, const GroundTruth& truth, const std::vector<double>& class_alpha,
                            const TrainConfig& cfg) {
  ad::Tape<T> tape;
  const auto v = forward_vars(tape, m, in);
  const Var<T> loss = loss_var(tape, v, truth, class_alpha, cfg);
  tape.backward(loss);
  return static_cast<double>(tape.value(loss)(0, 0));
}

struct Sample {
  Scene scene;
  SceneGraph graph;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_predicate_recall;
  std::optional<double> val_object_recall;
};

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
  j["val_predicate_recall"] = e.val_predicate_recall ? nlohmann::json(*e.val_predicate_recall) : nlohmann::json(nullptr);
  j["val_object_recall"] = e.val_object_recall ? nlohmann::json(*e.val_object_recall) : nlohmann::json(nullptr);
  return j;
}

/// Sorted class and predicate vocabularies of a dataset.
inline std::pair<std::vector<std::string>, std::vector<std::string>> vocabulary_of(const std::vector<Sample>& data) {
  std::set<std::string> classes, predicates;
  for (const auto& s : data) {
    for (const auto& [id, n] : s.graph.nodes()) classes.insert(n.label());
    for (const auto& [k, e] : s.graph.edges()) predicates.insert(e.predicates.begin(), e.predicates.end());
  }
  return {{classes.begin(), classes.end()}, {predicates.begin(), predicates.end()}};
}

struct TrainResult {
  Model<float> model;
  std::vector<EpochLog> log;
  std::vector<double> class_alpha;
};

/// Recall of a model over a labeled split, pooled over scenes.
template <class T>
std::pair<RecallCount, RecallCount> evaluate_recall(Model<T>& m, const std::vector<Sample>& data, std::size_t predicate_k, std::size_t object_k) {
  RecallCount pred, obj;
  for (const auto& s : data) {
    const PredictionScores sc = forward(m, s.scene);
    pred += predicate_hits(sc, s.graph, predicate_k);
    obj += object_hits(sc, s.graph, object_k);
  }
  return {pred, obj};
}

/// Adam on one scene per step, scenes shuffled every epoch. Deterministic
/// given the two seeds.
inline TrainResult train(const std::vector<Sample>& data, const std::vector<Sample>& validation, const ModelConfig& model_cfg,
                         const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw EmptyDataset("training needs at least one scene");
  TrainResult out{Model<float>(model_cfg), {}, {}};
  std::vector<const SceneGraph*> graphs;
  for (const auto& s : data) graphs.push_back(&s.graph);
  out.class_alpha = inverse_frequency_alpha(model_cfg.classes, graphs);
  ad::Adam<float> adam(ad::AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  const auto params = out.model.parameter_ptrs();
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, epoch));
    rng.shuffle(order);
    double sum = 0;
    for (std::size_t i : order) {
      const auto in = prepare_input<float>(data[i].scene, model_cfg.points_per_set, rng);
      const GroundTruth truth = ground_truth(model_cfg, in.nodes, in.pairs, data[i].graph);
      sum += accumulate_gradients(out.model, in, truth, out.class_alpha, cfg);
      adam.step(params);
    }
    EpochLog log{epoch + 1, sum / static_cast<double>(data.size()), std::nullopt, std::nullopt};
    if (!validation.empty()) {
      const auto [pred, obj] = evaluate_recall(out.model, validation, cfg.val_predicate_k, cfg.val_object_k);
      log.val_predicate_recall = pred.recall();
      log.val_object_recall = obj.recall();
    }
    out.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return out;
}

inline constexpr const char* kCheckpointFormat = "sgg-sgpn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Checkpoint JSON: {"format", "version", "config", "train" (optional),
/// "parameters": [{"name", "rows", "cols", "data": [row-major values]}]}.
template <class T>
nlohmann::json checkpoint_to_json(const Model<T>& m, const std::optional<TrainConfig>& train_cfg = std::nullopt) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : m.parameters()) {
    std::vector<double> data(p.value.data.data(), p.value.data.data() + p.value.data.size());
    params.push_back({{"name", p.name}, {"rows", p.value.data.rows()}, {"cols", p.value.data.cols()}, {"data", data}});
  }
  nlohmann::json j = {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"config", to_json(m.config())}, {"parameters", params}};
  if (train_cfg) j["train"] = to_json(*train_cfg);
  return j;
}

template <class T = float>
Model<T> checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ParseError("not an SGPN checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ParseError("unsupported checkpoint version");
    Model<T> m(model_config_from_json(j.at("config")));
    std::set<std::string> seen;
    for (const auto& p : j.at("parameters")) {
      const auto name = p.at("name").get<std::string>();
      if (!m.has_parameter(name)) throw ParseError("checkpoint parameter '" + name + "' does not belong to this architecture");
      auto& dst = m.parameter(name).value.data;
      const auto rows = p.at("rows").get<Eigen::Index>();
      const auto cols = p.at("cols").get<Eigen::Index>();
      const auto data = p.at("data").get<std::vector<double>>();
      if (rows != dst.rows() || cols != dst.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ParseError("checkpoint parameter '" + name + "' has the wrong shape");
      for (Eigen::Index k = 0; k < dst.size(); ++k) dst.data()[k] = static_cast<T>(data[static_cast<std::size_t>(k)]);
      seen.insert(name);
    }
    if (seen.size() != m.parameters().size()) throw ParseError("checkpoint is missing parameters");
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("checkpoint: ") + ex.what());
  }
}

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path, const std::optional<TrainConfig>& train_cfg = std::nullopt) {
  write_text_file(path, checkpoint_to_json(m, train_cfg).dump() + "\n");
}

template <class T = float>
Model<T> load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("checkpoint " + path + ": " + ex.what());
  }
  return checkpoint_from_json<T>(j);
}

}  // namespace sgg::sgpn
