#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "repgn/attention.hpp"
#include "repgn/errors.hpp"
#include "repgn/gcpool.hpp"
#include "repgn/geometry.hpp"
#include "repgn/graph.hpp"
#include "repgn/repgn.hpp"

namespace repgn::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Serialization primitives

/// Shortest text that round-trips is not guaranteed by every reader, so reals
/// are always written with 17 significant digits.
inline std::string format_real(double v) {
  if (!std::isfinite(v))
    throw NumericalFailure("cannot serialize non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline bool is_scalar(const Json &j) { return !j.is_array() && !j.is_object(); }

inline void write_value(std::ostream &os, const Json &j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  if (j.is_number_float()) {
    os << format_real(j.get<double>());
  } else if (is_scalar(j)) {
    os << j.dump();
  } else if (j.is_array()) {
    if (j.empty()) {
      os << "[]";
      return;
    }
    const bool flat = std::all_of(j.begin(), j.end(), [](const Json &e) { return is_scalar(e); });
    if (flat) {
      os << '[';
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k)
          os << ", ";
        write_value(os, j[k], indent + 1);
      }
      os << ']';
      return;
    }
    os << "[\n";
    for (std::size_t k = 0; k < j.size(); ++k) {
      os << inner;
      write_value(os, j[k], indent + 1);
      os << (k + 1 < j.size() ? ",\n" : "\n");
    }
    os << pad << ']';
  } else {
    if (j.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    std::size_t k = 0;
    for (auto it = j.begin(); it != j.end(); ++it, ++k) {
      os << inner << Json(it.key()).dump() << ": ";
      write_value(os, it.value(), indent + 1);
      os << (k + 1 < j.size() ? ",\n" : "\n");
    }
    os << pad << '}';
  }
}

} // namespace detail

inline std::string to_text(const Json &j) {
  std::ostringstream os;
  detail::write_value(os, j, 0);
  os << '\n';
  return os.str();
}

/// FNV-1a 64-bit digest, hex encoded.
inline std::string digest(const std::string &bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes to a sibling temporary file and renames it over the target, so a
/// failed run never leaves a partial file behind.
inline void write_atomic(const std::filesystem::path &path, const std::string &contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw InvalidInput("cannot open " + tmp.string() + " for writing");
    os << contents;
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw InvalidInput("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline Json read_json_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw InvalidInput("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error &e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Field helpers with path context for error messages

namespace detail {

inline const Json &require(const Json &obj, const std::string &key, const std::string &ctx) {
  if (!obj.is_object())
    throw InvalidInput(ctx + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end())
    throw InvalidInput(ctx + "." + key + ": missing");
  return *it;
}

inline double as_real(const Json &j, const std::string &ctx) {
  if (!j.is_number())
    throw InvalidInput(ctx + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v))
    throw InvalidInput(ctx + ": not finite");
  return v;
}

inline std::int64_t as_int(const Json &j, const std::string &ctx) {
  if (!j.is_number_integer())
    throw InvalidInput(ctx + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::vector<double> as_reals(const Json &j, const std::string &ctx) {
  if (!j.is_array())
    throw InvalidInput(ctx + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k)
    out.push_back(as_real(j[k], ctx + "[" + std::to_string(k) + "]"));
  return out;
}

inline Json reals(const Eigen::Ref<const Eigen::VectorXd> &v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k)
    a.push_back(v[k]);
  return a;
}

inline Json matrix_rows(const Eigen::MatrixXd &m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    a.push_back(reals(m.row(r).transpose()));
  return a;
}

inline Eigen::MatrixXd as_matrix(const Json &j, const std::string &ctx, std::optional<Eigen::Index> cols = {}) {
  if (!j.is_array())
    throw InvalidInput(ctx + ": expected an array of rows");
  Eigen::MatrixXd m;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto row = as_reals(j[r], ctx + "[" + std::to_string(r) + "]");
    if (r == 0) {
      if (cols && static_cast<Eigen::Index>(row.size()) != *cols)
        throw InvalidInput(ctx + "[0]: expected " + std::to_string(*cols) + " columns");
      m.resize(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(row.size()));
    } else if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
      throw InvalidInput(ctx + "[" + std::to_string(r) + "]: row length differs from row 0");
    }
    for (std::size_t c = 0; c < row.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  if (j.empty() && cols)
    m.resize(0, *cols);
  return m;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Proposal documents

struct Proposal {
  std::array<double, 4> box{}; // pixels
  std::optional<std::vector<double>> feature;
  std::optional<double> score;

  bool operator==(const Proposal &) const = default;
};

struct ProposalDocument {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Proposal> proposals;

  bool operator==(const ProposalDocument &) const = default;

  std::size_t size() const { return proposals.size(); }

  /// Boxes divided by the image dimensions.
  std::vector<BoundingBox> normalized_boxes() const {
    std::vector<BoundingBox> out;
    out.reserve(proposals.size());
    for (const auto &p : proposals)
      out.emplace_back(p.box[0] / width, p.box[1] / height, p.box[2] / width, p.box[3] / height);
    return out;
  }

  bool has_features() const { return !proposals.empty() && proposals.front().feature.has_value(); }

  /// Stored features, or the 7-dim spatial descriptors when none are stored.
  Eigen::MatrixXd feature_matrix() const {
    if (!has_features()) {
      const auto boxes = normalized_boxes();
      Eigen::MatrixXd m(static_cast<Eigen::Index>(boxes.size()), SpatialDescriptor::size);
      for (std::size_t r = 0; r < boxes.size(); ++r) {
        const auto d = spatial_descriptor(boxes[r]);
        for (std::size_t c = 0; c < SpatialDescriptor::size; ++c)
          m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d.values[c];
      }
      return m;
    }
    const auto dim = static_cast<Eigen::Index>(proposals.front().feature->size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(proposals.size()), dim);
    for (std::size_t r = 0; r < proposals.size(); ++r)
      for (Eigen::Index c = 0; c < dim; ++c)
        m(static_cast<Eigen::Index>(r), c) = (*proposals[r].feature)[static_cast<std::size_t>(c)];
    return m;
  }
};

inline ProposalDocument parse_proposals(const Json &j) {
  const std::string root = "document";
  ProposalDocument doc;
  const auto &id = detail::require(j, "image_id", root);
  if (!id.is_string())
    throw InvalidInput(root + ".image_id: expected a string");
  doc.image_id = id.get<std::string>();
  const auto w = detail::as_int(detail::require(j, "width", root), root + ".width");
  const auto h = detail::as_int(detail::require(j, "height", root), root + ".height");
  if (w <= 0 || h <= 0 || w > INT32_MAX || h > INT32_MAX)
    throw InvalidInput(root + ": width and height must be positive integers");
  doc.width = static_cast<int>(w);
  doc.height = static_cast<int>(h);

  const auto &props = detail::require(j, "proposals", root);
  if (!props.is_array())
    throw InvalidInput(root + ".proposals: expected an array");
  std::optional<std::size_t> dim;
  for (std::size_t k = 0; k < props.size(); ++k) {
    const std::string ctx = "proposals[" + std::to_string(k) + "]";
    Proposal p;
    const auto box = detail::as_reals(detail::require(props[k], "box", ctx), ctx + ".box");
    if (box.size() != 4)
      throw InvalidInput(ctx + ".box: expected [x1, y1, x2, y2]");
    if (!(0.0 <= box[0] && box[0] < box[2] && box[2] <= w) || !(0.0 <= box[1] && box[1] < box[3] && box[3] <= h))
      throw InvalidInput(ctx + ".box: requires 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height");
    std::copy(box.begin(), box.end(), p.box.begin());

    if (auto it = props[k].find("feature"); it != props[k].end() && !it->is_null()) {
      p.feature = detail::as_reals(*it, ctx + ".feature");
      if (p.feature->empty())
        throw InvalidInput(ctx + ".feature: must not be empty");
    }
    const bool first = k == 0;
    if (first) {
      if (p.feature)
        dim = p.feature->size();
    } else if (p.feature.has_value() != dim.has_value()) {
      throw InvalidInput(ctx + ".feature: either every proposal carries a feature or none does");
    } else if (p.feature && p.feature->size() != *dim) {
      throw InvalidInput(ctx + ".feature: dimension " + std::to_string(p.feature->size()) +
                         " differs from proposals[0] (" + std::to_string(*dim) + ")");
    }

    if (auto it = props[k].find("score"); it != props[k].end() && !it->is_null()) {
      const double s = detail::as_real(*it, ctx + ".score");
      if (s < 0.0 || s > 1.0)
        throw InvalidInput(ctx + ".score: must lie in [0,1]");
      p.score = s;
    }
    doc.proposals.push_back(std::move(p));
  }
  return doc;
}

inline ProposalDocument load_proposals(const std::filesystem::path &path) {
  try {
    return parse_proposals(read_json_file(path));
  } catch (const InvalidInput &e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0)
      throw;
    throw InvalidInput(path.string() + ": " + what);
  }
}

inline Json to_json(const ProposalDocument &doc) {
  Json j;
  j["image_id"] = doc.image_id;
  j["width"] = doc.width;
  j["height"] = doc.height;
  Json props = Json::array();
  for (const auto &p : doc.proposals) {
    Json e;
    e["box"] = Json::array({p.box[0], p.box[1], p.box[2], p.box[3]});
    if (p.feature)
      e["feature"] = *p.feature;
    if (p.score)
      e["score"] = *p.score;
    props.push_back(std::move(e));
  }
  j["proposals"] = std::move(props);
  return j;
}

// ---------------------------------------------------------------------------
// Graphs, partitions, features

inline Json to_json(const ProposalGraph &g) {
  Json j;
  j["nodes"] = g.node_count();
  j["node_ids"] = g.node_ids();
  Json edges = Json::array();
  for (const auto &e : g.edges())
    edges.push_back(Json::array({e.i, e.j, e.w}));
  j["edges"] = std::move(edges);
  return j;
}

/// Graph JSON carries structure only; node features are left empty (M x 0).
inline ProposalGraph graph_from_json(const Json &j) {
  const std::string root = "graph";
  const auto m = detail::as_int(detail::require(j, "nodes", root), root + ".nodes");
  if (m < 0)
    throw InvalidInput(root + ".nodes: must be >= 0");
  std::vector<NodeId> ids;
  if (auto it = j.find("node_ids"); it != j.end()) {
    if (!it->is_array() || static_cast<std::int64_t>(it->size()) != m)
      throw InvalidInput(root + ".node_ids: expected " + std::to_string(m) + " ids");
    for (std::size_t k = 0; k < it->size(); ++k)
      ids.push_back(detail::as_int((*it)[k], root + ".node_ids[" + std::to_string(k) + "]"));
  } else {
    for (std::int64_t k = 0; k < m; ++k)
      ids.push_back(k);
  }
  std::vector<Edge> edges;
  const auto &ej = detail::require(j, "edges", root);
  if (!ej.is_array())
    throw InvalidInput(root + ".edges: expected an array");
  for (std::size_t k = 0; k < ej.size(); ++k) {
    const std::string ctx = root + ".edges[" + std::to_string(k) + "]";
    if (!ej[k].is_array() || ej[k].size() != 3)
      throw InvalidInput(ctx + ": expected [i, j, w]");
    edges.push_back({static_cast<int>(detail::as_int(ej[k][0], ctx + "[0]")),
                     static_cast<int>(detail::as_int(ej[k][1], ctx + "[1]")), detail::as_real(ej[k][2], ctx + "[2]")});
  }
  return ProposalGraph(std::move(ids), Eigen::MatrixXd(m, 0), std::move(edges));
}

inline Json to_json(const PseudoLabeling &labeling, const std::vector<CoarseNode> &coarse) {
  Json j;
  Json labels = Json::array();
  for (const auto &l : labeling.labels)
    labels.push_back(l ? Json(*l) : Json(nullptr));
  j["labels"] = std::move(labels);
  Json cj = Json::array();
  for (const auto &c : coarse) {
    Json e;
    e["feature"] = detail::reals(c.feature);
    e["members"] = c.member_ids;
    cj.push_back(std::move(e));
  }
  j["coarse"] = std::move(cj);
  return j;
}

inline Json features_to_json(const std::vector<NodeId> &ids, const Eigen::MatrixXd &features) {
  Json j;
  j["ids"] = ids;
  j["features"] = detail::matrix_rows(features);
  return j;
}

// ---------------------------------------------------------------------------
// Configuration and parameters

inline const char *to_string(NormMode m) { return m == NormMode::literal ? "literal" : "moment_match"; }
inline const char *to_string(NormStats s) { return s == NormStats::global ? "global" : "per_channel"; }

inline Json to_json(const RepGNConfig &c) {
  Json j;
  j["iou_thr"] = c.iou_thr;
  j["min_size"] = c.min_size;
  j["stop_ncut"] = c.stop_ncut;
  j["min_part"] = c.min_part;
  j["lambda"] = c.lambda;
  j["epsilon"] = c.epsilon;
  j["head_count"] = c.head_count;
  j["layers"] = c.layers;
  j["norm_mode"] = to_string(c.norm_mode);
  j["norm_stats"] = to_string(c.norm_stats);
  j["dense_attention"] = c.dense_attention;
  j["iou_bias"] = c.iou_bias;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["eigen_tolerance"] = c.eigen_tolerance;
  j["eigen_max_iterations"] = c.eigen_max_iterations;
  return j;
}

/// Overlays the keys present in j onto base. Unknown keys are rejected.
inline RepGNConfig apply_config(RepGNConfig c, const Json &j) {
  if (!j.is_object())
    throw InvalidInput("config: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string &k = it.key();
    const Json &v = it.value();
    const std::string ctx = "config." + k;
    auto boolean = [&] {
      if (!v.is_boolean())
        throw InvalidInput(ctx + ": expected true or false");
      return v.get<bool>();
    };
    auto non_negative = [&] {
      const auto x = detail::as_int(v, ctx);
      if (x < 0)
        throw InvalidInput(ctx + ": must be >= 0");
      return x;
    };
    if (k == "iou_thr")
      c.iou_thr = detail::as_real(v, ctx);
    else if (k == "min_size")
      c.min_size = static_cast<int>(detail::as_int(v, ctx));
    else if (k == "stop_ncut")
      c.stop_ncut = detail::as_real(v, ctx);
    else if (k == "min_part")
      c.min_part = static_cast<int>(detail::as_int(v, ctx));
    else if (k == "lambda")
      c.lambda = detail::as_real(v, ctx);
    else if (k == "epsilon")
      c.epsilon = detail::as_real(v, ctx);
    else if (k == "head_count")
      c.head_count = static_cast<int>(detail::as_int(v, ctx));
    else if (k == "layers")
      c.layers = static_cast<int>(detail::as_int(v, ctx));
    else if (k == "norm_mode") {
      const auto s = v.is_string() ? v.get<std::string>() : std::string{};
      if (s == "literal")
        c.norm_mode = NormMode::literal;
      else if (s == "moment_match")
        c.norm_mode = NormMode::moment_match;
      else
        throw InvalidInput(ctx + ": expected \"literal\" or \"moment_match\"");
    } else if (k == "norm_stats") {
      const auto s = v.is_string() ? v.get<std::string>() : std::string{};
      if (s == "global")
        c.norm_stats = NormStats::global;
      else if (s == "per_channel")
        c.norm_stats = NormStats::per_channel;
      else
        throw InvalidInput(ctx + ": expected \"global\" or \"per_channel\"");
    } else if (k == "dense_attention")
      c.dense_attention = boolean();
    else if (k == "iou_bias")
      c.iou_bias = boolean();
    else if (k == "seed")
      c.seed = static_cast<std::uint64_t>(non_negative());
    else if (k == "threads")
      c.threads = static_cast<unsigned>(non_negative());
    else if (k == "eigen_tolerance")
      c.eigen_tolerance = detail::as_real(v, ctx);
    else if (k == "eigen_max_iterations")
      c.eigen_max_iterations = static_cast<int>(detail::as_int(v, ctx));
    else
      throw InvalidInput(ctx + ": unknown configuration key");
  }
  return c;
}

inline Json to_json(const std::vector<AttentionParams> &layers) {
  Json arr = Json::array();
  for (const auto &p : layers) {
    Json lj;
    lj["dim"] = p.dim;
    Json heads = Json::array();
    for (const auto &h : p.heads) {
      Json hj;
      hj["score_weights"] = detail::reals(h.score_weights);
      hj["score_bias"] = h.score_bias;
      heads.push_back(std::move(hj));
    }
    lj["heads"] = std::move(heads);
    lj["projection"] = p.projection ? detail::matrix_rows(*p.projection) : Json(nullptr);
    arr.push_back(std::move(lj));
  }
  Json j;
  j["layers"] = std::move(arr);
  return j;
}

inline std::vector<AttentionParams> params_from_json(const Json &j) {
  const auto &arr = detail::require(j, "layers", "params");
  if (!arr.is_array() || arr.empty())
    throw InvalidInput("params.layers: expected a non-empty array");
  std::vector<AttentionParams> out;
  for (std::size_t l = 0; l < arr.size(); ++l) {
    const std::string ctx = "params.layers[" + std::to_string(l) + "]";
    AttentionParams p;
    p.dim = static_cast<int>(detail::as_int(detail::require(arr[l], "dim", ctx), ctx + ".dim"));
    const auto &heads = detail::require(arr[l], "heads", ctx);
    if (!heads.is_array())
      throw InvalidInput(ctx + ".heads: expected an array");
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const std::string hc = ctx + ".heads[" + std::to_string(h) + "]";
      AttentionHead head;
      const auto w = detail::as_reals(detail::require(heads[h], "score_weights", hc), hc + ".score_weights");
      head.score_weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      head.score_bias = detail::as_real(detail::require(heads[h], "score_bias", hc), hc + ".score_bias");
      p.heads.push_back(std::move(head));
    }
    if (auto it = arr[l].find("projection"); it != arr[l].end() && !it->is_null())
      p.projection = detail::as_matrix(*it, ctx + ".projection");
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace repgn::io
