#include "hnd/hypergraph.hpp"

#include "hnd/error.hpp"
#include "hnd/format.hpp"
#include "hnd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace hnd {

namespace {

std::string edge_label(std::size_t e) { return "edge " + std::to_string(e); }

PairIndex build_pair_index(Index n, const std::vector<std::vector<Index>>& edges) {
  PairIndex index;
  index.edge_offsets.reserve(edges.size() + 1);
  index.edge_offsets.push_back(0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    for (Index v : edges[e]) index.pairs.push_back({static_cast<Index>(e), v});
    index.edge_offsets.push_back(static_cast<Index>(index.pairs.size()));
  }

  std::vector<Index> counts(static_cast<std::size_t>(n), 0);
  for (const Pair& p : index.pairs) ++counts[static_cast<std::size_t>(p.node)];
  index.node_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index v = 0; v < n; ++v) {
    index.node_offsets[static_cast<std::size_t>(v) + 1] =
        index.node_offsets[static_cast<std::size_t>(v)] + counts[static_cast<std::size_t>(v)];
  }
  index.node_pairs.resize(index.pairs.size());
  std::vector<Index> cursor(index.node_offsets.begin(), index.node_offsets.end() - 1);
  for (Index p = 0; p < index.size(); ++p) {
    const auto v = static_cast<std::size_t>(index.pairs[static_cast<std::size_t>(p)].node);
    index.node_pairs[static_cast<std::size_t>(cursor[v]++)] = p;
  }
  return index;
}

}  // namespace

Hypergraph Hypergraph::create(Index node_count, std::vector<std::vector<Index>> edges,
                              std::vector<double> weights) {
  if (node_count <= 0) throw Error(ErrorKind::MalformedDocument, "node count must be positive");
  if (weights.size() != edges.size()) {
    throw Error(ErrorKind::MalformedDocument, "weight count " + std::to_string(weights.size()) +
                                                  " differs from edge count " +
                                                  std::to_string(edges.size()));
  }

  std::vector<char> covered(static_cast<std::size_t>(node_count), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto& members = edges[e];
    for (Index v : members) {
      if (v < 0 || v >= node_count) {
        throw Error(ErrorKind::NodeIdOutOfRange,
                    edge_label(e) + " references node " + std::to_string(v));
      }
    }
    std::sort(members.begin(), members.end());
    if (members.size() < 2) {
      throw Error(ErrorKind::DegenerateEdge,
                  edge_label(e) + " has " + std::to_string(members.size()) + " member(s)");
    }
    if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
      throw Error(ErrorKind::DegenerateEdge, edge_label(e) + " repeats a node");
    }
    if (!(weights[e] > 0.0) || !std::isfinite(weights[e])) {
      throw Error(ErrorKind::NonPositiveWeight,
                  edge_label(e) + " has weight " + std::to_string(weights[e]));
    }
    for (Index v : members) covered[static_cast<std::size_t>(v)] = 1;
  }
  for (Index v = 0; v < node_count; ++v) {
    if (!covered[static_cast<std::size_t>(v)]) {
      throw Error(ErrorKind::IsolatedNode, "node " + std::to_string(v) + " has no incident edge");
    }
  }

  Hypergraph hg;
  hg.node_count_ = node_count;
  hg.edges_ = std::move(edges);
  hg.weights_ = std::move(weights);
  hg.pair_index_ = build_pair_index(node_count, hg.edges_);
  hg.degrees_.node = Eigen::VectorXd::Zero(node_count);
  hg.degrees_.edge_size.reserve(hg.edges_.size());
  for (std::size_t e = 0; e < hg.edges_.size(); ++e) {
    for (Index v : hg.edges_[e]) hg.degrees_.node[v] += hg.weights_[e];
    hg.degrees_.edge_size.push_back(static_cast<Index>(hg.edges_[e].size()));
  }
  return hg;
}

Hypergraph Hypergraph::create(Index node_count, std::vector<std::vector<Index>> edges) {
  std::vector<double> weights(edges.size(), 1.0);
  return create(node_count, std::move(edges), std::move(weights));
}

Degrees degrees(const Hypergraph& hg) { return hg.degree_info(); }

PairIndex pair_index(const Hypergraph& hg) { return hg.incidence(); }

// --- parsing -----------------------------------------------------------------

namespace {

bool looks_structured(std::string_view doc) {
  const auto pos = doc.find_first_not_of(" \t\r\n");
  return pos != std::string_view::npos && doc[pos] == '{';
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

template <typename T>
T parse_number(std::string_view token, std::size_t line_no) {
  T value{};
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::MalformedDocument,
                "line " + std::to_string(line_no) + ": bad number '" + std::string(token) + "'");
  }
  return value;
}

Hypergraph parse_text(std::string_view doc) {
  std::vector<std::vector<std::string_view>> lines;
  std::size_t start = 0;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 0;
  while (start <= doc.size()) {
    auto end = doc.find('\n', start);
    if (end == std::string_view::npos) end = doc.size();
    ++line_no;
    auto line = doc.substr(start, end - start);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tokens = split_tokens(line);
    if (!tokens.empty()) {
      lines.push_back(std::move(tokens));
      line_numbers.push_back(line_no);
    }
    start = end + 1;
  }
  if (lines.empty()) throw Error(ErrorKind::MalformedDocument, "empty document");
  if (lines[0].size() != 2) throw Error(ErrorKind::MalformedDocument, "header must be `n m`");
  const auto n = parse_number<long long>(lines[0][0], line_numbers[0]);
  const auto m = parse_number<long long>(lines[0][1], line_numbers[0]);
  if (m < 0) throw Error(ErrorKind::MalformedDocument, "negative edge count");
  if (static_cast<long long>(lines.size()) - 1 != m) {
    throw Error(ErrorKind::MalformedDocument, "header declares " + std::to_string(m) +
                                                  " edges, found " +
                                                  std::to_string(lines.size() - 1));
  }
  std::vector<std::vector<Index>> edges;
  std::vector<double> weights;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& tok = lines[i];
    if (tok.size() < 2) throw Error(ErrorKind::MalformedDocument, "line " + std::to_string(line_numbers[i]) + ": expected `w k v...`");
    weights.push_back(parse_number<double>(tok[0], line_numbers[i]));
    const auto k = parse_number<long long>(tok[1], line_numbers[i]);
    if (k < 0 || static_cast<std::size_t>(k) != tok.size() - 2) {
      throw Error(ErrorKind::MalformedDocument,
                  "line " + std::to_string(line_numbers[i]) + ": member count mismatch");
    }
    std::vector<Index> members;
    for (std::size_t j = 2; j < tok.size(); ++j) {
      members.push_back(static_cast<Index>(parse_number<long long>(tok[j], line_numbers[i])));
    }
    edges.push_back(std::move(members));
  }
  return Hypergraph::create(static_cast<Index>(n), std::move(edges), std::move(weights));
}

Dataset parse_structured(std::string_view doc) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedDocument, e.what());
  }
  try {
    if (!j.is_object() || !j.contains("n") || !j.contains("edges")) {
      throw Error(ErrorKind::MalformedDocument, "structured document needs `n` and `edges`");
    }
    for (const auto& [key, _] : j.items()) {
      if (key != "n" && key != "edges" && key != "weights" && key != "features" &&
          key != "labels" && key != "class_count" && key != "meta") {
        throw Error(ErrorKind::MalformedDocument, "unknown key `" + key + "`");
      }
    }
    const auto n = j.at("n").get<long long>();
    auto edges = j.at("edges").get<std::vector<std::vector<Index>>>();
    std::vector<double> weights = j.contains("weights")
                                      ? j.at("weights").get<std::vector<double>>()
                                      : std::vector<double>(edges.size(), 1.0);
    Dataset ds{Hypergraph::create(static_cast<Index>(n), std::move(edges), std::move(weights)),
               NodeSignal(n, 0), {}, 0};
    if (j.contains("features")) {
      const auto& rows = j.at("features");
      if (!rows.is_array() || static_cast<long long>(rows.size()) != n) {
        throw Error(ErrorKind::MalformedDocument, "features must have n rows");
      }
      const auto cols = rows.empty() ? std::size_t{0} : rows[0].size();
      ds.features.resize(n, static_cast<Index>(cols));
      for (long long r = 0; r < n; ++r) {
        const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (row.size() != cols) throw Error(ErrorKind::MalformedDocument, "ragged features");
        for (std::size_t c = 0; c < cols; ++c) ds.features(r, static_cast<Index>(c)) = row[c];
      }
    }
    if (j.contains("labels")) {
      ds.labels = j.at("labels").get<std::vector<int>>();
      if (static_cast<long long>(ds.labels.size()) != n) {
        throw Error(ErrorKind::MalformedDocument, "labels must have length n");
      }
      const int max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
      ds.class_count = j.contains("class_count") ? j.at("class_count").get<int>() : max_label + 1;
      for (int y : ds.labels) {
        if (y < 0 || y >= ds.class_count) {
          throw Error(ErrorKind::MalformedDocument, "label " + std::to_string(y) + " out of range");
        }
      }
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedDocument, e.what());
  }
}

}  // namespace

Hypergraph parse_hypergraph(std::string_view document) {
  if (looks_structured(document)) return parse_structured(document).hypergraph;
  return parse_text(document);
}

Dataset parse_dataset(std::string_view document) {
  if (looks_structured(document)) return parse_structured(document);
  auto hg = parse_text(document);
  const Index n = hg.node_count();
  return Dataset{std::move(hg), NodeSignal(n, 0), {}, 0};
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str());
}

std::string to_text(const Hypergraph& hg) {
  std::string out = std::to_string(hg.node_count()) + " " + std::to_string(hg.edge_count()) + "\n";
  for (Index e = 0; e < hg.edge_count(); ++e) {
    out += format_double(hg.weight(e));
    out += " " + std::to_string(hg.edge(e).size());
    for (Index v : hg.edge(e)) out += " " + std::to_string(v);
    out += "\n";
  }
  return out;
}

namespace {
nlohmann::json structure_json(const Hypergraph& hg) {
  nlohmann::json j;
  j["n"] = hg.node_count();
  j["edges"] = hg.edges();
  j["weights"] = hg.weights();
  return j;
}
}  // namespace

std::string to_json(const Hypergraph& hg) { return structure_json(hg).dump() + "\n"; }

std::string to_json(const Dataset& dataset) {
  auto j = structure_json(dataset.hypergraph);
  if (dataset.features.cols() > 0) {
    auto rows = nlohmann::json::array();
    for (Index r = 0; r < dataset.features.rows(); ++r) {
      std::vector<double> row(dataset.features.row(r).begin(), dataset.features.row(r).end());
      rows.push_back(std::move(row));
    }
    j["features"] = std::move(rows);
  }
  if (dataset.has_labels()) {
    j["labels"] = dataset.labels;
    j["class_count"] = dataset.class_count;
  }
  return j.dump() + "\n";
}

// --- synthetic SBM -------------------------------------------------------------

namespace {

/// Nodes of one class dealt from a reshuffled deck, so every node is drawn
/// once before any node is drawn twice. Draws within one edge stay distinct.
class ClassDeck {
 public:
  ClassDeck(Index first, Index count) : deck_(static_cast<std::size_t>(count)) {
    std::iota(deck_.begin(), deck_.end(), first);
    cursor_ = deck_.size();
  }

  void draw(Index k, SplitMix64& rng, std::vector<Index>& edge) {
    const std::size_t edge_start = edge.size();
    for (Index i = 0; i < k; ++i) {
      if (cursor_ == deck_.size()) {
        rng.shuffle(deck_.begin(), deck_.end());
        cursor_ = 0;
      }
      auto taken = [&](Index v) {
        return std::find(edge.begin() + static_cast<std::ptrdiff_t>(edge_start), edge.end(), v) !=
               edge.end();
      };
      if (taken(deck_[cursor_])) {
        std::size_t j = cursor_ + 1;
        while (j < deck_.size() && taken(deck_[j])) ++j;
        if (j == deck_.size()) {
          // Every undealt card is already in this edge; reuse a dealt one.
          j = 0;
          while (taken(deck_[j])) ++j;
          edge.push_back(deck_[j]);
          continue;
        }
        std::swap(deck_[cursor_], deck_[j]);
      }
      edge.push_back(deck_[cursor_++]);
    }
  }

 private:
  std::vector<Index> deck_;
  std::size_t cursor_;
};

}  // namespace

Dataset generate_sbm(const SbmParams& p) {
  if (p.alpha < 1 || 2 * p.alpha > p.edge_size) {
    throw Error(ErrorKind::InvalidAlpha, "alpha must lie in [1, edge_size/2], got " +
                                             std::to_string(p.alpha));
  }
  if (p.nodes_per_class < p.edge_size) {
    throw Error(ErrorKind::EdgeSizeExceedsClass, "edge size " + std::to_string(p.edge_size) +
                                                     " exceeds class size " +
                                                     std::to_string(p.nodes_per_class));
  }
  if (p.edge_count < 1 || p.feature_dim < 0 || !(p.sigma >= 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "edge_count >= 1, feature_dim >= 0, sigma >= 0 required");
  }

  SplitMix64 rng(derive_seed(p.seed, 0x5b3));
  std::array<ClassDeck, 2> decks{ClassDeck(0, p.nodes_per_class),
                                 ClassDeck(p.nodes_per_class, p.nodes_per_class)};
  std::vector<std::vector<Index>> edges;
  edges.reserve(static_cast<std::size_t>(p.edge_count));
  for (Index e = 0; e < p.edge_count; ++e) {
    const auto minority = static_cast<std::size_t>(rng.below(2));
    std::vector<Index> members;
    members.reserve(static_cast<std::size_t>(p.edge_size));
    decks[minority].draw(p.alpha, rng, members);
    decks[1 - minority].draw(p.edge_size - p.alpha, rng, members);
    edges.push_back(std::move(members));
  }

  const Index n = 2 * p.nodes_per_class;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = v < p.nodes_per_class ? 0 : 1;

  Hypergraph hg = [&] {
    try {
      return Hypergraph::create(n, std::move(edges));
    } catch (const Error& err) {
      throw Error(err.kind(), std::string(err.what()) + " (too few edges to cover every node)");
    }
  }();

  SplitMix64 feature_rng(derive_seed(p.seed, 0xfea7));
  NodeSignal features(n, p.feature_dim);
  for (Index v = 0; v < n; ++v) {
    const double mean = labels[static_cast<std::size_t>(v)];
    for (Index c = 0; c < p.feature_dim; ++c) features(v, c) = mean + p.sigma * feature_rng.normal();
  }
  return Dataset{std::move(hg), std::move(features), std::move(labels), 2};
}

// --- perturbations ---------------------------------------------------------------

FeatureNoise parse_feature_noise(std::string_view name) {
  if (name == "gaussian") return FeatureNoise::Gaussian;
  if (name == "uniform") return FeatureNoise::Uniform;
  if (name == "mask") return FeatureNoise::Mask;
  throw Error(ErrorKind::InvalidConfig, "unknown feature noise '" + std::string(name) + "'");
}

std::string_view to_string(FeatureNoise kind) {
  switch (kind) {
    case FeatureNoise::Gaussian: return "gaussian";
    case FeatureNoise::Uniform: return "uniform";
    case FeatureNoise::Mask: return "mask";
  }
  return "unknown";
}

namespace {
void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw Error(ErrorKind::InvalidRate, "rate must lie in [0, 1], got " + std::to_string(rate));
  }
}
}  // namespace

NodeSignal perturb_features(const NodeSignal& x, FeatureNoise kind, double rate,
                            std::uint64_t seed, double scale) {
  check_rate(rate);
  if (rate == 0.0) return x;
  SplitMix64 rng(derive_seed(seed, 0x401e));
  NodeSignal out = x;
  for (Index r = 0; r < out.rows(); ++r) {
    for (Index c = 0; c < out.cols(); ++c) {
      switch (kind) {
        case FeatureNoise::Gaussian: out(r, c) += rate * scale * rng.normal(); break;
        case FeatureNoise::Uniform: out(r, c) += rng.uniform(-rate, rate); break;
        case FeatureNoise::Mask:
          if (rng.bernoulli(rate)) out(r, c) = 0.0;
          break;
      }
    }
  }
  return out;
}

Hypergraph perturb_structure(const Hypergraph& hg, double rate, std::uint64_t seed) {
  check_rate(rate);
  const Index m = hg.edge_count();
  const auto removed_count = static_cast<Index>(std::floor(rate * static_cast<double>(m)));
  if (removed_count == 0) return hg;

  SplitMix64 rng(derive_seed(seed, 0x57c7));
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<char> removed(static_cast<std::size_t>(m), 0);
  for (Index i = 0; i < removed_count; ++i) removed[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  std::vector<std::vector<Index>> edges;
  std::vector<double> weights;
  std::vector<char> covered(static_cast<std::size_t>(hg.node_count()), 0);
  for (Index e = 0; e < m; ++e) {
    if (removed[static_cast<std::size_t>(e)]) continue;
    edges.push_back(hg.edge(e));
    weights.push_back(hg.weight(e));
    for (Index v : hg.edge(e)) covered[static_cast<std::size_t>(v)] = 1;
  }

  // Fake edge shapes come from the empirical (size, weight) distribution.
  std::vector<std::vector<Index>> fake(static_cast<std::size_t>(removed_count));
  std::vector<std::size_t> fake_size(fake.size());
  for (std::size_t f = 0; f < fake.size(); ++f) {
    const auto source = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
    fake_size[f] = hg.edge(source).size();
    weights.push_back(hg.weight(source));
  }

  std::vector<Index> orphans;
  for (Index v = 0; v < hg.node_count(); ++v) {
    if (!covered[static_cast<std::size_t>(v)]) orphans.push_back(v);
  }
  rng.shuffle(orphans.begin(), orphans.end());
  std::size_t slot = 0;
  for (Index v : orphans) {
    // Round-robin over fake edges that still have room.
    std::size_t tries = 0;
    while (fake[slot % fake.size()].size() >= fake_size[slot % fake.size()] && tries < fake.size()) {
      ++slot;
      ++tries;
    }
    if (tries == fake.size()) {
      throw Error(ErrorKind::ResultingIsolatedNode,
                  "node " + std::to_string(v) + " orphaned and no fake edge slot left");
    }
    fake[slot % fake.size()].push_back(v);
    ++slot;
  }

  const auto n = static_cast<std::uint64_t>(hg.node_count());
  for (std::size_t f = 0; f < fake.size(); ++f) {
    auto& members = fake[f];
    while (members.size() < fake_size[f]) {
      const auto v = static_cast<Index>(rng.below(n));
      if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
    }
    edges.push_back(std::move(members));
  }
  try {
    return Hypergraph::create(hg.node_count(), std::move(edges), std::move(weights));
  } catch (const Error& err) {
    throw Error(ErrorKind::ResultingIsolatedNode, err.what());
  }
}

}  // namespace hnd
