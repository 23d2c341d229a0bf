#include "gtdlab/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gtdlab/error.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

namespace {

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw Error("dataset_missing_file", "cannot open " + p.string());
  return f;
}

int parse_int(std::string_view s, const std::string& where) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("dataset_parse", "bad integer '" + std::string(s) + "' in " + where);
  return v;
}

float parse_float(std::string_view s, const std::string& where) {
  float v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("dataset_parse", "bad number '" + std::string(s) + "' in " + where);
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return out;
}

// strips a trailing '\r' so CRLF files load too
bool get_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

Graph build_graph(int num_nodes, std::span<const std::pair<int, int>> edges) {
  std::vector<std::pair<int, int>> dir;
  dir.reserve(edges.size() * 2);
  for (auto [a, b] : edges) {
    if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes)
      throw Error("dataset_edge_out_of_range",
                  "edge (" + std::to_string(a) + ", " + std::to_string(b) + ") outside [0, " +
                      std::to_string(num_nodes) + ")");
    if (a == b) continue;  // self-loops only appear at normalization time
    dir.emplace_back(a, b);
    dir.emplace_back(b, a);
  }
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

  Graph g;
  g.num_nodes = num_nodes;
  g.num_edges = static_cast<int64_t>(dir.size()) / 2;
  g.row_ptr.assign(num_nodes + 1, 0);
  for (auto& [a, b] : dir) g.row_ptr[a + 1]++;
  for (int i = 0; i < num_nodes; ++i) g.row_ptr[i + 1] += g.row_ptr[i];
  g.col.resize(dir.size());
  {
    std::vector<int64_t> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
    for (auto& [a, b] : dir) g.col[cursor[a]++] = b;
  }
  return g;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  // meta.json
  nlohmann::json meta;
  {
    auto f = open_or_throw(dir / "meta.json");
    try {
      f >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw Error("dataset_parse", std::string("meta.json: ") + e.what());
    }
  }
  if (!meta.contains("num_nodes") || !meta.contains("num_features") || !meta.contains("num_classes"))
    throw Error("dataset_parse", "meta.json missing num_nodes/num_features/num_classes");
  const int n = meta["num_nodes"].get<int>();
  const int d = meta["num_features"].get<int>();
  const int c = meta["num_classes"].get<int>();
  if (n <= 0 || d <= 0 || c <= 0) throw Error("dataset_parse", "meta.json fields must be positive");

  Dataset ds;
  ds.num_classes = c;
  ds.features = Matrix(n, d);

  // features.tsv
  {
    auto f = open_or_throw(dir / "features.tsv");
    std::string line;
    for (int i = 0; i < n; ++i) {
      if (!get_line(f, line))
        throw Error("dataset_dimension_mismatch", "features.tsv has fewer rows than num_nodes");
      auto cells = split_tabs(line);
      if (static_cast<int>(cells.size()) != d)
        throw Error("dataset_dimension_mismatch",
                    "features.tsv row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(d));
      float* row = ds.features.row(i);
      for (int j = 0; j < d; ++j) row[j] = parse_float(cells[j], "features.tsv");
    }
    if (get_line(f, line) && !line.empty())
      throw Error("dataset_dimension_mismatch", "features.tsv has more rows than num_nodes");
  }

  // labels.tsv
  {
    auto f = open_or_throw(dir / "labels.tsv");
    std::string line;
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      if (!get_line(f, line))
        throw Error("dataset_dimension_mismatch", "labels.tsv has fewer rows than num_nodes");
      int y = parse_int(line, "labels.tsv");
      if (y < 0 || y >= c)
        throw Error("dataset_label_out_of_range",
                    "node " + std::to_string(i) + " has label " + std::to_string(y));
      ds.labels[i] = y;
    }
  }

  // edges.tsv
  {
    auto f = open_or_throw(dir / "edges.tsv");
    std::string line;
    std::vector<std::pair<int, int>> edges;
    while (get_line(f, line)) {
      if (line.empty()) continue;
      auto cells = split_tabs(line);
      if (cells.size() != 2) throw Error("dataset_parse", "edges.tsv line '" + line + "'");
      edges.emplace_back(parse_int(cells[0], "edges.tsv"), parse_int(cells[1], "edges.tsv"));
    }
    ds.graph = build_graph(n, edges);
  }

  // split.tsv
  {
    auto f = open_or_throw(dir / "split.tsv");
    std::string line;
    std::vector<int8_t> seen(n, 0);
    while (get_line(f, line)) {
      if (line.empty()) continue;
      auto cells = split_tabs(line);
      if (cells.size() != 2) throw Error("dataset_parse", "split.tsv line '" + line + "'");
      int id = parse_int(cells[0], "split.tsv");
      if (id < 0 || id >= n)
        throw Error("dataset_split_out_of_range", "split id " + std::to_string(id));
      if (seen[id]) throw Error("dataset_split_overlap", "node " + std::to_string(id) + " assigned twice");
      seen[id] = 1;
      if (cells[1] == "train")
        ds.split.train_ids.push_back(id);
      else if (cells[1] == "test")
        ds.split.test_ids.push_back(id);
      else
        throw Error("dataset_parse", "split.tsv side '" + std::string(cells[1]) + "'");
    }
    for (int i = 0; i < n; ++i)
      if (!seen[i]) throw Error("dataset_split_incomplete", "node " + std::to_string(i) + " unassigned");
    std::sort(ds.split.train_ids.begin(), ds.split.train_ids.end());
    std::sort(ds.split.test_ids.begin(), ds.split.test_ids.end());
  }

  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int n = ds.num_nodes();
  {
    nlohmann::json meta = {{"num_nodes", n},
                           {"num_features", ds.features.cols},
                           {"num_classes", ds.num_classes}};
    std::ofstream f(dir / "meta.json");
    f << meta.dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "features.tsv");
    char buf[64];
    for (int i = 0; i < n; ++i) {
      const float* row = ds.features.row(i);
      for (int j = 0; j < ds.features.cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.9g", double(row[j]));
        if (j) f << '\t';
        f << buf;
      }
      f << '\n';
    }
  }
  {
    std::ofstream f(dir / "labels.tsv");
    for (int i = 0; i < n; ++i) f << ds.labels[i] << '\n';
  }
  {
    std::ofstream f(dir / "edges.tsv");
    for (int i = 0; i < n; ++i)
      for (int64_t e = ds.graph.row_ptr[i]; e < ds.graph.row_ptr[i + 1]; ++e)
        if (i < ds.graph.col[e]) f << i << '\t' << ds.graph.col[e] << '\n';
  }
  {
    std::ofstream f(dir / "split.tsv");
    std::vector<int8_t> is_train(n, 0);
    for (int id : ds.split.train_ids) is_train[id] = 1;
    for (int i = 0; i < n; ++i) f << i << '\t' << (is_train[i] ? "train" : "test") << '\n';
  }
}

NormAdj normalize_adjacency(const Graph& g) {
  const int n = g.num_nodes;
  NormAdj a;
  a.num_nodes = n;
  a.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) a.row_ptr[i + 1] = a.row_ptr[i] + g.degree(i) + 1;  // + self-loop
  a.col.resize(a.row_ptr[n]);
  a.val.resize(a.row_ptr[n]);

  std::vector<float> inv_sqrt(n);
  for (int i = 0; i < n; ++i) inv_sqrt[i] = 1.0f / std::sqrt(float(g.degree(i) + 1));

  for (int i = 0; i < n; ++i) {
    int64_t out = a.row_ptr[i];
    bool self_placed = false;
    for (int64_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
      int j = g.col[e];
      if (!self_placed && j > i) {
        a.col[out] = i;
        a.val[out] = inv_sqrt[i] * inv_sqrt[i];
        ++out;
        self_placed = true;
      }
      a.col[out] = j;
      a.val[out] = inv_sqrt[i] * inv_sqrt[j];
      ++out;
    }
    if (!self_placed) {
      a.col[out] = i;
      a.val[out] = inv_sqrt[i] * inv_sqrt[i];
    }
  }
  return a;
}

Matrix sgc_propagate(const NormAdj& adj, const Matrix& features, int k) {
  if (k < 0) throw Error("invalid_argument", "propagation power must be >= 0");
  Matrix cur = features;
  Matrix next;
  for (int step = 0; step < k; ++step) {
    kernels::spmm(adj.view(), cur, next);
    cur = std::move(next);
  }
  return cur;
}

SplitMask split_nodes(int n, double train_fraction, uint64_t seed) {
  if (n < 2) throw ConfigError("split_degenerate", "need at least 2 nodes");
  int train_size = static_cast<int>(std::floor(n * train_fraction + 0.5));  // round half up
  if (train_size < 1 || train_size > n - 1)
    throw ConfigError("split_degenerate",
                      "train fraction " + std::to_string(train_fraction) + " leaves an empty side");
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  Rng rng(seed);
  rng.shuffle(ids);
  SplitMask m;
  m.train_ids.assign(ids.begin(), ids.begin() + train_size);
  m.test_ids.assign(ids.begin() + train_size, ids.end());
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.test_ids.begin(), m.test_ids.end());
  return m;
}

}  // namespace gtdlab
