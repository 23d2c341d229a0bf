#include "gtdlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gtdlab/error.hpp"
#include "gtdlab/kernels.hpp"

namespace gtdlab {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::GCN: return "gcn";
    case ModelKind::SGC: return "sgc";
    case ModelKind::MLP: return "mlp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn") return ModelKind::GCN;
  if (s == "sgc") return ModelKind::SGC;
  if (s == "mlp") return ModelKind::MLP;
  throw ConfigError("config_model_kind", "unknown model kind '" + s + "'");
}

std::vector<int> default_hidden(ModelKind k) {
  switch (k) {
    case ModelKind::GCN: return {16};
    case ModelKind::SGC: return {};
    case ModelKind::MLP: return {16, 16};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Templated core. float is the production path; double backs grad_check.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
struct ParamsView {
  ModelKind kind;
  int sgc_k;
  std::vector<Mat<T>> w;
  std::vector<std::vector<T>> b;
};

template <typename T>
ParamsView<T> to_view(const ModelParams& p) {
  ParamsView<T> v;
  v.kind = p.kind;
  v.sgc_k = p.sgc_k;
  for (const auto& l : p.layers) {
    v.w.push_back(convert<T>(l.weight));
    std::vector<T> b(l.bias.size());
    for (size_t i = 0; i < b.size(); ++i) b[i] = T(l.bias[i]);
    v.b.push_back(std::move(b));
  }
  return v;
}

template <typename T>
struct TraceT {
  Mat<T> propagated;  // SGC only
  bool has_propagated = false;
  std::vector<Mat<T>> hidden_act;  // input to layer l, for l >= 1
  std::vector<Mat<T>> pre;         // hidden pre-activations
  std::vector<Mat<T>> drop_mask;
};

template <typename T>
Mat<T> propagate_k(const NormAdj& adj, const Mat<T>& x, int k) {
  Mat<T> cur = x;
  Mat<T> next;
  for (int i = 0; i < k; ++i) {
    kernels::spmm(adj.view(), cur, next);
    cur = std::move(next);
  }
  return cur;
}

template <typename T>
Mat<T> forward_t(const ParamsView<T>& p, const NormAdj& adj, const Mat<T>& features,
                 TraceT<T>* trace, double dropout, Rng* rng) {
  const bool graph_layers = p.kind == ModelKind::GCN;
  const int nlayers = static_cast<int>(p.w.size());

  Mat<T> propagated_local;
  const Mat<T>* a = &features;
  if (p.kind == ModelKind::SGC) {
    Mat<T>& slot = trace ? trace->propagated : propagated_local;
    slot = propagate_k(adj, features, p.sgc_k);
    if (trace) trace->has_propagated = true;
    a = &slot;
  }

  Mat<T> z;
  for (int l = 0; l < nlayers; ++l) {
    Mat<T> t;
    kernels::matmul(*a, p.w[l], t);
    if (graph_layers) {
      kernels::spmm(adj.view(), t, z);
    } else {
      z = std::move(t);
    }
    kernels::add_bias_rows(z, p.b[l]);
    if (l + 1 == nlayers) break;  // linear output layer

    if (trace) trace->pre.push_back(z);
    kernels::relu_inplace(z);
    if (dropout > 0.0 && rng) {
      Mat<T> mask(z.rows, z.cols);
      T keep_scale = T(1.0 / (1.0 - dropout));
      for (auto& m : mask.data) m = rng->uniform() < dropout ? T(0) : keep_scale;
      for (size_t i = 0; i < z.data.size(); ++i) z.data[i] *= mask.data[i];
      if (trace) trace->drop_mask.push_back(std::move(mask));
    }
    if (trace) {
      trace->hidden_act.push_back(std::move(z));
      a = &trace->hidden_act.back();
    } else {
      propagated_local = std::move(z);  // reuse slot as scratch
      a = &propagated_local;
    }
  }
  return z;
}

template <typename T>
struct GradsT {
  std::vector<Mat<T>> dw;
  std::vector<std::vector<T>> db;
};

template <typename T>
GradsT<T> backward_t(const ParamsView<T>& p, const NormAdj& adj, const Mat<T>& features,
                     const TraceT<T>& trace, const Mat<T>& dlogits) {
  const bool graph_layers = p.kind == ModelKind::GCN;
  const int nlayers = static_cast<int>(p.w.size());
  GradsT<T> g;
  g.dw.resize(nlayers);
  g.db.resize(nlayers);

  auto layer_input = [&](int l) -> const Mat<T>& {
    if (l == 0) return trace.has_propagated ? trace.propagated : features;
    return trace.hidden_act[l - 1];
  };

  Mat<T> dz = dlogits;
  for (int l = nlayers - 1; l >= 0; --l) {
    g.db[l] = kernels::colsum(dz);
    Mat<T> dt;
    if (graph_layers) {
      kernels::spmm(adj.view(), dz, dt);  // adjacency is symmetric
    } else {
      dt = std::move(dz);
    }
    kernels::matmul_at_b(layer_input(l), dt, g.dw[l]);
    if (l > 0) {
      Mat<T> da;
      kernels::matmul_abt(dt, p.w[l], da);
      if (!trace.drop_mask.empty()) {
        const Mat<T>& mask = trace.drop_mask[l - 1];
        for (size_t i = 0; i < da.data.size(); ++i) da.data[i] *= mask.data[i];
      }
      kernels::relu_backward_inplace(da, trace.pre[l - 1]);
      dz = std::move(da);
    }
  }
  return g;
}

template <typename T>
struct XentT {
  double mean_loss;
  std::vector<double> per_node;
  Mat<T> dlogits;
};

// Mean cross-entropy of explicit target rows against softmax(logits); target
// row i pairs with node_ids[i]. Loss terms skip zero-mass target entries.
template <typename T>
XentT<T> xent_t(const Mat<T>& logits, const Mat<T>& targets, std::span<const int> node_ids) {
  if (node_ids.empty()) throw Error("empty_node_set", "loss needs at least one node");
  const int c = logits.cols;
  const double inv_m = 1.0 / double(node_ids.size());
  XentT<T> out;
  out.dlogits = Mat<T>(logits.rows, c);
  out.per_node.resize(node_ids.size());
  double total = 0.0;
  std::vector<double> q(c);
  for (size_t i = 0; i < node_ids.size(); ++i) {
    const int node = node_ids[i];
    const T* x = logits.row(node);
    double mx = double(x[0]);
    for (int j = 1; j < c; ++j) mx = std::max(mx, double(x[j]));
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      q[j] = std::exp(double(x[j]) - mx);
      z += q[j];
    }
    double logz = std::log(z);
    double loss = 0.0;
    const T* t = targets.row(static_cast<int>(i));
    T* d = out.dlogits.row(node);
    for (int j = 0; j < c; ++j) {
      double tj = double(t[j]);
      if (tj > 0.0) loss -= tj * (double(x[j]) - mx - logz);
      d[j] = T((q[j] / z - tj) * inv_m);
    }
    out.per_node[i] = loss;
    total += loss;
  }
  out.mean_loss = total * inv_m;
  return out;
}

template <typename T>
Mat<T> one_hot_rows(std::span<const int> labels, std::span<const int> node_ids, int c) {
  Mat<T> t(static_cast<int>(node_ids.size()), c);
  for (size_t i = 0; i < node_ids.size(); ++i) t.at(static_cast<int>(i), labels[node_ids[i]]) = T(1);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public float API
// ---------------------------------------------------------------------------

ModelParams init_params(ModelKind kind, const std::vector<int>& dims, uint64_t seed) {
  if (dims.size() < 2) throw Error("bad_dims", "need at least input and output dims");
  for (int d : dims)
    if (d <= 0) throw Error("bad_dims", "non-positive layer dim");
  ModelParams p;
  p.kind = kind;
  p.dims = dims;
  Rng rng(derive_seed(seed, std::string_view("init")));
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.weight = Matrix(dims[l], dims[l + 1]);
    float bound = 1.0f / std::sqrt(float(dims[l]));
    for (auto& w : layer.weight.data) w = float((rng.uniform() * 2.0 - 1.0) * bound);
    layer.bias.assign(dims[l + 1], 0.0f);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

void check_feature_dim(const ModelParams& p, const Matrix& features) {
  if (features.cols != p.in_dim())
    throw Error("dim_mismatch", "feature dim " + std::to_string(features.cols) +
                                    " does not match model input dim " + std::to_string(p.in_dim()));
}

}  // namespace

Matrix forward(const ModelParams& p, const NormAdj& adj, const Matrix& features) {
  check_feature_dim(p, features);
  auto v = to_view<float>(p);
  return forward_t<float>(v, adj, features, nullptr, 0.0, nullptr);
}

Matrix forward_traced(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                      ForwardTrace& trace, float dropout, Rng* rng) {
  check_feature_dim(p, features);
  auto v = to_view<float>(p);
  TraceT<float> t;
  Matrix logits = forward_t<float>(v, adj, features, &t, double(dropout), rng);
  trace.propagated = std::move(t.propagated);
  trace.has_propagated = t.has_propagated;
  trace.hidden_act = std::move(t.hidden_act);
  trace.pre = std::move(t.pre);
  trace.drop_mask = std::move(t.drop_mask);
  return logits;
}

LossResult softmax_xent(const Matrix& logits, std::span<const int> labels,
                        std::span<const int> node_ids) {
  Matrix t = one_hot_rows<float>(labels, node_ids, logits.cols);
  return softmax_xent_soft(logits, t, node_ids);
}

LossResult softmax_xent_soft(const Matrix& logits, const Matrix& targets,
                             std::span<const int> node_ids) {
  if (targets.rows != static_cast<int>(node_ids.size()) || targets.cols != logits.cols)
    throw Error("dim_mismatch", "target shape does not match node set");
  auto r = xent_t<float>(logits, targets, node_ids);
  return {r.mean_loss, std::move(r.per_node), std::move(r.dlogits)};
}

KlResult kl_loss(const Matrix& student_logits, const Matrix& teacher_probs,
                 std::span<const int> node_ids) {
  if (node_ids.empty()) throw Error("empty_node_set", "loss needs at least one node");
  const int c = student_logits.cols;
  if (teacher_probs.rows != static_cast<int>(node_ids.size()) || teacher_probs.cols != c)
    throw Error("dim_mismatch", "teacher shape does not match node set");
  for (int i = 0; i < teacher_probs.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      if (teacher_probs.at(i, j) < -1e-6f)
        throw Error("teacher_off_simplex", "negative teacher probability");
      s += double(teacher_probs.at(i, j));
    }
    if (std::fabs(s - 1.0) > 1e-4)
      throw Error("teacher_off_simplex", "teacher row " + std::to_string(i) + " sums to " +
                                             std::to_string(s));
  }
  auto r = xent_t<float>(student_logits, teacher_probs, node_ids);
  // KL(t || q) = cross_entropy(t, q) - H(t)
  const double inv_m = 1.0 / double(node_ids.size());
  double entropy = 0.0;
  for (int i = 0; i < teacher_probs.rows; ++i)
    for (int j = 0; j < c; ++j) {
      double t = double(teacher_probs.at(i, j));
      if (t > 0.0) entropy -= t * std::log(t);
    }
  return {r.mean_loss - entropy * inv_m, std::move(r.dlogits)};
}

ModelGrads backward(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                    const ForwardTrace& trace, const Matrix& dlogits) {
  auto v = to_view<float>(p);
  TraceT<float> t;
  t.propagated = trace.propagated;
  t.has_propagated = trace.has_propagated;
  t.hidden_act = trace.hidden_act;
  t.pre = trace.pre;
  t.drop_mask = trace.drop_mask;
  auto g = backward_t<float>(v, adj, features, t, dlogits);
  return {std::move(g.dw), std::move(g.db)};
}

AdamState make_adam_state(const ModelParams& p) {
  AdamState st;
  for (const auto& l : p.layers) {
    st.weights.push_back({std::vector<float>(l.weight.size(), 0.0f),
                          std::vector<float>(l.weight.size(), 0.0f)});
    st.biases.push_back(
        {std::vector<float>(l.bias.size(), 0.0f), std::vector<float>(l.bias.size(), 0.0f)});
  }
  return st;
}

namespace {

void adam_update(std::span<float> theta, std::span<const float> grad, std::vector<float>& m,
                 std::vector<float>& v, const TrainHyper& h, double bc1, double bc2) {
  for (size_t i = 0; i < theta.size(); ++i) {
    float g = grad[i] + h.weight_decay * theta[i];
    m[i] = h.adam_beta1 * m[i] + (1.0f - h.adam_beta1) * g;
    v[i] = h.adam_beta2 * v[i] + (1.0f - h.adam_beta2) * g * g;
    float mhat = float(m[i] / bc1);
    float vhat = float(v[i] / bc2);
    theta[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.adam_eps);
  }
}

}  // namespace

void adam_step(ModelParams& p, const ModelGrads& g, AdamState& st, const TrainHyper& h) {
  if (g.dw.size() != p.layers.size() || st.weights.size() != p.layers.size())
    throw Error("dim_mismatch", "gradient/state layer count mismatch");
  st.step += 1;
  double bc1 = 1.0 - std::pow(double(h.adam_beta1), double(st.step));
  double bc2 = 1.0 - std::pow(double(h.adam_beta2), double(st.step));
  for (size_t l = 0; l < p.layers.size(); ++l) {
    if (!p.layers[l].weight.same_shape(g.dw[l]) || p.layers[l].bias.size() != g.db[l].size())
      throw Error("dim_mismatch", "gradient shape mismatch at layer " + std::to_string(l));
    adam_update(p.layers[l].weight.data, g.dw[l].data, st.weights[l].m, st.weights[l].v, h, bc1,
                bc2);
    adam_update(p.layers[l].bias, g.db[l], st.biases[l].m, st.biases[l].v, h, bc1, bc2);
  }
}

double grad_check(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                  std::span<const int> labels, std::span<const int> node_ids, double eps) {
  auto v = to_view<double>(p);
  MatrixD x = convert<double>(features);
  MatrixD targets = one_hot_rows<double>(labels, node_ids, p.out_dim());

  auto loss_at = [&]() {
    MatrixD logits = forward_t<double>(v, adj, x, nullptr, 0.0, nullptr);
    return xent_t<double>(logits, targets, node_ids).mean_loss;
  };

  TraceT<double> trace;
  MatrixD logits = forward_t<double>(v, adj, x, &trace, 0.0, nullptr);
  auto lr = xent_t<double>(logits, targets, node_ids);
  auto analytic = backward_t<double>(v, adj, x, trace, lr.dlogits);

  double max_rel = 0.0;
  auto probe = [&](double& theta, double a) {
    double orig = theta;
    theta = orig + eps;
    double lp = loss_at();
    theta = orig - eps;
    double lm = loss_at();
    theta = orig;
    double n = (lp - lm) / (2.0 * eps);
    double rel = std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
    max_rel = std::max(max_rel, rel);
  };

  for (size_t l = 0; l < v.w.size(); ++l) {
    for (size_t i = 0; i < v.w[l].data.size(); ++i) probe(v.w[l].data[i], analytic.dw[l].data[i]);
    for (size_t i = 0; i < v.b[l].size(); ++i) probe(v.b[l][i], analytic.db[l][i]);
  }
  return max_rel;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    const float* x = logits.row(i);
    float* o = out.row(i);
    double mx = double(x[0]);
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, double(x[j]));
    double z = 0.0;
    for (int j = 0; j < logits.cols; ++j) z += std::exp(double(x[j]) - mx);
    for (int j = 0; j < logits.cols; ++j) o[j] = float(std::exp(double(x[j]) - mx) / z);
  }
  return out;
}

void save_checkpoint(const ModelParams& p, uint64_t seed, int epoch,
                     const std::filesystem::path& path) {
  size_t count = 0;
  for (const auto& l : p.layers) count += l.weight.size() + l.bias.size();
  nlohmann::json hdr = {{"format", "gtdlab-checkpoint"}, {"version", 1},
                        {"kind", to_string(p.kind)},     {"dims", p.dims},
                        {"sgc_k", p.sgc_k},              {"seed", seed},
                        {"epoch", epoch},                {"param_count", count}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io_error", "cannot write " + path.string());
  f << hdr.dump() << "\n";
  for (const auto& l : p.layers) {
    f.write(reinterpret_cast<const char*>(l.weight.data.data()),
            static_cast<std::streamsize>(l.weight.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(l.bias.data()),
            static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io_error", "cannot read " + path.string());
  std::string header_line;
  if (!std::getline(f, header_line)) throw Error("checkpoint_parse", "missing header");
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint_parse", e.what());
  }
  if (hdr.value("format", "") != "gtdlab-checkpoint")
    throw Error("checkpoint_parse", "not a checkpoint file");

  Checkpoint ck;
  ck.seed = hdr.at("seed").get<uint64_t>();
  ck.epoch = hdr.at("epoch").get<int>();
  ck.params.kind = model_kind_from_string(hdr.at("kind").get<std::string>());
  ck.params.dims = hdr.at("dims").get<std::vector<int>>();
  ck.params.sgc_k = hdr.at("sgc_k").get<int>();
  size_t expected = hdr.at("param_count").get<size_t>();
  size_t got = 0;
  for (size_t l = 0; l + 1 < ck.params.dims.size(); ++l) {
    Layer layer;
    layer.weight = Matrix(ck.params.dims[l], ck.params.dims[l + 1]);
    f.read(reinterpret_cast<char*>(layer.weight.data.data()),
           static_cast<std::streamsize>(layer.weight.size() * sizeof(float)));
    layer.bias.assign(ck.params.dims[l + 1], 0.0f);
    f.read(reinterpret_cast<char*>(layer.bias.data()),
           static_cast<std::streamsize>(layer.bias.size() * sizeof(float)));
    if (!f) throw Error("checkpoint_parse", "truncated parameter block");
    got += layer.weight.size() + layer.bias.size();
    ck.params.layers.push_back(std::move(layer));
  }
  if (got != expected) throw Error("checkpoint_parse", "parameter count mismatch");
  return ck;
}

}  // namespace gtdlab
