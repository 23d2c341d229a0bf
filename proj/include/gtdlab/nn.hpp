#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtdlab/graph.hpp"
#include "gtdlab/matrix.hpp"
#include "gtdlab/rng.hpp"

namespace gtdlab {

enum class ModelKind { GCN, SGC, MLP };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Default hidden widths: GCN {16}, SGC {}, MLP {16, 16}.
std::vector<int> default_hidden(ModelKind k);

struct Layer {
  Matrix weight;            // in_dim x out_dim, row-major
  std::vector<float> bias;  // out_dim
};

struct ModelParams {
  ModelKind kind = ModelKind::MLP;
  std::vector<int> dims;  // [in, hidden..., out]; adjacent dims compose
  int sgc_k = 2;          // propagation power, SGC only
  std::vector<Layer> layers;

  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }
};

struct TrainHyper {
  float learning_rate = 0.01f;
  int epochs = 200;
  float loss_threshold = 0.5f;  // alpha: flattening activates below this loss
  float flatten_param = 0.7f;   // beta: soft-label mass on the true class
  float weight_decay = 5e-4f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float dropout = 0.0f;
  uint64_t seed = 1;
};

struct AdamState {
  struct Slot {
    std::vector<float> m, v;
  };
  std::vector<Slot> weights;
  std::vector<Slot> biases;
  int64_t step = 0;
};

struct ModelGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<float>> db;
};

/// Intermediate activations from a traced forward pass, consumed by backward().
struct ForwardTrace {
  Matrix propagated;              // adj^k features, SGC only
  bool has_propagated = false;
  std::vector<Matrix> hidden_act;  // input to layer l, for l >= 1
  std::vector<Matrix> pre;         // pre-activation of each hidden layer
  std::vector<Matrix> drop_mask;   // per hidden layer, empty when dropout is off
};

/// Glorot-style init: weights uniform in +-1/sqrt(fan_in), biases zero.
/// Deterministic per seed.
ModelParams init_params(ModelKind kind, const std::vector<int>& dims, uint64_t seed);

Matrix forward(const ModelParams& p, const NormAdj& adj, const Matrix& features);
Matrix forward_traced(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                      ForwardTrace& trace, float dropout = 0.0f, Rng* rng = nullptr);

struct LossResult {
  double mean_loss = 0.0;
  std::vector<double> per_node;  // aligned with node_ids
  Matrix dlogits;                // n x C, zero outside node_ids
};

/// Mean softmax cross-entropy over node_ids against hard labels (labels[node]).
LossResult softmax_xent(const Matrix& logits, std::span<const int> labels,
                        std::span<const int> node_ids);

/// Same with explicit target rows; targets row i pairs with node_ids[i].
LossResult softmax_xent_soft(const Matrix& logits, const Matrix& targets,
                             std::span<const int> node_ids);

struct KlResult {
  double loss = 0.0;
  Matrix dlogits;
};

/// Mean KL(teacher || softmax(student)) over node_ids; teacher row i pairs
/// with node_ids[i] and must lie on the probability simplex (tolerance 1e-4).
KlResult kl_loss(const Matrix& student_logits, const Matrix& teacher_probs,
                 std::span<const int> node_ids);

ModelGrads backward(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                    const ForwardTrace& trace, const Matrix& dlogits);

AdamState make_adam_state(const ModelParams& p);

/// Adam with bias correction; weight decay enters as an L2 gradient term.
void adam_step(ModelParams& p, const ModelGrads& g, AdamState& st, const TrainHyper& h);

/// Compares analytic parameter gradients of the mean cross-entropy against
/// central finite differences (step eps) at double precision; returns the max
/// relative error over all parameter entries.
double grad_check(const ModelParams& p, const NormAdj& adj, const Matrix& features,
                  std::span<const int> labels, std::span<const int> node_ids, double eps);

/// Row-wise stabilized softmax.
Matrix softmax_rows(const Matrix& logits);

/// Checkpoint: one-line JSON header + raw little-endian float32 block.
void save_checkpoint(const ModelParams& p, uint64_t seed, int epoch,
                     const std::filesystem::path& path);
struct Checkpoint {
  ModelParams params;
  uint64_t seed = 0;
  int epoch = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gtdlab
