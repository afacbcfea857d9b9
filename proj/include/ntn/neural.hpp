// SPDX-License-Identifier: Apache-2.0
// Small feed-forward networks: shared tanh trunk, one or more heads, flat
// parameter vector, reverse- and forward-mode derivatives, Adam.
#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ntn/rng.hpp"

namespace ntn::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct HeadSpec {
  std::vector<int> hidden;
  int outputs = 1;
  bool operator==(const HeadSpec&) const = default;
};

struct NetworkSpec {
  int inputs = 1;
  std::vector<int> trunk;
  std::vector<HeadSpec> heads;
  double output_init_scale = 1.0;

  int output_size() const;
  void validate() const;
  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
  bool operator==(const NetworkSpec&) const = default;
};

class Network {
 public:
  struct Layer {
    int in = 0, out = 0;
    long w_offset = 0, b_offset = 0;
    int source = -1;  // index of the layer feeding this one, -1 for the input
    bool tanh = true;
  };

  struct Cache {
    Mat input;
    std::vector<Mat> outputs;  // post-activation output of every layer
  };

  Network() = default;
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  long parameter_count() const { return static_cast<long>(params_.size()); }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  void initialize(Rng& rng);

  // X is inputs x batch; the result stacks the heads' outputs row-wise.
  Mat forward(const Mat& X, Cache* cache = nullptr) const;
  Vec forward_one(const Vec& x) const;
  // Gradient of sum(dOut .* output) with respect to the parameters.
  Vec backward(const Cache& cache, const Mat& dOut) const;
  // Directional derivative of the output along parameter direction v.
  Mat jvp(const Cache& cache, const Vec& v) const;

 private:
  Mat assemble(const Cache& c) const;

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<int> head_outputs_;  // last layer of each head
  Vec params_;
};

// MSE 0.5 * mean((f(x) - y)^2) for a scalar-output net, with gradient.
struct LossGrad {
  double loss = 0.0;
  Vec grad;
};
LossGrad mse_loss(const Network& net, const Mat& X, const Vec& targets);

// Generic chain rule: dloss/dparams given dloss/doutput.
Vec gradient(const Network& net, const Mat& X, const Mat& dloss_dout);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m, v;
  long step = 0;
  void reset(long n) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
    step = 0;
  }
};

void adam_step(Vec& params, const Vec& grad, AdamState& st, const AdamConfig& cfg);

// Output layout of a policy: independent categorical blocks followed by
// Bernoulli logits. Masked Bernoulli factors are forced off.
struct PolicyLayout {
  std::vector<int> categorical;
  int bernoulli = 0;
  int size() const;
};

// Mask matrix: bernoulli x batch with 1 where the factor is free.
double kl_divergence(const PolicyLayout& lay, const Mat& logits_old, const Mat& logits_new, const Mat& mask);
// Per-sample log-probability of actions; actions hold category indices then 0/1 bits.
Vec log_prob(const PolicyLayout& lay, const Mat& logits, const Eigen::MatrixXi& actions, const Mat& mask);
// Fisher metric of the output distribution applied to a logit perturbation.
Mat output_fisher_product(const PolicyLayout& lay, const Mat& logits, const Mat& mask, const Mat& dlogits);
// (1/B) J^T M J v, the Hessian of the mean KL at the current parameters.
Vec fisher_vector_product(const Network& net, const PolicyLayout& lay, const Mat& X, const Mat& mask, const Vec& v);

double sigmoid(double z);
Vec softmax(const Eigen::Ref<const Vec>& z);

// Binary checkpoint with a JSON sidecar holding the spec.
void save_checkpoint(const std::string& path, const Network& net, const AdamState* adam = nullptr);
Network load_checkpoint(const std::string& path, AdamState* adam = nullptr);

}  // namespace ntn::nn
