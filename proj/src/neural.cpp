// SPDX-License-Identifier: Apache-2.0
#include "ntn/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ntn::nn {

int NetworkSpec::output_size() const {
  int n = 0;
  for (const auto& h : heads) n += h.outputs;
  return n;
}

void NetworkSpec::validate() const {
  if (inputs < 1) throw std::invalid_argument("network needs at least one input");
  if (heads.empty()) throw std::invalid_argument("network needs at least one head");
  for (int t : trunk)
    if (t < 1) throw std::invalid_argument("layer sizes must be positive");
  for (const auto& h : heads) {
    if (h.outputs < 1) throw std::invalid_argument("head outputs must be positive");
    for (int u : h.hidden) {
      if (u < 1) throw std::invalid_argument("layer sizes must be positive");
    }
  }
}

nlohmann::json NetworkSpec::to_json() const {
  nlohmann::json j;
  j["inputs"] = inputs;
  j["trunk"] = trunk;
  j["output_init_scale"] = output_init_scale;
  j["heads"] = nlohmann::json::array();
  for (const auto& h : heads) j["heads"].push_back({{"hidden", h.hidden}, {"outputs", h.outputs}});
  return j;
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.inputs = j.at("inputs").get<int>();
  s.trunk = j.at("trunk").get<std::vector<int>>();
  s.output_init_scale = j.value("output_init_scale", 1.0);
  for (const auto& h : j.at("heads")) s.heads.push_back(HeadSpec{h.at("hidden").get<std::vector<int>>(), h.at("outputs").get<int>()});
  return s;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  long offset = 0;
  auto add = [&](int in, int out, int source, bool tanh) {
    Layer l{in, out, offset, offset + static_cast<long>(in) * out, source, tanh};
    offset = l.b_offset + out;
    layers_.push_back(l);
    return static_cast<int>(layers_.size()) - 1;
  };
  int src = -1, width = spec_.inputs;
  for (int t : spec_.trunk) {
    src = add(width, t, src, true);
    width = t;
  }
  const int trunk_out = src, trunk_width = width;
  for (const auto& h : spec_.heads) {
    int s = trunk_out, w = trunk_width;
    for (int u : h.hidden) {
      s = add(w, u, s, true);
      w = u;
    }
    head_outputs_.push_back(add(w, h.outputs, s, false));
  }
  params_ = Vec::Zero(offset);
}

void Network::initialize(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    double a = std::sqrt(6.0 / (l.in + l.out));
    if (!l.tanh) a *= spec_.output_init_scale;
    for (long k = 0; k < static_cast<long>(l.in) * l.out; ++k) params_(l.w_offset + k) = a * u(rng);
    for (int k = 0; k < l.out; ++k) params_(l.b_offset + k) = 0.0;
  }
}

Mat Network::assemble(const Cache& c) const {
  Mat out(spec_.output_size(), c.input.cols());
  int row = 0;
  for (int idx : head_outputs_) {
    out.middleRows(row, layers_[idx].out) = c.outputs[idx];
    row += layers_[idx].out;
  }
  return out;
}

Mat Network::forward(const Mat& X, Cache* cache) const {
  if (X.rows() != spec_.inputs) throw std::invalid_argument("forward: input size mismatch");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = X;
  c.outputs.resize(layers_.size());
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Mat& in = l.source < 0 ? c.input : c.outputs[l.source];
    Eigen::Map<const Mat> W(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Vec> b(params_.data() + l.b_offset, l.out);
    Mat& z = c.outputs[i];
    z.noalias() = W * in;
    z.colwise() += b;
    if (l.tanh) z = z.array().tanh().matrix();
  }
  return assemble(c);
}

Vec Network::forward_one(const Vec& x) const { return forward(Mat(x)).col(0); }

Vec Network::backward(const Cache& c, const Mat& dOut) const {
  if (dOut.rows() != spec_.output_size() || dOut.cols() != c.input.cols()) throw std::invalid_argument("backward: shape mismatch");
  Vec grad = Vec::Zero(params_.size());
  std::vector<Mat> delta(layers_.size());
  int row = 0;
  for (int idx : head_outputs_) {
    delta[idx] = dOut.middleRows(row, layers_[idx].out);
    row += layers_[idx].out;
  }
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    const auto& l = layers_[i];
    if (delta[i].size() == 0) continue;
    Mat dz = delta[i];
    if (l.tanh) dz.array() *= (1.0 - c.outputs[i].array().square());
    const Mat& in = l.source < 0 ? c.input : c.outputs[l.source];
    Eigen::Map<Mat> gW(grad.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Vec> gb(grad.data() + l.b_offset, l.out);
    gW.noalias() = dz * in.transpose();
    gb = dz.rowwise().sum();
    if (l.source >= 0) {
      Eigen::Map<const Mat> W(params_.data() + l.w_offset, l.out, l.in);
      if (delta[l.source].size() == 0) {
        delta[l.source].noalias() = W.transpose() * dz;
      } else {
        delta[l.source].noalias() += W.transpose() * dz;
      }
    }
  }
  return grad;
}

Mat Network::jvp(const Cache& c, const Vec& v) const {
  if (v.size() != params_.size()) throw std::invalid_argument("jvp: direction size mismatch");
  std::vector<Mat> tangent(layers_.size());
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Mat& in = l.source < 0 ? c.input : c.outputs[l.source];
    Eigen::Map<const Mat> dW(v.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Vec> db(v.data() + l.b_offset, l.out);
    Mat dz = dW * in;
    dz.colwise() += db;
    if (l.source >= 0) {
      Eigen::Map<const Mat> W(params_.data() + l.w_offset, l.out, l.in);
      dz.noalias() += W * tangent[l.source];
    }
    if (l.tanh) dz.array() *= (1.0 - c.outputs[i].array().square());
    tangent[i] = std::move(dz);
  }
  Mat out(spec_.output_size(), c.input.cols());
  int row = 0;
  for (int idx : head_outputs_) {
    out.middleRows(row, layers_[idx].out) = tangent[idx];
    row += layers_[idx].out;
  }
  return out;
}

LossGrad mse_loss(const Network& net, const Mat& X, const Vec& targets) {
  Network::Cache c;
  const Mat out = net.forward(X, &c);
  if (out.rows() != 1 || targets.size() != out.cols()) throw std::invalid_argument("mse_loss: shape mismatch");
  const Eigen::RowVectorXd err = out.row(0) - targets.transpose();
  const double n = static_cast<double>(targets.size());
  LossGrad lg;
  lg.loss = 0.5 * err.squaredNorm() / n;
  if (!std::isfinite(lg.loss)) throw std::runtime_error("mse_loss: non-finite loss");
  lg.grad = net.backward(c, err / n);
  return lg;
}

Vec gradient(const Network& net, const Mat& X, const Mat& dloss_dout) {
  Network::Cache c;
  net.forward(X, &c);
  return net.backward(c, dloss_dout);
}

void adam_step(Vec& params, const Vec& grad, AdamState& st, const AdamConfig& cfg) {
  if (st.m.size() != params.size()) st.reset(params.size());
  if (grad.size() != params.size()) throw std::invalid_argument("adam_step: shape mismatch");
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  params.array() -= cfg.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.eps);
}

int PolicyLayout::size() const {
  int n = bernoulli;
  for (int k : categorical) n += k;
  return n;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

Vec softmax(const Eigen::Ref<const Vec>& z) {
  Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

namespace {

// log(sigmoid(z)) computed stably.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

Vec log_softmax(const Eigen::Ref<const Vec>& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

void check_layout(const PolicyLayout& lay, const Mat& logits, const Mat& mask) {
  if (logits.rows() != lay.size()) throw std::invalid_argument("policy logits do not match layout");
  if (lay.bernoulli > 0 && (mask.rows() != lay.bernoulli || mask.cols() != logits.cols()))
    throw std::invalid_argument("bernoulli mask shape mismatch");
}

}  // namespace

double kl_divergence(const PolicyLayout& lay, const Mat& logits_old, const Mat& logits_new, const Mat& mask) {
  check_layout(lay, logits_old, mask);
  check_layout(lay, logits_new, mask);
  const long B = logits_old.cols();
  double total = 0.0;
  for (long b = 0; b < B; ++b) {
    int row = 0;
    for (int k : lay.categorical) {
      const Vec lp = log_softmax(logits_old.col(b).segment(row, k));
      const Vec lq = log_softmax(logits_new.col(b).segment(row, k));
      total += (lp.array().exp() * (lp - lq).array()).sum();
      row += k;
    }
    for (int i = 0; i < lay.bernoulli; ++i) {
      if (mask(i, b) == 0.0) continue;
      const double zp = logits_old(row + i, b), zq = logits_new(row + i, b);
      const double p = sigmoid(zp);
      total += p * (log_sigmoid(zp) - log_sigmoid(zq)) + (1.0 - p) * (log_sigmoid(-zp) - log_sigmoid(-zq));
    }
  }
  return total / static_cast<double>(B);
}

Vec log_prob(const PolicyLayout& lay, const Mat& logits, const Eigen::MatrixXi& actions, const Mat& mask) {
  check_layout(lay, logits, mask);
  const long B = logits.cols();
  const int n_cat = static_cast<int>(lay.categorical.size());
  if (actions.rows() != n_cat + lay.bernoulli || actions.cols() != B) throw std::invalid_argument("log_prob: action shape mismatch");
  Vec out = Vec::Zero(B);
  for (long b = 0; b < B; ++b) {
    int row = 0;
    for (int c = 0; c < n_cat; ++c) {
      const int k = lay.categorical[c];
      out(b) += log_softmax(logits.col(b).segment(row, k))(actions(c, b));
      row += k;
    }
    for (int i = 0; i < lay.bernoulli; ++i) {
      if (mask(i, b) == 0.0) continue;
      const double z = logits(row + i, b);
      out(b) += actions(n_cat + i, b) ? log_sigmoid(z) : log_sigmoid(-z);
    }
  }
  return out;
}

Mat output_fisher_product(const PolicyLayout& lay, const Mat& logits, const Mat& mask, const Mat& dlogits) {
  check_layout(lay, logits, mask);
  Mat out = Mat::Zero(logits.rows(), logits.cols());
  for (long b = 0; b < logits.cols(); ++b) {
    int row = 0;
    for (int k : lay.categorical) {
      const Vec p = softmax(logits.col(b).segment(row, k));
      const Vec d = dlogits.col(b).segment(row, k);
      out.col(b).segment(row, k) = p.cwiseProduct(d) - p * p.dot(d);
      row += k;
    }
    for (int i = 0; i < lay.bernoulli; ++i) {
      if (mask(i, b) == 0.0) continue;
      const double p = sigmoid(logits(row + i, b));
      out(row + i, b) = p * (1.0 - p) * dlogits(row + i, b);
    }
  }
  return out;
}

Vec fisher_vector_product(const Network& net, const PolicyLayout& lay, const Mat& X, const Mat& mask, const Vec& v) {
  Network::Cache c;
  const Mat logits = net.forward(X, &c);
  const Mat jv = net.jvp(c, v);
  const Mat mjv = output_fisher_product(lay, logits, mask, jv);
  return net.backward(c, mjv) / static_cast<double>(X.cols());
}

namespace {

constexpr char kMagic[8] = {'N', 'T', 'N', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ofstream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  if (!f) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_reals(std::ofstream& f, const Vec& x) {
  for (long i = 0; i < x.size(); ++i) {
    std::uint64_t bits;
    const double d = x(i);
    std::memcpy(&bits, &d, 8);
    write_u64(f, bits);
  }
}

Vec read_reals(std::ifstream& f, long n) {
  Vec x(n);
  for (long i = 0; i < n; ++i) {
    const std::uint64_t bits = read_u64(f);
    double d;
    std::memcpy(&d, &bits, 8);
    x(i) = d;
  }
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net, const AdamState* adam) {
  const std::string header = net.spec().to_json().dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  write_u64(f, header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_u64(f, static_cast<std::uint64_t>(net.parameter_count()));
  write_reals(f, net.params());
  const bool has_adam = adam && adam->m.size() == net.parameter_count();
  write_u64(f, has_adam ? static_cast<std::uint64_t>(adam->step) + 1 : 0);
  if (has_adam) {
    write_reals(f, adam->m);
    write_reals(f, adam->v);
  }
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write checkpoint sidecar: " + path + ".json");
  side << net.spec().to_json().dump(2) << "\n";
}

Network load_checkpoint(const std::string& path, AdamState* adam) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
  const std::uint64_t hlen = read_u64(f);
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  Network net(NetworkSpec::from_json(nlohmann::json::parse(header)));
  const std::uint64_t n = read_u64(f);
  if (static_cast<long>(n) != net.parameter_count()) throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  net.params() = read_reals(f, static_cast<long>(n));
  const std::uint64_t step = read_u64(f);
  if (adam) {
    if (step > 0) {
      adam->m = read_reals(f, static_cast<long>(n));
      adam->v = read_reals(f, static_cast<long>(n));
      adam->step = static_cast<long>(step - 1);
    } else {
      adam->reset(static_cast<long>(n));
    }
  }
  return net;
}

}  // namespace ntn::nn
