#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ntn/neural.hpp"

using namespace ntn::nn;

namespace {

Network make_net(std::uint64_t seed, NetworkSpec spec) {
  Network n(std::move(spec));
  ntn::Rng rng(seed);
  n.initialize(rng);
  // Non-zero biases so every parameter matters.
  std::normal_distribution<double> g(0.0, 0.3);
  for (const auto& l : n.layers())
    for (int i = 0; i < l.out; ++i) n.params()(l.b_offset + i) = g(rng);
  return n;
}

NetworkSpec two_head_spec() {
  NetworkSpec s;
  s.inputs = 6;
  s.trunk = {8, 5};
  s.heads = {HeadSpec{{4}, 3}, HeadSpec{{}, 2}};
  return s;
}

// Plain loops over the documented layout: column-major out x in weights, then biases.
Mat oracle_forward(const Network& n, const Mat& X) {
  std::vector<Mat> outs(n.layers().size());
  for (size_t i = 0; i < n.layers().size(); ++i) {
    const auto& l = n.layers()[i];
    const Mat& in = l.source < 0 ? X : outs[l.source];
    Mat z(l.out, in.cols());
    for (long b = 0; b < in.cols(); ++b)
      for (int r = 0; r < l.out; ++r) {
        double acc = n.params()(l.b_offset + r);
        for (int c = 0; c < l.in; ++c) acc += n.params()(l.w_offset + r + static_cast<long>(c) * l.out) * in(c, b);
        z(r, b) = l.tanh ? std::tanh(acc) : acc;
      }
    outs[i] = z;
  }
  // Heads end at the non-tanh layers, in order.
  std::vector<Mat> heads;
  for (size_t i = 0; i < n.layers().size(); ++i)
    if (!n.layers()[i].tanh) heads.push_back(outs[i]);
  long rows = 0;
  for (const auto& h : heads) rows += h.rows();
  Mat out(rows, X.cols());
  long r = 0;
  for (const auto& h : heads) {
    out.middleRows(r, h.rows()) = h;
    r += h.rows();
  }
  return out;
}

Mat random_mat(int r, int c, std::uint64_t seed) {
  ntn::Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("forward: zero weights give the final-layer bias") {
  Network n(two_head_spec());
  n.params().setZero();
  Vec expect(5);
  int k = 0;
  for (const auto& l : n.layers()) {
    if (l.tanh) continue;
    for (int i = 0; i < l.out; ++i) {
      n.params()(l.b_offset + i) = 0.5 + k;
      expect(k) = 0.5 + k;
      ++k;
    }
  }
  const Mat out = n.forward(random_mat(6, 4, 1));
  for (long b = 0; b < 4; ++b) CHECK((out.col(b) - expect).norm() == 0.0);
}

TEST_CASE("forward matches a loop oracle") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Network n = make_net(s, two_head_spec());
    const Mat X = random_mat(6, 7, 100 + s);
    CHECK((n.forward(X) - oracle_forward(n, X)).cwiseAbs().maxCoeff() < 1e-10);
  }
  Network n(two_head_spec());
  CHECK_THROWS(n.forward(Mat::Zero(5, 1)));
}

TEST_CASE("gradient: constant loss and finite differences") {
  const Network n0 = make_net(3, two_head_spec());
  const Mat X = random_mat(6, 9, 4);
  CHECK(gradient(n0, X, Mat::Zero(5, 9)).norm() == 0.0);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Network n = make_net(seed, two_head_spec());
    const Mat C = random_mat(5, 9, 50 + seed);
    // loss = sum(C .* f(X)) + 0.5 * sum(f(X)^2)
    auto loss = [&](const Network& net) {
      const Mat f = net.forward(X);
      return (C.cwiseProduct(f)).sum() + 0.5 * f.squaredNorm();
    };
    const Mat dout = C + n.forward(X);
    const Vec g = gradient(n, X, dout);
    ntn::Rng rng(seed);
    for (int k = 0; k < 10; ++k) {
      const long i = static_cast<long>(rng() % static_cast<std::uint64_t>(n.parameter_count()));
      const double h = 1e-5, p = n.params()(i);
      n.params()(i) = p + h;
      const double up = loss(n);
      n.params()(i) = p - h;
      const double dn = loss(n);
      n.params()(i) = p;
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(fd - g(i)) / std::max(1e-8, std::abs(fd) + std::abs(g(i))) < 1e-4);
    }
  }
}

TEST_CASE("jvp matches finite differences") {
  Network n = make_net(6, two_head_spec());
  const Mat X = random_mat(6, 3, 7);
  Network::Cache c;
  const Mat f0 = n.forward(X, &c);
  const Vec v = random_mat(static_cast<int>(n.parameter_count()), 1, 8).col(0);
  const Mat j = n.jvp(c, v);
  const double h = 1e-6;
  Network a = n, b = n;
  a.params() += h * v;
  b.params() -= h * v;
  const Mat fd = (a.forward(X) - b.forward(X)) / (2 * h);
  CHECK((fd - j).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("mse gradient vanishes at a perfect fit") {
  NetworkSpec s;
  s.inputs = 3;
  s.trunk = {6};
  s.heads = {HeadSpec{{}, 1}};
  const Network n = make_net(2, s);
  const Mat X = random_mat(3, 10, 3);
  const Vec y = n.forward(X).row(0).transpose();
  const auto lg = mse_loss(n, X, y);
  CHECK(lg.loss == 0.0);
  CHECK(lg.grad.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam") {
  AdamConfig cfg;
  Vec p = Vec::LinSpaced(5, -1.0, 1.0);
  const Vec p0 = p;
  AdamState st;
  adam_step(p, Vec::Zero(5), st, cfg);
  CHECK(p == p0);
  CHECK(st.step == 1);

  // Moments decay under a zero gradient.
  st.m = Vec::Ones(5);
  st.v = Vec::Ones(5);
  adam_step(p, Vec::Zero(5), st, cfg);
  CHECK((st.m - Vec::Constant(5, 0.9)).norm() < 1e-15);
  CHECK((st.v - Vec::Constant(5, 0.999)).norm() < 1e-15);

  // First step after bias correction: -lr g / (|g| + eps).
  Vec q = p0;
  AdamState fresh;
  const Vec g = (Vec(5) << 0.3, -2.0, 1e-3, 0.0, 7.0).finished();
  adam_step(q, g, fresh, cfg);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(q(i) - (p0(i) - cfg.lr * g(i) / (std::abs(g(i)) + cfg.eps))) < 1e-15);

  Vec r1 = p0, r2 = p0;
  AdamState s1, s2;
  adam_step(r1, g, s1, cfg);
  adam_step(r2, g, s2, cfg);
  CHECK(r1 == r2);
  CHECK(s1.m == s2.m);
  CHECK(s1.v == s2.v);
}

TEST_CASE("kl divergence and Fisher products") {
  PolicyLayout lay{{3, 2}, 2};
  const Mat L = random_mat(7, 4, 9);
  const Mat mask = Mat::Ones(2, 4);
  CHECK(kl_divergence(lay, L, L, mask) == 0.0);
  CHECK(kl_divergence(lay, L, L + 0.1 * random_mat(7, 4, 10), mask) > 0.0);

  NetworkSpec s;
  s.inputs = 4;
  s.trunk = {5};
  s.heads = {HeadSpec{{}, 7}};
  const Network n = make_net(1, s);
  const Mat X = random_mat(4, 4, 11);
  CHECK(fisher_vector_product(n, lay, X, mask, Vec::Zero(n.parameter_count())).norm() == 0.0);
}

TEST_CASE("Fisher product on a 2-parameter Bernoulli net") {
  // One input, one Bernoulli output: logit = w x + b, F = mean p (1 - p) [x 1]^T [x 1].
  NetworkSpec s;
  s.inputs = 1;
  s.heads = {HeadSpec{{}, 1}};
  Network n(s);
  REQUIRE(n.parameter_count() == 2);
  n.params() << 0.7, -0.2;
  PolicyLayout lay{{}, 1};
  Mat X(1, 3);
  X << -1.0, 0.5, 2.0;
  const Mat mask = Mat::Ones(1, 3);
  Eigen::Matrix2d F = Eigen::Matrix2d::Zero();
  for (int b = 0; b < 3; ++b) {
    const double z = 0.7 * X(0, b) - 0.2;
    const double p = 1.0 / (1.0 + std::exp(-z));
    const Eigen::Vector2d xt(X(0, b), 1.0);
    F += p * (1 - p) * xt * xt.transpose() / 3.0;
  }
  for (const Eigen::Vector2d& v : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(0.3, -1.7)}) {
    const Vec fv = fisher_vector_product(n, lay, X, mask, v);
    CHECK((fv - F * v).norm() < 1e-6);
  }
}

TEST_CASE("Fisher product matches the Hessian of the KL for categorical heads") {
  PolicyLayout lay{{3}, 1};
  NetworkSpec s;
  s.inputs = 2;
  s.heads = {HeadSpec{{}, 4}};
  Network n = make_net(5, s);
  const Mat X = random_mat(2, 5, 12);
  Mat mask = Mat::Ones(1, 5);
  mask(0, 2) = 0.0;
  const Mat L0 = n.forward(X);
  const long P = n.parameter_count();
  // Central second differences of KL(old || new) around the current parameters.
  Mat H(P, P);
  const double h = 1e-4;
  auto kl_at = [&](const Vec& d) {
    Network m = n;
    m.params() += d;
    return kl_divergence(lay, L0, m.forward(X), mask);
  };
  for (long i = 0; i < P; ++i)
    for (long j = 0; j < P; ++j) {
      Vec ei = Vec::Zero(P), ej = Vec::Zero(P);
      ei(i) = h;
      ej(j) = h;
      H(i, j) = (kl_at(ei + ej) - kl_at(ei - ej) - kl_at(ej - ei) + kl_at(-ei - ej)) / (4 * h * h);
    }
  const Vec v = random_mat(static_cast<int>(P), 1, 13).col(0);
  CHECK((fisher_vector_product(n, lay, X, mask, v) - H * v).norm() < 1e-5 * (1.0 + (H * v).norm()));
}

TEST_CASE("log_prob normalizes") {
  PolicyLayout lay{{3}, 2};
  const Mat L = random_mat(5, 1, 14);
  const Mat mask = Mat::Ones(2, 1);
  double total = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b0 = 0; b0 < 2; ++b0)
      for (int b1 = 0; b1 < 2; ++b1) {
        Eigen::MatrixXi act(3, 1);
        act << a, b0, b1;
        total += std::exp(log_prob(lay, L, act, mask)(0));
      }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip") {
  const Network n = make_net(9, two_head_spec());
  AdamState st;
  st.reset(n.parameter_count());
  st.m.setConstant(0.25);
  st.step = 4;
  const auto path = (std::filesystem::temp_directory_path() / "ntn_ckpt_test.bin").string();
  save_checkpoint(path, n, &st);
  AdamState back;
  const Network m = load_checkpoint(path, &back);
  CHECK(m.spec() == n.spec());
  CHECK(m.params() == n.params());
  CHECK(back.m == st.m);
  CHECK(back.step == 4);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}
